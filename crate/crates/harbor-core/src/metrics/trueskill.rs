//! Free-for-all TrueSkill rating updates.
//!
//! Factor-graph message passing over single-player teams: priors with
//! additive dynamics, performance likelihoods, pairwise performance
//! differences between adjacent ranks, and win/draw truncation factors.
//! Equal ranks use the draw factor. Iteration runs to a tight fixed point
//! so results are reproducible to high precision.

use serde::{Deserialize, Serialize};

const MIN_DELTA: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSkillConfig {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub tau: f64,
    pub draw_probability: f64,
}

impl Default for TrueSkillConfig {
    fn default() -> Self {
        TrueSkillConfig {
            mu: 25.0,
            sigma: 25.0 / 3.0,
            beta: 25.0 / 6.0,
            tau: 25.0 / 300.0,
            draw_probability: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub mu: f64,
    pub sigma: f64,
}

impl Rating {
    pub fn fresh(config: &TrueSkillConfig) -> Self {
        Rating {
            mu: config.mu,
            sigma: config.sigma,
        }
    }
}

/// Competition ranks from per-auction profits: rank 0 is best, equal profits
/// share a rank (a draw in the rating update).
pub fn ranks_from_profits(profits: &[i64]) -> Vec<usize> {
    profits
        .iter()
        .map(|p| profits.iter().filter(|q| *q > p).count())
        .collect()
}

// --- Gaussians in natural parameters -------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Gaussian {
    pi: f64,
    tau: f64,
}

impl Gaussian {
    fn from_mu_sigma(mu: f64, sigma: f64) -> Self {
        let pi = 1.0 / (sigma * sigma);
        Gaussian { pi, tau: pi * mu }
    }

    fn mu(&self) -> f64 {
        if self.pi == 0.0 {
            0.0
        } else {
            self.tau / self.pi
        }
    }

    fn sigma(&self) -> f64 {
        if self.pi <= 0.0 {
            f64::INFINITY
        } else {
            (1.0 / self.pi).sqrt()
        }
    }

    fn mul(self, other: Gaussian) -> Gaussian {
        Gaussian {
            pi: self.pi + other.pi,
            tau: self.tau + other.tau,
        }
    }

    fn div(self, other: Gaussian) -> Gaussian {
        Gaussian {
            pi: self.pi - other.pi,
            tau: self.tau - other.tau,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Variable {
    value: Gaussian,
    messages: std::collections::BTreeMap<usize, Gaussian>,
}

impl Variable {
    fn delta(&self, other: Gaussian) -> f64 {
        let pi_delta = (self.value.pi - other.pi).abs();
        if pi_delta.is_infinite() {
            return 0.0;
        }
        (self.value.tau - other.tau).abs().max(pi_delta.sqrt())
    }

    fn message(&self, factor: usize) -> Gaussian {
        self.messages.get(&factor).copied().unwrap_or_default()
    }

    fn update_message(&mut self, factor: usize, message: Gaussian) -> f64 {
        let old = self.message(factor);
        self.messages.insert(factor, message);
        let new_value = self.value.div(old).mul(message);
        let delta = self.delta(new_value);
        self.value = new_value;
        delta
    }

    fn update_value(&mut self, factor: usize, value: Gaussian) -> f64 {
        let old_message = self.message(factor);
        let new_message = value.mul(old_message).div(self.value);
        self.messages.insert(factor, new_message);
        let delta = self.delta(value);
        self.value = value;
        delta
    }
}

// --- Normal distribution helpers ------------------------------------------

fn pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: rational approximation refined with two
/// Halley steps against the erfc-based CDF.
pub(crate) fn inverse_cdf(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    for _ in 0..2 {
        let err = cdf(x) - p;
        let u = err * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

// --- Truncation moments ----------------------------------------------------

fn v_win(t: f64, margin: f64) -> f64 {
    let x = t - margin;
    let denom = cdf(x);
    if denom < 1e-300 {
        -x
    } else {
        pdf(x) / denom
    }
}

fn w_win(t: f64, margin: f64) -> f64 {
    let x = t - margin;
    let v = v_win(t, margin);
    let w = v * (v + x);
    w.clamp(0.0, 1.0)
}

fn v_draw(t: f64, margin: f64) -> f64 {
    let abs_t = t.abs();
    let a = margin - abs_t;
    let b = -margin - abs_t;
    let denom = cdf(a) - cdf(b);
    let numer = pdf(b) - pdf(a);
    let v = if denom < 1e-300 { a } else { numer / denom };
    if t < 0.0 {
        -v
    } else {
        v
    }
}

fn w_draw(t: f64, margin: f64) -> f64 {
    let abs_t = t.abs();
    let a = margin - abs_t;
    let b = -margin - abs_t;
    let denom = cdf(a) - cdf(b);
    if denom < 1e-300 {
        return 1.0;
    }
    let v = v_draw(abs_t, margin);
    (v * v + (a * pdf(a) - b * pdf(b)) / denom).clamp(0.0, 1.0)
}

// --- Factor graph ------------------------------------------------------------

struct Graph {
    vars: Vec<Variable>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Graph {
            vars: vec![Variable::default(); n],
        }
    }

    fn prior_down(&mut self, factor: usize, var: usize, rating: Rating, dynamics: f64) -> f64 {
        let sigma = (rating.sigma * rating.sigma + dynamics * dynamics).sqrt();
        let value = Gaussian::from_mu_sigma(rating.mu, sigma);
        self.vars[var].update_value(factor, value)
    }

    fn likelihood_pass(&mut self, factor: usize, from: usize, to: usize, variance: f64) -> f64 {
        let val = self.vars[from].value;
        let msg = self.vars[from].message(factor);
        let div = val.div(msg);
        let a = 1.0 / (1.0 + variance * div.pi);
        self.vars[to].update_message(
            factor,
            Gaussian {
                pi: a * div.pi,
                tau: a * div.tau,
            },
        )
    }

    /// Sum-factor update for `target = sum(coeff_i * term_i)`.
    fn sum_update(
        &mut self,
        factor: usize,
        target: usize,
        terms: &[usize],
        coeffs: &[f64],
    ) -> f64 {
        let mut pi_inv = 0.0f64;
        let mut mu = 0.0f64;
        for (term, coeff) in terms.iter().zip(coeffs) {
            let div = self.vars[*term].value.div(self.vars[*term].message(factor));
            mu += coeff * div.mu();
            if pi_inv.is_infinite() {
                continue;
            }
            if div.pi == 0.0 {
                pi_inv = f64::INFINITY;
            } else {
                pi_inv += coeff * coeff / div.pi;
            }
        }
        let pi = 1.0 / pi_inv;
        self.vars[target].update_message(
            factor,
            Gaussian {
                pi,
                tau: pi * mu,
            },
        )
    }

    fn truncate_up(&mut self, factor: usize, var: usize, margin: f64, draw: bool) -> f64 {
        let val = self.vars[var].value;
        let msg = self.vars[var].message(factor);
        let div = val.div(msg);
        let sqrt_pi = div.pi.sqrt();
        let t = div.tau / sqrt_pi;
        let m = margin * sqrt_pi;
        let (v, w) = if draw {
            (v_draw(t, m), w_draw(t, m))
        } else {
            (v_win(t, m), w_win(t, m))
        };
        let denom = (1.0 - w).max(1e-10);
        let value = Gaussian {
            pi: div.pi / denom,
            tau: (div.tau + sqrt_pi * v) / denom,
        };
        self.vars[var].update_value(factor, value)
    }
}

/// One free-for-all update: `ranks[i]` is player i's rank in this auction
/// (0 best; equal ranks draw). Returns the posterior ratings in player
/// order.
pub fn rate_free_for_all(
    config: &TrueSkillConfig,
    ratings: &[Rating],
    ranks: &[usize],
) -> Vec<Rating> {
    let n = ratings.len();
    assert_eq!(n, ranks.len(), "one rank per rating");
    if n < 2 {
        return ratings.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|i| (ranks[*i], *i));

    // Variable layout: ratings 0..n, performances n..2n, diffs 2n..3n-1.
    let rating_var = |i: usize| i;
    let perf_var = |i: usize| n + i;
    let diff_var = |j: usize| 2 * n + j;
    // Factor ids: priors 0..n, likelihoods n..2n, diffs 2n..3n-1,
    // truncations 3n-1..4n-2.
    let prior_f = |i: usize| i;
    let like_f = |i: usize| n + i;
    let diff_f = |j: usize| 2 * n + j;
    let trunc_f = |j: usize| 3 * n - 1 + j;

    let mut graph = Graph::new(3 * n - 1);
    let beta_sq = config.beta * config.beta;
    let margin = inverse_cdf((config.draw_probability + 1.0) / 2.0)
        * std::f64::consts::SQRT_2
        * config.beta;

    for i in 0..n {
        graph.prior_down(prior_f(i), rating_var(i), ratings[i], config.tau);
    }
    for i in 0..n {
        graph.likelihood_pass(like_f(i), rating_var(i), perf_var(i), beta_sq);
    }

    let diff_count = n - 1;
    let diff_terms =
        |j: usize| -> [usize; 2] { [perf_var(order[j]), perf_var(order[j + 1])] };
    let is_draw = |j: usize| ranks[order[j]] == ranks[order[j + 1]];

    for iteration in 0..MAX_ITERATIONS {
        let mut max_delta = 0.0f64;
        if diff_count == 1 {
            graph.sum_update(diff_f(0), diff_var(0), &diff_terms(0), &[1.0, -1.0]);
            max_delta = graph.truncate_up(trunc_f(0), diff_var(0), margin, is_draw(0));
        } else {
            for j in 0..diff_count - 1 {
                graph.sum_update(diff_f(j), diff_var(j), &diff_terms(j), &[1.0, -1.0]);
                max_delta = max_delta.max(graph.truncate_up(
                    trunc_f(j),
                    diff_var(j),
                    margin,
                    is_draw(j),
                ));
                // Push the updated difference into the right-hand side term.
                let terms = diff_terms(j);
                graph.sum_update(diff_f(j), terms[1], &[terms[0], diff_var(j)], &[1.0, -1.0]);
            }
            for j in (1..diff_count).rev() {
                graph.sum_update(diff_f(j), diff_var(j), &diff_terms(j), &[1.0, -1.0]);
                max_delta = max_delta.max(graph.truncate_up(
                    trunc_f(j),
                    diff_var(j),
                    margin,
                    is_draw(j),
                ));
                // Push into the left-hand side term.
                let terms = diff_terms(j);
                graph.sum_update(diff_f(j), terms[0], &[diff_var(j), terms[1]], &[1.0, 1.0]);
            }
        }
        if max_delta <= MIN_DELTA && iteration > 0 {
            break;
        }
    }
    {
        // Final passes out of both ends of the chain.
        let terms = diff_terms(0);
        graph.sum_update(diff_f(0), terms[0], &[diff_var(0), terms[1]], &[1.0, 1.0]);
        let last = diff_count - 1;
        let terms = diff_terms(last);
        graph.sum_update(
            diff_f(last),
            terms[1],
            &[terms[0], diff_var(last)],
            &[1.0, -1.0],
        );
    }
    for i in 0..n {
        graph.likelihood_pass(like_f(i), perf_var(i), rating_var(i), beta_sq);
    }

    (0..n)
        .map(|i| {
            let value = graph.vars[rating_var(i)].value;
            Rating {
                mu: value.mu(),
                sigma: value.sigma(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_rating_is_25() {
        let config = TrueSkillConfig::default();
        let r = Rating::fresh(&config);
        assert_eq!(r.mu, 25.0);
        assert!((r.sigma - 25.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks_from_profits(&[500, 200, 200, 100]), vec![0, 1, 1, 3]);
        assert_eq!(ranks_from_profits(&[0, 0]), vec![0, 0]);
    }

    #[test]
    fn winner_gains_loser_drops() {
        let config = TrueSkillConfig::default();
        let fresh = vec![Rating::fresh(&config); 2];
        let updated = rate_free_for_all(&config, &fresh, &[0, 1]);
        assert!(updated[0].mu > 25.0);
        assert!(updated[1].mu < 25.0);
        assert!(updated[0].sigma < fresh[0].sigma);
        assert!(updated[1].sigma < fresh[1].sigma);
        // Symmetric game: gains mirror losses.
        assert!((updated[0].mu + updated[1].mu - 50.0).abs() < 1e-6);
    }

    #[test]
    fn three_player_ffa_orders_posteriors_by_rank() {
        let config = TrueSkillConfig::default();
        let fresh = vec![Rating::fresh(&config); 3];
        let updated = rate_free_for_all(&config, &fresh, &[0, 1, 2]);
        assert!(updated[0].mu > updated[1].mu);
        assert!(updated[1].mu > updated[2].mu);
        for r in &updated {
            assert!(r.sigma < fresh[0].sigma);
        }
    }

    #[test]
    fn draw_between_equals_keeps_mu_balanced() {
        let config = TrueSkillConfig::default();
        let fresh = vec![Rating::fresh(&config); 2];
        let updated = rate_free_for_all(&config, &fresh, &[0, 0]);
        assert!((updated[0].mu - updated[1].mu).abs() < 1e-9);
        assert!(updated[0].sigma < fresh[0].sigma);
    }

    #[test]
    fn rank_order_invariance_under_input_permutation() {
        let config = TrueSkillConfig::default();
        let ratings = vec![
            Rating { mu: 28.0, sigma: 7.0 },
            Rating { mu: 24.0, sigma: 6.0 },
            Rating { mu: 22.0, sigma: 8.0 },
        ];
        let a = rate_free_for_all(&config, &ratings, &[2, 0, 1]);
        // Permute players; same pairings must produce the same posteriors.
        let permuted = vec![ratings[1], ratings[2], ratings[0]];
        let b = rate_free_for_all(&config, &permuted, &[0, 1, 2]);
        assert!((a[1].mu - b[0].mu).abs() < 1e-9);
        assert!((a[2].mu - b[1].mu).abs() < 1e-9);
        assert!((a[0].mu - b[2].mu).abs() < 1e-9);
    }

    #[test]
    fn inverse_cdf_matches_cdf() {
        for &p in &[0.001, 0.02425, 0.26, 0.51, 0.5, 0.75, 0.999] {
            let x = inverse_cdf(p);
            assert!((cdf(x) - p).abs() < 1e-12, "p={p}");
        }
    }
}
