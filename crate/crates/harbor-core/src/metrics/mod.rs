//! Evaluation metrics over ground-truth auction logs.
//!
//! Everything here reads only the event log, the settlements and the
//! catalog's true values; agent-side beliefs (status boards) are never
//! consulted. Profiling KL values are computed by the runner from the final
//! profiles agents expose and merged into the report.

pub mod report;
pub mod trueskill;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{Listing, Money};
use crate::engine::{BidderId, LogLine, Settlement};

pub use trueskill::{ranks_from_profits, rate_free_for_all, Rating, TrueSkillConfig};

/// Realized profit over the maximum achievable (every item at its starting
/// price). `None` when the denominator is zero.
pub fn profit_ratio(
    settlements: &[Settlement],
    items: &[Listing],
    bidder: BidderId,
) -> Option<f64> {
    let denominator: Money = items.iter().map(|l| l.true_value - l.starting_price).sum();
    if denominator == 0 {
        return None;
    }
    let by_id: BTreeMap<&str, &Listing> = items.iter().map(|l| (l.id.as_str(), l)).collect();
    let numerator: Money = settlements
        .iter()
        .filter(|s| s.winner == Some(bidder))
        .filter_map(|s| {
            let listing = by_id.get(s.listing_id.as_str())?;
            Some(listing.true_value - s.hammer_price.unwrap_or(0))
        })
        .sum();
    Some(numerator as f64 / denominator as f64)
}

/// True per-auction profit per bidder, for rating updates.
pub fn per_bidder_profits(
    settlements: &[Settlement],
    items: &[Listing],
    bidder_count: usize,
) -> Vec<Money> {
    let by_id: BTreeMap<&str, &Listing> = items.iter().map(|l| (l.id.as_str(), l)).collect();
    let mut profits = vec![0; bidder_count];
    for s in settlements {
        if let (Some(winner), Some(hammer)) = (s.winner, s.hammer_price) {
            if let Some(listing) = by_id.get(s.listing_id.as_str()) {
                if winner.0 < bidder_count {
                    profits[winner.0] += listing.true_value - hammer;
                }
            }
        }
    }
    profits
}

/// Share of the bidder's persona-aligned scenario items it won. `None` when
/// no scenario item aligns with the bidder's personas.
pub fn acquisition_rate(
    settlements: &[Settlement],
    aligned: &BTreeSet<String>,
    bidder: BidderId,
) -> Option<f64> {
    if aligned.is_empty() {
        return None;
    }
    let won = settlements
        .iter()
        .filter(|s| s.winner == Some(bidder) && aligned.contains(&s.listing_id))
        .count();
    Some(won as f64 / aligned.len() as f64)
}

/// Accepted raises per (bidder, listing), zero-filled over the full
/// bidder-by-item grid.
pub fn engagement_counts(
    log: &[LogLine],
    items: &[Listing],
    bidder_count: usize,
) -> BTreeMap<(usize, String), u64> {
    let mut counts: BTreeMap<(usize, String), u64> = BTreeMap::new();
    for bidder in 0..bidder_count {
        for item in items {
            counts.insert((bidder, item.id.clone()), 0);
        }
    }
    for line in log {
        if let Some(event) = line.as_event() {
            if matches!(event.action, crate::engine::BidAction::Bid(_)) {
                *counts
                    .entry((event.bidder_id.0, event.listing_id.clone()))
                    .or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Per-bidder metrics for one auction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderMetrics {
    pub bidder: String,
    pub profit_ratio: Option<f64>,
    pub acquisition_rate: Option<f64>,
    pub trueskill_mu: f64,
    pub trueskill_sigma: f64,
    /// Mean final KL of this bidder's profiles of single-persona rivals.
    pub kl_single: Option<f64>,
    /// Mean final KL of this bidder's profiles of mix-of-two rivals.
    pub kl_mix: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bidders: Vec<BidderMetrics>,
}
