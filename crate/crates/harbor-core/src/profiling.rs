//! Rival persona profiling.
//!
//! Each agent keeps a k-dimensional weight vector per rival, every entry in
//! [-1, 1]. Vectors start at zero and are updated after each settled item
//! from that item's bidding history. Profiling accuracy is scored with a KL
//! divergence between the shift-normalized profile and the rival's ground
//! truth persona distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PersonaId;
use crate::engine::{BidAction, BidEvent, BidderId, ListingView};

/// Smoothing applied to both distributions before the KL computation.
pub const KL_EPSILON: f64 = 1e-12;

/// Scripted-heuristic step size per unit of evidence.
pub const HEURISTIC_DELTA: f64 = 0.1;

/// Raises beyond this count add no further weight.
pub const HEURISTIC_RAISE_CAP: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ProfilingError {
    #[error("persona space must be non-empty")]
    EmptyPersonaSpace,
    #[error("ground truth supports one persona or a mix of two, got {0}")]
    UnsupportedMix(usize),
    #[error("length mismatch: ground truth {gt} vs profile {profile}")]
    LengthMismatch { gt: usize, profile: usize },
}

/// One rival's estimated persona weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileVector {
    pub rival_id: BidderId,
    pub weights: Vec<f64>,
}

impl ProfileVector {
    /// All-zero vector: the no-knowledge initial state.
    pub fn zeros(rival_id: BidderId, k: usize) -> Result<Self, ProfilingError> {
        if k == 0 {
            return Err(ProfilingError::EmptyPersonaSpace);
        }
        Ok(ProfileVector {
            rival_id,
            weights: vec![0.0; k],
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn clamp(&mut self) {
        for w in &mut self.weights {
            *w = w.clamp(-1.0, 1.0);
        }
    }

    /// Replaces the weights wholesale (clamped), keeping the rival id.
    pub fn replace(&mut self, weights: Vec<f64>) {
        self.weights = weights;
        self.clamp();
    }
}

/// Aggregate profiling knowledge: one vector per rival, none for self.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileKnowledge {
    pub profiles: BTreeMap<BidderId, ProfileVector>,
}

impl ProfileKnowledge {
    pub fn init(rivals: &[BidderId], k: usize) -> Result<Self, ProfilingError> {
        let mut profiles = BTreeMap::new();
        for rival in rivals {
            profiles.insert(*rival, ProfileVector::zeros(*rival, k)?);
        }
        Ok(ProfileKnowledge { profiles })
    }

    pub fn get(&self, rival: BidderId) -> Option<&ProfileVector> {
        self.profiles.get(&rival)
    }
}

/// A rival's true persona distribution: one-hot for a single persona,
/// two entries of 0.5 for a mix of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPersona {
    pub distribution: Vec<f64>,
}

pub fn ground_truth_vector(
    persona_ids: &[PersonaId],
    k: usize,
) -> Result<GroundTruthPersona, ProfilingError> {
    if k == 0 {
        return Err(ProfilingError::EmptyPersonaSpace);
    }
    let mut unique: Vec<PersonaId> = persona_ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.is_empty() || unique.len() > 2 {
        return Err(ProfilingError::UnsupportedMix(unique.len()));
    }
    let mut distribution = vec![0.0; k];
    let share = 1.0 / unique.len() as f64;
    for pid in unique {
        distribution[pid.0] = share;
    }
    Ok(GroundTruthPersona { distribution })
}

/// Scripted profiling heuristic. Per settled item, for each persona the item
/// matches: the rival gains 0.1 per accepted raise (capped at three raises)
/// or loses 0.1 if it appeared in the round without ever bidding. A rival
/// absent from the history contributes no information and the vector is
/// returned unchanged.
pub fn heuristic_update(
    prev: &ProfileVector,
    item: &ListingView,
    history: &[BidEvent],
) -> ProfileVector {
    let rival = prev.rival_id;
    let mut appeared = false;
    let mut raises = 0u64;
    for event in history {
        if event.bidder_id == rival {
            appeared = true;
            if matches!(event.action, BidAction::Bid(_)) {
                raises += 1;
            }
        }
    }
    if !appeared || item.matched_personas.is_empty() {
        return prev.clone();
    }
    let delta = if raises > 0 {
        HEURISTIC_DELTA * raises.min(HEURISTIC_RAISE_CAP) as f64
    } else {
        -HEURISTIC_DELTA
    };
    let mut next = prev.clone();
    for pid in &item.matched_personas {
        if pid.0 < next.weights.len() {
            next.weights[pid.0] += delta;
        }
    }
    next.clamp();
    next
}

/// Shift-normalizes a profile into a probability distribution: add
/// |min(weights)| to every entry, then divide by the sum; an all-zero shifted
/// vector falls back to uniform.
pub fn shift_normalize(weights: &[f64]) -> Vec<f64> {
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min < 0.0 { -min } else { 0.0 };
    let shifted: Vec<f64> = weights.iter().map(|w| w + shift).collect();
    let total: f64 = shifted.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / weights.len() as f64; weights.len()];
    }
    shifted.into_iter().map(|w| w / total).collect()
}

fn smooth(dist: &[f64]) -> Vec<f64> {
    let smoothed: Vec<f64> = dist.iter().map(|p| p + KL_EPSILON).collect();
    let total: f64 = smoothed.iter().sum();
    smoothed.into_iter().map(|p| p / total).collect()
}

/// KL divergence D(G || Q) in nats, where Q is the shift-normalized,
/// smoothed profile. An all-zero profile scores ln(k) against a one-hot
/// ground truth and ln(k/2) against a mix of two.
pub fn profiling_kl(
    gt: &GroundTruthPersona,
    profile: &ProfileVector,
) -> Result<f64, ProfilingError> {
    if gt.distribution.len() != profile.weights.len() {
        return Err(ProfilingError::LengthMismatch {
            gt: gt.distribution.len(),
            profile: profile.weights.len(),
        });
    }
    let q = smooth(&shift_normalize(&profile.weights));
    let g = smooth(&gt.distribution);
    let mut kl = 0.0;
    for (gi, qi) in g.iter().zip(&q) {
        if *gi > 0.0 {
            kl += gi * (gi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}
