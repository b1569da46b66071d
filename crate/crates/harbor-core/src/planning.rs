//! Item priority planning.
//!
//! Each agent keeps a priority list mapping every remaining listing to a
//! level in {1, 2, 3} (3 highest). The list is initialized before bidding
//! and recomputed after every settled item. Two scripted planners are
//! provided as deterministic referents; LLM-backed planning lives in the
//! agents module and falls back to the scripted rule on parse failure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{Money, PersonaId};
use crate::engine::ListingView;

pub const LOWEST_PRIORITY: u8 = 1;
pub const HIGHEST_PRIORITY: u8 = 3;

/// Priority levels keyed by listing id. Holds exactly the remaining
/// (unsold, unpassed) listings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityList {
    scores: BTreeMap<String, u8>,
}

impl PriorityList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, listing_id: impl Into<String>, level: u8) {
        self.scores
            .insert(listing_id.into(), level.clamp(LOWEST_PRIORITY, HIGHEST_PRIORITY));
    }

    pub fn level(&self, listing_id: &str) -> Option<u8> {
        self.scores.get(listing_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u8)> {
        self.scores.iter().map(|(id, level)| (id.as_str(), *level))
    }

    /// True when the listed ids are exactly `items`.
    pub fn covers_exactly(&self, items: &[ListingView]) -> bool {
        self.scores.len() == items.len() && items.iter().all(|l| self.scores.contains_key(&l.id))
    }
}

/// Deterministic planning rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPlanner {
    /// Persona-matched items always get level 3; items unaffordable at their
    /// starting price get 1; the rest are ranked by perceived margin and
    /// split into thirds (3/2/1), ties broken by presentation order.
    Standard,
    /// Earliest remaining items get the highest level, reproducing the
    /// behaviour of a persona-less agent that simply works down the list.
    AuctionOrder,
}

/// Everything the scripted planners read.
#[derive(Debug, Clone, Copy)]
pub struct PlanningInputs<'a> {
    pub budget: Money,
    pub persona_mix: &'a [(PersonaId, f64)],
    /// Remaining items in presentation order.
    pub items: &'a [ListingView],
}

/// Splits `n` ranked positions into priority levels 3/2/1, top third first.
fn tercile_level(rank: usize, n: usize) -> u8 {
    debug_assert!(rank < n);
    (HIGHEST_PRIORITY as usize - (3 * rank) / n) as u8
}

pub fn scripted_priorities(planner: ScriptedPlanner, inputs: &PlanningInputs<'_>) -> PriorityList {
    let mut list = PriorityList::new();
    match planner {
        ScriptedPlanner::AuctionOrder => {
            let n = inputs.items.len();
            for (idx, item) in inputs.items.iter().enumerate() {
                list.set(&item.id, tercile_level(idx, n));
            }
        }
        ScriptedPlanner::Standard => {
            let mut ranked: Vec<(usize, &ListingView)> = Vec::new();
            for (idx, item) in inputs.items.iter().enumerate() {
                let matched = inputs
                    .persona_mix
                    .iter()
                    .any(|(pid, _)| item.matched_personas.contains(pid));
                if matched {
                    list.set(&item.id, HIGHEST_PRIORITY);
                } else if item.starting_price > inputs.budget {
                    list.set(&item.id, LOWEST_PRIORITY);
                } else {
                    ranked.push((idx, item));
                }
            }
            // Highest perceived margin first; presentation order breaks ties.
            ranked.sort_by(|(ia, a), (ib, b)| {
                let ma = a.perceived_value - a.starting_price;
                let mb = b.perceived_value - b.starting_price;
                mb.cmp(&ma).then(ia.cmp(ib))
            });
            let n = ranked.len();
            for (rank, (_, item)) in ranked.into_iter().enumerate() {
                list.set(&item.id, tercile_level(rank, n));
            }
        }
    }
    list
}
