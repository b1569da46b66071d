//! Bidder agents: scripted oracles and LLM-backed policies.
//!
//! An agent bundles a persona mix, an estimation overhead, a planner, a
//! profiler, a strategy and a status tracker behind the engine's
//! `BidderPolicy` trait. Scripted agents are pure deterministic functions of
//! their observations; LLM agents assemble prompts, parse replies, and fall
//! back to the scripted behaviour when a reply cannot be parsed.

pub mod emulator;
pub mod llm;
pub mod parse;
pub mod prompts;
pub mod scripted;
pub mod transport;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Money, Persona, PersonaId};
use crate::engine::{BidderPolicy, EngineIncidents, ListingView, RoundSettledView};
use transport::{ChatTransport, PolicyEndpoint};

/// An agent's subjective scoreboard, keyed by bidder and item names as they
/// appear in prompts. `remaining_budget` is the agent's own, exact;
/// `total_profits` is a perceived-value ledger (agents never learn true
/// values); `winning_bids` mirrors the public settlement record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusBoard {
    pub remaining_budget: Money,
    pub total_profits: BTreeMap<String, Money>,
    pub winning_bids: BTreeMap<String, BTreeMap<String, Money>>,
}

/// Incident counters shared between the agents of one run and its manifest.
#[derive(Debug, Default)]
pub struct IncidentCounters {
    pub parse_fallbacks: AtomicU64,
    pub hallucinations: AtomicU64,
    pub transport_errors: AtomicU64,
    pub clamped_bids: AtomicU64,
}

impl IncidentCounters {
    pub fn snapshot(&self) -> IncidentSnapshot {
        IncidentSnapshot {
            parse_fallbacks: self.parse_fallbacks.load(Ordering::Relaxed),
            hallucinations: self.hallucinations.load(Ordering::Relaxed),
            transport_errors: self.transport_errors.load(Ordering::Relaxed),
            clamped_bids: self.clamped_bids.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentSnapshot {
    pub parse_fallbacks: u64,
    pub hallucinations: u64,
    pub transport_errors: u64,
    pub clamped_bids: u64,
}

impl IncidentSnapshot {
    pub fn merge(&mut self, other: &IncidentSnapshot) {
        self.parse_fallbacks += other.parse_fallbacks;
        self.hallucinations += other.hallucinations;
        self.transport_errors += other.transport_errors;
        self.clamped_bids += other.clamped_bids;
    }

    /// Incidents that indicate something the framework had to paper over.
    /// Bid clamps are annotated but tolerated.
    pub fn unhandled(&self, engine: &EngineIncidents) -> u64 {
        self.parse_fallbacks
            + self.hallucinations
            + self.transport_errors
            + engine.forced_withdrawals
            + engine.hook_failures
    }
}

/// Where an LLM agent's knowledge of rival personas comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaSource {
    /// No persona knowledge at all (no theory of mind).
    #[default]
    None,
    /// Ground-truth rival personas are injected; profiling is bypassed.
    True,
    /// Personas are inferred by the profiling module during the auction.
    Inferred,
}

/// Strategy module choice for an LLM agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    /// No strategy module; the agent decides from the action prompt alone.
    #[default]
    None,
    /// The six-rule expert strategy prompt.
    Expert,
    /// A remote reasoning policy recommends bid or withdraw.
    Remote { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Persona-less baseline that works down the presentation order.
    ScriptedGreedy,
    /// Deterministic persona agent: planner, profiler and expert strategy.
    ScriptedPersonaLoyal,
    /// Bids the minimum legal raise while it stays within a fraction of the
    /// perceived value; used as a closed-form oracle in tests.
    ScriptedThreshold { limit: f64 },
    /// LLM-backed agent speaking the chat protocol.
    Llm {
        model: String,
        #[serde(default)]
        tom_level: u8,
        #[serde(default)]
        persona_source: PersonaSource,
        #[serde(default)]
        strategy: StrategyChoice,
    },
    /// Scripted planner and profiler with a remote reasoning policy deciding
    /// each poll.
    Remote { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaShare {
    pub persona: PersonaId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    /// Empty for persona-less agents; at most two entries.
    #[serde(default)]
    pub persona_mix: Vec<PersonaShare>,
    pub overhead: f64,
    pub initial_budget: Money,
    pub policy: PolicyKind,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent spec {name}: {message}")]
    InvalidSpec { name: String, message: String },
}

impl AgentSpec {
    pub fn persona_ids(&self) -> Vec<PersonaId> {
        let mut ids: Vec<PersonaId> = self.persona_mix.iter().map(|s| s.persona).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn validate(&self, k: usize) -> Result<(), AgentError> {
        let fail = |message: String| {
            Err(AgentError::InvalidSpec {
                name: self.name.clone(),
                message,
            })
        };
        if self.name.trim().is_empty() {
            return fail("empty name".into());
        }
        if self.persona_mix.len() > 2 {
            return fail(format!(
                "persona_mix supports at most two personas, got {}",
                self.persona_mix.len()
            ));
        }
        if !self.persona_mix.is_empty() {
            let total: f64 = self.persona_mix.iter().map(|s| s.weight).sum();
            if self.persona_mix.iter().any(|s| s.weight <= 0.0) {
                return fail("persona weights must be positive".into());
            }
            if (total - 1.0).abs() > 1e-9 {
                return fail(format!("persona weights must sum to 1, got {total}"));
            }
            for share in &self.persona_mix {
                if share.persona.0 >= k {
                    return fail(format!("persona {} out of range (k={k})", share.persona));
                }
            }
        }
        if self.overhead <= -1.0 {
            return fail(format!("overhead must exceed -1, got {}", self.overhead));
        }
        if self.initial_budget <= 0 {
            return fail(format!("budget must be positive, got {}", self.initial_budget));
        }
        if let PolicyKind::ScriptedThreshold { limit } = &self.policy {
            if *limit < 0.0 {
                return fail(format!("threshold limit must be non-negative, got {limit}"));
            }
        }
        if let PolicyKind::Llm { tom_level, .. } = &self.policy {
            if *tom_level > 2 {
                return fail(format!("tom_level must be 0..=2, got {tom_level}"));
            }
        }
        Ok(())
    }
}

/// The agent's system message: persona snippets (ordered by persona id)
/// followed by the fixed auction rules.
pub fn build_system_message(spec: &AgentSpec, personas: &[Persona]) -> String {
    let mut ids = spec.persona_ids();
    ids.sort();
    let snippets: Vec<&str> = ids
        .iter()
        .filter_map(|pid| personas.get(pid.0).map(|p| p.prompt_snippet.as_str()))
        .collect();
    prompts::system_message(&spec.name, &snippets)
}

/// Shared per-auction runtime facts an agent learns at start.
#[derive(Debug, Clone, Default)]
pub(crate) struct AgentRuntime {
    pub my_id: usize,
    pub bidder_names: Vec<String>,
    /// All items in presentation order, as this agent's views.
    pub items: Vec<ListingView>,
    pub id_to_name: BTreeMap<String, String>,
}

impl AgentRuntime {
    pub fn from_start(view: &crate::engine::AuctionStartView<'_>) -> Self {
        AgentRuntime {
            my_id: view.my_id.0,
            bidder_names: view.bidder_names.to_vec(),
            items: view.items.to_vec(),
            id_to_name: view
                .items
                .iter()
                .map(|l| (l.id.clone(), l.name.clone()))
                .collect(),
        }
    }

    pub fn my_name(&self) -> &str {
        self.bidder_names
            .get(self.my_id)
            .map(String::as_str)
            .unwrap_or("Unknown")
    }

    pub fn rival_names(&self) -> Vec<String> {
        self.bidder_names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.my_id)
            .map(|(_, n)| n.clone())
            .collect()
    }

    pub fn perceived(&self, listing_id: &str) -> Option<Money> {
        self.items
            .iter()
            .find(|l| l.id == listing_id)
            .map(|l| l.perceived_value)
    }

    pub fn listing_name<'a>(&'a self, listing_id: &'a str) -> &'a str {
        self.id_to_name
            .get(listing_id)
            .map(String::as_str)
            .unwrap_or(listing_id)
    }

    /// A fresh scoreboard: full budget, zero profits, no wins.
    pub fn initial_board(&self, budget: Money) -> StatusBoard {
        StatusBoard {
            remaining_budget: budget,
            total_profits: self.bidder_names.iter().map(|n| (n.clone(), 0)).collect(),
            winning_bids: self
                .bidder_names
                .iter()
                .map(|n| (n.clone(), BTreeMap::new()))
                .collect(),
        }
    }

    /// Recomputes the scoreboard from public results and this agent's own
    /// perceived values: the deterministic ground truth for status updates.
    pub fn ground_truth_board(&self, view: &RoundSettledView<'_>) -> StatusBoard {
        let mut board = self.initial_board(view.my_budget);
        for (bidder, won) in view.public_won.iter().enumerate() {
            let name = match self.bidder_names.get(bidder) {
                Some(n) => n.clone(),
                None => continue,
            };
            let mut profit = 0;
            for (listing_id, hammer) in won {
                let perceived = self.perceived(listing_id).unwrap_or(0);
                profit += perceived - hammer;
                board
                    .winning_bids
                    .entry(name.clone())
                    .or_default()
                    .insert(self.listing_name(listing_id).to_string(), *hammer);
            }
            board.total_profits.insert(name, profit);
        }
        board
    }
}

/// Everything needed to instantiate one agent of a run.
pub struct AgentBuildContext<'a> {
    pub catalog: &'a Catalog,
    pub all_specs: &'a [AgentSpec],
    pub my_index: usize,
    pub chat: Arc<dyn ChatTransport>,
    pub endpoints: &'a dyn Fn(&str) -> Arc<dyn PolicyEndpoint>,
    pub incidents: Arc<IncidentCounters>,
}

/// Builds the policy object for `ctx.my_index` according to its spec.
pub fn build_agent(ctx: &AgentBuildContext<'_>) -> Result<Box<dyn BidderPolicy>, AgentError> {
    let spec = &ctx.all_specs[ctx.my_index];
    spec.validate(ctx.catalog.k())?;
    match &spec.policy {
        PolicyKind::ScriptedGreedy => Ok(Box::new(scripted::ScriptedAgent::new(
            spec,
            ctx.catalog.k(),
            crate::planning::ScriptedPlanner::AuctionOrder,
            scripted::ScriptedStrategy::Expert,
            ctx.incidents.clone(),
        ))),
        PolicyKind::ScriptedPersonaLoyal => Ok(Box::new(scripted::ScriptedAgent::new(
            spec,
            ctx.catalog.k(),
            crate::planning::ScriptedPlanner::Standard,
            scripted::ScriptedStrategy::Expert,
            ctx.incidents.clone(),
        ))),
        PolicyKind::ScriptedThreshold { limit } => {
            Ok(Box::new(scripted::ThresholdAgent::new(spec, *limit)))
        }
        PolicyKind::Remote { endpoint } => Ok(Box::new(scripted::ScriptedAgent::new(
            spec,
            ctx.catalog.k(),
            crate::planning::ScriptedPlanner::Standard,
            scripted::ScriptedStrategy::Remote {
                endpoint: (ctx.endpoints)(endpoint),
                system: build_system_message(spec, &ctx.catalog.personas),
                persona_names: ctx.catalog.personas.iter().map(|p| p.name.clone()).collect(),
            },
            ctx.incidents.clone(),
        ))),
        PolicyKind::Llm {
            tom_level,
            persona_source,
            strategy,
            ..
        } => {
            let strategy = match strategy {
                StrategyChoice::None => llm::LlmStrategyKind::None,
                StrategyChoice::Expert => llm::LlmStrategyKind::Expert,
                StrategyChoice::Remote { endpoint } => {
                    llm::LlmStrategyKind::Remote((ctx.endpoints)(endpoint))
                }
            };
            Ok(Box::new(llm::LlmAgent::new(
                ctx,
                spec,
                *tom_level,
                *persona_source,
                strategy,
            )))
        }
    }
}
