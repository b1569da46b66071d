//! Scripted (non-LLM) agents: deterministic oracles for offline runs.

use std::sync::Arc;

use crate::agents::transport::PolicyEndpoint;
use crate::agents::{prompts, AgentRuntime, AgentSpec, IncidentCounters, StatusBoard};
use crate::catalog::{Money, PersonaId};
use crate::engine::{
    AuctionStartView, BidAction, BidderId, BidderPolicy, PolicyDecision, PolicyError, PollContext,
    RoundSettledView,
};
use crate::planning::{scripted_priorities, PlanningInputs, PriorityList, ScriptedPlanner};
use crate::profiling::{heuristic_update, ProfileKnowledge};
use crate::strategy::{expert_act, remote_act, BidContext};

pub enum ScriptedStrategy {
    /// The deterministic six-rule selector.
    Expert,
    /// Ask a remote reasoning policy each poll; plan and profile locally.
    Remote {
        endpoint: Arc<dyn PolicyEndpoint>,
        system: String,
        persona_names: Vec<String>,
    },
}

/// Full scripted agent: scripted planner, heuristic profiler, expert (or
/// remote) strategy, ground-truth status board.
pub struct ScriptedAgent {
    name: String,
    persona_mix: Vec<(PersonaId, f64)>,
    overhead: f64,
    k: usize,
    planner: ScriptedPlanner,
    strategy: ScriptedStrategy,
    incidents: Arc<IncidentCounters>,
    rt: AgentRuntime,
    priorities: PriorityList,
    profiles: ProfileKnowledge,
    board: StatusBoard,
}

impl ScriptedAgent {
    pub fn new(
        spec: &AgentSpec,
        k: usize,
        planner: ScriptedPlanner,
        strategy: ScriptedStrategy,
        incidents: Arc<IncidentCounters>,
    ) -> Self {
        ScriptedAgent {
            name: spec.name.clone(),
            persona_mix: spec.persona_mix.iter().map(|s| (s.persona, s.weight)).collect(),
            overhead: spec.overhead,
            k,
            planner,
            strategy,
            incidents,
            rt: AgentRuntime::default(),
            priorities: PriorityList::new(),
            profiles: ProfileKnowledge::default(),
            board: StatusBoard::default(),
        }
    }

    fn bid_context<'a>(&'a self, ctx: &'a PollContext<'_>) -> BidContext<'a> {
        BidContext {
            listing: ctx.listing,
            current_high: ctx.current_high,
            min_raise: ctx.min_increment,
            my_budget: ctx.remaining_budget,
            statuses: &self.board,
            priorities: &self.priorities,
            profiles: &self.profiles,
            history: ctx.history,
            remaining: ctx.remaining,
        }
    }

    fn replan(&mut self, budget: Money, remaining: &[crate::engine::ListingView]) {
        let inputs = PlanningInputs {
            budget,
            persona_mix: &self.persona_mix,
            items: remaining,
        };
        self.priorities = scripted_priorities(self.planner, &inputs);
    }
}

impl BidderPolicy for ScriptedAgent {
    fn overhead(&self) -> f64 {
        self.overhead
    }

    fn on_auction_start(&mut self, view: &AuctionStartView<'_>) -> Result<(), PolicyError> {
        self.rt = AgentRuntime::from_start(view);
        let rivals: Vec<BidderId> = (0..view.bidder_names.len())
            .filter(|i| *i != view.my_id.0)
            .map(BidderId)
            .collect();
        self.profiles = ProfileKnowledge::init(&rivals, self.k)
            .map_err(|e| PolicyError::Degraded(e.to_string()))?;
        self.board = self.rt.initial_board(view.my_budget);
        self.replan(view.my_budget, view.items);
        Ok(())
    }

    fn decide(&mut self, ctx: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
        match &self.strategy {
            ScriptedStrategy::Expert => {
                let action = expert_act(&self.bid_context(ctx));
                Ok(action.decision.into())
            }
            ScriptedStrategy::Remote {
                endpoint,
                system,
                persona_names,
            } => {
                let auctioneer = prompts::auctioneer_message(
                    ctx.listing,
                    ctx.current_high.map(|(b, a)| (b.0, a)),
                    ctx.min_increment,
                    ctx.cycle,
                    ctx.history,
                    &self.rt.bidder_names,
                );
                let request = crate::agents::transport::RemoteRequest {
                    system: system.clone(),
                    auctioneer_msg: auctioneer,
                    status_text: prompts::status_text(
                        self.rt.my_name(),
                        &self.board,
                        &self.rt.rival_names(),
                    ),
                    priorities: prompts::priorities_text(&self.priorities, ctx.remaining),
                    profile_text: prompts::profile_text(
                        &self.profiles,
                        persona_names,
                        &self.rt.bidder_names,
                    ),
                };
                match remote_act(&self.bid_context(ctx), &request, endpoint.as_ref()) {
                    Ok(action) => Ok(action.decision.into()),
                    Err(e) => {
                        self.incidents
                            .transport_errors
                            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        log::warn!("remote policy failed for {}: {e}", self.name);
                        Ok(PolicyDecision {
                            action: BidAction::Withdraw,
                            annotation: Some(format!("remote policy unavailable: {e}")),
                        })
                    }
                }
            }
        }
    }

    fn on_status_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        self.board = self.rt.ground_truth_board(view);
        Ok(())
    }

    fn on_profile_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        for profile in self.profiles.profiles.values_mut() {
            *profile = heuristic_update(profile, view.listing, view.history);
        }
        Ok(())
    }

    fn on_priority_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        self.replan(view.my_budget, view.remaining);
        Ok(())
    }

    fn profile_knowledge(&self) -> Option<&ProfileKnowledge> {
        Some(&self.profiles)
    }
}

/// Oracle agent: bids the minimum legal raise while the next bid stays
/// within `limit` times its perceived value (and within budget), then
/// withdraws. No planning, no profiling.
pub struct ThresholdAgent {
    limit: f64,
    overhead: f64,
}

impl ThresholdAgent {
    pub fn new(spec: &AgentSpec, limit: f64) -> Self {
        ThresholdAgent {
            limit,
            overhead: spec.overhead,
        }
    }
}

impl BidderPolicy for ThresholdAgent {
    fn overhead(&self) -> f64 {
        self.overhead
    }

    fn decide(&mut self, ctx: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let next = ctx.min_legal_bid;
        let within_limit = next as f64 <= self.limit * ctx.listing.perceived_value as f64;
        if within_limit && next <= ctx.remaining_budget {
            Ok(BidAction::Bid(next).into())
        } else {
            Ok(BidAction::Withdraw.into())
        }
    }
}

