//! The LLM-backed bidder agent.
//!
//! Keeps one main conversation (system, planning, action and status
//! exchanges) plus side threads for strategy, second-order analysis and
//! per-rival profiling. Every reply is parsed strictly; a reply that cannot
//! be parsed after the retry budget falls back to the scripted behaviour and
//! the incident is counted.

use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::agents::transport::{
    send_with_retries, ChatMessage, ChatTransport, PolicyEndpoint, RemoteRequest, RETRY_BUDGET,
};
use crate::agents::{
    build_system_message, parse, prompts, AgentBuildContext, AgentRuntime, AgentSpec,
    IncidentCounters, PersonaSource, StatusBoard,
};
use crate::catalog::PersonaId;
use crate::engine::{
    AuctionStartView, BidAction, BidderId, BidderPolicy, ListingView, PolicyDecision, PolicyError,
    PollContext, RoundSettledView,
};
use crate::planning::{scripted_priorities, PlanningInputs, PriorityList, ScriptedPlanner};
use crate::profiling::{ProfileKnowledge, ProfileVector};
use crate::strategy::{
    expert_act, llm_strategy, remote_act, second_order_context, BidContext, StrategyAction,
};

pub enum LlmStrategyKind {
    None,
    Expert,
    Remote(Arc<dyn PolicyEndpoint>),
}

/// Embedded as the strategic advice slot when no strategy module is active.
pub const NO_ADVICE: &str =
    "Rely on your own analysis of the priorities and your budget for this decision.";

pub struct LlmAgent {
    name: String,
    persona_mix: Vec<(PersonaId, f64)>,
    overhead: f64,
    tom_level: u8,
    persona_source: PersonaSource,
    strategy_kind: LlmStrategyKind,
    chat: Arc<dyn ChatTransport>,
    incidents: Arc<IncidentCounters>,
    persona_names: Vec<String>,
    k: usize,
    /// Ground-truth rival persona ids, used when persona_source is True.
    rival_personas: BTreeMap<usize, Vec<PersonaId>>,
    system: String,

    rt: AgentRuntime,
    priorities: PriorityList,
    profiles: ProfileKnowledge,
    board: StatusBoard,
    main_thread: Vec<ChatMessage>,
    strategy_thread: Vec<ChatMessage>,
    second_thread: Vec<ChatMessage>,
    profile_threads: BTreeMap<usize, Vec<ChatMessage>>,
}

impl LlmAgent {
    pub fn new(
        ctx: &AgentBuildContext<'_>,
        spec: &AgentSpec,
        tom_level: u8,
        persona_source: PersonaSource,
        strategy_kind: LlmStrategyKind,
    ) -> Self {
        let rival_personas = ctx
            .all_specs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ctx.my_index)
            .map(|(i, s)| (i, s.persona_ids()))
            .collect();
        LlmAgent {
            name: spec.name.clone(),
            persona_mix: spec.persona_mix.iter().map(|s| (s.persona, s.weight)).collect(),
            overhead: spec.overhead,
            tom_level,
            persona_source,
            strategy_kind,
            chat: ctx.chat.clone(),
            incidents: ctx.incidents.clone(),
            persona_names: ctx.catalog.personas.iter().map(|p| p.name.clone()).collect(),
            k: ctx.catalog.k(),
            rival_personas,
            system: build_system_message(spec, &ctx.catalog.personas),
            rt: AgentRuntime::default(),
            priorities: PriorityList::new(),
            profiles: ProfileKnowledge::default(),
            board: StatusBoard::default(),
            main_thread: Vec::new(),
            strategy_thread: Vec::new(),
            second_thread: Vec::new(),
            profile_threads: BTreeMap::new(),
        }
    }

    fn profiling_enabled(&self) -> bool {
        self.tom_level >= 1 && self.persona_source == PersonaSource::Inferred
    }

    fn note_parse_fallback(&self, what: &str) {
        log::warn!("{}: {what} reply unusable, falling back", self.name);
        self.incidents.parse_fallbacks.fetch_add(1, Ordering::Relaxed);
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

    fn scripted_replan(&mut self, budget: crate::catalog::Money, items: &[ListingView]) {
        let inputs = PlanningInputs {
            budget,
            persona_mix: &self.persona_mix,
            items,
        };
        self.priorities = scripted_priorities(ScriptedPlanner::Standard, &inputs);
    }

    /// Requests a priority plan over `items`; falls back to the scripted
    /// planner when the reply cannot be parsed.
    fn llm_plan(&mut self, budget: crate::catalog::Money, items: &[ListingView]) {
        if items.is_empty() {
            self.priorities = PriorityList::new();
            return;
        }
        let prompt = prompts::planning_prompt(&self.name, budget, items);
        self.main_thread.push(ChatMessage::user(prompt));
        for _ in 0..=RETRY_BUDGET {
            match send_with_retries(self.chat.as_ref(), &self.main_thread, 0) {
                Ok(reply) => match parse::parse_priority_reply(&reply, items) {
                    Ok(list) => {
                        self.main_thread.push(ChatMessage::assistant(reply));
                        self.priorities = list;
                        return;
                    }
                    Err(_) => continue,
                },
                Err(_) => continue,
            }
        }
        self.main_thread.pop();
        self.note_parse_fallback("planning");
        self.scripted_replan(budget, items);
    }

    fn strategy_advice(&mut self, ctx: &PollContext<'_>, auctioneer: &str) -> StrategyAction {
        let status = prompts::status_json(&self.board);
        let plan = prompts::plan_json(&self.priorities, &self.rt.id_to_name);
        let profile = prompts::profile_json(&self.profiles, &self.persona_names, &self.rt.bidder_names);
        let remote = match &self.strategy_kind {
            LlmStrategyKind::None => {
                return StrategyAction {
                    rule: crate::strategy::StrategyRule::D,
                    decision: BidAction::Withdraw,
                    rationale: NO_ADVICE.to_string(),
                };
            }
            LlmStrategyKind::Expert => None,
            LlmStrategyKind::Remote(endpoint) => Some(endpoint.clone()),
        };
        if let Some(endpoint) = remote {
            let request = RemoteRequest {
                system: self.system.clone(),
                auctioneer_msg: auctioneer.to_string(),
                status_text: prompts::status_text(
                    self.rt.my_name(),
                    &self.board,
                    &self.rt.rival_names(),
                ),
                priorities: prompts::priorities_text(&self.priorities, ctx.remaining),
                profile_text: prompts::profile_text(
                    &self.profiles,
                    &self.persona_names,
                    &self.rt.bidder_names,
                ),
            };
            let bid_ctx = self.bid_context(ctx);
            return match remote_act(&bid_ctx, &request, endpoint.as_ref()) {
                Ok(action) => action,
                Err(e) => {
                    log::warn!("{}: remote policy failed: {e}", self.name);
                    self.incidents.transport_errors.fetch_add(1, Ordering::Relaxed);
                    StrategyAction {
                        rule: crate::strategy::StrategyRule::F,
                        decision: BidAction::Withdraw,
                        rationale: "The remote policy is unavailable; withdrawing.".into(),
                    }
                }
            };
        }
        // Expert strategy prompt, optionally preceded by the second-order
        // perception report.
        let report = if self.tom_level >= 2 {
            let prompt = prompts::second_order_prompt(
                &ctx.listing.name,
                &prompts::history_text(ctx.history, &self.rt.bidder_names, &ctx.listing.name),
                &status,
                &self.name,
            );
            let report =
                second_order_context(true, prompt, &mut self.second_thread, &self.chat);
            if report.is_empty() {
                self.incidents.transport_errors.fetch_add(1, Ordering::Relaxed);
            }
            report
        } else {
            String::new()
        };
        let prompt = prompts::strategy_prompt(auctioneer, &status, &plan, &profile, &report);
        let bid_ctx = BidContext {
            listing: ctx.listing,
            current_high: ctx.current_high,
            min_raise: ctx.min_increment,
            my_budget: ctx.remaining_budget,
            statuses: &self.board,
            priorities: &self.priorities,
            profiles: &self.profiles,
            history: ctx.history,
            remaining: ctx.remaining,
        };
        match llm_strategy(&bid_ctx, prompt, &mut self.strategy_thread, &self.chat) {
            Ok(action) => action,
            Err(_) => {
                self.incidents.parse_fallbacks.fetch_add(1, Ordering::Relaxed);
                log::warn!("{}: strategy reply unusable, falling back", self.name);
                let mut fallback = expert_act(&bid_ctx);
                fallback.rationale = format!(
                    "I chose to {} because {}",
                    fallback.rule.letter(),
                    fallback.rationale
                );
                fallback
            }
        }
    }
}

impl BidderPolicy for LlmAgent {
    fn overhead(&self) -> f64 {
        self.overhead
    }

    fn on_auction_start(&mut self, view: &AuctionStartView<'_>) -> Result<(), PolicyError> {
        self.rt = AgentRuntime::from_start(view);
        self.board = self.rt.initial_board(view.my_budget);
        self.main_thread = vec![ChatMessage::system(self.system.clone())];
        self.strategy_thread = vec![ChatMessage::system(self.system.clone())];
        self.second_thread = vec![ChatMessage::system(self.system.clone())];
        self.profile_threads = (0..view.bidder_names.len())
            .filter(|i| *i != view.my_id.0)
            .map(|i| (i, vec![ChatMessage::system(self.system.clone())]))
            .collect();
        let rivals: Vec<BidderId> = (0..view.bidder_names.len())
            .filter(|i| *i != view.my_id.0)
            .map(BidderId)
            .collect();
        self.profiles = match self.persona_source {
            PersonaSource::None => ProfileKnowledge::default(),
            PersonaSource::Inferred => {
                if self.tom_level >= 1 {
                    ProfileKnowledge::init(&rivals, self.k)
                        .map_err(|e| PolicyError::Degraded(e.to_string()))?
                } else {
                    ProfileKnowledge::default()
                }
            }
            PersonaSource::True => {
                let mut knowledge = ProfileKnowledge::default();
                for rival in &rivals {
                    let mut vector = ProfileVector::zeros(*rival, self.k)
                        .map_err(|e| PolicyError::Degraded(e.to_string()))?;
                    if let Some(ids) = self.rival_personas.get(&rival.0) {
                        let share = if ids.len() == 2 { 0.5 } else { 1.0 };
                        for pid in ids {
                            if pid.0 < vector.weights.len() {
                                vector.weights[pid.0] = share;
                            }
                        }
                    }
                    knowledge.profiles.insert(*rival, vector);
                }
                knowledge
            }
        };
        self.llm_plan(view.my_budget, view.items);
        Ok(())
    }

    fn decide(&mut self, ctx: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let auctioneer = prompts::auctioneer_message(
            ctx.listing,
            ctx.current_high.map(|(b, a)| (b.0, a)),
            ctx.min_increment,
            ctx.cycle,
            ctx.history,
            &self.rt.bidder_names,
        );
        let advice = self.strategy_advice(ctx, &auctioneer);
        let prompt = prompts::action_prompt(&auctioneer, &self.name, &advice.rationale);
        self.main_thread.push(ChatMessage::user(prompt));
        let mut parsed: Option<BidAction> = None;
        for _ in 0..=RETRY_BUDGET {
            match send_with_retries(self.chat.as_ref(), &self.main_thread, 0) {
                Ok(reply) => match parse::parse_bid_reply(&reply) {
                    Ok(action) => {
                        self.main_thread.push(ChatMessage::assistant(reply));
                        parsed = Some(action);
                        break;
                    }
                    Err(_) => continue,
                },
                Err(_) => continue,
            }
        }
        let action = match parsed {
            Some(action) => action,
            None => {
                self.main_thread.pop();
                self.note_parse_fallback("action");
                return Ok(PolicyDecision {
                    action: BidAction::Withdraw,
                    annotation: Some("no decision phrase in reply after retries".into()),
                });
            }
        };
        match action {
            BidAction::Withdraw => Ok(BidAction::Withdraw.into()),
            BidAction::Bid(amount) => {
                if ctx.remaining_budget < ctx.min_legal_bid {
                    self.incidents.clamped_bids.fetch_add(1, Ordering::Relaxed);
                    return Ok(PolicyDecision {
                        action: BidAction::Withdraw,
                        annotation: Some(format!(
                            "clamped: budget {} below minimum legal bid {}",
                            ctx.remaining_budget, ctx.min_legal_bid
                        )),
                    });
                }
                let clamped = amount.clamp(ctx.min_legal_bid, ctx.remaining_budget);
                let annotation = if clamped != amount {
                    self.incidents.clamped_bids.fetch_add(1, Ordering::Relaxed);
                    Some(format!("clamped: reply amount {amount} adjusted to {clamped}"))
                } else {
                    None
                };
                Ok(PolicyDecision {
                    action: BidAction::Bid(clamped),
                    annotation,
                })
            }
        }
    }

    fn on_status_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        let truth = self.rt.ground_truth_board(view);
        let item_name = &view.listing.name;
        let history = prompts::history_text(view.history, &self.rt.bidder_names, item_name);
        let winner_name = view
            .settlement
            .winner
            .and_then(|b| self.rt.bidder_names.get(b.0))
            .map(String::as_str);
        let hammer_msg = prompts::hammer_message(item_name, winner_name, view.settlement.hammer_price);
        let won = view.settlement.winner == Some(BidderId(self.rt.my_id));
        let win_lose = prompts::win_lose_message(item_name, won, view.settlement.hammer_price);
        let prompt = prompts::status_update_prompt(
            &self.name,
            item_name,
            &history,
            &hammer_msg,
            &win_lose,
            &prompts::status_json(&self.board),
        );
        self.main_thread.push(ChatMessage::user(prompt));
        for _ in 0..=RETRY_BUDGET {
            match send_with_retries(self.chat.as_ref(), &self.main_thread, 0) {
                Ok(reply) => match parse::parse_status_reply(&reply) {
                    Ok(board) => {
                        self.main_thread.push(ChatMessage::assistant(reply));
                        // Agent beliefs may drift from ground truth; drift is
                        // recorded, never corrected. Metrics ignore boards.
                        if board.remaining_budget != truth.remaining_budget
                            || board.winning_bids != truth.winning_bids
                        {
                            log::warn!("{}: status board drifted from ground truth", self.name);
                            self.incidents.hallucinations.fetch_add(1, Ordering::Relaxed);
                        }
                        self.board = board;
                        return Ok(());
                    }
                    Err(_) => continue,
                },
                Err(_) => continue,
            }
        }
        self.main_thread.pop();
        self.note_parse_fallback("status");
        // Keep the previous board but carry the exact budget forward.
        self.board.remaining_budget = truth.remaining_budget;
        Ok(())
    }

    fn on_profile_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        if !self.profiling_enabled() {
            return Ok(());
        }
        let item_name = view.listing.name.clone();
        let history = prompts::history_text(view.history, &self.rt.bidder_names, &item_name);
        let rivals: Vec<usize> = self.profile_threads.keys().copied().collect();
        for rival in rivals {
            let rival_name = self.rt.bidder_names[rival].clone();
            let prompt = prompts::profiling_prompt(
                &item_name,
                &history,
                &self.name,
                &self.persona_names,
                &rival_name,
                &view.listing.description,
            );
            let thread = self.profile_threads.get_mut(&rival).expect("rival thread");
            thread.push(ChatMessage::user(prompt));
            let mut applied = false;
            for _ in 0..=RETRY_BUDGET {
                match send_with_retries(self.chat.as_ref(), thread, 0) {
                    Ok(reply) => {
                        match parse::parse_profile_reply(&reply, &rival_name, &self.persona_names)
                        {
                            Ok(update) => {
                                thread.push(ChatMessage::assistant(reply));
                                if let Some(weights) = update {
                                    if let Some(profile) =
                                        self.profiles.profiles.get_mut(&BidderId(rival))
                                    {
                                        profile.replace(weights);
                                    }
                                }
                                applied = true;
                                break;
                            }
                            Err(_) => continue,
                        }
                    }
                    Err(_) => continue,
                }
            }
            if !applied {
                thread.pop();
                self.note_parse_fallback("profiling");
            }
        }
        Ok(())
    }

    fn on_priority_update(&mut self, view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        let remaining = view.remaining.to_vec();
        self.llm_plan(view.my_budget, &remaining);
        Ok(())
    }

    fn profile_knowledge(&self) -> Option<&ProfileKnowledge> {
        if self.profiles.profiles.is_empty() {
            None
        } else {
            Some(&self.profiles)
        }
    }
}
