//! Turn-based English ascending auction state machine.
//!
//! One `Auction` runs a sequence of item rounds. Within a round, active
//! bidders are polled in fixed ascending bidder-id order (the current high
//! bidder is not re-polled within a cycle); each poll yields a bid or a
//! permanent withdrawal for that item. Accepted bids must clear the per-item
//! minimum increment and the bidder's remaining budget. The engine keeps the
//! ground-truth ledger (true values, realized profits); agent-facing views
//! expose starting prices and perceived values only — never a true value.

pub mod log;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Listing, Money, PersonaId};

pub use log::{parse_jsonl, to_jsonl, verify_log, LogLine, ReplayError, ReplayReport};

/// Index of a bidder within one auction, assigned in setup order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct BidderId(pub usize);

impl fmt::Display for BidderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rounds half away from zero, which for the positive quantities used here
/// is plain round-half-up.
pub fn round_money(x: f64) -> Money {
    x.round() as Money
}

/// The value an agent with the given estimation overhead perceives for a
/// listing. This, never the true value, is what agent-facing contexts carry.
pub fn perceived_value(listing: &Listing, overhead: f64) -> Money {
    round_money(listing.true_value as f64 * (1.0 + overhead))
}

/// Maximum possible profit for an item: won at its starting price.
pub fn max_profit(listing: &Listing) -> Money {
    listing.true_value - listing.starting_price
}

/// Per-item minimum raise over the current high bid.
pub fn min_increment(rate: f64, starting_price: Money) -> Money {
    round_money(rate * starting_price as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BidAction {
    Bid(Money),
    Withdraw,
}

/// What a policy returns when polled. The annotation travels into the event
/// log (e.g. a note that a reply's amount was clamped).
#[derive(Debug, Clone)]
pub struct PolicyDecision {
    pub action: BidAction,
    pub annotation: Option<String>,
}

impl From<BidAction> for PolicyDecision {
    fn from(action: BidAction) -> Self {
        PolicyDecision {
            action,
            annotation: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    /// Recoverable failure: the engine records a forced withdrawal and the
    /// auction continues.
    #[error("policy degraded: {0}")]
    Degraded(String),
    /// Unrecoverable transport failure: the whole run aborts.
    #[error("policy transport failure: {0}")]
    Fatal(String),
}

/// Public listing data plus this agent's private value estimate. Contains no
/// true value by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListingView {
    pub id: String,
    pub name: String,
    pub description: String,
    pub starting_price: Money,
    pub perceived_value: Money,
    pub matched_personas: BTreeSet<PersonaId>,
}

impl ListingView {
    fn of(listing: &Listing, overhead: f64) -> Self {
        ListingView {
            id: listing.id.clone(),
            name: listing.name.clone(),
            description: listing.description.clone(),
            starting_price: listing.starting_price,
            perceived_value: perceived_value(listing, overhead),
            matched_personas: listing.matched_personas.clone(),
        }
    }
}

/// Everything an agent learns when the auction opens.
#[derive(Debug, Serialize)]
pub struct AuctionStartView<'a> {
    pub my_id: BidderId,
    pub bidder_names: &'a [String],
    pub items: &'a [ListingView],
    pub my_budget: Money,
    pub min_increment_rate: f64,
}

/// Per-poll context handed to a policy.
#[derive(Debug, Serialize)]
pub struct PollContext<'a> {
    pub listing: &'a ListingView,
    pub current_high: Option<(BidderId, Money)>,
    pub min_increment: Money,
    pub min_legal_bid: Money,
    pub remaining_budget: Money,
    pub cycle: u32,
    pub history: &'a [BidEvent],
    /// Items not yet settled, in presentation order, including the current one.
    pub remaining: &'a [ListingView],
}

/// Post-settlement view used by the status / profiling / priority hooks.
#[derive(Debug, Serialize)]
pub struct RoundSettledView<'a> {
    pub settlement: &'a Settlement,
    pub listing: &'a ListingView,
    pub history: &'a [BidEvent],
    /// Items still to be auctioned (the settled item excluded).
    pub remaining: &'a [ListingView],
    /// Public outcomes per bidder: (listing id, hammer price) pairs won so far.
    pub public_won: &'a [Vec<(String, Money)>],
    pub my_budget: Money,
}

/// A bidder's decision logic plus its post-round bookkeeping hooks. After
/// each settlement the engine fires, per bidder in ascending id order,
/// `on_status_update`, then `on_profile_update`, then `on_priority_update`.
pub trait BidderPolicy: Send {
    /// Estimation overhead applied to true values for this bidder's views.
    /// Read once at auction construction.
    fn overhead(&self) -> f64 {
        0.0
    }

    fn on_auction_start(&mut self, _view: &AuctionStartView<'_>) -> Result<(), PolicyError> {
        Ok(())
    }

    fn decide(&mut self, ctx: &PollContext<'_>) -> Result<PolicyDecision, PolicyError>;

    fn on_status_update(&mut self, _view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        Ok(())
    }

    fn on_profile_update(&mut self, _view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        Ok(())
    }

    fn on_priority_update(&mut self, _view: &RoundSettledView<'_>) -> Result<(), PolicyError> {
        Ok(())
    }

    /// Final profiling knowledge, when this policy maintains any. Read by
    /// the experiment runner after the auction for KL scoring.
    fn profile_knowledge(&self) -> Option<&crate::profiling::ProfileKnowledge> {
        None
    }
}

/// One recorded bidding action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidEvent {
    pub seq: u64,
    pub listing_id: String,
    pub bidder_id: BidderId,
    pub action: BidAction,
    pub cycle: u32,
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub listing_id: String,
    pub winner: Option<BidderId>,
    pub hammer_price: Option<Money>,
    pub passed: bool,
}

/// Ground-truth ledger for one bidder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderState {
    pub bidder_id: BidderId,
    pub initial_budget: Money,
    pub remaining_budget: Money,
    /// (listing id, hammer price) pairs, in settlement order.
    pub won: Vec<(String, Money)>,
    /// Sum of true_value - hammer over won items. Losers pay nothing.
    pub true_profit: Money,
    /// Accepted raises per listing id.
    pub engagement: std::collections::BTreeMap<String, u64>,
}

impl BidderState {
    fn new(bidder_id: BidderId, initial_budget: Money) -> Self {
        BidderState {
            bidder_id,
            initial_budget,
            remaining_budget: initial_budget,
            won: Vec::new(),
            true_profit: 0,
            engagement: std::collections::BTreeMap::new(),
        }
    }
}

/// Live state of one item's bidding.
#[derive(Debug)]
pub struct ItemRound {
    pub listing: Listing,
    pub min_increment: Money,
    pub current_high: Option<(BidderId, Money)>,
    pub active: BTreeSet<BidderId>,
    pub history: Vec<BidEvent>,
    pub cycle_count: u32,
    raises_in_last_cycle: usize,
}

impl ItemRound {
    pub fn min_legal_bid(&self) -> Money {
        match self.current_high {
            Some((_, high)) => high + self.min_increment,
            None => self.listing.starting_price,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettleReason {
    /// Exactly one active bidder remains and holds the high bid.
    LastBidderStanding,
    /// A full cycle passed with no accepted raise while a high bid exists.
    NoRaise,
    /// Every bidder withdrew before any bid: the item passes unsold.
    NoBids,
    /// Cycle cap reached; the current high bidder wins.
    CycleCap,
}

#[derive(Debug, Clone)]
pub struct AuctionConfig {
    pub min_increment_rate: f64,
    pub cycle_cap: u32,
    /// When set, every serialized agent-facing context is retained on the
    /// outcome for audit (used by the hidden-information tests).
    pub capture_contexts: bool,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        AuctionConfig {
            min_increment_rate: 0.10,
            cycle_cap: 50,
            capture_contexts: false,
        }
    }
}

pub struct BidderSetup {
    pub name: String,
    pub initial_budget: Money,
    pub policy: Box<dyn BidderPolicy>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid auction configuration: {0}")]
    InvalidConfig(String),
    #[error("settle_item called before any settlement condition holds")]
    NotSettleable,
    #[error("poll_cycle called on a settled round")]
    RoundOver,
    #[error("unrecoverable policy transport failure for bidder {bidder}: {message}")]
    PolicyTransport { bidder: BidderId, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineIncidents {
    /// Illegal or failed actions converted to withdrawals.
    pub forced_withdrawals: u64,
    /// Post-round hooks that reported a recoverable failure.
    pub hook_failures: u64,
}

pub struct AuctionOutcome {
    pub log: Vec<LogLine>,
    pub states: Vec<BidderState>,
    pub settlements: Vec<Settlement>,
    pub incidents: EngineIncidents,
    /// Serialized agent-facing contexts, present when capture was enabled.
    pub captured_contexts: Vec<String>,
    /// The policy objects, returned for post-run inspection (profiles).
    pub policies: Vec<Box<dyn BidderPolicy>>,
}

pub struct Auction {
    items: Vec<Listing>,
    config: AuctionConfig,
    bidder_names: Vec<String>,
    states: Vec<BidderState>,
    policies: Vec<Box<dyn BidderPolicy>>,
    overheads: Vec<f64>,
    seq: u64,
    log_lines: Vec<LogLine>,
    incidents: EngineIncidents,
    captured: Vec<String>,
}

impl Auction {
    pub fn new(
        items: Vec<Listing>,
        bidders: Vec<BidderSetup>,
        config: AuctionConfig,
    ) -> Result<Self, EngineError> {
        if bidders.len() < 2 {
            return Err(EngineError::InvalidConfig(format!(
                "need at least 2 bidders, got {}",
                bidders.len()
            )));
        }
        if items.is_empty() {
            return Err(EngineError::InvalidConfig("no items to auction".into()));
        }
        if !(config.min_increment_rate > 0.0 && config.min_increment_rate <= 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "min_increment_rate must be in (0, 1], got {}",
                config.min_increment_rate
            )));
        }
        if config.cycle_cap == 0 {
            return Err(EngineError::InvalidConfig("cycle_cap must be positive".into()));
        }
        for (i, b) in bidders.iter().enumerate() {
            if b.initial_budget <= 0 {
                return Err(EngineError::InvalidConfig(format!(
                    "bidder {i} has non-positive budget {}",
                    b.initial_budget
                )));
            }
        }
        let mut names = Vec::new();
        let mut states = Vec::new();
        let mut policies = Vec::new();
        let mut overheads = Vec::new();
        for (i, b) in bidders.into_iter().enumerate() {
            names.push(b.name);
            states.push(BidderState::new(BidderId(i), b.initial_budget));
            overheads.push(b.policy.overhead());
            policies.push(b.policy);
        }
        Ok(Auction {
            items,
            config,
            bidder_names: names,
            states,
            policies,
            overheads,
            seq: 0,
            log_lines: Vec::new(),
            incidents: EngineIncidents::default(),
            captured: Vec::new(),
        })
    }

    pub fn bidder_count(&self) -> usize {
        self.states.len()
    }

    fn views_of_remaining(&self, from_item: usize) -> Vec<Vec<ListingView>> {
        self.overheads
            .iter()
            .map(|&ov| {
                self.items[from_item..]
                    .iter()
                    .map(|l| ListingView::of(l, ov))
                    .collect()
            })
            .collect()
    }

    fn capture<T: Serialize>(&mut self, ctx: &T) {
        if self.config.capture_contexts {
            if let Ok(text) = serde_json::to_string(ctx) {
                self.captured.push(text);
            }
        }
    }

    fn open_round(&self, item_idx: usize) -> ItemRound {
        let listing = self.items[item_idx].clone();
        let inc = min_increment(self.config.min_increment_rate, listing.starting_price);
        ItemRound {
            listing,
            min_increment: inc,
            current_high: None,
            active: (0..self.states.len()).map(BidderId).collect(),
            history: Vec::new(),
            cycle_count: 0,
            raises_in_last_cycle: 0,
        }
    }

    /// Returns the settlement condition the round currently meets, if any.
    pub fn settlement_reason(&self, round: &ItemRound) -> Option<SettleReason> {
        if round.active.is_empty() {
            return Some(SettleReason::NoBids);
        }
        if let Some((leader, _)) = round.current_high {
            if round.active.len() == 1 && round.active.contains(&leader) {
                return Some(SettleReason::LastBidderStanding);
            }
            if round.cycle_count > 0 && round.raises_in_last_cycle == 0 {
                return Some(SettleReason::NoRaise);
            }
            if round.cycle_count >= self.config.cycle_cap {
                return Some(SettleReason::CycleCap);
            }
        }
        None
    }

    fn push_event(
        &mut self,
        round: &mut ItemRound,
        bidder: BidderId,
        action: BidAction,
        annotation: Option<String>,
    ) {
        self.seq += 1;
        round.history.push(BidEvent {
            seq: self.seq,
            listing_id: round.listing.id.clone(),
            bidder_id: bidder,
            action,
            cycle: round.cycle_count,
            annotation,
        });
    }

    /// Polls every active bidder once (ascending id, skipping whoever held
    /// the high bid when the cycle started) and applies their actions.
    pub fn poll_cycle(
        &mut self,
        round: &mut ItemRound,
        remaining_views: &[Vec<ListingView>],
    ) -> Result<(), EngineError> {
        if self.settlement_reason(round).is_some() {
            return Err(EngineError::RoundOver);
        }
        let leader_at_start = round.current_high.map(|(b, _)| b);
        let order: Vec<BidderId> = round.active.iter().copied().collect();
        let mut raises = 0usize;
        for bidder in order {
            if Some(bidder) == leader_at_start {
                continue;
            }
            let budget = self.states[bidder.0].remaining_budget;
            let min_legal = round.min_legal_bid();
            let decision = {
                let views = &remaining_views[bidder.0];
                let ctx = PollContext {
                    listing: &views[0],
                    current_high: round.current_high,
                    min_increment: round.min_increment,
                    min_legal_bid: min_legal,
                    remaining_budget: budget,
                    cycle: round.cycle_count,
                    history: &round.history,
                    remaining: views,
                };
                self.capture(&ctx);
                self.policies[bidder.0].decide(&ctx)
            };
            let decision = match decision {
                Ok(d) => d,
                Err(PolicyError::Degraded(msg)) => {
                    ::log::warn!("bidder {bidder} policy degraded: {msg}");
                    self.incidents.forced_withdrawals += 1;
                    round.active.remove(&bidder);
                    self.push_event(
                        round,
                        bidder,
                        BidAction::Withdraw,
                        Some(format!("forced-withdraw: policy error: {msg}")),
                    );
                    continue;
                }
                Err(PolicyError::Fatal(message)) => {
                    return Err(EngineError::PolicyTransport { bidder, message });
                }
            };
            match decision.action {
                BidAction::Bid(amount) if amount < min_legal => {
                    self.incidents.forced_withdrawals += 1;
                    round.active.remove(&bidder);
                    self.push_event(
                        round,
                        bidder,
                        BidAction::Withdraw,
                        Some(format!(
                            "forced-withdraw: bid {amount} below minimum raise {min_legal}"
                        )),
                    );
                }
                BidAction::Bid(amount) if amount > budget => {
                    self.incidents.forced_withdrawals += 1;
                    round.active.remove(&bidder);
                    self.push_event(
                        round,
                        bidder,
                        BidAction::Withdraw,
                        Some(format!(
                            "forced-withdraw: bid {amount} over budget {budget}"
                        )),
                    );
                }
                BidAction::Bid(amount) => {
                    round.current_high = Some((bidder, amount));
                    raises += 1;
                    *self.states[bidder.0]
                        .engagement
                        .entry(round.listing.id.clone())
                        .or_insert(0) += 1;
                    self.push_event(round, bidder, BidAction::Bid(amount), decision.annotation);
                }
                BidAction::Withdraw => {
                    round.active.remove(&bidder);
                    self.push_event(round, bidder, BidAction::Withdraw, decision.annotation);
                }
            }
        }
        round.cycle_count += 1;
        round.raises_in_last_cycle = raises;
        Ok(())
    }

    /// Settles the round: pays the winner (if any), updates the ground-truth
    /// ledger, and appends the round's events plus the settlement record to
    /// the auction log.
    pub fn settle_item(&mut self, round: ItemRound) -> Result<Settlement, EngineError> {
        let reason = self.settlement_reason(&round).ok_or(EngineError::NotSettleable)?;
        let settlement = match (reason, round.current_high) {
            (SettleReason::NoBids, _) => Settlement {
                listing_id: round.listing.id.clone(),
                winner: None,
                hammer_price: None,
                passed: true,
            },
            (_, Some((winner, hammer))) => Settlement {
                listing_id: round.listing.id.clone(),
                winner: Some(winner),
                hammer_price: Some(hammer),
                passed: false,
            },
            (_, None) => return Err(EngineError::NotSettleable),
        };
        if let (Some(winner), Some(hammer)) = (settlement.winner, settlement.hammer_price) {
            let state = &mut self.states[winner.0];
            state.remaining_budget -= hammer;
            debug_assert!(state.remaining_budget >= 0);
            state.won.push((round.listing.id.clone(), hammer));
            state.true_profit += round.listing.true_value - hammer;
        }
        for event in &round.history {
            self.log_lines.push(LogLine::from_event(event));
        }
        self.log_lines.push(LogLine::from_settlement(&settlement));
        Ok(settlement)
    }

    fn fire_hooks(
        &mut self,
        settlement: &Settlement,
        history: &[BidEvent],
        settled_item_views: &[ListingView],
        remaining_views: &[Vec<ListingView>],
    ) -> Result<(), EngineError> {
        let public_won: Vec<Vec<(String, Money)>> =
            self.states.iter().map(|s| s.won.clone()).collect();
        for i in 0..self.policies.len() {
            let view = RoundSettledView {
                settlement,
                listing: &settled_item_views[i],
                history,
                remaining: &remaining_views[i],
                public_won: &public_won,
                my_budget: self.states[i].remaining_budget,
            };
            self.capture(&view);
            for (hook_name, result) in [
                ("status", self.policies[i].on_status_update(&view)),
                ("profile", self.policies[i].on_profile_update(&view)),
                ("priority", self.policies[i].on_priority_update(&view)),
            ] {
                match result {
                    Ok(()) => {}
                    Err(PolicyError::Degraded(msg)) => {
                        ::log::warn!("bidder {i} {hook_name} hook degraded: {msg}");
                        self.incidents.hook_failures += 1;
                    }
                    Err(PolicyError::Fatal(message)) => {
                        return Err(EngineError::PolicyTransport {
                            bidder: BidderId(i),
                            message,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs every item round to settlement, firing the post-round hooks in
    /// fixed order, and returns the complete log and final ledgers.
    pub fn run(mut self) -> Result<AuctionOutcome, EngineError> {
        let start_views = self.views_of_remaining(0);
        for i in 0..self.policies.len() {
            let view = AuctionStartView {
                my_id: BidderId(i),
                bidder_names: &self.bidder_names,
                items: &start_views[i],
                my_budget: self.states[i].remaining_budget,
                min_increment_rate: self.config.min_increment_rate,
            };
            if self.config.capture_contexts {
                if let Ok(text) = serde_json::to_string(&view) {
                    self.captured.push(text);
                }
            }
            match self.policies[i].on_auction_start(&view) {
                Ok(()) => {}
                Err(PolicyError::Degraded(msg)) => {
                    ::log::warn!("bidder {i} start hook degraded: {msg}");
                    self.incidents.hook_failures += 1;
                }
                Err(PolicyError::Fatal(message)) => {
                    return Err(EngineError::PolicyTransport {
                        bidder: BidderId(i),
                        message,
                    });
                }
            }
        }

        let mut settlements = Vec::new();
        for item_idx in 0..self.items.len() {
            let remaining_views = self.views_of_remaining(item_idx);
            let mut round = self.open_round(item_idx);
            while self.settlement_reason(&round).is_none() {
                self.poll_cycle(&mut round, &remaining_views)?;
            }
            let history = round.history.clone();
            let settled_views: Vec<ListingView> = remaining_views
                .iter()
                .map(|views| views[0].clone())
                .collect();
            let settlement = self.settle_item(round)?;
            let next_views = self.views_of_remaining(item_idx + 1);
            self.fire_hooks(&settlement, &history, &settled_views, &next_views)?;
            settlements.push(settlement);
        }
        Ok(AuctionOutcome {
            log: self.log_lines,
            states: self.states,
            settlements,
            incidents: self.incidents,
            captured_contexts: self.captured,
            policies: self.policies,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Listing;

    fn listing(id: &str, start: Money, value: Money) -> Listing {
        Listing {
            id: id.into(),
            name: format!("Home {id}"),
            description: "test".into(),
            starting_price: start,
            true_value: value,
            matched_personas: BTreeSet::new(),
        }
    }

    /// Policy driven by a closure; enough for engine-level tests.
    struct FnPolicy<F>(F);
    impl<F> BidderPolicy for FnPolicy<F>
    where
        F: FnMut(&PollContext<'_>) -> BidAction + Send,
    {
        fn decide(&mut self, ctx: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
            Ok((self.0)(ctx).into())
        }
    }

    fn limit_policy(cap: Money) -> Box<dyn BidderPolicy> {
        Box::new(FnPolicy(move |ctx: &PollContext<'_>| {
            let next = ctx.min_legal_bid;
            if next <= cap && next <= ctx.remaining_budget {
                BidAction::Bid(next)
            } else {
                BidAction::Withdraw
            }
        }))
    }

    fn setup(name: &str, budget: Money, policy: Box<dyn BidderPolicy>) -> BidderSetup {
        BidderSetup {
            name: name.into(),
            initial_budget: budget,
            policy,
        }
    }

    #[test]
    fn perceived_value_matches_worked_examples() {
        let l = listing("a", 200, 500);
        assert_eq!(perceived_value(&l, 0.10), 550);
        assert_eq!(perceived_value(&l, 0.0), 500);
        let odd = listing("b", 100, 333);
        assert_eq!(perceived_value(&odd, 0.10), 366);
    }

    #[test]
    fn max_profit_is_value_minus_start() {
        assert_eq!(max_profit(&listing("a", 200, 500)), 300);
        assert_eq!(max_profit(&listing("b", 500, 500)), 0);
    }

    #[test]
    fn min_increment_follows_rate() {
        assert_eq!(min_increment(0.10, 180_000), 18_000);
    }

    #[test]
    fn new_auction_rejects_single_bidder() {
        let err = Auction::new(
            vec![listing("a", 100, 200)],
            vec![setup("Solo", 1000, limit_policy(150))],
            AuctionConfig::default(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, EngineError::InvalidConfig(_)));
    }

    #[test]
    fn new_auction_rejects_zero_budget() {
        let err = Auction::new(
            vec![listing("a", 100, 200)],
            vec![
                setup("A", 0, limit_policy(150)),
                setup("B", 100, limit_policy(150)),
            ],
            AuctionConfig::default(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, EngineError::InvalidConfig(_)));
    }

    #[test]
    fn below_minimum_raise_becomes_forced_withdraw() {
        // One bidder bids the start, the other raises by less than the
        // minimum increment and is forced out.
        let items = vec![listing("a", 100_000, 300_000)];
        let aggressive = Box::new(FnPolicy(|ctx: &PollContext<'_>| match ctx.current_high {
            None => BidAction::Bid(100_000),
            Some((_, h)) => BidAction::Bid(h + 1), // always below the 10_000 increment
        }));
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 1_000_000, limit_policy(100_000)),
                setup("B", 1_000_000, aggressive),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        assert_eq!(outcome.incidents.forced_withdrawals, 1);
        let forced = outcome
            .log
            .iter()
            .filter_map(|l| l.as_event())
            .find(|e| e.annotation.is_some())
            .unwrap();
        assert!(forced
            .annotation
            .as_deref()
            .unwrap()
            .contains("below minimum raise"));
        assert_eq!(outcome.settlements[0].winner, Some(BidderId(0)));
        assert_eq!(outcome.settlements[0].hammer_price, Some(100_000));
    }

    #[test]
    fn bid_at_exact_budget_is_accepted() {
        let items = vec![listing("a", 478_000, 600_000)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 478_000, limit_policy(478_000)),
                setup("B", 100, limit_policy(0)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        assert_eq!(outcome.settlements[0].hammer_price, Some(478_000));
        assert_eq!(outcome.states[0].remaining_budget, 0);
    }

    #[test]
    fn passed_item_changes_no_budget() {
        let items = vec![listing("a", 100, 200)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 1000, limit_policy(0)),
                setup("B", 1000, limit_policy(0)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        assert!(outcome.settlements[0].passed);
        assert_eq!(outcome.settlements[0].winner, None);
        for s in &outcome.states {
            assert_eq!(s.remaining_budget, s.initial_budget);
            assert_eq!(s.true_profit, 0);
        }
    }

    #[test]
    fn winner_profit_is_value_minus_hammer() {
        let items = vec![listing("a", 200, 500)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 10_000, limit_policy(460)),
                setup("B", 10_000, limit_policy(230)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        let s = &outcome.settlements[0];
        let winner = s.winner.unwrap();
        let hammer = s.hammer_price.unwrap();
        assert_eq!(outcome.states[winner.0].true_profit, 500 - hammer);
        for (i, st) in outcome.states.iter().enumerate() {
            if BidderId(i) != winner {
                assert_eq!(st.true_profit, 0);
                assert_eq!(st.remaining_budget, st.initial_budget);
            }
        }
    }

    #[test]
    fn budget_conservation_over_multiple_items() {
        let items = vec![
            listing("a", 100, 260),
            listing("b", 150, 300),
            listing("c", 120, 280),
        ];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 500, limit_policy(200)),
                setup("B", 500, limit_policy(180)),
                setup("C", 500, limit_policy(140)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        for st in &outcome.states {
            let paid: Money = st.won.iter().map(|(_, h)| h).sum();
            assert_eq!(st.initial_budget - st.remaining_budget, paid);
            assert!(st.remaining_budget >= 0);
        }
    }

    #[test]
    fn accepted_bids_strictly_increase_with_min_raise() {
        let items = vec![listing("a", 100, 10_000)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 5_000, limit_policy(800)),
                setup("B", 5_000, limit_policy(900)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        let mut last: Option<Money> = None;
        for event in outcome.log.iter().filter_map(|l| l.as_event()) {
            if let BidAction::Bid(amount) = event.action {
                if let Some(prev) = last {
                    assert!(amount >= prev + 10, "raise below minimum increment");
                }
                last = Some(amount);
            }
        }
        assert!(last.is_some());
    }

    #[test]
    fn engagement_counts_accepted_raises_only() {
        let items = vec![listing("a", 100, 10_000)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 5_000, limit_policy(500)),
                setup("B", 5_000, limit_policy(320)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        for st in &outcome.states {
            let bids = outcome
                .log
                .iter()
                .filter_map(|l| l.as_event())
                .filter(|e| e.bidder_id == st.bidder_id && matches!(e.action, BidAction::Bid(_)))
                .count() as u64;
            assert_eq!(st.engagement.get("a").copied().unwrap_or(0), bids);
        }
    }

    #[test]
    fn cycle_cap_awards_current_high_bidder() {
        // Two bidders that always raise; only the cap terminates the round.
        let items = vec![listing("a", 10, 1_000_000)];
        let mk = || {
            Box::new(FnPolicy(|ctx: &PollContext<'_>| {
                if ctx.min_legal_bid <= ctx.remaining_budget {
                    BidAction::Bid(ctx.min_legal_bid)
                } else {
                    BidAction::Withdraw
                }
            })) as Box<dyn BidderPolicy>
        };
        let config = AuctionConfig {
            cycle_cap: 5,
            ..AuctionConfig::default()
        };
        let outcome = Auction::new(
            items,
            vec![setup("A", 10_000_000, mk()), setup("B", 10_000_000, mk())],
            config,
        )
        .unwrap()
        .run()
        .unwrap();
        let s = &outcome.settlements[0];
        assert!(s.winner.is_some());
        let cycles = outcome
            .log
            .iter()
            .filter_map(|l| l.as_event())
            .map(|e| e.cycle)
            .max()
            .unwrap();
        assert!(cycles <= 4, "round ran past the cycle cap");
    }

    #[test]
    fn hooks_fire_in_status_profile_priority_order() {
        use std::sync::{Arc, Mutex};
        struct Recorder {
            calls: Arc<Mutex<Vec<&'static str>>>,
        }
        impl BidderPolicy for Recorder {
            fn decide(&mut self, _: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
                Ok(BidAction::Withdraw.into())
            }
            fn on_status_update(&mut self, _: &RoundSettledView<'_>) -> Result<(), PolicyError> {
                self.calls.lock().unwrap().push("status");
                Ok(())
            }
            fn on_profile_update(&mut self, _: &RoundSettledView<'_>) -> Result<(), PolicyError> {
                self.calls.lock().unwrap().push("profile");
                Ok(())
            }
            fn on_priority_update(&mut self, _: &RoundSettledView<'_>) -> Result<(), PolicyError> {
                self.calls.lock().unwrap().push("priority");
                Ok(())
            }
        }
        let calls = Arc::new(Mutex::new(Vec::new()));
        let items = vec![listing("a", 100, 200)];
        Auction::new(
            items,
            vec![
                setup("A", 1000, Box::new(Recorder { calls: calls.clone() })),
                setup("B", 1000, Box::new(Recorder { calls: calls.clone() })),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        let calls = calls.lock().unwrap();
        assert_eq!(
            calls.as_slice(),
            ["status", "profile", "priority", "status", "profile", "priority"]
        );
    }

    #[test]
    fn degraded_policy_forces_withdraw_and_continues() {
        struct Flaky;
        impl BidderPolicy for Flaky {
            fn decide(&mut self, _: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
                Err(PolicyError::Degraded("endpoint unreachable".into()))
            }
        }
        let items = vec![listing("a", 100, 300)];
        let outcome = Auction::new(
            items,
            vec![
                setup("A", 1000, limit_policy(150)),
                setup("B", 1000, Box::new(Flaky)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .unwrap();
        assert_eq!(outcome.settlements[0].winner, Some(BidderId(0)));
        assert_eq!(outcome.incidents.forced_withdrawals, 1);
    }

    #[test]
    fn fatal_policy_error_aborts_run() {
        struct Dead;
        impl BidderPolicy for Dead {
            fn decide(&mut self, _: &PollContext<'_>) -> Result<PolicyDecision, PolicyError> {
                Err(PolicyError::Fatal("connection refused".into()))
            }
        }
        let items = vec![listing("a", 100, 300)];
        let err = Auction::new(
            items,
            vec![
                setup("A", 1000, limit_policy(150)),
                setup("B", 1000, Box::new(Dead)),
            ],
            AuctionConfig::default(),
        )
        .unwrap()
        .run()
        .err()
        .unwrap();
        assert!(matches!(err, EngineError::PolicyTransport { .. }));
    }
}
