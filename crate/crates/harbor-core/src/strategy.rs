//! Bidding strategy selection.
//!
//! `expert_act` is the deterministic six-rule selector: rules A/B/C bid,
//! D/E/F withdraw. `llm_strategy` delegates the choice to a chat model and
//! parses the chosen letter; `remote_act` asks a remote reasoning policy for
//! a bid/withdraw recommendation. All three produce a `StrategyAction` whose
//! rule and decision are consistent by construction.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::transport::{
    send_with_retries, ChatMessage, ChatTransport, PolicyEndpoint, RemoteRequest, RETRY_BUDGET,
};
use crate::agents::StatusBoard;
use crate::catalog::Money;
use crate::engine::{BidAction, BidEvent, BidderId, ListingView};
use crate::planning::PriorityList;
use crate::profiling::ProfileKnowledge;

/// Rule E: quit when the perceived margin at the next legal bid is at or
/// below this amount. The bound is inclusive.
pub const MARGIN_FLOOR: Money = 300;

/// Rule F: with this many accepted raises on an item, any bidder that does
/// not hold it at top priority walks away from the war.
pub const WAR_RAISE_LIMIT: usize = 8;

/// Rule B fires when some rival's profile weight on a persona matching the
/// current item is at least this.
pub const RIVAL_INTEREST_THRESHOLD: f64 = 0.5;

/// Rule B never bids past this fraction of the perceived value.
pub const DRAIN_VALUE_CAP: f64 = 0.9;

/// Rule B keeps at least twice the cheapest remaining top-priority item's
/// starting price in reserve.
pub const RESERVE_MULTIPLIER: Money = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyRule {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl StrategyRule {
    pub fn is_bid(self) -> bool {
        matches!(self, StrategyRule::A | StrategyRule::B | StrategyRule::C)
    }

    pub fn letter(self) -> char {
        match self {
            StrategyRule::A => 'A',
            StrategyRule::B => 'B',
            StrategyRule::C => 'C',
            StrategyRule::D => 'D',
            StrategyRule::E => 'E',
            StrategyRule::F => 'F',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'A' => Some(StrategyRule::A),
            'B' => Some(StrategyRule::B),
            'C' => Some(StrategyRule::C),
            'D' => Some(StrategyRule::D),
            'E' => Some(StrategyRule::E),
            'F' => Some(StrategyRule::F),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyAction {
    pub rule: StrategyRule,
    pub decision: BidAction,
    pub rationale: String,
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("no strategy letter found in reply after retries")]
    Unparseable,
    #[error("strategy transport failure: {0}")]
    Transport(String),
}

/// Everything a strategy call reads. Listing views carry perceived values
/// only; no true value can appear here.
#[derive(Debug, Serialize)]
pub struct BidContext<'a> {
    pub listing: &'a ListingView,
    pub current_high: Option<(BidderId, Money)>,
    pub min_raise: Money,
    pub my_budget: Money,
    pub statuses: &'a StatusBoard,
    pub priorities: &'a PriorityList,
    pub profiles: &'a ProfileKnowledge,
    pub history: &'a [BidEvent],
    /// Items not yet settled, presentation order, current item included.
    pub remaining: &'a [ListingView],
}

impl BidContext<'_> {
    pub fn next_legal_bid(&self) -> Money {
        match self.current_high {
            Some((_, high)) => high + self.min_raise,
            None => self.listing.starting_price,
        }
    }

    fn my_level(&self) -> u8 {
        self.priorities.level(&self.listing.id).unwrap_or(1)
    }

    /// Starting price of the cheapest remaining top-priority item other than
    /// the current one.
    fn cheapest_top_priority_start(&self) -> Option<Money> {
        self.remaining
            .iter()
            .filter(|l| l.id != self.listing.id && self.priorities.level(&l.id) == Some(3))
            .map(|l| l.starting_price)
            .min()
    }

    fn accepted_raises(&self) -> usize {
        self.history
            .iter()
            .filter(|e| matches!(e.action, BidAction::Bid(_)))
            .count()
    }

    /// True when some rival's profile puts weight at or above the interest
    /// threshold on a persona matching the current item.
    fn rival_wants_this(&self) -> bool {
        self.profiles.profiles.values().any(|p| {
            self.listing
                .matched_personas
                .iter()
                .any(|pid| p.weights.get(pid.0).copied().unwrap_or(0.0) >= RIVAL_INTEREST_THRESHOLD)
        })
    }
}

/// Deterministic rule selection. Always returns; an unaffordable next bid
/// resolves to a withdrawal via rule F.
pub fn expert_act(ctx: &BidContext<'_>) -> StrategyAction {
    let next = ctx.next_legal_bid();
    let margin = ctx.listing.perceived_value - next;
    let level = ctx.my_level();

    if margin <= MARGIN_FLOOR {
        return StrategyAction {
            rule: StrategyRule::E,
            decision: BidAction::Withdraw,
            rationale: format!(
                "the profit margin is no longer attractive (margin {margin} at the next bid)"
            ),
        };
    }
    if level == 1 {
        if let Some(reserve_item) = ctx
            .remaining
            .iter()
            .find(|l| {
                l.id != ctx.listing.id
                    && ctx.priorities.level(&l.id) == Some(3)
                    && l.starting_price > ctx.my_budget - next
            })
        {
            return StrategyAction {
                rule: StrategyRule::D,
                decision: BidAction::Withdraw,
                rationale: format!(
                    "conserving budget for the higher-priority item {}",
                    reserve_item.name
                ),
            };
        }
    }
    if next > ctx.my_budget {
        return StrategyAction {
            rule: StrategyRule::F,
            decision: BidAction::Withdraw,
            rationale: format!("the next legal bid {next} exceeds my budget {}", ctx.my_budget),
        };
    }
    if ctx.accepted_raises() >= WAR_RAISE_LIMIT && level < 3 {
        return StrategyAction {
            rule: StrategyRule::F,
            decision: BidAction::Withdraw,
            rationale: "avoiding a costly bidding war on a non-critical item".into(),
        };
    }
    if level == 3 {
        return StrategyAction {
            rule: StrategyRule::A,
            decision: BidAction::Bid(next),
            rationale: "this item is a top priority for me".into(),
        };
    }
    if level >= 2 && ctx.rival_wants_this() {
        let reserve = ctx
            .cheapest_top_priority_start()
            .map(|s| s * RESERVE_MULTIPLIER)
            .unwrap_or(0);
        let cap = (DRAIN_VALUE_CAP * ctx.listing.perceived_value as f64).floor() as Money;
        if next <= cap && ctx.my_budget - next >= reserve {
            return StrategyAction {
                rule: StrategyRule::B,
                decision: BidAction::Bid(next),
                rationale: "a rival highly values this item; raising to drain their budget".into(),
            };
        }
    }
    if level == 2 {
        return StrategyAction {
            rule: StrategyRule::C,
            decision: BidAction::Bid(next),
            rationale: "my budget allows this bid without compromising future rounds".into(),
        };
    }
    StrategyAction {
        rule: StrategyRule::D,
        decision: BidAction::Withdraw,
        rationale: "conserving budget for higher-priority items".into(),
    }
}

static CHOSE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"I chose to \W{0,3}([A-F])\b").expect("valid regex"));

/// Extracts the last `I chose to <letter>` occurrence from a strategy reply.
pub fn parse_strategy_letter(reply: &str) -> Option<StrategyRule> {
    CHOSE_RE
        .captures_iter(reply)
        .last()
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().chars().next())
        .and_then(StrategyRule::from_letter)
}

fn action_for_rule(rule: StrategyRule, ctx: &BidContext<'_>) -> BidAction {
    if rule.is_bid() {
        BidAction::Bid(ctx.next_legal_bid())
    } else {
        BidAction::Withdraw
    }
}

/// Asks a chat model to pick one of the six rules. The rendered prompt is
/// appended to `thread`; the model's reply becomes the rationale. Decision
/// follows the rule letter regardless of any other text in the reply.
pub fn llm_strategy(
    ctx: &BidContext<'_>,
    prompt: String,
    thread: &mut Vec<ChatMessage>,
    transport: &dyn ChatTransport,
) -> Result<StrategyAction, StrategyError> {
    thread.push(ChatMessage::user(prompt));
    let mut last_err = StrategyError::Unparseable;
    for _ in 0..=RETRY_BUDGET {
        match send_with_retries(transport, thread, 0) {
            Ok(reply) => {
                if let Some(rule) = parse_strategy_letter(&reply) {
                    thread.push(ChatMessage::assistant(reply.clone()));
                    return Ok(StrategyAction {
                        rule,
                        decision: action_for_rule(rule, ctx),
                        rationale: reply,
                    });
                }
                last_err = StrategyError::Unparseable;
            }
            Err(e) => last_err = StrategyError::Transport(e.to_string()),
        }
    }
    // Leave the thread consistent even though the exchange failed.
    thread.pop();
    Err(last_err)
}

static RECOMMEND_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"I recommend to (bid|withdraw)").expect("valid regex"));

/// Extracts the last bid/withdraw recommendation phrase.
pub fn parse_recommendation(reply: &str) -> Option<bool> {
    RECOMMEND_RE
        .captures_iter(reply)
        .last()
        .map(|c| &c[1] == "bid")
}

/// Asks a remote reasoning policy for a recommendation. When the budget
/// cannot cover the next legal bid the withdrawal is immediate and the
/// endpoint is never contacted. Failures after retries resolve to a
/// withdrawal; the caller records the degradation.
pub fn remote_act(
    ctx: &BidContext<'_>,
    request: &RemoteRequest,
    endpoint: &dyn PolicyEndpoint,
) -> Result<StrategyAction, StrategyError> {
    let next = ctx.next_legal_bid();
    if ctx.my_budget < next {
        return Ok(StrategyAction {
            rule: StrategyRule::F,
            decision: BidAction::Withdraw,
            rationale: "budget below the current bid plus minimum increase".into(),
        });
    }
    let mut last_err = String::new();
    for _ in 0..=RETRY_BUDGET {
        match endpoint.recommend(request) {
            Ok(reply) => match parse_recommendation(&reply) {
                Some(true) => {
                    return Ok(StrategyAction {
                        rule: StrategyRule::C,
                        decision: BidAction::Bid(next),
                        rationale: reply,
                    })
                }
                Some(false) => {
                    return Ok(StrategyAction {
                        rule: StrategyRule::D,
                        decision: BidAction::Withdraw,
                        rationale: reply,
                    })
                }
                None => last_err = "no recommendation phrase in reply".into(),
            },
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(StrategyError::Transport(last_err))
}

/// Fetches the agent's second-order perception report: how rivals likely
/// perceive it. Returns an empty string when disabled or on transport
/// failure, in which case strategy proceeds first-order.
pub fn second_order_context(
    enabled: bool,
    prompt: String,
    thread: &mut Vec<ChatMessage>,
    transport: &dyn ChatTransport,
) -> String {
    if !enabled {
        return String::new();
    }
    thread.push(ChatMessage::user(prompt));
    match send_with_retries(transport, thread, RETRY_BUDGET) {
        Ok(reply) => {
            thread.push(ChatMessage::assistant(reply.clone()));
            reply
        }
        Err(e) => {
            log::warn!("second-order context failed, proceeding first-order: {e}");
            thread.pop();
            String::new()
        }
    }
}

/// Renders profiling knowledge as natural language: per rival, the two most
/// and two least preferred persona categories by weight (ties broken by
/// persona id).
pub fn render_profile_text(
    profiles: &ProfileKnowledge,
    persona_names: &[String],
    bidder_names: &[String],
) -> String {
    let mut lines = Vec::new();
    for (rival, profile) in &profiles.profiles {
        let name = bidder_names
            .get(rival.0)
            .cloned()
            .unwrap_or_else(|| format!("Bidder {rival}"));
        if profile.weights.iter().all(|w| *w == 0.0) {
            lines.push(format!("{name}: no clear preference observed."));
            continue;
        }
        let mut ranked: Vec<(usize, f64)> = profile.weights.iter().copied().enumerate().collect();
        ranked.sort_by(|(ia, wa), (ib, wb)| {
            wb.partial_cmp(wa).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        });
        let take = ranked.len().min(2);
        let top: Vec<&str> = ranked[..take]
            .iter()
            .map(|(i, _)| persona_names.get(*i).map(String::as_str).unwrap_or("?"))
            .collect();
        let mut bottom_ranked = ranked.clone();
        bottom_ranked.sort_by(|(ia, wa), (ib, wb)| {
            wa.partial_cmp(wb).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        });
        let bottom: Vec<&str> = bottom_ranked[..take]
            .iter()
            .map(|(i, _)| persona_names.get(*i).map(String::as_str).unwrap_or("?"))
            .collect();
        lines.push(format!(
            "{name} tends to bid on properties that are {}, and tends to avoid {}.",
            top.join(", "),
            bottom.join(", ")
        ));
    }
    if lines.is_empty() {
        "No rivals have been profiled yet.".to_string()
    } else {
        lines.join("\n")
    }
}
