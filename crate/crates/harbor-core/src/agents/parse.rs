//! Parsers for LLM replies.
//!
//! The prompts ask for free-form reasoning followed by a machine-readable
//! tail, so JSON extraction always takes the last parseable JSON object in
//! the reply, and phrase extraction takes the last occurrence.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::agents::StatusBoard;
use crate::catalog::Money;
use crate::engine::{BidAction, ListingView};
use crate::planning::PriorityList;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in reply")]
    NoJson,
    #[error("reply JSON has wrong shape: {0}")]
    WrongShape(String),
    #[error("priority reply missing item {0}")]
    MissingItem(String),
    #[error("priority level out of range for {0}")]
    BadLevel(String),
    #[error("no decision phrase found in reply")]
    NoDecision,
}

/// Returns the last substring of `text` that parses as a JSON object.
pub fn last_json_object(text: &str) -> Option<serde_json::Value> {
    let bytes = text.as_bytes();
    let mut best: Option<serde_json::Value> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut depth = 0usize;
            let mut in_str = false;
            let mut escaped = false;
            for (j, &b) in bytes.iter().enumerate().skip(i) {
                if in_str {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == b'"' {
                        in_str = false;
                    }
                    continue;
                }
                match b {
                    b'"' => in_str = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            if let Ok(v) =
                                serde_json::from_slice::<serde_json::Value>(&bytes[i..=j])
                            {
                                if v.is_object() {
                                    best = Some(v);
                                }
                            }
                            i = j;
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
        i += 1;
    }
    best
}

fn as_money(v: &serde_json::Value) -> Option<Money> {
    if let Some(n) = v.as_i64() {
        return Some(n);
    }
    v.as_f64().map(|f| f.round() as Money)
}

/// Maps a planning reply (item name -> level) onto the remaining items.
/// Every remaining item must be present with a level in 1..=3; keys naming
/// unknown items are ignored as stale.
pub fn parse_priority_reply(
    reply: &str,
    remaining: &[ListingView],
) -> Result<PriorityList, ParseError> {
    let json = last_json_object(reply).ok_or(ParseError::NoJson)?;
    let obj = json
        .as_object()
        .ok_or_else(|| ParseError::WrongShape("expected object".into()))?;
    let mut list = PriorityList::new();
    for item in remaining {
        let value = obj
            .get(&item.name)
            .ok_or_else(|| ParseError::MissingItem(item.name.clone()))?;
        let level = value
            .as_f64()
            .ok_or_else(|| ParseError::BadLevel(item.name.clone()))?;
        if level.fract() != 0.0 || !(1.0..=3.0).contains(&level) {
            return Err(ParseError::BadLevel(item.name.clone()));
        }
        list.set(&item.id, level as u8);
    }
    Ok(list)
}

static BID_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"I bid \$?([0-9][0-9,]*)\s*!"#).expect("valid regex"));
static OUT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"I'm out!").expect("valid regex"));

/// Extracts the final bid-or-withdraw decision. When a reply contains both
/// phrases, the last occurrence wins.
pub fn parse_bid_reply(reply: &str) -> Result<BidAction, ParseError> {
    let last_bid = BID_RE.captures_iter(reply).last().map(|c| {
        let pos = c.get(0).map(|m| m.start()).unwrap_or(0);
        let digits: String = c[1].chars().filter(|ch| ch.is_ascii_digit()).collect();
        (pos, digits)
    });
    let last_out = OUT_RE.find_iter(reply).last().map(|m| m.start());
    match (last_bid, last_out) {
        (Some((bid_pos, digits)), Some(out_pos)) => {
            if out_pos > bid_pos {
                Ok(BidAction::Withdraw)
            } else {
                digits
                    .parse::<Money>()
                    .map(BidAction::Bid)
                    .map_err(|_| ParseError::NoDecision)
            }
        }
        (Some((_, digits)), None) => digits
            .parse::<Money>()
            .map(BidAction::Bid)
            .map_err(|_| ParseError::NoDecision),
        (None, Some(_)) => Ok(BidAction::Withdraw),
        (None, None) => Err(ParseError::NoDecision),
    }
}

/// Parses a profiling reply for `target`: the last JSON object must contain
/// `target` mapping every persona name to a numeric weight (exactly k keys).
/// Weights are clamped to [-1, 1]. Returns `None` when all weights are zero,
/// the no-information marker.
pub fn parse_profile_reply(
    reply: &str,
    target: &str,
    persona_names: &[String],
) -> Result<Option<Vec<f64>>, ParseError> {
    let json = last_json_object(reply).ok_or(ParseError::NoJson)?;
    let inner = json
        .get(target)
        .and_then(|v| v.as_object())
        .ok_or_else(|| ParseError::WrongShape(format!("no entry for {target}")))?;
    if inner.len() != persona_names.len() {
        return Err(ParseError::WrongShape(format!(
            "expected {} persona keys, got {}",
            persona_names.len(),
            inner.len()
        )));
    }
    let mut weights = Vec::with_capacity(persona_names.len());
    for name in persona_names {
        let w = inner
            .get(name)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| ParseError::WrongShape(format!("missing weight for {name}")))?;
        weights.push(w.clamp(-1.0, 1.0));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Ok(None);
    }
    Ok(Some(weights))
}

/// Parses a status-update reply into a board. Numeric values may arrive as
/// floats; they are rounded to whole currency units.
pub fn parse_status_reply(reply: &str) -> Result<StatusBoard, ParseError> {
    let json = last_json_object(reply).ok_or(ParseError::NoJson)?;
    let obj = json
        .as_object()
        .ok_or_else(|| ParseError::WrongShape("expected object".into()))?;
    let remaining_budget = obj
        .get("remaining_budget")
        .and_then(as_money)
        .ok_or_else(|| ParseError::WrongShape("missing remaining_budget".into()))?;
    let mut total_profits = BTreeMap::new();
    if let Some(profits) = obj.get("total_profits").and_then(|v| v.as_object()) {
        for (name, v) in profits {
            let amount = as_money(v)
                .ok_or_else(|| ParseError::WrongShape(format!("bad profit for {name}")))?;
            total_profits.insert(name.clone(), amount);
        }
    }
    let mut winning_bids = BTreeMap::new();
    if let Some(wins) = obj.get("winning_bids").and_then(|v| v.as_object()) {
        for (name, items) in wins {
            let items = items
                .as_object()
                .ok_or_else(|| ParseError::WrongShape(format!("bad winning_bids for {name}")))?;
            let mut inner = BTreeMap::new();
            for (item, v) in items {
                let amount = as_money(v)
                    .ok_or_else(|| ParseError::WrongShape(format!("bad bid for {item}")))?;
                inner.insert(item.clone(), amount);
            }
            winning_bids.insert(name.clone(), inner);
        }
    }
    Ok(StatusBoard {
        remaining_budget,
        total_profits,
        winning_bids,
    })
}
