//! Auction event log: JSON Lines serialization and replay verification.
//!
//! One event per line. Bid/withdraw lines carry
//! `{seq, listing_id, bidder_id, action, amount?, cycle, annotation?}`;
//! settlement lines carry `{listing_id, winner?, hammer?, passed}`. This
//! format is the replay and metrics input contract; field names are fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{min_increment, BidAction, BidEvent, BidderId, BidderState, Settlement};
use crate::catalog::{Listing, Money};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLine {
    pub seq: u64,
    pub listing_id: String,
    pub bidder_id: usize,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amount: Option<Money>,
    pub cycle: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementLine {
    pub listing_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hammer: Option<Money>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogLine {
    Event(EventLine),
    Settle(SettlementLine),
}

impl LogLine {
    pub fn from_event(event: &BidEvent) -> Self {
        let (action, amount) = match event.action {
            BidAction::Bid(amount) => ("bid".to_string(), Some(amount)),
            BidAction::Withdraw => ("withdraw".to_string(), None),
        };
        LogLine::Event(EventLine {
            seq: event.seq,
            listing_id: event.listing_id.clone(),
            bidder_id: event.bidder_id.0,
            action,
            amount,
            cycle: event.cycle,
            annotation: event.annotation.clone(),
        })
    }

    pub fn from_settlement(settlement: &Settlement) -> Self {
        LogLine::Settle(SettlementLine {
            listing_id: settlement.listing_id.clone(),
            winner: settlement.winner.map(|b| b.0),
            hammer: settlement.hammer_price,
            passed: settlement.passed,
        })
    }

    pub fn as_event(&self) -> Option<BidEvent> {
        match self {
            LogLine::Event(line) => {
                let action = match line.action.as_str() {
                    "bid" => BidAction::Bid(line.amount.unwrap_or(0)),
                    _ => BidAction::Withdraw,
                };
                Some(BidEvent {
                    seq: line.seq,
                    listing_id: line.listing_id.clone(),
                    bidder_id: BidderId(line.bidder_id),
                    action,
                    cycle: line.cycle,
                    annotation: line.annotation.clone(),
                })
            }
            LogLine::Settle(_) => None,
        }
    }

    pub fn as_settlement(&self) -> Option<Settlement> {
        match self {
            LogLine::Settle(line) => Some(Settlement {
                listing_id: line.listing_id.clone(),
                winner: line.winner.map(BidderId),
                hammer_price: line.hammer,
                passed: line.passed,
            }),
            LogLine::Event(_) => None,
        }
    }
}

pub fn to_jsonl(lines: &[LogLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("corrupt log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unexpected end at seq {after_seq}")]
    UnexpectedEnd { after_seq: u64 },
    #[error("divergence at seq {seq} ({listing_id}): {message}")]
    Divergence {
        seq: u64,
        listing_id: String,
        message: String,
    },
    #[error("log references unknown listing {0}")]
    UnknownListing(String),
    #[error("log references unknown bidder {0}")]
    UnknownBidder(usize),
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LogLine>, ReplayError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: LogLine = serde_json::from_str(raw).map_err(|e| ReplayError::Corrupt {
            line: idx + 1,
            message: e.to_string(),
        })?;
        lines.push(line);
    }
    Ok(lines)
}

#[derive(Debug)]
pub struct ReplayReport {
    pub states: Vec<BidderState>,
    pub settlements: Vec<Settlement>,
    pub items_settled: usize,
}

/// Re-derives final bidder states from the event stream, checking every
/// engine rule on the way (presentation order, monotone raises at the
/// minimum increment, budgets, permanence of withdrawals), and compares the
/// derived outcome of each item against its recorded settlement line.
pub fn verify_log(
    lines: &[LogLine],
    items: &[Listing],
    initial_budgets: &[Money],
    min_increment_rate: f64,
) -> Result<ReplayReport, ReplayError> {
    let mut states: Vec<BidderState> = initial_budgets
        .iter()
        .enumerate()
        .map(|(i, b)| BidderState {
            bidder_id: BidderId(i),
            initial_budget: *b,
            remaining_budget: *b,
            won: Vec::new(),
            true_profit: 0,
            engagement: Default::default(),
        })
        .collect();
    let mut settlements: Vec<Settlement> = Vec::new();
    let mut item_idx = 0usize;
    let mut last_seq = 0u64;
    let mut high: Option<(usize, Money)> = None;
    let mut withdrawn: std::collections::BTreeSet<usize> = Default::default();
    let mut had_bid = false;

    for line in lines {
        match line {
            LogLine::Event(ev) => {
                let listing = items.get(item_idx).ok_or_else(|| ReplayError::Divergence {
                    seq: ev.seq,
                    listing_id: ev.listing_id.clone(),
                    message: "events after all items settled".into(),
                })?;
                if ev.listing_id != listing.id {
                    return Err(ReplayError::Divergence {
                        seq: ev.seq,
                        listing_id: ev.listing_id.clone(),
                        message: format!(
                            "event out of presentation order: expected item {}",
                            listing.id
                        ),
                    });
                }
                if ev.seq <= last_seq {
                    return Err(ReplayError::Divergence {
                        seq: ev.seq,
                        listing_id: ev.listing_id.clone(),
                        message: format!("seq not strictly increasing after {last_seq}"),
                    });
                }
                last_seq = ev.seq;
                if ev.bidder_id >= states.len() {
                    return Err(ReplayError::UnknownBidder(ev.bidder_id));
                }
                if withdrawn.contains(&ev.bidder_id) {
                    return Err(ReplayError::Divergence {
                        seq: ev.seq,
                        listing_id: ev.listing_id.clone(),
                        message: format!("bidder {} acted after withdrawing", ev.bidder_id),
                    });
                }
                match ev.action.as_str() {
                    "bid" => {
                        let amount = ev.amount.ok_or_else(|| ReplayError::Divergence {
                            seq: ev.seq,
                            listing_id: ev.listing_id.clone(),
                            message: "bid event without amount".into(),
                        })?;
                        let inc = min_increment(min_increment_rate, listing.starting_price);
                        let min_legal = match high {
                            Some((_, h)) => h + inc,
                            None => listing.starting_price,
                        };
                        if amount < min_legal {
                            return Err(ReplayError::Divergence {
                                seq: ev.seq,
                                listing_id: ev.listing_id.clone(),
                                message: format!(
                                    "accepted bid {amount} below minimum legal {min_legal}"
                                ),
                            });
                        }
                        if amount > states[ev.bidder_id].remaining_budget {
                            return Err(ReplayError::Divergence {
                                seq: ev.seq,
                                listing_id: ev.listing_id.clone(),
                                message: format!(
                                    "accepted bid {amount} over budget {}",
                                    states[ev.bidder_id].remaining_budget
                                ),
                            });
                        }
                        high = Some((ev.bidder_id, amount));
                        had_bid = true;
                        *states[ev.bidder_id]
                            .engagement
                            .entry(listing.id.clone())
                            .or_insert(0) += 1;
                    }
                    "withdraw" => {
                        withdrawn.insert(ev.bidder_id);
                    }
                    other => {
                        return Err(ReplayError::Divergence {
                            seq: ev.seq,
                            listing_id: ev.listing_id.clone(),
                            message: format!("unknown action {other:?}"),
                        });
                    }
                }
            }
            LogLine::Settle(st) => {
                let listing = items.get(item_idx).ok_or_else(|| ReplayError::Divergence {
                    seq: last_seq,
                    listing_id: st.listing_id.clone(),
                    message: "settlement after all items settled".into(),
                })?;
                if st.listing_id != listing.id {
                    return Err(ReplayError::Divergence {
                        seq: last_seq,
                        listing_id: st.listing_id.clone(),
                        message: format!("settlement out of order: expected {}", listing.id),
                    });
                }
                let derived_winner = high.map(|(b, _)| b);
                let derived_hammer = high.map(|(_, a)| a);
                if st.passed {
                    if had_bid {
                        return Err(ReplayError::Divergence {
                            seq: last_seq,
                            listing_id: st.listing_id.clone(),
                            message: "recorded as passed but bids exist".into(),
                        });
                    }
                } else {
                    if st.winner != derived_winner || st.hammer != derived_hammer {
                        return Err(ReplayError::Divergence {
                            seq: last_seq,
                            listing_id: st.listing_id.clone(),
                            message: format!(
                                "recorded settlement (winner {:?}, hammer {:?}) != derived ({:?}, {:?})",
                                st.winner, st.hammer, derived_winner, derived_hammer
                            ),
                        });
                    }
                    let winner = st.winner.ok_or_else(|| ReplayError::Divergence {
                        seq: last_seq,
                        listing_id: st.listing_id.clone(),
                        message: "unpassed settlement without winner".into(),
                    })?;
                    let hammer = st.hammer.unwrap_or(0);
                    states[winner].remaining_budget -= hammer;
                    states[winner].won.push((listing.id.clone(), hammer));
                    states[winner].true_profit += listing.true_value - hammer;
                }
                settlements.push(Settlement {
                    listing_id: st.listing_id.clone(),
                    winner: st.winner.map(BidderId),
                    hammer_price: st.hammer,
                    passed: st.passed,
                });
                item_idx += 1;
                high = None;
                withdrawn.clear();
                had_bid = false;
            }
        }
    }

    if item_idx != items.len() || high.is_some() || had_bid {
        return Err(ReplayError::UnexpectedEnd { after_seq: last_seq });
    }
    Ok(ReplayReport {
        states,
        settlements,
        items_settled: item_idx,
    })
}
