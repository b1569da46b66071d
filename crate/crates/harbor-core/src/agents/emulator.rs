//! Deterministic offline stand-in for a chat model.
//!
//! Parses the framework's own prompts and produces replies shaped like real
//! model output: free-form reasoning followed by the machine-readable tail
//! each parser expects. Because replies are pure functions of the message
//! history, runs under this transport are fully reproducible and can be
//! recorded into replayable fixtures.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::agents::llm::NO_ADVICE;
use crate::agents::transport::{ChatMessage, ChatTransport, PolicyEndpoint, RemoteRequest, TransportError};
use crate::catalog::Money;

pub struct EmulatedLlm;

static ITEM_INFO_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^- (.+?): (.+) \(starting price: \$(\d+); your estimated value: \$(\d+)\)$")
        .expect("valid regex")
});
static BUDGET_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"total budget of \$(\d+)").expect("valid regex"));
static HIGH_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Now we have \$(\d+) from (.+?) for ").expect("valid regex"));
static MIN_INC_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"The minimum increase over this highest bid is \$(\d+)\.").expect("valid regex")
});
static START_PRICE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"The starting price is \$(\d+)\.").expect("valid regex"));
static ROUND_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"This is the (\d+)\w\w round of bidding").expect("valid regex"));
static TARGET_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"focus on how many times (.+?) raised price").expect("valid regex")
});
static WAR_ITEM_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)history of the bidding war of (.+?): ?\n?"(.*?)"\n"#).expect("valid regex")
});
static DESC_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)combining this items description: (.*?), predict the bidders' persona")
        .expect("valid regex")
});
static PERSONA_LIST_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"persona list: \[(.+?)\]\.").expect("valid regex"));
static AUCTIONEER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)[Tt]he auctioneer says: "(.*?)" (?:As )?"#).expect("valid regex")
});
static AUCTIONEER_STRATEGY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)The auctioneer says: "(.*?)"\n\nHere is your current status"#)
        .expect("valid regex")
});
static STATUS_SECTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Here is your current status:\n(\{.*?\})\n").expect("valid regex")
});
static PLAN_SECTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"priority scale of all the items:\n(\{.*?\}|\[.*?\])\n").expect("valid regex")
});
static PROFILE_SECTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"bid on items of that type:\n(\{.*?\})\n").expect("valid regex")
});
static ADVICE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)advice to help you make your decision: "(.*?)"\n\nFollow the decision"#)
        .expect("valid regex")
});
static PREV_STATUS_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)previous status:\n```\n(.*?)\n```").expect("valid regex")
});
static CONCLUDES_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"The auctioneer concludes: "(.*?)""#).expect("valid regex"));
static SOLD_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Sold! (.+?) goes to (.+?) at \$(\d+)\.").expect("valid regex"));
static UPDATER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"As (.+?), you have to update the status").expect("valid regex"));
static SECOND_SELF_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"You are (.+?)\. Based on the bidding history").expect("valid regex")
});
static HISTORY_ACTOR_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^- (.+?) (?:bids \$|withdraws from )").expect("valid regex")
});
static REMAINING_BUDGET_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Remaining Budget: \$(-?\d+)").expect("valid regex"))
;

#[derive(Debug, Clone)]
struct ItemFacts {
    name: String,
    start: Money,
    estimated: Money,
}

fn parse_items(text: &str) -> Vec<ItemFacts> {
    ITEM_INFO_RE
        .captures_iter(text)
        .map(|c| ItemFacts {
            name: c[1].to_string(),
            start: c[3].parse().unwrap_or(0),
            estimated: c[4].parse().unwrap_or(0),
        })
        .collect()
}

/// Parses the price situation out of an auctioneer message: the next legal
/// bid and the current round number.
fn parse_ask(auctioneer: &str) -> (Money, u32) {
    let round = ROUND_RE
        .captures(auctioneer)
        .and_then(|c| c[1].parse().ok())
        .unwrap_or(1);
    if let (Some(high), Some(inc)) = (HIGH_RE.captures(auctioneer), MIN_INC_RE.captures(auctioneer))
    {
        let high: Money = high[1].parse().unwrap_or(0);
        let inc: Money = inc[1].parse().unwrap_or(0);
        (high + inc, round)
    } else if let Some(start) = START_PRICE_RE.captures(auctioneer) {
        (start[1].parse().unwrap_or(0), round)
    } else {
        (0, round)
    }
}

fn item_name_from_auctioneer(auctioneer: &str) -> String {
    if let Some(rest) = auctioneer.strip_prefix("Now presenting ") {
        if let Some(idx) = rest.find(':') {
            return rest[..idx].to_string();
        }
    }
    auctioneer
        .split(", ")
        .next()
        .unwrap_or("")
        .to_string()
}

fn item_desc_from_auctioneer(auctioneer: &str) -> String {
    let body = if let Some(rest) = auctioneer.strip_prefix("Now presenting ") {
        rest.split_once(": ").map(|(_, d)| d).unwrap_or(rest)
    } else {
        auctioneer.split_once(", ").map(|(_, d)| d).unwrap_or(auctioneer)
    };
    for marker in [" The starting price is $", " This is the "] {
        if let Some(idx) = body.find(marker) {
            return body[..idx].to_string();
        }
    }
    body.to_string()
}

/// The last assistant JSON object in the thread that satisfies `pred`.
fn last_assistant_json(
    messages: &[ChatMessage],
    pred: impl Fn(&serde_json::Value) -> bool,
) -> Option<serde_json::Value> {
    messages
        .iter()
        .rev()
        .filter(|m| m.role == "assistant")
        .filter_map(|m| crate::agents::parse::last_json_object(&m.content))
        .find(|v| pred(v))
}

fn quant(w: f64) -> f64 {
    (w * 100.0).round() / 100.0
}

impl EmulatedLlm {
    fn plan_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let items = parse_items(prompt);
        let budget: Money = BUDGET_RE
            .captures(prompt)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(0);
        // Margin-seeking plan: demote what the budget cannot cover, rank the
        // rest by estimated margin and split into thirds.
        let mut affordable: Vec<(usize, &ItemFacts)> = Vec::new();
        let mut plan: BTreeMap<String, u8> = BTreeMap::new();
        for (idx, item) in items.iter().enumerate() {
            if item.start > budget {
                plan.insert(item.name.clone(), 1);
            } else {
                affordable.push((idx, item));
            }
        }
        affordable.sort_by(|(ia, a), (ib, b)| {
            let ma = a.estimated - a.start;
            let mb = b.estimated - b.start;
            mb.cmp(&ma).then(ia.cmp(ib))
        });
        let n = affordable.len();
        for (rank, (_, item)) in affordable.into_iter().enumerate() {
            plan.insert(item.name.clone(), (3 - (3 * rank) / n.max(1)) as u8);
        }
        let json = serde_json::to_string(&plan).unwrap_or_else(|_| "{}".into());
        format!(
            "Let me think about this auction. My budget is ${budget} and there are {} items. I \
             will rank the items by the margin between my estimated value and the starting \
             price, focus my budget on the widest margins, and stay flexible on the rest.\n\n\
             My priorities are:\n{json}",
            items.len()
        )
    }

    fn profiling_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let target = TARGET_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| "the bidder".to_string());
        let history = WAR_ITEM_RE
            .captures(prompt)
            .map(|c| c[2].to_string())
            .unwrap_or_default();
        let desc = DESC_RE
            .captures(prompt)
            .map(|c| c[1].to_lowercase())
            .unwrap_or_default();
        let personas: Vec<String> = PERSONA_LIST_RE
            .captures(prompt)
            .map(|c| {
                c[1].split("\", \"")
                    .map(|s| s.trim_matches('"').to_string())
                    .collect()
            })
            .unwrap_or_default();
        let prev = last_assistant_json(messages, |v| v.get(&target).is_some());
        let prev_weights: BTreeMap<String, f64> = personas
            .iter()
            .map(|p| {
                let w = prev
                    .as_ref()
                    .and_then(|v| v.get(&target))
                    .and_then(|t| t.get(p))
                    .and_then(|x| x.as_f64())
                    .unwrap_or(0.0);
                (p.clone(), w)
            })
            .collect();

        let bid_needle = format!("- {target} bids $");
        let appear_needle = format!("- {target} ");
        let raises = history.matches(&bid_needle).count() as u32;
        let appeared = history.contains(&appear_needle);
        let matched: Vec<&String> = personas
            .iter()
            .filter(|p| desc.contains(&p.to_lowercase()))
            .collect();

        let delta = if !appeared || matched.is_empty() {
            0.0
        } else if raises > 0 {
            0.1 * raises.min(3) as f64
        } else {
            -0.1
        };

        if delta == 0.0 {
            let zeros: BTreeMap<&String, f64> = personas.iter().map(|p| (p, 0.0)).collect();
            let json = serde_json::json!({ &target: zeros });
            return format!(
                "Looking at the bidding history for this item, {target} took no action that \
                 tells me anything new about their persona, so I will not adjust any weights.\n\
                 {json}"
            );
        }

        let mut new_weights = prev_weights.clone();
        let mut changes = Vec::new();
        for p in &matched {
            let old = quant(prev_weights.get(*p).copied().unwrap_or(0.0));
            let new = quant((old + delta).clamp(-1.0, 1.0));
            new_weights.insert((*p).clone(), new);
            if new > old {
                changes.push(format!("- Increased \"{p}\" from {old} to {new}"));
            } else if new < old {
                changes.push(format!("- Decreased \"{p}\" from {old} to {new}"));
            }
        }
        let quantized: BTreeMap<&String, f64> =
            new_weights.iter().map(|(k, v)| (k, quant(*v))).collect();
        let json = serde_json::json!({ &target: quantized });
        let behaviour = if raises > 0 {
            format!("{target} raised the price {raises} time(s) for this item")
        } else {
            format!("{target} never bid on this item despite it matching some persona types")
        };
        format!(
            "Let me analyze this step by step:\n\
             1. Bidding history analysis: {behaviour}.\n\
             2. The item description aligns with: {}.\n\
             3. Updated prediction:\n{json}\n\
             The main changes are:\n{}",
            matched
                .iter()
                .map(|p| format!("\"{p}\""))
                .collect::<Vec<_>>()
                .join(", "),
            changes.join("\n")
        )
    }

    fn strategy_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let auctioneer = AUCTIONEER_STRATEGY_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let (next_bid, round) = parse_ask(&auctioneer);
        let item = item_name_from_auctioneer(&auctioneer);
        let desc = item_desc_from_auctioneer(&auctioneer).to_lowercase();
        let budget: Money = STATUS_SECTION_RE
            .captures(prompt)
            .and_then(|c| serde_json::from_str::<serde_json::Value>(&c[1]).ok())
            .and_then(|v| v.get("remaining_budget").and_then(|b| b.as_i64()))
            .unwrap_or(0);
        let level = PLAN_SECTION_RE
            .captures(prompt)
            .and_then(|c| serde_json::from_str::<serde_json::Value>(&c[1]).ok())
            .and_then(|v| v.get(&item).and_then(|l| l.as_u64()))
            .unwrap_or(2) as u8;
        let rival_interest: Option<(String, String, f64)> = PROFILE_SECTION_RE
            .captures(prompt)
            .and_then(|c| serde_json::from_str::<serde_json::Value>(&c[1]).ok())
            .and_then(|profiles| {
                profiles.as_object().and_then(|rivals| {
                    rivals.iter().find_map(|(rival, weights)| {
                        weights.as_object().and_then(|weights| {
                            weights.iter().find_map(|(persona, w)| {
                                let w = w.as_f64().unwrap_or(0.0);
                                if w >= 0.5 && desc.contains(&persona.to_lowercase()) {
                                    Some((rival.clone(), persona.clone(), w))
                                } else {
                                    None
                                }
                            })
                        })
                    })
                })
            });

        let (letter, label, reason) = if budget < next_bid {
            ('F', "Quit to avoid a costly bidding war", format!(
                "my remaining budget ${budget} cannot cover the next bid of ${next_bid}"
            ))
        } else if round >= 10 && !(level == 3 && round < 15) {
            ('F', "Quit to avoid a costly bidding war", format!(
                "{round} rounds of bidding on {item} is turning into a war that is not worth \
                 my budget"
            ))
        } else if level == 3 {
            ('A', "Increase the bid if this item is a top priority", format!(
                "{item} is a top priority for me and the next bid of ${next_bid} is within my \
                 budget of ${budget}"
            ))
        } else if level >= 2 && budget >= 2 * next_bid && rival_interest.is_some() {
            let (rival, persona, w) = rival_interest.unwrap();
            ('B', "Increase the bid to drain competitors' budgets", format!(
                "this property strongly appeals to {rival}'s preferences ({persona} is {w}), \
                 so pushing the price up to ${next_bid} forces them to spend more of their \
                 budget while I keep ${budget} in reserve"
            ))
        } else if level == 2 {
            ('C', "Increase the bid if your budget allows", format!(
                "{item} holds value for me and ${next_bid} still leaves room in my budget of \
                 ${budget}"
            ))
        } else {
            ('D', "Quit to conserve budget for higher-priority items", format!(
                "{item} is low priority and I would rather keep my ${budget} for the items I \
                 actually want"
            ))
        };
        format!(
            "Let me analyze this situation strategically:\n\
             1. {item} is rated as priority {level} for me.\n\
             2. The next required bid is ${next_bid} against my remaining budget of ${budget}.\n\
             3. This is bidding round {round} for the item.\n\
             **I chose to {letter} ({label}) because {reason}.**"
        )
    }

    fn action_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let auctioneer = AUCTIONEER_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let advice = ADVICE_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let (next_bid, round) = parse_ask(&auctioneer);
        let item = item_name_from_auctioneer(&auctioneer);

        // Budget from the latest status I reported, falling back to the
        // opening budget from the planning exchange.
        let budget: Money = last_assistant_json(messages, |v| v.get("remaining_budget").is_some())
            .and_then(|v| v.get("remaining_budget").and_then(|b| b.as_i64()))
            .or_else(|| {
                messages
                    .iter()
                    .find_map(|m| BUDGET_RE.captures(&m.content))
                    .and_then(|c| c[1].parse().ok())
            })
            .unwrap_or(0);

        let advised_bid = if advice.contains("I chose to") {
            crate::strategy::parse_strategy_letter(&advice)
                .map(|rule| rule.is_bid())
                .unwrap_or(false)
        } else if advice.contains("I recommend to") {
            crate::strategy::parse_recommendation(&advice).unwrap_or(false)
        } else if advice.contains(NO_ADVICE) {
            // No strategy module: fall back to my own plan and a simple
            // war-avoidance rule.
            let level = last_assistant_json(messages, |v| v.get(&item).is_some())
                .and_then(|v| v.get(&item).and_then(|l| l.as_u64()))
                .unwrap_or(2);
            level >= 2 && round < 8
        } else {
            false
        };

        if advised_bid && next_bid <= budget && next_bid > 0 {
            format!(
                "The advice makes sense given my budget of ${budget}. I bid ${next_bid}!"
            )
        } else if advised_bid {
            format!(
                "I would like to continue, but ${next_bid} does not fit my remaining budget of \
                 ${budget}. I'm out!"
            )
        } else {
            format!("Given the situation on {item}, holding back is the right call. I'm out!")
        }
    }

    fn status_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let prev: crate::agents::StatusBoard = PREV_STATUS_RE
            .captures(prompt)
            .and_then(|c| serde_json::from_str(&c[1]).ok())
            .unwrap_or_default();
        let me = UPDATER_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let concludes = CONCLUDES_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let mut board = prev;
        let summary;
        if let Some(sold) = SOLD_RE.captures(&concludes) {
            let item = sold[1].to_string();
            let winner = sold[2].to_string();
            let hammer: Money = sold[3].parse().unwrap_or(0);
            // My estimate for the item, recalled from the opening item list.
            let estimated: Money = messages
                .iter()
                .find_map(|m| {
                    ITEM_INFO_RE
                        .captures_iter(&m.content)
                        .find(|c| &c[1] == item)
                        .map(|c| c[4].parse().unwrap_or(0))
                })
                .unwrap_or(hammer);
            *board.total_profits.entry(winner.clone()).or_insert(0) += estimated - hammer;
            board
                .winning_bids
                .entry(winner.clone())
                .or_default()
                .insert(item.clone(), hammer);
            if winner == me {
                board.remaining_budget -= hammer;
            }
            summary = format!(
                "{winner} took {item} at ${hammer}; by my estimate that is a profit of \
                 ${} for them",
                estimated - hammer
            );
        } else {
            summary = "the item attracted no bids and was passed".to_string();
        }
        let json = serde_json::to_string(&board).unwrap_or_else(|_| "{}".into());
        format!("In this round, {summary}.\n```{json}```")
    }

    fn second_order_reply(&self, messages: &[ChatMessage]) -> String {
        let prompt = &messages.last().expect("non-empty thread").content;
        let me = SECOND_SELF_RE
            .captures(prompt)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let mut rivals: Vec<String> = HISTORY_ACTOR_RE
            .captures_iter(prompt)
            .map(|c| c[1].to_string())
            .filter(|name| *name != me)
            .collect();
        rivals.sort();
        rivals.dedup();
        if rivals.is_empty() {
            return format!(
                "No rival has acted yet, so there is little for them to perceive about {me}. I \
                 should keep my bidding unpredictable in the coming rounds."
            );
        }
        let mut out = String::from("Let me analyze how other bidders likely perceive me based on the bidding history:\n");
        for rival in &rivals {
            out.push_str(&format!(
                "- {rival} thinks I am a determined buyer with meaningful resources, given how I \
                 have engaged so far. They might adjust their strategy by avoiding direct \
                 competition on items I clearly want and testing my limits elsewhere.\n"
            ));
        }
        out.push_str(
            "Strategic implications: I should avoid being too predictable and look for \
             opportunities where rivals expect me to stay quiet.",
        );
        out
    }
}

impl ChatTransport for EmulatedLlm {
    fn send(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, TransportError> {
        let last = messages
            .last()
            .ok_or_else(|| TransportError::Failure("empty message list".into()))?;
        let content = &last.content;
        let reply = if content.contains("Please plan for your bidding strategy") {
            self.plan_reply(messages)
        } else if content.contains("complete the below steps") {
            self.profiling_reply(messages)
        } else if content.contains("six strategic actions") {
            self.strategy_reply(messages)
        } else if content.contains("decide whether to bid on this item or withdraw") {
            self.action_reply(messages)
        } else if content.contains("update the status of the auction") {
            self.status_reply(messages)
        } else if content.contains("analyze how other bidders perceive you") {
            self.second_order_reply(messages)
        } else {
            return Err(TransportError::Failure(
                "unrecognized prompt shape".into(),
            ));
        };
        Ok(reply)
    }
}

impl PolicyEndpoint for EmulatedLlm {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        let (next_bid, round) = parse_ask(&request.auctioneer_msg);
        let item = item_name_from_auctioneer(&request.auctioneer_msg);
        let budget: Money = REMAINING_BUDGET_RE
            .captures(&request.status_text)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(0);
        let level: u8 = serde_json::from_str::<Vec<BTreeMap<String, u8>>>(&request.priorities)
            .ok()
            .and_then(|entries| {
                entries
                    .into_iter()
                    .find_map(|e| e.get(&item).copied())
            })
            .unwrap_or(2);
        let reply = if budget < next_bid {
            format!(
                "My budget of ${budget} is below the required ${next_bid}, so the rule is \
                 clear. I recommend to withdraw"
            )
        } else if round >= 10 {
            format!(
                "After {round} rounds this has become a bidding war on {item} that will erase \
                 the margin. I recommend to withdraw"
            )
        } else if level >= 2 {
            format!(
                "{item} carries priority {level} for me and ${next_bid} fits within my \
                 ${budget} budget. Considering the competitor profile ({}), the opportunity \
                 is worth taking. I recommend to bid",
                request.profile_text.lines().next().unwrap_or("no profile")
            )
        } else {
            format!(
                "{item} is low priority and my budget is better saved for later items. I \
                 recommend to withdraw"
            )
        };
        Ok(reply)
    }
}
