//! Prompt templates and text renderings for LLM-backed agents.
//!
//! Every template is a fixed string with named slots; the same renderings
//! feed the chat prompts, the remote policy requests and the offline
//! emulator, so the formats here are load-bearing wire contracts.

use std::collections::BTreeMap;

use crate::agents::StatusBoard;
use crate::catalog::Money;
use crate::engine::{BidAction, BidEvent, ListingView};
use crate::planning::PriorityList;
use crate::profiling::ProfileKnowledge;
use crate::strategy::render_profile_text;

pub fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Quantizes a profile weight to two decimals so rendered prompts stay
/// byte-stable across accumulation.
pub fn quantize_weight(w: f64) -> f64 {
    (w * 100.0).round() / 100.0
}

pub fn system_message(bidder_name: &str, persona_snippets: &[&str]) -> String {
    let persona = if persona_snippets.is_empty() {
        String::new()
    } else {
        format!("{}\n\n", persona_snippets.join("\n\n"))
    };
    format!(
        "You are {bidder_name}. {persona}You are attending an ascending-bid housing auction as a \
         bidder. This auction will have some other bidders to compete with you in bidding wars. \
         The price is gradually raised, bidders drop out until finally only one bidder remains, \
         and that bidder wins the item at this final price. Remember: Your primary objective is \
         to secure the highest profit at the end of this auction, compared to all other bidders.\n\
         \n\
         Here are some must-know rules for this auction:\n\
         \n\
         1. Item Values: The true value of an item means its resale value in the broader market, \
         which you don't know. You will have a personal estimation of the item value. However, \
         note that your estimated value could deviate from the true value, due to your potential \
         overestimation or underestimation of this item.\n\
         \n\
         2. Winning Bid: The highest bid wins the item. Your profit from winning an item is \
         determined by the difference between the item's true value and your winning bid. You \
         should try to win an item at a bid as minimal as possible to save your budget.\n\
         \n\
         3. Winner Pays: Note that only the winner pays for the bidding price of the item. Other \
         bidders who participate in the bidding but lost do not have to pay at all."
    )
}

/// One line per item; the emulator and plan parsers rely on this shape.
pub fn items_info(items: &[ListingView]) -> String {
    items
        .iter()
        .map(|l| {
            format!(
                "- {}: {} (starting price: ${}; your estimated value: ${})",
                l.name, l.description, l.starting_price, l.perceived_value
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn planning_prompt(bidder_name: &str, budget: Money, items: &[ListingView]) -> String {
    format!(
        "As {bidder_name}, you have a total budget of ${budget}. This auction has a total of {n} \
         items to be sequentially presented, they are:\n{items}\n\
         \n\
         Please plan for your bidding strategy for the auction. A well-thought-out plan positions \
         you advantageously against competitors, allowing you to allocate resources effectively. \
         With a clear strategy, you can make decisions rapidly and confidently, especially under \
         the pressure of the auction environment. Remember: Your primary objective is to secure \
         the highest profit at the end of this auction, compared to all other bidders.\n\
         \n\
         Remember to observe and learn other bidders' bidding habits overtime, and try to take \
         advantage from their preference to maximize your gain.\n\
         \n\
         After articulating your thinking, in your plan, assign a priority level to each item. \
         Present the priorities for all items in a JSON format, each item should be represented \
         as a key-value pair, where the key is the item name and the value is its priority on the \
         scale from 1-3. An example output is: {{\"Item A\": 3, \"Item B\": 2, \"Item C\": 2}}. \
         The descriptions of the priority scale of items are as follows.\n\
         \n\
             * 1 - This item is the least important. Consider giving it up if necessary to save \
         money for the rest of the auction.\n\
             * 2 - This item holds value but isn't a top priority for the bidder. Could bid on it \
         if you have enough budget.\n\
             * 3 - This item is of utmost importance and is a top priority for the bidder in the \
         rest of the auction.",
        n = items.len(),
        items = items_info(items),
    )
}

/// Full per-item bidding history as text.
pub fn history_text(history: &[BidEvent], bidder_names: &[String], item_name: &str) -> String {
    if history.is_empty() {
        return "(no bids yet)".to_string();
    }
    history
        .iter()
        .map(|e| {
            let name = bidder_names
                .get(e.bidder_id.0)
                .map(String::as_str)
                .unwrap_or("Unknown");
            match e.action {
                BidAction::Bid(amount) => {
                    format!("- {name} bids ${amount} for {item_name} (cycle {})", e.cycle)
                }
                BidAction::Withdraw => {
                    format!("- {name} withdraws from {item_name} (cycle {})", e.cycle)
                }
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The auctioneer's call for the current poll.
pub fn auctioneer_message(
    listing: &ListingView,
    current_high: Option<(usize, Money)>,
    min_increment: Money,
    cycle: u32,
    history: &[BidEvent],
    bidder_names: &[String],
) -> String {
    match current_high {
        None => format!(
            "Now presenting {}: {} The starting price is ${}. The minimum bid increase for this \
             item is ${}. Do I have any offers?",
            listing.name, listing.description, listing.starting_price, min_increment
        ),
        Some((leader, high)) => {
            let mut latest: BTreeMap<usize, Money> = BTreeMap::new();
            for e in history {
                if let BidAction::Bid(amount) = e.action {
                    latest.insert(e.bidder_id.0, amount);
                }
            }
            let standing = latest
                .iter()
                .map(|(b, amount)| {
                    let name = bidder_names.get(*b).map(String::as_str).unwrap_or("Unknown");
                    format!("- {name}: ${amount}")
                })
                .collect::<Vec<_>>()
                .join("\n");
            let leader_name = bidder_names.get(leader).map(String::as_str).unwrap_or("Unknown");
            format!(
                "{}, {} This is the {} round of bidding for this item:\n{standing}\n\
                 Now we have ${high} from {leader_name} for {}. The minimum increase over this \
                 highest bid is ${min_increment}. Do I have any advance on ${high}?",
                listing.name,
                listing.description,
                ordinal(cycle + 1),
                listing.name,
            )
        }
    }
}

pub fn hammer_message(item_name: &str, winner_name: Option<&str>, hammer: Option<Money>) -> String {
    match (winner_name, hammer) {
        (Some(name), Some(price)) => format!("Sold! {item_name} goes to {name} at ${price}."),
        _ => format!("{item_name} receives no bids and is passed."),
    }
}

pub fn win_lose_message(item_name: &str, won: bool, hammer: Option<Money>) -> String {
    if won {
        format!(
            "Congratulations! You won {item_name} at ${}.",
            hammer.unwrap_or(0)
        )
    } else {
        "You did not win this item.".to_string()
    }
}

pub fn status_json(board: &StatusBoard) -> String {
    serde_json::to_string(board).unwrap_or_else(|_| "{}".into())
}

/// Priority plan as a JSON object keyed by item name, remaining items only.
pub fn plan_json(priorities: &PriorityList, id_to_name: &BTreeMap<String, String>) -> String {
    let map: BTreeMap<&str, u8> = priorities
        .iter()
        .map(|(id, level)| {
            (
                id_to_name.get(id).map(String::as_str).unwrap_or(id),
                level,
            )
        })
        .collect();
    serde_json::to_string(&map).unwrap_or_else(|_| "{}".into())
}

/// Profiles as a JSON object keyed by rival name, weights keyed by persona
/// name and quantized to two decimals.
pub fn profile_json(
    profiles: &ProfileKnowledge,
    persona_names: &[String],
    bidder_names: &[String],
) -> String {
    let mut outer: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (rival, profile) in &profiles.profiles {
        let rname = bidder_names
            .get(rival.0)
            .cloned()
            .unwrap_or_else(|| format!("Bidder {rival}"));
        let mut inner = BTreeMap::new();
        for (i, w) in profile.weights.iter().enumerate() {
            let pname = persona_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("Persona {i}"));
            inner.insert(pname, quantize_weight(*w));
        }
        outer.insert(rname, inner);
    }
    serde_json::to_string(&outer).unwrap_or_else(|_| "{}".into())
}

pub fn strategy_prompt(
    auctioneer_msg: &str,
    prev_status: &str,
    current_plan: &str,
    current_profile: &str,
    second_order_report: &str,
) -> String {
    let perception = if second_order_report.is_empty() {
        String::new()
    } else {
        format!(
            "Here is your analysis of how other bidders perceive you:\n{second_order_report}\n\n"
        )
    };
    format!(
        "The auctioneer says: \"{auctioneer_msg}\"\n\
         \n\
         Here is your current status:\n{prev_status}\n\
         \n\
         Here is your current priority scale of all the items:\n{current_plan}\n\
         The descriptions of the priority scale are as follows.\n\
         \x20   * 1 - This item is the least important. Consider giving it up if necessary to \
         save money for the rest of the auction.\n\
         \x20   * 2 - This item holds value but isn't a top priority for the bidder. Could bid \
         on it if you have enough budget.\n\
         \x20   * 3 - This item is of utmost importance and is a top priority for the bidder in \
         the rest of the auction.\n\
         \n\
         Here is a profiling of your competitors' personas. A higher weight for a particular \
         item type suggests that a bidder is more likely to bid on items of that type:\n\
         {current_profile}\n\
         \n\
         {perception}Use the knowledge of your competitors' personas, your current status, and \
         your priority list to make a **strategic** decision. Remember: Your primary objective \
         is to secure the highest profit at the end of this auction, compared to all other \
         bidders. Consider the following **key bidding practices**:\n\
         1. **Do not let competitors win items too easily**--forcing them to bid higher weakens \
         their future purchasing power.\n\
         2. **Exploit competitor weaknesses**--if a competitor values an item, consider bidding \
         on it to drain their budget.\n\
         3. **Only the winning bidder pays**--losing bidders pay nothing, so well-placed \
         aggressive bids can weaken competitors.\n\
         4. **Know when to stop**--if the profit margin is <= $300, it may not be worth \
         pursuing.\n\
         \n\
         You must select one of the following six strategic actions:\n\
         A. **Increase the bid if this item is a top priority.**\n\
         B. **Increase the bid to drain competitors' budgets, especially if a competitor highly \
         values this item.**\n\
         C. **Increase the bid if your budget allows without compromising future rounds.**\n\
         D. **Quit to conserve budget for higher-priority items.**\n\
         E. **Quit because the profit margin is no longer attractive (i.e., profit margin <= \
         $300).**\n\
         F. **Quit to avoid a costly bidding war.**\n\
         \n\
         State your choice in the format:\n\
         **\"I chose to [action] because [reason].\"**\n\
         Make sure to **elaborate** on why you chose this action, considering your competitors' \
         profiles, your current status, and your priority list."
    )
}

pub fn action_prompt(auctioneer_msg: &str, bidder_name: &str, strategic_reasoning: &str) -> String {
    format!(
        "Now, the auctioneer says: \"{auctioneer_msg}\" As {bidder_name}, you have to decide \
         whether to bid on this item or withdraw and explain why. Remember: Your primary \
         objective is to secure the highest profit at the end of this auction, compared to all \
         other bidders.\n\
         \n\
         Here are some common practices of bidding:\n\
         1. Showing your interest by bidding with or slightly above the starting price of this \
         item, then gradually increase your bid.\n\
         2. Think step by step of the pros and cons and the consequences of your action (e.g., \
         remaining budget in future bidding) in order to achieve your primary objective.\n\
         \n\
         Here is some professional strategic bidding advice to help you make your decision: \
         \"{strategic_reasoning}\"\n\
         \n\
         Follow the decision from the strategic bidding advice, then make your final decision \
         clearly. You should either withdraw (saying \"I'm out!\") or make a higher bid for this \
         item (saying \"I bid $xxx!\")."
    )
}

pub fn status_update_prompt(
    bidder_name: &str,
    item_name: &str,
    bidding_history: &str,
    hammer_msg: &str,
    win_lose_msg: &str,
    prev_status: &str,
) -> String {
    format!(
        "Here is the history of the bidding war of {item_name}: \"{bidding_history}\"\n\
         The auctioneer concludes: \"{hammer_msg}\"\n\
         \n\
         {win_lose_msg}\n\
         \n\
         As {bidder_name}, you have to update the status of the auction based on this round of \
         bidding. Here's your previous status:\n```\n{prev_status}\n```\n\
         \n\
         Summarize the notable behaviors of all bidders in this round of bidding for future \
         reference. Then, update the status JSON regarding the following information:\n\
         - 'remaining_budget': The remaining budget of you, expressed as a numerical value.\n\
         - 'total_profits': The total profits achieved so far for each bidder, where a numerical \
         value following a bidder's name. No equation is needed, just the numerical value.\n\
         - 'winning_bids': The winning bids for every item won by each bidder, listed as \
         key-value pairs. If a bidder hasn't won any item, then the value for this bidder should \
         be an empty dictionary.\n\
         \n\
         After summarizing the bidding history, you must output the current status in a parsible \
         JSON format. An example output looks like:\n\
         ```{{\"remaining_budget\": 8000, \"total_profits\": {{\"Bidder 1\": 1300, \"Bidder 2\": \
         1800}}, \"winning_bids\": {{\"Bidder 1\": {{\"Item 2\": 1200}}, \"Bidder 2\": {{}}}}}}```"
    )
}

pub fn profiling_prompt(
    item_name: &str,
    bidding_history: &str,
    bidder_name: &str,
    persona_names: &[String],
    target_bidder: &str,
    house_desc: &str,
) -> String {
    let list = persona_names
        .iter()
        .map(|n| format!("\"{n}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let sample: Vec<&str> = persona_names.iter().take(3).map(String::as_str).collect();
    let sample_pos = sample
        .iter()
        .enumerate()
        .map(|(i, n)| format!("\"{n}\": 0.{}", 2 - i.min(1)))
        .collect::<Vec<_>>()
        .join(", ");
    let sample_zero = sample
        .iter()
        .map(|n| format!("\"{n}\": 0.0"))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Here is the history of the bidding war of {item_name}: \"{bidding_history}\"\n\
         \n\
         You are {bidder_name}. You are given a persona list: [{list}].\n\
         \n\
         Given the bidding history you have seen so far, complete the below steps:\n\
         \n\
         1. Study the bidding history, focus on how many times {target_bidder} raised price for \
         this item and what are the winning bids so far for each bidder. These 2 factors often \
         say something about a person.\n\
         2. Based on {target_bidder}'s willingness to raise the price for this item, combining \
         this items description: {house_desc}, predict the bidders' persona from the given \
         persona list.\n\
         3. If the bidder does not show any interests for this item at all, you can reduce the \
         weights on the personas that closely match with this item, even to the negatives.\n\
         4. Formulate your prediction into how much weight each persona plays in \
         {target_bidder}'s bidding. Present the prediction in the JSON format like this \
         {{\"{target_bidder}\": {{{sample_pos}...}}}} where the key is the persona type and the \
         value is the weight of that persona type.\n\
         5. Make sure the range of each weights are within the range of -1 to 1. Make sure the \
         output dictionary has {k} keys, each representing a persona type from the given list.\n\
         \n\
         If {target_bidder} does not make any informative actions for a prediction, output a \
         dictionary like {{\"{target_bidder}\": {{{sample_zero}...}}}} where all weights are 0.",
        k = persona_names.len(),
    )
}

pub fn second_order_prompt(
    item_name: &str,
    bidding_history: &str,
    prev_status: &str,
    bidder_name: &str,
) -> String {
    format!(
        "Here is the history of the bidding war of {item_name}:\n\"{bidding_history}\"\n\
         Here is your current status:\n{prev_status}\n\
         You are {bidder_name}. Based on the bidding history and current status, analyze how \
         other bidders perceive you and how this affects their strategy.\n\
         Consider:\n\
         1. How they interpret your persona? Have they identified your item preferences? Are \
         they using this perception to manipulate you?\n\
         2. How they adjust their bidding? Are they testing your limits, avoiding competition, \
         or trying to drain your budget?\n\
         3. How they see you as a rival or ally? Will they cooperate, challenge, or exploit you \
         in future rounds?\n\
         Response Format:\n\
         For each bidder, state how they perceive you and how they might adjust their strategy.\n\
         Example:\n\
         \x20  - Bidder 1 thinks I ... They might adjust their strategy by ...\n\
         \x20  - Bidder 2 thinks I ... They might adjust their strategy by ...\n\
         \n\
         Keep your analysis concise and actionable to refine your bidding strategy.",
    )
}

/// Status rendering for remote policy requests.
pub fn status_text(bidder_name: &str, board: &StatusBoard, rival_names: &[String]) -> String {
    let mut out = format!(
        "You are {bidder_name}. You have {} competitors: {}.",
        rival_names.len(),
        rival_names.join(", ")
    );
    out.push_str(&format!(
        " Here is your current status: * Remaining Budget: ${}",
        board.remaining_budget
    ));
    out.push_str(" * Total Profits:");
    for (name, profit) in &board.total_profits {
        out.push_str(&format!(" * {name}: ${profit}"));
    }
    out.push_str(" * Winning Bids:");
    for (name, wins) in &board.winning_bids {
        out.push_str(&format!(" * {name}:"));
        if wins.is_empty() {
            out.push_str(" (none)");
        }
        for (item, price) in wins {
            out.push_str(&format!(" * {item}: ${price}"));
        }
    }
    out
}

/// Remaining priorities for remote policy requests, presentation order.
pub fn priorities_text(
    priorities: &PriorityList,
    remaining: &[ListingView],
) -> String {
    let entries: Vec<BTreeMap<&str, u8>> = remaining
        .iter()
        .filter_map(|l| {
            priorities
                .level(&l.id)
                .map(|level| BTreeMap::from([(l.name.as_str(), level)]))
        })
        .collect();
    serde_json::to_string(&entries).unwrap_or_else(|_| "[]".into())
}

/// Convenience wrapper matching the remote request field.
pub fn profile_text(
    profiles: &ProfileKnowledge,
    persona_names: &[String],
    bidder_names: &[String],
) -> String {
    render_profile_text(profiles, persona_names, bidder_names)
}
