//! Harbor: a deterministic multi-agent English-auction simulation framework.
//!
//! Bidder agents carry buyer personas, plan item priorities, profile their
//! rivals from observed bidding behaviour, and pick bidding strategies with
//! theory-of-mind reasoning. Auctions run turn-based and fully seeded, with
//! scripted oracle agents for offline work and LLM-backed agents speaking an
//! OpenAI-compatible chat protocol for live runs. Every run produces a
//! replayable event log plus profit-ratio, acquisition-rate, TrueSkill and
//! profiling-accuracy metrics.

pub mod agents;
pub mod catalog;
pub mod engine;
pub mod experiments;
pub mod metrics;
pub mod planning;
pub mod profiling;
pub mod runio;
pub mod strategy;

pub use catalog::{Catalog, Listing, Money, Persona, PersonaId};
pub use engine::{AuctionOutcome, BidAction, BidderId, BidderState, Settlement};
