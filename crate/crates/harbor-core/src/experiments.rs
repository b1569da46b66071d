//! Experiment scenarios: reproducible configurations, persona rotation,
//! repetition, execution and aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::transport::{ChatTransport, CountingTransport, PolicyEndpoint};
use crate::agents::{
    build_agent, AgentBuildContext, AgentSpec, IncidentCounters, IncidentSnapshot, PersonaShare,
    PersonaSource, PolicyKind, StrategyChoice,
};
use crate::catalog::{select_scenario_items, Catalog, CatalogError, Listing, PersonaId};
use crate::engine::{
    Auction, AuctionConfig, BidderId, BidderSetup, BidderState, EngineError, EngineIncidents,
    LogLine, Settlement,
};
use crate::metrics::{
    acquisition_rate, engagement_counts, per_bidder_profits, profit_ratio, ranks_from_profits,
    rate_free_for_all, BidderMetrics, MetricsReport, Rating, TrueSkillConfig,
};
use crate::profiling::{ground_truth_vector, profiling_kl, ProfileVector};

fn default_min_increment_rate() -> f64 {
    0.10
}
fn default_cycle_cap() -> u32 {
    50
}
fn default_repetitions() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    #[default]
    None,
    RoundRobin,
}

/// How many scenario items must match each persona-bearing agent, and how
/// many items the auction presents in total; the remainder is filler that
/// matches none of the agents' personas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemsSpec {
    pub matched_per_agent: usize,
    pub total_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub catalog: PathBuf,
    pub items: ItemsSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default = "default_min_increment_rate")]
    pub min_increment_rate: f64,
    #[serde(default = "default_cycle_cap")]
    pub cycle_cap: u32,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub rotation: Rotation,
    pub seed: u64,
}

/// A checked-in experiment: one or more named settings sharing a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub name: String,
    pub settings: Vec<ScenarioConfig>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ScenarioConfig {
    pub fn validate(&self, catalog: &Catalog) -> Result<(), ExperimentError> {
        if self.repetitions < 1 {
            return Err(ExperimentError::Invalid(format!(
                "{}: repetitions must be at least 1",
                self.name
            )));
        }
        if self.agents.len() < 2 {
            return Err(ExperimentError::Invalid(format!(
                "{}: need at least 2 agents",
                self.name
            )));
        }
        let bearers = self
            .agents
            .iter()
            .filter(|a| !a.persona_mix.is_empty())
            .count();
        if self.rotation == Rotation::RoundRobin && bearers < 2 {
            return Err(ExperimentError::Invalid(format!(
                "{}: round-robin rotation needs at least 2 persona-bearing agents",
                self.name
            )));
        }
        for agent in &self.agents {
            agent.validate(catalog.k())?;
        }
        let requests = self.item_requests();
        let matched: usize = requests.iter().map(|(_, n)| n).sum();
        if matched > self.items.total_items {
            return Err(ExperimentError::Invalid(format!(
                "{}: {} matched items exceed total_items {}",
                self.name, matched, self.items.total_items
            )));
        }
        Ok(())
    }

    /// Matched-listing counts per persona. An agent with a single persona
    /// requests all its matches there; a mix of two splits them (first
    /// persona by id gets the larger half). Agents sharing a persona share
    /// its matched items, so counts take the maximum, not the sum.
    pub fn item_requests(&self) -> Vec<(PersonaId, usize)> {
        let mut requests: BTreeMap<PersonaId, usize> = BTreeMap::new();
        for agent in &self.agents {
            let ids = agent.persona_ids();
            let m = self.items.matched_per_agent;
            match ids.as_slice() {
                [] => {}
                [single] => {
                    let entry = requests.entry(*single).or_insert(0);
                    *entry = (*entry).max(m);
                }
                [first, second] => {
                    let first_share = m.div_ceil(2);
                    let entry = requests.entry(*first).or_insert(0);
                    *entry = (*entry).max(first_share);
                    let entry = requests.entry(*second).or_insert(0);
                    *entry = (*entry).max(m - first_share);
                }
                _ => {}
            }
        }
        requests.into_iter().collect()
    }

    pub fn filler_count(&self) -> usize {
        let matched: usize = self.item_requests().iter().map(|(_, n)| n).sum();
        self.items.total_items.saturating_sub(matched)
    }
}

/// One variant per cyclic shift of the persona assignment across
/// persona-bearing agents; persona-less agents stay fixed.
pub fn expand_rotation(config: &ScenarioConfig) -> Vec<ScenarioConfig> {
    if config.rotation != Rotation::RoundRobin {
        return vec![config.clone()];
    }
    let bearers: Vec<usize> = config
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.persona_mix.is_empty())
        .map(|(i, _)| i)
        .collect();
    let m = bearers.len();
    if m < 2 {
        return vec![config.clone()];
    }
    (0..m)
        .map(|shift| {
            let mut variant = config.clone();
            for (pos, agent_idx) in bearers.iter().enumerate() {
                let source = bearers[(pos + shift) % m];
                variant.agents[*agent_idx].persona_mix = config.agents[source].persona_mix.clone();
            }
            variant
        })
        .collect()
}

/// Supplies transports; implementations decide live vs mock vs emulated.
pub trait TransportFactory: Send + Sync {
    fn chat(&self, model: &str) -> Arc<dyn ChatTransport>;
    fn endpoint(&self, url: &str) -> Arc<dyn PolicyEndpoint>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Maximum concurrent runs; 0 or 1 means sequential.
    pub parallel: usize,
    /// Retain serialized agent-facing contexts on each run (audit/tests).
    pub capture_contexts: bool,
}

/// Everything produced by one auction run.
pub struct RunRecord {
    pub run_index: usize,
    pub variant: usize,
    pub repetition: usize,
    pub seed: u64,
    pub items: Vec<Listing>,
    pub log: Vec<LogLine>,
    pub settlements: Vec<Settlement>,
    pub states: Vec<BidderState>,
    pub engine_incidents: EngineIncidents,
    pub agent_incidents: IncidentSnapshot,
    pub llm_calls: u64,
    /// Per-agent metrics; TrueSkill columns are filled during the fold.
    pub metrics: MetricsReport,
    pub captured_contexts: Vec<String>,
    /// Final profiles per profiling agent: agent name -> rival name -> weights.
    pub profiles: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

pub struct SettingOutcome {
    pub config: ScenarioConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: MetricsReport,
}

/// Items matched to any of the agent's personas, by listing id.
fn aligned_items(items: &[Listing], agent: &AgentSpec) -> BTreeSet<String> {
    let personas = agent.persona_ids();
    items
        .iter()
        .filter(|l| personas.iter().any(|p| l.matched_personas.contains(p)))
        .map(|l| l.id.clone())
        .collect()
}

/// Mean final KL of `agent_name`'s profiles against ground truth, split by
/// single-persona and mix-of-two rivals.
pub fn kl_columns(
    catalog: &Catalog,
    variant: &ScenarioConfig,
    profiles: &BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    agent_name: &str,
) -> (Option<f64>, Option<f64>) {
    let Some(mine) = profiles.get(agent_name) else {
        return (None, None);
    };
    let mut singles = Vec::new();
    let mut mixes = Vec::new();
    for (rival_idx, rival) in variant.agents.iter().enumerate() {
        if rival.name == agent_name {
            continue;
        }
        let Some(weights) = mine.get(&rival.name) else {
            continue;
        };
        let ids = rival.persona_ids();
        if ids.is_empty() {
            continue;
        }
        let Ok(gt) = ground_truth_vector(&ids, catalog.k()) else {
            continue;
        };
        let vector = ProfileVector {
            rival_id: BidderId(rival_idx),
            weights: weights.clone(),
        };
        if let Ok(kl) = profiling_kl(&gt, &vector) {
            if ids.len() == 1 {
                singles.push(kl);
            } else {
                mixes.push(kl);
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    (mean(&singles), mean(&mixes))
}

/// Executes one seeded auction for a (possibly rotated) scenario variant.
pub fn run_single(
    catalog: &Catalog,
    variant: &ScenarioConfig,
    run_index: usize,
    variant_index: usize,
    repetition: usize,
    seed: u64,
    factory: &dyn TransportFactory,
    options: &RunOptions,
) -> Result<RunRecord, ExperimentError> {
    let items = select_scenario_items(catalog, &variant.item_requests(), variant.filler_count(), seed)?;
    let incidents = Arc::new(IncidentCounters::default());
    let calls = Arc::new(AtomicU64::new(0));

    let mut bidders = Vec::new();
    for (idx, spec) in variant.agents.iter().enumerate() {
        let model = match &spec.policy {
            PolicyKind::Llm { model, .. } => model.clone(),
            _ => String::new(),
        };
        let chat: Arc<dyn ChatTransport> = Arc::new(CountingTransport::new(
            factory.chat(&model),
            calls.clone(),
        ));
        let calls_for_endpoint = calls.clone();
        let endpoints = move |url: &str| -> Arc<dyn PolicyEndpoint> {
            Arc::new(CountingTransport::new(
                factory.endpoint(url),
                calls_for_endpoint.clone(),
            ))
        };
        let build = AgentBuildContext {
            catalog,
            all_specs: &variant.agents,
            my_index: idx,
            chat,
            endpoints: &endpoints,
            incidents: incidents.clone(),
        };
        bidders.push(BidderSetup {
            name: spec.name.clone(),
            initial_budget: spec.initial_budget,
            policy: build_agent(&build)?,
        });
    }

    let auction = Auction::new(
        items.clone(),
        bidders,
        AuctionConfig {
            min_increment_rate: variant.min_increment_rate,
            cycle_cap: variant.cycle_cap,
            capture_contexts: options.capture_contexts,
        },
    )?;
    let outcome = auction.run()?;

    let mut profiles: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (idx, policy) in outcome.policies.iter().enumerate() {
        if let Some(knowledge) = policy.profile_knowledge() {
            let mine: BTreeMap<String, Vec<f64>> = knowledge
                .profiles
                .iter()
                .filter_map(|(rival, profile)| {
                    variant
                        .agents
                        .get(rival.0)
                        .map(|spec| (spec.name.clone(), profile.weights.clone()))
                })
                .collect();
            profiles.insert(variant.agents[idx].name.clone(), mine);
        }
    }

    let mut bidder_metrics = Vec::new();
    for (idx, spec) in variant.agents.iter().enumerate() {
        let aligned = aligned_items(&items, spec);
        let (kl_single, kl_mix) = kl_columns(catalog, variant, &profiles, &spec.name);
        bidder_metrics.push(BidderMetrics {
            bidder: spec.name.clone(),
            profit_ratio: profit_ratio(&outcome.settlements, &items, BidderId(idx)),
            acquisition_rate: acquisition_rate(&outcome.settlements, &aligned, BidderId(idx)),
            trueskill_mu: 0.0,
            trueskill_sigma: 0.0,
            kl_single,
            kl_mix,
        });
    }

    Ok(RunRecord {
        run_index,
        variant: variant_index,
        repetition,
        seed,
        items,
        log: outcome.log,
        settlements: outcome.settlements,
        states: outcome.states,
        engine_incidents: outcome.incidents,
        agent_incidents: incidents.snapshot(),
        llm_calls: calls.load(Ordering::Relaxed),
        metrics: MetricsReport {
            bidders: bidder_metrics,
        },
        captured_contexts: outcome.captured_contexts,
        profiles,
    })
}

/// Runs every rotation variant and repetition of one setting, folds
/// TrueSkill over the runs in order, and aggregates per-role metrics.
/// Role identity follows the agent name, which rotation never changes.
pub fn run_setting(
    catalog: &Catalog,
    config: &ScenarioConfig,
    factory: &dyn TransportFactory,
    options: &RunOptions,
) -> Result<SettingOutcome, ExperimentError> {
    config.validate(catalog)?;
    let variants = expand_rotation(config);
    let jobs: Vec<(usize, usize, usize, u64)> = variants
        .iter()
        .enumerate()
        .flat_map(|(v, _)| (0..config.repetitions).map(move |r| (v, r)))
        .enumerate()
        .map(|(i, (v, r))| (i, v, r, config.seed.wrapping_add(i as u64)))
        .collect();

    let execute = |(run_index, variant_idx, repetition, seed): &(usize, usize, usize, u64)| {
        run_single(
            catalog,
            &variants[*variant_idx],
            *run_index,
            *variant_idx,
            *repetition,
            *seed,
            factory,
            options,
        )
    };

    let results: Vec<Result<RunRecord, ExperimentError>> = if options.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallel)
            .build()
            .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter().map(execute).collect()
        })
    } else {
        jobs.iter().map(execute).collect()
    };
    let mut runs = Vec::new();
    for result in results {
        runs.push(result?);
    }
    runs.sort_by_key(|r| r.run_index);

    // Sequential TrueSkill fold in run order; each run's rows record the
    // ratings as of that update.
    let ts_config = TrueSkillConfig::default();
    let mut ratings: Vec<Rating> = config
        .agents
        .iter()
        .map(|_| Rating::fresh(&ts_config))
        .collect();
    for run in &mut runs {
        let profits = per_bidder_profits(&run.settlements, &run.items, config.agents.len());
        let ranks = ranks_from_profits(&profits);
        ratings = rate_free_for_all(&ts_config, &ratings, &ranks);
        for (idx, metric) in run.metrics.bidders.iter_mut().enumerate() {
            metric.trueskill_mu = ratings[idx].mu;
            metric.trueskill_sigma = ratings[idx].sigma;
        }
    }

    let aggregate = aggregate_runs(config, &runs, &ratings);
    Ok(SettingOutcome {
        config: config.clone(),
        runs,
        aggregate,
    })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn aggregate_runs(
    config: &ScenarioConfig,
    runs: &[RunRecord],
    final_ratings: &[Rating],
) -> MetricsReport {
    let bidders = config
        .agents
        .iter()
        .enumerate()
        .map(|(idx, spec)| BidderMetrics {
            bidder: spec.name.clone(),
            profit_ratio: mean_of(runs.iter().map(|r| r.metrics.bidders[idx].profit_ratio)),
            acquisition_rate: mean_of(
                runs.iter().map(|r| r.metrics.bidders[idx].acquisition_rate),
            ),
            trueskill_mu: final_ratings[idx].mu,
            trueskill_sigma: final_ratings[idx].sigma,
            kl_single: mean_of(runs.iter().map(|r| r.metrics.bidders[idx].kl_single)),
            kl_mix: mean_of(runs.iter().map(|r| r.metrics.bidders[idx].kl_mix)),
        })
        .collect();
    MetricsReport { bidders }
}

/// Engagement rows for a run, zero-filled over bidders and items.
pub fn engagement_rows(run: &RunRecord, config: &ScenarioConfig) -> Vec<(String, String, u64)> {
    engagement_counts(&run.log, &run.items, config.agents.len())
        .into_iter()
        .map(|((bidder, listing), raises)| {
            (
                config
                    .agents
                    .get(bidder)
                    .map(|a| a.name.clone())
                    .unwrap_or_else(|| format!("Bidder {bidder}")),
                listing,
                raises,
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scenario families
// ---------------------------------------------------------------------------

const DEFAULT_BUDGET: crate::catalog::Money = 1_000_000;
const DEFAULT_OVERHEAD: f64 = 0.10;

fn persona(id: usize) -> Vec<PersonaShare> {
    vec![PersonaShare {
        persona: PersonaId(id),
        weight: 1.0,
    }]
}

fn persona_mix(a: usize, b: usize) -> Vec<PersonaShare> {
    vec![
        PersonaShare {
            persona: PersonaId(a),
            weight: 0.5,
        },
        PersonaShare {
            persona: PersonaId(b),
            weight: 0.5,
        },
    ]
}

fn llm_agent(
    name: &str,
    mix: Vec<PersonaShare>,
    model: &str,
    tom_level: u8,
    persona_source: PersonaSource,
    strategy: StrategyChoice,
) -> AgentSpec {
    AgentSpec {
        name: name.into(),
        persona_mix: mix,
        overhead: DEFAULT_OVERHEAD,
        initial_budget: DEFAULT_BUDGET,
        policy: PolicyKind::Llm {
            model: model.into(),
            tom_level,
            persona_source,
            strategy,
        },
    }
}

fn plain_llm(name: &str, mix: Vec<PersonaShare>, model: &str) -> AgentSpec {
    llm_agent(name, mix, model, 0, PersonaSource::None, StrategyChoice::None)
}

/// Persona-impact scenario: a persona-less master against two persona
/// rivals, three matched items each among ten.
pub fn persona_impact(catalog: PathBuf) -> ExperimentFile {
    let model = "gpt-4o-mini";
    ExperimentFile {
        name: "persona_impact".into(),
        settings: vec![ScenarioConfig {
            name: "persona_impact".into(),
            catalog,
            items: ItemsSpec {
                matched_per_agent: 3,
                total_items: 10,
            },
            agents: vec![
                plain_llm("Master", vec![], model),
                plain_llm("Rival 1", persona(0), model),
                plain_llm("Rival 2", persona(1), model),
            ],
            min_increment_rate: 0.10,
            cycle_cap: 50,
            repetitions: 5,
            rotation: Rotation::None,
            seed: 1101,
        }],
    }
}

/// The four-step competition ladder: master without persona, with a unique
/// persona, sharing Rival 2's persona, and all agents sharing one persona.
pub fn competition_ladder(catalog: PathBuf) -> ExperimentFile {
    let model = "gpt-4o-mini";
    let items = ItemsSpec {
        matched_per_agent: 2,
        total_items: 10,
    };
    let setting = |name: &str, master_mix: Vec<PersonaShare>, r1: usize, r2: usize, seed: u64| {
        ScenarioConfig {
            name: name.into(),
            catalog: catalog.clone(),
            items,
            agents: vec![
                plain_llm("Master", master_mix, model),
                plain_llm("Rival 1", persona(r1), model),
                plain_llm("Rival 2", persona(r2), model),
            ],
            min_increment_rate: 0.10,
            cycle_cap: 50,
            repetitions: 5,
            rotation: Rotation::RoundRobin,
            seed,
        }
    };
    ExperimentFile {
        name: "competition_ladder".into(),
        settings: vec![
            setting("master_wo_persona", vec![], 0, 1, 2201),
            setting("master_w_persona", persona(2), 0, 1, 2202),
            setting("some_competition", persona(1), 0, 1, 2203),
            setting("more_competition", persona(0), 0, 0, 2204),
        ],
    }
}

/// Matched-item sweep: the master profiles a single-persona rival and a
/// mix-of-two rival while their matched-house count M ranges over 0..=4.
pub fn matched_items_sweep(catalog: PathBuf) -> ExperimentFile {
    let model = "gpt-4o";
    let settings = (0..=4)
        .map(|m| ScenarioConfig {
            name: format!("matched_{m}"),
            catalog: catalog.clone(),
            items: ItemsSpec {
                matched_per_agent: m,
                total_items: 10,
            },
            agents: vec![
                llm_agent(
                    "Master",
                    vec![],
                    model,
                    1,
                    PersonaSource::Inferred,
                    StrategyChoice::None,
                ),
                plain_llm("Rival 1", persona(0), model),
                plain_llm("Rival 2", persona_mix(1, 2), model),
            ],
            min_increment_rate: 0.10,
            cycle_cap: 50,
            repetitions: 5,
            rotation: Rotation::None,
            seed: 3300 + m as u64,
        })
        .collect();
    ExperimentFile {
        name: "matched_items_sweep".into(),
        settings,
    }
}

/// Profiling-capacity sweep: 2 to 6 rivals against one profiling master,
/// fifteen items so every agent keeps at least two aligned items.
pub fn bidder_count_sweep(catalog: PathBuf) -> ExperimentFile {
    let model = "gpt-4o";
    let settings = (2..=6)
        .map(|rivals| {
            let mut agents = vec![llm_agent(
                "Master",
                vec![],
                model,
                1,
                PersonaSource::Inferred,
                StrategyChoice::None,
            )];
            for r in 0..rivals {
                agents.push(plain_llm(&format!("Rival {}", r + 1), persona(r), model));
            }
            ScenarioConfig {
                name: format!("rivals_{rivals}"),
                catalog: catalog.clone(),
                items: ItemsSpec {
                    matched_per_agent: 2,
                    total_items: 15,
                },
                agents,
                min_increment_rate: 0.10,
                cycle_cap: 50,
                repetitions: 5,
                rotation: Rotation::None,
                seed: 4400 + rivals as u64,
            }
        })
        .collect();
    ExperimentFile {
        name: "bidder_count_sweep".into(),
        settings,
    }
}

pub const RLACT_DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8173/recommend";

/// The six theory-of-mind settings. Every agent carries a persona with two
/// aligned items; the master's persona knowledge, strategy module and ToM
/// order vary per row. In the second-order row all agents profile each
/// other and use the strategy module; the master adds second-order ToM.
pub fn tom_settings(catalog: PathBuf) -> ExperimentFile {
    let model = "claude-3-5-sonnet";
    let items = ItemsSpec {
        matched_per_agent: 2,
        total_items: 10,
    };
    let rival = |name: &str, pid: usize| plain_llm(name, persona(pid), model);
    let base = |name: &str,
                master: AgentSpec,
                rival1: AgentSpec,
                rival2: AgentSpec,
                seed: u64| ScenarioConfig {
        name: name.into(),
        catalog: catalog.clone(),
        items,
        agents: vec![master, rival1, rival2],
        min_increment_rate: 0.10,
        cycle_cap: 50,
        repetitions: 5,
        rotation: Rotation::RoundRobin,
        seed,
    };
    let settings = vec![
        base(
            "baseline_wo_tom",
            plain_llm("Master", persona(2), model),
            rival("Rival 1", 0),
            rival("Rival 2", 1),
            5501,
        ),
        base(
            "tom_true_persona",
            llm_agent(
                "Master",
                persona(2),
                model,
                1,
                PersonaSource::True,
                StrategyChoice::None,
            ),
            rival("Rival 1", 0),
            rival("Rival 2", 1),
            5502,
        ),
        base(
            "tom_true_persona_expact",
            llm_agent(
                "Master",
                persona(2),
                model,
                1,
                PersonaSource::True,
                StrategyChoice::Expert,
            ),
            rival("Rival 1", 0),
            rival("Rival 2", 1),
            5503,
        ),
        base(
            "tom_inferred_expact",
            llm_agent(
                "Master",
                persona(2),
                model,
                1,
                PersonaSource::Inferred,
                StrategyChoice::Expert,
            ),
            rival("Rival 1", 0),
            rival("Rival 2", 1),
            5504,
        ),
        base(
            "tom_inferred_rlact",
            llm_agent(
                "Master",
                persona(2),
                model,
                1,
                PersonaSource::Inferred,
                StrategyChoice::Remote {
                    endpoint: RLACT_DEFAULT_ENDPOINT.into(),
                },
            ),
            rival("Rival 1", 0),
            rival("Rival 2", 1),
            5505,
        ),
        base(
            "second_order_tom",
            llm_agent(
                "Master",
                persona(2),
                model,
                2,
                PersonaSource::Inferred,
                StrategyChoice::Expert,
            ),
            llm_agent(
                "Rival 1",
                persona(0),
                model,
                1,
                PersonaSource::Inferred,
                StrategyChoice::Expert,
            ),
            llm_agent(
                "Rival 2",
                persona(1),
                model,
                1,
                PersonaSource::Inferred,
                StrategyChoice::Expert,
            ),
            5506,
        ),
    ];
    ExperimentFile {
        name: "tom_settings".into(),
        settings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, mix: Vec<PersonaShare>) -> AgentSpec {
        AgentSpec {
            name: name.into(),
            persona_mix: mix,
            overhead: 0.1,
            initial_budget: 1_000_000,
            policy: PolicyKind::ScriptedPersonaLoyal,
        }
    }

    fn config(agents: Vec<AgentSpec>, rotation: Rotation) -> ScenarioConfig {
        ScenarioConfig {
            name: "test".into(),
            catalog: PathBuf::from("assets/catalog.json"),
            items: ItemsSpec {
                matched_per_agent: 2,
                total_items: 8,
            },
            agents,
            min_increment_rate: 0.10,
            cycle_cap: 50,
            repetitions: 1,
            rotation,
            seed: 7,
        }
    }

    #[test]
    fn rotation_shifts_persona_bearing_agents_only() {
        let cfg = config(
            vec![
                spec("Master", vec![]),
                spec("Rival 1", persona(0)),
                spec("Rival 2", persona(1)),
            ],
            Rotation::RoundRobin,
        );
        let variants = expand_rotation(&cfg);
        assert_eq!(variants.len(), 2);
        assert!(variants.iter().all(|v| v.agents[0].persona_mix.is_empty()));
        assert_eq!(variants[0].agents[1].persona_mix, persona(0));
        assert_eq!(variants[1].agents[1].persona_mix, persona(1));
        assert_eq!(variants[1].agents[2].persona_mix, persona(0));
    }

    #[test]
    fn rotation_three_bearers_three_variants() {
        let cfg = config(
            vec![
                spec("Master", persona(2)),
                spec("Rival 1", persona(0)),
                spec("Rival 2", persona(1)),
            ],
            Rotation::RoundRobin,
        );
        assert_eq!(expand_rotation(&cfg).len(), 3);
        let none = config(vec![spec("A", persona(0)), spec("B", persona(1))], Rotation::None);
        assert_eq!(expand_rotation(&none).len(), 1);
    }

    #[test]
    fn item_requests_share_matched_items_for_shared_personas() {
        let cfg = config(
            vec![
                spec("Master", persona(0)),
                spec("Rival 1", persona(0)),
                spec("Rival 2", persona(0)),
            ],
            Rotation::None,
        );
        assert_eq!(cfg.item_requests(), vec![(PersonaId(0), 2)]);
        assert_eq!(cfg.filler_count(), 6);
    }

    #[test]
    fn item_requests_split_mixes() {
        let cfg = config(
            vec![spec("A", persona_mix(1, 4)), spec("B", persona(0))],
            Rotation::None,
        );
        let requests = cfg.item_requests();
        assert_eq!(
            requests,
            vec![(PersonaId(0), 2), (PersonaId(1), 1), (PersonaId(4), 1)]
        );
    }

    #[test]
    fn builders_emit_expected_settings() {
        let catalog = PathBuf::from("assets/catalog.json");
        let ladder = competition_ladder(catalog.clone());
        assert_eq!(ladder.settings.len(), 4);
        assert!(ladder.settings[0].agents[0].persona_mix.is_empty());
        // Some-competition: master shares Rival 2's persona.
        assert_eq!(
            ladder.settings[2].agents[0].persona_mix,
            ladder.settings[2].agents[2].persona_mix
        );
        // More-competition: all personas identical.
        let more = &ladder.settings[3];
        assert_eq!(more.agents[0].persona_mix, more.agents[1].persona_mix);
        assert_eq!(more.agents[1].persona_mix, more.agents[2].persona_mix);

        let sweep = matched_items_sweep(catalog.clone());
        assert_eq!(sweep.settings.len(), 5);
        assert_eq!(sweep.settings[0].items.matched_per_agent, 0);
        assert_eq!(sweep.settings[4].items.matched_per_agent, 4);

        let counts = bidder_count_sweep(catalog.clone());
        assert_eq!(counts.settings.len(), 5);
        assert_eq!(counts.settings[4].agents.len(), 7);
        assert_eq!(counts.settings[4].items.total_items, 15);

        let tom = tom_settings(catalog);
        assert_eq!(tom.settings.len(), 6);
        let master = &tom.settings[1].agents[0];
        match &master.policy {
            PolicyKind::Llm {
                persona_source,
                strategy,
                ..
            } => {
                assert_eq!(*persona_source, PersonaSource::True);
                assert_eq!(*strategy, StrategyChoice::None);
            }
            other => panic!("expected llm master, got {other:?}"),
        }
        for agent in &tom.settings[5].agents {
            match &agent.policy {
                PolicyKind::Llm {
                    tom_level,
                    strategy,
                    ..
                } => {
                    assert!(*tom_level >= 1);
                    assert_eq!(*strategy, StrategyChoice::Expert);
                }
                other => panic!("expected llm agent, got {other:?}"),
            }
        }
        match &tom.settings[5].agents[0].policy {
            PolicyKind::Llm { tom_level, .. } => assert_eq!(*tom_level, 2),
            _ => unreachable!(),
        }
    }
}
