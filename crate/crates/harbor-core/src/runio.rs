//! Run persistence: manifests, event logs, replay verification and report
//! emission.
//!
//! Every `run` invocation writes one output directory holding exactly one
//! manifest (with a byte-preserved config snapshot), per-run event logs and
//! profile dumps, and the report CSVs. A manifest alone suffices to
//! re-execute a mock or scripted run bit-identically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::transport::{
    ChatTransport, FixtureFile, HttpChatTransport, HttpPolicyEndpoint, MockTransport,
    PolicyEndpoint, RecordingSink, RecordingTransport, TransportError, BASE_URL_ENV,
    RLACT_URL_ENV,
};
use crate::catalog::Catalog;
use crate::engine::{parse_jsonl, to_jsonl, verify_log, LogLine, ReplayError};
use crate::experiments::{
    engagement_rows, expand_rotation, run_setting, ExperimentError, ExperimentFile, RunOptions,
    ScenarioConfig, SettingOutcome, TransportFactory,
};
use crate::metrics::report::{
    summary_table, write_engagement_csv, write_runs_csv, EngagementRow, RunRow, SettingSummary,
};
use crate::metrics::{
    per_bidder_profits, ranks_from_profits, rate_free_for_all, BidderMetrics, MetricsReport,
    Rating, TrueSkillConfig,
};


#[derive(Debug, Error)]
pub enum RunIoError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("output directory {0} already exists (use --force to overwrite)")]
    OutputExists(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunIoError + '_ {
    move |source| RunIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Transport modes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportMode {
    /// OpenAI-compatible HTTP endpoint from `HARBOR_BASE_URL`.
    Live,
    /// Built-in deterministic emulator; fully offline.
    Emulated,
    /// Replay canned replies from a fixture file.
    Mock { fixtures: PathBuf },
    /// Run live (or emulated when no base URL is configured) and capture
    /// every exchange into a fixture file.
    Record { fixtures: PathBuf },
}

impl TransportMode {
    pub fn label(&self) -> &'static str {
        match self {
            TransportMode::Live => "live",
            TransportMode::Emulated => "emulated",
            TransportMode::Mock { .. } => "mock",
            TransportMode::Record { .. } => "record",
        }
    }

    pub fn fixture_path(&self) -> Option<&Path> {
        match self {
            TransportMode::Mock { fixtures } | TransportMode::Record { fixtures } => {
                Some(fixtures)
            }
            _ => None,
        }
    }
}

/// A transport that answers both chat prompts and remote-policy requests;
/// used to swap a custom base under record mode (fixture generation).
pub trait DualTransport: ChatTransport + PolicyEndpoint {}
impl<T: ChatTransport + PolicyEndpoint> DualTransport for T {}

struct LiveFactory {
    base_url: String,
    chats: Mutex<BTreeMap<String, Arc<dyn ChatTransport>>>,
}

impl LiveFactory {
    fn new(base_url: String) -> Self {
        LiveFactory {
            base_url,
            chats: Mutex::new(BTreeMap::new()),
        }
    }
}

impl TransportFactory for LiveFactory {
    fn chat(&self, model: &str) -> Arc<dyn ChatTransport> {
        let mut chats = self.chats.lock().expect("live factory lock");
        chats
            .entry(model.to_string())
            .or_insert_with(|| Arc::new(HttpChatTransport::new(self.base_url.clone(), model)))
            .clone()
    }

    fn endpoint(&self, url: &str) -> Arc<dyn PolicyEndpoint> {
        let url = std::env::var(RLACT_URL_ENV).unwrap_or_else(|_| url.to_string());
        Arc::new(HttpPolicyEndpoint::new(url))
    }
}

struct SharedFactory {
    transport: Arc<dyn DualTransport>,
}

impl TransportFactory for SharedFactory {
    fn chat(&self, _model: &str) -> Arc<dyn ChatTransport> {
        self.transport.clone()
    }

    fn endpoint(&self, _url: &str) -> Arc<dyn PolicyEndpoint> {
        self.transport.clone()
    }
}

struct RecordingFactory {
    inner: Box<dyn TransportFactory>,
    sink: RecordingSink,
}

impl TransportFactory for RecordingFactory {
    fn chat(&self, model: &str) -> Arc<dyn ChatTransport> {
        Arc::new(RecordingTransport::new(self.inner.chat(model), self.sink.clone()))
    }

    fn endpoint(&self, url: &str) -> Arc<dyn PolicyEndpoint> {
        Arc::new(RecordingTransport::new(
            self.inner.endpoint(url),
            self.sink.clone(),
        ))
    }
}

pub struct TransportSetup {
    pub factory: Box<dyn TransportFactory>,
    pub sink: Option<RecordingSink>,
}

/// Builds the transport stack for a mode. `base_override` replaces the live
/// (or emulated) base under record mode.
pub fn build_transport(
    mode: &TransportMode,
    base_override: Option<Arc<dyn DualTransport>>,
) -> Result<TransportSetup, RunIoError> {
    match mode {
        TransportMode::Live => {
            let base_url = std::env::var(BASE_URL_ENV).map_err(|_| {
                RunIoError::Config(format!(
                    "live transport requires the {BASE_URL_ENV} environment variable"
                ))
            })?;
            Ok(TransportSetup {
                factory: Box::new(LiveFactory::new(base_url)),
                sink: None,
            })
        }
        TransportMode::Emulated => Ok(TransportSetup {
            factory: Box::new(SharedFactory {
                transport: Arc::new(crate::agents::emulator::EmulatedLlm),
            }),
            sink: None,
        }),
        TransportMode::Mock { fixtures } => {
            let transport = Arc::new(MockTransport::from_file(fixtures)?);
            Ok(TransportSetup {
                factory: Box::new(SharedFactory { transport }),
                sink: None,
            })
        }
        TransportMode::Record { .. } => {
            let inner: Box<dyn TransportFactory> = if let Some(base) = base_override {
                Box::new(SharedFactory { transport: base })
            } else if let Ok(base_url) = std::env::var(BASE_URL_ENV) {
                Box::new(LiveFactory::new(base_url))
            } else {
                Box::new(SharedFactory {
                    transport: Arc::new(crate::agents::emulator::EmulatedLlm),
                })
            };
            let sink = RecordingSink::new();
            Ok(TransportSetup {
                factory: Box::new(RecordingFactory {
                    inner,
                    sink: sink.clone(),
                }),
                sink: Some(sink),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestIncidents {
    pub forced_withdrawals: u64,
    pub hook_failures: u64,
    pub parse_fallbacks: u64,
    pub hallucinations: u64,
    pub transport_errors: u64,
    pub clamped_bids: u64,
}

impl ManifestIncidents {
    pub fn unhandled(&self) -> u64 {
        self.forced_withdrawals
            + self.hook_failures
            + self.parse_fallbacks
            + self.hallucinations
            + self.transport_errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingManifest {
    pub name: String,
    pub catalog_path: String,
    pub run_seeds: Vec<u64>,
    /// Event-log paths relative to the run directory.
    pub event_logs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_utc: String,
    pub finished_utc: Option<String>,
    pub config_path: String,
    /// Byte-preserved contents of the config file as executed.
    pub config_snapshot: String,
    pub seed_override: Option<u64>,
    pub transport: String,
    pub fixture_path: Option<String>,
    pub parallel: usize,
    pub settings: Vec<SettingManifest>,
    pub llm_call_count: u64,
    pub incidents: ManifestIncidents,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunIoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| RunIoError::Config(format!("bad manifest: {e}")))
    }

    pub fn save(&self, dir: &Path) -> Result<(), RunIoError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| RunIoError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(io_err(&path))
    }
}

// ---------------------------------------------------------------------------
// Run execution
// ---------------------------------------------------------------------------

/// A parsed config source: either an experiment file or a previous run's
/// manifest (detected by its `config_snapshot` field), whose embedded
/// snapshot re-executes bit-identically.
pub struct ConfigSource {
    pub experiment: ExperimentFile,
    pub raw: String,
    pub config_path: PathBuf,
    pub seed_override: Option<u64>,
    pub transport: Option<TransportMode>,
}

pub fn load_config_source(path: &Path) -> Result<ConfigSource, RunIoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| RunIoError::Config(format!("{} is not valid JSON: {e}", path.display())))?;
    if value.get("config_snapshot").is_some() {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| RunIoError::Config(format!("bad manifest {}: {e}", path.display())))?;
        let experiment: ExperimentFile =
            serde_json::from_str(&manifest.config_snapshot).map_err(|e| {
                RunIoError::Config(format!("manifest config snapshot does not parse: {e}"))
            })?;
        let transport = match manifest.transport.as_str() {
            "live" => Some(TransportMode::Live),
            "emulated" => Some(TransportMode::Emulated),
            "mock" => manifest.fixture_path.as_ref().map(|f| TransportMode::Mock {
                fixtures: PathBuf::from(f),
            }),
            _ => None,
        };
        Ok(ConfigSource {
            experiment,
            raw: manifest.config_snapshot.clone(),
            config_path: PathBuf::from(&manifest.config_path),
            seed_override: manifest.seed_override,
            transport,
        })
    } else {
        let experiment: ExperimentFile = serde_json::from_str(&text).map_err(|e| {
            RunIoError::Config(format!("{} is not a valid experiment: {e}", path.display()))
        })?;
        Ok(ConfigSource {
            experiment,
            raw: text,
            config_path: path.to_path_buf(),
            seed_override: None,
            transport: None,
        })
    }
}

/// Resolves a path stored in a manifest: as given, then against each
/// ancestor of the run directory (shipped run dirs store repo-relative
/// paths).
fn resolve_stored_path(stored: &str, run_dir: &Path) -> PathBuf {
    let direct = PathBuf::from(stored);
    if direct.exists() {
        return direct;
    }
    for ancestor in run_dir.ancestors() {
        let candidate = ancestor.join(stored);
        if candidate.exists() {
            return candidate;
        }
    }
    direct
}

fn resolve_catalog_path(config_path: &Path, catalog: &Path) -> PathBuf {
    if catalog.is_absolute() {
        return catalog.to_path_buf();
    }
    let from_config = config_path
        .parent()
        .map(|p| p.join(catalog))
        .filter(|p| p.exists());
    if let Some(p) = from_config {
        return p;
    }
    // Checked-in configs refer to paths relative to the repository root;
    // fall back to one directory up from the config file, then the CWD.
    let up = config_path
        .parent()
        .and_then(|p| p.parent())
        .map(|p| p.join(catalog))
        .filter(|p| p.exists());
    up.unwrap_or_else(|| catalog.to_path_buf())
}

/// Applies a seed override: setting i runs with `seed + i`.
fn effective_settings(source: &ConfigSource, seed: Option<u64>) -> Vec<ScenarioConfig> {
    source
        .experiment
        .settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            if let Some(seed) = seed {
                s.seed = seed + i as u64;
            }
            s
        })
        .collect()
}

pub struct RunRequest {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub parallel: usize,
    pub transport: TransportMode,
    pub force: bool,
    pub capture_contexts: bool,
    /// Replaces the record-mode base transport (fixture generation).
    pub base_override: Option<Arc<dyn DualTransport>>,
}

pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub outcomes: Vec<SettingOutcome>,
}

/// Executes an experiment end to end: runs every setting, persists event
/// logs, profiles, reports and the manifest under `out_dir/<run_id>`.
pub fn execute_run(request: RunRequest) -> Result<RunArtifacts, RunIoError> {
    let source = load_config_source(&request.config_path)?;
    let seed_override = request.seed.or(source.seed_override);
    let transport_mode = source
        .transport
        .clone()
        .unwrap_or_else(|| request.transport.clone());
    let run_id = match seed_override {
        Some(seed) => format!("{}-seed{seed}", source.experiment.name),
        None => source.experiment.name.clone(),
    };
    let run_dir = request.out_dir.join(&run_id);
    if run_dir.exists() {
        if request.force {
            std::fs::remove_dir_all(&run_dir).map_err(io_err(&run_dir))?;
        } else {
            return Err(RunIoError::OutputExists(run_dir.display().to_string()));
        }
    }
    std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;

    let setup = build_transport(&transport_mode, request.base_override.clone())?;
    let options = RunOptions {
        parallel: request.parallel,
        capture_contexts: request.capture_contexts,
    };

    let mut manifest = RunManifest {
        run_id: run_id.clone(),
        created_utc: chrono::Utc::now().to_rfc3339(),
        finished_utc: None,
        config_path: source.config_path.display().to_string(),
        config_snapshot: source.raw.clone(),
        seed_override,
        transport: transport_mode.label().to_string(),
        fixture_path: transport_mode
            .fixture_path()
            .map(|p| p.display().to_string()),
        parallel: request.parallel,
        settings: Vec::new(),
        llm_call_count: 0,
        incidents: ManifestIncidents::default(),
    };

    let mut catalogs: BTreeMap<PathBuf, Arc<Catalog>> = BTreeMap::new();
    let mut outcomes = Vec::new();
    let settings = effective_settings(&source, seed_override);
    let result: Result<(), RunIoError> = (|| {
        for setting in &settings {
            let catalog_path = resolve_catalog_path(&source.config_path, &setting.catalog);
            let catalog = match catalogs.get(&catalog_path) {
                Some(c) => c.clone(),
                None => {
                    let loaded = Arc::new(Catalog::load(&catalog_path).map_err(|e| {
                        RunIoError::Config(format!(
                            "catalog {}: {e}",
                            catalog_path.display()
                        ))
                    })?);
                    catalogs.insert(catalog_path.clone(), loaded.clone());
                    loaded
                }
            };
            let outcome = run_setting(&catalog, setting, setup.factory.as_ref(), &options)?;
            let mut setting_manifest = SettingManifest {
                name: setting.name.clone(),
                catalog_path: catalog_path.display().to_string(),
                run_seeds: Vec::new(),
                event_logs: Vec::new(),
            };
            for run in &outcome.runs {
                let rel = format!("settings/{}/run_{:03}", setting.name, run.run_index);
                let run_path = run_dir.join(&rel);
                std::fs::create_dir_all(&run_path).map_err(io_err(&run_path))?;
                let log_rel = format!("{rel}/events.jsonl");
                let log_path = run_dir.join(&log_rel);
                std::fs::write(&log_path, to_jsonl(&run.log)).map_err(io_err(&log_path))?;
                let profiles_path = run_path.join("profiles.json");
                let profiles_text = serde_json::to_string_pretty(&run.profiles)
                    .map_err(|e| RunIoError::Config(e.to_string()))?;
                std::fs::write(&profiles_path, profiles_text).map_err(io_err(&profiles_path))?;
                manifest.llm_call_count += run.llm_calls;
                manifest.incidents.forced_withdrawals += run.engine_incidents.forced_withdrawals;
                manifest.incidents.hook_failures += run.engine_incidents.hook_failures;
                manifest.incidents.parse_fallbacks += run.agent_incidents.parse_fallbacks;
                manifest.incidents.hallucinations += run.agent_incidents.hallucinations;
                manifest.incidents.transport_errors += run.agent_incidents.transport_errors;
                manifest.incidents.clamped_bids += run.agent_incidents.clamped_bids;
                setting_manifest.run_seeds.push(run.seed);
                setting_manifest.event_logs.push(log_rel);
            }
            manifest.settings.push(setting_manifest);
            outcomes.push(outcome);
        }
        Ok(())
    })();
    // Persist whatever completed even when a setting failed.
    if let Err(e) = result {
        manifest.save(&run_dir)?;
        return Err(e);
    }

    write_reports(&run_dir, &outcomes)?;
    if let (Some(sink), Some(fixture_path)) = (&setup.sink, transport_mode.fixture_path()) {
        sink.save(fixture_path)?;
    }
    manifest.finished_utc = Some(chrono::Utc::now().to_rfc3339());
    manifest.save(&run_dir)?;
    Ok(RunArtifacts {
        run_dir,
        manifest,
        outcomes,
    })
}

fn write_reports(run_dir: &Path, outcomes: &[SettingOutcome]) -> Result<(), RunIoError> {
    let reports = run_dir.join("reports");
    std::fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    let mut run_rows = Vec::new();
    let mut engagement = Vec::new();
    let mut summaries = Vec::new();
    for outcome in outcomes {
        for run in &outcome.runs {
            let run_label = format!("{}/run_{:03}", outcome.config.name, run.run_index);
            for metric in &run.metrics.bidders {
                run_rows.push(RunRow {
                    run_id: run_label.clone(),
                    bidder: metric.bidder.clone(),
                    profit_ratio: metric.profit_ratio,
                    acquisition_rate: metric.acquisition_rate,
                    trueskill_mu: metric.trueskill_mu,
                    trueskill_sigma: metric.trueskill_sigma,
                    kl_single: metric.kl_single,
                    kl_mix: metric.kl_mix,
                });
            }
            for (bidder, listing, raises) in engagement_rows(run, &outcome.config) {
                engagement.push(EngagementRow {
                    run_id: run_label.clone(),
                    bidder,
                    listing,
                    raises,
                });
            }
        }
        summaries.push(SettingSummary {
            setting: outcome.config.name.clone(),
            report: outcome.aggregate.clone(),
        });
    }
    let runs_csv = reports.join("runs.csv");
    write_runs_csv(&runs_csv, &run_rows).map_err(io_err(&runs_csv))?;
    let engagement_csv = reports.join("engagement.csv");
    write_engagement_csv(&engagement_csv, &engagement).map_err(io_err(&engagement_csv))?;
    let summary = summary_table(&summaries);
    let summary_path = reports.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(io_err(&summary_path))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Replay verification
// ---------------------------------------------------------------------------

pub struct ReplayCheck {
    pub label: String,
    pub result: Result<(), ReplayError>,
}

/// Re-derives every run of a persisted experiment from its event log and
/// compares against the recorded settlements. `path` may be a run directory
/// (containing `manifest.json`) or a single `events.jsonl` inside one.
pub fn replay_verify(path: &Path) -> Result<Vec<ReplayCheck>, RunIoError> {
    let (run_dir, only_log) = if path.is_dir() {
        (path.to_path_buf(), None)
    } else {
        // settings/<name>/run_<i>/events.jsonl is three levels down.
        let run_dir = path
            .ancestors()
            .find(|p| p.join(MANIFEST_FILE).exists())
            .ok_or_else(|| {
                RunIoError::Config(format!(
                    "no {MANIFEST_FILE} found above {}",
                    path.display()
                ))
            })?
            .to_path_buf();
        (run_dir, Some(path.to_path_buf()))
    };
    let manifest = RunManifest::load(run_dir.join(MANIFEST_FILE))?;
    let experiment: ExperimentFile = serde_json::from_str(&manifest.config_snapshot)
        .map_err(|e| RunIoError::Config(format!("manifest config snapshot: {e}")))?;
    let source = ConfigSource {
        experiment,
        raw: manifest.config_snapshot.clone(),
        config_path: PathBuf::from(&manifest.config_path),
        seed_override: manifest.seed_override,
        transport: None,
    };
    let settings = effective_settings(&source, manifest.seed_override);

    let mut checks = Vec::new();
    for (setting_manifest, setting) in manifest.settings.iter().zip(&settings) {
        let catalog_path = resolve_stored_path(&setting_manifest.catalog_path, &run_dir);
        let catalog = Catalog::load(&catalog_path)
            .map_err(|e| RunIoError::Config(format!("catalog: {e}")))?;
        let variants = expand_rotation(setting);
        for (run_idx, log_rel) in setting_manifest.event_logs.iter().enumerate() {
            let log_path = run_dir.join(log_rel);
            if let Some(only) = &only_log {
                let same = log_path
                    .canonicalize()
                    .ok()
                    .zip(only.canonicalize().ok())
                    .map(|(a, b)| a == b)
                    .unwrap_or(false);
                if !same {
                    continue;
                }
            }
            let variant_idx = run_idx / setting.repetitions.max(1);
            let variant = variants
                .get(variant_idx)
                .unwrap_or_else(|| &variants[0]);
            let seed = setting_manifest.run_seeds[run_idx];
            let items = crate::catalog::select_scenario_items(
                &catalog,
                &variant.item_requests(),
                variant.filler_count(),
                seed,
            )
            .map_err(|e| RunIoError::Config(format!("item selection: {e}")))?;
            let budgets: Vec<_> = variant.agents.iter().map(|a| a.initial_budget).collect();
            let label = log_rel.clone();
            let text = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
            let result = parse_jsonl(&text).and_then(|lines| {
                verify_log(&lines, &items, &budgets, variant.min_increment_rate).map(|_| ())
            });
            checks.push(ReplayCheck { label, result });
        }
    }
    if checks.is_empty() {
        return Err(RunIoError::Config(format!(
            "no event logs found under {}",
            run_dir.display()
        )));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Report regeneration
// ---------------------------------------------------------------------------

/// Rebuilds reports (CSVs and the summary table) for a completed run
/// directory from its persisted logs and profile dumps, returning the
/// summary text.
pub fn regenerate_reports(run_dir: &Path) -> Result<String, RunIoError> {
    let manifest = RunManifest::load(run_dir.join(MANIFEST_FILE))?;
    let experiment: ExperimentFile = serde_json::from_str(&manifest.config_snapshot)
        .map_err(|e| RunIoError::Config(format!("manifest config snapshot: {e}")))?;
    let source = ConfigSource {
        experiment,
        raw: manifest.config_snapshot.clone(),
        config_path: PathBuf::from(&manifest.config_path),
        seed_override: manifest.seed_override,
        transport: None,
    };
    let settings = effective_settings(&source, manifest.seed_override);

    let mut run_rows = Vec::new();
    let mut engagement = Vec::new();
    let mut summaries = Vec::new();
    for (setting_manifest, setting) in manifest.settings.iter().zip(&settings) {
        let catalog_path = resolve_stored_path(&setting_manifest.catalog_path, run_dir);
        let catalog = Catalog::load(&catalog_path)
            .map_err(|e| RunIoError::Config(format!("catalog: {e}")))?;
        let variants = expand_rotation(setting);
        let ts_config = TrueSkillConfig::default();
        let mut ratings: Vec<Rating> = setting
            .agents
            .iter()
            .map(|_| Rating::fresh(&ts_config))
            .collect();
        let mut per_run_metrics: Vec<Vec<BidderMetrics>> = Vec::new();
        for (run_idx, log_rel) in setting_manifest.event_logs.iter().enumerate() {
            let log_path = run_dir.join(log_rel);
            let text = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
            let lines: Vec<LogLine> = parse_jsonl(&text)?;
            let variant_idx = run_idx / setting.repetitions.max(1);
            let variant = variants.get(variant_idx).unwrap_or(&variants[0]);
            let seed = setting_manifest.run_seeds[run_idx];
            let items = crate::catalog::select_scenario_items(
                &catalog,
                &variant.item_requests(),
                variant.filler_count(),
                seed,
            )
            .map_err(|e| RunIoError::Config(format!("item selection: {e}")))?;
            let budgets: Vec<_> = variant.agents.iter().map(|a| a.initial_budget).collect();
            let report = verify_log(&lines, &items, &budgets, variant.min_increment_rate)?;
            let profiles_path = run_dir
                .join(log_rel.trim_end_matches("events.jsonl"))
                .join("profiles.json");
            let profiles: BTreeMap<String, BTreeMap<String, Vec<f64>>> =
                std::fs::read_to_string(&profiles_path)
                    .ok()
                    .and_then(|t| serde_json::from_str(&t).ok())
                    .unwrap_or_default();

            let profits = per_bidder_profits(&report.settlements, &items, variant.agents.len());
            let ranks = ranks_from_profits(&profits);
            ratings = rate_free_for_all(&ts_config, &ratings, &ranks);

            let run_label = format!("{}/run_{run_idx:03}", setting.name);
            let mut metrics = Vec::new();
            for (idx, spec) in variant.agents.iter().enumerate() {
                let aligned: std::collections::BTreeSet<String> = items
                    .iter()
                    .filter(|l| {
                        spec.persona_ids()
                            .iter()
                            .any(|p| l.matched_personas.contains(p))
                    })
                    .map(|l| l.id.clone())
                    .collect();
                let (kl_single, kl_mix) =
                    crate::experiments::kl_columns(&catalog, variant, &profiles, &spec.name);
                let m = BidderMetrics {
                    bidder: spec.name.clone(),
                    profit_ratio: crate::metrics::profit_ratio(
                        &report.settlements,
                        &items,
                        crate::engine::BidderId(idx),
                    ),
                    acquisition_rate: crate::metrics::acquisition_rate(
                        &report.settlements,
                        &aligned,
                        crate::engine::BidderId(idx),
                    ),
                    trueskill_mu: ratings[idx].mu,
                    trueskill_sigma: ratings[idx].sigma,
                    kl_single,
                    kl_mix,
                };
                run_rows.push(RunRow {
                    run_id: run_label.clone(),
                    bidder: m.bidder.clone(),
                    profit_ratio: m.profit_ratio,
                    acquisition_rate: m.acquisition_rate,
                    trueskill_mu: m.trueskill_mu,
                    trueskill_sigma: m.trueskill_sigma,
                    kl_single: m.kl_single,
                    kl_mix: m.kl_mix,
                });
                metrics.push(m);
            }
            for ((bidder, listing), raises) in
                crate::metrics::engagement_counts(&lines, &items, variant.agents.len())
            {
                engagement.push(EngagementRow {
                    run_id: run_label.clone(),
                    bidder: variant
                        .agents
                        .get(bidder)
                        .map(|a| a.name.clone())
                        .unwrap_or_else(|| format!("Bidder {bidder}")),
                    listing,
                    raises,
                });
            }
            per_run_metrics.push(metrics);
        }
        let mean = |f: &dyn Fn(&BidderMetrics) -> Option<f64>, idx: usize| {
            let defined: Vec<f64> = per_run_metrics.iter().filter_map(|m| f(&m[idx])).collect();
            if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            }
        };
        let bidders = setting
            .agents
            .iter()
            .enumerate()
            .map(|(idx, spec)| BidderMetrics {
                bidder: spec.name.clone(),
                profit_ratio: mean(&|m| m.profit_ratio, idx),
                acquisition_rate: mean(&|m| m.acquisition_rate, idx),
                trueskill_mu: ratings[idx].mu,
                trueskill_sigma: ratings[idx].sigma,
                kl_single: mean(&|m| m.kl_single, idx),
                kl_mix: mean(&|m| m.kl_mix, idx),
            })
            .collect();
        summaries.push(SettingSummary {
            setting: setting.name.clone(),
            report: MetricsReport { bidders },
        });
    }

    let reports = run_dir.join("reports");
    std::fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    let runs_csv = reports.join("runs.csv");
    write_runs_csv(&runs_csv, &run_rows).map_err(io_err(&runs_csv))?;
    let engagement_csv = reports.join("engagement.csv");
    write_engagement_csv(&engagement_csv, &engagement).map_err(io_err(&engagement_csv))?;
    let summary = summary_table(&summaries);
    let summary_path = reports.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(io_err(&summary_path))?;
    Ok(summary)
}

/// Lints an experiment config against its catalogs without running it.
pub fn validate_config(path: &Path) -> Result<ExperimentFile, RunIoError> {
    let source = load_config_source(path)?;
    for setting in &source.experiment.settings {
        let catalog_path = resolve_catalog_path(&source.config_path, &setting.catalog);
        let catalog = Catalog::load(&catalog_path)
            .map_err(|e| RunIoError::Config(format!("{}: {e}", catalog_path.display())))?;
        setting.validate(&catalog)?;
        // Probe feasibility of the item selection for the base assignment
        // and every rotation variant.
        for variant in expand_rotation(setting) {
            crate::catalog::select_scenario_items(
                &catalog,
                &variant.item_requests(),
                variant.filler_count(),
                setting.seed,
            )
            .map_err(|e| RunIoError::Config(format!("{}: {e}", setting.name)))?;
        }
    }
    Ok(source.experiment)
}

/// Re-loads the fixture file and checks it contains entries (used by tests
/// and the validate command when a fixture path is supplied).
pub fn fixture_entry_count(path: &Path) -> Result<usize, RunIoError> {
    let fixture = FixtureFile::load(path)?;
    Ok(fixture.entries.len())
}
