//! End-to-end experiment runs, comparison tables and the qualitative
//! annotation workflow.

mod config;
mod qualitative;
mod table;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CachedBackend, OpenAiBackend, OracleBackend, ResponseCache, ScriptedBackend};
use crate::eval::{aggregate, score_instance, AliasTable, EvalError, InstanceScore, MatchMode, MatchPolicy, ScoreSet};
use crate::ingest::{sample_subset, IngestError, SampleSpec, SAMPLER_ID};
use crate::io::{read_jsonl, to_jsonl, write_atomic, IoError};
use crate::model::{validate_instance, DatasetTag, Deviation, MrcInstance, Prediction, Strategy, Usage};
use crate::pipeline::run_instance;
use crate::prompt::{PromptEngine, StrategyConfig};

pub use config::{BackendKind, BackendSection, ExperimentConfig, MatchSection, StrategySection};
pub use qualitative::{
    export_qualitative_sample, read_worksheet, tally_qualitative, write_worksheet, QualitativeTally, Relevance,
    SplitTally, WorksheetRow,
};
pub use table::emit_report_table;

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "run_meta.json";
/// Predictions appended as they complete; read back on resume.
pub const JOURNAL_FILE: &str = "predictions.partial.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Qualitative(String),
    #[error("worksheet: {0}")]
    Worksheet(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationCounts {
    /// Answers taken from the last line because no marker was found.
    pub parse_fallbacks: usize,
    pub section_count_mismatches: usize,
    pub missing_sections: usize,
    pub extra_sections: usize,
    pub limit_violations: usize,
    pub ungrounded_sections: usize,
    pub ambiguous_matches: usize,
}

impl DeviationCounts {
    fn add(&mut self, d: &Deviation) {
        match d {
            Deviation::AnswerMarkerMissing => self.parse_fallbacks += 1,
            Deviation::SectionCountMismatch { .. } => self.section_count_mismatches += 1,
            Deviation::NoSections => self.missing_sections += 1,
            Deviation::ExtraSections { count } => self.extra_sections += count,
            Deviation::SectionOutOfLimits { .. } => self.limit_violations += 1,
            Deviation::SectionUngrounded { .. } => self.ungrounded_sections += 1,
        }
    }
}

/// Outcome of one run. `report.json` holds everything except the
/// per-instance records, which go to their own JSONL files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: DatasetTag,
    pub strategy: Strategy,
    pub label: String,
    pub strategy_config: StrategyConfig,
    pub sample: Option<SampleSpec>,
    pub sampler: Option<String>,
    pub instances: usize,
    pub scored: usize,
    pub failed: usize,
    pub failures: Vec<Failure>,
    /// Mean over scored instances; absent when none were scored.
    pub aggregate: Option<ScoreSet<f64>>,
    pub deviations: DeviationCounts,
    pub usage: Usage,
    /// Sum of per-instance call counts, cached or not.
    pub model_calls: usize,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
    #[serde(skip)]
    pub scores: Vec<InstanceScore<f64>>,
}

impl RunReport {
    pub fn load(output_dir: &Path) -> Result<Self, RunError> {
        let path = output_dir.join(REPORT_FILE);
        let bytes = fs::read(&path).map_err(|e| IoError::io(&path, e))?;
        let mut report: RunReport =
            serde_json::from_slice(&bytes).map_err(|source| IoError::Json { path, line: 1, source })?;
        let preds = output_dir.join(PREDICTIONS_FILE);
        if preds.is_file() {
            report.predictions = read_jsonl(&preds)?;
        }
        let scores = output_dir.join(SCORES_FILE);
        if scores.is_file() {
            report.scores = read_jsonl(&scores)?;
        }
        Ok(report)
    }
}

/// Volatile facts about a run, kept apart so the other files are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Calls that reached the underlying model in this invocation.
    pub backend_calls: usize,
    pub resumed_instances: usize,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Reads the instances of a run: load, check, sample, sort by id.
pub fn load_instances(config: &ExperimentConfig) -> Result<Vec<MrcInstance>, RunError> {
    let mut records: Vec<MrcInstance> = read_jsonl(&config.input)?;
    let mut seen = HashSet::new();
    for r in &records {
        if r.dataset != config.dataset {
            return Err(RunError::Config(format!(
                "instance '{}' is {} but the config names {}",
                r.id, r.dataset, config.dataset
            )));
        }
        let violations = validate_instance(r);
        if !violations.is_empty() {
            return Err(RunError::Config(format!("instance '{}': {}", r.id, violations.join("; "))));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(RunError::Config(format!("duplicate instance id '{}'", r.id)));
        }
    }
    if let Some(spec) = config.sample {
        records = sample_subset(&records, spec)?;
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

/// The backend named by the config, behind the response cache if one is set.
pub fn build_backend(config: &ExperimentConfig, instances: &[MrcInstance]) -> Result<Box<dyn Backend>, RunError> {
    let inner: Box<dyn Backend> = match config.backend.kind {
        BackendKind::Openai => Box::new(OpenAiBackend::from_config(&config.backend.openai)?),
        BackendKind::Scripted => {
            let path = config.backend.script.as_deref().ok_or_else(|| RunError::Config("backend.script missing".into()))?;
            Box::new(ScriptedBackend::from_json_file(path)?)
        }
        BackendKind::Oracle => Box::new(OracleBackend::new(instances.iter().cloned())),
    };
    Ok(match &config.backend.cache_dir {
        Some(dir) => Box::new(CachedBackend::new(inner, ResponseCache::open(dir)?)),
        None => inner,
    })
}

fn match_policy(config: &ExperimentConfig, instances: &[MrcInstance]) -> Result<MatchPolicy, RunError> {
    if config.matching.mode == MatchMode::Strict {
        return Ok(MatchPolicy::strict());
    }
    let mut aliases = match &config.matching.aliases {
        Some(p) => AliasTable::from_json_file(p)?,
        None => AliasTable::new(),
    };
    for i in instances {
        aliases.merge(&AliasTable::harvest(&i.context.text));
    }
    Ok(MatchPolicy::lenient(aliases))
}

fn read_journal(path: &Path) -> Vec<Prediction> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| match serde_json::from_str(l) {
            Ok(p) => Some(p),
            Err(e) => {
                tracing::warn!("skipping unreadable journal line in {}: {e}", path.display());
                None
            }
        })
        .collect()
}

struct Journal {
    path: PathBuf,
    file: fs::File,
}

impl Journal {
    fn open(path: &Path) -> Result<Self, IoError> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| IoError::io(path, e))?;
        // An interrupted write can leave a partial last line.
        let existing = fs::read(path).map_err(|e| IoError::io(path, e))?;
        if existing.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n").map_err(|e| IoError::io(path, e))?;
        }
        Ok(Journal {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append(&mut self, p: &Prediction) -> Result<(), IoError> {
        let mut line = serde_json::to_string(p).expect("prediction serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| IoError::io(&self.path, e))?;
        self.file.flush().map_err(|e| IoError::io(&self.path, e))
    }
}

/// Runs the experiment with the backend named in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    config.validate()?;
    let instances = load_instances(config)?;
    let backend = build_backend(config, &instances)?;
    run_with_backend(config, &instances, backend.as_ref())
}

/// Runs `instances` against `backend`. Predictions already in the journal
/// of `config.output_dir` are reused; failed instances are retried by the
/// next invocation.
pub fn run_with_backend(
    config: &ExperimentConfig,
    instances: &[MrcInstance],
    backend: &dyn Backend,
) -> Result<RunReport, RunError> {
    let started = unix_now();
    let calls_before = backend.calls();
    let cfg = config.strategy_config();
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let opts = config.exec_options();
    let policy = match_policy(config, instances)?;
    let engine = PromptEngine::default();

    fs::create_dir_all(&config.output_dir).map_err(|e| IoError::io(&config.output_dir, e))?;
    let journal_path = config.output_dir.join(JOURNAL_FILE);
    let wanted: HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let mut done: BTreeMap<String, Prediction> = BTreeMap::new();
    for p in read_journal(&journal_path) {
        if p.strategy == cfg.strategy && wanted.contains(p.instance_id.as_str()) {
            done.insert(p.instance_id.clone(), p);
        }
    }
    let resumed = done.len();
    let pending: Vec<&MrcInstance> = instances.iter().filter(|i| !done.contains_key(&i.id)).collect();
    if resumed > 0 {
        tracing::info!(resumed, pending = pending.len(), "resuming from journal");
    }

    let mut journal = Journal::open(&journal_path)?;
    let mut failures: Vec<Failure> = Vec::new();
    let mut journal_error: Option<IoError> = None;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for _ in 0..config.parallelism.min(pending.len()).max(1) {
            let tx = tx.clone();
            let (next, pending, engine, cfg, opts) = (&next, &pending, &engine, &cfg, &opts);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(instance) = pending.get(i) else { break };
                let result = run_instance(engine, instance, cfg, backend, opts);
                if tx.send((instance.id.clone(), result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (id, result) in rx {
            match result {
                Ok(p) => {
                    if journal_error.is_none() {
                        if let Err(e) = journal.append(&p) {
                            journal_error = Some(e);
                        }
                    }
                    done.insert(id, p);
                }
                Err(e) => {
                    tracing::warn!(instance = %id, "instance failed: {e}");
                    failures.push(Failure {
                        instance_id: id,
                        error: e.to_string(),
                    });
                }
            }
        }
    });
    if let Some(e) = journal_error {
        return Err(e.into());
    }
    failures.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));

    let mut scores = Vec::with_capacity(done.len());
    let mut deviations = DeviationCounts::default();
    let mut usage = Usage::default();
    let mut model_calls = 0;
    for instance in instances {
        let Some(p) = done.get(&instance.id) else { continue };
        let s = score_instance::<f64>(p, instance, &policy)?;
        p.deviations.iter().for_each(|d| deviations.add(d));
        deviations.ambiguous_matches += s.ambiguous as usize;
        usage += p.usage;
        model_calls += p.call_count;
        scores.push(s);
    }
    let predictions: Vec<Prediction> = done.into_values().collect();
    let score_sets: Vec<ScoreSet<f64>> = scores.iter().map(|s| s.scores).collect();
    let aggregate = if score_sets.is_empty() {
        None
    } else {
        Some(aggregate(&score_sets)?)
    };

    let report = RunReport {
        dataset: config.dataset,
        strategy: cfg.strategy,
        label: config.sample_label(),
        strategy_config: cfg,
        sample: config.sample,
        sampler: config.sample.map(|_| SAMPLER_ID.to_string()),
        instances: instances.len(),
        scored: scores.len(),
        failed: failures.len(),
        failures,
        aggregate,
        deviations,
        usage,
        model_calls,
        config: config.clone(),
        predictions,
        scores,
    };
    let out = &config.output_dir;
    write_atomic(&out.join(PREDICTIONS_FILE), to_jsonl(&report.predictions).as_bytes())?;
    write_atomic(&out.join(SCORES_FILE), to_jsonl(&report.scores).as_bytes())?;
    write_atomic(&out.join(AGGREGATE_FILE), &pretty(&report.aggregate))?;
    write_atomic(&out.join(REPORT_FILE), &pretty(&report))?;
    let meta = RunMeta {
        started_unix: started,
        finished_unix: unix_now(),
        backend_calls: backend.calls() - calls_before,
        resumed_instances: resumed,
    };
    write_atomic(&out.join(META_FILE), &pretty(&meta))?;
    if report.failed == 0 {
        fs::remove_file(&journal_path).map_err(|e| IoError::io(&journal_path, e))?;
    }
    Ok(report)
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}
