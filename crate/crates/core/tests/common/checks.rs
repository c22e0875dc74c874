//! End-to-end checks shared by the runner tests and the acceptance target.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mrcbench::backend::{
    prompt_digest, Backend, BackendError, CompletionRequest, CompletionResponse, OracleBackend, ScriptFile,
};
use mrcbench::irag::chunk_context;
use mrcbench::runner::{run_experiment, run_with_backend, ExperimentConfig, RunReport, WorksheetRow};
use mrcbench::{DatasetTag, Ratio};

use super::{synthetic_corpus, write_config, write_corpus};

pub const STRATEGIES: [&str; 4] = ["basic", "cot", "ar", "implicit_rag"];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

/// Counts calls and fails instances whose id is in `fail_ids`.
pub struct FlakyOracle {
    pub inner: OracleBackend,
    pub fail_ids: Vec<String>,
    pub calls: AtomicUsize,
}

impl Backend for FlakyOracle {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if self.fail_ids.contains(&req.tag.instance_id) {
            return Err(BackendError::Status { status: 503, body: "unavailable".into() });
        }
        self.inner.complete(req)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Oracle that remembers every prompt digest it answered.
pub struct RecordingOracle {
    pub inner: OracleBackend,
    pub seen: Mutex<HashMap<String, String>>,
}

impl Backend for RecordingOracle {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let resp = self.inner.complete(req)?;
        self.seen.lock().unwrap().insert(prompt_digest(&req.prompt.text), resp.text.clone());
        Ok(resp)
    }

    fn calls(&self) -> usize {
        self.inner.calls()
    }
}

fn load(path: &Path) -> ExperimentConfig {
    ExperimentConfig::load(path).unwrap()
}

/// All four strategies with the oracle on 20 synthetic instances of each
/// dataset shape must score 1.0 with no failures, and every section the
/// oracle returns must be grounded.
pub fn oracle_end_to_end(dir: &Path) -> Result<(), String> {
    for dataset in DatasetTag::ALL {
        let corpus = synthetic_corpus(dataset, 20);
        let input = write_corpus(dir, &corpus);
        for strategy in STRATEGIES {
            let name = format!("oracle-{}-{strategy}", dataset.as_str());
            let cfg = write_config(dir, &name, dataset, strategy, &input, "[backend]\nkind = \"oracle\"\n");
            let report = run_experiment(&load(&cfg)).map_err(|e| format!("{name}: {e}"))?;
            ensure!(report.failed == 0 && report.scored == 20, "{name}: {} scored, {} failed", report.scored, report.failed);
            let agg = report.aggregate.ok_or(format!("{name}: no aggregate"))?;
            let headline = agg.accuracy.or(agg.em).ok_or(format!("{name}: no headline metric"))?;
            ensure!(headline == 1.0, "{name}: headline {headline}");
            for p in &report.predictions {
                ensure!(p.call_count == 1, "{name}: {} made {} calls", p.instance_id, p.call_count);
                let instance = corpus.iter().find(|i| i.id == p.instance_id).unwrap();
                for s in &p.sections {
                    ensure!(s.grounded, "{name}: ungrounded section in {}", p.instance_id);
                    ensure!(
                        mrcbench::irag::is_grounded(&s.text, &instance.context.text),
                        "{name}: section not in context for {}",
                        p.instance_id
                    );
                }
            }
        }
    }
    Ok(())
}

fn tiny_budget_extra(budget: usize, overlap: usize) -> String {
    format!("context_word_budget = {budget}\nchunk_overlap_words = {overlap}\n[backend]\nkind = \"oracle\"\n")
}

/// Chunked Implicit RAG: call count is chunks + 1 and the oracle still
/// scores 1.0; a context of exactly `budget` words takes one call.
pub fn chunked_call_counts(dir: &Path) -> Result<(), String> {
    let (budget, overlap) = (40, 5);
    for dataset in DatasetTag::ALL {
        let corpus = synthetic_corpus(dataset, 8);
        let input = write_corpus(dir, &corpus);
        let name = format!("chunked-{}", dataset.as_str());
        let cfg = write_config(dir, &name, dataset, "implicit_rag", &input, &tiny_budget_extra(budget, overlap));
        let report = run_experiment(&load(&cfg)).map_err(|e| format!("{name}: {e}"))?;
        let agg = report.aggregate.ok_or(format!("{name}: no aggregate"))?;
        ensure!(agg.accuracy.or(agg.em) == Some(1.0), "{name}: {agg:?}");
        for p in &report.predictions {
            let instance = corpus.iter().find(|i| i.id == p.instance_id).unwrap();
            let chunks = chunk_context(&instance.context, budget, overlap).unwrap().len();
            ensure!(chunks > 1, "{name}: {} fits in one chunk", p.instance_id);
            ensure!(p.call_count == chunks + 1, "{name}: {} calls for {chunks} chunks", p.call_count);
            let mut keys: Vec<String> = p.sections.iter().map(|s| s.text.to_lowercase()).collect();
            keys.sort();
            keys.dedup();
            ensure!(keys.len() == p.sections.len(), "{name}: duplicate pooled sections");
        }
    }
    // Boundary: word_count == budget is a single call; one word less is not.
    let instance = super::synthetic_instance(DatasetTag::Clicr, 3, 6);
    let n = instance.context.word_count;
    for (budget, expected_calls) in [(n, 1), (n - 1, 3)] {
        let input = write_corpus(dir, std::slice::from_ref(&instance));
        let name = format!("boundary-{budget}");
        let cfg = write_config(dir, &name, DatasetTag::Clicr, "implicit_rag", &input, &tiny_budget_extra(budget, 0));
        let config = load(&cfg);
        let backend = FlakyOracle {
            inner: OracleBackend::new([instance.clone()]),
            fail_ids: Vec::new(),
            calls: AtomicUsize::new(0),
        };
        let report = run_with_backend(&config, std::slice::from_ref(&instance), &backend).map_err(|e| e.to_string())?;
        ensure!(
            backend.calls() == expected_calls && report.predictions[0].call_count == expected_calls,
            "budget {budget} for {n} words: {} calls, expected {expected_calls}",
            backend.calls()
        );
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Two scripted runs with the same seed produce byte-identical prediction
/// and score files; replaying through a filled cache makes no calls.
pub fn determinism_and_cache_replay(dir: &Path) -> Result<(), String> {
    let dataset = DatasetTag::Biomrc;
    let corpus = synthetic_corpus(dataset, 30);
    let input = write_corpus(dir, &corpus);

    // Record oracle answers as a script keyed by prompt digest.
    let recorder = RecordingOracle { inner: OracleBackend::new(corpus.clone()), seen: Mutex::new(HashMap::new()) };
    let sample = "[sample]\nsize = 12\nseed = 7\n";
    let rec_cfg = write_config(dir, "record", dataset, "implicit_rag", &input, &format!("parallelism = 3\n{sample}[backend]\nkind = \"oracle\"\n"));
    let config = load(&rec_cfg);
    let instances = mrcbench::runner::load_instances(&config).map_err(|e| e.to_string())?;
    run_with_backend(&config, &instances, &recorder).map_err(|e| e.to_string())?;
    let script = ScriptFile { responses: recorder.seen.into_inner().unwrap(), fallback: None };
    let script_path = dir.join("script.json");
    std::fs::write(&script_path, serde_json::to_vec_pretty(&script).unwrap()).unwrap();

    let scripted = |name: &str, parallelism: usize| {
        let extra = format!("parallelism = {parallelism}\n{sample}[backend]\nkind = \"scripted\"\nscript = {script_path:?}\n");
        let cfg = write_config(dir, name, dataset, "implicit_rag", &input, &extra);
        let config = load(&cfg);
        run_experiment(&config).map(|r| (r, config.output_dir.clone())).map_err(|e| format!("{name}: {e}"))
    };
    let (a, dir_a) = scripted("scripted-a", 1)?;
    let (b, dir_b) = scripted("scripted-b", 4)?;
    ensure!(a.predictions == b.predictions, "predictions differ between parallelism 1 and 4");
    ensure!(a.instances == 12 && a.failed == 0, "scripted run: {} instances, {} failed", a.instances, a.failed);
    for file in ["predictions.jsonl", "scores.jsonl", "aggregate.json"] {
        ensure!(read(&dir_a.join(file))? == read(&dir_b.join(file))?, "{file} differs between runs");
    }
    let report_a = read(&dir_a.join("report.json"))?;
    scripted("scripted-a", 1)?;
    ensure!(report_a == read(&dir_a.join("report.json"))?, "report.json differs on rerun");

    // Cache replay: the second run must not reach the backend.
    let cache = dir.join("cache");
    let cached = |name: &str| {
        let extra = format!("{sample}[backend]\nkind = \"oracle\"\ncache_dir = {cache:?}\n");
        let cfg = write_config(dir, name, dataset, "implicit_rag", &input, &extra);
        let config = load(&cfg);
        let report = run_experiment(&config).map_err(|e| format!("{name}: {e}"))?;
        let meta: serde_json::Value = serde_json::from_slice(&read(&config.output_dir.join("run_meta.json"))?).unwrap();
        Ok::<_, String>((report, meta["backend_calls"].as_u64().unwrap(), config.output_dir))
    };
    let (first, first_calls, first_dir) = cached("cache-fill")?;
    let (_, replay_calls, replay_dir) = cached("cache-replay")?;
    ensure!(first_calls as usize == first.model_calls && first_calls > 0, "fill made {first_calls} calls");
    ensure!(replay_calls == 0, "replay made {replay_calls} backend calls");
    ensure!(
        read(&first_dir.join("predictions.jsonl"))? == read(&replay_dir.join("predictions.jsonl"))?,
        "replayed predictions differ"
    );
    Ok(())
}

/// Judged rows reproducing one dataset of the qualitative table: `n` rows
/// with the given verdict, the first `right` of them with a right section.
pub fn judged_rows(prefix: &str, correct: bool, n: usize, right: usize) -> Vec<WorksheetRow> {
    (0..n)
        .map(|i| WorksheetRow {
            instance_id: format!("{prefix}-{}-{i:02}", if correct { "c" } else { "x" }),
            section_count: 2,
            final_answer_correct: if correct { "yes" } else { "no" }.into(),
            section_relevance: if i < right { "wrong,right" } else { "wrong,wrong" }.into(),
            ..Default::default()
        })
        .collect()
}

pub type RelevanceRow = (&'static str, usize, usize, usize, usize, [i64; 4]);

/// (dataset, ✓ count, ✓ with right section, ✗ count, ✗ with right section,
/// printed percentages [✓ right, ✗ right, ✓ wrong, ✗ wrong]).
///
/// The "with right section" counts are the unique integers whose share
/// rounds to the printed percentage, e.g. 39/41 = 95.1% and 38/41 = 92.7%.
pub const RELEVANCE_TABLE: [RelevanceRow; 4] = [
    ("processbank", 46, 46, 4, 4, [100, 100, 0, 0]),
    ("biomrc", 41, 39, 9, 5, [95, 56, 5, 44]),
    ("mashqa", 7, 7, 43, 40, [100, 93, 0, 7]),
    ("clicr", 31, 25, 19, 6, [81, 32, 19, 68]),
];

pub fn relevance_table_reproduced() -> Result<(), String> {
    for (name, nc, rc, nx, rx, expected) in RELEVANCE_TABLE {
        for (n, r, pct) in [(nc, rc, expected[0]), (nx, rx, expected[1])] {
            let matching: Vec<usize> = (0..=n).filter(|k| ((200 * k + n) / (2 * n)) as i64 == pct).collect();
            ensure!(matching == [r], "{name}: {pct}% of {n} is reached by {matching:?}, table uses {r}");
        }
        let mut rows = judged_rows(name, true, nc, rc);
        rows.extend(judged_rows(name, false, nx, rx));
        let t = mrcbench::runner::tally_qualitative::<Ratio<i64>>(&rows).map_err(|e| e.to_string())?;
        let got = [t.correct.right_pct(), t.incorrect.right_pct(), t.correct.wrong_pct(), t.incorrect.wrong_pct()];
        ensure!(got == expected.map(Some), "{name}: tally {got:?}, table {expected:?}");
        ensure!((t.correct.instances, t.incorrect.instances) == (nc, nx), "{name}: split sizes");
        let text = t.render();
        ensure!(text.contains(&format!("✓ ({nc})")) && text.contains(&format!("{}%", expected[0])), "{name}: render {text}");
    }
    Ok(())
}

pub fn report_of(dir: &Path) -> RunReport {
    RunReport::load(dir).unwrap()
}

