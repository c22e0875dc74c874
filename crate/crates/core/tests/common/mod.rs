//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod props;

use std::path::{Path, PathBuf};

use mrcbench::{Candidate, Context, DatasetTag, GoldAnswer, MrcInstance};

const ORGANS: [&str; 7] = ["liver", "kidney", "lung", "heart", "spleen", "pancreas", "thyroid"];
const DRUGS: [&str; 6] = ["aspirin", "heparin", "insulin", "warfarin", "metformin", "lisinopril"];
const PROCESSES: [&str; 5] = ["glycolysis", "transcription", "mitosis", "apoptosis", "osmosis"];

fn filler(i: usize, j: usize) -> String {
    format!(
        "Observation {j} in record {i} links {} activity in the {} to changes in {} levels.",
        PROCESSES[(i + j) % PROCESSES.len()],
        ORGANS[(i * 3 + j) % ORGANS.len()],
        DRUGS[(i + 2 * j) % DRUGS.len()],
    )
}

/// Sentences joined by single spaces, with their char spans.
pub fn context_from_sentences(id: &str, sentences: &[String]) -> Context {
    let mut text = String::new();
    let mut spans = Vec::new();
    for s in sentences {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count();
        text.push_str(s);
        spans.push((start, text.chars().count()));
    }
    Context::new(id, text).with_sentence_spans(spans)
}

/// Instance `i` of a synthetic corpus; `sentences` controls context length.
pub fn synthetic_instance(dataset: DatasetTag, i: usize, sentences: usize) -> MrcInstance {
    let id = format!("{}-{i:03}", dataset.as_str());
    let mut body: Vec<String> = (0..sentences).map(|j| filler(i, j)).collect();
    let key = sentences / 2;
    match dataset {
        DatasetTag::Processbank => {
            let (right, other) = (PROCESSES[i % 5], PROCESSES[(i + 1) % 5]);
            body[key] = format!("During {right} the cell releases energy stored in glucose.");
            // Even records have the gold at A, odd ones at B.
            let (a, b, gold) = if i.is_multiple_of(2) { (right, other, "A") } else { (other, right, "B") };
            MrcInstance {
                context: Context::new(&id, body.join(" ")),
                query_text: format!("Which process releases energy in record {i}?"),
                candidates: vec![Candidate::new("A", a), Candidate::new("B", b)],
                gold: GoldAnswer::OptionRef(gold.into()),
                id,
                dataset,
            }
        }
        DatasetTag::Biomrc => {
            let candidates: Vec<Candidate> = (0..4)
                .map(|k| Candidate {
                    id: format!("@entity{k}"),
                    surface_forms: vec![DRUGS[(i + k) % DRUGS.len()].to_string()],
                })
                .collect();
            let gold = i % 4;
            body[key] = format!("Patients treated with {} showed improvement.", candidates[gold].surface_forms[0]);
            MrcInstance {
                context: Context::new(&id, body.join(" ")),
                query_text: format!("Improvement after treatment with XXXX in cohort {i}"),
                candidates,
                gold: GoldAnswer::OptionRef(format!("@entity{gold}")),
                id,
                dataset,
            }
        }
        DatasetTag::Mashqa => {
            body[key] = format!("The {} recovers after the dose is reduced.", ORGANS[i % ORGANS.len()]);
            let gold = if i.is_multiple_of(3) { vec![key] } else { vec![0, key] };
            MrcInstance {
                context: context_from_sentences(&id, &body),
                query_text: format!("What happens to the {} when the dose is reduced?", ORGANS[i % ORGANS.len()]),
                candidates: Vec::new(),
                gold: GoldAnswer::SpanSet(gold),
                id,
                dataset,
            }
        }
        DatasetTag::Clicr => {
            let answer = format!("{} toxicity", DRUGS[i % DRUGS.len()]);
            body[key] = format!("The patient was diagnosed with {answer} on day {i}.");
            MrcInstance {
                context: Context::new(&id, body.join(" ")),
                query_text: format!("The patient was diagnosed with @placeholder on day {i}."),
                candidates: Vec::new(),
                gold: GoldAnswer::TextVariants(vec![answer, format!("{} overdose", DRUGS[i % DRUGS.len()])]),
                id,
                dataset,
            }
        }
    }
}

pub fn synthetic_corpus(dataset: DatasetTag, n: usize) -> Vec<MrcInstance> {
    (0..n).map(|i| synthetic_instance(dataset, i, 6 + i % 5)).collect()
}

/// The instance whose prompts are frozen as golden fixtures.
pub fn fixed_instance(dataset: DatasetTag) -> MrcInstance {
    synthetic_instance(dataset, 7, 4)
}

pub fn write_corpus(dir: &Path, records: &[MrcInstance]) -> PathBuf {
    let dataset = records[0].dataset;
    let path = dir.join(format!("{}.jsonl", dataset.as_str()));
    mrcbench::io::write_jsonl(&path, records).unwrap();
    path
}

/// Writes an experiment config next to `input` and returns its path.
pub fn write_config(dir: &Path, name: &str, dataset: DatasetTag, strategy: &str, input: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "dataset = \"{}\"\ninput = {:?}\noutput_dir = {:?}\n{extra}\n[strategy]\nstrategy = \"{strategy}\"\n",
        dataset.as_str(),
        input,
        dir.join("runs").join(name),
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Every prompt kind rendered for the fixed instance of `dataset`, with the
/// tuned hyperparameters. The final-answer prompt presents two sections
/// cut from the context.
pub fn render_fixed_prompts(dataset: DatasetTag) -> Vec<(mrcbench::prompt::PromptKind, String)> {
    use mrcbench::prompt::{PlaceholderProfile, PromptEngine, PromptKind, StrategyConfig};
    use mrcbench::{RetrievedSection, Strategy};

    let engine = PromptEngine::default();
    let instance = fixed_instance(dataset);
    let profile = PlaceholderProfile::for_dataset(dataset);
    let cfg = StrategyConfig::for_dataset(Strategy::ImplicitRag, dataset);
    let words = instance.context.words();
    let section = |index: usize, lo: usize, hi: usize| {
        let text = words[lo..hi].join(" ");
        RetrievedSection { index, word_count: hi - lo, text, grounded: true, within_limits: true }
    };
    let sections = vec![section(1, 0, 8), section(2, 10, 20)];
    let chunk = words[..20].join(" ");
    PromptKind::ALL
        .into_iter()
        .map(|kind| {
            let p = match kind {
                PromptKind::Basic => engine.render_basic(&instance, &profile),
                PromptKind::Cot => engine.render_cot(&instance, &profile),
                PromptKind::Ar => engine.render_ar(&instance, &profile, &cfg),
                PromptKind::Irag => engine.render_irag(&instance, &profile, &cfg),
                PromptKind::IragRetrieve => engine.render_irag_retrieve(&chunk, &instance, &profile, &cfg),
                PromptKind::IragFinal => engine.render_irag_final(&sections, &instance, &profile),
            };
            (kind, p.unwrap().text)
        })
        .collect()
}

pub fn golden_path(dataset: DatasetTag, kind: mrcbench::prompt::PromptKind) -> PathBuf {
    fixtures_dir().join("prompts").join(dataset.as_str()).join(format!("{}.txt", kind.dir_name()))
}

/// Compares rendered prompts with the checked-in fixtures, or rewrites the
/// fixtures when `MRCBENCH_BLESS=1`. Returns the mismatching paths.
pub fn check_golden_prompts() -> Vec<String> {
    let bless = std::env::var("MRCBENCH_BLESS").is_ok_and(|v| v == "1");
    let mut bad = Vec::new();
    for dataset in DatasetTag::ALL {
        for (kind, text) in render_fixed_prompts(dataset) {
            let path = golden_path(dataset, kind);
            if bless {
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                std::fs::write(&path, &text).unwrap();
                continue;
            }
            match std::fs::read_to_string(&path) {
                Ok(expected) if expected == text => {}
                _ => bad.push(path.display().to_string()),
            }
        }
    }
    bad
}
