//! Property checks shared by the property tests and the acceptance target.
//! Each runs a fixed number of deterministic cases and reports the first
//! counterexample.

use mrcbench::eval::{exact_match, normalize, token_prf, Prf};
use mrcbench::irag::chunk_words;
use mrcbench::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Q = Ratio<i64>;

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn report<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// Words that exercise case, punctuation, articles and repeats.
pub fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("a".to_string()),
        Just("The".to_string()),
        Just("an".to_string()),
        "[a-dA-D]{1,3}",
        "[a-c]{1,2}[.,;!?-]",
        Just("x-ray".to_string()),
    ]
}

pub fn text(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec((word(), prop_oneof![Just(" "), Just("  "), Just("\t"), Just("\n")]), 0..=max_words)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

/// Independent scorer: greedy pairing of equal tokens with used-flags.
pub fn brute_prf(pred: &str, gold: &str) -> Prf<Q> {
    let p: Vec<String> = normalize(pred).as_str().split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
    let g: Vec<String> = normalize(gold).as_str().split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
    let all = |v: i64| Prf { precision: Q::from_integer(v), recall: Q::from_integer(v), f1: Q::from_integer(v) };
    if p.is_empty() && g.is_empty() {
        return all(1);
    }
    if p.is_empty() || g.is_empty() {
        return all(0);
    }
    let mut used = vec![false; g.len()];
    let mut overlap = 0i64;
    for t in &p {
        if let Some(k) = (0..g.len()).find(|&k| !used[k] && &g[k] == t) {
            used[k] = true;
            overlap += 1;
        }
    }
    let precision = Q::new(overlap, p.len() as i64);
    let recall = Q::new(overlap, g.len() as i64);
    let f1 = if overlap == 0 { Q::from_integer(0) } else { Q::from_integer(2) * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

pub fn brute_prf_max(pred: &str, golds: &[String]) -> Prf<Q> {
    let mut best = brute_prf(pred, &golds[0]);
    for g in &golds[1..] {
        let c = brute_prf(pred, g);
        if (c.f1, c.recall) > (best.f1, best.recall) {
            best = c;
        }
    }
    best
}

pub fn token_prf_matches_brute_force(cases: u32) -> Result<(), String> {
    let strategy = (text(8), prop::collection::vec(text(8), 1..4));
    report(runner(cases).run(&strategy, |(pred, golds)| {
        let fast = token_prf::<Q, _>(&pred, &golds);
        let slow = brute_prf_max(&pred, &golds);
        prop_assert_eq!(fast, slow, "pred {:?} golds {:?}", pred, golds);
        Ok(())
    }))
}

pub fn normalize_is_idempotent(cases: u32) -> Result<(), String> {
    let strategy = prop_oneof![text(12), any::<String>()];
    report(runner(cases).run(&strategy, |s| {
        let once = normalize(&s);
        prop_assert_eq!(normalize(once.as_str()), once);
        Ok(())
    }))
}

/// A gold text and a copy differing only by case, punctuation, articles
/// and whitespace.
pub fn perturbed_pair() -> impl Strategy<Value = (String, String)> {
    let gold_words = prop::collection::vec("[a-z]{1,6}", 1..6);
    gold_words
        .prop_flat_map(|words| {
            let n = words.len();
            (
                Just(words),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(prop_oneof![Just(""), Just("."), Just(","), Just("!"), Just("'")], n),
                prop::collection::vec(prop_oneof![Just(None), Just(Some("the")), Just(Some("A")), Just(Some("an"))], n),
                prop::collection::vec(prop_oneof![Just(" "), Just("   "), Just("\t"), Just(" \n ")], n),
            )
        })
        .prop_map(|(words, upper, punct, articles, spaces)| {
            let gold = words.join(" ");
            let mut out = String::from("  ");
            for i in 0..words.len() {
                if let Some(a) = articles[i] {
                    out.push_str(a);
                    out.push_str(spaces[i]);
                }
                let w = if upper[i] { words[i].to_uppercase() } else { words[i].clone() };
                out.push_str(&w);
                out.push_str(punct[i]);
                out.push_str(spaces[i]);
            }
            (gold, out)
        })
}

pub fn em_ignores_surface_noise(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&perturbed_pair(), |(gold, pred)| {
        prop_assert_eq!(exact_match(&pred, &[gold.clone(), "unrelated".to_string()]), 1, "{:?} vs {:?}", pred, gold);
        let prf = token_prf::<Q, _>(&pred, &[gold]);
        prop_assert_eq!(prf.f1, Q::from_integer(1));
        Ok(())
    }))
}

pub fn chunks_cover_context(cases: u32) -> Result<(), String> {
    let strategy = (0usize..400, 1usize..80).prop_flat_map(|(len, budget)| (Just(len), Just(budget), 0..budget));
    report(runner(cases).run(&strategy, |(len, budget, overlap)| {
        let plan = chunk_words(len, budget, overlap).unwrap();
        let chunks = &plan.chunks;
        prop_assert_eq!(chunks[0].0, 0);
        prop_assert_eq!(chunks.last().unwrap().1, len);
        prop_assert_eq!(chunks.len() == 1, len <= budget);
        for w in chunks.windows(2) {
            prop_assert_eq!(w[1].0, w[0].1 - overlap, "overlap of {:?}", w);
        }
        for &(lo, hi) in chunks {
            prop_assert!(lo <= hi && hi - lo <= budget);
        }
        let mut covered = vec![false; len];
        for &(lo, hi) in chunks {
            covered[lo..hi].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.into_iter().all(|c| c));
        Ok(())
    }))
}
