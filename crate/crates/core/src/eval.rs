//! Metric suite over response/ground-truth pairs, with aggregate reporting.
//!
//! Token-overlap metrics (precision, recall, F1, faithfulness) use *set*
//! semantics by default; a multiset mode is available for sensitivity
//! studies. The cosine inside `correctness` is over term-frequency vectors,
//! distinct from `semantic_similarity`, which is over sentence embeddings.
//! No stop words are removed from metric token sets.
//!
//! Empty-input conventions, all unit-tested: both sides empty counts as a
//! perfect match for the token metrics, exactly one empty side scores zero.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine_similarity, TextEmbedder};
use crate::error::{Error, Result};
use crate::text::{remove_stopwords, tokenize, StopList};

/// Weight of the cosine term inside `correctness`.
pub const DEFAULT_OMEGA: f64 = 0.25;

pub type TokenSet = BTreeSet<String>;
pub type TokenMultiset = BTreeMap<String, usize>;

/// Deduplicated tokens of a text.
pub fn token_set(text: &str) -> TokenSet {
    tokenize(text).into_tokens().into_iter().collect()
}

/// Token counts of a text.
pub fn token_multiset(text: &str) -> TokenMultiset {
    let mut counts = TokenMultiset::new();
    for token in tokenize(text).into_tokens() {
        *counts.entry(token).or_default() += 1;
    }
    counts
}

/// Token-overlap precision, recall, and their harmonic mean.
///
/// Conventions: both sides empty → (1, 1, 1); exactly one empty → (0, 0, 0);
/// precision + recall = 0 → f1 = 0.
pub fn precision_recall_f1(response: &TokenSet, truth: &TokenSet) -> (f64, f64, f64) {
    match (response.is_empty(), truth.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let overlap = response.intersection(truth).count() as f64;
    let precision = overlap / response.len() as f64;
    let recall = overlap / truth.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Multiset variant: overlap is the sum of per-token minimum counts.
pub fn precision_recall_f1_multiset(
    response: &TokenMultiset,
    truth: &TokenMultiset,
) -> (f64, f64, f64) {
    match (response.is_empty(), truth.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let overlap: usize = response
        .iter()
        .filter_map(|(token, &count)| truth.get(token).map(|&other| count.min(other)))
        .sum();
    let response_total: usize = response.values().sum();
    let truth_total: usize = truth.values().sum();
    let precision = overlap as f64 / response_total as f64;
    let recall = overlap as f64 / truth_total as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Cosine similarity of term-frequency vectors over the union vocabulary.
///
/// Counts are non-negative so the result lies in [0, 1]. Both sides empty
/// → 1.0; exactly one empty → 0.0.
pub fn tf_cosine(response: &str, truth: &str) -> f64 {
    let r = token_multiset(response);
    let g = token_multiset(truth);
    match (r.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut dot = 0.0f64;
    let mut norm_r = 0.0f64;
    let mut norm_g = 0.0f64;
    for (token, &count) in &r {
        let a = count as f64;
        norm_r += a * a;
        if let Some(&other) = g.get(token) {
            dot += a * other as f64;
        }
    }
    for &count in g.values() {
        let b = count as f64;
        norm_g += b * b;
    }
    (dot / (norm_r * norm_g).sqrt()).clamp(0.0, 1.0)
}

/// ω-weighted blend of TF cosine and token-overlap F1.
pub fn correctness(response: &str, truth: &str, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) || !omega.is_finite() {
        return Err(Error::Config(format!("omega {omega} outside [0, 1]")));
    }
    let (_, _, f1) = precision_recall_f1(&token_set(response), &token_set(truth));
    Ok(omega * tf_cosine(response, truth) + (1.0 - omega) * f1)
}

/// Fraction of the response's token set present in the ground truth.
///
/// Kept independent of `precision_recall_f1` on purpose: the two routes are
/// checked against each other. An empty response scores 0 unless the truth
/// is empty too, in which case 1.
pub fn faithfulness(response: &str, truth: &str) -> f64 {
    let r = token_set(response);
    let g = token_set(truth);
    if r.is_empty() {
        return if g.is_empty() { 1.0 } else { 0.0 };
    }
    r.intersection(&g).count() as f64 / r.len() as f64
}

/// Multiset variant of faithfulness.
pub fn faithfulness_multiset(response: &str, truth: &str) -> f64 {
    let r = token_multiset(response);
    let g = token_multiset(truth);
    if r.is_empty() {
        return if g.is_empty() { 1.0 } else { 0.0 };
    }
    let overlap: usize = r
        .iter()
        .filter_map(|(token, &count)| g.get(token).map(|&other| count.min(other)))
        .sum();
    overlap as f64 / r.values().sum::<usize>() as f64
}

/// Cosine similarity between sentence embeddings of both texts, in [-1, 1].
pub fn semantic_similarity(
    response: &str,
    truth: &str,
    embedder: &dyn TextEmbedder,
) -> Result<f64> {
    let e_r = embedder.embed(response)?;
    let e_g = embedder.embed(truth)?;
    Ok(f64::from(cosine_similarity(&e_r, &e_g)?))
}

/// Question↔answer embedding cosine. Relevancy has no one standard formula;
/// this definition is this project's own and is flagged as such.
pub fn relevancy(question: &str, answer: &str, embedder: &dyn TextEmbedder) -> Result<f64> {
    let e_q = embedder.embed(question)?;
    let e_a = embedder.embed(answer)?;
    Ok(f64::from(cosine_similarity(&e_q, &e_a)?))
}

/// One response/ground-truth pair; `question` enables the relevancy metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub pair_id: String,
    pub response: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

/// Parses line-delimited eval pairs; blank lines are skipped.
pub fn parse_eval_pairs<R: BufRead>(reader: R) -> Result<Vec<EvalPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: EvalPair = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if pair.pair_id.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                message: "invalid field `pair_id`: must be non-empty".into(),
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Per-pair metric values. `relevancy` is absent when the pair carried no
/// question, never reported as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tf_cosine: f64,
    pub correctness: f64,
    pub faithfulness: f64,
    pub semantic_similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevancy: Option<f64>,
    pub omega: f64,
}

/// Evaluation knobs.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub omega: f64,
    /// Token multiset semantics for the overlap metrics instead of sets.
    pub multiset: bool,
    /// Stop list removed from metric tokenization before scoring. Off by
    /// default: the overlap metrics are defined over raw token sets.
    /// Sentence-embedding metrics always see the original texts.
    pub stop_list: Option<StopList>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { omega: DEFAULT_OMEGA, multiset: false, stop_list: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair_id: String,
    pub scores: MetricScores,
}

/// Mean/median/min/max of one metric across the corpus. The median of an
/// even count is the mean of the two middle values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

fn aggregate(values: &[f64]) -> Aggregate {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Aggregate {
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
        min: sorted[0],
        max: sorted[n - 1],
    }
}

/// Per-pair scores plus per-metric aggregates for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub omega: f64,
    pub provider: String,
    pub multiset: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_list: Option<String>,
    pub pairs: Vec<PairReport>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

/// Scores one pair under the given config.
pub fn evaluate_pair(
    pair: &EvalPair,
    embedder: &dyn TextEmbedder,
    config: &EvalConfig,
) -> Result<MetricScores> {
    // tokens survive a filter-and-rejoin unchanged, so the raw metric ops
    // apply directly to the filtered texts
    let (response, truth) = match &config.stop_list {
        Some(list) => (
            remove_stopwords(tokenize(&pair.response), list).tokens().join(" "),
            remove_stopwords(tokenize(&pair.ground_truth), list).tokens().join(" "),
        ),
        None => (pair.response.clone(), pair.ground_truth.clone()),
    };
    let (precision, recall, f1, faith) = if config.multiset {
        let r = token_multiset(&response);
        let g = token_multiset(&truth);
        let (p, rec, f1) = precision_recall_f1_multiset(&r, &g);
        (p, rec, f1, faithfulness_multiset(&response, &truth))
    } else {
        let r = token_set(&response);
        let g = token_set(&truth);
        let (p, rec, f1) = precision_recall_f1(&r, &g);
        (p, rec, f1, faithfulness(&response, &truth))
    };
    if !(0.0..=1.0).contains(&config.omega) || !config.omega.is_finite() {
        return Err(Error::Config(format!("omega {} outside [0, 1]", config.omega)));
    }
    let tf_cos = tf_cosine(&response, &truth);
    let correctness = config.omega * tf_cos + (1.0 - config.omega) * f1;
    let semantic = semantic_similarity(&pair.response, &pair.ground_truth, embedder)?;
    let relevancy = match &pair.question {
        Some(question) => Some(relevancy(question, &pair.response, embedder)?),
        None => None,
    };
    Ok(MetricScores {
        precision,
        recall,
        f1,
        tf_cosine: tf_cos,
        correctness,
        faithfulness: faith,
        semantic_similarity: semantic,
        relevancy,
        omega: config.omega,
    })
}

/// Scores every pair and assembles aggregates. Pair ids must be unique.
pub fn evaluate_corpus(
    pairs: &[EvalPair],
    embedder: &dyn TextEmbedder,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Config("evaluation corpus must be non-empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for pair in pairs {
        if !seen.insert(pair.pair_id.as_str()) {
            return Err(Error::DuplicatePairId(pair.pair_id.clone()));
        }
    }
    let mut reports = Vec::with_capacity(pairs.len());
    for pair in pairs {
        reports.push(PairReport {
            pair_id: pair.pair_id.clone(),
            scores: evaluate_pair(pair, embedder, config)?,
        });
    }

    let mut aggregates = BTreeMap::new();
    let collect = |f: &dyn Fn(&MetricScores) -> f64| -> Vec<f64> {
        reports.iter().map(|r| f(&r.scores)).collect()
    };
    aggregates.insert("precision".to_string(), aggregate(&collect(&|s| s.precision)));
    aggregates.insert("recall".to_string(), aggregate(&collect(&|s| s.recall)));
    aggregates.insert("f1".to_string(), aggregate(&collect(&|s| s.f1)));
    aggregates.insert("tf_cosine".to_string(), aggregate(&collect(&|s| s.tf_cosine)));
    aggregates.insert("correctness".to_string(), aggregate(&collect(&|s| s.correctness)));
    aggregates.insert("faithfulness".to_string(), aggregate(&collect(&|s| s.faithfulness)));
    aggregates.insert(
        "semantic_similarity".to_string(),
        aggregate(&collect(&|s| s.semantic_similarity)),
    );
    let relevancies: Vec<f64> =
        reports.iter().filter_map(|r| r.scores.relevancy).collect();
    if !relevancies.is_empty() {
        aggregates.insert("relevancy".to_string(), aggregate(&relevancies));
    }

    Ok(EvalReport {
        omega: config.omega,
        provider: embedder.provider_tag(),
        multiset: config.multiset,
        stop_list: config.stop_list.as_ref().map(|l| l.id().to_string()),
        pairs: reports,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::LocalHashEmbedder;

    fn set(tokens: &[&str]) -> TokenSet {
        tokens.iter().map(|t| t.to_string()).collect()
    }

    fn pair(id: &str, response: &str, truth: &str) -> EvalPair {
        EvalPair {
            pair_id: id.into(),
            response: response.into(),
            ground_truth: truth.into(),
            question: None,
        }
    }

    #[test]
    fn token_set_deduplicates_and_folds() {
        assert_eq!(token_set("car car bus"), set(&["car", "bus"]));
        assert_eq!(token_set(""), TokenSet::new());
        assert_eq!(token_set("Car, bus!"), set(&["car", "bus"]));
    }

    #[test]
    fn prf_identical_sets() {
        assert_eq!(precision_recall_f1(&set(&["a", "b"]), &set(&["a", "b"])), (1.0, 1.0, 1.0));
    }

    #[test]
    fn prf_partial_overlap() {
        let (p, r, f1) = precision_recall_f1(&set(&["a", "b", "c"]), &set(&["b", "c", "d"]));
        assert_eq!(p, 2.0 / 3.0);
        assert_eq!(r, 2.0 / 3.0);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prf_disjoint_and_empty_conventions() {
        assert_eq!(precision_recall_f1(&set(&["a"]), &set(&["b"])), (0.0, 0.0, 0.0));
        assert_eq!(precision_recall_f1(&TokenSet::new(), &TokenSet::new()), (1.0, 1.0, 1.0));
        assert_eq!(precision_recall_f1(&TokenSet::new(), &set(&["a"])), (0.0, 0.0, 0.0));
        assert_eq!(precision_recall_f1(&set(&["a"]), &TokenSet::new()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn tf_cosine_examples() {
        assert_eq!(tf_cosine("same text here", "same text here"), 1.0);
        assert_eq!(tf_cosine("a b", "c d"), 0.0);
        assert_eq!(tf_cosine("a a b", "a b b"), 0.8);
        assert_eq!(tf_cosine("", ""), 1.0);
        assert_eq!(tf_cosine("", "a"), 0.0);
    }

    #[test]
    fn correctness_blend() {
        // identical token sets but different counts: f1 = 1, tf_cosine = 0.8
        let got = correctness("a a b", "a b b", 0.25).unwrap();
        assert!((got - 0.95).abs() < 1e-12, "{got}");
        // omega 0.25 over sub-metrics 0.8 and 2/3 blends to 0.7
        let (_, _, f1) = precision_recall_f1(&set(&["a", "b", "c"]), &set(&["b", "c", "d"]));
        let blended = 0.25 * 0.8 + 0.75 * f1;
        assert!((blended - 0.7).abs() < 1e-12, "{blended}");
        // the public op applies exactly that formula
        let r = "car truck near junction";
        let g = "car bus far junction";
        let expected =
            0.25 * tf_cosine(r, g) + 0.75 * precision_recall_f1(&token_set(r), &token_set(g)).2;
        assert_eq!(correctness(r, g, 0.25).unwrap(), expected);
    }

    #[test]
    fn correctness_endpoints_reduce_exactly() {
        let r = "car truck near intersection";
        let g = "truck stopped near the intersection";
        let (_, _, f1) = precision_recall_f1(&token_set(r), &token_set(g));
        assert_eq!(correctness(r, g, 1.0).unwrap(), tf_cosine(r, g));
        assert_eq!(correctness(r, g, 0.0).unwrap(), f1);
    }

    #[test]
    fn correctness_identical_is_one() {
        assert_eq!(correctness("x y z", "x y z", 0.25).unwrap(), 1.0);
        assert_eq!(correctness("x y z", "x y z", 0.9).unwrap(), 1.0);
    }

    #[test]
    fn correctness_rejects_bad_omega() {
        assert!(correctness("a", "a", -0.1).is_err());
        assert!(correctness("a", "a", 1.1).is_err());
        assert!(correctness("a", "a", f64::NAN).is_err());
    }

    #[test]
    fn faithfulness_examples() {
        assert_eq!(faithfulness("a b", "a b c d"), 1.0);
        assert_eq!(faithfulness("a b c d", "a b"), 0.5);
        assert_eq!(faithfulness("a b", "c d"), 0.0);
        assert_eq!(faithfulness("", ""), 1.0);
        assert_eq!(faithfulness("", "a"), 0.0);
    }

    #[test]
    fn faithfulness_is_asymmetric() {
        // r ⊊ g: full containment one way, partial the other
        let r = "car truck";
        let g = "car truck bus person";
        assert_eq!(faithfulness(r, g), 1.0);
        assert_eq!(faithfulness(g, r), 0.5);
    }

    #[test]
    fn semantic_similarity_examples() {
        let embedder = LocalHashEmbedder::new(64);
        assert_eq!(semantic_similarity("a b c", "a b c", &embedder).unwrap(), 1.0);
        assert_eq!(semantic_similarity("car truck bus", "bus car truck", &embedder).unwrap(), 1.0);
        assert_eq!(semantic_similarity("", "car", &embedder).unwrap(), 0.0);
    }

    #[test]
    fn relevancy_identity() {
        let embedder = LocalHashEmbedder::new(64);
        assert_eq!(relevancy("where is the car", "where is the car", &embedder).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_identical_pair_scores_one() {
        let embedder = LocalHashEmbedder::new(64);
        let pairs = vec![EvalPair {
            pair_id: "p1".into(),
            response: "the car is near".into(),
            ground_truth: "the car is near".into(),
            question: Some("the car is near".into()),
        }];
        let report = evaluate_corpus(&pairs, &embedder, &EvalConfig::default()).unwrap();
        let scores = &report.pairs[0].scores;
        assert_eq!(scores.correctness, 1.0);
        assert_eq!(scores.faithfulness, 1.0);
        assert_eq!(scores.f1, 1.0);
        assert_eq!(scores.semantic_similarity, 1.0);
        assert_eq!(scores.relevancy, Some(1.0));
    }

    #[test]
    fn evaluate_mean_of_two_pairs() {
        let embedder = LocalHashEmbedder::new(64);
        let pairs = vec![pair("p1", "x y", "x y"), pair("p2", "q r", "s t")];
        let report = evaluate_corpus(&pairs, &embedder, &EvalConfig::default()).unwrap();
        assert_eq!(report.aggregates["faithfulness"].mean, 0.5);
        assert_eq!(report.aggregates["faithfulness"].min, 0.0);
        assert_eq!(report.aggregates["faithfulness"].max, 1.0);
        assert!(!report.aggregates.contains_key("relevancy"));
    }

    #[test]
    fn evaluate_rejects_duplicate_pair_ids() {
        let embedder = LocalHashEmbedder::new(64);
        let pairs = vec![pair("p1", "a", "a"), pair("p1", "b", "b")];
        assert!(matches!(
            evaluate_corpus(&pairs, &embedder, &EvalConfig::default()),
            Err(Error::DuplicatePairId(_))
        ));
    }

    #[test]
    fn evaluate_is_permutation_invariant_in_aggregates() {
        let embedder = LocalHashEmbedder::new(64);
        let a = vec![pair("p1", "x y", "x y"), pair("p2", "a b", "a c"), pair("p3", "m", "n")];
        let mut b = a.clone();
        b.reverse();
        let ra = evaluate_corpus(&a, &embedder, &EvalConfig::default()).unwrap();
        let rb = evaluate_corpus(&b, &embedder, &EvalConfig::default()).unwrap();
        assert_eq!(ra.aggregates, rb.aggregates);
    }

    #[test]
    fn multiset_mode_counts_repeats() {
        let embedder = LocalHashEmbedder::new(64);
        let pairs = vec![pair("p1", "a a b", "a b b")];
        let config = EvalConfig { multiset: true, ..EvalConfig::default() };
        let report = evaluate_corpus(&pairs, &embedder, &config).unwrap();
        let scores = &report.pairs[0].scores;
        // overlap = min(2,1) + min(1,2) = 2 of 3 tokens either side
        assert_eq!(scores.precision, 2.0 / 3.0);
        assert_eq!(scores.recall, 2.0 / 3.0);
        assert_eq!(scores.faithfulness, 2.0 / 3.0);
    }

    #[test]
    fn stop_list_filter_changes_overlap_metrics_only() {
        let embedder = LocalHashEmbedder::new(64);
        let pairs = vec![EvalPair {
            pair_id: "p1".into(),
            response: "the car is red".into(),
            ground_truth: "a car was red".into(),
            question: None,
        }];
        let raw = evaluate_corpus(&pairs, &embedder, &EvalConfig::default()).unwrap();
        assert_eq!(raw.pairs[0].scores.precision, 0.5);
        assert_eq!(raw.stop_list, None);

        let filtered_config = EvalConfig {
            stop_list: Some(StopList::builtin("en-v1").unwrap()),
            ..EvalConfig::default()
        };
        let filtered = evaluate_corpus(&pairs, &embedder, &filtered_config).unwrap();
        // {car, red} on both sides once function words are gone
        assert_eq!(filtered.pairs[0].scores.precision, 1.0);
        assert_eq!(filtered.pairs[0].scores.f1, 1.0);
        assert_eq!(filtered.pairs[0].scores.faithfulness, 1.0);
        assert_eq!(filtered.stop_list.as_deref(), Some("en-v1"));
        // embedding metrics still see the original texts
        assert_eq!(
            filtered.pairs[0].scores.semantic_similarity,
            raw.pairs[0].scores.semantic_similarity
        );
    }

    #[test]
    fn relevancy_of_disjoint_vocabulary_is_near_zero() {
        let embedder = LocalHashEmbedder::new(384);
        let question: String =
            (0..20).map(|i| format!("qa{i}")).collect::<Vec<_>>().join(" ");
        let answer: String =
            (0..20).map(|i| format!("zb{i}")).collect::<Vec<_>>().join(" ");
        let value = relevancy(&question, &answer, &embedder).unwrap();
        assert!(value.abs() <= 0.1, "relevancy {value} of disjoint 20-token texts");
    }

    #[test]
    fn parse_pairs_rejects_bad_lines() {
        use std::io::Cursor;
        let input = r#"{"pair_id":"p1","response":"a","ground_truth":"b"}
{"pair_id":"","response":"a","ground_truth":"b"}"#;
        let err = parse_eval_pairs(Cursor::new(input)).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
