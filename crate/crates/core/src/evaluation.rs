//! Self-contained ROUGE-1, ROUGE-2, and ROUGE-SU F1 scoring.
//!
//! ROUGE-SU units are all skip-bigrams with unlimited gap plus all
//! unigrams; every metric uses clipped multiset overlap.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Lowercased whitespace tokenization, the only segmentation used here.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Precision / recall / F1 for one metric on one pair. `degenerate` marks
/// inputs too short to form any unit, where the metric is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl MetricScore {
    fn degenerate() -> MetricScore {
        MetricScore {
            degenerate: true,
            ..MetricScore::default()
        }
    }

    fn from_counts(matched: usize, candidate_units: usize, reference_units: usize) -> MetricScore {
        let precision = matched as f64 / candidate_units as f64;
        let recall = matched as f64 / reference_units as f64;
        MetricScore {
            precision,
            recall,
            f1: f1(precision, recall),
            degenerate: false,
        }
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn clipped_matches<K: std::hash::Hash + Eq>(
    candidate: &HashMap<K, usize>,
    reference: &HashMap<K, usize>,
) -> usize {
    candidate
        .iter()
        .map(|(unit, &c)| c.min(reference.get(unit).copied().unwrap_or(0)))
        .sum()
}

/// Clipped n-gram overlap for n in {1, 2}. Inputs shorter than `n` on
/// either side score 0 with the degenerate flag set.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Result<MetricScore> {
    if !(1..=2).contains(&n) {
        return Err(CoreError::domain(format!(
            "rouge_n supports n = 1 or 2, got {n}"
        )));
    }
    if candidate.len() < n || reference.len() < n {
        return Ok(MetricScore::degenerate());
    }
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    Ok(MetricScore::from_counts(
        clipped_matches(&cand, &refr),
        candidate.len() - n + 1,
        reference.len() - n + 1,
    ))
}

#[derive(Hash, PartialEq, Eq)]
enum SuUnit<'a> {
    Unigram(&'a str),
    SkipBigram(&'a str, &'a str),
}

fn su_counts(tokens: &[String]) -> (HashMap<SuUnit<'_>, usize>, usize) {
    let mut counts = HashMap::new();
    let mut total = 0;
    for (i, first) in tokens.iter().enumerate() {
        *counts.entry(SuUnit::Unigram(first)).or_insert(0) += 1;
        total += 1;
        for second in &tokens[i + 1..] {
            *counts.entry(SuUnit::SkipBigram(first, second)).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Skip-bigrams with unlimited gap plus unigrams, clipped overlap. Empty
/// input on either side scores 0 with the degenerate flag set.
pub fn rouge_su(candidate: &[String], reference: &[String]) -> MetricScore {
    if candidate.is_empty() || reference.is_empty() {
        return MetricScore::degenerate();
    }
    let (cand, cand_total) = su_counts(candidate);
    let (refr, ref_total) = su_counts(reference);
    MetricScore::from_counts(clipped_matches(&cand, &refr), cand_total, ref_total)
}

/// R-1, R-2, and R-SU for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleScores {
    pub rouge1: MetricScore,
    pub rouge2: MetricScore,
    pub rouge_su: MetricScore,
}

pub fn score_pair(candidate: &[String], reference: &[String]) -> Result<SampleScores> {
    Ok(SampleScores {
        rouge1: rouge_n(candidate, reference, 1)?,
        rouge2: rouge_n(candidate, reference, 2)?,
        rouge_su: rouge_su(candidate, reference),
    })
}

/// Corpus result: unweighted means of the per-sample metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge1: MetricScore,
    pub rouge2: MetricScore,
    pub rouge_su: MetricScore,
    pub samples: usize,
    /// Samples where at least one metric had degenerate input.
    pub degenerate_samples: usize,
}

impl RougeReport {
    /// Tab-separated rendering, one line per metric.
    pub fn tsv(&self) -> String {
        let row = |name: &str, m: &MetricScore| {
            format!("{name}\t{}\t{}\t{}", m.precision, m.recall, m.f1)
        };
        format!(
            "metric\tprecision\trecall\tf1\n{}\n{}\n{}\n",
            row("rouge-1", &self.rouge1),
            row("rouge-2", &self.rouge2),
            row("rouge-su", &self.rouge_su),
        )
    }
}

/// Scores raw text pairs (candidate, reference) and averages per-sample
/// metrics. The degenerate flag on a mean is set when any sample tripped it.
pub fn evaluate_corpus(pairs: &[(String, String)]) -> Result<RougeReport> {
    if pairs.is_empty() {
        return Err(CoreError::Usage(
            "cannot score an empty list of summary pairs".to_string(),
        ));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for (candidate, reference) in pairs {
        scores.push(score_pair(&tokenize(candidate), &tokenize(reference))?);
    }
    let mean = |pick: fn(&SampleScores) -> MetricScore| {
        let n = scores.len() as f64;
        let mut out = MetricScore::default();
        for s in &scores {
            let m = pick(s);
            out.precision += m.precision;
            out.recall += m.recall;
            out.f1 += m.f1;
            out.degenerate |= m.degenerate;
        }
        out.precision /= n;
        out.recall /= n;
        out.f1 /= n;
        out
    };
    Ok(RougeReport {
        rouge1: mean(|s| s.rouge1),
        rouge2: mean(|s| s.rouge2),
        rouge_su: mean(|s| s.rouge_su),
        samples: scores.len(),
        degenerate_samples: scores
            .iter()
            .filter(|s| s.rouge1.degenerate || s.rouge2.degenerate || s.rouge_su.degenerate)
            .count(),
    })
}
