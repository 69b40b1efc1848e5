//! Terms that distinguish two groups of authors, by a Mann-Whitney rank
//! comparison of per-author term frequencies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// Whitespace split, lowercased, edge punctuation removed. `#` and `@`
/// survive at the front so hashtags and mentions stay distinct terms.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let t = lower
                .trim_start_matches(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@'))
                .trim_end_matches(|c: char| !(c.is_alphanumeric() || c == '_'));
            (!t.is_empty() && t != "#" && t != "@").then(|| t.to_string())
        })
        .collect()
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// U of group A divided by `n_a · n_b`: the probability that a random A
/// value beats a random B value, ties counting half.
pub fn mann_whitney_rho(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&all);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u_a = rank_sum_a - na * (na + 1.0) / 2.0;
    u_a / (na * nb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub rho: f64,
    /// `max(rho, 1 - rho)`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTerms {
    /// Terms this group over-uses, best first.
    pub ranked: Vec<TermScore>,
    pub key_terms: Vec<TermScore>,
    pub vocabulary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyTermReport {
    pub group_a: GroupTerms,
    pub group_b: GroupTerms,
}

fn frequencies(doc: &[String]) -> BTreeMap<&str, f64> {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for t in doc {
        *counts.entry(t.as_str()).or_default() += 1.0;
    }
    let len = doc.len() as f64;
    counts.values_mut().for_each(|c| *c /= len);
    counts
}

/// Compare two corpora of per-author documents.
///
/// Each term's relative frequency per document is ranked across both
/// corpora; ρ > 0.5 attributes the term to A, ρ < 0.5 to B. Each group's
/// key terms are its top `ceil(top_fraction × vocabulary)` attributed terms,
/// where vocabulary counts the distinct terms in that group's documents.
pub fn mann_whitney_keyterms(
    corpus_a: &[String],
    corpus_b: &[String],
    top_fraction: f64,
) -> Result<KeyTermReport, AnalyticsError> {
    if corpus_a.len() < 2 || corpus_b.len() < 2 {
        return Err(AnalyticsError::DegenerateInput(
            "each corpus needs at least two documents".into(),
        ));
    }
    let tokens_a: Vec<Vec<String>> = corpus_a.iter().map(|d| tokenize(d)).collect();
    let tokens_b: Vec<Vec<String>> = corpus_b.iter().map(|d| tokenize(d)).collect();
    let freq_a: Vec<_> = tokens_a.iter().map(|d| frequencies(d)).collect();
    let freq_b: Vec<_> = tokens_b.iter().map(|d| frequencies(d)).collect();
    let vocab_a: BTreeSet<&str> = freq_a.iter().flat_map(|f| f.keys().copied()).collect();
    let vocab_b: BTreeSet<&str> = freq_b.iter().flat_map(|f| f.keys().copied()).collect();
    if vocab_a.is_empty() && vocab_b.is_empty() {
        return Err(AnalyticsError::EmptyVocabulary);
    }

    let mut for_a = Vec::new();
    let mut for_b = Vec::new();
    for term in vocab_a.union(&vocab_b) {
        let column = |fs: &[BTreeMap<&str, f64>]| -> Vec<f64> {
            fs.iter().map(|f| f.get(term).copied().unwrap_or(0.0)).collect()
        };
        let rho = mann_whitney_rho(&column(&freq_a), &column(&freq_b));
        let scored = TermScore {
            term: term.to_string(),
            rho,
            score: rho.max(1.0 - rho),
        };
        if rho > 0.5 {
            for_a.push(scored);
        } else if rho < 0.5 {
            for_b.push(scored);
        }
    }
    let group = |mut ranked: Vec<TermScore>, vocabulary: usize| {
        ranked.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.term.cmp(&y.term)));
        let k = (top_fraction * vocabulary as f64).ceil() as usize;
        let key_terms = ranked.iter().take(k).cloned().collect();
        GroupTerms {
            ranked,
            key_terms,
            vocabulary,
        }
    };
    Ok(KeyTermReport {
        group_a: group(for_a, vocab_a.len()),
        group_b: group(for_b, vocab_b.len()),
    })
}
