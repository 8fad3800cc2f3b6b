//! Preference pair construction and rating-gap prioritization.
//!
//! Pairs come only from evaluations the corpus already holds; no responses
//! are synthesized. Prioritization is a fixed total order, so any budget
//! prefix is reproducible and monotone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{EvaluationRecord, EvaluationSample, Provenance, Rating};
use crate::prompt::{render_eval_prompt, PromptText, RenderError};

/// A chosen/rejected evaluation pair for alignment training.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub pair_id: String,
    pub sample_id: String,
    pub prompt: PromptText,
    pub chosen: EvaluationRecord,
    pub rejected: EvaluationRecord,
    /// Raw Likert gap `|R(chosen) - R(rejected)|`, always >= 1.
    pub gap: u8,
}

/// Serialized (JSONL) form of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub sample_id: String,
    pub prompt: String,
    pub chosen: PairSide,
    pub rejected: PairSide,
    pub gap: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSide {
    pub analysis: String,
    pub rating: Rating,
}

impl PreferencePair {
    pub fn to_record(&self) -> PairRecord {
        PairRecord {
            pair_id: self.pair_id.clone(),
            sample_id: self.sample_id.clone(),
            prompt: self.prompt.as_str().to_string(),
            chosen: PairSide {
                analysis: self.chosen.analysis.clone(),
                rating: self.chosen.rating,
            },
            rejected: PairSide {
                analysis: self.rejected.analysis.clone(),
                rating: self.rejected.rating,
            },
            gap: self.gap,
        }
    }
}

/// Cross product of a sample's consensus-rated evaluations against the
/// rest. Samples whose evaluations all agree yield no pairs; that is an
/// empty result, not an error.
pub fn build_pairs(
    sample: &EvaluationSample,
    r_hat: Rating,
) -> Result<Vec<PreferencePair>, RenderError> {
    let model_records: Vec<(usize, &EvaluationRecord)> = sample
        .evaluations
        .iter()
        .enumerate()
        .filter(|(_, r)| r.provenance == Provenance::Model)
        .collect();
    let chosen: Vec<&(usize, &EvaluationRecord)> = model_records
        .iter()
        .filter(|(_, r)| r.rating == r_hat)
        .collect();
    let rejected: Vec<&(usize, &EvaluationRecord)> = model_records
        .iter()
        .filter(|(_, r)| r.rating != r_hat)
        .collect();
    if chosen.is_empty() || rejected.is_empty() {
        return Ok(Vec::new());
    }
    let prompt = render_eval_prompt(sample)?;
    let mut pairs = Vec::with_capacity(chosen.len() * rejected.len());
    for (ci, c) in &chosen {
        for (ri, r) in &rejected {
            pairs.push(PreferencePair {
                pair_id: format!("{}#c{ci}-r{ri}", sample.id),
                sample_id: sample.id.clone(),
                prompt: prompt.clone(),
                chosen: (*c).clone(),
                rejected: (*r).clone(),
                gap: c.rating.gap(r.rating),
            });
        }
    }
    Ok(pairs)
}

/// Select up to `budget` pairs: gap descending, with per-sample round-robin
/// fairness (every sample contributes its best pair before any sample
/// contributes a second), ties broken by pair id.
///
/// The order is total and input-order independent, so the top-k selection
/// is a prefix of the top-(k+1) selection.
pub fn prioritize_pairs(pairs: Vec<PreferencePair>, budget: usize) -> Vec<PreferencePair> {
    let mut per_sample: BTreeMap<String, Vec<PreferencePair>> = BTreeMap::new();
    for pair in pairs {
        per_sample
            .entry(pair.sample_id.clone())
            .or_default()
            .push(pair);
    }
    // (round within sample, pair) where each sample's pairs are ranked by
    // gap descending then id.
    let mut ranked: Vec<(usize, PreferencePair)> = Vec::new();
    for (_, mut sample_pairs) in per_sample {
        sample_pairs.sort_by(|a, b| b.gap.cmp(&a.gap).then(a.pair_id.cmp(&b.pair_id)));
        for (round, pair) in sample_pairs.into_iter().enumerate() {
            ranked.push((round, pair));
        }
    }
    ranked.sort_by(|(round_a, a), (round_b, b)| {
        round_a
            .cmp(round_b)
            .then(b.gap.cmp(&a.gap))
            .then(a.pair_id.cmp(&b.pair_id))
    });
    ranked
        .into_iter()
        .take(budget)
        .map(|(_, pair)| pair)
        .collect()
}
