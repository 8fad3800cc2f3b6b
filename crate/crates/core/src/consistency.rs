//! Multi-perspective verification of annotated samples: rating consensus
//! across repeated samplings, agreement between human and model ratings on
//! a common scale, and second-pass inspection verdicts. The pipeline
//! composes the three checks into a priority-ordered candidate pool.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{scale_rating, EvaluationSample, HumanScore, ModelError, Rating, RatingScale};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsistencyError {
    #[error("cannot take consensus of an empty rating list")]
    EmptyRatings,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Consensus over repeated ratings of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub consistent_rating: Rating,
    /// Fraction of ratings equal to the consistent rating, in (0, 1].
    pub self_consistency: f64,
    /// Indices (into the input list) of ratings equal to the consensus.
    pub retained_indices: Vec<usize>,
}

/// Most frequent rating, with deterministic tie-breaking: among tied modes
/// the one closest to the arithmetic mean of all ratings wins, and a
/// remaining tie goes to the lower rating.
pub fn consistent_rating(ratings: &[Rating]) -> Result<ConsensusResult, ConsistencyError> {
    if ratings.is_empty() {
        return Err(ConsistencyError::EmptyRatings);
    }
    let n = ratings.len();
    let mut counts = [0usize; 5];
    let mut sum: u64 = 0;
    for r in ratings {
        counts[usize::from(r.get() - 1)] += 1;
        sum += u64::from(r.get());
    }
    // Distance to the mean compared in exact integer arithmetic:
    // |r - sum/n| ~ |r*n - sum|.
    let distance = |r: u8| -> u64 { (u64::from(r) * n as u64).abs_diff(sum) };
    let best = (1u8..=5)
        .filter(|r| counts[usize::from(r - 1)] > 0)
        .min_by(|a, b| {
            counts[usize::from(b - 1)]
                .cmp(&counts[usize::from(a - 1)])
                .then(distance(*a).cmp(&distance(*b)))
                .then(a.cmp(b))
        })
        .expect("non-empty rating list has a mode");
    let consistent = Rating::new(best).expect("mode of valid ratings is valid");
    let retained: Vec<usize> = ratings
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == consistent)
        .map(|(i, _)| i)
        .collect();
    let self_consistency = retained.len() as f64 / n as f64;
    Ok(ConsensusResult {
        consistent_rating: consistent,
        self_consistency,
        retained_indices: retained,
    })
}

/// Agreement between the human score and the consensus rating after both
/// are mapped onto the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationResult {
    pub human_unit: f64,
    pub model_unit: f64,
    pub abs_gap: f64,
    pub pass: bool,
}

pub fn cross_validate(
    human: HumanScore,
    r_hat: Rating,
    tolerance: f64,
) -> Result<CrossValidationResult, ConsistencyError> {
    let human_unit = scale_rating(human.value, human.scale, RatingScale::UNIT)?;
    let model_unit = scale_rating(r_hat.as_f64(), RatingScale::LIKERT, RatingScale::UNIT)?;
    let abs_gap = (human_unit - model_unit).abs();
    Ok(CrossValidationResult {
        human_unit,
        model_unit,
        abs_gap,
        pass: abs_gap <= tolerance,
    })
}

/// Thresholds for the three verification perspectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationConfig {
    /// Hard gate on self-consistency; 0.6 keeps majority-plus-one of 10.
    pub min_self_consistency: f64,
    /// Unit-interval gap treated as "close"; 0.25 is one Likert step.
    pub cv_tolerance: f64,
    /// Both inspection verdicts must reach this rating to count as good.
    pub min_inspection: u8,
    /// Whether a cross-validation failure excludes the sample instead of
    /// merely deprioritizing it.
    pub enforce_cv_gate: bool,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            min_self_consistency: 0.6,
            cv_tolerance: 0.25,
            min_inspection: 4,
            enforce_cv_gate: true,
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.min_self_consistency) {
            return Err(ModelError::invalid(
                "min_self_consistency",
                "must lie in [0,1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.cv_tolerance) {
            return Err(ModelError::invalid("cv_tolerance", "must lie in [0,1]"));
        }
        if !(Rating::MIN..=Rating::MAX).contains(&self.min_inspection) {
            return Err(ModelError::invalid("min_inspection", "must lie in [1,5]"));
        }
        Ok(())
    }
}

/// One verified sample with everything downstream selection needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub sample: EvaluationSample,
    pub r_hat: Rating,
    pub self_consistency: f64,
    pub cv: CrossValidationResult,
    /// Indices into `sample.evaluations` whose rating equals `r_hat`.
    pub retained_indices: Vec<usize>,
    /// Retained records whose inspection verdicts both reach the threshold.
    pub good_record_indices: Vec<usize>,
    pub excluded: bool,
    pub exclude_reason: Option<String>,
}

impl PoolEntry {
    /// Priority order: self-consistency descending, cross-validation gap
    /// ascending, good-record count descending, then sample id.
    pub fn compare_priority(&self, other: &Self) -> Ordering {
        other
            .self_consistency
            .total_cmp(&self.self_consistency)
            .then(self.cv.abs_gap.total_cmp(&other.cv.abs_gap))
            .then(
                other
                    .good_record_indices
                    .len()
                    .cmp(&self.good_record_indices.len()),
            )
            .then(self.sample.id.cmp(&other.sample.id))
    }

    pub fn to_record(&self) -> PoolRecord {
        PoolRecord {
            id: self.sample.id.clone(),
            r_hat: self.r_hat,
            self_consistency: self.self_consistency,
            cv: self.cv,
            good_record_indices: self.good_record_indices.clone(),
            excluded: self.excluded,
            exclude_reason: self.exclude_reason.clone(),
        }
    }
}

/// The serialized (JSONL) form of one pool entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub id: String,
    pub r_hat: Rating,
    pub self_consistency: f64,
    pub cv: CrossValidationResult,
    pub good_record_indices: Vec<usize>,
    pub excluded: bool,
    pub exclude_reason: Option<String>,
}

/// A sample the pipeline could not verify, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleIssue {
    pub id: String,
    pub reason: String,
}

/// Verified pool in priority order, plus per-sample issues.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CuratedPool {
    pub entries: Vec<PoolEntry>,
    pub issues: Vec<SampleIssue>,
}

impl CuratedPool {
    pub fn included(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.iter().filter(|e| !e.excluded)
    }
}

fn is_good(record: &crate::model::EvaluationRecord, min_inspection: u8) -> bool {
    record.inspection.is_some_and(|v| {
        v.aspect_alignment.get() >= min_inspection && v.polarity_consistency.get() >= min_inspection
    })
}

/// Run all three verification perspectives over a corpus.
///
/// Consensus is taken over model-provenance evaluations; inspection
/// verdicts are expected to be attached already (records without verdicts
/// simply do not count as good). Per-sample failures are reported, never
/// fatal. Output order is the total priority order.
pub fn verify_pipeline<I>(
    samples: I,
    config: &VerificationConfig,
) -> Result<CuratedPool, ModelError>
where
    I: IntoIterator<Item = EvaluationSample>,
{
    config.validate()?;
    let mut pool = CuratedPool::default();
    for sample in samples {
        let model_indices = sample.model_record_indices();
        if model_indices.is_empty() {
            pool.issues.push(SampleIssue {
                id: sample.id.clone(),
                reason: "no model evaluations".to_string(),
            });
            continue;
        }
        let ratings: Vec<Rating> = model_indices
            .iter()
            .map(|&i| sample.evaluations[i].rating)
            .collect();
        let consensus = consistent_rating(&ratings).expect("model_indices is non-empty");
        let retained: Vec<usize> = consensus
            .retained_indices
            .iter()
            .map(|&i| model_indices[i])
            .collect();
        let cv = match cross_validate(
            sample.human_score,
            consensus.consistent_rating,
            config.cv_tolerance,
        ) {
            Ok(cv) => cv,
            Err(e) => {
                pool.issues.push(SampleIssue {
                    id: sample.id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let good: Vec<usize> = retained
            .iter()
            .copied()
            .filter(|&i| is_good(&sample.evaluations[i], config.min_inspection))
            .collect();
        let (excluded, exclude_reason) = if consensus.self_consistency < config.min_self_consistency
        {
            (true, Some("self-consistency".to_string()))
        } else if config.enforce_cv_gate && !cv.pass {
            (true, Some("cross-validation".to_string()))
        } else {
            (false, None)
        };
        pool.entries.push(PoolEntry {
            sample,
            r_hat: consensus.consistent_rating,
            self_consistency: consensus.self_consistency,
            cv,
            retained_indices: retained,
            good_record_indices: good,
            excluded,
            exclude_reason,
        });
    }
    pool.entries.sort_by(|a, b| a.compare_priority(b));
    Ok(pool)
}

/// Rebuild an in-memory pool from serialized pool records and the corpus
/// they were computed from. Entries keep the priority order.
pub fn join_pool(
    samples: Vec<EvaluationSample>,
    records: Vec<PoolRecord>,
) -> Result<CuratedPool, ModelError> {
    let mut by_id: BTreeMap<String, EvaluationSample> =
        samples.into_iter().map(|s| (s.id.clone(), s)).collect();
    let mut pool = CuratedPool::default();
    for record in records {
        let sample = by_id.remove(&record.id).ok_or_else(|| {
            ModelError::invalid("pool.id", format!("id {:?} not found in corpus", record.id))
        })?;
        let retained: Vec<usize> = sample
            .evaluations
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.provenance == crate::model::Provenance::Model && r.rating == record.r_hat
            })
            .map(|(i, _)| i)
            .collect();
        // Pool files come from disk; good indices must point at retained
        // records of this sample, not wherever a stale file says.
        for &idx in &record.good_record_indices {
            if !retained.contains(&idx) {
                return Err(ModelError::invalid(
                    "pool.good_record_indices",
                    format!(
                        "index {idx} of sample {:?} is not a retained evaluation",
                        record.id
                    ),
                ));
            }
        }
        pool.entries.push(PoolEntry {
            sample,
            r_hat: record.r_hat,
            self_consistency: record.self_consistency,
            cv: record.cv,
            retained_indices: retained,
            good_record_indices: record.good_record_indices,
            excluded: record.excluded,
            exclude_reason: record.exclude_reason,
        });
    }
    pool.entries.sort_by(|a, b| a.compare_priority(b));
    Ok(pool)
}
