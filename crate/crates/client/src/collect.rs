//! Collection orchestration: repeated evaluation sampling and second-pass
//! inspection, with bounded worker concurrency and deterministic merging.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use evalforge_core::model::{EvaluationRecord, EvaluationSample, InspectionVerdict, Rating};
use evalforge_core::prompt::{
    parse_evaluation, parse_inspection_verdict, render_eval_prompt, render_inspection_prompt,
    InspectionKind, RenderError, SamplingPlan,
};

use crate::{BackendError, CompletionBackend, CompletionRequest};

/// Knobs for collection runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectOptions {
    /// Bounded number of in-flight requests.
    pub concurrency: usize,
    /// Total attempts per sampling when a response fails to parse. Each
    /// attempt uses a distinct, deterministic cache index, so retried runs
    /// stay replayable.
    pub parse_attempts: u32,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            concurrency: 4,
            parse_attempts: 3,
        }
    }
}

/// One sampling that produced no usable record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectFailure {
    /// Sampling index (or record index for inspection failures).
    pub index: usize,
    pub error: String,
}

/// Records recovered from one sample's samplings plus the failures.
/// `records.len() + failures.len() == plan.n` always.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectOutcome {
    pub records: Vec<EvaluationRecord>,
    pub failures: Vec<CollectFailure>,
}

// Run jobs 0..n on a bounded worker pool; results land in index order.
fn run_indexed<T, F>(n: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every job writes its slot")
        })
        .collect()
}

fn content_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn request_with_retries<B: CompletionBackend + ?Sized, T>(
    backend: &B,
    prompt: &str,
    temperature: f64,
    base_index: u32,
    index_stride: u32,
    attempts: u32,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<(String, T), String> {
    let mut parse_error: Option<String> = None;
    let mut backend_error: Option<BackendError> = None;
    for attempt in 0..attempts.max(1) {
        let request = CompletionRequest {
            prompt,
            temperature,
            index: base_index + index_stride * attempt,
        };
        match backend.complete(&request) {
            Ok(text) => match parse(&text) {
                Ok(value) => return Ok((text, value)),
                Err(e) => parse_error = Some(e),
            },
            Err(e) => {
                backend_error = Some(e);
                break;
            }
        }
    }
    // A parse failure is the root cause worth reporting; a backend error
    // only ended the retry loop.
    match (parse_error, backend_error) {
        (Some(parse), Some(backend)) => Err(format!("{parse} (then: {backend})")),
        (Some(parse), None) => Err(parse),
        (None, Some(backend)) => Err(backend.to_string()),
        (None, None) => Err("no attempts made".to_string()),
    }
}

/// Sample `plan.n` evaluations of one sample from the backend.
///
/// Responses are requested independently (one index per sampling), parsed,
/// and re-sorted by the content hash of the raw response so the output
/// order is independent of request completion order. Unparseable responses
/// are retried at shifted indices up to the attempt budget, then reported
/// as failures; the outcome never silently drops below `plan.n`.
pub fn collect_evaluations<B: CompletionBackend + ?Sized>(
    sample: &EvaluationSample,
    plan: &SamplingPlan,
    backend: &B,
    options: &CollectOptions,
) -> Result<CollectOutcome, RenderError> {
    plan.validate().expect("sampling plan validated by caller");
    let prompt = render_eval_prompt(sample)?;
    let results = run_indexed(plan.n as usize, options.concurrency, |i| {
        request_with_retries(
            backend,
            prompt.as_str(),
            plan.temperature,
            i as u32,
            plan.n,
            options.parse_attempts,
            |text| parse_evaluation(text, plan.temperature).map_err(|e| e.to_string()),
        )
    });
    let mut tagged: Vec<([u8; 32], usize, EvaluationRecord)> = Vec::new();
    let mut failures = Vec::new();
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok((raw, record)) => tagged.push((content_hash(&raw), index, record)),
            Err(error) => failures.push(CollectFailure { index, error }),
        }
    }
    tagged.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(CollectOutcome {
        records: tagged.into_iter().map(|(_, _, r)| r).collect(),
        failures,
    })
}

/// Inspection verdicts for the given records of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectOutcome {
    /// (record index, verdict) for records where both passes succeeded.
    pub verdicts: Vec<(usize, InspectionVerdict)>,
    pub failures: Vec<CollectFailure>,
}

/// Run both inspection passes over the given evaluation records.
///
/// A record only gains a verdict when both the aspect-alignment and the
/// polarity-consistency passes parse; failures are reported per record and
/// leave the record without a verdict rather than dropping it.
pub fn inspect_evaluations<B: CompletionBackend + ?Sized>(
    sample: &EvaluationSample,
    record_indices: &[usize],
    backend: &B,
    temperature: f64,
    options: &CollectOptions,
) -> Result<InspectOutcome, RenderError> {
    const KINDS: [InspectionKind; 2] = [
        InspectionKind::AspectAlignment,
        InspectionKind::PolarityConsistency,
    ];
    // Render everything up front so render errors surface before any
    // request goes out.
    let mut prompts = Vec::with_capacity(record_indices.len() * 2);
    for &record_index in record_indices {
        let record = &sample.evaluations[record_index];
        for kind in KINDS {
            prompts.push((
                record_index,
                kind,
                render_inspection_prompt(record, sample, kind)?,
            ));
        }
    }
    let results = run_indexed(prompts.len(), options.concurrency, |j| {
        let (record_index, kind, prompt) = &prompts[j];
        let outcome = request_with_retries(
            backend,
            prompt.as_str(),
            temperature,
            0,
            1,
            options.parse_attempts,
            |text| parse_inspection_verdict(text).map_err(|e| e.to_string()),
        );
        (*record_index, *kind, outcome.map(|(_, rating)| rating))
    });
    let mut by_record: Vec<(usize, [Option<Rating>; 2])> = Vec::new();
    let mut failures = Vec::new();
    for (record_index, kind, outcome) in results {
        let slot = match by_record.iter_mut().find(|(i, _)| *i == record_index) {
            Some((_, slot)) => slot,
            None => {
                by_record.push((record_index, [None, None]));
                &mut by_record.last_mut().expect("just pushed").1
            }
        };
        match outcome {
            Ok(rating) => {
                slot[usize::from(kind == InspectionKind::PolarityConsistency)] = Some(rating)
            }
            Err(error) => failures.push(CollectFailure {
                index: record_index,
                error: format!("{kind:?}: {error}"),
            }),
        }
    }
    let verdicts = by_record
        .into_iter()
        .filter_map(|(record_index, slots)| match slots {
            [Some(aspect_alignment), Some(polarity_consistency)] => Some((
                record_index,
                InspectionVerdict {
                    aspect_alignment,
                    polarity_consistency,
                },
            )),
            _ => None,
        })
        .collect();
    Ok(InspectOutcome { verdicts, failures })
}
