//! Shared fixtures for CLI integration and acceptance tests: a synthetic
//! corpus generator, replay-cache priming, and helpers to invoke the
//! built binary and snapshot its outputs.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evalforge_client::{cache_key, ReplayCache};
use evalforge_core::model::{
    AspectCriterion, EvaluationRecord, EvaluationSample, HumanScore, InspectionVerdict, Provenance,
    Rating, RatingScale, Task,
};
use evalforge_core::prompt::{
    parse_evaluation, render_eval_prompt, render_inspection_prompt, InspectionKind,
};
use evalforge_core::serialize_sample_record;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_evalforge")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

pub fn write(path: &Path, content: &str) {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(path, content).unwrap();
}

/// All regular files in a directory, name -> bytes.
pub fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut snapshot = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            snapshot.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            );
        }
    }
    snapshot
}

const TASKS: [Task; 3] = [Task::Summarization, Task::StoryGeneration, Task::DataToText];
const ASPECTS: [(&str, &str); 2] = [
    (
        "Coherence",
        "Sentences of the output should fit together into a connected whole.",
    ),
    (
        "Fluency",
        "The output should be well formed and grammatical.",
    ),
];

/// Deterministic target rating for sample `i`.
pub fn planned_rating(i: usize) -> u8 {
    1 + ((i * 7) % 5) as u8
}

/// Ten planned sampling ratings: seven at the target, three deviating.
pub fn planned_ratings(i: usize) -> [u8; 10] {
    let r = planned_rating(i);
    let up = if r == 5 { 4 } else { r + 1 };
    let down = if r == 1 { 2 } else { r - 1 };
    [r, r, up, r, down, r, r, up, r, r]
}

/// Raw completion text for sampling `j` of sample `i`.
pub fn planned_response(i: usize, j: usize) -> String {
    let rating = planned_ratings(i)[j];
    format!(
        "Assessment {j} for sample {i}: the output sits at level {rating} on the target aspect.\nRating: {rating}"
    )
}

fn base_sample(i: usize, low_consistency: bool, cv_conflict: bool) -> EvaluationSample {
    let task = TASKS[i % TASKS.len()];
    let (aspect_name, criterion) = ASPECTS[i % ASPECTS.len()];
    let target_rating = planned_rating(i);
    // Human score lands close to the planned consensus unless this sample
    // is meant to fail cross-validation.
    let aligned = f64::from(target_rating - 1) / 4.0 * 100.0;
    let human = if cv_conflict {
        (aligned + 50.0).rem_euclid(100.0)
    } else {
        (aligned + (i % 9) as f64 - 4.0).clamp(0.0, 100.0)
    };
    let _ = low_consistency;
    EvaluationSample {
        id: format!("synth-{i:03}"),
        task,
        dataset: format!("{}-set-{}", task.id(), i % 2),
        source_label: "Input".to_string(),
        target_label: "Output".to_string(),
        source: format!(
            "Source document {i} describing scenario {} with distinct content tail {}.",
            i * 31 % 97,
            i * 17 % 89
        ),
        target: format!("Generated output text number {i}."),
        reference: None,
        aspect: AspectCriterion::new(aspect_name, criterion).unwrap(),
        human_score: HumanScore {
            value: human,
            scale: RatingScale {
                min: 0.0,
                max: 100.0,
            },
        },
        evaluations: Vec::new(),
    }
}

fn record(analysis: String, rating: u8, verdict: Option<(u8, u8)>) -> EvaluationRecord {
    EvaluationRecord {
        analysis,
        rating: Rating::new(rating).unwrap(),
        temperature: 1.0,
        provenance: Provenance::Model,
        inspection: verdict.map(|(a, p)| InspectionVerdict {
            aspect_alignment: Rating::new(a).unwrap(),
            polarity_consistency: Rating::new(p).unwrap(),
        }),
    }
}

/// Synthetic corpus with evaluations and inspection verdicts attached,
/// ready for `verify` without any backend. Every 10th sample is built to
/// fail the self-consistency gate and every 13th to fail cross-validation.
pub fn corpus_with_records(n: usize) -> Vec<EvaluationSample> {
    (0..n)
        .map(|i| {
            let low_consistency = i % 10 == 9;
            let cv_conflict = i % 13 == 12;
            let mut sample = base_sample(i, low_consistency, cv_conflict);
            let ratings: Vec<u8> = if low_consistency {
                vec![1, 2, 3, 4, 5, 1, 2, 3, 4, 5]
            } else {
                planned_ratings(i).to_vec()
            };
            sample.evaluations = ratings
                .iter()
                .enumerate()
                .map(|(j, &r)| {
                    // Most records carry passing verdicts; every fifth one
                    // fails inspection to exercise the good-record filter.
                    let verdict = if j % 5 == 4 { (3, 3) } else { (5, 4) };
                    record(
                        format!("Take {j} on sample {i} judged at level {r}."),
                        r,
                        Some(verdict),
                    )
                })
                .collect();
            sample
        })
        .collect()
}

/// Synthetic corpus without any evaluations (the `annotate` input).
pub fn corpus_without_records(n: usize) -> Vec<EvaluationSample> {
    (0..n).map(|i| base_sample(i, false, false)).collect()
}

pub fn corpus_jsonl(samples: &[EvaluationSample]) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&serialize_sample_record(sample));
        out.push('\n');
    }
    out
}

/// Prime the replay cache with evaluation responses for every sample and
/// inspection verdicts for every record that will be retained by the
/// consensus, mirroring what `annotate` and `inspect` will request.
pub fn prime_cache(cache_dir: &Path, samples: &[EvaluationSample], temperature: f64) {
    let cache = ReplayCache::open(cache_dir).unwrap();
    for (i, sample) in samples.iter().enumerate() {
        let prompt = render_eval_prompt(sample).unwrap();
        let ratings = planned_ratings(i);
        let consensus = planned_rating(i);
        for (j, &rating) in ratings.iter().enumerate() {
            let response = planned_response(i, j);
            cache
                .put(
                    &cache_key(prompt.as_str(), temperature, j as u32),
                    &response,
                )
                .unwrap();
            if rating == consensus {
                // This record survives consensus; prime both inspections.
                let record = parse_evaluation(&response, temperature).unwrap();
                for kind in [
                    InspectionKind::AspectAlignment,
                    InspectionKind::PolarityConsistency,
                ] {
                    let inspection_prompt =
                        render_inspection_prompt(&record, sample, kind).unwrap();
                    let verdict = match kind {
                        InspectionKind::AspectAlignment => "Strictly on-aspect.\nRating: 5",
                        InspectionKind::PolarityConsistency => {
                            "Polarity matches the rating.\nRating: 4"
                        }
                    };
                    cache
                        .put(&cache_key(inspection_prompt.as_str(), 0.0, 0), verdict)
                        .unwrap();
                }
            }
        }
    }
}

/// Deterministic log-probability batch lines for the given pair ids.
pub fn logprob_batch(pair_ids_and_ratings: &[(String, u8, u8)]) -> String {
    let mut out = String::new();
    for (k, (pair_id, chosen, rejected)) in pair_ids_and_ratings.iter().enumerate() {
        let spread = (k % 7) as f64 * 0.3 - 0.9;
        let line = serde_json::json!({
            "pair_id": pair_id,
            "logp_policy_chosen": -1.0 + spread,
            "logp_policy_rejected": -1.6 - spread,
            "logp_ref_chosen": -1.2,
            "logp_ref_rejected": -1.4,
            "rating_chosen": chosen,
            "rating_rejected": rejected,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

pub fn out_dir(root: &Path, name: &str) -> PathBuf {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
