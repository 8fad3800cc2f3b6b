//! One function per subcommand. Every command records its inputs by
//! content hash, writes fixed-name outputs under the output directory, and
//! finishes with a run report.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use evalforge_client::{
    collect_evaluations, inspect_evaluations, CachedBackend, CollectOptions, HttpBackend,
    HttpConfig, ReplayCache,
};
use evalforge_core::consistency::SampleIssue;
use evalforge_core::curation::ParaphraseTable;
use evalforge_core::manifest::render_stats_table;
use evalforge_core::metaeval::{
    render_correlation_csv, render_correlation_table, render_perturbation_table, RatingEntry,
};
use evalforge_core::model::Provenance;
use evalforge_core::prompt::SamplingPlan;
use evalforge_core::rgdpo::BatchExample;
use evalforge_core::{
    balanced_sample, build_pairs, check_gradient, consistent_rating, correlation_report,
    emit_sft_dataset, evaluate_batch, join_pool, manifest_stats, parse_sample_record,
    perturbation_report, prioritize_pairs, serialize_sample_record, validate_corpus,
    verify_pipeline, DatasetManifest, EvaluationSample, PoolRecord,
};

use crate::config::RunConfig;
use crate::report::{read_lines, to_jsonl, RunReport};

/// Command failure with the exit code it maps to: input/validation errors
/// exit 1, backend failures exit 2.
#[derive(Debug)]
pub enum CmdError {
    Input(anyhow::Error),
    Backend(anyhow::Error),
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Input(e)
    }
}

pub type CmdResult = Result<(), CmdError>;

fn load_corpus(path: &Path) -> Result<Vec<EvaluationSample>> {
    let lines = read_lines(path)?;
    let mut samples = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let sample =
            parse_sample_record(line).map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        samples.push(sample);
    }
    Ok(samples)
}

fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let lines = read_lines(path)?;
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let record: T =
            serde_json::from_str(line).map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn manifest_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("cannot read manifest dir {}", path.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .json manifests under {}", path.display());
    }
    Ok(paths)
}

pub fn stats(config: &RunConfig, manifests: &Path, out: &Path) -> CmdResult {
    let mut report = RunReport::new("stats", config);
    let paths = manifest_paths(manifests)?;
    let mut loaded = Vec::new();
    for path in &paths {
        report.add_input(&format!("manifests/{}", file_name(path)), path)?;
        let json = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        loaded.push(
            DatasetManifest::from_json(&json).map_err(|e| anyhow!("{}: {e}", path.display()))?,
        );
    }
    let stats = manifest_stats(&loaded).map_err(|e| anyhow!("{e}"))?;
    print!("{}", render_stats_table(&stats));
    let total_samples: u64 = stats.values().map(|s| s.samples).sum();
    report.count("tasks", stats.len());
    report.count("total_samples", total_samples);
    report.write_output(out, "stats.json", &pretty(&stats))?;
    report.finish(out)?;
    Ok(())
}

pub fn validate(config: &RunConfig, corpus: &Path, out: &Path, max_errors: usize) -> CmdResult {
    let mut report = RunReport::new("validate", config);
    report.add_input("corpus", corpus)?;
    let lines = read_lines(corpus)?;
    let validation = validate_corpus(&lines, max_errors);
    println!(
        "validate: {} lines, {} valid, {} invalid",
        validation.total, validation.valid, validation.invalid
    );
    for issue in &validation.issues {
        println!("  line {}: {}", issue.line, issue.error);
    }
    let invalid = validation.invalid;
    report.count("total", validation.total);
    report.count("valid", validation.valid);
    report.count("invalid", invalid);
    report.write_output(out, "validation.json", &pretty(&validation))?;
    report.finish(out)?;
    if invalid > 0 {
        return Err(CmdError::Input(anyhow!("{invalid} invalid corpus lines")));
    }
    Ok(())
}

pub struct BackendFlags {
    pub cache: PathBuf,
    pub live: bool,
}

fn build_backend(
    config: &RunConfig,
    flags: &BackendFlags,
) -> Result<CachedBackend<HttpBackend>, CmdError> {
    let cache = ReplayCache::open(&flags.cache).map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let live = if flags.live {
        let http = HttpBackend::new(HttpConfig::new(
            config.annotation.url.clone(),
            config.annotation.model.clone(),
        ))
        .map_err(|e| CmdError::Backend(anyhow!("{e}")))?;
        Some(http)
    } else {
        None
    };
    Ok(CachedBackend::new(cache, live))
}

#[derive(Serialize)]
struct SampleFailures {
    id: String,
    failures: Vec<evalforge_client::CollectFailure>,
}

pub fn annotate(
    config: &RunConfig,
    corpus: &Path,
    out: &Path,
    backend_flags: &BackendFlags,
) -> CmdResult {
    let mut report = RunReport::new("annotate", config);
    report.add_input("corpus", corpus)?;
    let mut samples = load_corpus(corpus)?;
    let backend = build_backend(config, backend_flags)?;
    let plan = SamplingPlan {
        n: config.annotation.n,
        temperature: config.annotation.temperature,
    };
    plan.validate()
        .map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let options = CollectOptions {
        concurrency: config.annotation.concurrency,
        parse_attempts: config.annotation.parse_attempts,
    };
    let mut all_failures: Vec<SampleFailures> = Vec::new();
    let mut collected = 0usize;
    for sample in &mut samples {
        let outcome = collect_evaluations(sample, &plan, &backend, &options)
            .map_err(|e| CmdError::Input(anyhow!("sample {}: {e}", sample.id)))?;
        collected += outcome.records.len();
        if !outcome.failures.is_empty() {
            all_failures.push(SampleFailures {
                id: sample.id.clone(),
                failures: outcome.failures,
            });
        }
        // Human-provenance records are source data and stay; model records
        // are replaced by this run's collection.
        sample
            .evaluations
            .retain(|r| r.provenance == Provenance::Human);
        sample.evaluations.extend(outcome.records);
    }
    let jsonl = to_jsonl(samples.iter().map(serialize_sample_record_line));
    report.count("samples", samples.len());
    report.count("records_collected", collected);
    report.count(
        "failed_samplings",
        all_failures.iter().map(|f| f.failures.len()).sum::<usize>(),
    );
    report.count(
        "failures",
        serde_json::to_value(&all_failures).expect("serializes"),
    );
    report.write_output(out, "annotated.jsonl", &jsonl)?;
    report.finish(out)?;
    println!(
        "annotate: {} samples, {} records collected, {} failures",
        samples.len(),
        collected,
        all_failures.iter().map(|f| f.failures.len()).sum::<usize>()
    );
    if !all_failures.is_empty() {
        return Err(CmdError::Backend(anyhow!(
            "{} samplings failed; partial results written",
            all_failures.iter().map(|f| f.failures.len()).sum::<usize>()
        )));
    }
    Ok(())
}

// to_jsonl expects Serialize; corpus lines are already exact strings.
fn serialize_sample_record_line(sample: &EvaluationSample) -> serde_json::Value {
    serde_json::from_str(&serialize_sample_record(sample)).expect("round-trips")
}

pub fn inspect(
    config: &RunConfig,
    corpus: &Path,
    out: &Path,
    backend_flags: &BackendFlags,
) -> CmdResult {
    let mut report = RunReport::new("inspect", config);
    report.add_input("corpus", corpus)?;
    let mut samples = load_corpus(corpus)?;
    let backend = build_backend(config, backend_flags)?;
    let options = CollectOptions {
        concurrency: config.annotation.concurrency,
        parse_attempts: config.annotation.parse_attempts,
    };
    let mut issues: Vec<SampleIssue> = Vec::new();
    let mut failures: Vec<SampleFailures> = Vec::new();
    let mut inspected = 0usize;
    for sample in &mut samples {
        let model_indices = sample.model_record_indices();
        if model_indices.is_empty() {
            issues.push(SampleIssue {
                id: sample.id.clone(),
                reason: "no model evaluations".to_string(),
            });
            continue;
        }
        let ratings: Vec<_> = model_indices
            .iter()
            .map(|&i| sample.evaluations[i].rating)
            .collect();
        let consensus = consistent_rating(&ratings).expect("non-empty ratings");
        let retained: Vec<usize> = consensus
            .retained_indices
            .iter()
            .map(|&i| model_indices[i])
            .collect();
        let outcome = inspect_evaluations(
            sample,
            &retained,
            &backend,
            config.annotation.inspection_temperature,
            &options,
        )
        .map_err(|e| CmdError::Input(anyhow!("sample {}: {e}", sample.id)))?;
        for (record_index, verdict) in outcome.verdicts {
            sample.evaluations[record_index].inspection = Some(verdict);
            inspected += 1;
        }
        if !outcome.failures.is_empty() {
            failures.push(SampleFailures {
                id: sample.id.clone(),
                failures: outcome.failures,
            });
        }
    }
    let jsonl = to_jsonl(samples.iter().map(serialize_sample_record_line));
    let failed: usize = failures.iter().map(|f| f.failures.len()).sum();
    report.count("samples", samples.len());
    report.count("records_inspected", inspected);
    report.count("failed_inspections", failed);
    report.count("issues", serde_json::to_value(&issues).expect("serializes"));
    report.count(
        "failures",
        serde_json::to_value(&failures).expect("serializes"),
    );
    report.write_output(out, "inspected.jsonl", &jsonl)?;
    report.finish(out)?;
    println!(
        "inspect: {} samples, {} records inspected, {} failures",
        samples.len(),
        inspected,
        failed
    );
    if failed > 0 {
        return Err(CmdError::Backend(anyhow!(
            "{failed} inspection requests failed; partial verdicts written"
        )));
    }
    Ok(())
}

pub fn verify(config: &RunConfig, corpus: &Path, out: &Path) -> CmdResult {
    let mut report = RunReport::new("verify", config);
    report.add_input("corpus", corpus)?;
    let samples = load_corpus(corpus)?;
    let pool = verify_pipeline(samples, &config.verification)
        .map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let records: Vec<PoolRecord> = pool.entries.iter().map(|e| e.to_record()).collect();
    let included = pool.included().count();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for entry in &pool.entries {
        if let Some(reason) = &entry.exclude_reason {
            *reasons.entry(reason.clone()).or_default() += 1;
        }
    }
    report.count("entries", pool.entries.len());
    report.count("included", included);
    report.count("excluded", pool.entries.len() - included);
    report.count(
        "exclude_reasons",
        serde_json::to_value(&reasons).expect("serializes"),
    );
    report.count(
        "issues",
        serde_json::to_value(&pool.issues).expect("serializes"),
    );
    report.write_output(out, "pool.jsonl", &to_jsonl(records))?;
    report.finish(out)?;
    println!(
        "verify: {} entries ({} included, {} excluded), {} issues",
        pool.entries.len(),
        included,
        pool.entries.len() - included,
        pool.issues.len()
    );
    for issue in &pool.issues {
        println!("  {}: {}", issue.id, issue.reason);
    }
    if !pool.issues.is_empty() {
        return Err(CmdError::Input(anyhow!(
            "{} samples could not be verified",
            pool.issues.len()
        )));
    }
    Ok(())
}

pub struct SampleFlags {
    pub paraphrases: Option<PathBuf>,
}

pub fn sample(
    config: &RunConfig,
    corpus: &Path,
    pool_path: &Path,
    out: &Path,
    flags: &SampleFlags,
) -> CmdResult {
    let mut report = RunReport::new("sample", config);
    report.add_input("corpus", corpus)?;
    report.add_input("pool", pool_path)?;
    let samples = load_corpus(corpus)?;
    let records: Vec<PoolRecord> = load_jsonl(pool_path)?;
    let pool = join_pool(samples, records).map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let paraphrases: Option<ParaphraseTable> = match &flags.paraphrases {
        Some(path) => {
            report.add_input("paraphrases", path)?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Some(serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?)
        }
        None => None,
    };
    let selection = balanced_sample(&pool, config.sampling.per_category, config.seed);
    let underfilled: Vec<String> = selection
        .iter()
        .filter(|(_, s)| s.underfilled)
        .map(|(k, _)| k.to_string())
        .collect();
    let (mut examples, emit_report) = emit_sft_dataset(
        &pool,
        &selection,
        config.sampling.per_category,
        config.sampling.padding_cap,
        paraphrases.as_ref(),
        config.seed,
    )
    .map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    for warning in &emit_report.unknown_paraphrase_aspects {
        eprintln!("warning: paraphrase entry for unknown aspect {warning:?} ignored");
    }
    // Optional seeded validation split.
    let ratio = config.sampling.validation_ratio;
    let mut validation = Vec::new();
    if ratio > 0.0 {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            config.seed ^ 0x0056_414c_4944u64,
        ));
        let k = (examples.len() as f64 * ratio).floor() as usize;
        let held: HashSet<usize> = order.into_iter().take(k).collect();
        let mut train = Vec::with_capacity(examples.len() - k);
        for (i, example) in examples.into_iter().enumerate() {
            if held.contains(&i) {
                validation.push(example);
            } else {
                train.push(example);
            }
        }
        examples = train;
    }
    report.count("categories", selection.len());
    report.count(
        "underfilled",
        serde_json::to_value(&underfilled).expect("serializes"),
    );
    report.count(
        "skipped_no_good_records",
        serde_json::to_value(&emit_report.skipped).expect("serializes"),
    );
    report.count(
        "per_category",
        serde_json::to_value(&emit_report.per_category).expect("serializes"),
    );
    report.count("examples", examples.len());
    report.count("validation_examples", validation.len());
    report.write_output(out, "sft.jsonl", &to_jsonl(&examples))?;
    if !validation.is_empty() {
        report.write_output(out, "sft_validation.jsonl", &to_jsonl(&validation))?;
    }
    report.finish(out)?;
    println!(
        "sample: {} categories, {} examples ({} held out), {} underfilled, {} skipped",
        selection.len(),
        examples.len(),
        validation.len(),
        underfilled.len(),
        emit_report.skipped.len()
    );
    Ok(())
}

pub fn pairs(config: &RunConfig, corpus: &Path, pool_path: &Path, out: &Path) -> CmdResult {
    let mut report = RunReport::new("pairs", config);
    report.add_input("corpus", corpus)?;
    report.add_input("pool", pool_path)?;
    let samples = load_corpus(corpus)?;
    let records: Vec<PoolRecord> = load_jsonl(pool_path)?;
    let pool = join_pool(samples, records).map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let mut all = Vec::new();
    for entry in pool.included() {
        let built = build_pairs(&entry.sample, entry.r_hat)
            .map_err(|e| CmdError::Input(anyhow!("sample {}: {e}", entry.sample.id)))?;
        all.extend(built);
    }
    let built = all.len();
    let selected = prioritize_pairs(all, config.preference.budget);
    report.count("built", built);
    report.count("selected", selected.len());
    report.count("budget", config.preference.budget);
    let records: Vec<_> = selected.iter().map(|p| p.to_record()).collect();
    report.write_output(out, "pairs.jsonl", &to_jsonl(&records))?;
    report.finish(out)?;
    println!(
        "pairs: {built} built, {} selected (budget {})",
        selected.len(),
        config.preference.budget
    );
    Ok(())
}

pub fn dpo(config: &RunConfig, batch_path: &Path, out: &Path) -> CmdResult {
    let mut report = RunReport::new("dpo", config);
    report.add_input("batch", batch_path)?;
    let batch: Vec<BatchExample> = load_jsonl(batch_path)?;
    let result =
        evaluate_batch(&batch, &config.dpo).map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    println!("mean_loss {:.6}", result.mean_loss);
    report.count("n", result.n);
    report.count("mean_loss", result.mean_loss);
    report.write_output(out, "dpo_report.json", &pretty(&result))?;
    report.finish(out)?;
    Ok(())
}

#[derive(Serialize)]
struct GradCheckReport {
    n: usize,
    eps: f64,
    tolerance: f64,
    max_relative_error: f64,
    reference_gradients_zero: bool,
}

pub fn gradcheck(
    config: &RunConfig,
    batch_path: &Path,
    out: &Path,
    eps: f64,
    tol: f64,
) -> CmdResult {
    let mut report = RunReport::new("gradcheck", config);
    report.add_input("batch", batch_path)?;
    let batch: Vec<BatchExample> = load_jsonl(batch_path)?;
    if batch.is_empty() {
        return Err(CmdError::Input(anyhow!("empty batch")));
    }
    let mut max_error = 0.0f64;
    let mut reference_zero = true;
    for line in &batch {
        let example = line.example();
        let error = check_gradient(&example, &config.dpo, eps)
            .map_err(|e| CmdError::Input(anyhow!("pair {}: {e}", line.pair_id)))?;
        max_error = max_error.max(error);
        let grads = evalforge_core::rgdpo_grad(&example, &config.dpo)
            .map_err(|e| CmdError::Input(anyhow!("pair {}: {e}", line.pair_id)))?;
        reference_zero &= grads.wrt_logp_ref_chosen == 0.0 && grads.wrt_logp_ref_rejected == 0.0;
    }
    let grad_report = GradCheckReport {
        n: batch.len(),
        eps,
        tolerance: tol,
        max_relative_error: max_error,
        reference_gradients_zero: reference_zero,
    };
    println!(
        "gradcheck: n {} eps {:e} max_relative_error {:.3e}",
        batch.len(),
        eps,
        max_error
    );
    report.count("n", batch.len());
    report.count("max_relative_error", max_error);
    report.write_output(out, "gradcheck.json", &pretty(&grad_report))?;
    report.finish(out)?;
    if max_error > tol {
        return Err(CmdError::Input(anyhow!(
            "max relative error {max_error:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(())
}

pub fn metaeval(config: &RunConfig, ratings_path: &Path, corpus: &Path, out: &Path) -> CmdResult {
    let mut report = RunReport::new("metaeval", config);
    report.add_input("ratings", ratings_path)?;
    report.add_input("corpus", corpus)?;
    let ratings: Vec<RatingEntry> = load_jsonl(ratings_path)?;
    let samples = load_corpus(corpus)?;
    let correlations = correlation_report(&ratings, &samples, config.metaeval.grouping)
        .map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    let table = render_correlation_table(
        &correlations,
        &config.metaeval.coefficients,
        config.metaeval.average,
    );
    print!("{table}");
    report.count("cells", correlations.cells.len());
    report.count("datasets", correlations.datasets.len());
    report.write_output(out, "correlations.json", &pretty(&correlations))?;
    report.write_output(
        out,
        "correlations.csv",
        &render_correlation_csv(&correlations),
    )?;
    report.finish(out)?;
    Ok(())
}

/// What label perturbation changes are grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GroupBy {
    Task,
    Dataset,
}

pub fn perturb(
    config: &RunConfig,
    before_path: &Path,
    after_path: &Path,
    corpus: &Path,
    out: &Path,
    group_by: GroupBy,
) -> CmdResult {
    let mut report = RunReport::new("perturb", config);
    report.add_input("before", before_path)?;
    report.add_input("after", after_path)?;
    report.add_input("corpus", corpus)?;
    let before: Vec<RatingEntry> = load_jsonl(before_path)?;
    let after: Vec<RatingEntry> = load_jsonl(after_path)?;
    let samples = load_corpus(corpus)?;
    let groups: BTreeMap<String, String> = samples
        .iter()
        .map(|s| {
            let label = match group_by {
                GroupBy::Task => s.task.display_name().to_string(),
                GroupBy::Dataset => s.dataset.clone(),
            };
            (s.id.clone(), label)
        })
        .collect();
    let perturbation = perturbation_report(&before, &after, &groups)
        .map_err(|e| CmdError::Input(anyhow!("{e}")))?;
    print!("{}", render_perturbation_table(&perturbation));
    report.count("groups", perturbation.groups.len());
    report.count("average_change", perturbation.average);
    report.write_output(out, "perturbation.json", &pretty(&perturbation))?;
    report.finish(out)?;
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
