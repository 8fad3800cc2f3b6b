//! `evalforge`: build, verify, and meta-evaluate NLG evaluation data.
//!
//! Exit codes: 0 success, 1 validation or input error, 2 backend failure.
//! Every command writes a `run_report.json` (inputs by content hash,
//! effective config, counts) under the output directory.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

use commands::{BackendFlags, CmdError, GroupBy, SampleFlags};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "evalforge", version, about = "NLG evaluation data pipeline")]
struct Cli {
    /// JSON config file merged over built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing); all outputs use fixed names.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed recorded in the run report; all randomness flows from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bound on concurrent annotation requests.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate dataset manifests into per-task statistics.
    Stats {
        /// Manifest file or directory of .json manifests.
        #[arg(long)]
        manifests: Option<PathBuf>,
    },
    /// Validate a corpus file line by line.
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Cap on reported issues.
        #[arg(long, default_value_t = 20)]
        max_errors: usize,
    },
    /// Collect model evaluations for every corpus sample.
    Annotate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Replay cache directory.
        #[arg(long)]
        cache: PathBuf,
        /// Allow live requests on cache misses.
        #[arg(long)]
        live: bool,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        url: Option<String>,
    },
    /// Attach inspection verdicts to consensus evaluations.
    Inspect {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        live: bool,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Run the verification pipeline into a curated pool.
    Verify {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        min_self_consistency: Option<f64>,
        #[arg(long)]
        cv_tolerance: Option<f64>,
        #[arg(long)]
        min_inspection: Option<u8>,
        /// Deprioritize instead of excluding cross-validation failures.
        #[arg(long)]
        no_cv_gate: bool,
    },
    /// Build the balanced SFT dataset from a verified pool.
    Sample {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        per_category: Option<usize>,
        #[arg(long)]
        padding_cap: Option<usize>,
        /// JSON table of aspect name -> alternative criterion texts.
        #[arg(long)]
        paraphrases: Option<PathBuf>,
        /// Fraction of examples held out as a validation split.
        #[arg(long)]
        validation_ratio: Option<f64>,
    },
    /// Construct and prioritize preference pairs.
    Pairs {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Evaluate the rating-guided DPO objective on a log-probability batch.
    Dpo {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Check analytic DPO gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Correlate a rating file with the corpus human labels.
    Metaeval {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        grouping: Option<CliGrouping>,
    },
    /// Compare rating files before and after perturbations.
    Perturb {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GroupBy::Task)]
        group_by: GroupBy,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum CliGrouping {
    SampleLevel,
    DatasetLevel,
}

fn resolve_path(
    flag: Option<PathBuf>,
    fallback: Option<PathBuf>,
    what: &str,
) -> Result<PathBuf, CmdError> {
    flag.or(fallback)
        .ok_or_else(|| CmdError::Input(anyhow!("{what} required (flag or config paths section)")))
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let mut config = RunConfig::load(cli.config.as_deref()).map_err(CmdError::Input)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        config.annotation.concurrency = jobs;
    }
    let out = resolve_path(cli.out, config.paths.out.clone(), "--out")?;

    match cli.command {
        Command::Stats { manifests } => {
            let manifests = resolve_path(manifests, config.paths.manifests.clone(), "--manifests")?;
            config.validate().map_err(CmdError::Input)?;
            commands::stats(&config, &manifests, &out)
        }
        Command::Validate { corpus, max_errors } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            config.validate().map_err(CmdError::Input)?;
            commands::validate(&config, &corpus, &out, max_errors)
        }
        Command::Annotate {
            corpus,
            cache,
            live,
            n,
            temperature,
            model,
            url,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(n) = n {
                config.annotation.n = n;
            }
            if let Some(t) = temperature {
                config.annotation.temperature = t;
            }
            if let Some(model) = model {
                config.annotation.model = model;
            }
            if let Some(url) = url {
                config.annotation.url = url;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::annotate(&config, &corpus, &out, &BackendFlags { cache, live })
        }
        Command::Inspect {
            corpus,
            cache,
            live,
            temperature,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(t) = temperature {
                config.annotation.inspection_temperature = t;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::inspect(&config, &corpus, &out, &BackendFlags { cache, live })
        }
        Command::Verify {
            corpus,
            min_self_consistency,
            cv_tolerance,
            min_inspection,
            no_cv_gate,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(v) = min_self_consistency {
                config.verification.min_self_consistency = v;
            }
            if let Some(v) = cv_tolerance {
                config.verification.cv_tolerance = v;
            }
            if let Some(v) = min_inspection {
                config.verification.min_inspection = v;
            }
            if no_cv_gate {
                config.verification.enforce_cv_gate = false;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::verify(&config, &corpus, &out)
        }
        Command::Sample {
            corpus,
            pool,
            per_category,
            padding_cap,
            paraphrases,
            validation_ratio,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(v) = per_category {
                config.sampling.per_category = v;
            }
            if let Some(v) = padding_cap {
                config.sampling.padding_cap = v;
            }
            if let Some(v) = validation_ratio {
                config.sampling.validation_ratio = v;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::sample(&config, &corpus, &pool, &out, &SampleFlags { paraphrases })
        }
        Command::Pairs {
            corpus,
            pool,
            budget,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(v) = budget {
                config.preference.budget = v;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::pairs(&config, &corpus, &pool, &out)
        }
        Command::Dpo { batch, alpha, beta } => {
            if let Some(v) = alpha {
                config.dpo.alpha = v;
            }
            if let Some(v) = beta {
                config.dpo.beta = v;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::dpo(&config, &batch, &out)
        }
        Command::Gradcheck {
            batch,
            alpha,
            beta,
            eps,
            tol,
        } => {
            if let Some(v) = alpha {
                config.dpo.alpha = v;
            }
            if let Some(v) = beta {
                config.dpo.beta = v;
            }
            config.validate().map_err(CmdError::Input)?;
            commands::gradcheck(&config, &batch, &out, eps, tol)
        }
        Command::Metaeval {
            ratings,
            corpus,
            grouping,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            if let Some(g) = grouping {
                config.metaeval.grouping = match g {
                    CliGrouping::SampleLevel => evalforge_core::Grouping::SampleLevel,
                    CliGrouping::DatasetLevel => evalforge_core::Grouping::DatasetLevel,
                };
            }
            config.validate().map_err(CmdError::Input)?;
            commands::metaeval(&config, &ratings, &corpus, &out)
        }
        Command::Perturb {
            before,
            after,
            corpus,
            group_by,
        } => {
            let corpus = resolve_path(corpus, config.paths.corpus.clone(), "--corpus")?;
            config.validate().map_err(CmdError::Input)?;
            commands::perturb(&config, &before, &after, &corpus, &out, group_by)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage/help output; unknown flags and subcommands exit 1.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CmdError::Backend(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
