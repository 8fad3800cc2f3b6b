//! Run configuration: documented defaults, a strict JSON config file
//! (unknown keys rejected), and command-line overrides on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use evalforge_core::metaeval::{CoefficientChoices, CoefficientKind, Grouping};
use evalforge_core::rgdpo::DpoConfig;
use evalforge_core::VerificationConfig;

/// Fully resolved configuration a command runs with. Serialized into the
/// run report so a run can be audited and reproduced.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub verification: VerificationConfig,
    pub sampling: SamplingSection,
    pub preference: PreferenceSection,
    pub dpo: DpoConfig,
    pub metaeval: MetaEvalSection,
    pub annotation: AnnotationSection,
    #[serde(skip)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub per_category: usize,
    pub padding_cap: usize,
    /// Fraction of emitted examples split off as a validation set.
    pub validation_ratio: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSection {
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaEvalSection {
    pub grouping: Grouping,
    /// Per-dataset choice of the two displayed coefficients.
    pub coefficients: CoefficientChoices,
    pub average: CoefficientKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSection {
    pub url: String,
    pub model: String,
    pub n: u32,
    pub temperature: f64,
    /// Inspection passes default to greedy decoding.
    pub inspection_temperature: f64,
    pub concurrency: usize,
    pub parse_attempts: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub manifests: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            verification: VerificationConfig::default(),
            sampling: SamplingSection {
                per_category: 100,
                padding_cap: 3,
                validation_ratio: 0.0,
            },
            preference: PreferenceSection { budget: 10_000 },
            dpo: DpoConfig::default(),
            metaeval: MetaEvalSection {
                grouping: Grouping::SampleLevel,
                coefficients: CoefficientChoices::new(),
                average: CoefficientKind::Spearman,
            },
            annotation: AnnotationSection {
                url: "https://api.openai.com/v1/chat/completions".to_string(),
                model: "gpt-4".to_string(),
                n: 10,
                temperature: 1.0,
                inspection_temperature: 0.0,
                concurrency: 4,
                parse_attempts: 3,
            },
            paths: PathsSection::default(),
        }
    }
}

// File-level mirror where every section and field is optional; present
// values land on top of the defaults. `deny_unknown_fields` everywhere
// keeps threshold typos from silently passing.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    verification: Option<FileVerification>,
    sampling: Option<FileSampling>,
    preference: Option<FilePreference>,
    dpo: Option<FileDpo>,
    metaeval: Option<FileMetaEval>,
    annotation: Option<FileAnnotation>,
    paths: Option<PathsSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileVerification {
    min_self_consistency: Option<f64>,
    cv_tolerance: Option<f64>,
    min_inspection: Option<u8>,
    enforce_cv_gate: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSampling {
    per_category: Option<usize>,
    padding_cap: Option<usize>,
    validation_ratio: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePreference {
    budget: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDpo {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileMetaEval {
    grouping: Option<Grouping>,
    coefficients: Option<CoefficientChoices>,
    average: Option<CoefficientKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAnnotation {
    url: Option<String>,
    model: Option<String>,
    n: Option<u32>,
    temperature: Option<f64>,
    inspection_temperature: Option<f64>,
    concurrency: Option<usize>,
    parse_attempts: Option<u32>,
}

fn apply<T>(target: &mut T, value: Option<T>) {
    if let Some(value) = value {
        *target = value;
    }
}

impl RunConfig {
    /// Defaults, overlaid with the config file when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = RunConfig::default();
        let Some(path) = path else {
            return Ok(config);
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        if text.trim().is_empty() {
            return Ok(config);
        }
        let file: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        apply(&mut config.seed, file.seed);
        if let Some(v) = file.verification {
            apply(
                &mut config.verification.min_self_consistency,
                v.min_self_consistency,
            );
            apply(&mut config.verification.cv_tolerance, v.cv_tolerance);
            apply(&mut config.verification.min_inspection, v.min_inspection);
            apply(&mut config.verification.enforce_cv_gate, v.enforce_cv_gate);
        }
        if let Some(s) = file.sampling {
            apply(&mut config.sampling.per_category, s.per_category);
            apply(&mut config.sampling.padding_cap, s.padding_cap);
            apply(&mut config.sampling.validation_ratio, s.validation_ratio);
        }
        if let Some(p) = file.preference {
            apply(&mut config.preference.budget, p.budget);
        }
        if let Some(d) = file.dpo {
            apply(&mut config.dpo.alpha, d.alpha);
            apply(&mut config.dpo.beta, d.beta);
        }
        if let Some(m) = file.metaeval {
            apply(&mut config.metaeval.grouping, m.grouping);
            apply(&mut config.metaeval.coefficients, m.coefficients);
            apply(&mut config.metaeval.average, m.average);
        }
        if let Some(a) = file.annotation {
            apply(&mut config.annotation.url, a.url);
            apply(&mut config.annotation.model, a.model);
            apply(&mut config.annotation.n, a.n);
            apply(&mut config.annotation.temperature, a.temperature);
            apply(
                &mut config.annotation.inspection_temperature,
                a.inspection_temperature,
            );
            apply(&mut config.annotation.concurrency, a.concurrency);
            apply(&mut config.annotation.parse_attempts, a.parse_attempts);
        }
        if let Some(paths) = file.paths {
            config.paths = paths;
        }
        Ok(config)
    }

    /// Range checks, run after file values and flag overrides merge.
    pub fn validate(&self) -> Result<()> {
        self.verification
            .validate()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        self.dpo.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.sampling.per_category == 0 {
            bail!("invalid sampling.per_category: must be >= 1");
        }
        if !(0.0..1.0).contains(&self.sampling.validation_ratio) {
            bail!("invalid sampling.validation_ratio: must lie in [0,1)");
        }
        if self.preference.budget == 0 {
            bail!("invalid preference.budget: must be >= 1");
        }
        if self.annotation.n == 0 {
            bail!("invalid annotation.n: must be >= 1");
        }
        if !self.annotation.temperature.is_finite() || self.annotation.temperature < 0.0 {
            bail!("invalid annotation.temperature: must be finite and >= 0");
        }
        if !self.annotation.inspection_temperature.is_finite()
            || self.annotation.inspection_temperature < 0.0
        {
            bail!("invalid annotation.inspection_temperature: must be finite and >= 0");
        }
        if self.annotation.concurrency == 0 {
            bail!("invalid annotation.concurrency: must be >= 1");
        }
        Ok(())
    }
}
