//! Dataset manifests: per-task metadata about the source evaluation
//! datasets (names, sizes, aspects) and aggregate statistics over them.
//! Manifests carry metadata only, never third-party dataset text.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{AspectCriterion, ModelError, Task};

/// One source dataset inside a task manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset: String,
    pub size: u64,
    pub aspects: Vec<AspectCriterion>,
}

/// All datasets of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub task: Task,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    task: String,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = HashSet::new();
        for entry in &self.entries {
            if entry.dataset.trim().is_empty() {
                return Err(ModelError::invalid(
                    "entries.dataset",
                    "dataset name is empty",
                ));
            }
            if !names.insert(entry.dataset.as_str()) {
                return Err(ModelError::invalid(
                    "entries.dataset",
                    format!(
                        "duplicate dataset {:?} in task {}",
                        entry.dataset, self.task
                    ),
                ));
            }
            if entry.size == 0 {
                return Err(ModelError::invalid(
                    "entries.size",
                    format!("dataset {:?} has size 0", entry.dataset),
                ));
            }
            for aspect in &entry.aspects {
                aspect.validate()?;
            }
        }
        Ok(())
    }

    /// Parse and validate a manifest from its JSON file content.
    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let raw: RawManifest = serde_json::from_str(json)
            .map_err(|e| ModelError::invalid("manifest", e.to_string()))?;
        let manifest = DatasetManifest {
            task: Task::from_str(&raw.task)?,
            entries: raw.entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let raw = RawManifest {
            task: self.task.id().to_string(),
            entries: self.entries.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serialization cannot fail")
    }
}

/// Aggregated counts for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub datasets: usize,
    /// Distinct aspect names after exact-name dedup within the task.
    pub aspects: usize,
    pub samples: u64,
}

/// Per-task corpus statistics, ordered by task for deterministic output.
pub type ManifestStats = BTreeMap<Task, TaskStats>;

/// Aggregate manifests into per-task dataset/aspect/sample counts.
/// Multiple manifests may contribute to the same task as long as their
/// dataset names stay unique within it.
pub fn manifest_stats(manifests: &[DatasetManifest]) -> Result<ManifestStats, ModelError> {
    let mut stats: ManifestStats = BTreeMap::new();
    let mut seen: BTreeMap<Task, HashSet<String>> = BTreeMap::new();
    let mut aspect_names: BTreeMap<Task, BTreeSet<String>> = BTreeMap::new();

    for manifest in manifests {
        manifest.validate()?;
        let task_seen = seen.entry(manifest.task).or_default();
        let task_aspects = aspect_names.entry(manifest.task).or_default();
        let entry_stats = stats.entry(manifest.task).or_insert(TaskStats {
            datasets: 0,
            aspects: 0,
            samples: 0,
        });
        for entry in &manifest.entries {
            if !task_seen.insert(entry.dataset.clone()) {
                return Err(ModelError::invalid(
                    "entries.dataset",
                    format!(
                        "duplicate dataset {:?} in task {}",
                        entry.dataset, manifest.task
                    ),
                ));
            }
            entry_stats.datasets += 1;
            entry_stats.samples += entry.size;
            for aspect in &entry.aspects {
                task_aspects.insert(aspect.name.clone());
            }
        }
    }
    for (task, names) in aspect_names {
        if let Some(entry) = stats.get_mut(&task) {
            entry.aspects = names.len();
        }
    }
    Ok(stats)
}

/// Render stats as an aligned plain-text table with a totals row.
pub fn render_stats_table(stats: &ManifestStats) -> String {
    let mut out = String::new();
    let name_width = stats
        .keys()
        .map(|t| t.display_name().len())
        .chain(["Task".len(), "Total".len()])
        .max()
        .unwrap_or(4);
    out.push_str(&format!(
        "{:<name_width$}  {:>9}  {:>8}  {:>9}\n",
        "Task", "#Datasets", "#Aspects", "#Samples"
    ));
    let mut total = TaskStats {
        datasets: 0,
        aspects: 0,
        samples: 0,
    };
    for (task, s) in stats {
        out.push_str(&format!(
            "{:<name_width$}  {:>9}  {:>8}  {:>9}\n",
            task.display_name(),
            s.datasets,
            s.aspects,
            s.samples
        ));
        total.datasets += s.datasets;
        total.aspects += s.aspects;
        total.samples += s.samples;
    }
    out.push_str(&format!(
        "{:<name_width$}  {:>9}  {:>8}  {:>9}\n",
        "Total", total.datasets, total.aspects, total.samples
    ));
    out
}
