//! The bundled task manifests must aggregate to the published corpus
//! statistics exactly: dataset counts, distinct aspect counts, and sample
//! totals for every task.

use std::fs;
use std::path::Path;

use evalforge_core::{manifest_stats, DatasetManifest, Task};

fn load_all() -> Vec<DatasetManifest> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifests");
    let mut manifests = Vec::new();
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("read {}: {e}", dir.display()))
        .map(|entry| entry.unwrap().path())
        .collect();
    paths.sort();
    for path in paths {
        let json = fs::read_to_string(&path).unwrap();
        manifests.push(DatasetManifest::from_json(&json).unwrap());
    }
    manifests
}

const EXPECTED: [(Task, usize, usize, u64); 9] = [
    (Task::ControllableGeneration, 4, 8, 11_299),
    (Task::DataToText, 6, 11, 36_548),
    (Task::DialogueResponseGeneration, 17, 17, 91_111),
    (Task::GrammaticalErrorCorrection, 3, 6, 41_058),
    (Task::MachineTranslation, 2, 6, 347_504),
    (Task::ParaphraseGeneration, 2, 3, 18_299),
    (Task::StoryGeneration, 6, 17, 12_636),
    (Task::Summarization, 10, 17, 61_977),
    (Task::TextSimplification, 8, 8, 27_026),
];

#[test]
fn all_nine_tasks_match_published_statistics() {
    let manifests = load_all();
    assert_eq!(manifests.len(), 9);
    let stats = manifest_stats(&manifests).unwrap();
    for (task, datasets, aspects, samples) in EXPECTED {
        let s = stats.get(&task).unwrap_or_else(|| panic!("missing {task}"));
        assert_eq!(s.datasets, datasets, "{task} dataset count");
        assert_eq!(s.aspects, aspects, "{task} aspect count");
        assert_eq!(s.samples, samples, "{task} sample total");
    }
}

#[test]
fn totals_equal_entry_size_sums_per_manifest() {
    for manifest in load_all() {
        let sum: u64 = manifest.entries.iter().map(|e| e.size).sum();
        let stats = manifest_stats(std::slice::from_ref(&manifest)).unwrap();
        assert_eq!(stats[&manifest.task].samples, sum);
    }
}

#[test]
fn corpus_grand_total_is_half_a_million_scale() {
    let stats = manifest_stats(&load_all()).unwrap();
    let total: u64 = stats.values().map(|s| s.samples).sum();
    assert_eq!(total, 647_458);
}
