//! Meta-evaluation: rank/linear correlations between model and human
//! ratings, grouped reports in the benchmark table layout, and perturbation
//! rating-change summaries.
//!
//! Kendall's coefficient is the tie-corrected tau-b, computed with a
//! merge-sort inversion count rather than pair enumeration; the O(n^2)
//! pair-counting route lives in the tests as an independent oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::EvaluationSample;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetaEvalError {
    #[error("length mismatch: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("non-finite value in input series")]
    NonFinite,
    #[error("{count} rating keys do not resolve in the corpus; first offenders: {sample:?}")]
    UnresolvedKeys { count: usize, sample: Vec<String> },
    #[error("{count} keys differ between before/after files; first offenders: {sample:?}")]
    KeyMismatch { count: usize, sample: Vec<String> },
    #[error("{count} duplicate (id, aspect) keys in the {side} rating file")]
    DuplicateKeys { side: String, count: usize },
    #[error("no group label for sample id {0:?}")]
    MissingGroup(String),
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), MetaEvalError> {
    if x.len() != y.len() {
        return Err(MetaEvalError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetaEvalError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetaEvalError::NonFinite);
    }
    Ok(())
}

/// Sample Pearson correlation; `None` when either variance vanishes.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetaEvalError> {
    check_inputs(x, y)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_x * var_y).sqrt()))
}

/// Fractional (midrank) ranks, 1-based; ties share the average position.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank ((i+1) + (j+1)) / 2.
        let shared = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson of the midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetaEvalError> {
    check_inputs(x, y)?;
    pearson(&midranks(x), &midranks(y))
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut pairs = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let run = (j - i + 1) as u64;
        pairs += run * (run - 1) / 2;
        i = j + 1;
    }
    pairs
}

// Merge sort on the y side counting exchanges past equal keys. With the
// input pre-sorted by (x, y), x-tied pairs are already in y order and
// contribute no swaps, so the count equals the number of discordant pairs.
fn count_discordant(ys: &mut Vec<f64>) -> u64 {
    let n = ys.len();
    let mut swaps = 0u64;
    let mut buffer = vec![0.0; n];
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid || j < end {
                if i < mid && (j >= end || ys[i] <= ys[j]) {
                    buffer[k] = ys[i];
                    i += 1;
                } else {
                    swaps += (mid - i) as u64;
                    buffer[k] = ys[j];
                    j += 1;
                }
                k += 1;
            }
            start = end;
        }
        std::mem::swap(ys, &mut buffer);
        width *= 2;
    }
    swaps
}

/// Kendall's tau-b with tie correction; `None` when either side is fully
/// tied. Result clamped into [-1, 1] against round-off.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetaEvalError> {
    check_inputs(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let sorted_x: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut sorted_y: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let total = (n as u64) * (n as u64 - 1) / 2;
    let tied_x = tie_pairs(&sorted_x);
    let mut tied_xy = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted_x[j + 1] == sorted_x[i] && sorted_y[j + 1] == sorted_y[i] {
            j += 1;
        }
        let run = (j - i + 1) as u64;
        tied_xy += run * (run - 1) / 2;
        i = j + 1;
    }
    let discordant = count_discordant(&mut sorted_y);
    sorted_y.sort_by(f64::total_cmp);
    let tied_y = tie_pairs(&sorted_y);

    if total == tied_x || total == tied_y {
        return Ok(None);
    }
    let con_minus_dis =
        total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * discordant as f64;
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok(Some((con_minus_dis / denom).clamp(-1.0, 1.0)))
}

/// Mean of the defined values; `None` when every value is undefined.
pub fn average_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// One line of a rating file: `{id, aspect, rating}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub id: String,
    pub aspect: String,
    pub rating: f64,
}

/// Aligned model/human rating series for one group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingSeries {
    pub keys: Vec<(String, String)>,
    pub model: Vec<f64>,
    pub human: Vec<f64>,
}

/// How ratings are pooled before computing coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Coefficients per (dataset, aspect), then averaged across aspects.
    SampleLevel,
    /// All aspects of a dataset pooled into one series.
    DatasetLevel,
}

/// Coefficients for one group of ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub n: usize,
    /// False when the group was too small or fully tied on a side.
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectCell {
    pub dataset: String,
    pub aspect: String,
    #[serde(flatten)]
    pub cell: CorrelationCell,
}

/// Per-dataset aggregate row (mean over defined aspect cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub aspects: usize,
    pub undefined_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub datasets: usize,
    /// Dataset rows skipped per coefficient because they were undefined.
    pub undefined_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub grouping: Grouping,
    pub cells: Vec<AspectCell>,
    pub datasets: Vec<DatasetRow>,
    pub overall: OverallRow,
}

fn cell_from_series(model: &[f64], human: &[f64], n: usize) -> CorrelationCell {
    if n < 2 {
        return CorrelationCell {
            pearson: None,
            spearman: None,
            kendall: None,
            n,
            defined: false,
        };
    }
    let pearson = pearson(model, human).unwrap_or(None);
    let spearman = spearman(model, human).unwrap_or(None);
    let kendall = kendall(model, human).unwrap_or(None);
    let defined = pearson.is_some() || spearman.is_some() || kendall.is_some();
    CorrelationCell {
        pearson,
        spearman,
        kendall,
        n,
        defined,
    }
}

/// Correlate a rating file against the human labels in a corpus.
///
/// Every rating key `(id, aspect)` must resolve to a corpus sample with a
/// matching aspect name; unresolved keys abort with the first offenders.
pub fn correlation_report(
    ratings: &[RatingEntry],
    corpus: &[EvaluationSample],
    grouping: Grouping,
) -> Result<CorrelationReport, MetaEvalError> {
    const MAX_OFFENDERS: usize = 10;
    let by_id: HashMap<&str, &EvaluationSample> =
        corpus.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut unresolved = Vec::new();
    let mut groups: BTreeMap<(String, String), RatingSeries> = BTreeMap::new();
    for entry in ratings {
        let sample = match by_id.get(entry.id.as_str()) {
            Some(s) if s.aspect.name == entry.aspect => s,
            _ => {
                unresolved.push(format!("{}/{}", entry.id, entry.aspect));
                continue;
            }
        };
        let aspect_key = match grouping {
            Grouping::SampleLevel => entry.aspect.clone(),
            Grouping::DatasetLevel => "(all)".to_string(),
        };
        let series = groups
            .entry((sample.dataset.clone(), aspect_key))
            .or_default();
        series.keys.push((entry.id.clone(), entry.aspect.clone()));
        series.model.push(entry.rating);
        series.human.push(sample.human_score.value);
    }
    if !unresolved.is_empty() {
        let count = unresolved.len();
        unresolved.truncate(MAX_OFFENDERS);
        return Err(MetaEvalError::UnresolvedKeys {
            count,
            sample: unresolved,
        });
    }

    let cells: Vec<AspectCell> = groups
        .into_iter()
        .map(|((dataset, aspect), series)| AspectCell {
            dataset,
            aspect,
            cell: cell_from_series(&series.model, &series.human, series.model.len()),
        })
        .collect();

    let dataset_names: BTreeSet<&str> = cells.iter().map(|c| c.dataset.as_str()).collect();
    let mut datasets = Vec::new();
    for name in dataset_names {
        let group: Vec<&AspectCell> = cells.iter().filter(|c| c.dataset == name).collect();
        let undefined_cells = group.iter().filter(|c| !c.cell.defined).count();
        datasets.push(DatasetRow {
            dataset: name.to_string(),
            pearson: average_defined(&group.iter().map(|c| c.cell.pearson).collect::<Vec<_>>()),
            spearman: average_defined(&group.iter().map(|c| c.cell.spearman).collect::<Vec<_>>()),
            kendall: average_defined(&group.iter().map(|c| c.cell.kendall).collect::<Vec<_>>()),
            aspects: group.len(),
            undefined_cells,
        });
    }

    let overall = OverallRow {
        pearson: average_defined(&datasets.iter().map(|d| d.pearson).collect::<Vec<_>>()),
        spearman: average_defined(&datasets.iter().map(|d| d.spearman).collect::<Vec<_>>()),
        kendall: average_defined(&datasets.iter().map(|d| d.kendall).collect::<Vec<_>>()),
        datasets: datasets.len(),
        undefined_skipped: datasets.iter().filter(|d| d.spearman.is_none()).count(),
    };

    Ok(CorrelationReport {
        grouping,
        cells,
        datasets,
        overall,
    })
}

/// Which coefficient a rendered column shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Pearson,
    Spearman,
    Kendall,
}

impl CoefficientKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            CoefficientKind::Pearson => "r",
            CoefficientKind::Spearman => "rho",
            CoefficientKind::Kendall => "tau",
        }
    }

    fn pick(&self, row: &DatasetRow) -> Option<f64> {
        match self {
            CoefficientKind::Pearson => row.pearson,
            CoefficientKind::Spearman => row.spearman,
            CoefficientKind::Kendall => row.kendall,
        }
    }
}

impl fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Per-dataset choice of the two displayed coefficients.
pub type CoefficientChoices = BTreeMap<String, (CoefficientKind, CoefficientKind)>;

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "-".to_string(),
    }
}

/// Render the benchmark table: dataset column groups with their chosen
/// coefficient pair, then an Average column over the per-dataset averages.
pub fn render_correlation_table(
    report: &CorrelationReport,
    choices: &CoefficientChoices,
    average: CoefficientKind,
) -> String {
    const DEFAULT: (CoefficientKind, CoefficientKind) =
        (CoefficientKind::Spearman, CoefficientKind::Kendall);
    let mut header_datasets = String::new();
    let mut header_coeffs = String::new();
    let mut values = String::new();
    for row in &report.datasets {
        let (first, second) = choices.get(&row.dataset).copied().unwrap_or(DEFAULT);
        header_datasets.push_str(&format!("{:<16}", row.dataset));
        header_coeffs.push_str(&format!("{:<8}{:<8}", first.symbol(), second.symbol()));
        values.push_str(&format!(
            "{:<8}{:<8}",
            fmt_opt(first.pick(row)),
            fmt_opt(second.pick(row))
        ));
    }
    header_datasets.push_str("Average");
    header_coeffs.push_str(&format!("{:<8}", average.symbol()));
    let overall = match average {
        CoefficientKind::Pearson => report.overall.pearson,
        CoefficientKind::Spearman => report.overall.spearman,
        CoefficientKind::Kendall => report.overall.kendall,
    };
    values.push_str(&fmt_opt(overall));
    let mut out = String::new();
    out.push_str(header_datasets.trim_end());
    out.push('\n');
    out.push_str(header_coeffs.trim_end());
    out.push('\n');
    out.push_str(values.trim_end());
    out.push('\n');
    if report.overall.undefined_skipped > 0 {
        out.push_str(&format!(
            "# {} undefined dataset average(s) skipped\n",
            report.overall.undefined_skipped
        ));
    }
    out
}

/// CSV rows: one per (dataset, aspect) cell plus dataset and overall rows.
pub fn render_correlation_csv(report: &CorrelationReport) -> String {
    let mut out = String::from("dataset,aspect,n,pearson,spearman,kendall,defined\n");
    let csv_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for cell in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.dataset,
            cell.aspect,
            cell.cell.n,
            csv_opt(cell.cell.pearson),
            csv_opt(cell.cell.spearman),
            csv_opt(cell.cell.kendall),
            cell.cell.defined
        ));
    }
    for row in &report.datasets {
        out.push_str(&format!(
            "{},(average),{},{},{},{},{}\n",
            row.dataset,
            row.aspects,
            csv_opt(row.pearson),
            csv_opt(row.spearman),
            csv_opt(row.kendall),
            row.undefined_cells == 0
        ));
    }
    out.push_str(&format!(
        "(overall),(average),{},{},{},{},{}\n",
        report.overall.datasets,
        csv_opt(report.overall.pearson),
        csv_opt(report.overall.spearman),
        csv_opt(report.overall.kendall),
        report.overall.undefined_skipped == 0
    ));
    out
}

/// Mean rating change for one group of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupChange {
    pub group: String,
    /// Mean of (rating before - rating after); positive means ratings fell.
    pub mean_change: f64,
    pub n: usize,
}

/// Rating changes between a before/after pair of rating files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub groups: Vec<GroupChange>,
    /// Unweighted mean across groups; lower means more robust.
    pub average: f64,
}

/// Compare ratings before and after perturbation, grouped by the label
/// (task or dataset) each sample id maps to. Both files must carry exactly
/// the same `(id, aspect)` keys.
pub fn perturbation_report(
    before: &[RatingEntry],
    after: &[RatingEntry],
    group_of: &BTreeMap<String, String>,
) -> Result<PerturbationReport, MetaEvalError> {
    const MAX_OFFENDERS: usize = 10;
    let key = |e: &RatingEntry| (e.id.clone(), e.aspect.clone());
    let after_by_key: HashMap<(String, String), f64> =
        after.iter().map(|e| (key(e), e.rating)).collect();
    let before_keys: BTreeSet<(String, String)> = before.iter().map(key).collect();
    let after_keys: BTreeSet<(String, String)> = after.iter().map(key).collect();
    // Duplicate keys inside a file would double-count in the means.
    for (entries, keys, side) in [
        (before, &before_keys, "before"),
        (after, &after_keys, "after"),
    ] {
        if entries.len() != keys.len() {
            return Err(MetaEvalError::DuplicateKeys {
                side: side.to_string(),
                count: entries.len() - keys.len(),
            });
        }
    }
    if before_keys != after_keys || before.len() != after.len() {
        let mut offenders: Vec<String> = before_keys
            .symmetric_difference(&after_keys)
            .map(|(id, aspect)| format!("{id}/{aspect}"))
            .collect();
        let count = offenders.len().max(1);
        offenders.truncate(MAX_OFFENDERS);
        return Err(MetaEvalError::KeyMismatch {
            count,
            sample: offenders,
        });
    }

    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for entry in before {
        let group = group_of
            .get(&entry.id)
            .ok_or_else(|| MetaEvalError::MissingGroup(entry.id.clone()))?;
        let after_rating = after_by_key[&key(entry)];
        let slot = sums.entry(group.clone()).or_insert((0.0, 0));
        slot.0 += entry.rating - after_rating;
        slot.1 += 1;
    }
    let groups: Vec<GroupChange> = sums
        .into_iter()
        .map(|(group, (sum, n))| GroupChange {
            group,
            mean_change: sum / n as f64,
            n,
        })
        .collect();
    let average = if groups.is_empty() {
        0.0
    } else {
        groups.iter().map(|g| g.mean_change).sum::<f64>() / groups.len() as f64
    };
    Ok(PerturbationReport { groups, average })
}

/// Aligned text table: one column per group plus the trailing Average.
pub fn render_perturbation_table(report: &PerturbationReport) -> String {
    let mut header = String::new();
    let mut values = String::new();
    for group in &report.groups {
        let width = group.group.len().max(7) + 2;
        header.push_str(&format!("{:<width$}", group.group));
        values.push_str(&format!("{:<width$}", format!("{:.3}", group.mean_change)));
    }
    header.push_str("Average");
    values.push_str(&format!("{:.3}", report.average));
    format!("{}\n{}\n", header.trim_end(), values)
}
