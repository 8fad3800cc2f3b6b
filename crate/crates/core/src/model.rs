//! Corpus data model: rating scales, evaluation records and samples, the
//! JSONL record format, and corpus validation.
//!
//! Parsing is two-stage: serde handles syntax into private wire structs,
//! then domain constructors enforce invariants. A value that made it into
//! a domain type is valid everywhere downstream.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine canonical NLG task identifiers (lowercase snake case).
/// Unknown names are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ControllableGeneration,
    DataToText,
    DialogueResponseGeneration,
    GrammaticalErrorCorrection,
    MachineTranslation,
    ParaphraseGeneration,
    StoryGeneration,
    Summarization,
    TextSimplification,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::ControllableGeneration,
        Task::DataToText,
        Task::DialogueResponseGeneration,
        Task::GrammaticalErrorCorrection,
        Task::MachineTranslation,
        Task::ParaphraseGeneration,
        Task::StoryGeneration,
        Task::Summarization,
        Task::TextSimplification,
    ];

    /// Canonical identifier, e.g. `story_generation`.
    pub fn id(&self) -> &'static str {
        match self {
            Task::ControllableGeneration => "controllable_generation",
            Task::DataToText => "data_to_text",
            Task::DialogueResponseGeneration => "dialogue_response_generation",
            Task::GrammaticalErrorCorrection => "grammatical_error_correction",
            Task::MachineTranslation => "machine_translation",
            Task::ParaphraseGeneration => "paraphrase_generation",
            Task::StoryGeneration => "story_generation",
            Task::Summarization => "summarization",
            Task::TextSimplification => "text_simplification",
        }
    }

    /// Natural-language name used when substituting `{task}` into prompts,
    /// e.g. `story generation`.
    pub fn prompt_name(&self) -> &'static str {
        match self {
            Task::ControllableGeneration => "controllable generation",
            Task::DataToText => "data to text",
            Task::DialogueResponseGeneration => "dialogue response generation",
            Task::GrammaticalErrorCorrection => "grammatical error correction",
            Task::MachineTranslation => "machine translation",
            Task::ParaphraseGeneration => "paraphrase generation",
            Task::StoryGeneration => "story generation",
            Task::Summarization => "summarization",
            Task::TextSimplification => "text simplification",
        }
    }

    /// Title-case name for table rendering, e.g. `Story Generation`.
    pub fn display_name(&self) -> &'static str {
        match self {
            Task::ControllableGeneration => "Controllable Generation",
            Task::DataToText => "Data to Text",
            Task::DialogueResponseGeneration => "Dialogue Response Generation",
            Task::GrammaticalErrorCorrection => "Grammatical Error Correction",
            Task::MachineTranslation => "Machine Translation",
            Task::ParaphraseGeneration => "Paraphrase Generation",
            Task::StoryGeneration => "Story Generation",
            Task::Summarization => "Summarization",
            Task::TextSimplification => "Text Simplification",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Task {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.id() == s)
            .ok_or_else(|| ModelError::invalid("task", format!("unknown task name {s:?}")))
    }
}

/// Inclusive rating range with `min < max`, both finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    /// The five-point Likert scale used by model evaluations.
    pub const LIKERT: RatingScale = RatingScale { min: 1.0, max: 5.0 };
    /// The unit interval, the common range for cross-validation.
    pub const UNIT: RatingScale = RatingScale { min: 0.0, max: 1.0 };

    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        let scale = RatingScale { min, max };
        scale.validate("scale")?;
        Ok(scale)
    }

    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(ModelError::invalid(field, "scale bounds must be finite"));
        }
        if self.min >= self.max {
            return Err(ModelError::invalid(
                field,
                format!("scale min {} must be < max {}", self.min, self.max),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        value.is_finite() && value >= self.min && value <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Integer Likert rating in `[1, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Rating(u8);

impl Rating {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(value: u8) -> Result<Self, ModelError> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Rating(value))
        } else {
            Err(ModelError::invalid(
                "rating",
                format!("rating {value} out of [1,5]"),
            ))
        }
    }

    pub fn get(&self) -> u8 {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.0)
    }

    /// Absolute rating difference on the raw 1-5 integers.
    pub fn gap(&self, other: Rating) -> u8 {
        self.0.abs_diff(other.0)
    }
}

impl TryFrom<u8> for Rating {
    type Error = ModelError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Rating::new(value)
    }
}

impl From<Rating> for u8 {
    fn from(r: Rating) -> u8 {
        r.0
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A named evaluation aspect with its full-sentence criterion definition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AspectCriterion {
    pub name: String,
    pub criterion: String,
}

impl AspectCriterion {
    pub fn new(name: impl Into<String>, criterion: impl Into<String>) -> Result<Self, ModelError> {
        let aspect = AspectCriterion {
            name: name.into(),
            criterion: criterion.into(),
        };
        aspect.validate()?;
        Ok(aspect)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.name.trim().is_empty() {
            return Err(ModelError::invalid("aspect.name", "aspect name is empty"));
        }
        if self.criterion.trim().is_empty() {
            return Err(ModelError::invalid(
                "aspect.criterion",
                "aspect criterion is empty",
            ));
        }
        Ok(())
    }

    /// The `Name: criterion` line substituted into prompts.
    pub fn prompt_line(&self) -> String {
        format!("{}: {}", self.name, self.criterion)
    }
}

/// Who produced an evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    Human,
}

/// Second-pass quality verdicts for one evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectionVerdict {
    pub aspect_alignment: Rating,
    pub polarity_consistency: Rating,
}

/// One evaluation of a sample: free-text analysis plus an integer rating.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub analysis: String,
    pub rating: Rating,
    pub temperature: f64,
    pub provenance: Provenance,
    pub inspection: Option<InspectionVerdict>,
}

impl EvaluationRecord {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ModelError::invalid(
                format!("{field}.temperature"),
                format!("temperature {} must be finite and >= 0", self.temperature),
            ));
        }
        if self.provenance == Provenance::Model && self.analysis.trim().is_empty() {
            return Err(ModelError::invalid(
                format!("{field}.analysis"),
                "analysis must be non-empty for model-provenance records",
            ));
        }
        Ok(())
    }
}

/// A human score on its native scale. The original range is kept because
/// cross-validation rescales both sides onto a common interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanScore {
    pub value: f64,
    pub scale: RatingScale,
}

impl HumanScore {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        self.scale.validate(&format!("{field}.scale"))?;
        if !self.scale.contains(self.value) {
            return Err(ModelError::invalid(
                format!("{field}.value"),
                format!(
                    "human score {} outside scale [{},{}]",
                    self.value, self.scale.min, self.scale.max
                ),
            ));
        }
        Ok(())
    }
}

/// One corpus sample: task input/output, aspect, human score, and the
/// evaluations collected for it. A sample carries exactly one aspect;
/// multi-aspect sources expand to one record per aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSample {
    pub id: String,
    pub task: Task,
    pub dataset: String,
    pub source_label: String,
    pub target_label: String,
    pub source: String,
    pub target: String,
    pub reference: Option<String>,
    pub aspect: AspectCriterion,
    pub human_score: HumanScore,
    pub evaluations: Vec<EvaluationRecord>,
}

impl EvaluationSample {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::invalid("id", "sample id is empty"));
        }
        self.aspect.validate()?;
        self.human_score.validate("human_score")?;
        for (i, record) in self.evaluations.iter().enumerate() {
            record.validate(&format!("evaluations[{i}]"))?;
        }
        Ok(())
    }

    /// Indices of model-provenance evaluation records.
    pub fn model_record_indices(&self) -> Vec<usize> {
        self.evaluations
            .iter()
            .enumerate()
            .filter(|(_, r)| r.provenance == Provenance::Model)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Validation failure: a value that parsed but violates a type invariant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {message}")]
pub struct ModelError {
    pub field: String,
    pub message: String,
}

impl ModelError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Error from parsing one corpus line.
#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    /// Malformed JSON; `offset` is the byte column reported by the parser.
    #[error("syntax error at column {offset}: {message}")]
    Syntax { offset: usize, message: String },
    /// Well-formed JSON violating a model invariant.
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

// Wire mirror of the on-disk record shape. Field names are the format.
#[derive(Serialize, Deserialize)]
struct RawSample {
    id: String,
    task: String,
    dataset: String,
    source_label: String,
    target_label: String,
    source: String,
    target: String,
    reference: Option<String>,
    aspect: RawAspect,
    human_score: RawHumanScore,
    evaluations: Vec<RawRecord>,
}

#[derive(Serialize, Deserialize)]
struct RawAspect {
    name: String,
    criterion: String,
}

#[derive(Serialize, Deserialize)]
struct RawHumanScore {
    value: f64,
    scale: RawScale,
}

#[derive(Serialize, Deserialize)]
struct RawScale {
    min: f64,
    max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    analysis: String,
    rating: i64,
    temperature: f64,
    provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inspection: Option<RawInspection>,
}

#[derive(Serialize, Deserialize)]
struct RawInspection {
    aspect_alignment: i64,
    polarity_consistency: i64,
}

fn rating_from_i64(value: i64, field: &str) -> Result<Rating, ModelError> {
    u8::try_from(value)
        .ok()
        .and_then(|v| Rating::new(v).ok())
        .ok_or_else(|| ModelError::invalid(field, format!("rating {value} out of [1,5]")))
}

impl TryFrom<RawSample> for EvaluationSample {
    type Error = ModelError;

    fn try_from(raw: RawSample) -> Result<Self, Self::Error> {
        let task = Task::from_str(&raw.task)?;
        let mut evaluations = Vec::with_capacity(raw.evaluations.len());
        for (i, rec) in raw.evaluations.into_iter().enumerate() {
            let field = format!("evaluations[{i}]");
            let provenance = match rec.provenance.as_str() {
                "model" => Provenance::Model,
                "human" => Provenance::Human,
                other => {
                    return Err(ModelError::invalid(
                        format!("{field}.provenance"),
                        format!("unknown provenance {other:?}"),
                    ))
                }
            };
            let inspection = match rec.inspection {
                None => None,
                Some(raw_verdict) => Some(InspectionVerdict {
                    aspect_alignment: rating_from_i64(
                        raw_verdict.aspect_alignment,
                        &format!("{field}.inspection.aspect_alignment"),
                    )?,
                    polarity_consistency: rating_from_i64(
                        raw_verdict.polarity_consistency,
                        &format!("{field}.inspection.polarity_consistency"),
                    )?,
                }),
            };
            evaluations.push(EvaluationRecord {
                analysis: rec.analysis,
                rating: rating_from_i64(rec.rating, &format!("{field}.rating"))?,
                temperature: rec.temperature,
                provenance,
                inspection,
            });
        }
        let sample = EvaluationSample {
            id: raw.id,
            task,
            dataset: raw.dataset,
            source_label: raw.source_label,
            target_label: raw.target_label,
            source: raw.source,
            target: raw.target,
            reference: raw.reference,
            aspect: AspectCriterion {
                name: raw.aspect.name,
                criterion: raw.aspect.criterion,
            },
            human_score: HumanScore {
                value: raw.human_score.value,
                scale: RatingScale {
                    min: raw.human_score.scale.min,
                    max: raw.human_score.scale.max,
                },
            },
            evaluations,
        };
        sample.validate()?;
        Ok(sample)
    }
}

impl From<&EvaluationSample> for RawSample {
    fn from(sample: &EvaluationSample) -> Self {
        RawSample {
            id: sample.id.clone(),
            task: sample.task.id().to_string(),
            dataset: sample.dataset.clone(),
            source_label: sample.source_label.clone(),
            target_label: sample.target_label.clone(),
            source: sample.source.clone(),
            target: sample.target.clone(),
            reference: sample.reference.clone(),
            aspect: RawAspect {
                name: sample.aspect.name.clone(),
                criterion: sample.aspect.criterion.clone(),
            },
            human_score: RawHumanScore {
                value: sample.human_score.value,
                scale: RawScale {
                    min: sample.human_score.scale.min,
                    max: sample.human_score.scale.max,
                },
            },
            evaluations: sample
                .evaluations
                .iter()
                .map(|rec| RawRecord {
                    analysis: rec.analysis.clone(),
                    rating: i64::from(rec.rating.get()),
                    temperature: rec.temperature,
                    provenance: match rec.provenance {
                        Provenance::Model => "model".to_string(),
                        Provenance::Human => "human".to_string(),
                    },
                    inspection: rec.inspection.map(|v| RawInspection {
                        aspect_alignment: i64::from(v.aspect_alignment.get()),
                        polarity_consistency: i64::from(v.polarity_consistency.get()),
                    }),
                })
                .collect(),
        }
    }
}

/// Parse one JSONL corpus line into a fully validated sample.
pub fn parse_sample_record(line: &str) -> Result<EvaluationSample, RecordError> {
    let raw: RawSample = serde_json::from_str(line).map_err(|e| RecordError::Syntax {
        offset: e.column(),
        message: e.to_string(),
    })?;
    EvaluationSample::try_from(raw).map_err(RecordError::Invalid)
}

/// Serialize a sample back into its one-line JSON record form.
pub fn serialize_sample_record(sample: &EvaluationSample) -> String {
    serde_json::to_string(&RawSample::from(sample)).expect("record serialization cannot fail")
}

/// Affine map of `value` from one rating scale onto another.
pub fn scale_rating(value: f64, from: RatingScale, to: RatingScale) -> Result<f64, ModelError> {
    from.validate("from")?;
    to.validate("to")?;
    if !from.contains(value) {
        return Err(ModelError::invalid(
            "value",
            format!(
                "value {} outside source scale [{},{}]",
                value, from.min, from.max
            ),
        ));
    }
    Ok(to.min + (value - from.min) * to.width() / from.width())
}

/// One problem found while validating a corpus stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineIssue {
    /// 1-based line number in the stream.
    pub line: usize,
    pub error: String,
}

/// Outcome of validating a corpus stream. Totals always equal the number
/// of lines seen; errors are collected, never thrown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    /// First `max_errors` issues in line order.
    pub issues: Vec<LineIssue>,
}

/// Validate every line of a corpus stream, flagging syntax errors,
/// invariant violations, and duplicate ids.
pub fn validate_corpus<I, S>(lines: I, max_errors: usize) -> ValidationReport
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = ValidationReport {
        total: 0,
        valid: 0,
        invalid: 0,
        issues: Vec::new(),
    };
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in lines.into_iter().enumerate() {
        report.total += 1;
        let outcome = match parse_sample_record(line.as_ref()) {
            Ok(sample) => {
                if seen_ids.insert(sample.id.clone()) {
                    Ok(())
                } else {
                    Err(format!("duplicate id {:?}", sample.id))
                }
            }
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(()) => report.valid += 1,
            Err(error) => {
                report.invalid += 1;
                if report.issues.len() < max_errors {
                    report.issues.push(LineIssue {
                        line: idx + 1,
                        error,
                    });
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_json(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","task":"summarization","dataset":"summ-fix","source_label":"Article","target_label":"Summary","source":"A report on reservoir levels.","target":"Reservoir levels fell.","reference":null,"aspect":{{"name":"Coherence","criterion":"Sentences should fit together."}},"human_score":{{"value":80.0,"scale":{{"min":0.0,"max":100.0}}}},"evaluations":[]}}"#
        )
    }

    #[test]
    fn minimal_record_parses_with_empty_evaluations() {
        let sample = parse_sample_record(&sample_json("s1")).unwrap();
        assert_eq!(sample.id, "s1");
        assert_eq!(sample.task, Task::Summarization);
        assert!(sample.evaluations.is_empty());
    }

    #[test]
    fn rating_out_of_range_is_a_validation_error() {
        let line = sample_json("s1").replace(
            r#""evaluations":[]"#,
            r#""evaluations":[{"analysis":"ok","rating":6,"temperature":1.0,"provenance":"model"}]"#,
        );
        let err = parse_sample_record(&line).unwrap_err();
        match err {
            RecordError::Invalid(e) => {
                assert_eq!(e.field, "evaluations[0].rating");
                assert!(e.message.contains("out of [1,5]"), "message: {}", e.message);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn human_score_within_native_scale_is_accepted() {
        // 0 <= 80 <= 100
        let sample = parse_sample_record(&sample_json("s1")).unwrap();
        assert_eq!(sample.human_score.value, 80.0);
        assert_eq!(sample.human_score.scale.max, 100.0);
    }

    #[test]
    fn human_score_outside_scale_is_rejected_with_field_name() {
        let line = sample_json("s1").replace(r#""value":80.0"#, r#""value":120.0"#);
        let err = parse_sample_record(&line).unwrap_err();
        match err {
            RecordError::Invalid(e) => assert_eq!(e.field, "human_score.value"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_syntax_offset() {
        let err = parse_sample_record("{\"id\": ").unwrap_err();
        match err {
            RecordError::Syntax { offset, .. } => assert!(offset > 0),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_task_is_rejected() {
        let line = sample_json("s1").replace("summarization", "poetry");
        assert!(matches!(
            parse_sample_record(&line),
            Err(RecordError::Invalid(_))
        ));
    }

    #[test]
    fn empty_analysis_rejected_for_model_records_only() {
        let with = |provenance: &str| {
            sample_json("s1").replace(
                r#""evaluations":[]"#,
                &format!(
                    r#""evaluations":[{{"analysis":"","rating":4,"temperature":0.0,"provenance":"{provenance}"}}]"#
                ),
            )
        };
        assert!(parse_sample_record(&with("model")).is_err());
        assert!(parse_sample_record(&with("human")).is_ok());
    }

    #[test]
    fn scale_rating_identity_and_endpoints() {
        let likert = RatingScale::LIKERT;
        let percent = RatingScale::new(0.0, 100.0).unwrap();
        assert_eq!(scale_rating(5.0, likert, likert).unwrap(), 5.0);
        assert_eq!(scale_rating(100.0, percent, likert).unwrap(), 5.0);
        assert_eq!(scale_rating(0.0, percent, likert).unwrap(), 1.0);
    }

    #[test]
    fn scale_rating_affine_interior_point() {
        // 1 + 62 * 4 / 100 = 3.48
        let percent = RatingScale::new(0.0, 100.0).unwrap();
        let mapped = scale_rating(62.0, percent, RatingScale::LIKERT).unwrap();
        assert!((mapped - 3.48).abs() < 1e-12, "got {mapped}");
    }

    #[test]
    fn scale_rating_rejects_out_of_range_value() {
        let percent = RatingScale::new(0.0, 100.0).unwrap();
        assert!(scale_rating(101.0, percent, RatingScale::LIKERT).is_err());
    }

    #[test]
    fn degenerate_scale_is_rejected() {
        assert!(RatingScale::new(3.0, 3.0).is_err());
        assert!(RatingScale::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn validate_corpus_counts_valid_lines() {
        let lines = vec![sample_json("a"), sample_json("b"), sample_json("c")];
        let report = validate_corpus(&lines, 10);
        assert_eq!((report.total, report.valid, report.invalid), (3, 3, 0));
        assert!(report.issues.is_empty());
    }

    #[test]
    fn validate_corpus_flags_out_of_scale_score_with_field() {
        let bad = sample_json("b").replace(r#""value":80.0"#, r#""value":-3.0"#);
        let lines = vec![sample_json("a"), bad];
        let report = validate_corpus(&lines, 10);
        assert_eq!((report.valid, report.invalid), (1, 1));
        assert_eq!(report.issues[0].line, 2);
        assert!(report.issues[0].error.contains("human_score.value"));
    }

    #[test]
    fn validate_corpus_flags_duplicate_ids() {
        let lines = vec![sample_json("a"), sample_json("a"), sample_json("b")];
        let report = validate_corpus(&lines, 10);
        assert_eq!((report.valid, report.invalid), (2, 1));
        assert!(report.issues[0].error.contains("duplicate id"));
    }

    #[test]
    fn validate_corpus_caps_reported_issues() {
        let lines: Vec<String> = (0..5).map(|_| "not json".to_string()).collect();
        let report = validate_corpus(&lines, 2);
        assert_eq!(report.invalid, 5);
        assert_eq!(report.issues.len(), 2);
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let line = sample_json("s1").replace(
            r#""evaluations":[]"#,
            r#""evaluations":[{"analysis":"Clear and faithful.","rating":4,"temperature":1.0,"provenance":"model","inspection":{"aspect_alignment":5,"polarity_consistency":4}},{"analysis":"","rating":3,"temperature":0.0,"provenance":"human"}]"#,
        );
        let sample = parse_sample_record(&line).unwrap();
        let reserialized = serialize_sample_record(&sample);
        let reparsed = parse_sample_record(&reserialized).unwrap();
        assert_eq!(sample, reparsed);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn scale_strategy() -> impl Strategy<Value = RatingScale> {
            (-100.0..100.0f64, 0.5..200.0f64).prop_map(|(min, width)| RatingScale {
                min,
                max: min + width,
            })
        }

        fn sample_strategy() -> impl Strategy<Value = EvaluationSample> {
            let text = "[a-zA-Z0-9 .,\u{e9}\u{4e2d}\"\\\\]{0,40}";
            let record = (
                "[a-zA-Z.][a-zA-Z .]{0,29}",
                1u8..=5,
                0.0..2.0f64,
                prop::option::of((1u8..=5, 1u8..=5)),
            )
                .prop_map(|(analysis, rating, temperature, verdict)| {
                    EvaluationRecord {
                        analysis,
                        rating: Rating::new(rating).unwrap(),
                        temperature,
                        provenance: Provenance::Model,
                        inspection: verdict.map(|(a, p)| InspectionVerdict {
                            aspect_alignment: Rating::new(a).unwrap(),
                            polarity_consistency: Rating::new(p).unwrap(),
                        }),
                    }
                });
            (
                "[a-z0-9-]{1,12}",
                0..9usize,
                text.prop_map(|s| format!("src {s}")),
                text.prop_map(|s| format!("tgt {s}")),
                prop::option::of(text),
                0.0..=1.0f64,
                prop::collection::vec(record, 0..4),
            )
                .prop_map(
                    |(id, task, source, target, reference, unit, evaluations)| EvaluationSample {
                        id,
                        task: Task::ALL[task],
                        dataset: "prop-set".to_string(),
                        source_label: "Input".to_string(),
                        target_label: "Output".to_string(),
                        source,
                        target,
                        reference,
                        aspect: AspectCriterion {
                            name: "Quality".to_string(),
                            criterion: "Overall quality of the output.".to_string(),
                        },
                        human_score: HumanScore {
                            value: unit * 100.0,
                            scale: RatingScale {
                                min: 0.0,
                                max: 100.0,
                            },
                        },
                        evaluations,
                    },
                )
        }

        proptest! {
            #[test]
            fn scale_round_trip(from in scale_strategy(), to in scale_strategy(), t in 0.0..=1.0f64) {
                let value = from.min + t * from.width();
                let mapped = scale_rating(value, from, to).unwrap();
                prop_assert!(to.contains(mapped));
                let back = scale_rating(mapped, to, from).unwrap();
                prop_assert!((back - value).abs() < 1e-9, "{value} -> {mapped} -> {back}");
            }

            #[test]
            fn scale_is_monotone(
                from in scale_strategy(),
                to in scale_strategy(),
                a in 0.0..=1.0f64,
                b in 0.0..=1.0f64,
            ) {
                let (lo, hi) = (a.min(b), a.max(b));
                let low = scale_rating(from.min + lo * from.width(), from, to).unwrap();
                let high = scale_rating(from.min + hi * from.width(), from, to).unwrap();
                prop_assert!(low <= high + 1e-12);
            }

            #[test]
            fn record_format_round_trips(sample in sample_strategy()) {
                let line = serialize_sample_record(&sample);
                let reparsed = parse_sample_record(&line).unwrap();
                prop_assert_eq!(&sample, &reparsed);
                // And a second serialize is byte-stable.
                prop_assert_eq!(line, serialize_sample_record(&reparsed));
            }
        }
    }
}
