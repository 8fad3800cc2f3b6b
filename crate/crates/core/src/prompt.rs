//! Annotation prompt rendering and response parsing.
//!
//! Rendering is pure string templating: placeholders are filled in a single
//! left-to-right pass, so substituted content is never rescanned and cannot
//! be mistaken for a placeholder. Rendered prompts are byte-stable and
//! checked against golden fixtures.

use serde::{Deserialize, Serialize};

use crate::model::{EvaluationRecord, EvaluationSample, ModelError, Provenance, Rating};

/// Evaluation prompt template. `{aspect}` receives the full
/// `Name: criterion` line; `{source_des}`/`{target_des}` receive the
/// sample's labels (e.g. `Article`/`Summary`).
pub const EVAL_TEMPLATE: &str = "###Instruction###\n\
Please act as an impartial and helpful evaluator for natural language generation (NLG), and the audience is an expert in the field.\n\
Your task is to evaluate the quality of {task} strictly based on the given evaluation criterion.\n\
Begin the evaluation by providing your analysis concisely and accurately, and then on the next line, start with \"Rating:\" followed by your rating on a Likert scale from 1 to 5 (higher means better).\n\
You MUST keep to the strict boundaries of the evaluation criterion and focus solely on the issues and errors involved; otherwise, you will be penalized.\n\
Make sure you read and understand these instructions, as well as the following evaluation criterion and example content, carefully.\n\
\n\
###Evaluation Criterion###\n\
{aspect}\n\
\n\
###Example###\n\
{source_des}:\n\
{source}\n\
\n\
{target_des}:\n\
{target}\n\
\n\
###Your Evaluation###\n";

/// Aspect-alignment inspection template (review vs. aspect description).
pub const INSPECT_ASPECT_TEMPLATE: &str = "###Instruction###\n\
You are a professional and helpful evaluator for natural language generation (NLG).\n\
You will be given an example of Review Generation task, which includes an aspect description and a review based on it.\n\
Your task is to evaluate the quality of the review strictly based on the given evaluation criterion.\n\
Your evaluation MUST begin with the accurate analysis, followed by 'Rating:' and then include the corresponding evaluation rating.\n\
Your rating MUST be an integer ranging from 1 to 5, following a five-point Likert scale. (higher means better)\n\
You MUST keep to the strict boundaries of the given evaluation criterion and focus ONLY on the issues and errors involved; otherwise, you will be penalized.\n\
Make sure you read and understand these instructions, as well as the following evaluation criterion and example content, carefully.\n\
\n\
###Evaluation Criterion###\n\
Aspect Alignment: Is the review strictly aligned with and solely based on the corresponding aspect description, without mentioning any other points out of scope?\n\
\n\
###Example###\n\
Aspect Description:\n\
{aspect}\n\
\n\
Review:\n\
{analysis}\n\
\n\
###Your Evaluation###\n";

/// Polarity-consistency inspection template (review vs. rating polarity).
pub const INSPECT_POLARITY_TEMPLATE: &str = "###Instruction###\n\
You are a professional and helpful evaluator for natural language generation (NLG).\n\
You will be given an example of Review Generation task, which includes a review of the {target_des} and a polarity.\n\
Your task is to evaluate the quality of the review strictly based on the given evaluation criterion.\n\
Your evaluation MUST begin with the accurate analysis, followed by 'Rating:' and then include the corresponding evaluation rating.\n\
Your rating MUST be an integer ranging from 1 to 5, following a five-point Likert scale. (higher means better)\n\
You MUST keep to the strict boundaries of the given evaluation criterion and focus ONLY on the issues and errors involved; otherwise, you will be penalized.\n\
Make sure you read and understand these instructions, as well as the following evaluation criterion and example content, carefully.\n\
\n\
###Evaluation Criterion###\n\
Polarity Consistency: Is the polarity of the review towards the {target_des} consistent with the given polarity (including negative, slightly negative, neutral, slightly positive, and positive)?\n\
\n\
###Example###\n\
Polarity:\n\
{rating_to_polarity}\n\
\n\
Review:\n\
{analysis}\n\
\n\
###Your Evaluation###\n";

/// A fully rendered prompt with no residual placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptText(String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for PromptText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for PromptText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// How many samplings to request and at what temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n: u32,
    pub temperature: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            n: 10,
            temperature: 1.0,
        }
    }
}

impl SamplingPlan {
    /// Single greedy sampling (the temperature-0 deployment mode).
    pub fn greedy() -> Self {
        SamplingPlan {
            n: 1,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n < 1 {
            return Err(ModelError::invalid("n", "sampling count must be >= 1"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ModelError::invalid(
                "temperature",
                format!("temperature {} must be finite and >= 0", self.temperature),
            ));
        }
        Ok(())
    }
}

/// Which inspection pass to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectionKind {
    AspectAlignment,
    PolarityConsistency,
}

/// The polarity wording for each Likert rating, monotone from 1 to 5.
pub fn rating_to_polarity(rating: Rating) -> &'static str {
    match rating.get() {
        1 => "negative",
        2 => "slightly negative",
        3 => "neutral",
        4 => "slightly positive",
        _ => "positive",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("cannot render prompt: {field} is empty")]
    MissingField { field: &'static str },
}

// Single-pass placeholder fill; values are spliced, never rescanned.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        debug_assert!(false, "unknown placeholder {{{name}}}");
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn require<'a>(value: &'a str, field: &'static str) -> Result<&'a str, RenderError> {
    if value.trim().is_empty() {
        Err(RenderError::MissingField { field })
    } else {
        Ok(value)
    }
}

/// Render the evaluation prompt for one sample.
pub fn render_eval_prompt(sample: &EvaluationSample) -> Result<PromptText, RenderError> {
    render_eval_prompt_with_criterion(sample, &sample.aspect.criterion)
}

/// Render the evaluation prompt substituting an alternative criterion text
/// for the sample's aspect (used when rotating criterion rephrasings).
pub fn render_eval_prompt_with_criterion(
    sample: &EvaluationSample,
    criterion: &str,
) -> Result<PromptText, RenderError> {
    let name = require(&sample.aspect.name, "aspect.name")?;
    let criterion = require(criterion, "aspect.criterion")?;
    let source_des = require(&sample.source_label, "source_label")?;
    let target_des = require(&sample.target_label, "target_label")?;
    let aspect_line = format!("{name}: {criterion}");
    Ok(PromptText(fill(
        EVAL_TEMPLATE,
        &[
            ("task", sample.task.prompt_name()),
            ("aspect", &aspect_line),
            ("source_des", source_des),
            ("source", &sample.source),
            ("target_des", target_des),
            ("target", &sample.target),
        ],
    )))
}

/// Render a second-pass inspection prompt for one evaluation record.
pub fn render_inspection_prompt(
    record: &EvaluationRecord,
    sample: &EvaluationSample,
    kind: InspectionKind,
) -> Result<PromptText, RenderError> {
    let analysis = require(&record.analysis, "analysis")?;
    match kind {
        InspectionKind::AspectAlignment => {
            let name = require(&sample.aspect.name, "aspect.name")?;
            let criterion = require(&sample.aspect.criterion, "aspect.criterion")?;
            let aspect_line = format!("{name}: {criterion}");
            Ok(PromptText(fill(
                INSPECT_ASPECT_TEMPLATE,
                &[("aspect", aspect_line.as_str()), ("analysis", analysis)],
            )))
        }
        InspectionKind::PolarityConsistency => {
            let target_des = require(&sample.target_label, "target_label")?;
            Ok(PromptText(fill(
                INSPECT_POLARITY_TEMPLATE,
                &[
                    ("target_des", target_des),
                    ("rating_to_polarity", rating_to_polarity(record.rating)),
                    ("analysis", analysis),
                ],
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalParseError {
    #[error("no line starting with \"Rating:\" in response")]
    MissingRatingLine,
    #[error("rating line carries no integer")]
    MissingRatingValue,
    #[error("rating {0} out of [1,5]")]
    RatingOutOfRange(i64),
    #[error("empty analysis before the rating line")]
    EmptyAnalysis,
}

// First integer on the line, with an optional leading minus sign.
fn first_integer(line: &str) -> Option<i64> {
    let bytes = line.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let end = start
        + bytes[start..]
            .iter()
            .take_while(|b| b.is_ascii_digit())
            .count();
    let negative = start > 0 && bytes[start - 1] == b'-';
    let digits = &line[start..end];
    // A run too long for i64 is far out of range either way.
    let magnitude: i64 = digits.parse().unwrap_or(i64::MAX);
    Some(if negative { -magnitude } else { magnitude })
}

/// Parse an evaluator response of the form `analysis ... \nRating: k`.
///
/// The LAST line beginning with `Rating:` wins, since analyses may quote
/// the word themselves; everything above that line is the analysis.
pub fn parse_evaluation(
    response: &str,
    temperature: f64,
) -> Result<EvaluationRecord, EvalParseError> {
    let lines: Vec<&str> = response.lines().collect();
    let rating_idx = lines
        .iter()
        .rposition(|line| line.trim_start().starts_with("Rating:"))
        .ok_or(EvalParseError::MissingRatingLine)?;
    let value = first_integer(lines[rating_idx]).ok_or(EvalParseError::MissingRatingValue)?;
    let rating = u8::try_from(value)
        .ok()
        .and_then(|v| Rating::new(v).ok())
        .ok_or(EvalParseError::RatingOutOfRange(value))?;
    let analysis = lines[..rating_idx].join("\n").trim().to_string();
    if analysis.is_empty() {
        return Err(EvalParseError::EmptyAnalysis);
    }
    Ok(EvaluationRecord {
        analysis,
        rating,
        temperature,
        provenance: Provenance::Model,
        inspection: None,
    })
}

/// Parse an inspection response; only the verdict rating is kept.
pub fn parse_inspection_verdict(response: &str) -> Result<Rating, EvalParseError> {
    parse_evaluation(response, 0.0).map(|record| record.rating)
}
