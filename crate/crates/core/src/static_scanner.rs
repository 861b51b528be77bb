//! Local, pre-execution error detection for generated requests.
//!
//! Detection runs in a fixed order and stops at the first hit:
//! unparseable output (E1), API name (E2.x), parameter names (E3.x), then
//! value types (E4.1). Within a family the selection check (.1) runs before
//! the literal check (.2), which runs before the semantic check (.3).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{normalize_name, ApiDocument, ApiSpec, ParamSpec};
use crate::parallel::{self, Parallelism};
use crate::request_codec::{ApiRequest, ParseOutcome, TypeRules, CLOSE_MARKER, OPEN_MARKER};
use crate::retrieval::{retrieve_relevant_apis, RelevantSet, RetrievalError, SimilarityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum ErrorType {
    E1,
    E2_1,
    E2_2,
    E2_3,
    E2_OTHER,
    E3_1,
    E3_2,
    E3_3,
    E3_OTHER,
    E4_1,
    E4_OTHER,
    NONE,
}

impl ErrorType {
    pub const ALL: [ErrorType; 12] = [
        ErrorType::E1,
        ErrorType::E2_1,
        ErrorType::E2_2,
        ErrorType::E2_3,
        ErrorType::E2_OTHER,
        ErrorType::E3_1,
        ErrorType::E3_2,
        ErrorType::E3_3,
        ErrorType::E3_OTHER,
        ErrorType::E4_1,
        ErrorType::E4_OTHER,
        ErrorType::NONE,
    ];

    /// Major class: 1..=4, or 0 for `NONE`.
    pub fn family(self) -> u8 {
        use ErrorType::*;
        match self {
            E1 => 1,
            E2_1 | E2_2 | E2_3 | E2_OTHER => 2,
            E3_1 | E3_2 | E3_3 | E3_OTHER => 3,
            E4_1 | E4_OTHER => 4,
            NONE => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        use ErrorType::*;
        match self {
            E1 => "E1",
            E2_1 => "E2_1",
            E2_2 => "E2_2",
            E2_3 => "E2_3",
            E2_OTHER => "E2_OTHER",
            E3_1 => "E3_1",
            E3_2 => "E3_2",
            E3_3 => "E3_3",
            E3_OTHER => "E3_OTHER",
            E4_1 => "E4_1",
            E4_OTHER => "E4_OTHER",
            NONE => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorType> {
        ErrorType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of one detection pass. Which name fields are set depends on the
/// error type:
///
/// | type | `offending` | `suggested` | `param_description` |
/// |------|-------------|-------------|---------------------|
/// | E1, NONE | - | - | - |
/// | E2.1, E2.other | API name | - | - |
/// | E2.2, E2.3 | API name | documented API | - |
/// | E3.1, E3.other | parameter name | - | - |
/// | E3.2, E3.3 | parameter name | documented parameter | - |
/// | E4.1, E4.other | value | - | description |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFinding {
    pub error_type: ErrorType,
    pub offending: Option<String>,
    pub suggested: Option<String>,
    pub param_description: Option<String>,
    pub relevant_apis: RelevantSet,
    /// Name of the generated API when the request parsed.
    pub request_name: Option<String>,
    /// Parameter the finding refers to (E3.other missing parameter, E4.x).
    pub parameter: Option<String>,
    /// E3.other raised because a required parameter is absent.
    pub missing_required: bool,
}

impl DetectionFinding {
    fn new(error_type: ErrorType, relevant_apis: RelevantSet, request_name: Option<&str>) -> Self {
        DetectionFinding {
            error_type,
            offending: None,
            suggested: None,
            param_description: None,
            relevant_apis,
            request_name: request_name.map(str::to_string),
            parameter: None,
            missing_required: false,
        }
    }

    fn offending(mut self, s: impl Into<String>) -> Self {
        self.offending = Some(s.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.error_type != ErrorType::NONE
    }

    /// Whether the populated fields match the table above.
    pub fn has_valid_arity(&self) -> bool {
        use ErrorType::*;
        let (o, s, d) = (self.offending.is_some(), self.suggested.is_some(), self.param_description.is_some());
        match self.error_type {
            E1 | NONE => !o && !s && !d,
            E2_1 | E2_OTHER | E3_1 | E3_OTHER => o && !s && !d,
            E2_2 | E2_3 | E3_2 | E3_3 => o && s && !d,
            E4_1 | E4_OTHER => o && !s && d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Size of the relevant-API set.
    pub k: usize,
    /// Similarity a name must exceed to count as a semantic match.
    pub threshold: f64,
    pub rules: TypeRules,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { k: 1, threshold: 0.5, rules: TypeRules::default() }
    }
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("ground-truth API {0:?} is not documented")]
    UnknownTruthApi(String),
    #[error("no feedback for a request without errors")]
    NoError,
}

/// Text a documented API is matched against when the generated name is
/// unknown: its name followed by its description.
pub fn api_profile(api: &ApiSpec) -> String {
    format!("{} {}", api.name, api.description)
}

pub fn param_profile(p: &ParamSpec) -> String {
    format!("{} {}", p.name, p.description)
}

/// Highest-scoring candidate strictly above `threshold`; earliest wins ties.
fn best_semantic<'a, T>(
    model: &dyn SimilarityModel,
    query: &str,
    candidates: impl Iterator<Item = &'a T>,
    profile: impl Fn(&T) -> String,
    threshold: f64,
) -> Result<Option<&'a T>, RetrievalError>
where
    T: 'a,
{
    let mut best: Option<(&T, f64)> = None;
    for c in candidates {
        let s = model.score(query, &profile(c))?;
        if s > threshold && best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    Ok(best.map(|(c, _)| c))
}

/// E2 cascade for a name that is not the expected one. `expected` narrows
/// the literal and semantic checks to one API (ground-truth mode).
fn classify_name(
    name: &str,
    doc: &ApiDocument,
    expected: Option<&ApiSpec>,
    model: &dyn SimilarityModel,
    threshold: f64,
) -> Result<(ErrorType, Option<String>), RetrievalError> {
    if doc.lookup(name).is_some() {
        return Ok((ErrorType::E2_1, None));
    }
    let pool: Vec<&ApiSpec> = match expected {
        Some(api) => vec![api],
        None => doc.apis.iter().collect(),
    };
    let normalized = normalize_name(name);
    if let Some(r2) = pool.iter().find(|a| normalize_name(&a.name) == normalized) {
        return Ok((ErrorType::E2_2, Some(r2.name.clone())));
    }
    if let Some(r3) = best_semantic(model, name, pool.iter(), |a| api_profile(a), threshold)? {
        return Ok((ErrorType::E2_3, Some(r3.name.clone())));
    }
    Ok((ErrorType::E2_OTHER, None))
}

/// E3 cascade for a key that `api` does not document.
fn classify_param(
    key: &str,
    api: &ApiSpec,
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    threshold: f64,
) -> Result<(ErrorType, Option<String>), RetrievalError> {
    let others = || doc.apis.iter().filter(|a| a.name != api.name);
    if others().any(|a| a.has_param(key)) {
        return Ok((ErrorType::E3_1, None));
    }
    let normalized = normalize_name(key);
    let literal = api
        .params
        .iter()
        .chain(others().flat_map(|a| a.params.iter()))
        .find(|p| normalize_name(&p.name) == normalized);
    if let Some(p2) = literal {
        return Ok((ErrorType::E3_2, Some(p2.name.clone())));
    }
    if let Some(p3) = best_semantic(model, key, api.params.iter(), param_profile, threshold)? {
        return Ok((ErrorType::E3_3, Some(p3.name.clone())));
    }
    Ok((ErrorType::E3_OTHER, None))
}

/// Checks keys, missing required parameters and value types of `req`
/// against `api`. Returns `None` when all pass.
fn check_arguments(
    req: &ApiRequest,
    api: &ApiSpec,
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    cfg: &ScanConfig,
    relevant: &RelevantSet,
) -> Result<Option<DetectionFinding>, RetrievalError> {
    let base = |t| DetectionFinding::new(t, relevant.clone(), Some(&req.name));
    // Every unknown key is classified and the lowest sub-type is reported;
    // among equals the first key wins.
    let mut worst: Option<(ErrorType, &String, Option<String>)> = None;
    for (key, _) in &req.args {
        if api.has_param(key) {
            continue;
        }
        let (t, suggestion) = classify_param(key, api, doc, model, cfg.threshold)?;
        if worst.as_ref().is_none_or(|(w, _, _)| t < *w) {
            worst = Some((t, key, suggestion));
        }
    }
    if let Some((t, key, suggestion)) = worst {
        let mut f = base(t).offending(key.clone());
        f.suggested = suggestion;
        return Ok(Some(f));
    }
    if let Some(missing) = api.params.iter().find(|p| p.required && req.get(&p.name).is_none()) {
        let mut f = base(ErrorType::E3_OTHER).offending(missing.name.clone());
        f.missing_required = true;
        f.parameter = Some(missing.name.clone());
        return Ok(Some(f));
    }
    for (key, value) in &req.args {
        let param = api.param(key).expect("keys checked above");
        if !cfg.rules.compatible(value, param.value_type) {
            let mut f = base(ErrorType::E4_1).offending(value.to_literal());
            f.param_description = Some(param.description.clone());
            f.parameter = Some(key.clone());
            return Ok(Some(f));
        }
    }
    Ok(None)
}

/// Scans one generated request against the documentation.
pub fn detect(
    outcome: &ParseOutcome,
    instruction: &str,
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    cfg: &ScanConfig,
) -> Result<DetectionFinding, ScanError> {
    let relevant = retrieve_relevant_apis(instruction, doc, model, cfg.k)?;
    let req = match outcome {
        ParseOutcome::Parsed(r) => r,
        ParseOutcome::Unparseable { .. } => return Ok(DetectionFinding::new(ErrorType::E1, relevant, None)),
    };
    if !relevant.contains(&req.name) {
        let (t, suggestion) = classify_name(&req.name, doc, None, model, cfg.threshold)?;
        let mut f = DetectionFinding::new(t, relevant, Some(&req.name)).offending(req.name.clone());
        f.suggested = suggestion;
        return Ok(f);
    }
    let api = doc.lookup(&req.name).expect("relevant APIs come from the document");
    if let Some(f) = check_arguments(req, api, doc, model, cfg, &relevant)? {
        return Ok(f);
    }
    Ok(DetectionFinding::new(ErrorType::NONE, relevant, Some(&req.name)))
}

/// Detection over many independent inputs.
pub fn detect_batch(
    items: &[(ParseOutcome, String)],
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    cfg: &ScanConfig,
    par: Parallelism,
) -> Vec<Result<DetectionFinding, ScanError>> {
    parallel::map(items, par, |(outcome, instruction)| detect(outcome, instruction, doc, model, cfg))
}

/// Error class of `generated` judged against a known-correct request.
pub fn classify_against_truth(
    generated: &ParseOutcome,
    truth: &ApiRequest,
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    cfg: &ScanConfig,
) -> Result<ErrorType, ScanError> {
    let truth_api = doc
        .lookup(&truth.name)
        .ok_or_else(|| ScanError::UnknownTruthApi(truth.name.clone()))?;
    let req = match generated {
        ParseOutcome::Parsed(r) => r,
        ParseOutcome::Unparseable { .. } => return Ok(ErrorType::E1),
    };
    if req.name != truth.name {
        return Ok(classify_name(&req.name, doc, Some(truth_api), model, cfg.threshold)?.0);
    }
    if let Some(f) = check_arguments(req, truth_api, doc, model, cfg, &RelevantSet::default())? {
        return Ok(f.error_type);
    }
    let same_keys = req.args.len() == truth.args.len();
    let same_values = same_keys
        && truth.args.iter().all(|(k, want)| req.get(k).is_some_and(|got| cfg.rules.values_equal(got, want)));
    Ok(if same_values { ErrorType::NONE } else { ErrorType::E4_OTHER })
}

pub fn classify_batch(
    items: &[(ParseOutcome, ApiRequest)],
    doc: &ApiDocument,
    model: &dyn SimilarityModel,
    cfg: &ScanConfig,
    par: Parallelism,
) -> Vec<Result<ErrorType, ScanError>> {
    parallel::map(items, par, |(generated, truth)| classify_against_truth(generated, truth, doc, model, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeedbackPart {
    Declare,
    Locate,
    Exclude,
    Suggest,
    Regenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFeedback {
    pub text: String,
    pub parts_present: BTreeSet<FeedbackPart>,
}

pub const DECLARE_SENTENCE: &str = "The API request you generated contains an error.";

pub fn regenerate_sentence() -> String {
    format!("Please regenerate the API request between {OPEN_MARKER} and {CLOSE_MARKER}.")
}

fn exclusion(t: ErrorType) -> Option<&'static str> {
    use ErrorType::*;
    Some(match t {
        E1 | NONE => return None,
        E2_1 => "The API request is correctly formatted.",
        E2_2 => "The API request is correctly formatted, and the API name is not a selection error.",
        E2_3 => "The API name is not a selection error or a formatting error.",
        E2_OTHER => "The API name is not a selection error, a formatting error or a semantic error.",
        E3_1 => "The API name is correct.",
        E3_2 => "The API name is correct, and the parameter name is not a selection error.",
        E3_3 => "The API name is correct, and the parameter name is not a selection error or a formatting error.",
        E3_OTHER => "The API name is correct.",
        E4_1 | E4_OTHER => "The API name and the parameter names are correct.",
    })
}

/// Renders the corrective prompt for a finding: declare, locate, exclude
/// (absent for E1), suggest, regenerate.
pub fn render_feedback(finding: &DetectionFinding, doc: &ApiDocument) -> Result<StaticFeedback, ScanError> {
    use ErrorType::*;
    let t = finding.error_type;
    if t == NONE {
        return Err(ScanError::NoError);
    }
    let offending = finding.offending.as_deref().unwrap_or_default();
    let suggested = finding.suggested.as_deref().unwrap_or_default();
    let api_name = finding.request_name.as_deref().unwrap_or_default();
    let api = doc.lookup(api_name);

    let locate = match t.family() {
        1 => "Error location: the whole API request. No request in the format \
              APINAME(key1=value1, key2=value2, ...) could be parsed from your output."
            .to_string(),
        2 => format!("Error location: the API name. The API name \"{offending}\" is incorrect."),
        3 if finding.missing_required => {
            format!("Error location: the parameter names of \"{api_name}\". The parameter \"{offending}\" is missing.")
        }
        3 => format!("Error location: the parameter name. The parameter name \"{offending}\" is invalid for \"{api_name}\"."),
        _ => format!(
            "Error location: the parameter value. The value {offending} of parameter \"{}\" is incorrect.",
            finding.parameter.as_deref().unwrap_or_default()
        ),
    };

    let suggest = match t {
        E1 => "Cause: the output does not contain a well-formed API request. Write exactly one call such as \
               APINAME(key1=value1, key2=value2) with keyword arguments only."
            .to_string(),
        E2_1 => format!(
            "Cause: \"{offending}\" is another API in the documentation, but it does not fulfil the user instruction. \
             Select the API whose description matches the instruction."
        ),
        E2_2 => format!(
            "Cause: the letter case or naming style of the API name is wrong. The documented name is \"{suggested}\"."
        ),
        E2_3 => format!(
            "Cause: \"{offending}\" does not exist in the API documentation. The closest documented API is \"{suggested}\"."
        ),
        E2_OTHER => format!(
            "Cause: \"{offending}\" does not exist in the API documentation. Use only API names listed in the documentation."
        ),
        E3_1 => {
            let owner = doc
                .apis
                .iter()
                .find(|a| a.has_param(offending))
                .map(|a| format!(" (it belongs to \"{}\")", a.name))
                .unwrap_or_default();
            format!("Cause: \"{offending}\" is a parameter of another API{owner}, not of \"{api_name}\".")
        }
        E3_2 => format!(
            "Cause: the letter case or naming style of the parameter name is wrong. The documented name is \"{suggested}\"."
        ),
        E3_3 => format!(
            "Cause: \"{offending}\" is not a documented parameter. The closest documented parameter is \"{suggested}\"."
        ),
        E3_OTHER if finding.missing_required => {
            format!("Cause: the required parameter \"{offending}\" must be provided.")
        }
        E3_OTHER => {
            let valid = api
                .map(|a| a.params.iter().map(|p| format!("\"{}\"", p.name)).collect::<Vec<_>>().join(", "))
                .unwrap_or_default();
            format!("Cause: \"{offending}\" is not a documented parameter. Valid parameters are: {valid}.")
        }
        E4_1 => format!(
            "Cause: the type of {offending} does not match the documentation. The parameter is described as: {}",
            finding.param_description.as_deref().unwrap_or_default()
        ),
        E4_OTHER => format!(
            "Cause: the value {offending} does not satisfy the parameter. The parameter is described as: {}",
            finding.param_description.as_deref().unwrap_or_default()
        ),
        NONE => unreachable!(),
    };

    let mut parts = BTreeSet::new();
    let mut lines = vec![DECLARE_SENTENCE.to_string()];
    parts.insert(FeedbackPart::Declare);
    lines.push(locate);
    parts.insert(FeedbackPart::Locate);
    if let Some(ex) = exclusion(t) {
        lines.push(ex.to_string());
        parts.insert(FeedbackPart::Exclude);
    }
    lines.push(suggest);
    parts.insert(FeedbackPart::Suggest);
    lines.push(regenerate_sentence());
    parts.insert(FeedbackPart::Regenerate);
    Ok(StaticFeedback { text: lines.join("\n"), parts_present: parts })
}
