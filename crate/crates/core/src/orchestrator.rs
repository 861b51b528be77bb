//! The full pipeline for one task: generate, scan and correct statically,
//! then execute and correct dynamically. Also the benchmark driver, the
//! dataset reader and the JSONL session log.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::doc_model::ApiDocument;
use crate::dynamic_analyzer::{
    run_dynamic_loop, DynamicContext, DynamicError, ExactMatchJudge, FeedbackRecord, RequirementJudge,
};
use crate::gateways::{ApiExecutor, ApiResponse, ChatMessage, GatewayError, LlmClient};
use crate::metrics::{BenchmarkReport, MetricsError};
use crate::parallel::{self, Parallelism};
use crate::request_codec::{
    parse_llm_output, parse_request, serialize_request, ApiRequest, ParseOutcome, TypeRules, CLOSE_MARKER,
    OPEN_MARKER,
};
use crate::retrieval::{build_chunk_index, ChunkIndex, RetrievalError, SimilarityModel, TfIdfModel};
use crate::static_scanner::{detect, render_feedback, DetectionFinding, ErrorType, ScanConfig, ScanError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub threshold: f64,
    pub max_static: usize,
    pub max_dynamic: usize,
    pub chunk_threshold: f64,
    pub int_widens_to_float: bool,
    pub tuple_as_list: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 1,
            threshold: 0.5,
            max_static: 3,
            max_dynamic: 2,
            chunk_threshold: 0.3,
            int_widens_to_float: true,
            tuple_as_list: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.k == 0 {
            return Err(OrchestratorError::Config("k must be positive".into()));
        }
        for (name, v) in [("threshold", self.threshold), ("chunk_threshold", self.chunk_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(OrchestratorError::Config(format!("{name} must lie strictly between 0 and 1, got {v}")));
            }
        }
        Ok(())
    }

    pub fn rules(&self) -> TypeRules {
        TypeRules { int_widens_to_float: self.int_widens_to_float, tuple_as_list: self.tuple_as_list }
    }

    pub fn scan(&self) -> ScanConfig {
        ScanConfig { k: self.k, threshold: self.threshold, rules: self.rules() }
    }

    /// Upper bound on model calls for one task.
    pub fn llm_call_budget(&self) -> usize {
        1 + self.max_static + 2 * self.max_dynamic
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the API document is empty")]
    EmptyDocument,
    #[error("model call failed: {0}")]
    Llm(GatewayError),
    #[error(transparent)]
    Dynamic(#[from] DynamicError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl OrchestratorError {
    /// Whether the error came from talking to a remote service.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Llm(_)
                | OrchestratorError::Dynamic(DynamicError::Llm(_) | DynamicError::ExecutorUnavailable(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEvent {
    pub iteration: usize,
    pub llm_output_raw: String,
    pub finding: DetectionFinding,
    /// Feedback sent back to the model; absent when the request was clean
    /// or the budget was spent.
    pub feedback_text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub task_id: String,
    pub instruction: String,
    pub static_events: Vec<StaticEvent>,
    pub dynamic_records: Vec<FeedbackRecord>,
    pub final_request: Option<ApiRequest>,
    pub final_response: Option<ApiResponse>,
    pub satisfied: bool,
    pub token_totals: (u64, u64),
    pub executed_requests: Vec<ApiRequest>,
    pub llm_calls: usize,
    pub error: Option<String>,
}

impl SessionLog {
    /// JSONL lines for this session: one per event, then a summary line.
    /// `ts` supplies the timestamp of every line.
    pub fn to_jsonl(&self, ts: &str) -> String {
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&v.to_string());
            out.push('\n');
        };
        for e in &self.static_events {
            let action = match parse_llm_output(&e.llm_output_raw) {
                ParseOutcome::Parsed(r) => serialize_request(&r),
                ParseOutcome::Unparseable { raw, .. } => raw,
            };
            push(json!({
                "task_id": self.task_id,
                "phase": "static",
                "iteration": e.iteration,
                "action": action,
                "observation": null,
                "thought": null,
                "error_type": e.finding.error_type.as_str(),
                "feedback": e.feedback_text,
                "new_action": null,
                "ts": ts,
            }));
        }
        for r in &self.dynamic_records {
            push(json!({
                "task_id": self.task_id,
                "phase": "dynamic",
                "iteration": r.iteration,
                "action": serialize_request(&r.action),
                "observation": {
                    "status": r.observation.response.status,
                    "body": r.observation.response.body,
                    "error_message": r.observation.error_message.as_ref().map(|m| m.text.clone()),
                },
                "thought": r.thought,
                "error_type": null,
                "feedback": r.rejected,
                "new_action": serialize_request(&r.new_action),
                "ts": ts,
            }));
        }
        push(json!({
            "task_id": self.task_id,
            "phase": "final",
            "instruction": self.instruction,
            "satisfied": self.satisfied,
            "final_request": self.final_request.as_ref().map(serialize_request),
            "final_response": self.final_response,
            "executed": self.executed_requests.iter().map(serialize_request).collect::<Vec<_>>(),
            "prompt_tokens": self.token_totals.0,
            "completion_tokens": self.token_totals.1,
            "llm_calls": self.llm_calls,
            "error": self.error,
            "ts": ts,
        }));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub satisfied: bool,
    pub request: Option<ApiRequest>,
    pub response: Option<ApiResponse>,
    pub log: SessionLog,
    pub total_llm_calls: usize,
    pub executor_calls: usize,
    /// Reference sequence for process correctness, when known.
    pub truth_sequence: Option<Vec<ApiRequest>>,
}

impl TaskResult {
    pub fn total_tokens(&self) -> u64 {
        self.log.token_totals.0 + self.log.token_totals.1
    }

    /// Finding for the model's first output.
    pub fn initial_error_type(&self) -> Option<ErrorType> {
        self.log.static_events.first().map(|e| e.finding.error_type)
    }

    fn failed(log: SessionLog, executor_calls: usize) -> Self {
        TaskResult {
            satisfied: false,
            request: log.final_request.clone(),
            response: log.final_response.clone(),
            total_llm_calls: log.llm_calls,
            executor_calls,
            truth_sequence: None,
            log,
        }
    }
}

/// A task that stopped on an error, with the log collected up to then.
#[derive(Debug)]
pub struct TaskFailure {
    pub error: OrchestratorError,
    pub log: SessionLog,
    pub executor_calls: usize,
}

pub const SYSTEM_PREAMBLE: &str = "You are an assistant that fulfils user requests by calling APIs. \
Use only the APIs and parameters listed in the documentation below.";

/// Renders the documentation block of the initial prompt.
pub fn render_doc_prompt(doc: &ApiDocument) -> String {
    let mut out = String::new();
    for api in &doc.apis {
        out.push_str(&format!("API: {}\n", api.name));
        out.push_str(&format!("Description: {}\n", api.description));
        if !api.params.is_empty() {
            out.push_str("Parameters:\n");
            for p in &api.params {
                let req = if p.required { "required" } else { "optional" };
                out.push_str(&format!("- {} ({}, {}): {}\n", p.name, p.value_type.as_str(), req, p.description));
            }
        }
        if !api.exceptions.is_empty() {
            out.push_str("Exceptions:\n");
            for e in &api.exceptions {
                out.push_str(&format!("{}: {}\n", e.code, e.message));
            }
        }
        out.push('\n');
    }
    out
}

pub fn initial_messages(doc: &ApiDocument, instruction: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(format!("{SYSTEM_PREAMBLE}\n\n{}", render_doc_prompt(doc))),
        ChatMessage::user(format!(
            "Instruction: {instruction}\nGenerate one API request in the format \
             APINAME(key1=value1, key2=value2, ...) and put it between {OPEN_MARKER} and {CLOSE_MARKER}."
        )),
    ]
}

/// A document with its similarity model and chunk index, prepared once and
/// shared by every task that uses it.
pub struct PreparedDoc {
    pub doc: ApiDocument,
    pub model: Box<dyn SimilarityModel>,
    pub index: ChunkIndex,
}

impl PreparedDoc {
    pub fn new(doc: ApiDocument, model: Box<dyn SimilarityModel>, chunk_threshold: f64) -> Result<Self, OrchestratorError> {
        if doc.is_empty() {
            return Err(OrchestratorError::EmptyDocument);
        }
        let index = build_chunk_index(&doc, &model, chunk_threshold)?;
        Ok(PreparedDoc { doc, model, index })
    }

    /// Uses a TF-IDF model fitted on the document itself.
    pub fn tfidf(doc: ApiDocument, chunk_threshold: f64) -> Result<Self, OrchestratorError> {
        let model = TfIdfModel::fit_document(&doc);
        Self::new(doc, Box::new(model), chunk_threshold)
    }
}

/// One task, building the chunk index on the fly. Prefer
/// [`run_prepared_task`] when running many tasks on one document.
#[allow(clippy::too_many_arguments)]
pub fn run_task(
    task_id: &str,
    instruction: &str,
    doc: &ApiDocument,
    llm: &dyn LlmClient,
    executor: &dyn ApiExecutor,
    judge: &dyn RequirementJudge,
    model: &dyn SimilarityModel,
    config: &PipelineConfig,
) -> Result<TaskResult, TaskFailure> {
    let early = |error| TaskFailure {
        error,
        log: SessionLog { task_id: task_id.into(), instruction: instruction.into(), ..Default::default() },
        executor_calls: 0,
    };
    config.validate().map_err(early)?;
    if doc.is_empty() {
        return Err(early(OrchestratorError::EmptyDocument));
    }
    let index = build_chunk_index(doc, model, config.chunk_threshold).map_err(|e| early(e.into()))?;
    Session { doc, model, index: &index, config, llm, executor, judge }.run(task_id, instruction)
}

pub fn run_prepared_task(
    task_id: &str,
    instruction: &str,
    prepared: &PreparedDoc,
    llm: &dyn LlmClient,
    executor: &dyn ApiExecutor,
    judge: &dyn RequirementJudge,
    config: &PipelineConfig,
) -> Result<TaskResult, TaskFailure> {
    Session { doc: &prepared.doc, model: &prepared.model, index: &prepared.index, config, llm, executor, judge }
        .run(task_id, instruction)
}

struct Session<'a> {
    doc: &'a ApiDocument,
    model: &'a dyn SimilarityModel,
    index: &'a ChunkIndex,
    config: &'a PipelineConfig,
    llm: &'a dyn LlmClient,
    executor: &'a dyn ApiExecutor,
    judge: &'a dyn RequirementJudge,
}

impl Session<'_> {
    fn run(&self, task_id: &str, instruction: &str) -> Result<TaskResult, TaskFailure> {
        let mut log = SessionLog { task_id: task_id.into(), instruction: instruction.into(), ..Default::default() };
        let mut executor_calls = 0;
        match self.drive(instruction, &mut log, &mut executor_calls) {
            Ok(()) => Ok(TaskResult::failed_or_done(log, executor_calls)),
            Err(error) => {
                log.error = Some(error.to_string());
                Err(TaskFailure { error, log, executor_calls })
            }
        }
    }

    fn complete(&self, messages: &[ChatMessage], log: &mut SessionLog) -> Result<String, OrchestratorError> {
        let reply = self.llm.complete(messages).map_err(OrchestratorError::Llm)?;
        log.llm_calls += 1;
        log.token_totals.0 += reply.prompt_tokens;
        log.token_totals.1 += reply.completion_tokens;
        Ok(reply.text)
    }

    fn drive(&self, instruction: &str, log: &mut SessionLog, executor_calls: &mut usize) -> Result<(), OrchestratorError> {
        self.config.validate()?;
        let scan = self.config.scan();
        let mut messages = initial_messages(self.doc, instruction);
        let mut output = self.complete(&messages, log)?;

        let request = loop {
            let iteration = log.static_events.len();
            let outcome = parse_llm_output(&output);
            let finding = detect(&outcome, instruction, self.doc, self.model, &scan)?;
            if finding.error_type == ErrorType::NONE {
                log.static_events.push(StaticEvent { iteration, llm_output_raw: output.clone(), finding, feedback_text: None });
                break outcome.into_request().expect("a clean finding implies a parsed request");
            }
            if iteration >= self.config.max_static {
                tracing::debug!(iteration, error = %finding.error_type, "static budget spent");
                log.final_request = outcome.into_request();
                log.static_events.push(StaticEvent { iteration, llm_output_raw: output, finding, feedback_text: None });
                return Ok(());
            }
            let feedback = render_feedback(&finding, self.doc)?;
            log.static_events.push(StaticEvent {
                iteration,
                llm_output_raw: output.clone(),
                finding,
                feedback_text: Some(feedback.text.clone()),
            });
            messages.push(ChatMessage::assistant(output));
            messages.push(ChatMessage::user(feedback.text));
            output = self.complete(&messages, log)?;
        };
        messages.push(ChatMessage::assistant(output));

        let ctx = DynamicContext {
            instruction,
            doc: self.doc,
            index: self.index,
            executor: self.executor,
            llm: self.llm,
            judge: self.judge,
            model: self.model,
            conversation: &messages,
            static_guard: Some(scan),
        };
        match run_dynamic_loop(request, &ctx, self.config.max_dynamic) {
            Ok(out) => {
                log.llm_calls += out.stats.llm_calls;
                log.token_totals.0 += out.stats.prompt_tokens;
                log.token_totals.1 += out.stats.completion_tokens;
                *executor_calls += out.stats.executor_calls;
                log.dynamic_records = out.records;
                log.executed_requests = out.executed;
                log.final_request = Some(out.final_request);
                log.final_response = Some(out.final_response);
                log.satisfied = out.satisfied;
                Ok(())
            }
            Err(fail) => {
                log.llm_calls += fail.stats.llm_calls;
                log.token_totals.0 += fail.stats.prompt_tokens;
                log.token_totals.1 += fail.stats.completion_tokens;
                *executor_calls += fail.stats.executor_calls;
                log.dynamic_records = fail.records;
                log.final_request = fail.executed.last().cloned();
                log.executed_requests = fail.executed;
                log.final_response = fail.last_response;
                Err(fail.error.into())
            }
        }
    }
}

impl TaskResult {
    fn failed_or_done(log: SessionLog, executor_calls: usize) -> Self {
        TaskResult {
            satisfied: log.satisfied,
            ..TaskResult::failed(log, executor_calls)
        }
    }
}

/// Reference answer of a dataset line: one request or a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default)]
    pub doc: Option<String>,
    /// A recorded model output, used by offline classification.
    #[serde(default)]
    pub output: Option<String>,
}

impl DatasetRecord {
    /// Parsed reference sequence, if any.
    pub fn truth_sequence(&self) -> Result<Option<Vec<ApiRequest>>, String> {
        let texts = match &self.ground_truth {
            None => return Ok(None),
            Some(GroundTruth::One(s)) => vec![s.as_str()],
            Some(GroundTruth::Many(v)) => v.iter().map(String::as_str).collect(),
        };
        if texts.is_empty() {
            return Err("ground_truth list is empty".into());
        }
        texts
            .into_iter()
            .map(|t| match parse_request(t) {
                ParseOutcome::Parsed(r) => Ok(r),
                ParseOutcome::Unparseable { reason, .. } => Err(format!("ground_truth {t:?} does not parse ({reason:?})")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

/// Reads a JSONL dataset. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, OrchestratorError> {
    let io = |source| OrchestratorError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| OrchestratorError::Dataset { line: i + 1, message: e.to_string() })?;
        rec.truth_sequence().map_err(|message| OrchestratorError::Dataset { line: i + 1, message })?;
        out.push(rec);
    }
    Ok(out)
}

/// One benchmark task bound to a prepared document.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchTask {
    pub id: String,
    pub instruction: String,
    pub truth: Option<Vec<ApiRequest>>,
    /// Index into the document list passed to [`run_benchmark`].
    pub doc: usize,
}

/// Per-task clients. Without a judge, the task is judged by exact match
/// against the last reference request (or by status alone).
pub struct TaskGateways {
    pub llm: Box<dyn LlmClient>,
    pub executor: Box<dyn ApiExecutor>,
    pub judge: Option<Box<dyn RequirementJudge>>,
}

pub trait GatewayFactory: Sync {
    fn gateways(&self, task: &BenchTask, doc: &ApiDocument) -> Result<TaskGateways, GatewayError>;
}

impl<F> GatewayFactory for F
where
    F: Fn(&BenchTask, &ApiDocument) -> Result<TaskGateways, GatewayError> + Sync,
{
    fn gateways(&self, task: &BenchTask, doc: &ApiDocument) -> Result<TaskGateways, GatewayError> {
        self(task, doc)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub parallelism: Parallelism,
    pub log_dir: Option<PathBuf>,
    /// Timestamp written into every log line; the current time when unset.
    pub fixed_timestamp: Option<String>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { parallelism: Parallelism::Sequential, log_dir: None, fixed_timestamp: None }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub results: Vec<TaskResult>,
}

pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs every task and aggregates the results. A task that fails counts as
/// unsatisfied and keeps its error in the log.
pub fn run_benchmark(
    tasks: &[BenchTask],
    docs: &[PreparedDoc],
    factory: &dyn GatewayFactory,
    config: &PipelineConfig,
    opts: &BenchOptions,
) -> Result<BenchmarkOutcome, OrchestratorError> {
    if tasks.is_empty() {
        return Err(OrchestratorError::EmptyDataset);
    }
    config.validate()?;
    if let Some(t) = tasks.iter().find(|t| t.doc >= docs.len()) {
        return Err(OrchestratorError::Config(format!("task {} refers to missing document #{}", t.id, t.doc)));
    }
    let results = parallel::map(tasks, opts.parallelism, |task| run_one(task, docs, factory, config));

    if let Some(dir) = &opts.log_dir {
        let ts = opts.fixed_timestamp.clone().unwrap_or_else(now_timestamp);
        write_logs(dir, &results, &ts)?;
    }
    let report = BenchmarkReport::from_results(&results, &config.rules())?;
    Ok(BenchmarkOutcome { report, results })
}

fn run_one(task: &BenchTask, docs: &[PreparedDoc], factory: &dyn GatewayFactory, config: &PipelineConfig) -> TaskResult {
    let prepared = &docs[task.doc];
    let gw = match factory.gateways(task, &prepared.doc) {
        Ok(gw) => gw,
        Err(e) => {
            let log = SessionLog {
                task_id: task.id.clone(),
                instruction: task.instruction.clone(),
                error: Some(e.to_string()),
                ..Default::default()
            };
            return TaskResult { truth_sequence: task.truth.clone(), ..TaskResult::failed(log, 0) };
        }
    };
    let default_judge = match task.truth.as_ref().and_then(|t| t.last()) {
        Some(t) => ExactMatchJudge { rules: config.rules(), ..ExactMatchJudge::with_truth(t.clone()) },
        None => ExactMatchJudge { rules: config.rules(), ..Default::default() },
    };
    let judge: &dyn RequirementJudge = match &gw.judge {
        Some(j) => j,
        None => &default_judge,
    };
    let result = run_prepared_task(&task.id, &task.instruction, prepared, &gw.llm, &gw.executor, judge, config);
    let mut result = match result {
        Ok(r) => r,
        Err(fail) => {
            tracing::warn!(task = %task.id, error = %fail.error, "task failed");
            TaskResult::failed(fail.log, fail.executor_calls)
        }
    };
    result.truth_sequence = task.truth.clone();
    result
}

/// File name used for a task's log.
pub fn log_file_name(task_id: &str) -> String {
    let safe: String =
        task_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.jsonl")
}

/// Writes one JSONL file per task, in result order.
pub fn write_logs(dir: &Path, results: &[TaskResult], ts: &str) -> Result<(), OrchestratorError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| OrchestratorError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for r in results {
        let path = dir.join(log_file_name(&r.log.task_id));
        let mut f = fs::File::create(&path).map_err(io(&path))?;
        f.write_all(r.log.to_jsonl(ts).as_bytes()).map_err(io(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateways::{scripted_llm, MockApiServer};
    use crate::request_codec::Value;

    fn doc() -> ApiDocument {
        ApiDocument::from_json(
            r#"{"apis":[
              {"name":"userLogin","description":"Log a user into the system.","parameters":[
                {"name":"userName","type":"string","description":"Name of the user.","required":true},
                {"name":"password","type":"string","description":"Password of the user.","required":true}],
               "exceptions":[]},
              {"name":"get_weather","description":"Get the weather forecast for a city.","parameters":[
                {"name":"city","type":"string","description":"City name.","required":true}],
               "exceptions":[{"code":"404","message":"City not found."}]}]}"#,
        )
        .unwrap()
    }

    const GOOD: &str = r#"<<API>>userLogin(userName="amy", password="pw")<</API>>"#;

    fn judge() -> ExactMatchJudge {
        ExactMatchJudge::with_truth(ApiRequest::new("userLogin").arg("userName", Value::Str("amy".into())).arg("password", Value::Str("pw".into())))
    }

    fn run(script: &[&str], cfg: &PipelineConfig) -> (Result<TaskResult, TaskFailure>, usize, usize) {
        let d = doc();
        let llm = scripted_llm(script.iter().copied()).unwrap();
        let exec = MockApiServer::for_document(&d, vec![]);
        let model = TfIdfModel::fit_document(&d);
        let r = run_task("t", "Log in the user amy with password pw.", &d, &llm, &exec, &judge(), &model, cfg);
        (r, llm.calls(), exec.calls())
    }

    #[test]
    fn doc_rendering() {
        let text = render_doc_prompt(&doc());
        assert_eq!(text.matches("API: userLogin").count(), 1);
        assert!(text.contains("- userName (string, required): Name of the user."));
        assert!(text.contains("404: City not found."));
        let one = ApiDocument::from_json(r#"{"apis":[{"name":"ping","description":"Ping.","parameters":[],"exceptions":[]}]}"#).unwrap();
        let text = render_doc_prompt(&one);
        assert!(!text.contains("Parameters:"));
        assert!(text.starts_with("API: ping\n"));
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert!(PipelineConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { chunk_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(PipelineConfig::default().llm_call_budget(), 8);
    }

    #[test]
    fn happy_path() {
        let (r, llm, exec) = run(&[GOOD], &PipelineConfig::default());
        let r = r.unwrap();
        assert!(r.satisfied);
        assert_eq!((llm, exec, r.total_llm_calls), (1, 1, 1));
        assert_eq!(r.log.static_events.len(), 1);
        assert!(r.log.dynamic_records.is_empty());
    }

    #[test]
    fn static_correction_then_success() {
        let bad = r#"<<API>>user_login(userName="amy", password="pw")<</API>>"#;
        let (r, llm, exec) = run(&[bad, GOOD], &PipelineConfig::default());
        let r = r.unwrap();
        assert!(r.satisfied);
        assert_eq!((llm, exec), (2, 1));
        assert_eq!(r.log.static_events[0].finding.error_type, ErrorType::E2_2);
        assert!(r.log.static_events[0].feedback_text.as_deref().unwrap().contains("userLogin"));
    }

    #[test]
    fn static_budget_exhaustion_skips_executor() {
        let (r, llm, exec) = run(&["no request here"], &PipelineConfig::default());
        let r = r.unwrap();
        assert!(!r.satisfied);
        assert_eq!((llm, exec), (4, 0));
        assert_eq!(r.log.static_events.len(), 4);
        assert!(r.log.static_events.last().unwrap().feedback_text.is_none());
    }

    #[test]
    fn jsonl_has_one_line_per_event_plus_summary() {
        let bad = r#"<<API>>user_login(userName="amy", password="pw")<</API>>"#;
        let (r, _, _) = run(&[bad, GOOD], &PipelineConfig::default());
        let text = r.unwrap().log.to_jsonl("T");
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["phase"], "static");
        assert_eq!(lines[0]["error_type"], "E2_2");
        assert_eq!(lines[1]["error_type"], "NONE");
        assert_eq!(lines[2]["phase"], "final");
        assert_eq!(lines[2]["satisfied"], true);
    }

    #[test]
    fn dataset_reading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(
            &p,
            "{\"id\":\"a\",\"instruction\":\"x\",\"ground_truth\":\"f(a=1)\"}\n\n\
             {\"id\":\"b\",\"instruction\":\"y\",\"ground_truth\":[\"f()\",\"g()\"]}\n",
        )
        .unwrap();
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[1].truth_sequence().unwrap().unwrap().len(), 2);

        fs::write(&p, "{\"id\":\"a\",\"instruction\":\"x\"}\n{\"id\":\"b\"}\n{oops\n").unwrap();
        match load_dataset(&p) {
            Err(OrchestratorError::Dataset { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn benchmark_counts_and_empty() {
        let prepared = vec![PreparedDoc::tfidf(doc(), 0.3).unwrap()];
        let tasks: Vec<BenchTask> = (0..10)
            .map(|i| BenchTask { id: format!("t{i}"), instruction: "Log in the user amy.".into(), truth: None, doc: 0 })
            .collect();
        let factory = |t: &BenchTask, d: &ApiDocument| -> Result<TaskGateways, GatewayError> {
            let n: usize = t.id[1..].parse().unwrap();
            let out = if n < 7 { GOOD } else { "nothing" };
            Ok(TaskGateways {
                llm: Box::new(scripted_llm([out])?),
                executor: Box::new(MockApiServer::for_document(d, vec![])),
                judge: None,
            })
        };
        let cfg = PipelineConfig::default();
        let out = run_benchmark(&tasks, &prepared, &factory, &cfg, &BenchOptions::default()).unwrap();
        assert!((out.report.accuracy_pct - 70.0).abs() < 1e-9);
        assert!(matches!(
            run_benchmark(&[], &prepared, &factory, &cfg, &BenchOptions::default()),
            Err(OrchestratorError::EmptyDataset)
        ));
    }
}
