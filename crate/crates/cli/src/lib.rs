//! Command-line driver: run one task, benchmark a dataset, classify recorded
//! outputs, or summarize session logs.
//!
//! Exit codes: 0 success, 1 task unsatisfied, 2 configuration or input
//! error, 3 transport error.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use autofeedback::doc_model::ApiDocument;
use autofeedback::dynamic_analyzer::ExactMatchJudge;
use autofeedback::fixtures;
use autofeedback::gateways::{
    http_api_executor, http_llm_client, ApiExecutor, GatewayError, LlmClient, MockApiServer, MockRule, RouteSpec,
    ScriptedLlm, LLM_KEY_ENV,
};
use autofeedback::metrics::error_distribution;
use autofeedback::orchestrator::{
    initial_messages, load_dataset, now_timestamp, run_benchmark, run_prepared_task, write_logs, BenchOptions,
    BenchTask, DatasetRecord, OrchestratorError, PipelineConfig, PreparedDoc, TaskGateways, TaskResult,
};
use autofeedback::parallel::Parallelism;
use autofeedback::request_codec::{parse_llm_output, parse_request, serialize_request, ApiRequest, ParseOutcome};
use autofeedback::static_scanner::{classify_batch, ErrorType, ScanConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSATISFIED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "autofeedback", version, about = "Static and dynamic feedback for LLM-generated API requests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline on one instruction.
    Run(RunArgs),
    /// Run every task of a JSONL dataset and write a report.
    Bench(BenchArgs),
    /// Classify recorded or fresh outputs against their ground truth.
    Classify(ClassifyArgs),
    /// Summarize session logs, unsatisfied tasks first.
    Report(ReportArgs),
    /// Write the bundled fixture document, dataset, script and mock rules.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorKind {
    Mock,
    Http,
}

/// Options shared by every pipeline command. A `--config` JSON file may
/// set any of them using the flag names as keys.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CommonArgs {
    /// Flat JSON object with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// API documentation (JSON).
    #[arg(long)]
    pub doc: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub llm: Option<LlmKind>,
    /// Base URL of an OpenAI-compatible endpoint.
    #[arg(long)]
    pub llm_base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub executor: Option<ExecutorKind>,
    #[arg(long)]
    pub max_static: Option<usize>,
    #[arg(long)]
    pub max_dynamic: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub chunk_threshold: Option<f64>,
    /// Tasks run concurrently by `bench`.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    /// Replies of the scripted model: a JSON list, or an object mapping
    /// task ids to lists.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Canned responses of the mock executor (JSON list of rules).
    #[arg(long)]
    pub mock_rules: Option<PathBuf>,
    /// API name to `{"method","path"}` map for the HTTP executor.
    #[arg(long)]
    pub routes: Option<PathBuf>,
    #[arg(long)]
    pub api_base_url: Option<String>,
}

impl CommonArgs {
    /// Flag values win over `file` values.
    fn over(self, file: CommonArgs) -> CommonArgs {
        CommonArgs {
            config: self.config,
            doc: self.doc.or(file.doc),
            llm: self.llm.or(file.llm),
            llm_base_url: self.llm_base_url.or(file.llm_base_url),
            model: self.model.or(file.model),
            executor: self.executor.or(file.executor),
            max_static: self.max_static.or(file.max_static),
            max_dynamic: self.max_dynamic.or(file.max_dynamic),
            k: self.k.or(file.k),
            threshold: self.threshold.or(file.threshold),
            chunk_threshold: self.chunk_threshold.or(file.chunk_threshold),
            jobs: self.jobs.or(file.jobs),
            log_dir: self.log_dir.or(file.log_dir),
            script: self.script.or(file.script),
            mock_rules: self.mock_rules.or(file.mock_rules),
            routes: self.routes.or(file.routes),
            api_base_url: self.api_base_url.or(file.api_base_url),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// The user instruction.
    #[arg(long, short = 'i')]
    pub instruction: String,
    /// Expected request, used by the judge.
    #[arg(long)]
    pub ground_truth: Option<String>,
    #[arg(long, default_value = "task")]
    pub task_id: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the report; defaults to `<log-dir>/report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the histogram as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub log_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        if e.is_transport() {
            CliError::Transport(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Fully resolved options.
#[derive(Debug, Clone)]
pub struct Settings {
    pub doc: Option<PathBuf>,
    pub llm: LlmKind,
    pub llm_base_url: Option<String>,
    pub model: Option<String>,
    pub executor: ExecutorKind,
    pub pipeline: PipelineConfig,
    pub jobs: usize,
    pub log_dir: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub mock_rules: Option<PathBuf>,
    pub routes: Option<PathBuf>,
    pub api_base_url: Option<String>,
}

pub fn resolve(flags: CommonArgs) -> Result<Settings, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<CommonArgs>(&text)
                .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))?
        }
        None => CommonArgs::default(),
    };
    let a = flags.over(file);
    let d = PipelineConfig::default();
    let pipeline = PipelineConfig {
        k: a.k.unwrap_or(d.k),
        threshold: a.threshold.unwrap_or(d.threshold),
        max_static: a.max_static.unwrap_or(d.max_static),
        max_dynamic: a.max_dynamic.unwrap_or(d.max_dynamic),
        chunk_threshold: a.chunk_threshold.unwrap_or(d.chunk_threshold),
        ..d
    };
    pipeline.validate()?;
    let s = Settings {
        doc: a.doc,
        llm: a.llm.unwrap_or(LlmKind::Scripted),
        llm_base_url: a.llm_base_url,
        model: a.model,
        executor: a.executor.unwrap_or(ExecutorKind::Mock),
        pipeline,
        jobs: a.jobs.unwrap_or(1),
        log_dir: a.log_dir,
        script: a.script,
        mock_rules: a.mock_rules,
        routes: a.routes,
        api_base_url: a.api_base_url,
    };
    if s.executor == ExecutorKind::Http && (s.api_base_url.is_none() || s.routes.is_none()) {
        return Err(config_err("--executor http needs --api-base-url and --routes"));
    }
    Ok(s)
}

impl Settings {
    /// Checks the model options; only commands that call the model need them.
    pub fn check_llm(&self) -> Result<(), CliError> {
        match self.llm {
            LlmKind::Scripted if self.script.is_none() => Err(config_err("--llm scripted needs --script")),
            LlmKind::Http if self.llm_base_url.is_none() || self.model.is_none() => {
                Err(config_err("--llm http needs --llm-base-url and --model"))
            }
            LlmKind::Http if std::env::var(LLM_KEY_ENV).is_err() => {
                Err(config_err(format!("--llm http needs the {LLM_KEY_ENV} environment variable")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Shared(Vec<String>),
    PerTask(BTreeMap<String, Vec<String>>),
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("invalid {what} {}: {e}", path.display())))
}

fn load_doc(path: &Path) -> Result<ApiDocument, CliError> {
    ApiDocument::load(path).map_err(|e| config_err(format!("cannot load document {}: {e}", path.display())))
}

/// Builds per-task clients from the resolved settings.
struct Gateways {
    llm: LlmKind,
    script: Option<ScriptFile>,
    llm_base_url: Option<String>,
    model: Option<String>,
    executor: ExecutorKind,
    rules: Vec<MockRule>,
    routes: HashMap<String, RouteSpec>,
    api_base_url: Option<String>,
}

impl Gateways {
    fn new(s: &Settings) -> Result<Self, CliError> {
        Ok(Gateways {
            llm: s.llm,
            script: s.script.as_deref().map(|p| read_json(p, "script")).transpose()?,
            llm_base_url: s.llm_base_url.clone(),
            model: s.model.clone(),
            executor: s.executor,
            rules: s.mock_rules.as_deref().map(|p| read_json(p, "mock rules")).transpose()?.unwrap_or_default(),
            routes: s.routes.as_deref().map(|p| read_json(p, "routes")).transpose()?.unwrap_or_default(),
            api_base_url: s.api_base_url.clone(),
        })
    }

    fn llm_for(&self, task_id: &str) -> Result<Box<dyn LlmClient>, GatewayError> {
        match self.llm {
            LlmKind::Scripted => {
                let replies = match &self.script {
                    Some(ScriptFile::Shared(r)) => r.clone(),
                    Some(ScriptFile::PerTask(m)) => m.get(task_id).cloned().unwrap_or_default(),
                    None => Vec::new(),
                };
                Ok(Box::new(ScriptedLlm::new(replies)?))
            }
            LlmKind::Http => Ok(Box::new(http_llm_client(
                self.llm_base_url.as_deref().unwrap_or_default(),
                self.model.as_deref().unwrap_or_default(),
                std::env::var(LLM_KEY_ENV).ok(),
            ))),
        }
    }

    fn executor_for(&self, doc: &ApiDocument) -> Box<dyn ApiExecutor> {
        match self.executor {
            ExecutorKind::Mock => Box::new(MockApiServer::for_document(doc, self.rules.clone())),
            ExecutorKind::Http => {
                Box::new(http_api_executor(self.api_base_url.as_deref().unwrap_or_default(), self.routes.clone()))
            }
        }
    }
}

fn parse_truth(text: &str) -> Result<ApiRequest, CliError> {
    match parse_request(text) {
        ParseOutcome::Parsed(r) => Ok(r),
        ParseOutcome::Unparseable { reason, .. } => Err(config_err(format!("ground truth {text:?} does not parse ({reason:?})"))),
    }
}

fn summary(r: &TaskResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task: {}", r.log.task_id);
    let _ = writeln!(out, "satisfied: {}", r.satisfied);
    let _ = writeln!(out, "llm_calls: {}", r.total_llm_calls);
    let _ = writeln!(out, "executor_calls: {}", r.executor_calls);
    let _ = writeln!(out, "static_events: {}", r.log.static_events.len());
    let _ = writeln!(out, "dynamic_records: {}", r.log.dynamic_records.len());
    if let Some(req) = &r.request {
        let _ = writeln!(out, "final_request: {}", serialize_request(req));
    }
    if let Some(resp) = &r.response {
        let _ = writeln!(out, "final_response: {} {}", resp.status, resp.body);
    }
    if let Some(e) = &r.log.error {
        let _ = writeln!(out, "error: {e}");
    }
    out
}

fn cmd_run(args: RunArgs) -> Result<i32, CliError> {
    let s = resolve(args.common)?;
    s.check_llm()?;
    let doc_path = s.doc.clone().ok_or_else(|| config_err("run needs --doc"))?;
    let prepared = PreparedDoc::tfidf(load_doc(&doc_path)?, s.pipeline.chunk_threshold)?;
    let gw = Gateways::new(&s)?;
    let llm = gw.llm_for(&args.task_id).map_err(|e| config_err(e.to_string()))?;
    let executor = gw.executor_for(&prepared.doc);
    let judge = match &args.ground_truth {
        Some(t) => ExactMatchJudge { rules: s.pipeline.rules(), ..ExactMatchJudge::with_truth(parse_truth(t)?) },
        None => ExactMatchJudge { rules: s.pipeline.rules(), ..Default::default() },
    };
    let outcome = run_prepared_task(&args.task_id, &args.instruction, &prepared, &llm, &executor, &judge, &s.pipeline);
    let (result, error) = match outcome {
        Ok(r) => (r, None),
        Err(fail) => {
            let r = TaskResult {
                satisfied: false,
                request: fail.log.final_request.clone(),
                response: fail.log.final_response.clone(),
                total_llm_calls: fail.log.llm_calls,
                executor_calls: fail.executor_calls,
                truth_sequence: None,
                log: fail.log,
            };
            (r, Some(fail.error))
        }
    };
    print!("{}", summary(&result));
    if let Some(dir) = &s.log_dir {
        write_logs(dir, std::slice::from_ref(&result), &now_timestamp())?;
        println!("log: {}", dir.join(autofeedback::orchestrator::log_file_name(&args.task_id)).display());
    }
    match error {
        Some(e) => Err(e.into()),
        None if result.satisfied => Ok(EXIT_OK),
        None => Ok(EXIT_UNSATISFIED),
    }
}

/// Documents referenced by a dataset, loaded once each. Relative paths are
/// taken from the dataset's directory.
fn bind_documents(
    records: &[DatasetRecord],
    dataset: &Path,
    default_doc: Option<&Path>,
    chunk_threshold: f64,
) -> Result<(Vec<PreparedDoc>, Vec<usize>), CliError> {
    let base = dataset.parent().unwrap_or(Path::new("."));
    let mut paths: Vec<PathBuf> = Vec::new();
    let mut binding = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let path = match (&r.doc, default_doc) {
            (Some(p), _) => base.join(p),
            (None, Some(d)) => d.to_path_buf(),
            (None, None) => return Err(config_err(format!("dataset record {} ({}) names no doc and --doc is unset", i + 1, r.id))),
        };
        let idx = match paths.iter().position(|p| p == &path) {
            Some(idx) => idx,
            None => {
                paths.push(path);
                paths.len() - 1
            }
        };
        binding.push(idx);
    }
    let docs = paths
        .iter()
        .map(|p| Ok(PreparedDoc::tfidf(load_doc(p)?, chunk_threshold)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((docs, binding))
}

fn cmd_bench(args: BenchArgs) -> Result<i32, CliError> {
    let s = resolve(args.common)?;
    s.check_llm()?;
    let records = load_dataset(&args.dataset)?;
    let (docs, binding) = bind_documents(&records, &args.dataset, s.doc.as_deref(), s.pipeline.chunk_threshold)?;
    let tasks = records
        .iter()
        .zip(binding)
        .map(|(r, doc)| {
            Ok(BenchTask {
                id: r.id.clone(),
                instruction: r.instruction.clone(),
                truth: r.truth_sequence().map_err(config_err)?,
                doc,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let gw = Gateways::new(&s)?;
    let factory = |task: &BenchTask, doc: &ApiDocument| -> Result<TaskGateways, GatewayError> {
        Ok(TaskGateways { llm: gw.llm_for(&task.id)?, executor: gw.executor_for(doc), judge: None })
    };
    let opts = BenchOptions { parallelism: Parallelism::from_jobs(s.jobs), log_dir: s.log_dir.clone(), fixed_timestamp: None };
    let outcome = run_benchmark(&tasks, &docs, &factory, &s.pipeline, &opts)?;
    print!("{}", outcome.report.to_table());
    let report_path = args.report.or_else(|| s.log_dir.as_ref().map(|d| d.join("report.json")));
    if let Some(path) = report_path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| config_err(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, outcome.report.to_json() + "\n")
            .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))?;
        println!("report: {}", path.display());
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ClassificationReport {
    total: usize,
    counts: BTreeMap<ErrorType, usize>,
    error_percentages: BTreeMap<ErrorType, f64>,
}

fn cmd_classify(args: ClassifyArgs) -> Result<i32, CliError> {
    let records = load_dataset(&args.dataset)?;
    if let Some(r) = records.iter().find(|r| r.ground_truth.is_none()) {
        return Err(config_err(format!("record {} has no ground_truth", r.id)));
    }
    let needs_model = records.iter().any(|r| r.output.is_none());
    let s = resolve(args.common)?;
    if needs_model {
        s.check_llm()?;
    }
    let (docs, binding) = bind_documents(&records, &args.dataset, s.doc.as_deref(), s.pipeline.chunk_threshold)?;
    let gw = if needs_model { Some(Gateways::new(&s)?) } else { None };

    let scan = ScanConfig { k: s.pipeline.k, threshold: s.pipeline.threshold, rules: s.pipeline.rules() };
    let mut by_doc: Vec<Vec<(ParseOutcome, ApiRequest)>> = (0..docs.len()).map(|_| Vec::new()).collect();
    for (r, &d) in records.iter().zip(&binding) {
        let truth = r.truth_sequence().map_err(config_err)?.and_then(|t| t.last().cloned()).expect("checked above");
        let output = match (&r.output, &gw) {
            (Some(o), _) => o.clone(),
            (None, Some(gw)) => {
                let llm = gw.llm_for(&r.id).map_err(|e| config_err(e.to_string()))?;
                llm.complete(&initial_messages(&docs[d].doc, &r.instruction))
                    .map_err(|e| CliError::Transport(e.to_string()))?
                    .text
            }
            (None, None) => unreachable!(),
        };
        by_doc[d].push((parse_llm_output(&output), truth));
    }
    let mut labels = Vec::with_capacity(records.len());
    for (prepared, items) in docs.iter().zip(&by_doc) {
        for label in classify_batch(items, &prepared.doc, &prepared.model, &scan, Parallelism::from_jobs(s.jobs)) {
            labels.push(label.map_err(|e| config_err(e.to_string()))?);
        }
    }
    let hist = error_distribution(&labels);
    let report = ClassificationReport {
        total: hist.total(),
        error_percentages: hist.error_percentages(),
        counts: hist.0.clone(),
    };
    println!("{:<10}  {:>6}", "class", "count");
    for (t, n) in &report.counts {
        println!("{:<10}  {:>6}", t.as_str(), n);
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Default)]
struct SessionDigest {
    task_id: String,
    satisfied: Option<bool>,
    lines: Vec<String>,
}

fn digest_event(v: &serde_json::Value) -> Option<String> {
    let s = |k: &str| v.get(k).and_then(|x| x.as_str()).unwrap_or("");
    match s("phase") {
        "static" => {
            let feedback = s("feedback").lines().nth(1).unwrap_or("");
            Some(format!("  static #{} {} {} {}", v["iteration"], s("error_type"), s("action"), feedback).trim_end().to_string())
        }
        "dynamic" => {
            let obs = &v["observation"];
            Some(format!(
                "  dynamic #{} {} -> status {} | retrieved: {} | thought: {} | next: {}",
                v["iteration"],
                s("action"),
                obs["status"],
                obs["error_message"].as_str().unwrap_or("none"),
                s("thought"),
                s("new_action")
            ))
        }
        "final" => Some(format!(
            "  final satisfied={} llm_calls={} request={}{}",
            v["satisfied"],
            v["llm_calls"],
            v["final_request"].as_str().unwrap_or("none"),
            v["error"].as_str().map(|e| format!(" error={e}")).unwrap_or_default()
        )),
        _ => None,
    }
}

fn cmd_report(args: ReportArgs) -> Result<i32, CliError> {
    let entries = fs::read_dir(&args.log_dir)
        .map_err(|e| config_err(format!("cannot read log directory {}: {e}", args.log_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut sessions: Vec<SessionDigest> = Vec::new();
    for path in &files {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("warning: {}:{}: skipped unreadable line ({e})", path.display(), i + 1);
                    continue;
                }
            };
            let Some(id) = v.get("task_id").and_then(|x| x.as_str()) else {
                eprintln!("warning: {}:{}: skipped line without task_id", path.display(), i + 1);
                continue;
            };
            let pos = match sessions.iter().position(|s| s.task_id == id) {
                Some(p) => p,
                None => {
                    sessions.push(SessionDigest { task_id: id.into(), ..Default::default() });
                    sessions.len() - 1
                }
            };
            let sess = &mut sessions[pos];
            if v["phase"] == "final" {
                sess.satisfied = v["satisfied"].as_bool();
            }
            if let Some(l) = digest_event(&v) {
                sess.lines.push(l);
            }
        }
    }
    if sessions.is_empty() {
        println!("no sessions in {}", args.log_dir.display());
        return Ok(EXIT_OK);
    }
    // Unsatisfied (or unfinished) sessions first; stable within each group.
    sessions.sort_by_key(|s| s.satisfied == Some(true));
    for s in &sessions {
        let status = match s.satisfied {
            Some(true) => "satisfied",
            Some(false) => "UNSATISFIED",
            None => "INCOMPLETE",
        };
        println!("{} [{status}]", s.task_id);
        for l in &s.lines {
            println!("{l}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_fixtures(args: FixturesArgs) -> Result<i32, CliError> {
    let io = |p: &Path, e: std::io::Error| config_err(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(&args.out).map_err(|e| io(&args.out, e))?;
    let bench = fixtures::bench_fixture();
    let mut dataset = String::new();
    for r in &bench.records {
        dataset.push_str(&serde_json::to_string(r).expect("record serializes"));
        dataset.push('\n');
    }
    let files = [
        ("doc.json", fixtures::fixture_document().to_json()),
        ("dataset.jsonl", dataset),
        ("script.json", serde_json::to_string_pretty(&bench.script).expect("script serializes")),
        ("rules.json", serde_json::to_string_pretty(&bench.rules).expect("rules serialize")),
    ];
    for (name, text) in files {
        let p = args.out.join(name);
        fs::write(&p, text).map_err(|e| io(&p, e))?;
        println!("{}", p.display());
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Report(a) => cmd_report(a),
        Command::Fixtures(a) => cmd_fixtures(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_values() {
        let flags = CommonArgs { max_static: Some(5), ..Default::default() };
        let file: CommonArgs = serde_json::from_str(r#"{"max-static": 1, "max-dynamic": 4, "jobs": 3}"#).unwrap();
        let merged = flags.over(file);
        assert_eq!((merged.max_static, merged.max_dynamic, merged.jobs), (Some(5), Some(4), Some(3)));
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(serde_json::from_str::<CommonArgs>(r#"{"max_static": 1}"#).is_err());
    }

    #[test]
    fn resolve_fills_defaults_and_validates() {
        let s = resolve(CommonArgs::default()).unwrap();
        assert_eq!(s.pipeline, PipelineConfig::default());
        assert_eq!((s.llm, s.executor, s.jobs), (LlmKind::Scripted, ExecutorKind::Mock, 1));
        assert!(s.check_llm().is_err());
        let bad = resolve(CommonArgs { k: Some(0), ..Default::default() }).unwrap_err();
        assert_eq!(bad.exit_code(), EXIT_CONFIG);
        let http = resolve(CommonArgs { executor: Some(ExecutorKind::Http), ..Default::default() });
        assert!(http.is_err());
    }

    #[test]
    fn script_file_shapes() {
        assert!(matches!(serde_json::from_str::<ScriptFile>(r#"["a", "b"]"#).unwrap(), ScriptFile::Shared(v) if v.len() == 2));
        assert!(matches!(serde_json::from_str::<ScriptFile>(r#"{"t": ["a"]}"#).unwrap(), ScriptFile::PerTask(m) if m["t"] == ["a"]));
    }

    #[test]
    fn digest_lines() {
        let stat = serde_json::json!({"phase": "static", "iteration": 0, "error_type": "E1", "action": "x", "feedback": "a\nb"});
        assert_eq!(digest_event(&stat).unwrap(), "  static #0 E1 x b");
        let fin = serde_json::json!({"phase": "final", "satisfied": false, "llm_calls": 2, "final_request": null, "error": "boom"});
        assert_eq!(digest_event(&fin).unwrap(), "  final satisfied=false llm_calls=2 request=none error=boom");
        assert!(digest_event(&serde_json::json!({"phase": "other"})).is_none());
    }

    #[test]
    fn help_exits_zero_and_bad_args_exit_two() {
        assert_eq!(run(["autofeedback", "--version"]), EXIT_OK);
        assert_eq!(run(["autofeedback", "run"]), EXIT_CONFIG);
        assert_eq!(run(["autofeedback", "nope"]), EXIT_CONFIG);
    }

    #[test]
    fn transport_errors_map_to_three() {
        assert_eq!(CliError::Transport("down".into()).exit_code(), EXIT_TRANSPORT);
        let e: CliError = OrchestratorError::EmptyDataset.into();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }
}
