//! The execute / judge / explain / regenerate loop run after a request has
//! passed static scanning.
//!
//! Each failed response is paired with the documentation chunk closest to
//! it and fed back to the model as a ReAct observation together with every
//! earlier turn. The corrected request is executed again until the judge
//! accepts it or the iteration budget runs out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::ApiDocument;
use crate::gateways::{ApiExecutor, ApiResponse, ChatMessage, GatewayError, LlmClient, LlmReply};
use crate::request_codec::{
    parse_llm_output, serialize_request, ApiRequest, ParseOutcome, TypeRules, CLOSE_MARKER, OPEN_MARKER,
};
use crate::retrieval::{retrieve_error_message, ChunkIndex, RetrievalError, RetrievedMessage, SimilarityModel};
use crate::static_scanner::{detect, ErrorType, ScanConfig, ScanError};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge model failed: {0}")]
    Llm(#[from] GatewayError),
    #[error("judge reply is neither yes nor no: {0:?}")]
    Unclear(String),
}

/// Decides whether an API response satisfies the user's task.
pub trait RequirementJudge: Send + Sync {
    fn judge(&self, instruction: &str, request: &ApiRequest, response: &ApiResponse) -> Result<bool, JudgeError>;
}

impl<J: RequirementJudge + ?Sized> RequirementJudge for &J {
    fn judge(&self, instruction: &str, request: &ApiRequest, response: &ApiResponse) -> Result<bool, JudgeError> {
        (**self).judge(instruction, request, response)
    }
}

impl<J: RequirementJudge + ?Sized> RequirementJudge for Box<J> {
    fn judge(&self, instruction: &str, request: &ApiRequest, response: &ApiResponse) -> Result<bool, JudgeError> {
        (**self).judge(instruction, request, response)
    }
}

/// Same name, same keys, and pairwise equal values under `rules`.
pub fn requests_equivalent(a: &ApiRequest, b: &ApiRequest, rules: &TypeRules) -> bool {
    a.name == b.name
        && a.args.len() == b.args.len()
        && a.args.iter().all(|(k, v)| b.get(k).is_some_and(|w| rules.values_equal(v, w)))
}

/// Accepts a response whose status is in the success range and, when a
/// ground truth is set, whose request is equivalent to it.
#[derive(Debug, Clone)]
pub struct ExactMatchJudge {
    pub success: std::ops::RangeInclusive<u16>,
    pub truth: Option<ApiRequest>,
    pub rules: TypeRules,
}

impl Default for ExactMatchJudge {
    fn default() -> Self {
        ExactMatchJudge { success: 200..=299, truth: None, rules: TypeRules::default() }
    }
}

impl ExactMatchJudge {
    pub fn with_truth(truth: ApiRequest) -> Self {
        ExactMatchJudge { truth: Some(truth), ..Default::default() }
    }
}

impl RequirementJudge for ExactMatchJudge {
    fn judge(&self, _instruction: &str, request: &ApiRequest, response: &ApiResponse) -> Result<bool, JudgeError> {
        if !self.success.contains(&response.status) {
            return Ok(false);
        }
        Ok(self.truth.as_ref().is_none_or(|t| requests_equivalent(request, t, &self.rules)))
    }
}

/// Asks a model whether the response meets the instruction.
pub struct LlmJudge<L> {
    pub llm: L,
}

const JUDGE_SYSTEM: &str = "You evaluate whether an API call fulfilled a user's request. \
Answer with a single word: Yes or No.";

fn yes_no(reply: &LlmReply) -> Result<bool, JudgeError> {
    let first = reply
        .text
        .split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty())
        .map(str::to_ascii_lowercase);
    match first.as_deref() {
        Some("yes") => Ok(true),
        Some("no") => Ok(false),
        _ => Err(JudgeError::Unclear(reply.text.clone())),
    }
}

impl<L: LlmClient> LlmJudge<L> {
    /// Whether the executed sequence is as good as the reference sequence.
    pub fn judge_sequence(
        &self,
        instruction: &str,
        executed: &[ApiRequest],
        reference: &[ApiRequest],
    ) -> Result<bool, JudgeError> {
        let list = |rs: &[ApiRequest]| rs.iter().map(serialize_request).collect::<Vec<_>>().join("\n");
        let prompt = format!(
            "User instruction: {instruction}\nReference API calls:\n{}\nGenerated API calls:\n{}\n\
             Are the generated calls consistent with the reference, with no unnecessary calls?",
            list(reference),
            list(executed)
        );
        yes_no(&self.llm.complete(&[ChatMessage::system(JUDGE_SYSTEM), ChatMessage::user(prompt)])?)
    }
}

impl<L: LlmClient> RequirementJudge for LlmJudge<L> {
    fn judge(&self, instruction: &str, request: &ApiRequest, response: &ApiResponse) -> Result<bool, JudgeError> {
        let prompt = format!(
            "User instruction: {instruction}\nAPI call: {}\nAPI response (status {}): {}\n\
             Does the response meet the user's requirement?",
            serialize_request(request),
            response.status,
            response.body
        );
        yes_no(&self.llm.complete(&[ChatMessage::system(JUDGE_SYSTEM), ChatMessage::user(prompt)])?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub response: ApiResponse,
    pub error_message: Option<RetrievedMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub iteration: usize,
    pub action: ApiRequest,
    pub observation: Observation,
    pub thought: String,
    pub new_action: ApiRequest,
    /// Why the model's correction was not used, if it was not.
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub llm_calls: usize,
    pub executor_calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CallStats {
    pub fn add_reply(&mut self, reply: &LlmReply) {
        self.llm_calls += 1;
        self.prompt_tokens += reply.prompt_tokens;
        self.completion_tokens += reply.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicOutcome {
    pub final_response: ApiResponse,
    pub final_request: ApiRequest,
    pub records: Vec<FeedbackRecord>,
    pub satisfied: bool,
    /// Every request sent to the executor, in order.
    pub executed: Vec<ApiRequest>,
    pub stats: CallStats,
}

#[derive(Debug, Error)]
pub enum DynamicError {
    #[error("API executor unavailable: {0}")]
    ExecutorUnavailable(GatewayError),
    #[error("model call failed: {0}")]
    Llm(GatewayError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

/// A loop that stopped on an error, with everything recorded up to then.
#[derive(Debug)]
pub struct DynamicFailure {
    pub error: DynamicError,
    pub records: Vec<FeedbackRecord>,
    pub executed: Vec<ApiRequest>,
    pub last_response: Option<ApiResponse>,
    pub stats: CallStats,
}

/// Everything the loop needs besides the request and the budget.
pub struct DynamicContext<'a> {
    pub instruction: &'a str,
    pub doc: &'a ApiDocument,
    pub index: &'a ChunkIndex,
    pub executor: &'a dyn ApiExecutor,
    pub llm: &'a dyn LlmClient,
    pub judge: &'a dyn RequirementJudge,
    pub model: &'a dyn SimilarityModel,
    /// Messages placed before the ReAct prompt (system preamble etc.).
    pub conversation: &'a [ChatMessage],
    /// When set, corrections are scanned statically and rejected on any
    /// finding.
    pub static_guard: Option<ScanConfig>,
}

pub const REASK_PROMPT: &str = "Your reply did not contain a parseable API request. \
Reply with \"Thought:\" and then exactly one API request between <<API>> and <</API>>.";

/// Renders the ReAct transcript: every past record, then the current
/// action and observation, then the reply instructions.
pub fn assemble_react_prompt(
    history: &[FeedbackRecord],
    action: &ApiRequest,
    observation: &Observation,
) -> String {
    let mut out = String::from(
        "The API request was executed but the response does not meet the requirement. \
         Use the observations and the documentation excerpts to correct it.\n",
    );
    for rec in history {
        push_turn(&mut out, &rec.action, &rec.observation);
        out.push_str("Thought: ");
        out.push_str(&rec.thought);
        out.push('\n');
    }
    push_turn(&mut out, action, observation);
    out.push_str(&format!(
        "Reply with \"Thought:\" followed by your reasoning about the error, then the corrected API request \
         between {OPEN_MARKER} and {CLOSE_MARKER}."
    ));
    out
}

fn push_turn(out: &mut String, action: &ApiRequest, obs: &Observation) {
    out.push_str("Action: ");
    out.push_str(&serialize_request(action));
    out.push('\n');
    out.push_str(&format!(
        "Observation: status={} body={} error_message={}\n",
        obs.response.status,
        obs.response.body,
        obs.error_message.as_ref().map(|m| m.text.as_str()).unwrap_or("none")
    ));
}

/// The reasoning part of a ReAct reply: text after `Thought:` up to the
/// request block, or everything before the block.
pub fn extract_thought(reply: &str) -> String {
    let body = match reply.find("Thought:") {
        Some(i) => &reply[i + "Thought:".len()..],
        None => reply,
    };
    let end = [body.find(OPEN_MARKER), body.find("Action:")].into_iter().flatten().min().unwrap_or(body.len());
    body[..end].trim().to_string()
}

/// The query used to find the documentation chunk explaining a response.
pub fn error_query(request: &ApiRequest, response: &ApiResponse) -> String {
    format!("{} {}", serialize_request(request), response.body)
}

struct LoopState {
    records: Vec<FeedbackRecord>,
    executed: Vec<ApiRequest>,
    last_response: Option<ApiResponse>,
    stats: CallStats,
}

impl LoopState {
    fn fail(self, error: DynamicError) -> DynamicFailure {
        DynamicFailure {
            error,
            records: self.records,
            executed: self.executed,
            last_response: self.last_response,
            stats: self.stats,
        }
    }
}

/// Runs the loop for at most `n_max` corrections. The executor is called at
/// most `n_max + 1` times and the model at most `2 * n_max` times (one
/// re-ask per iteration for an unparseable correction).
pub fn run_dynamic_loop(
    request: ApiRequest,
    ctx: &DynamicContext<'_>,
    n_max: usize,
) -> Result<DynamicOutcome, DynamicFailure> {
    let mut st = LoopState { records: Vec::new(), executed: Vec::new(), last_response: None, stats: CallStats::default() };
    match drive(request, ctx, n_max, &mut st) {
        Ok((final_request, final_response, satisfied)) => Ok(DynamicOutcome {
            final_response,
            final_request,
            records: st.records,
            satisfied,
            executed: st.executed,
            stats: st.stats,
        }),
        Err(e) => Err(st.fail(e)),
    }
}

fn execute(ctx: &DynamicContext<'_>, req: &ApiRequest, st: &mut LoopState) -> Result<ApiResponse, DynamicError> {
    st.stats.executor_calls += 1;
    st.executed.push(req.clone());
    let resp = ctx.executor.execute(req).map_err(DynamicError::ExecutorUnavailable)?;
    st.last_response = Some(resp.clone());
    Ok(resp)
}

fn ask(ctx: &DynamicContext<'_>, messages: &[ChatMessage], st: &mut LoopState) -> Result<String, DynamicError> {
    let reply = ctx.llm.complete(messages).map_err(DynamicError::Llm)?;
    st.stats.add_reply(&reply);
    Ok(reply.text)
}

fn drive(
    mut request: ApiRequest,
    ctx: &DynamicContext<'_>,
    n_max: usize,
    st: &mut LoopState,
) -> Result<(ApiRequest, ApiResponse, bool), DynamicError> {
    let mut response = execute(ctx, &request, st)?;
    let mut satisfied = ctx.judge.judge(ctx.instruction, &request, &response)?;
    let mut iteration = 0;
    while !satisfied && iteration < n_max {
        let error_message =
            retrieve_error_message(&request.name, &error_query(&request, &response), ctx.index, ctx.model)?;
        let observation = Observation { response: response.clone(), error_message };
        let prompt = assemble_react_prompt(&st.records, &request, &observation);

        let mut messages = ctx.conversation.to_vec();
        messages.push(ChatMessage::user(prompt));
        let mut reply = ask(ctx, &messages, st)?;
        let mut outcome = parse_llm_output(&reply);
        if outcome.request().is_none() {
            messages.push(ChatMessage::assistant(reply.clone()));
            messages.push(ChatMessage::user(REASK_PROMPT));
            reply = ask(ctx, &messages, st)?;
            outcome = parse_llm_output(&reply);
        }

        let (accepted, rejected) = match outcome {
            ParseOutcome::Unparseable { reason, .. } => (None, Some(format!("unparseable correction ({reason:?})"))),
            ParseOutcome::Parsed(candidate) => match &ctx.static_guard {
                Some(cfg) => {
                    let finding = detect(&ParseOutcome::Parsed(candidate.clone()), ctx.instruction, ctx.doc, ctx.model, cfg)?;
                    if finding.error_type == ErrorType::NONE {
                        (Some(candidate), None)
                    } else {
                        (None, Some(format!("static error {} in correction", finding.error_type)))
                    }
                }
                None => (Some(candidate), None),
            },
        };

        st.records.push(FeedbackRecord {
            iteration,
            action: request.clone(),
            observation,
            thought: extract_thought(&reply),
            new_action: accepted.clone().unwrap_or_else(|| request.clone()),
            rejected,
        });
        iteration += 1;

        if let Some(next) = accepted {
            request = next;
            response = execute(ctx, &request, st)?;
            satisfied = ctx.judge.judge(ctx.instruction, &request, &response)?;
        }
    }
    Ok((request, response, satisfied))
}
