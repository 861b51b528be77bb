//! Boundaries to the outside world: the chat model and the API server.
//!
//! Each boundary has an HTTP implementation and a deterministic in-process
//! double. The doubles make whole pipeline runs replayable.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::ApiDocument;
use crate::request_codec::{ApiRequest, Value};

pub mod http {
    use std::time::Duration;

    use thiserror::Error;

    #[derive(Debug, Error)]
    pub enum HttpError {
        #[error("transport error: {0}")]
        Transport(String),
        #[error("HTTP {status}: {body}")]
        Status { status: u16, body: String },
        #[error("protocol error: {0}")]
        Protocol(String),
    }

    /// Attempts with exponential backoff: `initial_backoff`, then doubled.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct RetryPolicy {
        pub attempts: u32,
        pub initial_backoff: Duration,
    }

    impl Default for RetryPolicy {
        fn default() -> Self {
            RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1) }
        }
    }

    impl RetryPolicy {
        pub fn backoff(&self, attempt: u32) -> Duration {
            self.initial_backoff.saturating_mul(1 << attempt.min(16))
        }
    }

    fn retryable(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }

    /// Sends the request built by `build` until it gets a non-retryable
    /// status or runs out of attempts. Returns the final status and body;
    /// only connection-level failures become errors.
    pub fn send_with_retry<F>(build: F, policy: &RetryPolicy) -> Result<(u16, String), HttpError>
    where
        F: Fn() -> reqwest::blocking::RequestBuilder,
    {
        let attempts = policy.attempts.max(1);
        let mut last: Result<(u16, String), HttpError> = Err(HttpError::Transport("no attempt made".into()));
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(policy.backoff(attempt - 1));
            }
            last = match build().send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.text().map_err(|e| HttpError::Transport(e.to_string()))?;
                    if !retryable(status) {
                        return Ok((status, body));
                    }
                    tracing::debug!(status, attempt, "retryable HTTP status");
                    Ok((status, body))
                }
                Err(e) => {
                    tracing::debug!(error = %e, attempt, "HTTP transport failure");
                    Err(HttpError::Transport(e.to_string()))
                }
            };
        }
        last
    }

    /// POSTs JSON and returns the body of a 2xx reply.
    pub fn post_json(
        client: &reqwest::blocking::Client,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        policy: &RetryPolicy,
    ) -> Result<String, HttpError> {
        let (status, text) = send_with_retry(
            || {
                let req = client.post(url).json(body);
                match bearer {
                    Some(key) => req.bearer_auth(key),
                    None => req,
                }
            },
            policy,
        )?;
        if retryable(status) {
            return Err(HttpError::Transport(format!(
                "HTTP {status} after {} attempts",
                policy.attempts.max(1)
            )));
        }
        if !(200..300).contains(&status) {
            return Err(HttpError::Status { status, body: text });
        }
        Ok(text)
    }
}

use http::{HttpError, RetryPolicy};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("scripted model needs at least one reply")]
    EmptyScript,
}

impl From<HttpError> for GatewayError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Transport(m) => GatewayError::Transport(m),
            HttpError::Status { status, body } => GatewayError::Protocol(format!("HTTP {status}: {body}")),
            HttpError::Protocol(m) => GatewayError::Protocol(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl LlmReply {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn prompt_whitespace_tokens(messages: &[ChatMessage]) -> u64 {
    messages.iter().map(|m| whitespace_tokens(&m.content)).sum()
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, GatewayError>;
}

impl<L: LlmClient + ?Sized> LlmClient for &L {
    fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, GatewayError> {
        (**self).complete(messages)
    }
}

impl<L: LlmClient + ?Sized> LlmClient for Box<L> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, GatewayError> {
        (**self).complete(messages)
    }
}

/// Chat-completions client for OpenAI-compatible servers.
pub struct HttpLlmClient {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

pub const LLM_KEY_ENV: &str = "AUTOFEEDBACK_LLM_KEY";

/// `base_url` may be the API root (`.../v1`) or the full
/// `/chat/completions` endpoint.
pub fn http_llm_client(base_url: &str, model_name: &str, api_key: Option<String>) -> HttpLlmClient {
    let trimmed = base_url.trim_end_matches('/');
    let url = if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    };
    HttpLlmClient {
        client: reqwest::blocking::Client::new(),
        url,
        model: model_name.to_string(),
        api_key,
        retry: RetryPolicy::default(),
    }
}

impl HttpLlmClient {
    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, GatewayError> {
        let body = serde_json::json!({ "model": self.model, "messages": messages });
        let text = http::post_json(&self.client, &self.url, self.api_key.as_deref(), &body, &self.retry)?;
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("response is not JSON: {e}")))?;
        let content = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?
            .to_string();
        let usage = &parsed["usage"];
        let prompt_tokens = usage["prompt_tokens"].as_u64().unwrap_or_else(|| prompt_whitespace_tokens(messages));
        let completion_tokens = usage["completion_tokens"].as_u64().unwrap_or_else(|| whitespace_tokens(&content));
        Ok(LlmReply { text: content, prompt_tokens, completion_tokens })
    }
}

/// Replays a fixed list of replies; the last one repeats once the script
/// runs out. Every received prompt is kept for inspection.
///
/// One instance is one session: do not share it between concurrent tasks.
#[derive(Debug)]
pub struct ScriptedLlm {
    script: Vec<String>,
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    next: usize,
    prompts: Vec<Vec<ChatMessage>>,
}

pub fn scripted_llm<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Result<ScriptedLlm, GatewayError> {
    ScriptedLlm::new(script)
}

impl ScriptedLlm {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Result<Self, GatewayError> {
        let script: Vec<String> = script.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(GatewayError::EmptyScript);
        }
        Ok(ScriptedLlm { script, state: Mutex::new(ScriptState::default()) })
    }

    /// A new session over the same script.
    pub fn fresh(&self) -> Self {
        ScriptedLlm { script: self.script.clone(), state: Mutex::new(ScriptState::default()) }
    }

    pub fn prompts(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("script lock").prompts.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("script lock").prompts.len()
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, GatewayError> {
        let mut state = self.state.lock().expect("script lock");
        let text = self.script[state.next.min(self.script.len() - 1)].clone();
        state.next += 1;
        state.prompts.push(messages.to_vec());
        Ok(LlmReply {
            prompt_tokens: prompt_whitespace_tokens(messages),
            completion_tokens: whitespace_tokens(&text),
            text,
        })
    }
}

/// The raw reply of an API server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    /// Byte-exact payload.
    pub body: String,
}

impl ApiResponse {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        ApiResponse { status, body: body.into() }
    }

    pub fn ok(body: impl Into<String>) -> Self {
        Self::new(200, body)
    }

    pub fn not_found() -> Self {
        Self::new(404, "unknown api")
    }
}

pub trait ApiExecutor: Send + Sync {
    fn execute(&self, req: &ApiRequest) -> Result<ApiResponse, GatewayError>;
}

impl<E: ApiExecutor + ?Sized> ApiExecutor for &E {
    fn execute(&self, req: &ApiRequest) -> Result<ApiResponse, GatewayError> {
        (**self).execute(req)
    }
}

impl<E: ApiExecutor + ?Sized> ApiExecutor for Box<E> {
    fn execute(&self, req: &ApiRequest) -> Result<ApiResponse, GatewayError> {
        (**self).execute(req)
    }
}

pub type Handler = Box<dyn Fn(&ApiRequest) -> ApiResponse + Send + Sync>;

/// In-process API server dispatching on the request name.
#[derive(Default)]
pub struct MockApiServer {
    routes: HashMap<String, Handler>,
    calls: AtomicUsize,
    log: Mutex<Vec<ApiRequest>>,
}

pub fn mock_api_server(routes: impl IntoIterator<Item = (String, Handler)>) -> MockApiServer {
    MockApiServer { routes: routes.into_iter().collect(), ..Default::default() }
}

impl MockApiServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route<F>(mut self, api_name: impl Into<String>, handler: F) -> Self
    where
        F: Fn(&ApiRequest) -> ApiResponse + Send + Sync + 'static,
    {
        self.routes.insert(api_name.into(), Box::new(handler));
        self
    }

    /// Every documented API answers 200 unless one of `rules` matches first.
    pub fn for_document(doc: &ApiDocument, rules: Vec<MockRule>) -> Self {
        let mut server = MockApiServer::new();
        for api in &doc.apis {
            let mine: Vec<MockRule> = rules.iter().filter(|r| r.api == api.name).cloned().collect();
            let name = api.name.clone();
            server = server.route(api.name.clone(), move |req| {
                mine.iter()
                    .find(|r| r.matches(req))
                    .map(|r| ApiResponse::new(r.status, r.body.clone()))
                    .unwrap_or_else(|| ApiResponse::ok(serde_json::json!({ "api": name, "result": "ok" }).to_string()))
            });
        }
        server
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn received(&self) -> Vec<ApiRequest> {
        self.log.lock().expect("mock log").clone()
    }
}

impl ApiExecutor for MockApiServer {
    fn execute(&self, req: &ApiRequest) -> Result<ApiResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("mock log").push(req.clone());
        Ok(match self.routes.get(&req.name) {
            Some(handler) => handler(req),
            None => ApiResponse::not_found(),
        })
    }
}

/// Declarative canned response: fires when every `when` argument equals the
/// request's value (compared as JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub api: String,
    #[serde(default)]
    pub when: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "default_status")]
    pub status: u16,
    pub body: String,
}

fn default_status() -> u16 {
    200
}

impl MockRule {
    pub fn matches(&self, req: &ApiRequest) -> bool {
        req.name == self.api
            && self.when.iter().all(|(k, want)| req.get(k).is_some_and(|v| &v.to_json() == want))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
}

/// Where an API lives on the server. `{param}` segments in `path` are
/// filled from the request and not repeated in the query or body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub method: HttpMethod,
    pub path: String,
}

pub struct HttpApiExecutor {
    client: reqwest::blocking::Client,
    base_url: String,
    routes: HashMap<String, RouteSpec>,
    retry: RetryPolicy,
}

pub fn http_api_executor(base_url: &str, route_map: HashMap<String, RouteSpec>) -> HttpApiExecutor {
    HttpApiExecutor {
        client: reqwest::blocking::Client::new(),
        base_url: base_url.trim_end_matches('/').to_string(),
        routes: route_map,
        retry: RetryPolicy::default(),
    }
}

impl HttpApiExecutor {
    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn fill_path(template: &str, req: &ApiRequest) -> (String, Vec<String>) {
        let mut path = template.to_string();
        let mut used = Vec::new();
        for (k, v) in &req.args {
            let slot = format!("{{{k}}}");
            if path.contains(&slot) {
                path = path.replace(&slot, &v.to_query_text());
                used.push(k.clone());
            }
        }
        (path, used)
    }
}

impl ApiExecutor for HttpApiExecutor {
    fn execute(&self, req: &ApiRequest) -> Result<ApiResponse, GatewayError> {
        let Some(route) = self.routes.get(&req.name) else {
            return Ok(ApiResponse::not_found());
        };
        let (path, used) = Self::fill_path(&route.path, req);
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let rest: Vec<&(String, Value)> = req.args.iter().filter(|(k, _)| !used.contains(k)).collect();
        let (status, body) = match route.method {
            HttpMethod::Get => {
                let query: Vec<(String, String)> = rest.iter().map(|(k, v)| (k.clone(), v.to_query_text())).collect();
                http::send_with_retry(|| self.client.get(&url).query(&query), &self.retry)?
            }
            HttpMethod::Post => {
                let json: serde_json::Map<String, serde_json::Value> =
                    rest.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                let json = serde_json::Value::Object(json);
                http::send_with_retry(|| self.client.post(&url).json(&json), &self.retry)?
            }
        };
        Ok(ApiResponse { status, body })
    }
}
