//! Feedback-driven repair of LLM-generated API requests.
//!
//! A generated request is first checked locally against the API
//! documentation ([`static_scanner`]); errors are turned into corrective
//! prompts. Once it is clean it is executed, and failed responses are
//! explained with documentation excerpts ([`dynamic_analyzer`]).
//! [`orchestrator`] wires both loops together.

pub mod doc_model;
pub mod dynamic_analyzer;
pub mod fixtures;
pub mod gateways;
pub mod metrics;
pub mod orchestrator;
pub mod parallel;
pub mod request_codec;
pub mod retrieval;
pub mod static_scanner;

pub use doc_model::{ApiDocument, ApiSpec, ExceptionSpec, ParamSpec, SchemaError, ValueType};
pub use dynamic_analyzer::{run_dynamic_loop, ExactMatchJudge, FeedbackRecord, LlmJudge, RequirementJudge};
pub use gateways::{ApiExecutor, ApiResponse, ChatMessage, LlmClient, MockApiServer, ScriptedLlm};
pub use metrics::BenchmarkReport;
pub use orchestrator::{run_benchmark, run_task, PipelineConfig, SessionLog, TaskResult};
pub use parallel::Parallelism;
pub use request_codec::{parse_llm_output, parse_request, serialize_request, ApiRequest, ParseOutcome, Value};
pub use retrieval::{SimilarityModel, TfIdfModel};
pub use static_scanner::{detect, DetectionFinding, ErrorType};
