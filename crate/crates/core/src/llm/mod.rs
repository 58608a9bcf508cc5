//! Prompt assembly and chat-completion backends.
//!
//! Requests carry the rendered prompt text plus the feature vectors for each
//! geometry slot. Hosted models cannot take embeddings directly, so slots
//! appear in the text as markers (`<slot:global>`, `<slot:part:i>`) inside the
//! `<g_start>`/`<g_end>` and `<p_start>`/`<p_end>` boundaries.

mod config;
mod mock;
mod prompt;
mod remote;

use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::FeatureVector;

pub use config::{BackendConfig, MockConfig, RemoteConfig};
pub use mock::{FailureKind, MockBackend};
pub use prompt::{
    build_scene_id_prompt, build_urdf_prompt, slot_marker, PromptTemplate, SCENE_ID_SYSTEM, URDF_SYSTEM,
};
pub use remote::{OpenAiBackend, RetryPolicy};

pub const G_START: &str = "<g_start>";
pub const G_END: &str = "<g_end>";
pub const P_START: &str = "<p_start>";
pub const P_END: &str = "<p_end>";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("unauthorized")]
    Unauthorized,
    #[error("backend error: {0}")]
    BackendError(String),
    #[error("part files {found:?} do not match cloud parts {expected:?}")]
    OrderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("malformed scene: {0}")]
    MalformedScene(String),
    #[error("template {template} has no value for {{{{{placeholder}}}}}")]
    MissingPlaceholder { template: String, placeholder: String },
    #[error("feature encoding failed: {0}")]
    Encoding(String),
    #[error("backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum SlotKind {
    Global,
    Part(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenSlot {
    pub kind: SlotKind,
    pub feature: FeatureVector,
}

/// A part as described to the model: its file, link name, and bounding box
/// in the object frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartInfo {
    pub file: String,
    pub link: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl PartInfo {
    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|i| (self.min[i] + self.max[i]) / 2.0)
    }

    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.max[i] - self.min[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObjectInfo {
    pub asset_id: String,
    pub name: String,
    pub description: String,
}

/// Structured copy of what the prompt says, for rule-based backends.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum RequestTask {
    UrdfGeneration { object_name: String, parts: Vec<PartInfo> },
    SceneIdentification { objects: Vec<SceneObjectInfo> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub system: String,
    pub user: String,
    pub token_slots: Vec<TokenSlot>,
    pub max_output: usize,
    pub temperature: f64,
    pub task: RequestTask,
}

impl GenerationRequest {
    pub const DEFAULT_MAX_OUTPUT: usize = 4096;

    /// Lowercase hex SHA-256 of the request's JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Usage {
    pub input_tokens: usize,
    pub output_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: f64,
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Concurrent requests allowed; `None` means unlimited.
    fn max_in_flight(&self) -> Option<usize>;

    fn generate(&self, request: &GenerationRequest) -> Result<(String, Usage), LlmError>;
}

/// Run one request and record its wall-clock latency. An empty completion is
/// a backend error.
pub fn complete(backend: &dyn ChatBackend, request: &GenerationRequest) -> Result<BackendResponse, LlmError> {
    let start = Instant::now();
    let (text, usage) = backend.generate(request)?;
    if text.trim().is_empty() {
        return Err(LlmError::BackendError("empty completion".into()));
    }
    Ok(BackendResponse { text, usage, latency_ms: start.elapsed().as_secs_f64() * 1e3 })
}

/// Rough token count used where the backend reports none.
pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
