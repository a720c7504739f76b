//! TOML configuration shared by the server and the CLI.
//!
//! ```toml
//! store_dir = "triage-data"
//! bind = "127.0.0.1:8080"
//! backend = "http"
//!
//! [http]
//! endpoint = "https://llm.example.org/v1/chat/completions"
//! model = "gpt-4o"
//! api_key_env = "TRIAGE_LLM_API_KEY"
//!
//! [pipeline]
//! retries = 2
//! backoff = 500
//! ```
//!
//! The credential itself is never read from the file, only from the
//! environment variable named by `http.api_key_env`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use triage_core::pipeline::{HttpBackend, HttpBackendConfig, PromptTemplates};
use triage_core::{
    KeywordMap, LlmBackend, Pipeline, PipelineConfig, StubBackend, TriageStore, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "http" => Ok(Self::Http),
            _ => Err(format!("unknown backend `{s}` (expected stub or http)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stub => "stub",
            Self::Http => "http",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub bind: String,
    /// Directory of built UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub backend: BackendKind,
    /// Directory holding `system.txt`, `classification.txt` and
    /// `parsing.txt`. The built-in prompts are used when unset.
    pub prompts_dir: Option<PathBuf>,
    /// Rubric phrase file used by the stub backend.
    pub vocabulary: Option<PathBuf>,
    /// Reason-coding rules applied to new feedback.
    pub feedback_keywords: Option<PathBuf>,
    pub http: HttpBackendConfig,
    pub pipeline: PipelineConfig,
    pub bootstrap: BootstrapDefaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapDefaults {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapDefaults {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            seed: 1,
        }
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_dir: PathBuf::from("triage-data"),
            bind: "127.0.0.1:8080".into(),
            static_dir: None,
            backend: BackendKind::default(),
            prompts_dir: None,
            vocabulary: None,
            feedback_keywords: None,
            http: HttpBackendConfig::default(),
            pipeline: PipelineConfig::default(),
            bootstrap: BootstrapDefaults::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn templates(&self) -> anyhow::Result<PromptTemplates> {
        match &self.prompts_dir {
            Some(dir) => Ok(PromptTemplates::load_dir(dir)?),
            None => Ok(PromptTemplates::builtin()),
        }
    }

    pub fn open_store(&self) -> anyhow::Result<TriageStore> {
        let keywords = match &self.feedback_keywords {
            Some(path) => KeywordMap::load(path)?,
            None => KeywordMap::builtin().clone(),
        };
        TriageStore::open_with(&self.store_dir, keywords)
            .with_context(|| format!("cannot open store {}", self.store_dir.display()))
    }

    pub fn pipeline(&self, kind: BackendKind) -> anyhow::Result<Pipeline<Arc<dyn LlmBackend>>> {
        let templates = self.templates()?;
        let backend: Arc<dyn LlmBackend> = match kind {
            BackendKind::Stub => {
                let mut stub = StubBackend::new().with_templates(templates.clone());
                if let Some(path) = &self.vocabulary {
                    stub = stub.with_vocabulary(Vocabulary::load(path)?);
                }
                Arc::new(stub)
            }
            BackendKind::Http => Arc::new(HttpBackend::new(self.http.clone())),
        };
        Ok(Pipeline::with_config(backend, templates, self.pipeline))
    }
}
