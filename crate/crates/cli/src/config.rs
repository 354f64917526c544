//! Run configuration: a YAML document plus flag and environment overrides,
//! in that precedence order (file < flags < env).

use colloquy::agents::{AgentConfig, ChatProvider, LoopConfig, PromptTemplates, ScriptedPlaybook, SharedChat};
use colloquy::corpus::{load_topic_ontology, LabelSet, TopicOntology};
use colloquy::embed::{Embedder, HashEmbedder};
use colloquy::extract::Lexicon;
use colloquy::gateway::{BackendConfig, ChatBackend, Decoding, Gateway, MockOutcome, RetryConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub generator: Option<BackendSpec>,
    pub judge: Option<BackendSpec>,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    pub ontology: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub exemplars: Vec<PathBuf>,
    pub prompts: Option<PathBuf>,
    /// Newline-delimited diagnosis label universe; absent means any label id
    /// is accepted.
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub loops: LoopSpec,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub strict_intents: bool,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Http {
        endpoint: String,
        model: String,
        token: Option<String>,
        max_in_flight: Option<usize>,
        max_attempts: Option<u32>,
        backoff_ms: Option<u64>,
        chat_path: Option<String>,
        timeout_s: Option<u64>,
    },
    /// Scripted replies from a JSONL file: `{"reply": "..."}` or
    /// `{"error": "rate_limit"|"timeout"|"server"|"bad_request"}` per line.
    Mock { script: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSpec {
    Http {
        endpoint: String,
        token: Option<String>,
        max_in_flight: Option<usize>,
        max_attempts: Option<u32>,
        embed_path: Option<String>,
    },
    /// Deterministic hash-seeded unit vectors (offline default).
    Hash { dim: Option<usize> },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self::Hash { dim: Some(64) }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub plan: Option<u32>,
    pub generate: Option<u32>,
    pub refine: Option<u32>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_yaml::from_str(&raw)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        config.validate_paths()?;
        Ok(config)
    }

    fn validate_paths(&self) -> Result<(), CliError> {
        let mut paths: Vec<&PathBuf> = Vec::new();
        paths.extend(self.ontology.iter());
        paths.extend(self.lexicon.iter());
        paths.extend(self.rules.iter());
        paths.extend(self.exemplars.iter());
        paths.extend(self.prompts.iter());
        paths.extend(self.labels.iter());
        if let Some(BackendSpec::Mock { script }) = &self.generator {
            paths.push(script);
        }
        if let Some(BackendSpec::Mock { script }) = &self.judge {
            paths.push(script);
        }
        for path in paths {
            if !path.exists() {
                return Err(CliError::usage(format!("configured path does not exist: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn label_set(&self) -> Result<LabelSet, CliError> {
        match &self.labels {
            None => Ok(LabelSet::Open),
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read labels {}: {e}", path.display())))?;
                Ok(LabelSet::closed(raw.lines().map(str::trim).filter(|l| !l.is_empty())))
            }
        }
    }

    pub fn lexicon(&self) -> Result<Lexicon, CliError> {
        match &self.lexicon {
            None => Ok(Lexicon::starter()),
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read lexicon {}: {e}", path.display())))?;
                Lexicon::from_tsv(&raw).map_err(|e| CliError::usage(format!("invalid lexicon {}: {e}", path.display())))
            }
        }
    }

    pub fn ontology(&self) -> Result<TopicOntology, CliError> {
        match &self.ontology {
            None => Ok(TopicOntology::default_ems()),
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read ontology {}: {e}", path.display())))?;
                load_topic_ontology(&raw).map_err(|e| CliError::usage(format!("invalid ontology {}: {e}", path.display())))
            }
        }
    }

    pub fn agent_config(&self) -> Result<AgentConfig, CliError> {
        let mut config = AgentConfig::default();
        if let Some(dir) = &self.prompts {
            config.templates = PromptTemplates::from_dir(dir)
                .map_err(|e| CliError::usage(format!("invalid prompt templates: {e}")))?;
        }
        if let Some(path) = &self.rules {
            config.rules = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read rules {}: {e}", path.display())))?;
        }
        if !self.exemplars.is_empty() {
            config.exemplars = self
                .exemplars
                .iter()
                .map(|p| {
                    std::fs::read_to_string(p)
                        .map_err(|e| CliError::usage(format!("cannot read exemplar {}: {e}", p.display())))
                })
                .collect::<Result<_, _>>()?;
        }
        let defaults = LoopConfig::default();
        config.loop_config = LoopConfig {
            max_plan_iterations: self.loops.plan.unwrap_or(defaults.max_plan_iterations),
            max_generate_iterations: self.loops.generate.unwrap_or(defaults.max_generate_iterations),
            max_refine_iterations: self.loops.refine.unwrap_or(defaults.max_refine_iterations),
        };
        config.strict_intents = self.strict_intents;
        if let Some(BackendSpec::Http { model, .. }) = &self.generator {
            config.model_id = model.clone();
        }
        config.decoding = Decoding {
            temperature: self.temperature.unwrap_or(0.0),
            max_tokens: self.max_tokens.unwrap_or(4096),
        };
        Ok(config)
    }

    pub fn generator_provider(&self) -> Result<Box<dyn ChatProvider>, CliError> {
        let spec = self
            .generator
            .as_ref()
            .ok_or_else(|| CliError::usage("config must define a `generator` backend for this command"))?;
        chat_provider(spec, "COLLOQUY_GENERATOR")
    }

    /// Per-item judge backends: HTTP shares one gateway; a mock script hands
    /// item `i` its `i % len`-th entry so parallel judging stays
    /// deterministic.
    pub fn judge_provider(&self) -> Result<JudgeProvider, CliError> {
        let spec = self
            .judge
            .as_ref()
            .ok_or_else(|| CliError::usage("config must define a `judge` backend for judge metrics"))?;
        match spec {
            BackendSpec::Http { .. } => {
                let (backend_cfg, model) = http_backend(spec, "COLLOQUY_JUDGE")?;
                let gateway = Gateway::http(&backend_cfg).map_err(|e| CliError::usage(e.to_string()))?;
                Ok(JudgeProvider::Shared {
                    backend: Arc::new(gateway),
                    model,
                })
            }
            BackendSpec::Mock { script } => Ok(JudgeProvider::Mock {
                outcomes: load_mock_script(script)?,
            }),
        }
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, CliError> {
        match &self.embedder {
            EmbedderSpec::Hash { dim } => Ok(Arc::new(HashEmbedder { dim: dim.unwrap_or(64) })),
            EmbedderSpec::Http { endpoint, token, max_in_flight, max_attempts, embed_path } => {
                let mut cfg = BackendConfig::new(endpoint.clone());
                cfg.auth_token = token.clone();
                if let Some(v) = max_in_flight {
                    cfg.max_in_flight = *v;
                }
                if let Some(v) = max_attempts {
                    cfg.retry.max_attempts = *v;
                }
                if let Some(p) = embed_path {
                    cfg.embed_path = p.clone();
                }
                cfg.apply_env_overrides("COLLOQUY_EMBEDDER");
                let gateway = Gateway::http(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
                Ok(Arc::new(gateway))
            }
        }
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn workers(&self, flag: Option<usize>) -> usize {
        flag.or(self.workers).unwrap_or(2).max(1)
    }
}

fn http_backend(spec: &BackendSpec, env_prefix: &str) -> Result<(BackendConfig, String), CliError> {
    match spec {
        BackendSpec::Http {
            endpoint,
            model,
            token,
            max_in_flight,
            max_attempts,
            backoff_ms,
            chat_path,
            timeout_s,
        } => {
            let mut cfg = BackendConfig::new(endpoint.clone());
            cfg.auth_token = token.clone();
            if let Some(v) = max_in_flight {
                cfg.max_in_flight = *v;
            }
            let defaults = RetryConfig::default();
            cfg.retry = RetryConfig {
                max_attempts: max_attempts.unwrap_or(defaults.max_attempts),
                base_backoff: backoff_ms.map(Duration::from_millis).unwrap_or(defaults.base_backoff),
            };
            if let Some(p) = chat_path {
                cfg.chat_path = p.clone();
            }
            if let Some(s) = timeout_s {
                cfg.request_timeout = Duration::from_secs(*s);
            }
            cfg.apply_env_overrides(env_prefix);
            Ok((cfg, model.clone()))
        }
        BackendSpec::Mock { .. } => unreachable!("http_backend called on a mock spec"),
    }
}

fn chat_provider(spec: &BackendSpec, env_prefix: &str) -> Result<Box<dyn ChatProvider>, CliError> {
    match spec {
        BackendSpec::Http { .. } => {
            let (cfg, _model) = http_backend(spec, env_prefix)?;
            let gateway = Gateway::http(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
            Ok(Box::new(SharedChat(Arc::new(gateway))))
        }
        BackendSpec::Mock { script } => {
            let outcomes = load_mock_script(script)?;
            Ok(Box::new(ScriptedPlaybook::new(outcomes)))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockLine {
    #[serde(default)]
    reply: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

pub fn load_mock_script(path: &Path) -> Result<Vec<MockOutcome>, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read mock script {}: {e}", path.display())))?;
    let mut outcomes = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MockLine = serde_json::from_str(line)
            .map_err(|e| CliError::usage(format!("mock script {} line {}: {e}", path.display(), idx + 1)))?;
        let outcome = match (parsed.reply, parsed.error.as_deref()) {
            (Some(reply), None) => MockOutcome::Reply(reply),
            (None, Some("rate_limit")) => MockOutcome::RateLimit,
            (None, Some("timeout")) => MockOutcome::Timeout,
            (None, Some("server")) => MockOutcome::ServerError,
            (None, Some("bad_request")) => MockOutcome::BadRequest,
            _ => {
                return Err(CliError::usage(format!(
                    "mock script {} line {}: expected `reply` or a known `error`",
                    path.display(),
                    idx + 1
                )))
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Judge backend factory: one backend per judged item.
pub enum JudgeProvider {
    Shared { backend: Arc<dyn ChatBackend>, model: String },
    Mock { outcomes: Vec<MockOutcome> },
}

impl JudgeProvider {
    pub fn model_id(&self) -> String {
        match self {
            Self::Shared { model, .. } => model.clone(),
            Self::Mock { .. } => "mock".to_string(),
        }
    }

    pub fn backend_for_item(&self, index: usize) -> Arc<dyn ChatBackend> {
        match self {
            Self::Shared { backend, .. } => Arc::clone(backend),
            Self::Mock { outcomes } => {
                let script = if outcomes.is_empty() {
                    Vec::new()
                } else {
                    vec![outcomes[index % outcomes.len()].clone()]
                };
                Arc::new(Gateway::new(
                    colloquy::gateway::ScriptedChat::new(script),
                    RetryConfig { max_attempts: 1, base_backoff: Duration::ZERO },
                    1,
                ))
            }
        }
    }
}
