use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::{ChatBackend, FailureKind, LlmError, MockBackend, OpenAiBackend, RetryPolicy};

/// Backend section of a TOML config file, selected by `kind`.
///
/// ```toml
/// kind = "mock"
/// responses_dir = "canned"   # optional, relative to this file
/// rules = true
/// ```
///
/// ```toml
/// kind = "openai"
/// endpoint = "https://api.example.com/v1"
/// model = "some-model"
/// api_key_env = "ARTIKIT_API_KEY"
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock(MockConfig),
    Openai(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    #[serde(default)]
    pub responses_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub rules: bool,
    #[serde(default)]
    pub fail_generation: Option<FailureKind>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn yes() -> bool {
    true
}
fn default_key_env() -> String {
    "ARTIKIT_API_KEY".into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_attempts() -> u32 {
    3
}
fn default_base_delay() -> u64 {
    1000
}
fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        toml::from_str(text).map_err(|e| LlmError::Config(e.to_string()))
    }

    /// Parse a file; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let BackendConfig::Mock(MockConfig { responses_dir: Some(dir), .. }) = &mut cfg {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Box<dyn ChatBackend>, LlmError> {
        match self {
            BackendConfig::Mock(m) => {
                let mut backend = MockBackend::canned_only().set_rules(m.rules);
                if let Some(dir) = &m.responses_dir {
                    backend = backend.load_dir(dir)?;
                }
                if let Some(kind) = m.fail_generation {
                    backend = backend.failing_generation(kind);
                }
                Ok(Box::new(backend))
            }
            BackendConfig::Openai(r) => {
                if !(r.timeout_secs > 0.0) {
                    return Err(LlmError::Config("timeout_secs must be positive".into()));
                }
                Ok(Box::new(OpenAiBackend::new(
                    &r.endpoint,
                    &r.model,
                    std::env::var(&r.api_key_env).ok(),
                    Duration::from_secs_f64(r.timeout_secs),
                    RetryPolicy { attempts: r.attempts, base_delay: Duration::from_millis(r.base_delay_ms) },
                    r.max_in_flight,
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_both_kinds() {
        let mock = BackendConfig::parse("kind = \"mock\"").unwrap();
        assert_eq!(mock, BackendConfig::Mock(MockConfig { responses_dir: None, rules: true, fail_generation: None }));
        let remote = BackendConfig::parse("kind = \"openai\"\nendpoint = \"http://x\"\nmodel = \"m\"").unwrap();
        let BackendConfig::Openai(r) = remote else { panic!() };
        assert_eq!((r.attempts, r.base_delay_ms, r.api_key_env.as_str()), (3, 1000, "ARTIKIT_API_KEY"));
        assert!(BackendConfig::parse("kind = \"other\"").is_err());
        assert!(BackendConfig::parse("kind = \"mock\"\nbogus = 1").is_err());
    }

    #[test]
    fn relative_dir_follows_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.toml");
        fs::write(&path, "kind = \"mock\"\nresponses_dir = \"canned\"\nfail_generation = \"timeout\"").unwrap();
        let BackendConfig::Mock(m) = BackendConfig::load(&path).unwrap() else { panic!() };
        assert_eq!(m.responses_dir, Some(dir.path().join("canned")));
        assert_eq!(m.fail_generation, Some(FailureKind::Timeout));
    }
}
