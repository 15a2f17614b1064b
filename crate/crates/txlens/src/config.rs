//! Environment-driven configuration: model backend descriptors and the
//! operational knobs read from the process environment (or a `.env` file
//! loaded by the caller beforehand).

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::llm::{ModelBackend, RemoteBackend, ScriptError, ScriptedBackend};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bad backend descriptor {descriptor:?}: {reason}")]
    Descriptor { descriptor: String, reason: String },
    #[error("bad value for {var}: {reason}")]
    Value { var: String, reason: String },
    #[error(transparent)]
    Script(#[from] ScriptError),
}

/// A parsed model backend descriptor.
///
/// Two forms exist: `remote:<name>@<url>` for an OpenAI-style endpoint and
/// `scripted:<fixture-path>` for canned replies; a scripted model's id is
/// the fixture's file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Remote { name: String, url: String },
    Scripted { name: String, path: PathBuf },
}

impl BackendSpec {
    pub fn parse(descriptor: &str) -> Result<Self, ConfigError> {
        let bad = |reason: &str| ConfigError::Descriptor {
            descriptor: descriptor.to_string(),
            reason: reason.to_string(),
        };
        if let Some(rest) = descriptor.strip_prefix("remote:") {
            let (name, url) = rest
                .split_once('@')
                .ok_or_else(|| bad("expected remote:<name>@<url>"))?;
            if name.is_empty() {
                return Err(bad("model name is empty"));
            }
            url::Url::parse(url).map_err(|e| bad(&format!("invalid url: {e}")))?;
            return Ok(BackendSpec::Remote { name: name.to_string(), url: url.to_string() });
        }
        if let Some(path) = descriptor.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err(bad("fixture path is empty"));
            }
            let path = PathBuf::from(path);
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| bad("fixture path has no usable file stem"))?
                .to_string();
            return Ok(BackendSpec::Scripted { name, path });
        }
        Err(bad("unknown scheme, expected remote: or scripted:"))
    }

    pub fn name(&self) -> &str {
        match self {
            BackendSpec::Remote { name, .. } => name,
            BackendSpec::Scripted { name, .. } => name,
        }
    }
}

/// Snapshot of every environment variable the tool reads.
#[derive(Debug, Clone, Default)]
pub struct EnvConfig {
    /// Parsed `MODEL_1..MODEL_N` descriptors, stopping at the first gap.
    pub models: Vec<BackendSpec>,
    /// `MODEL_API_KEY_<i>` values keyed by the 1-based model index.
    pub model_api_keys: HashMap<usize, String>,
    pub prompt_section_budget: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub explorer_api_url: Option<String>,
    pub explorer_api_key: Option<String>,
    pub simulator_url: Option<String>,
    pub simulator_api_key: Option<String>,
}

impl EnvConfig {
    /// Reads the configuration from the process environment.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    /// Reads the configuration through an arbitrary lookup, which keeps
    /// tests free of process-global environment mutation.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let nonempty = |key: &str| lookup(key).filter(|v| !v.trim().is_empty());
        let parse_usize = |key: &str| -> Result<Option<usize>, ConfigError> {
            match nonempty(key) {
                None => Ok(None),
                Some(raw) => raw.trim().parse::<usize>().map(Some).map_err(|e| {
                    ConfigError::Value { var: key.to_string(), reason: e.to_string() }
                }),
            }
        };

        let mut models = Vec::new();
        let mut model_api_keys = HashMap::new();
        let mut index = 1;
        while let Some(descriptor) = nonempty(&format!("MODEL_{index}")) {
            models.push(BackendSpec::parse(&descriptor)?);
            if let Some(key) = nonempty(&format!("MODEL_API_KEY_{index}")) {
                model_api_keys.insert(index, key);
            }
            index += 1;
        }

        Ok(EnvConfig {
            models,
            model_api_keys,
            prompt_section_budget: parse_usize("PROMPT_SECTION_BUDGET")?,
            out_dir: nonempty("TXLENS_OUT_DIR").map(PathBuf::from),
            workers: parse_usize("TXLENS_WORKERS")?,
            explorer_api_url: nonempty("EXPLORER_API_URL"),
            explorer_api_key: nonempty("EXPLORER_API_KEY"),
            simulator_url: nonempty("SIMULATOR_URL"),
            simulator_api_key: nonempty("SIMULATOR_API_KEY"),
        })
    }
}

/// Instantiates backends from specs, wiring `MODEL_API_KEY_<i>` to the
/// matching remote backend. Model names must be unique.
pub fn build_backends(
    specs: &[BackendSpec],
    api_keys: &HashMap<usize, String>,
) -> Result<Vec<Box<dyn ModelBackend>>, ConfigError> {
    let mut seen = std::collections::HashSet::new();
    for spec in specs {
        if !seen.insert(spec.name()) {
            return Err(ConfigError::Descriptor {
                descriptor: spec.name().to_string(),
                reason: "duplicate model name".to_string(),
            });
        }
    }
    let mut backends: Vec<Box<dyn ModelBackend>> = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        match spec {
            BackendSpec::Remote { name, url } => {
                let key = api_keys.get(&(i + 1)).cloned();
                backends.push(Box::new(RemoteBackend::new(name, url, key)));
            }
            BackendSpec::Scripted { name, path } => {
                backends.push(Box::new(ScriptedBackend::from_file(name, path)?));
            }
        }
    }
    Ok(backends)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::BackendKind;
    use std::io::Write;

    #[test]
    fn remote_descriptor_parses_name_and_url() {
        let spec = BackendSpec::parse("remote:gpt-4o@https://api.example.com/v1/chat").unwrap();
        assert_eq!(
            spec,
            BackendSpec::Remote {
                name: "gpt-4o".to_string(),
                url: "https://api.example.com/v1/chat".to_string()
            }
        );
    }

    #[test]
    fn scripted_descriptor_takes_name_from_file_stem() {
        let spec = BackendSpec::parse("scripted:fixtures/scripted/analyst-a.json").unwrap();
        assert_eq!(spec.name(), "analyst-a");
    }

    #[test]
    fn bad_descriptors_are_rejected() {
        for descriptor in [
            "remote:no-url-here",
            "remote:@https://x.example",
            "remote:m1@not a url",
            "scripted:",
            "http://plain-url.example",
        ] {
            assert!(
                matches!(BackendSpec::parse(descriptor), Err(ConfigError::Descriptor { .. })),
                "{descriptor} should be rejected"
            );
        }
    }

    #[test]
    fn env_snapshot_reads_contiguous_models_and_knobs() {
        let vars: HashMap<&str, &str> = HashMap::from([
            ("MODEL_1", "scripted:a.json"),
            ("MODEL_2", "remote:gpt@https://api.example.com/v1"),
            ("MODEL_API_KEY_2", "sk-test"),
            ("MODEL_4", "scripted:ignored-after-gap.json"),
            ("PROMPT_SECTION_BUDGET", "4000"),
            ("TXLENS_OUT_DIR", "/tmp/reports"),
            ("TXLENS_WORKERS", "2"),
            ("EXPLORER_API_URL", "https://explorer.example.com/api"),
        ]);
        let cfg = EnvConfig::from_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.models.len(), 2, "MODEL_4 after the gap is ignored");
        assert_eq!(cfg.model_api_keys.get(&2).map(String::as_str), Some("sk-test"));
        assert_eq!(cfg.prompt_section_budget, Some(4000));
        assert_eq!(cfg.workers, Some(2));
        assert_eq!(cfg.out_dir.as_deref(), Some(std::path::Path::new("/tmp/reports")));
        assert_eq!(cfg.explorer_api_url.as_deref(), Some("https://explorer.example.com/api"));
        assert!(cfg.simulator_url.is_none());
    }

    #[test]
    fn garbage_numeric_values_are_errors() {
        let cfg = EnvConfig::from_lookup(|k| {
            (k == "TXLENS_WORKERS").then(|| "many".to_string())
        });
        assert!(matches!(cfg, Err(ConfigError::Value { .. })));
    }

    #[test]
    fn build_backends_instantiates_both_kinds() {
        let mut script = tempfile::NamedTempFile::new().unwrap();
        script.write_all(br#"{"default": "ok"}"#).unwrap();
        script.flush().unwrap();
        let specs = vec![
            BackendSpec::Scripted {
                name: "analyst-a".to_string(),
                path: script.path().to_path_buf(),
            },
            BackendSpec::Remote {
                name: "gpt".to_string(),
                url: "https://api.example.com/v1".to_string(),
            },
        ];
        let backends = build_backends(&specs, &HashMap::new()).unwrap();
        assert_eq!(backends.len(), 2);
        assert_eq!(backends[0].id(), "analyst-a");
        assert_eq!(backends[0].kind(), BackendKind::Scripted);
        assert_eq!(backends[1].kind(), BackendKind::RemoteApi);
    }

    #[test]
    fn duplicate_model_names_are_rejected() {
        let specs = vec![
            BackendSpec::Remote { name: "m".to_string(), url: "https://a.example".to_string() },
            BackendSpec::Remote { name: "m".to_string(), url: "https://b.example".to_string() },
        ];
        assert!(matches!(
            build_backends(&specs, &HashMap::new()),
            Err(ConfigError::Descriptor { .. })
        ));
    }

    #[test]
    fn missing_scripted_fixture_is_a_script_error() {
        let specs = vec![BackendSpec::Scripted {
            name: "ghost".to_string(),
            path: PathBuf::from("/nonexistent/ghost.json"),
        }];
        assert!(matches!(
            build_backends(&specs, &HashMap::new()),
            Err(ConfigError::Script(ScriptError::Io { .. }))
        ));
    }
}
