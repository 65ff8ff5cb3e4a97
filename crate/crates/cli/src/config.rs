//! Experiment config files: strict TOML with line-numbered diagnostics.

use std::fmt;
use std::fs;
use std::path::Path;

use ciblp::sim::ExperimentConfig;
use ciblp::CiError;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    /// 1-based line of the offending entry, when it can be located.
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        message: format!("cannot read {}: {e}", path.display()),
        line: None,
    })?;
    parse_config_str(&text)
}

/// Parses and validates a config; defaults are those of [`ExperimentConfig`] (`p0 = 1`).
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
        message: e.message().to_string(),
        line: e.span().map(|span| line_of(text, span.start)),
    })?;
    config.validate().map_err(|e| {
        let message = match e {
            CiError::InvalidConfig(msg) => msg,
            other => other.to_string(),
        };
        ConfigError {
            line: blamed_key(&message).and_then(|key| key_line(text, key)),
            message,
        }
    })?;
    Ok(config)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Config key named at the start of a validation message.
fn blamed_key(message: &str) -> Option<&str> {
    let first = message.split_whitespace().next()?;
    let key = match first {
        "scheme" => "schemes",
        other => other.rsplit('.').next().unwrap_or(other),
    };
    key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_').then_some(key)
}

/// First line assigning `key`, as `key = …` or `"key" = …`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        let line = line.trim_start();
        let rest = line
            .strip_prefix(key)
            .or_else(|| line.strip_prefix(&format!("\"{key}\"")));
        rest.is_some_and(|r| r.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}
