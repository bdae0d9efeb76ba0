//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! command = simulate
//! rho = 0.5
//! T = 2000
//! no-log = true
//! ```
//!
//! One `key = value` pair per line; blank lines and lines starting with `#`
//! are skipped. Keys are flag names without the leading dashes. Values are
//! trimmed and may not be empty. A `true` value turns a switch on, `false`
//! leaves it off, and lists are written comma-separated.

use std::collections::BTreeMap;
use std::ffi::OsString;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config key '{0}' cannot be rendered")]
    InvalidKey(String),
    #[error("config value for '{key}' cannot be rendered: {value:?}")]
    InvalidValue { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
}

pub fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && !key.starts_with('-')
        && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn valid_value(value: &str) -> bool {
    !value.is_empty() && value.trim() == value && !value.contains(['\n', '\r'])
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| syntax("expected 'key = value'".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !valid_key(key) {
                return Err(syntax(format!("invalid key '{key}'")));
            }
            if value.is_empty() {
                return Err(syntax(format!("empty value for '{key}'")));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(syntax(format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { values })
    }

    pub fn render(&self) -> Result<String, ConfigError> {
        let mut out = String::from("# ssepwalk run configuration\n");
        for (key, value) in &self.values {
            if !valid_key(key) {
                return Err(ConfigError::InvalidKey(key.clone()));
            }
            if !valid_value(value) {
                return Err(ConfigError::InvalidValue {
                    key: key.clone(),
                    value: value.clone(),
                });
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        Ok(out)
    }

    pub fn command(&self) -> Option<&str> {
        self.values.get("command").map(String::as_str)
    }

    /// Flags equivalent to this configuration, `command` excluded.
    pub fn to_flags(&self) -> Vec<OsString> {
        let mut flags = Vec::new();
        for (key, value) in &self.values {
            if key == "command" {
                continue;
            }
            let flag = format!("--{}", key.replace('_', "-"));
            match value.as_str() {
                "true" => flags.push(flag.into()),
                "false" => {}
                _ => {
                    flags.push(flag.into());
                    flags.push(value.into());
                }
            }
        }
        flags
    }

    /// Flattens a serialized argument struct: `null` is dropped, arrays are
    /// joined with commas and everything else is written in its plain form.
    pub fn from_json(command: &str, fields: &serde_json::Value) -> Self {
        let mut values = BTreeMap::new();
        values.insert("command".to_string(), command.to_string());
        if let serde_json::Value::Object(map) = fields {
            for (key, value) in map {
                if let Some(text) = plain(value) {
                    values.insert(key.clone(), text);
                }
            }
        }
        Self { values }
    }
}

fn plain(value: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match value {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(plain).collect();
            (!parts.is_empty()).then(|| parts.join(","))
        }
        other => Some(other.to_string()),
    }
}
