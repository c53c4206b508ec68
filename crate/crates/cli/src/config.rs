//! Run-config file handling and exit-code classification.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_CONFIG, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_RUNTIME, error: error.into() }
    }
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        Self::runtime(e)
    }
}

pub fn config_error(msg: impl Display) -> Failure {
    Failure::config(anyhow::anyhow!("{msg}"))
}

pub trait OrConfig<T> {
    /// Reclassifies an error as a configuration error.
    fn or_config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrConfig<T> for Result<T, E> {
    fn or_config(self) -> Result<T, Failure> {
        self.map_err(Failure::config)
    }
}

/// Flat JSON object of option values. Command-line flags take precedence.
#[derive(Debug, Default)]
pub struct RunConfig {
    values: Map<String, Value>,
    base: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        let Value::Object(values) = value else {
            return Err(config_error(format!("config {} must be a JSON object", path.display())));
        };
        if let Some((key, _)) = values.iter().find(|(_, v)| matches!(v, Value::Object(_))) {
            return Err(config_error(format!("config key {key:?}: nested objects are not supported")));
        }
        Ok(Self { values, base: path.parent().map(Path::to_path_buf) })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key).filter(|v| !v.is_null())
    }

    fn type_error(key: &str, expected: &str) -> Failure {
        config_error(format!("config key {key:?} must be {expected}"))
    }

    pub fn string(&self, flag: Option<String>, key: &str) -> Result<Option<String>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Self::type_error(key, "a string")),
        }
    }

    /// Relative paths in the config file resolve against its directory.
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        Ok(self.string(None, key)?.map(|s| self.resolve(&s)))
    }

    fn resolve(&self, s: &str) -> PathBuf {
        let p = PathBuf::from(s);
        match &self.base {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        }
    }

    pub fn paths(&self, flag: Vec<PathBuf>, key: &str) -> Result<Vec<PathBuf>, Failure> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        Ok(self.strings(Vec::new(), key)?.iter().map(|s| self.resolve(s)).collect())
    }

    /// A list key accepts either an array of strings or a single string.
    pub fn strings(&self, flag: Vec<String>, key: &str) -> Result<Vec<String>, Failure> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::String(s)) => Ok(vec![s.clone()]),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| Self::type_error(key, "a list of strings")))
                .collect(),
            Some(_) => Err(Self::type_error(key, "a string or list of strings")),
        }
    }

    pub fn bool(&self, flag: Option<bool>, key: &str) -> Result<Option<bool>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(Self::type_error(key, "a boolean")),
        }
    }

    pub fn u64(&self, flag: Option<u64>, key: &str) -> Result<Option<u64>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| Self::type_error(key, "a non-negative integer")),
        }
    }

    pub fn f64(&self, flag: Option<f64>, key: &str) -> Result<Option<f64>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| Self::type_error(key, "a number")),
        }
    }
}

pub fn require<T>(value: Option<T>, name: &str) -> Result<T, Failure> {
    value.ok_or_else(|| config_error(format!("missing required option --{name}")))
}
