use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

pub const SEED_ENV: &str = "REPJSD_SEED";

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

/// Contents of a `--config` file: subcommand options plus an optional seed.
/// A manifest written by an earlier run is accepted as well.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub options: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut obj) = value else {
            return Err(CliError::Usage("config file must hold a JSON object".into()));
        };
        let command = obj.get("command").and_then(Value::as_str).map(str::to_owned);
        let seed = match obj.remove("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| CliError::Usage("config seed must be a nonnegative integer".into()))?,
            ),
        };
        let options = match obj.remove("config") {
            Some(Value::Object(inner)) => inner,
            Some(_) => return Err(CliError::Usage("manifest 'config' must be an object".into())),
            None => {
                obj.remove("command");
                obj
            }
        };
        Ok(Self { command, seed, options })
    }
}

/// Overlays the flags that were given on top of the file options.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: &Map<String, Value>) -> Result<T, CliError> {
    let mut merged = file.clone();
    if let Value::Object(given) = serde_json::to_value(flags).expect("options serialize") {
        for (k, v) in given {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("bad option in config: {e}")))
}

/// Flag, then config file, then `REPJSD_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be a nonnegative integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

pub fn manifest(command: &str, globals: &Globals, config: &impl Serialize, outputs: &[&str]) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": globals.seed,
        "threads": globals.threads,
        "config": config,
        "outputs": outputs,
    })
}
