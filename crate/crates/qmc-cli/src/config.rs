//! Plain-text configuration files: one `key = value` per line, `#` starts a
//! comment. Values mirror the command-line flags; explicit flags always win
//! over file values, and unknown keys are rejected.

use std::path::PathBuf;

use qmc_core::Error;

/// Values read from a config file; every field is optional.
#[derive(Debug, Default, Clone)]
pub struct FileSettings {
    pub dim: Option<usize>,
    pub lambda: Option<f64>,
    pub zeta: Option<f64>,
    pub p: Option<f64>,
    pub t: Option<u64>,
    pub start: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub graph: Option<String>,
    pub schedule: Option<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub table: Option<u8>,
    pub format: Option<String>,
}

/// Parses a config file, reporting malformed lines by number.
pub fn parse_config(text: &str) -> Result<FileSettings, Error> {
    let mut settings = FileSettings::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {line_no}: expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Config(format!("line {line_no}: empty value for `{key}`")));
        }
        let bad = |what: &str| {
            Error::Config(format!("line {line_no}: `{key}` must be {what}, got `{value}`"))
        };
        match key {
            "dim" => settings.dim = Some(value.parse().map_err(|_| bad("a positive integer"))?),
            "lambda" => settings.lambda = Some(value.parse().map_err(|_| bad("a real"))?),
            "zeta" => settings.zeta = Some(value.parse().map_err(|_| bad("a real"))?),
            "p" => settings.p = Some(value.parse().map_err(|_| bad("a real"))?),
            "t" => settings.t = Some(value.parse().map_err(|_| bad("a nonnegative integer"))?),
            "start" => settings.start = Some(value.parse().map_err(|_| bad("a positive integer"))?),
            "samples" => {
                settings.samples = Some(value.parse().map_err(|_| bad("a positive integer"))?)
            }
            "seed" => settings.seed = Some(value.parse().map_err(|_| bad("a 64-bit integer"))?),
            "graph" => settings.graph = Some(value.to_string()),
            "schedule" => settings.schedule = Some(value.to_string()),
            "out" => settings.out = Some(PathBuf::from(value)),
            "workers" => {
                settings.workers = Some(value.parse().map_err(|_| bad("a positive integer"))?)
            }
            "table" => settings.table = Some(value.parse().map_err(|_| bad("a table number"))?),
            "format" => settings.format = Some(value.to_string()),
            _ => {
                return Err(Error::Config(format!("line {line_no}: unknown key `{key}`")));
            }
        }
    }
    Ok(settings)
}
