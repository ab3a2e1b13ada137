//! `--config` files: flat TOML tables whose keys are long flag names of the
//! chosen subcommand. Their values are inserted ahead of the command-line
//! flags, so explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::CommandFactory;

use crate::error::{CliError, CliResult};
use crate::Cli;

/// Removes `--config <path>` (or `--config=<path>`) from `argv`.
pub fn extract_config(argv: Vec<OsString>) -> CliResult<(Vec<OsString>, Option<PathBuf>)> {
    let mut out = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let v = it
                .next()
                .ok_or_else(|| CliError::Usage("--config requires a path".into()))?;
            path = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(v));
        } else {
            out.push(arg);
        }
    }
    Ok((out, path))
}

/// Flag/value pairs from the config file for `subcommand`.
pub fn config_args(path: &Path, subcommand: &str) -> CliResult<Vec<OsString>> {
    let err = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| err(e.to_string()))?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand '{subcommand}'")))?;
    let known: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = key.replace('_', "-");
        if !known.contains(&flag.as_str()) {
            return Err(err(format!("'{key}' is not a flag of '{subcommand}'")));
        }
        out.push(OsString::from(format!("--{flag}")));
        out.push(OsString::from(value_text(&value).map_err(err)?));
    }
    Ok(out)
}

fn value_text(v: &toml::Value) -> Result<String, String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(value_text)
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        other => return Err(format!("unsupported value {other}")),
    })
}

/// Inserts the config flags right after the subcommand name.
pub fn merge(argv: Vec<OsString>, config: Option<&Path>) -> CliResult<Vec<OsString>> {
    let Some(path) = config else {
        return Ok(argv);
    };
    let Some(sub) = argv.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Err(CliError::Usage("--config needs a subcommand".into()));
    };
    let extra = config_args(path, &sub)?;
    let mut out = argv[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}
