//! Flat `key = value` config files. Keys are the long flag names of the
//! subcommand they configure; the file is spliced in front of the command
//! line so explicit flags win.

use std::path::Path;

use crate::{read_file, FormatError};

/// `(key, value)` pairs in file order. Blank lines and `#` comments are
/// skipped.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>, FormatError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FormatError::parse(path, format!("line {}: expected key = value", ln + 1)))?;
        let k = k.trim();
        if k.is_empty() || k.starts_with('-') {
            return Err(FormatError::parse(path, format!("line {}: bad key {k:?}", ln + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, FormatError> {
    let bytes = read_file(path)?;
    parse_config(&String::from_utf8_lossy(&bytes), path)
}

/// Flag form of config entries: `key = true` becomes `--key`, `false` drops
/// the flag, anything else is `--key value`.
pub fn config_args(entries: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.clone());
            }
        }
    }
    args
}
