//! Flat `key = value` configuration files. Values fill in options the
//! command line left unset; explicit flags always win.

use std::collections::HashMap;
use std::path::Path;

use crate::CliError;

pub fn load(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config {} line {}: expected 'key = value'",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn fill<T: std::str::FromStr>(
    slot: &mut Option<T>,
    map: &HashMap<String, String>,
    key: &str,
) -> Result<(), CliError>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        if let Some(raw) = map.get(key) {
            let parsed = raw
                .parse::<T>()
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

pub fn parse_f64_list(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{tok}' is not a number"))
        })
        .collect()
}
