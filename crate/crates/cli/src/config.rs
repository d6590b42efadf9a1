//! Optional TOML config file whose keys mirror the long flags of each command.
//!
//! ```toml
//! [generate]
//! case = "ieee14.m"
//! n = 10000
//! p = 0.1
//! ```
//!
//! Keys become `--key value` arguments placed before the command-line ones.
//! A key whose flag is also given on the command line is skipped, so flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Returns the `--config` path if present.
pub fn find_config(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Index of the subcommand token: the first positional that is not the
/// value of `--config`.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn flag_given(user_args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    user_args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&eq)
    })
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        other => bail!("config key {key:?}: unsupported value {other}"),
    })
}

fn section_to_args(section: &toml::Table, user_args: &[OsString]) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag_given(user_args, &flag) {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    out.push(flag.clone().into());
                    out.push(scalar(key, item)?.into());
                }
            }
            v => {
                out.push(flag.into());
                out.push(scalar(key, v)?.into());
            }
        }
    }
    Ok(out)
}

/// Splices the config section of the invoked command into `args`.
pub fn merge(args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    let Some(idx) = subcommand_index(&args) else {
        return Ok(args);
    };
    let command = args[idx].to_string_lossy().into_owned();
    let section = match table.get(&command) {
        Some(toml::Value::Table(t)) => t,
        Some(_) => bail!("config {}: [{command}] must be a table", path.display()),
        None => return Ok(args),
    };
    let injected = section_to_args(section, &args[idx + 1..])?;
    let mut merged = args[..=idx].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[idx + 1..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn finds_config_in_both_spellings() {
        assert_eq!(
            find_config(&os(&["x", "--config", "a.toml", "solve"])),
            Some("a.toml".into())
        );
        assert_eq!(
            find_config(&os(&["x", "--config=b.toml", "solve"])),
            Some("b.toml".into())
        );
        assert_eq!(find_config(&os(&["x", "solve"])), None);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[generate]\nn = 50\np = 0.1\nseed = 3\n[solve]\ncut = [1, 2]\n",
        )
        .unwrap();
        let args = os(&["x", "--config", "c.toml", "generate", "--p", "0.5"]);
        let merged = merge(args, &path).unwrap();
        assert_eq!(
            merged,
            os(&["x", "--config", "c.toml", "generate", "--n", "50", "--seed", "3", "--p", "0.5"])
        );
        let merged = merge(os(&["x", "solve", "--case", "a.m"]), &path).unwrap();
        assert_eq!(
            merged,
            os(&["x", "solve", "--cut", "1", "--cut", "2", "--case", "a.m"])
        );
    }

    #[test]
    fn unrelated_sections_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nepochs = 3\n").unwrap();
        let args = os(&["x", "solve", "--case", "a.m"]);
        assert_eq!(merge(args.clone(), &path).unwrap(), args);
    }
}
