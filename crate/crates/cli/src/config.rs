//! Merges TOML defaults into the argument list before clap parses it.
//!
//! Keys under a `[command-name]` table become `--key=value` flags of that
//! command; top-level keys apply to every command that accepts them. Flags
//! given on the command line come later and win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::CommandFactory;

use crate::cli::Cli;
use crate::UsageError;

/// `--config` value and index of the subcommand in `args`.
fn scan(args: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let mut config = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if !a.starts_with('-') {
            return (config, names.contains(&a.to_string()).then_some(i));
        }
        i += 1;
    }
    (config, None)
}

fn render(key: &str, value: &toml::Value) -> anyhow::Result<Option<String>> {
    let scalar = |v: &toml::Value| -> anyhow::Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            _ => bail!(UsageError(format!("config key {key:?} must be a string, number, boolean or array"))),
        })
    };
    Ok(match value {
        toml::Value::Boolean(true) => Some(format!("--{key}")),
        toml::Value::Boolean(false) => None,
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<anyhow::Result<Vec<_>>>()?;
            Some(format!("--{key}={}", parts.join(",")))
        }
        v => Some(format!("--{key}={}", scalar(v)?)),
    })
}

fn load(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// `args` with the config file's flags spliced in after the subcommand.
pub fn merge(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let (Some(path), Some(pos)) = scan(&args) else {
        return Ok(args);
    };
    let table = load(&path)?;
    let name = args[pos].to_string_lossy().to_string();
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(&name).expect("scanned subcommand exists");
    let accepted: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();

    let mut extra = Vec::new();
    for (k, v) in &table {
        if v.is_table() {
            continue;
        }
        let key = k.replace('_', "-");
        if accepted.contains(&key) {
            extra.extend(render(&key, v)?);
        }
    }
    if let Some(section) = table.get(&name) {
        let section = section
            .as_table()
            .ok_or_else(|| UsageError(format!("config entry {name:?} must be a table")))?;
        for (k, v) in section {
            let key = k.replace('_', "-");
            if !accepted.contains(&key) {
                bail!(UsageError(format!("config key {k:?} is not an option of {name}")));
            }
            extra.extend(render(&key, v)?);
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, extra.into_iter().map(OsString::from));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_are_spliced_after_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "seed = 9\nmin_freq = 3\n[pretrain]\nd_model = 32\nuntied_head = true\nf32 = false\n").unwrap();
        let args = os(&["lexcase", "--config", cfg.to_str().unwrap(), "pretrain", "--seed", "1"]);
        let merged = merge(args).unwrap();
        let tail: Vec<String> = merged[4..].iter().map(|s| s.to_string_lossy().to_string()).collect();
        assert_eq!(tail, ["--seed=9", "--d-model=32", "--untied-head", "--seed", "1"]);
    }

    #[test]
    fn unknown_table_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[evaluate]\nbogus = 1\n").unwrap();
        let err = merge(os(&["lexcase", "--config", cfg.to_str().unwrap(), "evaluate"])).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn arrays_are_comma_joined() {
        assert_eq!(
            render("metrics", &toml::Value::Array(vec!["ndcg@10".into(), "p@5".into()])).unwrap(),
            Some("--metrics=ndcg@10,p@5".into())
        );
    }
}
