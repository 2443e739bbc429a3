//! Optional `key=value` config files. Keys are long flag names; entries are
//! spliced into argv ahead of the command-line flags, which therefore win.

use std::collections::BTreeSet;
use std::fs;

use clap::CommandFactory;

use crate::{Cli, CliError};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key=value`", idx + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", idx + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", idx + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Result<Option<String>, CliError> {
    let mut found = None;
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            let v = iter
                .next()
                .ok_or_else(|| CliError::Usage("`--config` needs a path".into()))?;
            found = Some(v.clone());
        } else if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        }
    }
    Ok(found)
}

/// Long flag names accepted by `subcommand`, minus `config` and `help`.
fn allowed_keys(subcommand: &str) -> Option<BTreeSet<String>> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(subcommand)?;
    Some(
        sub.get_arguments()
            .filter_map(|a| a.get_long())
            .filter(|l| *l != "config" && *l != "help")
            .map(str::to_string)
            .collect(),
    )
}

pub fn expand_argv(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let Some(path) = config_path(&argv[2..])? else {
        return Ok(argv);
    };
    // An unknown subcommand is left for clap to report.
    let Some(allowed) = allowed_keys(&argv[1]) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    let mut out = argv[..2].to_vec();
    for (key, value) in entries {
        if !allowed.contains(&key) {
            return Err(CliError::Usage(format!(
                "unknown config key `{key}` for `{}`",
                argv[1]
            )));
        }
        out.push(format!("--{key}={value}"));
    }
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_lines() {
        let c = parse_config("# c\n\nepochs = 3\nlearning_rate=0.5\nkeywords = a = b\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("epochs".into(), "3".into()),
                ("learning-rate".into(), "0.5".into()),
                ("keywords".into(), "a = b".into())
            ]
        );
        assert!(parse_config("epochs").is_err());
        assert!(parse_config("=3").is_err());
        assert!(parse_config("epochs=1\nepochs=2").is_err());
    }

    #[test]
    fn finds_config_flag() {
        assert_eq!(config_path(&argv("--a 1 --config x.cfg")).unwrap(), Some("x.cfg".into()));
        assert_eq!(config_path(&argv("--config=y")).unwrap(), Some("y".into()));
        assert_eq!(config_path(&argv("--a 1")).unwrap(), None);
        assert!(config_path(&argv("--config")).is_err());
    }

    #[test]
    fn allowed_keys_cover_flags() {
        let keys = allowed_keys("train-ranker").unwrap();
        assert!(keys.contains("learning-rate") && keys.contains("seed"));
        assert!(!keys.contains("config"));
        assert!(allowed_keys("nope").is_none());
    }
}
