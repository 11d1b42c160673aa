//! `--config` files: INI-style `key = value` lines. Keys before any section
//! apply to every subcommand that accepts them; keys under `[name]` apply to
//! that subcommand only and must be valid flags for it. Command-line flags
//! always win.

use std::collections::BTreeMap;

use clap::Command;

#[derive(Debug, Default, PartialEq)]
pub struct Ini {
    pub global: BTreeMap<String, String>,
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

pub fn parse_ini(text: &str) -> Result<Ini, String> {
    let mut ini = Ini::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        let value = v.trim().to_string();
        match &section {
            None => ini.global.insert(key, value),
            Some(s) => ini.sections.entry(s.clone()).or_default().insert(key, value),
        };
    }
    Ok(ini)
}

/// Pulls `--config PATH` (or `--config=PATH`) out of `argv`.
pub fn config_path(argv: &[String]) -> Option<String> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

fn given(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Appends config values as flags for everything not already on the
/// command line.
pub fn merge(argv: &[String], ini: &Ini, cmd: &Command) -> Result<Vec<String>, String> {
    let Some(name) = argv.iter().skip(1).find(|a| !a.starts_with('-')) else {
        return Ok(argv.to_vec());
    };
    let Some(sub) = cmd.find_subcommand(name) else {
        return Ok(argv.to_vec());
    };
    let mut out = argv.to_vec();
    let section = ini.sections.get(name.as_str());
    if let Some(s) = section {
        if let Some(bad) = s.keys().find(|k| sub.get_arguments().all(|a| a.get_long() != Some(k.as_str()))) {
            return Err(format!("config section [{name}] sets unknown parameter `{bad}`"));
        }
    }
    let mut values: BTreeMap<&str, &str> = ini.global.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    if let Some(s) = section {
        values.extend(s.iter().map(|(k, v)| (k.as_str(), v.as_str())));
    }
    for (key, value) in values {
        if key == "config" || given(argv, key) {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key)) else { continue };
        if arg.get_action().takes_values() {
            out.push(format!("--{key}={value}"));
        } else {
            match value {
                "true" | "yes" | "1" => out.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                other => return Err(format!("config value `{other}` for switch `{key}` must be true or false")),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cmd() -> Command {
        Command::new("t").subcommand(
            Command::new("pca")
                .arg(Arg::new("alpha").long("alpha"))
                .arg(Arg::new("packets").long("packets").action(ArgAction::SetTrue)),
        )
    }

    fn argv(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_sections_and_comments() {
        let ini = parse_ini("# c\nseed = 3\n[pca]\nalpha=0.01\n; x\nunit_variance = true\n").unwrap();
        assert_eq!(ini.global["seed"], "3");
        assert_eq!(ini.sections["pca"]["unit-variance"], "true");
        assert!(parse_ini("nonsense").is_err());
    }

    #[test]
    fn flags_override_file() {
        let ini = parse_ini("[pca]\nalpha = 0.01\npackets = true\n").unwrap();
        let out = merge(&argv(&["t", "pca", "--alpha", "0.5"]), &ini, &cmd()).unwrap();
        assert_eq!(out, argv(&["t", "pca", "--alpha", "0.5", "--packets"]));
    }

    #[test]
    fn unknown_section_key_is_rejected() {
        let ini = parse_ini("[pca]\nbogus = 1\n").unwrap();
        assert!(merge(&argv(&["t", "pca"]), &ini, &cmd()).is_err());
        // unknown global keys are simply not applicable
        let ini = parse_ini("bogus = 1\n").unwrap();
        assert_eq!(merge(&argv(&["t", "pca"]), &ini, &cmd()).unwrap(), argv(&["t", "pca"]));
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(config_path(&argv(&["t", "pca", "--config", "a.ini"])), Some("a.ini".into()));
        assert_eq!(config_path(&argv(&["t", "--config=b.ini"])), Some("b.ini".into()));
        assert_eq!(config_path(&argv(&["t"])), None);
    }
}
