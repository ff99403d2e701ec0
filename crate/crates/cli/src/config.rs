//! `--config FILE` support.
//!
//! A config file holds `key=value` lines (blank lines and `#` comments are
//! skipped). Each key is a long flag name of some subcommand. Entries are
//! spliced into argv directly after the subcommand name so that any flag
//! given on the command line, which comes later, overrides them. Keys that
//! belong only to other subcommands are ignored, which lets one file
//! describe a whole pipeline run; keys no subcommand knows are rejected.

use std::collections::BTreeSet;
use std::ffi::OsString;

use clap::{Arg, Command};

#[derive(Debug)]
pub struct ConfigError(pub String);

/// Global options that take a value and may precede the subcommand.
const GLOBAL_VALUE_FLAGS: [&str; 2] = ["--threads", "--config"];

fn long_flags(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter(|a| !a.is_positional())
        .filter_map(Arg::get_long)
        .map(str::to_owned)
        .collect()
}

fn parse_entries(text: &str, path: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{path}:{}: expected key=value, got {line:?}", no + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError(format!("{path}:{}: empty key", no + 1)));
        }
        entries.push((key, value.trim().to_owned()));
    }
    Ok(entries)
}

/// Returns argv with `--config FILE` removed and its entries spliced in.
pub fn expand(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, ConfigError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();

    // Locate the config flag and the subcommand among the leading options.
    let mut config: Option<(usize, usize, String)> = None;
    let mut sub_pos = None;
    let mut i = 1;
    while i < strs.len() {
        let a = &strs[i];
        if let Some(path) = a.strip_prefix("--config=") {
            config = Some((i, 1, path.to_owned()));
        } else if a == "--config" {
            let path = strs.get(i + 1).cloned().unwrap_or_default();
            config = Some((i, 2, path));
            i += 1;
        } else if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 1;
        } else if !a.starts_with('-') {
            sub_pos = Some(i);
            break;
        }
        i += 1;
    }
    // `--config` may also follow the subcommand since it is a global flag.
    if config.is_none() {
        if let Some(sp) = sub_pos {
            let mut j = sp + 1;
            while j < strs.len() && strs[j] != "--" {
                if let Some(path) = strs[j].strip_prefix("--config=") {
                    config = Some((j, 1, path.to_owned()));
                    break;
                } else if strs[j] == "--config" {
                    config = Some((j, 2, strs.get(j + 1).cloned().unwrap_or_default()));
                    break;
                }
                j += 1;
            }
        }
    }

    let Some((at, width, path)) = config else {
        return Ok(args);
    };
    if path.is_empty() {
        return Err(ConfigError("--config needs a file path".into()));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("{path}: {e}")))?;
    let entries = parse_entries(&text, &path)?;

    let mut out = args;
    out.drain(at..at + width);
    let Some(sub_pos) = sub_pos else {
        // No subcommand: let clap report the usage error.
        return Ok(out);
    };
    let sub_pos = if at < sub_pos { sub_pos - width } else { sub_pos };
    let sub_name = out[sub_pos].to_string_lossy().into_owned();

    let known: BTreeSet<String> = cmd.get_subcommands().flat_map(long_flags).collect();
    let own = cmd
        .get_subcommands()
        .find(|s| s.get_name() == sub_name)
        .map(long_flags)
        .unwrap_or_default();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "threads" {
            injected.push(OsString::from(format!("--threads={value}")));
        } else if own.contains(&key) {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else if !known.contains(&key) {
            return Err(ConfigError(format!("{path}: unknown key {key:?}")));
        }
    }
    out.splice(sub_pos + 1..sub_pos + 1, injected);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd() -> Command {
        Command::new("t")
            .arg(Arg::new("threads").long("threads").global(true))
            .subcommand(
                Command::new("a")
                    .arg(Arg::new("seed").long("seed"))
                    .arg(Arg::new("file")),
            )
            .subcommand(Command::new("b").arg(Arg::new("ratio").long("ratio")))
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_own_keys_and_skips_foreign_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "# run\nseed = 7\nratio=0.5\n\n").unwrap();
        let p = path.to_str().unwrap();
        let got = expand(os(&["t", "--config", p, "a", "--seed", "9", "x"]), &cmd()).unwrap();
        assert_eq!(got, os(&["t", "a", "--seed=7", "--seed", "9", "x"]));
        let got = expand(os(&["t", "b", &format!("--config={p}")]), &cmd()).unwrap();
        assert_eq!(got, os(&["t", "b", "--ratio=0.5"]));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "colour=red\n").unwrap();
        let p = path.to_str().unwrap();
        assert!(expand(os(&["t", "--config", p, "a"]), &cmd()).is_err());
        std::fs::write(&path, "seed\n").unwrap();
        assert!(expand(os(&["t", "--config", p, "a"]), &cmd()).is_err());
    }

    #[test]
    fn untouched_without_config() {
        let args = os(&["t", "--threads", "2", "a", "--seed", "1"]);
        assert_eq!(expand(args.clone(), &cmd()).unwrap(), args);
    }
}
