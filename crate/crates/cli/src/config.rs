//! `key: value` config files. Each key names a long flag of the chosen
//! subcommand; the values are spliced in ahead of the real arguments so that
//! flags given on the command line override them.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

/// Parse `key: value` lines; `#` starts a comment line.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once(':') else {
            bail!("config line {}: expected `key: value`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

/// Position and value of `--config` in `args`, skipping the program name.
fn find_config(args: &[OsString]) -> Option<(usize, usize, OsString)> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return args.get(i + 1).map(|v| (i, 2, v.clone()));
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some((i, 1, v.into()));
        }
        i += 1;
    }
    None
}

/// Rewrite `args` so a `--config FILE` turns into flags placed right after
/// the subcommand name. Arguments without `--config` pass through untouched.
pub fn expand(cmd: &Command, mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some((at, width, path)) = find_config(&args) else {
        return Ok(args);
    };
    args.drain(at..at + width);
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let Some(sub_at) = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| !a.to_string_lossy().starts_with('-'))
        .map(|(i, _)| i)
    else {
        return Ok(args);
    };
    let name = args[sub_at].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(args);
    };
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in parse(&text)? {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            bail!("{}: `{key}` is not a flag of `{name}`", path.display());
        };
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                other => bail!("{}: `{key}` expects true or false, got {other:?}", path.display()),
            }
        }
    }
    args.splice(sub_at + 1..sub_at + 1, injected);
    Ok(args)
}
