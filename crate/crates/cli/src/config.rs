//! `key = value` defaults files.
//!
//! ```text
//! # keys before any section apply to every subcommand that has the flag
//! h = 1/128
//!
//! [gapnd]
//! domain = square:1
//!
//! [moduli.logconc]
//! per_bin = 256
//! ```
//!
//! Defaults become command-line flags inserted right after the subcommand,
//! unless the same flag was given explicitly.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;

/// One parsed line.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut section = None;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                bail!("line {line}: unterminated section header `{body}`");
            };
            section = Some(name.trim().to_string());
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            bail!("line {line}: expected `key = value`, got `{body}`");
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {line}: empty key");
        }
        let value = value.trim().trim_matches('"').to_string();
        out.push(Entry {
            line,
            section: section.clone(),
            key,
            value,
        });
    }
    Ok(out)
}

/// Subcommand path (`["moduli", "logconc"]`), position right after it, and
/// the `--config` value, found without a full parse.
fn locate(args: &[OsString]) -> (Vec<String>, usize, Option<OsString>) {
    let root = Cli::command();
    let takes_value = |name: &str| {
        root.get_arguments()
            .any(|a| a.get_long() == Some(name) && a.get_action().takes_values())
    };
    let mut path = Vec::new();
    let mut insert_at = args.len();
    let mut config = None;
    let mut cmd = root.clone();
    let mut i = 1;
    while i < args.len() {
        let tok = args[i].to_string_lossy().into_owned();
        if let Some(rest) = tok.strip_prefix("--") {
            let (name, inline) = match rest.split_once('=') {
                Some((n, v)) => (n.to_string(), Some(v.to_string())),
                None => (rest.to_string(), None),
            };
            if name == "config" {
                config = match &inline {
                    Some(v) => Some(OsString::from(v)),
                    None => args.get(i + 1).cloned(),
                };
            }
            if inline.is_none() && takes_value(&name) {
                i += 1;
            }
        } else if let Some(sub) = cmd.find_subcommand(&tok).cloned() {
            path.push(tok);
            insert_at = i + 1;
            cmd = sub;
        } else if !path.is_empty() {
            // first positional inside a subcommand; nothing deeper to find
            break;
        }
        i += 1;
    }
    (path, insert_at, config)
}

fn explicit(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let inline = format!("--{key}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag.as_str() || a.starts_with(&inline)
    })
}

/// Returns `args` with the config file's defaults spliced in.
pub fn apply(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let (path, insert_at, config) = locate(&args);
    let Some(file) = config else {
        return Ok(args);
    };
    let file = Path::new(&file);
    let text = std::fs::read_to_string(file).with_context(|| format!("config: cannot read {}", file.display()))?;
    let entries = parse(&text).with_context(|| format!("config {}", file.display()))?;
    if path.is_empty() {
        return Ok(args);
    }

    let root = Cli::command();
    let mut cmd = root.clone();
    for p in &path {
        cmd = cmd.find_subcommand(p).cloned().expect("located above");
    }
    let section = path.join(".");
    let lookup = |c: &clap::Command, key: &str| {
        c.get_arguments()
            .find(|a| a.get_long() == Some(key))
            .map(|a| a.get_action().takes_values())
    };

    let mut injected = Vec::new();
    for e in &entries {
        match &e.section {
            Some(s) if *s != section => continue,
            _ => {}
        }
        let takes = match lookup(&cmd, &e.key).or_else(|| lookup(&root, &e.key)) {
            Some(t) => t,
            None if e.section.is_some() => {
                bail!("config {} line {}: `{}` is not a flag of `{section}`", file.display(), e.line, e.key)
            }
            None => continue,
        };
        if e.key == "config" || explicit(&args, &e.key) {
            continue;
        }
        if takes {
            injected.push(OsString::from(format!("--{}={}", e.key, e.value)));
        } else {
            match e.value.as_str() {
                "true" | "yes" | "1" => injected.push(OsString::from(format!("--{}", e.key))),
                "false" | "no" | "0" => {}
                other => bail!(
                    "config {} line {}: `{}` is a switch, expected true or false, got `{other}`",
                    file.display(),
                    e.line,
                    e.key
                ),
            }
        }
    }
    let mut out = args;
    out.splice(insert_at..insert_at, injected);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_sections_and_comments() {
        let e = parse("h = 1/64 # coarse\n\n[gapnd]\ndomain = \"square:1\"\nper_bin=3\n").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].section, None);
        assert_eq!(e[1].section.as_deref(), Some("gapnd"));
        assert_eq!(e[1].value, "square:1");
        assert_eq!(e[2].key, "per-bin");
        assert!(parse("[gapnd\n").is_err());
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn locates_nested_subcommands() {
        let (path, at, cfg) = locate(&os(&["fundgap", "--config", "c.toml", "moduli", "logconc", "--h", "0.1"]));
        assert_eq!(path, ["moduli", "logconc"]);
        assert_eq!(at, 5);
        assert_eq!(cfg, Some(OsString::from("c.toml")));
    }

    #[test]
    fn explicit_flags_win() {
        let dir = std::env::temp_dir().join(format!("fundgap-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("run.cfg");
        std::fs::write(&file, "h = 1/16\ntiming = true\n[gapnd]\ndomain = square:1\ntol = 1e-8\n[gap1d]\ngrid = 7\n").unwrap();
        let args = os(&["fundgap", "gapnd", "--config", file.to_str().unwrap(), "--tol", "1e-6"]);
        let out = apply(args).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert!(out.contains(&"--h=1/16".to_string()));
        assert!(out.contains(&"--domain=square:1".to_string()));
        assert!(out.contains(&"--timing".to_string()));
        assert!(!out.iter().any(|s| s.starts_with("--tol=")));
        assert!(!out.iter().any(|s| s.starts_with("--grid")));

        std::fs::write(&file, "[gapnd]\nbogus = 1\n").unwrap();
        let err = apply(os(&["fundgap", "gapnd", "--config", file.to_str().unwrap()])).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
