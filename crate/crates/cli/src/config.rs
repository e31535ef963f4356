//! Flat `key=value` config files merged under explicit flags.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            bail!("{}:{}: empty key", path.display(), i + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn given_longs(args: &[OsString]) -> Vec<String> {
    args.iter()
        .filter_map(|a| {
            let s = a.to_str()?;
            let name = s.strip_prefix("--")?;
            Some(name.split('=').next().unwrap_or(name).to_string())
        })
        .collect()
}

fn find_subcommand<'a>(cmd: &'a Command, args: &[OsString]) -> Option<&'a Command> {
    args.iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find_map(|s| cmd.find_subcommand(s))
}

/// Appends config entries for every flag not given on the command line.
pub fn merge(
    cmd: &Command,
    args: Vec<OsString>,
    entries: &[(String, String)],
) -> Result<Vec<OsString>> {
    let given = given_longs(&args);
    let sub = find_subcommand(cmd, &args);
    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        let arg = sub
            .into_iter()
            .flat_map(Command::get_arguments)
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .with_context(|| format!("unknown config key {key:?}"))?;
        if given.iter().any(|g| g == key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => {
                let on: bool = value
                    .parse()
                    .with_context(|| format!("config key {key:?} expects true or false"))?;
                if on {
                    out.push(format!("--{key}").into());
                }
            }
            _ => out.push(format!("--{key}={value}").into()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    fn cmd() -> Command {
        Command::new("x")
            .arg(Arg::new("seed").long("seed").global(true))
            .subcommand(
                Command::new("fit")
                    .arg(Arg::new("lag").long("lag"))
                    .arg(Arg::new("quiet").long("quiet").action(ArgAction::SetTrue)),
            )
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_win_over_file() {
        let entries = vec![
            ("lag".into(), "1".into()),
            ("seed".into(), "4".into()),
            ("quiet".into(), "true".into()),
        ];
        let merged = merge(&cmd(), os(&["x", "fit", "--lag", "2"]), &entries).unwrap();
        assert_eq!(
            merged,
            os(&["x", "fit", "--lag", "2", "--seed=4", "--quiet"])
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let entries = vec![("lags".into(), "1".into())];
        assert!(merge(&cmd(), os(&["x", "fit"]), &entries).is_err());
    }

    #[test]
    fn parses_comments_and_reports_lines() {
        let p = Path::new("c.conf");
        let e = parse_config("# c\n\nlag = 1\n--seed=3\n", p).unwrap();
        assert_eq!(
            e,
            vec![("lag".into(), "1".into()), ("seed".into(), "3".into())]
        );
        let err = parse_config("lag=1\noops\n", p).unwrap_err();
        assert_eq!(err.to_string(), "c.conf:2: expected key=value");
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(config_path(&os(&["x", "--config", "a"])), Some("a".into()));
        assert_eq!(
            config_path(&os(&["x", "fit", "--config=b"])),
            Some("b".into())
        );
        assert_eq!(config_path(&os(&["x", "fit"])), None);
    }
}
