//! Run configuration: a `key = value` file overlaid by `--key value` flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgMatches, Command};

use crate::error::CliError;

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    pub default: Option<&'static str>,
}

pub const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, default: None }
}

pub const fn with_default(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        help,
        default: Some(default),
    }
}

/// Keys every command accepts.
pub const COMMON: [Key; 3] = [
    key("run", "run directory name under $DEEPCK_RUN_DIR (default: the command name)"),
    key("out", "explicit run directory, overriding `run`"),
    with_default("seed", "0", "random seed"),
];

#[derive(Debug, Clone, Copy)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    /// Command-specific keys, in groups so shared groups can be reused.
    pub keys: &'static [&'static [Key]],
}

impl CommandSpec {
    fn all_keys(&self) -> impl Iterator<Item = &Key> {
        COMMON.iter().chain(self.keys.iter().flat_map(|g| g.iter()))
    }

    fn find(&self, name: &str) -> Option<&Key> {
        self.all_keys().find(|k| k.name == name)
    }

    pub fn clap(&self) -> Command {
        let mut cmd = Command::new(self.name).about(self.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("file of `key = value` lines; flags override it"),
        );
        for k in self.all_keys() {
            let mut arg = Arg::new(k.name).long(k.name).value_name("VALUE").help(k.help);
            if let Some(d) = k.default {
                arg = arg.help(format!("{} [default: {d}]", k.help));
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    /// Every key with a value, after defaults, file and flags are merged.
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Merges defaults, then the config file, then flags.
    pub fn resolve(spec: &CommandSpec, matches: &ArgMatches) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> = spec
            .all_keys()
            .filter_map(|k| k.default.map(|d| (k.name.to_string(), d.to_string())))
            .collect();
        if let Some(file) = matches.get_one::<String>("config") {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CliError::Config(format!("cannot read config {file}: {e}")))?;
            for (k, v) in parse_config_file(&text)? {
                if spec.find(&k).is_none() {
                    return Err(CliError::Config(format!("unknown key `{k}` in {file} for `{}`", spec.name)));
                }
                values.insert(k, v);
            }
        }
        for k in spec.all_keys() {
            if let Some(v) = matches.get_one::<String>(k.name) {
                values.insert(k.name.to_string(), v.clone());
            }
        }
        Ok(RunConfig {
            command: spec.name,
            values,
        })
    }

    #[cfg(test)]
    pub fn from_pairs(command: &'static str, pairs: &[(&str, &str)]) -> Self {
        RunConfig {
            command,
            values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.opt(key)
            .ok_or_else(|| CliError::Config(format!("`{}` needs `{key}`", self.command)))
    }

    pub fn path(&self, key: &str) -> Result<&Path, CliError> {
        self.str(key).map(Path::new)
    }

    pub fn opt_path(&self, key: &str) -> Option<&Path> {
        self.opt(key).map(Path::new)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| CliError::Config(format!("`{key}` = {raw:?}: {e}")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.opt(key).map(|_| self.get(key)).transpose()
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.opt(key) else {
            return Ok(Vec::new());
        };
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Config(format!("`{key}` item {s:?}: {e}")))
            })
            .collect()
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed")
    }

    /// `out`, or `$DEEPCK_RUN_DIR/<run>` with `runs` as the default root.
    pub fn run_dir(&self) -> PathBuf {
        if let Some(out) = self.opt("out") {
            return PathBuf::from(out);
        }
        let root = std::env::var_os("DEEPCK_RUN_DIR").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(self.opt("run").unwrap_or(self.command))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: CommandSpec = CommandSpec {
        name: "demo",
        about: "",
        keys: &[&[with_default("k", "3", "pairs"), key("triples", "input")]],
    };

    fn resolve(args: &[&str]) -> Result<RunConfig, CliError> {
        let m = SPEC.clap().try_get_matches_from(std::iter::once("demo").chain(args.iter().copied())).unwrap();
        RunConfig::resolve(&SPEC, &m)
    }

    #[test]
    fn file_parsing() {
        let m = parse_config_file("# c\n\nk = 5\n triples=a b.tsv \n").unwrap();
        assert_eq!(m["k"], "5");
        assert_eq!(m["triples"], "a b.tsv");
        assert!(parse_config_file("k 5").is_err());
        assert!(parse_config_file("k = 1\nk = 2").is_err());
        assert!(parse_config_file(" = 2").is_err());
    }

    #[test]
    fn flags_override_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.conf");
        std::fs::write(&file, "k = 5\ntriples = x.tsv\n").unwrap();
        let f = file.to_str().unwrap();
        let c = resolve(&["--config", f]).unwrap();
        assert_eq!(c.get::<usize>("k").unwrap(), 5);
        let c = resolve(&["--config", f, "--k", "7"]).unwrap();
        assert_eq!(c.get::<usize>("k").unwrap(), 7);
        assert_eq!(resolve(&[]).unwrap().get::<usize>("k").unwrap(), 3);
        assert_eq!(c.seed().unwrap(), 0);
    }

    #[test]
    fn unknown_and_malformed_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.conf");
        std::fs::write(&file, "bogus = 1\n").unwrap();
        assert!(matches!(resolve(&["--config", file.to_str().unwrap()]), Err(CliError::Config(_))));
        assert!(SPEC.clap().try_get_matches_from(["demo", "--bogus", "1"]).is_err());
        let c = resolve(&["--k", "x"]).unwrap();
        assert!(matches!(c.get::<usize>("k"), Err(CliError::Config(_))));
        assert!(matches!(c.str("triples"), Err(CliError::Config(_))));
    }

    #[test]
    fn lists() {
        let c = RunConfig::from_pairs("demo", &[("ks", "1, 3,5"), ("none", "")]);
        assert_eq!(c.list::<usize>("ks").unwrap(), [1, 3, 5]);
        assert!(c.list::<usize>("none").unwrap().is_empty());
    }
}
