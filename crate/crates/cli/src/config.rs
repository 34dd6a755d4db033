//! Layered run configuration.
//!
//! Every setting is looked up by key in, from lowest to highest priority: the
//! built-in default, a TOML file given with `--config`, an environment
//! variable `TASKCP_<KEY>` and the command-line flag. Each resolved value is
//! recorded with its origin so that output files can echo it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches};

use crate::error::CliError;

/// One user-facing setting: config-file key, flag, environment variable.
pub struct Setting {
    pub key: &'static str,
    pub flag: &'static str,
    pub env: &'static str,
    pub value_name: &'static str,
    pub help: &'static str,
}

macro_rules! setting {
    ($key:literal, $flag:literal, $env:literal, $value:literal, $help:literal) => {
        Setting {
            key: $key,
            flag: $flag,
            env: $env,
            value_name: $value,
            help: $help,
        }
    };
}

pub const SETTINGS: &[Setting] = &[
    setting!(
        "seed",
        "seed",
        "TASKCP_SEED",
        "U64",
        "Master random seed [default: 0]"
    ),
    setting!(
        "alpha",
        "alpha",
        "TASKCP_ALPHA",
        "ALPHA",
        "Miscoverage level in (0, 1) [default: 0.1]"
    ),
    setting!(
        "method",
        "method",
        "TASKCP_METHOD",
        "LIST",
        "Comma-separated methods among ar, lwr, cqr [default: ar,lwr,cqr]"
    ),
    setting!(
        "samples_p",
        "samples-p",
        "TASKCP_SAMPLES_P",
        "P",
        "Posterior samples per record"
    ),
    setting!(
        "trials",
        "trials",
        "TASKCP_TRIALS",
        "T",
        "Number of random calibration/test splits"
    ),
    setting!(
        "cal_fraction",
        "cal-fraction",
        "TASKCP_CAL_FRACTION",
        "FRAC",
        "Fraction of records used for calibration [default: 0.7]"
    ),
    setting!(
        "tau",
        "tau",
        "TASKCP_TAU",
        "TAU",
        "Stop once the interval is shorter than this [default: 0.5]"
    ),
    setting!(
        "rounds",
        "rounds",
        "TASKCP_ROUNDS",
        "ROUNDS",
        "generate: number of rounds; montecarlo: rounds to evaluate (`all` or a list)"
    ),
    setting!(
        "rows",
        "rows",
        "TASKCP_ROWS",
        "LIST",
        "Cumulative measurement rows per round (overrides --rounds)"
    ),
    setting!(
        "n",
        "n",
        "TASKCP_N",
        "N",
        "Number of ground-truth samples [default: 600]"
    ),
    setting!(
        "dim",
        "dim",
        "TASKCP_DIM",
        "D",
        "Signal dimension [default: 16]"
    ),
    setting!(
        "noise_std",
        "noise-std",
        "TASKCP_NOISE_STD",
        "SIGMA",
        "Measurement noise standard deviation [default: 0.3]"
    ),
    setting!(
        "prior_std",
        "prior-std",
        "TASKCP_PRIOR_STD",
        "SIGMA",
        "Prior standard deviation [default: 1]"
    ),
    setting!(
        "task_weight_norm",
        "task-weight-norm",
        "TASKCP_TASK_WEIGHT_NORM",
        "NORM",
        "Norm of the classifier weight vector"
    ),
    setting!(
        "task_bias",
        "task-bias",
        "TASKCP_TASK_BIAS",
        "B",
        "Classifier bias [default: 0]"
    ),
    setting!(
        "reduction",
        "reduction",
        "TASKCP_REDUCTION",
        "first|mean",
        "How AR reduces samples to a point prediction [default: first]"
    ),
    setting!(
        "size_edges",
        "size-edges",
        "TASKCP_SIZE_EDGES",
        "LIST",
        "Interval-length strata edges [default: 0,0.05,0.1,0.15,0.2,1]"
    ),
    setting!(
        "p_sweep",
        "p-sweep",
        "TASKCP_P_SWEEP",
        "LIST",
        "Also sweep the number of samples over this list"
    ),
    setting!(
        "sweep_round",
        "sweep-round",
        "TASKCP_SWEEP_ROUND",
        "K",
        "Round used by the sample-count sweep [default: 1]"
    ),
    setting!(
        "group_size",
        "group-size",
        "TASKCP_GROUP_SIZE",
        "G",
        "Test samples per group for the max center error [default: 8]"
    ),
    setting!(
        "data",
        "data",
        "TASKCP_DATA",
        "DIR",
        "Dataset directory written by `generate`"
    ),
    setting!(
        "out",
        "out",
        "TASKCP_OUT",
        "PATH",
        "Output directory (or report file for `validate`)"
    ),
    setting!(
        "format",
        "format",
        "TASKCP_FORMAT",
        "tsv|json",
        "Output format [default: tsv]"
    ),
];

/// Settings that affect where or how fast work runs, never what it computes;
/// they are not echoed into outputs.
const UNECHOED: &[&str] = &["data", "out", "workers", "config"];

pub fn setting(key: &str) -> &'static Setting {
    SETTINGS
        .iter()
        .find(|s| s.key == key)
        .unwrap_or_else(|| panic!("unknown setting {key}"))
}

pub fn arg(key: &'static str) -> Arg {
    let s = setting(key);
    Arg::new(s.key)
        .long(s.flag)
        .env(s.env)
        .value_name(s.value_name)
        .help(s.help)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
    Dataset,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Env => "env",
            Source::Flag => "flag",
            Source::Dataset => "dataset",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub source: Source,
}

/// Values read from a TOML config file: a flat table of known keys.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile(toml::Table);

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        for key in table.keys() {
            if key != "workers" && !SETTINGS.iter().any(|s| s.key == key) {
                return Err(CliError::Config(format!(
                    "config file: unknown key `{key}`"
                )));
            }
        }
        Ok(Self(table))
    }

    fn get(&self, key: &str) -> Option<String> {
        fn render(v: &toml::Value) -> String {
            match v {
                toml::Value::String(s) => s.clone(),
                toml::Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            }
        }
        self.0.get(key).map(render)
    }
}

/// Resolves settings for one subcommand and records what was used.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    matches: &'a ArgMatches,
    entries: Vec<Entry>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, matches: &'a ArgMatches) -> Self {
        Self {
            file,
            matches,
            entries: Vec::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<(String, Source)> {
        let source = match self.matches.value_source(key) {
            Some(ValueSource::CommandLine) => Some(Source::Flag),
            Some(ValueSource::EnvVariable) => Some(Source::Env),
            _ => None,
        };
        if let Some(source) = source {
            let value = self.matches.get_one::<String>(key).cloned()?;
            return Some((value, source));
        }
        self.file.get(key).map(|v| (v, Source::File))
    }

    fn parse<T>(key: &str, raw: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        raw.trim()
            .parse()
            .map_err(|e| CliError::Config(format!("invalid value `{raw}` for {key}: {e}")))
    }

    fn record(&mut self, key: &str, value: String, source: Source) {
        if !UNECHOED.contains(&key) {
            self.entries.push(Entry {
                key: key.to_string(),
                value,
                source,
            });
        }
    }

    /// Resolve `key`, falling back to `default`, and reject values for which
    /// `check` returns an error message.
    pub fn get<T>(
        &mut self,
        key: &str,
        default: T,
        check: impl Fn(&T) -> Result<(), String>,
    ) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let (value, source) = match self.raw(key) {
            Some((raw, source)) => (Self::parse(key, &raw)?, source),
            None => (default, Source::Default),
        };
        check(&value).map_err(|msg| CliError::Config(format!("{key}: {msg}")))?;
        self.record(key, value.to_string(), source);
        Ok(value)
    }

    /// Like [`Resolver::get`] with no default; absent values are echoed as `none`.
    pub fn optional<T>(
        &mut self,
        key: &str,
        check: impl Fn(&T) -> Result<(), String>,
    ) -> Result<Option<T>, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some((raw, source)) => {
                let value: T = Self::parse(key, &raw)?;
                check(&value).map_err(|msg| CliError::Config(format!("{key}: {msg}")))?;
                self.record(key, value.to_string(), source);
                Ok(Some(value))
            }
            None => {
                self.record(key, "none".into(), Source::Default);
                Ok(None)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.optional(key, |_| Ok(()))?.ok_or_else(|| {
            let s = setting(key);
            CliError::Config(format!(
                "missing --{} (or {} / `{}` in the config file)",
                s.flag, s.env, s.key
            ))
        })
    }

    /// Add a derived or inherited value to the echo block.
    pub fn note(&mut self, key: &str, value: impl fmt::Display, source: Source) {
        self.record(key, value.to_string(), source);
    }

    pub fn into_entries(self) -> Vec<Entry> {
        self.entries
    }

    /// Entries recorded so far; later lookups start a fresh record.
    pub fn take_entries(&mut self) -> Vec<Entry> {
        std::mem::take(&mut self.entries)
    }
}

pub fn positive<T: PartialOrd + Default>(v: &T) -> Result<(), String> {
    if *v > T::default() {
        Ok(())
    } else {
        Err("must be positive".into())
    }
}

pub fn in_unit_interval(v: &f64) -> Result<(), String> {
    if *v > 0.0 && *v < 1.0 {
        Ok(())
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

pub fn finite(v: &f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err("must be finite".into())
    }
}

pub fn any<T>(_: &T) -> Result<(), String> {
    Ok(())
}

/// Comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T> FromStr for List<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let items = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() {
            return Err("empty list".into());
        }
        Ok(List(items))
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{item}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundSelection {
    All,
    Only(List<usize>),
}

impl RoundSelection {
    pub fn resolve(&self, available: usize) -> Result<Vec<usize>, CliError> {
        match self {
            RoundSelection::All => Ok((1..=available).collect()),
            RoundSelection::Only(list) => {
                if let Some(&bad) = list.0.iter().find(|&&k| k == 0 || k > available) {
                    return Err(CliError::Config(format!(
                        "rounds: round {bad} not in 1..={available}"
                    )));
                }
                Ok(list.0.clone())
            }
        }
    }
}

impl FromStr for RoundSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("all") {
            Ok(RoundSelection::All)
        } else {
            s.parse().map(RoundSelection::Only)
        }
    }
}

impl fmt::Display for RoundSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundSelection::All => f.write_str("all"),
            RoundSelection::Only(list) => list.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Tsv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Tsv => "tsv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected tsv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matches(args: &[&str]) -> ArgMatches {
        clap::Command::new("t")
            .arg(arg("alpha"))
            .arg(arg("trials"))
            .arg(arg("method"))
            .try_get_matches_from(args)
            .unwrap()
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file =
            ConfigFile::parse("alpha = 0.2\ntrials = 50\nmethod = [\"ar\", \"cqr\"]").unwrap();
        let m = matches(&["t", "--alpha", "0.05"]);
        let mut r = Resolver::new(&file, &m);
        assert_eq!(r.get("alpha", 0.1, in_unit_interval).unwrap(), 0.05);
        assert_eq!(r.get("trials", 10usize, positive).unwrap(), 50);
        let methods: List<String> = r.required("method").unwrap();
        assert_eq!(methods.0, vec!["ar", "cqr"]);
        let e = r.into_entries();
        assert_eq!((e[0].source, e[1].source), (Source::Flag, Source::File));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("alhpa = 0.1").is_err());
        let file = ConfigFile::default();
        let m = matches(&["t", "--alpha", "1.5"]);
        let mut r = Resolver::new(&file, &m);
        assert!(matches!(
            r.get("alpha", 0.1, in_unit_interval),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn list_round_trip() {
        let l: List<usize> = "2, 4,8".parse().unwrap();
        assert_eq!(l.to_string(), "2,4,8");
        assert!("".parse::<List<usize>>().is_err());
        assert_eq!(
            "all".parse::<RoundSelection>().unwrap(),
            RoundSelection::All
        );
        assert!("1,5".parse::<RoundSelection>().unwrap().resolve(4).is_err());
    }
}
