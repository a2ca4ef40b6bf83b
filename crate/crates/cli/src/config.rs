//! `demsim.conf` parsing and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "demsim.conf";

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "DEMSIM_WORKERS";

const KNOWN_KEYS: &[&str] = &[
    "n",
    "delta",
    "delta_grid",
    "delta_g",
    "nr",
    "seed",
    "gamma",
    "dt",
    "tol",
    "max_steps",
    "renormalize",
    "a",
    "b",
    "c",
    "d",
    "g1",
    "g2",
    "delta_t",
    "states",
    "case",
    "variance",
    "samples",
    "trials",
    "noisy",
    "exposure",
    "bracket",
    "x_star",
    "sensitivity",
    "big_gamma",
    "g",
    "kappa",
    "paper_units",
    "deterministic",
    "workers",
    "L",
    "n_x",
    "x1_over_L",
    "m",
    "g0",
];

/// Flat `key = value` file. Blank lines and text after `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Usage(format!("config line {}: unknown key '{key}'", lineno + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
            })
            .transpose()
    }
}

/// Resolves each parameter as flag > config file > default and keeps the
/// resolved values for the output header.
#[derive(Debug)]
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    resolved: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            resolved: Vec::new(),
        }
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file.get(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter '{key}' (flag or config)")))
    }

    /// Boolean switch: a set flag wins, otherwise the file, otherwise false.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.file.get::<bool>(key)?.unwrap_or(false);
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Resolver::optional`] but without echoing into the header.
    pub fn unrecorded<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key),
        }
    }

    pub fn record(&mut self, key: &str, value: &dyn fmt::Display) {
        let mut text = value.to_string();
        if text.contains('.') {
            if let Ok(x) = text.parse::<f64>() {
                text = crate::output::num(x);
            }
        }
        self.resolved.push((key.to_string(), text));
    }

    pub fn into_resolved(self) -> Vec<(String, String)> {
        self.resolved
    }
}

/// Atom counts given as `6`, `4,8,12` or `start:stop:step` (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NList(pub Vec<usize>);

impl FromStr for NList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid atom-count list '{s}'");
        if s.contains(':') {
            let parts: Vec<usize> = s
                .split(':')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            let (start, stop, step) = match parts[..] {
                [a, b] => (a, b, 1),
                [a, b, c] => (a, b, c),
                _ => return Err(bad()),
            };
            if step == 0 || stop < start {
                return Err(bad());
            }
            return Ok(NList((start..=stop).step_by(step).collect()));
        }
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if v.is_empty() {
            return Err(bad());
        }
        Ok(NList(v))
    }
}

impl fmt::Display for NList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, &self.0)
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealList(pub Vec<f64>);

impl FromStr for RealList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("invalid number list '{s}'")))
            .collect::<Result<_, _>>()?;
        Ok(RealList(v))
    }
}

impl fmt::Display for RealList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, &self.0)
    }
}

fn write_joined<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (k, x) in items.iter().enumerate() {
        if k > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

/// `k` evenly spaced points on `[0, π/2]`, endpoints included.
pub fn delta_grid(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..k)
            .map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (k - 1) as f64)
            .collect(),
    }
}
