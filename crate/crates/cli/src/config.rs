//! Line-oriented `key = value` configuration. `#` starts a comment (at the
//! start of a line or after whitespace), `include <path>` splices another
//! file in place, resolved relative to the including file. Later
//! assignments win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use patternnet::{Error, Result};

/// Every key a config file may set, with a one-line description for `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed (u64)"),
    ("out", "output directory"),
    ("data", "dataset container"),
    (
        "eval.data",
        "held-out dataset container for rho, explain and degrade",
    ),
    ("model", "model file"),
    ("patterns", "pattern file(s), comma separated"),
    ("estimator", "identity | filter | linear | two_component"),
    ("methods", "explanation methods, comma separated"),
    ("arch", "architecture, e.g. conv:8:3,relu,pool:2,dense:10"),
    ("toy.kind", "linear | images"),
    ("toy.a_s", "signal direction, comma separated"),
    ("toy.a_d", "distractor direction, comma separated"),
    ("toy.y_range", "lo,hi of the uniform label"),
    ("toy.noise_mean", "distractor noise mean"),
    ("toy.noise_std", "distractor noise std"),
    ("toy.n_samples", "number of samples"),
    ("images.classes", "synthetic image classes"),
    ("images.size", "synthetic image side length"),
    ("images.channels", "synthetic image channels"),
    (
        "images.bumps_per_class",
        "Gaussian bumps per class template",
    ),
    ("images.bump_width", "bump width in pixels"),
    ("images.signal_range", "lo,hi of the template amplitude"),
    ("images.distractors", "number of shared gratings"),
    ("images.distractor_std", "grating amplitude std"),
    ("images.noise_std", "white noise std"),
    ("ingest.format", "idx | png_dir | csv"),
    (
        "ingest.path",
        "IDX image file, PNG root directory or CSV file",
    ),
    ("ingest.labels", "IDX label file"),
    ("ingest.size", "HxW resize target for png_dir"),
    ("ingest.grayscale", "true | false for png_dir"),
    ("train.split", "training split (default all)"),
    ("train.epochs", "epochs"),
    ("train.lr", "learning rate"),
    ("train.batch", "mini-batch size"),
    ("train.loss", "mse | cross_entropy (default by label arity)"),
    ("train.optimizer", "adam | sgd"),
    ("fit.split", "pattern fitting split (default first_half)"),
    ("fit.timestamp", "timestamp recorded in the pattern file"),
    (
        "rho.probe_split",
        "split the probe regression is fitted on (default second_half)",
    ),
    ("rho.eval_split", "split rho is measured on (default all)"),
    (
        "rho.baselines",
        "extra estimators: random, identity (default random)",
    ),
    (
        "rho.lambda_scale",
        "ridge strength relative to the mean Gram diagonal",
    ),
    ("explain.index", "sample index to explain"),
    (
        "explain.target",
        "output index to explain (default predicted class)",
    ),
    ("degrade.split", "evaluation split (default all)"),
    ("degrade.images", "number of images (default 500)"),
    ("degrade.patch", "patch side (default 4)"),
    ("degrade.steps", "replacement steps (default 100)"),
    (
        "degrade.random",
        "include the random ordering (default true)",
    ),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

fn strip_comment(line: &str) -> &str {
    if line.trim_start().starts_with('#') {
        return "";
    }
    let b = line.as_bytes();
    for i in 1..b.len() {
        if b[i] == b'#' && b[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Config::default();
        c.load_into(path.as_ref(), &mut Vec::new())?;
        Ok(c)
    }

    fn load_into(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        let canon = fs::canonicalize(path)
            .map_err(|e| Error::Dependency(format!("config {}: {e}", path.display())))?;
        if stack.contains(&canon) {
            return Err(Error::Config(format!(
                "include cycle through {}",
                path.display()
            )));
        }
        let text = fs::read_to_string(&canon)?;
        stack.push(canon.clone());
        let base = canon.parent().map(Path::to_path_buf).unwrap_or_default();
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", path.display(), n + 1);
            if let Some(rest) = line
                .strip_prefix("include")
                .filter(|r| r.starts_with(char::is_whitespace))
            {
                let target = rest.trim();
                if target.is_empty() {
                    return Err(Error::Config(format!("{}: include without a path", at())));
                }
                self.load_into(&base.join(target), stack)?;
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}: expected key = value, got {line:?}",
                    at()
                )));
            };
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{}: {e}", at())))?;
        }
        stack.pop();
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Parses a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key} = {v:?} is not valid")))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key} = {v:?} is not a number list")))
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    }

    pub fn pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.floats(key)?.as_deref() {
            None => Ok(None),
            Some(&[a, b]) => Ok(Some((a, b))),
            Some(_) => Err(Error::Config(format!("{key} needs exactly two numbers"))),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        if !p.exists() {
            return Err(Error::Dependency(format!(
                "{key} = {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }
}
