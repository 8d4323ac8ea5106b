//! Experiment configuration files.
//!
//! The format is flat `key = value` lines grouped under `[section]` headers.
//! Blank lines and lines starting with `#` are ignored. Every key must be known
//! to its section; anything else is an error. Keys left out take the desk-scale
//! defaults of the selected experiment.
//!
//! ```text
//! [experiment]
//! kind = convergence
//!
//! [model]
//! name = two-mode-gmm
//! d = 10
//!
//! [schemes]
//! list = lmc, rklmc-2g, rklmc-3g-a
//!
//! [grid]
//! h_ref = 2^-12
//! hs = 2^-5, 2^-6, 2^-7, 2^-8, 2^-9
//!
//! [run]
//! terminal_time = 2
//! ensemble_size = 2000
//! master_seed = 2024
//! ```

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use rklmc::experiments::BlrParams;
use rklmc::parse::parse_real;
use rklmc::{ConvergenceConfig, DimensionConfig, EightModeConfig, HistogramConfig, ModelKind, Scheme};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("missing `kind` in section [experiment]")]
    MissingKind,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    Dimension,
    Histogram,
    EightMode,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Dimension => "dimension",
            ExperimentKind::Histogram => "histogram",
            ExperimentKind::EightMode => "eight-mode",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "convergence" => Ok(Self::Convergence),
            "dimension" => Ok(Self::Dimension),
            "histogram" => Ok(Self::Histogram),
            "eight-mode" => Ok(Self::EightMode),
            _ => Err(ConfigError::Invalid(format!(
                "unknown experiment `{s}` (expected convergence, dimension, histogram or eight-mode)"
            ))),
        }
    }
}

/// A parsed configuration file. Fields left as `None` fall back to the
/// defaults of the experiment when the config is resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub model: Option<String>,
    pub d: Option<usize>,
    pub blr_seed: Option<u64>,
    pub blr_n: Option<usize>,
    pub alpha_prior: Option<f64>,
    pub schemes: Option<Vec<Scheme>>,
    pub h_ref: Option<f64>,
    pub h: Option<f64>,
    pub hs: Option<Vec<f64>>,
    pub dims: Option<Vec<usize>>,
    pub terminal_time: Option<f64>,
    pub ensemble_size: Option<usize>,
    pub master_seed: Option<u64>,
    pub bins: Option<usize>,
    pub range_lo: Option<f64>,
    pub range_hi: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            model: None,
            d: None,
            blr_seed: None,
            blr_n: None,
            alpha_prior: None,
            schemes: None,
            h_ref: None,
            h: None,
            hs: None,
            dims: None,
            terminal_time: None,
            ensemble_size: None,
            master_seed: None,
            bins: None,
            range_lo: None,
            range_hi: None,
            output_dir: None,
        }
    }
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("experiment", &["kind"]),
    ("model", &["name", "d", "blr_seed", "blr_n", "alpha_prior"]),
    ("schemes", &["list"]),
    ("grid", &["h_ref", "h", "hs", "dims"]),
    ("run", &["terminal_time", "ensemble_size", "master_seed", "output_dir"]),
    ("histogram", &["bins", "range_lo", "range_hi"]),
];

fn invalid(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid(format!("`{key}`: {msg}"))
}

fn list<T>(key: &str, v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| item(t).map_err(|e| invalid(key, e)))
        .collect()
}

fn real(key: &str, v: &str) -> Result<f64, ConfigError> {
    parse_real(v).map_err(|e| invalid(key, e))
}

fn integer<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| invalid(key, format!("`{v}` is not a nonnegative integer")))
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut section: Option<&str> = None;
        let mut seen: Vec<String> = Vec::new();
        let mut kind = None;
        let mut cfg = RunConfig::new(ExperimentKind::Convergence);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let known = SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("unknown section [{name}]"),
                })?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("`{key}` appears before any [section]"),
            })?;
            let keys = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    section: sec.to_string(),
                    key: key.to_string(),
                });
            }
            let full = format!("{sec}.{key}");
            if seen.contains(&full) {
                return Err(ConfigError::Duplicate(full));
            }
            seen.push(full);
            match key {
                "kind" => kind = Some(value.parse()?),
                "name" => cfg.model = Some(value.to_string()),
                "d" => cfg.d = Some(integer(key, value)?),
                "blr_seed" => cfg.blr_seed = Some(integer(key, value)?),
                "blr_n" => cfg.blr_n = Some(integer(key, value)?),
                "alpha_prior" => cfg.alpha_prior = Some(real(key, value)?),
                "list" => cfg.schemes = Some(list(key, value, |t| t.parse::<Scheme>().map_err(|e| e.to_string()))?),
                "h_ref" => cfg.h_ref = Some(real(key, value)?),
                "h" => cfg.h = Some(real(key, value)?),
                "hs" => cfg.hs = Some(list(key, value, parse_real)?),
                "dims" => {
                    cfg.dims = Some(list(key, value, |t| {
                        t.parse::<usize>().map_err(|_| format!("`{t}` is not a dimension"))
                    })?)
                }
                "terminal_time" => cfg.terminal_time = Some(real(key, value)?),
                "ensemble_size" => cfg.ensemble_size = Some(integer(key, value)?),
                "master_seed" => cfg.master_seed = Some(integer(key, value)?),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(value)),
                "bins" => cfg.bins = Some(integer(key, value)?),
                "range_lo" => cfg.range_lo = Some(real(key, value)?),
                "range_hi" => cfg.range_hi = Some(real(key, value)?),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.kind = kind.ok_or(ConfigError::MissingKind)?;
        Ok(cfg)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

/// Writes only the fields that are set, so parsing the output gives back an
/// equal config. Reals use the shortest representation that round-trips.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let mut section = |name: &str, entries: Vec<(&str, Option<String>)>| {
            let set: Vec<_> = entries.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect();
            if !set.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{name}]");
                for (k, v) in set {
                    let _ = writeln!(out, "{k} = {v}");
                }
            }
        };
        section("experiment", vec![("kind", Some(self.kind.name().to_string()))]);
        section(
            "model",
            vec![
                ("name", self.model.clone()),
                ("d", self.d.map(|v| v.to_string())),
                ("blr_seed", self.blr_seed.map(|v| v.to_string())),
                ("blr_n", self.blr_n.map(|v| v.to_string())),
                ("alpha_prior", self.alpha_prior.map(|v| v.to_string())),
            ],
        );
        section("schemes", vec![("list", self.schemes.as_deref().map(join))]);
        section(
            "grid",
            vec![
                ("h_ref", self.h_ref.map(|v| v.to_string())),
                ("h", self.h.map(|v| v.to_string())),
                ("hs", self.hs.as_deref().map(join)),
                ("dims", self.dims.as_deref().map(join)),
            ],
        );
        section(
            "run",
            vec![
                ("terminal_time", self.terminal_time.map(|v| v.to_string())),
                ("ensemble_size", self.ensemble_size.map(|v| v.to_string())),
                ("master_seed", self.master_seed.map(|v| v.to_string())),
                ("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string())),
            ],
        );
        section(
            "histogram",
            vec![
                ("bins", self.bins.map(|v| v.to_string())),
                ("range_lo", self.range_lo.map(|v| v.to_string())),
                ("range_hi", self.range_hi.map(|v| v.to_string())),
            ],
        );
        f.write_str(&out)
    }
}

/// A config with every default filled in, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Convergence(ConvergenceConfig),
    Dimension(DimensionConfig),
    Histogram(HistogramConfig),
    EightMode(EightModeConfig),
}

impl RunConfig {
    fn model_kind(&self) -> Result<ModelKind, ConfigError> {
        let name = self.model.as_deref().unwrap_or(match self.kind {
            ExperimentKind::EightMode => "eight-mode-gmm",
            _ => "two-mode-gmm",
        });
        let blr_keys = self.blr_seed.is_some() || self.blr_n.is_some() || self.alpha_prior.is_some();
        let kind = match name {
            "two-mode-gmm" => ModelKind::TwoModeGmm,
            "eight-mode-gmm" => ModelKind::EightModeGmm,
            "blr" => {
                let defaults = BlrParams::default();
                ModelKind::Blr(BlrParams {
                    seed: self.blr_seed.unwrap_or(defaults.seed),
                    n: self.blr_n.unwrap_or(defaults.n),
                    alpha_prior: self.alpha_prior.unwrap_or(defaults.alpha_prior),
                })
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown model `{other}` (expected two-mode-gmm, blr or eight-mode-gmm)"
                )))
            }
        };
        if blr_keys && !matches!(kind, ModelKind::Blr(_)) {
            return Err(ConfigError::Invalid("blr_seed, blr_n and alpha_prior apply only to model blr".into()));
        }
        let allowed = match self.kind {
            ExperimentKind::Convergence | ExperimentKind::Dimension => {
                matches!(kind, ModelKind::TwoModeGmm | ModelKind::Blr(_))
            }
            ExperimentKind::Histogram => matches!(kind, ModelKind::TwoModeGmm),
            ExperimentKind::EightMode => matches!(kind, ModelKind::EightModeGmm),
        };
        if !allowed {
            return Err(ConfigError::Invalid(format!(
                "model `{name}` is not available for the {} experiment",
                self.kind.name()
            )));
        }
        Ok(kind)
    }

    /// Rejects keys that the selected experiment would silently ignore.
    fn check_relevant(&self) -> Result<(), ConfigError> {
        fn set(present: bool, key: &'static str) -> Option<&'static str> {
            present.then_some(key)
        }
        let irrelevant: Vec<&str> = match self.kind {
            ExperimentKind::Convergence => vec![
                set(self.h.is_some(), "h"),
                set(self.dims.is_some(), "dims"),
                set(self.bins.is_some() || self.range_lo.is_some() || self.range_hi.is_some(), "[histogram]"),
            ],
            ExperimentKind::Dimension => vec![
                set(self.hs.is_some(), "hs"),
                set(self.d.is_some(), "d"),
                set(self.bins.is_some() || self.range_lo.is_some() || self.range_hi.is_some(), "[histogram]"),
            ],
            ExperimentKind::Histogram => vec![
                set(self.hs.is_some(), "hs"),
                set(self.dims.is_some(), "dims"),
                set(self.h_ref.is_some(), "h_ref"),
            ],
            ExperimentKind::EightMode => vec![
                set(self.hs.is_some(), "hs"),
                set(self.dims.is_some(), "dims"),
                set(self.h_ref.is_some(), "h_ref"),
                set(self.d.is_some(), "d"),
                set(self.bins.is_some() || self.range_lo.is_some() || self.range_hi.is_some(), "[histogram]"),
            ],
        }
        .into_iter()
        .flatten()
        .collect();
        if irrelevant.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!(
                "{} not used by the {} experiment",
                irrelevant.join(", "),
                self.kind.name()
            )))
        }
    }

    /// Fills in defaults, desk-scale unless `paper_scale` is set. Values given
    /// in the file always win.
    pub fn resolve(&self, paper_scale: bool, workers: Option<usize>) -> Result<Plan, ConfigError> {
        self.check_relevant()?;
        let model = self.model_kind()?;
        let plan = match self.kind {
            ExperimentKind::Convergence => {
                let base = if paper_scale {
                    ConvergenceConfig::paper_scale(model)
                } else {
                    ConvergenceConfig::desk(model)
                };
                let c = ConvergenceConfig {
                    d: self.d.unwrap_or(base.d),
                    schemes: self.schemes.clone().unwrap_or(base.schemes),
                    h_ref: self.h_ref.unwrap_or(base.h_ref),
                    hs: self.hs.clone().unwrap_or(base.hs),
                    terminal_time: self.terminal_time.unwrap_or(base.terminal_time),
                    ensemble_size: self.ensemble_size.unwrap_or(base.ensemble_size),
                    master_seed: self.master_seed.unwrap_or(base.master_seed),
                    workers,
                    model,
                };
                check_nesting(c.h_ref, &c.hs, c.terminal_time)?;
                Plan::Convergence(c)
            }
            ExperimentKind::Dimension => {
                let base = if paper_scale {
                    DimensionConfig::paper_scale(model)
                } else {
                    DimensionConfig::desk(model)
                };
                let c = DimensionConfig {
                    dims: self.dims.clone().unwrap_or(base.dims),
                    schemes: self.schemes.clone().unwrap_or(base.schemes),
                    h_ref: self.h_ref.unwrap_or(base.h_ref),
                    h: self.h.unwrap_or(base.h),
                    terminal_time: self.terminal_time.unwrap_or(base.terminal_time),
                    ensemble_size: self.ensemble_size.unwrap_or(base.ensemble_size),
                    master_seed: self.master_seed.unwrap_or(base.master_seed),
                    workers,
                    model,
                };
                check_nesting(c.h_ref, &[c.h], c.terminal_time)?;
                Plan::Dimension(c)
            }
            ExperimentKind::Histogram => {
                let base = if paper_scale {
                    HistogramConfig::paper_scale()
                } else {
                    HistogramConfig::default()
                };
                let scheme = match self.schemes.as_deref() {
                    None => base.scheme,
                    Some([s]) => *s,
                    Some(_) => return Err(ConfigError::Invalid("histogram takes exactly one scheme".into())),
                };
                Plan::Histogram(HistogramConfig {
                    d: self.d.unwrap_or(base.d),
                    scheme,
                    h: self.h.unwrap_or(base.h),
                    terminal_time: self.terminal_time.unwrap_or(base.terminal_time),
                    ensemble_size: self.ensemble_size.unwrap_or(base.ensemble_size),
                    bins: self.bins.unwrap_or(base.bins),
                    range: (self.range_lo.unwrap_or(base.range.0), self.range_hi.unwrap_or(base.range.1)),
                    master_seed: self.master_seed.unwrap_or(base.master_seed),
                    workers,
                })
            }
            ExperimentKind::EightMode => {
                let base = EightModeConfig::default();
                Plan::EightMode(EightModeConfig {
                    schemes: self.schemes.clone().unwrap_or(base.schemes),
                    h: self.h.unwrap_or(base.h),
                    terminal_time: self.terminal_time.unwrap_or(base.terminal_time),
                    samples: self.ensemble_size.unwrap_or(base.samples),
                    master_seed: self.master_seed.unwrap_or(base.master_seed),
                    workers,
                })
            }
        };
        Ok(plan)
    }
}

/// Every coarse step must be an integer multiple of `h_ref` and divide `T`.
fn check_nesting(h_ref: f64, hs: &[f64], t: f64) -> Result<(), ConfigError> {
    let multiple = |a: f64, b: f64| {
        let r = (a / b).round();
        r >= 1.0 && (r * b - a).abs() <= 1e-9 * a
    };
    if !(h_ref > 0.0) {
        return Err(ConfigError::Invalid(format!("h_ref must be positive, got {h_ref}")));
    }
    for &h in hs {
        if !multiple(h, h_ref) {
            return Err(ConfigError::Invalid(format!("step {h} is not a multiple of h_ref = {h_ref}")));
        }
        if !multiple(t, h) {
            return Err(ConfigError::Invalid(format!("terminal time {t} is not a multiple of step {h}")));
        }
    }
    Ok(())
}
