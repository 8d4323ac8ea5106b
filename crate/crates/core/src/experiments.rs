//! The four experiment protocols and their CSV reports.
//!
//! * convergence: strong error against a fine-grid LMC reference for a grid of
//!   step sizes, with fitted log-log slopes;
//! * dimension: strong error at one step size across dimensions;
//! * histogram: first-coordinate histogram of two-mode GMM samples against the
//!   exact marginal;
//! * eight-mode: terminal scatter on the planar eight-mode mixture with a
//!   mode-coverage statistic.
//!
//! Defaults are desk-scale; `paper_scale` constructors switch to the larger
//! ensembles and finer reference grids.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::{
    fit_loglog_slope, gmm_marginal_density, gmm_marginal_quantile, rmse, wasserstein_1d, Histogram, LogLogFit,
    MetricError, Rmse,
};
use crate::potentials::{
    make_blr, make_eight_mode_gmm, make_two_mode_gmm, BlrDataset, Potential, DEFAULT_ALPHA_PRIOR, EIGHT_MODE_VARIANCE,
};
use crate::schemes::Scheme;
use crate::simulator::{run_coupled, run_ensemble, CoupledSpec, InitialState, SimulationError, SimulationSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `2^{-k}` for each `k` in `exponents`.
pub fn dyadic(exponents: impl IntoIterator<Item = i32>) -> Vec<f64> {
    exponents.into_iter().map(|k| 2f64.powi(-k)).collect()
}

/// Synthetic logistic-regression data settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlrParams {
    pub seed: u64,
    pub n: usize,
    pub alpha_prior: f64,
}

impl Default for BlrParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n: 100,
            alpha_prior: DEFAULT_ALPHA_PRIOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    TwoModeGmm,
    Blr(BlrParams),
    EightModeGmm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TwoModeGmm => "two-mode-gmm",
            ModelKind::Blr(_) => "blr",
            ModelKind::EightModeGmm => "eight-mode-gmm",
        }
    }

    /// Instantiates the model in dimension `d` (ignored for the planar mixture).
    pub fn build(&self, d: usize) -> Result<Box<dyn Potential>, ExperimentError> {
        if d == 0 {
            return Err(ExperimentError::Config("dimension must be positive".into()));
        }
        Ok(match *self {
            ModelKind::TwoModeGmm => Box::new(make_two_mode_gmm(d)),
            ModelKind::Blr(p) => {
                if p.n == 0 || !(p.alpha_prior > 0.0) {
                    return Err(ExperimentError::Config("blr needs n ≥ 1 and alpha_prior > 0".into()));
                }
                Box::new(make_blr(BlrDataset::synthesize(p.seed, p.n, d).with_alpha_prior(p.alpha_prior)))
            }
            ModelKind::EightModeGmm => Box::new(make_eight_mode_gmm()),
        })
    }

    fn describe(&self, d: Option<usize>) -> String {
        let mut s = self.name().to_string();
        if let Some(d) = d {
            let _ = write!(s, " d={d}");
        }
        if let ModelKind::Blr(p) = self {
            let _ = write!(s, " blr_seed={} n={} alpha_prior={}", p.seed, p.n, p.alpha_prior);
        }
        s
    }
}

/// Run parameters recorded alongside every report.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub model: String,
    pub master_seed: u64,
    pub ensemble_size: usize,
    pub terminal_time: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub model: ModelKind,
    pub d: usize,
    pub schemes: Vec<Scheme>,
    pub h_ref: f64,
    pub hs: Vec<f64>,
    pub terminal_time: f64,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

impl ConvergenceConfig {
    /// `d = 10`, `T = 2`, `h_ref = 2⁻¹²`, `h = 2⁻⁹ … 2⁻⁵`, `M = 2000`.
    pub fn desk(model: ModelKind) -> Self {
        Self {
            model,
            d: 10,
            schemes: vec![Scheme::Lmc, Scheme::RKLMC_2G, Scheme::RKLMC_3G_A],
            h_ref: 2f64.powi(-12),
            hs: dyadic(5..=9),
            terminal_time: 2.0,
            ensemble_size: 2000,
            master_seed: 2024,
            workers: None,
        }
    }

    /// `h_ref = 2⁻¹⁵`, `h = 2⁻¹⁰ … 2⁻⁶`, `M = 5000`.
    pub fn paper_scale(model: ModelKind) -> Self {
        Self {
            h_ref: 2f64.powi(-15),
            hs: dyadic(6..=10),
            ensemble_size: 5000,
            ..Self::desk(model)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionConfig {
    pub model: ModelKind,
    pub dims: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub h_ref: f64,
    pub h: f64,
    pub terminal_time: f64,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

impl DimensionConfig {
    /// GMM: `d = 8 … 16`, `h = 2⁻⁴`, `h_ref = 2⁻⁹`; BLR: `d = 6 … 14`,
    /// `h = 2⁻⁶`, `h_ref = 2⁻¹¹`. `T = 2`, `M = 2000`.
    pub fn desk(model: ModelKind) -> Self {
        let (dims, h, h_ref) = match model {
            ModelKind::Blr(_) => (vec![6, 8, 10, 12, 14], 2f64.powi(-6), 2f64.powi(-11)),
            _ => (vec![8, 10, 12, 14, 16], 2f64.powi(-4), 2f64.powi(-9)),
        };
        Self {
            model,
            dims,
            schemes: vec![Scheme::Lmc, Scheme::RKLMC_2G],
            h_ref,
            h,
            terminal_time: 2.0,
            ensemble_size: 2000,
            master_seed: 2024,
            workers: None,
        }
    }

    pub fn paper_scale(model: ModelKind) -> Self {
        Self {
            ensemble_size: 5000,
            ..Self::desk(model)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramConfig {
    pub d: usize,
    pub scheme: Scheme,
    pub h: f64,
    pub terminal_time: f64,
    pub ensemble_size: usize,
    pub bins: usize,
    pub range: (f64, f64),
    pub master_seed: u64,
    pub workers: Option<usize>,
}

impl Default for HistogramConfig {
    /// Two-mode GMM with `d = 10`, RKLMC-2G, `h = 2⁻⁹`, `T = 5`, `M = 5000`,
    /// 40 bins on `[−5, 5]`.
    fn default() -> Self {
        Self {
            d: 10,
            scheme: Scheme::RKLMC_2G,
            h: 2f64.powi(-9),
            terminal_time: 5.0,
            ensemble_size: 5000,
            bins: 40,
            range: (-5.0, 5.0),
            master_seed: 2024,
            workers: None,
        }
    }
}

impl HistogramConfig {
    pub fn paper_scale() -> Self {
        Self {
            h: 2f64.powi(-14),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EightModeConfig {
    pub schemes: Vec<Scheme>,
    pub h: f64,
    pub terminal_time: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

impl Default for EightModeConfig {
    /// LMC, RKLMC-2G and RKLMC-3G-A; `h = 0.02`, `T = 6`, 256 samples each.
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Lmc, Scheme::RKLMC_2G, Scheme::RKLMC_3G_A],
            h: 0.02,
            terminal_time: 6.0,
            samples: 256,
            master_seed: 2024,
            workers: None,
        }
    }
}

/// RMSE of one scheme at one grid point (a step size or a dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCell {
    pub scheme: String,
    pub x: f64,
    pub rmse: Rmse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub scheme: String,
    pub fit: LogLogFit,
}

/// Error-versus-parameter table with per-scheme slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub grid: Vec<f64>,
    pub cells: Vec<ErrorCell>,
    pub slopes: Vec<SlopeRow>,
    pub provenance: Provenance,
}

impl ErrorTable {
    pub fn slope(&self, scheme: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.scheme == scheme).map(|s| s.fit.slope)
    }

    pub fn rmse(&self, scheme: &str, x: f64) -> Option<Rmse> {
        self.cells.iter().find(|c| c.scheme == scheme && c.x == x).map(|c| c.rmse)
    }

    pub fn column(&self, scheme: &str) -> Vec<&ErrorCell> {
        self.cells.iter().filter(|c| c.scheme == scheme).collect()
    }

    fn push_scheme(&mut self, scheme: &str, cells: Vec<ErrorCell>) -> Result<(), ExperimentError> {
        let xs: Vec<f64> = cells.iter().map(|c| c.x).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.rmse.value).collect();
        let fit = fit_loglog_slope(&xs, &ys)?;
        self.slopes.push(SlopeRow {
            scheme: scheme.to_string(),
            fit,
        });
        self.cells.extend(cells);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub bin_center: f64,
    pub empirical: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub rows: Vec<HistogramRow>,
    pub bin_width: f64,
    pub sup_gap: f64,
    pub w2_marginal: f64,
    pub outside: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub scheme: String,
    pub index: usize,
    pub x: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub scheme: String,
    pub modes_covered: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.modes_covered as f64 / 8.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterReport {
    pub rows: Vec<ScatterRow>,
    pub coverage: Vec<Coverage>,
    pub provenance: Provenance,
}

impl ScatterReport {
    pub fn coverage_of(&self, scheme: &str) -> Option<&Coverage> {
        self.coverage.iter().find(|c| c.scheme == scheme)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentReport {
    Convergence(ErrorTable),
    Dimension(ErrorTable),
    Histogram(HistogramReport),
    EightMode(ScatterReport),
}

fn check_positive(name: &str, v: f64) -> Result<(), ExperimentError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ExperimentError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn check_common(schemes: &[Scheme], m: usize, t: f64) -> Result<(), ExperimentError> {
    if schemes.is_empty() {
        return Err(ExperimentError::Config("no schemes selected".into()));
    }
    if m == 0 {
        return Err(ExperimentError::Config("ensemble size must be positive".into()));
    }
    check_positive("terminal time", t)
}

/// Strong error of each scheme at each coarse step against the fine-grid LMC
/// reference, all driven by one Brownian path per trajectory.
pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ErrorTable, ExperimentError> {
    check_common(&cfg.schemes, cfg.ensemble_size, cfg.terminal_time)?;
    if cfg.hs.len() < 3 {
        return Err(ExperimentError::Config("need at least 3 step sizes for a slope".into()));
    }
    if let ModelKind::EightModeGmm = cfg.model {
        return Err(ExperimentError::Config("convergence runs on two-mode-gmm or blr".into()));
    }
    check_positive("h_ref", cfg.h_ref)?;
    let model = cfg.model.build(cfg.d)?;
    let spec = CoupledSpec {
        schemes: cfg.schemes.clone(),
        fine_h: cfg.h_ref,
        coarse_hs: cfg.hs.clone(),
        terminal_time: cfg.terminal_time,
        x0: InitialState::Zero,
    };
    let table = run_coupled(&spec, model.as_ref(), cfg.ensemble_size, cfg.master_seed, cfg.workers)?;
    let mut out = ErrorTable {
        grid: cfg.hs.clone(),
        cells: Vec::new(),
        slopes: Vec::new(),
        provenance: Provenance {
            model: cfg.model.describe(Some(cfg.d)),
            master_seed: cfg.master_seed,
            ensemble_size: cfg.ensemble_size,
            terminal_time: cfg.terminal_time,
            notes: vec![format!("h_ref={}", cfg.h_ref), "reference=lmc on the h_ref grid".into()],
        },
    };
    for &scheme in &cfg.schemes {
        let mut cells = Vec::with_capacity(cfg.hs.len());
        for &h in &cfg.hs {
            let cell = table.cell(scheme, h).expect("every (scheme, h) cell is simulated");
            cells.push(ErrorCell {
                scheme: scheme.name(),
                x: h,
                rmse: rmse(&cell.terminals, &table.reference)?,
            });
        }
        out.push_scheme(&scheme.name(), cells)?;
    }
    Ok(out)
}

/// Seed for dimension `d`; each dimension gets its own Brownian paths.
pub fn seed_for_dimension(master_seed: u64, d: usize) -> u64 {
    master_seed ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Strong error at a single coarse step for each dimension in the grid.
pub fn dimension_experiment(cfg: &DimensionConfig) -> Result<ErrorTable, ExperimentError> {
    check_common(&cfg.schemes, cfg.ensemble_size, cfg.terminal_time)?;
    if cfg.dims.len() < 3 {
        return Err(ExperimentError::Config("need at least 3 dimensions for a slope".into()));
    }
    if let ModelKind::EightModeGmm = cfg.model {
        return Err(ExperimentError::Config("dimension runs on two-mode-gmm or blr".into()));
    }
    check_positive("h", cfg.h)?;
    check_positive("h_ref", cfg.h_ref)?;
    let mut per_scheme: Vec<Vec<ErrorCell>> = vec![Vec::new(); cfg.schemes.len()];
    for &d in &cfg.dims {
        let model = cfg.model.build(d)?;
        let spec = CoupledSpec {
            schemes: cfg.schemes.clone(),
            fine_h: cfg.h_ref,
            coarse_hs: vec![cfg.h],
            terminal_time: cfg.terminal_time,
            x0: InitialState::Zero,
        };
        let seed = seed_for_dimension(cfg.master_seed, d);
        let table = run_coupled(&spec, model.as_ref(), cfg.ensemble_size, seed, cfg.workers)?;
        for (cells, &scheme) in per_scheme.iter_mut().zip(&cfg.schemes) {
            let cell = table.cell(scheme, cfg.h).expect("cell simulated");
            cells.push(ErrorCell {
                scheme: scheme.name(),
                x: d as f64,
                rmse: rmse(&cell.terminals, &table.reference)?,
            });
        }
    }
    let mut out = ErrorTable {
        grid: cfg.dims.iter().map(|d| *d as f64).collect(),
        cells: Vec::new(),
        slopes: Vec::new(),
        provenance: Provenance {
            model: cfg.model.describe(None),
            master_seed: cfg.master_seed,
            ensemble_size: cfg.ensemble_size,
            terminal_time: cfg.terminal_time,
            notes: vec![
                format!("h={}", cfg.h),
                format!("h_ref={}", cfg.h_ref),
                "per-dimension seeds: master_seed ^ d·0x9e3779b97f4a7c15".into(),
            ],
        },
    };
    for (cells, scheme) in per_scheme.into_iter().zip(&cfg.schemes) {
        out.push_scheme(&scheme.name(), cells)?;
    }
    Ok(out)
}

/// First-coordinate histogram of the two-mode GMM ensemble against the exact
/// marginal `½φ(t − m) + ½φ(t + m)`, `m = 2/√d`.
pub fn histogram_experiment(cfg: &HistogramConfig) -> Result<HistogramReport, ExperimentError> {
    check_common(&[cfg.scheme], cfg.ensemble_size, cfg.terminal_time)?;
    check_positive("h", cfg.h)?;
    if cfg.d == 0 {
        return Err(ExperimentError::Config("dimension must be positive".into()));
    }
    let model = make_two_mode_gmm(cfg.d);
    let spec = SimulationSpec::to_time(cfg.scheme, cfg.h, cfg.terminal_time)?;
    let batch = run_ensemble(&spec, &model, cfg.ensemble_size, cfg.master_seed, cfg.workers)?;
    let first = batch.terminals.column(0);
    let m = model.mean()[0];
    let hist = Histogram::new(&first, cfg.bins, cfg.range.0, cfg.range.1)?;
    let exact = |t: f64| gmm_marginal_density(t, m);
    let rows = hist
        .centers()
        .zip(&hist.densities)
        .map(|(c, d)| HistogramRow {
            bin_center: c,
            empirical: *d,
            exact: exact(c),
        })
        .collect();
    Ok(HistogramReport {
        rows,
        bin_width: hist.width,
        sup_gap: hist.sup_gap(exact),
        w2_marginal: wasserstein_1d(&first, |u| gmm_marginal_quantile(u, m))?,
        outside: hist.outside,
        provenance: Provenance {
            model: ModelKind::TwoModeGmm.describe(Some(cfg.d)),
            master_seed: cfg.master_seed,
            ensemble_size: cfg.ensemble_size,
            terminal_time: cfg.terminal_time,
            notes: vec![
                format!("scheme={}", cfg.scheme),
                format!("h={}", cfg.h),
                format!("samples outside range={}", hist.outside),
            ],
        },
    })
}

/// Radius around each mode within which a sample counts towards coverage.
pub fn coverage_radius() -> f64 {
    3.0 * EIGHT_MODE_VARIANCE.sqrt()
}

/// Number of the eight modes with at least one point within
/// [`coverage_radius`].
pub fn modes_covered<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> usize {
    let model = make_eight_mode_gmm();
    let r2 = coverage_radius().powi(2);
    let mut hit = [false; 8];
    for p in points {
        for (h, m) in hit.iter_mut().zip(model.modes()) {
            if (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2) <= r2 {
                *h = true;
            }
        }
    }
    hit.iter().filter(|h| **h).count()
}

/// Terminal samples on the eight-mode mixture from `N(0, I₂)` starts.
pub fn eight_mode_experiment(cfg: &EightModeConfig) -> Result<ScatterReport, ExperimentError> {
    check_common(&cfg.schemes, cfg.samples, cfg.terminal_time)?;
    check_positive("h", cfg.h)?;
    let model = make_eight_mode_gmm();
    let mut rows = Vec::with_capacity(cfg.schemes.len() * cfg.samples);
    let mut coverage = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let spec = SimulationSpec::to_time(scheme, cfg.h, cfg.terminal_time)?.with_initial(InitialState::StandardNormal);
        let batch = run_ensemble(&spec, &model, cfg.samples, cfg.master_seed, cfg.workers)?;
        coverage.push(Coverage {
            scheme: scheme.name(),
            modes_covered: modes_covered(batch.terminals.iter()),
        });
        rows.extend(batch.terminals.iter().enumerate().map(|(i, x)| ScatterRow {
            scheme: scheme.name(),
            index: i,
            x: [x[0], x[1]],
        }));
    }
    Ok(ScatterReport {
        rows,
        coverage,
        provenance: Provenance {
            model: ModelKind::EightModeGmm.describe(None),
            master_seed: cfg.master_seed,
            ensemble_size: cfg.samples,
            terminal_time: cfg.terminal_time,
            notes: vec![format!("h={}", cfg.h), "x0 ~ N(0, I_2)".into()],
        },
    })
}

impl ExperimentReport {
    /// Base name of the files written for this report.
    pub fn stem(&self) -> &'static str {
        match self {
            ExperimentReport::Convergence(_) => "convergence",
            ExperimentReport::Dimension(_) => "dimension",
            ExperimentReport::Histogram(_) => "histogram",
            ExperimentReport::EightMode(_) => "scatter",
        }
    }

    pub fn provenance(&self) -> &Provenance {
        match self {
            ExperimentReport::Convergence(t) | ExperimentReport::Dimension(t) => &t.provenance,
            ExperimentReport::Histogram(h) => &h.provenance,
            ExperimentReport::EightMode(s) => &s.provenance,
        }
    }

    /// Writes the main CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let csv_err = |e: csv::Error| ExperimentError::Io(io::Error::other(e));
        match self {
            ExperimentReport::Convergence(t) | ExperimentReport::Dimension(t) => {
                let x = if matches!(self, ExperimentReport::Convergence(_)) { "h" } else { "d" };
                w.write_record(["scheme", x, "rmse", "stderr"]).map_err(csv_err)?;
                for c in &t.cells {
                    w.write_record([
                        c.scheme.clone(),
                        c.x.to_string(),
                        c.rmse.value.to_string(),
                        c.rmse.stderr.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                for s in &t.slopes {
                    w.write_record([
                        "slope".to_string(),
                        s.scheme.clone(),
                        s.fit.slope.to_string(),
                        s.fit.max_abs_residual.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            ExperimentReport::Histogram(h) => {
                w.write_record(["bin_center", "empirical_density", "exact_density"])
                    .map_err(csv_err)?;
                for r in &h.rows {
                    w.write_record([r.bin_center.to_string(), r.empirical.to_string(), r.exact.to_string()])
                        .map_err(csv_err)?;
                }
                w.write_record(["sup_gap".to_string(), h.sup_gap.to_string()])
                    .map_err(csv_err)?;
                w.write_record(["w2_marginal".to_string(), h.w2_marginal.to_string()])
                    .map_err(csv_err)?;
            }
            ExperimentReport::EightMode(s) => {
                w.write_record(["scheme", "sample_index", "x1", "x2"]).map_err(csv_err)?;
                for r in &s.rows {
                    w.write_record([
                        r.scheme.clone(),
                        r.index.to_string(),
                        r.x[0].to_string(),
                        r.x[1].to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String, ExperimentError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// A matplotlib script that plots the CSV named `csv_name`.
    pub fn plot_script(&self, csv_name: &str) -> String {
        let p = self.provenance();
        let mut s = String::new();
        let _ = writeln!(s, "# Plots {csv_name}.");
        let _ = writeln!(s, "# model: {}", p.model);
        let _ = writeln!(
            s,
            "# master_seed: {}  M: {}  T: {}",
            p.master_seed, p.ensemble_size, p.terminal_time
        );
        for n in &p.notes {
            let _ = writeln!(s, "# {n}");
        }
        s.push_str("import csv\nimport matplotlib.pyplot as plt\n\n");
        let _ = writeln!(s, "rows = list(csv.reader(open({csv_name:?})))");
        match self {
            ExperimentReport::Convergence(_) | ExperimentReport::Dimension(_) => {
                let xlabel = if matches!(self, ExperimentReport::Convergence(_)) {
                    "step size h"
                } else {
                    "dimension d"
                };
                s.push_str(
                    "series = {}\n\
                     for r in rows[1:]:\n    \
                         if r[0] == 'slope':\n        continue\n    \
                         series.setdefault(r[0], []).append((float(r[1]), float(r[2])))\n\
                     slopes = {r[1]: float(r[2]) for r in rows[1:] if r[0] == 'slope'}\n\
                     for name, pts in series.items():\n    \
                         xs, ys = zip(*pts)\n    \
                         plt.loglog(xs, ys, 'o-', base=2, label=f'{name} (slope {slopes[name]:.2f})')\n",
                );
                let _ = writeln!(s, "plt.xlabel({xlabel:?})");
                s.push_str("plt.ylabel('RMSE')\nplt.legend()\n");
            }
            ExperimentReport::Histogram(h) => {
                s.push_str(
                    "body = [r for r in rows[1:] if r[0] not in ('sup_gap', 'w2_marginal')]\n\
                     c = [float(r[0]) for r in body]\n\
                     e = [float(r[1]) for r in body]\n\
                     x = [float(r[2]) for r in body]\n",
                );
                let _ = writeln!(s, "plt.bar(c, e, width={}, alpha=0.5, label='empirical')", h.bin_width);
                s.push_str("plt.plot(c, x, 'k-', label='exact marginal')\nplt.xlabel('x_1')\nplt.legend()\n");
            }
            ExperimentReport::EightMode(_) => {
                s.push_str(
                    "names = sorted({r[0] for r in rows[1:]})\n\
                     fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 4), squeeze=False)\n\
                     for ax, name in zip(axes[0], names):\n    \
                         pts = [(float(r[2]), float(r[3])) for r in rows[1:] if r[0] == name]\n    \
                         ax.scatter(*zip(*pts), s=4)\n    \
                         ax.set_title(name)\n    \
                         ax.set_aspect('equal')\n",
                );
            }
        }
        let _ = writeln!(s, "plt.savefig({:?})", format!("{}.png", self.stem()));
        s
    }

    /// Writes `<stem>.csv`, `<stem>_plot.py` and, for the scatter experiment,
    /// `<stem>_coverage.csv` under `dir`. Returns the written paths.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let stem = self.stem();
        let csv_name = format!("{stem}.csv");
        let csv_path = dir.join(&csv_name);
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        let plot_path = dir.join(format!("{stem}_plot.py"));
        std::fs::write(&plot_path, self.plot_script(&csv_name))?;
        let mut written = vec![csv_path, plot_path];
        if let ExperimentReport::EightMode(s) = self {
            let path = dir.join(format!("{stem}_coverage.csv"));
            let mut text = String::from("scheme,modes_covered,fraction\n");
            for c in &s.coverage {
                let _ = writeln!(text, "{},{},{}", c.scheme, c.modes_covered, c.fraction());
            }
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }

    /// One line per fitted slope or summary statistic.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self {
            ExperimentReport::Convergence(t) | ExperimentReport::Dimension(t) => {
                let what = if matches!(self, ExperimentReport::Convergence(_)) { "h" } else { "d" };
                for r in &t.slopes {
                    let _ = writeln!(
                        s,
                        "slope in {what} {:<12} {:.4} (max residual {:.3e})",
                        r.scheme, r.fit.slope, r.fit.max_abs_residual
                    );
                }
            }
            ExperimentReport::Histogram(h) => {
                let _ = writeln!(s, "sup_gap {:.5}", h.sup_gap);
                let _ = writeln!(s, "w2_marginal {:.5}", h.w2_marginal);
            }
            ExperimentReport::EightMode(r) => {
                for c in &r.coverage {
                    let _ = writeln!(s, "coverage {:<12} {}/8", c.scheme, c.modes_covered);
                }
            }
        }
        s
    }
}
