//! Deterministic trajectory ensembles, plain or coupled to a common path.
//!
//! Row `i` of every ensemble draws its Brownian path from
//! `StreamKey(master_seed, i, 0)` and, when the initial state is random, its
//! starting point from `StreamKey(master_seed, i, 1)`. Rows share no mutable
//! state and are collected in index order, so results do not depend on how
//! many workers run them.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::potentials::Potential;
use crate::rng::{accumulate, derive_stream, IncrementPair, StreamKey, INITIAL_STATE};
use crate::schemes::{stepsize_bound, Scheme, SchemeError, StepsizeConstants, Stepper};

/// States with a coordinate beyond this magnitude count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Relative tolerance when checking that grids nest.
const GRID_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("{scheme} diverged at h = {h}: trajectory {trajectory}, step {step}")]
    Divergence {
        scheme: String,
        h: f64,
        trajectory: u64,
        step: usize,
    },
    #[error("invalid simulation setup: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("{} of {rows} trajectories failed; first: {}", failures.len(), failures[0])]
    Ensemble {
        rows: usize,
        failures: Vec<SimulationError>,
    },
}

impl SimulationError {
    /// Whether the error (or any aggregated row error) is a divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            SimulationError::Divergence { .. } => true,
            SimulationError::Ensemble { failures, .. } => failures.iter().any(|f| f.is_divergence()),
            _ => false,
        }
    }
}

/// How the state at time zero is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Zero,
    StandardNormal,
    Explicit(Vec<f64>),
}

impl InitialState {
    fn realize(&self, d: usize, master_seed: u64, index: u64) -> Result<Vec<f64>, SimulationError> {
        match self {
            InitialState::Zero => Ok(vec![0.0; d]),
            InitialState::StandardNormal => {
                Ok(derive_stream(StreamKey::new(master_seed, index, INITIAL_STATE)).sample_vec(d))
            }
            InitialState::Explicit(x) if x.len() == d => Ok(x.clone()),
            InitialState::Explicit(x) => Err(SimulationError::InvalidSpec(format!(
                "initial state has {} coordinates, model has {d}",
                x.len()
            ))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Zero => f.write_str("zero"),
            InitialState::StandardNormal => f.write_str("standard-normal"),
            InitialState::Explicit(x) => write!(f, "{x:?}"),
        }
    }
}

/// One uniform-step simulation up to `T = n_steps · h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub scheme: Scheme,
    pub x0: InitialState,
    pub h: f64,
    pub n_steps: usize,
    pub record_path: bool,
    /// When set, a warning is logged if `h` exceeds the provable step bound.
    pub stepsize_constants: Option<StepsizeConstants>,
}

impl SimulationSpec {
    pub fn new(scheme: Scheme, h: f64, n_steps: usize) -> Self {
        Self {
            scheme,
            x0: InitialState::Zero,
            h,
            n_steps,
            record_path: false,
            stepsize_constants: None,
        }
    }

    /// Spec reaching `terminal_time` with step `h`; `T/h` must be an integer.
    pub fn to_time(scheme: Scheme, h: f64, terminal_time: f64) -> Result<Self, SimulationError> {
        let n_steps = steps_for(terminal_time, h)?;
        Ok(Self::new(scheme, h, n_steps))
    }

    pub fn with_initial(mut self, x0: InitialState) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_path(mut self) -> Self {
        self.record_path = true;
        self
    }

    pub fn terminal_time(&self) -> f64 {
        self.n_steps as f64 * self.h
    }

    /// FNV-1a hash of the spec's textual form, for provenance records.
    pub fn digest(&self) -> u64 {
        let text = format!(
            "{}|{}|{:e}|{}|{}",
            self.scheme, self.x0, self.h, self.n_steps, self.record_path
        );
        text.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    fn validate(&self, model: &dyn Potential) -> Result<(), SimulationError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SimulationError::InvalidSpec(format!("step must be positive, got {}", self.h)));
        }
        if self.n_steps == 0 {
            return Err(SimulationError::InvalidSpec("n_steps must be positive".into()));
        }
        if let (Scheme::Rk(c), Some(k)) = (self.scheme, self.stepsize_constants) {
            let bound = stepsize_bound(&c, &k)?;
            if self.h > bound {
                log::warn!(
                    "{}: h = {} exceeds the provable step bound {bound} for {}",
                    self.scheme,
                    self.h,
                    model.name()
                );
            }
        }
        Ok(())
    }
}

/// Number of steps of length `h` that reach `t`, if it is an integer.
pub fn steps_for(t: f64, h: f64) -> Result<usize, SimulationError> {
    if !(h > 0.0 && t > 0.0) {
        return Err(SimulationError::InvalidSpec(format!("T = {t} and h = {h} must be positive")));
    }
    let n = (t / h).round();
    if n < 1.0 || (n * h - t).abs() > GRID_TOLERANCE * t.max(1.0) {
        return Err(SimulationError::InvalidSpec(format!("h = {h} does not divide T = {t}")));
    }
    Ok(n as usize)
}

/// Terminal state and, when requested, the whole path (`(n_steps + 1) × d`,
/// row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub terminal: Vec<f64>,
    pub path: Option<Vec<f64>>,
}

/// Row-major `rows × dim` matrix of states.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row length mismatch");
            data.extend(r);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Coordinate `k` of every row.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.iter().map(|r| r[k]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Terminal states of an ensemble with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub terminals: Samples,
    pub master_seed: u64,
    pub spec_digest: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.terminals.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_state(y: &[f64], scheme: Scheme, h: f64, trajectory: u64, step: usize) -> Result<(), SimulationError> {
    if y.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD) {
        Ok(())
    } else {
        Err(SimulationError::Divergence {
            scheme: scheme.name(),
            h,
            trajectory,
            step,
        })
    }
}

/// Runs one trajectory with the path noise of `key`.
pub fn run_trajectory(
    spec: &SimulationSpec,
    model: &dyn Potential,
    key: StreamKey,
) -> Result<Trajectory, SimulationError> {
    spec.validate(model)?;
    let d = model.dim();
    let mut stepper = Stepper::new(spec.scheme, model)?;
    let mut y = spec.x0.realize(d, key.master_seed, key.trajectory_index)?;
    let mut stream = derive_stream(key);
    let mut path = spec.record_path.then(|| {
        let mut p = Vec::with_capacity((spec.n_steps + 1) * d);
        p.extend_from_slice(&y);
        p
    });
    let mut dw = vec![0.0; d];
    let mut dz = vec![0.0; d];
    for step in 1..=spec.n_steps {
        stream.fill_increment(spec.h, &mut dw, &mut dz);
        stepper.step(&mut y, &dw, &dz, spec.h)?;
        check_state(&y, spec.scheme, spec.h, key.trajectory_index, step)?;
        if let Some(p) = path.as_mut() {
            p.extend_from_slice(&y);
        }
    }
    Ok(Trajectory { terminal: y, path })
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn collect_rows<T: Send>(
    m: usize,
    workers: Option<usize>,
    row: impl Fn(u64) -> Result<T, SimulationError> + Sync + Send,
) -> Result<Vec<T>, SimulationError> {
    let results: Vec<Result<T, SimulationError>> =
        with_workers(workers, || (0..m as u64).into_par_iter().map(&row).collect());
    let mut ok = Vec::with_capacity(m);
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(e),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(SimulationError::Ensemble { rows: m, failures })
    }
}

/// Runs `m` independent trajectories; row `i` uses `StreamKey(master_seed, i, 0)`.
pub fn run_ensemble(
    spec: &SimulationSpec,
    model: &dyn Potential,
    m: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<SampleBatch, SimulationError> {
    if m == 0 {
        return Err(SimulationError::InvalidSpec("ensemble size must be positive".into()));
    }
    spec.validate(model)?;
    Stepper::new(spec.scheme, model)?;
    let quiet = SimulationSpec {
        stepsize_constants: None,
        record_path: false,
        ..spec.clone()
    };
    let rows = collect_rows(m, workers, |i| {
        run_trajectory(&quiet, model, StreamKey::path(master_seed, i)).map(|t| t.terminal)
    })?;
    Ok(SampleBatch {
        terminals: Samples::from_rows(model.dim(), rows),
        master_seed,
        spec_digest: spec.digest(),
    })
}

/// Grid layout for common-path coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSpec {
    pub schemes: Vec<Scheme>,
    pub fine_h: f64,
    pub coarse_hs: Vec<f64>,
    pub terminal_time: f64,
    pub x0: InitialState,
}

/// Terminal states of one `(scheme, h)` cell, row-aligned with the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledCell {
    pub scheme: Scheme,
    pub h: f64,
    pub terminals: Samples,
}

/// Fine-grid LMC reference and every coarse cell, driven by the same paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTable {
    pub reference: Samples,
    pub cells: Vec<CoupledCell>,
}

impl CoupledTable {
    pub fn cell(&self, scheme: Scheme, h: f64) -> Option<&CoupledCell> {
        self.cells.iter().find(|c| c.scheme == scheme && c.h == h)
    }
}

/// Fine steps per coarse step, when `coarse` is an integer multiple of `fine`.
fn nesting_ratio(coarse: f64, fine: f64) -> Result<usize, SimulationError> {
    let r = (coarse / fine).round();
    if r < 1.0 || (r * fine - coarse).abs() > GRID_TOLERANCE * coarse {
        return Err(SimulationError::InvalidSpec(format!(
            "coarse step {coarse} is not a multiple of the fine step {fine}"
        )));
    }
    Ok(r as usize)
}

/// Simulates every `(scheme, coarse h)` cell from one fine Brownian path per
/// trajectory. The reference is LMC on the fine grid; coarse increments are
/// exact aggregates of the fine ones.
pub fn run_coupled(
    spec: &CoupledSpec,
    model: &dyn Potential,
    m: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<CoupledTable, SimulationError> {
    if m == 0 {
        return Err(SimulationError::InvalidSpec("ensemble size must be positive".into()));
    }
    let n_fine = steps_for(spec.terminal_time, spec.fine_h)?;
    let mut layout = Vec::new();
    for &h in &spec.coarse_hs {
        let ratio = nesting_ratio(h, spec.fine_h)?;
        let n_coarse = steps_for(spec.terminal_time, h)?;
        if n_coarse * ratio != n_fine {
            return Err(SimulationError::InvalidSpec(format!(
                "coarse grid h = {h} does not nest in the fine grid"
            )));
        }
        layout.push((h, ratio, n_coarse));
    }
    for &s in &spec.schemes {
        Stepper::new(s, model)?;
    }
    let d = model.dim();

    let rows = collect_rows(m, workers, |i| {
        let mut stream = derive_stream(StreamKey::path(master_seed, i));
        let x0 = spec.x0.realize(d, master_seed, i)?;
        let mut dw = vec![0.0; n_fine * d];
        let mut dz = vec![0.0; n_fine * d];
        for (w, z) in dw.chunks_exact_mut(d).zip(dz.chunks_exact_mut(d)) {
            stream.fill_increment(spec.fine_h, w, z);
        }

        let mut reference = x0.clone();
        let mut lmc = Stepper::new(Scheme::Lmc, model)?;
        for n in 0..n_fine {
            let r = n * d..(n + 1) * d;
            lmc.step(&mut reference, &dw[r.clone()], &dz[r], spec.fine_h)?;
            check_state(&reference, Scheme::Lmc, spec.fine_h, i, n + 1)?;
        }

        let mut cells = Vec::with_capacity(spec.schemes.len() * layout.len());
        let mut acc = IncrementPair::zero(d, 0.0);
        for &scheme in &spec.schemes {
            let mut stepper = Stepper::new(scheme, model)?;
            for &(h, ratio, n_coarse) in &layout {
                let mut y = x0.clone();
                for n in 0..n_coarse {
                    acc.dw.fill(0.0);
                    acc.dz.fill(0.0);
                    acc.h = 0.0;
                    for j in n * ratio..(n + 1) * ratio {
                        let r = j * d..(j + 1) * d;
                        accumulate(&mut acc, &dw[r.clone()], &dz[r], spec.fine_h);
                    }
                    stepper.step(&mut y, &acc.dw, &acc.dz, h)?;
                    check_state(&y, scheme, h, i, n + 1)?;
                }
                cells.push(y);
            }
        }
        Ok((reference, cells))
    })?;

    let mut reference = Vec::with_capacity(m);
    let n_cells = spec.schemes.len() * layout.len();
    let mut columns: Vec<Vec<Vec<f64>>> = (0..n_cells).map(|_| Vec::with_capacity(m)).collect();
    for (r, cells) in rows {
        reference.push(r);
        for (col, y) in columns.iter_mut().zip(cells) {
            col.push(y);
        }
    }
    let mut columns = columns.into_iter();
    let mut cells = Vec::with_capacity(n_cells);
    for &scheme in &spec.schemes {
        for &(h, _, _) in &layout {
            cells.push(CoupledCell {
                scheme,
                h,
                terminals: Samples::from_rows(d, columns.next().expect("cell column")),
            });
        }
    }
    Ok(CoupledTable {
        reference: Samples::from_rows(d, reference),
        cells,
    })
}
