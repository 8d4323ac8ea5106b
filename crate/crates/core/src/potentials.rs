//! Target potentials `U` with analytic derivative oracles.
//!
//! Every model provides `U` and `∇U`. The Taylor scheme additionally needs the
//! Hessian-vector product `∇²U·v` and the gradient of the Laplacian `∇(ΔU)`;
//! models advertise which of these they carry through [`Capabilities`].
//! Potentials are only defined up to an additive constant.

use std::fmt;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::linalg::{dot, norm_sq};
use crate::rng::{derive_stream, NormalStream, StreamKey};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("model `{model}` does not provide {oracle}")]
    Unsupported { model: String, oracle: &'static str },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which derivative oracles a model implements. The gradient is mandatory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub gradient: bool,
    pub hessian_vector: bool,
    pub laplacian_gradient: bool,
}

impl Capabilities {
    pub const ALL: Self = Self {
        gradient: true,
        hessian_vector: true,
        laplacian_gradient: true,
    };
    pub const GRADIENT_ONLY: Self = Self {
        gradient: true,
        hessian_vector: false,
        laplacian_gradient: false,
    };

    /// Whether the Taylor scheme can run on the model.
    pub fn supports_taylor(&self) -> bool {
        self.gradient && self.hessian_vector && self.laplacian_gradient
    }
}

/// A potential `U: ℝ^d → ℝ` with derivative oracles. Implementations are
/// immutable after construction and shared read-only between workers.
pub trait Potential: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn capabilities(&self) -> Capabilities;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇U(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∇²U(x)·v` into `out`.
    fn hessian_vector(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) -> Result<(), PotentialError> {
        Err(self.unsupported("hessian_vector"))
    }

    /// Writes `∇(ΔU)(x)` into `out`.
    fn laplacian_gradient(&self, _x: &[f64], _out: &mut [f64]) -> Result<(), PotentialError> {
        Err(self.unsupported("laplacian_gradient"))
    }

    fn unsupported(&self, oracle: &'static str) -> PotentialError {
        PotentialError::Unsupported {
            model: self.name().to_string(),
            oracle,
        }
    }
}

impl fmt::Debug for dyn Potential + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.name(), self.dim())
    }
}

/// `U(x) = |x|²/2`; stationary law `N(0, I_d)`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    d: usize,
}

pub fn make_quadratic(d: usize) -> Quadratic {
    assert!(d >= 1, "dimension must be positive");
    Quadratic { d }
}

impl Potential for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * norm_sq(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn hessian_vector(&self, _x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        out.copy_from_slice(v);
        Ok(())
    }
    fn laplacian_gradient(&self, _x: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        out.fill(0.0);
        Ok(())
    }
}

/// `U(x) = xᵀAx/2` for a symmetric `A` (row-major). With `A = 0` this is the
/// flat potential, under which every scheme reduces to Brownian motion.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    d: usize,
    a: Vec<f64>,
}

impl QuadraticForm {
    /// Symmetrizes `a` on construction.
    pub fn new(d: usize, a: Vec<f64>) -> Self {
        assert!(d >= 1 && a.len() == d * d, "matrix must be d×d");
        let mut sym = a.clone();
        for i in 0..d {
            for j in 0..d {
                sym[i * d + j] = 0.5 * (a[i * d + j] + a[j * d + i]);
            }
        }
        Self { d, a: sym }
    }

    pub fn flat(d: usize) -> Self {
        Self::new(d, vec![0.0; d * d])
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = scale;
        }
        Self::new(d, a)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (row, o) in self.a.chunks_exact(self.d).zip(out.iter_mut()) {
            *o = dot(row, v);
        }
    }
}

impl Potential for QuadraticForm {
    fn name(&self) -> &str {
        "quadratic-form"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.d];
        self.apply(x, &mut ax);
        0.5 * dot(x, &ax)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out);
    }
    fn hessian_vector(&self, _x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        self.apply(v, out);
        Ok(())
    }
    fn laplacian_gradient(&self, _x: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        out.fill(0.0);
        Ok(())
    }
}

/// Equal-weight mixture of `N(μ, I)` and `N(−μ, I)` with `μ = (2/√d)(1, …, 1)`.
///
/// With `s = ⟨x, μ⟩` the potential is
/// `U(x) = (|x|² + |μ|²)/2 − log cosh(s) − log 2`, so
///
/// ```text
/// ∇U(x)     = x − tanh(s) μ
/// ∇²U(x) v  = v − sech²(s) ⟨μ, v⟩ μ
/// ∇(ΔU)(x)  = 2 |μ|² sech²(s) tanh(s) μ
/// ```
#[derive(Debug, Clone)]
pub struct TwoModeGmm {
    mean: Vec<f64>,
    mean_norm_sq: f64,
}

pub fn make_two_mode_gmm(d: usize) -> TwoModeGmm {
    assert!(d >= 1, "dimension must be positive");
    TwoModeGmm::with_mean(vec![2.0 / (d as f64).sqrt(); d])
}

impl TwoModeGmm {
    /// Mixture with modes at `±mean`.
    pub fn with_mean(mean: Vec<f64>) -> Self {
        let mean_norm_sq = norm_sq(&mean);
        Self { mean, mean_norm_sq }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

fn log_cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech_sq(s: f64) -> f64 {
    // 4 e^{-2|s|} / (1 + e^{-2|s|})², finite for every s.
    let e = (-2.0 * s.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

impl Potential for TwoModeGmm {
    fn name(&self) -> &str {
        "two-mode-gmm"
    }
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * (norm_sq(x) + self.mean_norm_sq) - log_cosh(dot(x, &self.mean)) - std::f64::consts::LN_2
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let t = dot(x, &self.mean).tanh();
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(&self.mean) {
            *o = xi - t * mi;
        }
    }
    fn hessian_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        let c = sech_sq(dot(x, &self.mean)) * dot(&self.mean, v);
        for ((o, vi), mi) in out.iter_mut().zip(v).zip(&self.mean) {
            *o = vi - c * mi;
        }
        Ok(())
    }
    fn laplacian_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        let s = dot(x, &self.mean);
        let c = 2.0 * self.mean_norm_sq * sech_sq(s) * s.tanh();
        for (o, mi) in out.iter_mut().zip(&self.mean) {
            *o = c * mi;
        }
        Ok(())
    }
}

/// Equal-weight mixture of `N(m_i, 0.7 I₂)`, `m_i = 10(cos 2πi/8, sin 2πi/8)`.
/// Gradient only.
#[derive(Debug, Clone)]
pub struct EightModeGmm {
    modes: [[f64; 2]; 8],
    variance: f64,
}

pub const EIGHT_MODE_VARIANCE: f64 = 0.7;
pub const EIGHT_MODE_RADIUS: f64 = 10.0;

pub fn make_eight_mode_gmm() -> EightModeGmm {
    let mut modes = [[0.0; 2]; 8];
    for (i, m) in modes.iter_mut().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
        *m = [EIGHT_MODE_RADIUS * angle.cos(), EIGHT_MODE_RADIUS * angle.sin()];
    }
    EightModeGmm {
        modes,
        variance: EIGHT_MODE_VARIANCE,
    }
}

impl EightModeGmm {
    pub fn modes(&self) -> &[[f64; 2]; 8] {
        &self.modes
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Log-weights `−|x − m_i|²/(2σ²)` and their maximum.
    fn log_weights(&self, x: &[f64]) -> ([f64; 8], f64) {
        let mut lw = [0.0; 8];
        let mut max = f64::NEG_INFINITY;
        for (l, m) in lw.iter_mut().zip(&self.modes) {
            let r2 = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
            *l = -r2 / (2.0 * self.variance);
            max = max.max(*l);
        }
        (lw, max)
    }
}

impl Potential for EightModeGmm {
    fn name(&self) -> &str {
        "eight-mode-gmm"
    }
    fn dim(&self) -> usize {
        2
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::GRADIENT_ONLY
    }
    fn value(&self, x: &[f64]) -> f64 {
        let (lw, max) = self.log_weights(x);
        let sum: f64 = lw.iter().map(|l| (l - max).exp()).sum();
        -(max + (sum / 8.0).ln())
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        // softmax-weighted mean of the modes
        let (lw, max) = self.log_weights(x);
        let mut total = 0.0;
        let mut mean = [0.0; 2];
        for (l, m) in lw.iter().zip(&self.modes) {
            let w = (l - max).exp();
            total += w;
            mean[0] += w * m[0];
            mean[1] += w * m[1];
        }
        out[0] = (x[0] - mean[0] / total) / self.variance;
        out[1] = (x[1] - mean[1] / total) / self.variance;
    }
}

/// Synthetic logistic-regression data together with the prior strength.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrDataset {
    n: usize,
    d: usize,
    /// Row-major `n × d` design matrix.
    x: Vec<f64>,
    /// Responses in `{0, 1}`.
    y: Vec<f64>,
    /// `XᵀX / n`, row-major `d × d`.
    sigma_x: Vec<f64>,
    pub alpha_prior: f64,
    /// Known only for synthesized data.
    pub theta_true: Option<Vec<f64>>,
}

pub const DEFAULT_ALPHA_PRIOR: f64 = 0.5;
const BLR_DATA_TAG: u64 = 2;

impl BlrDataset {
    pub fn new(n: usize, d: usize, x: Vec<f64>, y: Vec<f64>, alpha_prior: f64) -> Result<Self, PotentialError> {
        if n == 0 || d == 0 {
            return Err(PotentialError::InvalidDataset("n and d must be positive".into()));
        }
        if x.len() != n * d || y.len() != n {
            return Err(PotentialError::InvalidDataset(format!(
                "expected {n}×{d} design and {n} responses, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(PotentialError::InvalidDataset(format!("response {bad} is not 0 or 1")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidDataset("non-finite design entry".into()));
        }
        if !(alpha_prior > 0.0 && alpha_prior.is_finite()) {
            return Err(PotentialError::InvalidDataset(format!(
                "prior strength must be positive, got {alpha_prior}"
            )));
        }
        let mut sigma_x = vec![0.0; d * d];
        for row in x.chunks_exact(d) {
            for i in 0..d {
                for j in 0..d {
                    sigma_x[i * d + j] += row[i] * row[j];
                }
            }
        }
        for v in &mut sigma_x {
            *v /= n as f64;
        }
        Ok(Self {
            n,
            d,
            x,
            y,
            sigma_x,
            alpha_prior,
            theta_true: None,
        })
    }

    /// i.i.d. standard normal design, `θ_true = (1/√d)(1, …, 1)`,
    /// `Y_i ~ Bernoulli(1/(1 + exp(−x_iᵀθ_true)))`, prior strength 0.5.
    pub fn synthesize(seed: u64, n: usize, d: usize) -> Self {
        assert!(n >= 1 && d >= 1, "n and d must be positive");
        let mut stream = derive_stream(StreamKey::new(seed, 0, BLR_DATA_TAG));
        let x = stream.sample_vec(n * d);
        let theta = vec![1.0 / (d as f64).sqrt(); d];
        let y = bernoulli_responses(&x, d, &theta, &mut stream);
        let mut data = Self::new(n, d, x, y, DEFAULT_ALPHA_PRIOR).expect("synthesized data is valid");
        data.theta_true = Some(theta);
        data
    }

    pub fn with_alpha_prior(mut self, alpha_prior: f64) -> Self {
        self.alpha_prior = alpha_prior;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn design(&self) -> &[f64] {
        &self.x
    }
    pub fn responses(&self) -> &[f64] {
        &self.y
    }
    pub fn sigma_x(&self) -> &[f64] {
        &self.sigma_x
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Header `x_1,…,x_d,y`, one row per observation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PotentialError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(format!("{}", self.y[i] as u8));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, alpha_prior: f64) -> Result<Self, PotentialError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let d = header.len().saturating_sub(1);
        let expected = (1..=d).map(|j| format!("x_{j}")).chain(std::iter::once("y".to_string()));
        if d == 0 || !header.iter().zip(expected).all(|(a, b)| a == b) {
            return Err(PotentialError::InvalidDataset(format!(
                "header must be x_1,…,x_d,y; got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| PotentialError::InvalidDataset(format!("bad number `{field}`")))?;
                if j < d {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Self::new(y.len(), d, x, y, alpha_prior)
    }
}

/// Draws `Y_i ~ Bernoulli(σ(x_iᵀθ))` for every row of the `· × d` design `x`.
pub fn bernoulli_responses(x: &[f64], d: usize, theta: &[f64], stream: &mut NormalStream) -> Vec<f64> {
    x.chunks_exact(d)
        .map(|row| {
            let p = sigmoid(dot(row, theta));
            if stream.next_uniform() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `1 / (1 + e^{−z})` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{z})` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Posterior potential of Bayesian logistic regression,
/// `U(θ) = −YᵀXθ + Σ log(1 + e^{−θᵀx_i}) + (α/2) θᵀΣ_Xθ`.
#[derive(Debug, Clone)]
pub struct Blr {
    data: BlrDataset,
    /// `XᵀY`, precomputed.
    xty: Vec<f64>,
}

pub fn make_blr(data: BlrDataset) -> Blr {
    let mut xty = vec![0.0; data.d];
    for i in 0..data.n {
        if data.y[i] != 0.0 {
            for (acc, v) in xty.iter_mut().zip(data.row(i)) {
                *acc += data.y[i] * v;
            }
        }
    }
    Blr { data, xty }
}

impl Blr {
    pub fn dataset(&self) -> &BlrDataset {
        &self.data
    }

    fn add_prior(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.data.d;
        for (o, row) in out.iter_mut().zip(self.data.sigma_x.chunks_exact(d)) {
            *o += scale * dot(row, v);
        }
    }
}

impl Potential for Blr {
    fn name(&self) -> &str {
        "blr"
    }
    fn dim(&self) -> usize {
        self.data.d
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }
    fn value(&self, theta: &[f64]) -> f64 {
        let data = &self.data;
        let mut sx = vec![0.0; data.d];
        for (o, row) in sx.iter_mut().zip(data.sigma_x.chunks_exact(data.d)) {
            *o = dot(row, theta);
        }
        let loss: f64 = (0..data.n).map(|i| softplus(-dot(data.row(i), theta))).sum();
        -dot(&self.xty, theta) + loss + 0.5 * data.alpha_prior * dot(theta, &sx)
    }
    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.xty) {
            *o = -v;
        }
        for i in 0..self.data.n {
            let row = self.data.row(i);
            // d/dθ log(1 + e^{−z}) = −σ(−z) x
            let w = sigmoid(-dot(row, theta));
            for (o, xi) in out.iter_mut().zip(row) {
                *o -= w * xi;
            }
        }
        self.add_prior(theta, self.data.alpha_prior, out);
    }
    fn hessian_vector(&self, theta: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        out.fill(0.0);
        for i in 0..self.data.n {
            let row = self.data.row(i);
            let s = sigmoid(dot(row, theta));
            let c = s * (1.0 - s) * dot(row, v);
            for (o, xi) in out.iter_mut().zip(row) {
                *o += c * xi;
            }
        }
        self.add_prior(v, self.data.alpha_prior, out);
        Ok(())
    }
    fn laplacian_gradient(&self, theta: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        out.fill(0.0);
        for i in 0..self.data.n {
            let row = self.data.row(i);
            let s = sigmoid(dot(row, theta));
            // σ'' = σ(1 − σ)(1 − 2σ)
            let c = norm_sq(row) * s * (1.0 - s) * (1.0 - 2.0 * s);
            for (o, xi) in out.iter_mut().zip(row) {
                *o += c * xi;
            }
        }
        Ok(())
    }
}

/// Wraps a model and counts gradient evaluations.
#[derive(Debug)]
pub struct CountingPotential<P> {
    inner: P,
    gradients: AtomicUsize,
}

impl<P: Potential> CountingPotential<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            gradients: AtomicUsize::new(0),
        }
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.gradients.store(0, Ordering::Relaxed);
    }
}

impl<P: Potential> Potential for CountingPotential<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x, out)
    }
    fn hessian_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        self.inner.hessian_vector(x, v, out)
    }
    fn laplacian_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        self.inner.laplacian_gradient(x, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grad(p: &dyn Potential, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; p.dim()];
        p.gradient(x, &mut g);
        g
    }

    fn fd_grad(p: &dyn Potential, x: &[f64], eps: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[k] += eps;
                b[k] -= eps;
                (p.value(&a) - p.value(&b)) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn quadratic_oracles() {
        let q = make_quadratic(2);
        assert_eq!(grad(&q, &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(grad(&q, &[3.0, -4.0]), vec![3.0, -4.0]);
        let mut out = vec![1.0; 2];
        q.laplacian_gradient(&[5.0, 7.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn two_mode_mean_has_norm_two() {
        for d in [1, 2, 3, 10, 57] {
            assert_abs_diff_eq!(norm_sq(make_two_mode_gmm(d).mean()).sqrt(), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_mode_gradient_at_mode() {
        let g = make_two_mode_gmm(4);
        assert_eq!(grad(&g, &[0.0; 4]), vec![0.0; 4]);
        let mu = vec![1.0; 4];
        let analytic = grad(&g, &mu);
        let fd = fd_grad(&g, &mu, 1e-5);
        for (a, f) in analytic.iter().zip(&fd) {
            assert_abs_diff_eq!(*a, *f, epsilon = 1e-9);
            assert_abs_diff_eq!(*a, 1.0 - 4f64.tanh(), epsilon = 1e-15);
            assert_abs_diff_eq!(*a, 0.000_670_70, epsilon = 1e-8);
        }
    }

    #[test]
    fn two_mode_matches_mixture_log_density() {
        // −log(½e^{−|x−μ|²/2} + ½e^{−|x+μ|²/2}) − log 2
        let g = make_two_mode_gmm(3);
        let x = [0.3, -1.2, 0.8];
        let mu = g.mean();
        let a: f64 = x.iter().zip(mu).map(|(x, m)| (x - m).powi(2)).sum();
        let b: f64 = x.iter().zip(mu).map(|(x, m)| (x + m).powi(2)).sum();
        let direct = -(0.5 * (-a / 2.0).exp() + 0.5 * (-b / 2.0).exp()).ln();
        assert_abs_diff_eq!(g.value(&x), direct - std::f64::consts::LN_2, epsilon = 1e-13);
    }

    #[test]
    fn eight_mode_gradient() {
        let e = make_eight_mode_gmm();
        let g0 = grad(&e, &[0.0, 0.0]);
        assert!(g0.iter().all(|v| v.abs() < 1e-12), "{g0:?}");

        let m0 = [10.0, 0.0];
        let analytic = grad(&e, &m0);
        let fd = fd_grad(&e, &m0, 1e-5);
        let err = analytic.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let scale = norm_sq(&analytic).sqrt().max(1.0);
        assert!(err / scale < 1e-5);

        let far = [100.0, 0.0];
        let g = grad(&e, &far);
        let nearest = [(far[0] - 10.0) / 0.7, 0.0];
        let gap = ((g[0] - nearest[0]).powi(2) + (g[1] - nearest[1]).powi(2)).sqrt();
        assert!(gap / norm_sq(&g).sqrt() < 1e-6);
    }

    #[test]
    fn eight_mode_is_gradient_only() {
        let e = make_eight_mode_gmm();
        let mut out = [0.0; 2];
        assert!(matches!(
            e.hessian_vector(&[0.0, 0.0], &[1.0, 0.0], &mut out),
            Err(PotentialError::Unsupported { .. })
        ));
        assert!(!e.capabilities().supports_taylor());
    }

    #[test]
    fn blr_single_datum_gradient() {
        let data = BlrDataset::new(1, 1, vec![1.0], vec![1.0], 1e-300).unwrap();
        let blr = make_blr(data);
        let g = grad(&blr, &[0.0]);
        // −x·y − x·σ(0) with a negligible prior
        assert_abs_diff_eq!(g[0], -1.5, epsilon = 1e-12);
        let fd = fd_grad(&blr, &[0.0], 1e-5);
        assert!((g[0] - fd[0]).abs() / g[0].abs() < 1e-6);
    }

    #[test]
    fn blr_prior_term_is_exact() {
        let data = BlrDataset::synthesize(3, 100, 4);
        assert_eq!(data.alpha_prior, 0.5);
        let with_prior = make_blr(data.clone());
        let without = make_blr(data.clone().with_alpha_prior(f64::MIN_POSITIVE));
        let theta = [0.4, -0.2, 1.1, 0.3];
        let gp = grad(&with_prior, &theta);
        let g0 = grad(&without, &theta);
        let s = data.sigma_x();
        for k in 0..4 {
            let expected: f64 = 0.5 * (0..4).map(|j| s[k * 4 + j] * theta[j]).sum::<f64>();
            assert_abs_diff_eq!(gp[k] - g0[k], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn blr_stable_for_large_margins() {
        let data = BlrDataset::new(2, 1, vec![50.0, -50.0], vec![1.0, 0.0], 0.5).unwrap();
        let blr = make_blr(data);
        for theta in [-40.0, 40.0] {
            let g = grad(&blr, &[theta]);
            let mut hv = [0.0];
            let mut lg = [0.0];
            blr.hessian_vector(&[theta], &[1.0], &mut hv).unwrap();
            blr.laplacian_gradient(&[theta], &mut lg).unwrap();
            assert!(g[0].is_finite() && hv[0].is_finite() && lg[0].is_finite());
            assert!(blr.value(&[theta]).is_finite());
        }
    }

    #[test]
    fn synthesized_data_is_deterministic() {
        let a = BlrDataset::synthesize(9, 100, 10);
        let b = BlrDataset::synthesize(9, 100, 10);
        assert_eq!(a, b);
        assert_ne!(a, BlrDataset::synthesize(10, 100, 10));
        let theta = a.theta_true.as_ref().unwrap();
        assert_abs_diff_eq!(norm_sq(theta).sqrt(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn responses_at_zero_design_are_fair_coins() {
        let n = 10_000;
        let x = vec![0.0; n * 3];
        let theta = vec![1.0 / 3f64.sqrt(); 3];
        let mut s = derive_stream(StreamKey::new(5, 0, 0));
        let y = bernoulli_responses(&x, 3, &theta, &mut s);
        let mean = y.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn csv_round_trip() {
        let data = BlrDataset::synthesize(1, 7, 3);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,x_3,y\n"));
        let back = BlrDataset::read_csv(buf.as_slice(), data.alpha_prior).unwrap();
        assert_eq!(back.design(), data.design());
        assert_eq!(back.responses(), data.responses());
        assert_eq!(back.sigma_x(), data.sigma_x());
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(BlrDataset::read_csv("a,b\n1,0\n".as_bytes(), 0.5).is_err());
        assert!(BlrDataset::read_csv("x_1,y\n1,2\n".as_bytes(), 0.5).is_err());
        assert!(BlrDataset::read_csv("x_1,y\n".as_bytes(), 0.5).is_err());
    }

    #[test]
    fn counting_wrapper_counts() {
        let c = CountingPotential::new(make_quadratic(2));
        let mut g = [0.0; 2];
        c.gradient(&[1.0, 2.0], &mut g);
        c.gradient(&[1.0, 2.0], &mut g);
        assert_eq!(c.gradient_calls(), 2);
        c.reset();
        assert_eq!(c.gradient_calls(), 0);
    }
}
