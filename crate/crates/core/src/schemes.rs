//! One-step maps and the coefficient algebra of the Runge-Kutta family.
//!
//! All schemes discretize the overdamped Langevin SDE
//! `dX = −∇U(X) dt + √2 dW` with a uniform step `h`:
//!
//! ```text
//! LMC    Y' = Y − ∇U(Y) h + √2 ΔW
//! TELMC  Y' = Y − ∇U(Y) h + √2 ΔW + ½ ∇²U(Y)∇U(Y) h² − ½ ∇(ΔU)(Y) h² − √2 ∇²U(Y) ΔZ
//! RKLMC  Φ₁ = Y − a11 ∇U(Y) h + √2 b1 ΔZ/h
//!        Φ₂ = Y − a21 ∇U(Y) h − a22 ∇U(Φ₁) h + √2 b2 ΔZ/h
//!        Y' = Y − (1−α−β) ∇U(Y) h − α ∇U(Φ₁) h − β ∇U(Φ₂) h + √2 ΔW
//! ```
//!
//! An RKLMC coefficient set reaches strong order 1.5 when
//!
//! ```text
//! α a11 + β (a21 + a22) = 1/2
//! α b1  + β b2          = 1
//! α b1² + β b2²         = 3/2
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::parse::parse_real;
use crate::potentials::{Potential, PotentialError};
use crate::rng::IncrementPair;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Residual magnitude below which a coefficient set counts as admissible.
pub const ORDER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("{scheme} needs hessian_vector and laplacian_gradient, which `{model}` does not provide")]
    MissingCapability { scheme: String, model: String },
    #[error("state has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("step length must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid step-size constants: {0}")]
    InvalidConstants(String),
    #[error("cannot parse coefficients: {0}")]
    Parse(String),
    #[error("unknown scheme `{0}` (expected lmc, telmc, rklmc-2g, rklmc-3g-a, rklmc-3g-b)")]
    UnknownScheme(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Coefficients `(α, β, a11, a21, a22, b1, b2)` of a three-stage RKLMC scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub a11: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
}

impl RkCoefficients {
    /// The two-gradient scheme: weights 1/3 on `∇U(Y)` and 2/3 on the single
    /// stage `Y − (3/4)∇U(Y)h + (3√2/2) ΔZ/h`.
    pub const RKLMC_2G: Self = Self {
        alpha: 0.0,
        beta: 2.0 / 3.0,
        a11: 0.0,
        a21: 0.75,
        a22: 0.0,
        b1: 0.0,
        b2: 1.5,
    };

    pub const RKLMC_3G_A: Self = Self {
        alpha: 0.25,
        beta: 0.5,
        a11: 0.0,
        a21: 0.5,
        a22: 0.5,
        b1: 2.0,
        b2: 1.0,
    };

    pub const RKLMC_3G_B: Self = Self {
        alpha: 2.0 / 3.0,
        beta: 1.0 / 3.0,
        a11: 0.5,
        a21: 0.5,
        a22: 0.0,
        b1: 0.5,
        b2: 2.0,
    };

    pub const ZERO: Self = Self {
        alpha: 0.0,
        beta: 0.0,
        a11: 0.0,
        a21: 0.0,
        a22: 0.0,
        b1: 0.0,
        b2: 0.0,
    };

    const KEYS: [&'static str; 7] = ["alpha", "beta", "a11", "a21", "a22", "b1", "b2"];

    fn values(&self) -> [f64; 7] {
        [self.alpha, self.beta, self.a11, self.a21, self.a22, self.b1, self.b2]
    }

    fn from_values(v: [f64; 7]) -> Self {
        Self {
            alpha: v[0],
            beta: v[1],
            a11: v[2],
            a21: v[3],
            a22: v[4],
            b1: v[5],
            b2: v[6],
        }
    }

    /// Gradient weights `(1 − α − β, α, β)`.
    pub fn weights(&self) -> [f64; 3] {
        [1.0 - self.alpha - self.beta, self.alpha, self.beta]
    }

    pub fn residuals(&self) -> OrderResiduals {
        check_order_conditions(self)
    }

    pub fn is_admissible(&self) -> bool {
        self.values().iter().all(|v| v.is_finite()) && self.residuals().max_abs() <= ORDER_TOLERANCE
    }

    pub fn kappa1(&self) -> f64 {
        compute_kappa1(self)
    }

    /// Whether `∇U(Φ₁)` enters the update at all.
    fn uses_first_stage(&self) -> bool {
        self.alpha != 0.0 || (self.beta != 0.0 && self.a22 != 0.0)
    }

    /// `Φ₁ = Y` when both of its increments vanish, so `∇U(Y)` is reused.
    fn first_stage_is_trivial(&self) -> bool {
        self.a11 == 0.0 && self.b1 == 0.0
    }

    /// Gradient evaluations per step.
    pub fn gradient_evaluations(&self) -> usize {
        let first = usize::from(self.uses_first_stage() && !self.first_stage_is_trivial());
        let second = usize::from(self.beta != 0.0);
        1 + first + second
    }

    /// Name of the matching published preset, if any.
    pub fn preset_name(&self) -> Option<&'static str> {
        Preset::ALL
            .iter()
            .find(|p| p.coefficients() == *self)
            .map(|p| p.name())
    }
}

/// `key=value` lines in the order alpha, beta, a11, a21, a22, b1, b2.
impl fmt::Display for RkCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in Self::KEYS.iter().zip(self.values()).enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Accepts `key=value` pairs separated by whitespace, commas or newlines.
/// Values may be decimals, fractions (`2/3`) or powers of two (`2^-3`).
/// All seven keys are required; unknown or repeated keys are errors.
impl FromStr for RkCoefficients {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut vals: [Option<f64>; 7] = [None; 7];
        for tok in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| SchemeError::Parse(format!("`{tok}` is not key=value")))?;
            let key = key.trim().to_ascii_lowercase();
            let idx = Self::KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| SchemeError::Parse(format!("unknown key `{key}`")))?;
            if vals[idx].is_some() {
                return Err(SchemeError::Parse(format!("duplicate key `{key}`")));
            }
            let v = parse_real(val).map_err(SchemeError::Parse)?;
            vals[idx] = Some(v);
        }
        let mut out = [0.0; 7];
        for (i, v) in vals.iter().enumerate() {
            out[i] = v.ok_or_else(|| SchemeError::Parse(format!("missing key `{}`", Self::KEYS[i])))?;
        }
        Ok(Self::from_values(out))
    }
}

/// Named published coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Rklmc2G,
    Rklmc3GA,
    Rklmc3GB,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Rklmc2G, Preset::Rklmc3GA, Preset::Rklmc3GB];

    pub fn coefficients(self) -> RkCoefficients {
        match self {
            Preset::Rklmc2G => RkCoefficients::RKLMC_2G,
            Preset::Rklmc3GA => RkCoefficients::RKLMC_3G_A,
            Preset::Rklmc3GB => RkCoefficients::RKLMC_3G_B,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Rklmc2G => "rklmc-2g",
            Preset::Rklmc3GA => "rklmc-3g-a",
            Preset::Rklmc3GB => "rklmc-3g-b",
        }
    }
}

impl FromStr for Preset {
    type Err = SchemeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| SchemeError::UnknownScheme(s.to_string()))
    }
}

/// Residuals of the three order conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderResiduals {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl OrderResiduals {
    pub fn max_abs(&self) -> f64 {
        self.r1.abs().max(self.r2.abs()).max(self.r3.abs())
    }
}

pub fn check_order_conditions(c: &RkCoefficients) -> OrderResiduals {
    OrderResiduals {
        r1: c.alpha * c.a11 + c.beta * (c.a21 + c.a22) - 0.5,
        r2: c.alpha * c.b1 + c.beta * c.b2 - 1.0,
        r3: c.alpha * c.b1 * c.b1 + c.beta * c.b2 * c.b2 - 1.5,
    }
}

/// Solves the order conditions under `a11 = b1 = 0` (so `Φ₁ = Y`).
///
/// With `Φ₁ = Y` the first stage carries no information, so `α` and `a22` only
/// duplicate the weight on `∇U(Y)`; taking `α = a22 = 0` leaves
/// `β b2 = 1`, `β b2² = 3/2`, `β a21 = 1/2`, whence `b2 = 3/2`, `β = 2/3`,
/// `a21 = 3/4`.
pub fn solve_two_gradient() -> RkCoefficients {
    let b2 = 1.5 / 1.0; // (β b2²) / (β b2)
    let beta = 1.0 / b2;
    let a21 = 0.5 / beta;
    let c = RkCoefficients {
        alpha: 0.0,
        beta,
        a11: 0.0,
        a21,
        a22: 0.0,
        b1: 0.0,
        b2,
    };
    debug_assert!(c.is_admissible());
    c
}

/// `κ₁ = 4α² a11² + β² (6 a21² + 18 a22² + 9 (a11 a22)²)`.
pub fn compute_kappa1(c: &RkCoefficients) -> f64 {
    let a1122 = c.a11 * c.a22;
    4.0 * c.alpha.powi(2) * c.a11.powi(2)
        + c.beta.powi(2) * (6.0 * c.a21.powi(2) + 18.0 * c.a22.powi(2) + 9.0 * a1122.powi(2))
}

/// Dissipativity (`μ`, `μ'`) and gradient-Lipschitz (`L₁`, `L₁'`) constants of
/// the potential, as supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeConstants {
    pub mu: f64,
    pub mu_prime: f64,
    pub l1: f64,
    pub l1_prime: f64,
}

/// Largest uniform step covered by the non-asymptotic error bound:
///
/// ```text
/// 1 ∧ 1/(2L₁') ∧ 1/(2L₁) ∧ 4/μ ∧ μ/(32L₁²) ∧ μ/(4κ₁L₁²) ∧ μ²/(8κ₁L₁³)
/// ```
///
/// Terms with a zero denominator (`L₁' = 0` or `κ₁ = 0`) impose no limit.
pub fn stepsize_bound(c: &RkCoefficients, k: &StepsizeConstants) -> Result<f64, SchemeError> {
    if !(k.mu > 0.0) {
        return Err(SchemeError::InvalidConstants(format!("mu must be positive, got {}", k.mu)));
    }
    if !(k.l1 > 0.0) {
        return Err(SchemeError::InvalidConstants(format!("L1 must be positive, got {}", k.l1)));
    }
    if !(k.mu_prime >= 0.0) || !(k.l1_prime >= 0.0) {
        return Err(SchemeError::InvalidConstants(
            "mu' and L1' must be nonnegative".to_string(),
        ));
    }
    let kappa = compute_kappa1(c);
    let ratio = |num: f64, den: f64| if den == 0.0 { f64::INFINITY } else { num / den };
    let terms = [
        1.0,
        ratio(1.0, 2.0 * k.l1_prime),
        ratio(1.0, 2.0 * k.l1),
        ratio(4.0, k.mu),
        ratio(k.mu, 32.0 * k.l1 * k.l1),
        ratio(k.mu, 4.0 * kappa * k.l1 * k.l1),
        ratio(k.mu * k.mu, 8.0 * kappa * k.l1.powi(3)),
    ];
    Ok(terms.into_iter().fold(f64::INFINITY, f64::min))
}

/// A discretization of the Langevin SDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Lmc,
    Telmc,
    Rk(RkCoefficients),
}

impl Scheme {
    pub const RKLMC_2G: Scheme = Scheme::Rk(RkCoefficients::RKLMC_2G);
    pub const RKLMC_3G_A: Scheme = Scheme::Rk(RkCoefficients::RKLMC_3G_A);
    pub const RKLMC_3G_B: Scheme = Scheme::Rk(RkCoefficients::RKLMC_3G_B);

    pub fn name(&self) -> String {
        match self {
            Scheme::Lmc => "lmc".into(),
            Scheme::Telmc => "telmc".into(),
            Scheme::Rk(c) => c.preset_name().unwrap_or("rklmc-custom").into(),
        }
    }

    pub fn gradient_evaluations(&self) -> usize {
        match self {
            Scheme::Lmc | Scheme::Telmc => 1,
            Scheme::Rk(c) => c.gradient_evaluations(),
        }
    }

    pub fn needs_taylor_oracles(&self) -> bool {
        matches!(self, Scheme::Telmc)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Scheme {
    type Err = SchemeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lmc" => Ok(Scheme::Lmc),
            "telmc" => Ok(Scheme::Telmc),
            _ => s.parse::<Preset>().map(|p| Scheme::Rk(p.coefficients())),
        }
    }
}

/// Applies a scheme to a model, reusing scratch buffers between steps.
pub struct Stepper<'m> {
    scheme: Scheme,
    model: &'m dyn Potential,
    g0: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    stage: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub fn new(scheme: Scheme, model: &'m dyn Potential) -> Result<Self, SchemeError> {
        if scheme.needs_taylor_oracles() && !model.capabilities().supports_taylor() {
            return Err(SchemeError::MissingCapability {
                scheme: scheme.name(),
                model: model.name().to_string(),
            });
        }
        let d = model.dim();
        Ok(Self {
            scheme,
            model,
            g0: vec![0.0; d],
            g1: vec![0.0; d],
            g2: vec![0.0; d],
            stage: vec![0.0; d],
            tmp: vec![0.0; d],
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Advances `y` in place by one step of length `h`.
    pub fn step(&mut self, y: &mut [f64], dw: &[f64], dz: &[f64], h: f64) -> Result<(), SchemeError> {
        let d = self.model.dim();
        for len in [y.len(), dw.len(), dz.len()] {
            if len != d {
                return Err(SchemeError::DimensionMismatch { expected: d, found: len });
            }
        }
        if !(h > 0.0) {
            return Err(SchemeError::NonPositiveStep(h));
        }
        match self.scheme {
            Scheme::Lmc => self.lmc(y, dw, h),
            Scheme::Telmc => self.telmc(y, dw, dz, h)?,
            Scheme::Rk(c) => self.rk(&c, y, dw, dz, h),
        }
        Ok(())
    }

    fn lmc(&mut self, y: &mut [f64], dw: &[f64], h: f64) {
        self.model.gradient(y, &mut self.g0);
        for k in 0..y.len() {
            y[k] = y[k] - self.g0[k] * h + SQRT_2 * dw[k];
        }
    }

    fn telmc(&mut self, y: &mut [f64], dw: &[f64], dz: &[f64], h: f64) -> Result<(), SchemeError> {
        let m = self.model;
        m.gradient(y, &mut self.g0);
        m.hessian_vector(y, &self.g0, &mut self.g1)?; // ∇²U ∇U
        m.laplacian_gradient(y, &mut self.g2)?; // ∇(ΔU)
        m.hessian_vector(y, dz, &mut self.tmp)?; // ∇²U ΔZ
        let h2 = h * h;
        for k in 0..y.len() {
            y[k] = y[k] - self.g0[k] * h + SQRT_2 * dw[k] + 0.5 * self.g1[k] * h2
                - 0.5 * self.g2[k] * h2
                - SQRT_2 * self.tmp[k];
        }
        Ok(())
    }

    fn rk(&mut self, c: &RkCoefficients, y: &mut [f64], dw: &[f64], dz: &[f64], h: f64) {
        let m = self.model;
        let d = y.len();
        let inv_h = 1.0 / h;
        m.gradient(y, &mut self.g0);

        let first = c.uses_first_stage();
        if first {
            if c.first_stage_is_trivial() {
                self.g1.copy_from_slice(&self.g0);
            } else {
                for k in 0..d {
                    self.stage[k] = y[k] - c.a11 * self.g0[k] * h + SQRT_2 * c.b1 * dz[k] * inv_h;
                }
                m.gradient(&self.stage, &mut self.g1);
            }
        }
        let second = c.beta != 0.0;
        if second {
            for k in 0..d {
                let mut s = y[k] - c.a21 * self.g0[k] * h;
                if c.a22 != 0.0 {
                    s -= c.a22 * self.g1[k] * h;
                }
                self.stage[k] = s + SQRT_2 * c.b2 * dz[k] * inv_h;
            }
            m.gradient(&self.stage, &mut self.g2);
        }

        let [w0, w1, w2] = c.weights();
        for k in 0..d {
            let mut drift = w0 * self.g0[k] * h;
            if first && w1 != 0.0 {
                drift += w1 * self.g1[k] * h;
            }
            if second {
                drift += w2 * self.g2[k] * h;
            }
            y[k] = y[k] - drift + SQRT_2 * dw[k];
        }
    }
}

/// One step of `scheme` from `y` driven by `inc`.
pub fn one_step(
    scheme: Scheme,
    model: &dyn Potential,
    y: &[f64],
    inc: &IncrementPair,
) -> Result<Vec<f64>, SchemeError> {
    let mut stepper = Stepper::new(scheme, model)?;
    let mut out = y.to_vec();
    stepper.step(&mut out, &inc.dw, &inc.dz, inc.h)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{make_eight_mode_gmm, make_quadratic, make_two_mode_gmm, CountingPotential, QuadraticForm};
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_satisfy_order_conditions() {
        for p in Preset::ALL {
            let r = p.coefficients().residuals();
            assert!(r.max_abs() <= ORDER_TOLERANCE, "{}: {r:?}", p.name());
            assert!(p.coefficients().is_admissible());
        }
    }

    #[test]
    fn zero_coefficients_residuals() {
        let r = check_order_conditions(&RkCoefficients::ZERO);
        assert_eq!((r.r1, r.r2, r.r3), (-0.5, -1.0, -1.5));
        assert!(!RkCoefficients::ZERO.is_admissible());
    }

    #[test]
    fn solver_reproduces_two_gradient_preset() {
        let c = solve_two_gradient();
        assert_eq!((c.alpha, c.beta, c.a21, c.b2), (0.0, 2.0 / 3.0, 0.75, 1.5));
        assert_eq!((c.a11, c.a22, c.b1), (0.0, 0.0, 0.0));
        assert!(c.residuals().max_abs() <= ORDER_TOLERANCE);
        assert_eq!(c.gradient_evaluations(), 2);
    }

    #[test]
    fn kappa1_values() {
        assert_abs_diff_eq!(RkCoefficients::RKLMC_2G.kappa1(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(RkCoefficients::RKLMC_3G_B.kappa1(), 11.0 / 18.0, epsilon = 1e-15);
        assert_eq!(RkCoefficients::ZERO.kappa1(), 0.0);
    }

    #[test]
    fn stepsize_bound_examples() {
        let unit = StepsizeConstants {
            mu: 1.0,
            mu_prime: 0.0,
            l1: 1.0,
            l1_prime: 0.0,
        };
        let b = stepsize_bound(&RkCoefficients::RKLMC_2G, &unit).unwrap();
        assert_abs_diff_eq!(b, 1.0 / 32.0, epsilon = 1e-16);

        let with_l1p = StepsizeConstants { l1_prime: 1.0, ..unit };
        let b = stepsize_bound(&RkCoefficients::ZERO, &with_l1p).unwrap();
        assert_abs_diff_eq!(b, 1.0 / 32.0, epsilon = 1e-16);

        // With μ = 10⁶ the 4/μ term is the binding one.
        let stiff = StepsizeConstants {
            mu: 1e6,
            mu_prime: 1.0,
            l1: 1.0,
            l1_prime: 1.0,
        };
        let b = stepsize_bound(&RkCoefficients::RKLMC_2G, &stiff).unwrap();
        assert_abs_diff_eq!(b, 4e-6, epsilon = 1e-20);
    }

    #[test]
    fn stepsize_bound_rejects_bad_constants() {
        let bad = StepsizeConstants {
            mu: 0.0,
            mu_prime: 0.0,
            l1: 1.0,
            l1_prime: 0.0,
        };
        assert!(stepsize_bound(&RkCoefficients::RKLMC_2G, &bad).is_err());
        let bad = StepsizeConstants { mu: 1.0, l1: -1.0, ..bad };
        assert!(stepsize_bound(&RkCoefficients::RKLMC_2G, &bad).is_err());
    }

    #[test]
    fn flat_model_reduces_to_brownian_motion() {
        let flat = QuadraticForm::flat(2);
        let inc = IncrementPair {
            dw: vec![0.3, -0.7],
            dz: vec![0.01, 0.02],
            h: 0.1,
        };
        let y = [1.0, 2.0];
        for s in [Scheme::Lmc, Scheme::Telmc, Scheme::RKLMC_2G, Scheme::RKLMC_3G_A, Scheme::RKLMC_3G_B] {
            let out = one_step(s, &flat, &y, &inc).unwrap();
            assert_abs_diff_eq!(out[0], 1.0 + SQRT_2 * 0.3, epsilon = 1e-15);
            assert_abs_diff_eq!(out[1], 2.0 - SQRT_2 * 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn quadratic_single_steps_by_hand() {
        let q = make_quadratic(2);
        let inc = IncrementPair {
            dw: vec![0.1, 0.0],
            dz: vec![0.05, 0.0],
            h: 0.5,
        };
        let y = [1.0, 0.0];
        let lmc = one_step(Scheme::Lmc, &q, &y, &inc).unwrap();
        assert_abs_diff_eq!(lmc[0], 0.641_421_4, epsilon = 1e-7);
        assert_eq!(lmc[1], 0.0);

        let telmc = one_step(Scheme::Telmc, &q, &y, &inc).unwrap();
        assert_abs_diff_eq!(telmc[0], 0.695_710_7, epsilon = 1e-7);
        let rk = one_step(Scheme::RKLMC_2G, &q, &y, &inc).unwrap();
        assert_abs_diff_eq!(rk[0], telmc[0], epsilon = 1e-14);
        assert_abs_diff_eq!(rk[1], telmc[1], epsilon = 1e-14);
    }

    #[test]
    fn taylor_scheme_needs_hessian_oracles() {
        let e = make_eight_mode_gmm();
        assert!(matches!(
            Stepper::new(Scheme::Telmc, &e),
            Err(SchemeError::MissingCapability { .. })
        ));
        assert!(Stepper::new(Scheme::RKLMC_2G, &e).is_ok());
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let q = make_quadratic(2);
        let mut st = Stepper::new(Scheme::Lmc, &q).unwrap();
        let mut y = [0.0; 3];
        assert!(matches!(
            st.step(&mut y, &[0.0; 3], &[0.0; 3], 0.1),
            Err(SchemeError::DimensionMismatch { .. })
        ));
        let mut y = [0.0; 2];
        assert!(matches!(
            st.step(&mut y, &[0.0; 2], &[0.0; 2], 0.0),
            Err(SchemeError::NonPositiveStep(_))
        ));
    }

    #[test]
    fn gradient_counts_per_step() {
        let model = CountingPotential::new(make_two_mode_gmm(3));
        let inc = IncrementPair {
            dw: vec![0.1; 3],
            dz: vec![0.01; 3],
            h: 0.1,
        };
        for (scheme, expected) in [
            (Scheme::Lmc, 1),
            (Scheme::RKLMC_2G, 2),
            (Scheme::RKLMC_3G_A, 3),
            (Scheme::RKLMC_3G_B, 3),
        ] {
            model.reset();
            one_step(scheme, &model, &[0.5, -0.5, 1.0], &inc).unwrap();
            assert_eq!(model.gradient_calls(), expected, "{scheme}");
            assert_eq!(scheme.gradient_evaluations(), expected);
        }
    }

    #[test]
    fn coefficient_text_round_trip() {
        for p in Preset::ALL {
            let c = p.coefficients();
            let back: RkCoefficients = c.to_string().parse().unwrap();
            assert_eq!(back, c);
        }
        let c: RkCoefficients = "alpha=0, beta=2/3, a11=0 a21=3/4 a22=0 b1=0 b2=1.5".parse().unwrap();
        assert_eq!(c, RkCoefficients::RKLMC_2G);
    }

    #[test]
    fn coefficient_text_errors() {
        assert!("alpha=0".parse::<RkCoefficients>().is_err());
        assert!("alpha=0 alpha=1".parse::<RkCoefficients>().is_err());
        assert!("gamma=1".parse::<RkCoefficients>().is_err());
        assert!("alpha=x beta=0 a11=0 a21=0 a22=0 b1=0 b2=0".parse::<RkCoefficients>().is_err());
    }

    #[test]
    fn scheme_names_parse() {
        for s in ["lmc", "telmc", "rklmc-2g", "rklmc-3g-a", "RKLMC_3G_B"] {
            let scheme: Scheme = s.parse().unwrap();
            assert_eq!(scheme.name(), s.to_ascii_lowercase().replace('_', "-"));
        }
        assert!("srk-ld".parse::<Scheme>().is_err());
        let custom = Scheme::Rk(RkCoefficients { a21: 0.7, ..RkCoefficients::RKLMC_2G });
        assert_eq!(custom.name(), "rklmc-custom");
    }
}
