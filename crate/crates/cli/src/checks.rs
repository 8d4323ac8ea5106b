//! Fast invariant checks shared by `selftest` and `gradcheck`.

use rklmc::potentials::QuadraticForm;
use rklmc::rng::{derive_stream, IncrementPair, NormalStream, StreamKey};
use rklmc::schemes::Preset;
use rklmc::{check_order_conditions, one_step, sample_increment_pair, Potential, RkCoefficients, Scheme};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "ok  " } else { "FAIL" }, self.name, self.detail)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Residuals of every published preset, each coefficient shifted by
/// `perturbation`.
pub fn order_conditions(perturbation: f64) -> Vec<CheckResult> {
    Preset::ALL
        .iter()
        .map(|p| {
            let c = p.coefficients();
            let shifted = RkCoefficients {
                alpha: c.alpha + perturbation,
                beta: c.beta + perturbation,
                a11: c.a11 + perturbation,
                a21: c.a21 + perturbation,
                a22: c.a22 + perturbation,
                b1: c.b1 + perturbation,
                b2: c.b2 + perturbation,
            };
            let r = check_order_conditions(&shifted);
            CheckResult::new(
                format!("order conditions {}", p.name()),
                shifted.is_admissible(),
                format!("r1={:.1e} r2={:.1e} r3={:.1e}", r.r1, r.r2, r.r3),
            )
        })
        .collect()
}

/// Second moments of `M` increment pairs against `(h, h³/3, h²/2)`, within
/// five standard errors.
pub fn increment_moments(m: usize, h: f64, seed: u64) -> CheckResult {
    let mut stream = derive_stream(StreamKey::new(seed, 0, 0));
    let mut sums = [[0.0f64; 2]; 3];
    for _ in 0..m {
        let p = sample_increment_pair(&mut stream, h, 1).expect("valid step");
        let (w, z) = (p.dw[0], p.dz[0]);
        for (s, v) in sums.iter_mut().zip([w * w, z * z, w * z]) {
            s[0] += v;
            s[1] += v * v;
        }
    }
    let exact = [h, h.powi(3) / 3.0, h * h / 2.0];
    let mf = m as f64;
    let worst = sums
        .iter()
        .zip(exact)
        .map(|(s, e)| {
            let mean = s[0] / mf;
            let se = ((s[1] / mf - mean * mean) / mf).sqrt();
            (mean - e).abs() / se
        })
        .fold(0.0, f64::max);
    CheckResult::new(
        format!("increment moments h={h}"),
        worst < 5.0,
        format!("worst deviation {worst:.2} standard errors over M={m}"),
    )
}

/// Worst relative finite-difference errors of the gradient, the
/// Hessian-vector product and the Laplacian gradient (when provided).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleErrors {
    pub gradient: f64,
    pub hessian_vector: Option<f64>,
    pub laplacian_gradient: Option<f64>,
}

impl OracleErrors {
    pub fn within(&self, tol: f64, laplacian_tol: f64) -> bool {
        self.gradient < tol
            && self.hessian_vector.is_none_or(|e| e < tol)
            && self.laplacian_gradient.is_none_or(|e| e < laplacian_tol)
    }
}

impl std::fmt::Display for OracleErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |e: Option<f64>| e.map_or("n/a".to_string(), |e| format!("{e:.1e}"));
        write!(
            f,
            "gradient {:.1e}, hessian-vector {}, laplacian-gradient {}",
            self.gradient,
            opt(self.hessian_vector),
            opt(self.laplacian_gradient)
        )
    }
}

fn shifted(x: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + t * b).collect()
}

/// Compares the analytic oracles of `model` with central differences at
/// `probes` points drawn from `N(0, scale² I)`.
pub fn finite_differences(model: &dyn Potential, probes: usize, scale: f64, stream: &mut NormalStream) -> OracleErrors {
    let d = model.dim();
    let caps = model.capabilities();
    let rel = |a: &[f64], b: &[f64]| diff_norm(a, b) / norm(a).max(1.0);
    let trace = |x: &[f64]| {
        let mut e = vec![0.0; d];
        let mut hv = vec![0.0; d];
        (0..d)
            .map(|k| {
                e[k] = 1.0;
                model.hessian_vector(x, &e, &mut hv).expect("capability checked");
                e[k] = 0.0;
                hv[k]
            })
            .sum::<f64>()
    };
    let mut out = OracleErrors {
        gradient: 0.0,
        hessian_vector: caps.hessian_vector.then_some(0.0),
        laplacian_gradient: (caps.laplacian_gradient && caps.hessian_vector).then_some(0.0),
    };
    let mut e = vec![0.0; d];
    for _ in 0..probes {
        let x: Vec<f64> = stream.sample_vec(d).iter().map(|v| v * scale).collect();
        let mut g = vec![0.0; d];
        model.gradient(&x, &mut g);
        let eps = 1e-5;
        let fd: Vec<f64> = (0..d)
            .map(|k| {
                e[k] = 1.0;
                let v = (model.value(&shifted(&x, &e, eps)) - model.value(&shifted(&x, &e, -eps))) / (2.0 * eps);
                e[k] = 0.0;
                v
            })
            .collect();
        out.gradient = out.gradient.max(rel(&g, &fd));

        if let Some(worst) = out.hessian_vector.as_mut() {
            let v = stream.sample_vec(d);
            let mut hv = vec![0.0; d];
            model.hessian_vector(&x, &v, &mut hv).expect("capability checked");
            let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
            model.gradient(&shifted(&x, &v, eps), &mut gp);
            model.gradient(&shifted(&x, &v, -eps), &mut gm);
            let fd: Vec<f64> = gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
            *worst = worst.max(rel(&hv, &fd));
        }
        if let Some(worst) = out.laplacian_gradient.as_mut() {
            let mut lg = vec![0.0; d];
            model.laplacian_gradient(&x, &mut lg).expect("capability checked");
            let eps = 1e-4;
            let fd: Vec<f64> = (0..d)
                .map(|k| {
                    e[k] = 1.0;
                    let v = (trace(&shifted(&x, &e, eps)) - trace(&shifted(&x, &e, -eps))) / (2.0 * eps);
                    e[k] = 0.0;
                    v
                })
                .collect();
            *worst = worst.max(rel(&lg, &fd));
        }
    }
    out
}

/// RKLMC-2G and RKLMC-3G-B against the Taylor step on random quadratics,
/// and zero-weight RKLMC against LMC.
pub fn quadratic_exactness(cases: usize, seed: u64) -> CheckResult {
    let mut stream = derive_stream(StreamKey::new(seed, 0, 0));
    let mut worst: f64 = 0.0;
    let mut lmc_exact = true;
    for case in 0..cases {
        let d = 1 + case % 5;
        let raw = QuadraticForm::new(d, stream.sample_vec(d * d));
        let fro = norm(raw.matrix());
        let model = QuadraticForm::new(d, raw.matrix().iter().map(|v| 2.0 * v / fro.max(2.0)).collect());
        let h = stream.next_uniform().max(1e-3);
        let y = stream.sample_vec(d);
        let inc = IncrementPair::from_normals(&stream.sample_vec(d), &stream.sample_vec(d), h).expect("valid step");
        let taylor = one_step(Scheme::Telmc, &model, &y, &inc).expect("quadratics carry every oracle");
        for scheme in [Scheme::RKLMC_2G, Scheme::RKLMC_3G_B] {
            let rk = one_step(scheme, &model, &y, &inc).expect("gradient available");
            worst = worst.max(rk.iter().zip(&taylor).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        let stages_only = RkCoefficients {
            a11: 1.0,
            a21: 1.0,
            a22: 1.0,
            b1: 1.0,
            b2: 1.0,
            ..RkCoefficients::ZERO
        };
        lmc_exact &= one_step(Scheme::Rk(stages_only), &model, &y, &inc).expect("gradient available")
            == one_step(Scheme::Lmc, &model, &y, &inc).expect("gradient available");
    }
    CheckResult::new(
        "quadratic exactness",
        worst <= 1e-12 && lmc_exact,
        format!("max |rk - telmc| = {worst:.1e} over {cases} quadratics, zero weights equal lmc: {lmc_exact}"),
    )
}
