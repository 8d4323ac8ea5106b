//! Error metrics and the exact marginal of the two-mode mixture.

use statrs::function::erf::erfc;
use thiserror::Error;

use crate::linalg::dist_sq;
use crate::simulator::Samples;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no samples")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("log-log fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive values, got {0}")]
    NonPositive(f64),
}

/// Root-mean-square distance with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub value: f64,
    pub stderr: f64,
}

/// RMSE over squared distances `|Δ_i|²`:
/// `value = sqrt(mean |Δ|²)`, `stderr = sqrt(Var(|Δ|²)/M) / (2 value)`.
pub fn rmse_from_sq(sq: &[f64]) -> Result<Rmse, MetricError> {
    if sq.is_empty() {
        return Err(MetricError::Empty);
    }
    let m = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / m;
    let value = mean.sqrt();
    let var = if sq.len() > 1 {
        sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let stderr = if value > 0.0 { (var / m).sqrt() / (2.0 * value) } else { 0.0 };
    Ok(Rmse { value, stderr })
}

/// `(E|approx − reference|²)^{1/2}` over matched rows.
pub fn rmse(approx: &Samples, reference: &Samples) -> Result<Rmse, MetricError> {
    if approx.rows() != reference.rows() || approx.dim() != reference.dim() {
        return Err(MetricError::Shape(format!(
            "{}×{} vs {}×{}",
            approx.rows(),
            approx.dim(),
            reference.rows(),
            reference.dim()
        )));
    }
    let sq: Vec<f64> = approx.iter().zip(reference.iter()).map(|(a, r)| dist_sq(a, r)).collect();
    rmse_from_sq(&sq)
}

/// Least-squares line through `(log₂ x, log₂ y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
}

pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LogLogFit, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::Shape(format!("{} xs vs {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(MetricError::TooFewPoints(xs.len()));
    }
    if let Some(bad) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(MetricError::NonPositive(*bad));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    Ok(LogLogFit {
        slope,
        intercept,
        max_abs_residual,
    })
}

/// Sorted-sample estimate of the 1-D quadratic Wasserstein distance to the
/// law with quantile function `quantile`:
/// `sqrt(mean_i (x_(i) − q((i − ½)/M))²)`.
pub fn wasserstein_1d(samples: &[f64], quantile: impl Fn(f64) -> f64) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (x - quantile((i as f64 + 0.5) / m)).powi(2))
        .sum();
    Ok((sum / m).sqrt())
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// Density of one coordinate of the two-mode mixture whose means have that
/// coordinate equal to `±m`: `½φ(t − m) + ½φ(t + m)`.
pub fn gmm_marginal_density(t: f64, m: f64) -> f64 {
    0.5 * normal_pdf(t - m) + 0.5 * normal_pdf(t + m)
}

pub fn gmm_marginal_cdf(t: f64, m: f64) -> f64 {
    0.5 * normal_cdf(t - m) + 0.5 * normal_cdf(t + m)
}

/// Inverse of [`gmm_marginal_cdf`] by bisection, for `u ∈ (0, 1)`.
pub fn gmm_marginal_quantile(u: f64, m: f64) -> f64 {
    let (mut lo, mut hi) = (-m.abs() - 40.0, m.abs() + 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gmm_marginal_cdf(mid, m) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Equal-width density histogram on `[lo, hi)`, normalized over the samples
/// that fall inside the range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub densities: Vec<f64>,
    pub outside: usize,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self, MetricError> {
        if samples.is_empty() {
            return Err(MetricError::Empty);
        }
        if bins == 0 || !(hi > lo) {
            return Err(MetricError::Shape(format!("{bins} bins on [{lo}, {hi})")));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut outside = 0;
        for &x in samples {
            let b = ((x - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            } else {
                outside += 1;
            }
        }
        let inside = (samples.len() - outside).max(1) as f64;
        let densities = counts.iter().map(|c| *c as f64 / (inside * width)).collect();
        Ok(Self {
            lo,
            width,
            densities,
            outside,
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.densities.len()).map(|i| self.lo + (i as f64 + 0.5) * self.width)
    }

    /// Largest `|empirical − exact(center)|` over the bins.
    pub fn sup_gap(&self, exact: impl Fn(f64) -> f64) -> f64 {
        self.centers()
            .zip(&self.densities)
            .map(|(c, d)| (d - exact(c)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rmse_zero_and_hand_cases() {
        let a = Samples::from_rows(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = Samples::from_rows(2, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(rmse(&r, &r).unwrap().value, 0.0);
        assert_eq!(rmse(&r, &r).unwrap().stderr, 0.0);
        assert_abs_diff_eq!(rmse(&a, &r).unwrap().value, 1.0, epsilon = 1e-15);
        let short = Samples::from_rows(2, vec![vec![0.0, 0.0]]);
        assert!(rmse(&a, &short).is_err());
        assert_eq!(rmse_from_sq(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn rmse_delta_method_two_point_law() {
        // |Δ|² ∈ {0, 4} equiprobable: value √2, Var(|Δ|²) = 4,
        // stderr = sqrt(4/M) / (2√2).
        let m = 10_000;
        let sq: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 0.0 } else { 4.0 }).collect();
        let r = rmse_from_sq(&sq).unwrap();
        assert_abs_diff_eq!(r.value, 2f64.sqrt(), epsilon = 1e-12);
        let closed = (4.0 / m as f64).sqrt() / (2.0 * 2f64.sqrt());
        assert!((r.stderr - closed).abs() < 0.1 * closed);
    }

    #[test]
    fn slope_fits() {
        let xs = [0.5, 0.25, 0.125, 0.0625];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let f = fit_loglog_slope(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, 1.5, epsilon = 1e-12);
        assert!(f.max_abs_residual < 1e-12);
        assert_abs_diff_eq!(fit_loglog_slope(&xs, &xs).unwrap().slope, 1.0, epsilon = 1e-12);
        let f = fit_loglog_slope(&[1.0, 2.0, 4.0], &[2.0, 8.0, 32.0]).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn slope_fit_errors() {
        assert_eq!(fit_loglog_slope(&[1.0, 2.0], &[1.0, 2.0]), Err(MetricError::TooFewPoints(2)));
        assert!(matches!(
            fit_loglog_slope(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]),
            Err(MetricError::NonPositive(_))
        ));
        assert!(fit_loglog_slope(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
    }

    #[test]
    fn wasserstein_cases() {
        let q = |u: f64| 3.0 * u - 1.0;
        let m = 7;
        let exact: Vec<f64> = (0..m).map(|i| q((i as f64 + 0.5) / m as f64)).rev().collect();
        assert_eq!(wasserstein_1d(&exact, q).unwrap(), 0.0);
        assert_abs_diff_eq!(wasserstein_1d(&[-2.5; 5], |_| 0.0).unwrap(), 2.5, epsilon = 1e-15);
        let two_point_01 = |u: f64| if u < 0.5 { 0.0 } else { 1.0 };
        let two_point_02 = |u: f64| if u < 0.5 { 0.0 } else { 2.0 };
        assert_eq!(wasserstein_1d(&[1.0, 0.0], two_point_01).unwrap(), 0.0);
        assert_abs_diff_eq!(
            wasserstein_1d(&[0.0, 1.0], two_point_02).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(wasserstein_1d(&[], two_point_01), Err(MetricError::Empty));
    }

    #[test]
    fn marginal_density_values() {
        assert_abs_diff_eq!(gmm_marginal_density(0.0, 0.7), normal_pdf(0.7), epsilon = 1e-16);
        let expected = 0.5 * normal_pdf(0.0) + 0.5 * normal_pdf(2.0);
        assert_abs_diff_eq!(gmm_marginal_density(1.0, 1.0), expected, epsilon = 1e-16);
        assert_abs_diff_eq!(gmm_marginal_density(1.0, 1.0), 0.226_466_6, epsilon = 1e-7);
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        // composite Simpson on [−10, 10]
        let n = 2000;
        let (a, b) = (-10.0, 10.0);
        let step = (b - a) / n as f64;
        let m = 2.0 / 10f64.sqrt();
        let mut s = gmm_marginal_density(a, m) + gmm_marginal_density(b, m);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * gmm_marginal_density(a + i as f64 * step, m);
        }
        assert_abs_diff_eq!(s * step / 3.0, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let m = 0.63;
        for u in [1e-4, 0.01, 0.3, 0.5, 0.77, 0.9999] {
            let t = gmm_marginal_quantile(u, m);
            assert_abs_diff_eq!(gmm_marginal_cdf(t, m), u, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(gmm_marginal_quantile(0.5, m), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn histogram_normalization() {
        let samples: Vec<f64> = (0..1000).map(|i| -6.0 + 12.0 * i as f64 / 999.0).collect();
        let h = Histogram::new(&samples, 40, -5.0, 5.0).unwrap();
        let total: f64 = h.densities.iter().sum::<f64>() * h.width;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(h.outside > 0);
        assert_eq!(h.centers().next(), Some(-4.875));
        assert!(Histogram::new(&samples, 0, -1.0, 1.0).is_err());
    }
}
