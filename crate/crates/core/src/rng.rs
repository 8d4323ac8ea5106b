//! Keyed random streams and the correlated Brownian increments `(ΔW, ΔZ)`.
//!
//! Every trajectory owns a stream derived from a [`StreamKey`]. The key triple
//! is folded through SplitMix64 into a 256-bit ChaCha8 seed, so a stream
//! replays the same variates no matter where or when it is created. Standard normals come from `rand_distr::StandardNormal`
//! (ziggurat); the sampler is pinned by the lockfile, which is what makes
//! increments bit-reproducible.
//!
//! Over one step of length `h` the pair is
//!
//! ```text
//! ΔW = ∫ dW_t,           ΔZ = ∫∫ dW_s dt
//! E[ΔW²] = h,  E[ΔZ²] = h³/3,  E[ΔW ΔZ] = h²/2     (per coordinate)
//! ```
//!
//! and is generated from independent `ξ, η ~ N(0, I_d)` as
//! `ΔW = h^{1/2} ξ`, `ΔZ = h^{3/2} (ξ/2 + η/(2√3))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Substream tag for the Brownian path of a trajectory.
pub const PATH_NOISE: u64 = 0;
/// Substream tag for random initial states.
pub const INITIAL_STATE: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncrementError {
    #[error("step length must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("cannot aggregate an empty list of increments")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trajectory_index: u64,
    pub substream_tag: u64,
}

impl StreamKey {
    pub const fn new(master_seed: u64, trajectory_index: u64, substream_tag: u64) -> Self {
        Self {
            master_seed,
            trajectory_index,
            substream_tag,
        }
    }

    /// Path-noise stream of trajectory `index`.
    pub const fn path(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, index, PATH_NOISE)
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut state = 0x243f_6a88_85a3_08d3_u64;
        for word in [self.master_seed, self.trajectory_index, self.substream_tag] {
            state = splitmix64(&mut state) ^ word;
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        seed
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A stream of i.i.d. standard normal variates. Not shareable between threads
/// while in use; derive one per worker-owned trajectory instead.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(key: StreamKey) -> Self {
        Self {
            rng: ChaCha8Rng::from_seed(key.seed_bytes()),
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    pub fn sample_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_normal()).collect()
    }

    /// Draws `ξ` then `η` (each `d = dw.len()` coordinates) and writes the
    /// increment pair over a step of length `h` into `dw`, `dz`.
    pub fn fill_increment(&mut self, h: f64, dw: &mut [f64], dz: &mut [f64]) {
        self.fill(dw);
        self.fill(dz);
        let sqrt_h = h.sqrt();
        let h32 = h * sqrt_h;
        for (w, z) in dw.iter_mut().zip(dz.iter_mut()) {
            let xi = *w;
            *z = h32 * (0.5 * xi + INV_TWO_SQRT3 * *z);
            *w = sqrt_h * xi;
        }
    }

    /// Uniform variate on `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Derives the stream for `key`.
pub fn derive_stream(key: StreamKey) -> NormalStream {
    NormalStream::new(key)
}

/// The pair `(ΔW, ΔZ)` over one step of length `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementPair {
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
    pub h: f64,
}

const INV_TWO_SQRT3: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

impl IncrementPair {
    /// Applies the linear map `(ξ, η) ↦ (h^{1/2} ξ, h^{3/2}(ξ/2 + η/(2√3)))`.
    pub fn from_normals(xi: &[f64], eta: &[f64], h: f64) -> Result<Self, IncrementError> {
        check_step(h)?;
        if xi.is_empty() {
            return Err(IncrementError::ZeroDimension);
        }
        if xi.len() != eta.len() {
            return Err(IncrementError::DimensionMismatch {
                expected: xi.len(),
                found: eta.len(),
            });
        }
        let sqrt_h = h.sqrt();
        let h32 = h * sqrt_h;
        let dw = xi.iter().map(|x| sqrt_h * x).collect();
        let dz = xi
            .iter()
            .zip(eta)
            .map(|(x, e)| h32 * (0.5 * x + INV_TWO_SQRT3 * e))
            .collect();
        Ok(Self { dw, dz, h })
    }

    /// A pair with no noise at all.
    pub fn zero(d: usize, h: f64) -> Self {
        Self {
            dw: vec![0.0; d],
            dz: vec![0.0; d],
            h,
        }
    }

    pub fn dim(&self) -> usize {
        self.dw.len()
    }
}

fn check_step(h: f64) -> Result<(), IncrementError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(IncrementError::NonPositiveStep(h))
    }
}

/// Draws `ξ` (all `d` coordinates) and then `η` from `stream` and maps them to
/// an increment pair over a step of length `h`.
pub fn sample_increment_pair(
    stream: &mut NormalStream,
    h: f64,
    d: usize,
) -> Result<IncrementPair, IncrementError> {
    check_step(h)?;
    if d == 0 {
        return Err(IncrementError::ZeroDimension);
    }
    let mut pair = IncrementPair::zero(d, h);
    stream.fill_increment(h, &mut pair.dw, &mut pair.dz);
    Ok(pair)
}

/// Combines consecutive fine increments into the increment over their union:
///
/// ```text
/// ΔW = Σ ΔW_i
/// ΔZ = Σ (ΔZ_i + h_i · Σ_{j<i} ΔW_j)
/// ```
///
/// This is the exact path functional (split `∫(W_s − W_t) ds` at the fine
/// grid points), not an approximation.
pub fn aggregate_coarse_pair(fine: &[IncrementPair]) -> Result<IncrementPair, IncrementError> {
    let first = fine.first().ok_or(IncrementError::Empty)?;
    let d = first.dim();
    let mut acc = IncrementPair::zero(d, 0.0);
    for pair in fine {
        if pair.dim() != d || pair.dz.len() != d {
            return Err(IncrementError::DimensionMismatch {
                expected: d,
                found: pair.dim(),
            });
        }
        check_step(pair.h)?;
        accumulate(&mut acc, &pair.dw, &pair.dz, pair.h);
    }
    Ok(acc)
}

/// Appends one fine step to a running aggregate. `acc.dw` holds the Brownian
/// increment accumulated so far, i.e. `Σ_{j<i} ΔW_j` when step `i` arrives.
#[inline]
pub(crate) fn accumulate(acc: &mut IncrementPair, dw: &[f64], dz: &[f64], h: f64) {
    for k in 0..acc.dw.len() {
        acc.dz[k] += dz[k] + h * acc.dw[k];
        acc.dw[k] += dw[k];
    }
    acc.h += h;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_key_same_sequence() {
        let mut a = derive_stream(StreamKey::new(7, 0, 0));
        let mut b = derive_stream(StreamKey::new(7, 0, 0));
        let xa = a.sample_vec(100);
        let xb = b.sample_vec(100);
        assert_eq!(xa, xb);
    }

    #[test]
    fn neighbouring_trajectories_are_uncorrelated() {
        let xa = derive_stream(StreamKey::new(7, 0, 0)).sample_vec(1000);
        let xb = derive_stream(StreamKey::new(7, 1, 0)).sample_vec(1000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&xa), mean(&xb));
        let cov: f64 = xa.iter().zip(&xb).map(|(a, b)| (a - ma) * (b - mb)).sum();
        let va: f64 = xa.iter().map(|a| (a - ma).powi(2)).sum();
        let vb: f64 = xb.iter().map(|b| (b - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.1, "corr = {corr}");
    }

    #[test]
    fn different_seed_different_prefix() {
        let xa = derive_stream(StreamKey::new(7, 0, 0)).sample_vec(10);
        let xb = derive_stream(StreamKey::new(8, 0, 0)).sample_vec(10);
        assert!(xa.iter().zip(&xb).all(|(a, b)| a != b));
    }

    #[test]
    fn substream_tag_changes_stream() {
        let xa = derive_stream(StreamKey::new(7, 3, PATH_NOISE)).sample_vec(4);
        let xb = derive_stream(StreamKey::new(7, 3, INITIAL_STATE)).sample_vec(4);
        assert_ne!(xa, xb);
    }

    #[test]
    fn zero_normals_give_zero_increments() {
        let p = IncrementPair::from_normals(&[0.0; 3], &[0.0; 3], 0.25).unwrap();
        assert_eq!(p.dw, vec![0.0; 3]);
        assert_eq!(p.dz, vec![0.0; 3]);
    }

    #[test]
    fn unit_normals_map() {
        let p = IncrementPair::from_normals(&[1.0], &[1.0], 1.0).unwrap();
        assert_eq!(p.dw, vec![1.0]);
        assert_abs_diff_eq!(p.dz[0], 0.5 + 1.0 / (2.0 * 3f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(p.dz[0], 0.788_675_1, epsilon = 1e-7);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut s = derive_stream(StreamKey::new(1, 0, 0));
        assert_eq!(
            sample_increment_pair(&mut s, 0.0, 2),
            Err(IncrementError::NonPositiveStep(0.0))
        );
        assert_eq!(
            sample_increment_pair(&mut s, -1.0, 2),
            Err(IncrementError::NonPositiveStep(-1.0))
        );
        assert_eq!(
            sample_increment_pair(&mut s, 0.1, 0),
            Err(IncrementError::ZeroDimension)
        );
        assert_eq!(aggregate_coarse_pair(&[]), Err(IncrementError::Empty));
        let a = IncrementPair::zero(1, 0.1);
        let b = IncrementPair::zero(2, 0.1);
        assert!(matches!(
            aggregate_coarse_pair(&[a, b]),
            Err(IncrementError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn draw_order_is_xi_then_eta() {
        let key = StreamKey::new(11, 4, 0);
        let raw = derive_stream(key).sample_vec(4);
        let p = sample_increment_pair(&mut derive_stream(key), 0.3, 2).unwrap();
        let q = IncrementPair::from_normals(&raw[..2], &raw[2..], 0.3).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn single_pair_aggregates_to_itself() {
        let p = IncrementPair {
            dw: vec![0.3, -0.1],
            dz: vec![0.02, 0.05],
            h: 0.125,
        };
        assert_eq!(aggregate_coarse_pair(std::slice::from_ref(&p)).unwrap(), p);
    }

    #[test]
    fn two_pair_aggregation_by_hand() {
        let a = IncrementPair {
            dw: vec![1.0],
            dz: vec![0.3],
            h: 1.0,
        };
        let b = IncrementPair {
            dw: vec![-1.0],
            dz: vec![0.1],
            h: 1.0,
        };
        let c = aggregate_coarse_pair(&[a, b]).unwrap();
        assert_eq!(c.dw, vec![0.0]);
        assert_abs_diff_eq!(c.dz[0], 1.4, epsilon = 1e-15);
        assert_eq!(c.h, 2.0);
    }
}
