//! Curie-Weiss pointer coupled to a tested spin ½ through `−Σₙ gₙ ŝ_z ⊗ σ̂_z⁽ⁿ⁾`,
//! in the truncation window where the diagonal sector blocks stay put.
//!
//! Everything here comes from the closed-form product solution for the
//! off-diagonal block `R̂↑↓(t) = ∏ₙ ½ exp(2i gₙ σ̂_z⁽ⁿ⁾ t)` (ħ = 1). Products of
//! up to 10⁷ cosines are accumulated as a log-magnitude plus a sign.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::qstate::{qexpect, DensityOperator, Observable};

/// Largest magnet for which 2ᴺ-dimensional matrices are materialized.
pub const DENSE_MAX_SPINS: usize = 12;
/// Largest magnet accepted by the analytic path.
pub const ANALYTIC_MAX_SPINS: usize = 10_000_000;

/// A real number stored as `sign · exp(ln_abs)`; `sign == 0` is exact zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub ln_abs: f64,
    pub sign: i8,
}

/// Running product kept as `mantissa · 2^exp2`, rescaled by exact powers of
/// two so it rounds exactly like the plain product would without underflow.
#[derive(Debug, Clone, Copy)]
struct ScaledProduct {
    mantissa: f64,
    exp2: i64,
}

impl ScaledProduct {
    const RESCALE: f64 = 1.0e-200;

    fn new() -> Self {
        Self { mantissa: 1.0, exp2: 0 }
    }

    fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    fn mul(&mut self, x: f64) {
        self.mantissa *= x;
        if self.mantissa != 0.0 && self.mantissa.abs() < Self::RESCALE {
            // 2^664 ≈ 1e200
            self.mantissa *= 2f64.powi(664);
            self.exp2 -= 664;
        }
    }

    fn finish(self) -> SignedLog {
        if self.mantissa == 0.0 {
            return SignedLog::ZERO;
        }
        SignedLog {
            ln_abs: self.mantissa.abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2,
            sign: if self.mantissa < 0.0 { -1 } else { 1 },
        }
    }
}

impl SignedLog {
    pub const ONE: SignedLog = SignedLog { ln_abs: 0.0, sign: 1 };
    pub const ZERO: SignedLog = SignedLog { ln_abs: f64::NEG_INFINITY, sign: 0 };

    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.ln_abs.exp()
        }
    }

    pub fn abs(&self) -> f64 {
        self.value().abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurieWeissModel {
    n_spins: usize,
    g: f64,
    couplings: Vec<f64>,
    delta_g_rms: f64,
    seed: u64,
    r0: DensityOperator,
}

impl CurieWeissModel {
    /// Draws `gₙ = g + δgₙ` with Gaussian `δgₙ`, recentred to zero mean and
    /// rescaled to RMS exactly `delta_g_rel · g`.
    pub fn new(n_spins: usize, g: f64, delta_g_rel: f64, seed: u64, r0: DensityOperator) -> Result<Self> {
        if n_spins == 0 || n_spins > ANALYTIC_MAX_SPINS {
            return Err(Error::InvalidParameter(format!(
                "N = {n_spins} outside 1..={ANALYTIC_MAX_SPINS}"
            )));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling g = {g} must be positive")));
        }
        if !(0.0..1.0).contains(&delta_g_rel) {
            return Err(Error::InvalidParameter(format!(
                "relative spread {delta_g_rel} outside [0, 1)"
            )));
        }
        if r0.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: r0.dim() });
        }
        let couplings = if delta_g_rel == 0.0 {
            vec![g; n_spins]
        } else {
            if n_spins < 2 {
                return Err(Error::InvalidParameter(
                    "a zero-mean coupling spread needs at least two spins".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z: Vec<f64> = (0..n_spins).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean = z.iter().sum::<f64>() / n_spins as f64;
            z.iter_mut().for_each(|x| *x -= mean);
            let rms = (z.iter().map(|x| x * x).sum::<f64>() / n_spins as f64).sqrt();
            let scale = delta_g_rel * g / rms;
            z.iter().map(|x| g + x * scale).collect()
        };
        if let Some(bad) = couplings.iter().find(|&&gn| gn <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spread produced a non-positive coupling {bad}"
            )));
        }
        let delta_g_rms =
            (couplings.iter().map(|gn| (gn - g).powi(2)).sum::<f64>() / n_spins as f64).sqrt();
        Ok(Self { n_spins, g, couplings, delta_g_rms, seed, r0 })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn delta_g_rms(&self) -> f64 {
        self.delta_g_rms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn r0(&self) -> &DensityOperator {
        &self.r0
    }

    pub fn with_r0(mut self, r0: DensityOperator) -> Result<Self> {
        if r0.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: r0.dim() });
        }
        self.r0 = r0;
        Ok(self)
    }

    /// `τ = 1/(g√(2N))`.
    pub fn truncation_time(&self) -> f64 {
        1.0 / (self.g * (2.0 * self.n_spins as f64).sqrt())
    }

    /// `F(t) = ∏ₙ cos(2gₙt)` in log-magnitude form.
    pub fn offdiag_factor_log(&self, t: f64) -> SignedLog {
        let mut acc = ScaledProduct::new();
        for &gn in &self.couplings {
            acc.mul((2.0 * gn * t).cos());
            if acc.is_zero() {
                break;
            }
        }
        acc.finish()
    }

    pub fn offdiag_factor(&self, t: f64) -> f64 {
        self.offdiag_factor_log(t).value()
    }

    /// Plain running product; reference for the log-domain path.
    pub fn offdiag_factor_direct(&self, t: f64) -> f64 {
        self.couplings.iter().map(|gn| (2.0 * gn * t).cos()).product()
    }

    /// `⟨ŝ_x(t)⟩` and `⟨ŝ_y(t)⟩` on a caller-supplied grid.
    pub fn transverse_expectations(&self, times: &[f64]) -> TruncationResult {
        let sx0 = qexpect(&self.r0, &Observable::pauli_x()).expect("qubit r0");
        let sy0 = qexpect(&self.r0, &Observable::pauli_y()).expect("qubit r0");
        let factors = map_times(times, |t| self.offdiag_factor(t));
        TruncationResult {
            times: times.to_vec(),
            sx: factors.iter().map(|f| sx0 * f).collect(),
            sy: factors.iter().map(|f| sy0 * f).collect(),
            sx0,
            sy0,
            tau: self.truncation_time(),
        }
    }

    /// Damping constant `K = N(π δg/g)²/2`.
    pub fn damping_constant(&self) -> f64 {
        let r = std::f64::consts::PI * self.delta_g_rms / self.g;
        0.5 * self.n_spins as f64 * r * r
    }

    /// Peak heights at the recurrence times `t_ν = νπ/2g`, measured from the
    /// coupling product and predicted as `exp(−Kν²)`.
    pub fn recurrence_profile(&self, nu_max: usize) -> Result<Vec<RecurrencePeak>> {
        if nu_max == 0 {
            return Err(Error::InvalidParameter("nu_max must be at least 1".into()));
        }
        let k = self.damping_constant();
        Ok((1..=nu_max)
            .map(|nu| {
                let time = nu as f64 * std::f64::consts::PI / (2.0 * self.g);
                let f = self.offdiag_factor_log(time);
                let ln_predicted = -k * (nu * nu) as f64;
                RecurrencePeak {
                    nu,
                    time,
                    measured: f.abs(),
                    ln_measured: f.ln_abs,
                    predicted: ln_predicted.exp(),
                    ln_predicted,
                }
            })
            .collect())
    }

    /// `∏_{n∈K} sin(2gₙt) ∏_{n∉K} cos(2gₙt)`.
    pub fn cascade_magnitude(&self, subset: &[usize], t: f64) -> Result<SignedLog> {
        let members = self.subset_mask(subset)?;
        let mut acc = ScaledProduct::new();
        for (gn, inside) in self.couplings.iter().zip(&members) {
            let x = 2.0 * gn * t;
            acc.mul(if *inside { x.sin() } else { x.cos() });
            if acc.is_zero() {
                break;
            }
        }
        Ok(acc.finish())
    }

    /// `⟨ŝ_x ⊗ ∏_{n∈K} σ̂_z⁽ⁿ⁾⟩(t)` and the same with `ŝ_y`.
    ///
    /// With `r↑↓ = ⟨↑|r̂(0)|↓⟩` and `G` from [`Self::cascade_magnitude`]:
    /// `⟨ŝ_x Z_K⟩ = 2 Re(iᵏ r↑↓) G`, `⟨ŝ_y Z_K⟩ = 2 Re(iᵏ⁺¹ r↑↓) G`.
    pub fn cascade_correlation(&self, subset: &[usize], t: f64) -> Result<CascadeCorrelation> {
        let magnitude = self.cascade_magnitude(subset, t)?;
        let r_ud = self.r0.matrix()[(0, 1)];
        let phase = i_power(subset.len());
        let g = magnitude.value();
        Ok(CascadeCorrelation {
            with_sx: 2.0 * (phase * r_ud).re * g,
            with_sy: 2.0 * (phase * linalg::I * r_ud).re * g,
            magnitude,
        })
    }

    fn subset_mask(&self, subset: &[usize]) -> Result<Vec<bool>> {
        if subset.is_empty() {
            return Err(Error::InvalidParameter("cascade subset must be nonempty".into()));
        }
        let mut mask = vec![false; self.n_spins];
        for &k in subset {
            if k >= self.n_spins {
                return Err(Error::InvalidParameter(format!(
                    "spin index {k} out of range for N = {}",
                    self.n_spins
                )));
            }
            if std::mem::replace(&mut mask[k], true) {
                return Err(Error::InvalidParameter(format!("spin index {k} repeated")));
            }
        }
        Ok(mask)
    }

    /// `R̂↑↓(t)` as a diagonal 2ᴺ×2ᴺ matrix, built factor by factor.
    /// Basis order: spin 1 is the most significant bit, bit 0 is `σ_z = +1`.
    pub fn joint_offdiag_block(&self, t: f64) -> Result<CMatrix> {
        if self.n_spins > DENSE_MAX_SPINS {
            return Err(Error::DenseGuard { n: self.n_spins, max: DENSE_MAX_SPINS });
        }
        let mut diag = vec![C64::from(1.0)];
        for &gn in &self.couplings {
            let up = C64::from_polar(0.5, 2.0 * gn * t);
            let down = C64::from_polar(0.5, -2.0 * gn * t);
            diag = diag.iter().flat_map(|d| [d * up, d * down]).collect();
        }
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (k, d) in diag.into_iter().enumerate() {
            m[(k, k)] = d;
        }
        Ok(m)
    }

    /// `[0, 4τ]` with 400 points, then `t_ν ± 3τ` windows for `ν = 1..=nu_max`.
    pub fn default_grid(&self, nu_max: usize) -> Vec<f64> {
        let tau = self.truncation_time();
        let mut grid: Vec<f64> = (0..400).map(|k| 4.0 * tau * k as f64 / 399.0).collect();
        for nu in 1..=nu_max {
            let centre = nu as f64 * std::f64::consts::PI / (2.0 * self.g);
            grid.extend((0..121).map(|k| centre - 3.0 * tau + 6.0 * tau * k as f64 / 120.0));
        }
        grid
    }
}

fn i_power(k: usize) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

#[cfg(feature = "parallel")]
fn map_times<F: Fn(f64) -> f64 + Sync>(times: &[f64], f: F) -> Vec<f64> {
    use rayon::prelude::*;
    times.par_iter().map(|&t| f(t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_times<F: Fn(f64) -> f64>(times: &[f64], f: F) -> Vec<f64> {
    times.iter().map(|&t| f(t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationResult {
    pub times: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub sx0: f64,
    pub sy0: f64,
    pub tau: f64,
}

impl TruncationResult {
    /// `⟨ŝ_x(0)⟩ e^{−t²/τ²}` on the same grid.
    pub fn gaussian_envelope(&self) -> Vec<f64> {
        self.times
            .iter()
            .map(|t| self.sx0 * (-(t / self.tau).powi(2)).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrencePeak {
    pub nu: usize,
    pub time: f64,
    pub measured: f64,
    pub ln_measured: f64,
    pub predicted: f64,
    pub ln_predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeCorrelation {
    pub with_sx: f64,
    pub with_sy: f64,
    pub magnitude: SignedLog,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn plus_x() -> DensityOperator {
        DensityOperator::qubit([1.0, 0.0, 0.0]).unwrap()
    }

    fn model(n: usize, g: f64, spread: f64, seed: u64) -> CurieWeissModel {
        CurieWeissModel::new(n, g, spread, seed, plus_x()).unwrap()
    }

    #[test]
    fn equal_couplings_without_spread() {
        let m = model(4, 1.0, 0.0, 0);
        assert!(m.couplings().iter().all(|&g| g == 1.0));
        assert_eq!(m.delta_g_rms(), 0.0);
    }

    #[test]
    fn couplings_are_deterministic_and_exactly_rescaled() {
        let a = model(100, 1.0, 0.1, 7);
        let b = model(100, 1.0, 0.1, 7);
        assert_eq!(a.couplings(), b.couplings());
        assert_ne!(a.couplings(), model(100, 1.0, 0.1, 8).couplings());
        let dev: Vec<f64> = a.couplings().iter().map(|g| g - 1.0).collect();
        let mean = dev.iter().sum::<f64>() / 100.0;
        let rms = (dev.iter().map(|d| d * d).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() <= 1e-12);
        assert!((rms / 0.1 - 1.0).abs() < 1e-12);
        assert!((a.delta_g_rms() / rms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(CurieWeissModel::new(0, 1.0, 0.0, 0, plus_x()).is_err());
        assert!(CurieWeissModel::new(4, -1.0, 0.0, 0, plus_x()).is_err());
        assert!(CurieWeissModel::new(4, 1.0, 1.0, 0, plus_x()).is_err());
        assert!(CurieWeissModel::new(1, 1.0, 0.1, 0, plus_x()).is_err());
        // a 0.9 spread on enough spins always pushes some gₙ below zero
        assert!(matches!(
            CurieWeissModel::new(10_000, 1.0, 0.9, 3, plus_x()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn truncation_time_examples() {
        assert!((model(2, 1.0, 0.0, 0).truncation_time() - 0.5).abs() < 1e-15);
        let tau = model(10_000, 0.01, 0.0, 0).truncation_time();
        assert!((tau - 0.707_106_781_186_547_5).abs() < 1e-12);
        let ratio = model(400, 0.3, 0.0, 0).truncation_time() / model(100, 0.3, 0.0, 0).truncation_time();
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn offdiag_factor_examples() {
        let m = model(3, 1.0, 0.0, 0);
        assert_eq!(m.offdiag_factor(0.0), 1.0);
        assert!(m.offdiag_factor(PI / 4.0).abs() < 1e-45);
        let big = model(10_000, 0.01, 0.0, 0);
        let f = big.offdiag_factor(big.truncation_time());
        assert!((f - 1.0 / E).abs() < 2e-4);
    }

    #[test]
    fn exact_zero_short_circuits() {
        let mut acc = ScaledProduct::new();
        acc.mul(0.5);
        acc.mul(0.0);
        acc.mul(-3.0);
        assert_eq!(acc.finish(), SignedLog::ZERO);
        assert_eq!(acc.finish().value(), 0.0);
    }

    #[test]
    fn log_domain_survives_underflow() {
        let m = model(1_000_000, 1.0, 0.0, 0);
        let t = 0.3;
        let f = m.offdiag_factor_log(t);
        let expected = 1_000_000.0 * (0.6f64).cos().ln();
        assert!((f.ln_abs - expected).abs() < 1e-6 * expected.abs());
        assert!(m.offdiag_factor_direct(t) < 1e-300);
        assert!(f.ln_abs < -1e5);
    }

    #[test]
    fn transverse_examples() {
        let up = DensityOperator::basis(2, 0).unwrap();
        let m = model(50, 0.2, 0.0, 0).with_r0(up).unwrap();
        let r = m.transverse_expectations(&[0.0, 0.3, 1.7]);
        assert!(r.sx.iter().chain(&r.sy).all(|v| *v == 0.0));

        let r0 = DensityOperator::qubit([0.6, 0.0, 0.0]).unwrap();
        let one = model(1, 0.7, 0.0, 0).with_r0(r0).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 0.13 * k as f64).collect();
        let r = one.transverse_expectations(&times);
        for (t, sx) in times.iter().zip(&r.sx) {
            assert!((sx - 0.6 * (2.0 * 0.7 * t).cos()).abs() < 1e-14);
        }
        let period = PI / 0.7;
        assert!((one.offdiag_factor(0.4 + period) - one.offdiag_factor(0.4)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_regime_at_large_n() {
        let m = model(10_000, 0.01, 0.0, 0);
        let tau = m.truncation_time();
        let times: Vec<f64> = (0..=400).map(|k| 2.0 * tau * k as f64 / 400.0).collect();
        let r = m.transverse_expectations(&times);
        for (sx, env) in r.sx.iter().zip(r.gaussian_envelope()) {
            assert!((sx - env).abs() <= 1e-3);
        }
        assert_eq!(r.sx[0].abs(), 1.0);
    }

    #[test]
    fn recurrence_examples() {
        let m = model(40, 1.0, 0.0, 0);
        for peak in m.recurrence_profile(4).unwrap() {
            assert!((peak.measured - 1.0).abs() < 1e-12);
            assert_eq!(peak.predicted, 1.0);
        }
        for seed in 0..5 {
            let m = model(400, 1.0, 0.1, seed);
            let p = m.recurrence_profile(2).unwrap();
            // e^{−19.739}
            assert!((p[0].predicted - 2.67e-9).abs() < 0.01e-9);
            let ratio = p[0].measured / p[0].predicted;
            assert!((0.1..=10.0).contains(&ratio), "seed {seed}: ratio {ratio}");
            let k = m.damping_constant();
            assert!((p[1].ln_predicted - p[0].ln_predicted + 3.0 * k).abs() < 1e-9);
        }
        assert!(model(3, 1.0, 0.0, 0).recurrence_profile(0).is_err());
    }

    #[test]
    fn cascade_examples() {
        let r0 = DensityOperator::qubit([0.3, 0.8, 0.2]).unwrap();
        let m = model(10_000, 0.01, 0.0, 0).with_r0(r0).unwrap();
        for k in 1..4 {
            let subset: Vec<usize> = (0..k).collect();
            let c = m.cascade_correlation(&subset, 0.0).unwrap();
            assert_eq!(c.with_sx, 0.0);
            assert_eq!(c.with_sy, 0.0);
        }
        let tau = m.truncation_time();
        let n = 10_000f64;
        for &t in &[0.05 * tau, 0.3 * tau, 0.8 * tau] {
            let c = m.cascade_correlation(&[17], t).unwrap();
            let approx = 0.8 * (2f64.sqrt() * t / (n.sqrt() * tau)) * (-(t / tau).powi(2)).exp();
            assert!((c.with_sx - approx).abs() < 1e-3 * approx);
        }
        assert!(m.cascade_correlation(&[], 0.1).is_err());
        assert!(m.cascade_correlation(&[3, 3], 0.1).is_err());
        assert!(m.cascade_correlation(&[10_000], 0.1).is_err());
    }

    #[test]
    fn cascade_ratio_is_tangent_on_equal_couplings() {
        let m = model(9, 0.4, 0.0, 0);
        let t = 0.37;
        for k in 1..5 {
            let a = m.cascade_magnitude(&(0..k).collect::<Vec<_>>(), t).unwrap().value();
            let b = m.cascade_magnitude(&(0..k + 1).collect::<Vec<_>>(), t).unwrap().value();
            assert!((b / a - (2.0 * 0.4 * t).tan()).abs() < 1e-12);
        }
    }

    #[test]
    fn offdiag_block_examples() {
        let m = model(5, 0.8, 0.2, 3);
        let b0 = m.joint_offdiag_block(0.0).unwrap();
        assert!(linalg::max_abs(&(&b0 - linalg::identity(32) / C64::from(32.0))) < 1e-16);
        for &t in &[0.1, 0.9, 3.3] {
            let b = m.joint_offdiag_block(t).unwrap();
            let bb = &b * b.adjoint();
            assert!(linalg::max_abs(&(bb - linalg::identity(32) / C64::from(1024.0))) < 1e-15);
            assert!((linalg::trace(&b).re - m.offdiag_factor(t)).abs() < 1e-14);
            assert!(linalg::trace(&b).im.abs() < 1e-14);
        }
        assert!(model(13, 1.0, 0.0, 0).joint_offdiag_block(0.1).unwrap_err().is_guard());
    }

    #[test]
    fn default_grid_covers_truncation_and_recurrences() {
        let m = model(100, 1.0, 0.0, 0);
        let grid = m.default_grid(2);
        assert_eq!(grid.len(), 400 + 2 * 121);
        assert_eq!(grid[0], 0.0);
        assert!((grid[399] - 4.0 * m.truncation_time()).abs() < 1e-15);
        assert!((grid[400 + 60] - PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn factor_is_bounded_and_log_matches_direct(
            n in 1usize..1000, g in 0.01f64..2.0, spread in 0.0f64..0.15, seed in 0u64..100, t in 0.0f64..20.0,
        ) {
            let spread = if n < 2 { 0.0 } else { spread };
            let m = CurieWeissModel::new(n, g, spread, seed, plus_x()).unwrap();
            let f = m.offdiag_factor(t);
            prop_assert!((-1.0..=1.0).contains(&f));
            let direct = m.offdiag_factor_direct(t);
            if direct.abs() > 1e-280 {
                prop_assert!((f - direct).abs() <= 1e-12 * direct.abs());
            }
        }

        #[test]
        fn half_period_shift_flips_sign_for_odd_n(n in 1usize..40, g in 0.1f64..2.0, t in 0.0f64..3.0) {
            let m = CurieWeissModel::new(n, g, 0.0, 0, plus_x()).unwrap();
            let shifted = m.offdiag_factor(t + PI / (2.0 * g));
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((shifted - sign * m.offdiag_factor(t)).abs() < 1e-9);
            prop_assert!((m.offdiag_factor(t + PI / g) - m.offdiag_factor(t)).abs() < 1e-9);
        }
    }
}
