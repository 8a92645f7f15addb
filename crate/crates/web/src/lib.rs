//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array` so the page needs no glue
//! beyond the generated module. The plain functions behind them are usable
//! natively and carry the tests.

use qmeas::ambiguity::{ambiguity_witness, BlochVector};
use qmeas::curie_weiss::CurieWeissModel;
use qmeas::DensityOperator;
use wasm_bindgen::prelude::*;

/// Browser callers would hang on huge products; the analytic path itself
/// scales much further.
pub const MAX_SPINS: usize = 1_000_000;
pub const MAX_POINTS: usize = 5_000;

fn check_sizes(n: usize, points: usize) -> Result<(), String> {
    if n == 0 || n > MAX_SPINS {
        return Err(format!("N must lie in 1..={MAX_SPINS}"));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_POINTS}"));
    }
    Ok(())
}

/// Rows `(t/τ, ⟨ŝ_x⟩, ⟨ŝ_y⟩, Gaussian envelope)` on `[0, t_max·τ]`.
pub fn truncation_rows(
    n: usize,
    g: f64,
    spread: f64,
    seed: u64,
    r0: [f64; 3],
    t_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    check_sizes(n, points)?;
    let state = DensityOperator::qubit(r0).map_err(|e| e.to_string())?;
    let m = CurieWeissModel::new(n, g, spread, seed, state).map_err(|e| e.to_string())?;
    let tau = m.truncation_time();
    let times: Vec<f64> = (0..points).map(|k| t_max * tau * k as f64 / (points - 1) as f64).collect();
    let res = m.transverse_expectations(&times);
    let env = res.gaussian_envelope();
    let mut out = Vec::with_capacity(4 * points);
    for k in 0..points {
        out.extend([times[k] / tau, res.sx[k], res.sy[k], env[k]]);
    }
    Ok(out)
}

/// Rows `(t/τ, |c₁|, …, |c_k|)` of k-spin correlation magnitudes for equal
/// couplings, each normalized to its own maximum on the grid.
pub fn cascade_rows(n: usize, g: f64, k_max: usize, t_max: f64, points: usize) -> Result<Vec<f64>, String> {
    check_sizes(n, points)?;
    if k_max == 0 || k_max > n.min(12) {
        return Err(format!("k must lie in 1..={}", n.min(12)));
    }
    let state = DensityOperator::qubit([1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let m = CurieWeissModel::new(n, g, 0.0, 0, state).map_err(|e| e.to_string())?;
    let tau = m.truncation_time();
    let mut logs = vec![Vec::with_capacity(points); k_max];
    for p in 0..points {
        let t = t_max * tau * p as f64 / (points - 1) as f64;
        for (k, series) in logs.iter_mut().enumerate() {
            let subset: Vec<usize> = (0..=k).collect();
            series.push(m.cascade_magnitude(&subset, t).map_err(|e| e.to_string())?.ln_abs);
        }
    }
    let peaks: Vec<f64> = logs.iter().map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut out = Vec::with_capacity((k_max + 1) * points);
    for p in 0..points {
        out.push(t_max * p as f64 / (points - 1) as f64);
        out.extend(logs.iter().zip(&peaks).map(|(s, peak)| (s[p] - peak).exp()));
    }
    Ok(out)
}

/// Two chords through `v`: the four endpoint Bloch vectors, the two pairs
/// of weights, then the overlap `|⟨ψ₁|ψ₁′⟩|²`.
pub fn chord_data(v: [f64; 3], d1: [f64; 3], d2: [f64; 3]) -> Result<Vec<f64>, String> {
    let b = BlochVector::new(v).map_err(|e| e.to_string())?;
    let w = ambiguity_witness(&b, d1, d2).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(17);
    for c in [&w.first, &w.second] {
        out.extend(c.v1.components());
        out.extend(c.v2.components());
    }
    out.extend([w.first.rho1, w.first.rho2, w.second.rho1, w.second.rho2, w.cross_overlap()]);
    Ok(out)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn truncation_curve(
    n: usize,
    g: f64,
    spread: f64,
    seed: u32,
    vx: f64,
    vy: f64,
    vz: f64,
    t_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    truncation_rows(n, g, spread, u64::from(seed), [vx, vy, vz], t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cascade_curves(n: usize, g: f64, k_max: usize, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    cascade_rows(n, g, k_max, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn chord_ambiguity(v: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let three = |x: Vec<f64>| <[f64; 3]>::try_from(x).map_err(|_| JsError::new("expected three components"));
    chord_data(three(v)?, three(d1)?, three(d2)?).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_rows_follow_the_envelope() {
        let rows = truncation_rows(10_000, 0.01, 0.0, 0, [1.0, 0.0, 0.0], 2.0, 101).unwrap();
        assert_eq!(rows.len(), 404);
        assert_eq!(&rows[..4], &[0.0, 1.0, 0.0, 1.0]);
        for r in rows.chunks(4) {
            assert!((r[1] - r[3]).abs() < 1e-3);
        }
        assert!((rows[400] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cascade_peaks_near_root_half_k() {
        let points = 601;
        let rows = cascade_rows(10_000, 0.01, 3, 3.0, points).unwrap();
        for k in 1..=3 {
            let (best, _) = rows
                .chunks(4)
                .map(|r| (r[0], r[k]))
                .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert!((best - (k as f64 / 2.0).sqrt()).abs() <= 0.01, "k = {k}: {best}");
        }
    }

    #[test]
    fn chords_of_the_mixed_state() {
        let d = chord_data([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.len(), 17);
        assert!((d[16] - 0.5).abs() < 1e-12);
        assert!(d[12..16].iter().all(|w| (w - 0.5).abs() < 1e-12));
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(truncation_rows(0, 0.01, 0.0, 0, [1.0, 0.0, 0.0], 2.0, 10).is_err());
        assert!(cascade_rows(5, 0.1, 6, 2.0, 10).is_err());
        assert!(chord_data([0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]).is_err());
        assert!(chord_data([0.0, 0.0, 1.5], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).is_err());
    }
}
