//! Endpoint thermodynamics of the measurement: maximum-entropy states under
//! linear constraints, Gibbs states with a symmetry-breaking source, the
//! mean-field Curie-Weiss magnet, windowed pointer states and the final joint
//! state of system and apparatus.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::qstate::{qexpect, qvariance, DensityOperator, Observable};
use crate::runs::{born_weights, luders_branch, TestedObservable, ZERO_WEIGHT};

/// Multiplier norm beyond which the dual is declared unbounded.
const DIVERGENCE_NORM: f64 = 1e6;

/// Linear constraints `⟨x̂_α⟩ = t_α` plus normalization, optionally with a
/// fixed `β = 1/T` term for a given Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    observables: Vec<Observable>,
    targets: Vec<f64>,
    fixed: Option<(Observable, f64)>,
}

impl ConstraintSet {
    pub fn new(dim: usize, observables: Vec<Observable>, targets: Vec<f64>) -> Result<Self> {
        if observables.len() != targets.len() {
            return Err(Error::InvalidParameter(format!(
                "{} observables for {} targets",
                observables.len(),
                targets.len()
            )));
        }
        if let Some(o) = observables.iter().find(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: o.dim() });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite target".into()));
        }
        check_rank(dim, &observables)?;
        Ok(Self { dim, observables, targets, fixed: None })
    }

    /// Normalization only.
    pub fn normalization_only(dim: usize) -> Self {
        Self { dim, observables: Vec::new(), targets: Vec::new(), fixed: None }
    }

    /// Adds `Ĥ/T` to the exponent with `T` held fixed.
    pub fn with_fixed_temperature(mut self, h: Observable, temperature: f64) -> Result<Self> {
        if h.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: h.dim() });
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!("temperature {temperature} must be positive")));
        }
        self.fixed = Some((h, temperature));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn temperature(&self) -> Option<f64> {
        self.fixed.as_ref().map(|(_, t)| *t)
    }

    fn fixed_exponent(&self) -> CMatrix {
        match &self.fixed {
            Some((h, t)) => h.matrix() / C64::from(*t),
            None => CMatrix::zeros(self.dim, self.dim),
        }
    }
}

/// Gram matrix of the normalized `{Î} ∪ {x̂_α}` in the Hilbert-Schmidt product.
fn check_rank(dim: usize, observables: &[Observable]) -> Result<()> {
    if observables.is_empty() {
        return Ok(());
    }
    let mut ops: Vec<CMatrix> = vec![linalg::identity(dim)];
    ops.extend(observables.iter().map(|o| o.matrix().clone()));
    let mut normalized = Vec::with_capacity(ops.len());
    for m in ops {
        let norm = linalg::trace_product(&m, &m).re.sqrt();
        if norm == 0.0 {
            return Err(Error::RankDeficient { min_eigenvalue: 0.0 });
        }
        normalized.push(m / C64::from(norm));
    }
    let k = normalized.len();
    let gram = DMatrix::from_fn(k, k, |a, b| linalg::trace_product(&normalized[a], &normalized[b]).re);
    let min = gram.symmetric_eigenvalues().min();
    if min < 1e-10 {
        return Err(Error::RankDeficient { min_eigenvalue: min });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSolution {
    pub state: DensityOperator,
    /// `γ = ln Z`.
    pub gamma: f64,
    /// `1/T` in fixed-temperature mode.
    pub beta: Option<f64>,
    /// `λ_α`, one per constraint observable.
    pub multipliers: Vec<f64>,
    /// `⟨x̂_α⟩ − t_α` at the solution.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl MaxEntSolution {
    /// Max entry of `ln D̂ + γÎ + βĤ + Σ λ_α x̂_α`.
    pub fn stationarity_residual(&self, constraints: &ConstraintSet) -> Result<f64> {
        let mut m = linalg::hermitian_function(self.state.matrix(), |p| C64::from(p.max(f64::MIN_POSITIVE).ln()))?;
        m += linalg::identity(constraints.dim) * C64::from(self.gamma);
        m += constraints.fixed_exponent();
        for (lam, x) in self.multipliers.iter().zip(&constraints.observables) {
            m += x.matrix() * C64::from(*lam);
        }
        Ok(linalg::max_abs(&m))
    }

    pub fn entropy(&self) -> Result<f64> {
        crate::qstate::vn_entropy(&self.state)
    }
}

/// Dual quantities at one multiplier vector.
struct DualPoint {
    phi: f64,
    ln_z: f64,
    gradient: DVector<f64>,
    eigen: linalg::HermitianEigen,
    probabilities: Vec<f64>,
}

fn dual_point(c: &ConstraintSet, base: &CMatrix, lambda: &DVector<f64>) -> Result<DualPoint> {
    let mut k = base.clone();
    for (l, x) in lambda.iter().zip(&c.observables) {
        k += x.matrix() * C64::from(*l);
    }
    let k = (&k + k.adjoint()) * C64::from(0.5);
    let eigen = linalg::hermitian_eigen(&k)?;
    let k_min = eigen.values[0];
    let weights: Vec<f64> = eigen.values.iter().map(|v| (-(v - k_min)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let ln_z = -k_min + sum.ln();
    let probabilities: Vec<f64> = weights.iter().map(|w| w / sum).collect();
    let rho = eigen.reconstruct_with(|v| C64::from((-(v - k_min)).exp() / sum));
    let expectations: Vec<f64> = c
        .observables
        .iter()
        .map(|x| linalg::trace_product(&rho, x.matrix()).re)
        .collect();
    let gradient = DVector::from_iterator(
        c.targets.len(),
        c.targets.iter().zip(&expectations).map(|(t, e)| t - e),
    );
    let phi = ln_z + lambda.iter().zip(&c.targets).map(|(l, t)| l * t).sum::<f64>();
    Ok(DualPoint { phi, ln_z, gradient, eigen, probabilities })
}

/// Kubo-Mori covariance of the constraint observables, the dual Hessian.
fn dual_hessian(c: &ConstraintSet, point: &DualPoint) -> DMatrix<f64> {
    let n = c.dim;
    let v = &point.eigen.vectors;
    let rotated: Vec<CMatrix> = c.observables.iter().map(|x| v.adjoint() * x.matrix() * v).collect();
    let p = &point.probabilities;
    let k = &point.eigen.values;
    let mut log_mean = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let diff = k[b] - k[a];
            log_mean[(a, b)] = if diff.abs() < 1e-12 { p[a] } else { (p[a] - p[b]) / diff };
        }
    }
    let means: Vec<f64> = rotated
        .iter()
        .map(|x| (0..n).map(|a| p[a] * x[(a, a)].re).sum())
        .collect();
    let m = rotated.len();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += log_mean[(a, b)] * (rotated[i][(a, b)] * rotated[j][(b, a)]).re;
                }
            }
            let value = acc - means[i] * means[j];
            h[(i, j)] = value;
            h[(j, i)] = value;
        }
    }
    h
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..8 {
        let shifted = h + DMatrix::<f64>::identity(h.nrows(), h.ncols()) * reg;
        if let Some(chol) = shifted.cholesky() {
            return chol.solve(g);
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    g.clone()
}

/// Maximizes `S(ρ)` (or minimizes the free energy in fixed-temperature mode)
/// under the constraints by damped Newton on the convex dual
/// `Φ(λ) = ln Tr exp(−βĤ − Σ λ_α x̂_α) + Σ λ_α t_α`.
pub fn maxent_state(constraints: &ConstraintSet, tol: f64, max_iter: usize) -> Result<MaxEntSolution> {
    let base = constraints.fixed_exponent();
    let m = constraints.observables.len();
    let mut lambda = DVector::<f64>::zeros(m);
    let mut point = dual_point(constraints, &base, &lambda)?;
    let mut iterations = 0;
    while point.gradient.amax() > tol {
        if iterations >= max_iter {
            return Err(Error::NoConvergence { what: "max-entropy dual", iterations });
        }
        iterations += 1;
        let hess = dual_hessian(constraints, &point);
        // Φ decreases along −H⁻¹∇Φ; ∇Φ = t − ⟨x⟩ = point.gradient
        let step = -newton_direction(&hess, &point.gradient);
        let slope = point.gradient.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &lambda + &step * alpha;
            if trial.norm() > DIVERGENCE_NORM || !trial.iter().all(|x| x.is_finite()) {
                return Err(Error::Infeasible(format!(
                    "multipliers exceed {DIVERGENCE_NORM:e} after {iterations} Newton steps"
                )));
            }
            let candidate = dual_point(constraints, &base, &trial)?;
            if candidate.phi <= point.phi + 1e-4 * alpha * slope || candidate.gradient.amax() < point.gradient.amax() * 0.5 {
                accepted = Some((trial, candidate));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((l, p)) => {
                lambda = l;
                point = p;
            }
            None => return Err(Error::NoConvergence { what: "max-entropy line search", iterations }),
        }
    }
    let c = constraints;
    let k_min = point.eigen.values[0];
    let sum: f64 = point.eigen.values.iter().map(|v| (-(v - k_min)).exp()).sum();
    let rho = point.eigen.reconstruct_with(|v| C64::from((-(v - k_min)).exp() / sum));
    let rho = (&rho + rho.adjoint()) * C64::from(0.5);
    let state = DensityOperator::assembled(rho, vec![c.dim])?;
    let residuals = c
        .observables
        .iter()
        .zip(&c.targets)
        .map(|(x, t)| qexpect(&state, x).map(|e| e - t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MaxEntSolution {
        state,
        gamma: point.ln_z,
        beta: c.temperature().map(|t| 1.0 / t),
        multipliers: lambda.iter().copied().collect(),
        residuals,
        iterations,
    })
}

/// Normalized Gibbs state with its log partition function.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub state: DensityOperator,
    pub ln_z: f64,
}

impl GibbsState {
    pub fn partition(&self) -> f64 {
        self.ln_z.exp()
    }
}

/// `R̂ʰ = exp(−(Ĥ_M + ĥ)/T) / Z`.
pub fn gibbs_with_source(h_m: &Observable, h_i: &Observable, temperature: f64) -> Result<GibbsState> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature {temperature} must be positive")));
    }
    let total = h_m.plus(h_i)?;
    gibbs(&total, temperature)
}

fn gibbs(h: &Observable, temperature: f64) -> Result<GibbsState> {
    let n = h.dim();
    let m = h.matrix();
    if h.is_diagonal() {
        let e: Vec<f64> = (0..n).map(|k| m[(k, k)].re).collect();
        let e_min = e.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = e.iter().map(|x| (-(x - e_min) / temperature).exp()).collect();
        let sum: f64 = w.iter().sum();
        let pops: Vec<f64> = w.iter().map(|x| x / sum).collect();
        let mut rho = CMatrix::zeros(n, n);
        for (k, p) in pops.iter().enumerate() {
            rho[(k, k)] = C64::from(*p);
        }
        let state = DensityOperator::assembled(rho, vec![n])?;
        return Ok(GibbsState { state, ln_z: -e_min / temperature + sum.ln() });
    }
    let eig = linalg::hermitian_eigen(m)?;
    let e_min = eig.values[0];
    let sum: f64 = eig.values.iter().map(|x| (-(x - e_min) / temperature).exp()).sum();
    let rho = eig.reconstruct_with(|x| C64::from((-(x - e_min) / temperature).exp() / sum));
    let rho = (&rho + rho.adjoint()) * C64::from(0.5);
    Ok(GibbsState {
        state: DensityOperator::assembled(rho, vec![n])?,
        ln_z: -e_min / temperature + sum.ln(),
    })
}

/// Solutions of `m = tanh((Jm + field)/T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanField {
    /// The stable branch, with the sign of the field.
    Unique(f64),
    /// Zero field below `T = J`: the two ferromagnetic solutions `±m`.
    SymmetricPair(f64),
}

impl MeanField {
    /// Magnitude of the (positive member of the) solution.
    pub fn magnitude(&self) -> f64 {
        match *self {
            MeanField::Unique(m) => m.abs(),
            MeanField::SymmetricPair(m) => m,
        }
    }
}

pub fn meanfield_magnetization(j: f64, temperature: f64, field: f64) -> Result<MeanField> {
    if !(j > 0.0) || !(temperature > 0.0) || !field.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need J > 0, T > 0 and a finite field, got J = {j}, T = {temperature}, field = {field}"
        )));
    }
    if field == 0.0 && temperature >= j {
        return Ok(MeanField::Unique(0.0));
    }
    let h = field.abs();
    // f(m) = m − tanh((Jm + h)/T) is negative below the root and positive above on (0, 1]
    let f = |m: f64| m - ((j * m + h) / temperature).tanh();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    while hi - lo > 1e-16 * hi.max(1e-300) && iterations < 2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let m = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    if f(m).abs() > 1e-12 {
        return Err(Error::NoConvergence { what: "mean-field bisection", iterations });
    }
    Ok(if field == 0.0 {
        MeanField::SymmetricPair(m)
    } else {
        MeanField::Unique(m.copysign(field))
    })
}

/// Binary mixing entropy `s(m)` per spin in nats.
pub fn mixing_entropy(m: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(0.5 * (1.0 + m)) + term(0.5 * (1.0 - m))
}

/// `F(m) = −Jm²/2 − field·m − T s(m)` on the given grid.
pub fn free_energy_profile(j: f64, temperature: f64, field: f64, m_grid: &[f64]) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature {temperature} must be positive")));
    }
    if let Some(bad) = m_grid.iter().find(|m| !(-1.0..=1.0).contains(*m)) {
        return Err(Error::InvalidParameter(format!("magnetization {bad} outside [−1, 1]")));
    }
    Ok(m_grid
        .iter()
        .map(|&m| -0.5 * j * m * m - field * m - temperature * mixing_entropy(m))
        .collect())
}

/// Whether `F(m)` keeps a local minimum at `m < 0` for a positive field,
/// scanning the sign of `F'(m) = −Jm − field + T artanh m` with `F' → −∞` at
/// `m = −1` so wells pressed against the boundary still count.
fn has_opposite_well(j: f64, temperature: f64, field: f64, grid: &[f64]) -> bool {
    let mut previous = f64::NEG_INFINITY;
    for &m in grid.iter().filter(|m| **m < 0.0) {
        let d = -j * m - field + temperature * m.atanh();
        if previous < 0.0 && d >= 0.0 {
            return true;
        }
        previous = d;
    }
    false
}

/// Smallest positive field at which the free energy keeps a single minimum,
/// i.e. the metastable well on the side opposite to the field is gone.
/// Zero at and above `T = J`, where there is no barrier at all.
pub fn g_threshold(j: f64, temperature: f64) -> Result<f64> {
    if !(j > 0.0) || !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("need J > 0 and T > 0, got {j}, {temperature}")));
    }
    if temperature >= j {
        return Ok(0.0);
    }
    let points = 40_001;
    let grid: Vec<f64> = (1..points - 1)
        .map(|k| -1.0 + 2.0 * k as f64 / (points - 1) as f64)
        .collect();
    let (mut lo, mut hi) = (0.0, j);
    if !has_opposite_well(j, temperature, lo, &grid) || has_opposite_well(j, temperature, hi, &grid) {
        return Err(Error::NoConvergence { what: "barrier scan bracket", iterations: 0 });
    }
    let mut iterations = 0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if has_opposite_well(j, temperature, mid, &grid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NoConvergence { what: "barrier bisection", iterations });
        }
    }
    Ok(hi)
}

/// Sequence of sourced equilibrium states for decreasing source strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerLimit {
    pub scales: Vec<f64>,
    /// `tr(R̂ʰ Â)` per scale.
    pub values: Vec<f64>,
    /// Linear extrapolation of the last two values to zero scale.
    pub extrapolated: f64,
    /// Whether the last step changed the value by less than 1e-6 relative.
    pub converged: bool,
    /// Sourced state at the smallest scale.
    pub state: DensityOperator,
}

/// Follows `R̂ʰ` for `ĥ` multiplied by each scale in turn.
pub fn pointer_limit(
    h_m: &Observable,
    h: &Observable,
    pointer_obs: &Observable,
    temperature: f64,
    scales: &[f64],
) -> Result<PointerLimit> {
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter("scales must be positive and finite".into()));
    }
    if scales.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("scales must be non-increasing".into()));
    }
    let mut values = Vec::with_capacity(scales.len());
    let mut state = None;
    for &s in scales {
        let g = gibbs_with_source(h_m, &h.scaled(s), temperature)?;
        values.push(qexpect(&g.state, pointer_obs)?);
        state = Some(g.state);
    }
    let state = state.expect("nonempty scales");
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonConvergentSequence(format!("value {bad} is not finite")));
    }
    let slopes: Vec<f64> = scales
        .windows(2)
        .zip(values.windows(2))
        .filter(|(s, _)| s[0] != s[1])
        .map(|(s, v)| (v[1] - v[0]) / (s[1] - s[0]))
        .collect();
    let diffs: Vec<f64> = values.windows(2).map(|v| v[1] - v[0]).filter(|d| *d != 0.0).collect();
    if diffs.windows(2).any(|d| d[0].signum() != d[1].signum() && d[1].abs() > 1e-12 * values[0].abs().max(1.0)) {
        return Err(Error::NonConvergentSequence(format!("values oscillate: {values:?}")));
    }
    if slopes.windows(2).any(|q| q[1].abs() > 10.0 * q[0].abs() + 1e-12) {
        return Err(Error::NonConvergentSequence(format!("values diverge: {values:?}")));
    }
    let last = *values.last().unwrap();
    let (extrapolated, converged) = match slopes.last() {
        None => (last, true),
        Some(q) => {
            let s_last = *scales.last().unwrap();
            let step = values[values.len() - 1] - values[values.len() - 2];
            (last - q * s_last, step.abs() <= 1e-6 * last.abs().max(f64::MIN_POSITIVE))
        }
    };
    Ok(PointerLimit { scales: scales.to_vec(), values, extrapolated, converged, state })
}

/// Pointer observable, outcome values, windows and pointer states.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerModel {
    pointer_obs: Observable,
    outcomes: Vec<f64>,
    window: f64,
    window_projectors: Vec<CMatrix>,
    pointer_states: Vec<DensityOperator>,
    sourced_states: Vec<DensityOperator>,
    ln_partition: Vec<f64>,
}

impl PointerModel {
    /// Windows `[Aᵢ − δ, Aᵢ + δ]` on the spectrum of `Â`, with `R̂ᵢ` the
    /// sourced state restricted to window `i` and renormalized.
    pub fn new(pointer_obs: Observable, outcomes: Vec<f64>, window: f64, sourced: Vec<GibbsState>) -> Result<Self> {
        if outcomes.len() != sourced.len() || outcomes.is_empty() {
            return Err(Error::InvalidPointer(format!(
                "{} outcomes for {} sourced states",
                outcomes.len(),
                sourced.len()
            )));
        }
        if !(window > 0.0) {
            return Err(Error::InvalidPointer(format!("window half-width {window} must be positive")));
        }
        let d = pointer_obs.dim();
        if let Some(s) = sourced.iter().find(|s| s.state.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: s.state.dim() });
        }
        let window_projectors: Vec<CMatrix> = if pointer_obs.is_diagonal() {
            outcomes
                .iter()
                .map(|a| {
                    let mask: Vec<f64> = (0..d)
                        .map(|k| f64::from(u8::from((pointer_obs.matrix()[(k, k)].re - a).abs() <= window)))
                        .collect();
                    linalg::from_real_diagonal(&mask)
                })
                .collect()
        } else {
            let eig = linalg::hermitian_eigen(pointer_obs.matrix())?;
            outcomes
                .iter()
                .map(|a| {
                    let cols: Vec<usize> = (0..d).filter(|&k| (eig.values[k] - a).abs() <= window).collect();
                    linalg::projector_onto(&eig.vectors, &cols)
                })
                .collect()
        };
        for (i, p) in window_projectors.iter().enumerate() {
            for (j, q) in window_projectors.iter().enumerate().skip(i + 1) {
                let overlap = if linalg::is_diagonal(p) && linalg::is_diagonal(q) {
                    (0..d).map(|k| (p[(k, k)] * q[(k, k)]).norm()).fold(0.0, f64::max)
                } else {
                    linalg::max_abs(&(p * q))
                };
                if overlap > 1e-12 {
                    return Err(Error::InvalidPointer(format!("windows {i} and {j} overlap")));
                }
            }
        }
        let mut pointer_states = Vec::with_capacity(outcomes.len());
        for (i, (p, s)) in window_projectors.iter().zip(&sourced).enumerate() {
            let block = linalg::sandwich(p, s.state.matrix());
            let w = linalg::trace(&block).re;
            if w <= ZERO_WEIGHT {
                return Err(Error::InvalidPointer(format!("sourced state {i} has no weight in its window")));
            }
            pointer_states.push(DensityOperator::assembled(block / C64::from(w), vec![d])?);
        }
        let min_gap = outcomes
            .iter()
            .enumerate()
            .flat_map(|(i, a)| outcomes[i + 1..].iter().map(move |b| (a - b).abs()))
            .fold(f64::INFINITY, f64::min);
        if outcomes.len() > 1 && window > min_gap / 3.0 {
            return Err(Error::InvalidPointer(format!(
                "window {window} exceeds a third of the outcome gap {min_gap}"
            )));
        }
        for (i, (r, a)) in pointer_states.iter().zip(&outcomes).enumerate() {
            let mean = qexpect(r, &pointer_obs)?;
            if (mean - a).abs() > window {
                return Err(Error::InvalidPointer(format!("pointer state {i} reads {mean}, not within δ of {a}")));
            }
            let sd = qvariance(r, &pointer_obs)?.max(0.0).sqrt();
            if sd > window / 3.0 {
                return Err(Error::InvalidPointer(format!(
                    "pointer state {i} fluctuates by {sd}, more than δ/3 = {}",
                    window / 3.0
                )));
            }
            for (j, p) in window_projectors.iter().enumerate() {
                if j != i && linalg::max_abs(&linalg::sandwich(p, r.matrix())) > 1e-8 {
                    return Err(Error::InvalidPointer(format!("pointer state {i} leaks into window {j}")));
                }
            }
        }
        Ok(Self {
            pointer_obs,
            outcomes,
            window,
            ln_partition: sourced.iter().map(|s| s.ln_z).collect(),
            sourced_states: sourced.into_iter().map(|s| s.state).collect(),
            window_projectors,
            pointer_states,
        })
    }

    /// Curie-Weiss magnet `Ĥ_M = −(J/2N) M̂_z²` with sources `ĥ = ∓g M̂_z` and
    /// pointer `Â = M̂_z`. Outcome 0 (source `−g M̂_z`) points up.
    ///
    /// `Aᵢ` and its spread `σ` are taken from the unsourced Gibbs state
    /// conditioned on the matching sign of `M̂_z`; the window is `δ = 3σ`.
    pub fn curie_weiss(n_spins: usize, j: f64, temperature: f64, g: f64) -> Result<Self> {
        if n_spins == 0 || n_spins > crate::curie_weiss::DENSE_MAX_SPINS {
            return Err(Error::DenseGuard { n: n_spins, max: crate::curie_weiss::DENSE_MAX_SPINS });
        }
        let mz = magnetization_values(n_spins);
        let pointer_obs = Observable::diagonal(&mz);
        let energies: Vec<f64> = mz.iter().map(|m| -j / (2.0 * n_spins as f64) * m * m).collect();
        let h_m = Observable::diagonal(&energies);
        let mut outcomes = Vec::with_capacity(2);
        let mut spreads = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let w: Vec<f64> = energies
                .iter()
                .zip(&mz)
                .map(|(e, m)| if m * sign > 0.0 { (-e / temperature).exp() } else { 0.0 })
                .collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                return Err(Error::InvalidPointer("magnet has no state of the required sign".into()));
            }
            let mean = w.iter().zip(&mz).map(|(p, m)| p * m).sum::<f64>() / total;
            let second = w.iter().zip(&mz).map(|(p, m)| p * m * m).sum::<f64>() / total;
            outcomes.push(mean);
            spreads.push((second - mean * mean).max(0.0).sqrt());
        }
        let window = 3.0 * spreads.iter().copied().fold(0.0, f64::max);
        let sourced = [-g, g]
            .iter()
            .map(|c| gibbs_with_source(&h_m, &pointer_obs.scaled(*c), temperature))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pointer_obs, outcomes, window, sourced)
    }

    pub fn pointer_obs(&self) -> &Observable {
        &self.pointer_obs
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn window_projectors(&self) -> &[CMatrix] {
        &self.window_projectors
    }

    pub fn pointer_states(&self) -> &[DensityOperator] {
        &self.pointer_states
    }

    pub fn sourced_states(&self) -> &[DensityOperator] {
        &self.sourced_states
    }

    pub fn ln_partition(&self) -> &[f64] {
        &self.ln_partition
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Eigenvalues of `M̂_z = Σₙ σ̂_z⁽ⁿ⁾` in the computational basis, spin 1 most
/// significant, bit 0 meaning `σ_z = +1`.
pub fn magnetization_values(n_spins: usize) -> Vec<f64> {
    (0..1usize << n_spins)
        .map(|k| n_spins as f64 - 2.0 * f64::from(k.count_ones()))
        .collect()
}

/// `Σᵢ pᵢ r̂ᵢ ⊗ R̂ᵢ` with Born weights and Lüders branches; empty outcomes
/// are left out.
pub fn final_joint_state(
    r0: &DensityOperator,
    tested: &TestedObservable,
    pointer: &PointerModel,
) -> Result<DensityOperator> {
    if tested.len() != pointer.len() {
        return Err(Error::InvalidParameter(format!(
            "{} tested outcomes for {} pointer states",
            tested.len(),
            pointer.len()
        )));
    }
    let weights = born_weights(r0, tested)?;
    let ds = r0.dim();
    let dm = pointer.pointer_obs.dim();
    let mut acc = CMatrix::zeros(ds * dm, ds * dm);
    for (i, &p) in weights.iter().enumerate() {
        if p <= ZERO_WEIGHT {
            continue;
        }
        let branch = luders_branch(r0, tested, i)?;
        let r = branch.r.matrix() * C64::from(p);
        let big_r = pointer.pointer_states[i].matrix();
        for a in 0..ds {
            for b in 0..ds {
                let rab = r[(a, b)];
                if rab == linalg::ZERO {
                    continue;
                }
                for y in 0..dm {
                    for x in 0..dm {
                        let v = big_r[(x, y)];
                        if v != linalg::ZERO {
                            acc[(a * dm + x, b * dm + y)] += rab * v;
                        }
                    }
                }
            }
        }
    }
    DensityOperator::assembled(acc, vec![ds, dm])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{partial_trace, vn_entropy};
    use crate::runs::{subensemble_state, unread_reduction};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> Observable {
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        Observable::new((&a + a.adjoint()) * C64::from(0.5)).unwrap()
    }

    fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> DensityOperator {
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint() + linalg::identity(dim) * C64::from(0.05);
        let tr = linalg::trace(&m).re;
        DensityOperator::from_matrix(m / C64::from(tr)).unwrap()
    }

    /// Random feasible instance: targets read off a random full-rank state.
    pub(crate) fn random_instance(seed: u64) -> ConstraintSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(2..=16usize);
        let count = rng.random_range(1..=4usize.min(dim * dim - 1));
        let sigma = random_state(dim, &mut rng);
        let obs: Vec<Observable> = (0..count).map(|_| random_hermitian(dim, &mut rng)).collect();
        let targets = obs.iter().map(|o| qexpect(&sigma, o).unwrap()).collect();
        ConstraintSet::new(dim, obs, targets).unwrap()
    }

    #[test]
    fn normalization_only_gives_uniform_state() {
        let sol = maxent_state(&ConstraintSet::normalization_only(5), 1e-10, 50).unwrap();
        assert!(linalg::max_abs(&(sol.state.matrix() - linalg::identity(5) / C64::from(5.0))) < 1e-15);
        assert!((sol.gamma - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_temperature_two_level_gibbs() {
        let h = Observable::diagonal(&[0.0, 1.0]);
        let c = ConstraintSet::normalization_only(2).with_fixed_temperature(h, 1.0).unwrap();
        let sol = maxent_state(&c, 1e-10, 50).unwrap();
        let p0 = 1.0 / (1.0 + (-1f64).exp());
        assert!((sol.state.matrix()[(0, 0)].re - p0).abs() < 1e-12);
        assert!((p0 - 0.731059).abs() < 1e-6);
        assert!(sol.stationarity_residual(&c).unwrap() < 1e-12);
    }

    #[test]
    fn energy_target_recovers_beta() {
        let h = Observable::diagonal(&[0.0, 1.0]);
        let e = (-1f64).exp() / (1.0 + (-1f64).exp());
        let c = ConstraintSet::new(2, vec![h], vec![e]).unwrap();
        let sol = maxent_state(&c, 1e-12, 50).unwrap();
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-8);
        assert!(sol.iterations < 50);
    }

    #[test]
    fn infeasible_and_degenerate_constraints() {
        let c = ConstraintSet::new(2, vec![Observable::pauli_z()], vec![1.5]).unwrap();
        assert!(matches!(maxent_state(&c, 1e-10, 500), Err(Error::Infeasible(_))));
        let dup = ConstraintSet::new(2, vec![Observable::pauli_z(), Observable::pauli_z().scaled(2.0)], vec![0.1, 0.2]);
        assert!(matches!(dup, Err(Error::RankDeficient { .. })));
        let with_identity = ConstraintSet::new(2, vec![Observable::identity(2)], vec![1.0]);
        assert!(matches!(with_identity, Err(Error::RankDeficient { .. })));
        let c = random_instance(3);
        assert!(matches!(maxent_state(&c, 1e-10, 0), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn random_instances_converge_with_stationarity() {
        for seed in 0..20 {
            let c = random_instance(seed);
            let sol = maxent_state(&c, 1e-10, 100).unwrap();
            assert!(sol.residuals.iter().all(|r| r.abs() <= 1e-10), "seed {seed}");
            assert!(sol.stationarity_residual(&c).unwrap() <= 1e-6, "seed {seed}");
            assert!(sol.iterations < 50, "seed {seed}: {} iterations", sol.iterations);
        }
    }

    #[test]
    fn entropy_beats_feasible_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let c = random_instance(100 + seed);
            let sol = maxent_state(&c, 1e-12, 100).unwrap();
            let s_max = sol.entropy().unwrap();
            let d = c.dim();
            // Gram-Schmidt basis of span{I, x_α} for projecting perturbations
            let mut basis: Vec<CMatrix> = Vec::new();
            for m in std::iter::once(linalg::identity(d)).chain(c.observables().iter().map(|o| o.matrix().clone())) {
                let mut v = m;
                for b in &basis {
                    let coef = linalg::trace_product(b, &v).re;
                    v -= b * C64::from(coef);
                }
                let norm = linalg::trace_product(&v, &v).re.sqrt();
                basis.push(v / C64::from(norm));
            }
            for _ in 0..20 {
                let mut delta = random_hermitian(d, &mut rng).into_matrix();
                for b in &basis {
                    let coef = linalg::trace_product(b, &delta).re;
                    delta -= b * C64::from(coef);
                }
                let min_eig = sol.state.eigenvalues().unwrap()[0];
                let scale = 0.5 * min_eig / linalg::trace_norm(&delta).unwrap();
                let m = sol.state.matrix() + delta * C64::from(scale);
                let other = DensityOperator::from_matrix((&m + m.adjoint()) * C64::from(0.5)).unwrap();
                for (x, t) in c.observables().iter().zip(c.targets()) {
                    assert!((qexpect(&other, x).unwrap() - t).abs() < 1e-9);
                }
                assert!(vn_entropy(&other).unwrap() <= s_max + 1e-12);
            }
        }
    }

    #[test]
    fn ideal_measurement_constraints_give_block_form() {
        // conserved π̂ᵢ on S plus a magnet energy on a two-level M
        let pi_up = Observable::diagonal(&[1.0, 0.0]).kron(&Observable::identity(2));
        let coupling = Observable::pauli_z().kron(&Observable::pauli_z()).scaled(-0.3);
        let h = Observable::identity(2).kron(&Observable::pauli_x()).scaled(0.2).plus(&coupling).unwrap();
        let c = ConstraintSet::new(4, vec![pi_up, h], vec![0.7, -0.1]).unwrap();
        let sol = maxent_state(&c, 1e-12, 100).unwrap();
        let up = linalg::kron(&linalg::from_real_diagonal(&[1.0, 0.0]), &linalg::identity(2));
        let down = linalg::kron(&linalg::from_real_diagonal(&[0.0, 1.0]), &linalg::identity(2));
        let cross = linalg::left_right(&up, sol.state.matrix(), &down);
        assert!(linalg::max_abs(&cross) < 1e-10);
    }

    #[test]
    fn gibbs_examples() {
        let h = Observable::diagonal(&[0.3, -1.2, 2.0]);
        let hot = gibbs_with_source(&h, &Observable::zero(3), 1e6 * 2.0).unwrap();
        assert!(linalg::max_abs(&(hot.state.matrix() - linalg::identity(3) / C64::from(3.0))) < 1e-5);

        let (g, t) = (0.4, 0.7);
        let s = gibbs_with_source(&Observable::zero(2), &Observable::pauli_z().scaled(-g), t).unwrap();
        assert!((qexpect(&s.state, &Observable::pauli_z()).unwrap() - (g / t).tanh()).abs() < 1e-14);
        assert!((s.partition() - 2.0 * (g / t).cosh()).abs() < 1e-14);

        // dense path against the diagonal one
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hm = random_hermitian(4, &mut rng);
        let src = random_hermitian(4, &mut rng);
        let dense = gibbs_with_source(&hm, &src, 0.9).unwrap();
        let total = hm.plus(&src).unwrap();
        let eig = linalg::hermitian_eigen(total.matrix()).unwrap();
        let expect = eig.reconstruct_with(|e| C64::from((-e / 0.9).exp()));
        let z = linalg::trace(&expect).re;
        assert!(linalg::max_abs(&(dense.state.matrix() - expect / C64::from(z))) < 1e-13);
        assert!((dense.ln_z - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_sources_share_partition_function() {
        let pointer = PointerModel::curie_weiss(6, 1.0, 0.5, 0.02).unwrap();
        let z = pointer.ln_partition();
        assert!((z[0] - z[1]).abs() < 1e-12);
    }

    #[test]
    fn meanfield_examples() {
        assert_eq!(meanfield_magnetization(1.0, 1.3, 0.0).unwrap(), MeanField::Unique(0.0));
        let MeanField::SymmetricPair(m) = meanfield_magnetization(1.0, 0.8, 0.0).unwrap() else {
            panic!("expected the symmetric pair below T = J")
        };
        // independent root of m = tanh(1.25 m)
        assert!((m - 0.710_411_783_487_870_8).abs() < 1e-12);
        assert!((m - (1.25 * m).tanh()).abs() <= 1e-12);
        let big = meanfield_magnetization(1.0, 0.8, -50.0).unwrap();
        assert!((big.magnitude() - 1.0).abs() < 1e-12);
        assert!(matches!(big, MeanField::Unique(v) if v < 0.0));
        assert!(meanfield_magnetization(-1.0, 0.8, 0.0).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let grid: Vec<f64> = (0..=2000).map(|k| -1.0 + k as f64 / 1000.0).collect();
        let f = free_energy_profile(1.0, 0.8, 0.0, &grid).unwrap();
        let minima: Vec<usize> = (1..grid.len() - 1).filter(|&k| f[k] < f[k - 1] && f[k] < f[k + 1]).collect();
        assert_eq!(minima.len(), 2);
        assert!((grid[minima[0]] + grid[minima[1]]).abs() < 1e-12);
        assert!((grid[minima[1]] - 0.7104).abs() < 1e-3);
        assert!(f[1000] > f[999] && f[1000] > f[1001]);

        let field = 0.13;
        let fp = free_energy_profile(1.0, 0.8, field, &grid).unwrap();
        for k in 0..grid.len() {
            let mirror = grid.len() - 1 - k;
            assert!((fp[k] - fp[mirror] + 2.0 * field * grid[k]).abs() < 1e-12);
        }
        assert!(free_energy_profile(1.0, 0.8, 0.0, &[1.5]).is_err());
    }

    fn interior_minima(j: f64, temperature: f64, field: f64, grid: &[f64]) -> usize {
        let f = free_energy_profile(j, temperature, field, grid).expect("grid inside [−1, 1]");
        f.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
    }

    /// Spinodal field in closed form, `h = J s − T artanh s` with `s² = 1 − T/J`.
    fn spinodal(j: f64, t: f64) -> f64 {
        if t >= j {
            return 0.0;
        }
        let s = (1.0 - t / j).sqrt();
        j * s - t * s.atanh()
    }

    #[test]
    fn threshold_separates_one_and_two_minima() {
        let h = g_threshold(1.0, 0.8).unwrap();
        assert!(h > 0.0);
        assert!((h - spinodal(1.0, 0.8)).abs() < 1e-6);
        let grid: Vec<f64> = (1..40_000).map(|k| -1.0 + k as f64 / 20_000.0).collect();
        assert_eq!(interior_minima(1.0, 0.8, 1.01 * h, &grid), 1);
        assert_eq!(interior_minima(1.0, 0.8, 0.99 * h, &grid), 2);
        assert_eq!(g_threshold(1.0, 1.2).unwrap(), 0.0);
    }

    #[test]
    fn threshold_decreases_with_temperature() {
        let temps: Vec<f64> = (0..10).map(|k| 0.3 + 0.08 * k as f64).collect();
        let values: Vec<f64> = temps.iter().map(|&t| g_threshold(1.0, t).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pointer_limit_examples() {
        // commuting scalar case: single spin in a field
        let sz = Observable::pauli_z();
        let lim = pointer_limit(&Observable::zero(2), &sz.scaled(-1.0), &sz, 0.5, &[0.4, 0.2, 0.1, 0.05]).unwrap();
        assert!(lim.values.windows(2).all(|w| w[1] < w[0]));
        assert!(lim.extrapolated.abs() < 0.01);

        let same = pointer_limit(&Observable::zero(2), &sz.scaled(-1.0), &sz, 0.5, &[0.3, 0.3]).unwrap();
        let direct = gibbs_with_source(&Observable::zero(2), &sz.scaled(-0.3), 0.5).unwrap();
        assert_eq!(same.state, direct.state);
        assert_eq!(same.extrapolated, same.values[0]);

        assert!(pointer_limit(&Observable::zero(2), &sz, &sz, 0.5, &[0.1, 0.2]).is_err());
        assert!(pointer_limit(&Observable::zero(2), &sz, &sz, 0.5, &[]).is_err());
    }

    #[test]
    fn coarse_scales_are_not_reported_converged() {
        let sz = Observable::pauli_z();
        let lim = pointer_limit(&Observable::zero(2), &sz.scaled(-1.0), &sz, 1.0, &[1.0, 0.5]).unwrap();
        assert!(!lim.converged);
        let lim = pointer_limit(&Observable::zero(2), &sz.scaled(-1.0), &sz, 1.0, &[1e-9, 5e-10]).unwrap();
        assert!(!lim.converged && lim.extrapolated.abs() < 1e-15);
    }

    #[test]
    fn finite_size_error_shrinks_with_magnet_size() {
        let (j, t) = (1.0, 0.8);
        let m_f = meanfield_magnetization(j, t, 0.0).unwrap().magnitude();
        let mut errors = Vec::new();
        for n in [8usize, 10, 12] {
            let mz = magnetization_values(n);
            let energies: Vec<f64> = mz.iter().map(|m| -j / (2.0 * n as f64) * m * m).collect();
            let a_hat = Observable::diagonal(&mz);
            let lim = pointer_limit(&Observable::diagonal(&energies), &a_hat.scaled(-1.0), &a_hat, t, &[0.4, 0.2, 0.1]).unwrap();
            assert!(lim.extrapolated > 0.0);
            errors.push((lim.extrapolated / n as f64 - m_f).abs());
        }
        assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    }

    fn toy_pointer() -> PointerModel {
        PointerModel::curie_weiss(10, 1.0, 0.5, 0.02).unwrap()
    }

    #[test]
    fn toy_pointer_satisfies_window_invariants() {
        let p = toy_pointer();
        assert!(p.outcomes()[0] > 0.0 && (p.outcomes()[0] + p.outcomes()[1]).abs() < 1e-12);
        for (i, pi) in p.window_projectors().iter().enumerate() {
            assert!(linalg::max_abs(&(pi * pi - pi)) < 1e-15);
            for (j, r) in p.pointer_states().iter().enumerate() {
                let s = linalg::sandwich(pi, r.matrix());
                let expect = if i == j { r.matrix().clone() } else { CMatrix::zeros(1024, 1024) };
                assert!(linalg::max_abs(&(s - expect)) < 1e-8);
            }
        }
        // a hot magnet has no separable pointer states
        assert!(matches!(PointerModel::curie_weiss(10, 1.0, 0.8, 0.02), Err(Error::InvalidPointer(_))));
    }

    #[test]
    fn final_state_examples() {
        let p = toy_pointer();
        let s = TestedObservable::spin_z();
        let up = DensityOperator::basis(2, 0).unwrap();
        let d = final_joint_state(&up, &s, &p).unwrap();
        assert!(linalg::max_abs(&(d.matrix() - up.tensor(&p.pointer_states()[0]).matrix())) < 1e-15);

        let plus = DensityOperator::qubit([1.0, 0.0, 0.0]).unwrap();
        let d = final_joint_state(&plus, &s, &p).unwrap();
        let expect = (DensityOperator::basis(2, 0).unwrap().tensor(&p.pointer_states()[0]).into_matrix()
            + DensityOperator::basis(2, 1).unwrap().tensor(&p.pointer_states()[1]).into_matrix())
            * C64::from(0.5);
        assert!(linalg::max_abs(&(d.matrix() - expect)) < 1e-15);

        let r0 = DensityOperator::qubit([0.3, 0.5, -0.2]).unwrap();
        let d = final_joint_state(&r0, &s, &p).unwrap();
        let reduced = partial_trace(&d, &[0]).unwrap();
        assert!(linalg::max_abs(&(reduced.matrix() - unread_reduction(&r0, &s).unwrap().matrix())) < 1e-14);

        for i in 0..2 {
            let b = subensemble_state(&d, &p, i).unwrap();
            let weights = born_weights(&r0, &s).unwrap();
            assert!((b.p - weights[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn meanfield_solves_its_fixed_point(j in 0.1f64..5.0, t in 0.05f64..5.0, field in -3.0f64..3.0) {
            let m = match meanfield_magnetization(j, t, field).unwrap() {
                MeanField::Unique(m) => m,
                MeanField::SymmetricPair(m) => m,
            };
            prop_assert!((m - ((j * m + field) / t).tanh()).abs() <= 1e-12);
            if field != 0.0 {
                prop_assert!(m * field >= 0.0);
            }
        }

        #[test]
        fn born_weights_of_final_state_sum_to_one(x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5) {
            let r0 = DensityOperator::qubit([x, y, z]).unwrap();
            let w = born_weights(&r0, &TestedObservable::spin_z()).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|p| *p >= 0.0));
        }
    }
}
