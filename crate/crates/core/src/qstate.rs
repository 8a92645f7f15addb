//! Density operators and observables on finite tensor-product Hilbert spaces.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    self, hermitian_deviation, hermitian_eigenvalues, hermitian_function, CMatrix, C64, ONE, ZERO,
};

/// Entrywise tolerance on `|M − M†|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|Tr M − 1|`.
pub const TRACE_TOL: f64 = 1e-12;
/// Most negative eigenvalue still accepted as rounding.
pub const PSD_TOL: f64 = 1e-10;

/// A Hermitian operator on a `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self { matrix: linalg::from_real_diagonal(values) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: linalg::identity(dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim) }
    }

    pub fn pauli_x() -> Self {
        Self { matrix: linalg::pauli_x() }
    }

    pub fn pauli_y() -> Self {
        Self { matrix: linalg::pauli_y() }
    }

    pub fn pauli_z() -> Self {
        Self { matrix: linalg::pauli_z() }
    }

    /// `n·σ` for a real 3-vector.
    pub fn spin_along(n: [f64; 3]) -> Self {
        Self { matrix: linalg::pauli_along(n) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn kron(&self, other: &Observable) -> Observable {
        Observable { matrix: linalg::kron(&self.matrix, &other.matrix) }
    }

    pub fn scaled(&self, factor: f64) -> Observable {
        Observable { matrix: &self.matrix * C64::from(factor) }
    }

    pub fn plus(&self, other: &Observable) -> Result<Observable> {
        check_dim(self.dim(), other.dim())?;
        Ok(Observable { matrix: &self.matrix + &other.matrix })
    }

    /// Operator product, re-Hermitized; only meaningful for commuting factors
    /// or squares.
    pub fn square(&self) -> Observable {
        if self.is_diagonal() {
            let d: Vec<f64> = (0..self.dim()).map(|k| self.matrix[(k, k)].re.powi(2)).collect();
            return Observable::diagonal(&d);
        }
        let sq = &self.matrix * &self.matrix;
        Observable { matrix: (&sq + sq.adjoint()) * C64::from(0.5) }
    }

    /// Embeds `op` acting on factor `position` of a product space with factor
    /// dimensions `dims`.
    pub fn embed(op: &Observable, position: usize, dims: &[usize]) -> Result<Observable> {
        if position >= dims.len() {
            return Err(Error::InvalidSubsystem(format!(
                "position {position} out of range for {} factors",
                dims.len()
            )));
        }
        check_dim(dims[position], op.dim())?;
        let mut m = CMatrix::identity(1, 1);
        for (k, &d) in dims.iter().enumerate() {
            let factor = if k == position { op.matrix.clone() } else { linalg::identity(d) };
            m = linalg::kron(&m, &factor);
        }
        Ok(Observable { matrix: m })
    }

    pub fn is_diagonal(&self) -> bool {
        linalg::is_diagonal(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.matrix)
    }
}

/// A Hermitian, unit-trace, positive semidefinite matrix together with the
/// factor dimensions of the tensor product it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    subsystem_dims: Vec<usize>,
}

impl DensityOperator {
    /// Validates all three state invariants. Nothing is clamped.
    pub fn new(matrix: CMatrix, subsystem_dims: Vec<usize>) -> Result<Self> {
        let state = Self::assembled(matrix, subsystem_dims)?;
        state.check_positive()?;
        Ok(state)
    }

    /// Single-factor state.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        Self::new(matrix, vec![d])
    }

    /// Checks shape, Hermiticity and trace; positivity is left to the caller
    /// (used for outputs that are positive by construction).
    pub(crate) fn assembled(matrix: CMatrix, subsystem_dims: Vec<usize>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || n == 0 {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.ncols() });
        }
        let product: usize = subsystem_dims.iter().product();
        if product != n || subsystem_dims.is_empty() {
            return Err(Error::InvalidSubsystem(format!(
                "factor dimensions {subsystem_dims:?} do not multiply to {n}"
            )));
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::TraceNotUnit { trace: tr.re });
        }
        Ok(Self { matrix, subsystem_dims })
    }

    fn check_positive(&self) -> Result<()> {
        let min = self.eigenvalues()?.first().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Re-runs the full invariant check.
    pub fn validate(&self) -> Result<()> {
        Self::assembled(self.matrix.clone(), self.subsystem_dims.clone())?;
        self.check_positive()
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero ket.
    pub fn pure(ket: &DVector<C64>) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero ket".into()));
        }
        let v = ket / C64::from(norm);
        let m = &v * v.adjoint();
        Self::assembled(m, vec![ket.len()])
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim) * C64::from(1.0 / dim as f64),
            subsystem_dims: vec![dim],
        }
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!("basis index {k} >= {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = ONE;
        Ok(Self { matrix: m, subsystem_dims: vec![dim] })
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        Self::new(linalg::from_real_diagonal(populations), vec![populations.len()])
    }

    /// Qubit state `½(I + v·σ)`.
    pub fn qubit(v: [f64; 3]) -> Result<Self> {
        let m = (linalg::identity(2) + linalg::pauli_along(v)) * C64::from(0.5);
        Self::new(m, vec![2])
    }

    /// Two-qubit singlet `(|↑↓⟩ − |↓↑⟩)/√2`.
    pub fn singlet() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ket = DVector::from_vec(vec![ZERO, C64::from(s), C64::from(-s), ZERO]);
        let m = &ket * ket.adjoint();
        Self { matrix: m, subsystem_dims: vec![2, 2] }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    /// Same matrix, new factorization.
    pub fn with_subsystems(mut self, dims: Vec<usize>) -> Result<Self> {
        let product: usize = dims.iter().product();
        if product != self.dim() || dims.is_empty() {
            return Err(Error::InvalidSubsystem(format!(
                "factor dimensions {dims:?} do not multiply to {}",
                self.dim()
            )));
        }
        self.subsystem_dims = dims;
        Ok(self)
    }

    /// `self ⊗ other`, factor lists concatenated.
    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let mut dims = self.subsystem_dims.clone();
        dims.extend_from_slice(&other.subsystem_dims);
        DensityOperator { matrix: linalg::kron(&self.matrix, &other.matrix), subsystem_dims: dims }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.matrix, &self.matrix).re
    }

    /// `½‖self − other‖₁`.
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(0.5 * linalg::trace_norm(&(&self.matrix - &other.matrix))?)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// q-expectation `Tr(ρ O)`.
pub fn qexpect(state: &DensityOperator, obs: &Observable) -> Result<f64> {
    check_dim(state.dim(), obs.dim())?;
    let value = linalg::trace_product(state.matrix(), obs.matrix());
    let scale = 1.0_f64.max(linalg::max_abs(obs.matrix()));
    if value.im.abs() > 1e-12 * scale {
        return Err(Error::ImaginaryResidue { residue: value.im });
    }
    Ok(value.re)
}

/// q-variance `Tr ρ O² − (Tr ρ O)²`.
pub fn qvariance(state: &DensityOperator, obs: &Observable) -> Result<f64> {
    let mean = qexpect(state, obs)?;
    let second = qexpect(state, &obs.square())?;
    Ok(second - mean * mean)
}

/// `U ρ U†` with `U = exp(−iHt)` (ħ = 1).
pub fn evolve_unitary(state: &DensityOperator, h: &Observable, t: f64) -> Result<DensityOperator> {
    check_dim(state.dim(), h.dim())?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    let u = hermitian_function(h.matrix(), |e| C64::from_polar(1.0, -e * t))?;
    let evolved = &u * state.matrix() * u.adjoint();
    // restore exact Hermiticity lost to rounding
    let evolved = (&evolved + evolved.adjoint()) * C64::from(0.5);
    DensityOperator::assembled(evolved, state.subsystem_dims.clone())
}

/// Marginal on the factors listed in `keep`, returned in ascending factor order.
pub fn partial_trace(state: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let dims = state.subsystem_dims();
    if keep.is_empty() {
        return Err(Error::InvalidSubsystem("nothing to keep".into()));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() {
        return Err(Error::InvalidSubsystem(format!("repeated index in {keep:?}")));
    }
    if let Some(&bad) = keep_sorted.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::InvalidSubsystem(format!(
            "factor {bad} out of range for {} factors",
            dims.len()
        )));
    }
    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    let n_keep: usize = kept_dims.iter().product();
    let n = state.dim();
    let n_traced = n / n_keep;

    // split each full index into (kept index, traced index)
    let mut split = Vec::with_capacity(n);
    for a in 0..n {
        let mut rem = a;
        let mut digits = vec![0usize; dims.len()];
        for f in (0..dims.len()).rev() {
            digits[f] = rem % dims[f];
            rem /= dims[f];
        }
        let (mut ki, mut ti) = (0usize, 0usize);
        for (f, &dig) in digits.iter().enumerate() {
            if keep_sorted.binary_search(&f).is_ok() {
                ki = ki * dims[f] + dig;
            } else {
                ti = ti * dims[f] + dig;
            }
        }
        split.push((ki, ti));
    }
    let mut by_traced: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(n_keep); n_traced];
    for (a, &(ki, ti)) in split.iter().enumerate() {
        by_traced[ti].push((a, ki));
    }
    let m = state.matrix();
    let mut out = CMatrix::zeros(n_keep, n_keep);
    for group in &by_traced {
        for &(b, kb) in group {
            for &(a, ka) in group {
                out[(ka, kb)] += m[(a, b)];
            }
        }
    }
    DensityOperator::assembled(out, kept_dims)
}

/// Count-weighted merger `N ρ = Σ Nₖ ρₖ` of disjoint ensembles.
pub fn merge(parts: &[(u64, &DensityOperator)]) -> Result<DensityOperator> {
    let total: u64 = parts.iter().map(|(c, _)| *c).sum();
    if total == 0 {
        return Err(Error::InvalidParameter("zero total count".into()));
    }
    let weighted: Vec<(f64, &DensityOperator)> =
        parts.iter().map(|(c, s)| (*c as f64 / total as f64, *s)).collect();
    mix(&weighted)
}

/// Convex combination with weights summing to one.
pub fn mix(parts: &[(f64, &DensityOperator)]) -> Result<DensityOperator> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?
        .1;
    let n = first.dim();
    let total: f64 = parts.iter().map(|(w, _)| *w).sum();
    if parts.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
    }
    let mut acc = CMatrix::zeros(n, n);
    for (w, s) in parts {
        check_dim(n, s.dim())?;
        if *w > 0.0 {
            acc += s.matrix() * C64::from(*w);
        }
    }
    DensityOperator::assembled(acc, first.subsystem_dims.clone())
}

/// von Neumann entropy `−Tr ρ ln ρ` in nats.
pub fn vn_entropy(state: &DensityOperator) -> Result<f64> {
    Ok(entropy_of_spectrum(&state.eigenvalues()?))
}

pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}
