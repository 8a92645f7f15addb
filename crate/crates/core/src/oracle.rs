//! Brute-force sector-block evolution of system + magnet, without a bath.
//!
//! With `Ĥ = Σᵢ π̂ᵢ ⊗ (Ĥ_M + ĥᵢ)` each block evolves as
//! `R̂ᵢⱼ(t) = e^{−i(Ĥ_M+ĥᵢ)t} R̂_M(0) e^{i(Ĥ_M+ĥⱼ)t}` and the joint state is
//! `D̂(t) = Σᵢⱼ π̂ᵢ r̂(0) π̂ⱼ ⊗ R̂ᵢⱼ(t)`. Diagonal Hamiltonians take exact
//! per-element phases; anything else goes through an eigendecomposition.

use crate::curie_weiss::{CurieWeissModel, DENSE_MAX_SPINS};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::qstate::{DensityOperator, Observable};

/// Block storage: diagonal blocks keep only their diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMatrix {
    Diagonal(Vec<C64>),
    Dense(CMatrix),
}

impl BlockMatrix {
    pub fn dim(&self) -> usize {
        match self {
            BlockMatrix::Diagonal(d) => d.len(),
            BlockMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            BlockMatrix::Diagonal(d) => {
                let mut m = CMatrix::zeros(d.len(), d.len());
                for (k, v) in d.iter().enumerate() {
                    m[(k, k)] = *v;
                }
                m
            }
            BlockMatrix::Dense(m) => m.clone(),
        }
    }

    pub fn trace(&self) -> C64 {
        match self {
            BlockMatrix::Diagonal(d) => d.iter().sum(),
            BlockMatrix::Dense(m) => linalg::trace(m),
        }
    }

    pub fn adjoint(&self) -> BlockMatrix {
        match self {
            BlockMatrix::Diagonal(d) => BlockMatrix::Diagonal(d.iter().map(|v| v.conj()).collect()),
            BlockMatrix::Dense(m) => BlockMatrix::Dense(m.adjoint()),
        }
    }

    /// `tr(B O)` for a magnet operator.
    pub fn trace_with(&self, o: &MagnetOperator) -> C64 {
        match (self, o) {
            (BlockMatrix::Diagonal(d), MagnetOperator::Diagonal(w)) => {
                d.iter().zip(w).map(|(a, b)| a * b).sum()
            }
            (BlockMatrix::Diagonal(d), MagnetOperator::Dense(m)) => {
                d.iter().enumerate().map(|(k, a)| a * m[(k, k)]).sum()
            }
            (BlockMatrix::Dense(m), MagnetOperator::Diagonal(w)) => {
                w.iter().enumerate().map(|(k, b)| m[(k, k)] * b).sum()
            }
            (BlockMatrix::Dense(m), MagnetOperator::Dense(o)) => linalg::trace_product(m, o),
        }
    }

    /// `max |B B† − c Î|`.
    pub fn gram_deviation(&self, c: f64) -> f64 {
        match self {
            BlockMatrix::Diagonal(d) => d.iter().map(|v| (v.norm_sqr() - c).abs()).fold(0.0, f64::max),
            BlockMatrix::Dense(m) => {
                let g = m * m.adjoint() - linalg::identity(m.nrows()) * C64::from(c);
                linalg::max_abs(&g)
            }
        }
    }

    fn max_difference(&self, other: &BlockMatrix) -> f64 {
        match (self, other) {
            (BlockMatrix::Diagonal(a), BlockMatrix::Diagonal(b)) => {
                a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
            }
            _ => linalg::max_abs(&(self.to_dense() - other.to_dense())),
        }
    }
}

/// Operator on the magnet factor.
#[derive(Debug, Clone, PartialEq)]
pub enum MagnetOperator {
    Diagonal(Vec<f64>),
    Dense(CMatrix),
}

impl MagnetOperator {
    pub fn identity(dim: usize) -> Self {
        MagnetOperator::Diagonal(vec![1.0; dim])
    }

    /// `∏_{n∈K} σ̂_z⁽ⁿ⁾` with spin 0 the most significant bit.
    pub fn z_string(n_spins: usize, subset: &[usize]) -> Result<Self> {
        if let Some(&bad) = subset.iter().find(|&&k| k >= n_spins) {
            return Err(Error::InvalidParameter(format!("spin {bad} out of range for N = {n_spins}")));
        }
        let mut out = vec![1.0; 1];
        for n in 0..n_spins {
            let factor = if subset.contains(&n) { [1.0, -1.0] } else { [1.0, 1.0] };
            out = out.iter().flat_map(|v| [v * factor[0], v * factor[1]]).collect();
        }
        Ok(MagnetOperator::Diagonal(out))
    }
}

/// `R̂ᵢⱼ(t)` for all outcome pairs at one time, with the data needed to
/// reassemble the joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBlocks {
    pub time: f64,
    projectors: Vec<CMatrix>,
    r0: DensityOperator,
    blocks: Vec<BlockMatrix>,
}

impl SectorBlocks {
    pub fn n_outcomes(&self) -> usize {
        self.projectors.len()
    }

    pub fn magnet_dim(&self) -> usize {
        self.blocks[0].dim()
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn r0(&self) -> &DensityOperator {
        &self.r0
    }

    pub fn block(&self, i: usize, j: usize) -> &BlockMatrix {
        &self.blocks[i * self.n_outcomes() + j]
    }

    /// Population `Tr π̂ᵢ r̂(0)` of sector `i`.
    pub fn sector_weight(&self, i: usize) -> f64 {
        linalg::trace_product(&self.projectors[i], self.r0.matrix()).re
    }

    /// Largest violation of `R̂ⱼᵢ = R̂ᵢⱼ†` and of `Σᵢ pᵢ Tr R̂ᵢᵢ = 1`.
    pub fn invariant_deviation(&self) -> f64 {
        let n = self.n_outcomes();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(self.block(j, i).max_difference(&self.block(i, j).adjoint()));
            }
        }
        let total: f64 = (0..n).map(|i| self.sector_weight(i) * self.block(i, i).trace().re).sum();
        worst.max((total - 1.0).abs())
    }

    /// `Tr D̂ (Ô_S ⊗ Ô_M) = Σᵢⱼ tr_S(π̂ᵢ r̂(0) π̂ⱼ Ô_S) tr_M(R̂ᵢⱼ Ô_M)`.
    pub fn expectation(&self, o_s: &Observable, o_m: &MagnetOperator) -> Result<f64> {
        if o_s.dim() != self.r0.dim() {
            return Err(Error::DimensionMismatch { expected: self.r0.dim(), found: o_s.dim() });
        }
        let n = self.n_outcomes();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                let sys = &self.projectors[i] * self.r0.matrix() * &self.projectors[j];
                let s_part = linalg::trace_product(&sys, o_s.matrix());
                if s_part == ZERO {
                    continue;
                }
                acc += s_part * self.block(i, j).trace_with(o_m);
            }
        }
        Ok(acc.re)
    }

    /// `(⟨ŝ_x⟩, ⟨ŝ_y⟩)` of a spin-½ system.
    pub fn transverse(&self) -> Result<(f64, f64)> {
        let id = MagnetOperator::identity(self.magnet_dim());
        Ok((
            self.expectation(&Observable::pauli_x(), &id)?,
            self.expectation(&Observable::pauli_y(), &id)?,
        ))
    }
}

/// Diagonal of `Σₙ cₙ σ̂_z⁽ⁿ⁾`, assembled by Kronecker embedding of every
/// single-spin operator.
fn embedded_z_sum(coefficients: &[f64]) -> Vec<f64> {
    let n = coefficients.len();
    let mut total = vec![0.0; 1 << n];
    for (pos, c) in coefficients.iter().enumerate() {
        let mut diag = vec![1.0];
        for k in 0..n {
            let factor = if k == pos { [1.0, -1.0] } else { [1.0, 1.0] };
            diag = diag.iter().flat_map(|v| [v * factor[0], v * factor[1]]).collect();
        }
        for (t, d) in total.iter_mut().zip(diag) {
            *t += c * d;
        }
    }
    total
}

/// Exact evolution of the Curie-Weiss dephasing model, `Ĥ_M = 0`,
/// `ĥ⇑ = −Σ gₙ σ̂_z⁽ⁿ⁾ = −ĥ⇓`, from `R̂_M(0) = Î/2ᴺ`.
pub fn dense_joint_evolution(model: &CurieWeissModel, times: &[f64]) -> Result<Vec<SectorBlocks>> {
    let n = model.n_spins();
    if n > DENSE_MAX_SPINS {
        return Err(Error::DenseGuard { n, max: DENSE_MAX_SPINS });
    }
    let coupling: Vec<f64> = model.couplings().iter().map(|g| -g).collect();
    let h_up = embedded_z_sum(&coupling);
    let h_down: Vec<f64> = h_up.iter().map(|v| -v).collect();
    let sources = [Observable::diagonal(&h_up), Observable::diagonal(&h_down)];
    let projectors = vec![
        linalg::from_real_diagonal(&[1.0, 0.0]),
        linalg::from_real_diagonal(&[0.0, 1.0]),
    ];
    let h_m = Observable::zero(1 << n);
    let r_m = DensityOperator::maximally_mixed(1 << n);
    dense_evolution(&h_m, &sources, projectors, model.r0(), &r_m, times)
}

/// Same evolution for an arbitrary magnet Hamiltonian, sources and initial
/// magnet state.
pub fn dense_evolution(
    h_m: &Observable,
    sources: &[Observable],
    projectors: Vec<CMatrix>,
    r0: &DensityOperator,
    r_m0: &DensityOperator,
    times: &[f64],
) -> Result<Vec<SectorBlocks>> {
    let d = h_m.dim();
    if sources.len() != projectors.len() || sources.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} sources for {} projectors",
            sources.len(),
            projectors.len()
        )));
    }
    if let Some(s) = sources.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
    }
    if r_m0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: r_m0.dim() });
    }
    if let Some(p) = projectors.iter().find(|p| p.nrows() != r0.dim()) {
        return Err(Error::DimensionMismatch { expected: r0.dim(), found: p.nrows() });
    }
    let totals = sources.iter().map(|s| h_m.plus(s)).collect::<Result<Vec<_>>>()?;
    let all_diagonal = totals.iter().all(Observable::is_diagonal) && linalg::is_diagonal(r_m0.matrix());
    let propagators = if all_diagonal {
        Propagators::Diagonal(
            totals
                .iter()
                .map(|h| (0..d).map(|k| h.matrix()[(k, k)].re).collect())
                .collect(),
            (0..d).map(|k| r_m0.matrix()[(k, k)]).collect(),
        )
    } else {
        Propagators::Eigen(
            totals
                .iter()
                .map(|h| linalg::hermitian_eigen(h.matrix()))
                .collect::<Result<Vec<_>>>()?,
            r_m0.matrix().clone(),
        )
    };
    let at = |t: f64| SectorBlocks {
        time: t,
        projectors: projectors.clone(),
        r0: r0.clone(),
        blocks: propagators.blocks(t),
    };
    Ok(map_times(times, at))
}

enum Propagators {
    /// Energies per outcome and the initial magnet diagonal.
    Diagonal(Vec<Vec<f64>>, Vec<C64>),
    Eigen(Vec<linalg::HermitianEigen>, CMatrix),
}

impl Propagators {
    fn blocks(&self, t: f64) -> Vec<BlockMatrix> {
        match self {
            Propagators::Diagonal(energies, r_m) => {
                let n = energies.len();
                let mut out = Vec::with_capacity(n * n);
                for ei in energies {
                    for ej in energies {
                        out.push(BlockMatrix::Diagonal(
                            r_m.iter()
                                .zip(ei.iter().zip(ej))
                                .map(|(r, (a, b))| r * C64::from_polar(1.0, -(a - b) * t))
                                .collect(),
                        ));
                    }
                }
                out
            }
            Propagators::Eigen(eigs, r_m) => {
                let us: Vec<CMatrix> = eigs
                    .iter()
                    .map(|e| e.reconstruct_with(|v| C64::from_polar(1.0, -v * t)))
                    .collect();
                let mut out = Vec::with_capacity(us.len() * us.len());
                for ui in &us {
                    let left = ui * r_m;
                    for uj in &us {
                        out.push(BlockMatrix::Dense(&left * uj.adjoint()));
                    }
                }
                out
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn map_times<F: Fn(f64) -> SectorBlocks + Sync + Send>(times: &[f64], f: F) -> Vec<SectorBlocks> {
    use rayon::prelude::*;
    times.par_iter().map(|&t| f(t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_times<F: Fn(f64) -> SectorBlocks>(times: &[f64], f: F) -> Vec<SectorBlocks> {
    times.iter().map(|&t| f(t)).collect()
}

/// `D̂ = Σᵢⱼ π̂ᵢ r̂(0) π̂ⱼ ⊗ R̂ᵢⱼ` on system ⊗ magnet.
pub fn reconstruct_joint(blocks: &SectorBlocks, r0: &DensityOperator) -> Result<DensityOperator> {
    let n = blocks.n_outcomes();
    let ds = r0.dim();
    if blocks.projectors.iter().any(|p| p.nrows() != ds) {
        return Err(Error::DimensionMismatch { expected: blocks.projectors[0].nrows(), found: ds });
    }
    let dm = blocks.magnet_dim();
    if blocks.blocks.iter().any(|b| b.dim() != dm) {
        return Err(Error::InvalidParameter("sector blocks of unequal size".into()));
    }
    let mut joint = CMatrix::zeros(ds * dm, ds * dm);
    for i in 0..n {
        for j in 0..n {
            let sys = &blocks.projectors[i] * r0.matrix() * &blocks.projectors[j];
            for a in 0..ds {
                for b in 0..ds {
                    let s = sys[(a, b)];
                    if s == ZERO {
                        continue;
                    }
                    match blocks.block(i, j) {
                        BlockMatrix::Diagonal(d) => {
                            for (k, v) in d.iter().enumerate() {
                                joint[(a * dm + k, b * dm + k)] += s * v;
                            }
                        }
                        BlockMatrix::Dense(m) => {
                            for y in 0..dm {
                                for x in 0..dm {
                                    joint[(a * dm + x, b * dm + y)] += s * m[(x, y)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    DensityOperator::new(joint, vec![ds, dm])
}

/// Decay of the accessible quantities next to the undecaying magnitude of
/// the off-diagonal block.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixCReport {
    pub n_spins: usize,
    pub times: Vec<f64>,
    /// `max |R̂↑↓R̂↑↓† − 2⁻²ᴺ Î|` per time.
    pub invariant_deviation: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    /// `⟨ŝ_x ⊗ σ̂_z⁽¹⁾…σ̂_z⁽ᵏ⁾⟩` for `k = 1, 2, 3` (zero where `k > N`).
    pub low_k: Vec<[f64; 3]>,
    pub max_deviation: f64,
    /// A single magnet spin never dephases.
    pub no_macroscopic_limit: bool,
}

pub fn appendix_c_report(run: &[SectorBlocks]) -> Result<AppendixCReport> {
    let first = run
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty evolution".into()))?;
    if first.n_outcomes() != 2 {
        return Err(Error::InvalidParameter("report needs a two-outcome model".into()));
    }
    let dm = first.magnet_dim();
    let n_spins = dm.trailing_zeros() as usize;
    if 1usize << n_spins != dm {
        return Err(Error::InvalidParameter(format!("magnet dimension {dm} is not a power of two")));
    }
    let target = 1.0 / (dm as f64 * dm as f64);
    let strings = (1..=3)
        .map(|k| {
            if k <= n_spins {
                MagnetOperator::z_string(n_spins, &(0..k).collect::<Vec<_>>()).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = AppendixCReport {
        n_spins,
        times: Vec::with_capacity(run.len()),
        invariant_deviation: Vec::with_capacity(run.len()),
        sx: Vec::with_capacity(run.len()),
        sy: Vec::with_capacity(run.len()),
        low_k: Vec::with_capacity(run.len()),
        max_deviation: 0.0,
        no_macroscopic_limit: n_spins == 1,
    };
    let sx_op = Observable::pauli_x();
    for b in run {
        let dev = b.block(0, 1).gram_deviation(target);
        let (sx, sy) = b.transverse()?;
        let mut low = [0.0; 3];
        for (slot, z) in low.iter_mut().zip(&strings) {
            if let Some(z) = z {
                *slot = b.expectation(&sx_op, z)?;
            }
        }
        report.times.push(b.time);
        report.invariant_deviation.push(dev);
        report.sx.push(sx);
        report.sy.push(sy);
        report.low_k.push(low);
        report.max_deviation = report.max_deviation.max(dev);
    }
    Ok(report)
}
