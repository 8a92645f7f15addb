//! Individual runs: Born weights, reduction rules, seeded outcome sampling and
//! extraction of subensemble states from the final joint state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::equilibrium::PointerModel;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::qstate::{partial_trace, vn_entropy, DensityOperator, Observable};

/// Probabilities below this are treated as an exactly empty outcome.
pub const ZERO_WEIGHT: f64 = 1e-14;
/// Default bound on coherences between distinct pointer windows.
pub const WINDOW_TOL: f64 = 1e-8;

/// `ŝ = Σᵢ sᵢ π̂ᵢ` with distinct eigenvalues and a complete orthogonal family
/// of projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TestedObservable {
    eigenvalues: Vec<f64>,
    projectors: Vec<CMatrix>,
}

impl TestedObservable {
    pub fn new(eigenvalues: Vec<f64>, projectors: Vec<CMatrix>) -> Result<Self> {
        if eigenvalues.len() != projectors.len() || eigenvalues.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} eigenvalues for {} projectors",
                eigenvalues.len(),
                projectors.len()
            )));
        }
        for (a, x) in eigenvalues.iter().enumerate() {
            if eigenvalues[..a].iter().any(|y| (x - y).abs() < 1e-12) {
                return Err(Error::InvalidParameter(format!("eigenvalue {x} repeated")));
            }
        }
        let d = projectors[0].nrows();
        let mut sum = CMatrix::zeros(d, d);
        for (i, p) in projectors.iter().enumerate() {
            if p.nrows() != d || p.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.nrows() });
            }
            if linalg::hermitian_deviation(p) > 1e-12 {
                return Err(Error::InvalidParameter(format!("projector {i} is not Hermitian")));
            }
            for (j, q) in projectors.iter().enumerate() {
                let target = if i == j { p.clone() } else { CMatrix::zeros(d, d) };
                if linalg::max_abs(&(p * q - target)) > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "projectors {i} and {j} violate πᵢπⱼ = δᵢⱼπᵢ"
                    )));
                }
            }
            sum += p;
        }
        if linalg::max_abs(&(sum - linalg::identity(d))) > 1e-10 {
            return Err(Error::InvalidParameter("projectors do not resolve the identity".into()));
        }
        Ok(Self { eigenvalues, projectors })
    }

    /// Spectral decomposition of a Hermitian operator; eigenvalues closer
    /// than `1e-9` are one degenerate sector.
    pub fn from_observable(obs: &Observable) -> Result<Self> {
        let eig = linalg::hermitian_eigen(obs.matrix())?;
        let mut eigenvalues: Vec<f64> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (k, &v) in eig.values.iter().enumerate() {
            match eigenvalues.last() {
                Some(&last) if (v - last).abs() < 1e-9 => members.last_mut().unwrap().push(k),
                _ => {
                    eigenvalues.push(v);
                    members.push(vec![k]);
                }
            }
        }
        let projectors = members.iter().map(|cols| linalg::projector_onto(&eig.vectors, cols)).collect();
        Self::new(eigenvalues, projectors)
    }

    /// `ŝ_z` of a spin ½: outcome 0 is `s = +1` (`|↑⟩`), outcome 1 is `s = −1`.
    pub fn spin_z() -> Self {
        let up = linalg::from_real_diagonal(&[1.0, 0.0]);
        let down = linalg::from_real_diagonal(&[0.0, 1.0]);
        Self { eigenvalues: vec![1.0, -1.0], projectors: vec![up, down] }
    }

    /// `ŝ_z` of the first spin of a pair.
    pub fn first_spin_z() -> Self {
        let s = Self::spin_z();
        let id = linalg::identity(2);
        let projectors = s.projectors.iter().map(|p| linalg::kron(p, &id)).collect();
        Self { eigenvalues: s.eigenvalues, projectors }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projector(&self, i: usize) -> Result<&CMatrix> {
        self.projectors.get(i).ok_or_else(|| {
            Error::InvalidParameter(format!("outcome {i} out of range for {} outcomes", self.len()))
        })
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn rank(&self, i: usize) -> Result<usize> {
        Ok(linalg::trace(self.projector(i)?).re.round() as usize)
    }

    pub fn observable(&self) -> Observable {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for (s, p) in self.eigenvalues.iter().zip(&self.projectors) {
            m += p * C64::from(*s);
        }
        Observable::new((&m + m.adjoint()) * C64::from(0.5)).expect("Hermitian by construction")
    }

    fn check_state(&self, r0: &DensityOperator) -> Result<()> {
        if r0.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: r0.dim() });
        }
        Ok(())
    }
}

/// Post-measurement description of one outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeBranch {
    pub index: usize,
    pub p: f64,
    /// System state of the branch.
    pub r: DensityOperator,
    /// Joint system + apparatus state, when extracted from one.
    pub delta: Option<DensityOperator>,
}

/// `pᵢ = Tr r̂(0) π̂ᵢ`.
pub fn born_weights(r0: &DensityOperator, tested: &TestedObservable) -> Result<Vec<f64>> {
    tested.check_state(r0)?;
    let raw: Vec<f64> = tested
        .projectors
        .iter()
        .map(|p| linalg::trace_product(r0.matrix(), p).re)
        .collect();
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("Born weights sum to {total}")));
    }
    if let Some(bad) = raw.iter().find(|&&p| !(-1e-12..=1.0 + 1e-12).contains(&p)) {
        return Err(Error::InvalidParameter(format!("Born weight {bad} outside [0, 1]")));
    }
    Ok(raw.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

/// `r̂ᵢ = π̂ᵢ r̂(0) π̂ᵢ / pᵢ`.
pub fn luders_branch(r0: &DensityOperator, tested: &TestedObservable, i: usize) -> Result<OutcomeBranch> {
    let p = born_weights(r0, tested)?[tested.projector(i).map(|_| i)?];
    if p <= ZERO_WEIGHT {
        return Err(Error::UndefinedBranch { index: i });
    }
    let block = linalg::sandwich(&tested.projectors[i], r0.matrix());
    let norm = linalg::trace(&block).re;
    let r = DensityOperator::assembled(block / C64::from(norm), r0.subsystem_dims().to_vec())?;
    Ok(OutcomeBranch { index: i, p, r, delta: None })
}

/// `r̂ᵢ = π̂ᵢ / rank π̂ᵢ`. The attached weight is the sector's share of the
/// maximally mixed state, since no initial state enters.
pub fn von_neumann_branch(tested: &TestedObservable, i: usize) -> Result<OutcomeBranch> {
    let p_i = tested.projector(i)?;
    let d = tested.dim();
    let rank = tested.rank(i)?;
    let r = DensityOperator::assembled(p_i / C64::from(rank as f64), vec![d])?;
    Ok(OutcomeBranch { index: i, p: rank as f64 / d as f64, r, delta: None })
}

/// `Σᵢ π̂ᵢ r̂(0) π̂ᵢ`.
pub fn unread_reduction(r0: &DensityOperator, tested: &TestedObservable) -> Result<DensityOperator> {
    tested.check_state(r0)?;
    let d = r0.dim();
    let mut acc = CMatrix::zeros(d, d);
    for p in &tested.projectors {
        acc += linalg::sandwich(p, r0.matrix());
    }
    DensityOperator::assembled(acc, r0.subsystem_dims().to_vec())
}

/// Outcome of a frequency check against the Born weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Within3Sigma,
    Flagged,
    Failed,
}

/// Counts of a seeded multinomial draw over outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSplit {
    pub total: u64,
    pub counts: Vec<u64>,
    pub seed: u64,
    pub weights: Vec<f64>,
}

impl EnsembleSplit {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// `(Nᵢ − N pᵢ) / √(N pᵢ(1 − pᵢ))`; zero when the binomial variance
    /// vanishes and the count is exact.
    pub fn z_scores(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts
            .iter()
            .zip(&self.weights)
            .map(|(&c, &p)| {
                let sigma = (n * p * (1.0 - p)).sqrt();
                let dev = c as f64 - n * p;
                if sigma == 0.0 {
                    if dev == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    dev / sigma
                }
            })
            .collect()
    }

    /// Flag beyond 3σ, fail beyond 5σ.
    pub fn verdicts(&self) -> Vec<Verdict> {
        self.z_scores()
            .into_iter()
            .map(|z| match z.abs() {
                a if a <= 3.0 => Verdict::Within3Sigma,
                a if a <= 5.0 => Verdict::Flagged,
                _ => Verdict::Failed,
            })
            .collect()
    }
}

/// Multinomial draw of `n` runs, as a chain of conditional binomials.
pub fn sample_runs(weights: &[f64], n: u64, seed: u64) -> Result<EnsembleSplit> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; weights.len()];
    let mut remaining = n;
    let mut mass = 1.0;
    for (k, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == weights.len() {
            counts[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (w / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut rng);
        counts[k] = draw;
        remaining -= draw;
        mass -= w;
    }
    Ok(EnsembleSplit { total: n, counts, seed, weights: weights.to_vec() })
}

/// `Δ̂ᵢ = (Î ⊗ Π̂ᵢ) D̂ (Î ⊗ Π̂ᵢ) / pᵢ`, checked against the product form
/// `r̂ᵢ ⊗ R̂ᵢ` and for coherences between windows.
pub fn subensemble_state(d_tf: &DensityOperator, pointer: &PointerModel, i: usize) -> Result<OutcomeBranch> {
    subensemble_state_with_tolerance(d_tf, pointer, i, WINDOW_TOL)
}

pub fn subensemble_state_with_tolerance(
    d_tf: &DensityOperator,
    pointer: &PointerModel,
    i: usize,
    tol: f64,
) -> Result<OutcomeBranch> {
    let dims = d_tf.subsystem_dims();
    let dm = pointer.pointer_obs().dim();
    if dims.len() != 2 || dims[1] != dm {
        return Err(Error::InvalidSubsystem(format!(
            "joint state factors {dims:?} do not end with the pointer space of dim {dm}"
        )));
    }
    let id_s = linalg::identity(dims[0]);
    let lifted: Vec<CMatrix> = pointer
        .window_projectors()
        .iter()
        .map(|w| linalg::kron(&id_s, w))
        .collect();
    let pi = lifted
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("outcome {i} out of range")))?;
    for (j, pj) in lifted.iter().enumerate() {
        if j == i {
            continue;
        }
        let leakage = linalg::max_abs(&linalg::left_right(pi, d_tf.matrix(), pj));
        if leakage > tol {
            return Err(Error::WindowLeakage { i, j, leakage });
        }
    }
    let block = linalg::sandwich(pi, d_tf.matrix());
    let p = linalg::trace(&block).re;
    if p <= ZERO_WEIGHT {
        return Err(Error::UndefinedBranch { index: i });
    }
    let delta = DensityOperator::assembled(block / C64::from(p), dims.to_vec())?;
    let r = partial_trace(&delta, &[0])?;
    let big_r = partial_trace(&delta, &[1])?;
    let distance = delta.trace_distance(&r.tensor(&big_r))?;
    if distance > tol {
        return Err(Error::FactorizationMismatch { distance });
    }
    Ok(OutcomeBranch { index: i, p, r, delta: Some(delta) })
}

/// Entropy bookkeeping of the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoBalance {
    /// `S[r̂(t_f)] − S[r̂(0)]`.
    pub loss: f64,
    /// `S[r̂(t_f)] − Σᵢ pᵢ S(r̂ᵢ)`.
    pub gain: f64,
}

pub fn info_balance(r0: &DensityOperator, tested: &TestedObservable) -> Result<InfoBalance> {
    let s_final = vn_entropy(&unread_reduction(r0, tested)?)?;
    let s0 = vn_entropy(r0)?;
    let weights = born_weights(r0, tested)?;
    let mut branch_entropy = 0.0;
    for (i, &p) in weights.iter().enumerate() {
        if p > ZERO_WEIGHT {
            branch_entropy += p * vn_entropy(&luders_branch(r0, tested, i)?.r)?;
        }
    }
    Ok(InfoBalance { loss: s_final - s0, gain: s_final - branch_entropy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::mix;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::LN_2;

    fn qubit(v: [f64; 3]) -> DensityOperator {
        DensityOperator::qubit(v).unwrap()
    }

    fn random_state(dim: usize, seed: u64) -> DensityOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let tr = linalg::trace(&m).re;
        DensityOperator::from_matrix(m / C64::from(tr)).unwrap()
    }

    /// `s = 1` on a two-dimensional sector, `s = −1` on the rest of dim 3.
    fn degenerate() -> TestedObservable {
        TestedObservable::new(
            vec![1.0, -1.0],
            vec![linalg::from_real_diagonal(&[1.0, 1.0, 0.0]), linalg::from_real_diagonal(&[0.0, 0.0, 1.0])],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_projector_families() {
        let p = linalg::from_real_diagonal(&[1.0, 0.0]);
        assert!(TestedObservable::new(vec![1.0, -1.0], vec![p.clone(), p.clone()]).is_err());
        assert!(TestedObservable::new(vec![1.0], vec![p.clone()]).is_err());
        assert!(TestedObservable::new(vec![1.0, 1.0], vec![p.clone(), linalg::from_real_diagonal(&[0.0, 1.0])]).is_err());
    }

    #[test]
    fn spectral_decomposition_groups_degenerate_values() {
        let t = TestedObservable::from_observable(&Observable::diagonal(&[2.0, -1.0, 2.0])).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rank(1).unwrap(), 2);
        assert!((t.eigenvalues()[1] - 2.0).abs() < 1e-12);
        let back = t.observable();
        assert!(linalg::max_abs(&(back.matrix() - linalg::from_real_diagonal(&[2.0, -1.0, 2.0]))) < 1e-12);
    }

    #[test]
    fn born_examples() {
        let s = TestedObservable::spin_z();
        assert_eq!(born_weights(&qubit([1.0, 0.0, 0.0]), &s).unwrap(), vec![0.5, 0.5]);
        assert_eq!(born_weights(&qubit([0.0, 0.0, 1.0]), &s).unwrap(), vec![1.0, 0.0]);
        let p = born_weights(&qubit([0.0, 0.0, 0.6]), &s).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        assert!(born_weights(&DensityOperator::maximally_mixed(3), &s).is_err());
    }

    #[test]
    fn luders_examples() {
        let s = TestedObservable::spin_z();
        let b = luders_branch(&qubit([0.3, -0.4, 0.1]), &s, 0).unwrap();
        assert!(linalg::max_abs(&(b.r.matrix() - linalg::from_real_diagonal(&[1.0, 0.0]))) < 1e-15);

        let pair = TestedObservable::first_spin_z();
        let b = luders_branch(&DensityOperator::singlet(), &pair, 0).unwrap();
        assert!((b.p - 0.5).abs() < 1e-15);
        // |↑↓⟩ is basis index 1
        assert!(linalg::max_abs(&(b.r.matrix() - linalg::from_real_diagonal(&[0.0, 1.0, 0.0, 0.0]))) < 1e-15);

        let inside = DensityOperator::from_matrix(linalg::from_real_diagonal(&[0.25, 0.75, 0.0])).unwrap();
        let b = luders_branch(&inside, &degenerate(), 0).unwrap();
        assert!(linalg::max_abs(&(b.r.matrix() - inside.matrix())) < 1e-15);

        assert_eq!(
            luders_branch(&qubit([0.0, 0.0, 1.0]), &s, 1).unwrap_err(),
            Error::UndefinedBranch { index: 1 }
        );
    }

    #[test]
    fn von_neumann_examples() {
        let s = TestedObservable::spin_z();
        let vn = von_neumann_branch(&s, 0).unwrap();
        let lu = luders_branch(&qubit([0.5, 0.1, 0.2]), &s, 0).unwrap();
        assert!(linalg::max_abs(&(vn.r.matrix() - lu.r.matrix())) < 1e-15);

        let vn = von_neumann_branch(&degenerate(), 0).unwrap();
        assert!((vn_entropy(&vn.r).unwrap() - LN_2).abs() < 1e-12);
        let r0 = random_state(3, 11);
        let lu = luders_branch(&r0, &degenerate(), 0).unwrap();
        assert!(vn.r.trace_distance(&lu.r).unwrap() > 1e-3);
        assert!(von_neumann_branch(&s, 2).is_err());
    }

    #[test]
    fn unread_examples() {
        let s = TestedObservable::spin_z();
        let out = unread_reduction(&qubit([0.3, -0.2, 0.5]), &s).unwrap();
        assert!(linalg::max_abs(&(out.matrix() - qubit([0.0, 0.0, 0.5]).matrix())) < 1e-15);
        let diag = qubit([0.0, 0.0, -0.4]);
        assert_eq!(unread_reduction(&diag, &s).unwrap(), diag);
        let plus = qubit([1.0, 0.0, 0.0]);
        let gain = vn_entropy(&unread_reduction(&plus, &s).unwrap()).unwrap() - vn_entropy(&plus).unwrap();
        assert!((gain - LN_2).abs() < 1e-12);
    }

    #[test]
    fn sampling_examples() {
        let split = sample_runs(&[1.0, 0.0], 1234, 5).unwrap();
        assert_eq!(split.counts, vec![1234, 0]);
        assert_eq!(split.z_scores(), vec![0.0, 0.0]);

        let split = sample_runs(&[0.5, 0.5], 100_000, 42).unwrap();
        assert_eq!(split.counts.iter().sum::<u64>(), 100_000);
        assert_ne!(split.verdicts()[0], Verdict::Failed);
        assert_eq!(split, sample_runs(&[0.5, 0.5], 100_000, 42).unwrap());

        assert!(sample_runs(&[0.5, 0.4], 10, 0).is_err());
        assert!(sample_runs(&[1.0], 0, 0).is_err());
    }

    #[test]
    fn frequencies_converge_at_monte_carlo_rate() {
        let weights = [0.2, 0.5, 0.3];
        for &n in &[1_000u64, 100_000] {
            let mut failures = 0;
            let mut mean_sq_z = 0.0;
            for seed in 0..100 {
                let split = sample_runs(&weights, n, seed).unwrap();
                failures += split.verdicts().iter().filter(|v| **v == Verdict::Failed).count();
                mean_sq_z += split.z_scores()[1].powi(2) / 100.0;
            }
            assert_eq!(failures, 0);
            // E[z²] = 1 for a correctly scaled estimator
            assert!((0.6..1.5).contains(&mean_sq_z), "n = {n}: ⟨z²⟩ = {mean_sq_z}");
        }
    }

    #[test]
    fn info_balance_examples() {
        let s = TestedObservable::spin_z();
        let b = info_balance(&qubit([1.0, 0.0, 0.0]), &s).unwrap();
        assert!((b.loss - LN_2).abs() < 1e-12 && (b.gain - LN_2).abs() < 1e-12);
        let b = info_balance(&qubit([0.0, 0.0, 0.3]), &s).unwrap();
        assert!(b.loss.abs() < 1e-12);
        let r0 = qubit([0.2, 0.3, 0.4]);
        let b = info_balance(&r0, &s).unwrap();
        let s_final = vn_entropy(&unread_reduction(&r0, &s).unwrap()).unwrap();
        assert!((b.gain - s_final).abs() < 1e-12);
    }

    #[test]
    fn merge_back_and_repeatability() {
        let tested = degenerate();
        let r0 = random_state(3, 4);
        let weights = born_weights(&r0, &tested).unwrap();
        let branches: Vec<OutcomeBranch> = (0..2).map(|i| luders_branch(&r0, &tested, i).unwrap()).collect();
        let parts: Vec<(f64, &DensityOperator)> = weights.iter().copied().zip(branches.iter().map(|b| &b.r)).collect();
        let merged = mix(&parts).unwrap();
        assert!(linalg::max_abs(&(merged.matrix() - unread_reduction(&r0, &tested).unwrap().matrix())) < 1e-12);
        for b in &branches {
            let again = born_weights(&b.r, &tested).unwrap();
            for (k, p) in again.iter().enumerate() {
                assert!((p - if k == b.index { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn unread_reduction_never_lowers_entropy(seed in 0u64..500) {
            let tested = degenerate();
            let r0 = random_state(3, seed);
            let s0 = vn_entropy(&r0).unwrap();
            let s1 = vn_entropy(&unread_reduction(&r0, &tested).unwrap()).unwrap();
            prop_assert!(s1 >= s0 - 1e-12);
            let b = info_balance(&r0, &tested).unwrap();
            prop_assert!(b.loss >= -1e-12 && b.gain >= -1e-12 && b.gain <= LN_2 + 1e-12);
        }

        #[test]
        fn counts_are_conserved(seed in 0u64..1000, n in 1u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let total = 1.0 + a + b;
            let weights = [1.0 / total, a / total, b / total];
            let split = sample_runs(&weights, n, seed).unwrap();
            prop_assert_eq!(split.counts.iter().sum::<u64>(), n);
        }
    }
}
