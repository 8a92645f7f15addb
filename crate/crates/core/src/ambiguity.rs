//! Non-uniqueness of convex decompositions of mixed states: chords of the
//! Bloch ball, the embedding of a qubit-like block in higher dimension, and
//! the observables that are dispersion-free on a given state.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::qstate::{qexpect, qvariance, DensityOperator, Observable};

/// Numerical rank threshold on eigenvalues.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    v: [f64; 3],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl BlochVector {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        if !v.iter().all(|x| x.is_finite()) || norm(v) > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!("{v:?} lies outside the Bloch ball")));
        }
        Ok(Self { v })
    }

    /// `v_a = Tr(ρ σ̂_a)`.
    pub fn from_state(state: &DensityOperator) -> Result<Self> {
        if state.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: state.dim() });
        }
        let v = [
            qexpect(state, &Observable::pauli_x())?,
            qexpect(state, &Observable::pauli_y())?,
            qexpect(state, &Observable::pauli_z())?,
        ];
        Ok(Self { v })
    }

    /// `½(Î + v·σ̂)`.
    pub fn to_state(&self) -> DensityOperator {
        let m = (linalg::identity(2) + linalg::pauli_along(self.v)) * C64::from(0.5);
        DensityOperator::assembled(m, vec![2]).expect("Bloch ball point is a state")
    }

    /// Ket of a boundary point, `(cos θ/2, e^{iφ} sin θ/2)`.
    pub fn ket(&self) -> Result<DVector<C64>> {
        let r = self.norm();
        if (r - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("|v| = {r} is not a pure state")));
        }
        let [x, y, z] = self.v;
        let theta = (z / r).clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        Ok(DVector::from_vec(vec![
            C64::from((0.5 * theta).cos()),
            C64::from_polar((0.5 * theta).sin(), phi),
        ]))
    }

    pub fn components(&self) -> [f64; 3] {
        self.v
    }

    pub fn norm(&self) -> f64 {
        norm(self.v)
    }

    /// `|⟨ψ₁|ψ₂⟩|²` for boundary points, `½(1 + v₁·v₂)`.
    pub fn overlap(&self, other: &BlochVector) -> f64 {
        0.5 * (1.0 + dot(self.v, other.v))
    }
}

/// `v = ρ₁v₁ + ρ₂v₂` with `v₁`, `v₂` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChordDecomposition {
    pub v1: BlochVector,
    pub v2: BlochVector,
    pub rho1: f64,
    pub rho2: f64,
}

impl ChordDecomposition {
    pub fn reconstruct(&self) -> [f64; 3] {
        let (a, b) = (self.v1.v, self.v2.v);
        [
            self.rho1 * a[0] + self.rho2 * b[0],
            self.rho1 * a[1] + self.rho2 * b[1],
            self.rho1 * a[2] + self.rho2 * b[2],
        ]
    }
}

/// Intersects the line `v + s d` with the unit sphere; the endpoint reached
/// for `s > 0` is `v₁`. Weights are the distance ratios along the chord.
pub fn chord_decomposition(v: &BlochVector, direction: [f64; 3]) -> Result<ChordDecomposition> {
    let r = v.norm();
    if r >= 1.0 - 1e-12 {
        return Err(Error::InvalidParameter("a pure state has no chord through it".into()));
    }
    let dn = norm(direction);
    if !(dn > 0.0 && dn.is_finite()) {
        return Err(Error::InvalidParameter("chord direction must be nonzero".into()));
    }
    let d = direction.map(|x| x / dn);
    let b = dot(v.v, d);
    let disc = b * b + 1.0 - r * r;
    assert!(disc > 0.0, "interior point always yields two intersections");
    let root = disc.sqrt();
    let (s_plus, s_minus) = (-b + root, -b - root);
    let at = |s: f64| BlochVector { v: [v.v[0] + s * d[0], v.v[1] + s * d[1], v.v[2] + s * d[2]] };
    let length = s_plus - s_minus;
    Ok(ChordDecomposition {
        v1: at(s_plus),
        v2: at(s_minus),
        rho1: -s_minus / length,
        rho2: s_plus / length,
    })
}

/// Two chords through one point and the four pure states they pick out.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityWitness {
    pub first: ChordDecomposition,
    pub second: ChordDecomposition,
    /// `ψ₁, ψ₂` of the first chord, then `ψ₁′, ψ₂′` of the second.
    pub states: [DensityOperator; 4],
    /// `overlaps[a][b] = |⟨ψ_a|ψ_b⟩|²`.
    pub overlaps: [[f64; 4]; 4],
    /// Every state of one chord differs from every state of the other, so no
    /// single partition of the ensemble can carry both decompositions.
    pub contradiction: bool,
}

impl AmbiguityWitness {
    /// `|⟨ψ₁|ψ₁′⟩|²`.
    pub fn cross_overlap(&self) -> f64 {
        self.overlaps[0][2]
    }
}

pub fn ambiguity_witness(v: &BlochVector, d1: [f64; 3], d2: [f64; 3]) -> Result<AmbiguityWitness> {
    let (n1, n2) = (norm(d1), norm(d2));
    if n1 == 0.0 || n2 == 0.0 || norm(cross(d1, d2)) <= 1e-12 * n1 * n2 {
        return Err(Error::InvalidParameter("chord directions are parallel".into()));
    }
    let first = chord_decomposition(v, d1)?;
    let second = chord_decomposition(v, d2)?;
    let points = [first.v1, first.v2, second.v1, second.v2];
    let states = points.map(|p| p.to_state());
    let mut overlaps = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            overlaps[a][b] = points[a].overlap(&points[b]);
        }
    }
    let contradiction = (0..2).all(|a| (2..4).all(|b| overlaps[a][b] < 1.0 - 1e-9));
    Ok(AmbiguityWitness { first, second, states, overlaps, contradiction })
}

/// `D = q·D̂₂ ⊕ residual`, with `D̂₂` the renormalized block of the two
/// largest eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub q: f64,
    /// Qubit state in the basis `basis`.
    pub d2: DensityOperator,
    /// `n × 2` isometry onto the top-two eigenvectors.
    pub basis: CMatrix,
    /// Remaining eigenpairs `(λ, column)`.
    pub residual: Vec<(f64, DVector<C64>)>,
}

impl Embedding {
    pub fn reassemble(&self) -> CMatrix {
        let mut m = &self.basis * self.d2.matrix() * self.basis.adjoint() * C64::from(self.q);
        for (l, v) in &self.residual {
            m += v * v.adjoint() * C64::from(*l);
        }
        m
    }
}

pub fn embed_ambiguity_ndim(d: &DensityOperator) -> Result<Embedding> {
    let n = d.dim();
    let eig = linalg::hermitian_eigen(d.matrix())?;
    if n < 2 || eig.values[n - 2] <= RANK_TOL {
        return Err(Error::InvalidParameter("state is pure, nothing to decompose".into()));
    }
    let (l1, l2) = (eig.values[n - 1], eig.values[n - 2]);
    let q = l1 + l2;
    let d2 = DensityOperator::assembled(linalg::from_real_diagonal(&[l1 / q, l2 / q]), vec![2])?;
    let basis = CMatrix::from_fn(n, 2, |r, c| eig.vectors[(r, n - 1 - c)]);
    let residual = (0..n - 2)
        .rev()
        .map(|k| (eig.values[k], eig.vectors.column(k).into_owned()))
        .collect();
    Ok(Embedding { q, d2, basis, residual })
}

/// Zero q-variance of `a` on `r`; on success also checks that `r` is
/// confined to the eigenspace of the certain value.
pub fn is_dispersionless(r: &DensityOperator, a: &Observable, tol: f64) -> Result<bool> {
    let var = qvariance(r, a)?;
    if var > tol {
        return Ok(false);
    }
    let mean = qexpect(r, a)?;
    let eig = linalg::hermitian_eigen(a.matrix())?;
    let scale = 1.0f64.max(eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let cols: Vec<usize> = (0..a.dim())
        .filter(|&k| (eig.values[k] - mean).abs() <= 10.0 * tol.sqrt() * scale)
        .collect();
    if cols.is_empty() {
        return Ok(false);
    }
    let pi = linalg::projector_onto(&eig.vectors, &cols);
    Ok(linalg::max_abs(&(linalg::sandwich(&pi, r.matrix()) - r.matrix())) <= 1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionlessFamily {
    pub rank: usize,
    /// `(n − k)² + 1`.
    pub param_count: usize,
    /// The support projector followed by a Hermitian basis of the complement.
    pub basis: Vec<Observable>,
    /// Some eigenvalue sits within two decades of the rank threshold.
    pub near_boundary: bool,
}

pub fn dispersionless_family(r: &DensityOperator) -> Result<DispersionlessFamily> {
    let n = r.dim();
    let eig = linalg::hermitian_eigen(r.matrix())?;
    let support: Vec<usize> = (0..n).filter(|&k| eig.values[k] > RANK_TOL).collect();
    let complement: Vec<usize> = (0..n).filter(|&k| eig.values[k] <= RANK_TOL).collect();
    let near_boundary = eig
        .values
        .iter()
        .any(|&l| l > RANK_TOL * 1e-2 && l < RANK_TOL * 1e2);
    if near_boundary {
        log::warn!(
            "state has eigenvalues near the rank threshold; rank {} at {RANK_TOL:e}",
            support.len()
        );
    }
    let mut basis = vec![Observable::new(linalg::projector_onto(&eig.vectors, &support))?];
    let w = CMatrix::from_fn(n, complement.len(), |row, c| eig.vectors[(row, complement[c])]);
    let m = complement.len();
    let lift = |b: CMatrix| -> Result<Observable> {
        let full = &w * b * w.adjoint();
        Observable::new((&full + full.adjoint()) * C64::from(0.5))
    };
    for a in 0..m {
        for c in a..m {
            let mut e = CMatrix::from_element(m, m, ZERO);
            if a == c {
                e[(a, a)] = C64::from(1.0);
                basis.push(lift(e)?);
            } else {
                e[(a, c)] = C64::from(1.0);
                e[(c, a)] = C64::from(1.0);
                basis.push(lift(e.clone())?);
                let mut f = CMatrix::from_element(m, m, ZERO);
                f[(a, c)] = -linalg::I;
                f[(c, a)] = linalg::I;
                basis.push(lift(f)?);
            }
        }
    }
    let k = support.len();
    Ok(DispersionlessFamily { rank: k, param_count: (n - k) * (n - k) + 1, basis, near_boundary })
}
