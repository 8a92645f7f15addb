//! Dense complex linear algebra shared by every module.
//!
//! Hermitian spectral work goes through [`hermitian_eigen`] and friends. They
//! split the matrix into the connected components of its nonzero pattern
//! before diagonalizing, which is exact (a permutation similarity) and turns
//! the block-structured joint states of S+M into many tiny problems.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn from_real_diagonal(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (k, v) in values.iter().enumerate() {
        m[(k, k)] = C64::new(*v, 0.0);
    }
    m
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|k| m[(k, k)]).sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Largest entrywise `|m - m†|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Connected components of the nonzero pattern of a square matrix.
fn components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..j {
            if m[(i, j)] != ZERO || m[(j, i)] != ZERO {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for k in 0..n {
        let r = find(&mut parent, k);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(k);
    }
    groups
}

fn submatrix(m: &CMatrix, idx: &[usize]) -> CMatrix {
    let k = idx.len();
    let mut s = CMatrix::zeros(k, k);
    for (b, &jb) in idx.iter().enumerate() {
        for (a, &ia) in idx.iter().enumerate() {
            // symmetrize so rounding noise cannot break the Hermitian solver
            s[(a, b)] = (m[(ia, jb)] + m[(jb, ia)].conj()) * 0.5;
        }
    }
    s
}

fn block_eigen(sub: CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let k = sub.nrows();
    if k == 1 {
        return Ok((vec![sub[(0, 0)].re], CMatrix::identity(1, 1)));
    }
    let eig = SymmetricEigen::try_new(sub, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen(format!("Hermitian solver failed on a {k}x{k} block")))?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let fk = f(v);
            for r in 0..n {
                scaled[(r, k)] *= fk;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    let n = m.nrows();
    let mut pairs: Vec<(f64, Vec<(usize, C64)>)> = Vec::with_capacity(n);
    for group in components(m) {
        let (vals, vecs) = block_eigen(submatrix(m, &group))?;
        for (c, v) in vals.into_iter().enumerate() {
            let col = group
                .iter()
                .enumerate()
                .map(|(a, &ia)| (ia, vecs[(a, c)]))
                .collect();
            pairs.push((v, col));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, (v, col)) in pairs.into_iter().enumerate() {
        values.push(v);
        for (r, z) in col {
            vectors[(r, k)] = z;
        }
    }
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(m.nrows());
    for group in components(m) {
        if group.len() == 1 {
            values.push(m[(group[0], group[0])].re);
            continue;
        }
        let sub = submatrix(m, &group);
        let k = sub.nrows();
        let ev = SymmetricEigen::try_new(sub, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen(format!("Hermitian solver failed on a {k}x{k} block")))?;
        values.extend(ev.eigenvalues.iter().copied());
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `f(m)` for Hermitian `m`, evaluated blockwise in the eigenbasis.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for group in components(m) {
        if group.len() == 1 {
            let k = group[0];
            out[(k, k)] = f(m[(k, k)].re);
            continue;
        }
        let (vals, vecs) = block_eigen(submatrix(m, &group))?;
        let fvals: Vec<C64> = vals.iter().map(|&v| f(v)).collect();
        let k = group.len();
        for b in 0..k {
            for a in 0..k {
                let mut acc = ZERO;
                for c in 0..k {
                    acc += vecs[(a, c)] * fvals[c] * vecs[(b, c)].conj();
                }
                out[(group[a], group[b])] = acc;
            }
        }
    }
    Ok(out)
}

/// Trace norm `Σ|λ|` of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.iter().map(|v| v.abs()).sum())
}

/// Orthogonal projector onto the span of the given columns of an
/// orthonormal matrix.
pub fn projector_onto(vectors: &CMatrix, cols: &[usize]) -> CMatrix {
    let n = vectors.nrows();
    let mut p = CMatrix::zeros(n, n);
    for &c in cols {
        let v = vectors.column(c);
        p += v * v.adjoint();
    }
    p
}

/// `p m p` for a projector `p`, with a masking fast path when `p` is diagonal.
pub fn sandwich(p: &CMatrix, m: &CMatrix) -> CMatrix {
    if is_diagonal(p) {
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for j in 0..n {
            let pj = p[(j, j)];
            if pj == ZERO {
                continue;
            }
            for i in 0..n {
                let pi = p[(i, i)];
                if pi != ZERO {
                    out[(i, j)] = pi * m[(i, j)] * pj;
                }
            }
        }
        out
    } else {
        p * m * p
    }
}

/// `a m b` for diagonal-or-dense `a`, `b`; used for cross-window blocks.
pub fn left_right(a: &CMatrix, m: &CMatrix, b: &CMatrix) -> CMatrix {
    if is_diagonal(a) && is_diagonal(b) {
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for j in 0..n {
            let bj = b[(j, j)];
            if bj == ZERO {
                continue;
            }
            for i in 0..n {
                let ai = a[(i, i)];
                if ai != ZERO {
                    out[(i, j)] = ai * m[(i, j)] * bj;
                }
            }
        }
        out
    } else {
        a * m * b
    }
}

/// Pauli matrices in the `|↑⟩ = e₀`, `|↓⟩ = e₁` basis.
pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `n·σ` for a 3-vector `n`.
pub fn pauli_along(n: [f64; 3]) -> CMatrix {
    pauli_x() * C64::from(n[0]) + pauli_y() * C64::from(n[1]) + pauli_z() * C64::from(n[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_decomposition_matches_full_solver() {
        // direct sum of a 2x2 block and two 1x1 blocks, scrambled
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = C64::from(0.3);
        m[(2, 2)] = C64::from(0.5);
        m[(0, 2)] = C64::new(0.1, 0.2);
        m[(2, 0)] = C64::new(0.1, -0.2);
        m[(1, 1)] = C64::from(-0.4);
        m[(3, 3)] = C64::from(0.9);
        let ours = hermitian_eigenvalues(&m).unwrap();
        let full = SymmetricEigen::new(m.clone()).eigenvalues;
        let mut full: Vec<f64> = full.iter().copied().collect();
        full.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&full) {
            assert!((a - b).abs() < 1e-14);
        }
        let e = hermitian_eigen(&m).unwrap();
        let back = e.reconstruct_with(C64::from);
        assert!(max_abs(&(back - &m)) < 1e-14);
    }

    #[test]
    fn function_of_diagonal_is_elementwise() {
        let m = from_real_diagonal(&[0.0, 1.0, 2.0]);
        let e = hermitian_function(&m, |x| C64::from((-x).exp())).unwrap();
        assert!((e[(2, 2)].re - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], ZERO);
    }

    #[test]
    fn trace_product_matches_matmul() {
        let a = pauli_x() + pauli_z() * C64::from(0.5);
        let b = pauli_y() * C64::from(2.0) + pauli_x();
        let direct = trace(&(&a * &b));
        assert!((trace_product(&a, &b) - direct).norm() < 1e-15);
    }
}
