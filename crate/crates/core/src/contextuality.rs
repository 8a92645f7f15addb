//! Spin correlators of a two-qubit state, the CHSH combination, and whether
//! a single joint distribution of four ±1 variables can reproduce a given
//! table of pairwise correlators and marginals.

use crate::error::{Error, Result};
use crate::qstate::{qexpect, DensityOperator, Observable};

/// Measurement axes for the first and second spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionPair {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

fn unit(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("axis {v:?} has norm {n}, expected 1")));
    }
    Ok(v)
}

impl DirectionPair {
    pub fn new(a: [f64; 3], b: [f64; 3]) -> Result<Self> {
        Ok(Self { a: unit(a)?, b: unit(b)? })
    }
}

/// Axes `z`, `x` for the first spin and `u = −(z+x)/√2`, `v = −(z−x)/√2`
/// for the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshAxes {
    pub z: [f64; 3],
    pub x: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
}

impl ChshAxes {
    pub fn new(z: [f64; 3], x: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Result<Self> {
        Ok(Self { z: unit(z)?, x: unit(x)?, u: unit(u)?, v: unit(v)? })
    }

    pub fn standard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            z: [0.0, 0.0, 1.0],
            x: [1.0, 0.0, 0.0],
            u: [-s, 0.0, -s],
            v: [s, 0.0, -s],
        }
    }
}

fn check_pair_state(state: &DensityOperator) -> Result<()> {
    if state.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: state.dim() });
    }
    Ok(())
}

/// `Tr ρ (a·σ̂) ⊗ (b·σ̂)`.
pub fn pair_correlator(state: &DensityOperator, pair: &DirectionPair) -> Result<f64> {
    check_pair_state(state)?;
    qexpect(state, &Observable::spin_along(pair.a).kron(&Observable::spin_along(pair.b)))
}

/// `C = E(z,u) + E(z,v) + E(x,u) − E(x,v)`.
pub fn chsh_value(state: &DensityOperator, axes: &ChshAxes) -> Result<f64> {
    let t = CorrelatorTable::from_state(state, axes)?;
    Ok(t.chsh())
}

/// Correlators `[E(z,u), E(z,v), E(x,u), E(x,v)]` and marginals
/// `[⟨s′_z⟩, ⟨s′_x⟩, ⟨s″_u⟩, ⟨s″_v⟩]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatorTable {
    pub correlators: [f64; 4],
    pub marginals: [f64; 4],
}

impl CorrelatorTable {
    pub fn new(correlators: [f64; 4], marginals: [f64; 4]) -> Result<Self> {
        if let Some(bad) = correlators
            .iter()
            .chain(&marginals)
            .find(|x| !(-1.0 - 1e-12..=1.0 + 1e-12).contains(*x))
        {
            return Err(Error::InvalidParameter(format!("table entry {bad} outside [−1, 1]")));
        }
        Ok(Self { correlators, marginals })
    }

    /// Correlators with vanishing marginals.
    pub fn correlators_only(correlators: [f64; 4]) -> Result<Self> {
        Self::new(correlators, [0.0; 4])
    }

    pub fn from_state(state: &DensityOperator, axes: &ChshAxes) -> Result<Self> {
        check_pair_state(state)?;
        let id = Observable::identity(2);
        let mut correlators = [0.0; 4];
        for (k, (a, b)) in [(axes.z, axes.u), (axes.z, axes.v), (axes.x, axes.u), (axes.x, axes.v)]
            .into_iter()
            .enumerate()
        {
            correlators[k] = pair_correlator(state, &DirectionPair { a, b })?;
        }
        let marginals = [
            qexpect(state, &Observable::spin_along(axes.z).kron(&id))?,
            qexpect(state, &Observable::spin_along(axes.x).kron(&id))?,
            qexpect(state, &id.kron(&Observable::spin_along(axes.u)))?,
            qexpect(state, &id.kron(&Observable::spin_along(axes.v)))?,
        ];
        Self::new(correlators, marginals)
    }

    pub fn chsh(&self) -> f64 {
        let e = self.correlators;
        e[0] + e[1] + e[2] - e[3]
    }

    /// The eight CHSH combinations: one minus sign in each position, times
    /// an overall ±1.
    pub fn chsh_variants(&self) -> [ChshVariant; 8] {
        let mut out = [ChshVariant { signs: [0; 4], value: 0.0 }; 8];
        for minus in 0..4 {
            for (o, overall) in [1i8, -1].into_iter().enumerate() {
                let mut signs = [overall; 4];
                signs[minus] = -overall;
                let value = (0..4).map(|k| f64::from(signs[k]) * self.correlators[k]).sum();
                out[2 * minus + o] = ChshVariant { signs, value };
            }
        }
        out
    }

    /// `p(a, b) = (1 + a⟨A⟩ + b⟨B⟩ + ab E)/4` for each of the four
    /// correlated pairs and each sign choice.
    pub fn pair_probabilities(&self) -> [[f64; 4]; 4] {
        let pairs = [(0, 2), (0, 3), (1, 2), (1, 3)];
        let mut out = [[0.0; 4]; 4];
        for (k, (ma, mb)) in pairs.into_iter().enumerate() {
            for (s, (a, b)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                out[k][s] = 0.25
                    * (1.0 + a * self.marginals[ma] + b * self.marginals[mb] + a * b * self.correlators[k]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshVariant {
    pub signs: [i8; 4],
    pub value: f64,
}

/// Why a table has or lacks a joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// `p[k]` for `k = (a_z, a_x, b_u, b_v)` bits, bit set meaning −1,
    /// `a_z` most significant.
    Distribution([f64; 16]),
    /// A CHSH combination above 2.
    Chsh(ChshVariant),
    /// A pair distribution with a negative entry.
    PairPositivity { pair: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub witness: Witness,
    /// Largest of the eight CHSH combinations.
    pub chsh_max: f64,
    /// Whether the inequality route was too close to its boundary to be
    /// compared with the LP.
    pub near_boundary: bool,
}

const BOUNDARY_MARGIN: f64 = 1e-9;

/// `±1` value of variable `var` (0 = a_z, 1 = a_x, 2 = b_u, 3 = b_v) in
/// joint outcome `k`.
fn spin(k: usize, var: usize) -> f64 {
    if k >> (3 - var) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Phase-I simplex on `A x = b, x ≥ 0` with Bland's rule. Returns a feasible
/// `x` or `None`.
fn phase_one(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = a[0].len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-12;
    for _ in 0..10_000 {
        // reduced costs of the phase-I objective Σ artificials
        let entering = (0..n + m).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let cost = if j >= n { 1.0 } else { 0.0 };
            let reduced = cost
                - (0..m)
                    .map(|i| if basis[i] >= n { t[i][j] } else { 0.0 })
                    .sum::<f64>();
            reduced < -eps
        });
        let Some(col) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][col] > eps {
                let ratio = t[i][width - 1] / t[i][col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-15 || ((ratio - best).abs() <= 1e-15 && basis[i] < basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                }
            }
        }
        let (row, _) = leave?;
        let pivot = t[row][col];
        for v in t[row].iter_mut() {
            *v /= pivot;
        }
        for i in 0..m {
            if i != row && t[i][col] != 0.0 {
                let factor = t[i][col];
                let pivot_row = t[row].clone();
                for (v, p) in t[i].iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        basis[row] = col;
    }
    let infeasibility: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1]).sum();
    if infeasibility > 1e-10 {
        return None;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1].max(0.0);
        }
    }
    Some(x)
}

/// LP over the 16 joint outcomes, cross-checked against the eight CHSH
/// inequalities plus positivity of the four pair distributions.
pub fn joint_distribution_feasible(table: &CorrelatorTable) -> Result<Feasibility> {
    let table = CorrelatorTable::new(table.correlators, table.marginals)?;
    let pairs = [(0, 2), (0, 3), (1, 2), (1, 3)];
    let mut a = vec![vec![1.0; 16]];
    let mut b = vec![1.0];
    for (k, (i, j)) in pairs.into_iter().enumerate() {
        a.push((0..16).map(|s| spin(s, i) * spin(s, j)).collect());
        b.push(table.correlators[k]);
    }
    for var in 0..4 {
        a.push((0..16).map(|s| spin(s, var)).collect());
        b.push(table.marginals[var]);
    }
    let lp = phase_one(&a, &b);

    let variants = table.chsh_variants();
    let worst = *variants
        .iter()
        .max_by(|x, y| x.value.total_cmp(&y.value))
        .expect("eight variants");
    let pair_probs = table.pair_probabilities();
    let (worst_pair, worst_prob) = pair_probs
        .iter()
        .enumerate()
        .flat_map(|(k, ps)| ps.iter().map(move |p| (k, *p)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("sixteen entries");
    let inequalities_hold = worst.value <= 2.0 && worst_prob >= 0.0;
    let near_boundary = (worst.value - 2.0).abs() < BOUNDARY_MARGIN || worst_prob.abs() < BOUNDARY_MARGIN;

    let feasible = lp.is_some();
    if feasible != inequalities_hold && !near_boundary {
        return Err(Error::FineMismatch(format!(
            "LP says {feasible}, inequalities say {inequalities_hold} (max CHSH {}, min pair probability {worst_prob})",
            worst.value
        )));
    }
    let witness = match lp {
        Some(x) => {
            let mut p = [0.0; 16];
            p.copy_from_slice(&x);
            Witness::Distribution(p)
        }
        None if worst.value > 2.0 => Witness::Chsh(worst),
        None => Witness::PairPositivity { pair: worst_pair, value: worst_prob },
    };
    Ok(Feasibility { feasible, witness, chsh_max: worst.value, near_boundary })
}
