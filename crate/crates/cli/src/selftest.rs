//! Quick checks of the exactly known cases behind each subcommand.

use qmeas::ambiguity::{ambiguity_witness, dispersionless_family, BlochVector};
use qmeas::contextuality::{chsh_value, joint_distribution_feasible, ChshAxes, CorrelatorTable};
use qmeas::curie_weiss::CurieWeissModel;
use qmeas::equilibrium::{g_threshold, meanfield_magnetization, MeanField};
use qmeas::oracle::{appendix_c_report, dense_joint_evolution};
use qmeas::runs::{born_weights, luders_branch, sample_runs, unread_reduction, von_neumann_branch, TestedObservable};
use qmeas::{DensityOperator, Result};

use crate::config::Command;

type Check = (&'static str, Result<bool>);

fn plus_x() -> Result<DensityOperator> {
    DensityOperator::qubit([1.0, 0.0, 0.0])
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn checks(command: Command) -> Vec<Check> {
    match command {
        Command::Truncate => vec![
            ("F(0) = 1", (|| Ok(CurieWeissModel::new(50, 0.1, 0.2, 3, plus_x()?)?.offdiag_factor(0.0) == 1.0))()),
            ("single spin gives cos 2gt", (|| {
                let m = CurieWeissModel::new(1, 0.3, 0.0, 0, plus_x()?)?;
                Ok(close(m.offdiag_factor(1.7), (0.6f64 * 1.7).cos(), 1e-15))
            })()),
            ("z-polarized state has no transverse signal", (|| {
                let m = CurieWeissModel::new(10, 0.1, 0.0, 0, DensityOperator::qubit([0.0, 0.0, 1.0])?)?;
                let r = m.transverse_expectations(&[0.0, 1.0]);
                Ok(r.sx.iter().chain(&r.sy).all(|v| *v == 0.0))
            })()),
        ],
        Command::Recur => vec![
            ("equal couplings revive fully", (|| {
                let m = CurieWeissModel::new(20, 1.0, 0.0, 0, plus_x()?)?;
                let p = m.recurrence_profile(2)?;
                Ok(p.iter().all(|p| close(p.measured.abs(), 1.0, 1e-12)))
            })()),
            ("no spread means no damping", (|| Ok(CurieWeissModel::new(20, 1.0, 0.0, 0, plus_x()?)?.damping_constant() == 0.0))()),
        ],
        Command::Cascade => vec![
            ("no correlations at t = 0", (|| {
                let m = CurieWeissModel::new(10, 0.1, 0.0, 0, plus_x()?)?;
                Ok(m.cascade_correlation(&[0, 1], 0.0)?.with_sx == 0.0)
            })()),
            ("equal couplings give sin·cos⁹", (|| {
                let m = CurieWeissModel::new(10, 0.1, 0.0, 0, plus_x()?)?;
                let x = 0.2f64 * 0.7;
                Ok(close(m.cascade_magnitude(&[3], 0.7)?.value(), x.sin() * x.cos().powi(9), 1e-15))
            })()),
        ],
        Command::Register => vec![
            ("paramagnet has m = 0", (|| Ok(meanfield_magnetization(1.0, 2.0, 0.0)?.magnitude() < 1e-12))()),
            ("ferromagnet has a symmetric pair", (|| {
                Ok(matches!(meanfield_magnetization(1.0, 0.5, 0.0)?, MeanField::SymmetricPair(m) if m > 0.9))
            })()),
            ("no barrier above T = J", (|| Ok(g_threshold(1.0, 1.5)? == 0.0))()),
        ],
        Command::Finalstate | Command::Born => vec![
            ("up state has weights (1, 0)", (|| {
                let w = born_weights(&DensityOperator::basis(2, 0)?, &TestedObservable::spin_z())?;
                Ok(w == vec![1.0, 0.0])
            })()),
            ("+x has weights (½, ½)", (|| {
                let w = born_weights(&plus_x()?, &TestedObservable::spin_z())?;
                Ok(w.iter().all(|p| close(*p, 0.5, 1e-15)))
            })()),
            ("certain outcome draws every run", (|| Ok(sample_runs(&[1.0, 0.0], 1000, 7)?.counts == vec![1000, 0]))()),
        ],
        Command::Reduce => vec![
            ("Lüders branch of +x is |↑⟩", (|| {
                let b = luders_branch(&plus_x()?, &TestedObservable::spin_z(), 0)?;
                Ok(close(b.p, 0.5, 1e-15) && close(b.r.matrix()[(0, 0)].re, 1.0, 1e-15))
            })()),
            ("von Neumann branch weight is rank over dim", (|| Ok(von_neumann_branch(&TestedObservable::spin_z(), 1)?.p == 0.5))()),
            ("unread +x is maximally mixed", (|| {
                let r = unread_reduction(&plus_x()?, &TestedObservable::spin_z())?;
                Ok(r.trace_distance(&DensityOperator::maximally_mixed(2))? < 1e-15)
            })()),
        ],
        Command::Ambiguity => vec![
            ("mixed state splits two ways with overlap ½", (|| {
                let w = ambiguity_witness(&BlochVector::new([0.0; 3])?, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])?;
                Ok(close(w.cross_overlap(), 0.5, 1e-12) && w.contradiction)
            })()),
        ],
        Command::Dispersionless => vec![
            ("pure qubit has (n − 1)² + 1 = 2 parameters", (|| Ok(dispersionless_family(&DensityOperator::basis(2, 0)?)?.param_count == 2))()),
            ("full rank leaves only multiples of Î", (|| Ok(dispersionless_family(&DensityOperator::maximally_mixed(3))?.param_count == 1))()),
        ],
        Command::Chsh | Command::Feasible => vec![
            ("singlet reaches 2√2", (|| {
                Ok(close(chsh_value(&DensityOperator::singlet(), &ChshAxes::standard())?, 2.0 * 2f64.sqrt(), 1e-12))
            })()),
            ("all-zero table is feasible", (|| Ok(joint_distribution_feasible(&CorrelatorTable::correlators_only([0.0; 4])?)?.feasible))()),
            ("PR box is infeasible", (|| {
                Ok(!joint_distribution_feasible(&CorrelatorTable::correlators_only([1.0, 1.0, 1.0, -1.0])?)?.feasible)
            })()),
        ],
        Command::OracleCheck | Command::AppcReport => vec![
            ("t = 0 blocks are uniform", (|| {
                let m = CurieWeissModel::new(3, 1.0, 0.0, 0, plus_x()?)?;
                let b = &dense_joint_evolution(&m, &[0.0])?[0];
                Ok(close(b.block(0, 1).trace().re, 1.0, 1e-15) && b.invariant_deviation() < 1e-15)
            })()),
            ("single spin flags no macroscopic limit", (|| {
                let m = CurieWeissModel::new(1, 1.0, 0.0, 0, plus_x()?)?;
                Ok(appendix_c_report(&dense_joint_evolution(&m, &[0.0, 0.5])?)?.no_macroscopic_limit)
            })()),
            ("guard refuses thirteen spins", (|| {
                let m = CurieWeissModel::new(13, 1.0, 0.0, 0, plus_x()?)?;
                Ok(dense_joint_evolution(&m, &[0.0]).is_err_and(|e| e.is_guard()))
            })()),
        ],
    }
}

/// Prints one line per check; true if all pass.
pub fn run(command: Command) -> bool {
    let mut ok = true;
    for (name, result) in checks(command) {
        let line = match result {
            Ok(true) => format!("ok   {name}"),
            Ok(false) => {
                ok = false;
                format!("FAIL {name}")
            }
            Err(e) => {
                ok = false;
                format!("FAIL {name}: {e}")
            }
        };
        println!("{line}");
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_selftest_passes() {
        for c in Command::ALL {
            for (name, r) in checks(c) {
                assert!(matches!(r, Ok(true)), "{}: {name}: {r:?}", c.name());
            }
        }
    }
}
