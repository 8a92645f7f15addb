use proptest::prelude::*;
use qmeas::curie_weiss::CurieWeissModel;
use qmeas::equilibrium::{final_joint_state, PointerModel};
use qmeas::linalg;
use qmeas::oracle::{dense_joint_evolution, reconstruct_joint, MagnetOperator};
use qmeas::qstate::{partial_trace, vn_entropy};
use qmeas::runs::{born_weights, info_balance, subensemble_state, unread_reduction, TestedObservable};
use qmeas::{DensityOperator, Observable};

#[test]
fn analytic_dephasing_matches_dense_evolution() {
    for n in [2usize, 4, 8, 10] {
        let r0 = DensityOperator::qubit([0.3, -0.5, 0.6]).unwrap();
        let m = CurieWeissModel::new(n, 0.4, 0.25, n as u64, r0).unwrap();
        let times: Vec<f64> = (0..200).map(|k| 0.05 * k as f64).collect();
        let analytic = m.transverse_expectations(&times);
        let run = dense_joint_evolution(&m, &times).unwrap();
        for (i, b) in run.iter().enumerate() {
            let (sx, sy) = b.transverse().unwrap();
            assert!((sx - analytic.sx[i]).abs() < 1e-10);
            assert!((sy - analytic.sy[i]).abs() < 1e-10);
            for k in 1..=3.min(n) {
                let subset: Vec<usize> = (n - k..n).collect();
                let c = m.cascade_correlation(&subset, b.time).unwrap();
                let z = MagnetOperator::z_string(n, &subset).unwrap();
                assert!((b.expectation(&Observable::pauli_x(), &z).unwrap() - c.with_sx).abs() < 1e-10);
                assert!((b.expectation(&Observable::pauli_y(), &z).unwrap() - c.with_sy).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn dephased_reduced_state_approaches_the_unread_reduction() {
    let r0 = DensityOperator::qubit([0.7, 0.2, 0.4]).unwrap();
    let m = CurieWeissModel::new(12, 1.0, 0.0, 0, r0.clone()).unwrap();
    let t = 4.0 * m.truncation_time();
    let b = &dense_joint_evolution(&m, &[t]).unwrap()[0];
    let reduced = partial_trace(&reconstruct_joint(b, &r0).unwrap(), &[0]).unwrap();
    let pinched = unread_reduction(&r0, &TestedObservable::spin_z()).unwrap();
    // residual coherence is |r↑↓|·cos¹²(2)
    assert!(reduced.trace_distance(&pinched).unwrap() < 1e-4);
}

#[test]
fn measurement_chain_on_the_toy_pointer() {
    let pointer = PointerModel::curie_weiss(8, 1.0, 0.5, 0.02).unwrap();
    let r0 = DensityOperator::qubit([0.4, -0.3, 0.5]).unwrap();
    let s = TestedObservable::spin_z();
    let d = final_joint_state(&r0, &s, &pointer).unwrap();
    let reduced = partial_trace(&d, &[0]).unwrap();
    assert!(reduced.trace_distance(&unread_reduction(&r0, &s).unwrap()).unwrap() < 1e-14);
    let weights = born_weights(&r0, &s).unwrap();
    let mut recombined = linalg::CMatrix::zeros(d.dim(), d.dim());
    for (i, w) in weights.iter().enumerate() {
        let b = subensemble_state(&d, &pointer, i).unwrap();
        assert!((b.p - w).abs() < 1e-12);
        recombined += b.delta.unwrap().matrix() * linalg::C64::from(b.p);
    }
    assert!(linalg::max_abs(&(recombined - d.matrix())) < 1e-12);
    let info = info_balance(&r0, &s).unwrap();
    assert!(info.loss >= -1e-12 && info.gain >= -1e-12);
    assert!((vn_entropy(&reduced).unwrap() - vn_entropy(&r0).unwrap() - info.loss).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_blocks_stay_paired_and_normalized(n in 1usize..7, spread in 0.0f64..0.12, seed in 0u64..50, t in 0.0f64..20.0) {
        let spread = if n == 1 { 0.0 } else { spread };
        let m = CurieWeissModel::new(n, 0.5, spread, seed, DensityOperator::qubit([0.2, 0.1, -0.6]).unwrap()).unwrap();
        let b = &dense_joint_evolution(&m, &[t]).unwrap()[0];
        prop_assert!(b.invariant_deviation() < 1e-14);
        let target = 1.0 / 4f64.powi(n as i32);
        prop_assert!(b.block(0, 1).gram_deviation(target) < 1e-15);
        prop_assert!((b.block(0, 1).trace().re - m.offdiag_factor(t)).abs() < 1e-12);
    }
}
