//! One function per subcommand.

use serde_json::{json, Value};

use qmeas::ambiguity::{ambiguity_witness, dispersionless_family, BlochVector};
use qmeas::contextuality::{chsh_value, joint_distribution_feasible, ChshAxes, CorrelatorTable, Witness};
use qmeas::curie_weiss::CurieWeissModel;
use qmeas::equilibrium::{
    final_joint_state, g_threshold, magnetization_values, meanfield_magnetization, pointer_limit, MeanField,
    PointerModel,
};
use qmeas::oracle::{appendix_c_report, dense_joint_evolution, MagnetOperator};
use qmeas::qstate::{mix, partial_trace, qvariance};
use qmeas::runs::{
    born_weights, info_balance, luders_branch, sample_runs, subensemble_state_with_tolerance, unread_reduction,
    von_neumann_branch, TestedObservable, Verdict,
};
use qmeas::{DensityOperator, Observable};

use crate::config::{Command, ExperimentConfig, Rule};
use crate::output::{Output, Table};
use crate::CliError;

/// Result of a command plus whether its own check passed.
pub struct Run {
    pub output: Output,
    pub passed: bool,
}

impl From<Output> for Run {
    fn from(output: Output) -> Self {
        Run { output, passed: true }
    }
}

pub fn execute(c: &ExperimentConfig) -> Result<Run, CliError> {
    match c.command {
        Command::Truncate => truncate(c).map(Run::from),
        Command::Recur => recur(c).map(Run::from),
        Command::Cascade => cascade(c).map(Run::from),
        Command::Register => register(c).map(Run::from),
        Command::Finalstate => finalstate(c).map(Run::from),
        Command::Born => born(c).map(Run::from),
        Command::Reduce => reduce(c).map(Run::from),
        Command::Ambiguity => ambiguity(c).map(Run::from),
        Command::Dispersionless => dispersionless(c).map(Run::from),
        Command::Chsh => chsh(c).map(Run::from),
        Command::Feasible => feasible(c).map(Run::from),
        Command::OracleCheck => oracle_check(c),
        Command::AppcReport => appc_report(c).map(Run::from),
    }
}

fn qubit(v: [f64; 3]) -> Result<DensityOperator, CliError> {
    Ok(DensityOperator::qubit(v)?)
}

fn bloch(state: &DensityOperator) -> Result<[f64; 3], CliError> {
    Ok(BlochVector::from_state(state)?.components())
}

fn model(c: &ExperimentConfig, n: usize, g: f64, spread: f64, r0: [f64; 3]) -> Result<CurieWeissModel, CliError> {
    let m = &c.model;
    Ok(CurieWeissModel::new(
        m.n.unwrap_or(n),
        m.g.unwrap_or(g),
        m.delta_g_rel.unwrap_or(spread),
        m.seed.unwrap_or(0),
        qubit(m.r0.unwrap_or(r0))?,
    )?)
}

fn grid(c: &ExperimentConfig, tau: f64, t_max: f64, points: usize) -> Result<Vec<f64>, CliError> {
    let t_max = c.grid.t_max.unwrap_or(t_max);
    let points = c.grid.points.unwrap_or(points);
    if points < 2 || !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::Config(format!("need at least 2 points and t_max > 0, got {points}, {t_max}")));
    }
    Ok((0..points).map(|k| t_max * tau * k as f64 / (points - 1) as f64).collect())
}

fn tested(c: &ExperimentConfig) -> Result<TestedObservable, CliError> {
    match c.inputs.axis {
        Some(a) if a != [0.0, 0.0, 1.0] => Ok(TestedObservable::from_observable(&Observable::spin_along(a))?),
        _ => Ok(TestedObservable::spin_z()),
    }
}

fn truncate(c: &ExperimentConfig) -> Result<Output, CliError> {
    let m = model(c, 10_000, 0.01, 0.0, [1.0, 0.0, 0.0])?;
    let times = grid(c, m.truncation_time(), 4.0, 401)?;
    let res = m.transverse_expectations(&times);
    let env = res.gaussian_envelope();
    let mut t = Table::new(&["t", "sx", "sy", "gaussian_envelope"]);
    for (k, e) in env.iter().enumerate() {
        t.push(vec![res.times[k], res.sx[k], res.sy[k], *e]);
    }
    Ok(Output::summary(json!({
        "n": m.n_spins(),
        "tau": res.tau,
        "sx0": res.sx0,
        "sy0": res.sy0,
    }))
    .with_table(t))
}

fn recur(c: &ExperimentConfig) -> Result<Output, CliError> {
    let m = model(c, 400, 1.0, 0.1, [1.0, 0.0, 0.0])?;
    let peaks = m.recurrence_profile(c.grid.nu_max.unwrap_or(3))?;
    let mut t = Table::new(&["nu", "time", "measured", "ln_measured", "predicted", "ln_predicted"]);
    for p in &peaks {
        t.push(vec![p.nu as f64, p.time, p.measured, p.ln_measured, p.predicted, p.ln_predicted]);
    }
    Ok(Output::summary(json!({
        "n": m.n_spins(),
        "damping_constant": m.damping_constant(),
        "delta_g_rms": m.delta_g_rms(),
    }))
    .with_table(t))
}

fn cascade(c: &ExperimentConfig) -> Result<Output, CliError> {
    let m = model(c, 10_000, 0.01, 0.0, [1.0, 0.0, 0.0])?;
    let k_max = c.grid.k_max.unwrap_or(3);
    if k_max == 0 || k_max > m.n_spins() {
        return Err(CliError::Config(format!("k_max must lie in 1..={}", m.n_spins())));
    }
    let tau = m.truncation_time();
    let times = grid(c, tau, 3.0, 301)?;
    let mut columns = vec!["t".to_string()];
    for k in 1..=k_max {
        columns.extend([format!("sx_k{k}"), format!("sy_k{k}"), format!("magnitude_k{k}")]);
    }
    let mut t = Table::with_columns(columns);
    for &time in &times {
        let mut row = vec![time];
        for k in 1..=k_max {
            let subset: Vec<usize> = (0..k).collect();
            let cc = m.cascade_correlation(&subset, time)?;
            row.extend([cc.with_sx, cc.with_sy, cc.magnitude.value()]);
        }
        t.push(row);
    }
    let peaks: Vec<f64> = (1..=k_max).map(|k| (k as f64 / 2.0).sqrt()).collect();
    Ok(Output::summary(json!({ "n": m.n_spins(), "tau": tau, "predicted_peaks_over_tau": peaks })).with_table(t))
}

fn register(c: &ExperimentConfig) -> Result<Output, CliError> {
    let j = c.model.j.unwrap_or(1.0);
    let temp = c.model.t.unwrap_or(0.8);
    let field = c.inputs.field.unwrap_or(0.0);
    let mf = meanfield_magnetization(j, temp, field)?;
    let branch = match mf {
        MeanField::Unique(_) => "unique",
        MeanField::SymmetricPair(_) => "symmetric_pair",
    };
    let m_value = match mf {
        MeanField::Unique(m) | MeanField::SymmetricPair(m) => m,
    };
    let n = c.model.n.unwrap_or(10);
    if n == 0 {
        return Err(CliError::Config("magnet needs at least one spin".into()));
    }
    let scales = c.grid.scales.clone().unwrap_or_else(|| vec![0.4, 0.2, 0.1]);
    let mz = magnetization_values(n);
    let energies: Vec<f64> = mz.iter().map(|m| -j / (2.0 * n as f64) * m * m).collect();
    let a_hat = Observable::diagonal(&mz);
    let lim = pointer_limit(&Observable::diagonal(&energies), &a_hat.scaled(-1.0), &a_hat, temp, &scales)?;
    Ok(Output::summary(json!({
        "j": j,
        "t": temp,
        "field": field,
        "m_f": m_value,
        "branch": branch,
        "g_threshold": g_threshold(j, temp)?,
        "pointer_limit": {
            "n": n,
            "scales": lim.scales,
            "values": lim.values,
            "extrapolated": lim.extrapolated,
            "extrapolated_per_spin": lim.extrapolated / n as f64,
            "converged": lim.converged,
        },
    })))
}

fn finalstate(c: &ExperimentConfig) -> Result<Output, CliError> {
    let n = c.model.n.unwrap_or(10);
    let pointer = PointerModel::curie_weiss(n, c.model.j.unwrap_or(1.0), c.model.t.unwrap_or(0.5), c.model.g.unwrap_or(0.02))?;
    let r0 = qubit(c.model.r0.unwrap_or([1.0, 0.0, 0.0]))?;
    let s = TestedObservable::spin_z();
    let d = final_joint_state(&r0, &s, &pointer)?;
    let tol = c.tolerance.window.unwrap_or(qmeas::runs::WINDOW_TOL);
    let weights = born_weights(&r0, &s)?;
    let mut branches = Vec::new();
    for (i, &p) in weights.iter().enumerate() {
        if p <= qmeas::runs::ZERO_WEIGHT {
            branches.push(json!({ "index": i, "p": p }));
            continue;
        }
        let b = subensemble_state_with_tolerance(&d, &pointer, i, tol)?;
        let expect = luders_branch(&r0, &s, i)?.r.tensor(&pointer.pointer_states()[i]);
        let distance = b.delta.as_ref().map(|x| x.trace_distance(&expect)).transpose()?;
        branches.push(json!({
            "index": i,
            "p": b.p,
            "bloch": bloch(&b.r)?,
            "product_distance": distance,
        }));
    }
    let reduced = partial_trace(&d, &[0])?;
    Ok(Output::summary(json!({
        "n": n,
        "pointer_values": pointer.outcomes(),
        "window": pointer.window(),
        "weights": weights,
        "reduced_bloch": bloch(&reduced)?,
        "branches": branches,
    })))
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Within3Sigma => "within_3_sigma",
        Verdict::Flagged => "flagged",
        Verdict::Failed => "failed",
    }
}

fn born(c: &ExperimentConfig) -> Result<Output, CliError> {
    let r0 = qubit(c.model.r0.unwrap_or([0.0, 0.0, 0.6]))?;
    let s = tested(c)?;
    let p = born_weights(&r0, &s)?;
    let split = sample_runs(&p, c.inputs.runs.unwrap_or(100_000), c.model.seed.unwrap_or(1))?;
    Ok(Output::summary(json!({
        "eigenvalues": s.eigenvalues(),
        "p": p,
        "runs": split.total,
        "seed": split.seed,
        "counts": split.counts,
        "frequencies": split.frequencies(),
        "z_scores": split.z_scores(),
        "verdicts": split.verdicts().into_iter().map(verdict_name).collect::<Vec<_>>(),
    })))
}

fn reduce(c: &ExperimentConfig) -> Result<Output, CliError> {
    let r0 = qubit(c.model.r0.unwrap_or([0.6, 0.0, 0.3]))?;
    let s = tested(c)?;
    let rule = c.inputs.rule.unwrap_or(Rule::Luders);
    let body = match rule {
        Rule::Luders | Rule::VonNeumann => {
            let mut branches = Vec::new();
            for i in 0..s.len() {
                let b = match rule {
                    Rule::Luders => luders_branch(&r0, &s, i),
                    _ => von_neumann_branch(&s, i),
                };
                match b {
                    Ok(b) => branches.push(json!({ "index": i, "p": b.p, "bloch": bloch(&b.r)? })),
                    Err(qmeas::Error::UndefinedBranch { .. }) => branches.push(json!({ "index": i, "p": 0.0 })),
                    Err(e) => return Err(e.into()),
                }
            }
            json!({ "rule": rule_name(rule), "eigenvalues": s.eigenvalues(), "branches": branches })
        }
        Rule::Unread => {
            let r = unread_reduction(&r0, &s)?;
            let info = info_balance(&r0, &s)?;
            json!({
                "rule": "unread",
                "bloch": bloch(&r)?,
                "information_loss": info.loss,
                "information_gain": info.gain,
            })
        }
    };
    Ok(Output::summary(body))
}

fn rule_name(r: Rule) -> &'static str {
    match r {
        Rule::Luders => "luders",
        Rule::VonNeumann => "von_neumann",
        Rule::Unread => "unread",
    }
}

fn ambiguity(c: &ExperimentConfig) -> Result<Output, CliError> {
    let v = BlochVector::new(c.model.r0.unwrap_or([0.0; 3]))?;
    let w = ambiguity_witness(&v, c.inputs.dir1.unwrap_or([0.0, 0.0, 1.0]), c.inputs.dir2.unwrap_or([1.0, 0.0, 0.0]))?;
    let chord = |d: &qmeas::ambiguity::ChordDecomposition| {
        json!({
            "states": [d.v1.components(), d.v2.components()],
            "weights": [d.rho1, d.rho2],
            "reconstruction": d.reconstruct(),
        })
    };
    Ok(Output::summary(json!({
        "bloch": v.components(),
        "first": chord(&w.first),
        "second": chord(&w.second),
        "overlaps": w.overlaps,
        "cross_overlap": w.cross_overlap(),
        "contradiction": w.contradiction,
    })))
}

fn dispersionless(c: &ExperimentConfig) -> Result<Output, CliError> {
    let r = match &c.inputs.spectrum {
        Some(s) => DensityOperator::diagonal(s)?,
        None => qubit(c.model.r0.unwrap_or([0.0, 0.0, 1.0]))?,
    };
    let fam = dispersionless_family(&r)?;
    let mut worst: f64 = 0.0;
    for b in &fam.basis {
        worst = worst.max(qvariance(&r, b)?.abs());
    }
    Ok(Output::summary(json!({
        "dim": r.dim(),
        "rank": fam.rank,
        "param_count": fam.param_count,
        "basis_size": fam.basis.len(),
        "max_q_variance": worst,
        "near_boundary": fam.near_boundary,
    })))
}

/// `singlet`, `product` or `werner:<p>`.
fn pair_state(spec: &str) -> Result<DensityOperator, CliError> {
    let singlet = DensityOperator::singlet();
    match spec {
        "singlet" => Ok(singlet),
        "product" => Ok(DensityOperator::basis(2, 0)?.tensor(&DensityOperator::basis(2, 1)?)),
        _ => {
            let p: f64 = spec
                .strip_prefix("werner:")
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| CliError::Config(format!("unknown state {spec:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::Config(format!("werner weight {p} outside [0, 1]")));
            }
            let noise = DensityOperator::maximally_mixed(4).with_subsystems(vec![2, 2])?;
            Ok(mix(&[(p, &singlet), (1.0 - p, &noise)])?)
        }
    }
}

fn chsh(c: &ExperimentConfig) -> Result<Output, CliError> {
    let state = pair_state(c.inputs.state.as_deref().unwrap_or("singlet"))?;
    let axes = ChshAxes::standard();
    let table = CorrelatorTable::from_state(&state, &axes)?;
    Ok(Output::summary(json!({
        "C": chsh_value(&state, &axes)?,
        "correlators": table.correlators,
        "marginals": table.marginals,
    })))
}

fn feasible(c: &ExperimentConfig) -> Result<Output, CliError> {
    let table = match (c.inputs.correlators, &c.inputs.state) {
        (Some(corr), _) => CorrelatorTable::new(corr, c.inputs.marginals.unwrap_or([0.0; 4]))?,
        (None, state) => {
            CorrelatorTable::from_state(&pair_state(state.as_deref().unwrap_or("singlet"))?, &ChshAxes::standard())?
        }
    };
    let f = joint_distribution_feasible(&table)?;
    let witness = match &f.witness {
        Witness::Distribution(p) => json!({ "kind": "distribution", "p": p }),
        Witness::Chsh(v) => json!({ "kind": "chsh", "signs": v.signs, "value": v.value }),
        Witness::PairPositivity { pair, value } => json!({ "kind": "pair_positivity", "pair": pair, "value": value }),
    };
    Ok(Output::summary(json!({
        "correlators": table.correlators,
        "marginals": table.marginals,
        "feasible": f.feasible,
        "chsh_max": f.chsh_max,
        "near_boundary": f.near_boundary,
        "witness": witness,
    })))
}

fn oracle_check(c: &ExperimentConfig) -> Result<Run, CliError> {
    let m = model(c, 8, 1.0, 0.2, [0.6, 0.3, -0.2])?;
    let n = m.n_spins();
    let tol = c.tolerance.oracle.unwrap_or(1e-10);
    let times = grid(c, m.truncation_time(), 4.0, 200)?;
    let run = dense_joint_evolution(&m, &times)?;
    let analytic = m.transverse_expectations(&times);
    let k_max = c.grid.k_max.unwrap_or(3).min(n);
    let strings = (1..=k_max)
        .map(|k| MagnetOperator::z_string(n, &(0..k).collect::<Vec<_>>()))
        .collect::<qmeas::Result<Vec<_>>>()?;
    let (mut df, mut dx, mut dy, mut dc): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for (i, b) in run.iter().enumerate() {
        df = df.max((b.block(0, 1).trace().re - m.offdiag_factor(b.time)).abs());
        let (sx, sy) = b.transverse()?;
        dx = dx.max((sx - analytic.sx[i]).abs());
        dy = dy.max((sy - analytic.sy[i]).abs());
        for (k, z) in strings.iter().enumerate() {
            let cc = m.cascade_correlation(&(0..=k).collect::<Vec<_>>(), b.time)?;
            dc = dc.max((b.expectation(&Observable::pauli_x(), z)? - cc.with_sx).abs());
            dc = dc.max((b.expectation(&Observable::pauli_y(), z)? - cc.with_sy).abs());
        }
    }
    let passed = df.max(dx).max(dy).max(dc) <= tol;
    let output = Output::summary(json!({
        "n": n,
        "points": times.len(),
        "tolerance": tol,
        "max_deviation": { "offdiag_factor": df, "sx": dx, "sy": dy, "cascade": dc },
        "passed": passed,
    }));
    Ok(Run { output, passed })
}

fn appc_report(c: &ExperimentConfig) -> Result<Output, CliError> {
    let m = model(c, 8, 1.0, 0.0, [1.0, 0.0, 0.0])?;
    let times = grid(c, m.truncation_time(), 4.0, 200)?;
    let report = appendix_c_report(&dense_joint_evolution(&m, &times)?)?;
    let mut t = Table::new(&["t", "invariant_deviation", "sx", "sy", "sx_k1", "sx_k2", "sx_k3"]);
    for i in 0..report.times.len() {
        let low = report.low_k[i];
        t.push(vec![report.times[i], report.invariant_deviation[i], report.sx[i], report.sy[i], low[0], low[1], low[2]]);
    }
    let sx0 = report.sx.first().copied().unwrap_or(0.0);
    let last = report.sx.last().copied().unwrap_or(0.0);
    let value = |x: f64| if x.is_finite() { Value::from(x) } else { Value::Null };
    Ok(Output::summary(json!({
        "n": report.n_spins,
        "max_invariant_deviation": report.max_deviation,
        "sx_initial": sx0,
        "sx_final": last,
        "final_over_initial": value(last / sx0),
        "no_macroscopic_limit": report.no_macroscopic_limit,
    }))
    .with_table(t))
}
