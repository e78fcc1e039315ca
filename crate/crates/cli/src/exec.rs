//! Scenario execution. Every function here computes in memory and returns a
//! [`Report`]; nothing is written until the caller has the whole result.

use dipolar::geometry::ensemble_rng;
use dipolar::kernel::CouplingSet;
use dipolar::observables::{eigenmodes, lorentzian_fit, FIT_MIN_POINTS};
use dipolar::scenarios::{
    aggregate, collective_shift_member, dicke_decay, g2_scan, normal_mode_sweep, par_map, G2Point, MemberScan,
    NormalModePoint,
};
use serde_json::{json, Value};

use crate::config::{Config, ScenarioKind, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::output::{num, Report, RowFailure, Table};

const OK: &str = "ok";

fn failed(e: &dyn std::fmt::Display) -> String {
    format!("failed: {e}")
}

/// Runs the configured scenario once. Any numerical failure is fatal,
/// except failed ensemble members, which are counted.
pub fn run(cfg: &Config, workers: usize) -> CliResult<Report> {
    match cfg.scenario {
        ScenarioKind::DickeDecay => dicke(cfg),
        ScenarioKind::NormalMode => normal_mode(cfg, workers, false),
        ScenarioKind::G2 => g2_joint(cfg),
        ScenarioKind::CollectiveShift => ensemble(cfg, workers),
    }
}

/// One independent run per axis value. Failed values become rows with a
/// failure status; the sweep fails only when every value does.
pub fn sweep(cfg: &Config, axis: SweepAxis, workers: usize) -> CliResult<Report> {
    let mut report = match axis {
        SweepAxis::Intensity => normal_mode(cfg, workers, true)?,
        SweepAxis::Angle => g2_per_angle(cfg, workers)?,
        SweepAxis::Detuning => detuning_sweep(cfg, workers)?,
        SweepAxis::ConfigurationEnsemble => ensemble(cfg, workers)?,
    };
    report.diagnostics.insert("axis".into(), json!(axis.name()));
    Ok(report)
}

fn dicke(cfg: &Config) -> CliResult<Report> {
    let section = cfg.dicke.as_ref().expect("resolved config");
    let times = section.times();
    let gamma = dicke_decay(&section.params(), cfg.solver(), &times, &cfg.control())?;
    let n = section.n_atoms as f64;
    let mut table = Table::new(
        "dicke_decay.csv",
        &["t (1/Gamma)", "gamma (Gamma)", "independent (Gamma)"],
    );
    for (t, g) in times.iter().zip(&gamma) {
        table.push(vec![num(*t), num(*g), num(n * (-t).exp())]);
    }
    let peak = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let mut report = Report::default();
    report.tables.push(table);
    report.diagnostics.insert("peak_gamma".into(), json!(peak));
    report.diagnostics.insert("min_gamma".into(), json!(min));
    report.diagnostics.insert("negative_gamma".into(), json!(min < 0.0));
    Ok(report)
}

fn normal_mode(cfg: &Config, workers: usize, tolerant: bool) -> CliResult<Report> {
    let section = cfg.normal_mode.as_ref().expect("resolved config");
    let params = section.params();
    let (solver, criterion, control) = (cfg.solver(), cfg.criterion(), cfg.control());
    let points: Vec<dipolar::Result<NormalModePoint>> = par_map(section.intensities.len(), workers, |i| {
        normal_mode_sweep(&params, solver, &section.intensities[i..=i], &criterion, &control).map(|mut v| v.remove(0))
    });
    let mut table = Table::new(
        "normal_mode.csv",
        &[
            "intensity (I_s)",
            "omega (Gamma)",
            "mode_decay (Gamma)",
            "gamma_total (Gamma)",
            "gamma_coherent (Gamma)",
            "gamma_incoherent (Gamma)",
            "incoherent_ratio (1)",
            "delta_gamma_c (1)",
            "t_steady (1/Gamma)",
            "status",
        ],
    );
    let mut report = Report::default();
    let mut residuals = Vec::new();
    let mut negative = Vec::new();
    for (intensity, point) in section.intensities.iter().zip(points) {
        match point {
            Ok(p) => {
                residuals.push(json!({ "intensity": intensity, "residual": p.steady_residual }));
                if p.rates.gamma_incoherent < 0.0 {
                    negative.push(*intensity);
                }
                table.push(vec![
                    num(p.intensity),
                    num(p.omega),
                    num(p.mode_decay),
                    num(p.rates.gamma_total),
                    num(p.rates.gamma_coherent),
                    num(p.rates.gamma_incoherent),
                    num(p.incoherent_ratio),
                    num(p.delta_gamma_c),
                    num(p.t_steady),
                    OK.into(),
                ]);
            }
            Err(e) if tolerant => {
                let e = CliError::from(e);
                let mut row = vec![num(*intensity)];
                row.resize(table.header.len() - 1, String::new());
                row.push(failed(&e));
                table.push(row);
                report.failures.push(RowFailure {
                    value: num(*intensity),
                    error: e,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    fail_if_empty(&report, section.intensities.len())?;
    report.tables.push(table);
    report.diagnostics.insert("steady_residuals".into(), json!(residuals));
    report
        .diagnostics
        .insert("negative_incoherent_rate".into(), json!(negative));
    Ok(report)
}

/// Every value of the sweep failed: report the first failure.
fn fail_if_empty(report: &Report, total: usize) -> CliResult<()> {
    match report.failures.first() {
        Some(first) if report.failures.len() == total => Err(first.error.clone()),
        _ => Ok(()),
    }
}

fn member_error(message: &str) -> CliError {
    CliError::Numerical(dipolar::Error::Numerical(message.to_string()))
}

fn g2_tables() -> (Table, Table) {
    (
        Table::new(
            "g2_intensity.csv",
            &[
                "theta (pi)",
                "intensity (1)",
                "g2_zero (1)",
                "g2_min (1)",
                "pair_population_min (1)",
                "pair_population_max (1)",
                "status",
            ],
        ),
        Table::new("g2.csv", &["theta (pi)", "tau (1/Gamma)", "g2 (1)"]),
    )
}

fn push_g2(summary: &mut Table, curves: &mut Table, tau: &[f64], p: &G2Point) {
    let min = p.g2.iter().copied().fold(f64::INFINITY, f64::min);
    let (lo, hi) = match p.pair_population {
        Some((lo, hi)) => (num(lo), num(hi)),
        None => (String::new(), String::new()),
    };
    summary.push(vec![
        num(p.theta),
        num(p.intensity),
        num(p.g2[0]),
        num(min),
        lo,
        hi,
        OK.into(),
    ]);
    for (t, g) in tau.iter().zip(&p.g2) {
        curves.push(vec![num(p.theta), num(*t), num(*g)]);
    }
}

fn g2_monitors(points: &[&G2Point]) -> Value {
    let negative_g2: Vec<f64> = points
        .iter()
        .filter(|p| p.g2.iter().any(|g| *g < 0.0))
        .map(|p| p.theta)
        .collect();
    let negative_pairs: Vec<f64> = points
        .iter()
        .filter(|p| p.pair_population.is_some_and(|(lo, _)| lo < 0.0))
        .map(|p| p.theta)
        .collect();
    json!({ "negative_g2": negative_g2, "negative_pair_population": negative_pairs })
}

/// All angles share one steady state.
fn g2_joint(cfg: &Config) -> CliResult<Report> {
    let section = cfg.g2.as_ref().expect("resolved config");
    let scan = g2_scan(&section.params(), cfg.solver(), &cfg.criterion(), &cfg.control())?;
    let (mut summary, mut curves) = g2_tables();
    for p in &scan.points {
        push_g2(&mut summary, &mut curves, &scan.tau, p);
    }
    let mut report = Report::default();
    report.diagnostics.insert("t_steady".into(), json!(scan.t_steady));
    report
        .diagnostics
        .insert("steady_residual".into(), json!(scan.steady_residual));
    report.diagnostics.insert(
        "negativity".into(),
        g2_monitors(&scan.points.iter().collect::<Vec<_>>()),
    );
    report.tables.extend([summary, curves]);
    Ok(report)
}

fn g2_per_angle(cfg: &Config, workers: usize) -> CliResult<Report> {
    let section = cfg.g2.as_ref().expect("resolved config");
    let (solver, criterion, control) = (cfg.solver(), cfg.criterion(), cfg.control());
    let scans = par_map(section.thetas.len(), workers, |i| {
        let mut params = section.params();
        params.thetas = vec![section.thetas[i]];
        g2_scan(&params, solver, &criterion, &control)
    });
    let (mut summary, mut curves) = g2_tables();
    let mut report = Report::default();
    let mut steady = Vec::new();
    let mut ok = Vec::new();
    for (theta, scan) in section.thetas.iter().zip(&scans) {
        match scan {
            Ok(s) => {
                push_g2(&mut summary, &mut curves, &s.tau, &s.points[0]);
                steady.push(json!({ "theta": theta, "t_steady": s.t_steady, "residual": s.steady_residual }));
                ok.push(&s.points[0]);
            }
            Err(e) => {
                let e = CliError::from(e.clone());
                let mut row = vec![num(*theta)];
                row.resize(summary.header.len() - 1, String::new());
                row.push(failed(&e));
                summary.push(row);
                report.failures.push(RowFailure {
                    value: num(*theta),
                    error: e,
                });
            }
        }
    }
    fail_if_empty(&report, section.thetas.len())?;
    report.diagnostics.insert("steady".into(), json!(steady));
    report.diagnostics.insert("negativity".into(), g2_monitors(&ok));
    report.tables.extend([summary, curves]);
    Ok(report)
}

fn members_table() -> Table {
    Table::new(
        "members.csv",
        &[
            "member",
            "n_atoms",
            "detuning (Gamma)",
            "excitation (1)",
            "t_steady (1/Gamma)",
            "status",
        ],
    )
}

fn push_member(table: &mut Table, detunings: &[f64], member: u64, scan: &dipolar::Result<MemberScan>) {
    match scan {
        Ok(s) => {
            for ((d, e), t) in detunings.iter().zip(&s.excitation).zip(&s.t_steady) {
                table.push(vec![
                    s.member.to_string(),
                    s.n_atoms.to_string(),
                    num(*d),
                    num(*e),
                    num(*t),
                    OK.into(),
                ]);
            }
        }
        Err(e) => table.push(vec![
            member.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            failed(e),
        ]),
    }
}

fn shift_table() -> Table {
    Table::new(
        "collective_shift.csv",
        &[
            "detuning (Gamma)",
            "mean_excitation (1)",
            "stderr (1)",
            "members (count)",
            "status",
        ],
    )
}

/// Lorentzian fit of the mean excitation, when there are enough points.
fn fit_shift(report: &mut Report, detunings: &[f64], mean: &[f64]) {
    if detunings.len() < FIT_MIN_POINTS {
        report.diagnostics.insert(
            "fit".into(),
            json!({ "skipped": format!("needs at least {FIT_MIN_POINTS} detunings, have {}", detunings.len()) }),
        );
        return;
    }
    match lorentzian_fit(detunings, mean) {
        Ok(f) => {
            report.diagnostics.insert(
                "fit".into(),
                json!({
                    "center": f.center,
                    "width": f.width,
                    "amplitude": f.amplitude,
                    "offset": f.offset,
                    "residual": f.residual,
                    "iterations": f.iterations,
                }),
            );
        }
        Err(e) => report.deferred = Some(e.into()),
    }
}

/// Each member scans every detuning, continuing from its previous points.
fn ensemble(cfg: &Config, workers: usize) -> CliResult<Report> {
    let params = cfg.collective_shift.as_ref().expect("resolved config").params(cfg.seed);
    let (solver, criterion, control) = (cfg.solver(), cfg.criterion(), cfg.control());
    let runs = par_map(params.members, workers, |i| {
        collective_shift_member(&params, i as u64, solver, &criterion, &control)
    });
    let average = aggregate(&params.detunings, &runs)?;
    let mut report = Report::default();
    let mut shift = shift_table();
    for k in 0..average.detunings.len() {
        shift.push(vec![
            num(average.detunings[k]),
            num(average.mean[k]),
            num(average.stderr[k]),
            average.successes.to_string(),
            OK.into(),
        ]);
    }
    let mut members = members_table();
    for (i, r) in runs.iter().enumerate() {
        push_member(&mut members, &params.detunings, i as u64, r);
    }
    for (member, message) in &average.failures {
        report.failures.push(RowFailure {
            value: format!("member {member}"),
            error: member_error(message),
        });
    }
    ensemble_diagnostics(&mut report, &runs);
    fit_shift(&mut report, &average.detunings, &average.mean);
    report.tables.extend([shift, members]);
    Ok(report)
}

/// Each detuning is an independent ensemble with no continuation.
fn detuning_sweep(cfg: &Config, workers: usize) -> CliResult<Report> {
    let base = cfg.collective_shift.as_ref().expect("resolved config").params(cfg.seed);
    let (solver, criterion, control) = (cfg.solver(), cfg.criterion(), cfg.control());
    let rows = par_map(base.detunings.len(), workers, |k| {
        let mut params = base.clone();
        params.detunings = vec![base.detunings[k]];
        let runs: Vec<_> = (0..params.members)
            .map(|m| collective_shift_member(&params, m as u64, solver, &criterion, &control))
            .collect();
        (aggregate(&params.detunings, &runs), runs)
    });
    let mut report = Report::default();
    let mut shift = shift_table();
    let mut members = members_table();
    let mut fitted = (Vec::new(), Vec::new());
    let mut all_runs = Vec::new();
    for (delta, (average, runs)) in base.detunings.iter().zip(rows) {
        for (i, r) in runs.iter().enumerate() {
            push_member(&mut members, &[*delta], i as u64, r);
        }
        match average {
            Ok(a) => {
                shift.push(vec![
                    num(*delta),
                    num(a.mean[0]),
                    num(a.stderr[0]),
                    a.successes.to_string(),
                    OK.into(),
                ]);
                fitted.0.push(*delta);
                fitted.1.push(a.mean[0]);
                for (member, message) in &a.failures {
                    report.failures.push(RowFailure {
                        value: format!("detuning {} member {member}", num(*delta)),
                        error: member_error(message),
                    });
                }
            }
            Err(e) => {
                let e = CliError::from(e);
                shift.push(vec![num(*delta), String::new(), String::new(), "0".into(), failed(&e)]);
                report.failures.push(RowFailure {
                    value: format!("detuning {}", num(*delta)),
                    error: e,
                });
            }
        }
        all_runs.extend(runs);
    }
    if fitted.0.is_empty() {
        return Err(report.failures.swap_remove(0).error);
    }
    ensemble_diagnostics(&mut report, &all_runs);
    fit_shift(&mut report, &fitted.0, &fitted.1);
    report.tables.extend([shift, members]);
    Ok(report)
}

fn ensemble_diagnostics(report: &mut Report, runs: &[dipolar::Result<MemberScan>]) {
    let ok: Vec<&MemberScan> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let atoms: Vec<usize> = ok.iter().map(|s| s.n_atoms).collect();
    let t_max = ok.iter().flat_map(|s| s.t_steady.iter().copied()).fold(0.0, f64::max);
    let negative = ok.iter().filter(|s| s.excitation.iter().any(|e| *e < 0.0)).count();
    report.diagnostics.insert(
        "atoms".into(),
        json!({
            "min": atoms.iter().min(),
            "max": atoms.iter().max(),
            "mean": atoms.iter().sum::<usize>() as f64 / atoms.len().max(1) as f64,
        }),
    );
    report.diagnostics.insert("longest_t_steady".into(), json!(t_max));
    report
        .diagnostics
        .insert("members_with_negative_excitation".into(), json!(negative));
}

/// Collective modes of the scenario's array. The collective-shift
/// scenario uses configuration 0 of its seed.
pub fn modes(cfg: &Config) -> CliResult<Report> {
    let array = match cfg.scenario {
        ScenarioKind::DickeDecay => cfg.dicke.as_ref().expect("resolved config").params().array()?,
        ScenarioKind::NormalMode => cfg.normal_mode.as_ref().expect("resolved config").params().array()?,
        ScenarioKind::G2 => cfg.g2.as_ref().expect("resolved config").params().array()?,
        ScenarioKind::CollectiveShift => {
            let p = cfg.collective_shift.as_ref().expect("resolved config").params(cfg.seed);
            p.trap.sample(p.transition, &mut ensemble_rng(p.seed, 0))?
        }
    };
    let couplings = CouplingSet::new(&array)?;
    let set = eigenmodes(&couplings)?;
    let mut values = Table::new(
        "modes.csv",
        &[
            "mode",
            "eigenvalue_re (Gamma)",
            "eigenvalue_im (Gamma)",
            "decay_rate (Gamma)",
        ],
    );
    let mut vectors = Table::new("mode_vectors.csv", &["mode", "atom", "u_re (1)", "u_im (1)"]);
    for (a, (g, u)) in set.eigenvalues.iter().zip(&set.modes).enumerate() {
        values.push(vec![a.to_string(), num(g.re), num(g.im), num(set.decay_rates[a])]);
        for (n, c) in u.iter().enumerate() {
            vectors.push(vec![a.to_string(), n.to_string(), num(c.re), num(c.im)]);
        }
    }
    let mut positions = Table::new("positions.csv", &["atom", "x (lambda)", "y (lambda)", "z (lambda)"]);
    for (n, r) in array.positions().iter().enumerate() {
        positions.push(vec![n.to_string(), num(r.x), num(r.y), num(r.z)]);
    }
    let mut report = Report::default();
    report.diagnostics.insert("n_atoms".into(), json!(array.n_atoms()));
    report.tables.extend([values, vectors, positions]);
    Ok(report)
}
