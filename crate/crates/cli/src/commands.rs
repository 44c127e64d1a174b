use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use msqg_core::certificates::{
    certify_a_bound, certify_noise_multiplier, certify_remainders, energy_balance, regularity_budget,
    CertificateReport, LeadingTerm, TraceDecomposition,
};
use msqg_core::covariance::{CovarianceModel, SpectralBand};
use msqg_core::heat::heat_kernel_comparability;
use msqg_core::kernels::{cross_validate_routes, kernel_error_stability, KernelMode, ROUTE_PROBES};
use msqg_core::solver::{ensemble_column, prepare_initial_data, target_datum, InitialSpec, RunOutput, Solver, SolverConfig};
use msqg_core::uniqueness::{
    certify_gronwall, exact_kernel_cancellation, gronwall_fit, i1_bound_shape, i_terms, noise_ablation,
    paired_ensemble, transport_pairing, uniqueness_warnings, ITerms,
};
use msqg_core::{Lattice, MsqgError};

use crate::config::{CheckName, RunConfig};
use crate::error::CliError;
use crate::output::{OutputDir, Timing};

/// How a command ended when it did not error out.
pub enum Outcome {
    Success,
    /// Names of the failing certificates.
    CertificateFail(Vec<String>),
    /// A run stopped on a numeric failure after writing its artifacts.
    NumericFailure(String),
}

pub struct Phases(pub Vec<Timing>);

impl Phases {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(Timing {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

#[derive(Serialize)]
struct MeanRow {
    time: f64,
    l2_mean: f64,
    l2_stderr: f64,
    lp_mean: f64,
    hdot_neg_sq_mean: f64,
    h_reg_sq_mean: f64,
    trace_term_mean: f64,
}

fn ensemble_means(runs: &[RunOutput]) -> Vec<MeanRow> {
    let l2 = ensemble_column(runs, |r| r.l2);
    let lp = ensemble_column(runs, |r| r.lp);
    let hd = ensemble_column(runs, |r| r.hdot_neg * r.hdot_neg);
    let hr = ensemble_column(runs, |r| r.h_reg * r.h_reg);
    let tt = ensemble_column(runs, |r| r.trace_term);
    (0..l2.len())
        .map(|k| MeanRow {
            time: runs[0].ledger.records[k].time,
            l2_mean: l2[k].0,
            l2_stderr: l2[k].1,
            lp_mean: lp[k].0,
            hdot_neg_sq_mean: hd[k].0,
            h_reg_sq_mean: hr[k].0,
            trace_term_mean: tt[k].0,
        })
        .collect()
}

fn first_failure(runs: &[RunOutput]) -> Option<String> {
    runs.iter()
        .find_map(|r| r.failure.as_ref().map(|e| format!("member {}: {e}", r.member)))
}

/// The serde name of a unit enum variant.
fn snake_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::from("unnamed"),
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn simulate(cfg: &RunConfig, out: &mut OutputDir, phases: &mut Phases) -> Result<Outcome, CliError> {
    let solver = Solver::new(cfg.solver.to_core())?;
    warn_all(&solver.config().range_warnings());
    let sc = solver.config();
    let init = prepare_initial_data(&cfg.initial.to_core(), sc.delta, sc.beta, solver.lattice())?;
    out.write_field("initial.msqg", &init.field)?;
    let runs = phases.time("ensemble", || solver.run_ensemble(&init.field))?;
    for run in &runs {
        let w = out.create_file(&format!("ledgers/member_{:04}.csv", run.member))?;
        run.ledger.write_csv(w)?;
        out.write_field(
            &format!("final/member_{:04}.msqg", run.member),
            &run.final_state.theta(solver.lattice()),
        )?;
    }
    out.write_rows("ensemble_mean.csv", &ensemble_means(&runs))?;
    if let Some(msg) = first_failure(&runs) {
        return Ok(Outcome::NumericFailure(msg));
    }
    println!(
        "simulated {} members to t = {} on {}² (initial truncation error {:.3e})",
        runs.len(),
        sc.t_end,
        sc.n,
        init.truncation_error
    );
    Ok(Outcome::Success)
}

/// Solver with one override applied to the base configuration.
fn solver_with(cfg: &RunConfig, tweak: impl FnOnce(&mut SolverConfig)) -> Result<Solver, CliError> {
    let mut sc = cfg.solver.to_core();
    tweak(&mut sc);
    Ok(Solver::new(sc)?)
}

fn ensemble(cfg: &RunConfig, solver: &Solver) -> Result<Vec<RunOutput>, CliError> {
    let sc = solver.config();
    let init = prepare_initial_data(&cfg.initial.to_core(), sc.delta, sc.beta, solver.lattice())?;
    let runs = solver.run_ensemble(&init.field)?;
    if let Some(msg) = first_failure(&runs) {
        return Err(MsqgError::Numeric(msg).into());
    }
    Ok(runs)
}

fn certificate(cfg: &RunConfig, check: CheckName, out: &mut OutputDir) -> Result<CertificateReport, CliError> {
    let c = &cfg.certify;
    match check {
        CheckName::ABound => {
            let lead = LeadingTerm::new(c.a_bound.alpha, c.a_bound.beta)?;
            let lat = Lattice::new(c.a_bound.n, c.a_bound.box_length)?;
            Ok(certify_a_bound(&lead, &lat)?)
        }
        CheckName::Remainders => {
            let r = &c.remainders;
            let ladder = r
                .deltas
                .par_iter()
                .map(|&d| TraceDecomposition::new(r.alpha, r.beta, d))
                .collect::<msqg_core::Result<Vec<_>>>()?;
            Ok(certify_remainders(&ladder)?)
        }
        CheckName::NoiseMultiplier => {
            let nz = &c.noise;
            let lat = Lattice::new(nz.n, nz.box_length)?;
            let cov = CovarianceModel::new(nz.alpha, nz.delta, &lat, SpectralBand::Full)?;
            let probe_lat = Lattice::new(nz.probe_n, nz.probe_box_length)?;
            let probe = target_datum(
                &InitialSpec::RandomBand {
                    k_min: 1.0,
                    k_max: nz.probe_k_max,
                    l2_norm: 1.0,
                    seed: cfg.solver.seed,
                },
                &probe_lat,
            )?
            .dealiased()
            .without_nyquist();
            Ok(certify_noise_multiplier(&cov, &probe, nz.probe_delta)?)
        }
        CheckName::EnergyBalance => {
            let b = &c.balance;
            let coarse = solver_with(cfg, |s| {
                s.ensemble_size = b.ensemble_size;
                s.t_end = b.t_end;
            })?;
            let fine = solver_with(cfg, |s| {
                s.ensemble_size = b.ensemble_size;
                s.t_end = b.t_end;
                s.dt /= 2.0;
            })?;
            let coarse_runs = ensemble(cfg, &coarse)?;
            let fine_runs = ensemble(cfg, &fine)?;
            let (rep, rows) = energy_balance(&coarse_runs, Some(&fine_runs), &b.probe_times)?;
            out.write_rows("certificates/energy_balance_rows.csv", &rows)?;
            Ok(rep)
        }
        CheckName::RegularityBudget => {
            let b = &c.budget;
            let horizon = b.horizons.iter().cloned().fold(0.0, f64::max);
            let mut levels = Vec::with_capacity(b.deltas.len());
            for &d in &b.deltas {
                let s = solver_with(cfg, |s| {
                    s.ensemble_size = b.ensemble_size;
                    s.t_end = horizon;
                    s.delta = d;
                })?;
                levels.push((d, ensemble(cfg, &s)?));
            }
            let refs: Vec<(f64, &[RunOutput])> = levels.iter().map(|(d, r)| (*d, r.as_slice())).collect();
            let (rep, rows) = regularity_budget(&refs, &b.horizons)?;
            #[derive(Serialize)]
            struct Row {
                delta: f64,
                horizon: f64,
                sup_hdot: f64,
                dissipation: f64,
                initial: f64,
                constant: f64,
            }
            let rows: Vec<Row> = rows
                .iter()
                .map(|(d, t)| Row {
                    delta: *d,
                    horizon: t.horizon,
                    sup_hdot: t.sup_hdot,
                    dissipation: t.dissipation,
                    initial: t.initial,
                    constant: t.constant,
                })
                .collect();
            out.write_rows("certificates/regularity_budget_rows.csv", &rows)?;
            Ok(rep)
        }
    }
}

pub fn certify(cfg: &RunConfig, out: &mut OutputDir, phases: &mut Phases) -> Result<Outcome, CliError> {
    let mut failed = Vec::new();
    for &check in &cfg.certify.checks {
        let name = snake_name(&check);
        let rep = phases.time(&name, || certificate(cfg, check, out))?;
        out.write_report(&rep)?;
        println!("{}", rep.summary());
        if !rep.pass {
            failed.push(rep.name.clone());
        }
    }
    Ok(if failed.is_empty() {
        Outcome::Success
    } else {
        Outcome::CertificateFail(failed)
    })
}

#[derive(Serialize)]
struct AblationRow {
    time: f64,
    d_noise: f64,
    d_no_noise: f64,
}

pub fn uniqueness(cfg: &RunConfig, out: &mut OutputDir, phases: &mut Phases) -> Result<Outcome, CliError> {
    let u = &cfg.uniqueness;
    let base = {
        let mut sc = cfg.solver.to_core();
        sc.alpha = u.alpha;
        sc.beta = u.beta;
        sc.p = u.p;
        sc.t_end = u.t_end;
        sc.ensemble_size = u.pairs;
        sc
    };
    warn_all(&uniqueness_warnings(&base));
    let coarse = Solver::new(base.clone())?;
    let fine = Solver::new(SolverConfig {
        dt: base.dt / 2.0,
        ..base.clone()
    })?;
    let init = prepare_initial_data(&cfg.initial.to_core(), base.delta, base.beta, coarse.lattice())?;
    let coarse_runs = phases.time("pairs_dt", || {
        paired_ensemble(&coarse, &init.field, u.epsilon0, u.perturbation, u.pairs, u.snapshot_every)
    })?;
    let fine_runs = phases.time("pairs_dt_half", || {
        paired_ensemble(&fine, &init.field, u.epsilon0, u.perturbation, u.pairs, 2 * u.snapshot_every)
    })?;
    let coarse_fit = gronwall_fit(&coarse_runs)?;
    let fine_fit = gronwall_fit(&fine_runs)?;
    let mut rep = certify_gronwall(&coarse_fit, &fine_fit);

    // difference ledger of the first pair with the integrands at its snapshots
    let pair = &coarse_runs[0];
    let terms: Vec<(f64, ITerms)> = pair
        .snapshots
        .iter()
        .map(|s| i_terms(&coarse, &s.first, &s.second).map(|t| (s.time, t)))
        .collect::<msqg_core::Result<_>>()?;
    let w = out.create_file("uniqueness/difference_pair_0000.csv")?;
    pair.write_csv(w, &terms)?;

    let last = pair.snapshots.last().expect("paired run stores its final state");
    let theta = last.first.sub(&last.second)?;
    let cancel = exact_kernel_cancellation(coarse.kernels(), &theta, &last.second)?;
    rep.constant("exact_kernel_relative_residual", cancel);
    rep.tolerance("exact_kernel_relative_residual", 1e-8);
    rep.check(
        "exact_kernel_cancellation",
        cancel < 1e-8,
        format!("relative residual {cancel:.3e} at t = {}", last.time),
    );
    let (gap, scale) = transport_pairing(
        coarse.kernels(),
        &theta,
        &theta,
        &last.second,
        KernelMode::Regularized,
        KernelMode::Exact,
    )?;
    rep.constant("regularized_i2_relative", if scale > 0.0 { gap.abs() / scale } else { 0.0 });

    let shape = phases.time("bound_shape", || i1_bound_shape(&coarse, u.bound_samples, base.seed))?;
    rep.constant("i1_bound_constant", shape.constant);
    rep.constant("p_tilde", shape.p_tilde);
    rep.constant("epsilon", shape.epsilon);
    rep.meta("pairs", u.pairs);
    rep.meta("perturbation", snake_name(&u.perturbation));

    let (noisy, quiet) = phases.time("ablation", || {
        noise_ablation(&base, &init.field, u.epsilon0, u.perturbation, u.snapshot_every)
    })?;
    let ablation: Vec<AblationRow> = noisy
        .records
        .iter()
        .zip(&quiet.records)
        .map(|(a, b)| AblationRow {
            time: a.time,
            d_noise: a.d,
            d_no_noise: b.d,
        })
        .collect();
    out.write_rows("uniqueness/ablation.csv", &ablation)?;
    out.write_json("uniqueness/gronwall_dt.json", &coarse_fit)?;
    out.write_json("uniqueness/gronwall_dt_half.json", &fine_fit)?;
    out.write_report(&rep)?;
    println!("{}", rep.summary());
    Ok(if rep.pass {
        Outcome::Success
    } else {
        Outcome::CertificateFail(vec![rep.name])
    })
}

pub fn kernels_scan(cfg: &RunConfig, out: &mut OutputDir, phases: &mut Phases) -> Result<Outcome, CliError> {
    let k = &cfg.kernels;
    let mut failed = Vec::new();
    let mut routes = CertificateReport::new("kernel_routes");
    routes.tolerance("relative_gap", k.route_tolerance);
    phases.time("routes", || -> Result<(), CliError> {
        for &beta in &k.route_betas {
            for &delta in &k.route_deltas {
                let tag = format!("beta_{beta}_delta_{delta}");
                match cross_validate_routes(beta, delta, &ROUTE_PROBES, k.route_tolerance) {
                    Ok(r) => {
                        routes.constant(&tag, r.max_relative_gap);
                        out.write_rows(&format!("kernels/routes_{tag}.csv"), &r.samples)?;
                        routes.check(&tag, true, format!("max relative gap {:.3e}", r.max_relative_gap));
                    }
                    Err(MsqgError::Numeric(msg)) => routes.check(&tag, false, msg),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(())
    })?;

    let stability = phases.time("error_scan", || kernel_error_stability(k.scan_beta, &k.scan_deltas, k.scan_per_decade))?;
    for scan in &stability.scans {
        let w = out.create_file(&format!("kernels/error_scan_delta_{}.csv", scan.delta))?;
        scan.write_csv(w)?;
    }
    let mut errors = CertificateReport::new("kernel_error");
    errors.constant("gradient_spread", stability.gradient_spread);
    errors.constant("hessian_spread", stability.hessian_spread);
    errors.check(
        "constants_stable",
        stability.pass,
        format!(
            "fitted constants spread {:.3} (gradient), {:.3} (hessian) across δ",
            stability.gradient_spread, stability.hessian_spread
        ),
    );

    let mut heat = CertificateReport::new("heat_comparability");
    phases.time("heat", || -> Result<(), CliError> {
        for &beta in &k.heat_betas {
            let r = heat_kernel_comparability(beta, k.heat_dim, k.heat_t_range, k.heat_r_range, k.heat_per_decade)?;
            heat.constant(&format!("beta_{beta}/constant"), r.constant);
            heat.check(
                &format!("beta_{beta}"),
                r.pass,
                format!("band {:?} refined {:?}", r.coarse_band, r.refined_band),
            );
            out.write_json(&format!("kernels/heat_beta_{beta}.json"), &r)?;
        }
        Ok(())
    })?;

    for rep in [routes, errors, heat] {
        out.write_report(&rep)?;
        println!("{}", rep.summary());
        if !rep.pass {
            failed.push(rep.name.clone());
        }
    }
    Ok(if failed.is_empty() {
        Outcome::Success
    } else {
        Outcome::CertificateFail(failed)
    })
}
