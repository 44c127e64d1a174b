//! Expectation identity for `⟨θ, G^δ ∗ θ⟩` and the regularity budget, both
//! read off ensemble ledgers.

use serde::Serialize;

use super::report::CertificateReport;
use crate::error::{MsqgError, Result};
use crate::kernels::KernelMode;
use crate::lattice::SpectralScalarField;
use crate::solver::{NoiseDrive, RunOutput, Solver};

/// Ensembles smaller than this get a 3σ band and a warning.
pub const MIN_ENSEMBLE: usize = 32;

fn check_runs(runs: &[RunOutput]) -> Result<()> {
    if runs.is_empty() {
        return Err(MsqgError::config("empty ensemble"));
    }
    if let Some(r) = runs.iter().find(|r| r.failure.is_some()) {
        return Err(MsqgError::numeric(format!(
            "member {} stopped early: {}",
            r.member,
            r.failure.as_ref().map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    let len = runs[0].ledger.records.len();
    if len < 2 || runs.iter().any(|r| r.ledger.records.len() != len) {
        return Err(MsqgError::data("ensemble ledgers differ in length or hold a single record"));
    }
    Ok(())
}

/// Record index at time `t`.
fn record_at(run: &RunOutput, t: f64) -> Result<usize> {
    let rec = &run.ledger.records;
    let dt = rec[1].time - rec[0].time;
    let k = (t / dt).round() as usize;
    if k >= rec.len() || (rec[k].time - t).abs() > 1e-9 + 0.5 * dt {
        return Err(MsqgError::range(format!(
            "no ledger record at t = {t} (ledger ends at {})",
            rec[rec.len() - 1].time
        )));
    }
    Ok(k)
}

/// `Q(t_k) - Q(0) - Σ_{j<k} (t_{j+1} - t_j) S_j` for every record `k`, where
/// `Q` is the quadratic form and `S` the trace term.
pub fn balance_residuals(run: &RunOutput) -> Vec<f64> {
    let rec = &run.ledger.records;
    let mut out = Vec::with_capacity(rec.len());
    let mut integral = 0.0;
    for k in 0..rec.len() {
        if k > 0 {
            integral += (rec[k].time - rec[k - 1].time) * rec[k - 1].trace_term;
        }
        out.push(rec[k].quad_form - rec[0].quad_form - integral);
    }
    out
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// One probe time of the balance certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalanceRow {
    pub time: f64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub residual_mean: f64,
    pub residual_stderr: f64,
    /// Twice the coarse-minus-fine residual gap: the first-order time error
    /// estimate.
    pub allowance: f64,
    pub band: f64,
    pub pass: bool,
}

/// Checks `E Q(t) - Q(0) = ∫ E S dr` at each probe time. `fine` is the same
/// ensemble at half the step and supplies the discretization allowance.
pub fn energy_balance(
    coarse: &[RunOutput],
    fine: Option<&[RunOutput]>,
    probe_times: &[f64],
) -> Result<(CertificateReport, Vec<BalanceRow>)> {
    check_runs(coarse)?;
    if let Some(f) = fine {
        check_runs(f)?;
    }
    let mut rep = CertificateReport::new("energy_balance");
    let sigmas = if coarse.len() < MIN_ENSEMBLE {
        rep.warnings.push(format!(
            "ensemble of {} is below {MIN_ENSEMBLE}; band widened to 3σ",
            coarse.len()
        ));
        3.0
    } else {
        2.0
    };
    rep.meta("ensemble", coarse.len());
    rep.meta("refined", fine.is_some());
    rep.tolerance("sigmas", sigmas);
    let res_c: Vec<Vec<f64>> = coarse.iter().map(balance_residuals).collect();
    let res_f: Option<Vec<Vec<f64>>> = fine.map(|f| f.iter().map(balance_residuals).collect());
    let mut rows = Vec::new();
    for &t in probe_times {
        let k = record_at(&coarse[0], t)?;
        let vals: Vec<f64> = res_c.iter().map(|r| r[k]).collect();
        let (mean, se) = mean_stderr(&vals);
        let lhs: Vec<f64> = coarse
            .iter()
            .map(|r| r.ledger.records[k].quad_form - r.ledger.records[0].quad_form)
            .collect();
        let lhs_mean = mean_stderr(&lhs).0;
        let allowance = match (&res_f, fine) {
            (Some(rf), Some(f)) => {
                let kf = record_at(&f[0], t)?;
                let fm = mean_stderr(&rf.iter().map(|r| r[kf]).collect::<Vec<_>>()).0;
                2.0 * (mean - fm).abs()
            }
            _ => 0.0,
        };
        let band = sigmas * se + allowance;
        // at t = 0 both sides vanish identically
        let pass = mean.abs() <= band || (k == 0 && mean == 0.0);
        let row = BalanceRow {
            time: t,
            lhs_mean,
            rhs_mean: lhs_mean - mean,
            residual_mean: mean,
            residual_stderr: se,
            allowance,
            band,
            pass,
        };
        rep.constant(&format!("t={t}/residual"), mean);
        rep.constant(&format!("t={t}/band"), band);
        rep.check(
            &format!("t={t}"),
            pass,
            format!("residual {mean:.4e} vs band {band:.4e} ({sigmas}σ = {:.4e}, dt allowance {allowance:.4e})", sigmas * se),
        );
        rows.push(row);
    }
    Ok((rep, rows))
}

/// Both sides of the balance for a solver with noise and nonlinearity off,
/// in closed form per mode: `(Q(t) - Q(0), ∫₀ᵗ S dr)`.
pub fn diffusion_balance_closed_form(solver: &Solver, theta0: &SpectralScalarField, t: f64) -> Result<(f64, f64)> {
    let cfg = solver.config();
    if cfg.noise != NoiseDrive::Off || cfg.nonlinearity {
        return Err(MsqgError::config("closed-form balance needs noise and nonlinearity off"));
    }
    let theta = solver.initial_state(theta0, 0)?.theta(solver.lattice());
    let lat = solver.lattice();
    let n = lat.n();
    let green = solver.kernels().green(KernelMode::Regularized);
    let weight = solver.trace_weight();
    let decay = solver.decay();
    let rate = |k: usize| if decay[k] > 0.0 { -decay[k].ln() / cfg.dt } else { 0.0 };
    let lhs = theta.weighted_energy(|i, j| {
        let k = i * n + j;
        green[k] * (-2.0 * rate(k) * t).exp_m1()
    });
    let rhs = theta.weighted_energy(|i, j| {
        let k = i * n + j;
        let r2 = 2.0 * rate(k);
        let time = if r2 > 0.0 { -(-r2 * t).exp_m1() / r2 } else { t };
        weight[k] * time
    });
    Ok((lhs, rhs))
}

/// Budget terms of one ensemble up to `horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetTerms {
    pub horizon: f64,
    /// `sup_t E‖θ_t‖²` in `Ḣ^{-β/2}`.
    pub sup_hdot: f64,
    /// `∫₀ᵀ E‖θ_t‖²` in `H^{-β/2+1-α}`.
    pub dissipation: f64,
    pub initial: f64,
    /// `(sup + dissipation) / initial`; 0 for a zero datum.
    pub constant: f64,
}

pub fn budget_terms(runs: &[RunOutput], horizon: f64) -> Result<BudgetTerms> {
    check_runs(runs)?;
    let k_end = record_at(&runs[0], horizon)?;
    let m = runs.len() as f64;
    let mean = |k: usize, f: &dyn Fn(&crate::solver::LedgerRecord) -> f64| {
        runs.iter().map(|r| f(&r.ledger.records[k])).sum::<f64>() / m
    };
    let hdot = |r: &crate::solver::LedgerRecord| r.hdot_neg * r.hdot_neg;
    let hreg = |r: &crate::solver::LedgerRecord| r.h_reg * r.h_reg;
    let mut sup = 0.0f64;
    let mut integral = 0.0;
    for k in 0..=k_end {
        sup = sup.max(mean(k, &hdot));
        if k > 0 {
            let dt = runs[0].ledger.records[k].time - runs[0].ledger.records[k - 1].time;
            integral += 0.5 * dt * (mean(k, &hreg) + mean(k - 1, &hreg));
        }
    }
    let initial = mean(0, &hdot);
    let constant = if initial > 0.0 { (sup + integral) / initial } else { 0.0 };
    Ok(BudgetTerms {
        horizon,
        sup_hdot: sup,
        dissipation: integral,
        initial,
        constant,
    })
}

/// Regularity budget over ensembles at several `δ`, each read at every
/// horizon. Passes when all constants agree within a factor 2.
pub fn regularity_budget(levels: &[(f64, &[RunOutput])], horizons: &[f64]) -> Result<(CertificateReport, Vec<(f64, BudgetTerms)>)> {
    if levels.is_empty() || horizons.is_empty() {
        return Err(MsqgError::config("budget needs at least one ensemble and one horizon"));
    }
    let mut rep = CertificateReport::new("regularity_budget");
    rep.tolerance("constant_ratio", 2.0);
    rep.meta("dissipation_weight", 1.0);
    let mut rows = Vec::new();
    for &(delta, runs) in levels {
        if runs.len() < MIN_ENSEMBLE {
            rep.warnings.push(format!("δ = {delta}: ensemble of {} is below {MIN_ENSEMBLE}", runs.len()));
        }
        for &t in horizons {
            let terms = budget_terms(runs, t)?;
            rep.constant(&format!("delta={delta}/T={t}/C"), terms.constant);
            rep.constant(&format!("delta={delta}/T={t}/sup"), terms.sup_hdot);
            rep.constant(&format!("delta={delta}/T={t}/dissipation"), terms.dissipation);
            rows.push((delta, terms));
        }
    }
    if rows.iter().all(|(_, b)| b.initial == 0.0) {
        let zero = rows.iter().all(|(_, b)| b.sup_hdot == 0.0 && b.dissipation == 0.0);
        rep.check("zero_datum", zero, "zero datum must keep both budget terms at 0");
        return Ok((rep, rows));
    }
    let cs: Vec<f64> = rows.iter().map(|(_, b)| b.constant).collect();
    let hi = cs.iter().cloned().fold(0.0f64, f64::max);
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.constant("C_max", hi);
    rep.constant("C_min", lo);
    let (wd, wb) = rows
        .iter()
        .max_by(|a, b| a.1.constant.total_cmp(&b.1.constant))
        .map(|(d, b)| (*d, b.horizon))
        .unwrap_or_default();
    rep.check(
        "constant_stable",
        lo > 0.0 && hi / lo <= 2.0,
        format!("C ranges over [{lo:.4}, {hi:.4}]; largest at δ = {wd}, T = {wb}"),
    );
    Ok((rep, rows))
}
