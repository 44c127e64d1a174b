//! Paired trajectories under one noise realization.
//!
//! Two solutions starting `epsilon0` apart (in `Ḣ^{-β/2}`) are advanced in
//! lockstep; both draw from identical streams and every drawn increment is
//! compared bit for bit. The ledger tracks `D(t) = ‖θ¹ - θ²‖²` in
//! `Ḣ^{-β/2}` together with the dissipation norm, and snapshots allow the
//! nonlinear terms of the difference equation to be evaluated.

use std::hash::{DefaultHasher, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certificates::CertificateReport;
use crate::error::{MsqgError, Result};
use crate::kernels::{gradient, KernelMode, KernelSet};
use crate::lattice::{Lattice, NormKind, SpectralScalarField};
use crate::solver::{target_datum, InitialSpec, NoiseDrive, Solver, SolverConfig, SolverState};

/// Shape of the initial separation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Gaussian bump of width `L/16`, mean removed.
    SmoothBump,
    /// One cosine at about 60% of the dealiasing cutoff.
    HighMode,
    /// Gaussian coefficients over the whole resolved band.
    WhiteBand,
}

impl std::str::FromStr for Perturbation {
    type Err = MsqgError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth_bump" => Ok(Perturbation::SmoothBump),
            "high_mode" => Ok(Perturbation::HighMode),
            "white_band" => Ok(Perturbation::WhiteBand),
            other => Err(MsqgError::config(format!(
                "unknown perturbation {other:?}; expected smooth_bump, high_mode or white_band"
            ))),
        }
    }
}

/// Shift `ε = ½(β/2 - 1/min(p, 2) - α)` used in the bound-shape checks.
pub fn sobolev_shift(alpha: f64, beta: f64, p: f64) -> f64 {
    0.5 * (beta / 2.0 - 1.0 / p.min(2.0) - alpha)
}

/// Exponent `p̃` with `1/p̃ = β/2 - α - ε`.
pub fn tilde_p(alpha: f64, beta: f64, p: f64) -> f64 {
    1.0 / (beta / 2.0 - alpha - sobolev_shift(alpha, beta, p))
}

/// Parameter-window warnings for the uniqueness experiments.
pub fn uniqueness_warnings(cfg: &SolverConfig) -> Vec<String> {
    let (a, b, p) = (cfg.alpha, cfg.beta, cfg.p);
    let mut out = Vec::new();
    if !(a > 0.0 && a < 0.5) {
        out.push(format!("alpha = {a} is outside (0, 1/2)"));
    }
    if !(b > 1.5 && b < 2.0) {
        out.push(format!("beta = {b} is outside (3/2, 2)"));
    }
    if p <= 3.0 / b {
        out.push(format!("p = {p} does not exceed 3/beta = {}", 3.0 / b));
    }
    let q = 1.0 / p.min(2.0);
    if !(2.0 * q - b / 2.0 < a && a < b / 2.0 - q) {
        out.push(format!("alpha = {a} is outside ({}, {})", 2.0 * q - b / 2.0, b / 2.0 - q));
    }
    out
}

/// Unit perturbation in `Ḣ^{-β/2}`: mean-zero, dealiased, no Nyquist content.
pub fn unit_perturbation(kind: Perturbation, lattice: &Lattice, beta: f64, seed: u64) -> Result<SpectralScalarField> {
    let n = lattice.n();
    let l = lattice.box_length();
    let cutoff = lattice.dealias_cutoff();
    let raw = match kind {
        Perturbation::SmoothBump => {
            let w = l / 16.0;
            let values: Vec<f64> = (0..n * n)
                .map(|k| {
                    let x = lattice.point(k / n, k % n);
                    let d2 = (x[0] - 0.5 * l).powi(2) + (x[1] - 0.5 * l).powi(2);
                    (-d2 / (2.0 * w * w)).exp()
                })
                .collect();
            lattice.forward(&values)?
        }
        Perturbation::HighMode => {
            let k = ((0.6 * cutoff as f64) as i64).max(1);
            target_datum(
                &InitialSpec::Modes(vec![crate::solver::ModeTerm {
                    wavenumber: [k, k / 2],
                    cos: 1.0,
                    sin: 0.0,
                }]),
                lattice,
            )?
        }
        Perturbation::WhiteBand => target_datum(
            &InitialSpec::RandomBand {
                k_min: 1.0,
                k_max: cutoff as f64,
                l2_norm: 1.0,
                seed,
            },
            lattice,
        )?,
    };
    let field = raw.dealiased().without_nyquist().without_mean();
    let norm = field.sobolev_norm(NormKind::Homogeneous(-beta / 2.0))?;
    if norm == 0.0 {
        return Err(MsqgError::config("perturbation has no resolved content"));
    }
    Ok(field.scaled(1.0 / norm))
}

/// One row of the difference ledger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairRecord {
    pub step: usize,
    pub time: f64,
    /// `‖θ¹ - θ²‖²` in `Ḣ^{-β/2}`.
    pub d: f64,
    /// `‖θ¹ - θ²‖²` in `H^{-β/2+1-α}`.
    pub h_diff: f64,
    /// `⟨θ, G^δ ∗ θ⟩` of the difference.
    pub quad_form: f64,
}

/// Both states at one time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub first: SpectralScalarField,
    pub second: SpectralScalarField,
}

pub struct PairedRun {
    pub config: SolverConfig,
    pub epsilon0: f64,
    pub perturbation: Perturbation,
    pub member: u64,
    pub records: Vec<PairRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Digests of the increments consumed by each trajectory.
    pub drive_digest: [u64; 2],
    pub failure: Option<MsqgError>,
}

impl PairedRun {
    pub fn snapshot_at(&self, time: f64) -> Result<&Snapshot> {
        let tol = 1e-9 + 0.5 * self.config.dt;
        self.snapshots
            .iter()
            .find(|s| (s.time - time).abs() <= tol)
            .ok_or_else(|| MsqgError::range(format!("no snapshot stored at t = {time}")))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W, terms: &[(f64, ITerms)]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| MsqgError::data(format!("difference ledger csv: {e}"));
        wr.write_record(["time", "D", "H_diff", "I1", "I2", "J"]).map_err(err)?;
        for r in &self.records {
            let t = terms.iter().find(|(t, _)| (t - r.time).abs() < 1e-12).map(|x| x.1);
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            wr.write_record([
                r.time.to_string(),
                r.d.to_string(),
                r.h_diff.to_string(),
                cell(t.map(|x| x.i1)),
                cell(t.map(|x| x.i2)),
                cell(t.map(|x| x.j)),
            ])
            .map_err(err)?;
        }
        wr.flush().map_err(|e| MsqgError::data(format!("difference ledger csv: {e}")))?;
        Ok(())
    }
}

fn digest(h: &mut DefaultHasher, drive: &[Vec<Complex64>; 2]) {
    for part in drive {
        for c in part {
            h.write_u64(c.re.to_bits());
            h.write_u64(c.im.to_bits());
        }
    }
}

fn difference_record(solver: &Solver, a: &SolverState, b: &SolverState) -> Result<PairRecord> {
    let lat = solver.lattice();
    let cfg = solver.config();
    let diff = a.theta(lat).sub(&b.theta(lat))?;
    Ok(PairRecord {
        step: a.step,
        time: a.time,
        d: diff.sobolev_norm(NormKind::Homogeneous(-cfg.beta / 2.0))?.powi(2),
        h_diff: diff
            .sobolev_norm(NormKind::Inhomogeneous(-cfg.beta / 2.0 + 1.0 - cfg.alpha))?
            .powi(2),
        quad_form: solver.kernels().quadratic_form(&diff, KernelMode::Regularized)?,
    })
}

/// Runs `θ¹(0) = base` and `θ²(0) = base + epsilon0 · perturbation` on noise
/// stream `member`, storing a snapshot every `snapshot_every` steps.
pub fn paired_run(
    solver: &Solver,
    base: &SpectralScalarField,
    epsilon0: f64,
    perturbation: Perturbation,
    member: u64,
    snapshot_every: usize,
) -> Result<PairedRun> {
    let cfg = solver.config().clone();
    let lat = solver.lattice();
    let unit = unit_perturbation(perturbation, lat, cfg.beta, cfg.seed ^ 0x5eed)?;
    let mut first = solver.initial_state(base, member)?;
    let mut second = solver.initial_state(&base.add(&unit.scaled(epsilon0))?, member)?;
    let mut hashes = [DefaultHasher::new(), DefaultHasher::new()];
    let steps = cfg.steps()?;
    let every = snapshot_every.max(1);
    let mut run = PairedRun {
        config: cfg,
        epsilon0,
        perturbation,
        member,
        records: vec![difference_record(solver, &first, &second)?],
        snapshots: Vec::new(),
        drive_digest: [0, 0],
        failure: None,
    };
    let snap = |a: &SolverState, b: &SolverState| Snapshot {
        time: a.time,
        first: a.theta(lat),
        second: b.theta(lat),
    };
    run.snapshots.push(snap(&first, &second));
    for k in 1..=steps {
        let d1 = solver.draw_drive(&mut first)?;
        let d2 = solver.draw_drive(&mut second)?;
        if d1 != d2 {
            return Err(MsqgError::numeric(format!(
                "paired trajectories drew different increments at step {k}"
            )));
        }
        digest(&mut hashes[0], &d1);
        digest(&mut hashes[1], &d2);
        let (save_a, save_b) = (first.clone(), second.clone());
        let stepped = solver
            .advance(&mut first, d1)
            .and_then(|_| solver.advance(&mut second, d2));
        if let Err(e) = stepped {
            first = save_a;
            second = save_b;
            run.snapshots.push(snap(&first, &second));
            run.failure = Some(e);
            break;
        }
        run.records.push(difference_record(solver, &first, &second)?);
        if k % every == 0 || k == steps {
            run.snapshots.push(snap(&first, &second));
        }
    }
    run.drive_digest = [hashes[0].finish(), hashes[1].finish()];
    Ok(run)
}

/// Paired runs on `count` consecutive streams, in member order.
pub fn paired_ensemble(
    solver: &Solver,
    base: &SpectralScalarField,
    epsilon0: f64,
    perturbation: Perturbation,
    count: usize,
    snapshot_every: usize,
) -> Result<Vec<PairedRun>> {
    (0..count as u64)
        .into_par_iter()
        .map(|m| paired_run(solver, base, epsilon0, perturbation, m, snapshot_every))
        .collect()
}

/// The same pair with the noise on and off.
pub fn noise_ablation(
    config: &SolverConfig,
    base: &SpectralScalarField,
    epsilon0: f64,
    perturbation: Perturbation,
    snapshot_every: usize,
) -> Result<(PairedRun, PairedRun)> {
    let noisy = Solver::new(SolverConfig {
        noise: NoiseDrive::Kraichnan,
        ..config.clone()
    })?;
    let quiet = Solver::new(SolverConfig {
        noise: NoiseDrive::Off,
        ..config.clone()
    })?;
    Ok((
        paired_run(&noisy, base, epsilon0, perturbation, 0, snapshot_every)?,
        paired_run(&quiet, base, epsilon0, perturbation, 0, snapshot_every)?,
    ))
}

/// Integrands of the difference equation at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ITerms {
    /// `⟨∇G^δ∗θ, (K∗θ¹) θ⟩`.
    pub i1: f64,
    /// `⟨∇G^δ∗θ, (K∗θ) θ²⟩`.
    pub i2: f64,
    /// Trace quadratic form of the difference.
    pub j: f64,
}

/// `⟨∇G∗θ, (K∗v) w⟩` by lattice quadrature, with the potential in `potential`
/// and the velocity kernel in `velocity`. Also returns `∫|∇G∗θ||K∗v||w|`.
pub fn transport_pairing(
    kernels: &KernelSet,
    theta: &SpectralScalarField,
    v: &SpectralScalarField,
    w: &SpectralScalarField,
    potential: KernelMode,
    velocity: KernelMode,
) -> Result<(f64, f64)> {
    let lat = kernels.lattice();
    let grad = gradient(&kernels.apply_green(theta, potential)?);
    let u = kernels.velocity_from_scalar(v, velocity)?;
    let (g1, g2) = (grad.component(0).to_physical(), grad.component(1).to_physical());
    let (u1, u2) = (u.component(0).to_physical(), u.component(1).to_physical());
    let wp = w.to_physical();
    let mut value = 0.0;
    let mut scale = 0.0;
    for k in 0..wp.len() {
        value += (g1[k] * u1[k] + g2[k] * u2[k]) * wp[k];
        scale += g1[k].hypot(g2[k]) * u1[k].hypot(u2[k]) * wp[k].abs();
    }
    let h2 = lat.cell_area();
    Ok((value * h2, scale * h2))
}

/// `I₁`, `I₂` and `J` at a stored snapshot.
pub fn i_terms_probe(solver: &Solver, run: &PairedRun, at_time: f64) -> Result<ITerms> {
    let s = run.snapshot_at(at_time)?;
    i_terms(solver, &s.first, &s.second)
}

pub fn i_terms(solver: &Solver, first: &SpectralScalarField, second: &SpectralScalarField) -> Result<ITerms> {
    let ks = solver.kernels();
    let theta = first.sub(second)?;
    let n = solver.lattice().n();
    let weight = solver.trace_weight();
    Ok(ITerms {
        i1: transport_pairing(ks, &theta, first, &theta, KernelMode::Regularized, KernelMode::Exact)?.0,
        i2: transport_pairing(ks, &theta, &theta, second, KernelMode::Regularized, KernelMode::Exact)?.0,
        j: theta.weighted_energy(|i, j| weight[i * n + j]),
    })
}

/// `|⟨∇G_β∗θ, (K_β∗θ) w⟩|` relative to `∫|∇G_β∗θ||K_β∗θ||w|`; vanishes because
/// the exact velocity is the perpendicular gradient of the same potential.
pub fn exact_kernel_cancellation(kernels: &KernelSet, theta: &SpectralScalarField, w: &SpectralScalarField) -> Result<f64> {
    let (v, s) = transport_pairing(kernels, theta, theta, w, KernelMode::Exact, KernelMode::Exact)?;
    Ok(if s > 0.0 { v.abs() / s } else { 0.0 })
}

/// Global constant in `|I₁| ≤ C ‖θ¹‖_{L^p̃} ‖θ‖²_{Ḣ^{-β/2+1-α-ε}}` over
/// `count` random pairs with random band limits.
#[derive(Clone, Debug, Serialize)]
pub struct BoundShape {
    pub constant: f64,
    pub p_tilde: f64,
    pub epsilon: f64,
    /// `|I₁| / (‖θ¹‖ ‖θ‖²)` per sample.
    pub ratios: Vec<f64>,
}

pub fn i1_bound_shape(solver: &Solver, count: usize, seed: u64) -> Result<BoundShape> {
    use rand::Rng;
    let cfg = solver.config();
    let lat = solver.lattice();
    let eps = sobolev_shift(cfg.alpha, cfg.beta, cfg.p);
    let pt = tilde_p(cfg.alpha, cfg.beta, cfg.p);
    let s = -cfg.beta / 2.0 + 1.0 - cfg.alpha - eps;
    let cutoff = lat.dealias_cutoff() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(count);
    for _ in 0..count {
        let field = |rng: &mut ChaCha8Rng| {
            let top = rng.random_range(2.0..=cutoff);
            target_datum(
                &InitialSpec::RandomBand {
                    k_min: 1.0,
                    k_max: top,
                    l2_norm: rng.random_range(0.1..10.0),
                    seed: rng.random(),
                },
                lat,
            )
            .map(|f| f.dealiased().without_nyquist())
        };
        let first = field(&mut rng)?;
        let second = field(&mut rng)?;
        let theta = first.sub(&second)?;
        let i1 = i_terms(solver, &first, &second)?.i1;
        let lp = lat.lp_norm(&first.to_physical(), pt);
        let hs = theta.sobolev_norm(NormKind::Homogeneous(s))?.powi(2);
        ratios.push(i1.abs() / (lp * hs));
    }
    Ok(BoundShape {
        constant: ratios.iter().cloned().fold(0.0, f64::max),
        p_tilde: pt,
        epsilon: eps,
        ratios,
    })
}

/// Exponential envelope and dissipation ledger of a paired ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct GronwallFit {
    /// Every difference stayed exactly zero.
    pub trivial: bool,
    pub times: Vec<f64>,
    pub mean_d: Vec<f64>,
    pub stderr_d: Vec<f64>,
    /// Smallest `C` with `E D(t) ≤ D(0) e^{Ct}`; may be negative.
    pub envelope_rate: f64,
    /// `max(envelope_rate, 0)`, the constant used in the ledger.
    pub c_growth: f64,
    /// Largest `c` with `E D(t) - D(0) + c ∫E H - C ∫E D ≤ 0` at every record.
    pub c_dissipation: f64,
}

pub fn gronwall_fit(runs: &[PairedRun]) -> Result<GronwallFit> {
    if runs.is_empty() {
        return Err(MsqgError::config("Grönwall fit needs at least one paired run"));
    }
    if let Some(r) = runs.iter().find(|r| r.failure.is_some()) {
        return Err(MsqgError::numeric(format!(
            "pair {} stopped early: {}",
            r.member,
            r.failure.as_ref().map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    let len = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let m = runs.len() as f64;
    let mut times = Vec::with_capacity(len);
    let mut mean_d = Vec::with_capacity(len);
    let mut stderr_d = Vec::with_capacity(len);
    let mut mean_h = Vec::with_capacity(len);
    for k in 0..len {
        let d: Vec<f64> = runs.iter().map(|r| r.records[k].d).collect();
        let mu = d.iter().sum::<f64>() / m;
        let var = if runs.len() > 1 {
            d.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        times.push(runs[0].records[k].time);
        mean_d.push(mu);
        stderr_d.push((var / m).sqrt());
        mean_h.push(runs.iter().map(|r| r.records[k].h_diff).sum::<f64>() / m);
    }
    if mean_d.iter().all(|&d| d == 0.0) {
        return Ok(GronwallFit {
            trivial: true,
            times,
            mean_d,
            stderr_d,
            envelope_rate: 0.0,
            c_growth: 0.0,
            c_dissipation: 0.0,
        });
    }
    let d0 = mean_d[0];
    let envelope_rate = (1..len)
        .map(|k| (mean_d[k] / d0).ln() / times[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let c_growth = envelope_rate.max(0.0);
    let (mut int_d, mut int_h) = (0.0, 0.0);
    let mut c_dissipation = f64::INFINITY;
    for k in 1..len {
        let dt = times[k] - times[k - 1];
        int_d += 0.5 * dt * (mean_d[k] + mean_d[k - 1]);
        int_h += 0.5 * dt * (mean_h[k] + mean_h[k - 1]);
        if int_h > 0.0 {
            c_dissipation = c_dissipation.min((c_growth * int_d - (mean_d[k] - d0)) / int_h);
        }
    }
    Ok(GronwallFit {
        trivial: false,
        times,
        mean_d,
        stderr_d,
        envelope_rate,
        c_growth,
        c_dissipation,
    })
}

/// Envelope certificate: positive dissipation constant at both steps and an
/// envelope rate that agrees between `dt` and `dt/2`.
pub fn certify_gronwall(coarse: &GronwallFit, fine: &GronwallFit) -> CertificateReport {
    let mut rep = CertificateReport::new("gronwall");
    rep.tolerance("rate_relative", 0.25);
    rep.tolerance("rate_absolute", 0.01);
    if coarse.trivial && fine.trivial {
        rep.meta("outcome", "trivially unique at this resolution");
        return rep;
    }
    for (tag, f) in [("dt", coarse), ("dt/2", fine)] {
        rep.constant(&format!("{tag}/envelope_rate"), f.envelope_rate);
        rep.constant(&format!("{tag}/c_dissipation"), f.c_dissipation);
        rep.check(
            &format!("{tag}/finite_rate"),
            f.envelope_rate.is_finite(),
            format!("envelope rate {}", f.envelope_rate),
        );
        rep.check(
            &format!("{tag}/dissipation"),
            f.c_dissipation > 0.0 && f.c_dissipation.is_finite(),
            format!("c = {:.4e} with C = {:.4e}", f.c_dissipation, f.c_growth),
        );
    }
    let gap = (coarse.envelope_rate - fine.envelope_rate).abs();
    let allowed = 0.25 * coarse.envelope_rate.abs().max(fine.envelope_rate.abs()) + 0.01;
    rep.check(
        "rate_stable",
        gap <= allowed,
        format!(
            "rates {:.4} (dt) and {:.4} (dt/2) differ by {gap:.4}, allowed {allowed:.4}",
            coarse.envelope_rate, fine.envelope_rate
        ),
    );
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::prepare_initial_data;

    fn config(t_end: f64) -> SolverConfig {
        SolverConfig {
            n: 32,
            box_length: 16.0,
            alpha: 0.3,
            beta: 1.7,
            delta: 0.1,
            p: 2.0,
            dt: 5e-4,
            t_end,
            ensemble_size: 4,
            ..SolverConfig::reference()
        }
    }

    fn base(s: &Solver) -> SpectralScalarField {
        prepare_initial_data(
            &InitialSpec::RandomBand {
                k_min: 1.0,
                k_max: 5.0,
                l2_norm: 1.0,
                seed: 21,
            },
            s.config().delta,
            s.config().beta,
            s.lattice(),
        )
        .unwrap()
        .field
    }

    #[test]
    fn shift_and_exponent_at_reference_parameters() {
        assert!((sobolev_shift(0.3, 1.7, 2.0) - 0.025).abs() < 1e-12);
        let pt = tilde_p(0.3, 1.7, 2.0);
        assert!(pt > 1.0 && pt < 2.0);
        assert!(uniqueness_warnings(&config(0.01)).is_empty());
    }

    #[test]
    fn zero_separation_stays_zero_bitwise() {
        let s = Solver::new(config(0.01)).unwrap();
        let run = paired_run(&s, &base(&s), 0.0, Perturbation::WhiteBand, 0, 5).unwrap();
        assert!(run.records.iter().all(|r| r.d == 0.0 && r.h_diff == 0.0));
        assert_eq!(run.drive_digest[0], run.drive_digest[1]);
        let fit = gronwall_fit(&[run]).unwrap();
        assert!(fit.trivial);
    }

    #[test]
    fn perturbations_have_unit_norm() {
        let lat = Lattice::new(32, 16.0).unwrap();
        for kind in [Perturbation::SmoothBump, Perturbation::HighMode, Perturbation::WhiteBand] {
            let p = unit_perturbation(kind, &lat, 1.7, 3).unwrap();
            let norm = p.sobolev_norm(NormKind::Homogeneous(-0.85)).unwrap();
            assert!((norm - 1.0).abs() < 1e-12, "{kind:?}");
            assert_eq!(p.coeffs()[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn initial_separation_matches_epsilon() {
        let s = Solver::new(config(0.002)).unwrap();
        let run = paired_run(&s, &base(&s), 1e-3, Perturbation::SmoothBump, 0, 1).unwrap();
        assert!((run.records[0].d - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn small_separation_scales_quadratically() {
        let s = Solver::new(config(0.02)).unwrap();
        let b = base(&s);
        let a = paired_run(&s, &b, 1e-4, Perturbation::WhiteBand, 2, 10).unwrap();
        let h = paired_run(&s, &b, 5e-5, Perturbation::WhiteBand, 2, 10).unwrap();
        for (x, y) in a.records.iter().zip(&h.records) {
            let r = x.d / y.d;
            assert!((r - 4.0).abs() < 0.8, "t {}: ratio {r}", x.time);
        }
    }

    #[test]
    fn exact_kernel_pairing_cancels() {
        let s = Solver::new(config(0.01)).unwrap();
        let lat = s.lattice();
        let theta = unit_perturbation(Perturbation::WhiteBand, lat, 1.7, 8).unwrap();
        let w = base(&s);
        let rel = exact_kernel_cancellation(s.kernels(), &theta, &w).unwrap();
        assert!(rel < 1e-8, "{rel}");
        // with the regularized potential the pairing no longer cancels
        let (v, sc) =
            transport_pairing(s.kernels(), &theta, &theta, &w, KernelMode::Regularized, KernelMode::Exact).unwrap();
        assert!(v.abs() / sc > 1e-6);
    }

    #[test]
    fn swapping_states_preserves_difference_terms() {
        let s = Solver::new(config(0.01)).unwrap();
        let run = paired_run(&s, &base(&s), 0.1, Perturbation::SmoothBump, 1, 10).unwrap();
        let snap = run.snapshot_at(0.01).unwrap();
        let fwd = i_terms(&s, &snap.first, &snap.second).unwrap();
        let rev = i_terms(&s, &snap.second, &snap.first).unwrap();
        assert!((fwd.j - rev.j).abs() <= 1e-14 * fwd.j.abs());
        // I₁ + I₂ is the full nonlinear pairing, odd in θ and bilinear in the states
        let theta = snap.first.sub(&snap.second).unwrap();
        let pair = |v: &SpectralScalarField| {
            transport_pairing(s.kernels(), &theta, v, v, KernelMode::Regularized, KernelMode::Exact).unwrap().0
        };
        let direct = pair(&snap.first) - pair(&snap.second);
        assert!((fwd.i1 + fwd.i2 - direct).abs() <= 1e-10 * direct.abs().max(1e-300));
        assert!(matches!(run.snapshot_at(0.0033), Err(MsqgError::Range(_))));
    }

    #[test]
    fn trace_term_uses_the_certificate_symbol() {
        let s = Solver::new(config(0.01)).unwrap();
        let theta = unit_perturbation(Perturbation::WhiteBand, s.lattice(), 1.7, 2).unwrap();
        let zero = SpectralScalarField::zeros(s.lattice());
        let t = i_terms(&s, &theta, &zero).unwrap();
        let direct = s.trace_symbol().quadratic_form(&theta).unwrap();
        assert!((t.j - direct).abs() <= 1e-12 * direct.abs());
        let z = i_terms(&s, &zero, &zero).unwrap();
        assert_eq!((z.i1, z.i2, z.j), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_difference_does_not_grow() {
        let cfg = SolverConfig {
            nonlinearity: false,
            ..config(0.05)
        };
        let s = Solver::new(cfg).unwrap();
        // the bump sits well inside the band where the trace weight is negative
        let runs = paired_ensemble(&s, &base(&s), 0.1, Perturbation::SmoothBump, 8, 10).unwrap();
        let fit = gronwall_fit(&runs).unwrap();
        assert!(fit.envelope_rate <= 1e-3, "{}", fit.envelope_rate);
        assert!(fit.c_dissipation > 0.0);
    }

    #[test]
    fn ablation_returns_both_ledgers() {
        let s = Solver::new(config(0.005)).unwrap();
        let (noisy, quiet) = noise_ablation(&config(0.005), &base(&s), 0.1, Perturbation::HighMode, 5).unwrap();
        assert_eq!(noisy.records.len(), quiet.records.len());
        assert_ne!(noisy.records.last().unwrap().d, quiet.records.last().unwrap().d);
    }
}
