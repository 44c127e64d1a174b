//! Pseudo-spectral Euler-Maruyama solver for the regularized stochastic
//! equation `dθ + u·∇θ dt + ∘dW·∇θ = 0`, `u = ∇^⊥ G^δ ∗ θ`, written in Itô
//! form with the matching correction applied as an exact exponential factor.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::covariance::{stream_rng, CovarianceModel, NoiseRng, SpectralBand};
use crate::error::{MsqgError, Result};
use crate::kernels::{KernelMode, KernelSet};
use crate::lattice::{Lattice, NormKind, SpectralScalarField};
use crate::trace::{TraceSymbol, Truncation};

/// Damping used for the Itô-Stratonovich correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ItoCorrection {
    /// Per-mode rate `R(ζ)/2` of the truncated noise; equal to the isotropic
    /// rate wherever every noise target of `ζ` stays in the band.
    Galerkin,
    /// `(c/2)(2π|ζ|)²` with `c` half the trace of the lattice `Q(0)`.
    Isotropic,
}

/// What drives the transport term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum NoiseDrive {
    Kraichnan,
    Off,
    /// A single deterministic mode `amplitude · ξ^⊥/|ξ| · cos(2πξ·x)` with
    /// `ξ = wavenumber / L`, used as a frozen velocity.
    Frozen { wavenumber: [i64; 2], amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub n: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// Exponent of the extra `L^p` norm tracked in the ledger.
    pub p: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Largest admitted per-step displacement in grid cells.
    pub cfl_safety: f64,
    pub seed: u64,
    pub ensemble_size: usize,
    pub nonlinearity: bool,
    pub diffusion: bool,
    pub noise: NoiseDrive,
    pub correction: ItoCorrection,
}

impl SolverConfig {
    /// Configuration used by the conservation checks.
    pub fn reference() -> Self {
        SolverConfig {
            n: 128,
            box_length: 32.0,
            alpha: 0.5,
            beta: 1.5,
            delta: 0.1,
            p: 1.8,
            dt: 2e-4,
            t_end: 0.2,
            cfl_safety: 0.5,
            seed: 1,
            ensemble_size: 32,
            nonlinearity: true,
            diffusion: true,
            noise: NoiseDrive::Kraichnan,
            correction: ItoCorrection::Galerkin,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(MsqgError::config(format!(
                "t_end = {} is not a whole number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        if !open(self.alpha, 0.0, 1.0) {
            return Err(MsqgError::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !open(self.beta, 1.0, 2.0) {
            return Err(MsqgError::config(format!("beta must lie in (1, 2), got {}", self.beta)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(MsqgError::config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(MsqgError::config(format!("p must be at least 1, got {}", self.p)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(MsqgError::config("dt and t_end must be positive and finite"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety.is_finite()) {
            return Err(MsqgError::config(format!("cfl_safety must be positive, got {}", self.cfl_safety)));
        }
        if self.ensemble_size == 0 {
            return Err(MsqgError::config("ensemble_size must be at least 1"));
        }
        if let NoiseDrive::Frozen { wavenumber, amplitude } = self.noise {
            if wavenumber == [0, 0] || !amplitude.is_finite() {
                return Err(MsqgError::config("frozen mode needs a nonzero wavenumber and finite amplitude"));
            }
        }
        self.steps()?;
        Lattice::new(self.n, self.box_length)?;
        Ok(())
    }

    /// Parameters outside the window where pathwise uniqueness is expected.
    /// These are advisory; the solver runs regardless.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (a, b, p) = (self.alpha, self.beta, self.p);
        if !(1.0 - b / 2.0 < a && a < b / 2.0) {
            out.push(format!("alpha = {a} is outside ({}, {})", 1.0 - b / 2.0, b / 2.0));
        }
        let p_min = (2.0 / (1.0 + b / 2.0 - a)).max(4.0 / (b + 1.0));
        if !(p > p_min && p <= 2.0) {
            out.push(format!("p = {p} is outside ({p_min}, 2]"));
        }
        out
    }
}

/// One row of the per-step ledger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerRecord {
    pub step: usize,
    pub time: f64,
    pub l1: f64,
    pub l2: f64,
    pub lp: f64,
    /// `‖θ‖` in `Ḣ^{-β/2}`.
    pub hdot_neg: f64,
    /// `‖θ‖` in `H^{-β/2+1-α}`.
    pub h_reg: f64,
    /// `⟨θ, G^δ ∗ θ⟩`.
    pub quad_form: f64,
    /// `Σ S(ζ)|θ̂(ζ)|²/L²` for the symbol the scheme realizes.
    pub trace_term: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub records: Vec<LedgerRecord>,
}

impl EnergyLedger {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r).map_err(|e| MsqgError::data(format!("ledger csv: {e}")))?;
        }
        wr.flush().map_err(|e| MsqgError::data(format!("ledger csv: {e}")))?;
        Ok(())
    }

    /// Largest relative excess of the `L^p` norm over its initial value;
    /// zero when the norm never rises.
    pub fn lp_defect(&self) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        if first.lp == 0.0 {
            return 0.0;
        }
        self.records
            .iter()
            .map(|r| (r.lp - first.lp) / first.lp)
            .fold(0.0, f64::max)
    }

    /// Trapezoid integral of a column over time.
    pub fn integrate(&self, column: impl Fn(&LedgerRecord) -> f64) -> f64 {
        self.records
            .windows(2)
            .map(|w| 0.5 * (w[1].time - w[0].time) * (column(&w[0]) + column(&w[1])))
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    coeffs: Vec<Complex64>,
    pub time: f64,
    pub step: usize,
    rng: NoiseRng,
}

impl SolverState {
    pub fn theta(&self, lattice: &Lattice) -> SpectralScalarField {
        SpectralScalarField::from_raw(lattice, self.coeffs.clone())
    }
}

pub struct RunOutput {
    pub member: u64,
    pub ledger: EnergyLedger,
    pub final_state: SolverState,
    /// Set when a step failed; the ledger then ends at the last good state.
    pub failure: Option<MsqgError>,
}

pub struct Solver {
    config: SolverConfig,
    lattice: Lattice,
    kernels: KernelSet,
    covariance: CovarianceModel,
    trace: TraceSymbol,
    /// `exp(-damping · dt)` per mode.
    decay: Vec<f64>,
    trace_weight: Vec<f64>,
    velocity: Vec<[Complex64; 2]>,
    frozen: Option<[Vec<Complex64>; 2]>,
    hdot_weight: Vec<f64>,
    hreg_weight: Vec<f64>,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let lattice = Lattice::new(config.n, config.box_length)?;
        let kernels = KernelSet::new(config.beta, config.delta, &lattice)?;
        let covariance = CovarianceModel::new(config.alpha, config.delta, &lattice, SpectralBand::Dealiased)?;
        let trace = TraceSymbol::new(&covariance, &kernels, KernelMode::Regularized, Truncation::Dealiased)?;
        let n = config.n;
        let green = kernels.green(KernelMode::Regularized);
        let c = covariance.c_delta_lattice();
        let noisy = config.noise == NoiseDrive::Kraichnan;
        let mut decay = vec![0.0; n * n];
        let mut trace_weight = vec![0.0; n * n];
        let mut velocity = vec![[Complex64::new(0.0, 0.0); 2]; n * n];
        let mut hdot_weight = vec![0.0; n * n];
        let mut hreg_weight = vec![0.0; n * n];
        let s_hreg = -config.beta / 2.0 + 1.0 - config.alpha;
        lattice.for_each_mode(|k, i, j| {
            let r = lattice.frequency_norm(i, j);
            if k != 0 {
                hdot_weight[k] = r.powf(-config.beta);
            }
            hreg_weight[k] = (1.0 + r * r).powf(s_hreg);
            if !lattice.is_resolved(i, j) {
                return;
            }
            velocity[k] = kernels.velocity_multiplier(i, j, KernelMode::Regularized);
            let rate = match config.correction {
                ItoCorrection::Galerkin => 0.5 * trace.transfer()[k],
                ItoCorrection::Isotropic => 0.5 * c * (2.0 * PI * r).powi(2),
            };
            let rate = if config.diffusion { rate } else { 0.0 };
            // the scheme's symbol: kept noise transfers (if any) against its own damping
            trace_weight[k] = if noisy {
                trace.symbol()[k] + green[k] * (trace.transfer()[k] - 2.0 * rate)
            } else {
                -2.0 * rate * green[k]
            };
            decay[k] = (-rate * config.dt).exp();
        });
        let frozen = match config.noise {
            NoiseDrive::Frozen { wavenumber, amplitude } => Some(frozen_mode(&lattice, wavenumber, amplitude)?),
            _ => None,
        };
        Ok(Solver {
            config,
            lattice,
            kernels,
            covariance,
            trace,
            decay,
            trace_weight,
            velocity,
            frozen,
            hdot_weight,
            hreg_weight,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    pub fn covariance(&self) -> &CovarianceModel {
        &self.covariance
    }

    pub fn trace_symbol(&self) -> &TraceSymbol {
        &self.trace
    }

    /// Per-mode weight of the ledger's trace term.
    pub fn trace_weight(&self) -> &[f64] {
        &self.trace_weight
    }

    /// Per-mode factor `exp(-damping · dt)` applied after each explicit update.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn initial_state(&self, theta0: &SpectralScalarField, member: u64) -> Result<SolverState> {
        if theta0.lattice() != &self.lattice {
            return Err(MsqgError::config("initial datum lives on a different lattice"));
        }
        let scale = theta0.energy().sqrt() * self.lattice.box_length();
        if theta0.coeffs()[0].norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(MsqgError::domain("initial datum must be mean-zero"));
        }
        let clean = theta0.dealiased().without_nyquist().without_mean();
        Ok(SolverState {
            coeffs: clean.into_coeffs(),
            time: 0.0,
            step: 0,
            rng: stream_rng(self.config.seed, member),
        })
    }

    /// Ledger row for the current state, given its physical samples.
    fn record(&self, state: &SolverState, physical: &[f64]) -> LedgerRecord {
        let w = self.lattice.spectral_weight();
        let mut sums = [0.0; 5];
        let green = self.kernels.green(KernelMode::Regularized);
        for (k, c) in state.coeffs.iter().enumerate() {
            let e = c.norm_sqr();
            if e == 0.0 {
                continue;
            }
            sums[0] += e;
            sums[1] += e * self.hdot_weight[k];
            sums[2] += e * self.hreg_weight[k];
            sums[3] += e * green[k];
            sums[4] += e * self.trace_weight[k];
        }
        LedgerRecord {
            step: state.step,
            time: state.time,
            l1: self.lattice.lp_norm(physical, 1.0),
            l2: (sums[0] * w).sqrt(),
            lp: self.lattice.lp_norm(physical, self.config.p),
            hdot_neg: (sums[1] * w).sqrt(),
            h_reg: (sums[2] * w).sqrt(),
            quad_form: sums[3] * w,
            trace_term: sums[4] * w,
        }
    }

    /// Advances one step. Returns the physical samples of the state the
    /// step started from.
    pub fn step(&self, state: &mut SolverState) -> Result<Vec<f64>> {
        let drive = self.draw_drive(state)?;
        self.advance(state, drive)
    }

    /// External displacement over one step (noise increment or frozen
    /// mode times `dt`), consuming the state's noise stream.
    pub fn draw_drive(&self, state: &mut SolverState) -> Result<[Vec<Complex64>; 2]> {
        let n = self.config.n;
        let dt = self.config.dt;
        let zero = Complex64::new(0.0, 0.0);
        let mut v1 = vec![zero; n * n];
        let mut v2 = vec![zero; n * n];
        match self.config.noise {
            NoiseDrive::Kraichnan => self.covariance.fill_noise_increment(dt, &mut state.rng, &mut v1, &mut v2)?,
            NoiseDrive::Frozen { .. } => {
                let [f1, f2] = self.frozen.as_ref().expect("frozen mode prepared");
                for k in 0..n * n {
                    v1[k] = f1[k] * dt;
                    v2[k] = f2[k] * dt;
                }
            }
            NoiseDrive::Off => {}
        }
        Ok([v1, v2])
    }

    /// Advances one step with a given external displacement.
    pub fn advance(&self, state: &mut SolverState, drive: [Vec<Complex64>; 2]) -> Result<Vec<f64>> {
        let n = self.config.n;
        let dt = self.config.dt;
        let lat = &self.lattice;
        let zero = Complex64::new(0.0, 0.0);
        let [mut v1, mut v2] = drive;
        if v1.len() != n * n || v2.len() != n * n {
            return Err(MsqgError::config("drive arrays do not match the lattice"));
        }
        let theta = lat.inverse_real(&state.coeffs);
        if self.config.nonlinearity {
            for (k, c) in state.coeffs.iter().enumerate() {
                if c.re != 0.0 || c.im != 0.0 {
                    let [m1, m2] = self.velocity[k];
                    v1[k] += m1 * c * dt;
                    v2[k] += m2 * c * dt;
                }
            }
        }
        // both components are real, so one complex transform carries them
        let packed: Vec<Complex64> = v1.iter().zip(&v2).map(|(a, b)| a + Complex64::new(0.0, 1.0) * b).collect();
        let disp = lat.inverse_complex(&packed);
        let h = lat.spacing();
        let max_disp = disp.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cfl = max_disp / h;
        if !cfl.is_finite() {
            return Err(MsqgError::numeric(format!("non-finite velocity at t = {}", state.time)));
        }
        if cfl > self.config.cfl_safety {
            // noise displacement scales like √dt, so shrink quadratically
            let ratio = self.config.cfl_safety / cfl;
            return Err(MsqgError::StepRejected {
                time: state.time,
                cfl,
                limit: self.config.cfl_safety,
                suggested_dt: dt * ratio * ratio,
            });
        }
        let flux: Vec<Complex64> = disp.iter().zip(&theta).map(|(d, t)| d * *t).collect();
        let flux_hat = lat.forward_complex(flux);
        let mut next = vec![zero; n * n];
        let half = Complex64::new(0.5, 0.0);
        let minus_half_i = Complex64::new(0.0, -0.5);
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if !lat.is_resolved(i, j) || lat.is_nyquist(i, j) {
                    continue;
                }
                let (ci, cj) = lat.conjugate_index(i, j);
                let zc = flux_hat[ci * n + cj].conj();
                let f1 = (flux_hat[k] + zc) * half;
                let f2 = (flux_hat[k] - zc) * minus_half_i;
                let [x1, x2] = lat.frequency(i, j);
                let div = (f1 * x1 + f2 * x2) * two_pi_i;
                next[k] = (state.coeffs[k] - div) * self.decay[k];
            }
        }
        if next.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(MsqgError::numeric(format!(
                "non-finite coefficient after step {} (t = {})",
                state.step + 1,
                state.time + dt
            )));
        }
        state.coeffs = next;
        state.step += 1;
        state.time = state.step as f64 * dt;
        Ok(theta)
    }

    /// Runs one ensemble member to `t_end`, recording every step.
    pub fn run(&self, theta0: &SpectralScalarField, member: u64) -> Result<RunOutput> {
        let mut state = self.initial_state(theta0, member)?;
        let steps = self.config.steps()?;
        let mut ledger = EnergyLedger::default();
        let mut failure = None;
        for _ in 0..steps {
            let before = state.clone();
            match self.step(&mut state) {
                Ok(phys) => ledger.records.push(self.record(&before, &phys)),
                Err(e) => {
                    state = before;
                    let phys = self.lattice.inverse_real(&state.coeffs);
                    ledger.records.push(self.record(&state, &phys));
                    failure = Some(e);
                    break;
                }
            }
        }
        if failure.is_none() {
            let phys = self.lattice.inverse_real(&state.coeffs);
            ledger.records.push(self.record(&state, &phys));
        }
        Ok(RunOutput {
            member,
            ledger,
            final_state: state,
            failure,
        })
    }

    /// Runs `ensemble_size` members in parallel; member `m` uses noise
    /// stream `m`. Output is in member order.
    pub fn run_ensemble(&self, theta0: &SpectralScalarField) -> Result<Vec<RunOutput>> {
        (0..self.config.ensemble_size as u64)
            .into_par_iter()
            .map(|m| self.run(theta0, m))
            .collect()
    }
}

fn frozen_mode(lat: &Lattice, wavenumber: [i64; 2], amplitude: f64) -> Result<[Vec<Complex64>; 2]> {
    let n = lat.n() as i64;
    let cutoff = lat.dealias_cutoff();
    if wavenumber.iter().any(|k| k.abs() > cutoff) {
        return Err(MsqgError::config(format!("frozen wavenumber {wavenumber:?} is outside the resolved band")));
    }
    let l = lat.box_length();
    let xi = [wavenumber[0] as f64 / l, wavenumber[1] as f64 / l];
    let r = xi[0].hypot(xi[1]);
    let dir = [xi[1] / r, -xi[0] / r];
    let nn = lat.n();
    let mut out = [vec![Complex64::new(0.0, 0.0); nn * nn], vec![Complex64::new(0.0, 0.0); nn * nn]];
    // cos(2πξ·x) has coefficient L²/2 at ±ξ
    for sign in [1i64, -1] {
        let i = (sign * wavenumber[0]).rem_euclid(n) as usize;
        let j = (sign * wavenumber[1]).rem_euclid(n) as usize;
        for a in 0..2 {
            out[a][i * nn + j] = Complex64::new(0.5 * l * l * amplitude * dir[a], 0.0);
        }
    }
    Ok(out)
}

/// One term `c cos(2π k·x/L) + s sin(2π k·x/L)` of an analytic datum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeTerm {
    pub wavenumber: [i64; 2],
    pub cos: f64,
    pub sin: f64,
}

/// Initial datum description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum InitialSpec {
    /// Gaussian coefficients on `k_min <= |k| <= k_max` (lattice units),
    /// rescaled to the given `L²` norm.
    RandomBand { k_min: f64, k_max: f64, l2_norm: f64, seed: u64 },
    Modes(Vec<ModeTerm>),
    /// Coefficient dump in the MSQG binary format.
    File(PathBuf),
}

/// Solver-ready datum and its distance to the target.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub field: SpectralScalarField,
    /// `‖θ₀^δ - θ₀‖` in `Ḣ^{-β/2}`.
    pub truncation_error: f64,
}

/// Builds the target datum on `lattice` without any truncation.
pub fn target_datum(spec: &InitialSpec, lattice: &Lattice) -> Result<SpectralScalarField> {
    let n = lattice.n();
    let l = lattice.box_length();
    let field = match spec {
        InitialSpec::RandomBand { k_min, k_max, l2_norm, seed } => {
            if !(k_min <= k_max && *l2_norm > 0.0) {
                return Err(MsqgError::config("random band needs k_min <= k_max and a positive norm"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let (ci, cj) = lattice.conjugate_index(i, j);
                    let kc = ci * n + cj;
                    let m = (lattice.wavenumber(i) as f64).hypot(lattice.wavenumber(j) as f64);
                    if kc <= k || m < *k_min || m > *k_max || lattice.is_nyquist(i, j) {
                        continue;
                    }
                    let x: f64 = StandardNormal.sample(&mut rng);
                    let y: f64 = StandardNormal.sample(&mut rng);
                    coeffs[k] = Complex64::new(x, y);
                    coeffs[kc] = coeffs[k].conj();
                }
            }
            let f = SpectralScalarField::new(lattice, coeffs)?;
            let e = f.energy().sqrt();
            if e == 0.0 {
                return Err(MsqgError::config("random band contains no lattice modes"));
            }
            f.scaled(l2_norm / e)
        }
        InitialSpec::Modes(terms) => {
            let ni = n as i64;
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
            for t in terms {
                if t.wavenumber == [0, 0] {
                    if t.cos != 0.0 {
                        return Err(MsqgError::domain("initial datum must be mean-zero"));
                    }
                    continue;
                }
                if t.wavenumber.iter().any(|k| 2 * k.abs() >= ni) {
                    return Err(MsqgError::config(format!("mode {:?} is not below the Nyquist index", t.wavenumber)));
                }
                // c cos + s sin = ½(c - i s) e^{+} + ½(c + i s) e^{-}, times L²
                let w = 0.5 * l * l;
                let i = t.wavenumber[0].rem_euclid(ni) as usize;
                let j = t.wavenumber[1].rem_euclid(ni) as usize;
                let ic = (-t.wavenumber[0]).rem_euclid(ni) as usize;
                let jc = (-t.wavenumber[1]).rem_euclid(ni) as usize;
                coeffs[i * n + j] += Complex64::new(t.cos, -t.sin) * w;
                coeffs[ic * n + jc] += Complex64::new(t.cos, t.sin) * w;
            }
            SpectralScalarField::new(lattice, coeffs)?
        }
        InitialSpec::File(path) => {
            let file = std::fs::File::open(path).map_err(|e| MsqgError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let f = SpectralScalarField::read_msqg(std::io::BufReader::new(file))?;
            if f.lattice() != lattice {
                return Err(MsqgError::config(format!(
                    "{} holds a {}-point lattice of side {}, expected {} of side {}",
                    path.display(),
                    f.lattice().n(),
                    f.lattice().box_length(),
                    n,
                    l
                )));
            }
            f
        }
    };
    let scale = field.energy().sqrt() * l;
    if field.coeffs()[0].norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(MsqgError::domain("initial datum must be mean-zero"));
    }
    Ok(field)
}

/// Target datum truncated to `|ξ| <= 1/δ` and to the solver band.
pub fn prepare_initial_data(spec: &InitialSpec, delta: f64, beta: f64, lattice: &Lattice) -> Result<InitialData> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(MsqgError::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    let target = target_datum(spec, lattice)?;
    let radius = 1.0 / delta;
    let field = target
        .map_modes(|i, j, c| if lattice.frequency_norm(i, j) <= radius { c } else { Complex64::new(0.0, 0.0) })
        .dealiased()
        .without_nyquist()
        .without_mean();
    let truncation_error = field.sub(&target)?.sobolev_norm(NormKind::Homogeneous(-beta / 2.0))?;
    Ok(InitialData { field, truncation_error })
}

/// Per-record ensemble mean and standard error of a ledger column.
pub fn ensemble_column(runs: &[RunOutput], column: impl Fn(&LedgerRecord) -> f64) -> Vec<(f64, f64)> {
    let len = runs.iter().map(|r| r.ledger.records.len()).min().unwrap_or(0);
    let m = runs.len() as f64;
    (0..len)
        .map(|k| {
            let vals: Vec<f64> = runs.iter().map(|r| column(&r.ledger.records[k])).collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = if runs.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            (mean, (var / m).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: NoiseDrive) -> SolverConfig {
        SolverConfig {
            n: 32,
            box_length: 16.0,
            dt: 1e-3,
            t_end: 0.02,
            ensemble_size: 2,
            noise,
            ..SolverConfig::reference()
        }
    }

    fn datum(lat: &Lattice) -> SpectralScalarField {
        prepare_initial_data(
            &InitialSpec::RandomBand {
                k_min: 1.0,
                k_max: 4.0,
                l2_norm: 1.0,
                seed: 3,
            },
            0.1,
            1.5,
            lat,
        )
        .unwrap()
        .field
    }

    #[test]
    fn off_drive_without_nonlinearity_or_diffusion_is_stationary() {
        let cfg = SolverConfig {
            nonlinearity: false,
            diffusion: false,
            ..small(NoiseDrive::Off)
        };
        let s = Solver::new(cfg).unwrap();
        let th = datum(s.lattice());
        let out = s.run(&th, 0).unwrap();
        let end = out.final_state.theta(s.lattice());
        assert!(end.sub(&th).unwrap().energy().sqrt() < 1e-14);
        assert_eq!(out.ledger.records.len(), 21);
    }

    #[test]
    fn pure_diffusion_matches_exponential_factor() {
        let cfg = SolverConfig {
            nonlinearity: false,
            ..small(NoiseDrive::Off)
        };
        let s = Solver::new(cfg).unwrap();
        let th = datum(s.lattice());
        let out = s.run(&th, 0).unwrap();
        let end = out.final_state.theta(s.lattice());
        for (k, (a, b)) in end.coeffs().iter().zip(th.coeffs()).enumerate() {
            let want = b * s.decay()[k].powi(20);
            assert!((a - want).norm() <= 1e-12 * b.norm().max(1e-300), "mode {k}");
        }
        assert!(s.decay().iter().any(|&d| d < 1.0));
    }

    #[test]
    fn deterministic_quadratic_form_defect_is_first_order() {
        let drift = |dt: f64| {
            let s = Solver::new(SolverConfig {
                dt,
                diffusion: false,
                ..small(NoiseDrive::Off)
            })
            .unwrap();
            let th = datum(s.lattice()).scaled(50.0);
            let r = s.run(&th, 0).unwrap().ledger.records;
            (r.last().unwrap().quad_form - r[0].quad_form) / r[0].quad_form
        };
        let (a, b) = (drift(1e-3), drift(5e-4));
        assert!(a.abs() < 1e-2 && (a / b - 2.0).abs() < 0.2, "{a} {b}");
    }

    #[test]
    fn members_are_reproducible_and_distinct() {
        let s = Solver::new(small(NoiseDrive::Kraichnan)).unwrap();
        let th = datum(s.lattice());
        let a = s.run(&th, 0).unwrap();
        let b = s.run(&th, 0).unwrap();
        let c = s.run(&th, 1).unwrap();
        assert_eq!(a.final_state.coeffs, b.final_state.coeffs);
        assert_ne!(a.final_state.coeffs, c.final_state.coeffs);
    }

    #[test]
    fn cfl_violation_rejects_with_smaller_step() {
        let cfg = SolverConfig {
            cfl_safety: 1e-6,
            ..small(NoiseDrive::Kraichnan)
        };
        let s = Solver::new(cfg).unwrap();
        let th = datum(s.lattice());
        let out = s.run(&th, 0).unwrap();
        match out.failure {
            Some(MsqgError::StepRejected { suggested_dt, .. }) => assert!(suggested_dt < 1e-3),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(out.ledger.records.len(), 1);
    }

    #[test]
    fn analytic_datum_with_mean_is_rejected() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let spec = InitialSpec::Modes(vec![ModeTerm {
            wavenumber: [0, 0],
            cos: 1.0,
            sin: 0.0,
        }]);
        assert!(matches!(prepare_initial_data(&spec, 0.5, 1.5, &lat), Err(MsqgError::Domain(_))));
    }

    #[test]
    fn analytic_datum_matches_samples() {
        let lat = Lattice::new(16, 2.0).unwrap();
        let spec = InitialSpec::Modes(vec![ModeTerm {
            wavenumber: [1, -2],
            cos: 0.7,
            sin: -0.4,
        }]);
        let f = target_datum(&spec, &lat).unwrap().to_physical();
        for i in 0..16 {
            for j in 0..16 {
                let [x, y] = lat.point(i, j);
                let ph = 2.0 * PI * (x - 2.0 * y) / 2.0;
                let want = 0.7 * ph.cos() - 0.4 * ph.sin();
                assert!((f[i * 16 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn range_warnings_flag_outside_window() {
        let mut c = SolverConfig::reference();
        assert!(c.range_warnings().is_empty());
        c.alpha = 0.9;
        c.p = 1.1;
        assert_eq!(c.range_warnings().len(), 2);
    }
}
