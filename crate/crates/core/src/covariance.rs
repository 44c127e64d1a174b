//! Kraichnan covariance: mollified spectrum, Itô constant, real-space
//! covariance, structure functions and Gaussian noise synthesis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{MsqgError, Result};
use crate::lattice::{Lattice, SpectralScalarField, SpectralVectorField};
use crate::quadrature;

/// Generator used for every noise stream.
pub type NoiseRng = ChaCha8Rng;

/// Stream `index` of an ensemble seeded by `master`.
pub fn stream_rng(master: u64, index: u64) -> NoiseRng {
    ChaCha8Rng::seed_from_u64(master ^ index)
}

/// Smooth radial transition: 1 on `[0, 1]`, 0 on `[2, ∞)`.
pub fn transition(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        let a = f(2.0 - r);
        a / (a + f(r - 1.0))
    }
}

/// Fourier profile of the mollifier at radius `r`.
pub fn mollifier_hat(r: f64, delta: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(MsqgError::domain(format!("mollifier radius must be >= 0, got {r}")));
    }
    check_delta(delta)?;
    Ok(transition(delta * r))
}

/// `⟨r⟩ = (1 + r²)^{1/2}`.
pub fn bracket(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

/// Radial density `⟨r⟩^{-2-2α}` of the unmollified spectrum.
pub fn raw_density(r: f64, alpha: f64) -> f64 {
    (1.0 + r * r).powf(-1.0 - alpha)
}

/// Radial density `⟨r⟩^{-2-2α} χ(δ r)²` of the mollified spectrum.
pub fn density(r: f64, alpha: f64, delta: f64) -> f64 {
    let m = transition(delta * r);
    if m == 0.0 {
        0.0
    } else {
        raw_density(r, alpha) * m * m
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MsqgError::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(MsqgError::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// Spectral matrix `g(ξ) (I - ξξᵀ/|ξ|²)`; zero at `ξ = 0`.
pub fn spectrum_at(xi: [f64; 2], alpha: f64, delta: f64) -> Result<[[f64; 2]; 2]> {
    if !(xi[0].is_finite() && xi[1].is_finite()) {
        return Err(MsqgError::data("frequency must be finite"));
    }
    check_alpha(alpha)?;
    check_delta(delta)?;
    let r2 = xi[0] * xi[0] + xi[1] * xi[1];
    if r2 == 0.0 {
        return Ok([[0.0; 2]; 2]);
    }
    let g = density(r2.sqrt(), alpha, delta);
    let off = -g * xi[0] * xi[1] / r2;
    Ok([[g * xi[1] * xi[1] / r2, off], [off, g * xi[0] * xi[0] / r2]])
}

/// Radial quadrature settings for the continuum Itô constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialQuadrature {
    pub panels: usize,
    pub cutoff: f64,
}

impl RadialQuadrature {
    pub fn for_delta(delta: f64) -> Self {
        RadialQuadrature {
            panels: 64,
            cutoff: 2.0 / delta,
        }
    }
}

/// `½ ∫_{ℝ²} ⟨ξ⟩^{-2-2α} χ(δ|ξ|)² dξ` by radial Gauss-Legendre quadrature.
///
/// The inner disc `|ξ| ≤ 1/δ` is integrated in the variable `ln(1 + ρ)`,
/// the transition annulus in `ρ`.
pub fn c_delta_continuum(alpha: f64, delta: f64, spec: RadialQuadrature) -> Result<f64> {
    check_alpha(alpha)?;
    check_delta(delta)?;
    if spec.cutoff < 2.0 / delta {
        return Err(MsqgError::config(format!(
            "radial cutoff {} is below the spectral support radius {}",
            spec.cutoff,
            2.0 / delta
        )));
    }
    if spec.panels == 0 {
        return Err(MsqgError::config("radial quadrature needs at least one panel"));
    }
    let inner_top = (1.0 / delta).ln_1p();
    let inner = quadrature::composite(
        |u| {
            let rho = u.exp_m1();
            density(rho, alpha, delta) * rho * (1.0 + rho)
        },
        0.0,
        inner_top,
        spec.panels,
    );
    let outer = quadrature::composite(
        |rho| density(rho, alpha, delta) * rho,
        1.0 / delta,
        2.0 / delta,
        spec.panels,
    );
    Ok(std::f64::consts::PI * (inner + outer))
}

/// Which lattice modes carry noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpectralBand {
    /// Every non-Nyquist, nonzero mode.
    Full,
    /// Only modes kept by the two-thirds rule.
    Dealiased,
}

/// One lattice mode carrying noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveMode {
    pub i: usize,
    pub j: usize,
    pub xi: [f64; 2],
    pub density: f64,
}

/// Kraichnan covariance sampled on a lattice.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    alpha: f64,
    delta: f64,
    lattice: Lattice,
    band: SpectralBand,
    spectrum: Vec<f64>,
    active: Vec<ActiveMode>,
    c_delta_lattice: f64,
}

impl CovarianceModel {
    pub fn new(alpha: f64, delta: f64, lattice: &Lattice, band: SpectralBand) -> Result<Self> {
        check_alpha(alpha)?;
        check_delta(delta)?;
        let n = lattice.n();
        let mut spectrum = vec![0.0; n * n];
        let mut active = Vec::new();
        let mut total = 0.0;
        lattice.for_each_mode(|k, i, j| {
            if k == 0 || lattice.is_nyquist(i, j) {
                return;
            }
            if band == SpectralBand::Dealiased && !lattice.is_resolved(i, j) {
                return;
            }
            let g = density(lattice.frequency_norm(i, j), alpha, delta);
            if g > 0.0 {
                spectrum[k] = g;
                total += g;
                active.push(ActiveMode {
                    i,
                    j,
                    xi: lattice.frequency(i, j),
                    density: g,
                });
            }
        });
        let c_delta_lattice = 0.5 * total * lattice.spectral_weight();
        Ok(CovarianceModel {
            alpha,
            delta,
            lattice: lattice.clone(),
            band,
            spectrum,
            active,
            c_delta_lattice,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn band(&self) -> SpectralBand {
        self.band
    }

    /// Per-mode scalar density, storage order.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Modes with nonzero density, frequency-lexicographic (storage) order.
    pub fn active_modes(&self) -> &[ActiveMode] {
        &self.active
    }

    /// Half the trace of the lattice covariance at the origin.
    pub fn c_delta_lattice(&self) -> f64 {
        self.c_delta_lattice
    }

    /// Gap between the lattice Itô constant and its continuum value; the
    /// torus fidelity diagnostic reported alongside every run.
    pub fn tail_diagnostic(&self) -> Result<TailDiagnostic> {
        let continuum = c_delta_continuum(self.alpha, self.delta, RadialQuadrature::for_delta(self.delta))?;
        Ok(TailDiagnostic {
            c_delta_lattice: self.c_delta_lattice,
            c_delta_continuum: continuum,
            undelta_limit: std::f64::consts::PI / (2.0 * self.alpha),
            relative_gap: (self.c_delta_lattice - continuum) / continuum,
        })
    }

    /// Coefficient array of the covariance component `(a, b)`.
    pub fn component_spectrum(&self, a: usize, b: usize) -> SpectralScalarField {
        let lat = &self.lattice;
        SpectralScalarField::from_modes(lat, |i, j| {
            let g = self.spectrum[i * lat.n() + j];
            if g == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let xi = lat.frequency(i, j);
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            let p = if a == b { 1.0 - xi[a] * xi[a] / r2 } else { -xi[0] * xi[1] / r2 };
            Complex64::new(g * p, 0.0)
        })
    }

    /// Covariance components `[Q11, Q12, Q22]` at every grid point.
    pub fn covariance_grid(&self) -> [Vec<f64>; 3] {
        [
            self.component_spectrum(0, 0).to_physical(),
            self.component_spectrum(0, 1).to_physical(),
            self.component_spectrum(1, 1).to_physical(),
        ]
    }

    /// Covariance matrix at an arbitrary point by direct mode summation.
    pub fn covariance_real(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        let (mut q11, mut q12, mut q22) = (0.0, 0.0, 0.0);
        for m in &self.active {
            let r2 = m.xi[0] * m.xi[0] + m.xi[1] * m.xi[1];
            let c = m.density * (tau * (m.xi[0] * x[0] + m.xi[1] * x[1])).cos() / r2;
            q11 += c * m.xi[1] * m.xi[1];
            q22 += c * m.xi[0] * m.xi[0];
            q12 -= c * m.xi[0] * m.xi[1];
        }
        let w = self.lattice.spectral_weight();
        [[q11 * w, q12 * w], [q12 * w, q22 * w]]
    }

    /// Longitudinal and transverse structure values along the first axis,
    /// with power-law fits of their deficits.
    pub fn structure_functions(&self) -> Result<StructureReport> {
        let lat = &self.lattice;
        let n = lat.n();
        let h = lat.spacing();
        let lo = 4.0 * self.delta;
        let hi = (lat.box_length() / 8.0).min(1.0);
        let reach_lo = self.delta.max(h);
        let reach_hi = lat.box_length() / 4.0;
        if reach_hi < 10.0 * reach_lo || hi <= lo {
            return Err(MsqgError::config(format!(
                "structure fit needs a decade of radii between delta and L/4; achievable range is [{reach_lo:e}, {reach_hi:e}] ({:.2} decades), fit window [{lo:e}, {hi:e}]",
                (reach_hi / reach_lo).log10()
            )));
        }
        let q11 = self.component_spectrum(0, 0).to_physical();
        let q22 = self.component_spectrum(1, 1).to_physical();
        let reference = q11[0];
        let mut radii = Vec::new();
        let mut b_l = Vec::new();
        let mut b_n = Vec::new();
        for m in 1..n / 2 {
            radii.push(m as f64 * h);
            b_l.push(q11[m * n]);
            b_n.push(q22[m * n]);
        }
        let window: Vec<usize> = (0..radii.len()).filter(|&k| radii[k] >= lo && radii[k] <= hi).collect();
        if window.len() < 3 {
            return Err(MsqgError::config(format!(
                "fit window [{lo:e}, {hi:e}] holds only {} lattice radii",
                window.len()
            )));
        }
        let two_alpha = 2.0 * self.alpha;
        let fit = |vals: &[f64]| -> Result<(f64, f64)> {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &k in &window {
                let d = reference - vals[k];
                if d <= 0.0 {
                    return Err(MsqgError::numeric(format!(
                        "non-positive structure deficit {d:e} at R = {}",
                        radii[k]
                    )));
                }
                xs.push(radii[k].ln());
                ys.push(d.ln());
            }
            let amp = (ys.iter().zip(&xs).map(|(y, x)| y - two_alpha * x).sum::<f64>() / xs.len() as f64).exp();
            let (slope, _) = least_squares(&xs, &ys);
            Ok((amp, slope))
        };
        let (beta_l, slope_l) = fit(&b_l)?;
        let (beta_n, slope_n) = fit(&b_n)?;
        Ok(StructureReport {
            radii,
            b_l_values: b_l,
            b_n_values: b_n,
            reference,
            fit_window: [lo, hi],
            beta_l_fit: beta_l,
            beta_n_fit: beta_n,
            ratio: beta_n / beta_l,
            slope_l,
            slope_n,
        })
    }

    /// Draws one divergence-free Gaussian increment with covariance `dt · Q`.
    pub fn sample_noise_increment(&self, dt: f64, rng: &mut NoiseRng) -> Result<SpectralVectorField> {
        let n = self.lattice.n();
        let zero = Complex64::new(0.0, 0.0);
        let mut w1 = vec![zero; n * n];
        let mut w2 = vec![zero; n * n];
        self.fill_noise_increment(dt, rng, &mut w1, &mut w2)?;
        Ok(SpectralVectorField::from_parts_unchecked(
            SpectralScalarField::from_raw(&self.lattice, w1),
            SpectralScalarField::from_raw(&self.lattice, w2),
            true,
        ))
    }

    /// Writes the two coefficient arrays of a noise increment into caller
    /// buffers. Inactive modes are left untouched, so buffers should start
    /// zeroed. Draw order matches [`Self::sample_noise_increment`].
    pub fn fill_noise_increment(&self, dt: f64, rng: &mut NoiseRng, w1: &mut [Complex64], w2: &mut [Complex64]) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MsqgError::domain(format!("time step must be positive, got {dt}")));
        }
        let lat = &self.lattice;
        let n = lat.n();
        if w1.len() != n * n || w2.len() != n * n {
            return Err(MsqgError::config("noise buffers do not match the lattice"));
        }
        let scale = lat.box_length() * dt.sqrt();
        for m in &self.active {
            let k = m.i * n + m.j;
            let (ci, cj) = lat.conjugate_index(m.i, m.j);
            let kc = ci * n + cj;
            if kc < k {
                continue;
            }
            let x: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            let zeta = Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2;
            let r = m.xi[0].hypot(m.xi[1]);
            let amp = zeta * (scale * m.density.sqrt() / r);
            w1[k] = amp * m.xi[1];
            w2[k] = amp * (-m.xi[0]);
            w1[kc] = w1[k].conj();
            w2[kc] = w2[k].conj();
        }
        Ok(())
    }
}

/// Comparison of lattice and continuum Itô constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailDiagnostic {
    pub c_delta_lattice: f64,
    pub c_delta_continuum: f64,
    pub undelta_limit: f64,
    pub relative_gap: f64,
}

/// Structure values at lattice radii along one axis plus deficit fits.
///
/// Deficits are measured from `reference`, the lattice covariance at the
/// origin, and fitted as `β R^{2α}` over `fit_window`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub radii: Vec<f64>,
    pub b_l_values: Vec<f64>,
    pub b_n_values: Vec<f64>,
    pub reference: f64,
    pub fit_window: [f64; 2],
    pub beta_l_fit: f64,
    pub beta_n_fit: f64,
    pub ratio: f64,
    /// Free log-log slope of the longitudinal deficit.
    pub slope_l: f64,
    /// Free log-log slope of the transverse deficit.
    pub slope_n: f64,
}

impl StructureReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| MsqgError::data(format!("csv write failed: {e}"));
        out.write_record(["R", "B_L", "B_N"]).map_err(err)?;
        for k in 0..self.radii.len() {
            out.serialize((self.radii[k], self.b_l_values[k], self.b_n_values[k]))
                .map_err(err)?;
        }
        out.flush().map_err(|e| MsqgError::data(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
