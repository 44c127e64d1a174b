//! Riesz potentials `G_β`, their heat-kernel regularizations `G_β^δ`, the
//! velocity kernels `∇^⊥G`, and pointwise error scans of the regularization.
//!
//! Lattice multipliers live in [`KernelSet`]; continuum radial values used
//! by the certificates live in [`RadialGreen`].

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{MsqgError, Result};
use crate::heat::{riesz_constant, HeatProfile};
use crate::lattice::{Lattice, SpectralScalarField, SpectralVectorField};
use crate::quadrature;

/// `γ(β) = 2^β π Γ(β/2) / Γ((2-β)/2)`, so that `G_β(x) = |x|^{β-2} / γ(β)` in the plane.
pub fn gamma_riesz(beta: f64) -> f64 {
    2f64.powf(beta) * PI * puruspe::gamma(beta / 2.0) / puruspe::gamma((2.0 - beta) / 2.0)
}

/// `(2π r)^{-β}`; 0 at `r = 0`.
pub fn green_exact_multiplier(r: f64, beta: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        (2.0 * PI * r).powf(-beta)
    }
}

/// `(2π r)^{-β} (e^{-(2πr)^β δ} - e^{-(2πr)^β / δ})`; 0 at `r = 0`.
pub fn green_reg_multiplier(r: f64, beta: f64, delta: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let a = (2.0 * PI * r).powf(beta);
    // e^{-aδ} - e^{-a/δ} = -e^{-aδ} expm1(-a(1/δ - δ))
    -(-a * delta).exp() * (-a * (1.0 / delta - delta)).exp_m1() / a
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 1.0 && beta < 2.0) {
        return Err(MsqgError::config(format!("beta must lie in (1, 2), got {beta}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MsqgError::config(format!("kernel delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Which Riesz multiplier to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KernelMode {
    Exact,
    Regularized,
}

/// Exact and regularized Riesz multipliers on a lattice.
#[derive(Clone, Debug)]
pub struct KernelSet {
    beta: f64,
    delta: f64,
    lattice: Lattice,
    green_exact: Vec<f64>,
    green_reg: Vec<f64>,
}

impl KernelSet {
    pub fn new(beta: f64, delta: f64, lattice: &Lattice) -> Result<Self> {
        check_beta(beta)?;
        check_delta(delta)?;
        let n = lattice.n();
        let mut green_exact = vec![0.0; n * n];
        let mut green_reg = vec![0.0; n * n];
        lattice.for_each_mode(|k, i, j| {
            let r = lattice.frequency_norm(i, j);
            green_exact[k] = green_exact_multiplier(r, beta);
            green_reg[k] = green_reg_multiplier(r, beta, delta);
        });
        Ok(KernelSet {
            beta,
            delta,
            lattice: lattice.clone(),
            green_exact,
            green_reg,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn green(&self, mode: KernelMode) -> &[f64] {
        match mode {
            KernelMode::Exact => &self.green_exact,
            KernelMode::Regularized => &self.green_reg,
        }
    }

    /// Regularized velocity multiplier `(2πiξ)^⊥ Ĝ_β^δ(ξ)` at mode `(i, j)`.
    pub fn velocity_multiplier(&self, i: usize, j: usize, mode: KernelMode) -> [Complex64; 2] {
        let zero = Complex64::new(0.0, 0.0);
        if self.lattice.is_nyquist(i, j) {
            return [zero, zero];
        }
        let g = self.green(mode)[i * self.lattice.n() + j];
        let [x1, x2] = self.lattice.frequency(i, j);
        let c = Complex64::new(0.0, 2.0 * PI * g);
        [c * x2, c * (-x1)]
    }

    fn check_lattice(&self, f: &SpectralScalarField) -> Result<()> {
        if f.lattice() != &self.lattice {
            return Err(MsqgError::config("field lattice differs from kernel lattice"));
        }
        Ok(())
    }

    /// `G ∗ f` on the lattice.
    pub fn apply_green(&self, f: &SpectralScalarField, mode: KernelMode) -> Result<SpectralScalarField> {
        self.check_lattice(f)?;
        let g = self.green(mode);
        let n = self.lattice.n();
        Ok(f.map_modes(|i, j, c| c * g[i * n + j]))
    }

    /// `⟨f, G ∗ f⟩`.
    pub fn quadratic_form(&self, f: &SpectralScalarField, mode: KernelMode) -> Result<f64> {
        self.check_lattice(f)?;
        let g = self.green(mode);
        let n = self.lattice.n();
        Ok(f.weighted_energy(|i, j| g[i * n + j]))
    }

    /// `u = ∇^⊥ G ∗ θ` for a mean-zero `θ`.
    pub fn velocity_from_scalar(&self, theta: &SpectralScalarField, mode: KernelMode) -> Result<SpectralVectorField> {
        self.check_lattice(theta)?;
        let scale = theta.energy().sqrt() * self.lattice.box_length();
        if theta.coeffs()[0].norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(MsqgError::domain("velocity requires a mean-zero scalar"));
        }
        let n = self.lattice.n();
        let c = theta.coeffs();
        let mut u1 = vec![Complex64::new(0.0, 0.0); n * n];
        let mut u2 = u1.clone();
        self.lattice.for_each_mode(|k, i, j| {
            let [m1, m2] = self.velocity_multiplier(i, j, mode);
            u1[k] = m1 * c[k];
            u2[k] = m2 * c[k];
        });
        Ok(SpectralVectorField::from_parts_unchecked(
            SpectralScalarField::from_raw(&self.lattice, u1),
            SpectralScalarField::from_raw(&self.lattice, u2),
            true,
        ))
    }
}

/// Spectral gradient `2πiξ f̂`, zero on the Nyquist lines.
pub fn gradient(f: &SpectralScalarField) -> SpectralVectorField {
    let lat = f.lattice().clone();
    let comp = |axis: usize| {
        f.map_modes(|i, j, c| {
            if lat.is_nyquist(i, j) {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, 2.0 * PI * lat.frequency(i, j)[axis])
            }
        })
    };
    SpectralVectorField::from_parts_unchecked(comp(0), comp(1), false)
}

/// Spectral divergence `2πiξ·v̂`, zero on the Nyquist lines.
pub fn divergence(v: &SpectralVectorField) -> SpectralScalarField {
    let lat = v.lattice().clone();
    let a = v.component(0).coeffs();
    let b = v.component(1).coeffs();
    let n = lat.n();
    SpectralScalarField::from_modes(&lat, |i, j| {
        if lat.is_nyquist(i, j) {
            return Complex64::new(0.0, 0.0);
        }
        let k = i * n + j;
        let [x1, x2] = lat.frequency(i, j);
        (a[k] * x1 + b[k] * x2) * Complex64::new(0.0, 2.0 * PI)
    })
}

/// Radial Hessian `eL x̂x̂ + eN (I - x̂x̂)` stored as `[eL, eN]`.
pub type RadialHessian = [f64; 2];

/// Exact Hessian of `G_β` at radius `r`.
pub fn exact_green_hessian(r: f64, beta: f64) -> RadialHessian {
    let c = r.powf(beta - 4.0) / gamma_riesz(beta);
    [(beta - 2.0) * (beta - 3.0) * c, (beta - 2.0) * c]
}

/// Continuum radial values of `G_β^δ` and of the gap `G_β - G_β^δ`.
#[derive(Clone, Debug)]
pub struct RadialGreen {
    beta: f64,
    delta: f64,
    plane: HeatProfile,
    four: HeatProfile,
    six: HeatProfile,
}

impl RadialGreen {
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        check_beta(beta)?;
        check_delta(delta)?;
        Ok(RadialGreen {
            beta,
            delta,
            plane: HeatProfile::new(beta, 2)?,
            four: HeatProfile::new(beta, 4)?,
            six: HeatProfile::new(beta, 6)?,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `∫ p_d(t, r) dt` over `t ∈ [lo, hi]` for the profile of dimension `d`,
    /// written in the self-similar variable `s = r t^{-1/β}`.
    fn time_integral(&self, prof: &HeatProfile, r: f64, lo: f64, hi: f64) -> Result<f64> {
        let b = self.beta;
        let d = prof.dim() as f64;
        let s_lo = if hi.is_infinite() { 0.0 } else { r * hi.powf(-1.0 / b) };
        let s_hi = if lo == 0.0 { f64::INFINITY } else { r * lo.powf(-1.0 / b) };
        Ok(b * r.powf(b - d) * prof.moment(d - b - 1.0, s_lo, s_hi)?)
    }

    fn gap_integral(&self, prof: &HeatProfile, r: f64) -> Result<f64> {
        Ok(self.time_integral(prof, r, 0.0, self.delta)?
            + self.time_integral(prof, r, 1.0 / self.delta, f64::INFINITY)?)
    }

    /// `G_β^δ(r) = ∫_δ^{1/δ} p(t, r) dt`.
    pub fn value_by_time(&self, r: f64) -> Result<f64> {
        self.time_integral(&self.plane, r, self.delta, 1.0 / self.delta)
    }

    /// `G_β^δ(r)` as the Hankel transform of the Fourier multiplier.
    pub fn value_by_fourier(&self, r: f64) -> Result<f64> {
        let (b, d) = (self.beta, self.delta);
        let top = (45.0 / d).powf(1.0 / b);
        let integrand = |k: f64| {
            if k == 0.0 {
                return 0.0;
            }
            let a = k.powf(b);
            -(-a * d).exp() * (-a * (1.0 / d - d)).exp_m1() / a * puruspe::Jn(0, k * r) * k
        };
        let out = quadrature::adaptive_breaks(
            integrand,
            &quadrature::graded_oscillatory_breaks(top, 2.0 * PI / r),
            1e-10,
            0.0,
        )?;
        Ok(out.value / (2.0 * PI))
    }

    /// `G_β(r) = |x|^{β-2} / γ(β)`.
    pub fn exact_value(&self, r: f64) -> f64 {
        r.powf(self.beta - 2.0) / gamma_riesz(self.beta)
    }

    /// Signed radial component of `∇(G_β - G_β^δ)`; the gradient is this times `x̂`.
    pub fn gap_gradient(&self, r: f64) -> Result<f64> {
        Ok(-2.0 * PI * r * self.gap_integral(&self.four, r)?)
    }

    /// `D²(G_β - G_β^δ)` at radius `r`.
    pub fn gap_hessian(&self, r: f64) -> Result<RadialHessian> {
        let i4 = self.gap_integral(&self.four, r)?;
        let i6 = self.gap_integral(&self.six, r)?;
        let en = -2.0 * PI * i4;
        Ok([en + 4.0 * PI * PI * r * r * i6, en])
    }

    /// `D²G_β^δ` at radius `r`.
    pub fn regularized_hessian(&self, r: f64) -> Result<RadialHessian> {
        let gap = self.gap_hessian(r)?;
        let ex = exact_green_hessian(r, self.beta);
        Ok([ex[0] - gap[0], ex[1] - gap[1]])
    }
}

/// One probe radius of the two-route comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RouteSample {
    pub radius: f64,
    pub fourier: f64,
    pub time: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteReport {
    pub beta: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub samples: Vec<RouteSample>,
    pub max_relative_gap: f64,
}

/// Default probe radii for the route comparison.
pub const ROUTE_PROBES: [f64; 6] = [0.05, 0.2, 0.7, 1.5, 3.0, 6.0];

/// Compares the Hankel transform of `Ĝ_β^δ` with the time integral of the
/// heat kernel at each radius; fails with a numeric error beyond `tolerance`.
pub fn cross_validate_routes(beta: f64, delta: f64, radii: &[f64], tolerance: f64) -> Result<RouteReport> {
    let green = RadialGreen::new(beta, delta)?;
    let mut samples = Vec::with_capacity(radii.len());
    for &r in radii {
        let fourier = green.value_by_fourier(r)?;
        let time = green.value_by_time(r)?;
        samples.push(RouteSample {
            radius: r,
            fourier,
            time,
            relative_gap: (fourier - time).abs() / time.abs(),
        });
    }
    let max_relative_gap = samples.iter().map(|s| s.relative_gap).fold(0.0, f64::max);
    let report = RouteReport {
        beta,
        delta,
        tolerance,
        samples,
        max_relative_gap,
    };
    if max_relative_gap > tolerance {
        let worst = report
            .samples
            .iter()
            .max_by(|a, b| a.relative_gap.total_cmp(&b.relative_gap))
            .unwrap();
        return Err(MsqgError::numeric(format!(
            "kernel routes disagree at r = {}: Fourier {:e}, time {:e}, relative gap {:e}",
            worst.radius, worst.fourier, worst.time, worst.relative_gap
        )));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Inner,
    Middle,
    Outer,
}

/// One row of the kernel error scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub regime: Regime,
    pub radius: f64,
    pub gradient: f64,
    pub gradient_envelope: f64,
    pub hessian: f64,
    pub hessian_envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelErrorScan {
    pub beta: f64,
    pub delta: f64,
    pub rows: Vec<ErrorRow>,
    /// Smallest constant making the gradient envelope hold at every radius.
    pub gradient_constant: f64,
    /// Same for the second-derivative envelope.
    pub hessian_constant: f64,
    /// Gradient constant restricted to the middle band.
    pub middle_gradient_constant: f64,
}

impl KernelErrorScan {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| MsqgError::data(format!("csv write failed: {e}"));
        out.write_record(["regime", "quantity", "|x|", "measured", "envelope", "ratio"])
            .map_err(err)?;
        for row in &self.rows {
            let regime = format!("{:?}", row.regime).to_lowercase();
            for (q, m, e) in [
                ("gradient", row.gradient, row.gradient_envelope),
                ("hessian", row.hessian, row.hessian_envelope),
            ] {
                out.write_record([
                    regime.clone(),
                    q.to_string(),
                    row.radius.to_string(),
                    m.to_string(),
                    e.to_string(),
                    (m / e).to_string(),
                ])
                .map_err(err)?;
            }
        }
        out.flush().map_err(|e| MsqgError::data(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Measures `|∇(G_β - G_β^δ)|` and `|D²(G_β - G_β^δ)|` at each radius and
/// compares them with the piecewise envelopes of the regularization error.
pub fn kernel_error_scan(beta: f64, delta: f64, radii: &[f64]) -> Result<KernelErrorScan> {
    let green = RadialGreen::new(beta, delta)?;
    let inner_edge = delta.powf(1.0 / (beta + 3.0));
    let outer_edge = delta.powf(-1.0 / beta);
    let hess_edge = delta.powf(1.0 / (beta + 4.0));
    let regime = |r: f64| {
        if r <= inner_edge {
            Regime::Inner
        } else if r >= outer_edge {
            Regime::Outer
        } else {
            Regime::Middle
        }
    };
    for want in [Regime::Inner, Regime::Middle, Regime::Outer] {
        if !radii.iter().any(|&r| regime(r) == want) {
            return Err(MsqgError::config(format!(
                "radii do not cover the {want:?} regime (edges {inner_edge:e}, {outer_edge:e})"
            )));
        }
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let g = green.gap_gradient(r)?.abs();
        let h = green.gap_hessian(r)?;
        let hn = h[0].abs().max(h[1].abs());
        let reg = regime(r);
        let genv = if reg == Regime::Middle { delta.sqrt() } else { r.powf(beta - 3.0) };
        let henv = delta + if r <= hess_edge { r.powf(beta - 4.0) } else { 0.0 };
        rows.push(ErrorRow {
            regime: reg,
            radius: r,
            gradient: g,
            gradient_envelope: genv,
            hessian: hn,
            hessian_envelope: henv,
        });
    }
    let max_ratio = |f: &dyn Fn(&ErrorRow) -> Option<f64>| rows.iter().filter_map(f).fold(0.0, f64::max);
    Ok(KernelErrorScan {
        beta,
        delta,
        gradient_constant: max_ratio(&|r| Some(r.gradient / r.gradient_envelope)),
        hessian_constant: max_ratio(&|r| Some(r.hessian / r.hessian_envelope)),
        middle_gradient_constant: max_ratio(&|r| {
            (r.regime == Regime::Middle).then_some(r.gradient / r.gradient_envelope)
        }),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelStabilityReport {
    pub scans: Vec<KernelErrorScan>,
    pub gradient_spread: f64,
    pub hessian_spread: f64,
    pub pass: bool,
}

/// Runs [`kernel_error_scan`] for each δ on a common log grid covering every
/// regime; passes when the fitted constants stay within a factor 2.
pub fn kernel_error_stability(beta: f64, deltas: &[f64], per_decade: usize) -> Result<KernelStabilityReport> {
    let dmin = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = deltas.iter().cloned().fold(0.0, f64::max);
    let lo = dmin.powf(1.0 / (beta + 3.0)) / 10.0;
    let hi = dmax.powf(-1.0 / beta).max(dmin.powf(-1.0 / beta)) * 10.0;
    let radii = crate::heat::log_grid(lo, hi, per_decade);
    let scans = deltas
        .iter()
        .map(|&d| kernel_error_scan(beta, d, &radii))
        .collect::<Result<Vec<_>>>()?;
    let spread = |f: &dyn Fn(&KernelErrorScan) -> f64| {
        let v: Vec<f64> = scans.iter().map(f).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let gradient_spread = spread(&|s| s.gradient_constant);
    let hessian_spread = spread(&|s| s.hessian_constant);
    Ok(KernelStabilityReport {
        pass: gradient_spread <= 2.0 && hessian_spread <= 2.0,
        scans,
        gradient_spread,
        hessian_spread,
    })
}

/// Planar Riesz constant through the generic formula; equals `1/γ(β)`.
pub fn planar_riesz_constant(beta: f64) -> f64 {
    riesz_constant(beta, 2)
}
