//! Fractional heat kernel of `∂_t + (-Δ)^{β/2}` on `ℝ^d` with Fourier
//! symbol `exp(-(2π|ξ|)^β t)`, its algebraic comparison kernel, and the
//! time integrals that build the regularized Riesz potentials.
//!
//! Self-similarity `p(t, r) = t^{-d/β} f(r t^{-1/β})` reduces everything to
//! the unit-time profile `f`, the isotropic stable density with
//! characteristic function `exp(-|k|^β)`. `f` is evaluated by its
//! convergent power series near 0, its asymptotic series for large
//! argument, and adaptive Hankel quadrature in between.

use std::f64::consts::PI;

use puruspe::{ln_gamma, Jn, Jnu_Ynu};
use serde::Serialize;

use crate::error::{MsqgError, Result};
use crate::quadrature;

/// Relative tolerance of the Hankel quadrature.
pub const HANKEL_TOL: f64 = 1e-8;

const SERIES_MAX_TERMS: usize = 600;
const ASYM_MAX_TERMS: usize = 80;

/// Unit-time profile of the fractional heat kernel in dimension `dim`.
#[derive(Clone, Debug)]
pub struct HeatProfile {
    beta: f64,
    dim: usize,
    small_limit: f64,
    large_limit: f64,
}

struct Series {
    value: f64,
    trusted: bool,
}

impl HeatProfile {
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(MsqgError::config(format!(
                "heat kernel exponent must lie in (0, 2), got {beta}"
            )));
        }
        if dim < 2 {
            return Err(MsqgError::config(format!("dimension must be >= 2, got {dim}")));
        }
        let mut profile = HeatProfile {
            beta,
            dim,
            small_limit: 0.0,
            large_limit: f64::INFINITY,
        };
        let mut s = 0.05;
        while s < 1e3 && profile.small_series(s).trusted {
            profile.small_limit = s;
            s *= 1.05;
        }
        let mut s = 1e4;
        while s > 1e-2 && profile.asymptotic_series(s).trusted {
            profile.large_limit = s;
            s /= 1.05;
        }
        Ok(profile)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Arguments at or below this use the power series.
    pub fn small_limit(&self) -> f64 {
        self.small_limit
    }

    /// Arguments at or above this use the asymptotic series.
    pub fn large_limit(&self) -> f64 {
        self.large_limit
    }

    fn half_dim(&self) -> f64 {
        self.dim as f64 / 2.0
    }

    /// ln of the magnitude of the `j`-th power-series coefficient.
    fn small_coef_ln(&self, j: usize) -> f64 {
        let (b, h) = (self.beta, self.half_dim());
        let jf = j as f64;
        -h * (2.0 * PI).ln() + (-2.0 * jf - h + 1.0) * 2f64.ln() + ln_gamma((2.0 * jf + 2.0 * h) / b)
            - b.ln()
            - ln_gamma(jf + 1.0)
            - ln_gamma(jf + h)
    }

    /// `Σ_j c_j s^{2j + shift} / (2j + shift)` when `integrate`, else `Σ_j c_j s^{2j}`.
    fn small_sum(&self, s: f64, shift: Option<f64>) -> Series {
        let mut sum = 0.0;
        let mut peak = 0.0f64;
        let ln_s = s.ln();
        for j in 0..SERIES_MAX_TERMS {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut ln_mag = self.small_coef_ln(j);
            let power = 2.0 * j as f64 + shift.unwrap_or(0.0);
            if power != 0.0 {
                ln_mag += power * ln_s;
            }
            let mut term = sign * ln_mag.exp();
            if let Some(sh) = shift {
                term /= 2.0 * j as f64 + sh;
            }
            sum += term;
            peak = peak.max(term.abs());
            if s == 0.0 || (j > 2 && term.abs() < 1e-18 * sum.abs()) {
                return Series {
                    value: sum,
                    trusted: peak <= 1e4 * sum.abs() && sum.is_finite(),
                };
            }
        }
        Series {
            value: sum,
            trusted: false,
        }
    }

    fn small_series(&self, s: f64) -> Series {
        self.small_sum(s, None)
    }

    /// ln of the magnitude of the `m`-th asymptotic coefficient, without the sine factor.
    fn asym_coef_ln(&self, m: usize) -> f64 {
        let (b, h) = (self.beta, self.half_dim());
        let mf = m as f64;
        (-h - 1.0) * PI.ln() - ln_gamma(mf + 1.0) + mf * b * 2f64.ln() + ln_gamma((mf * b) / 2.0 + h)
            + ln_gamma(mf * b / 2.0 + 1.0)
    }

    fn asym_sign(&self, m: usize) -> f64 {
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        sign * (PI * m as f64 * self.beta / 2.0).sin()
    }

    /// Optimally truncated asymptotic sum. With `power = Some(p)` the terms
    /// are integrated, `∫_s^∞ t^p · t^{-mβ-d} dt`.
    fn asym_sum(&self, s: f64, power: Option<f64>) -> Series {
        let (b, d) = (self.beta, self.dim as f64);
        let ln_s = s.ln();
        let envelope = |m: usize| -> f64 {
            let e = -(m as f64) * b - d + power.map_or(0.0, |p| p + 1.0);
            let mut v = self.asym_coef_ln(m) + e * ln_s;
            if power.is_some() {
                v -= (-e).ln();
            }
            v.exp()
        };
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        for m in 1..=ASYM_MAX_TERMS {
            let env = envelope(m);
            if env >= prev {
                return Series {
                    value: sum,
                    trusted: env <= 1e-12 * sum.abs() && sum > 0.0,
                };
            }
            sum += self.asym_sign(m) * env;
            prev = env;
        }
        let next = envelope(ASYM_MAX_TERMS + 1);
        Series {
            value: sum,
            trusted: next <= 1e-12 * sum.abs() && sum > 0.0,
        }
    }

    fn asymptotic_series(&self, s: f64) -> Series {
        self.asym_sum(s, None)
    }

    fn bessel(&self, x: f64) -> f64 {
        if self.dim % 2 == 0 {
            Jn((self.dim / 2 - 1) as u32, x)
        } else {
            Jnu_Ynu(self.half_dim() - 1.0, x).0
        }
    }

    /// Profile by Hankel quadrature `(2π)^{-d/2} s^{1-d/2} ∫ e^{-k^β} J_{d/2-1}(ks) k^{d/2} dk`.
    pub fn value_by_quadrature(&self, s: f64) -> Result<f64> {
        let h = self.half_dim();
        let top = 40f64.powf(1.0 / self.beta);
        let b = self.beta;
        if s == 0.0 {
            let v = quadrature::adaptive_breaks(
                |k| (-k.powf(b)).exp() * k.powf(2.0 * h - 1.0),
                &quadrature::graded_oscillatory_breaks(top, 1.0),
                HANKEL_TOL,
                0.0,
            )?;
            return Ok(v.value * 2f64.powf(1.0 - h) / (2.0 * PI).powf(h) / puruspe::gamma(h));
        }
        let period = 2.0 * PI / s;
        let out = quadrature::adaptive_breaks(
            |k| (-k.powf(b)).exp() * self.bessel(k * s) * k.powf(h),
            &quadrature::graded_oscillatory_breaks(top, period),
            HANKEL_TOL,
            0.0,
        )
        .map_err(|e| MsqgError::numeric(format!("heat kernel profile at s = {s:e}, beta = {b}: {e}")))?;
        Ok(out.value * (2.0 * PI).powf(-h) * s.powf(1.0 - h))
    }

    /// Unit-time profile `f(s)`.
    pub fn value(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(MsqgError::domain(format!("profile argument must be finite and >= 0, got {s}")));
        }
        if s <= self.small_limit {
            let ser = self.small_series(s);
            if ser.trusted {
                return Ok(ser.value);
            }
        }
        if s >= self.large_limit {
            let ser = self.asymptotic_series(s);
            if ser.trusted {
                return Ok(ser.value);
            }
        }
        self.value_by_quadrature(s)
    }

    /// Kernel value `p(t, r)`.
    pub fn density(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(MsqgError::domain(format!("time must be positive, got {t}")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(MsqgError::domain(format!("radius must be >= 0, got {r}")));
        }
        let scale = t.powf(1.0 / self.beta);
        Ok(self.value(r / scale)? / scale.powi(self.dim as i32))
    }

    /// `∫_a^b s^power f(s) ds` for `power > -1`; `b` may be infinite when
    /// `power < d + β - 1`.
    pub fn moment(&self, power: f64, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a) {
            return Err(MsqgError::domain(format!("bad moment range [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        let lo = self.small_limit;
        let hi = self.large_limit.max(lo);
        let mut total = 0.0;
        if a < lo {
            let top = b.min(lo);
            let shift = power + 1.0;
            let upper = self.small_sum(top, Some(shift));
            let lower = if a > 0.0 {
                self.small_sum(a, Some(shift)).value
            } else {
                0.0
            };
            total += upper.value - lower;
        }
        let (mid_a, mid_b) = (a.max(lo), b.min(hi));
        if mid_b > mid_a {
            let start = if mid_a > 0.0 { mid_a } else { mid_b * 1e-3 };
            let mut breaks = quadrature::geometric_breaks(start, mid_b, 8);
            if mid_a == 0.0 {
                breaks.insert(0, 0.0);
            }
            let mut err = None;
            let v = quadrature::over_breaks(
                |s| match self.value(s) {
                    Ok(f) => f * s.powf(power),
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                &breaks,
            );
            if let Some(e) = err {
                return Err(e);
            }
            total += v;
        }
        if b > hi {
            let start = a.max(hi);
            let upper = if b.is_finite() {
                self.asym_sum(b, Some(power)).value
            } else {
                0.0
            };
            total += self.asym_sum(start, Some(power)).value - upper;
        }
        Ok(total)
    }
}

/// Fractional heat kernel `p(t, r)` in dimension `d`.
pub fn frac_heat_kernel(t: f64, r: f64, beta: f64, d: usize) -> Result<f64> {
    HeatProfile::new(beta, d)?.density(t, r)
}

/// Comparison kernel `q(t, r) = t (t^{2/β} + r²)^{-(d+β)/2}`.
pub fn comparison_kernel(t: f64, r: f64, beta: f64, d: usize) -> f64 {
    t * (t.powf(2.0 / beta) + r * r).powf(-(d as f64 + beta) / 2.0)
}

/// Constant `c` with `G_β(x) = c |x|^{β-d}` for the symbol `(2π|ξ|)^{-β}` on `ℝ^d`.
pub fn riesz_constant(beta: f64, d: usize) -> f64 {
    let h = d as f64 / 2.0;
    puruspe::gamma(h - beta / 2.0) / (2f64.powf(beta) * PI.powf(h) * puruspe::gamma(beta / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeSample {
    pub t: f64,
    pub r: f64,
    pub p: Option<f64>,
    pub q: f64,
}

/// Pointwise comparison of `p` with `q` over a product grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatKernelProbe {
    pub beta: f64,
    pub dim: usize,
    pub samples: Vec<ProbeSample>,
    /// `[min p/q, max p/q]` over samples that evaluated.
    pub band: [f64; 2],
    pub failures: Vec<String>,
}

impl HeatKernelProbe {
    /// Smallest `C` with `band ⊂ [1/C, C]`.
    pub fn constant(&self) -> f64 {
        self.band[1].max(1.0 / self.band[0])
    }
}

/// Evaluates `p` and `q` on `t_grid × r_grid`; failed samples are recorded.
pub fn heat_kernel_bounds_scan(beta: f64, d: usize, t_grid: &[f64], r_grid: &[f64]) -> Result<HeatKernelProbe> {
    let profile = HeatProfile::new(beta, d)?;
    let mut samples = Vec::with_capacity(t_grid.len() * r_grid.len());
    let mut failures = Vec::new();
    let mut band = [f64::INFINITY, 0.0f64];
    for &t in t_grid {
        for &r in r_grid {
            let q = comparison_kernel(t, r, beta, d);
            let p = match profile.density(t, r) {
                Ok(v) => {
                    let ratio = v / q;
                    band[0] = band[0].min(ratio);
                    band[1] = band[1].max(ratio);
                    Some(v)
                }
                Err(e) => {
                    failures.push(format!("t = {t:e}, r = {r:e}: {e}"));
                    None
                }
            };
            samples.push(ProbeSample { t, r, p, q });
        }
    }
    Ok(HeatKernelProbe {
        beta,
        dim: d,
        samples,
        band,
        failures,
    })
}

/// Coarse versus refined band comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparabilityReport {
    pub beta: f64,
    pub dim: usize,
    pub coarse_band: [f64; 2],
    pub refined_band: [f64; 2],
    pub constant: f64,
    pub failures: usize,
    pub pass: bool,
}

/// Log-spaced grid with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=count)
        .map(|k| lo * 10f64.powf(decades * k as f64 / count as f64))
        .collect()
}

/// Scans the `p/q` band on `[t_lo, t_hi] × [r_lo, r_hi]` at `per_decade`
/// and twice that density; passes when the band is finite, positive and the
/// refined endpoints are within 20% of the coarse ones.
pub fn heat_kernel_comparability(
    beta: f64,
    d: usize,
    t_range: [f64; 2],
    r_range: [f64; 2],
    per_decade: usize,
) -> Result<ComparabilityReport> {
    let span = |r: [f64; 2]| (r[1] / r[0]).log10();
    if span(t_range) < 2.0 - 1e-9 || span(r_range) < 2.0 - 1e-9 {
        return Err(MsqgError::config("comparability scan needs two decades in t and in r"));
    }
    let coarse = heat_kernel_bounds_scan(
        beta,
        d,
        &log_grid(t_range[0], t_range[1], per_decade),
        &log_grid(r_range[0], r_range[1], per_decade),
    )?;
    let refined = heat_kernel_bounds_scan(
        beta,
        d,
        &log_grid(t_range[0], t_range[1], 2 * per_decade),
        &log_grid(r_range[0], r_range[1], 2 * per_decade),
    )?;
    let finite = |b: [f64; 2]| b[0] > 0.0 && b[1].is_finite() && b[0] <= b[1];
    let close = |a: f64, b: f64| (a - b).abs() <= 0.2 * a.abs();
    let pass = finite(coarse.band)
        && finite(refined.band)
        && close(coarse.band[0], refined.band[0])
        && close(coarse.band[1], refined.band[1])
        && coarse.failures.is_empty()
        && refined.failures.is_empty();
    Ok(ComparabilityReport {
        beta,
        dim: d,
        coarse_band: coarse.band,
        refined_band: refined.band,
        constant: refined.constant(),
        failures: coarse.failures.len() + refined.failures.len(),
        pass,
    })
}
