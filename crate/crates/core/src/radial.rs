//! Continuum covariance of the Kraichnan field as radial functions.
//!
//! With `Q(x) = B_L(r) x̂x̂ + B_N(r)(I - x̂x̂)` and `Q(0) = c I`, the deficits
//! `c - B_L` and `c - B_N` are Hankel-type integrals of the radial density:
//! `2π ∫ g(ρ) (½ - J₁(z)/z) ρ dρ` and `2π ∫ g(ρ) (½ - J₀(z) + J₁(z)/z) ρ dρ`
//! with `z = 2πρr`.

use std::f64::consts::PI;

use puruspe::Jn;
use rayon::prelude::*;

use crate::covariance::{density, raw_density};
use crate::error::{MsqgError, Result};
use crate::quadrature;

/// Radial Kraichnan covariance, exact (`delta = None`) or mollified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCovariance {
    pub alpha: f64,
    pub delta: Option<f64>,
}

impl RadialCovariance {
    pub fn exact(alpha: f64) -> Self {
        RadialCovariance { alpha, delta: None }
    }

    pub fn mollified(alpha: f64, delta: f64) -> Self {
        RadialCovariance {
            alpha,
            delta: Some(delta),
        }
    }

    fn g(&self, rho: f64) -> f64 {
        match self.delta {
            None => raw_density(rho, self.alpha),
            Some(d) => density(rho, self.alpha, d),
        }
    }

    /// `[c - B_L(r), c - B_N(r)]`.
    pub fn deficits(&self, r: f64) -> [f64; 2] {
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let period = 1.0 / r;
        let knee = period / (2.0 * PI);
        let support = match self.delta {
            None => 400.0 * period,
            Some(d) => 2.0 / d,
        };
        let mut breaks = vec![0.0];
        let first = knee.min(support) * 1e-4;
        breaks.extend(quadrature::geometric_breaks(first, knee.min(support), 4));
        if support > knee {
            let count = ((support - knee) / (period / 4.0)).ceil() as usize;
            for i in 1..=count {
                breaks.push(knee + (support - knee) * i as f64 / count as f64);
            }
        }
        if let Some(d) = self.delta {
            // keep the smooth cutoff edge on a breakpoint
            breaks.push(1.0 / d);
            breaks.retain(|&b| b <= support);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
        }
        let mut sum_l = 0.0;
        let mut sum_n = 0.0;
        for w in breaks.windows(2) {
            sum_l += quadrature::panel(
                &mut |rho| {
                    let z = 2.0 * PI * rho * r;
                    self.g(rho) * rho * half_minus_j1_over_z(z)
                },
                w[0],
                w[1],
            );
            sum_n += quadrature::panel(
                &mut |rho| {
                    let z = 2.0 * PI * rho * r;
                    self.g(rho) * rho * (1.0 - Jn(0, z) - half_minus_j1_over_z(z))
                },
                w[0],
                w[1],
            );
        }
        let tail = if self.delta.is_none() {
            // ½-part beyond the last panel; the Bessel parts there are negligible
            0.5 * (1.0 + support * support).powf(-self.alpha) / (2.0 * self.alpha)
        } else {
            0.0
        };
        [2.0 * PI * (sum_l + tail), 2.0 * PI * (sum_n + tail)]
    }
}

/// `½ - J₁(z)/z`, with a series near 0.
fn half_minus_j1_over_z(z: f64) -> f64 {
    if z < 1e-3 {
        let z2 = z * z;
        z2 / 16.0 - z2 * z2 / 384.0
    } else {
        0.5 - Jn(1, z) / z
    }
}

/// Two-channel radial function tabulated on a log grid, interpolated with
/// Catmull-Rom cubics in `ln r` after dividing by `r^power`.
#[derive(Clone, Debug)]
pub struct RadialTable {
    ln_r: Vec<f64>,
    scaled: [Vec<f64>; 2],
    power: f64,
}

impl RadialTable {
    /// Tabulates the deficits of `cov` on `[r_min, r_max]` with `per_decade`
    /// nodes per decade. `power` is the small-radius growth exponent used
    /// for extrapolation.
    pub fn deficits(cov: &RadialCovariance, r_min: f64, r_max: f64, per_decade: usize, power: f64) -> Result<Self> {
        Self::tabulate(|r| Ok(cov.deficits(r)), r_min, r_max, per_decade, power)
    }

    /// Tabulates an arbitrary two-channel radial function.
    pub fn tabulate(
        f: impl Fn(f64) -> Result<[f64; 2]> + Sync,
        r_min: f64,
        r_max: f64,
        per_decade: usize,
        power: f64,
    ) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) {
            return Err(MsqgError::config(format!("bad radial table range [{r_min}, {r_max}]")));
        }
        let rs = crate::heat::log_grid(r_min, r_max, per_decade);
        let values: Vec<[f64; 2]> = rs.par_iter().map(|&r| f(r)).collect::<Result<_>>()?;
        let ln_r: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
        let scale = |k: usize, c: usize| values[k][c] / rs[k].powf(power);
        Ok(RadialTable {
            scaled: [
                (0..rs.len()).map(|k| scale(k, 0)).collect(),
                (0..rs.len()).map(|k| scale(k, 1)).collect(),
            ],
            ln_r,
            power,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.ln_r[0].exp()
    }

    pub fn r_max(&self) -> f64 {
        self.ln_r[self.ln_r.len() - 1].exp()
    }

    /// Amplitudes of the small-radius law `value ≈ amplitude · r^power`;
    /// for deficits these are `[β_L, β_N]`.
    pub fn leading_amplitudes(&self) -> [f64; 2] {
        [self.scaled[0][0], self.scaled[1][0]]
    }

    /// Interpolated values; power-law extrapolation below the table, clamped
    /// to the last node above it.
    pub fn eval(&self, r: f64) -> [f64; 2] {
        if r <= 0.0 {
            return [0.0, 0.0];
        }
        let x = r.ln();
        let n = self.ln_r.len();
        let rp = r.powf(self.power);
        if x <= self.ln_r[0] {
            return [self.scaled[0][0] * rp, self.scaled[1][0] * rp];
        }
        if x >= self.ln_r[n - 1] {
            let top = self.ln_r[n - 1].exp().powf(self.power);
            return [self.scaled[0][n - 1] * top, self.scaled[1][n - 1] * top];
        }
        let h = self.ln_r[1] - self.ln_r[0];
        let k = (((x - self.ln_r[0]) / h).floor() as usize).min(n - 2);
        let t = (x - self.ln_r[k]) / h;
        let pick = |c: usize, i: isize| {
            let i = i.clamp(0, n as isize - 1) as usize;
            self.scaled[c][i]
        };
        let ki = k as isize;
        let interp = |c: usize| {
            let (p0, p1, p2, p3) = (pick(c, ki - 1), pick(c, ki), pick(c, ki + 1), pick(c, ki + 2));
            let t2 = t * t;
            let t3 = t2 * t;
            0.5 * (2.0 * p1 + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
        };
        [interp(0) * rp, interp(1) * rp]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deficits_tend_to_origin_value_at_large_radius() {
        // far away both structure values vanish, so each deficit equals c
        let cov = RadialCovariance::mollified(0.5, 0.5);
        let c = crate::covariance::c_delta_continuum(0.5, 0.5, crate::covariance::RadialQuadrature::for_delta(0.5)).unwrap();
        let d = cov.deficits(60.0);
        assert!((d[0] - c).abs() < 2e-3 * c && (d[1] - c).abs() < 2e-3 * c);
    }

    #[test]
    fn exact_small_radius_ratio() {
        // transverse/longitudinal ratio of the small-radius law is 1 + 2α
        let alpha = 0.3;
        let cov = RadialCovariance::exact(alpha);
        let r = 1e-5;
        let d = cov.deficits(r);
        assert!((d[1] / d[0] - (1.0 + 2.0 * alpha)).abs() < 2e-3, "{}", d[1] / d[0]);
    }

    #[test]
    fn table_interpolates_direct_values() {
        let cov = RadialCovariance::exact(0.4);
        let t = RadialTable::deficits(&cov, 1e-4, 3.0, 80, 0.8).unwrap();
        for &r in &[3.3e-4, 0.0123, 0.77, 2.1] {
            let a = t.eval(r);
            let b = cov.deficits(r);
            for c in 0..2 {
                assert!((a[c] - b[c]).abs() < 1e-6 * b[c], "r {r}: {:?} vs {:?}", a, b);
            }
        }
    }
}
