//! Lattice trace symbol: the Fourier multiplier of
//! `tr[(Q(0) - Q(x)) D²G(x)]` and the per-mode Itô damping of the
//! truncated transport noise.
//!
//! For a noise mode `η` with density `g(η)` and projector `P(η)`, energy of
//! a scalar mode `ζ` is carried to `ζ + η` at rate
//! `(2π)² L^{-2} g(η) ζᵀP(η)ζ`. Summing over `η` gives the transfer rate
//! `R(ζ)`; weighting the target by `Ĝ(ζ + η) - Ĝ(ζ)` gives the symbol `S(ζ)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::CovarianceModel;
use crate::error::{MsqgError, Result};
use crate::kernels::{KernelMode, KernelSet};
use crate::lattice::{Lattice, SpectralScalarField};

/// How `ζ + η` is resolved on the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Truncation {
    /// Indices wrap modulo `n`; this is the symbol of the pointwise product
    /// of lattice functions.
    Periodic,
    /// Targets outside the two-thirds band are dropped; this is what the
    /// dealiased solver realizes.
    Dealiased,
}

#[derive(Clone, Debug)]
pub struct TraceSymbol {
    lattice: Lattice,
    truncation: Truncation,
    /// `S(ζ)` per mode.
    symbol: Vec<f64>,
    /// `R(ζ)` per mode.
    transfer: Vec<f64>,
}

impl TraceSymbol {
    pub fn new(cov: &CovarianceModel, kernels: &KernelSet, mode: KernelMode, truncation: Truncation) -> Result<Self> {
        let lat = cov.lattice();
        if lat != kernels.lattice() {
            return Err(MsqgError::config("covariance and kernels live on different lattices"));
        }
        let green = kernels.green(mode);
        Ok(Self::from_green(cov, green, truncation))
    }

    /// Symbol for an arbitrary per-mode multiplier in place of `Ĝ`.
    pub fn from_green(cov: &CovarianceModel, green: &[f64], truncation: Truncation) -> Self {
        let lat = cov.lattice().clone();
        let n = lat.n();
        let ni = n as i64;
        let cutoff = lat.dealias_cutoff();
        let w = lat.spectral_weight() * (2.0 * PI).powi(2);
        let modes: Vec<(i64, i64, [f64; 2], f64)> = cov
            .active_modes()
            .iter()
            .map(|m| (lat.wavenumber(m.i), lat.wavenumber(m.j), m.xi, m.density))
            .collect();
        let per_mode: Vec<(f64, f64)> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if k == 0 || (truncation == Truncation::Dealiased && !lat.is_resolved(i, j)) {
                    return (0.0, 0.0);
                }
                let (k1, k2) = (lat.wavenumber(i), lat.wavenumber(j));
                let zeta = lat.frequency(i, j);
                let z2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
                let g0 = green[k];
                let mut s = 0.0;
                let mut r = 0.0;
                for &(m1, m2, eta, g) in &modes {
                    let (t1, t2) = (k1 + m1, k2 + m2);
                    let (ti, tj) = (t1.rem_euclid(ni) as usize, t2.rem_euclid(ni) as usize);
                    let e2 = eta[0] * eta[0] + eta[1] * eta[1];
                    match truncation {
                        Truncation::Dealiased => {
                            if t1.abs() > cutoff || t2.abs() > cutoff {
                                continue;
                            }
                            let proj = z2 - (zeta[0] * eta[0] + zeta[1] * eta[1]).powi(2) / e2;
                            let rate = g * proj;
                            r += rate;
                            s += rate * green[ti * n + tj];
                        }
                        Truncation::Periodic => {
                            // the target frequency is the wrapped lattice frequency
                            let tz = lat.frequency(ti, tj);
                            let cross = if lat.is_nyquist(ti, tj) { 0.0 } else { tz[0] * tz[1] };
                            let proj = tz[0] * tz[0] * (1.0 - eta[0] * eta[0] / e2)
                                + tz[1] * tz[1] * (1.0 - eta[1] * eta[1] / e2)
                                - 2.0 * cross * eta[0] * eta[1] / e2;
                            s += g * proj * green[ti * n + tj];
                            r += g * (z2 - (zeta[0] * eta[0] + zeta[1] * eta[1]).powi(2) / e2);
                        }
                    }
                }
                let r = r * w;
                let s = match truncation {
                    Truncation::Dealiased => s * w - r * g0,
                    Truncation::Periodic => s * w - cov.c_delta_lattice() * (2.0 * PI).powi(2) * z2 * g0,
                };
                (s, r)
            })
            .collect();
        TraceSymbol {
            lattice: lat,
            truncation,
            symbol: per_mode.iter().map(|p| p.0).collect(),
            transfer: per_mode.iter().map(|p| p.1).collect(),
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Total transfer rate `R(ζ)`; the consistent Itô damping is `R/2`.
    pub fn transfer(&self) -> &[f64] {
        &self.transfer
    }

    /// `Σ_ζ S(ζ) |θ̂(ζ)|² / L²`.
    pub fn quadratic_form(&self, theta: &SpectralScalarField) -> Result<f64> {
        if theta.lattice() != &self.lattice {
            return Err(MsqgError::config("field lattice differs from trace symbol lattice"));
        }
        Ok(theta.weighted_energy(|i, j| self.symbol[i * self.lattice.n() + j]))
    }
}
