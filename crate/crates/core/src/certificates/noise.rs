//! Multiplier `ψ̂ = tr Q̂^δ ∗ ⟨·⟩^{-6}` controlling the `H^{-3}` size of the
//! noise applied to a scalar field.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::report::{BinnedSpectrum, CertificateReport};
use crate::covariance::{bracket, density, CovarianceModel};
use crate::error::{MsqgError, Result};
use crate::lattice::{Lattice, NormKind, SpectralScalarField};

/// Below this the `⟨·⟩^{-6}` factor is dropped from the padded convolution.
const WEIGHT_FLOOR_RADIUS: f64 = 250.0;

fn padded_size(min: usize) -> usize {
    min.next_power_of_two().max(8)
}

/// Largest integer wavenumber component carrying noise.
fn noise_reach(box_length: f64, delta: f64) -> usize {
    (2.0 * box_length / delta).ceil() as usize
}

/// `ψ̂(ζ) = L^{-2} Σ_{η ≠ 0} g(η) ⟨ζ - η⟩^{-6}` at every mode of `lattice`,
/// with `η` ranging over all frequencies `m / L` (no lattice truncation).
pub fn noise_multiplier(alpha: f64, delta: f64, lattice: &Lattice) -> Result<Vec<f64>> {
    let l = lattice.box_length();
    let n = lattice.n();
    let reach = noise_reach(l, delta);
    let size = padded_size((n + 2 * reach + 2).max((2.0 * l * WEIGHT_FLOOR_RADIUS) as usize));
    let pad = Lattice::new(size, size as f64)?;
    let mut a = vec![Complex64::new(0.0, 0.0); size * size];
    let mut b = vec![Complex64::new(0.0, 0.0); size * size];
    pad.for_each_mode(|k, i, j| {
        let m = [pad.wavenumber(i) as f64 / l, pad.wavenumber(j) as f64 / l];
        let r = m[0].hypot(m[1]);
        if k != 0 {
            a[k].re = density(r, alpha, delta);
        }
        b[k].re = bracket(r).powi(-6);
    });
    let fa = pad.forward_complex(a);
    let fb = pad.forward_complex(b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let conv = pad.inverse_complex(&prod);
    let w = lattice.spectral_weight();
    let mut out = vec![0.0; n * n];
    lattice.for_each_mode(|k, i, j| {
        let pi = lattice.wavenumber(i).rem_euclid(size as i64) as usize;
        let pj = lattice.wavenumber(j).rem_euclid(size as i64) as usize;
        out[k] = conv[pi * size + pj].re * w;
    });
    Ok(out)
}

/// `Σ_k ‖σ_k θ‖²_{H^{-3}}` by physical products on a padded grid, with
/// `σ_k` the real noise modes `√(2g)/L (η^⊥/|η|) cos(2πη·x)` and the same
/// with `sin`, over the half plane of `η` in lexicographic order.
pub fn noise_sum_h_minus3(theta: &SpectralScalarField, alpha: f64, delta: f64) -> Result<f64> {
    let lat = theta.lattice();
    let l = lat.box_length();
    let n = lat.n();
    let mut top = 0usize;
    let mut nyquist = false;
    lat.for_each_mode(|k, i, j| {
        if theta.coeffs()[k].norm() > 0.0 {
            top = top.max(lat.wavenumber(i).unsigned_abs() as usize).max(lat.wavenumber(j).unsigned_abs() as usize);
            nyquist |= lat.is_nyquist(i, j);
        }
    });
    if nyquist {
        return Err(MsqgError::domain("noise sum needs a field without Nyquist content"));
    }
    let reach = noise_reach(l, delta) as i64;
    let size = padded_size(2 * (top + reach as usize) + 2);
    let pad = Lattice::new(size, l)?;
    let padded = SpectralScalarField::from_modes(&pad, |i, j| {
        let (a, b) = (pad.wavenumber(i), pad.wavenumber(j));
        if a.unsigned_abs() as usize > n / 2 || b.unsigned_abs() as usize > n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        theta.coeff(a.rem_euclid(n as i64) as usize, b.rem_euclid(n as i64) as usize)
    });
    let th = padded.to_physical();
    let mut total = 0.0;
    for m1 in 0..=reach {
        for m2 in -reach..=reach {
            if m1 == 0 && m2 <= 0 {
                continue;
            }
            let eta = [m1 as f64 / l, m2 as f64 / l];
            let r = eta[0].hypot(eta[1]);
            let g = density(r, alpha, delta);
            if g == 0.0 {
                continue;
            }
            let amp = (2.0 * g).sqrt() / l;
            let dir = [-eta[1] / r, eta[0] / r];
            for phase in [0.0, -PI / 2.0] {
                for d in dir {
                    if d == 0.0 {
                        continue;
                    }
                    let prod: Vec<f64> = (0..size * size)
                        .map(|k| {
                            let x = pad.point(k / size, k % size);
                            amp * d * (2.0 * PI * (eta[0] * x[0] + eta[1] * x[1]) + phase).cos() * th[k]
                        })
                        .collect();
                    total += pad.forward(&prod)?.sobolev_norm(NormKind::Inhomogeneous(-3.0))?.powi(2);
                }
            }
        }
    }
    Ok(total)
}

/// `Σ_ζ |θ̂(ζ)|² ψ̂(ζ) / L²`.
pub fn multiplier_form(theta: &SpectralScalarField, psi: &[f64]) -> f64 {
    let n = theta.lattice().n();
    theta.weighted_energy(|i, j| psi[i * n + j])
}

/// Envelope and operator checks for the noise multiplier on the lattice of
/// `cov`, with the identity evaluated on `probe` under mollification
/// `probe_delta` (the physical route costs one padded transform per noise
/// mode, so the probe uses a coarser cutoff).
pub fn certify_noise_multiplier(
    cov: &CovarianceModel,
    probe: &SpectralScalarField,
    probe_delta: f64,
) -> Result<CertificateReport> {
    let lat = cov.lattice();
    let (alpha, delta) = (cov.alpha(), cov.delta());
    let l = lat.box_length();
    let nyq = lat.n() as f64 / (2.0 * l);
    let mid = (nyq / l).sqrt();
    let (lo, hi) = (mid / 10f64.sqrt(), mid * 10f64.sqrt());
    if lo < 1.0 {
        return Err(MsqgError::config(format!(
            "lattice resolves frequencies up to {nyq}; the fit window [{lo:.3}, {hi:.3}] must start above 1"
        )));
    }
    let psi = noise_multiplier(alpha, delta, lat)?;
    let n = lat.n();
    let mut samples = Vec::new();
    lat.for_each_mode(|k, i, j| {
        if k != 0 && !lat.is_nyquist(i, j) {
            samples.push((lat.frequency(i, j), psi[k]));
        }
    });
    let bins = BinnedSpectrum::from_samples(&samples, 1.0 / l, nyq);
    let expected = -(2.0 + 2.0 * alpha);

    let mut rep = CertificateReport::new("noise_multiplier");
    rep.meta("alpha", alpha);
    rep.meta("delta", delta);
    rep.meta("lattice", format!("{n}x{n}, L = {l}"));
    rep.meta("fit_window", format!("[{lo:.3}, {hi:.3}]"));
    rep.meta("probe_delta", probe_delta);
    rep.meta("probe_lattice", format!("{}x{}", probe.lattice().n(), probe.lattice().n()));
    rep.tolerance("exponent", 0.2);
    rep.tolerance("identity", 1e-8);
    rep.tolerance("anisotropy", 0.05);

    let (slope, used) = bins.slope(lo, hi)?;
    rep.constant("exponent", slope);
    rep.check(
        "envelope_exponent",
        (slope - expected).abs() <= 0.2,
        format!("fitted {slope:.4} on {used} bins, expected {expected:.4}"),
    );
    let envelope = samples
        .iter()
        .map(|(x, v)| v * bracket(x[0].hypot(x[1])).powf(2.0 + 2.0 * alpha))
        .fold(0.0f64, f64::max);
    rep.constant("C", envelope);
    let aniso = bins.max_anisotropy(lo, hi);
    rep.constant("anisotropy", aniso);
    rep.check("radial", aniso < 0.05, format!("max binned anisotropy {aniso:.4}"));

    let probe_psi = noise_multiplier(alpha, probe_delta, probe.lattice())?;
    let lhs = noise_sum_h_minus3(probe, alpha, probe_delta)?;
    let rhs = multiplier_form(probe, &probe_psi);
    let rel = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
    rep.constant("identity_lhs", lhs);
    rep.constant("identity_rhs", rhs);
    rep.check("identity", rel <= 1e-8, format!("relative gap {rel:.3e}"));
    let pl = probe.lattice();
    let probe_c = (0..pl.mode_count())
        .map(|k| probe_psi[k] * bracket(pl.frequency_norm(k / pl.n(), k % pl.n())).powf(2.0 + 2.0 * alpha))
        .fold(0.0f64, f64::max);
    let weak = probe.sobolev_norm(NormKind::Inhomogeneous(-1.0 - alpha))?.powi(2);
    rep.constant("probe_C", probe_c);
    rep.check(
        "operator_bound",
        lhs <= probe_c * weak * (1.0 + 1e-12),
        format!("{lhs:.5e} vs C‖θ‖² = {:.5e}", probe_c * weak),
    );
    rep.spectra.insert("psi_hat".into(), bins);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{target_datum, InitialSpec, ModeTerm};

    /// `ψ̂(ζ)` by summing over every noise frequency directly.
    fn direct_psi(alpha: f64, delta: f64, l: f64, zeta: [i64; 2]) -> f64 {
        let reach = noise_reach(l, delta) as i64;
        let mut s = 0.0;
        for m1 in -reach..=reach {
            for m2 in -reach..=reach {
                if (m1, m2) == (0, 0) {
                    continue;
                }
                let g = density((m1 as f64).hypot(m2 as f64) / l, alpha, delta);
                let d = [(zeta[0] - m1) as f64 / l, (zeta[1] - m2) as f64 / l];
                s += g * bracket(d[0].hypot(d[1])).powi(-6);
            }
        }
        s / (l * l)
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let lat = Lattice::new(32, 2.0).unwrap();
        let psi = noise_multiplier(0.3, 0.25, &lat).unwrap();
        for z in [[0i64, 0], [1, 0], [3, -5], [-9, 12], [15, 15]] {
            let k = z[0].rem_euclid(32) as usize * 32 + z[1].rem_euclid(32) as usize;
            let d = direct_psi(0.3, 0.25, 2.0, z);
            assert!((psi[k] - d).abs() <= 1e-12 * d, "{z:?}: {} vs {d}", psi[k]);
        }
    }

    #[test]
    fn identity_on_random_field() {
        let lat = Lattice::new(32, 1.0).unwrap();
        let theta = target_datum(
            &InitialSpec::RandomBand {
                k_min: 1.0,
                k_max: 8.0,
                l2_norm: 2.0,
                seed: 9,
            },
            &lat,
        )
        .unwrap();
        let psi = noise_multiplier(0.3, 0.3, &lat).unwrap();
        let lhs = noise_sum_h_minus3(&theta, 0.3, 0.3).unwrap();
        let rhs = multiplier_form(&theta, &psi);
        assert!((lhs - rhs).abs() <= 1e-8 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn single_mode_reduces_to_multiplier_value() {
        let l = 2.0;
        let lat = Lattice::new(16, l).unwrap();
        let theta = target_datum(
            &InitialSpec::Modes(vec![ModeTerm {
                wavenumber: [2, 1],
                cos: 1.0,
                sin: 0.0,
            }]),
            &lat,
        )
        .unwrap();
        let lhs = noise_sum_h_minus3(&theta, 0.5, 0.4).unwrap();
        // coefficients L²/2 at ±k
        let c2 = (0.5 * l * l).powi(2);
        let expected = (direct_psi(0.5, 0.4, l, [2, 1]) + direct_psi(0.5, 0.4, l, [-2, -1])) * c2 / (l * l);
        assert!((lhs - expected).abs() <= 1e-10 * expected, "{lhs} vs {expected}");
    }

    #[test]
    fn zero_field_has_zero_noise_sum() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let z = SpectralScalarField::zeros(&lat);
        assert_eq!(noise_sum_h_minus3(&z, 0.3, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn coarse_lattice_is_rejected() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let cov = CovarianceModel::new(0.3, 0.1, &lat, SpectralBand::Full).unwrap();
        let z = SpectralScalarField::zeros(&lat);
        assert!(matches!(certify_noise_multiplier(&cov, &z, 0.5), Err(MsqgError::Config(_))));
    }

    use crate::covariance::SpectralBand;
}
