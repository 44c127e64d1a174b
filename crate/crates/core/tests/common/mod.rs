//! Brute-force oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use msqg_core::covariance::{CovarianceModel, SpectralBand};
use msqg_core::kernels::{KernelMode, KernelSet};
use msqg_core::solver::{target_datum, InitialSpec, ItoCorrection, NoiseDrive, Solver, SolverConfig};
use msqg_core::trace::{TraceSymbol, Truncation};
use msqg_core::certificates::trace_form_double_sum;
use msqg_core::{Lattice, SpectralScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub fn random_samples(lat: &Lattice, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..lat.mode_count()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `Σ_x f(x) e^{-2πi k·x/n} h²` evaluated term by term.
pub fn brute_force_dft(lat: &Lattice, values: &[f64]) -> Vec<Complex64> {
    let n = lat.n();
    let h2 = lat.cell_area();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for ki in 0..n {
        for kj in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for xi in 0..n {
                for xj in 0..n {
                    let phase = -2.0 * PI * ((ki * xi + kj * xj) % n) as f64 / n as f64;
                    acc += values[xi * n + xj] * Complex64::from_polar(1.0, phase);
                }
            }
            out[ki * n + kj] = acc * h2;
        }
    }
    out
}

/// Largest coefficient gap between the library transform and the direct sum,
/// relative to the largest coefficient.
pub fn dft_gap(n: usize, box_length: f64, seed: u64) -> f64 {
    let lat = Lattice::new(n, box_length).unwrap();
    let values = random_samples(&lat, seed);
    let fast = lat.forward(&values).unwrap();
    let slow = brute_force_dft(&lat, &values);
    let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
    fast.coeffs()
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

/// `(fg)^(k) = L^{-2} Σ_p f̂(p) ĝ(k - p)` over resolved `p`, `k - p`, truncated
/// to resolved `k`.
pub fn convolution_product(f: &SpectralScalarField, g: &SpectralScalarField) -> Vec<Complex64> {
    let lat = f.lattice();
    let n = lat.n();
    let l2 = lat.box_length().powi(2);
    let (fd, gd) = (f.dealiased(), g.dealiased());
    let idx = |k: i64| k.rem_euclid(n as i64) as usize;
    let c = lat.dealias_cutoff();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for ki in -c..=c {
        for kj in -c..=c {
            let mut acc = Complex64::new(0.0, 0.0);
            for pi in -c..=c {
                for pj in -c..=c {
                    let (qi, qj) = (ki - pi, kj - pj);
                    if qi.abs() > c || qj.abs() > c {
                        continue;
                    }
                    acc += fd.coeff(idx(pi), idx(pj)) * gd.coeff(idx(qi), idx(qj));
                }
            }
            out[idx(ki) * n + idx(kj)] = acc / l2;
        }
    }
    out
}

/// Largest gap between the pseudo-spectral product and the convolution sum,
/// relative to the largest product coefficient.
pub fn product_gap(n: usize, box_length: f64, seed: u64) -> f64 {
    let lat = Lattice::new(n, box_length).unwrap();
    let f = lat.forward(&random_samples(&lat, seed)).unwrap();
    let g = lat.forward(&random_samples(&lat, seed + 1)).unwrap();
    let fast = msqg_core::dealiased_product(&f, &g).unwrap();
    let slow = convolution_product(&f, &g);
    let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
    fast.coeffs()
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

const SHEAR_AMPLITUDE: f64 = 1.0;
const TRANSPORT_TIME: f64 = 0.1;

fn initial_profile(x: f64, y: f64, l: f64) -> f64 {
    (2.0 * PI * y / l).cos() + 0.5 * (2.0 * PI * (x + 2.0 * y) / l).sin()
}

/// Relative `L²` error against the characteristics solution for a frozen
/// shear `u = (0, -a cos(2πx/L))` on a 64² unit box: the exact solution is
/// `θ₀(x, y + a t cos(2πx/L))`.
pub fn characteristics_error(dt: f64) -> f64 {
    let n = 64;
    let l = 1.0;
    let cfg = SolverConfig {
        n,
        box_length: l,
        dt,
        t_end: TRANSPORT_TIME,
        ensemble_size: 1,
        nonlinearity: false,
        diffusion: false,
        noise: NoiseDrive::Frozen {
            wavenumber: [1, 0],
            amplitude: SHEAR_AMPLITUDE,
        },
        correction: ItoCorrection::Galerkin,
        ..SolverConfig::reference()
    };
    let solver = Solver::new(cfg).unwrap();
    let lat = solver.lattice();
    let mut start = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let [x, y] = lat.point(i, j);
            start.push(initial_profile(x, y, l));
        }
    }
    let theta0 = lat.forward(&start).unwrap();
    let run = solver.run(&theta0, 0).unwrap();
    assert!(run.failure.is_none());
    let end = run.final_state.theta(lat).to_physical();
    let t = TRANSPORT_TIME;
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let [x, y] = lat.point(i, j);
            let exact = initial_profile(x, y + SHEAR_AMPLITUDE * t * (2.0 * PI * x / l).cos(), l);
            err += (end[i * n + j] - exact).powi(2);
            norm += exact * exact;
        }
    }
    (err / norm).sqrt()
}

/// Observed orders `log2(e(dt)/e(dt/2))` for the characteristics oracle.
pub fn characteristics_orders(dts: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let errors: Vec<f64> = dts.iter().map(|&dt| characteristics_error(dt)).collect();
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    (errors, orders)
}

/// Relative gap between the Fourier-side trace form and the physical double
/// sum on a 16² lattice.
pub fn trace_form_gap(seed: u64) -> f64 {
    let lat = Lattice::new(16, 4.0).unwrap();
    let cov = CovarianceModel::new(0.5, 0.2, &lat, SpectralBand::Full).unwrap();
    let ks = KernelSet::new(1.5, 0.2, &lat).unwrap();
    let sym = TraceSymbol::new(&cov, &ks, KernelMode::Regularized, Truncation::Periodic).unwrap();
    let theta = target_datum(
        &InitialSpec::RandomBand {
            k_min: 1.0,
            k_max: 7.0,
            l2_norm: 1.0,
            seed,
        },
        &lat,
    )
    .unwrap();
    let spectral = sym.quadratic_form(&theta).unwrap();
    let physical = trace_form_double_sum(&cov, ks.green(KernelMode::Regularized), &theta).unwrap();
    (spectral - physical).abs() / physical.abs()
}
