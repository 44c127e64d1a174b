//! Periodic square lattice, spectral transforms, Sobolev-scale norms and
//! dealiased pointwise products.
//!
//! Conventions: a real field `f` sampled at `x = (i, j) * L / n` has spectral
//! coefficients `f̂(ξ) = Σ_x f(x) e^{-2πi x·ξ} Δx²` with `ξ = (k_i, k_j) / L`,
//! `k ∈ {-n/2+1, …, n/2}`. The inverse is `f(x) = L^{-2} Σ_ξ f̂(ξ) e^{2πi x·ξ}`,
//! so coefficients carry units of field × area and spectral sums are weighted
//! by `1/L²`. Storage is row-major: index `i * n + j`, first axis first.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{MsqgError, Result};

const MAGIC: &[u8; 4] = b"MSQG";

/// Discrete periodic domain `[0, L)²` with `n × n` points.
#[derive(Clone)]
pub struct Lattice {
    n: usize,
    box_length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

impl Lattice {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(MsqgError::config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(MsqgError::config(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Lattice {
            n,
            box_length,
            fwd,
            inv,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Grid spacing `L / n`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn mode_count(&self) -> usize {
        self.n * self.n
    }

    /// Signed integer wavenumber stored at array index `index`.
    pub fn wavenumber(&self, index: usize) -> i64 {
        let n = self.n as i64;
        let i = index as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Frequency vector in cycles per unit length.
    pub fn frequency(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.wavenumber(i) as f64 / self.box_length,
            self.wavenumber(j) as f64 / self.box_length,
        ]
    }

    pub fn frequency_norm(&self, i: usize, j: usize) -> f64 {
        let [a, b] = self.frequency(i, j);
        a.hypot(b)
    }

    /// True on the Nyquist lines, where `ξ(-k) = -ξ(k)` fails.
    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        i == self.n / 2 || j == self.n / 2
    }

    /// Array index of the mode `-k`.
    pub fn conjugate_index(&self, i: usize, j: usize) -> (usize, usize) {
        ((self.n - i) % self.n, (self.n - j) % self.n)
    }

    /// Largest wavenumber kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Whether mode `(i, j)` survives dealiasing.
    pub fn is_resolved(&self, i: usize, j: usize) -> bool {
        let c = self.dealias_cutoff();
        self.wavenumber(i).abs() <= c && self.wavenumber(j).abs() <= c
    }

    /// Physical coordinates of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [i as f64 * h, j as f64 * h]
    }

    /// Minimum-image coordinates of grid point `(i, j)`, in `(-L/2, L/2]`.
    pub fn centered_point(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [self.wavenumber(i) as f64 * h, self.wavenumber(j) as f64 * h]
    }

    /// Quadrature weight of one frequency cell, `1/L²`.
    pub fn spectral_weight(&self) -> f64 {
        1.0 / (self.box_length * self.box_length)
    }

    /// Quadrature weight of one physical cell, `Δx²`.
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    /// Spectral coefficients of complex samples (no validation).
    pub fn forward_complex(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        assert_eq!(data.len(), self.mode_count());
        self.fft2(&mut data, true);
        let w = self.cell_area();
        for c in data.iter_mut() {
            *c *= w;
        }
        data
    }

    /// Physical samples of a coefficient array (no validation).
    pub fn inverse_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.mode_count());
        let mut data = coeffs.to_vec();
        self.fft2(&mut data, false);
        let w = self.spectral_weight();
        for c in data.iter_mut() {
            *c *= w;
        }
        data
    }

    /// Real part of the physical samples of a coefficient array.
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(coeffs).into_iter().map(|c| c.re).collect()
    }

    /// Forward transform of a real field sampled on the lattice.
    pub fn forward(&self, values: &[f64]) -> Result<SpectralScalarField> {
        if values.len() != self.mode_count() {
            return Err(MsqgError::config(format!(
                "field has {} samples, lattice expects {}",
                values.len(),
                self.mode_count()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MsqgError::data(format!("non-finite sample at index {pos}")));
        }
        let data = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(SpectralScalarField {
            lattice: self.clone(),
            coeffs: self.forward_complex(data),
        })
    }

    /// Forward transform followed by two-thirds truncation.
    pub fn forward_dealiased(&self, values: &[f64]) -> Result<SpectralScalarField> {
        Ok(self.forward(values)?.dealiased())
    }

    /// Real field from its coefficients.
    pub fn inverse(&self, field: &SpectralScalarField) -> Vec<f64> {
        self.inverse_real(&field.coeffs)
    }

    /// Lattice quadrature of `∫ a b dx` for two physical arrays.
    pub fn physical_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.cell_area()
    }

    /// Lattice quadrature of `(∫|f|^p dx)^{1/p}`.
    pub fn lp_norm(&self, values: &[f64], p: f64) -> f64 {
        let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.cell_area()).powf(1.0 / p)
    }

    /// Calls `f(index, i, j)` for every mode in storage order.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, usize, usize)) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                f(i * n + j, i, j);
            }
        }
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Norm families measured on spectral fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    /// `|ξ|^{2s}` weight, zero mode skipped.
    Homogeneous(f64),
    /// `⟨ξ⟩^{2s}` weight with `⟨ξ⟩ = (1 + |ξ|²)^{1/2}`.
    Inhomogeneous(f64),
    /// `⟨ξ⟩^{2β-10} |ξ|^{2-2β}` weight, zero mode skipped.
    MixedTilde { beta: f64 },
}

/// Fourier coefficients of a scalar field on a lattice.
#[derive(Clone, Debug)]
pub struct SpectralScalarField {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl SpectralScalarField {
    pub fn new(lattice: &Lattice, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.mode_count() {
            return Err(MsqgError::config(format!(
                "coefficient array has {} entries, lattice expects {}",
                coeffs.len(),
                lattice.mode_count()
            )));
        }
        if let Some(pos) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(MsqgError::data(format!("non-finite coefficient at index {pos}")));
        }
        Ok(SpectralScalarField {
            lattice: lattice.clone(),
            coeffs,
        })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        SpectralScalarField {
            lattice: lattice.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.mode_count()],
        }
    }

    /// Builds a field from a per-mode function `f(i, j)`.
    pub fn from_modes(lattice: &Lattice, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let n = lattice.n();
        let mut coeffs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                coeffs.push(f(i, j));
            }
        }
        SpectralScalarField {
            lattice: lattice.clone(),
            coeffs,
        }
    }

    pub(crate) fn from_raw(lattice: &Lattice, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), lattice.mode_count());
        SpectralScalarField {
            lattice: lattice.clone(),
            coeffs,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> Complex64 {
        self.coeffs[i * self.lattice.n() + j]
    }

    /// Spatial mean `L^{-2} f̂(0)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re * self.lattice.spectral_weight()
    }

    /// Largest violation of `f̂(-ξ) = conj f̂(ξ)`.
    pub fn hermitian_defect(&self) -> f64 {
        let lat = &self.lattice;
        let n = lat.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let (ci, cj) = lat.conjugate_index(i, j);
                let d = (self.coeffs[i * n + j] - self.coeffs[ci * n + cj].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `∫|f|² dx` computed on the spectral side.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.lattice.spectral_weight()
    }

    /// Real part of `∫ f conj(g) dx`.
    pub fn inner(&self, other: &SpectralScalarField) -> Result<f64> {
        self.check_same_lattice(other)?;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        Ok(s * self.lattice.spectral_weight())
    }

    /// `Σ_ξ w(ξ) |f̂(ξ)|² / L²` for a per-mode weight.
    pub fn weighted_energy(&self, weight: impl Fn(usize, usize) -> f64) -> f64 {
        let n = self.lattice.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = self.coeffs[i * n + j];
                if c.re != 0.0 || c.im != 0.0 {
                    s += weight(i, j) * c.norm_sqr();
                }
            }
        }
        s * self.lattice.spectral_weight()
    }

    pub(crate) fn check_same_lattice(&self, other: &SpectralScalarField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(MsqgError::config(format!(
                "lattice mismatch: {:?} vs {:?}",
                self.lattice, other.lattice
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> SpectralScalarField {
        SpectralScalarField::from_raw(&self.lattice, self.coeffs.iter().map(|c| c * a).collect())
    }

    pub fn add(&self, other: &SpectralScalarField) -> Result<SpectralScalarField> {
        self.check_same_lattice(other)?;
        Ok(SpectralScalarField::from_raw(
            &self.lattice,
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &SpectralScalarField) -> Result<SpectralScalarField> {
        self.add(&other.scaled(-1.0))
    }

    /// Multiplies every coefficient by a per-mode factor.
    pub fn map_modes(&self, mut f: impl FnMut(usize, usize, Complex64) -> Complex64) -> SpectralScalarField {
        let n = self.lattice.n();
        let mut out = self.coeffs.clone();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                out[k] = f(i, j, out[k]);
            }
        }
        SpectralScalarField::from_raw(&self.lattice, out)
    }

    /// Zeroes every mode beyond the two-thirds cutoff.
    pub fn dealiased(&self) -> SpectralScalarField {
        let lat = self.lattice.clone();
        self.map_modes(|i, j, c| if lat.is_resolved(i, j) { c } else { Complex64::new(0.0, 0.0) })
    }

    /// Zeroes the Nyquist lines.
    pub fn without_nyquist(&self) -> SpectralScalarField {
        let lat = self.lattice.clone();
        self.map_modes(|i, j, c| if lat.is_nyquist(i, j) { Complex64::new(0.0, 0.0) } else { c })
    }

    /// Sets the zero mode to 0.
    pub fn without_mean(&self) -> SpectralScalarField {
        let mut out = self.clone();
        out.coeffs[0] = Complex64::new(0.0, 0.0);
        out
    }

    pub fn to_physical(&self) -> Vec<f64> {
        self.lattice.inverse(self)
    }

    /// Largest imaginary part of the inverse transform relative to the largest amplitude.
    pub fn reality_defect(&self) -> f64 {
        let z = self.lattice.inverse_complex(&self.coeffs);
        let amp = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if amp == 0.0 {
            return 0.0;
        }
        z.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / amp
    }

    /// Sobolev-type norm evaluated by lattice quadrature.
    pub fn sobolev_norm(&self, kind: NormKind) -> Result<f64> {
        let lat = &self.lattice;
        let scale = self.energy().sqrt() * lat.box_length();
        let mean_tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let needs_zero_mean = match kind {
            NormKind::Homogeneous(s) => s < 0.0,
            NormKind::MixedTilde { beta } => beta > 1.0,
            NormKind::Inhomogeneous(_) => false,
        };
        if needs_zero_mean && self.coeffs[0].norm() > mean_tol {
            return Err(MsqgError::domain(
                "homogeneous norm undefined for non-mean-zero field",
            ));
        }
        let total = self.weighted_energy(|i, j| {
            let r = lat.frequency_norm(i, j);
            let bracket2 = 1.0 + r * r;
            match kind {
                NormKind::Homogeneous(s) => {
                    if r == 0.0 {
                        0.0
                    } else {
                        r.powf(2.0 * s)
                    }
                }
                NormKind::Inhomogeneous(s) => bracket2.powf(s),
                NormKind::MixedTilde { beta } => {
                    if r == 0.0 {
                        0.0
                    } else {
                        bracket2.powf(beta - 5.0) * r.powf(2.0 - 2.0 * beta)
                    }
                }
            }
        });
        Ok(total.sqrt())
    }

    /// Writes the binary dump: `MSQG`, u32 n, f64 L, then n² (re, im) pairs, all little-endian.
    pub fn write_msqg<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.lattice.n() as u32).to_le_bytes())?;
        w.write_all(&self.lattice.box_length().to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.coeffs.len());
        for c in &self.coeffs {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads a dump produced by [`SpectralScalarField::write_msqg`].
    pub fn read_msqg<R: Read>(mut r: R) -> Result<SpectralScalarField> {
        let io = |e: std::io::Error| MsqgError::data(format!("truncated MSQG stream: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(MsqgError::data("bad magic bytes, expected MSQG"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let box_length = f64::from_le_bytes(b8);
        let lattice = Lattice::new(n, box_length)?;
        let mut raw = vec![0u8; 16 * n * n];
        r.read_exact(&mut raw).map_err(io)?;
        let coeffs = raw
            .chunks_exact(16)
            .map(|ch| {
                let re = f64::from_le_bytes(ch[..8].try_into().unwrap());
                let im = f64::from_le_bytes(ch[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        SpectralScalarField::new(&lattice, coeffs)
    }
}

/// Two scalar components on one lattice.
#[derive(Clone, Debug)]
pub struct SpectralVectorField {
    components: [SpectralScalarField; 2],
    divergence_free: bool,
}

impl SpectralVectorField {
    /// Pairs two components. With `divergence_free` set the constructor
    /// rejects fields whose divergence is not zero to rounding.
    pub fn new(x: SpectralScalarField, y: SpectralScalarField, divergence_free: bool) -> Result<Self> {
        x.check_same_lattice(&y)?;
        let v = SpectralVectorField {
            components: [x, y],
            divergence_free,
        };
        if divergence_free {
            let d = v.divergence_defect();
            if d > 1e-13 {
                return Err(MsqgError::data(format!(
                    "field flagged divergence-free has relative divergence {d:e}"
                )));
            }
        }
        Ok(v)
    }

    pub(crate) fn from_parts_unchecked(x: SpectralScalarField, y: SpectralScalarField, divergence_free: bool) -> Self {
        SpectralVectorField {
            components: [x, y],
            divergence_free,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        self.components[0].lattice()
    }

    pub fn component(&self, axis: usize) -> &SpectralScalarField {
        &self.components[axis]
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    /// Largest `|ξ·v̂(ξ)| / (|ξ| |v̂(ξ)|)` over all modes.
    pub fn divergence_defect(&self) -> f64 {
        let lat = self.lattice();
        let n = lat.n();
        let (a, b) = (self.components[0].coeffs(), self.components[1].coeffs());
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let [x1, x2] = lat.frequency(i, j);
                let mag = (a[k].norm_sqr() + b[k].norm_sqr()).sqrt() * x1.hypot(x2);
                if mag > 0.0 {
                    worst = worst.max((a[k] * x1 + b[k] * x2).norm() / mag);
                }
            }
        }
        worst
    }

    pub fn energy(&self) -> f64 {
        self.components[0].energy() + self.components[1].energy()
    }

    pub fn sobolev_norm(&self, kind: NormKind) -> Result<f64> {
        let a = self.components[0].sobolev_norm(kind)?;
        let b = self.components[1].sobolev_norm(kind)?;
        Ok(a.hypot(b))
    }

    pub fn to_physical(&self) -> [Vec<f64>; 2] {
        [self.components[0].to_physical(), self.components[1].to_physical()]
    }
}

/// Spectral coefficients of the pointwise product of two fields, with the
/// two-thirds rule applied to both factors and to the result.
pub fn dealiased_product(f: &SpectralScalarField, g: &SpectralScalarField) -> Result<SpectralScalarField> {
    f.check_same_lattice(g)?;
    let lat = f.lattice();
    let a = lat.inverse_real(f.dealiased().coeffs());
    let b = lat.inverse_real(g.dealiased().coeffs());
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    lat.forward_dealiased(&prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_real(lat: &Lattice, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..lat.mode_count()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Lattice::new(4, 1.0).is_err());
        assert!(Lattice::new(12, 1.0).is_err());
        assert!(Lattice::new(16, 0.0).is_err());
        assert!(Lattice::new(16, 2.0).is_ok());
    }

    #[test]
    fn frequency_map_negates_away_from_nyquist() {
        let lat = Lattice::new(16, 3.0).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if lat.is_nyquist(i, j) {
                    continue;
                }
                let (ci, cj) = lat.conjugate_index(i, j);
                let a = lat.frequency(i, j);
                let b = lat.frequency(ci, cj);
                assert_eq!(a[0], -b[0]);
                assert_eq!(a[1], -b[1]);
            }
        }
        assert_eq!(lat.wavenumber(8), 8);
        assert_eq!(lat.wavenumber(9), -7);
    }

    #[test]
    fn constant_field_has_only_zero_mode() {
        let lat = Lattice::new(8, 2.0).unwrap();
        let f = lat.forward(&vec![1.0; 64]).unwrap();
        assert!((f.coeffs()[0].re - 4.0).abs() < 1e-14);
        assert!(f.coeffs()[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn single_cosine_gives_conjugate_pair() {
        let n = 16;
        let l = 2.0;
        let lat = Lattice::new(n, l).unwrap();
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let x = lat.point(k / n, k % n)[0];
                (2.0 * std::f64::consts::PI * x / l).cos()
            })
            .collect();
        let f = lat.forward(&vals).unwrap();
        let half_area = l * l / 2.0;
        assert!((f.coeff(1, 0).re - half_area).abs() < 1e-12);
        assert!((f.coeff(n - 1, 0).re - half_area).abs() < 1e-12);
        let others: f64 = f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != n && *k != (n - 1) * n)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-12);
    }

    #[test]
    fn round_trip_and_parseval() {
        let lat = Lattice::new(32, 1.7).unwrap();
        let v = random_real(&lat, 3);
        let f = lat.forward(&v).unwrap();
        let back = f.to_physical();
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = v.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale < 1e-12);
        let phys = lat.physical_inner(&v, &v);
        assert!((phys - f.energy()).abs() / phys < 1e-12);
        assert!(f.reality_defect() < 1e-12);
        assert!(f.hermitian_defect() < 1e-12 * lat.cell_area() * lat.mode_count() as f64);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let lat = Lattice::new(8, 1.0).unwrap();
        assert!(matches!(lat.forward(&[0.0; 10]), Err(MsqgError::Config(_))));
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        assert!(matches!(lat.forward(&v), Err(MsqgError::Data(_))));
    }

    #[test]
    fn norms_of_zero_field_vanish() {
        let lat = Lattice::new(8, 1.0).unwrap();
        let z = SpectralScalarField::zeros(&lat);
        for kind in [
            NormKind::Homogeneous(-0.75),
            NormKind::Homogeneous(1.0),
            NormKind::Inhomogeneous(-2.0),
            NormKind::MixedTilde { beta: 1.5 },
        ] {
            assert_eq!(z.sobolev_norm(kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_mode_homogeneous_norm_closed_form() {
        let l = 2.0;
        let lat = Lattice::new(16, l).unwrap();
        let a = 0.7;
        let f = SpectralScalarField::from_modes(&lat, |i, j| {
            if (i, j) == (1, 0) || (i, j) == (15, 0) {
                Complex64::new(a, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for s in [-1.5, -0.5, 0.0, 1.0] {
            let expected = (2.0 * a * a * (1.0 / l).powf(2.0 * s) / (l * l)).sqrt();
            let got = f.sobolev_norm(NormKind::Homogeneous(s)).unwrap();
            assert!((got - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn homogeneous_negative_norm_needs_zero_mean() {
        let lat = Lattice::new(8, 1.0).unwrap();
        let f = lat.forward(&vec![2.0; 64]).unwrap();
        assert!(matches!(f.sobolev_norm(NormKind::Homogeneous(-0.5)), Err(MsqgError::Domain(_))));
        assert!(f.sobolev_norm(NormKind::Homogeneous(0.5)).is_ok());
    }

    #[test]
    fn inhomogeneous_norm_is_monotone_in_order() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let f = lat.forward(&random_real(&lat, 9)).unwrap();
        let mut last = 0.0;
        for s in [-2.0, -1.0, -0.3, 0.0, 0.4, 1.2] {
            let v = f.sobolev_norm(NormKind::Inhomogeneous(s)).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn product_of_zero_is_zero() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let g = lat.forward(&random_real(&lat, 1)).unwrap();
        let p = dealiased_product(&SpectralScalarField::zeros(&lat), &g).unwrap();
        assert!(p.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn cosine_squared_identity() {
        let n = 16;
        let lat = Lattice::new(n, 1.0).unwrap();
        let vals: Vec<f64> = (0..n * n)
            .map(|k| (2.0 * std::f64::consts::PI * lat.point(k / n, k % n)[1]).cos())
            .collect();
        let f = lat.forward(&vals).unwrap();
        let p = dealiased_product(&f, &f).unwrap();
        // cos² = 1/2 + cos(2·)/2
        assert!((p.coeff(0, 0).re - 0.5).abs() < 1e-14);
        assert!((p.coeff(0, 2).re - 0.25).abs() < 1e-14);
        assert!((p.coeff(0, n - 2).re - 0.25).abs() < 1e-14);
        let rest: f64 = p
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(k, _)| ![0, 2, n - 2].contains(k))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-14);
    }

    #[test]
    fn lattice_mismatch_is_config_error() {
        let a = SpectralScalarField::zeros(&Lattice::new(8, 1.0).unwrap());
        let b = SpectralScalarField::zeros(&Lattice::new(8, 2.0).unwrap());
        assert!(matches!(dealiased_product(&a, &b), Err(MsqgError::Config(_))));
    }

    #[test]
    fn binary_dump_round_trip_is_bit_exact() {
        let lat = Lattice::new(8, 1.25).unwrap();
        let f = lat.forward(&random_real(&lat, 4)).unwrap();
        let mut buf = Vec::new();
        f.write_msqg(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MSQG");
        assert_eq!(buf.len(), 4 + 4 + 8 + 16 * 64);
        let g = SpectralScalarField::read_msqg(buf.as_slice()).unwrap();
        assert_eq!(g.lattice(), f.lattice());
        for (a, b) in f.coeffs().iter().zip(g.coeffs()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(SpectralScalarField::read_msqg(bad.as_slice()).is_err());
        assert!(SpectralScalarField::read_msqg(&buf[..40]).is_err());
    }
}
