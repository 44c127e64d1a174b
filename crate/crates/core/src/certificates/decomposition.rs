//! Radial split of the trace symbol `tr[(Q^δ(0) - Q^δ(x)) D²G^δ(x)]` into a
//! leading singular part and three remainders, with the certificates that
//! bound each piece.

use std::f64::consts::PI;

use puruspe::Jn;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::report::{BinnedSpectrum, CertificateReport};
use crate::covariance::{bracket, transition, CovarianceModel};
use crate::error::{MsqgError, Result};
use crate::heat::log_grid;
use crate::kernels::{exact_green_hessian, gamma_riesz, RadialGreen, RadialHessian};
use crate::lattice::{Lattice, SpectralScalarField};
use crate::quadrature;
use crate::radial::{RadialCovariance, RadialTable};

const TABLE_MIN: f64 = 1e-6;
const PER_DECADE: usize = 40;
/// Outer radius of the tabulated mollified pieces; the far field of `R₃`
/// beyond it is below quadrature noise for `δ ≤ 0.2`.
pub const FAR_RADIUS: f64 = 64.0;

fn tr(d: [f64; 2], h: RadialHessian) -> f64 {
    d[0] * h[0] + d[1] * h[1]
}

/// `φ(x) tr[(Q(0) - Q(x)) D²G_β(x)]` with the exact covariance and kernel.
#[derive(Clone, Debug)]
pub struct LeadingTerm {
    alpha: f64,
    beta: f64,
    exact: RadialTable,
}

impl LeadingTerm {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        crate::kernels::RadialGreen::new(beta, 0.1)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(MsqgError::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let exact = RadialTable::deficits(&RadialCovariance::exact(alpha), TABLE_MIN, 2.0, PER_DECADE, 2.0 * alpha)?;
        Ok(LeadingTerm { alpha, beta, exact })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Exact deficits `[c - B_L, c - B_N]`.
    pub fn deficits(&self, r: f64) -> [f64; 2] {
        self.exact.eval(r)
    }

    pub fn value(&self, r: f64) -> f64 {
        let phi = transition(r);
        if phi == 0.0 || r == 0.0 {
            return 0.0;
        }
        phi * tr(self.exact.eval(r), exact_green_hessian(r, self.beta))
    }

    /// Integral of the leading term over the square cell `[-h/2, h/2]²`,
    /// in polar coordinates with the radial singularity mapped out.
    pub fn origin_cell_integral(&self, h: f64) -> f64 {
        let p = 2.0 * self.alpha + self.beta - 2.0;
        let mut total = 0.0;
        for w in [0.0, 0.5, 1.0].windows(2) {
            let (t0, t1) = (w[0] * PI / 4.0, w[1] * PI / 4.0);
            total += quadrature::panel(
                &mut |theta| {
                    let rmax = 0.5 * h / theta.cos();
                    // r = rmax u^{1/p} turns r^{p-1} dr into a smooth measure
                    let inner = quadrature::composite(
                        |u| {
                            if u == 0.0 {
                                return 0.0;
                            }
                            let r = rmax * u.powf(1.0 / p);
                            self.value(r) * rmax * rmax / p * u.powf(2.0 / p - 1.0)
                        },
                        0.0,
                        1.0,
                        2,
                    );
                    inner
                },
                t0,
                t1,
            );
        }
        8.0 * total
    }

    /// Lattice samples with the origin cell replaced by its average.
    pub fn sample(&self, lattice: &Lattice) -> Vec<f64> {
        let n = lattice.n();
        let h = lattice.spacing();
        let mut out: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let x = lattice.centered_point(k / n, k % n);
                self.value(x[0].hypot(x[1]))
            })
            .collect();
        out[0] = self.origin_cell_integral(h) / (h * h);
        out
    }

    /// Reference constant of the negativity estimate built from the
    /// small-radius longitudinal amplitude.
    pub fn reference_constant(&self) -> f64 {
        let s = 2.0 * self.alpha + self.beta - 2.0;
        let beta_l = self.exact.leading_amplitudes()[0];
        s * (2.0 - self.beta) * gamma_riesz(s) * beta_l / (4.0 * (2.0 * PI).powf(s) * gamma_riesz(self.beta))
    }
}

/// Values of the four pieces and of the full symbol at one radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pieces {
    pub a: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub full: f64,
}

impl Pieces {
    pub fn sum(&self) -> f64 {
        self.a + self.r1 + self.r2 + self.r3
    }

    pub fn scale(&self) -> f64 {
        [self.a, self.r1, self.r2, self.r3, self.full]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Pieces sampled at every lattice point (origin set to 0).
#[derive(Clone, Debug)]
pub struct LatticePieces {
    pub a: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub full: Vec<f64>,
}

/// Continuum decomposition `full = A + R₁ + R₂ + R₃` at one `δ`, with cutoff
/// `φ = transition(|x|)`.
#[derive(Clone, Debug)]
pub struct TraceDecomposition {
    delta: f64,
    leading: LeadingTerm,
    mollified: RadialTable,
    gap: RadialTable,
}

impl TraceDecomposition {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Result<Self> {
        let leading = LeadingTerm::new(alpha, beta)?;
        let green = RadialGreen::new(beta, delta)?;
        let mollified = RadialTable::deficits(
            &RadialCovariance::mollified(alpha, delta),
            TABLE_MIN,
            FAR_RADIUS,
            PER_DECADE,
            2.0,
        )?;
        let gap = RadialTable::tabulate(|r| green.gap_hessian(r), TABLE_MIN, FAR_RADIUS, PER_DECADE, beta - 4.0)?;
        Ok(TraceDecomposition {
            delta,
            leading,
            mollified,
            gap,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn leading(&self) -> &LeadingTerm {
        &self.leading
    }

    /// Hessian of the regularized kernel, taken as exact minus gap so the
    /// split is exact in floating point.
    fn regularized(&self, r: f64) -> RadialHessian {
        let ex = exact_green_hessian(r, self.leading.beta);
        let gap = self.gap.eval(r);
        [ex[0] - gap[0], ex[1] - gap[1]]
    }

    pub fn pieces(&self, r: f64) -> Pieces {
        if r == 0.0 {
            return Pieces {
                a: 0.0,
                r1: 0.0,
                r2: 0.0,
                r3: 0.0,
                full: 0.0,
            };
        }
        let phi = transition(r);
        let moll = self.mollified.eval(r);
        let reg = self.regularized(r);
        let full = tr(moll, reg);
        if phi == 0.0 {
            return Pieces {
                a: 0.0,
                r1: 0.0,
                r2: 0.0,
                r3: full,
                full,
            };
        }
        let exact = self.leading.deficits(r);
        let ex = exact_green_hessian(r, self.leading.beta);
        let gap = self.gap.eval(r);
        Pieces {
            a: phi * tr(exact, ex),
            r1: -phi * tr(exact, gap),
            r2: phi * tr([moll[0] - exact[0], moll[1] - exact[1]], reg),
            r3: (1.0 - phi) * full,
            full,
        }
    }

    pub fn sample(&self, lattice: &Lattice) -> LatticePieces {
        let n = lattice.n();
        let all: Vec<Pieces> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let x = lattice.centered_point(k / n, k % n);
                self.pieces(x[0].hypot(x[1]))
            })
            .collect();
        LatticePieces {
            a: all.iter().map(|p| p.a).collect(),
            r1: all.iter().map(|p| p.r1).collect(),
            r2: all.iter().map(|p| p.r2).collect(),
            r3: all.iter().map(|p| p.r3).collect(),
            full: all.iter().map(|p| p.full).collect(),
        }
    }

    /// `ε` used in the `R₂` envelope.
    pub fn r2_epsilon(&self) -> f64 {
        let (a, b) = (self.leading.alpha, self.leading.beta);
        a.min((2.0 * a + b - 2.0) / 2.0) / 2.0
    }

    pub fn r1_envelope(&self, r: f64) -> f64 {
        let (a, b, d) = (self.leading.alpha, self.leading.beta, self.delta);
        let phi = transition(r);
        let near = if r <= d.powf(1.0 / (4.0 + b)) {
            r.powf(2.0 * a + b - 4.0)
        } else {
            0.0
        };
        (d + near) * phi
    }

    pub fn r2_envelope(&self, r: f64) -> f64 {
        let (a, b, d) = (self.leading.alpha, self.leading.beta, self.delta);
        let e = self.r2_epsilon();
        d.powf(e) * r.powf(2.0 * a + b - 4.0 - e) * transition(r)
    }

    /// `∫_{|x|<2} |f(|x|)| dx`, with the part below the first breakpoint
    /// closed by the local power law.
    fn l1_near(&self, f: impl Fn(&Pieces) -> f64) -> f64 {
        let lo = 1e-6;
        let breaks = quadrature::geometric_breaks(lo, 2.0, 8);
        let body = quadrature::over_breaks(|r| 2.0 * PI * r * f(&self.pieces(r)).abs(), &breaks);
        let (v0, v1) = (f(&self.pieces(lo)).abs(), f(&self.pieces(2.0 * lo)).abs());
        let tail = if v0 > 0.0 && v1 > 0.0 {
            let q = (v1 / v0).log2();
            if q > -2.0 {
                2.0 * PI * v0 * lo * lo / (q + 2.0)
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        body + tail
    }

    pub fn r1_l1(&self) -> f64 {
        self.l1_near(|p| p.r1)
    }

    pub fn r2_l1(&self) -> f64 {
        self.l1_near(|p| p.r2)
    }

    /// Radial Fourier transform of `R₃` at frequency `rho`, integrated to
    /// [`FAR_RADIUS`].
    pub fn r3_transform(&self, rho: f64) -> f64 {
        let mut breaks = vec![1.0];
        let width = if rho > 0.0 { (0.125 / rho).min(0.25) } else { 0.25 };
        for w in quadrature::geometric_breaks(1.0, FAR_RADIUS, 8).windows(2) {
            let m = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
            for i in 1..=m {
                breaks.push(w[0] + (w[1] - w[0]) * i as f64 / m as f64);
            }
        }
        2.0 * PI
            * quadrature::over_breaks(
                |r| self.pieces(r).r3 * Jn(0, 2.0 * PI * rho * r) * r,
                &breaks,
            )
    }
}

/// Certificate for the negativity of the leading term's transform.
pub fn certify_a_bound(leading: &LeadingTerm, lattice: &Lattice) -> Result<CertificateReport> {
    let (alpha, beta) = (leading.alpha, leading.beta);
    let s = 2.0 * alpha + beta - 2.0;
    if s <= 0.0 {
        return Err(MsqgError::config(format!("negativity certificate needs 2α + β > 2, got {}", 2.0 * alpha + beta)));
    }
    let l = lattice.box_length();
    let nyq = lattice.n() as f64 / (2.0 * l);
    let (fit_lo, fit_hi) = (nyq / 20.0, nyq / 2.0);
    if fit_lo < 4.0 / l {
        return Err(MsqgError::config(format!(
            "lattice n = {} on L = {l} lacks a resolved decade above {:.3}",
            lattice.n(),
            4.0 / l
        )));
    }
    let hat = lattice.forward(&leading.sample(lattice))?;
    let n = lattice.n();
    let mut samples = Vec::with_capacity(n * n);
    lattice.for_each_mode(|k, i, j| {
        if k != 0 {
            samples.push((lattice.frequency(i, j), hat.coeffs()[k].re));
        }
    });
    let bins = BinnedSpectrum::from_samples(&samples, 1.0 / l, nyq);

    let mut rep = CertificateReport::new("A_bound");
    rep.meta("alpha", alpha);
    rep.meta("beta", beta);
    rep.meta("lattice", format!("{n}x{n}, L = {l}"));
    rep.meta("fit_window", format!("[{fit_lo:.3}, {fit_hi:.3}]"));
    rep.tolerance("exponent", 0.15);
    rep.tolerance("anisotropy", 0.05);
    rep.tolerance("reference_factor", 4.0);

    // crossover: lowest bin from which every higher bin is negative
    let mut cross = bins.centers.len();
    while cross > 0 && bins.values[cross - 1] < 0.0 {
        cross -= 1;
    }
    let crossover = bins.centers.get(cross).copied().unwrap_or(f64::INFINITY);
    rep.constant("crossover", crossover);
    rep.check(
        "negative_tail",
        crossover <= fit_lo,
        format!("binned transform negative from {crossover:.4} up to {nyq:.2}; needed from {fit_lo:.3}"),
    );

    let (slope, used) = bins.slope(fit_lo, fit_hi)?;
    rep.constant("tail_exponent", slope);
    rep.constant("expected_exponent", -s);
    rep.check(
        "tail_exponent",
        (slope + s).abs() <= 0.15,
        format!("fitted {slope:.4} on {used} bins, expected {:.4}", -s),
    );

    let c = bins.centers[cross.min(bins.centers.len())..]
        .iter()
        .zip(&bins.values[cross..])
        .map(|(x, v)| -v * bracket(*x).powf(s))
        .fold(f64::INFINITY, f64::min);
    let big_c = bins
        .centers
        .iter()
        .zip(&bins.values)
        .map(|(x, v)| (v + c * bracket(*x).powf(-s)) * bracket(*x).powf(beta))
        .fold(0.0f64, f64::max);
    rep.constant("c", c);
    rep.constant("C", big_c);
    rep.check(
        "constant_pair",
        c.is_finite() && c > 0.0 && big_c.is_finite(),
        format!("c = {c:.5}, C = {big_c:.5}"),
    );

    let reference = leading.reference_constant();
    rep.constant("reference_c", reference);
    let ratio = c / reference;
    rep.check(
        "reference_factor",
        (0.25..=4.0).contains(&ratio),
        format!("c / reference = {ratio:.4}"),
    );

    let aniso = bins.max_anisotropy(fit_lo, fit_hi);
    rep.constant("anisotropy", aniso);
    rep.check("radial", aniso < 0.05, format!("max binned anisotropy {aniso:.4}"));
    rep.spectra.insert("A_hat".into(), bins);
    Ok(rep)
}

/// Frequencies at which the `R₃` transform is sampled.
pub fn r3_frequencies() -> Vec<f64> {
    (-6..=8).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

/// Remainder certificate over a `δ` ladder of decompositions sharing `(α, β)`.
pub fn certify_remainders(ladder: &[TraceDecomposition]) -> Result<CertificateReport> {
    if ladder.len() < 3 {
        return Err(MsqgError::config(format!("remainder certificate needs at least 3 δ levels, got {}", ladder.len())));
    }
    let (alpha, beta) = (ladder[0].leading.alpha, ladder[0].leading.beta);
    if ladder.iter().any(|d| d.leading.alpha != alpha || d.leading.beta != beta) {
        return Err(MsqgError::config("δ ladder mixes different (α, β)"));
    }
    let mut rep = CertificateReport::new("remainders");
    rep.meta("alpha", alpha);
    rep.meta("beta", beta);
    rep.meta(
        "deltas",
        ladder.iter().map(|d| d.delta.to_string()).collect::<Vec<_>>().join(","),
    );
    rep.tolerance("r3_exponent", 0.2);
    rep.tolerance("constant_ratio", 2.0);
    rep.tolerance("l1_halving", 2.0);
    let expected = -(2.0 + 2.0 * alpha);
    let radii = log_grid(1e-4, 1.99, 40);
    let rhos = r3_frequencies();

    struct Level {
        c1: f64,
        c2: f64,
        c3: f64,
        l1: f64,
        slope: f64,
    }
    let mut levels = Vec::new();
    for d in ladder {
        let worst = |piece: fn(&Pieces) -> f64, env: &dyn Fn(f64) -> f64| {
            radii
                .iter()
                .map(|&r| piece(&d.pieces(r)).abs() / env(r))
                .fold(0.0f64, f64::max)
        };
        let c1 = worst(|p| p.r1, &|r| d.r1_envelope(r));
        let c2 = worst(|p| p.r2, &|r| d.r2_envelope(r));
        let hat: Vec<f64> = rhos.par_iter().map(|&rho| d.r3_transform(rho)).collect();
        let c3 = rhos
            .iter()
            .zip(&hat)
            .map(|(rho, v)| v.abs() * bracket(*rho).powf(2.0 + 2.0 * alpha))
            .fold(0.0f64, f64::max);
        let samples: Vec<([f64; 2], f64)> = rhos.iter().zip(&hat).map(|(rho, v)| ([*rho, 0.0], *v)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = samples
            .iter()
            .filter(|(x, v)| x[0] >= 1.0 && x[0] <= 10.0 && *v != 0.0)
            .map(|(x, v)| (bracket(x[0]).ln(), v.abs().ln()))
            .unzip();
        let slope = crate::covariance::least_squares(&xs, &ys).0;
        let l1 = d.r1_l1() + d.r2_l1();
        let tag = format!("delta={}", d.delta);
        rep.constant(&format!("{tag}/C1"), c1);
        rep.constant(&format!("{tag}/C2"), c2);
        rep.constant(&format!("{tag}/C3"), c3);
        rep.constant(&format!("{tag}/r3_exponent"), slope);
        rep.constant(&format!("{tag}/l1_r1_plus_r2"), l1);
        rep.spectra.insert(
            format!("R3_hat_{tag}"),
            BinnedSpectrum::from_curve(rhos.clone(), hat),
        );
        levels.push(Level { c1, c2, c3, l1, slope });
    }

    for (k, lv) in levels.iter().enumerate() {
        rep.check(
            &format!("r3_exponent[{k}]"),
            (lv.slope - expected).abs() <= 0.2,
            format!("δ = {}: fitted {:.3}, expected {expected:.3}", ladder[k].delta, lv.slope),
        );
    }
    let spread = |f: &dyn Fn(&Level) -> f64| {
        let v: Vec<f64> = levels.iter().map(f).collect();
        let hi = v.iter().cloned().fold(0.0f64, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    for (name, s) in [
        ("r1_constant", spread(&|l| l.c1)),
        ("r2_constant", spread(&|l| l.c2)),
        ("r3_constant", spread(&|l| l.c3)),
    ] {
        rep.constant(&format!("{name}_spread"), s);
        rep.check(name, s <= 2.0, format!("max/min across ladder {s:.3}"));
    }
    for k in 1..levels.len() {
        let ratio = levels[k - 1].l1 / levels[k].l1;
        let step = ladder[k - 1].delta / ladder[k].delta;
        rep.constant(&format!("l1_ratio[{k}]"), ratio);
        rep.check(
            &format!("l1_halving[{k}]"),
            ratio >= step,
            format!(
                "‖R1‖+‖R2‖ went {:.4e} -> {:.4e} (ratio {ratio:.3}) for δ {} -> {}",
                levels[k - 1].l1,
                levels[k].l1,
                ladder[k - 1].delta,
                ladder[k].delta
            ),
        );
    }
    Ok(rep)
}

/// `Σ_x Σ_y θ(x) θ(y) T(x - y) h⁴` with the lattice trace function
/// `T = tr[(Q(0) - Q) D²G]` built from the lattice covariance and multiplier.
pub fn trace_form_double_sum(cov: &CovarianceModel, green: &[f64], theta: &SpectralScalarField) -> Result<f64> {
    let lat = cov.lattice();
    if theta.lattice() != lat || green.len() != lat.mode_count() {
        return Err(MsqgError::config("double-sum oracle inputs live on different lattices"));
    }
    let n = lat.n();
    let q = cov.covariance_grid();
    let hess = |a: usize, b: usize| {
        SpectralScalarField::from_modes(lat, |i, j| {
            if a != b && lat.is_nyquist(i, j) {
                return Complex64::new(0.0, 0.0);
            }
            let xi = lat.frequency(i, j);
            Complex64::new(-(2.0 * PI).powi(2) * xi[a] * xi[b] * green[i * n + j], 0.0)
        })
        .to_physical()
    };
    let (h11, h12, h22) = (hess(0, 0), hess(0, 1), hess(1, 1));
    let t: Vec<f64> = (0..n * n)
        .map(|k| (q[0][0] - q[0][k]) * h11[k] + 2.0 * (q[1][0] - q[1][k]) * h12[k] + (q[2][0] - q[2][k]) * h22[k])
        .collect();
    let th = theta.to_physical();
    let h2 = lat.cell_area();
    let mut total = 0.0;
    for x in 0..n * n {
        let (xi, xj) = (x / n, x % n);
        let mut inner = 0.0;
        for y in 0..n * n {
            let (yi, yj) = (y / n, y % n);
            let d = ((xi + n - yi) % n) * n + (xj + n - yj) % n;
            inner += th[y] * t[d];
        }
        total += th[x] * inner;
    }
    Ok(total * h2 * h2)
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::covariance::SpectralBand;
    use crate::kernels::{KernelMode, KernelSet};
    use crate::solver::{target_datum, InitialSpec};
    use crate::trace::{TraceSymbol, Truncation};

    fn shared() -> &'static TraceDecomposition {
        static D: OnceLock<TraceDecomposition> = OnceLock::new();
        D.get_or_init(|| TraceDecomposition::new(0.4, 1.6, 0.1).unwrap())
    }

    #[test]
    fn pieces_sum_to_full_symbol() {
        let d = shared();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = 10f64.powf(rng.random_range(-4.0..1.5));
            let p = d.pieces(r);
            assert!((p.sum() - p.full).abs() <= 1e-8 * p.scale(), "r {r}: {p:?}");
        }
    }

    #[test]
    fn outside_cutoff_only_far_piece_survives() {
        let d = shared();
        for r in [2.0, 2.5, 7.0, 30.0] {
            let p = d.pieces(r);
            assert_eq!((p.a, p.r1, p.r2), (0.0, 0.0, 0.0));
            assert_eq!(p.r3, p.full);
        }
    }

    #[test]
    fn tables_match_direct_evaluation() {
        let d = shared();
        let green = RadialGreen::new(1.6, 0.1).unwrap();
        let moll = RadialCovariance::mollified(0.4, 0.1);
        let exact = RadialCovariance::exact(0.4);
        for r in [3e-3, 0.07, 0.6, 1.4] {
            let phi = transition(r);
            let ex = exact.deficits(r);
            let gap = green.gap_hessian(r).unwrap();
            let reg = green.regularized_hessian(r).unwrap();
            let m = moll.deficits(r);
            let r1 = -phi * (ex[0] * gap[0] + ex[1] * gap[1]);
            let r2 = phi * ((m[0] - ex[0]) * reg[0] + (m[1] - ex[1]) * reg[1]);
            let p = d.pieces(r);
            // cubic interpolation error with 40 nodes per decade, measured
            // against the size of the tabulated factors since reg = exact - gap
            // cancels near its sign changes
            let hess = exact_green_hessian(r, 1.6);
            let s1 = phi * (ex[0] * gap[0]).abs().max((ex[1] * gap[1]).abs());
            let s2 = phi
                * ((m[0] - ex[0]).abs() * (hess[0].abs() + gap[0].abs()))
                    .max((m[1] - ex[1]).abs() * (hess[1].abs() + gap[1].abs()));
            assert!((p.r1 - r1).abs() <= 2e-4 * s1, "R1 at r {r}: {} vs {r1}", p.r1);
            assert!((p.r2 - r2).abs() <= 2e-4 * s2, "R2 at r {r}: {} vs {r2}", p.r2);
        }
    }

    #[test]
    fn remainders_shrink_pointwise_with_delta() {
        // direct evaluation at fixed radii along a halving ladder, once the
        // radius is outside the regularization scale δ^{1/β}
        let exact = RadialCovariance::exact(0.4);
        for r in [0.3, 0.8, 1.5] {
            let ex = exact.deficits(r);
            let phi = transition(r);
            let mut last = [f64::INFINITY; 2];
            let mut last_moll = f64::INFINITY;
            let ladder = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625];
            for delta in ladder.into_iter().filter(|d: &f64| d.powf(1.0 / 1.6) <= r / 4.0) {
                let green = RadialGreen::new(1.6, delta).unwrap();
                let gap = green.gap_hessian(r).unwrap();
                let reg = green.regularized_hessian(r).unwrap();
                let m = RadialCovariance::mollified(0.4, delta).deficits(r);
                let r1 = (phi * (ex[0] * gap[0] + ex[1] * gap[1])).abs();
                let r2 = (phi * ((m[0] - ex[0]) * reg[0] + (m[1] - ex[1]) * reg[1])).abs();
                let moll = (m[0] - ex[0]).abs().max((m[1] - ex[1]).abs());
                assert!(moll < last_moll);
                last_moll = moll;
                assert!(r1 < last[0] && r2 < last[1], "r {r}, δ {delta}: {r1} {r2} after {last:?}");
                last = [r1, r2];
            }
        }
    }

    #[test]
    fn origin_cell_matches_leading_power_law() {
        let lead = shared().leading();
        let (a, b) = (0.4, 1.6);
        let s = 2.0 * a + b - 2.0;
        let [bl, bn] = lead.exact.leading_amplitudes();
        let k = (b - 2.0) / gamma_riesz(b) * ((b - 3.0) * bl + bn);
        let h: f64 = 1e-4;
        let angular = quadrature::composite(|t: f64| t.cos().powf(-s), 0.0, PI / 4.0, 8);
        let expected = 8.0 * k / s * (h / 2.0).powf(s) * angular;
        let got = lead.origin_cell_integral(h);
        assert!((got - expected).abs() < 1e-3 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn envelopes_vanish_outside_cutoff() {
        let d = shared();
        assert_eq!(d.r1_envelope(2.0), 0.0);
        assert_eq!(d.r2_envelope(3.0), 0.0);
        assert!((d.r2_epsilon() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lattice_trace_form_two_ways() {
        let lat = Lattice::new(16, 4.0).unwrap();
        let cov = CovarianceModel::new(0.5, 0.2, &lat, SpectralBand::Full).unwrap();
        let ks = KernelSet::new(1.5, 0.2, &lat).unwrap();
        let sym = TraceSymbol::new(&cov, &ks, KernelMode::Regularized, Truncation::Periodic).unwrap();
        let theta = target_datum(
            &InitialSpec::RandomBand {
                k_min: 1.0,
                k_max: 7.0,
                l2_norm: 1.0,
                seed: 5,
            },
            &lat,
        )
        .unwrap();
        let spectral = sym.quadratic_form(&theta).unwrap();
        let physical = trace_form_double_sum(&cov, ks.green(KernelMode::Regularized), &theta).unwrap();
        assert!((spectral - physical).abs() <= 1e-8 * physical.abs(), "{spectral} vs {physical}");
    }

    #[test]
    fn a_bound_rejects_short_lattice() {
        let lead = shared().leading();
        let lat = Lattice::new(64, 4.0).unwrap();
        assert!(matches!(certify_a_bound(lead, &lat), Err(MsqgError::Config(_))));
    }

    #[test]
    fn remainders_need_three_levels() {
        let d = shared().clone();
        let e = certify_remainders(&[d.clone(), d]);
        assert!(matches!(e, Err(MsqgError::Config(_))));
    }
}
