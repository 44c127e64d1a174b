//! Composite Gauss-Legendre quadrature with panel doubling.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{MsqgError, Result};

const ORDER: usize = 16;

/// Hard cap on panel count for adaptive loops.
pub const MAX_PANELS: usize = 1 << 20;

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = GaussLegendre::new(NonZeroUsize::new(ORDER).unwrap());
        gl.iter().map(|(x, w)| (*x, *w)).collect()
    })
}

/// One Gauss-Legendre panel on `[a, b]`.
pub fn panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Composite rule with `panels` equal panels.
pub fn composite(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| panel(&mut f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum()
}

/// Composite rule over the intervals between consecutive breakpoints.
pub fn over_breaks(mut f: impl FnMut(f64) -> f64, breaks: &[f64]) -> f64 {
    breaks.windows(2).map(|w| panel(&mut f, w[0], w[1])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Converged {
    pub value: f64,
    pub panels: usize,
}

/// Doubles the panel count until two successive composite values agree to
/// `rel_tol · |value| + abs_tol`.
pub fn adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    start_panels: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Converged> {
    let mut panels = start_panels.max(1);
    let mut prev = composite(&f, a, b, panels);
    loop {
        let next_panels = panels * 2;
        if next_panels > MAX_PANELS {
            return Err(MsqgError::numeric(format!(
                "quadrature on [{a:e}, {b:e}] not converged at {panels} panels: last value {prev:e}"
            )));
        }
        let next = composite(&f, a, b, next_panels);
        if !next.is_finite() {
            return Err(MsqgError::numeric(format!(
                "quadrature on [{a:e}, {b:e}] produced a non-finite value at {next_panels} panels"
            )));
        }
        if (next - prev).abs() <= rel_tol * next.abs() + abs_tol {
            return Ok(Converged {
                value: next,
                panels: next_panels,
            });
        }
        prev = next;
        panels = next_panels;
    }
}

/// Bisects every interval between `breaks` until two successive sums agree
/// to `rel_tol · |value| + abs_tol`.
pub fn adaptive_breaks(
    f: impl Fn(f64) -> f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Converged> {
    let mut pts = breaks.to_vec();
    let mut prev = over_breaks(&f, &pts);
    loop {
        let panels = 2 * (pts.len() - 1);
        if panels > MAX_PANELS {
            return Err(MsqgError::numeric(format!(
                "quadrature on [{:e}, {:e}] not converged at {} panels: last value {prev:e}",
                breaks[0],
                breaks[breaks.len() - 1],
                pts.len() - 1
            )));
        }
        let mut next_pts = Vec::with_capacity(panels + 1);
        for w in pts.windows(2) {
            next_pts.push(w[0]);
            next_pts.push(0.5 * (w[0] + w[1]));
        }
        next_pts.push(*pts.last().unwrap());
        let next = over_breaks(&f, &next_pts);
        if !next.is_finite() {
            return Err(MsqgError::numeric(format!(
                "quadrature produced a non-finite value at {panels} panels"
            )));
        }
        if (next - prev).abs() <= rel_tol * next.abs() + abs_tol {
            return Ok(Converged { value: next, panels });
        }
        prev = next;
        pts = next_pts;
    }
}

/// Breakpoints for an integrand with an algebraic singularity at 0 and
/// oscillation period about `period` up to `top`: dyadic grading down to
/// `2^-48` of the first panel, then panels no wider than `period / 4`.
pub fn graded_oscillatory_breaks(top: f64, period: f64) -> Vec<f64> {
    let first = (period / 4.0).min(1.0).min(top);
    let mut out = vec![0.0];
    for e in (1..=48).rev() {
        out.push(first * 0.5f64.powi(e));
    }
    let count = (((top - first) / (period / 4.0).min(1.0)).ceil() as usize).max(1);
    for i in 0..=count {
        out.push(first + (top - first) * i as f64 / count as f64);
    }
    out
}

/// Geometric breakpoints from `a > 0` to `b` with `per_octave` points per doubling.
pub fn geometric_breaks(a: f64, b: f64, per_octave: usize) -> Vec<f64> {
    let count = (((b / a).log2() * per_octave as f64).ceil() as usize).max(1);
    let ratio = (b / a).powf(1.0 / count as f64);
    let mut out: Vec<f64> = (0..=count).map(|i| a * ratio.powi(i as i32)).collect();
    out[count] = b;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = composite(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 1);
        let exact = (256.0 - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_oscillatory() {
        let c = adaptive(|x| (50.0 * x).cos(), 0.0, 3.0, 1, 1e-12, 0.0).unwrap();
        assert!((c.value - (150.0f64).sin() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_reports_failure() {
        let e = adaptive(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1, 1e-12, 0.0);
        assert!(matches!(e, Err(MsqgError::Numeric(_))));
    }

    #[test]
    fn graded_breaks_handle_endpoint_singularity() {
        let b = graded_oscillatory_breaks(10.0, 1.0);
        assert_eq!(b[0], 0.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        let c = adaptive_breaks(|x| x.powf(-0.4), &b, 1e-13, 0.0).unwrap();
        assert!((c.value - 10f64.powf(0.6) / 0.6).abs() < 1e-10);
    }

    #[test]
    fn breaks_cover_interval() {
        let b = geometric_breaks(1e-3, 10.0, 4);
        assert_eq!(b[0], 1e-3);
        assert_eq!(*b.last().unwrap(), 10.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        let v = over_breaks(|x| 1.0 / x, &b);
        assert!((v - (1e4f64).ln()).abs() < 1e-12);
    }
}
