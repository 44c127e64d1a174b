use std::collections::BTreeMap;

use serde::Serialize;

use crate::covariance::least_squares;
use crate::error::{MsqgError, Result};

/// One named pass/fail condition inside a certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Outcome of a certificate. A failing report always names a witness.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CertificateReport {
    pub name: String,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub witness: Option<String>,
    pub warnings: Vec<String>,
    /// Binned spectra for plotting; written as CSV rather than into the report.
    #[serde(skip)]
    pub spectra: BTreeMap<String, BinnedSpectrum>,
}

impl CertificateReport {
    pub fn new(name: &str) -> Self {
        CertificateReport {
            name: name.to_string(),
            pass: true,
            ..Default::default()
        }
    }

    pub fn constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.to_string(), value);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.to_string(), value);
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        let detail = detail.into();
        if !pass {
            self.pass = false;
            if self.witness.is_none() {
                self.witness = Some(format!("{name}: {detail}"));
            }
        }
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line: `name PASS|FAIL` followed by the witness on failure.
    pub fn summary(&self) -> String {
        match (&self.witness, self.pass) {
            (_, true) => format!("{} PASS", self.name),
            (Some(w), false) => format!("{} FAIL ({w})", self.name),
            (None, false) => format!("{} FAIL", self.name),
        }
    }
}

/// Radially binned spectrum with half-octave bins.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BinnedSpectrum {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean of `ln⟨r⟩` over the members of each bin.
    pub log_brackets: Vec<f64>,
    /// Mean of `ln|value|` over the nonzero members; `-inf` if all vanish.
    pub log_magnitudes: Vec<f64>,
    /// Spread between angular sectors after removing the in-bin radial trend;
    /// NaN when a sector is empty.
    pub anisotropy: Vec<f64>,
}

const SECTORS: usize = 4;

impl BinnedSpectrum {
    /// Bins `(radius, angle, value)` samples into `[2^{k/2}, 2^{(k+1)/2})`
    /// for radii in `[lo, hi]`. The angle is folded onto `[0, π/4]`.
    pub fn from_samples(samples: &[([f64; 2], f64)], lo: f64, hi: f64) -> Self {
        let first = (2.0 * lo.log2()).floor() as i64;
        let last = (2.0 * hi.log2()).ceil() as i64;
        let mut out = BinnedSpectrum::default();
        for k in first..last {
            let a = 2f64.powf(k as f64 / 2.0);
            let b = 2f64.powf((k + 1) as f64 / 2.0);
            if b > hi * (1.0 + 1e-12) || a < lo * (1.0 - 1e-12) {
                continue;
            }
            let members: Vec<&([f64; 2], f64)> = samples
                .iter()
                .filter(|(x, _)| {
                    let r = x[0].hypot(x[1]);
                    r >= a && r < b
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
            out.centers.push((a * b).sqrt());
            out.values.push(mean);
            out.counts.push(members.len());
            let bracket = |x: &[f64; 2]| (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt().ln();
            out.log_brackets.push(members.iter().map(|m| bracket(&m.0)).sum::<f64>() / members.len() as f64);
            let nonzero: Vec<f64> = members.iter().filter(|m| m.1 != 0.0).map(|m| m.1.abs().ln()).collect();
            out.log_magnitudes.push(if nonzero.is_empty() {
                f64::NEG_INFINITY
            } else {
                nonzero.iter().sum::<f64>() / nonzero.len() as f64
            });
            out.anisotropy.push(sector_spread(&members));
        }
        out
    }

    /// One sample per bin, e.g. a radial profile.
    pub fn from_curve(centers: Vec<f64>, values: Vec<f64>) -> Self {
        BinnedSpectrum {
            counts: vec![1; centers.len()],
            anisotropy: vec![0.0; centers.len()],
            log_brackets: centers.iter().map(|c| (1.0 + c * c).sqrt().ln()).collect(),
            log_magnitudes: values.iter().map(|v| v.abs().ln()).collect(),
            centers,
            values,
        }
    }

    /// Least-squares slope of the in-bin mean of `ln|value|` against the
    /// in-bin mean of `ln⟨r⟩` on `[lo, hi]`, with the number of bins used.
    pub fn slope(&self, lo: f64, hi: f64) -> Result<(f64, usize)> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..self.centers.len())
            .filter(|&k| {
                let c = self.centers[k];
                c >= lo && c <= hi && self.log_magnitudes[k].is_finite()
            })
            .map(|k| (self.log_brackets[k], self.log_magnitudes[k]))
            .unzip();
        if xs.len() < 3 {
            return Err(MsqgError::config(format!(
                "fewer than 3 bins between {lo} and {hi}; lattice does not resolve the fit window"
            )));
        }
        Ok((least_squares(&xs, &ys).0, xs.len()))
    }

    /// Largest finite anisotropy among bins with center in `[lo, hi]`.
    pub fn max_anisotropy(&self, lo: f64, hi: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.anisotropy)
            .filter(|(c, a)| **c >= lo && **c <= hi && a.is_finite())
            .fold(0.0, |m, (_, a)| m.max(*a))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| MsqgError::data(format!("spectrum csv: {e}"));
        wr.write_record(["center", "value", "count", "anisotropy"]).map_err(err)?;
        for k in 0..self.centers.len() {
            wr.serialize((self.centers[k], self.values[k], self.counts[k], self.anisotropy[k]))
                .map_err(err)?;
        }
        wr.flush().map_err(|e| MsqgError::data(format!("spectrum csv: {e}")))?;
        Ok(())
    }
}

/// Relative spread of the sector means of the detrended values.
fn sector_spread(members: &[&([f64; 2], f64)]) -> f64 {
    if members.iter().any(|m| m.1 == 0.0) || members.len() < 2 * SECTORS {
        return f64::NAN;
    }
    let sign = members[0].1.signum();
    if members.iter().any(|m| m.1.signum() != sign) {
        return f64::NAN;
    }
    let xs: Vec<f64> = members.iter().map(|m| m.0[0].hypot(m.0[1]).ln()).collect();
    let ys: Vec<f64> = members.iter().map(|m| m.1.abs().ln()).collect();
    let (slope, icpt) = if xs.iter().any(|&x| (x - xs[0]).abs() > 1e-12) {
        least_squares(&xs, &ys)
    } else {
        (0.0, ys.iter().sum::<f64>() / ys.len() as f64)
    };
    let mut sum = [0.0; SECTORS];
    let mut cnt = [0usize; SECTORS];
    for (k, m) in members.iter().enumerate() {
        let (a, b) = (m.0[0].abs(), m.0[1].abs());
        let folded = a.min(b).atan2(a.max(b));
        let s = ((folded / (std::f64::consts::FRAC_PI_4) * SECTORS as f64) as usize).min(SECTORS - 1);
        sum[s] += ys[k] - (icpt + slope * xs[k]);
        cnt[s] += 1;
    }
    if cnt.iter().any(|&c| c == 0) {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..SECTORS).map(|s| sum[s] / cnt[s] as f64).collect();
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    (hi - lo).exp() - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_check_sets_witness_once() {
        let mut r = CertificateReport::new("demo");
        r.check("a", true, "ok");
        r.check("b", false, "mode (3, 4)");
        r.check("c", false, "later");
        assert!(!r.pass);
        assert_eq!(r.witness.as_deref(), Some("b: mode (3, 4)"));
        assert!(r.summary().starts_with("demo FAIL"));
    }

    #[test]
    fn power_law_slope_and_isotropy() {
        let mut samples = Vec::new();
        for i in -40i32..=40 {
            for j in -40i32..=40 {
                let x = [i as f64, j as f64];
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 > 0.0 {
                    samples.push((x, (1.0 + r2).powf(-1.3)));
                }
            }
        }
        let b = BinnedSpectrum::from_samples(&samples, 1.0, 40.0);
        let (s, used) = b.slope(2.0, 30.0).unwrap();
        assert!(used >= 5);
        assert!((s + 2.6).abs() < 0.02, "{s}");
        assert!(b.max_anisotropy(4.0, 30.0) < 0.01);
    }
}
