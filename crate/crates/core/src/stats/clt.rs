//! Central limit check for Birkhoff sums.

use std::path::Path;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{orbit_values, par_indexed, Observable};
use crate::error::{Error, Result};
use crate::surface::{stream_rng, ReferenceModel};

/// Trajectories used for the Green–Kubo autocovariances.
const GK_ORBITS: usize = 256;
const BOOTSTRAP: usize = 100;

/// Outcome of [`clt_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    /// Lag-0 autocovariance.
    pub c0: f64,
    /// Truncated Green–Kubo variance.
    pub sigma2: f64,
    pub gk_lags: usize,
    /// Kolmogorov–Smirnov distance to `N(0, sigma2)`; NaN if `sigma2 <= 0`.
    pub ks: f64,
    pub ks_bootstrap_se: f64,
    /// Kolmogorov–Smirnov distance to the point mass at 0.
    pub ks_point_mass: f64,
    /// Raised when `sigma2 <= 1e-3 c0`: the observable looks like a coboundary.
    pub cohomology_suspect: bool,
    /// Sorted normalized sums `(S_n - n mean) / sqrt(n)`.
    pub normalized: Vec<f64>,
}

fn ks_normal(sorted: &[f64], normal: &Normal) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = normal.cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Birkhoff sums of `h` over `n` steps from `n_samples` independent starts,
/// normalized by `sqrt(n)` and compared with the Green–Kubo Gaussian.
pub fn clt_check(h: &Observable, n: usize, n_samples: usize, model: &ReferenceModel, seed: u64) -> Result<CltReport> {
    if n < 1000 || n_samples < 1000 {
        return Err(Error::InvalidParam("need n >= 1000 and n_samples >= 1000".into()));
    }
    let gk_lags = (n / 10).min(500);
    let gk_orbits = GK_ORBITS.min(n_samples);
    // Per trajectory: raw sum, plus lagged cross sums for the first few.
    let parts = par_indexed(n_samples, |i| {
        let v = orbit_values(model, &[h], seed, i, n)?.remove(0);
        let sum: f64 = v.iter().sum();
        let lagged = if (i as usize) < gk_orbits {
            Some((0..=gk_lags).map(|k| v[k..].iter().zip(&v[..n - k]).map(|(a, b)| a * b).sum::<f64>()).collect::<Vec<_>>())
        } else {
            None
        };
        Ok((sum, lagged))
    })?;
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let mean = total / (n * n_samples) as f64;
    let gk_total: f64 = parts[..gk_orbits].iter().map(|p| p.0).sum();
    let gk_mean = gk_total / (n * gk_orbits) as f64;
    let mut acov = vec![0.0; gk_lags + 1];
    for p in &parts[..gk_orbits] {
        for (k, s) in p.1.as_ref().expect("lagged sums").iter().enumerate() {
            acov[k] += s;
        }
    }
    for (k, c) in acov.iter_mut().enumerate() {
        *c = *c / ((n - k) * gk_orbits) as f64 - gk_mean * gk_mean;
    }
    let c0 = acov[0];
    let sigma2 = c0 + 2.0 * acov[1..].iter().sum::<f64>();
    let cohomology_suspect = sigma2 <= 1e-3 * c0;

    let sn = (n as f64).sqrt();
    let mut normalized: Vec<f64> = parts.iter().map(|p| (p.0 - n as f64 * mean) / sn).collect();
    normalized.sort_by(f64::total_cmp);
    let m = normalized.len() as f64;
    let below = normalized.partition_point(|&x| x < 0.0) as f64 / m;
    let at_or_below = normalized.partition_point(|&x| x <= 0.0) as f64 / m;
    let ks_point_mass = below.max(1.0 - at_or_below);

    let (ks, ks_bootstrap_se) = if sigma2 > 0.0 {
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidParam(e.to_string()))?;
        let ks = ks_normal(&normalized, &normal);
        let mut rng = stream_rng(seed, u64::MAX);
        let boots: Vec<f64> = (0..BOOTSTRAP)
            .map(|_| {
                let mut r: Vec<f64> = (0..normalized.len()).map(|_| normalized[rng.random_range(0..normalized.len())]).collect();
                r.sort_by(f64::total_cmp);
                ks_normal(&r, &normal)
            })
            .collect();
        let bm = boots.iter().sum::<f64>() / BOOTSTRAP as f64;
        let bse = (boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (BOOTSTRAP - 1) as f64).sqrt();
        (ks, bse)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CltReport {
        n,
        samples: n_samples,
        mean,
        c0,
        sigma2,
        gk_lags,
        ks,
        ks_bootstrap_se,
        ks_point_mass,
        cohomology_suspect,
        normalized,
    })
}

impl CltReport {
    /// Writes `quantile,empirical,gaussian` on a grid of probability levels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantile", "empirical", "gaussian"])?;
        let normal = Normal::new(0.0, self.sigma2.max(f64::MIN_POSITIVE).sqrt()).map_err(|e| Error::InvalidParam(e.to_string()))?;
        let m = self.normalized.len();
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let idx = ((q * m as f64) as usize).min(m - 1);
            w.write_record(&[format!("{q}"), format!("{:e}", self.normalized[idx]), format!("{:e}", normal.inverse_cdf(q))])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SlowdownParams;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..1000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        assert!((ks_normal(&xs, &normal) - 0.0005).abs() < 1e-9);
    }

    #[test]
    fn coboundary_is_flagged() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let v = Observable::Trig { kx: 1, ky: 0, phase: 0.0 };
        let r = clt_check(&Observable::Coboundary(Box::new(v)), 1000, 1000, &m, 4).unwrap();
        assert!(r.cohomology_suspect, "{} vs {}", r.sigma2, r.c0);
        // Each sum telescopes to at most 2 in size, and so does n times the
        // pooled mean; both collapse under the sqrt(n) scaling.
        assert!(r.normalized.iter().all(|x| x.abs() <= 4.0 / (1000f64).sqrt() + 1e-12));
    }

    #[test]
    fn rejects_small_runs() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        assert!(clt_check(&Observable::Constant(1.0), 100, 1000, &m, 0).is_err());
    }
}
