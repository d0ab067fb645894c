//! Large-deviation probabilities of Birkhoff averages.

use std::path::Path;

use super::{fit_loglog, orbit_values, par_indexed, LogLogFit, Observable};
use crate::error::{Error, Result};
use crate::surface::ReferenceModel;

/// Minimum exceedance count for a point to enter the fit.
pub const LDP_MIN_COUNT: u64 = 50;

/// Empirical `P(|S_n / n - mean| > eps)` per `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpCurve {
    pub eps: f64,
    pub mean: f64,
    pub n: Vec<usize>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub fit: Option<LogLogFit>,
    pub fit_note: Option<String>,
}

impl LdpCurve {
    pub fn prob(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    pub fn all_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// True when the data rule out a clean power law: no fit, or concave.
    pub fn polynomial_rejected(&self) -> bool {
        self.fit.is_none_or(|f| f.curved && f.curvature < 0.0)
    }

    /// Writes `n,prob`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "prob"])?;
        for (n, p) in self.n.iter().zip(self.prob()) {
            w.write_record(&[n.to_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deviation probabilities over `n_grid` from `n_samples` orbits.
///
/// `mean` is the pooled average over all samples at the largest `n`.
pub fn large_deviations(h: &Observable, eps: f64, n_grid: &[usize], n_samples: usize, model: &ReferenceModel, seed: u64) -> Result<LdpCurve> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam("eps must be positive".into()));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let (&lo, &hi) = match (grid.first(), grid.last()) {
        (Some(a), Some(b)) if *a > 0 => (a, b),
        _ => return Err(Error::InvalidParam("n grid must be nonempty and positive".into())),
    };
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::InvalidParam("n grid must span at least a decade".into()));
    }
    let partial = par_indexed(n_samples, |i| {
        let v = orbit_values(model, &[h], seed, i, hi)?.remove(0);
        let mut out = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        let mut k = 0;
        for (j, x) in v.iter().enumerate() {
            acc += x;
            if k < grid.len() && j + 1 == grid[k] {
                out.push(acc);
                k += 1;
            }
        }
        Ok(out)
    })?;
    let mean = partial.iter().map(|p| p[grid.len() - 1]).sum::<f64>() / (hi * n_samples) as f64;
    let counts: Vec<u64> = grid
        .iter()
        .enumerate()
        .map(|(k, &n)| partial.iter().filter(|p| (p[k] / n as f64 - mean).abs() > eps).count() as u64)
        .collect();
    let xs: Vec<f64> = grid.iter().zip(&counts).filter(|(_, &c)| c >= LDP_MIN_COUNT).map(|(&n, _)| n as f64).collect();
    let ys: Vec<f64> = counts.iter().filter(|&&c| c >= LDP_MIN_COUNT).map(|&c| c as f64 / n_samples as f64).collect();
    let (fit, fit_note) = if counts.iter().all(|&c| c == 0) {
        (None, Some("all deviation probabilities are zero; eps too large".to_string()))
    } else {
        match fit_loglog(&xs, &ys, None) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(LdpCurve { eps, mean, n: grid, counts, total: n_samples as u64, fit, fit_note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SlowdownParams;

    #[test]
    fn eps_beyond_oscillation_gives_zero() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let h = Observable::Trig { kx: 0, ky: 1, phase: 0.0 };
        let c = large_deviations(&h, 2.0 * h.oscillation() + 0.1, &[10, 30, 100], 200, &m, 3).unwrap();
        assert!(c.all_zero());
        assert!(c.fit.is_none() && c.fit_note.is_some());
    }

    #[test]
    fn probabilities_shrink_with_n() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let h = Observable::Trig { kx: 0, ky: 1, phase: 0.0 };
        let c = large_deviations(&h, 0.1, &[10, 100, 1000], 400, &m, 3).unwrap();
        assert!(c.counts[0] > c.counts[2]);
        assert!(large_deviations(&h, 0.1, &[10, 20], 10, &m, 3).is_err());
        assert!(large_deviations(&h, 0.0, &[10, 200], 10, &m, 3).is_err());
    }
}
