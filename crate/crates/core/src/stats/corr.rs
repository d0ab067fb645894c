//! Correlation sequences by Birkhoff averages with jackknife errors.

use std::path::Path;

use super::{fit_loglog, log_grid, orbit_values, par_indexed, LogLogFit, Observable};
use crate::error::{Error, Result};
use crate::surface::ReferenceModel;

/// Estimated `Cor_n(h1, h2)` at a set of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrSeries {
    pub lags: Vec<usize>,
    pub corr: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Products summed per lag, over all orbits.
    pub samples: Vec<u64>,
    pub orbits: usize,
    pub fit: Option<LogLogFit>,
    pub fit_note: Option<String>,
}

/// Lags `0..=10` followed by a log grid up to `n_max`.
pub fn default_lags(n_max: usize) -> Vec<usize> {
    let mut lags: Vec<usize> = (0..=n_max.min(10)).collect();
    if n_max > 10 {
        lags.extend(log_grid(10, n_max, 15).into_iter().filter(|&n| n > 10));
    }
    lags
}

struct OrbitSums {
    sum_a: f64,
    sum_b: f64,
    len: f64,
    cross: Vec<f64>,
    counts: Vec<f64>,
}

fn estimate(parts: &[&OrbitSums], lag_idx: usize) -> f64 {
    let (mut sa, mut sb, mut n, mut c, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for o in parts {
        sa += o.sum_a;
        sb += o.sum_b;
        n += o.len;
        c += o.cross[lag_idx];
        k += o.counts[lag_idx];
    }
    c / k - (sa / n) * (sb / n)
}

/// `Cor_n(h1, h2) = E[h1(g^n x) h2(x)] - E[h1] E[h2]` estimated from
/// `n_orbits` independent orbits of length `orbit_len`.
///
/// The slope is fitted over the leading run of lags `n >= 1` where the
/// estimate exceeds three jackknife standard errors; with fewer than five
/// such lags the fit is reported unavailable.
pub fn correlations(
    h1: &Observable,
    h2: &Observable,
    n_max: usize,
    orbit_len: usize,
    n_orbits: usize,
    model: &ReferenceModel,
    seed: u64,
) -> Result<CorrSeries> {
    if orbit_len < 100 * n_max {
        return Err(Error::InvalidParam("orbit_len must be at least 100 n_max".into()));
    }
    if n_orbits < 2 {
        return Err(Error::InvalidParam("need at least two orbits for error bars".into()));
    }
    let lags = default_lags(n_max);
    let sums = par_indexed(n_orbits, |i| {
        let vals = orbit_values(model, &[h1, h2], seed, i, orbit_len)?;
        let (a, b) = (&vals[0], &vals[1]);
        let mut cross = Vec::with_capacity(lags.len());
        let mut counts = Vec::with_capacity(lags.len());
        for &n in &lags {
            let m = orbit_len - n;
            cross.push(a[n..].iter().zip(&b[..m]).map(|(x, y)| x * y).sum::<f64>());
            counts.push(m as f64);
        }
        Ok(OrbitSums { sum_a: a.iter().sum(), sum_b: b.iter().sum(), len: orbit_len as f64, cross, counts })
    })?;
    let all: Vec<&OrbitSums> = sums.iter().collect();
    let k = n_orbits as f64;
    let mut corr = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    for li in 0..lags.len() {
        let full = estimate(&all, li);
        let loo: Vec<f64> = (0..n_orbits)
            .map(|skip| {
                let rest: Vec<&OrbitSums> = sums.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, o)| o).collect();
                estimate(&rest, li)
            })
            .collect();
        let mean_loo = loo.iter().sum::<f64>() / k;
        let var = (k - 1.0) / k * loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
        corr.push(full);
        stderr.push(var.sqrt());
    }
    let samples = lags.iter().map(|&n| ((orbit_len - n) * n_orbits) as u64).collect();

    let mut xs = vec![];
    let mut ys = vec![];
    for (li, &n) in lags.iter().enumerate() {
        if n == 0 {
            continue;
        }
        if corr[li] > 3.0 * stderr[li] && corr[li] > 0.0 {
            xs.push(n as f64);
            ys.push(corr[li]);
        } else {
            break;
        }
    }
    let (fit, fit_note) = if xs.len() < 5 {
        (None, Some(format!("only {} significant lags; signal below the noise floor", xs.len())))
    } else {
        match fit_loglog(&xs, &ys, None) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(CorrSeries { lags, corr, stderr, samples, orbits: n_orbits, fit, fit_note })
}

impl CorrSeries {
    /// Writes `n,corr,stderr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "corr", "stderr"])?;
        for i in 0..self.lags.len() {
            w.write_record(&[self.lags[i].to_string(), format!("{:e}", self.corr[i]), format!("{:e}", self.stderr[i])])?;
        }
        w.flush()?;
        Ok(())
    }

    /// True when the data rule out a clean power law: no fit, or a curved one.
    pub fn polynomial_rejected(&self) -> bool {
        self.fit.is_none_or(|f| f.curved)
    }
}
