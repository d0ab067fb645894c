//! Return-time and sojourn-time tails.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use super::{fit_loglog, log_grid, par_indexed, LogLogFit, Rect};
use crate::charts::{sector_map_inv, LocalMap};
use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::surface::{stream_rng, ReferenceModel};
use crate::Direction;

/// Samples handled by one work item.
const CHUNK: usize = 512;

/// Minimum survivor count for a threshold to enter the fit.
pub const TAIL_MIN_COUNT: u64 = 100;

/// Empirical survival function `P(tau > n)` with a log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub thresholds: Vec<usize>,
    pub survivors: Vec<u64>,
    pub total: u64,
    /// Samples still running at the step cap.
    pub censored: u64,
    pub mean: f64,
    /// Requested fit window; the fit itself reports the window it used.
    pub window: (usize, usize),
    pub fit: Option<LogLogFit>,
    /// Why `fit` is missing, if it is.
    pub fit_note: Option<String>,
}

impl TailEstimate {
    /// Builds the survival function of `times` (values above `cap` are
    /// censored) and fits it from `fit_from` to the last threshold with at
    /// least [`TAIL_MIN_COUNT`] survivors.
    pub fn from_times(mut times: Vec<u64>, cap: usize, fit_from: usize) -> Self {
        times.sort_unstable();
        let total = times.len() as u64;
        let censored = times.iter().filter(|&&t| t > cap as u64).count() as u64;
        let done: Vec<u64> = times.iter().copied().filter(|&t| t <= cap as u64).collect();
        let mean = if done.is_empty() { f64::NAN } else { done.iter().sum::<u64>() as f64 / done.len() as f64 };
        let thresholds = log_grid(1, cap.max(1), 20);
        let survivors: Vec<u64> = thresholds
            .iter()
            .map(|&n| total - times.partition_point(|&t| t <= n as u64) as u64)
            .collect();
        let hi = thresholds
            .iter()
            .zip(&survivors)
            .filter(|(_, &s)| s >= TAIL_MIN_COUNT)
            .map(|(&n, _)| n)
            .last()
            .unwrap_or(0);
        let window = (fit_from.max(1), hi);
        let xs: Vec<f64> = thresholds.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = survivors.iter().map(|&s| s as f64 / total.max(1) as f64).collect();
        let (fit, fit_note) = if window.1 <= window.0 {
            (None, Some(format!("no thresholds with >= {TAIL_MIN_COUNT} survivors beyond n = {}", window.0)))
        } else {
            match fit_loglog(&xs, &ys, Some((window.0 as f64, window.1 as f64))) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        Self { thresholds, survivors, total, censored, mean, window, fit, fit_note }
    }

    pub fn survival(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.thresholds
            .iter()
            .zip(&self.survivors)
            .map(|(&n, &s)| (n, s as f64 / self.total.max(1) as f64))
    }

    /// Writes `n,survivors,total,survival`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "survivors", "total", "survival"])?;
        for (i, (n, s)) in self.survival().enumerate() {
            w.write_record(&[n.to_string(), self.survivors[i].to_string(), self.total.to_string(), format!("{s:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First-return times to `rect` for points sampled uniformly in it.
///
/// The fit starts at five mean return times, where the exponential bulk of
/// the distribution has died out.
pub fn return_tail(rect: &Rect, n_max: usize, n_samples: usize, model: &ReferenceModel, seed: u64) -> Result<TailEstimate> {
    if n_max < 1000 {
        return Err(Error::InvalidParam("n_max must be at least 1000".into()));
    }
    rect.check_clearance(model, 0.0)?;
    let chunks = n_samples.div_ceil(CHUNK);
    let per_chunk = par_indexed(chunks, |c| {
        let mut rng = stream_rng(seed, c);
        let count = CHUNK.min(n_samples - c as usize * CHUNK);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut pt = rect.sample(model, &mut rng);
            let mut tau = n_max as u64 + 1;
            for n in 1..=n_max {
                pt = model.global_g(&pt, Direction::Forward)?;
                if rect.contains(model, &pt) {
                    tau = n as u64;
                    break;
                }
            }
            out.push(tau);
        }
        Ok(out)
    })?;
    let times: Vec<u64> = per_chunk.into_iter().flatten().collect();
    let completed = times.iter().filter(|&&t| t <= n_max as u64).count();
    if completed < 1000 {
        return Err(Error::Undersized(format!("only {completed} completed returns")));
    }
    let kac = 1.0 / rect.measure_fraction(model);
    Ok(TailEstimate::from_times(times, n_max, (5.0 * kac).round() as usize))
}

/// Sojourn statistics of visits to the singular neighbourhood `|w| <= rho0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournReport {
    pub tail: TailEstimate,
    /// Longest run inside the annulus `rho1 < |w| <= rho0`, over the first
    /// half of the samples and over all of them.
    pub annulus_max_half: u64,
    pub annulus_max: u64,
    /// Spearman correlation between `1 / min |w|` and the sojourn length.
    pub depth_rank_correlation: f64,
    /// Steps inside for the orbit started on an unstable prong at flow radius `r1`.
    pub prong_steps: u64,
    /// Time for the same orbit to reach flow radius `r0`, from the axis quadrature.
    pub prong_exit_time: f64,
}

struct Visit {
    length: u64,
    min_radius: f64,
    annulus_run: u64,
}

fn follow_visit(local: &LocalMap, mut w: Complex64, cap: usize) -> Result<Visit> {
    let p = local.params();
    let (rho0, rho1) = (p.rho0, p.rho1);
    let mut v = Visit { length: 0, min_radius: f64::INFINITY, annulus_run: 0 };
    let mut run = 0;
    while w.norm() <= rho0 && (v.length as usize) <= cap {
        let r = w.norm();
        v.length += 1;
        v.min_radius = v.min_radius.min(r);
        if r > rho1 {
            run += 1;
            v.annulus_run = v.annulus_run.max(run);
        } else {
            run = 0;
        }
        w = local.g(w, Direction::Forward)?;
    }
    Ok(v)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Sojourn times of visits to the singular neighbourhood.
///
/// Entry points are drawn from the invariant area restricted to the entry
/// set (points inside whose preimage is outside), by rejection in the cone
/// chart. Visits longer than `cap` steps are censored.
pub fn sojourn_tail(n_samples: usize, cap: usize, model: &ReferenceModel, seed: u64) -> Result<SojournReport> {
    if n_samples < 2 {
        return Err(Error::InvalidParam("need at least two samples".into()));
    }
    let local = model.local_map();
    let p = local.params();
    let rho0 = p.rho0;
    let mut dmax: f64 = 0.0;
    for i in 0..=2000 {
        let r = rho0 * i as f64 / 2000.0;
        dmax = dmax.max(local.omega_p_density(Complex64::new(r, 0.0))?.value);
    }
    dmax *= 1.05;
    let chunks = n_samples.div_ceil(CHUNK);
    let per_chunk = par_indexed(chunks, |c| {
        let mut rng = stream_rng(seed, c);
        let count = CHUNK.min(n_samples - c as usize * CHUNK);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let w = Complex64::from_polar(rho0 * rng.random::<f64>().sqrt(), std::f64::consts::TAU * rng.random::<f64>());
            if rng.random::<f64>() * dmax > local.omega_p_density(w)?.value {
                continue;
            }
            if local.g(w, Direction::Backward)?.norm() <= rho0 {
                continue;
            }
            out.push(follow_visit(local, w, cap)?);
        }
        Ok(out)
    })?;
    let visits: Vec<Visit> = per_chunk.into_iter().flatten().collect();
    let half = visits.len() / 2;
    let annulus_max_half = visits[..half].iter().map(|v| v.annulus_run).max().unwrap_or(0);
    let annulus_max = visits.iter().map(|v| v.annulus_run).max().unwrap_or(0);
    let depth: Vec<f64> = visits.iter().map(|v| 1.0 / v.min_radius).collect();
    let len: Vec<f64> = visits.iter().map(|v| v.length as f64).collect();
    let depth_rank_correlation = spearman(&depth, &len);

    // Unstable prong, flow radius r1: s = (r1, 0) maps to the positive real axis.
    let z = local.push().push(Complex64::new(p.r1, 0.0))?;
    let w = sector_map_inv(z, 0, p.p)?;
    let prong_steps = follow_visit(local, w, cap)?.length;
    let lam = p.log_lambda();
    let prong_exit_time = integrate(|x| 1.0 / (lam * p.psi((2.0 * x).exp())), p.r1.ln(), p.r0.ln(), 1e-12, 1e-12)?.value;

    let times: Vec<u64> = visits.iter().map(|v| v.length).collect();
    let tail = TailEstimate::from_times(times, cap, 10);
    Ok(SojournReport { tail, annulus_max_half, annulus_max, depth_rank_correlation, prong_steps, prong_exit_time })
}

impl SojournReport {
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "annulus_max_half = {}", self.annulus_max_half)?;
        writeln!(w, "annulus_max = {}", self.annulus_max)?;
        writeln!(w, "depth_rank_correlation = {}", self.depth_rank_correlation)?;
        writeln!(w, "prong_steps = {}", self.prong_steps)?;
        writeln!(w, "prong_exit_time = {}", self.prong_exit_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Profile, SlowdownParams};

    #[test]
    fn survival_bookkeeping() {
        let times: Vec<u64> = (1..=1000).collect();
        let t = TailEstimate::from_times(times, 500, 1);
        assert_eq!(t.total, 1000);
        assert_eq!(t.censored, 500);
        assert!(t.survivors.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(t.survivors[0], 999);
        assert_eq!(*t.survivors.last().unwrap(), 500);
        assert!((t.mean - 250.5).abs() < 1e-12);
    }

    #[test]
    fn exact_pareto_tail() {
        // tau = ceil(u^(-1/2)): P(tau > n) = n^-2 for integer n.
        let n = 200_000;
        let times: Vec<u64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64).powf(-0.5).ceil() as u64).collect();
        let t = TailEstimate::from_times(times, 10_000, 2);
        let f = t.fit.unwrap();
        assert!((f.slope + 2.0).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn linear_return_tail_is_not_polynomial() {
        let m = ReferenceModel::reference(&SlowdownParams::reference().with_profile(Profile::Linear)).unwrap();
        let t = return_tail(&Rect::reference(), 2000, 20_000, &m, 1).unwrap();
        assert!(t.survivors.windows(2).all(|w| w[0] >= w[1]));
        // Kac: mean return time is the inverse measure.
        let kac = 1.0 / Rect::reference().measure_fraction(&m);
        assert!((t.mean / kac - 1.0).abs() < 0.05, "{} vs {kac}", t.mean);
        let all: Vec<f64> = t.thresholds.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = t.survival().map(|(_, s)| s).collect();
        let f = fit_loglog(&all, &ys, Some((50.0, 1000.0))).unwrap();
        assert!(f.curved, "{f:?}");
    }

    #[test]
    fn return_tail_is_deterministic() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let a = return_tail(&Rect::reference(), 1000, 3000, &m, 9).unwrap();
        let b = return_tail(&Rect::reference(), 1000, 3000, &m, 9).unwrap();
        assert_eq!(a, b);
        assert!(return_tail(&Rect::reference(), 1000, 10, &m, 9).is_err());
    }

    #[test]
    fn prong_sojourn_matches_axis_time() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let r = sojourn_tail(2000, 1_000_000, &m, 5).unwrap();
        assert!((r.prong_steps as f64 - r.prong_exit_time).abs() <= 1.0, "{} vs {}", r.prong_steps, r.prong_exit_time);
        assert!(r.depth_rank_correlation > 0.9, "{}", r.depth_rank_correlation);
        assert!(r.annulus_max >= r.annulus_max_half);
    }
}
