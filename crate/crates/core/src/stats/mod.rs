//! Monte Carlo ergodic statistics along orbits of the reference model.
//!
//! Every estimator draws its randomness from [`stream_rng`] keyed by a
//! work-item index, and merges per-item results in index order, so output
//! is bit-identical for a fixed seed regardless of scheduling.

mod clt;
mod corr;
mod ldp;
mod tail;

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::surface::{stream_rng, ReferenceModel, SurfacePoint};
use crate::Direction;

pub use clt::{clt_check, CltReport};
pub use corr::{correlations, default_lags, CorrSeries};
pub use ldp::{large_deviations, LdpCurve};
pub use tail::{return_tail, sojourn_tail, SojournReport, TailEstimate};

/// Steps discarded before an orbit is used.
pub const BURN_IN: usize = 1000;

/// Least-squares fit of `ln y` against `ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Quadratic coefficient of the fit in centred `ln x`.
    pub curvature: f64,
    pub curvature_stderr: f64,
    /// Set when the quadratic term is both significant and large enough to
    /// matter over the window; separates exponential from polynomial decay.
    pub curved: bool,
    pub window: (f64, f64),
    pub points: usize,
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<([f64; 3], [[f64; 3]; 3])> {
    // Inverse by cofactors; the matrix is a small Gram matrix.
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    let x = [0, 1, 2].map(|i| inv[i][0] * b[0] + inv[i][1] * b[1] + inv[i][2] * b[2]);
    Some((x, inv))
}

/// Fits `ln y = a + b ln x` over points with `x` in `window` (all points if
/// `None`) and `y > 0`, and tests a quadratic term for significance.
pub fn fit_loglog(xs: &[f64], ys: &[f64], window: Option<(f64, f64)>) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateFit("xs and ys differ in length".into()));
    }
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && **x >= lo && **x <= hi && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 5 {
        return Err(Error::DegenerateFit(format!("{n} usable points, need 5")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("all x values coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (nf - 2.0) / sxx).sqrt();

    let mut gram = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for &(x, y) in &pts {
        let t = x - mx;
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            rhs[i] += basis[i] * y;
            for j in 0..3 {
                gram[i][j] += basis[i] * basis[j];
            }
        }
    }
    let (curvature, curvature_stderr) = match solve3(gram, rhs) {
        Some((c, inv)) => {
            let rss2: f64 = pts
                .iter()
                .map(|&(x, y)| {
                    let t = x - mx;
                    (y - c[0] - c[1] * t - c[2] * t * t).powi(2)
                })
                .sum();
            let s2 = if n > 3 { rss2 / (nf - 3.0) } else { 0.0 };
            (c[2], (s2 * inv[2][2]).max(0.0).sqrt())
        }
        None => (0.0, 0.0),
    };
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let range = xmax - xmin;
    let curved = curvature.abs() > 3.0 * curvature_stderr && curvature.abs() * range * range > 0.05;
    Ok(LogLogFit {
        slope,
        intercept,
        stderr,
        curvature,
        curvature_stderr,
        curved,
        window: (xmin.exp(), xmax.exp()),
        points: n,
    })
}

/// Built-in observables on the surface. All are sheet-independent, so they
/// are functions on the torus factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `exp(1 - 1/(1 - (d/r)^2))` inside the flat disk of radius `r` around
    /// the torus point `center`, zero outside.
    Bump { center: [f64; 2], radius: f64 },
    /// `cos(2 pi (kx x + ky y) + phase)`.
    Trig { kx: i32, ky: i32, phase: f64 },
    /// `min(1, d / radius)` with `d` the flat distance to the nearest branch point.
    Taper { radius: f64 },
    Constant(f64),
    /// `v o g - v`.
    Coboundary(Box<Observable>),
}

/// Where an observable is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Everywhere,
    Disk { center: [f64; 2], radius: f64 },
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Bump { center, radius } => format!("bump({},{};{})", center[0], center[1], radius),
            Observable::Trig { kx, ky, phase } => format!("trig({kx},{ky};{phase})"),
            Observable::Taper { radius } => format!("taper({radius})"),
            Observable::Constant(c) => format!("const({c})"),
            Observable::Coboundary(v) => format!("cob[{}]", v.name()),
        }
    }

    /// Hölder exponent the observable is guaranteed to have.
    pub fn holder_exponent(&self) -> f64 {
        match self {
            Observable::Taper { .. } => 1.0,
            Observable::Coboundary(v) => v.holder_exponent(),
            _ => 1.0,
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Observable::Bump { center, radius } => Support::Disk { center: *center, radius: *radius },
            Observable::Constant(c) if *c == 0.0 => Support::Disk { center: [0.0, 0.0], radius: 0.0 },
            _ => Support::Everywhere,
        }
    }

    /// Flat distance from the support to the nearest branch point; zero for
    /// observables supported everywhere.
    pub fn support_clearance(&self, model: &ReferenceModel) -> f64 {
        match self.support() {
            Support::Everywhere => 0.0,
            Support::Disk { center, radius } => {
                let c = SurfacePoint::new(center[0], center[1], 0);
                let d = branch_distance(model, &c);
                (d - radius).max(0.0)
            }
        }
    }

    /// Largest minus smallest value.
    pub fn oscillation(&self) -> f64 {
        match self {
            Observable::Bump { .. } | Observable::Taper { .. } => 1.0,
            Observable::Trig { .. } => 2.0,
            Observable::Constant(_) => 0.0,
            Observable::Coboundary(v) => 2.0 * v.oscillation(),
        }
    }

    pub fn eval(&self, pt: &SurfacePoint, model: &ReferenceModel) -> Result<f64> {
        Ok(match self {
            Observable::Bump { center, radius } => {
                let c = SurfacePoint::new(center[0], center[1], pt.sheet);
                let d = model.displacement(&c, pt);
                let q = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
                if q < 1.0 {
                    (1.0 - 1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            }
            Observable::Trig { kx, ky, phase } => (TAU * (*kx as f64 * pt.x + *ky as f64 * pt.y) + phase).cos(),
            Observable::Taper { radius } => (branch_distance(model, pt) / radius).min(1.0),
            Observable::Constant(c) => *c,
            Observable::Coboundary(v) => {
                let next = model.global_g(pt, Direction::Forward)?;
                v.eval(&next, model)? - v.eval(pt, model)?
            }
        })
    }
}

/// Flat distance to the nearest branch point.
pub fn branch_distance(model: &ReferenceModel, pt: &SurfacePoint) -> f64 {
    model
        .charts
        .iter()
        .map(|c| {
            let d = model.displacement(&c.center, pt);
            d[0].hypot(d[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// A square in eigen coordinates centred at a torus point, ignoring sheets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: [f64; 2],
    pub half_side: f64,
}

impl Rect {
    /// Side 0.1 centred at `(1/2, 1/4)`, which sits more than 0.2 from both
    /// branch points of the reference model.
    pub fn reference() -> Self {
        Self { center: [0.5, 0.25], half_side: 0.05 }
    }

    pub fn contains(&self, model: &ReferenceModel, pt: &SurfacePoint) -> bool {
        let c = SurfacePoint::new(self.center[0], self.center[1], pt.sheet);
        let d = model.displacement(&c, pt);
        d[0].abs() <= self.half_side && d[1].abs() <= self.half_side
    }

    /// A point uniform for flat area in the rectangle, on a uniform sheet.
    pub fn sample<R: Rng>(&self, model: &ReferenceModel, rng: &mut R) -> SurfacePoint {
        let e = [
            self.half_side * (2.0 * rng.random::<f64>() - 1.0),
            self.half_side * (2.0 * rng.random::<f64>() - 1.0),
        ];
        let v = model.from_eigen(e);
        let sheet = rng.random::<bool>() as u8;
        SurfacePoint::new(self.center[0] + v[0], self.center[1] + v[1], sheet)
    }

    /// Flat area of the rectangle on both sheets over the area of the cover.
    pub fn measure_fraction(&self, model: &ReferenceModel) -> f64 {
        4.0 * self.half_side * self.half_side / model.sheet_area()
    }

    /// Fails unless the rectangle stays `min_clearance` from both branch points.
    pub fn check_clearance(&self, model: &ReferenceModel, min_clearance: f64) -> Result<()> {
        let c = SurfacePoint::new(self.center[0], self.center[1], 0);
        let d = branch_distance(model, &c) - self.half_side * std::f64::consts::SQRT_2;
        if d < min_clearance {
            return Err(Error::InvalidParam(format!(
                "return set comes within {d:.3} of a branch point (need {min_clearance})"
            )));
        }
        Ok(())
    }
}

/// Starting point for orbit `stream`: a flat-area sample pushed through the burn-in.
pub(crate) fn orbit_start(model: &ReferenceModel, seed: u64, stream: u64) -> Result<SurfacePoint> {
    let mut rng = stream_rng(seed, stream);
    let mut pt = model.random_point(&mut rng);
    for _ in 0..BURN_IN {
        pt = model.global_g(&pt, Direction::Forward)?;
    }
    Ok(pt)
}

/// Values of `obs` along `len` steps of orbit `stream` after burn-in.
pub(crate) fn orbit_values(model: &ReferenceModel, obs: &[&Observable], seed: u64, stream: u64, len: usize) -> Result<Vec<Vec<f64>>> {
    let mut pt = orbit_start(model, seed, stream)?;
    let mut out: Vec<Vec<f64>> = obs.iter().map(|_| Vec::with_capacity(len)).collect();
    for _ in 0..len {
        for (o, v) in obs.iter().zip(out.iter_mut()) {
            v.push(o.eval(&pt, model)?);
        }
        pt = model.global_g(&pt, Direction::Forward)?;
    }
    Ok(out)
}

/// Runs `f` over `0..n` on the worker pool and returns results in index order.
pub(crate) fn par_indexed<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(n: usize, f: F) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Log-spaced integer grid from `lo` to `hi` inclusive, `per_decade` points per decade.
pub fn log_grid(lo: usize, hi: usize, per_decade: usize) -> Vec<usize> {
    let mut out = vec![];
    if lo == 0 || hi < lo {
        return out;
    }
    let steps = ((hi as f64 / lo as f64).log10() * per_decade as f64).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let v = (lo as f64 * (hi as f64 / lo as f64).powf(i as f64 / steps as f64)).round() as usize;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SlowdownParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(-2)).collect();
        let f = fit_loglog(&xs, &ys, None).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
        assert!(!f.curved);
    }

    #[test]
    fn exponential_is_curved() {
        let xs: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        assert!(fit_loglog(&xs, &ys, None).unwrap().curved);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = log_grid(10, 10_000, 10).into_iter().map(|v| v as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(-1.5) * (1.0 + 0.05 * normal.inverse_cdf(rng.random::<f64>())))
            .collect();
        let f = fit_loglog(&xs, &ys, None).unwrap();
        assert!((f.slope + 1.5).abs() < 0.1, "{f:?}");
        assert!(!f.curved);
    }

    #[test]
    fn window_and_degenerate_inputs() {
        let xs: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(-3)).collect();
        let f = fit_loglog(&xs, &ys, Some((5.0, 10.0))).unwrap();
        assert_eq!(f.points, 6);
        assert!((f.window.0 - 5.0).abs() < 1e-12 && (f.window.1 - 10.0).abs() < 1e-12);
        assert!((f.slope + 3.0).abs() < 1e-12);
        assert!(fit_loglog(&xs, &ys, Some((5.0, 8.0))).is_err());
        assert!(fit_loglog(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], None).is_err());
        assert!(fit_loglog(&xs, &ys[..3], None).is_err());
    }

    #[test]
    fn log_grid_shape() {
        let g = log_grid(1, 1000, 5);
        assert_eq!(g.first(), Some(&1));
        assert_eq!(g.last(), Some(&1000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn observables() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let b = Observable::Bump { center: [0.5, 0.25], radius: 0.05 };
        assert!((b.eval(&SurfacePoint::new(0.5, 0.25, 1), &m).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(b.eval(&SurfacePoint::new(0.0, 0.25, 0), &m).unwrap(), 0.0);
        assert!(b.support_clearance(&m) > 0.15);
        let t = Observable::Taper { radius: 0.1 };
        assert_eq!(t.eval(&SurfacePoint::new(0.0, 0.5, 0), &m).unwrap(), 0.0);
        assert_eq!(t.eval(&SurfacePoint::new(0.5, 0.25, 0), &m).unwrap(), 1.0);
        let c = Observable::Coboundary(Box::new(Observable::Trig { kx: 1, ky: 0, phase: 0.0 }));
        let p = SurfacePoint::new(0.3, 0.1, 0);
        let q = m.global_g(&p, Direction::Forward).unwrap();
        assert_eq!(c.eval(&p, &m).unwrap(), (TAU * q.x).cos() - (TAU * p.x).cos());
    }

    #[test]
    fn reference_rect_clearance() {
        let m = ReferenceModel::reference(&SlowdownParams::reference()).unwrap();
        let r = Rect::reference();
        r.check_clearance(&m, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(r.contains(&m, &r.sample(&m, &mut rng)));
        }
        assert!(!r.contains(&m, &SurfacePoint::new(0.0, 0.0, 0)));
    }
}
