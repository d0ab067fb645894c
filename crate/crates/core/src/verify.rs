//! Numerical checks of the trajectory estimates for the slowed flow near a
//! singularity, and of the polynomial length ratio of stable curves.
//!
//! Everything here runs in the plane of the flow (`s1` expanding, `s2`
//! contracting) or in one cone chart of the reference model.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::charts::{sector_map_inv, LocalMap};
use crate::error::{Error, Result};
use crate::params::SlowdownParams;
use crate::quad::integrate;
use crate::slowdown::{gamma_exponents, gp_time1, PlaneOrbit, PlanePoint};
use crate::stats::{fit_loglog, LogLogFit};
use crate::surface::stream_rng;
use crate::Direction;

/// Trajectory grid density, points per unit time.
pub const GRID_PER_UNIT: usize = 64;

/// Anchors used for the two-time inequalities.
const ANCHORS: usize = 16;

/// Tolerance on the boundary radius of entry and exit points.
const RADIUS_TOL: f64 = 1e-9;

/// A passage of the slowed flow through `D_r1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingRecord {
    pub entry: PlanePoint,
    pub exit: PlanePoint,
    /// Crossing time `T`.
    pub t_cross: f64,
    /// `T1 = T / 2`, where `s1 = s2`.
    pub t_half: f64,
    pub times: Vec<f64>,
    pub points: Vec<PlanePoint>,
    /// Orbit on the `s2` axis, followed for a fixed horizon rather than a
    /// crossing.
    pub axis: bool,
}

/// Time for the orbit through `s` (first quadrant) to move `s1` from `a` to `b`.
fn time_between(a: f64, b: f64, c: f64, params: &SlowdownParams) -> Result<f64> {
    let l = params.log_lambda();
    let f = |x: f64| {
        let e = x.exp();
        let u = e * e + c * c / (e * e);
        1.0 / (l * params.psi(u))
    };
    Ok(integrate(f, a.ln(), b.ln(), 1e-14, 1e-13)?.value)
}

impl CrossingRecord {
    /// The crossing entering at `entry`, which must lie on `|s| = r1` in the
    /// open first quadrant with `s2 > s1`.
    pub fn new(entry: PlanePoint, params: &SlowdownParams) -> Result<Self> {
        let r1 = params.r1;
        if !(entry.s1 > 0.0 && entry.s2 > entry.s1) {
            return Err(Error::Domain("entry must satisfy 0 < s1 < s2".into()));
        }
        if (entry.norm() / r1 - 1.0).abs() > RADIUS_TOL {
            return Err(Error::Domain(format!("entry radius {:e} is not r1 = {r1:e}", entry.norm())));
        }
        let c = entry.s1 * entry.s2;
        let t_cross = time_between(entry.s1, entry.s2, c, params)?;
        let steps = ((t_cross * GRID_PER_UNIT as f64).ceil() as usize).max(2);
        let dt = t_cross / steps as f64;
        let mut orbit = PlaneOrbit::new(entry, params)?;
        let mut times = Vec::with_capacity(steps + 1);
        let mut points = Vec::with_capacity(steps + 1);
        times.push(0.0);
        points.push(entry);
        for i in 1..=steps {
            points.push(orbit.advance(dt)?);
            times.push(i as f64 * dt);
        }
        let exit = *points.last().expect("nonempty");
        if (exit.norm() / r1 - 1.0).abs() > RADIUS_TOL {
            return Err(Error::Integrator(format!("exit radius {:e} misses r1 = {r1:e}", exit.norm())));
        }
        Ok(Self { entry, exit, t_cross, t_half: 0.5 * t_cross, times, points, axis: false })
    }

    /// Crossing entering at `|s| = r1` with `s1 / s2 = ratio`.
    pub fn with_ratio(ratio: f64, params: &SlowdownParams) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParam("ratio must lie in (0, 1)".into()));
        }
        let n = ratio.hypot(1.0);
        Self::new(PlanePoint::new(params.r1 * ratio / n, params.r1 / n), params)
    }

    /// The orbit from `(0, r1)` on the stable axis over `[0, horizon]`.
    pub fn axis(horizon: f64, params: &SlowdownParams) -> Result<Self> {
        let entry = PlanePoint::new(0.0, params.r1);
        let steps = ((horizon * GRID_PER_UNIT as f64).ceil() as usize).max(2);
        let dt = horizon / steps as f64;
        let mut orbit = PlaneOrbit::new(entry, params)?;
        let mut times = vec![0.0];
        let mut points = vec![entry];
        for i in 1..=steps {
            points.push(orbit.advance(dt)?);
            times.push(i as f64 * dt);
        }
        let exit = *points.last().expect("nonempty");
        Ok(Self { entry, exit, t_cross: horizon, t_half: horizon, times, points, axis: true })
    }

    /// The same crossing under `(s1, s2, t) -> (s2, s1, T - t)`.
    pub fn mirrored(&self) -> Self {
        let points: Vec<PlanePoint> = self.points.iter().rev().map(|p| p.swap()).collect();
        let times = self.times.iter().rev().map(|t| self.t_cross - t).collect();
        Self {
            entry: self.exit.swap(),
            exit: self.entry.swap(),
            t_cross: self.t_cross,
            t_half: self.t_half,
            times,
            points,
            axis: self.axis,
        }
    }

    fn anchor_indices(&self) -> Vec<usize> {
        let n = self.points.len() - 1;
        let mut idx: Vec<usize> = (0..=ANCHORS).map(|k| k * n / ANCHORS).collect();
        idx.extend(idx.clone().into_iter().map(|i| n - i));
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

/// Worst and best relative margins of the four two-time inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    /// `(min, max)` relative margin per inequality (a)-(d); `None` when it
    /// does not apply (the `s1` bounds on an axis orbit).
    pub margins: [Option<(f64, f64)>; 4],
    pub checks: usize,
}

impl BoundsReport {
    pub fn worst(&self) -> f64 {
        self.margins.iter().flatten().map(|m| m.0).fold(f64::INFINITY, f64::min)
    }

    pub fn passes(&self) -> bool {
        self.worst() >= -1e-9
    }
}

fn widen(slot: &mut Option<(f64, f64)>, m: f64) {
    *slot = Some(match *slot {
        None => (m, m),
        Some((lo, hi)) => (lo.min(m), hi.max(m)),
    });
}

/// Checks the pointwise bounds on `|s2(t)|` and `|s1(t)|` in terms of their
/// values at an anchor time, with `C0 = 2 alpha log(lambda) (p/2)^(2 alpha)`.
///
/// Margins are relative: `value / lower - 1` for lower bounds and
/// `1 - value / upper` for upper bounds.
pub fn verify_s1s2_bounds(rec: &CrossingRecord, params: &SlowdownParams) -> Result<BoundsReport> {
    if rec.points.len() != rec.times.len() || rec.points.len() < 2 {
        return Err(Error::Domain("record grid is malformed".into()));
    }
    let r1 = params.r1;
    if !rec.axis && (rec.entry.norm() / r1 - 1.0).abs() > RADIUS_TOL || (!rec.axis && (rec.exit.norm() / r1 - 1.0).abs() > RADIUS_TOL) {
        return Err(Error::Domain("record endpoints are not on |s| = r1".into()));
    }
    let c0 = params.c0();
    let a = params.alpha;
    let e = -1.0 / (2.0 * a);
    let two_a = 2f64.powf(a);
    let slack = 1e-12 * rec.t_cross.max(1.0);
    let mut margins = [None; 4];
    let mut checks = 0;
    let anchors = rec.anchor_indices();
    for &k in &anchors {
        let tk = rec.times[k];
        let s2k = rec.points[k].s2.abs();
        let s1k = rec.points[k].s1.abs();
        for (i, (&t, p)) in rec.times.iter().zip(&rec.points).enumerate() {
            let s2 = p.s2.abs();
            let s1 = p.s1.abs();
            if i >= k {
                let dt = t - tk;
                if t <= rec.t_half + slack {
                    let lower = s2k * (1.0 + two_a * c0 * s2k.powf(2.0 * a) * dt).powf(e);
                    widen(&mut margins[0], s2 / lower - 1.0);
                    checks += 1;
                }
                let upper = s2k * (1.0 + c0 * s2k.powf(2.0 * a) * dt).powf(e);
                widen(&mut margins[1], 1.0 - s2 / upper);
                checks += 1;
            }
            if i <= k && !rec.axis {
                let dt = tk - t;
                if t >= rec.t_half - slack {
                    let lower = s1k * (1.0 + two_a * c0 * s1k.powf(2.0 * a) * dt).powf(e);
                    widen(&mut margins[2], s1 / lower - 1.0);
                    checks += 1;
                }
                let upper = s1k * (1.0 + c0 * s1k.powf(2.0 * a) * dt).powf(e);
                widen(&mut margins[3], 1.0 - s1 / upper);
                checks += 1;
            }
        }
    }
    Ok(BoundsReport { margins, checks })
}

/// Entry points on `|s| = r1` with `s1 / s2` log-uniform in `[min_ratio, 1)`.
pub fn random_crossing(rng: &mut impl Rng, min_ratio: f64, params: &SlowdownParams) -> Result<CrossingRecord> {
    let ratio = (min_ratio.ln() * rng.random::<f64>()).exp().min(1.0 - 1e-6);
    CrossingRecord::with_ratio(ratio, params)
}

/// Population summary of [`verify_s1s2_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPopulation {
    pub crossings: usize,
    pub worst: [f64; 4],
    pub rows: Vec<(f64, f64, f64, [f64; 4])>,
}

impl BoundsPopulation {
    pub fn passes(&self) -> bool {
        self.worst.iter().all(|&m| m >= -1e-9)
    }

    /// Writes `s1_0,s2_0,T,margin_a,margin_b,margin_c,margin_d`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s1_0", "s2_0", "T", "margin_a", "margin_b", "margin_c", "margin_d"])?;
        for (s1, s2, t, m) in &self.rows {
            let mut rec = vec![format!("{s1:e}"), format!("{s2:e}"), format!("{t}")];
            rec.extend(m.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs [`verify_s1s2_bounds`] on `n` random crossings.
pub fn bounds_population(n: usize, min_ratio: f64, params: &SlowdownParams, seed: u64) -> Result<BoundsPopulation> {
    use rayon::prelude::*;
    let rows = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let rec = random_crossing(&mut rng, min_ratio, params)?;
            let rep = verify_s1s2_bounds(&rec, params)?;
            let m = rep.margins.map(|m| m.map_or(f64::INFINITY, |v| v.0));
            Ok((rec.entry.s1, rec.entry.s2, rec.t_cross, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst = [f64::INFINITY; 4];
    for r in &rows {
        for j in 0..4 {
            worst[j] = worst[j].min(r.3[j]);
        }
    }
    Ok(BoundsPopulation { crossings: n, worst, rows })
}

/// Two solutions of the slowed flow on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub base: CrossingRecord,
    pub other: Vec<PlanePoint>,
    pub mu: f64,
    /// `Delta s2 > 0` and `|Delta s1| <= mu |Delta s2|` on the whole grid.
    pub hyp_cone: bool,
    /// `|Delta s2(0) / s2(0)| <= (1 - mu) / 72`.
    pub hyp_small: bool,
    /// `|s~2| > |s2|` and `s1 != 0` on the whole grid.
    pub hyp_dominates: bool,
}

impl PairRecord {
    /// Companion solution whose offset at the exit time is
    /// `eta (mu u1, 1) / |(mu u1, 1)|`, pulled back to time 0 and scaled so
    /// that `Delta s2(0)` is half the admissible size.
    ///
    /// Offsets placed at time 0 leave the cone `|Delta s1| <= mu Delta s2`
    /// almost at once, because the flow expands `s1`; placed at the exit and
    /// pulled back they stay inside it on the whole crossing.
    pub fn build(base: CrossingRecord, u1: f64, mu: f64, params: &SlowdownParams) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) || !(-1.0..=1.0).contains(&u1) {
            return Err(Error::InvalidParam("need 0 < mu < 1 and |u1| <= 1".into()));
        }
        let t = base.t_cross;
        let dir = {
            let n = (mu * u1).hypot(1.0);
            (mu * u1 / n, 1.0 / n)
        };
        let target = 0.5 * (1.0 - mu) / 72.0 * base.entry.s2.abs();
        let pull = |eta: f64| -> Result<PlanePoint> {
            let end = PlanePoint::new(base.exit.s1 + eta * dir.0, base.exit.s2 + eta * dir.1);
            gp_time1(end, -t, params)
        };
        let mut eta = target * 1e-6;
        let mut start = pull(eta)?;
        for _ in 0..3 {
            let d2 = start.s2 - base.entry.s2;
            if !(d2 > 0.0) {
                return Err(Error::Domain("pulled-back offset has the wrong sign".into()));
            }
            eta *= target / d2;
            start = pull(eta)?;
        }
        Self::from_start(base, start, mu, params)
    }

    /// Companion solution starting at `start`.
    pub fn from_start(base: CrossingRecord, start: PlanePoint, mu: f64, params: &SlowdownParams) -> Result<Self> {
        let mut orbit = PlaneOrbit::new(start, params)?;
        let mut other = Vec::with_capacity(base.points.len());
        other.push(start);
        for w in base.times.windows(2) {
            other.push(orbit.advance(w[1] - w[0])?);
        }
        let mut hyp_cone = true;
        let mut hyp_dominates = true;
        for (s, q) in base.points.iter().zip(&other) {
            let d1 = q.s1 - s.s1;
            let d2 = q.s2 - s.s2;
            hyp_cone &= d2 > 0.0 && d1.abs() <= mu * d2.abs();
            hyp_dominates &= q.s2.abs() > s.s2.abs() && s.s1 != 0.0;
        }
        let hyp_small = ((other[0].s2 - base.entry.s2) / base.entry.s2).abs() <= (1.0 - mu) / 72.0;
        Ok(Self { base, other, mu, hyp_cone, hyp_small, hyp_dominates })
    }

    pub fn admissible(&self) -> bool {
        self.hyp_cone && self.hyp_small && self.hyp_dominates
    }

    fn delta(&self, i: usize) -> (f64, f64) {
        (self.other[i].s1 - self.base.points[i].s1, self.other[i].s2 - self.base.points[i].s2)
    }
}

/// Per-pair spread quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadReport {
    /// `1 - |Delta s(T)| / (sqrt(1 + mu^2) |s1(T) / s2(0)| |Delta s(0)|)`.
    pub deviation_margin: f64,
    /// `sup |Delta s2(t)| t^gamma' / |Delta s2(0)|` over grid times in `[1, T1]`.
    pub upper_envelope: Option<f64>,
    /// `inf |Delta s2(t)| t^gamma / |Delta s2(0)|` over the same times.
    pub lower_envelope: Option<f64>,
    /// `Delta s2(T) / Delta s2(T1)`.
    pub comparability: f64,
}

/// Spread checks for one admissible pair.
pub fn verify_spread(pair: &PairRecord, params: &SlowdownParams) -> Result<SpreadReport> {
    if !pair.admissible() {
        return Err(Error::Domain("pair violates the spread hypotheses".into()));
    }
    let g = gamma_exponents(params.alpha, pair.mu)?;
    let b = &pair.base;
    let last = b.points.len() - 1;
    let (d1_0, d2_0) = pair.delta(0);
    let (d1_t, d2_t) = pair.delta(last);
    let bound = (1.0 + pair.mu * pair.mu).sqrt() * (b.exit.s1 / b.entry.s2).abs() * d1_0.hypot(d2_0);
    let deviation_margin = 1.0 - d1_t.hypot(d2_t) / bound;
    let mut upper: Option<f64> = None;
    let mut lower: Option<f64> = None;
    let mut half_idx = 0;
    for (i, &t) in b.times.iter().enumerate() {
        if t <= b.t_half * (1.0 + 1e-12) {
            half_idx = i;
        }
        if t < 1.0 || t > b.t_half * (1.0 + 1e-12) {
            continue;
        }
        let r = pair.delta(i).1.abs() / d2_0.abs();
        let up = r * t.powf(g.gamma_prime);
        let lo = r * t.powf(g.gamma);
        upper = Some(upper.map_or(up, |u| u.max(up)));
        lower = Some(lower.map_or(lo, |l| l.min(lo)));
    }
    let comparability = d2_t / pair.delta(half_idx).1;
    Ok(SpreadReport { deviation_margin, upper_envelope: upper, lower_envelope: lower, comparability })
}

/// Envelope constants over a population of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadPopulation {
    pub pairs: usize,
    pub admissible: usize,
    pub skipped: usize,
    pub worst_deviation_margin: f64,
    /// Fitted `C1`: the largest upper envelope.
    pub c1: f64,
    /// Fitted `C2`: the smallest lower envelope.
    pub c2: f64,
    /// Range of `Delta s2(T) / Delta s2(T1)`.
    pub comparability: (f64, f64),
    pub rows: Vec<(f64, SpreadReport)>,
}

impl SpreadPopulation {
    pub fn envelopes_ok(&self) -> bool {
        self.c1.is_finite() && self.c1 > 0.0 && self.c2.is_finite() && self.c2 > 0.0
    }

    /// Writes `T,deviation_margin,upper_envelope,lower_envelope,comparability`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["T", "deviation_margin", "upper_envelope", "lower_envelope", "comparability"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        for (t, r) in &self.rows {
            w.write_record(&[
                format!("{t}"),
                format!("{:e}", r.deviation_margin),
                opt(r.upper_envelope),
                opt(r.lower_envelope),
                format!("{:e}", r.comparability),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds `n` pairs on random crossings and reduces their spread reports.
pub fn spread_population(n: usize, min_ratio: f64, mu: f64, params: &SlowdownParams, seed: u64) -> Result<SpreadPopulation> {
    use rayon::prelude::*;
    let results = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let base = random_crossing(&mut rng, min_ratio, params)?;
            let u1 = 2.0 * rng.random::<f64>() - 1.0;
            let t = base.t_cross;
            let pair = PairRecord::build(base, u1, mu, params)?;
            if !pair.admissible() {
                return Ok(None);
            }
            Ok(Some((t, verify_spread(&pair, params)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(f64, SpreadReport)> = results.into_iter().flatten().collect();
    let admissible = rows.len();
    let worst_deviation_margin = rows.iter().map(|r| r.1.deviation_margin).fold(f64::INFINITY, f64::min);
    let c1 = rows.iter().filter_map(|r| r.1.upper_envelope).fold(f64::NAN, f64::max);
    let c2 = rows.iter().filter_map(|r| r.1.lower_envelope).fold(f64::NAN, f64::min);
    let comparability = rows
        .iter()
        .map(|r| r.1.comparability)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v), a.1.max(v)));
    Ok(SpreadPopulation { pairs: n, admissible, skipped: n - admissible, worst_deviation_margin, c1, c2, comparability, rows })
}

/// One stable curve carried through the inner singular disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthRecord {
    /// Entry step `n` and exit step `m`.
    pub n: usize,
    pub m: usize,
    pub length_n: f64,
    pub length_m: f64,
}

impl LengthRecord {
    pub fn ratio(&self) -> f64 {
        self.length_m / self.length_n
    }
}

/// Vertices of the stable polyline.
const POLY_VERTICES: usize = 5;

/// Flat length of a chart polyline: the surface metric is `|w| |dw|`.
fn flat_length(ws: &[Complex64]) -> f64 {
    ws.windows(2).map(|p| (p[1] * p[1] - p[0] * p[0]).norm() / 2.0).sum()
}

/// Carries a stable curve through `D_rho1` and records its lengths there.
///
/// The orbit of chart point `w0` is followed forward to find the entry step
/// `n` and exit step `m`, and a few more steps while it stays in the chart.
/// A short polyline along the chart's stable direction at the last step is
/// then pulled back: backward iteration expands stable vectors, so the
/// pulled-back curve is a piece of stable curve. Its length at `n` is
/// tuned to `length_at_entry` with a first, two-point pass.
pub fn length_record(local: &LocalMap, w0: Complex64, length_at_entry: f64, cap: usize) -> Result<Option<LengthRecord>> {
    let p = local.params();
    let rho1 = p.rho1;
    let limit = p.a_star / p.lambda.sqrt() * 0.98;
    let mut orbit = vec![w0];
    let mut n = None;
    let mut m = None;
    let mut w = w0;
    while orbit.len() <= cap {
        w = local.g(w, Direction::Forward)?;
        orbit.push(w);
        let k = orbit.len() - 1;
        let inside = w.norm() <= rho1;
        if n.is_none() && inside {
            n = Some(k);
        } else if n.is_some() && m.is_none() && !inside {
            m = Some(k);
        }
        if w.norm() > limit {
            break;
        }
    }
    let (Some(n), Some(m)) = (n, m) else {
        return Ok(None);
    };
    let last = orbit.len() - 1;
    let w_end = orbit[last];
    // Stable direction at w: i / Phi'(w) with Phi'(w) = +-w^(p/2 - 1).
    let dir = {
        let d = Complex64::i() / w_end.powu(p.p / 2 - 1);
        d / d.norm()
    };
    let pull = |len: f64, count: usize| -> Result<(f64, f64)> {
        let mut verts: Vec<Complex64> = (0..count)
            .map(|j| w_end + dir * len * (j as f64 / (count - 1) as f64 - 0.5))
            .collect();
        let mut at_m = flat_length(&verts);
        for k in (n..last).rev() {
            for v in verts.iter_mut() {
                *v = local.g(*v, Direction::Backward)?;
            }
            if k == m {
                at_m = flat_length(&verts);
            }
        }
        Ok((at_m, flat_length(&verts)))
    };
    // Backward growth through a long passage can reach 1e8, so the chord is
    // tuned multiplicatively; a chord that grows out of the chart is shrunk.
    let mut len = 1e-12 * w_end.norm();
    for _ in 0..40 {
        let factor = match pull(len, 2) {
            Ok((_, grown)) if grown > 0.0 && grown.is_finite() => length_at_entry / grown,
            Ok(_) | Err(Error::Domain(_)) => 1e-3,
            Err(e) => return Err(e),
        };
        if (factor - 1.0).abs() < 1e-3 {
            break;
        }
        len *= factor.clamp(1e-3, 1e3);
    }
    let (length_m, length_n) = pull(len, POLY_VERTICES)?;
    Ok(Some(LengthRecord { n, m, length_n, length_m }))
}

/// Population envelopes of the length ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthReport {
    pub records: Vec<LengthRecord>,
    /// Curves that did not exit within the step cap.
    pub excluded: usize,
    /// `min ratio (m - n)^gamma`.
    pub lower_envelope: f64,
    /// `max ratio (m - n)^gamma'`.
    pub upper_envelope: f64,
    /// Envelopes on the even- and odd-indexed halves of the population.
    pub half_envelopes: [(f64, f64); 2],
    /// Fit of `ln ratio` against `ln (m - n)`; curvature marks exponential decay.
    pub fit: Option<LogLogFit>,
}

impl LengthReport {
    pub fn envelopes_ok(&self) -> bool {
        self.lower_envelope.is_finite() && self.lower_envelope > 0.0 && self.upper_envelope.is_finite() && self.upper_envelope > 0.0
    }

    /// Largest ratio between the two halves' envelopes.
    pub fn half_ratio(&self) -> f64 {
        let [a, b] = self.half_envelopes;
        let r = |x: f64, y: f64| (x / y).max(y / x);
        r(a.0, b.0).max(r(a.1, b.1))
    }

    pub fn exponential_flag(&self) -> bool {
        self.fit.is_some_and(|f| f.curved && f.curvature < 0.0)
    }

    /// Writes `n,m,length_n,length_m,ratio`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "m", "length_n", "length_m", "ratio"])?;
        for r in &self.records {
            w.write_record(&[
                r.n.to_string(),
                r.m.to_string(),
                format!("{:e}", r.length_n),
                format!("{:e}", r.length_m),
                format!("{:e}", r.ratio()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Chart start point for curve `i`: flow-plane point `(q r, r)` with
/// `r = 0.9 r0` and `q` log-uniform up to a cap that keeps the curve entering
/// `D_r1`, on the stable side.
fn length_seed(local: &LocalMap, rng: &mut impl Rng, min_q: f64) -> Result<Complex64> {
    let p = local.params();
    let r = 0.9 * p.r0;
    // The unslowed hyperbola through (q r, r) dips to radius r sqrt(2 q);
    // keep it well inside D_r1 so the curve enters.
    let max_q = 0.5 * (0.9 * p.r1 / r).powi(2);
    let q = (min_q.ln() + (max_q.ln() - min_q.ln()) * rng.random::<f64>()).exp();
    let zeta = local.push().push(Complex64::new(q * r, r))?;
    sector_map_inv(zeta, 0, p.p)
}

/// Length ratios of `n_segments` stable curves crossing `D_rho1`.
pub fn verify_length_ratio(n_segments: usize, length_at_entry: f64, min_q: f64, params: &SlowdownParams, mu: f64, seed: u64) -> Result<LengthReport> {
    use rayon::prelude::*;
    if n_segments < 2 {
        return Err(Error::InvalidParam("need at least two segments".into()));
    }
    if !(length_at_entry > 0.0 && length_at_entry <= 1e-4) {
        return Err(Error::InvalidParam("segment length must lie in (0, 1e-4]".into()));
    }
    let local = LocalMap::new(params)?;
    let g = gamma_exponents(params.alpha, mu)?;
    let cap = 200_000;
    let found = (0..n_segments as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let w0 = length_seed(&local, &mut rng, min_q)?;
            length_record(&local, w0, length_at_entry, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded = found.iter().filter(|r| r.is_none()).count();
    let records: Vec<LengthRecord> = found.into_iter().flatten().collect();
    let env = |rs: &mut dyn Iterator<Item = &LengthRecord>| {
        rs.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            let k = (r.m - r.n) as f64;
            (lo.min(r.ratio() * k.powf(g.gamma)), hi.max(r.ratio() * k.powf(g.gamma_prime)))
        })
    };
    let (lower_envelope, upper_envelope) = env(&mut records.iter());
    let half_envelopes = [env(&mut records.iter().step_by(2)), env(&mut records.iter().skip(1).step_by(2))];
    let xs: Vec<f64> = records.iter().map(|r| (r.m - r.n) as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.ratio()).collect();
    let fit = fit_loglog(&xs, &ys, None).ok();
    Ok(LengthReport { records, excluded, lower_envelope, upper_envelope, half_envelopes, fit })
}

/// Writes a `key = value` summary of a bounds population.
pub fn write_bounds_summary<W: Write>(mut w: W, pop: &BoundsPopulation) -> std::io::Result<()> {
    writeln!(w, "crossings = {}", pop.crossings)?;
    for (name, m) in ["a", "b", "c", "d"].iter().zip(pop.worst) {
        writeln!(w, "worst_margin_{name} = {m:e}")?;
    }
    writeln!(w, "pass = {}", pop.passes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Profile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> SlowdownParams {
        SlowdownParams::reference()
    }

    #[test]
    fn crossing_is_symmetric() {
        let p = params();
        let rec = CrossingRecord::with_ratio(0.05, &p).unwrap();
        assert!((rec.exit.s1 - rec.entry.s2).abs() < 1e-12 * p.r1);
        assert!((rec.exit.s2 - rec.entry.s1).abs() < 1e-12 * p.r1);
        let mid = rec.points.len() / 2;
        let q = rec.points[mid];
        assert!((q.s1 / q.s2 - 1.0).abs() < 1e-9);
        assert!(rec.points.iter().all(|s| s.norm() <= p.r1 * (1.0 + 1e-9)));
    }

    #[test]
    fn crossing_time_agrees_with_the_ode() {
        let p = params();
        let rec = CrossingRecord::with_ratio(0.2, &p).unwrap();
        let end = crate::slowdown::gp_reference(rec.entry, rec.t_cross, &p).unwrap();
        assert!((end.s1 / rec.entry.s2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn axis_saturates_the_s2_upper_bound() {
        let p = params();
        let rec = CrossingRecord::axis(50.0, &p).unwrap();
        let rep = verify_s1s2_bounds(&rec, &p).unwrap();
        let (lo, hi) = rep.margins[1].unwrap();
        assert!(lo.abs() < 1e-10 && hi.abs() < 1e-10, "{lo:e} {hi:e}");
        assert!(rep.margins[2].is_none() && rep.margins[3].is_none());
        assert!(rep.passes());
    }

    #[test]
    fn random_crossings_satisfy_the_bounds() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rec = random_crossing(&mut rng, 1e-3, &p).unwrap();
            let rep = verify_s1s2_bounds(&rec, &p).unwrap();
            assert!(rep.passes(), "{rep:?}");
        }
    }

    #[test]
    fn mirror_swaps_the_bounds() {
        let p = params();
        let rec = CrossingRecord::with_ratio(0.01, &p).unwrap();
        let a = verify_s1s2_bounds(&rec, &p).unwrap();
        let b = verify_s1s2_bounds(&rec.mirrored(), &p).unwrap();
        for (x, y) in [(0, 2), (1, 3), (2, 0), (3, 1)] {
            let (u, v) = (a.margins[x].unwrap(), b.margins[y].unwrap());
            assert!((u.0 - v.0).abs() < 1e-12 && (u.1 - v.1).abs() < 1e-12, "{x}: {u:?} vs {v:?}");
        }
    }

    #[test]
    fn rejects_bad_entries() {
        let p = params();
        assert!(CrossingRecord::new(PlanePoint::new(p.r1, 0.1 * p.r1), &p).is_err());
        assert!(CrossingRecord::new(PlanePoint::new(0.1 * p.r1, 0.5 * p.r1), &p).is_err());
    }

    #[test]
    fn constructed_pair_is_admissible() {
        let p = params();
        let base = CrossingRecord::with_ratio(0.01, &p).unwrap();
        let pair = PairRecord::build(base, 0.3, 0.25, &p).unwrap();
        assert!(pair.admissible(), "{} {} {}", pair.hyp_cone, pair.hyp_small, pair.hyp_dominates);
        let r = verify_spread(&pair, &p).unwrap();
        assert!(r.deviation_margin >= -1e-9, "{r:?}");
        assert!(r.comparability > 0.0);
    }

    #[test]
    fn near_axis_pair_meets_the_deviation_bound() {
        let p = params();
        let base = CrossingRecord::with_ratio(1e-4, &p).unwrap();
        let pair = PairRecord::build(base, 0.0, 0.25, &p).unwrap();
        assert!(pair.admissible());
        assert!(verify_spread(&pair, &p).unwrap().deviation_margin >= 0.0);
    }

    #[test]
    fn axis_pair_is_not_admissible() {
        let p = params();
        let base = CrossingRecord::axis(20.0, &p).unwrap();
        let start = PlanePoint::new(0.0, base.entry.s2 * (1.0 + 1e-3));
        let pair = PairRecord::from_start(base, start, 0.25, &p).unwrap();
        assert!(!pair.admissible());
        assert!(verify_spread(&pair, &p).is_err());
    }

    #[test]
    fn admissible_count_shrinks_with_mu() {
        let p = params();
        let mut last = usize::MAX;
        for mu in [0.1, 0.5, 0.9] {
            let mut count = 0;
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..20 {
                let base = random_crossing(&mut rng, 1e-3, &p).unwrap();
                // A fixed offset: admissibility depends on mu only through the hypotheses.
                let start = PlanePoint::new(base.entry.s1, base.entry.s2 * (1.0 + 0.004));
                if PairRecord::from_start(base, start, mu, &p).unwrap().hyp_small {
                    count += 1;
                }
            }
            assert!(count <= last);
            last = count;
        }
    }

    #[test]
    fn linear_length_ratio_is_exponential() {
        let p = params().with_profile(Profile::Linear);
        let local = LocalMap::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let w0 = length_seed(&local, &mut rng, 1e-4).unwrap();
            let r = length_record(&local, w0, 1e-5, 10_000).unwrap().unwrap();
            // Flat lengths scale by lambda^-1 per step along the stable direction.
            let want = p.lambda.powi(-((r.m - r.n) as i32));
            assert!((r.ratio() / want - 1.0).abs() < 1e-3, "{} vs {want}", r.ratio());
        }
    }

    #[test]
    fn halving_the_segment_keeps_the_ratio() {
        let p = params();
        let local = LocalMap::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let w0 = length_seed(&local, &mut rng, 1e-3).unwrap();
            // Entry happens near |zeta| ~ 1e-5, so the segments must be much shorter.
            let a = length_record(&local, w0, 1e-8, 100_000).unwrap().unwrap();
            let b = length_record(&local, w0, 5e-9, 100_000).unwrap().unwrap();
            assert_eq!((a.n, a.m), (b.n, b.m));
            assert!((a.ratio() / b.ratio() - 1.0).abs() < 0.05, "{} vs {}", a.ratio(), b.ratio());
        }
    }
}
