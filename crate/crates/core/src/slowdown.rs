//! The slowed hyperbolic flow in the plane and its time-t maps.
//!
//! The flow `s1' = L s1 psi(|s|^2)`, `s2' = -L s2 psi(|s|^2)` with
//! `L = log(lambda)` keeps `c = |s1 s2|` constant, so it is integrated in the
//! log-variable `x = ln|s1|` along the hyperbola: `dt/dx = 1 / (L psi(u))` with
//! `u = e^{2x} + c^2 e^{-2x}`. Time-t maps come from quadrature and inversion.

use num_complex::Complex64;

use crate::charts::{sector_map, MassPush};
use crate::error::{finite, Error, Result};
use crate::params::{Profile, SlowdownParams};
use crate::quad::integrate;
use crate::root::newton_bracketed;
use crate::stats::fit_loglog;

const QUAD_REL: f64 = 1e-14;
const QUAD_ABS: f64 = 1e-16;
const X_TOL: f64 = 1e-16;

/// A point of the plane where the slowed flow acts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanePoint {
    pub s1: f64,
    pub s2: f64,
}

impl PlanePoint {
    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    pub fn norm(&self) -> f64 {
        self.s1.hypot(self.s2)
    }

    pub fn norm_sq(&self) -> f64 {
        self.s1 * self.s1 + self.s2 * self.s2
    }

    pub fn swap(self) -> Self {
        Self { s1: self.s2, s2: self.s1 }
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.s1, self.s2)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self { s1: z.re, s2: z.im }
    }
}

/// Validated evaluation of the slow-down factor.
pub fn psi_eval(u: f64, params: &SlowdownParams) -> Result<f64> {
    let u = finite(u, "psi argument")?;
    if u < 0.0 {
        return Err(Error::Domain(format!("psi needs u >= 0, got {u:e}")));
    }
    Ok(params.psi(u))
}

/// `H(s) = s1 s2 log(lambda)`.
pub fn hamiltonian_h(s: PlanePoint, params: &SlowdownParams) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::NonFinite("Hamiltonian argument"));
    }
    Ok(s.s1 * s.s2 * params.log_lambda())
}

/// Smallest `|s|^2` met by the unslowed orbit `(s1 lambda^tau, s2 lambda^-tau)`
/// for `tau` between 0 and `t`.
pub fn linear_orbit_min_sq(s: PlanePoint, t: f64, params: &SlowdownParams) -> f64 {
    let l = params.log_lambda();
    let end = PlanePoint::new(s.s1 * (l * t).exp(), s.s2 * (-l * t).exp());
    let mut m = s.norm_sq().min(end.norm_sq());
    if s.s1 != 0.0 && s.s2 != 0.0 {
        let tau = (s.s2.abs() / s.s1.abs()).ln() / (2.0 * l);
        if tau * t > 0.0 && tau.abs() < t.abs() {
            m = m.min(2.0 * (s.s1 * s.s2).abs());
        }
    }
    m
}

#[inline]
fn u_of(x: f64, c: f64) -> f64 {
    let a = x.exp();
    let b = c * (-x).exp();
    a * a + b * b
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Free,
    Pure,
    Blend,
}

fn classify(u: f64, params: &SlowdownParams) -> Piece {
    match params.profile {
        Profile::Linear => Piece::Free,
        Profile::Slowed => {
            if u >= params.r0 * params.r0 {
                Piece::Free
            } else if u <= params.r1 * params.r1 {
                Piece::Pure
            } else {
                Piece::Blend
            }
        }
    }
}

/// Points where `u(x)` crosses `r1^2` or `r0^2`, sorted.
fn breakpoints(c: f64, params: &SlowdownParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(4);
    if params.profile == Profile::Linear {
        return out;
    }
    for r in [params.r1, params.r0] {
        let big_u = r * r;
        if big_u > 2.0 * c {
            let disc = (big_u - 2.0 * c).sqrt() * (big_u + 2.0 * c).sqrt();
            let y_hi = 0.5 * (big_u + disc);
            out.push(0.5 * y_hi.ln());
            if c > 0.0 {
                out.push(0.5 * (c * c / y_hi).ln());
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Time needed to move the log-coordinate from `x` to `y` at fixed `c`.
fn piece_time(x: f64, y: f64, c: f64, kind: Piece, params: &SlowdownParams) -> Result<f64> {
    let l = params.log_lambda();
    if x == y {
        return Ok(0.0);
    }
    match kind {
        Piece::Free => Ok((y - x).abs() / l),
        Piece::Pure if c == 0.0 => {
            let a2 = 2.0 * params.alpha;
            let kk = params.k_pure();
            Ok(((-a2 * x).exp() - (-a2 * y).exp()).abs() / (a2 * l * kk))
        }
        _ => {
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            if !(lo.is_finite() && hi.is_finite()) {
                return Ok(f64::INFINITY);
            }
            let q = integrate(|v| 1.0 / (l * params.psi(u_of(v, c))), lo, hi, QUAD_ABS, QUAD_REL)?;
            Ok(q.value)
        }
    }
}

/// Solves for the point reached after time `tau` inside a single piece
/// starting at `x` and moving in direction `dir`.
fn solve_in_piece(x: f64, b: f64, tau: f64, dir: f64, c: f64, kind: Piece, piece_total: f64, params: &SlowdownParams) -> Result<f64> {
    let l = params.log_lambda();
    match kind {
        Piece::Free => Ok(x + dir * l * tau),
        Piece::Pure if c == 0.0 => {
            let a2 = 2.0 * params.alpha;
            let e = (-a2 * x).exp() - dir * a2 * l * params.k_pure() * tau;
            if !(e > 0.0) {
                return Err(Error::RootFind("pure-power axis piece overshoot"));
            }
            Ok(-e.ln() / a2)
        }
        _ => {
            let width = (b - x).abs();
            let mut anchor_h = 0.0;
            let mut anchor_t = 0.0;
            let guess = (tau / piece_total) * width;
            let h = newton_bracketed(
                |h| {
                    let inc = piece_time(x + dir * anchor_h, x + dir * h, c, Piece::Blend, params)?;
                    let t_h = if h >= anchor_h { anchor_t + inc } else { anchor_t - inc };
                    anchor_h = h;
                    anchor_t = t_h;
                    let deriv = 1.0 / (l * params.psi(u_of(x + dir * h, c)));
                    Ok((t_h - tau, deriv))
                },
                0.0,
                width,
                guess,
                X_TOL,
            )?;
            Ok(x + dir * h)
        }
    }
}

/// Moves `x = ln|s1|` along the hyperbola `|s1 s2| = c` for time `t`.
fn advance_log(x0: f64, c: f64, t: f64, params: &SlowdownParams) -> Result<f64> {
    let dir = t.signum();
    let mut tau = t.abs();
    let mut x = x0;
    let bps = breakpoints(c, params);
    for _ in 0..8 {
        let next = if dir > 0.0 {
            bps.iter().copied().find(|&b| b > x).unwrap_or(f64::INFINITY)
        } else {
            bps.iter().rev().copied().find(|&b| b < x).unwrap_or(f64::NEG_INFINITY)
        };
        let probe = if next.is_finite() { 0.5 * (x + next) } else { x + dir };
        let kind = classify(u_of(probe, c), params);
        let total = piece_time(x, next, c, kind, params)?;
        if total > tau {
            return solve_in_piece(x, next, tau, dir, c, kind, total, params);
        }
        tau -= total;
        x = next;
        if tau == 0.0 {
            return Ok(x);
        }
    }
    Err(Error::RootFind("piece walk did not terminate"))
}

/// Time-t map of the slowed flow.
///
/// Orbits that stay where `psi == 1` are mapped exactly to
/// `(lambda^t s1, lambda^-t s2)`. Otherwise the time along the invariant
/// hyperbola is integrated and inverted; `s1 s2` is conserved to rounding.
pub fn gp_time1(s: PlanePoint, t: f64, params: &SlowdownParams) -> Result<PlanePoint> {
    if !s.is_finite() {
        return Err(Error::NonFinite("flow start point"));
    }
    let t = finite(t, "flow time")?;
    if t == 0.0 || (s.s1 == 0.0 && s.s2 == 0.0) {
        return Ok(s);
    }
    if s.s1 == 0.0 {
        // (s2, s1) solves the same system with time reversed.
        return gp_time1(s.swap(), -t, params).map(PlanePoint::swap);
    }
    let l = params.log_lambda();
    if params.profile == Profile::Linear || linear_orbit_min_sq(s, t, params) >= params.r0 * params.r0 {
        let e = (l * t).exp();
        return Ok(PlanePoint::new(s.s1 * e, s.s2 / e));
    }
    let c = (s.s1 * s.s2).abs();
    let x1 = advance_log(s.s1.abs().ln(), c, t, params)?;
    let a = x1.exp();
    Ok(PlanePoint::new(a.copysign(s.s1), (c / a).copysign(s.s2)))
}

/// Reference solution of the same flow by an adaptive Runge–Kutta method.
pub fn gp_reference(s: PlanePoint, t: f64, params: &SlowdownParams) -> Result<PlanePoint> {
    let l = params.log_lambda();
    let f = |_: f64, y: &[f64; 2]| {
        let g = l * params.psi(y[0] * y[0] + y[1] * y[1]);
        [g * y[0], -g * y[1]]
    };
    let y = crate::ode::Dopri5::default().solve(f, 0.0, [s.s1, s.s2], t)?;
    Ok(PlanePoint::new(y[0], y[1]))
}

/// Samples a trajectory of the slowed flow on a uniform time grid.
///
/// Each step solves `int_x^y dx / (L psi) = dt` by Newton's method from the
/// previous grid point, so a long trajectory costs O(n) short quadratures.
#[derive(Debug, Clone)]
pub struct PlaneOrbit<'a> {
    params: &'a SlowdownParams,
    swapped: bool,
    sign1: f64,
    sign2: f64,
    x: f64,
    c: f64,
}

impl<'a> PlaneOrbit<'a> {
    pub fn new(s: PlanePoint, params: &'a SlowdownParams) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::NonFinite("orbit start point"));
        }
        if s.s1 == 0.0 && s.s2 == 0.0 {
            return Err(Error::Domain("orbit through the fixed point".into()));
        }
        let swapped = s.s1 == 0.0;
        let q = if swapped { s.swap() } else { s };
        Ok(Self {
            params,
            swapped,
            sign1: q.s1.signum(),
            sign2: if q.s2 < 0.0 { -1.0 } else { 1.0 },
            x: q.s1.abs().ln(),
            c: (q.s1 * q.s2).abs(),
        })
    }

    pub fn point(&self) -> PlanePoint {
        let a = self.x.exp();
        let q = PlanePoint::new(self.sign1 * a, self.sign2 * self.c / a);
        if self.swapped {
            q.swap()
        } else {
            q
        }
    }

    /// Advances by `dt` (negative allowed).
    pub fn advance(&mut self, dt: f64) -> Result<PlanePoint> {
        let dt = if self.swapped { -dt } else { dt };
        let l = self.params.log_lambda();
        let rate = |x: f64| l * self.params.psi(u_of(x, self.c));
        let x0 = self.x;
        let mut y = x0 + dt * rate(x0);
        for _ in 0..60 {
            let q = integrate(|v| 1.0 / rate(v), x0, y, QUAD_ABS, QUAD_REL)?;
            let step = (dt - q.value) * rate(y);
            y += step;
            if !y.is_finite() {
                return Err(Error::NonFinite("orbit sampler"));
            }
            if step.abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
                self.x = y;
                return Ok(self.point());
            }
        }
        Err(Error::RootFind("orbit sampler step did not converge"))
    }
}

/// Exponents of the trajectory estimates near a singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaExponents {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// `gamma = 1/(2a) + 2^(a-1)(1+mu) + (1-mu)/6`, `gamma' = 1/(2a) + (1-mu)/2^(a+2)`
/// together with the auxiliary `beta`, `beta1`, `beta2`.
pub fn gamma_exponents(alpha: f64, mu: f64) -> Result<GammaExponents> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParam(format!("mu = {mu} outside (0, 1)")));
    }
    let half_inv = 1.0 / (2.0 * alpha);
    let beta = (1.0 - mu) / 2f64.powf(alpha + 2.0);
    let beta1 = (1.0 + mu) * 2f64.powf(alpha - 1.0) + (1.0 - mu) / 6.0;
    Ok(GammaExponents {
        gamma: half_inv + beta1,
        gamma_prime: half_inv + beta,
        beta,
        beta1,
        beta2: beta1 + 2.0,
    })
}

/// Result of the second-derivative scaling fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub stderr: f64,
    pub used: usize,
    pub expected: f64,
}

/// Fits the log-log slope of the Hessian norm of `H_p = H o phi^-1 o Phi_0`
/// against the chart radius.
///
/// Radii whose difference stencil leaves the pure-power part of the chart or
/// the sector wedge are dropped. `step_frac` is the stencil step relative to
/// the radius.
pub fn hp_second_derivative_scaling(params: &SlowdownParams, radii: &[f64], step_frac: f64) -> Result<ScalingFit> {
    let push = MassPush::new(params)?;
    let p = params.p as f64;
    let tau = 0.4 * std::f64::consts::PI / p;
    let limit = params.rho_pure();
    let h_p = |z: Complex64| -> Result<f64> {
        let zeta = sector_map(z, 0, params.p)?;
        let s = push.push_inv(zeta)?;
        Ok(params.log_lambda() * s.re * s.im)
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &rho in radii {
        if !(rho > 0.0) || !rho.is_finite() {
            continue;
        }
        let h = step_frac * rho;
        if rho + 1.5 * h >= limit {
            continue;
        }
        let z = Complex64::from_polar(rho, tau);
        let ex = Complex64::new(h, 0.0);
        let ey = Complex64::new(0.0, h);
        let f0 = h_p(z)?;
        let fxx = (h_p(z + ex)? - 2.0 * f0 + h_p(z - ex)?) / (h * h);
        let fyy = (h_p(z + ey)? - 2.0 * f0 + h_p(z - ey)?) / (h * h);
        let fxy = (h_p(z + ex + ey)? - h_p(z + ex - ey)? - h_p(z - ex + ey)? + h_p(z - ex - ey)?) / (4.0 * h * h);
        let norm = (fxx * fxx + 2.0 * fxy * fxy + fyy * fyy).sqrt();
        if norm.is_finite() && norm > 0.0 {
            xs.push(rho);
            ys.push(norm);
        }
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!("only {} usable radii below {limit:e}", xs.len())));
    }
    let fit = fit_loglog(&xs, &ys, None)?;
    Ok(ScalingFit {
        slope: fit.slope,
        stderr: fit.stderr,
        used: xs.len(),
        expected: 2.0 / (1.0 - params.alpha) - 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> SlowdownParams {
        SlowdownParams::reference()
    }

    #[test]
    fn psi_values() {
        let p = reference();
        assert_eq!(psi_eval(p.r0 * p.r0, &p).unwrap(), 1.0);
        assert_eq!(psi_eval(0.0, &p).unwrap(), 0.0);
        assert!(psi_eval(-1e-3, &p).is_err());
        assert!(psi_eval(f64::NAN, &p).is_err());
        // Pure-power coefficient with p = 4 and alpha = 0.2 at u = 0.01.
        let u: f64 = 0.01;
        let pure = p.k_pure() * u.powf(p.alpha);
        let oracle = (0.4 * 2f64.ln() + 0.2 * 0.01f64.ln()).exp();
        assert!((pure - oracle).abs() < 1e-15 && (pure - 0.525_306).abs() < 1e-6, "{pure}");
        let small = 1e-8;
        assert!((psi_eval(small, &p).unwrap() - 2f64.powf(0.4) * small.powf(0.2)).abs() < 1e-15);
    }

    #[test]
    fn psi_is_continuous_at_both_ends() {
        let p = reference();
        let r1s = p.r1 * p.r1;
        let r0s = p.r0 * p.r0;
        let d = 1e-14 * r0s;
        assert!((p.psi(r1s + d) - p.psi(r1s - d)).abs() < 1e-9);
        assert!((p.psi(r0s + d) - p.psi(r0s - d)).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_values() {
        let p = reference();
        assert_eq!(hamiltonian_h(PlanePoint::new(0.0, 3.0), &p).unwrap(), 0.0);
        assert!((hamiltonian_h(PlanePoint::new(1.0, 1.0), &p).unwrap() - 1.316_957_9).abs() < 1e-7);
        assert!(hamiltonian_h(PlanePoint::new(f64::INFINITY, 1.0), &p).is_err());
    }

    #[test]
    fn gamma_reference_values() {
        let g = gamma_exponents(0.2, 0.25).unwrap();
        let gamma = 2.5 + 2f64.powf(-0.8) * 1.25 + 0.75 / 6.0;
        let gamma_p = 2.5 + 0.75 / 2f64.powf(2.2);
        assert!((g.gamma - gamma).abs() < 1e-15);
        assert!((g.gamma_prime - gamma_p).abs() < 1e-15);
        assert!((g.gamma - 3.342_94).abs() < 1e-5);
        assert!((g.gamma_prime - 2.663_23).abs() < 1e-5);
        assert!((g.beta2 - g.beta1 - 2.0).abs() < 1e-15);
        assert!(gamma_exponents(0.0, 0.3).is_err());
        assert!(gamma_exponents(0.3, 1.0).is_err());
    }

    #[test]
    fn gamma_gap_limit_as_mu_to_one() {
        for alpha in [0.1, 0.2, 0.6] {
            let g = gamma_exponents(alpha, 1.0 - 1e-12).unwrap();
            assert!((g.gamma - g.gamma_prime - 2f64.powf(alpha)).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_point_and_zero_time() {
        let p = reference();
        let o = PlanePoint::default();
        assert_eq!(gp_time1(o, 1.0, &p).unwrap(), o);
        assert_eq!(gp_time1(o, -3.0, &p).unwrap(), o);
        let s = PlanePoint::new(1e-4, 2e-4);
        assert_eq!(gp_time1(s, 0.0, &p).unwrap(), s);
        assert!(gp_time1(PlanePoint::new(f64::NAN, 0.0), 1.0, &p).is_err());
    }

    #[test]
    fn axis_closed_form() {
        let p = reference();
        let c0 = p.c0();
        for &s20 in &[p.r1, 0.5 * p.r1, 1e-6, 1e-12] {
            for &t in &[0.5, 1.0, 7.0, 100.0] {
                let got = gp_time1(PlanePoint::new(0.0, s20), t, &p).unwrap();
                let want = s20 * (1.0 + c0 * s20.powf(2.0 * p.alpha) * t).powf(-1.0 / (2.0 * p.alpha));
                assert_eq!(got.s1, 0.0);
                assert!((got.s2 - want).abs() <= 1e-12 * want, "s20 {s20} t {t}: {} vs {want}", got.s2);
            }
        }
        // The same closed form seen from the unstable axis, run backwards.
        let got = gp_time1(PlanePoint::new(1e-5, 0.0), -3.0, &p).unwrap();
        let want = 1e-5 * (1.0 + c0 * 1e-5f64.powf(0.4) * 3.0).powf(-2.5);
        assert!((got.s1 - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn free_orbits_follow_the_linear_map() {
        let p = reference();
        let l = p.lambda;
        let s = PlanePoint::new(0.004, 0.005);
        let g = gp_time1(s, 1.0, &p).unwrap();
        assert!((g.s1 - l * s.s1).abs() <= 1e-12 * l * s.s1);
        assert!((g.s2 - s.s2 / l).abs() <= 1e-12 * s.s2 / l);
    }

    #[test]
    fn matches_runge_kutta_reference() {
        let p = reference();
        let pts = [
            PlanePoint::new(1e-4, 3e-4),
            PlanePoint::new(-2e-5, 1e-3),
            PlanePoint::new(5e-4, -9e-4),
            PlanePoint::new(1e-7, 2e-4),
            PlanePoint::new(3e-3, 1e-3),
        ];
        for s in pts {
            for t in [1.0, -1.0, 2.5] {
                let a = gp_time1(s, t, &p).unwrap();
                let b = gp_reference(s, t, &p).unwrap();
                let scale = s.norm().max(a.norm());
                assert!((a.s1 - b.s1).abs() < 1e-9 * scale && (a.s2 - b.s2).abs() < 1e-9 * scale, "{s:?} t {t}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn linear_profile_is_the_linear_map() {
        let p = reference().with_profile(Profile::Linear);
        let s = PlanePoint::new(1e-6, 1e-6);
        let g = gp_time1(s, 1.0, &p).unwrap();
        assert!((g.s1 - p.lambda * 1e-6).abs() < 1e-18);
    }

    #[test]
    fn orbit_sampler_matches_time_map() {
        let p = reference();
        let s = PlanePoint::new(1e-6, 2e-4);
        let mut orbit = PlaneOrbit::new(s, &p).unwrap();
        for _ in 0..64 * 3 {
            orbit.advance(1.0 / 64.0).unwrap();
        }
        let a = orbit.point();
        let b = gp_time1(s, 3.0, &p).unwrap();
        assert!((a.s1 - b.s1).abs() < 1e-11 * b.s1.abs() && (a.s2 - b.s2).abs() < 1e-11 * b.s2.abs());
        let mut axis = PlaneOrbit::new(PlanePoint::new(0.0, 2e-4), &p).unwrap();
        let q = axis.advance(2.0).unwrap();
        let r = gp_time1(PlanePoint::new(0.0, 2e-4), 2.0, &p).unwrap();
        assert!((q.s2 - r.s2).abs() < 1e-12 * r.s2);
    }

    #[test]
    fn hp_scaling_reference_exponents() {
        for (alpha, want) in [(0.2, 0.5), (0.5, 2.0)] {
            let p = reference().with_alpha(alpha).unwrap();
            let top = 0.5 * p.rho_pure();
            let radii: Vec<f64> = (0..12).map(|i| top * 10f64.powf(-(i as f64) / 8.0)).collect();
            let fit = hp_second_derivative_scaling(&p, &radii, 1e-3).unwrap();
            assert!((fit.slope - want).abs() < 0.05, "alpha {alpha}: {}", fit.slope);
            let half = hp_second_derivative_scaling(&p, &radii, 5e-4).unwrap();
            assert!((fit.slope - half.slope).abs() < 0.02);
        }
    }

    #[test]
    fn hp_scaling_needs_usable_radii() {
        let p = reference();
        assert!(hp_second_derivative_scaling(&p, &[0.02, 0.021], 1e-3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn product_is_conserved(r in 1e-9f64..1.25e-3, th in 0.0f64..std::f64::consts::TAU, t in 0.0f64..5.0) {
            let p = reference();
            let s = PlanePoint::new(r * th.cos(), r * th.sin());
            let g = gp_time1(s, t, &p).unwrap();
            let c = s.s1 * s.s2;
            prop_assert!((g.s1 * g.s2 - c).abs() <= 1e-10 * c.abs().max(1.0));
        }

        #[test]
        fn group_property(r in 1e-8f64..2e-3, th in 0.0f64..std::f64::consts::TAU) {
            let p = reference();
            let s = PlanePoint::new(r * th.cos(), r * th.sin());
            let half = gp_time1(gp_time1(s, 0.5, &p).unwrap(), 0.5, &p).unwrap();
            let full = gp_time1(s, 1.0, &p).unwrap();
            prop_assert!((half.s1 - full.s1).abs() < 1e-9 * full.norm().max(1e-300));
            prop_assert!((half.s2 - full.s2).abs() < 1e-9 * full.norm().max(1e-300));
        }

        #[test]
        fn psi_nondecreasing(a in 0.0f64..2e-6, b in 0.0f64..2e-6) {
            let p = reference();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.psi(hi) - p.psi(lo) >= -1e-12);
        }

        #[test]
        fn forward_backward_round_trip(r in 1e-9f64..5e-3, th in 0.0f64..std::f64::consts::TAU) {
            let p = reference();
            let s = PlanePoint::new(r * th.cos(), r * th.sin());
            let back = gp_time1(gp_time1(s, 1.0, &p).unwrap(), -1.0, &p).unwrap();
            prop_assert!((back.s1 - s.s1).abs() < 1e-10 * r && (back.s2 - s.s2).abs() < 1e-10 * r);
        }
    }
}
