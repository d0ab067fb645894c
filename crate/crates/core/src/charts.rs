//! Chart plumbing around a p-pronged singularity.
//!
//! A chart point `z` in sector `j` is sent to the right half-plane by
//! `Phi_j(z) = (-1)^j (2/p) z^(p/2)`, where the linear model acts as
//! `diag(lambda, 1/lambda)`. The radial mass push `phi` then converts between
//! that half-plane and the plane of the slowed flow.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{bump, bump_prime, Profile, SlowdownParams};
use crate::quad::{integrate, panel};
use crate::root::newton_bracketed;
use crate::slowdown::{gp_time1, linear_orbit_min_sq, PlanePoint};
use crate::surface::SurfacePoint;
use crate::Direction;

/// Number of cosine-spaced intervals in the cached mass-push integral.
pub const PUSH_NODES: usize = 4096;

/// Polar position of a chart point with its sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorCoord {
    pub rho: f64,
    pub tau: f64,
    pub sector_j: u32,
}

/// Angle of the `j`-th stable prong.
pub fn stable_prong(j: u32, p: u32) -> f64 {
    (2 * j + 1) as f64 * PI / p as f64
}

/// Angle of the `j`-th unstable prong.
pub fn unstable_prong(j: u32, p: u32) -> f64 {
    (2 * j) as f64 * PI / p as f64
}

/// Polar coordinates and sector of `z`. Points on a stable prong go to the
/// lower of the two adjacent sector indices.
pub fn sector_coord(z: Complex64, p: u32) -> SectorCoord {
    let tau = z.im.atan2(z.re).rem_euclid(TAU);
    let q = tau * p as f64 / TAU + 0.5;
    let mut j = (q.ceil() as i64 - 1).rem_euclid(p as i64) as u32;
    if q == p as f64 {
        j = 0;
    }
    SectorCoord { rho: z.norm(), tau, sector_j: j }
}

/// Sector containing `z`.
pub fn sector_of(z: Complex64, p: u32) -> u32 {
    sector_coord(z, p).sector_j
}

/// Offset of `tau` from the centre of sector `j`, wrapped into `(-pi, pi]`.
fn offset_in_sector(tau: f64, j: u32, p: u32) -> f64 {
    let d = (tau - unstable_prong(j, p)).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// `Phi_j`: sends the stable sector `j` onto the closed right half-plane.
pub fn sector_map(z: Complex64, j: u32, p: u32) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("sector map argument"));
    }
    if j >= p {
        return Err(Error::Domain(format!("sector {j} out of range for p = {p}")));
    }
    let rho = z.norm();
    if rho == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let half_width = PI / p as f64;
    let off = offset_in_sector(z.im.atan2(z.re), j, p);
    if off.abs() > half_width + 1e-12 {
        return Err(Error::Domain(format!("angle offset {off} outside sector {j}")));
    }
    let pf = p as f64;
    let ang = (off * pf / 2.0).clamp(-PI / 2.0, PI / 2.0);
    Ok(Complex64::from_polar(2.0 / pf * rho.powf(pf / 2.0), ang))
}

/// Inverse of [`sector_map`] for a point of the closed right half-plane.
pub fn sector_map_inv(w: Complex64, j: u32, p: u32) -> Result<Complex64> {
    if !(w.re.is_finite() && w.im.is_finite()) {
        return Err(Error::NonFinite("sector map inverse argument"));
    }
    if j >= p {
        return Err(Error::Domain(format!("sector {j} out of range for p = {p}")));
    }
    let r = w.norm();
    if r == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if w.re < -1e-12 * r {
        return Err(Error::Domain("sector map inverse needs Re w >= 0".into()));
    }
    let pf = p as f64;
    let theta = w.im.atan2(w.re.max(0.0));
    let rho = (pf * r / 2.0).powf(2.0 / pf);
    let tau = (2.0 * theta + 2.0 * j as f64 * PI) / pf;
    Ok(Complex64::from_polar(rho, tau))
}

/// The radial mass push `phi` and its inverse.
///
/// Below `r1` the radius maps as `r -> r^k`, `k = p(1-alpha)/2`. Between `r1`
/// and `r0` the integral form `A (int_0^{r^2} du / psi)^(p/4)` is blended in
/// log-radius into the identity, which it equals from `r0` on.
#[derive(Debug, Clone)]
pub struct MassPush {
    params: SlowdownParams,
    identity: bool,
    nodes: Vec<f64>,
    /// `int_{r1^2}^{node} du / psi` at each node.
    cumulative: Vec<f64>,
    i_r1: f64,
    i_r0: f64,
}

impl MassPush {
    pub fn new(params: &SlowdownParams) -> Result<Self> {
        let identity = params.profile == Profile::Linear;
        let mut me = Self { params: *params, identity, nodes: vec![], cumulative: vec![], i_r1: 0.0, i_r0: 0.0 };
        if identity {
            return Ok(me);
        }
        let (a, b) = (params.r1 * params.r1, params.r0 * params.r0);
        // Clustered at both ends, where the bump is least polynomial.
        let nodes: Vec<f64> = (0..=PUSH_NODES)
            .map(|j| 0.5 * (a + b) - 0.5 * (b - a) * (std::f64::consts::PI * j as f64 / PUSH_NODES as f64).cos())
            .collect();
        let mut values = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        values.push(0.0);
        for w in nodes.windows(2) {
            acc += integrate(|u| 1.0 / params.psi(u), w[0], w[1], 0.0, 1e-15)?.value;
            values.push(acc);
        }
        let one_m = 1.0 - params.alpha;
        me.i_r1 = a.powf(one_m) / (params.k_pure() * one_m);
        me.i_r0 = me.i_r1 + acc;
        me.nodes = nodes;
        me.cumulative = values;
        me.check_monotone()?;
        Ok(me)
    }

    pub fn params(&self) -> &SlowdownParams {
        &self.params
    }

    /// `I(U) = int_0^U du / psi(u)`.
    pub fn integral(&self, big_u: f64) -> f64 {
        let p = &self.params;
        let (a, b) = (p.r1 * p.r1, p.r0 * p.r0);
        if big_u <= a {
            let one_m = 1.0 - p.alpha;
            big_u.powf(one_m) / (p.k_pure() * one_m)
        } else if big_u >= b {
            self.i_r0 + (big_u - b)
        } else {
            let j = self.nodes.partition_point(|&x| x <= big_u).clamp(1, self.nodes.len() - 1) - 1;
            let tail = panel(|u| 1.0 / p.psi(u), self.nodes[j], big_u).value;
            self.i_r1 + self.cumulative[j] + tail
        }
    }

    fn ln_r_int(&self, r: f64) -> f64 {
        self.params.a_coeff.ln() + self.params.p as f64 / 4.0 * self.integral(r * r).ln()
    }

    fn blend_v(&self, r: f64) -> f64 {
        let p = &self.params;
        (r * r - p.r1 * p.r1) / (p.r0 * p.r0 - p.r1 * p.r1)
    }

    /// Radial profile `R(r)`: `phi(z) = R(|z|) z / |z|`.
    pub fn radial(&self, r: f64) -> f64 {
        let p = &self.params;
        if self.identity || r >= p.r0 {
            r
        } else if r <= p.r1 {
            r.powf(p.push_exponent())
        } else {
            let c = bump(self.blend_v(r));
            ((1.0 - c) * self.ln_r_int(r) + c * r.ln()).exp()
        }
    }

    /// `d ln R / dr`.
    fn log_deriv(&self, r: f64) -> f64 {
        let p = &self.params;
        if self.identity || r >= p.r0 {
            1.0 / r
        } else if r <= p.r1 {
            p.push_exponent() / r
        } else {
            let v = self.blend_v(r);
            let c = bump(v);
            let d_int = p.p as f64 / 2.0 * r / (p.psi(r * r) * self.integral(r * r));
            let dv = 2.0 * r / (p.r0 * p.r0 - p.r1 * p.r1);
            (1.0 - c) * d_int + c / r + bump_prime(v) * dv * (r.ln() - self.ln_r_int(r))
        }
    }

    /// `R'(r)`.
    pub fn radial_deriv(&self, r: f64) -> f64 {
        self.radial(r) * self.log_deriv(r)
    }

    /// Inverse radial profile.
    pub fn radial_inv(&self, rt: f64) -> Result<f64> {
        if !rt.is_finite() || rt < 0.0 {
            return Err(Error::Domain(format!("radial inverse of {rt:e}")));
        }
        let p = &self.params;
        if self.identity || rt >= p.r0 {
            return Ok(rt);
        }
        let k = p.push_exponent();
        let lo_img = p.r1.powf(k);
        if rt <= lo_img {
            return Ok(rt.powf(1.0 / k));
        }
        let target = rt.ln();
        let (lo, hi) = (p.r1.ln(), p.r0.ln());
        let guess = lo + (hi - lo) * (target - lo_img.ln()) / (p.r0.ln() - lo_img.ln());
        // Solve in log r for better scaling.
        let y = newton_bracketed(
            |y| {
                let r = y.exp();
                Ok((self.radial(r).ln() - target, self.log_deriv(r) * r))
            },
            lo,
            hi,
            guess,
            2e-16,
        )?;
        Ok(y.exp())
    }

    /// `phi(z)`.
    pub fn push(&self, z: Complex64) -> Result<Complex64> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("mass push argument"));
        }
        let r = z.norm();
        if r == 0.0 {
            return Ok(z);
        }
        Ok(z * (self.radial(r) / r))
    }

    /// `phi^-1(w)`.
    pub fn push_inv(&self, w: Complex64) -> Result<Complex64> {
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::NonFinite("mass push inverse argument"));
        }
        let rt = w.norm();
        if rt == 0.0 {
            return Ok(w);
        }
        Ok(w * (self.radial_inv(rt)? / rt))
    }

    fn check_monotone(&self) -> Result<()> {
        let p = &self.params;
        let n = 10_000;
        let mut prev = self.radial(p.r1);
        for i in 1..=n {
            let r = p.r1 + (p.r0 - p.r1) * i as f64 / n as f64;
            let v = self.radial(r);
            if !(v > prev) || !(self.log_deriv(r) > 0.0) {
                return Err(Error::InvalidParam(format!("mass push not monotone near r = {r:e}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Per-singularity geometric data.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularChart {
    pub k: usize,
    pub p: u32,
    pub center: SurfacePoint,
    /// Columns are the unit unstable and stable eigenvectors.
    pub eigenbasis: [[f64; 2]; 2],
    pub det: f64,
    /// `(rho0, rho1, a_k)`.
    pub radii: (f64, f64, f64),
    pub sector_count: u32,
    /// Direction of the branch cut leaving the singularity, in eigen coordinates.
    pub cut_direction: Complex64,
}

/// Density of the invariant area form, with a flag for the limiting value at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    pub at_singularity: bool,
}

/// The slowed map in a singular chart.
#[derive(Debug, Clone)]
pub struct LocalMap {
    params: SlowdownParams,
    push: MassPush,
}

impl LocalMap {
    pub fn new(params: &SlowdownParams) -> Result<Self> {
        Ok(Self { params: *params, push: MassPush::new(params)? })
    }

    pub fn params(&self) -> &SlowdownParams {
        &self.params
    }

    pub fn push(&self) -> &MassPush {
        &self.push
    }

    /// One step of the slowed map at chart point `z`.
    ///
    /// Orbits whose unslowed path stays outside `D_r0` get the linear model
    /// exactly; otherwise `Phi_j^-1 o phi o G_p^{+-1} o phi^-1 o Phi_j`.
    pub fn g(&self, z: Complex64, dir: Direction) -> Result<Complex64> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("local map argument"));
        }
        let p = &self.params;
        if z.norm() > p.a_star * 1.001 {
            return Err(Error::Domain(format!("|z| = {:e} outside the chart disk", z.norm())));
        }
        if z.norm() == 0.0 {
            return Ok(z);
        }
        let j = sector_of(z, p.p);
        let zeta = PlanePoint::from_complex(sector_map(z, j, p.p)?);
        let t = dir.time();
        let out = if p.profile == Profile::Linear || linear_orbit_min_sq(zeta, t, p) >= p.r0 * p.r0 {
            let e = p.lambda.powf(t);
            Complex64::new(zeta.s1 * e, zeta.s2 / e)
        } else {
            let s = PlanePoint::from_complex(self.push.push_inv(zeta.to_complex())?);
            let s_new = gp_time1(s, t, p)?;
            self.push.push(s_new.to_complex())?
        };
        sector_map_inv(out, j, p.p)
    }

    /// Five-point central-difference Jacobian of [`LocalMap::g`] in chart
    /// coordinates. Fourth order: the map shears strongly, so the determinant
    /// loses digits to cancellation.
    pub fn differential(&self, z: Complex64, dir: Direction) -> Result<[[f64; 2]; 2]> {
        let r = z.norm();
        let h = if r == 0.0 { 1e-9 } else { 1e-5 * r.min(1.0) };
        let mut d = [[0.0; 2]; 2];
        for (col, e) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)].into_iter().enumerate() {
            let near = self.g(z + e, dir)? - self.g(z - e, dir)?;
            let far = self.g(z + 2.0 * e, dir)? - self.g(z - 2.0 * e, dir)?;
            let diff = (8.0 * near - far) / (12.0 * h);
            d[0][col] = diff.re;
            d[1][col] = diff.im;
        }
        Ok(d)
    }

    /// Density of the invariant area form relative to Lebesgue measure in the
    /// chart. Radially symmetric; constant on the pure-power part.
    pub fn omega_p_density(&self, z: Complex64) -> Result<Density> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("density argument"));
        }
        let p = &self.params;
        let pf = p.p as f64;
        let rho = z.norm();
        if rho == 0.0 {
            let value = if p.profile == Profile::Linear {
                if p.p == 2 { 1.0 } else { 0.0 }
            } else {
                self.pure_density()
            };
            return Ok(Density { value, at_singularity: true });
        }
        let rt = 2.0 / pf * rho.powf(pf / 2.0);
        let s = self.push.radial_inv(rt)?;
        let value = pf / 2.0 * s * rho.powf(pf / 2.0 - 2.0) / (self.push.radial_deriv(s) * p.psi(s * s));
        Ok(Density { value, at_singularity: false })
    }

    /// `(p/2)^(1 - 4/p - 2 alpha) / (1 - alpha)`.
    pub fn pure_density(&self) -> f64 {
        let p = &self.params;
        let pf = p.p as f64;
        (pf / 2.0).powf(1.0 - 4.0 / pf - 2.0 * p.alpha) / (1.0 - p.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> SlowdownParams {
        SlowdownParams::reference()
    }

    fn shared() -> &'static LocalMap {
        static MAP: std::sync::OnceLock<LocalMap> = std::sync::OnceLock::new();
        MAP.get_or_init(|| LocalMap::new(&SlowdownParams::reference()).unwrap())
    }

    #[test]
    fn sector_map_examples() {
        let z = Complex64::from_polar(0.1, 0.3);
        let w = sector_map(z, 0, 4).unwrap();
        let want = Complex64::from_polar(0.5 * 0.01, 0.6);
        assert!((w - want).norm() < 1e-16);
        // Unstable prong to the positive real axis.
        for j in 0..4 {
            let w = sector_map(Complex64::from_polar(0.2, unstable_prong(j, 4)), j, 4).unwrap();
            assert!(w.im.abs() < 1e-15 && w.re > 0.0);
        }
        // Stable prongs to the imaginary axis.
        let up = sector_map(Complex64::from_polar(0.2, stable_prong(0, 4)), 0, 4).unwrap();
        assert!(up.re.abs() < 1e-15 && up.im > 0.0);
        let down = sector_map(Complex64::from_polar(0.2, stable_prong(0, 4)), 1, 4).unwrap();
        assert!(down.re.abs() < 1e-15 && down.im < 0.0);
        assert_eq!(sector_map(Complex64::new(0.0, 0.0), 2, 4).unwrap(), Complex64::new(0.0, 0.0));
        assert!(sector_map(Complex64::from_polar(0.2, 1.2), 0, 4).is_err());
    }

    #[test]
    fn prong_ties_take_the_lower_index() {
        assert_eq!(sector_of(Complex64::from_polar(1.0, stable_prong(0, 4)), 4), 0);
        assert_eq!(sector_of(Complex64::from_polar(1.0, stable_prong(1, 4)), 4), 1);
        assert_eq!(sector_of(Complex64::new(1.0, -1e-3), 4), 0);
        assert_eq!(sector_of(Complex64::new(-1.0, 0.0), 4), 2);
    }

    #[test]
    fn pure_power_push_below_r1() {
        let p = reference();
        let m = MassPush::new(&p).unwrap();
        for r in [1e-12, 1e-6, 0.5 * p.r1, p.r1] {
            let z = Complex64::from_polar(r, 0.7);
            let w = m.push(z).unwrap();
            let want = r.powf(p.push_exponent());
            assert!((w.norm() - want).abs() <= 1e-10 * want);
            assert!((w.arg() - 0.7).abs() < 1e-14);
        }
        assert_eq!(m.push(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn integral_form_is_continuous_and_pure_below_r1() {
        let p = reference();
        let m = MassPush::new(&p).unwrap();
        // A I(r^2)^(p/4) reproduces r^k below r1.
        let r = 0.3 * p.r1;
        let int_form = p.a_coeff * m.integral(r * r).powf(p.p as f64 / 4.0);
        assert!((int_form - r.powf(p.push_exponent())).abs() < 1e-12 * int_form);
        let a = p.r1 * p.r1;
        assert!((m.integral(a * (1.0 + 1e-13)) - m.integral(a)).abs() < 1e-9 * m.integral(a));
        let b = p.r0 * p.r0;
        assert!((m.integral(b * (1.0 - 1e-13)) - m.integral(b)).abs() < 1e-9 * m.integral(b));
    }

    #[test]
    fn cached_integral_matches_quadrature() {
        let p = reference();
        let m = MassPush::new(&p).unwrap();
        let a = p.r1 * p.r1;
        let b = p.r0 * p.r0;
        for i in 1..20 {
            let u = a + (b - a) * (i as f64 / 20.0).powi(2);
            let direct = m.integral(a) + integrate(|v| 1.0 / p.psi(v), a, u, 0.0, 1e-15).unwrap().value;
            assert!((m.integral(u) - direct).abs() < 1e-12 * direct, "u {u:e}");
        }
    }

    #[test]
    fn identity_when_alpha_is_critical() {
        let p = reference().with_alpha(0.5).unwrap();
        let m = MassPush::new(&p).unwrap();
        for r in [1e-9, 1e-5, 0.9 * p.r1] {
            let z = Complex64::from_polar(r, -2.0);
            assert!((m.push(z).unwrap() - z).norm() <= 1e-10 * r);
        }
    }

    #[test]
    fn identity_from_r0_on() {
        let m = MassPush::new(&reference()).unwrap();
        let z = Complex64::new(0.003, -0.001);
        assert_eq!(m.push(z).unwrap(), z);
    }

    #[test]
    fn radial_derivative_matches_differences() {
        let p = reference();
        let m = MassPush::new(&p).unwrap();
        for f in [0.2, 0.5, 0.8] {
            let r = p.r1 + f * (p.r0 - p.r1);
            let h = 1e-7 * r;
            let fd = (m.radial(r + h) - m.radial(r - h)) / (2.0 * h);
            assert!((fd - m.radial_deriv(r)).abs() < 1e-6 * fd.abs());
        }
    }

    #[test]
    fn density_values() {
        let lm = LocalMap::new(&reference().with_alpha(0.5).unwrap()).unwrap();
        // p = 4, alpha = 0.5: 2 * 2^(-1) = 1.
        let d = lm.omega_p_density(Complex64::new(1e-4, 0.0)).unwrap();
        assert!((d.value - 1.0).abs() < 1e-9, "{}", d.value);
        assert!(lm.omega_p_density(Complex64::new(0.0, 0.0)).unwrap().at_singularity);

        let p = reference();
        let lm = LocalMap::new(&p).unwrap();
        let inner = lm.omega_p_density(Complex64::from_polar(0.5 * p.rho_pure(), 0.2)).unwrap().value;
        assert!((inner - lm.pure_density()).abs() < 1e-9 * inner);
        let rho = 0.06;
        let outer = lm.omega_p_density(Complex64::from_polar(rho, 1.0)).unwrap().value;
        assert!((outer - rho * rho).abs() < 1e-12 * outer);
        let vals: Vec<f64> = (0..100)
            .map(|i| lm.omega_p_density(Complex64::from_polar(0.01, i as f64 * 0.0628)).unwrap().value)
            .collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-12);
    }

    #[test]
    fn local_map_examples() {
        let p = reference();
        let lm = LocalMap::new(&p).unwrap();
        assert_eq!(lm.g(Complex64::new(0.0, 0.0), Direction::Forward).unwrap(), Complex64::new(0.0, 0.0));
        // Far from the neutral point the linear model is used.
        let z = Complex64::from_polar(0.12, 0.1);
        let out = lm.g(z, Direction::Forward).unwrap();
        let zeta = sector_map(z, 0, 4).unwrap();
        let lin = sector_map_inv(Complex64::new(zeta.re * p.lambda, zeta.im / p.lambda), 0, 4).unwrap();
        assert_eq!(out, lin);
        let d = lm.differential(Complex64::new(0.0, 0.0), Direction::Forward).unwrap();
        assert!((d[0][0] - 1.0).abs() < 1e-4 && (d[1][1] - 1.0).abs() < 1e-4);
        assert!(d[0][1].abs() < 1e-4 && d[1][0].abs() < 1e-4);
        assert!(lm.g(Complex64::new(0.2, 0.0), Direction::Forward).is_err());
    }

    #[test]
    fn seam_agrees_with_linear_model() {
        // Points whose orbit brushes r0 from outside: pipeline and model agree.
        let p = reference();
        let lm = LocalMap::new(&p).unwrap();
        for th in [0.05, 0.3, -0.6] {
            let zeta = Complex64::from_polar(1.05 * p.r0 * p.lambda, th);
            let z = sector_map_inv(zeta, 0, 4).unwrap();
            let s = PlanePoint::from_complex(zeta);
            let direct = gp_time1(s, 1.0, &p).unwrap();
            let via = sector_map(lm.g(z, Direction::Forward).unwrap(), 0, 4).unwrap();
            assert!((via - direct.to_complex()).norm() < 1e-9 * zeta.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn sector_round_trip(rho in 1e-6f64..0.15, tau in 0.0f64..TAU) {
            let z = Complex64::from_polar(rho, tau);
            let j = sector_of(z, 4);
            let back = sector_map_inv(sector_map(z, j, 4).unwrap(), j, 4).unwrap();
            prop_assert!((back - z).norm() <= 1e-10 * rho);
        }

        #[test]
        fn push_round_trip(r in 1e-10f64..0.012, th in 0.0f64..TAU) {
            let m = shared().push();
            let z = Complex64::from_polar(r, th);
            let back = m.push_inv(m.push(z).unwrap()).unwrap();
            prop_assert!((back - z).norm() <= 1e-10 * r);
        }

        #[test]
        fn local_round_trip(rho in 1e-5f64..0.14, tau in 0.0f64..TAU) {
            let lm = shared();
            let z = Complex64::from_polar(rho, tau);
            let f = lm.g(z, Direction::Forward).unwrap();
            if f.norm() <= 0.15 {
                let b = lm.g(f, Direction::Backward).unwrap();
                prop_assert!((b - z).norm() < 1e-8 * rho.max(1e-3));
            }
        }

        #[test]
        fn stable_sectors_are_forward_invariant(rho in 1e-5f64..0.1, tau in 0.0f64..TAU) {
            let lm = shared();
            let z = Complex64::from_polar(rho, tau);
            let f = lm.g(z, Direction::Forward).unwrap();
            let j = sector_of(z, 4);
            let off = offset_in_sector(f.im.atan2(f.re), j, 4);
            prop_assert!(off.abs() <= PI / 4.0 + 1e-12);
        }

        #[test]
        fn prongs_are_invariant(j in 0u32..4, rho in 1e-5f64..0.1) {
            let lm = shared();
            for ang in [stable_prong(j, 4), unstable_prong(j, 4)] {
                let f = lm.g(Complex64::from_polar(rho, ang), Direction::Forward).unwrap();
                let drift = (f.im.atan2(f.re) - ang).rem_euclid(TAU);
                prop_assert!(drift.min(TAU - drift) < 1e-10);
            }
        }
    }
}
