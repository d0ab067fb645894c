//! Construction constants of the slowed-down chart.

use crate::error::{Error, Result};

/// Which time change is applied to the hyperbolic flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// The smooth slow-down: pure power near 0, blended to 1 at `r0`.
    Slowed,
    /// No slow-down at all; `psi == 1` everywhere. Control runs use this.
    Linear,
}

/// All constants of the slow-down construction.
///
/// Radii `rho*` live in the surface chart, radii `r*` in the plane where the
/// slowed flow acts, related by `r = (2/p) rho^(p/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowdownParams {
    pub p: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub r0: f64,
    pub r1: f64,
    pub a_star: f64,
    pub a_tilde: f64,
    pub mu: f64,
    pub a_coeff: f64,
    pub eps_smooth: f64,
    pub profile: Profile,
}

fn plane_radius(p: u32, rho: f64) -> f64 {
    2.0 / p as f64 * rho.powf(p as f64 / 2.0)
}

fn chart_radius(p: u32, r: f64) -> f64 {
    (p as f64 * r / 2.0).powf(2.0 / p as f64)
}

impl SlowdownParams {
    /// Validated constructor.
    pub fn new(p: u32, alpha: f64, lambda: f64, rho0: f64, rho1: f64, a_star: f64, mu: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if p == 0 {
            return bad("p must be at least 1".into());
        }
        for (name, v) in [("alpha", alpha), ("lambda", lambda), ("rho0", rho0), ("rho1", rho1), ("a_star", a_star), ("mu", mu)] {
            if !v.is_finite() {
                return bad(format!("{name} is not finite"));
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return bad(format!("alpha = {alpha} outside (0, 1)"));
        }
        if !(lambda > 1.0) {
            return bad(format!("lambda = {lambda} must exceed 1"));
        }
        if !(mu > 0.0 && mu < 0.5) {
            return bad(format!("mu = {mu} outside (0, 1/2)"));
        }
        if !(0.0 < rho1 && rho1 < rho0 && rho0 < a_star) {
            return bad(format!("need 0 < rho1 < rho0 < a_star, got {rho1}, {rho0}, {a_star}"));
        }
        let pf = p as f64;
        let r0 = plane_radius(p, rho0);
        let r1 = plane_radius(p, rho1);
        let a_tilde = plane_radius(p, a_star);
        // F is diag(lambda, 1/lambda): F(D_r0) contains exactly D_{r0/lambda},
        // and the images F(D_r1), F^-1(D_r0) reach out to lambda*r1, lambda*r0.
        let slack = 1.0 + 1e-12;
        if r1 > r0 / lambda * slack {
            return bad(format!("D_r1 not inside F(D_r0): r1 = {r1:e} > r0/lambda = {:e}", r0 / lambda));
        }
        if lambda * r0 > a_tilde * slack {
            return bad(format!("F^-1(D_r0) not inside D_a~: lambda*r0 = {:e} > {a_tilde:e}", lambda * r0));
        }
        let k = (pf / 2.0).powf(2.0 * alpha);
        let two_over = 2.0 / (1.0 - alpha);
        let params = Self {
            p,
            alpha,
            lambda,
            rho0,
            rho1,
            r0,
            r1,
            a_star,
            a_tilde,
            mu,
            a_coeff: ((1.0 - alpha) * k).powf(pf / 4.0),
            eps_smooth: two_over - two_over.floor(),
            profile: Profile::Slowed,
        };
        params.check_psi_monotone()?;
        Ok(params)
    }

    /// Constructor that sets `rho1` to the largest value passing the
    /// containment check, i.e. `r1 = r0 / lambda`.
    pub fn with_max_rho1(p: u32, alpha: f64, lambda: f64, rho0: f64, a_star: f64, mu: f64) -> Result<Self> {
        let r0 = plane_radius(p, rho0);
        let rho1 = chart_radius(p, r0 / lambda);
        Self::new(p, alpha, lambda, rho0, rho1, a_star, mu)
    }

    /// Defaults of the reference surface: p = 4, alpha = 0.2, mu = 0.25,
    /// lambda = 2 + sqrt(3), rho0 = 0.05, a* = 0.15.
    pub fn reference() -> Self {
        Self::with_max_rho1(4, 0.2, 2.0 + 3f64.sqrt(), 0.05, 0.15, 0.25).expect("reference parameters are valid")
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.p, alpha, self.lambda, self.rho0, self.rho1, self.a_star, self.mu).map(|q| q.with_profile(self.profile))
    }

    pub fn log_lambda(&self) -> f64 {
        self.lambda.ln()
    }

    /// Coefficient of the pure power law, `(p/2)^(2 alpha)`.
    pub fn k_pure(&self) -> f64 {
        (self.p as f64 / 2.0).powf(2.0 * self.alpha)
    }

    /// `C0 = 2 alpha log(lambda) (p/2)^(2 alpha)`.
    pub fn c0(&self) -> f64 {
        2.0 * self.alpha * self.log_lambda() * self.k_pure()
    }

    /// Radial exponent of the mass push below `r1`: `p (1 - alpha) / 2`.
    pub fn push_exponent(&self) -> f64 {
        self.p as f64 * (1.0 - self.alpha) / 2.0
    }

    /// Chart radius below which the chart-to-plane map is a pure power law.
    pub fn rho_pure(&self) -> f64 {
        chart_radius(self.p, self.r1.powf(self.push_exponent())).min(self.rho1)
    }

    /// Slow-down factor `psi(u)` for `u >= 0` (no validation).
    #[inline]
    pub fn psi(&self, u: f64) -> f64 {
        match self.profile {
            Profile::Linear => 1.0,
            Profile::Slowed => {
                let r1s = self.r1 * self.r1;
                let r0s = self.r0 * self.r0;
                if u <= r1s {
                    self.k_pure() * u.powf(self.alpha)
                } else if u >= r0s {
                    1.0
                } else {
                    let v = (u - r1s) / (r0s - r1s);
                    let c = bump(v);
                    (1.0 - c) * self.k_pure() * u.powf(self.alpha) + c
                }
            }
        }
    }

    fn check_psi_monotone(&self) -> Result<()> {
        let r0s = self.r0 * self.r0;
        let n = 20_000;
        let mut prev = 0.0;
        for i in 0..=n {
            let u = r0s * 1.25 * i as f64 / n as f64;
            let v = self.psi(u);
            if v < prev - 1e-15 {
                return Err(Error::InvalidParam(format!("psi is not monotone near u = {u:e}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Smooth step `chi(v)`: 0 for `v <= 0`, 1 for `v >= 1`, C^inf in between.
#[inline]
pub fn bump(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / v - 1.0 / (1.0 - v)).exp())
    }
}

/// Derivative of [`bump`].
#[inline]
pub fn bump_prime(v: f64) -> f64 {
    if v <= 0.0 || v >= 1.0 {
        0.0
    } else {
        let c = bump(v);
        c * (1.0 - c) * (1.0 / (v * v) + 1.0 / ((1.0 - v) * (1.0 - v)))
    }
}
