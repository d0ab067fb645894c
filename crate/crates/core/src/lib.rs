//! Numerical laboratory for a slowed-down smooth realization of a
//! pseudo-Anosov map.
//!
//! The plane-level slow-down lives in [`slowdown`], chart plumbing in
//! [`charts`], the reference genus-2 surface in [`surface`], Monte Carlo
//! statistics in [`stats`] and trajectory-estimate checks in [`verify`].

pub mod charts;
pub mod error;
pub mod ode;
pub mod params;
pub mod quad;
pub mod root;
pub mod slowdown;
pub mod stats;
pub mod surface;
pub mod verify;

pub use charts::{LocalMap, MassPush, SingularChart};
pub use error::{Error, Result};
pub use params::{Profile, SlowdownParams};
pub use slowdown::{gamma_exponents, gp_time1, GammaExponents, PlanePoint};
pub use surface::{ReferenceModel, SurfacePoint};

/// Direction of a map step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Flow time of one step: `+1` or `-1`.
    pub fn time(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}
