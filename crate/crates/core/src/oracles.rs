//! Closed forms for the two analytically solvable chain families, used as
//! independent checks on the solver and simulators. Plain double precision;
//! numerically benign for ξ in [1e-3, 1e3].

use crate::{Error, Result};

/// Two-state chain with dissipation ratio ξ, started from r = (1, 0).
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm2x2 {
    pub xi: f64,
    /// Optimal ratio m₂/m₁ = √(1+ξ²) − ξ.
    pub x0: f64,
    /// Peak final amplitude of the target coordinate.
    pub efficiency: f64,
    /// Squared-amplitude gain coefficient x₀².
    pub p_gain: f64,
}

impl ClosedForm2x2 {
    /// Unit direction (1, x₀)/‖·‖.
    pub fn direction(&self) -> [f64; 2] {
        let norm = (1.0 + self.x0 * self.x0).sqrt();
        [1.0 / norm, self.x0 / norm]
    }

    /// The maximized ratio function f(x) = (x − ξx²)/(x + ξ).
    pub fn gain_at(&self, x: f64) -> f64 {
        (x - self.xi * x * x) / (x + self.xi)
    }
}

pub fn analytic_2x2(xi: f64) -> Result<ClosedForm2x2> {
    if xi <= 0.0 || !xi.is_finite() {
        return Err(Error::InvalidInput(
            "dissipation ratio must be positive".into(),
        ));
    }
    let x0 = (1.0 + xi * xi).sqrt() - xi;
    let form = ClosedForm2x2 {
        xi,
        x0,
        efficiency: x0,
        p_gain: x0 * x0,
    };
    debug_assert!(x0 > 0.0 && x0 < 1.0);
    debug_assert!((form.gain_at(x0) - x0 * x0).abs() <= 1e-12);
    Ok(form)
}

/// Three-state chain with the middle amplitude held infinitesimally small,
/// started from r = (1, ε→0⁺, 0).
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm3Chain {
    pub xi: f64,
    /// Optimal ratio m₂/m₁ = √(ξ²+2) − ξ.
    pub x0: f64,
    /// Peak squared-amplitude gain x₀⁴/4.
    pub f_max: f64,
    /// Peak final amplitude x₀²/2.
    pub efficiency: f64,
}

impl ClosedForm3Chain {
    /// Ratio m₃/m₁ = 1 − ξx₀, forced by keeping the middle coordinate flat.
    pub fn y0(&self) -> f64 {
        1.0 - self.xi * self.x0
    }

    /// Admissible interval for the ratio x.
    pub fn interval(&self) -> (f64, f64) {
        (self.xi / (1.0 + self.xi * self.xi), 1.0 / self.xi)
    }

    /// Unit direction (1, x₀, y₀)/‖·‖.
    pub fn direction(&self) -> [f64; 3] {
        let y0 = self.y0();
        let norm = (1.0 + self.x0 * self.x0 + y0 * y0).sqrt();
        [1.0 / norm, self.x0 / norm, y0 / norm]
    }

    /// The maximized two-ratio gain g(x, y) = (xy − ξy²)/(x + ξ).
    pub fn gain_at(&self, x: f64, y: f64) -> f64 {
        (x * y - self.xi * y * y) / (x + self.xi)
    }
}

pub fn analytic_3chain(xi: f64) -> Result<ClosedForm3Chain> {
    if xi <= 0.0 || !xi.is_finite() {
        return Err(Error::InvalidInput(
            "dissipation ratio must be positive".into(),
        ));
    }
    let x0 = (xi * xi + 2.0).sqrt() - xi;
    let form = ClosedForm3Chain {
        xi,
        x0,
        f_max: x0.powi(4) / 4.0,
        efficiency: x0 * x0 / 2.0,
    };
    let (lo, hi) = form.interval();
    debug_assert!(x0 >= lo && x0 <= hi);
    debug_assert!((form.gain_at(x0, form.y0()) - form.f_max).abs() <= 1e-12);
    Ok(form)
}

/// Membership in the closure of the reachable set of (1, 0) for the
/// two-state chain: r₂² + x₀²·r₁² ≤ x₀².
pub fn analytic_reachable_2x2(xi: f64, r1: f64, r2: f64) -> bool {
    debug_assert!(xi > 0.0);
    if r1 < 0.0 || r2 < 0.0 {
        return false;
    }
    let x0 = (1.0 + xi * xi).sqrt() - xi;
    r2 * r2 + x0 * x0 * r1 * r1 <= x0 * x0 + 1e-12
}
