//! Lyapunov-Krasovskii machinery: Driver-form derivatives of functionals and
//! sampling-based checkers for separability, the closed-loop decay
//! conditions and the steepest descent inequality.

mod benchmark;
mod checks;
mod driver;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::history::Segment;

pub use benchmark::{
    linear_scalar_suite, random_segments, weighted_square_integral, LinearScalarLkf,
};
pub use checks::{
    check_assumption1, check_smooth_separability, check_steepest_descent,
    check_steepest_descent_modes, Assumption1Report, CheckReport, DescentMode, Tolerance,
    Violation,
};
pub use driver::{closed_loop_drift, driver_derivative, DriverEstimate, DEFAULT_STEPS};

/// Declared class of a scalar comparison function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FnClass {
    /// Continuous, zero at zero, strictly increasing.
    K,
    /// Class K and unbounded.
    KInfinity,
    /// Continuous, zero at zero, positive elsewhere.
    PositiveDefinite,
}

/// A scalar function on `[0, inf)` with a declared comparison class.
#[derive(Clone)]
pub struct ComparisonFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub class: FnClass,
}

impl fmt::Debug for ComparisonFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonFn")
            .field("class", &self.class)
            .finish_non_exhaustive()
    }
}

/// Grid used for class checks: zero plus a geometric sweep over `[1e-4, 1e6]`.
fn class_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=200).map(|i| 10f64.powf(-4.0 + i as f64 * 0.05)))
        .collect()
}

impl ComparisonFn {
    pub fn new(class: FnClass, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            class,
        }
    }

    /// `s -> coeff * s^2`, class K-infinity for positive `coeff`.
    pub fn quadratic(coeff: f64) -> Self {
        Self::new(FnClass::KInfinity, move |s| coeff * s * s)
    }

    /// `s -> coeff * s`.
    pub fn linear(coeff: f64, class: FnClass) -> Self {
        Self::new(class, move |s| coeff * s)
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    /// `s -> factor * self(s)`, keeping the declared class.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = self.f.clone();
        Self::new(self.class, move |s| factor * f(s))
    }

    /// Problems found when testing the declared class on a grid. Continuity
    /// and true unboundedness can only be approximated this way.
    pub fn class_problems(&self) -> Vec<String> {
        let grid = class_grid();
        let vals: Vec<f64> = grid.iter().map(|&s| self.eval(s)).collect();
        let mut out = Vec::new();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            out.push(format!("not finite at s = {}", grid[i]));
            return out;
        }
        if vals[0].abs() > 1e-12 {
            out.push(format!("value {} at zero", vals[0]));
        }
        if let Some(i) = (1..grid.len()).find(|&i| !(vals[i] > 0.0)) {
            out.push(format!(
                "not positive at s = {} (value {})",
                grid[i], vals[i]
            ));
        }
        if matches!(self.class, FnClass::K | FnClass::KInfinity) {
            if let Some(i) = (1..grid.len()).find(|&i| !(vals[i] > vals[i - 1])) {
                out.push(format!("not strictly increasing near s = {}", grid[i]));
            }
        }
        if self.class == FnClass::KInfinity {
            // increments over the last two decades must not collapse
            let at = |s: f64| self.eval(s);
            let last = at(1e6) - at(1e5);
            let before = at(1e5) - at(1e4);
            if !(last >= 0.5 * before && last > 0.0) {
                out.push("appears bounded (increments vanish over the last decades)".into());
            }
        }
        out
    }
}

pub type V1Fn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type V2Fn = Arc<dyn Fn(&Segment) -> f64 + Send + Sync>;

/// Every ingredient of a smoothly separable functional
/// `V(phi) = V1(phi(0)) + V2(phi)` together with the comparison functions and
/// constants used by the decay and steepest descent conditions.
#[derive(Clone)]
pub struct FunctionalSuite {
    pub v1: V1Fn,
    pub v2: V2Fn,
    /// Lower bound of `V` in terms of `|phi(0)|`.
    pub gamma1: ComparisonFn,
    /// Upper bound of `V` in terms of `||phi||_inf`.
    pub gamma2: ComparisonFn,
    /// Lower bound of `V1`.
    pub beta1: ComparisonFn,
    /// Upper bound of `V1`.
    pub beta2: ComparisonFn,
    /// Decay rate of `V` along the closed loop.
    pub alpha3: ComparisonFn,
    /// Right-hand side shaping of the steepest descent inequality; `I - alpha_bar`
    /// must be class K-infinity.
    pub alpha_bar: ComparisonFn,
    pub p: ComparisonFn,
    pub eta: f64,
    pub mu: f64,
    /// Either 0 or 1.
    pub nu: u8,
}

impl fmt::Debug for FunctionalSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalSuite")
            .field("eta", &self.eta)
            .field("mu", &self.mu)
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

impl FunctionalSuite {
    /// `V(phi) = V1(phi(0)) + V2(phi)`.
    pub fn value(&self, phi: &Segment) -> f64 {
        (self.v1)(phi.value(phi.len() - 1)) + (self.v2)(phi)
    }

    /// `p(V1(phi(0)))`.
    pub fn p_of_v1(&self, phi: &Segment) -> f64 {
        self.p.eval((self.v1)(phi.value(phi.len() - 1)))
    }

    /// `I - alpha_bar` as a comparison function.
    pub fn identity_minus_alpha_bar(&self) -> ComparisonFn {
        let ab = self.alpha_bar.clone();
        ComparisonFn::new(FnClass::KInfinity, move |s| s - ab.eval(s))
    }

    /// Structural problems with the constants.
    pub fn constant_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta > 0.0) {
            out.push(format!("eta = {} must be positive", self.eta));
        }
        if !(self.mu > 0.0) {
            out.push(format!("mu = {} must be positive", self.mu));
        }
        if self.nu > 1 {
            out.push(format!("nu = {} must be 0 or 1", self.nu));
        }
        out
    }
}
