use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::history::Segment;
use crate::models::ModelPair;

/// Step sequence used when none is given.
pub const DEFAULT_STEPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Finite-step approximation of the upper right Driver derivative
/// `limsup_{h -> 0+} (V(phi_h) - V(phi)) / h`, where `phi_h` is the shifted
/// segment with an Euler ramp along `drift`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriverEstimate {
    /// Quotient at the smallest step.
    pub value: f64,
    pub steps: Vec<f64>,
    pub quotients: Vec<f64>,
    /// First-order Richardson extrapolation from the two smallest steps.
    pub richardson: f64,
    /// Stand-in for the limsup: the larger of the two smallest-step quotients.
    pub limsup: f64,
    /// Whether the quotient sequence moves in one direction (up to rounding).
    /// Non-monotone sequences indicate an unreliable estimate.
    pub monotone: bool,
}

fn is_monotone(q: &[f64]) -> bool {
    let scale = q.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-8 * (1.0 + scale);
    let (mut up, mut down) = (false, false);
    for w in q.windows(2) {
        let d = w[1] - w[0];
        up |= d > tol;
        down |= d < -tol;
    }
    !(up && down)
}

pub fn driver_derivative(
    functional: impl Fn(&Segment) -> f64,
    phi: &Segment,
    drift: &[f64],
    steps: &[f64],
) -> Result<DriverEstimate> {
    if steps.len() < 2 {
        return domain("at least two steps are needed");
    }
    if steps.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("steps must be strictly decreasing");
    }
    let base = functional(phi);
    if !base.is_finite() {
        return Err(Error::Evaluation(format!("functional value {base} at phi")));
    }
    let mut quotients = Vec::with_capacity(steps.len());
    for &h in steps {
        let extended = phi.euler_extend(h, drift)?;
        let v = functional(&extended);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!(
                "functional value {v} at step {h}"
            )));
        }
        quotients.push((v - base) / h);
    }
    let k = quotients.len();
    let (q_prev, q_last) = (quotients[k - 2], quotients[k - 1]);
    let ratio = steps[k - 2] / steps[k - 1];
    Ok(DriverEstimate {
        value: q_last,
        richardson: (ratio * q_last - q_prev) / (ratio - 1.0),
        limsup: q_prev.max(q_last),
        monotone: is_monotone(&quotients),
        steps: steps.to_vec(),
        quotients,
    })
}

/// Closed-loop drift `F(phi)`, i.e. the `u = 0` convention for the input-free
/// closed loop.
pub fn closed_loop_drift(model: &ModelPair, phi: &Segment) -> Result<Vec<f64>> {
    model.stacked_rhs(phi)
}
