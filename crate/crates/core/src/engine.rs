//! Fixed-step method-of-steps integration of retarded functional
//! differential equations.
//!
//! The solver keeps a dense history of every accepted step. Delayed lookups
//! inside the computed range use local cubic interpolation that never
//! straddles a registered derivative break; lookups past the front (only
//! possible from Runge-Kutta stages) follow the straight line from the front
//! state to the current stage state, i.e. first-order extrapolation along
//! the most recent stage slope. The returned [`Trajectory`] interpolates
//! linearly, like every other segment in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::history::{History, Segment, Trajectory};
use crate::models::ModelPair;

/// States with a component above this magnitude abort the integration.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: f64,
    pub scheme: Scheme,
    pub horizon: f64,
}

impl IntegratorConfig {
    pub fn rk4(step: f64, horizon: f64) -> Self {
        Self {
            step,
            scheme: Scheme::Rk4,
            horizon,
        }
    }

    pub fn euler(step: f64, horizon: f64) -> Self {
        Self {
            step,
            scheme: Scheme::Euler,
            horizon,
        }
    }

    pub fn validate(&self, delay: f64) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return domain(format!("step must be positive, got {}", self.step));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {}", self.horizon));
        }
        let limit = match self.scheme {
            Scheme::Euler => delay,
            Scheme::Rk4 => delay / 2.0,
        };
        if self.step > limit {
            return domain(format!(
                "step {} exceeds {limit} for {:?} with delay {delay}",
                self.step, self.scheme
            ));
        }
        Ok(())
    }

    /// Number of steps needed to reach the horizon.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Which algebraic route evaluates the closed-loop right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackPath {
    /// `F(x_t)` directly.
    Stacked,
    /// `F~(x_t, k~(x_t))`.
    Composite,
}

/// Solution history under construction.
pub(crate) struct DenseHistory {
    initial: Segment,
    times: Vec<f64>,
    states: Vec<f64>,
    /// Indices of recorded times where the derivative may jump. Interpolation
    /// stencils stay between consecutive breaks.
    breaks: Vec<usize>,
}

impl DenseHistory {
    pub(crate) fn new(initial: Segment) -> Self {
        let x0 = initial.value(initial.len() - 1).to_vec();
        Self {
            initial,
            times: vec![0.0],
            states: x0,
            breaks: vec![0],
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub(crate) fn delay(&self) -> f64 {
        self.initial.delay()
    }

    pub(crate) fn front_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub(crate) fn front_state(&self) -> &[f64] {
        let d = self.dim();
        &self.states[self.states.len() - d..]
    }

    fn state(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    /// Marks the current front as a derivative break.
    pub(crate) fn mark_break(&mut self) {
        let last = self.times.len() - 1;
        if *self.breaks.last().unwrap() != last {
            self.breaks.push(last);
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: &[f64], interval: Option<usize>) -> Result<()> {
        if state
            .iter()
            .any(|x| !x.is_finite() || x.abs() > DIVERGENCE_THRESHOLD)
        {
            return Err(Error::Divergence { time: t, interval });
        }
        self.times.push(t);
        self.states.extend_from_slice(state);
        Ok(())
    }

    /// Value at `s <= front_time`.
    pub(crate) fn value_at(&self, s: f64) -> Vec<f64> {
        if s <= 0.0 {
            return self.initial.at(s);
        }
        let len = self.times.len();
        let i = self.times.partition_point(|&t| t < s);
        if i >= len {
            return self.front_state().to_vec();
        }
        if self.times[i] == s {
            return self.state(i).to_vec();
        }
        // s lies in (times[i - 1], times[i]); find the smooth piece holding it
        let b = self.breaks.partition_point(|&k| k < i) - 1;
        let lo = self.breaks[b];
        let hi = self.breaks.get(b + 1).copied().unwrap_or(len - 1);
        if hi - lo < 3 {
            let (t0, t1) = (self.times[i - 1], self.times[i]);
            let w = (s - t0) / (t1 - t0);
            return self
                .state(i - 1)
                .iter()
                .zip(self.state(i))
                .map(|(a, b)| a + w * (b - a))
                .collect();
        }
        let start = (i.saturating_sub(2)).clamp(lo, hi - 3);
        let idx = [start, start + 1, start + 2, start + 3];
        let mut out = vec![0.0; self.dim()];
        for (a, &ia) in idx.iter().enumerate() {
            let mut w = 1.0;
            for (b, &ib) in idx.iter().enumerate() {
                if a != b {
                    w *= (s - self.times[ib]) / (self.times[ia] - self.times[ib]);
                }
            }
            for (o, x) in out.iter_mut().zip(self.state(ia)) {
                *o += w * x;
            }
        }
        out
    }

    pub(crate) fn into_trajectory(self) -> Result<Trajectory> {
        Trajectory::from_flat(self.initial, self.times, self.states)
    }

    /// The segment seen at a stage: history up to the front, then the line
    /// from the front state to `stage_state` at `stage_time`.
    pub(crate) fn stage_view<'a>(
        &'a self,
        stage_time: f64,
        stage_state: &'a [f64],
    ) -> StageView<'a> {
        StageView {
            hist: self,
            front_time: self.front_time(),
            stage_time,
            stage_state,
        }
    }

    pub(crate) fn front_view(&self) -> StageView<'_> {
        self.stage_view(self.front_time(), self.front_state())
    }

    /// Advances the front by one step of size `h`.
    pub(crate) fn step(
        &mut self,
        h: f64,
        t_next: f64,
        scheme: Scheme,
        interval: Option<usize>,
        mut rhs: impl FnMut(&dyn History) -> Result<Vec<f64>>,
    ) -> Result<()> {
        let t = self.front_time();
        let y = self.front_state().to_vec();
        let axpy =
            |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
        let next = match scheme {
            Scheme::Euler => {
                let k1 = rhs(&self.front_view())?;
                axpy(h, &k1)
            }
            Scheme::Rk4 => {
                let k1 = rhs(&self.front_view())?;
                let y2 = axpy(0.5 * h, &k1);
                let k2 = rhs(&self.stage_view(t + 0.5 * h, &y2))?;
                let y3 = axpy(0.5 * h, &k2);
                let k3 = rhs(&self.stage_view(t + 0.5 * h, &y3))?;
                let y4 = axpy(h, &k3);
                let k4 = rhs(&self.stage_view(t + h, &y4))?;
                (0..y.len())
                    .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        self.push(t_next, &next, interval)
    }
}

pub(crate) struct StageView<'a> {
    hist: &'a DenseHistory,
    front_time: f64,
    stage_time: f64,
    stage_state: &'a [f64],
}

impl History for StageView<'_> {
    fn dim(&self) -> usize {
        self.hist.dim()
    }

    fn delay(&self) -> f64 {
        self.hist.delay()
    }

    fn at(&self, theta: f64) -> Vec<f64> {
        let s = self.stage_time + theta.clamp(-self.hist.delay(), 0.0);
        if s <= self.front_time {
            return self.hist.value_at(s);
        }
        let w = (s - self.front_time) / (self.stage_time - self.front_time);
        self.hist
            .front_state()
            .iter()
            .zip(self.stage_state)
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let delay = self.hist.delay();
        let t = self.stage_time;
        let mut out = vec![-delay];
        let mut push = |theta: f64| {
            if theta > -delay && theta < 0.0 && theta > *out.last().unwrap() {
                out.push(theta);
            }
        };
        if t - delay < 0.0 {
            for &k in self.hist.initial.knots() {
                push(k - t);
            }
        }
        let lo = self
            .hist
            .times
            .partition_point(|&s| s <= (t - delay).max(0.0));
        for &s in &self.hist.times[lo..] {
            push(s - t);
        }
        out.push(0.0);
        out
    }
}

/// Integrates `x' = rhs(x_t)` from the initial segment over `cfg.horizon`.
/// Derivative kinks of the initial data propagate to `t = k * delay`, losing
/// one order of smoothness each time; interpolation stencils must not straddle
/// the first few of them.
fn lands_on_delay_multiple(t: f64, delay: f64, step: f64) -> bool {
    let k = (t / delay).round();
    (1.0..=3.0).contains(&k) && (t - k * delay).abs() <= 1e-9 * step
}

pub fn integrate_rfde(
    initial: Segment,
    cfg: &IntegratorConfig,
    mut rhs: impl FnMut(&dyn History) -> Result<Vec<f64>>,
) -> Result<Trajectory> {
    cfg.validate(initial.delay())?;
    let initial_delay = initial.delay();
    let mut hist = DenseHistory::new(initial);
    for i in 1..=cfg.steps() {
        let t_next = i as f64 * cfg.step;
        let h = t_next - hist.front_time();
        hist.step(h, t_next, cfg.scheme, None, &mut rhs)?;
        if lands_on_delay_multiple(t_next, initial_delay, cfg.step) {
            hist.mark_break();
        }
    }
    hist.into_trajectory()
}

fn stacked_initial(model: &ModelPair, x0: &Segment, xhat0: &Segment) -> Result<Segment> {
    for (name, seg) in [("x0", x0), ("xhat0", xhat0)] {
        if seg.dim() != model.n {
            return domain(format!(
                "{name} has dimension {}, model has n = {}",
                seg.dim(),
                model.n
            ));
        }
        if seg.delay() != model.delay {
            return domain(format!(
                "{name} delay {} differs from model delay {}",
                seg.delay(),
                model.delay
            ));
        }
    }
    x0.stack(xhat0)
}

/// Continuous-time closed loop `x~' = F(x~_t)`; the result has dimension `2n`.
pub fn integrate_continuous(
    model: &ModelPair,
    x0: &Segment,
    xhat0: &Segment,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_extended(model, x0, xhat0, FeedbackPath::Stacked, cfg)
}

/// The same closed loop, optionally written as the extended open-loop system
/// driven by the composite feedback.
pub fn integrate_extended(
    model: &ModelPair,
    x0: &Segment,
    xhat0: &Segment,
    path: FeedbackPath,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let initial = stacked_initial(model, x0, xhat0)?;
    match path {
        FeedbackPath::Stacked => integrate_rfde(initial, cfg, |phi| model.stacked_rhs(phi)),
        FeedbackPath::Composite => integrate_rfde(initial, cfg, |phi| {
            let u = model.composite_feedback(phi)?;
            model.extended_rhs(phi, &u)
        }),
    }
}
