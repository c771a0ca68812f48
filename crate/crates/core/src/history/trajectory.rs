use super::segment::{norm, History, Segment};
use crate::error::{domain, Result};

/// Relative slack allowed when a query time overshoots the last recorded
/// time by floating-point rounding.
const END_SLACK: f64 = 1e-12;

/// A solution record: the initial segment on `[-delay, 0]` followed by states
/// at strictly increasing times starting at `0`.
///
/// Lookups between recorded times interpolate linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    initial: Segment,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(initial: Segment, times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        let dim = initial.dim();
        if states.iter().any(|s| s.len() != dim) {
            return domain("trajectory states must match the initial segment dimension");
        }
        Self::from_flat(initial, times, states.into_iter().flatten().collect())
    }

    pub(crate) fn from_flat(initial: Segment, times: Vec<f64>, states: Vec<f64>) -> Result<Self> {
        let dim = initial.dim();
        if times.is_empty() || times[0] != 0.0 {
            return domain("trajectory times must start at 0");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("trajectory times must be strictly increasing");
        }
        if states.len() != times.len() * dim {
            return domain("one state per recorded time is required");
        }
        if states[..dim] != *initial.value(initial.len() - 1) {
            return domain("first state must equal the initial segment at 0");
        }
        if states.iter().any(|x| !x.is_finite()) {
            return domain("trajectory states must be finite");
        }
        Ok(Self {
            initial,
            times,
            states,
        })
    }

    pub fn initial(&self) -> &Segment {
        &self.initial
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn delay(&self) -> f64 {
        self.initial.delay()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim())
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    fn clamp_end(&self, s: f64) -> Result<f64> {
        let end = self.end_time();
        if s > end + END_SLACK * end.max(1.0) {
            return domain(format!("time {s} beyond trajectory end {end}"));
        }
        Ok(s.min(end))
    }

    /// State at time `s`, which may lie anywhere in `[-delay, end]`.
    pub fn lookup(&self, s: f64) -> Result<Vec<f64>> {
        if s.is_nan() {
            return domain("lookup time is NaN");
        }
        if s <= 0.0 {
            return self.initial.eval(s);
        }
        let s = self.clamp_end(s)?;
        Ok(self.lookup_unchecked(s))
    }

    fn lookup_unchecked(&self, s: f64) -> Vec<f64> {
        if s <= 0.0 {
            return self.initial.at(s);
        }
        let i = self.times.partition_point(|&t| t < s);
        if i >= self.times.len() {
            return self.last_state().to_vec();
        }
        if self.times[i] == s {
            return self.state(i).to_vec();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (s - t0) / (t1 - t0);
        self.state(i - 1)
            .iter()
            .zip(self.state(i))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// The state segment `x_t` as an owned piecewise-linear segment.
    pub fn window(&self, t: f64) -> Result<Segment> {
        Ok(self.window_view(t)?.to_segment())
    }

    /// A borrowed view of `x_t`.
    pub fn window_view(&self, t: f64) -> Result<Window<'_>> {
        if !(t >= 0.0) {
            return domain(format!("window time {t} must be non-negative"));
        }
        let t = self.clamp_end(t)?;
        Ok(Window { traj: self, t })
    }

    /// Components `start..start + len` of every state.
    pub fn block(&self, start: usize, len: usize) -> Result<Trajectory> {
        let initial = self.initial.block(start, len)?;
        let states = self
            .states()
            .flat_map(|s| s[start..start + len].iter().copied())
            .collect();
        Trajectory::from_flat(initial, self.times.clone(), states)
    }

    /// Largest Euclidean norm over the initial segment and all recorded states.
    pub fn sup_norm(&self) -> f64 {
        self.states()
            .map(norm)
            .fold(self.initial.sup_norm(), f64::max)
    }
}

/// The segment `theta -> x(t + theta)` of a trajectory.
pub struct Window<'a> {
    traj: &'a Trajectory,
    t: f64,
}

impl Window<'_> {
    pub fn time(&self) -> f64 {
        self.t
    }
}

impl History for Window<'_> {
    fn dim(&self) -> usize {
        self.traj.dim()
    }

    fn delay(&self) -> f64 {
        self.traj.delay()
    }

    fn at(&self, theta: f64) -> Vec<f64> {
        let delay = self.traj.delay();
        self.traj
            .lookup_unchecked(self.t + theta.clamp(-delay, 0.0))
    }

    fn breakpoints(&self) -> Vec<f64> {
        let delay = self.traj.delay();
        let t = self.t;
        let mut out = vec![-delay];
        let mut push = |theta: f64| {
            if theta > -delay && theta < 0.0 && theta > *out.last().unwrap() {
                out.push(theta);
            }
        };
        if t - delay < 0.0 {
            for &k in self.traj.initial.knots() {
                push(k - t);
            }
        }
        let lo = self
            .traj
            .times
            .partition_point(|&s| s <= (t - delay).max(0.0));
        for &s in self.traj.times[lo..].iter() {
            if s >= t {
                break;
            }
            push(s - t);
        }
        out.push(0.0);
        out
    }

    fn to_segment(&self) -> Segment {
        let knots = self.breakpoints();
        let mut values = Vec::with_capacity(knots.len() * self.dim());
        for &k in &knots {
            values.extend(self.at(k));
        }
        Segment::from_flat(self.delay(), self.dim(), knots, values)
            .expect("windows of valid trajectories are valid segments")
    }
}
