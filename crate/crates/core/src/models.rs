//! Plant and observer-controller maps, the closed-loop and extended
//! open-loop right-hand sides, and the compiled-in benchmark library.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::history::{norm, Block, History, Segment};

/// Plant dynamics `f(x_t, u)`.
pub type PlantMap = Arc<dyn Fn(&dyn History, &[f64]) -> Vec<f64> + Send + Sync>;
/// Measured output `h(x_t)`.
pub type OutputMap = Arc<dyn Fn(&dyn History) -> Vec<f64> + Send + Sync>;
/// Observer dynamics `f_hat(xhat_t, u, y)`.
pub type ObserverMap = Arc<dyn Fn(&dyn History, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Control law `k(xhat_t, y)`.
pub type FeedbackMap = Arc<dyn Fn(&dyn History, &[f64]) -> Vec<f64> + Send + Sync>;

/// A time-delay plant together with its observer-based controller.
///
/// All four maps must be pure, vanish at zero and be Lipschitz on bounded
/// sets. The last property is a contract; [`lipschitz_estimate`] spot-checks it.
#[derive(Clone)]
pub struct ModelPair {
    /// State dimension.
    pub n: usize,
    /// Input dimension.
    pub m: usize,
    /// Output dimension.
    pub q: usize,
    /// Maximum involved delay.
    pub delay: f64,
    pub f: PlantMap,
    pub h: OutputMap,
    pub f_hat: ObserverMap,
    pub k: FeedbackMap,
}

impl fmt::Debug for ModelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelPair")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.q)
            .field("delay", &self.delay)
            .finish_non_exhaustive()
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return domain(format!("{what} has dimension {got}, expected {want}"));
    }
    Ok(())
}

impl ModelPair {
    fn check_history(&self, phi: &dyn History, dim: usize) -> Result<()> {
        check_len("segment", phi.dim(), dim)?;
        if phi.delay() != self.delay {
            return domain(format!(
                "segment delay {} does not match model delay {}",
                phi.delay(),
                self.delay
            ));
        }
        Ok(())
    }

    /// `f(x_t, u)` with dimension checks.
    pub fn plant_rhs(&self, x: &dyn History, u: &[f64]) -> Result<Vec<f64>> {
        self.check_history(x, self.n)?;
        check_len("input", u.len(), self.m)?;
        let out = (self.f)(x, u);
        check_len("f output", out.len(), self.n)?;
        Ok(out)
    }

    pub fn output(&self, x: &dyn History) -> Result<Vec<f64>> {
        self.check_history(x, self.n)?;
        let y = (self.h)(x);
        check_len("h output", y.len(), self.q)?;
        Ok(y)
    }

    pub fn control(&self, xhat: &dyn History, y: &[f64]) -> Result<Vec<f64>> {
        self.check_history(xhat, self.n)?;
        let u = (self.k)(xhat, y);
        check_len("k output", u.len(), self.m)?;
        Ok(u)
    }

    pub fn observer_rhs(&self, xhat: &dyn History, u: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_history(xhat, self.n)?;
        let out = (self.f_hat)(xhat, u, y);
        check_len("f_hat output", out.len(), self.n)?;
        Ok(out)
    }

    /// Closed-loop map `F` on stacked segments `[x_t; xhat_t]`.
    ///
    /// The output `h` and the control `k` are evaluated once and shared by
    /// both blocks.
    pub fn stacked_rhs(&self, phi: &dyn History) -> Result<Vec<f64>> {
        self.check_history(phi, 2 * self.n)?;
        let plant = Block::new(phi, 0, self.n)?;
        let observer = Block::new(phi, self.n, self.n)?;
        let y = self.output(&plant)?;
        let u = self.control(&observer, &y)?;
        let mut out = self.plant_rhs(&plant, &u)?;
        out.extend(self.observer_rhs(&observer, &u, &y)?);
        Ok(out)
    }

    /// Extended open-loop map `F~(phi, u~) = [f(phi_1, u~_1); u~_2]`.
    pub fn extended_rhs(&self, phi: &dyn History, u_tilde: &[f64]) -> Result<Vec<f64>> {
        self.check_history(phi, 2 * self.n)?;
        check_len("extended input", u_tilde.len(), self.m + self.n)?;
        let plant = Block::new(phi, 0, self.n)?;
        let mut out = self.plant_rhs(&plant, &u_tilde[..self.m])?;
        out.extend_from_slice(&u_tilde[self.m..]);
        Ok(out)
    }

    /// Composite feedback `k~(phi) = [k(phi_2, h(phi_1)); f_hat(phi_2, k(..), h(phi_1))]`.
    pub fn composite_feedback(&self, phi: &dyn History) -> Result<Vec<f64>> {
        self.check_history(phi, 2 * self.n)?;
        let plant = Block::new(phi, 0, self.n)?;
        let observer = Block::new(phi, self.n, self.n)?;
        let y = self.output(&plant)?;
        let mut u = self.control(&observer, &y)?;
        let drift = self.observer_rhs(&observer, &u, &y)?;
        u.extend(drift);
        Ok(u)
    }

    /// Largest absolute output of the four maps at zero arguments.
    pub fn zero_residual(&self) -> Result<f64> {
        let zero = Segment::zero(self.delay, self.n)?;
        let (u0, y0) = (vec![0.0; self.m], vec![0.0; self.q]);
        let outs = [
            self.plant_rhs(&zero, &u0)?,
            self.output(&zero)?,
            self.observer_rhs(&zero, &u0, &y0)?,
            self.control(&zero, &y0)?,
        ];
        Ok(outs
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, x| acc.max(x.abs())))
    }
}

/// Largest observed ratio `|g(a) - g(b)| / ||a - b||_inf` over the given pairs.
pub fn lipschitz_estimate(
    g: impl Fn(&Segment) -> Vec<f64>,
    pairs: &[(Segment, Segment)],
) -> Result<f64> {
    let mut best = 0.0_f64;
    for (a, b) in pairs {
        let dist = a.difference(b)?.sup_norm();
        if dist == 0.0 {
            continue;
        }
        let ga = g(a);
        let gb = g(b);
        let diff: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
        let ratio = norm(&diff) / dist;
        if !ratio.is_finite() {
            return Err(Error::Evaluation("non-finite Lipschitz ratio".into()));
        }
        best = best.max(ratio);
    }
    Ok(best)
}

/// A named model from the compiled-in library.
#[derive(Clone, Debug)]
pub struct BenchmarkSpec {
    pub name: String,
    pub description: String,
    pub model: ModelPair,
    /// Every tunable constant, after applying overrides.
    pub gains: BTreeMap<String, f64>,
}

/// Names accepted by [`benchmark`].
pub const BENCHMARK_NAMES: &[&str] = &["linear-scalar", "nonlinear-sine", "delayed-output", "zero"];

fn resolve(
    name: &str,
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut gains: BTreeMap<String, f64> =
        defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    for (k, &v) in overrides {
        match gains.get_mut(k) {
            Some(slot) => *slot = v,
            None => {
                let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(Error::Config(format!(
                    "unknown parameter {k:?} for model {name:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("parameter {k:?} must be finite")));
        }
    }
    if gains["delay"] <= 0.0 {
        return Err(Error::Config("parameter \"delay\" must be positive".into()));
    }
    Ok(gains)
}

/// Looks up a benchmark by name, applying parameter overrides.
pub fn benchmark(name: &str, params: &BTreeMap<String, f64>) -> Result<BenchmarkSpec> {
    match name {
        "linear-scalar" => {
            let g = resolve(name, LinearScalar::DEFAULTS, params)?;
            let p = LinearScalar::from_gains(&g);
            Ok(BenchmarkSpec {
                name: name.into(),
                description: "x' = a0 x(t) + a1 x(t - delay) + b u, y = x(t); \
                              Luenberger copy with gain L; u = -K xhat(t)"
                    .into(),
                model: p.model(),
                gains: g,
            })
        }
        "nonlinear-sine" => {
            let g = resolve(name, NonlinearSine::DEFAULTS, params)?;
            let p = NonlinearSine::from_gains(&g);
            Ok(BenchmarkSpec {
                name: name.into(),
                description: "x' = a0 x(t) + c sin(x(t - delay)) + u, y = x(t); \
                              observer copy with gain L; u = -K xhat(t)"
                    .into(),
                model: p.model(),
                gains: g,
            })
        }
        "delayed-output" => {
            let g = resolve(name, DelayedOutput::DEFAULTS, params)?;
            let p = DelayedOutput::from_gains(&g);
            Ok(BenchmarkSpec {
                name: name.into(),
                description: "x' = a0 x(t) + a1 x(t - delay) + u, y = x(t - delay); \
                              observer corrects on the delayed output; u = -K xhat(t)"
                    .into(),
                model: p.model(),
                gains: g,
            })
        }
        "zero" => {
            let g = resolve(name, &[("delay", 1.0)], params)?;
            Ok(BenchmarkSpec {
                name: name.into(),
                description: "all maps identically zero".into(),
                model: zero_model(g["delay"]),
                gains: g,
            })
        }
        _ => Err(Error::Config(format!(
            "unknown model {name:?} (known: {})",
            BENCHMARK_NAMES.join(", ")
        ))),
    }
}

/// Scalar linear plant with one discrete delay, full-order observer and
/// observer-state feedback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearScalar {
    pub a0: f64,
    pub a1: f64,
    pub b: f64,
    pub observer_gain: f64,
    pub feedback_gain: f64,
    pub delay: f64,
}

impl Default for LinearScalar {
    fn default() -> Self {
        Self::from_gains(
            &Self::DEFAULTS
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

impl LinearScalar {
    pub const DEFAULTS: &'static [(&'static str, f64)] = &[
        ("a0", 0.2),
        ("a1", 0.1),
        ("b", 1.0),
        ("L", 1.0),
        ("K", 1.5),
        ("delay", 1.0),
    ];

    fn from_gains(g: &BTreeMap<String, f64>) -> Self {
        Self {
            a0: g["a0"],
            a1: g["a1"],
            b: g["b"],
            observer_gain: g["L"],
            feedback_gain: g["K"],
            delay: g["delay"],
        }
    }

    pub fn model(&self) -> ModelPair {
        let Self {
            a0,
            a1,
            b,
            observer_gain: l,
            feedback_gain: k,
            delay,
        } = *self;
        ModelPair {
            n: 1,
            m: 1,
            q: 1,
            delay,
            f: Arc::new(move |x, u| vec![a0 * x.at(0.0)[0] + a1 * x.at(-delay)[0] + b * u[0]]),
            h: Arc::new(|x| vec![x.at(0.0)[0]]),
            f_hat: Arc::new(move |xh, u, y| {
                let now = xh.at(0.0)[0];
                vec![a0 * now + a1 * xh.at(-delay)[0] + b * u[0] + l * (y[0] - now)]
            }),
            k: Arc::new(move |xh, _y| vec![-k * xh.at(0.0)[0]]),
        }
    }
}

/// Scalar plant with a sine nonlinearity on the delayed state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinearSine {
    pub a0: f64,
    pub c: f64,
    pub observer_gain: f64,
    pub feedback_gain: f64,
    pub delay: f64,
}

impl Default for NonlinearSine {
    fn default() -> Self {
        Self::from_gains(
            &Self::DEFAULTS
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

impl NonlinearSine {
    pub const DEFAULTS: &'static [(&'static str, f64)] = &[
        ("a0", 0.5),
        ("c", 0.5),
        ("L", 1.5),
        ("K", 2.0),
        ("delay", 1.0),
    ];

    fn from_gains(g: &BTreeMap<String, f64>) -> Self {
        Self {
            a0: g["a0"],
            c: g["c"],
            observer_gain: g["L"],
            feedback_gain: g["K"],
            delay: g["delay"],
        }
    }

    pub fn model(&self) -> ModelPair {
        let Self {
            a0,
            c,
            observer_gain: l,
            feedback_gain: k,
            delay,
        } = *self;
        ModelPair {
            n: 1,
            m: 1,
            q: 1,
            delay,
            f: Arc::new(move |x, u| vec![a0 * x.at(0.0)[0] + c * x.at(-delay)[0].sin() + u[0]]),
            h: Arc::new(|x| vec![x.at(0.0)[0]]),
            f_hat: Arc::new(move |xh, u, y| {
                let now = xh.at(0.0)[0];
                vec![a0 * now + c * xh.at(-delay)[0].sin() + u[0] + l * (y[0] - now)]
            }),
            k: Arc::new(move |xh, _y| vec![-k * xh.at(0.0)[0]]),
        }
    }
}

/// Scalar plant whose only measurement is the delayed state `x(t - delay)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedOutput {
    pub a0: f64,
    pub a1: f64,
    pub observer_gain: f64,
    pub feedback_gain: f64,
    pub delay: f64,
}

impl Default for DelayedOutput {
    fn default() -> Self {
        Self::from_gains(
            &Self::DEFAULTS
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

impl DelayedOutput {
    pub const DEFAULTS: &'static [(&'static str, f64)] = &[
        ("a0", -1.0),
        ("a1", 0.5),
        ("L", 0.5),
        ("K", 0.5),
        ("delay", 1.0),
    ];

    fn from_gains(g: &BTreeMap<String, f64>) -> Self {
        Self {
            a0: g["a0"],
            a1: g["a1"],
            observer_gain: g["L"],
            feedback_gain: g["K"],
            delay: g["delay"],
        }
    }

    pub fn model(&self) -> ModelPair {
        let Self {
            a0,
            a1,
            observer_gain: l,
            feedback_gain: k,
            delay,
        } = *self;
        ModelPair {
            n: 1,
            m: 1,
            q: 1,
            delay,
            f: Arc::new(move |x, u| vec![a0 * x.at(0.0)[0] + a1 * x.at(-delay)[0] + u[0]]),
            h: Arc::new(move |x| vec![x.at(-delay)[0]]),
            f_hat: Arc::new(move |xh, u, y| {
                let past = xh.at(-delay)[0];
                vec![a0 * xh.at(0.0)[0] + a1 * past + u[0] + l * (y[0] - past)]
            }),
            k: Arc::new(move |xh, _y| vec![-k * xh.at(0.0)[0]]),
        }
    }
}

/// The scalar model whose maps all vanish identically.
pub fn zero_model(delay: f64) -> ModelPair {
    ModelPair {
        n: 1,
        m: 1,
        q: 1,
        delay,
        f: Arc::new(|_, _| vec![0.0]),
        h: Arc::new(|_| vec![0.0]),
        f_hat: Arc::new(|_, _, _| vec![0.0]),
        k: Arc::new(|_, _| vec![0.0]),
    }
}
