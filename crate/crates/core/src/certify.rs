//! Empirical practical-stability certification and convergence studies of
//! the sampled-data emulation.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{integrate_continuous, IntegratorConfig, DIVERGENCE_THRESHOLD};
use crate::error::{domain, Error, Result};
use crate::history::{norm, Segment};
use crate::models::ModelPair;
use crate::sampled::{
    derive_seed, sample_initial_pair, simulate_sampled, Partition, SampledConfig, SampledRun,
};

/// Fraction of the horizon by which every trial must have entered the small
/// ball for good.
pub const ENTRY_DEADLINE: f64 = 0.8;

/// How sampling bounds are explored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPlan {
    /// Every listed bound is evaluated; the largest passing one is reported.
    Grid(Vec<f64>),
    /// Bisection between the bounds, starting from `delta_max`.
    Search {
        delta_max: f64,
        delta_min: f64,
        bisection_steps: usize,
    },
}

/// Everything a certification run needs besides the model.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifySettings {
    /// Radius of the ball of initial data.
    pub big_r: f64,
    /// Radius of the target ball.
    pub r: f64,
    pub a: f64,
    pub q_tilde: f64,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    pub sampled: SampledConfig,
    pub plan: DeltaPlan,
}

impl CertifySettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.r > 0.0 && self.big_r > 0.0) {
            return bad(format!(
                "radii must be positive (R = {}, r = {})",
                self.big_r, self.r
            ));
        }
        if !(self.r < self.big_r) {
            return bad(format!(
                "r = {} must be smaller than R = {}",
                self.r, self.big_r
            ));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return bad(format!("a = {} must lie in (0, 1]", self.a));
        }
        if !(self.q_tilde > 0.0) {
            return bad(format!("q_tilde = {} must be positive", self.q_tilde));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sampled.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        match &self.plan {
            DeltaPlan::Grid(g) => {
                if g.is_empty() || g.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return bad("delta_grid must be a nonempty list of positive reals".into());
                }
            }
            DeltaPlan::Search {
                delta_max,
                delta_min,
                ..
            } => {
                if !(*delta_min > 0.0 && delta_min < delta_max && delta_max.is_finite()) {
                    return bad(format!(
                        "need 0 < delta_min < delta_max (got {delta_min}, {delta_max})"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Why a trial did not certify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureKind {
    Diverged {
        message: String,
    },
    /// Outside the small ball at some time at or after the entry deadline.
    OutsideAfterDeadline,
    /// A simulation error other than divergence.
    Error {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    /// First time the trial violated the certificate.
    pub time: f64,
    #[serde(flatten)]
    pub kind: FailureKind,
}

/// Aggregate over all trials at one sampling bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaEvaluation {
    pub delta: f64,
    pub passed: bool,
    /// Largest stacked sup norm over all trials; diverged trials count with
    /// the divergence threshold.
    pub e_hat: f64,
    /// Latest entry time into the small ball over completed trials.
    pub t_hat: Option<f64>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub version: String,
    /// Largest passing sampling bound found.
    pub delta_star: Option<f64>,
    /// `E_hat`, `T_hat` and failures refer to `delta_star` when the run
    /// passed, and to the smallest evaluated bound otherwise.
    pub e_hat: f64,
    pub t_hat: Option<f64>,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
    /// Evaluated bounds in the order they were tried.
    pub evaluations: Vec<DeltaEvaluation>,
    /// Passing bounds above failing ones; unexpected but possible with
    /// randomized partitions.
    pub anomalies: Vec<String>,
    pub passed: bool,
}

/// Seeds of trial `i`: initial data and partition draw from separate streams.
fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, trial as u64)
}

/// Initial data and partition of one trial.
pub fn trial_setup(
    model: &ModelPair,
    s: &CertifySettings,
    trial: usize,
    delta: f64,
) -> Result<(Segment, Segment, Partition)> {
    let seed = trial_seed(s.seed, trial);
    let (x0, xhat0) = sample_initial_pair(s.big_r, s.q_tilde, model.delay, model.n, seed)?;
    let partition = Partition::generate(s.a, delta, s.horizon, derive_seed(seed, 3))?;
    Ok((x0, xhat0, partition))
}

/// Sparse table for range-maximum queries.
struct RangeMax {
    levels: Vec<Vec<f64>>,
}

impl RangeMax {
    fn new(values: Vec<f64>) -> Self {
        let mut levels = vec![values];
        let mut width = 1;
        while 2 * width <= levels[0].len() {
            let prev = levels.last().unwrap();
            let next = (0..prev.len() - width)
                .map(|i| prev[i].max(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Maximum over indices `lo..=hi`; `0` for an empty range.
    fn query(&self, lo: usize, hi: usize) -> f64 {
        if lo > hi {
            return 0.0;
        }
        let k = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        self.levels[k][lo].max(self.levels[k][hi + 1 - (1 << k)])
    }
}

/// Sup norms over windows of a piecewise-linear record that continues
/// initial data on `[-delay, 0]`.
struct WindowSup<'a> {
    initial: &'a Segment,
    times: &'a [f64],
    points: Vec<&'a [f64]>,
    norms: RangeMax,
}

impl<'a> WindowSup<'a> {
    fn new(initial: &'a Segment, times: &'a [f64], points: Vec<&'a [f64]>) -> Self {
        let norms = RangeMax::new(points.iter().map(|p| norm(p)).collect());
        Self {
            initial,
            times,
            points,
            norms,
        }
    }

    fn norm_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return norm(
                &self
                    .initial
                    .eval(s.max(-self.initial.delay()))
                    .unwrap_or_default(),
            );
        }
        let i = self.times.partition_point(|&t| t <= s);
        if i == 0 || i >= self.times.len() {
            return norm(self.points[i.min(self.points.len()) - 1]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (s - t0) / (t1 - t0);
        let (p, q) = (self.points[i - 1], self.points[i]);
        let v: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + w * (b - a)).collect();
        norm(&v)
    }

    /// `sup_{s in [hi - delay, hi]} |record(s)|`.
    fn sup(&self, hi: f64) -> f64 {
        let lo = hi - self.initial.delay();
        let mut m = self.norm_at(lo).max(self.norm_at(hi));
        if lo < 0.0 {
            for (k, v) in self.initial.knots().iter().zip(self.initial.values()) {
                if *k > lo && *k <= hi.min(0.0) {
                    m = m.max(norm(v));
                }
            }
        }
        let first = self.times.partition_point(|&t| t < lo.max(0.0));
        let last = self.times.partition_point(|&t| t <= hi);
        if last > first {
            m = m.max(self.norms.query(first, last - 1));
        }
        m
    }
}

/// Upper bound of the stacked sup norm `||[x_t; xhat_{t_j}]||` on a time grid
/// of spacing `delta / 4`, pairing each `t` with the `t_j <= t < t_{j+1}`.
///
/// Uses `sqrt(||x_t||^2 + ||xhat_{t_j}||^2)`, which dominates the exact
/// stacked norm.
pub fn stacked_sup_profile(run: &SampledRun) -> Vec<(f64, f64)> {
    let plant = WindowSup::new(
        run.plant.initial(),
        run.plant.times(),
        run.plant.states().collect(),
    );
    let observer = WindowSup::new(
        &run.initial_observer,
        run.partition.times(),
        run.observer_samples().map(|(_, x)| x).collect(),
    );
    let spacing = run.partition.delta() / 4.0;
    let end = run.plant.end_time();
    let count = (end / spacing).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| i as f64 * spacing).collect();
    if grid.last().is_some_and(|&t| t < end) {
        grid.push(end);
    }
    grid.into_iter()
        .map(|t| {
            let j = run.partition.interval_of(t);
            let tj = run.partition.times()[j];
            let (p, q) = (plant.sup(t), observer.sup(tj));
            (t, (p * p + q * q).sqrt())
        })
        .collect()
}

struct TrialOutcome {
    trial: usize,
    seed: u64,
    e: f64,
    entry: Option<f64>,
    failure: Option<TrialFailure>,
}

fn run_trial(model: &ModelPair, s: &CertifySettings, trial: usize, delta: f64) -> TrialOutcome {
    let seed = trial_seed(s.seed, trial);
    let fail = |e: f64, time: f64, kind: FailureKind| TrialOutcome {
        trial,
        seed,
        e,
        entry: None,
        failure: Some(TrialFailure {
            trial,
            seed,
            time,
            kind,
        }),
    };
    let (x0, xhat0, partition) = match trial_setup(model, s, trial, delta) {
        Ok(v) => v,
        Err(e) => {
            return fail(
                0.0,
                0.0,
                FailureKind::Error {
                    message: e.to_string(),
                },
            )
        }
    };
    let initial_sup = x0.sup_norm().hypot(xhat0.sup_norm());
    let run = match simulate_sampled(model, &x0, &xhat0, &partition, &s.sampled) {
        Ok(run) => run,
        // the state reached the divergence threshold before the run stopped
        Err(e @ Error::Divergence { time, .. }) => {
            return fail(
                DIVERGENCE_THRESHOLD,
                time,
                FailureKind::Diverged {
                    message: e.to_string(),
                },
            )
        }
        Err(e) => {
            return fail(
                initial_sup,
                0.0,
                FailureKind::Error {
                    message: e.to_string(),
                },
            )
        }
    };
    let profile = stacked_sup_profile(&run);
    let e = profile.iter().fold(0.0_f64, |m, &(_, v)| m.max(v));
    let deadline = ENTRY_DEADLINE * s.horizon;
    // entry time: first grid time after the last excursion from the small ball
    let last_out = profile.iter().rposition(|&(_, v)| v > s.r);
    let entry = match last_out {
        None => Some(0.0),
        Some(i) => profile.get(i + 1).map(|&(t, _)| t),
    };
    let failure = match (last_out, entry) {
        (_, Some(t)) if t <= deadline => None,
        _ => {
            let time = profile
                .iter()
                .find(|&&(t, v)| t >= deadline && v > s.r)
                .map_or(deadline, |&(t, _)| t);
            Some(TrialFailure {
                trial,
                seed,
                time,
                kind: FailureKind::OutsideAfterDeadline,
            })
        }
    };
    TrialOutcome {
        trial,
        seed,
        e,
        entry,
        failure,
    }
}

/// Runs every trial at one sampling bound.
pub fn evaluate_delta(model: &ModelPair, s: &CertifySettings, delta: f64) -> DeltaEvaluation {
    let mut outcomes: Vec<TrialOutcome> = (0..s.trials)
        .into_par_iter()
        .map(|i| run_trial(model, s, i, delta))
        .collect();
    outcomes.sort_by_key(|o| (o.seed, o.trial));
    let e_hat = outcomes.iter().fold(0.0_f64, |m, o| m.max(o.e));
    let failures: Vec<TrialFailure> = outcomes.iter().filter_map(|o| o.failure.clone()).collect();
    let t_hat = outcomes
        .iter()
        .filter(|o| o.failure.is_none())
        .filter_map(|o| o.entry)
        .reduce(f64::max);
    let passed = failures.is_empty();
    info!(
        "delta = {delta}: {} ({} of {} trials failed, E = {e_hat:.4})",
        if passed { "pass" } else { "fail" },
        failures.len(),
        s.trials
    );
    DeltaEvaluation {
        delta,
        passed,
        e_hat,
        t_hat: if passed { t_hat } else { None },
        failures,
    }
}

/// Searches for a sampling bound under which every seeded trial starting in
/// the `R`-ball stays bounded and settles in the `r`-ball by
/// `ENTRY_DEADLINE * horizon`.
pub fn certify_practical_stability(
    model: &ModelPair,
    s: &CertifySettings,
) -> Result<StabilityReport> {
    s.validate()?;
    let mut evals: Vec<DeltaEvaluation> = Vec::new();
    match &s.plan {
        DeltaPlan::Grid(grid) => {
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.dedup();
            for d in sorted {
                evals.push(evaluate_delta(model, s, d));
            }
        }
        &DeltaPlan::Search {
            delta_max,
            delta_min,
            bisection_steps,
        } => {
            let top = evaluate_delta(model, s, delta_max);
            let top_passed = top.passed;
            evals.push(top);
            if !top_passed {
                let bottom = evaluate_delta(model, s, delta_min);
                if bottom.passed {
                    let (mut lo, mut hi) = (delta_min, delta_max);
                    evals.push(bottom);
                    for _ in 0..bisection_steps {
                        let mid = 0.5 * (lo + hi);
                        let e = evaluate_delta(model, s, mid);
                        if e.passed {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        debug!("bisection bracket [{lo}, {hi}]");
                        evals.push(e);
                    }
                } else {
                    evals.push(bottom);
                }
            }
        }
    }

    let mut anomalies = Vec::new();
    for p in evals.iter().filter(|e| e.passed) {
        for f in evals.iter().filter(|e| !e.passed && e.delta < p.delta) {
            anomalies.push(format!(
                "delta = {} passed but the smaller delta = {} failed",
                p.delta, f.delta
            ));
        }
    }

    let best = evals
        .iter()
        .filter(|e| e.passed)
        .max_by(|a, b| a.delta.total_cmp(&b.delta));
    let reference = best.unwrap_or_else(|| {
        evals
            .iter()
            .min_by(|a, b| a.delta.total_cmp(&b.delta))
            .expect("at least one evaluation")
    });
    Ok(StabilityReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        delta_star: best.map(|e| e.delta),
        e_hat: reference.e_hat,
        t_hat: reference.t_hat,
        trials: s.trials,
        failures: reference.failures.clone(),
        passed: best.is_some(),
        anomalies,
        evaluations: evals,
    })
}

/// One row of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    /// Sup over plant grid points and sampling instants of the distance to
    /// the continuous reference; `None` if the run failed.
    pub error: Option<f64>,
    /// `log2(e_prev / e)` when `delta` halves the previous bound.
    pub order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Whether any row carries an order estimate.
    pub fn has_orders(&self) -> bool {
        self.rows.len() > 1
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        use crate::history::io::fmt_f64;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["delta", "sup_error"];
        if self.has_orders() {
            header.push("order");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![fmt_f64(r.delta), r.error.map(fmt_f64).unwrap_or_default()];
            if self.has_orders() {
                row.push(r.order.map(fmt_f64).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sup distance of a sampled run from the continuous closed loop, over plant
/// grid points and over observer samples at the sampling instants.
fn emulation_error(
    run: &SampledRun,
    reference: &crate::history::Trajectory,
    n: usize,
) -> Result<f64> {
    let mut err = 0.0_f64;
    for (i, &t) in run.plant.times().iter().enumerate() {
        if t > reference.end_time() {
            break;
        }
        let r = reference.lookup(t)?;
        let d: Vec<f64> = run
            .plant
            .state(i)
            .iter()
            .zip(&r[..n])
            .map(|(a, b)| a - b)
            .collect();
        err = err.max(norm(&d));
    }
    for (t, xh) in run.observer_samples() {
        if t > reference.end_time() {
            break;
        }
        let r = reference.lookup(t)?;
        let d: Vec<f64> = xh.iter().zip(&r[n..]).map(|(a, b)| a - b).collect();
        err = err.max(norm(&d));
    }
    Ok(err)
}

/// Distance of the Euler-emulated sampled loop from the continuous loop for a
/// decreasing list of periodic sampling bounds.
pub fn convergence_study(
    model: &ModelPair,
    x0: &Segment,
    xhat0: &Segment,
    deltas: &[f64],
    horizon: f64,
    reference_step: f64,
    sampled: &SampledConfig,
) -> Result<ConvergenceTable> {
    if deltas.is_empty() || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("deltas must be a nonempty strictly decreasing list");
    }
    let reference = integrate_continuous(
        model,
        x0,
        xhat0,
        &IntegratorConfig::rk4(reference_step, horizon),
    )?;
    let results: Vec<std::result::Result<f64, String>> = deltas
        .par_iter()
        .map(|&d| {
            let partition = Partition::generate(1.0, d, horizon, 0).map_err(|e| e.to_string())?;
            let run = simulate_sampled(model, x0, xhat0, &partition, sampled)
                .map_err(|e| e.to_string())?;
            emulation_error(&run, &reference, model.n).map_err(|e| e.to_string())
        })
        .collect();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(deltas.len());
    for (i, (&delta, res)) in deltas.iter().zip(results).enumerate() {
        let (error, failure) = match res {
            Ok(e) => (Some(e), None),
            Err(m) => (None, Some(m)),
        };
        let order = (i > 0)
            .then(|| &rows[i - 1])
            .filter(|prev: &&ConvergenceRow| (prev.delta / delta - 2.0).abs() < 1e-9)
            .and_then(|prev| match (prev.error, error) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
                _ => None,
            });
        rows.push(ConvergenceRow {
            delta,
            error,
            order,
            failure,
        });
    }
    Ok(ConvergenceTable { rows })
}
