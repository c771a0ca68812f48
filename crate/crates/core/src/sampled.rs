//! The sampled-data closed loop: aperiodic sampling partitions, zero-order
//! hold on the plant input, one explicit Euler step of the observer per
//! sampling interval, and the piecewise-linear reconstruction of the observer
//! history from its samples.

use std::f64::consts::SQRT_2;
use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{DenseHistory, Scheme};
use crate::error::{domain, Error, Result};
use crate::history::io::{fmt_f64, save_trajectory, write_table};
use crate::history::{norm, History, Segment, Trajectory};
use crate::models::ModelPair;

/// Relative slack for gap bounds, which only hold up to rounding once the
/// gaps are accumulated into absolute times.
const GAP_SLACK: f64 = 1e-9;

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sampling instants `0 = t_0 < t_1 < ...` whose gaps lie in `[a * delta, delta]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    a: f64,
    delta: f64,
    times: Vec<f64>,
}

fn check_params(a: f64, delta: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return domain(format!("a = {a} must lie in (0, 1]"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return domain(format!("delta = {delta} must be positive"));
    }
    Ok(())
}

impl Partition {
    pub fn new(a: f64, delta: f64, times: Vec<f64>) -> Result<Self> {
        check_params(a, delta)?;
        if times.first() != Some(&0.0) {
            return domain("partitions start at t = 0");
        }
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            if !(gap >= a * delta * (1.0 - GAP_SLACK) && gap <= delta * (1.0 + GAP_SLACK)) {
                return domain(format!(
                    "gap {gap} between {} and {} outside [{}, {delta}]",
                    w[0],
                    w[1],
                    a * delta
                ));
            }
        }
        Ok(Self { a, delta, times })
    }

    /// Draws gaps independently and uniformly from `[a * delta, delta]` until
    /// the horizon is covered. With `a = 1` the partition is periodic.
    pub fn generate(a: f64, delta: f64, horizon: f64, seed: u64) -> Result<Self> {
        check_params(a, delta)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon = {horizon} must be positive"));
        }
        let mut times = vec![0.0];
        if a == 1.0 {
            let count = ((horizon / delta) - 1e-9).ceil().max(1.0) as usize;
            times.extend((1..=count).map(|j| j as f64 * delta));
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            while t < horizon {
                t += rng.gen_range(a * delta..=delta);
                times.push(t);
            }
        }
        Ok(Self { a, delta, times })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn delta(&self) -> f64 {
        self.delta
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

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of an exact partition instant.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t);
        (i < self.times.len() && self.times[i] == t).then_some(i)
    }

    /// The `j` with `t_j <= t < t_{j+1}`, clamped to the last instant.
    pub fn interval_of(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }
}

/// Settings of [`simulate_sampled`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledConfig {
    /// Runge-Kutta steps of the plant per sampling interval.
    pub substeps: usize,
    /// When set, both initial segments must have slope bound at most
    /// `q_tilde / sqrt(2)`.
    pub q_tilde: Option<f64>,
}

impl Default for SampledConfig {
    fn default() -> Self {
        Self {
            substeps: 16,
            q_tilde: Some(1.0),
        }
    }
}

/// Result of a sampled-data simulation.
#[derive(Clone, Debug)]
pub struct SampledRun {
    /// Continuous plant state over the whole partition.
    pub plant: Trajectory,
    /// `xhat(t_j)` for every partition instant, knot-major.
    samples: Vec<f64>,
    /// Held input `u_j` for every interval.
    pub controls: Vec<Vec<f64>>,
    pub initial_observer: Segment,
    pub partition: Partition,
}

impl SampledRun {
    pub fn observer_sample(&self, j: usize) -> &[f64] {
        let n = self.initial_observer.dim();
        &self.samples[j * n..(j + 1) * n]
    }

    /// `(t_j, xhat(t_j))` pairs.
    pub fn observer_samples(&self) -> impl Iterator<Item = (f64, &[f64])> {
        let n = self.initial_observer.dim();
        self.partition
            .times()
            .iter()
            .copied()
            .zip(self.samples.chunks_exact(n))
    }

    /// Observer history `xhat_{t_j}` at the partition instant `t_j`.
    pub fn reconstruct_observer_history(&self, t_j: f64) -> Result<Segment> {
        let j = self
            .partition
            .index_of(t_j)
            .ok_or_else(|| Error::Domain(format!("{t_j} is not a partition instant")))?;
        Ok(self.reconstruct_at(j))
    }

    /// Observer history at the `j`-th partition instant.
    pub fn reconstruct_at(&self, j: usize) -> Segment {
        reconstruct(
            &self.initial_observer,
            self.partition.times(),
            &self.samples,
            j,
        )
    }

    /// Writes `plant.csv`/`plant.json`, `observer.csv` and `partition.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_trajectory(dir, "plant", &self.plant)?;
        let n = self.initial_observer.dim();
        let header: Vec<String> = std::iter::once("t_j".to_string())
            .chain((1..=n).map(|i| format!("xhat{i}")))
            .collect();
        write_table(
            File::create(dir.join("observer.csv"))?,
            &header,
            self.observer_samples()
                .map(|(t, v)| std::iter::once(t).chain(v.iter().copied()).collect()),
        )?;
        let mut w = csv::Writer::from_path(dir.join("partition.csv"))?;
        w.write_record(["j", "t_j"])?;
        for (j, &t) in self.partition.times().iter().enumerate() {
            w.write_record([j.to_string(), fmt_f64(t)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds `xhat_{t_j}`: the initial observer segment where `t_j + theta <= 0`,
/// linear interpolation between consecutive samples elsewhere.
///
/// Only samples up to index `j` are read.
/// Observer history at the `j`-th instant of `partition`, rebuilt from the
/// samples `xhat(t_0), ..., xhat(t_j)` (later samples are ignored) and the
/// initial data.
pub fn reconstruct_from_samples(
    initial: &Segment,
    partition: &Partition,
    samples: &[Vec<f64>],
    j: usize,
) -> Result<Segment> {
    if j >= samples.len() || j >= partition.len() {
        return domain(format!("instant {j} has no stored sample"));
    }
    let n = initial.dim();
    if samples[..=j].iter().any(|s| s.len() != n) {
        return domain(format!("samples must have dimension {n}"));
    }
    if samples[0].as_slice() != initial.value(initial.len() - 1) {
        return domain("the first sample must equal the initial value at 0");
    }
    let flat: Vec<f64> = samples[..=j].concat();
    Ok(reconstruct(initial, &partition.times()[..=j], &flat, j))
}

pub(crate) fn reconstruct(initial: &Segment, times: &[f64], samples: &[f64], j: usize) -> Segment {
    let n = initial.dim();
    let delay = initial.delay();
    let t_j = times[j];
    let sample = |l: usize| &samples[l * n..(l + 1) * n];

    let mut knots = Vec::new();
    let mut values = Vec::new();

    // left end
    let left = t_j - delay;
    knots.push(-delay);
    if left <= 0.0 {
        values.extend(initial.at(left));
    } else {
        let k = times[..=j].partition_point(|&s| s <= left) - 1;
        if times[k] == left {
            values.extend_from_slice(sample(k));
        } else {
            let w = (left - times[k]) / (times[k + 1] - times[k]);
            values.extend(
                sample(k)
                    .iter()
                    .zip(sample(k + 1))
                    .map(|(a, b)| a + w * (b - a)),
            );
        }
    }

    let mut push = |theta: f64, v: &[f64]| {
        if theta > -delay && theta < 0.0 && theta > *knots.last().unwrap() {
            knots.push(theta);
            values.extend_from_slice(v);
        }
    };
    if left < 0.0 {
        for (i, &k) in initial.knots().iter().enumerate() {
            push(k - t_j, initial.value(i));
        }
    }
    let first = times[..=j].partition_point(|&s| s <= left.max(0.0));
    for (l, &t) in times.iter().enumerate().take(j).skip(first.max(1)) {
        push(t - t_j, sample(l));
    }
    knots.push(0.0);
    values.extend_from_slice(sample(j));

    Segment::from_flat(delay, n, knots, values).expect("reconstructed history is a valid segment")
}

fn check_slope(name: &str, seg: &Segment, q_tilde: f64) -> Result<()> {
    let bound = q_tilde / SQRT_2;
    let slope = seg.slope_bound();
    if slope > bound * (1.0 + 1e-12) {
        return domain(format!(
            "{name} has slope bound {slope}, above q_tilde/sqrt(2) = {bound}"
        ));
    }
    Ok(())
}

/// Simulates the sampled-data closed loop over every interval of the partition.
///
/// On `[t_j, t_{j+1})` the input `u_j = k(xhat_{t_j}, h(x_{t_j}))` is held,
/// the plant `x' = f(x_t, u_j)` is integrated with `substeps` RK4 steps, and
/// the observer is advanced by
/// `xhat(t_{j+1}) = xhat(t_j) + (t_{j+1} - t_j) f_hat(xhat_{t_j}, u_j, h(x_{t_j}))`.
pub fn simulate_sampled(
    model: &ModelPair,
    x0: &Segment,
    xhat0: &Segment,
    partition: &Partition,
    cfg: &SampledConfig,
) -> Result<SampledRun> {
    for (name, seg) in [("x0", x0), ("xhat0", xhat0)] {
        if seg.dim() != model.n || seg.delay() != model.delay {
            return domain(format!(
                "{name} must have dimension {} and delay {}",
                model.n, model.delay
            ));
        }
        if let Some(q) = cfg.q_tilde {
            check_slope(name, seg, q)?;
        }
    }
    if cfg.substeps == 0 {
        return domain("substeps must be positive");
    }
    if partition.delta() / cfg.substeps as f64 > model.delay / 2.0 {
        return domain("plant substep exceeds half the delay");
    }

    let n = model.n;
    let times = partition.times();
    let mut plant = DenseHistory::new(x0.clone());
    let mut samples = xhat0.value(xhat0.len() - 1).to_vec();
    let mut controls = Vec::with_capacity(times.len().saturating_sub(1));

    for j in 0..times.len() - 1 {
        let (t_j, t_next) = (times[j], times[j + 1]);
        let gap = t_next - t_j;

        let y = model.output(&plant.front_view())?;
        let xhat_seg = reconstruct(xhat0, times, &samples, j);
        let u = model.control(&xhat_seg, &y)?;
        let drift = model.observer_rhs(&xhat_seg, &u, &y)?;

        let h = gap / cfg.substeps as f64;
        for i in 1..=cfg.substeps {
            let t = if i == cfg.substeps {
                t_next
            } else {
                t_j + i as f64 * h
            };
            let step = t - plant.front_time();
            plant.step(step, t, Scheme::Rk4, Some(j), |v| model.plant_rhs(v, &u))?;
        }
        plant.mark_break();

        let next: Vec<f64> = samples[j * n..]
            .iter()
            .zip(&drift)
            .map(|(x, d)| x + gap * d)
            .collect();
        if next
            .iter()
            .any(|x| !x.is_finite() || x.abs() > crate::engine::DIVERGENCE_THRESHOLD)
        {
            return Err(Error::Divergence {
                time: t_next,
                interval: Some(j),
            });
        }
        samples.extend(next);
        controls.push(u);
    }

    Ok(SampledRun {
        plant: plant.into_trajectory()?,
        samples,
        controls,
        initial_observer: xhat0.clone(),
        partition: partition.clone(),
    })
}

fn draw_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim)
        .map(|_| rng.gen_range(-1.0..=1.0) * radius)
        .collect();
    project(v, radius)
}

/// Radial projection onto the closed ball; non-expansive.
fn project(v: Vec<f64>, radius: f64) -> Vec<f64> {
    let r = norm(&v);
    if r <= radius {
        v
    } else if radius == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.into_iter().map(|x| x * (radius / r)).collect()
    }
}

/// Number of uniform knots of a sampled initial segment.
pub const INITIAL_KNOTS: usize = 8;

/// Draws a piecewise-linear initial segment with sup norm at most `radius`
/// and slope bound at most `q_tilde / sqrt(2)`.
///
/// The value at `0` is drawn in the ball; moving backwards, each knot adds a
/// random slope from the admissible ball and is projected back into the
/// `radius`-ball. The projection is non-expansive, so slopes stay admissible.
pub fn sample_initial_state(
    radius: f64,
    q_tilde: f64,
    delay: f64,
    dim: usize,
    seed: u64,
) -> Result<Segment> {
    if !(radius >= 0.0 && q_tilde > 0.0) {
        return domain("radius must be non-negative and q_tilde positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_eff = radius * (1.0 - 1e-9);
    let s_eff = q_tilde / SQRT_2 * (1.0 - 1e-9);
    let last = INITIAL_KNOTS - 1;
    let mut knots: Vec<f64> = (0..last)
        .map(|i| -delay + delay * i as f64 / last as f64)
        .collect();
    knots.push(0.0);

    let mut rev = vec![draw_in_ball(&mut rng, dim, r_eff)];
    for i in (0..last).rev() {
        let gap = knots[i + 1] - knots[i];
        let w = draw_in_ball(&mut rng, dim, s_eff);
        let prev = rev.last().unwrap();
        let v = prev.iter().zip(&w).map(|(p, w)| p + gap * w).collect();
        rev.push(project(v, r_eff));
    }
    rev.reverse();
    let seg = Segment::new(delay, knots, rev)?;

    // rounding guard; a no-op in practice
    let excess = (seg.sup_norm() / radius.max(f64::MIN_POSITIVE))
        .max(seg.slope_bound() / (q_tilde / SQRT_2));
    if excess > 1.0 - 1e-12 && seg.sup_norm() > 0.0 {
        return Ok(seg.scaled((1.0 - 1e-9) / excess));
    }
    Ok(seg)
}

/// Independent plant and observer initial segments, each with sup norm at
/// most `radius / sqrt(2)` and slope bound at most `q_tilde / sqrt(2)`, so that
/// the stacked pair has sup norm at most `radius` and slope bound at most
/// `q_tilde`.
pub fn sample_initial_pair(
    radius: f64,
    q_tilde: f64,
    delay: f64,
    dim: usize,
    seed: u64,
) -> Result<(Segment, Segment)> {
    let x0 = sample_initial_state(radius / SQRT_2, q_tilde, delay, dim, derive_seed(seed, 1))?;
    let xhat0 = sample_initial_state(radius / SQRT_2, q_tilde, delay, dim, derive_seed(seed, 2))?;
    Ok((x0, xhat0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{zero_model, LinearScalar};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn periodic_partition() {
        let p = Partition::generate(1.0, 0.1, 0.35, 0).unwrap();
        let want = [0.0, 0.1, 0.2, 0.3, 0.4];
        assert_eq!(p.len(), want.len());
        for (a, b) in p.times().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn random_partition_gap_bounds() {
        for seed in 0..10 {
            let p = Partition::generate(0.3, 0.05, 50.0, seed).unwrap();
            assert!(p.len() > 1000);
            assert!(p.end() >= 50.0);
            for w in p.times().windows(2) {
                let gap = w[1] - w[0];
                assert!((0.3 * 0.05 * (1.0 - 1e-12)..=0.05 * (1.0 + 1e-12)).contains(&gap));
            }
            Partition::new(p.a(), p.delta(), p.times().to_vec()).unwrap();
        }
    }

    #[test]
    fn partition_determinism() {
        let a = Partition::generate(0.5, 0.1, 10.0, 42).unwrap();
        let b = Partition::generate(0.5, 0.1, 10.0, 42).unwrap();
        let c = Partition::generate(0.5, 0.1, 10.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn partition_rejects_bad_parameters() {
        assert!(Partition::generate(0.0, 0.1, 1.0, 0).is_err());
        assert!(Partition::generate(1.5, 0.1, 1.0, 0).is_err());
        assert!(Partition::generate(0.5, -0.1, 1.0, 0).is_err());
        assert!(Partition::new(0.5, 0.1, vec![0.0, 0.2]).is_err());
        assert!(Partition::new(0.5, 0.1, vec![0.0, 0.01]).is_err());
    }

    fn toy_run() -> SampledRun {
        // xhat0 has xhat0(0) = 1; samples 1, 2 at t = 0, 0.1
        let xhat0 =
            Segment::from_flat(1.0, 1, vec![-1.0, -0.5, 0.0], vec![5.0, -3.0, 1.0]).unwrap();
        let partition = Partition::new(1.0, 0.1, vec![0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        SampledRun {
            plant: Trajectory::new(Segment::zero(1.0, 1).unwrap(), vec![0.0], vec![vec![0.0]])
                .unwrap(),
            samples: vec![1.0, 2.0, 0.5, 4.0, -1.0],
            controls: vec![],
            initial_observer: xhat0,
            partition,
        }
    }

    #[test]
    fn reconstruction_examples() {
        let run = toy_run();
        assert_eq!(
            run.reconstruct_observer_history(0.0).unwrap(),
            run.initial_observer
        );
        let seg = run.reconstruct_observer_history(0.1).unwrap();
        assert!((seg.eval(-0.05).unwrap()[0] - 1.5).abs() < 1e-15);
        let t4 = run.partition.times()[4];
        let seg = run.reconstruct_observer_history(t4).unwrap();
        let want = run.initial_observer.eval(t4 - 0.7).unwrap();
        assert!((seg.eval(-0.7).unwrap()[0] - want[0]).abs() < 1e-14);
        assert_eq!(seg.eval(0.0).unwrap(), vec![-1.0]);
        assert!(matches!(
            run.reconstruct_observer_history(0.15),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reconstruction_splice_is_continuous() {
        let run = toy_run();
        for j in 1..run.partition.len() {
            let t = run.partition.times()[j];
            let seg = run.reconstruct_at(j);
            assert_eq!(seg.eval(-t).unwrap(), run.observer_sample(0).to_vec());
        }
    }

    #[test]
    fn zero_model_zero_run() {
        let m = zero_model(1.0);
        let z = Segment::zero(1.0, 1).unwrap();
        let p = Partition::generate(0.5, 0.1, 3.0, 1).unwrap();
        let run = simulate_sampled(&m, &z, &z, &p, &SampledConfig::default()).unwrap();
        assert!(run.plant.states().all(|s| s == [0.0]));
        assert!(run.observer_samples().all(|(_, v)| v == [0.0]));
    }

    #[test]
    fn single_interval_is_one_euler_step() {
        let c = 0.7;
        let mut m = zero_model(1.0);
        m.f_hat = Arc::new(move |_, _, _| vec![c]);
        let x0 = Segment::zero(1.0, 1).unwrap();
        let xh0 = Segment::constant(1.0, &[0.25]).unwrap();
        let p = Partition::new(1.0, 0.2, vec![0.0, 0.2]).unwrap();
        let run = simulate_sampled(&m, &x0, &xh0, &p, &SampledConfig::default()).unwrap();
        assert_eq!(run.observer_sample(1), &[0.25 + 0.2 * c]);
    }

    #[test]
    fn control_is_held_over_each_interval() {
        let calls = Arc::new(AtomicUsize::new(0));
        let mut m = LinearScalar::default().model();
        let inner = m.k.clone();
        let counter = calls.clone();
        m.k = Arc::new(move |xh, y| {
            counter.fetch_add(1, Ordering::Relaxed);
            inner(xh, y)
        });
        let x0 = Segment::constant(1.0, &[0.5]).unwrap();
        let xh0 = Segment::zero(1.0, 1).unwrap();
        let p = Partition::generate(0.5, 0.1, 4.0, 9).unwrap();
        let run = simulate_sampled(&m, &x0, &xh0, &p, &SampledConfig::default()).unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), p.len() - 1);
        assert_eq!(run.controls.len(), p.len() - 1);
        // plant times include every partition instant
        for &t in p.times() {
            assert!(run.plant.times().contains(&t));
        }
    }

    #[test]
    fn linear_benchmark_sampled_run_decays() {
        let m = LinearScalar::default().model();
        let x0 = Segment::constant(1.0, &[1.0]).unwrap();
        let xh0 = Segment::zero(1.0, 1).unwrap();
        let p = Partition::generate(1.0, 0.05, 30.0, 0).unwrap();
        let run = simulate_sampled(&m, &x0, &xh0, &p, &SampledConfig::default()).unwrap();
        assert!(run.plant.window(30.0).unwrap().sup_norm() <= 1e-2);
    }

    #[test]
    fn sampled_plant_error_scales_linearly() {
        use crate::engine::{integrate_continuous, IntegratorConfig};
        let m = LinearScalar::default().model();
        let x0 = Segment::constant(1.0, &[0.5]).unwrap();
        let xh0 = Segment::zero(1.0, 1).unwrap();
        let reference =
            integrate_continuous(&m, &x0, &xh0, &IntegratorConfig::rk4(1e-4, 5.0)).unwrap();
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&d| {
                let p = Partition::generate(1.0, d, 5.0, 0).unwrap();
                let run = simulate_sampled(&m, &x0, &xh0, &p, &SampledConfig::default()).unwrap();
                run.plant
                    .times()
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t <= 5.0)
                    .map(|(i, &t)| (run.plant.state(i)[0] - reference.lookup(t).unwrap()[0]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "{errors:?}");
        }
    }

    #[test]
    fn public_reconstruction_validates_input() {
        let run = toy_run();
        let samples: Vec<Vec<f64>> = run.observer_samples().map(|(_, x)| x.to_vec()).collect();
        let seg =
            reconstruct_from_samples(&run.initial_observer, &run.partition, &samples, 3).unwrap();
        assert_eq!(seg, run.reconstruct_at(3));
        assert!(
            reconstruct_from_samples(&run.initial_observer, &run.partition, &samples[..2], 3)
                .is_err()
        );
        let mut bad = samples.clone();
        bad[0][0] += 1.0;
        assert!(reconstruct_from_samples(&run.initial_observer, &run.partition, &bad, 3).is_err());
    }

    #[test]
    fn slope_enforcement() {
        let m = LinearScalar::default().model();
        let steep = Segment::from_flat(1.0, 1, vec![-1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let z = Segment::zero(1.0, 1).unwrap();
        let p = Partition::generate(1.0, 0.1, 1.0, 0).unwrap();
        let cfg = SampledConfig::default();
        assert!(simulate_sampled(&m, &steep, &z, &p, &cfg).is_err());
        let relaxed = SampledConfig {
            q_tilde: None,
            ..cfg
        };
        assert!(simulate_sampled(&m, &steep, &z, &p, &relaxed).is_ok());
    }

    #[test]
    fn divergence_carries_interval() {
        let mut m = LinearScalar::default().model();
        m.f = Arc::new(|x, _| vec![4.0 * x.at(0.0)[0]]);
        let x0 = Segment::constant(1.0, &[1.0]).unwrap();
        let z = Segment::zero(1.0, 1).unwrap();
        let p = Partition::generate(1.0, 0.1, 50.0, 0).unwrap();
        match simulate_sampled(&m, &x0, &z, &p, &SampledConfig::default()) {
            Err(Error::Divergence {
                interval: Some(j),
                time,
            }) => {
                assert!(time > p.times()[j] && time <= p.times()[j + 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn initial_states_respect_bounds() {
        for seed in 0..500 {
            let s = sample_initial_state(2.0, 1.0, 1.0, 2, seed).unwrap();
            assert_eq!(s.len(), INITIAL_KNOTS);
            assert!(s.sup_norm() <= 2.0);
            assert!(s.slope_bound() <= 1.0 / SQRT_2);
        }
        let a = sample_initial_state(1.0, 1.0, 1.0, 1, 7).unwrap();
        assert_eq!(a, sample_initial_state(1.0, 1.0, 1.0, 1, 7).unwrap());
        let tiny = sample_initial_state(0.0, 1.0, 1.0, 3, 1).unwrap();
        assert_eq!(tiny.sup_norm(), 0.0);
    }

    #[test]
    fn initial_states_reach_the_ball_boundary() {
        let best = (0..200)
            .map(|s| {
                sample_initial_state(1.0, 1.0, 1.0, 1, s)
                    .unwrap()
                    .sup_norm()
            })
            .fold(0.0, f64::max);
        assert!(best > 0.9);
    }
}
