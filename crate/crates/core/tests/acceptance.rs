//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts; tolerances and runtime budgets are pinned below.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delay_emulation::certify::{
    certify_practical_stability, convergence_study, CertifySettings, DeltaPlan,
};
use delay_emulation::engine::{
    integrate_continuous, integrate_extended, FeedbackPath, IntegratorConfig,
};
use delay_emulation::history::{norm, Segment};
use delay_emulation::lkf::{
    check_assumption1, check_smooth_separability, check_steepest_descent, driver_derivative,
    linear_scalar_suite, random_segments, weighted_square_integral, ComparisonFn, DescentMode,
    Tolerance, DEFAULT_STEPS,
};
use delay_emulation::models::{LinearScalar, NonlinearSine};
use delay_emulation::sampled::{
    reconstruct_from_samples, sample_initial_pair, Partition, SampledConfig,
};
use delay_emulation::scenario::{run_scenario, ScenarioConfig, Verdict};

const IDENTITY_TOL: f64 = 1e-12;
const PATH_TOL: f64 = 1e-12;
const DRIVER_REL: f64 = 1e-3;
const DRIVER_ABS: f64 = 1e-6;
const MIDPOINT_TOL: f64 = 1e-12;
const ORDER_RANGE: (f64, f64) = (0.7, 1.3);
const DELTA_STAR_MIN: f64 = 0.01;

fn verdict(id: u32, name: &str, passed: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let ok = passed && elapsed <= budget;
    println!(
        "criterion {id} [{}] {name}: {detail} ({:.2?} of {:.0?})",
        if ok { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    assert!(passed, "criterion {id} failed: {detail}");
    assert!(
        elapsed <= budget,
        "criterion {id} exceeded its runtime budget: {elapsed:.2?}"
    );
}

#[test]
fn criterion_1_composite_identity() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for model in [
        LinearScalar::default().model(),
        NonlinearSine::default().model(),
    ] {
        for phi in random_segments(1000, 2 * model.n, model.delay, 10.0, 1) {
            let a = model.stacked_rhs(&phi).unwrap();
            let u = model.composite_feedback(&phi).unwrap();
            let b = model.extended_rhs(&phi, &u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    verdict(
        1,
        "F equals the extended map composed with the composite feedback",
        worst <= IDENTITY_TOL,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("max difference {worst:e} over 2 x 1000 segments"),
    );
}

#[test]
fn criterion_2_integrator_path_equality() {
    let start = Instant::now();
    let model = LinearScalar::default().model();
    let x0 = Segment::new(
        1.0,
        vec![-1.0, -0.5, 0.0],
        vec![vec![0.2], vec![-0.4], vec![0.7]],
    )
    .unwrap();
    let xh0 = Segment::constant(1.0, &[-0.3]).unwrap();
    let cfg = IntegratorConfig::rk4(0.01, 10.0);
    let a = integrate_continuous(&model, &x0, &xh0, &cfg).unwrap();
    let b = integrate_extended(&model, &x0, &xh0, FeedbackPath::Composite, &cfg).unwrap();
    assert_eq!(a.len(), b.len());
    let worst = (0..a.len())
        .flat_map(|i| {
            a.state(i)
                .iter()
                .zip(b.state(i))
                .map(|(x, y)| (x - y).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    verdict(
        2,
        "stacked and composite integration paths agree",
        worst <= PATH_TOL,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("max state difference {worst:e} over {} steps", a.len() - 1),
    );
}

#[test]
fn criterion_3_driver_derivative() {
    let start = Instant::now();
    let close =
        |est: f64, exact: f64| (est - exact).abs() <= DRIVER_ABS.max(DRIVER_REL * exact.abs());
    let front_sq = |p: &Segment| norm(p.value(p.len() - 1)).powi(2);

    let phi = Segment::constant(1.0, &[1.0]).unwrap();
    let quad = driver_derivative(front_sq, &phi, &[-1.0], &DEFAULT_STEPS).unwrap();
    let integral = driver_derivative(
        |p| weighted_square_integral(p, 1.0),
        &phi,
        &[0.0],
        &DEFAULT_STEPS,
    )
    .unwrap();
    let integral_exact = 1.0 - (-1.0f64).exp() - weighted_square_integral(&phi, 1.0);
    let phi2 = Segment::new(
        1.0,
        vec![-1.0, -0.2, 0.0],
        vec![vec![1.0, -2.0], vec![0.5, 0.5], vec![0.3, -0.7]],
    )
    .unwrap();
    let stationary = driver_derivative(front_sq, &phi2, &[0.0, 0.0], &DEFAULT_STEPS).unwrap();

    let results = [
        ("quadratic", quad.value, -2.0, close(quad.value, -2.0)),
        (
            "integral",
            integral.value,
            integral_exact,
            close(integral.value, integral_exact),
        ),
        (
            "stationary",
            stationary.value,
            0.0,
            stationary.value.abs() <= 1e-8,
        ),
    ];
    let detail = results
        .iter()
        .map(|(n, e, x, _)| format!("{n} {e:.3e} vs {x:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        3,
        "Driver-form derivative on analytic cases",
        results.iter().all(|r| r.3),
        start.elapsed(),
        Duration::from_secs(1),
        &detail,
    );
}

#[test]
fn criterion_4_observer_reconstruction() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut checks = 0usize;
    for _ in 0..10_000 {
        let delay = rng.gen_range(0.5..2.0);
        let n = rng.gen_range(1..=3);
        let a = rng.gen_range(0.1..=1.0);
        let delta = rng.gen_range(0.05..0.6);
        let horizon = rng.gen_range(0.1..3.0 * delay);
        let partition = Partition::generate(a, delta, horizon, rng.gen()).unwrap();
        let mut knots: Vec<f64> = (0..rng.gen_range(0..6))
            .map(|_| -delay * rng.gen_range(0.01..0.99))
            .collect();
        knots.extend([-delay, 0.0]);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let values = knots
            .iter()
            .map(|_| (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let initial = Segment::new(delay, knots, values).unwrap();
        let mut samples = vec![initial.value(initial.len() - 1).to_vec()];
        samples.extend((1..partition.len()).map(|_| {
            (0..n)
                .map(|_| rng.gen_range(-5.0..5.0))
                .collect::<Vec<f64>>()
        }));
        let j = rng.gen_range(0..partition.len());
        let seg = reconstruct_from_samples(&initial, &partition, &samples, j).unwrap();
        let times = partition.times();
        let tj = times[j];

        let mut check = |ok: bool| {
            checks += 1;
            if !ok {
                violations += 1;
            }
        };
        // node exactness at every instant inside the window
        for l in 0..=j {
            if tj - times[l] <= delay {
                check(seg.eval(times[l] - tj).unwrap() == samples[l]);
            }
        }
        // initial-data branch: exact at shifted knots, to rounding between them
        if tj < delay {
            for (i, &k) in initial.knots().iter().enumerate() {
                if k - tj >= -delay && k - tj < 0.0 {
                    let got = seg.eval(k - tj).unwrap();
                    check(
                        got == initial.value(i)
                            || (k - tj == -delay && got == initial.eval(-delay + tj).unwrap()),
                    );
                }
            }
            for _ in 0..3 {
                let theta = rng.gen_range(-delay..=-tj);
                let got = seg.eval(theta).unwrap();
                let want = initial.eval((tj + theta).max(-delay)).unwrap();
                check(
                    got.iter()
                        .zip(&want)
                        .all(|(x, y)| (x - y).abs() <= MIDPOINT_TOL * (1.0 + y.abs())),
                );
            }
        }
        // midpoint linearity between consecutive instants inside the window
        for l in 0..j {
            if tj - times[l] <= delay {
                let mid = 0.5 * (times[l] + times[l + 1]) - tj;
                let got = seg.eval(mid).unwrap();
                check(got.iter().enumerate().all(|(c, x)| {
                    let want = 0.5 * (samples[l][c] + samples[l + 1][c]);
                    (x - want).abs() <= MIDPOINT_TOL * (1.0 + want.abs())
                }));
            }
        }
    }
    verdict(
        4,
        "observer-history reconstruction",
        violations == 0,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("{violations} violations in {checks} checks over 10000 cases"),
    );
}

#[test]
fn criterion_5_emulation_order() {
    let start = Instant::now();
    let model = LinearScalar::default().model();
    let (x0, xh0) = sample_initial_pair(1.0, 1.0, model.delay, model.n, 5).unwrap();
    let table = convergence_study(
        &model,
        &x0,
        &xh0,
        &[0.1, 0.05, 0.025, 0.0125],
        10.0,
        1e-4,
        &SampledConfig::default(),
    )
    .unwrap();
    let orders = table.orders();
    let passed = orders.len() == 3
        && orders
            .iter()
            .all(|o| (ORDER_RANGE.0..=ORDER_RANGE.1).contains(o));
    verdict(
        5,
        "first-order Euler emulation",
        passed,
        start.elapsed(),
        Duration::from_secs(30),
        &format!("orders {orders:.3?}"),
    );
}

fn practical_settings(plan: DeltaPlan) -> CertifySettings {
    CertifySettings {
        big_r: 1.0,
        r: 0.1,
        a: 0.5,
        q_tilde: 1.0,
        horizon: 40.0,
        trials: 50,
        seed: 2024,
        sampled: SampledConfig::default(),
        plan,
    }
}

#[test]
fn criterion_6_practical_stability() {
    let start = Instant::now();
    let stable = certify_practical_stability(
        &LinearScalar::default().model(),
        &practical_settings(DeltaPlan::Search {
            delta_max: 0.5,
            delta_min: 0.01,
            bisection_steps: 5,
        }),
    )
    .unwrap();
    let flipped = LinearScalar {
        feedback_gain: -1.5,
        ..LinearScalar::default()
    }
    .model();
    let unstable = certify_practical_stability(
        &flipped,
        &practical_settings(DeltaPlan::Grid(vec![0.5, 0.2, 0.1, 0.05, 0.02, 0.01])),
    )
    .unwrap();
    let stable_ok = stable.passed
        && stable.failures.is_empty()
        && stable.delta_star.is_some_and(|d| d >= DELTA_STAR_MIN)
        // some trials start outside the small ball, so the bound reaches it
        && stable.e_hat >= 0.1;
    let unstable_ok = !unstable.passed && unstable.evaluations.iter().all(|e| !e.passed);
    verdict(
        6,
        "practical-stability certification",
        stable_ok && unstable_ok,
        start.elapsed(),
        Duration::from_secs(120),
        &format!(
            "delta* = {:?}, E = {:.3}, T = {:?}; sign-flipped gain fails at {} of {} bounds",
            stable.delta_star,
            stable.e_hat,
            stable.t_hat,
            unstable.evaluations.iter().filter(|e| !e.passed).count(),
            unstable.evaluations.len()
        ),
    );
}

#[test]
fn criterion_7_lkf_checkers() {
    let start = Instant::now();
    let model = LinearScalar::default().model();
    let suite = linear_scalar_suite();
    let samples = random_segments(1000, 2, model.delay, 2.0, 7);
    let tol = Tolerance::default();

    let sep = check_smooth_separability(&suite, &samples, tol);
    let a1 = check_assumption1(&suite, &model, &samples, tol).unwrap();
    let sd = check_steepest_descent(&suite, &model, &samples, DescentMode::ProofForm, tol).unwrap();
    let shipped_ok = sep.passed && a1.passed && sd.passed;

    let mut shrunk = suite.clone();
    shrunk.gamma2 = suite.gamma2.scaled(0.5);
    let mut inflated = suite.clone();
    inflated.beta1 = ComparisonFn::quadratic(3.0 * 0.38);
    let mut negated = suite.clone();
    negated.alpha3 = suite.alpha3.scaled(-1.0);
    let broken = [
        check_assumption1(&shrunk, &model, &samples, tol)
            .unwrap()
            .sandwich
            .violations
            .len(),
        check_smooth_separability(&inflated, &samples, tol)
            .violations
            .len(),
        {
            let r = check_assumption1(&negated, &model, &samples, tol).unwrap();
            r.classes.violations.len() + r.decay.violations.len()
        },
    ];
    // flagged samples are excluded from the verdict; they must not hide violations
    let flagged: Vec<_> = [&a1.decay, &a1.razumikhin, &sd]
        .iter()
        .flat_map(|r| r.flagged.iter())
        .collect();
    let flagged_ok = flagged.iter().all(|v| v.margin <= 0.0);
    verdict(
        7,
        "functional checker soundness",
        shipped_ok && flagged_ok && broken.iter().all(|&v| v >= 1),
        start.elapsed(),
        Duration::from_secs(60),
        &format!(
            "shipped suite passes = {shipped_ok} ({} flagged, all satisfied = {flagged_ok}); broken-suite violations {broken:?}",
            flagged.len()
        ),
    );
}

#[test]
fn criterion_8_initial_data_contract() {
    let start = Instant::now();
    let mut bad = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..10_000u64 {
        let radius = rng.gen_range(0.1..5.0);
        let q = rng.gen_range(0.1..3.0);
        let n = 1 + (i % 3) as usize;
        let (x0, xh0) = sample_initial_pair(radius, q, 1.0, n, i).unwrap();
        let stacked = x0.stack(&xh0).unwrap();
        if !(stacked.slope_bound() <= q && stacked.sup_norm() <= radius) {
            bad += 1;
        }
    }
    verdict(
        8,
        "sampled initial data respect the slope and radius bounds",
        bad == 0,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("{bad} of 10000 stacked initial states out of bounds"),
    );
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let cfg = ScenarioConfig::from_json(
        r#"{
            "model": {"name": "linear-scalar"},
            "R": 1.0, "r": 0.1, "a": 0.5, "q_tilde": 1.0,
            "horizon": 40.0, "trials": 50, "seed": 99,
            "delta_search": {"delta_max": 0.5, "delta_min": 0.01, "bisection_steps": 4},
            "lkf": {"samples": 200, "radius": 2.0}
        }"#,
    )
    .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let verdicts: Vec<Verdict> = dirs
        .iter()
        .map(|d| run_scenario(&cfg, d.path()).unwrap())
        .collect();
    let files = [
        "stability_report.json",
        "lkf_reports.json",
        "trajectory/plant.csv",
        "trajectory/plant.json",
        "trajectory/observer.csv",
        "trajectory/partition.csv",
    ];
    let mismatched: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            let a = std::fs::read(dirs[0].path().join(f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(f)).unwrap();
            a != b
        })
        .collect();
    verdict(
        9,
        "identical configuration and seed give identical reports",
        mismatched.is_empty() && verdicts[0] == verdicts[1],
        start.elapsed(),
        Duration::from_secs(120),
        &format!("{} files compared, mismatches {mismatched:?}", files.len()),
    );
}
