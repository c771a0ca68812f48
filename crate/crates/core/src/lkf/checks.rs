use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::driver::{driver_derivative, DriverEstimate, DEFAULT_STEPS};
use super::{ComparisonFn, FunctionalSuite};
use crate::error::Result;
use crate::history::{norm, Segment};
use crate::models::ModelPair;

/// Acceptance tolerances for sampled inequality checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Absolute slack for derivative-based inequalities.
    pub abs: f64,
    /// Slack relative to the magnitude of the derivative estimate.
    pub rel: f64,
    /// Relative slack for inequalities without finite differences.
    pub exact: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-6,
            rel: 1e-3,
            exact: 1e-9,
        }
    }
}

/// One sample at which an inequality `lhs <= rhs` failed (or could not be
/// decided). `margin = lhs - rhs`, so positive margins are violations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub inequality: String,
    pub samples_tested: usize,
    pub violations: Vec<Violation>,
    /// Samples whose derivative estimates were unreliable; they are excluded
    /// from the verdict but reported.
    pub flagged: Vec<Violation>,
    /// Largest margin over all decided samples (`-inf` when there are none).
    pub worst_margin: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(inequality: &str) -> Self {
        Self {
            inequality: inequality.to_string(),
            samples_tested: 0,
            violations: Vec::new(),
            flagged: Vec::new(),
            worst_margin: f64::NEG_INFINITY,
            passed: true,
        }
    }

    fn structural(&mut self, problems: Vec<String>) {
        for p in problems {
            self.violations.push(Violation {
                sample: 0,
                lhs: f64::NAN,
                rhs: f64::NAN,
                margin: f64::INFINITY,
                note: Some(p),
            });
        }
        if !self.violations.is_empty() {
            self.worst_margin = f64::INFINITY;
            self.passed = false;
        }
    }

    fn record(&mut self, sample: usize, lhs: f64, rhs: f64, tol: f64, flagged: bool) {
        self.samples_tested += 1;
        let margin = lhs - rhs;
        let v = Violation {
            sample,
            lhs,
            rhs,
            margin,
            note: None,
        };
        if flagged {
            self.flagged.push(v);
            return;
        }
        if !(margin <= self.worst_margin) {
            self.worst_margin = if margin.is_nan() {
                f64::INFINITY
            } else {
                margin
            };
        }
        if !(margin <= tol) {
            self.passed = false;
            self.violations.push(v);
        }
    }
}

fn class_problems(list: &[(&str, &ComparisonFn)]) -> Vec<String> {
    list.iter()
        .flat_map(|(name, f)| {
            f.class_problems()
                .into_iter()
                .map(move |p| format!("{name} ({:?}): {p}", f.class))
        })
        .collect()
}

fn front(phi: &Segment) -> &[f64] {
    phi.value(phi.len() - 1)
}

/// `beta1(|x|) <= V1(x) <= beta2(|x|)` at `x = phi(0)` for every sample.
pub fn check_smooth_separability(
    suite: &FunctionalSuite,
    samples: &[Segment],
    tol: Tolerance,
) -> CheckReport {
    let mut report = CheckReport::new("beta1(|phi(0)|) <= V1(phi(0)) <= beta2(|phi(0)|)");
    report.structural(class_problems(&[
        ("beta1", &suite.beta1),
        ("beta2", &suite.beta2),
    ]));
    for (i, phi) in samples.iter().enumerate() {
        let x = front(phi);
        let r = norm(x);
        let v1 = (suite.v1)(x);
        let (lo, hi) = (suite.beta1.eval(r), suite.beta2.eval(r));
        let slack = tol.exact * (1.0 + v1.abs());
        // report whichever side is tighter
        if lo - v1 >= v1 - hi {
            report.record(i, lo, v1, slack, false);
        } else {
            report.record(i, v1, hi, slack, false);
        }
    }
    report
}

/// Sub-reports of the closed-loop Lyapunov-Krasovskii conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub classes: CheckReport,
    pub sandwich: CheckReport,
    pub decay: CheckReport,
    pub razumikhin: CheckReport,
    pub passed: bool,
}

struct ClosedLoopTerms {
    z0: f64,
    sup: f64,
    value: f64,
    p_v1: f64,
    dv: DriverEstimate,
    dp: DriverEstimate,
}

fn derivative_pair(
    suite: &FunctionalSuite,
    phi: &Segment,
    drift: &[f64],
) -> Result<(DriverEstimate, DriverEstimate)> {
    let dv = driver_derivative(|s| suite.value(s), phi, drift, &DEFAULT_STEPS)?;
    let dp = driver_derivative(|s| suite.p_of_v1(s), phi, drift, &DEFAULT_STEPS)?;
    Ok((dv, dp))
}

/// Checks, on every sample, the sandwich `gamma1(|phi(0)|) <= V(phi) <=
/// gamma2(||phi||)`, the decay `D+V(phi) <= -alpha3(|phi(0)|)`, and the
/// Razumikhin-type condition
/// `nu D+V + eta D+(p o V1)(phi) + eta mu p(V1(phi(0))) <= 0`,
/// with derivatives along the closed-loop right-hand side.
pub fn check_assumption1(
    suite: &FunctionalSuite,
    model: &ModelPair,
    samples: &[Segment],
    tol: Tolerance,
) -> Result<Assumption1Report> {
    let mut classes = CheckReport::new("comparison function classes and constants");
    let mut problems = class_problems(&[
        ("gamma1", &suite.gamma1),
        ("gamma2", &suite.gamma2),
        ("alpha3", &suite.alpha3),
        ("p", &suite.p),
    ]);
    problems.extend(suite.constant_problems());
    classes.structural(problems);

    let terms: Vec<ClosedLoopTerms> = samples
        .par_iter()
        .map(|phi| {
            let drift = model.stacked_rhs(phi)?;
            let (dv, dp) = derivative_pair(suite, phi, &drift)?;
            Ok(ClosedLoopTerms {
                z0: norm(front(phi)),
                sup: phi.sup_norm(),
                value: suite.value(phi),
                p_v1: suite.p_of_v1(phi),
                dv,
                dp,
            })
        })
        .collect::<Result<_>>()?;

    let mut sandwich = CheckReport::new("gamma1(|phi(0)|) <= V(phi) <= gamma2(||phi||)");
    let mut decay = CheckReport::new("D+V(phi) <= -alpha3(|phi(0)|)");
    let mut razumikhin =
        CheckReport::new("nu D+V(phi) + eta D+(p o V1)(phi) + eta mu p(V1(phi(0))) <= 0");
    let nu = f64::from(suite.nu);
    for (i, t) in terms.iter().enumerate() {
        let (lo, hi) = (suite.gamma1.eval(t.z0), suite.gamma2.eval(t.sup));
        let slack = tol.exact * (1.0 + t.value.abs());
        if lo - t.value >= t.value - hi {
            sandwich.record(i, lo, t.value, slack, false);
        } else {
            sandwich.record(i, t.value, hi, slack, false);
        }

        let lhs = t.dv.limsup;
        decay.record(
            i,
            lhs,
            -suite.alpha3.eval(t.z0),
            tol.abs + tol.rel * lhs.abs(),
            !t.dv.monotone,
        );

        let lhs = nu * t.dv.limsup + suite.eta * t.dp.limsup + suite.eta * suite.mu * t.p_v1;
        let scale = nu * t.dv.limsup.abs() + suite.eta * t.dp.limsup.abs();
        razumikhin.record(
            i,
            lhs,
            0.0,
            tol.abs + tol.rel * scale,
            !(t.dv.monotone && t.dp.monotone),
        );
    }
    let passed = classes.passed && sandwich.passed && decay.passed && razumikhin.passed;
    Ok(Assumption1Report {
        classes,
        sandwich,
        decay,
        razumikhin,
        passed,
    })
}

/// Right-hand side convention for the steepest descent inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentMode {
    /// `rhs = alpha_bar(eta mu e^{-mu delay} p(beta1(||phi||)))`.
    Definition4,
    /// `rhs = 0`, the form used in the stability argument.
    ProofForm,
}

struct DescentTerms {
    lhs: f64,
    scale: f64,
    sup: f64,
    reliable: bool,
}

/// Evaluates, with `u~ = k~(phi)` and derivatives along the extended open
/// loop, `nu D+V + eta max(0, D+(p o V1) + mu p(V1(phi(0)))) <= rhs` in both
/// modes. All sub-evaluations are shared; only the right-hand side differs.
pub fn check_steepest_descent_modes(
    suite: &FunctionalSuite,
    model: &ModelPair,
    samples: &[Segment],
    tol: Tolerance,
) -> Result<(CheckReport, CheckReport)> {
    let mut problems = class_problems(&[
        ("beta1", &suite.beta1),
        ("p", &suite.p),
        ("alpha_bar", &suite.alpha_bar),
        ("I - alpha_bar", &suite.identity_minus_alpha_bar()),
    ]);
    problems.extend(suite.constant_problems());

    let nu = f64::from(suite.nu);
    let terms: Vec<DescentTerms> = samples
        .par_iter()
        .map(|phi| {
            let u = model.composite_feedback(phi)?;
            let drift = model.extended_rhs(phi, &u)?;
            let (dv, dp) = derivative_pair(suite, phi, &drift)?;
            let inner = dp.limsup + suite.mu * suite.p_of_v1(phi);
            Ok(DescentTerms {
                lhs: nu * dv.limsup + suite.eta * inner.max(0.0),
                scale: nu * dv.limsup.abs() + suite.eta * dp.limsup.abs(),
                sup: phi.sup_norm(),
                reliable: dv.monotone && dp.monotone,
            })
        })
        .collect::<Result<_>>()?;

    let decay = suite.eta * suite.mu * (-suite.mu * model.delay).exp();
    let mut reports = [
        (DescentMode::Definition4, CheckReport::new(
            "nu D+V + eta max(0, D+(p o V1) + mu p(V1)) <= alpha_bar(eta mu e^{-mu delay} p(beta1(||phi||)))",
        )),
        (DescentMode::ProofForm, CheckReport::new(
            "nu D+V + eta max(0, D+(p o V1) + mu p(V1)) <= 0",
        )),
    ];
    for (mode, report) in reports.iter_mut() {
        report.structural(problems.clone());
        for (i, t) in terms.iter().enumerate() {
            let rhs = match mode {
                DescentMode::Definition4 => suite
                    .alpha_bar
                    .eval(decay * suite.p.eval(suite.beta1.eval(t.sup))),
                DescentMode::ProofForm => 0.0,
            };
            report.record(i, t.lhs, rhs, tol.abs + tol.rel * t.scale, !t.reliable);
        }
    }
    let [(_, def4), (_, proof)] = reports;
    Ok((def4, proof))
}

pub fn check_steepest_descent(
    suite: &FunctionalSuite,
    model: &ModelPair,
    samples: &[Segment],
    mode: DescentMode,
    tol: Tolerance,
) -> Result<CheckReport> {
    let (def4, proof) = check_steepest_descent_modes(suite, model, samples, tol)?;
    Ok(match mode {
        DescentMode::Definition4 => def4,
        DescentMode::ProofForm => proof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lkf::{linear_scalar_suite, random_segments, FnClass};
    use crate::models::LinearScalar;

    fn samples(n: usize) -> Vec<Segment> {
        random_segments(n, 2, 1.0, 2.0, 11)
    }

    #[test]
    fn separability_of_shipped_suite() {
        let wide = random_segments(1000, 2, 1.0, 5.0, 12);
        let r = check_smooth_separability(&linear_scalar_suite(), &wide, Tolerance::default());
        assert!(r.passed, "{r:?}");
        assert_eq!(r.samples_tested, 1000);
    }

    #[test]
    fn separability_failure_has_expected_margin() {
        let mut suite = linear_scalar_suite();
        suite.v1 = std::sync::Arc::new(|z: &[f64]| z[0] * z[0] + z[1] * z[1]);
        suite.beta1 = ComparisonFn::quadratic(2.0);
        let phi = Segment::constant(1.0, &[0.6, 0.8]).unwrap();
        let r = check_smooth_separability(&suite, &[phi], Tolerance::default());
        assert!(!r.passed);
        assert!((r.violations[0].margin - 1.0).abs() < 1e-12);
        assert!((r.worst_margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shipped_suite_satisfies_closed_loop_conditions() {
        let model = LinearScalar::default().model();
        let r = check_assumption1(
            &linear_scalar_suite(),
            &model,
            &samples(300),
            Tolerance::default(),
        )
        .unwrap();
        assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        // the zero sample sits exactly on the boundary
        assert!(r.decay.worst_margin <= 1e-12);
        assert_eq!(r.decay.samples_tested, 300);
    }

    #[test]
    fn analytic_derivative_matches_estimate() {
        // D+V = 2 z'P F + c(|z0|^2 - e^{-lambda}|z(-1)|^2) - lambda V2
        let model = LinearScalar::default().model();
        let suite = linear_scalar_suite();
        for phi in samples(40) {
            let f = model.stacked_rhs(&phi).unwrap();
            let z = phi.eval(0.0).unwrap();
            let zd = phi.eval(-1.0).unwrap();
            let pf = [2.0 * f[0] - f[1], -f[0] + f[1]];
            let v2 = (suite.v2)(&phi);
            let exact = 2.0 * (z[0] * pf[0] + z[1] * pf[1])
                + 0.5 * (norm(&z).powi(2) - (-0.2f64).exp() * norm(&zd).powi(2))
                - 0.2 * v2;
            let est = driver_derivative(|s| suite.value(s), &phi, &f, &DEFAULT_STEPS).unwrap();
            // first-order remainder: h (|phi(0)| |phi'(0-)| + |phi(0)| |F|) at h = 1e-4
            let slack =
                1e-3 * (1.0 + exact.abs()) + 2e-4 * phi.sup_norm() * (phi.slope_bound() + norm(&f));
            assert!(
                (est.limsup - exact).abs() <= slack,
                "{} vs {exact}",
                est.limsup
            );
            assert!((est.richardson - exact).abs() <= slack);
        }
    }

    #[test]
    fn negated_alpha3_is_rejected_by_class_check() {
        let mut suite = linear_scalar_suite();
        suite.alpha3 = suite.alpha3.scaled(-1.0);
        let model = LinearScalar::default().model();
        let r = check_assumption1(&suite, &model, &samples(20), Tolerance::default()).unwrap();
        assert!(!r.classes.passed);
        assert!(!r.passed);
    }

    #[test]
    fn unstable_gain_violates_decay() {
        let model = LinearScalar {
            feedback_gain: -1.5,
            ..LinearScalar::default()
        }
        .model();
        let r = check_assumption1(
            &linear_scalar_suite(),
            &model,
            &samples(100),
            Tolerance::default(),
        )
        .unwrap();
        assert!(!r.decay.passed);
        assert!(r.decay.worst_margin > 0.0);
    }

    #[test]
    fn steepest_descent_modes_share_left_side() {
        let model = LinearScalar::default().model();
        let s = samples(150);
        let (def4, proof) =
            check_steepest_descent_modes(&linear_scalar_suite(), &model, &s, Tolerance::default())
                .unwrap();
        assert!(def4.passed, "{def4:?}");
        assert!(proof.passed, "{proof:?}");
        assert_eq!(def4.samples_tested, proof.samples_tested);
        // definition-4 rhs is non-negative, so its margins are never larger
        assert!(def4.worst_margin <= proof.worst_margin);
    }

    #[test]
    fn bad_alpha_bar_fails_structurally() {
        let mut suite = linear_scalar_suite();
        suite.alpha_bar = ComparisonFn::linear(1.0, FnClass::K);
        let model = LinearScalar::default().model();
        let r = check_steepest_descent(
            &suite,
            &model,
            &samples(5),
            DescentMode::Definition4,
            Tolerance::default(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.violations.iter().any(|v| v.note.is_some()));
    }

    #[test]
    fn functional_decreases_along_closed_loop_trajectories() {
        use crate::engine::{integrate_continuous, IntegratorConfig};
        let model = LinearScalar::default().model();
        let suite = linear_scalar_suite();
        let x0 = Segment::new(
            1.0,
            vec![-1.0, -0.4, 0.0],
            vec![vec![0.3], vec![-0.8], vec![1.0]],
        )
        .unwrap();
        let xh0 = Segment::constant(1.0, &[-0.5]).unwrap();
        let traj =
            integrate_continuous(&model, &x0, &xh0, &IntegratorConfig::rk4(0.01, 8.0)).unwrap();
        let values: Vec<f64> = (0..=80)
            .map(|i| suite.value(&traj.window(i as f64 * 0.1).unwrap()))
            .collect();
        for w in values.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6 + 1e-3 * w[0].abs(),
                "{} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(values[80] < 1e-2 * values[0]);
    }

    #[test]
    fn report_json_shape() {
        let r =
            check_smooth_separability(&linear_scalar_suite(), &samples(3), Tolerance::default());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in [
            "inequality",
            "samples_tested",
            "violations",
            "worst_margin",
            "passed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
