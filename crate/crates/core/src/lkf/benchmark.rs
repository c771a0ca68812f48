use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ComparisonFn, FnClass, FunctionalSuite};
use crate::history::{norm, Segment};
use crate::sampled::derive_seed;

/// `J_k(kappa) = int_0^1 s^k e^{kappa s} ds` for `k = 0, 1, 2`.
fn moment_integrals(kappa: f64) -> [f64; 3] {
    if kappa.abs() <= 1.0 {
        let mut out = [0.0; 3];
        let mut term = 1.0; // kappa^m / m!
        for m in 0..30 {
            for (k, o) in out.iter_mut().enumerate() {
                *o += term / (m + k + 1) as f64;
            }
            term *= kappa / (m + 1) as f64;
        }
        out
    } else {
        let e = kappa.exp();
        let j0 = (e - 1.0) / kappa;
        let j1 = (e - j0) / kappa;
        let j2 = (e - 2.0 * j1) / kappa;
        [j0, j1, j2]
    }
}

/// `int_{-delay}^0 e^{lambda theta} |phi(theta)|^2 d theta`, exact for
/// piecewise-linear segments.
pub fn weighted_square_integral(phi: &Segment, lambda: f64) -> f64 {
    let knots = phi.knots();
    let mut total = 0.0;
    for i in 0..knots.len() - 1 {
        let (ta, tb) = (knots[i], knots[i + 1]);
        let w = tb - ta;
        let (a, b) = (phi.value(i), phi.value(i + 1));
        let (mut aa, mut ad, mut dd) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let d = y - x;
            aa += x * x;
            ad += x * d;
            dd += d * d;
        }
        let [j0, j1, j2] = moment_integrals(lambda * w);
        total += w * (lambda * ta).exp() * (aa * j0 + 2.0 * ad * j1 + dd * j2);
    }
    total
}

/// Quadratic-plus-integral functional for the default linear-scalar
/// benchmark, with state `z = (x, xhat)`:
/// `V(phi) = |x|^2 + |x - xhat|^2 + c int e^{lambda theta} |phi(theta)|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearScalarLkf {
    pub c: f64,
    pub lambda: f64,
}

impl Default for LinearScalarLkf {
    fn default() -> Self {
        Self {
            c: 0.5,
            lambda: 0.2,
        }
    }
}

impl LinearScalarLkf {
    pub fn v1(z: &[f64]) -> f64 {
        let e = z[0] - z[1];
        z[0] * z[0] + e * e
    }

    pub fn suite(&self) -> FunctionalSuite {
        let Self { c, lambda } = *self;
        // eigenvalues of [[2, -1], [-1, 1]] are (3 -+ sqrt 5) / 2
        FunctionalSuite {
            v1: Arc::new(Self::v1),
            v2: Arc::new(move |phi| c * weighted_square_integral(phi, lambda)),
            gamma1: ComparisonFn::quadratic(0.38),
            gamma2: ComparisonFn::quadratic(3.1),
            beta1: ComparisonFn::quadratic(0.38),
            beta2: ComparisonFn::quadratic(2.62),
            alpha3: ComparisonFn::quadratic(0.25),
            alpha_bar: ComparisonFn::linear(0.5, FnClass::K),
            p: ComparisonFn::linear(1.0, FnClass::KInfinity),
            eta: 0.2,
            mu: 0.2,
            nu: 1,
        }
    }
}

/// Functional suite for the `linear-scalar` benchmark with default gains.
pub fn linear_scalar_suite() -> FunctionalSuite {
    LinearScalarLkf::default().suite()
}

/// Interior knots of random segments sit on a grid of this many cells, which
/// bounds their slopes by `2 * radius * KNOT_SLOTS / delay`.
const KNOT_SLOTS: u32 = 50;

/// Deterministic sample of piecewise-linear segments with sup-norm at most
/// `radius`. The first sample is the zero segment; the rest have up to ten
/// random interior knots.
pub fn random_segments(
    count: usize,
    dim: usize,
    delay: f64,
    radius: f64,
    seed: u64,
) -> Vec<Segment> {
    (0..count)
        .map(|i| {
            if i == 0 {
                return Segment::zero(delay, dim).expect("valid delay");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let inner = rng.gen_range(0..=10);
            let mut slots: Vec<u32> = (0..inner).map(|_| rng.gen_range(1..KNOT_SLOTS)).collect();
            slots.push(0);
            slots.push(KNOT_SLOTS);
            slots.sort_unstable();
            slots.dedup();
            let knots: Vec<f64> = slots
                .iter()
                .map(|&k| -delay + delay * f64::from(k) / f64::from(KNOT_SLOTS))
                .collect();
            let scale = radius * rng.gen_range(0.0..=1.0f64).sqrt();
            let values: Vec<Vec<f64>> = knots
                .iter()
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let n = norm(&v);
                    let s = if n > 1.0 { scale / n } else { scale };
                    v.iter().map(|x| x * s).collect()
                })
                .collect();
            Segment::new(delay, knots, values).expect("valid random segment")
        })
        .collect()
}
