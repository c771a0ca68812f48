use crate::error::{domain, Error, Result};

/// Read access to a function on `[-delay, 0]` with values in `R^dim`.
///
/// Model maps receive their arguments through this trait so that windows
/// into long trajectories can be handed over without copying the history.
pub trait History {
    fn dim(&self) -> usize;

    fn delay(&self) -> f64;

    /// Value at `theta`. Arguments outside `[-delay, 0]` are clamped; use
    /// [`Segment::eval`] for the checked variant.
    fn at(&self, theta: f64) -> Vec<f64>;

    /// Strictly increasing abscissae between which the function is linear,
    /// starting at `-delay` and ending at `0`.
    fn breakpoints(&self) -> Vec<f64>;

    /// Copies the view into an owned piecewise-linear segment.
    fn to_segment(&self) -> Segment {
        let knots = self.breakpoints();
        let dim = self.dim();
        let mut values = Vec::with_capacity(knots.len() * dim);
        for &k in &knots {
            values.extend(self.at(k));
        }
        Segment::from_flat(self.delay(), dim, knots, values)
            .expect("history views produce valid segments")
    }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A piecewise-linear function on `[-delay, 0]`, stored as knots and the
/// values at those knots.
///
/// Knots are strictly increasing, the first is exactly `-delay` and the last
/// is exactly `0`. Evaluation at a knot returns the stored value bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    delay: f64,
    dim: usize,
    knots: Vec<f64>,
    /// Knot-major: the value at knot `i` is `values[i * dim..(i + 1) * dim]`.
    values: Vec<f64>,
}

impl Segment {
    pub fn new(delay: f64, knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(Vec::len).unwrap_or(0);
        if values.iter().any(|v| v.len() != dim) {
            return domain("segment values have inconsistent dimensions");
        }
        Self::from_flat(delay, dim, knots, values.into_iter().flatten().collect())
    }

    pub fn from_flat(delay: f64, dim: usize, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(delay.is_finite() && delay > 0.0) {
            return domain(format!("delay must be positive and finite, got {delay}"));
        }
        if dim == 0 {
            return domain("segment dimension must be positive");
        }
        if knots.len() < 2 {
            return domain("a segment needs at least two knots");
        }
        if knots[0] != -delay || knots[knots.len() - 1] != 0.0 {
            return domain(format!(
                "knots must start at -{delay} and end at 0, got [{}, {}]",
                knots[0],
                knots[knots.len() - 1]
            ));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("knots must be strictly increasing");
        }
        if values.len() != knots.len() * dim {
            return domain(format!(
                "expected {} values for {} knots of dimension {dim}, got {}",
                knots.len() * dim,
                knots.len(),
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("segment values must be finite");
        }
        Ok(Self {
            delay,
            dim,
            knots,
            values,
        })
    }

    /// The segment that is identically `value`.
    pub fn constant(delay: f64, value: &[f64]) -> Result<Self> {
        let mut values = value.to_vec();
        values.extend_from_slice(value);
        Self::from_flat(delay, value.len(), vec![-delay, 0.0], values)
    }

    pub fn zero(delay: f64, dim: usize) -> Result<Self> {
        Self::constant(delay, &vec![0.0; dim])
    }

    /// Samples `f` at the given knots.
    pub fn from_fn(delay: f64, knots: Vec<f64>, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let values: Vec<Vec<f64>> = knots.iter().map(|&k| f(k)).collect();
        Self::new(delay, knots, values)
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Stored value at knot index `i`.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Evaluates the segment at `theta`.
    pub fn eval(&self, theta: f64) -> Result<Vec<f64>> {
        if !(theta >= -self.delay && theta <= 0.0) {
            return domain(format!("theta = {theta} outside [-{}, 0]", self.delay));
        }
        Ok(self.eval_unchecked(theta))
    }

    fn eval_unchecked(&self, theta: f64) -> Vec<f64> {
        let i = self.knots.partition_point(|&k| k < theta);
        if i < self.knots.len() && self.knots[i] == theta {
            return self.value(i).to_vec();
        }
        // theta lies strictly inside (knots[i - 1], knots[i])
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let w = (theta - k0) / (k1 - k0);
        self.value(i - 1)
            .iter()
            .zip(self.value(i))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Sup norm. The Euclidean norm is convex along each linear piece, so the
    /// maximum over the segment is attained at a knot.
    pub fn sup_norm(&self) -> f64 {
        self.values().map(norm).fold(0.0, f64::max)
    }

    /// Essential supremum of the derivative norm: the steepest linear piece.
    pub fn slope_bound(&self) -> f64 {
        let mut best = 0.0_f64;
        for i in 1..self.knots.len() {
            let dt = self.knots[i] - self.knots[i - 1];
            let dv: f64 = self
                .value(i)
                .iter()
                .zip(self.value(i - 1))
                .map(|(b, a)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            best = best.max(dv / dt);
        }
        best
    }

    /// Pointwise concatenation `[self; other]` on the union of both knot sets.
    pub fn stack(&self, other: &Segment) -> Result<Segment> {
        self.combine(
            other,
            |a, b| {
                let mut v = a;
                v.extend(b);
                v
            },
            self.dim + other.dim,
        )
    }

    /// Pointwise difference `self - other`, used for distance computations.
    pub fn difference(&self, other: &Segment) -> Result<Segment> {
        if self.dim != other.dim {
            return domain("segment dimensions differ");
        }
        self.combine(
            other,
            |a, b| a.iter().zip(&b).map(|(x, y)| x - y).collect(),
            self.dim,
        )
    }

    fn combine(
        &self,
        other: &Segment,
        op: impl Fn(Vec<f64>, Vec<f64>) -> Vec<f64>,
        dim: usize,
    ) -> Result<Segment> {
        if self.delay != other.delay {
            return domain(format!(
                "cannot combine segments with delays {} and {}",
                self.delay, other.delay
            ));
        }
        let knots = merge_knots(&self.knots, &other.knots);
        let mut values = Vec::with_capacity(knots.len() * dim);
        for &k in &knots {
            values.extend(op(self.eval_unchecked(k), other.eval_unchecked(k)));
        }
        Segment::from_flat(self.delay, dim, knots, values)
    }

    /// Components `start..start + len` as a segment of dimension `len`.
    pub fn block(&self, start: usize, len: usize) -> Result<Segment> {
        if len == 0 || start + len > self.dim {
            return domain(format!(
                "block {start}..{} out of range for dimension {}",
                start + len,
                self.dim
            ));
        }
        let values = self
            .values()
            .flat_map(|v| v[start..start + len].iter().copied())
            .collect();
        Segment::from_flat(self.delay, len, self.knots.clone(), values)
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Segment {
        Segment {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// The shifted segment with an Euler ramp appended:
    /// `phi(s + h)` on `[-delay, -h)` and `phi(0) + (s + h) * drift` on `[-h, 0]`.
    pub fn euler_extend(&self, h: f64, drift: &[f64]) -> Result<Segment> {
        if !(h > 0.0 && h < self.delay) {
            return domain(format!("step h = {h} must lie in (0, {})", self.delay));
        }
        if drift.len() != self.dim {
            return domain(format!(
                "drift has dimension {}, segment has {}",
                drift.len(),
                self.dim
            ));
        }
        if drift.iter().any(|d| !d.is_finite()) {
            return Err(Error::Evaluation("drift is not finite".into()));
        }
        let mut knots = Vec::with_capacity(self.knots.len() + 2);
        let mut values = Vec::with_capacity((self.knots.len() + 2) * self.dim);

        knots.push(-self.delay);
        values.extend(self.eval_unchecked(-self.delay + h));
        for (i, &k) in self.knots.iter().enumerate() {
            let theta = k - h;
            if theta > -self.delay && theta < -h {
                knots.push(theta);
                values.extend_from_slice(self.value(i));
            }
        }
        let last = self.value(self.knots.len() - 1);
        knots.push(-h);
        values.extend_from_slice(last);
        knots.push(0.0);
        values.extend(last.iter().zip(drift).map(|(x, d)| x + h * d));

        Segment::from_flat(self.delay, self.dim, knots, values)
    }
}

impl History for Segment {
    fn dim(&self) -> usize {
        self.dim
    }

    fn delay(&self) -> f64 {
        self.delay
    }

    fn at(&self, theta: f64) -> Vec<f64> {
        self.eval_unchecked(theta.clamp(-self.delay, 0.0))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots.clone()
    }

    fn to_segment(&self) -> Segment {
        self.clone()
    }
}

/// Sorted union of two strictly increasing knot lists.
pub(crate) fn merge_knots(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if y < x => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Components `start..start + len` of another history, without copying.
pub struct Block<'a> {
    inner: &'a dyn History,
    start: usize,
    len: usize,
}

impl<'a> Block<'a> {
    pub fn new(inner: &'a dyn History, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > inner.dim() {
            return domain(format!(
                "block {start}..{} out of range for dimension {}",
                start + len,
                inner.dim()
            ));
        }
        Ok(Self { inner, start, len })
    }
}

impl History for Block<'_> {
    fn dim(&self) -> usize {
        self.len
    }

    fn delay(&self) -> f64 {
        self.inner.delay()
    }

    fn at(&self, theta: f64) -> Vec<f64> {
        let mut v = self.inner.at(theta);
        v.truncate(self.start + self.len);
        v.drain(..self.start);
        v
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}
