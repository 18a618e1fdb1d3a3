//! Discrete head-rotation model.
//!
//! Angles are 0-based indices into a circle of `K` positions; index `i`
//! corresponds to the `(i + 1)`-th discrete view angle. All distances wrap
//! around the circle.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const ROW_SUM_TOL: f64 = 1e-12;
const STEADY_TOL: f64 = 1e-12;
const STEADY_MAX_ITERS: usize = 100_000;

/// Circular distance between two angle indices on a circle of `k` positions.
#[inline]
pub fn circular_distance(i: usize, j: usize, k: usize) -> usize {
    let d = i.abs_diff(j) % k;
    d.min(k - d)
}

/// Number of discrete view angles and the FoV half-width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewSpace {
    k: usize,
    a: usize,
}

impl ViewSpace {
    pub fn new(k: usize, a: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("K must be at least 2, got {k}")));
        }
        if 1 + 2 * a >= k {
            return Err(Error::InvalidParameter(format!(
                "FoV of {} angles spans the whole circle of K = {k}",
                1 + 2 * a
            )));
        }
        Ok(Self { k, a })
    }

    #[inline]
    pub fn num_angles(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn half_width(&self) -> usize {
        self.a
    }

    /// Number of angles in the FoV, `1 + 2a`.
    #[inline]
    pub fn fov_size(&self) -> usize {
        1 + 2 * self.a
    }

    /// Angles covered by a FoV centred on `center`, in ascending offset order.
    pub fn fov_window(&self, center: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.k;
        let a = self.a;
        (0..=2 * a).map(move |off| (center + k * (a + 1) + off - a) % k)
    }
}

/// Row-stochastic, circularly banded transition matrix of the head angle.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    p: Matrix,
    v_max: usize,
    // Non-zero entries per row, for banded products.
    band: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    /// Validates `p` against the band limit and stochasticity.
    pub fn new(p: Matrix, v_max: usize) -> Result<Self> {
        let k = p.dim();
        if k < 2 {
            return Err(Error::InvalidParameter(format!("K must be at least 2, got {k}")));
        }
        if v_max == 0 {
            return Err(Error::InvalidParameter("v_max must be positive".into()));
        }
        for (i, row) in p.rows().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidTransition {
                        row: i,
                        col: j,
                        reason: format!("entry {x} is not a non-negative number"),
                    });
                }
                if x != 0.0 && circular_distance(i, j, k) > v_max {
                    return Err(Error::InvalidTransition {
                        row: i,
                        col: j,
                        reason: format!("non-zero entry outside band v_max = {v_max}"),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTransition {
                    row: i,
                    col: k - 1,
                    reason: format!("row sums to {sum}"),
                });
            }
        }
        let band = p
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(j, &x)| (j, x))
                    .collect()
            })
            .collect();
        Ok(Self { p, v_max, band })
    }

    /// Loads a K x K matrix from headerless CSV. Rows within 1e-9 of
    /// stochastic are renormalised; the band limit is the widest circular
    /// distance carrying probability.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for (j, cell) in line.split(',').enumerate() {
                let x: f64 = cell.trim().parse().map_err(|_| Error::InvalidTransition {
                    row: i,
                    col: j,
                    reason: format!("cannot parse {:?} as a number", cell.trim()),
                })?;
                row.push(x);
            }
            rows.push(row);
        }
        let k = rows.len();
        let mut v_max = 1;
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidTransition {
                    row: i,
                    col: row.len().min(k),
                    reason: format!("expected {k} columns, found {}", row.len()),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidTransition {
                        row: i,
                        col: j,
                        reason: format!("entry {x} is not a non-negative number"),
                    });
                }
                if x > 0.0 {
                    v_max = v_max.max(circular_distance(i, j, k));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidTransition {
                    row: i,
                    col: k - 1,
                    reason: format!("row sums to {sum}"),
                });
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        Self::new(Matrix::from_rows(&rows), v_max)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    #[inline]
    pub fn num_angles(&self) -> usize {
        self.p.dim()
    }

    #[inline]
    pub fn v_max(&self) -> usize {
        self.v_max
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p[(from, to)]
    }

    /// Non-zero `(next_angle, probability)` pairs of one row.
    pub fn row_support(&self, from: usize) -> &[(usize, f64)] {
        &self.band[from]
    }

    /// Row vector times P using only the in-band entries.
    pub fn propagate(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for &(j, p) in &self.band[i] {
                out[j] += vi * p;
            }
        }
        out
    }
}

/// Stationary distribution of a [`TransitionModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    q: Vec<f64>,
}

impl SteadyState {
    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }

    /// `max_j |(qP)_j - q_j|`.
    pub fn residual(&self, model: &TransitionModel) -> f64 {
        let qp = model.propagate(&self.q);
        qp.iter().zip(&self.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Binary circulant FoV operator `C_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FovOperator {
    c: Matrix,
    a: usize,
}

impl FovOperator {
    pub fn matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn half_width(&self) -> usize {
        self.a
    }
}

/// Builds a banded transition matrix whose in-band weights decrease linearly
/// with circular distance. `hotspots` holds `(angle, multiplier)` pairs; rows
/// close to a hotspot use a steeper slope, which raises the stationary mass
/// there.
///
/// Base kernel weight at distance `d` is `1 - s d` with `s = m / (m v_max + 1)`,
/// so `m = 1` gives `s = 1 / (v_max + 1)` and larger multipliers approach
/// `1 / v_max` without zeroing the outermost in-band entry. The multiplier of a
/// row at distance `t <= v_max` from a hotspot tapers linearly from `m` at the
/// hotspot to 1 at distance `v_max + 1`.
pub fn build_linear_transition(
    space: ViewSpace,
    v_max: usize,
    hotspots: &[(usize, f64)],
) -> Result<TransitionModel> {
    let k = space.num_angles();
    if v_max == 0 {
        return Err(Error::InvalidParameter("v_max must be at least 1".into()));
    }
    if 2 * v_max + 1 > k {
        return Err(Error::InvalidParameter(format!(
            "band of width {} does not fit in K = {k}",
            2 * v_max + 1
        )));
    }
    for &(angle, m) in hotspots {
        if angle >= k {
            return Err(Error::InvalidParameter(format!("hotspot angle {angle} out of range")));
        }
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "hotspot multiplier must be >= 1, got {m}"
            )));
        }
    }

    let mut p = Matrix::zeros(k);
    for i in 0..k {
        let mut mult: f64 = 1.0;
        for &(h, m) in hotspots {
            let t = circular_distance(i, h, k);
            if t <= v_max {
                let taper = 1.0 - t as f64 / (v_max + 1) as f64;
                mult = mult.max(1.0 + (m - 1.0) * taper);
            }
        }
        let slope = mult / (mult * v_max as f64 + 1.0);
        let weights: Vec<f64> = (0..=v_max).map(|d| (1.0 - slope * d as f64).max(0.0)).collect();
        let total = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
        p[(i, i)] = weights[0] / total;
        for (d, &w) in weights.iter().enumerate().skip(1) {
            p[(i, (i + d) % k)] = w / total;
            p[(i, (i + k - d) % k)] = w / total;
        }
        // Exact row sum of 1 for the stochasticity check.
        let row = p.row_mut(i);
        let s: f64 = row.iter().sum();
        if s != 1.0 {
            row[i] += 1.0 - s;
        }
    }
    TransitionModel::new(p, v_max)
}

/// Stationary distribution by power iteration from the uniform vector.
///
/// Chains with a zero on the diagonal are iterated through the lazy chain
/// `(P + I) / 2`, which has the same fixed point but cannot be periodic.
pub fn steady_state(model: &TransitionModel) -> Result<SteadyState> {
    let k = model.num_angles();
    let lazy = (0..k).any(|i| model.prob(i, i) == 0.0);
    let step = if lazy { 0.5 } else { 1.0 };
    let mut q = vec![1.0 / k as f64; k];
    let mut residual = f64::INFINITY;
    for _ in 0..STEADY_MAX_ITERS {
        let qp = model.propagate(&q);
        residual = qp.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual <= STEADY_TOL {
            normalize(&mut q);
            return Ok(SteadyState { q });
        }
        for (x, y) in q.iter_mut().zip(&qp) {
            *x += step * (y - *x);
        }
        normalize(&mut q);
    }
    Err(Error::NoConvergence { iterations: STEADY_MAX_ITERS, residual })
}

fn normalize(q: &mut [f64]) {
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
}

/// The binary circulant FoV matrix: row `k` has ones on `[k - a, k + a]`.
pub fn fov_matrix(space: ViewSpace) -> FovOperator {
    let k = space.num_angles();
    let mut c = Matrix::zeros(k);
    for row in 0..k {
        for l in space.fov_window(row) {
            c[(row, l)] = 1.0;
        }
    }
    FovOperator { c, a: space.half_width() }
}

/// `1_k C_a P^steps`: FoV indicator of angle `k` propagated `steps` transitions.
pub fn propagated_weights(
    space: ViewSpace,
    model: &TransitionModel,
    fov: &FovOperator,
    k: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    let n = space.num_angles();
    if k >= n {
        return Err(Error::InvalidParameter(format!("angle {k} out of range for K = {n}")));
    }
    if model.num_angles() != n || fov.matrix().dim() != n {
        return Err(Error::InvalidParameter("view space, model and FoV disagree on K".into()));
    }
    let mut w = fov.matrix().row(k).to_vec();
    for _ in 0..steps {
        w = model.propagate(&w);
    }
    Ok(w)
}

/// Where the FoV window is applied relative to the head motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationOrder {
    /// `C_a P^n`: the window around the feedback angle, then `n` transitions.
    FovFirst,
    /// `P^n C_a`: `n` transitions, then the window around the angle reached.
    /// This is the expectation a simulated session measures.
    #[default]
    MotionFirst,
}

impl PropagationOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FovFirst => "fov_first",
            Self::MotionFirst => "motion_first",
        }
    }
}

impl std::str::FromStr for PropagationOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fov_first" => Ok(Self::FovFirst),
            "motion_first" => Ok(Self::MotionFirst),
            other => Err(Error::InvalidParameter(format!(
                "propagation order must be fov_first or motion_first, got {other:?}"
            ))),
        }
    }
}

/// Cached propagated FoV weights for `h = 0..count` steps past `base`, and
/// their sum.
#[derive(Debug, Clone)]
pub struct PropagationCache {
    per_step: Vec<Matrix>,
    aggregate: Matrix,
}

impl PropagationCache {
    pub fn new(model: &TransitionModel, fov: &FovOperator, base: usize, count: usize) -> Self {
        Self::with_order(model, fov, base, count, PropagationOrder::default())
    }

    pub fn with_order(
        model: &TransitionModel,
        fov: &FovOperator,
        base: usize,
        count: usize,
        order: PropagationOrder,
    ) -> Self {
        assert!(count >= 1);
        let p = model.matrix();
        let mut current = match order {
            PropagationOrder::FovFirst => fov.matrix().matmul(&p.pow(base)),
            PropagationOrder::MotionFirst => p.pow(base).matmul(fov.matrix()),
        };
        let n = current.dim();
        let mut per_step = Vec::with_capacity(count);
        let mut aggregate = Matrix::zeros(n);
        for h in 0..count {
            if h > 0 {
                current = match order {
                    PropagationOrder::FovFirst => current.matmul(p),
                    PropagationOrder::MotionFirst => p.matmul(&current),
                };
            }
            for i in 0..n {
                for (acc, &x) in aggregate.row_mut(i).iter_mut().zip(current.row(i)) {
                    *acc += x;
                }
            }
            per_step.push(current.clone());
        }
        Self { per_step, aggregate }
    }

    /// Weights `base + h` steps ahead.
    pub fn step(&self, h: usize) -> &Matrix {
        &self.per_step[h]
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    /// Sum of the weights over all cached steps.
    pub fn aggregate(&self) -> &Matrix {
        &self.aggregate
    }
}
