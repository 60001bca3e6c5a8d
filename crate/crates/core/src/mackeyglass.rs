//! Mackey-Glass delay equation
//!
//! ```text
//! u'(t) = beta u(t - tau) / (1 + |u(t - tau)|^eta) - gamma u(t)
//! ```
//!
//! A state is the history segment on `[-tau, 0]` sampled at `m + 1` uniform
//! nodes. The observation map reads `k` equally spaced delay coordinates off
//! that segment (`T = tau / (k - 1)`, so `k` samples tile the window), and
//! the extension map rebuilds a history by not-a-knot cubic spline
//! interpolation through those `k` values.

use nalgebra::{DMatrix, DVector};

use crate::cds::{ExtensionMap, FlowMap, ObservationMap};
use crate::error::{check_len, Error, ModelError, Result};

/// Target number of history steps per delay before rounding up to a
/// multiple of `k - 1`.
pub const DEFAULT_STEPS_PER_DELAY: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgParams {
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub tau: f64,
    /// Embedding dimension.
    pub k: usize,
    /// History intervals per delay; 0 picks a multiple of `k - 1` near 200.
    pub steps_per_delay: usize,
}

impl Default for MgParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            gamma: 1.0,
            eta: 9.65,
            tau: 2.0,
            k: 7,
            steps_per_delay: 0,
        }
    }
}

impl MgParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("tau", self.tau),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidInput("delay must be > 0".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidInput(format!(
                "delay embedding needs k >= 2, got {}",
                self.k
            )));
        }
        let m = self.history_intervals();
        if m < 4 || !m.is_multiple_of(self.k - 1) {
            return Err(Error::InvalidInput(format!(
                "{m} history intervals must be >= 4 and divisible by k - 1 = {}",
                self.k - 1
            )));
        }
        Ok(())
    }

    /// Number `m` of grid intervals on `[-tau, 0]`.
    pub fn history_intervals(&self) -> usize {
        if self.steps_per_delay > 0 {
            self.steps_per_delay
        } else {
            let d = self.k.max(2) - 1;
            d * DEFAULT_STEPS_PER_DELAY.div_ceil(d)
        }
    }

    pub fn step(&self) -> f64 {
        self.tau / self.history_intervals() as f64
    }

    /// Horizon of the time-`T` map, `tau / (k - 1)`.
    pub fn horizon(&self) -> f64 {
        self.tau / (self.k - 1) as f64
    }

    /// Nontrivial steady state `(beta/gamma - 1)^(1/eta)`.
    pub fn positive_steady_state(&self) -> Option<f64> {
        let r = self.beta / self.gamma - 1.0;
        (r > 0.0).then(|| r.powf(1.0 / self.eta))
    }

    fn rhs(&self, now: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.abs().powf(self.eta)) - self.gamma * now
    }
}

/// Method-of-steps RK4 integrator on the history grid.
#[derive(Clone, Debug)]
pub struct MgFlow {
    params: MgParams,
    m: usize,
    h: f64,
}

impl MgFlow {
    pub fn new(params: MgParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            m: params.history_intervals(),
            h: params.step(),
            params,
        })
    }

    pub fn params(&self) -> &MgParams {
        &self.params
    }

    /// History grid times `-tau + j h`.
    pub fn history_times(&self) -> Vec<f64> {
        (0..=self.m).map(|j| -self.params.tau + j as f64 * self.h).collect()
    }

    /// Samples `f` on the history grid.
    pub fn history_from(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.history_times().into_iter().map(f).collect()
    }
}

/// Values of `u` at buffer nodes; index 0 is the start of the initial
/// history. `u'` may jump where the history ends and `u''` one delay later,
/// so interpolation stencils stay on one side of both nodes.
struct Buffer {
    values: Vec<f64>,
    offset: usize,
    breaks: [usize; 2],
}

impl Buffer {
    fn at(&self, i: usize) -> f64 {
        self.values[i - self.offset]
    }

    /// `u` at the half node `i + 1/2` by 4-point interpolation that does not
    /// straddle a break.
    fn half(&self, i: usize, newest: usize) -> f64 {
        let mut start = i.saturating_sub(1);
        for &b in &self.breaks {
            if start < b && b < start + 3 {
                start = if b <= i { b } else { b - 3 };
            }
        }
        start = start.min(newest.saturating_sub(3)).max(self.offset);
        let x = (i - start) as f64 + 0.5;
        let nodes: [f64; 4] = std::array::from_fn(|a| self.at(start + a));
        let mut sum = 0.0;
        for (a, node) in nodes.iter().enumerate() {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (x - b as f64) / (a as f64 - b as f64);
                }
            }
            sum += w * node;
        }
        sum
    }
}

impl FlowMap for MgFlow {
    fn state_len(&self) -> usize {
        self.m + 1
    }

    fn integrate(&self, state: &[f64], times: &[f64], visit: &mut dyn FnMut(usize, &[f64])) -> Result<(), ModelError> {
        if !self.is_valid(state) {
            return Err(ModelError::new(0.0, "invalid initial history"));
        }
        let m = self.m;
        let h = self.h;
        let p = &self.params;
        let mut buf = Buffer {
            values: state.to_vec(),
            offset: 0,
            breaks: [m, 2 * m],
        };
        // Index of the newest node; time t_n = (newest - m) h.
        let mut newest = m;
        for (i, &t) in times.iter().enumerate() {
            if t.is_nan() || t < 0.0 {
                return Err(ModelError::new(t, "negative output time"));
            }
            let target = m + (t / h).round() as usize;
            if target < newest {
                return Err(ModelError::new(t, "output times must be nondecreasing"));
            }
            while newest < target {
                let d = newest - m;
                let u = buf.at(newest);
                let del0 = buf.at(d);
                let del_half = buf.half(d, newest);
                let del1 = buf.at(d + 1);
                let k1 = p.rhs(u, del0);
                let k2 = p.rhs(u + 0.5 * h * k1, del_half);
                let k3 = p.rhs(u + 0.5 * h * k2, del_half);
                let k4 = p.rhs(u + h * k3, del1);
                let next = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if !next.is_finite() {
                    return Err(ModelError::non_finite((newest + 1 - m) as f64 * h));
                }
                buf.values.push(next);
                newest += 1;
                // Keep the buffer bounded on long runs.
                if buf.values.len() > 8 * (m + 1) {
                    let drop = buf.values.len() - 2 * (m + 1);
                    buf.values.drain(..drop);
                    buf.offset += drop;
                }
            }
            let lo = newest - m - buf.offset;
            visit(i, &buf.values[lo..=newest - buf.offset]);
        }
        Ok(())
    }
}

/// Delay coordinates `(u(-tau), u(-tau + T), ..., u(0))`.
#[derive(Clone, Debug)]
pub struct DelayObservation {
    k: usize,
    m: usize,
}

impl DelayObservation {
    pub fn new(params: &MgParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            k: params.k,
            m: params.history_intervals(),
        })
    }

    fn stride(&self) -> usize {
        self.m / (self.k - 1)
    }
}

impl ObservationMap for DelayObservation {
    fn dim(&self) -> usize {
        self.k
    }

    fn observe(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m + 1, state.len())?;
        Ok((0..self.k).map(|j| state[j * self.stride()]).collect())
    }
}

/// History reconstruction by not-a-knot cubic spline through the delay
/// coordinates. For `k = 3` this is the interpolating parabola and for
/// `k = 2` the line.
#[derive(Clone, Debug)]
pub struct SplineExtension {
    k: usize,
    /// `(m + 1) x k` matrix mapping node values to the history grid.
    weights: DMatrix<f64>,
}

impl SplineExtension {
    pub fn new(params: &MgParams) -> Result<Self> {
        params.validate()?;
        let k = params.k;
        let m = params.history_intervals();
        let stride = m / (k - 1);
        let mut weights = DMatrix::zeros(m + 1, k);
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let second = spline_second_derivatives(&e, 1.0)?;
            for i in 0..=m {
                let seg = (i / stride).min(k - 2);
                let s = (i - seg * stride) as f64 / stride as f64;
                weights[(i, j)] = eval_segment(&e, &second, seg, s, 1.0);
            }
        }
        Ok(Self { k, weights })
    }
}

/// Second derivatives at the nodes of the not-a-knot spline through `y`
/// with node spacing `dx`.
fn spline_second_derivatives(y: &[f64], dx: f64) -> Result<Vec<f64>> {
    let k = y.len();
    match k {
        0 | 1 => Err(Error::InvalidInput("spline needs two nodes".into())),
        2 => Ok(vec![0.0; 2]),
        3 => {
            let c = (y[2] - 2.0 * y[1] + y[0]) / (dx * dx);
            Ok(vec![c; 3])
        }
        _ => {
            let mut a = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            a[(0, 0)] = 1.0;
            a[(0, 1)] = -2.0;
            a[(0, 2)] = 1.0;
            a[(k - 1, k - 3)] = 1.0;
            a[(k - 1, k - 2)] = -2.0;
            a[(k - 1, k - 1)] = 1.0;
            for j in 1..k - 1 {
                a[(j, j - 1)] = 1.0;
                a[(j, j)] = 4.0;
                a[(j, j + 1)] = 1.0;
                b[j] = 6.0 * (y[j + 1] - 2.0 * y[j] + y[j - 1]) / (dx * dx);
            }
            let sol = a
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::InvalidInput("singular spline system".into()))?;
            Ok(sol.iter().copied().collect())
        }
    }
}

/// Spline value on segment `seg` at local coordinate `s` in `[0, 1]`.
fn eval_segment(y: &[f64], second: &[f64], seg: usize, s: f64, dx: f64) -> f64 {
    let r = 1.0 - s;
    let h2 = dx * dx / 6.0;
    second[seg] * h2 * (r * r * r - r) + second[seg + 1] * h2 * (s * s * s - s) + y[seg] * r + y[seg + 1] * s
}

impl ExtensionMap for SplineExtension {
    fn dim(&self) -> usize {
        self.k
    }

    fn extend(&self, head: &[f64], tail: Option<&[f64]>) -> Result<Vec<f64>> {
        check_len(self.k, head.len())?;
        if tail.is_some_and(|t| !t.is_empty()) {
            return Err(Error::InvalidInput("delay extension takes no tail".into()));
        }
        if head.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite delay coordinates".into()));
        }
        let x = DVector::from_column_slice(head);
        Ok((&self.weights * x).iter().copied().collect())
    }
}

/// Real root of `lambda = -gamma + beta e^{-tau lambda}` (linearization at
/// `u = 0`), found by bisection.
pub fn linear_growth_rate(params: &MgParams) -> f64 {
    let g = |l: f64| l + params.gamma - params.beta * (-params.tau * l).exp();
    let (mut lo, mut hi) = (-params.gamma, params.beta.abs() + params.gamma.abs() + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
