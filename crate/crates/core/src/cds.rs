//! The core dynamical system `phi = R ∘ Phi ∘ E` on observation space.
//!
//! A model contributes a time-`T` [`FlowMap`] on its (discretized) state
//! space, an [`ObservationMap`] `R` onto `R^k` and an [`ExtensionMap`] `E`
//! back into state space with `R(E(x)) = x`. [`CoreDynamicalSystem`] glues
//! the three together and exposes the [`ObservedMap`] interface consumed by
//! the subdivision and continuation algorithms.
//!
//! POD observation spaces keep `S > k` modes. The coefficients of modes
//! `k+1..S` of every image point (the "tail") are handed back to the caller
//! so that boxes can accumulate them and later draw statistically plausible
//! initial functions via [`sample_points`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::boxtree::{BoxKey, BoxPayload, Rect, StoredSample};
use crate::error::{check_len, Error, ModelError, Result};
use crate::pod::PodBasis;

/// Time-`T` evolution of a discretized infinite-dimensional model.
pub trait FlowMap: Sync {
    /// Length of the state vector.
    fn state_len(&self) -> usize;

    /// Integrates `state` forward from `t = 0` and calls `visit(i, u)` with
    /// the state at each of the nondecreasing `times`.
    fn integrate(&self, state: &[f64], times: &[f64], visit: &mut dyn FnMut(usize, &[f64])) -> Result<(), ModelError>;

    fn is_valid(&self, state: &[f64]) -> bool {
        state.len() == self.state_len() && state.iter().all(|v| v.is_finite())
    }

    fn trajectory(&self, state: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut out = Vec::with_capacity(times.len());
        self.integrate(state, times, &mut |_, u| out.push(u.to_vec()))?;
        Ok(out)
    }
}

/// `R`: model state to observation coordinates.
pub trait ObservationMap: Sync {
    /// Embedding dimension `k`.
    fn dim(&self) -> usize;

    /// Number of auxiliary coefficients reported by [`observe_tail`](Self::observe_tail).
    fn tail_dim(&self) -> usize {
        0
    }

    fn observe(&self, state: &[f64]) -> Result<Vec<f64>>;

    fn observe_tail(&self, _state: &[f64]) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// `E`: observation coordinates (plus optional tail) to a model state.
pub trait ExtensionMap: Sync {
    fn dim(&self) -> usize;

    /// Length of the tail this extension consumes; 0 if it takes none.
    fn tail_dim(&self) -> usize {
        0
    }

    fn extend(&self, head: &[f64], tail: Option<&[f64]>) -> Result<Vec<f64>>;
}

/// Result of one evaluation of `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub image: Vec<f64>,
    pub tail: Vec<f64>,
    /// Observed states at the intermediate grid times `t_1 .. t_{N-1}`.
    pub path: Vec<StoredSample>,
}

/// A continuous self-map of observation space, as seen by the covering
/// algorithms.
pub trait ObservedMap: Sync {
    fn dim(&self) -> usize;

    fn tail_dim(&self) -> usize {
        0
    }

    /// Evaluates the map at `(head, tail)`. With `time_grid` set, the
    /// observed intermediate states are returned as well.
    fn evaluate(&self, head: &[f64], tail: &[f64], time_grid: bool) -> Result<Evaluation, ModelError>;
}

/// A closed-form map of `R^k`, used for toy systems and oracles.
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ObservedMap for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, head: &[f64], _tail: &[f64], _time_grid: bool) -> Result<Evaluation, ModelError> {
        let image = (self.f)(head);
        if image.len() != self.dim || image.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::new(1.0, format!("invalid image {image:?}")));
        }
        Ok(Evaluation {
            image,
            tail: Vec::new(),
            path: Vec::new(),
        })
    }
}

/// Projection onto the first `k` POD modes.
#[derive(Clone, Debug)]
pub struct PodObservation {
    basis: Arc<PodBasis>,
    k: usize,
}

impl PodObservation {
    pub fn new(basis: Arc<PodBasis>, k: usize) -> Result<Self> {
        if k == 0 || k > basis.len() {
            return Err(Error::InvalidInput(format!(
                "embedding dimension {k} must lie in 1..={}",
                basis.len()
            )));
        }
        Ok(Self { basis, k })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }
}

impl ObservationMap for PodObservation {
    fn dim(&self) -> usize {
        self.k
    }

    fn tail_dim(&self) -> usize {
        self.basis.len() - self.k
    }

    fn observe(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len(self.basis.grid.n, state.len())?;
        Ok(self.basis.project_range(state, 0..self.k))
    }

    fn observe_tail(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len(self.basis.grid.n, state.len())?;
        Ok(self.basis.project_range(state, self.k..self.basis.len()))
    }
}

/// How an extension fills the coefficients of modes `k+1..S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailPolicy {
    /// Plain truncation `E(x) = sum_{i<=k} x_i Psi_i`.
    Zero,
    /// Caller-supplied tail coefficients for modes `k+1..S`.
    Statistical,
}

#[derive(Clone, Debug)]
pub struct PodExtension {
    basis: Arc<PodBasis>,
    k: usize,
    policy: TailPolicy,
}

impl PodExtension {
    pub fn new(basis: Arc<PodBasis>, k: usize, policy: TailPolicy) -> Result<Self> {
        if k == 0 || k > basis.len() {
            return Err(Error::InvalidInput(format!(
                "embedding dimension {k} must lie in 1..={}",
                basis.len()
            )));
        }
        Ok(Self { basis, k, policy })
    }

    pub fn policy(&self) -> TailPolicy {
        self.policy
    }
}

impl ExtensionMap for PodExtension {
    fn dim(&self) -> usize {
        self.k
    }

    fn tail_dim(&self) -> usize {
        match self.policy {
            TailPolicy::Zero => 0,
            TailPolicy::Statistical => self.basis.len() - self.k,
        }
    }

    fn extend(&self, head: &[f64], tail: Option<&[f64]>) -> Result<Vec<f64>> {
        check_len(self.k, head.len())?;
        match (self.policy, tail) {
            (TailPolicy::Zero, None) => self.basis.synthesize(head),
            (TailPolicy::Statistical, Some(tail)) => {
                check_len(self.basis.len() - self.k, tail.len())?;
                let coeffs: Vec<f64> = head.iter().chain(tail).copied().collect();
                self.basis.synthesize(&coeffs)
            }
            (TailPolicy::Zero, Some(_)) => Err(Error::InvalidInput(
                "zero-tail extension does not take tail coefficients".into(),
            )),
            (TailPolicy::Statistical, None) => Err(Error::InvalidInput(
                "statistical extension requires tail coefficients".into(),
            )),
        }
    }
}

/// Uniform time grid `t_i = i T / N`, `i = 1..N`.
pub fn time_grid(horizon: f64, size: usize) -> Vec<f64> {
    let size = size.max(1);
    let mut times: Vec<f64> = (1..=size).map(|i| horizon * i as f64 / size as f64).collect();
    times[size - 1] = horizon;
    times
}

/// `phi = R ∘ Phi_T ∘ E`.
pub struct CoreDynamicalSystem<F, R, E> {
    pub flow: F,
    pub observation: R,
    pub extension: E,
    /// Horizon `T` of the time-`T` map.
    pub horizon: f64,
    /// Number `N` of grid times in `(0, T]` observed when time-grid marking.
    pub grid_size: usize,
}

impl<F, R, E> CoreDynamicalSystem<F, R, E>
where
    F: FlowMap,
    R: ObservationMap,
    E: ExtensionMap,
{
    pub fn new(flow: F, observation: R, extension: E, horizon: f64, grid_size: usize) -> Result<Self> {
        if observation.dim() != extension.dim() {
            return Err(Error::DimensionMismatch {
                expected: observation.dim(),
                found: extension.dim(),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be > 0")));
        }
        if grid_size == 0 {
            return Err(Error::InvalidInput("time grid needs at least one point".into()));
        }
        Ok(Self {
            flow,
            observation,
            extension,
            horizon,
            grid_size,
        })
    }

    /// The model state `E(x, tail)`.
    pub fn extend(&self, head: &[f64], tail: &[f64]) -> Result<Vec<f64>> {
        if self.extension.tail_dim() > 0 {
            self.extension.extend(head, Some(tail))
        } else {
            self.extension.extend(head, None)
        }
    }

    /// Observed trajectory of the model started from `E(x, tail)`.
    pub fn observed_trajectory(&self, head: &[f64], tail: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let state = self.extend(head, tail)?;
        let mut out = Vec::with_capacity(times.len());
        let mut failure = None;
        self.flow
            .integrate(&state, times, &mut |_, u| match self.observation.observe(u) {
                Ok(x) => out.push(x),
                Err(e) => failure = Some(e),
            })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

impl<F, R, E> ObservedMap for CoreDynamicalSystem<F, R, E>
where
    F: FlowMap,
    R: ObservationMap,
    E: ExtensionMap,
{
    fn dim(&self) -> usize {
        self.observation.dim()
    }

    fn tail_dim(&self) -> usize {
        self.observation.tail_dim()
    }

    fn evaluate(&self, head: &[f64], tail: &[f64], with_grid: bool) -> Result<Evaluation, ModelError> {
        let state = self
            .extend(head, tail)
            .map_err(|e| ModelError::new(0.0, format!("extension failed: {e}")))?;
        if !self.flow.is_valid(&state) {
            return Err(ModelError::new(0.0, "extension produced an invalid state"));
        }
        let times = if with_grid {
            time_grid(self.horizon, self.grid_size)
        } else {
            vec![self.horizon]
        };
        let last = times.len() - 1;
        let mut image = Vec::new();
        let mut image_tail = Vec::new();
        let mut path = Vec::with_capacity(last);
        let mut failure = None;
        self.flow.integrate(&state, &times, &mut |i, u| {
            let observed = self
                .observation
                .observe(u)
                .and_then(|h| Ok((h, self.observation.observe_tail(u)?)));
            match observed {
                Ok((h, t)) if i == last => {
                    image = h;
                    image_tail = t;
                }
                Ok((head, tail)) => path.push(StoredSample { head, tail }),
                Err(e) => failure = Some(ModelError::new(times[i], e.to_string())),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        if image.iter().chain(&image_tail).any(|v| !v.is_finite()) {
            return Err(ModelError::non_finite(self.horizon));
        }
        Ok(Evaluation {
            image,
            tail: image_tail,
            path,
        })
    }
}

/// Componentwise mean and (population) variance of stored tail samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TailStatistics {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: usize,
}

impl TailStatistics {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a StoredSample>) -> Option<Self> {
        let mut count = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        let mut m2: Vec<f64> = Vec::new();
        // Welford's update, one coordinate at a time.
        for sample in samples {
            if count == 0 {
                mean = vec![0.0; sample.tail.len()];
                m2 = vec![0.0; sample.tail.len()];
            }
            count += 1;
            for ((m, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&sample.tail) {
                let delta = x - *m;
                *m += delta / count as f64;
                *s += delta * (x - *m);
            }
        }
        (count > 0).then(|| Self {
            variance: m2.iter().map(|s| (s / count as f64).max(0.0)).collect(),
            mean,
            count,
        })
    }
}

/// A test point: observation coordinates plus tail coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TestPoint {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledPoints {
    pub points: Vec<TestPoint>,
    /// Fresh points that received zero tails for lack of statistics.
    pub zero_tail_fallbacks: usize,
    /// Stored samples available in the box.
    pub stored: usize,
}

/// Test points for a box: its stored image points first (at most `n`),
/// then uniform heads whose tails are drawn from `N(mu_i, sigma_i^2)` of
/// the stored tails. Boxes with fewer than `min_samples_for_stats` stored
/// samples give fresh points zero tails.
pub fn sample_points(
    rect: &Rect,
    payload: &BoxPayload,
    n: usize,
    tail_dim: usize,
    min_samples_for_stats: usize,
    seed: u64,
) -> SampledPoints {
    let inside: Vec<&StoredSample> = payload
        .samples
        .iter()
        .filter(|s| s.tail.len() == tail_dim && rect.contains(&s.head))
        .collect();
    let mut points: Vec<TestPoint> = inside
        .iter()
        .take(n)
        .map(|s| TestPoint {
            head: s.head.clone(),
            tail: s.tail.clone(),
        })
        .collect();
    let mut out = SampledPoints {
        stored: inside.len(),
        ..SampledPoints::default()
    };
    let fresh = n.saturating_sub(points.len());
    if fresh == 0 {
        out.points = points;
        return out;
    }
    let stats = (inside.len() >= min_samples_for_stats.max(1))
        .then(|| TailStatistics::from_samples(inside.iter().copied()))
        .flatten();
    let normals: Option<Vec<Normal<f64>>> = stats.as_ref().map(|st| {
        st.mean
            .iter()
            .zip(&st.variance)
            .map(|(m, v)| Normal::new(*m, v.sqrt()).expect("finite tail statistics"))
            .collect()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..fresh {
        let head = uniform_in(rect, &mut rng);
        let tail = match &normals {
            Some(dists) => dists.iter().map(|d| d.sample(&mut rng)).collect(),
            None => {
                if tail_dim > 0 {
                    out.zero_tail_fallbacks += 1;
                }
                vec![0.0; tail_dim]
            }
        };
        points.push(TestPoint { head, tail });
    }
    out.points = points;
    out
}

pub(crate) fn uniform_in(rect: &Rect, rng: &mut impl Rng) -> Vec<f64> {
    rect.center
        .iter()
        .zip(&rect.radii)
        .map(|(c, r)| c + r * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Uniform `n`-per-dimension grid of cell midpoints inside `rect`.
pub fn grid_points(rect: &Rect, per_dim: usize) -> Vec<Vec<f64>> {
    let k = rect.dim();
    let total = per_dim.pow(k as u32);
    (0..total)
        .map(|mut index| {
            (0..k)
                .map(|i| {
                    let j = index % per_dim;
                    index /= per_dim;
                    let offset = (2.0 * j as f64 + 1.0) / per_dim as f64 - 1.0;
                    rect.center[i] + rect.radii[i] * offset
                })
                .collect()
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the random stream of one box in one algorithm step.
pub fn stream_seed(base: u64, key: &BoxKey, step: u64) -> u64 {
    let parts = [key.level() as u64, key.path() as u64, (key.path() >> 64) as u64, step];
    parts.iter().fold(splitmix(base), |acc, p| splitmix(acc ^ splitmix(*p)))
}
