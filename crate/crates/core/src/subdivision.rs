//! Subdivision algorithm for relative global attractors.
//!
//! Each step bisects every box and keeps a child `B` only if some test point
//! of some child lands in `B` under `phi`. Starting from `Q` this converges
//! to a covering of `A_Q = ⋂ phi^j(Q)`.
//!
//! Selection is done forward (image test) since `phi` is not invertible in
//! general. Test points are drawn per `(box, step)` from independent seeded
//! streams, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boxtree::{BoxFlags, BoxKey, BoxPayload, BoxTree, Rect, StoredSample};
use crate::cds::{grid_points, stream_seed, uniform_in, ObservedMap, TestPoint};
use crate::error::{Error, Result};

/// How test points are placed in a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestPoints {
    /// `n` uniform random points per box.
    MonteCarlo(usize),
    /// A tensor grid with `n` cell midpoints per dimension.
    Grid(usize),
}

impl TestPoints {
    pub fn per_box(&self, dim: usize) -> usize {
        match *self {
            TestPoints::MonteCarlo(n) => n,
            TestPoints::Grid(n) => n.pow(dim as u32),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            TestPoints::MonteCarlo(0) | TestPoints::Grid(0) => Err(Error::InvalidInput(
                "at least one test point per box is required".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Heads with zero tails.
    pub(crate) fn plain(&self, rect: &Rect, tail_dim: usize, seed: u64) -> Vec<TestPoint> {
        let heads: Vec<Vec<f64>> = match *self {
            TestPoints::MonteCarlo(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| uniform_in(rect, &mut rng)).collect()
            }
            TestPoints::Grid(n) => grid_points(rect, n),
        };
        heads
            .into_iter()
            .map(|head| TestPoint {
                head,
                tail: vec![0.0; tail_dim],
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubdivisionConfig {
    pub steps: u32,
    pub test_points: TestPoints,
    pub seed: u64,
    /// Also select boxes hit at the intermediate grid times.
    pub mark_time_grid: bool,
    /// Stored image samples kept per box.
    pub max_stored_samples: usize,
}

impl Default for SubdivisionConfig {
    fn default() -> Self {
        Self {
            steps: 0,
            test_points: TestPoints::MonteCarlo(100),
            seed: 0,
            mark_time_grid: false,
            max_stored_samples: 256,
        }
    }
}

/// Counters for one subdivision or continuation step.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub level: u32,
    pub boxes: usize,
    pub new_boxes: usize,
    pub evaluations: u64,
    pub outside_hits: u64,
    pub fallback_points: u64,
}

pub(crate) struct Hit {
    pub target: BoxKey,
    pub sample: Option<StoredSample>,
}

#[derive(Default)]
pub(crate) struct Outcome {
    pub hits: Vec<Hit>,
    pub outside: u64,
    pub evaluations: u64,
    pub fallbacks: u64,
}

/// Maps the test points of every source box and locates the images at
/// `level`. Order of the result follows `sources`.
pub(crate) fn map_sources<M, P>(
    tree: &BoxTree,
    sources: &[BoxKey],
    phi: &M,
    level: u32,
    time_grid: bool,
    points: P,
) -> Result<Vec<Outcome>>
where
    M: ObservedMap + ?Sized,
    P: Fn(&BoxKey, &Rect, &BoxPayload) -> (Vec<TestPoint>, u64) + Sync,
{
    let keep = phi.tail_dim() > 0;
    sources
        .par_iter()
        .map(|key| {
            let rect = tree.rect(key);
            let empty = BoxPayload::default();
            let payload = tree.get(key).unwrap_or(&empty);
            let (pts, fallbacks) = points(key, &rect, payload);
            let mut out = Outcome {
                fallbacks,
                ..Outcome::default()
            };
            for p in pts {
                let eval = phi
                    .evaluate(&p.head, &p.tail, time_grid)
                    .map_err(|source| Error::Evaluation {
                        key: *key,
                        point: p.head.clone(),
                        source,
                    })?;
                out.evaluations += 1;
                let finals = std::iter::once(StoredSample {
                    head: eval.image,
                    tail: eval.tail,
                });
                for sample in eval.path.into_iter().chain(finals) {
                    match tree.key_at(&sample.head, level)? {
                        Some(target) => out.hits.push(Hit {
                            target,
                            sample: keep.then_some(sample),
                        }),
                        None => out.outside += 1,
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Applies hits in source order. Unknown targets are inserted when
/// `insert_new` is set and ignored otherwise. Returns the number of boxes
/// inserted.
pub(crate) fn merge_hits(
    tree: &mut BoxTree,
    outcomes: Vec<Outcome>,
    insert_new: bool,
    max_stored: usize,
    stats: &mut StepStats,
) -> usize {
    let mut inserted = 0;
    for outcome in outcomes {
        stats.evaluations += outcome.evaluations;
        stats.outside_hits += outcome.outside;
        stats.fallback_points += outcome.fallbacks;
        for hit in outcome.hits {
            let payload = match tree.get_mut(&hit.target) {
                Some(p) => p,
                None if insert_new => {
                    inserted += 1;
                    tree.insert_key(hit.target)
                }
                None => continue,
            };
            payload.flags |= BoxFlags::HIT;
            payload.hit_count += 1;
            if let Some(sample) = hit.sample {
                if payload.samples.len() < max_stored {
                    payload.samples.push(sample);
                }
            }
        }
    }
    inserted
}

/// The common level of all occupied boxes.
pub(crate) fn uniform_level(tree: &BoxTree) -> Result<u32> {
    match tree.levels().as_slice() {
        [] => Err(Error::EmptyCovering("no occupied boxes".into())),
        [level] => Ok(*level),
        levels => Err(Error::InvalidInput(format!("covering mixes levels {levels:?}"))),
    }
}

/// One bisection followed by selection.
pub fn subdivision_step<M: ObservedMap + ?Sized>(
    tree: &BoxTree,
    phi: &M,
    cfg: &SubdivisionConfig,
    step: u64,
) -> Result<(BoxTree, StepStats)> {
    cfg.test_points.validate()?;
    if phi.dim() != tree.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim(),
            found: phi.dim(),
        });
    }
    let level = uniform_level(tree)? + 1;
    let mut children = tree.subdivide_all(1);
    children.retain(|_, p| {
        p.flags.remove(BoxFlags::HIT);
        p.hit_count = 0;
        true
    });
    let sources: Vec<BoxKey> = children.keys().copied().collect();
    let tail_dim = phi.tail_dim();
    let outcomes = map_sources(&children, &sources, phi, level, cfg.mark_time_grid, |key, rect, _| {
        let seed = stream_seed(cfg.seed, key, step);
        (cfg.test_points.plain(rect, tail_dim, seed), 0)
    })?;
    let mut stats = StepStats {
        step,
        level,
        ..StepStats::default()
    };
    // Targets outside the current children are not part of the covering.
    merge_hits(&mut children, outcomes, false, cfg.max_stored_samples, &mut stats);
    children.retain(|_, p| {
        if p.flags.contains(BoxFlags::HIT) {
            p.flags |= BoxFlags::RETAINED;
            true
        } else {
            false
        }
    });
    if children.is_empty() {
        return Err(Error::EmptyCovering(format!(
            "selection at level {level} retained no boxes; increase the test points per box"
        )));
    }
    stats.boxes = children.len();
    Ok((children, stats))
}

/// `cfg.steps` subdivision steps starting from the occupied boxes of `tree`.
pub fn relative_attractor<M: ObservedMap + ?Sized>(
    tree: &BoxTree,
    phi: &M,
    cfg: &SubdivisionConfig,
) -> Result<BoxTree> {
    relative_attractor_with(tree, phi, cfg, &mut |_, _| {})
}

/// As [`relative_attractor`], calling `observer` after each step.
pub fn relative_attractor_with<M: ObservedMap + ?Sized>(
    tree: &BoxTree,
    phi: &M,
    cfg: &SubdivisionConfig,
    observer: &mut dyn FnMut(&BoxTree, &StepStats),
) -> Result<BoxTree> {
    if tree.is_empty() {
        return Err(Error::EmptyCovering("subdivision needs occupied boxes".into()));
    }
    let mut current = tree.clone();
    for step in 0..cfg.steps {
        let (next, stats) = subdivision_step(&current, phi, cfg, step as u64)?;
        observer(&next, &stats);
        current = next;
    }
    Ok(current)
}
