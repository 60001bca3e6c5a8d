//! Continuation of embedded unstable manifolds.
//!
//! A local covering of `W^u_loc(p)` is computed by subdivision inside the
//! level-`s` box around `p`. It is then globalized by repeatedly adding
//! every box hit by images of the current boxes, until no new box appears.
//!
//! Only boxes that have not been mapped yet are evaluated in each step;
//! older boxes were mapped before and their images are already present.
//! Test points come from [`sample_points`]: stored image samples first,
//! then fresh heads with tails drawn from the box statistics.

use crate::boxtree::{BoxFlags, BoxKey, BoxTree, Rect};
use crate::cds::{sample_points, stream_seed, ObservedMap};
use crate::error::{Error, Result};
use crate::subdivision::{
    map_sources, merge_hits, relative_attractor, uniform_level, StepStats, SubdivisionConfig, TestPoints,
};

/// Offset separating continuation sampling streams from subdivision ones.
const CONTINUATION_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    /// Level of the seed box.
    pub depth: u32,
    /// Subdivision steps inside the seed box.
    pub refinement: u32,
    pub test_points: TestPoints,
    /// Cap on continuation steps; `None` means `10 (depth + refinement)`.
    pub max_steps: Option<usize>,
    /// Mark boxes hit at the intermediate grid times as well.
    pub mark_time_grid: bool,
    pub seed: u64,
    /// Stored samples a box needs before its tail statistics are used.
    pub min_samples_for_stats: usize,
    pub max_stored_samples: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            depth: 8,
            refinement: 0,
            test_points: TestPoints::MonteCarlo(100),
            max_steps: None,
            mark_time_grid: false,
            seed: 0,
            min_samples_for_stats: 2,
            max_stored_samples: 256,
        }
    }
}

impl ContinuationConfig {
    pub fn level(&self) -> u32 {
        self.depth + self.refinement
    }

    pub fn step_cap(&self) -> usize {
        self.max_steps.unwrap_or(10 * self.level() as usize)
    }

    fn subdivision(&self) -> SubdivisionConfig {
        SubdivisionConfig {
            steps: self.refinement,
            test_points: self.test_points,
            seed: self.seed,
            mark_time_grid: self.mark_time_grid,
            max_stored_samples: self.max_stored_samples,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContinuationReport {
    pub steps_run: usize,
    /// Box count of `C_0, C_1, ...` (cumulative, nondecreasing).
    pub boxes_per_step: Vec<usize>,
    /// True if the last step added no box; false if the cap was reached.
    pub terminated: bool,
    pub outside_hits: u64,
    pub fallback_points: u64,
    pub evaluations: u64,
}

/// Level-`depth` boxes whose closure contains `p`. Normally one box; more
/// when `p` sits on cuts of the partition.
pub fn seed_boxes(domain: &Rect, p: &[f64], depth: u32) -> Result<Vec<BoxKey>> {
    let tree = BoxTree::new(domain.clone());
    let key = tree
        .key_at(p, depth)?
        .ok_or_else(|| Error::InvalidInput(format!("seed point {p:?} lies outside Q")))?;
    let rect = tree.rect(&key);
    let mut centers = vec![rect.center.clone()];
    for i in 0..p.len() {
        if p[i] == rect.lower(i) && rect.lower(i) > domain.lower(i) {
            let shifted: Vec<Vec<f64>> = centers
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c[i] -= 2.0 * rect.radii[i];
                    c
                })
                .collect();
            centers.extend(shifted);
        }
    }
    let mut keys = Vec::with_capacity(centers.len());
    for c in &centers {
        if let Some(k) = tree.key_at(c, depth)? {
            keys.push(k);
        }
    }
    keys.sort();
    keys.dedup();
    Ok(keys)
}

/// Covering of the local unstable manifold: subdivision of the seed
/// box(es) with zero-tail test points.
pub fn seed_local<M: ObservedMap + ?Sized>(
    phi: &M,
    domain: &Rect,
    p: &[f64],
    cfg: &ContinuationConfig,
) -> Result<BoxTree> {
    if phi.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: phi.dim(),
        });
    }
    let mut tree = BoxTree::new(domain.clone());
    for key in seed_boxes(domain, p, cfg.depth)? {
        tree.insert_key(key).flags = BoxFlags::INITIAL;
    }
    relative_attractor(&tree, phi, &cfg.subdivision())
}

/// `C_{j+1} = C_j ∪ {boxes hit from the unexpanded boxes of C_j}`.
pub fn continuation_step<M: ObservedMap + ?Sized>(
    covering: &mut BoxTree,
    phi: &M,
    cfg: &ContinuationConfig,
    step: u64,
) -> Result<StepStats> {
    cfg.test_points.validate()?;
    let level = uniform_level(covering)?;
    let frontier: Vec<BoxKey> = covering
        .iter()
        .filter(|(_, p)| !p.flags.contains(BoxFlags::EXPANDED))
        .map(|(k, _)| *k)
        .collect();
    let tail_dim = phi.tail_dim();
    let stream = CONTINUATION_STREAM + step;
    let outcomes = map_sources(
        covering,
        &frontier,
        phi,
        level,
        cfg.mark_time_grid,
        |key, rect, payload| {
            let seed = stream_seed(cfg.seed, key, stream);
            match cfg.test_points {
                TestPoints::MonteCarlo(n) => {
                    let s = sample_points(rect, payload, n, tail_dim, cfg.min_samples_for_stats, seed);
                    (s.points, s.zero_tail_fallbacks as u64)
                }
                grid => (grid.plain(rect, tail_dim, seed), 0),
            }
        },
    )?;
    for key in &frontier {
        if let Some(p) = covering.get_mut(key) {
            p.flags |= BoxFlags::EXPANDED;
        }
    }
    let mut stats = StepStats {
        step,
        level,
        ..StepStats::default()
    };
    stats.new_boxes = merge_hits(covering, outcomes, true, cfg.max_stored_samples, &mut stats);
    stats.boxes = covering.len();
    Ok(stats)
}

/// Seeds at `p` and continues until no new boxes appear or the step cap is
/// reached.
pub fn continue_manifold<M: ObservedMap + ?Sized>(
    phi: &M,
    domain: &Rect,
    p: &[f64],
    cfg: &ContinuationConfig,
) -> Result<(BoxTree, ContinuationReport)> {
    continue_manifold_with(phi, domain, p, cfg, &mut |_, _| {})
}

/// As [`continue_manifold`], calling `observer` after each continuation step.
pub fn continue_manifold_with<M: ObservedMap + ?Sized>(
    phi: &M,
    domain: &Rect,
    p: &[f64],
    cfg: &ContinuationConfig,
    observer: &mut dyn FnMut(&BoxTree, &StepStats),
) -> Result<(BoxTree, ContinuationReport)> {
    let mut covering = seed_local(phi, domain, p, cfg)?;
    let mut report = ContinuationReport {
        boxes_per_step: vec![covering.len()],
        ..ContinuationReport::default()
    };
    for step in 0..cfg.step_cap() {
        let stats = continuation_step(&mut covering, phi, cfg, step as u64)?;
        report.steps_run += 1;
        report.boxes_per_step.push(stats.boxes);
        report.outside_hits += stats.outside_hits;
        report.fallback_points += stats.fallback_points;
        report.evaluations += stats.evaluations;
        observer(&covering, &stats);
        if stats.new_boxes == 0 {
            report.terminated = true;
            break;
        }
    }
    Ok((covering, report))
}
