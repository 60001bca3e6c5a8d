//! Covering diagnostics: box-counting dimension, embedding-dimension bound
//! and distances between coverings and reference point sets.

use std::collections::BTreeSet;

use crate::boxtree::{BoxTree, Rect};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimensionEstimate {
    pub dimension: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// `(-ln eps, ln N)` pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `ln N` against `-ln eps`, with `eps` the box
/// diameter at each level. Needs at least three levels spanning two full
/// bisection cycles.
pub fn box_counting_estimate(root: &Rect, counts: &[(u32, usize)]) -> Result<DimensionEstimate> {
    let k = root.dim() as u32;
    let levels: BTreeSet<u32> = counts.iter().map(|(l, _)| *l).collect();
    if levels.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 distinct levels, got {}",
            levels.len()
        )));
    }
    let span = levels.last().unwrap() - levels.first().unwrap();
    if span < 2 * k {
        return Err(Error::DegenerateFit(format!(
            "levels span {span} < two bisection cycles ({})",
            2 * k
        )));
    }
    if counts.iter().any(|(_, n)| *n == 0) {
        return Err(Error::DegenerateFit("a level has no boxes".into()));
    }
    let tree = BoxTree::new(root.clone());
    let points: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(level, n)| {
            let diam = 2.0 * tree.radii_at(level).iter().map(|r| r * r).sum::<f64>().sqrt();
            (-diam.ln(), (n as f64).ln())
        })
        .collect();
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DimensionEstimate {
        dimension: slope,
        residual,
        points,
    })
}

/// Box counts of `tree` coarsened to each of `levels` (each at most the
/// shallowest level present).
pub fn coarsened_counts(tree: &BoxTree, levels: &[u32]) -> Vec<(u32, usize)> {
    levels
        .iter()
        .map(|&level| {
            let n = tree
                .keys()
                .filter_map(|k| k.ancestor(level))
                .collect::<BTreeSet<_>>()
                .len();
            (level, n)
        })
        .collect()
}

/// Smallest integer `k > 2 (1 + d) d`.
pub fn worst_case_embedding_dim(d: f64) -> Result<usize> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!("dimension {d} must be finite and >= 0")));
    }
    Ok((2.0 * (1.0 + d) * d).floor() as usize + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoveringDistance {
    /// `max_{y in reference} dist(y, covering)`.
    pub reference_to_covering: f64,
    /// `max_{corner of a box} dist(corner, reference)`.
    pub covering_to_reference: f64,
}

/// Directed distances between the union of boxes and a point set. For a
/// box, the largest distance to the reference is taken over its corners,
/// which is exact when the reference is convex.
pub fn covering_distance(covering: &BoxTree, reference: &[Vec<f64>]) -> Result<CoveringDistance> {
    if covering.is_empty() {
        return Err(Error::EmptyCovering("covering distance of an empty covering".into()));
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty reference set".into()));
    }
    let k = covering.dim();
    if let Some(bad) = reference.iter().find(|y| y.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad.len(),
        });
    }
    let rects: Vec<Rect> = covering.rects().collect();
    let levels = covering.levels();
    let reference_to_covering = reference
        .iter()
        .map(|y| {
            if levels.iter().any(|&l| covering.occupied_key_at(y, l).is_some()) {
                0.0
            } else {
                rects.iter().map(|r| r.distance_to(y)).fold(f64::INFINITY, f64::min)
            }
        })
        .fold(0.0, f64::max);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let covering_to_reference = rects
        .iter()
        .flat_map(|r| r.corners().collect::<Vec<_>>())
        .map(|c| reference.iter().map(|y| dist(&c, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(CoveringDistance {
        reference_to_covering,
        covering_to_reference,
    })
}
