//! Nested binary partitions of a generalized rectangle.
//!
//! The partition `P_s` of the root rectangle `Q` is generated by cyclic
//! bisection: the cut at depth `d` halves coordinate `d mod k`. A box of
//! `P_s` is addressed by its [`BoxKey`], the sequence of left/right choices
//! taken from the root. Only occupied boxes are materialized; their payloads
//! live in an ordered map so iteration (and therefore file output) is
//! deterministic.
//!
//! Membership is half-open: a coordinate lying exactly on an internal cut
//! belongs to the child with larger coordinates. The outer boundary of `Q`
//! belongs to `Q`.

mod format;

use std::collections::BTreeMap;
use std::fmt;

use bitflags::bitflags;

use crate::error::{check_len, Error, Result};

pub use format::{read_covering, write_covering};

/// Deepest level a [`BoxKey`] can address.
pub const MAX_LEVEL: u32 = 128;

/// Address of a box in the partition family: `level` bisection choices,
/// most significant bit first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxKey {
    level: u8,
    path: u128,
}

impl BoxKey {
    pub const ROOT: BoxKey = BoxKey { level: 0, path: 0 };

    /// Builds a key from its raw bit path. Bits above `level` must be zero.
    pub fn from_path(level: u32, path: u128) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds maximum {MAX_LEVEL}"
            )));
        }
        if level < MAX_LEVEL && path >> level != 0 {
            return Err(Error::InvalidInput(format!(
                "path {path:#x} has bits beyond level {level}"
            )));
        }
        Ok(Self {
            level: level as u8,
            path,
        })
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    pub fn path(&self) -> u128 {
        self.path
    }

    /// Choice taken at `depth` (0 = first cut): `true` for the upper child.
    pub fn bit(&self, depth: u32) -> bool {
        debug_assert!(depth < self.level());
        (self.path >> (self.level() - 1 - depth)) & 1 == 1
    }

    pub fn child(&self, upper: bool) -> BoxKey {
        assert!(self.level() < MAX_LEVEL, "box key overflow");
        BoxKey {
            level: self.level + 1,
            path: (self.path << 1) | upper as u128,
        }
    }

    pub fn parent(&self) -> Option<BoxKey> {
        (self.level > 0).then(|| BoxKey {
            level: self.level - 1,
            path: self.path >> 1,
        })
    }

    /// The ancestor at `level`, or `None` if `level` is deeper than `self`.
    pub fn ancestor(&self, level: u32) -> Option<BoxKey> {
        (level <= self.level()).then(|| BoxKey {
            level: level as u8,
            path: if level == 0 {
                0
            } else {
                self.path >> (self.level() - level)
            },
        })
    }

    pub fn is_ancestor_of(&self, other: &BoxKey) -> bool {
        other.ancestor(self.level()) == Some(*self)
    }

    /// All descendants `steps` levels below, in key order.
    pub fn descendants(&self, steps: u32) -> impl Iterator<Item = BoxKey> {
        assert!(self.level() + steps <= MAX_LEVEL, "box key overflow");
        let base = self.path << steps;
        let level = (self.level() + steps) as u8;
        (0..1u128 << steps).map(move |offset| BoxKey {
            level,
            path: base | offset,
        })
    }
}

impl fmt::Display for BoxKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            return f.write_str("<root>");
        }
        for depth in 0..self.level() {
            f.write_str(if self.bit(depth) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BoxKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoxKey({self})")
    }
}

/// Axis-aligned generalized rectangle `{ y : |y_i - c_i| <= r_i }`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub level: u32,
}

impl Rect {
    pub fn new(center: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        check_len(center.len(), radii.len())?;
        if center.is_empty() {
            return Err(Error::InvalidInput("rectangle of dimension 0".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite rectangle center".into()));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput("rectangle radii must be finite and > 0".into()));
        }
        Ok(Self {
            center,
            radii,
            level: 0,
        })
    }

    /// The cube `[-r, r]^k` around `center`.
    pub fn cube(center: Vec<f64>, radius: f64) -> Result<Self> {
        let radii = vec![radius; center.len()];
        Self::new(center, radii)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.center.iter().zip(&self.radii))
            .all(|(xi, (c, r))| (xi - c).abs() <= *r)
    }

    /// Euclidean diameter, `2 * |radii|_2`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radii.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.radii.iter().map(|r| 2.0 * r).product()
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.center[i] - self.radii[i]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.center[i] + self.radii[i]
    }

    /// Euclidean distance from `x` to the closed box (0 inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.center.iter().zip(&self.radii))
            .map(|(xi, (c, r))| {
                let excess = ((xi - c).abs() - r).max(0.0);
                excess * excess
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The `2^k` vertices, in binary counting order over dimensions.
    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let k = self.dim();
        (0..1usize << k).map(move |mask| {
            (0..k)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        self.upper(i)
                    } else {
                        self.lower(i)
                    }
                })
                .collect()
        })
    }

    /// Same rectangle with every radius scaled by `factor`.
    pub fn inflated(&self, factor: f64) -> Rect {
        Rect {
            center: self.center.clone(),
            radii: self.radii.iter().map(|r| r * factor).collect(),
            level: self.level,
        }
    }
}

bitflags! {
    /// Provenance markers carried by every occupied box.
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
    pub struct BoxFlags: u8 {
        /// Marked as the target of an image point.
        const HIT = 0b0001;
        /// Survived a subdivision selection step.
        const RETAINED = 0b0010;
        /// Part of the seed covering of a continuation run.
        const INITIAL = 0b0100;
        /// Test points of this box have been mapped forward.
        const EXPANDED = 0b1000;
    }
}

/// An image point deposited into its target box: the observation-space
/// coordinates and the coefficients of the remaining basis modes.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredSample {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoxPayload {
    pub flags: BoxFlags,
    pub samples: Vec<StoredSample>,
    pub hit_count: u64,
}

/// The occupied part of the partition family of a root rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxTree {
    root: Rect,
    boxes: BTreeMap<BoxKey, BoxPayload>,
}

/// A box collection produced by one of the covering algorithms.
pub type Covering = BoxTree;

impl BoxTree {
    /// An empty tree over `root`.
    pub fn new(root: Rect) -> Self {
        let root = Rect { level: 0, ..root };
        Self {
            root,
            boxes: BTreeMap::new(),
        }
    }

    /// A tree whose only occupied box is the root itself.
    pub fn with_root_occupied(root: Rect) -> Self {
        let mut tree = Self::new(root);
        tree.boxes.insert(BoxKey::ROOT, BoxPayload::default());
        tree
    }

    pub fn root(&self) -> &Rect {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Radii of every box at `level`: coordinate `i` has been cut
    /// `floor((level + k - 1 - i) / k)` times.
    pub fn radii_at(&self, level: u32) -> Vec<f64> {
        let k = self.dim() as u32;
        self.root
            .radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cuts = (level + k - 1 - i as u32) / k;
                r * 0.5f64.powi(cuts as i32)
            })
            .collect()
    }

    /// Geometric box addressed by `key`.
    pub fn rect(&self, key: &BoxKey) -> Rect {
        let k = self.dim();
        let mut center = self.root.center.clone();
        let mut radii = self.root.radii.clone();
        for depth in 0..key.level() {
            let dim = depth as usize % k;
            radii[dim] *= 0.5;
            if key.bit(depth) {
                center[dim] += radii[dim];
            } else {
                center[dim] -= radii[dim];
            }
        }
        Rect {
            center,
            radii,
            level: key.level(),
        }
    }

    /// Key of the level-`level` box of the partition containing `x`, or
    /// `None` if `x` lies outside the root.
    pub fn key_at(&self, x: &[f64], level: u32) -> Result<Option<BoxKey>> {
        check_len(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point {x:?}")));
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds maximum {MAX_LEVEL}"
            )));
        }
        Ok(self.locate(x, level))
    }

    // Assumes `x` has the right length and finite entries.
    fn locate(&self, x: &[f64], level: u32) -> Option<BoxKey> {
        if !self.root.contains(x) {
            return None;
        }
        let k = self.dim();
        let mut center = self.root.center.clone();
        let mut radii = self.root.radii.clone();
        let mut path = 0u128;
        for depth in 0..level {
            let dim = depth as usize % k;
            radii[dim] *= 0.5;
            let upper = x[dim] >= center[dim];
            if upper {
                center[dim] += radii[dim];
            } else {
                center[dim] -= radii[dim];
            }
            path = (path << 1) | upper as u128;
        }
        Some(BoxKey {
            level: level as u8,
            path,
        })
    }

    /// Marks the level-`level` box containing `x` as occupied and applies
    /// `update` to its payload. Returns `Ok(None)` (tree unchanged) when `x`
    /// lies outside the root.
    pub fn insert_point(
        &mut self,
        x: &[f64],
        level: u32,
        update: impl FnOnce(&mut BoxPayload),
    ) -> Result<Option<BoxKey>> {
        let Some(key) = self.key_at(x, level)? else {
            return Ok(None);
        };
        update(self.boxes.entry(key).or_default());
        Ok(Some(key))
    }

    /// Occupies `key` (if not yet) and returns its payload.
    pub fn insert_key(&mut self, key: BoxKey) -> &mut BoxPayload {
        self.boxes.entry(key).or_default()
    }

    pub fn remove(&mut self, key: &BoxKey) -> Option<BoxPayload> {
        self.boxes.remove(key)
    }

    /// The occupied box containing `x` at `level`, if any.
    pub fn box_at(&self, x: &[f64], level: u32) -> Option<Rect> {
        self.occupied_key_at(x, level).map(|key| self.rect(&key))
    }

    pub fn occupied_key_at(&self, x: &[f64], level: u32) -> Option<BoxKey> {
        if x.len() != self.dim() || level > MAX_LEVEL || x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        self.locate(x, level).filter(|key| self.boxes.contains_key(key))
    }

    pub fn contains_key(&self, key: &BoxKey) -> bool {
        self.boxes.contains_key(key)
    }

    pub fn get(&self, key: &BoxKey) -> Option<&BoxPayload> {
        self.boxes.get(key)
    }

    pub fn get_mut(&mut self, key: &BoxKey) -> Option<&mut BoxPayload> {
        self.boxes.get_mut(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BoxKey, &BoxPayload)> {
        self.boxes.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &BoxKey> {
        self.boxes.keys()
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        self.boxes.keys().map(|key| self.rect(key))
    }

    /// Distinct levels present among occupied boxes, ascending.
    pub fn levels(&self) -> Vec<u32> {
        // Keys order by level first.
        let mut levels: Vec<u32> = self.boxes.keys().map(|k| k.level()).collect();
        levels.dedup();
        levels
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&BoxKey, &mut BoxPayload) -> bool) {
        self.boxes.retain(|key, payload| keep(key, payload));
    }

    /// Replaces every occupied box by its `2^steps` descendants. Flags are
    /// inherited, stored samples move to the child containing their head,
    /// and hit counts restart at zero.
    pub fn subdivide_all(&self, steps: u32) -> BoxTree {
        let mut out = BoxTree::new(self.root.clone());
        for (key, payload) in &self.boxes {
            let level = key.level() + steps;
            let mut children: BTreeMap<BoxKey, BoxPayload> = key
                .descendants(steps)
                .map(|child| {
                    (
                        child,
                        BoxPayload {
                            flags: payload.flags,
                            ..BoxPayload::default()
                        },
                    )
                })
                .collect();
            for sample in &payload.samples {
                let target = self
                    .key_at(&sample.head, level)
                    .ok()
                    .flatten()
                    .and_then(|child| children.get_mut(&child));
                if let Some(child) = target {
                    child.samples.push(sample.clone());
                }
            }
            out.boxes.append(&mut children);
        }
        out
    }

    /// Largest diameter among occupied boxes.
    pub fn covering_diameter(&self) -> Result<f64> {
        if self.boxes.is_empty() {
            return Err(Error::EmptyCovering("diameter of an empty covering".into()));
        }
        Ok(self
            .levels()
            .first()
            .map(|&level| {
                // Radii are nonincreasing in level, so the shallowest is largest.
                2.0 * self.radii_at(level).iter().map(|r| r * r).sum::<f64>().sqrt()
            })
            .unwrap_or(0.0))
    }

    /// Sum of occupied box volumes.
    pub fn volume(&self) -> f64 {
        self.boxes
            .keys()
            .map(|key| self.radii_at(key.level()).iter().map(|r| 2.0 * r).product::<f64>())
            .sum()
    }
}
