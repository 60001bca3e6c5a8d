//! Closed-form maps of the plane and of `R^k` used as test systems.

use crate::cds::{Evaluation, ObservedMap};
use crate::error::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum ToyMap {
    /// `(x, y) -> (2x, y/2)`: unstable manifold of the origin is the x-axis.
    Saddle,
    /// `(x, y) -> (1 - a x^2 + y b, x)`.
    Henon {
        a: f64,
        b: f64,
    },
    Identity {
        dim: usize,
    },
}

impl ToyMap {
    pub const HENON: ToyMap = ToyMap::Henon { a: 1.4, b: 0.3 };

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            ToyMap::Saddle => vec![2.0 * x[0], 0.5 * x[1]],
            ToyMap::Henon { a, b } => vec![1.0 - a * x[0] * x[0] + b * x[1], x[0]],
            ToyMap::Identity { .. } => x.to_vec(),
        }
    }

    /// Fixed point `(x*, x*)` of the Henon map on the unstable branch.
    pub fn henon_fixed_point(a: f64, b: f64) -> f64 {
        let c = 1.0 - b;
        (-c + (c * c + 4.0 * a).sqrt()) / (2.0 * a)
    }
}

impl ObservedMap for ToyMap {
    fn dim(&self) -> usize {
        match *self {
            ToyMap::Saddle | ToyMap::Henon { .. } => 2,
            ToyMap::Identity { dim } => dim,
        }
    }

    fn evaluate(&self, head: &[f64], _tail: &[f64], _time_grid: bool) -> Result<Evaluation, ModelError> {
        if head.len() != self.dim() {
            return Err(ModelError::new(0.0, format!("point has dimension {}", head.len())));
        }
        let image = self.apply(head);
        if image.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::non_finite(1.0));
        }
        Ok(Evaluation {
            image,
            tail: Vec::new(),
            path: Vec::new(),
        })
    }
}
