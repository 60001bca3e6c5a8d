//! Set-oriented computation of box coverings of embedded unstable manifolds
//! and relative global attractors of infinite-dimensional dynamical systems.
//!
//! A model (PDE or DDE) is reduced to a continuous map `phi = R ∘ Phi ∘ E`
//! on a `k`-dimensional observation space ([`cds`]). The subdivision and
//! continuation algorithms then work on hierarchical box partitions of a
//! rectangle `Q` in that space ([`boxtree`]).

pub mod analysis;
pub mod boxtree;
pub mod cds;
pub mod continuation;
pub mod error;
pub mod ks;
pub mod mackeyglass;
pub mod maps;
pub mod pod;
pub mod subdivision;

pub use boxtree::{BoxFlags, BoxKey, BoxPayload, BoxTree, Covering, Rect, StoredSample};
pub use cds::{CoreDynamicalSystem, ExtensionMap, FlowMap, ObservationMap, ObservedMap};
pub use continuation::{continue_manifold, ContinuationConfig, ContinuationReport};
pub use error::{Error, ModelError, Result};
pub use subdivision::{relative_attractor, SubdivisionConfig, TestPoints};
