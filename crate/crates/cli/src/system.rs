//! Builds the observed map for a run configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use boxcov::cds::{Evaluation, PodExtension, PodObservation};
use boxcov::ks::{snapshot_initial_condition, KsSolver};
use boxcov::mackeyglass::{DelayObservation, MgFlow, SplineExtension};
use boxcov::maps::ToyMap;
use boxcov::pod::{self, PodBasis, SnapshotMatrix, SpatialGrid};
use boxcov::{CoreDynamicalSystem, ModelError, ObservedMap};

use crate::config::{ModelKind, RunConfig};
use crate::CliError;

pub type KsSystem = CoreDynamicalSystem<KsSolver, PodObservation, PodExtension>;
pub type MgSystem = CoreDynamicalSystem<MgFlow, DelayObservation, SplineExtension>;

pub enum System {
    Toy(ToyMap),
    Ks(Box<KsSystem>),
    Mg(Box<MgSystem>),
}

impl ObservedMap for System {
    fn dim(&self) -> usize {
        match self {
            System::Toy(m) => m.dim(),
            System::Ks(s) => s.dim(),
            System::Mg(s) => s.dim(),
        }
    }

    fn tail_dim(&self) -> usize {
        match self {
            System::Toy(m) => m.tail_dim(),
            System::Ks(s) => s.tail_dim(),
            System::Mg(s) => s.tail_dim(),
        }
    }

    fn evaluate(&self, head: &[f64], tail: &[f64], time_grid: bool) -> Result<Evaluation, ModelError> {
        match self {
            System::Toy(m) => m.evaluate(head, tail, time_grid),
            System::Ks(s) => s.evaluate(head, tail, time_grid),
            System::Mg(s) => s.evaluate(head, tail, time_grid),
        }
    }
}

pub fn ks_grid(cfg: &RunConfig) -> SpatialGrid {
    SpatialGrid::periodic(cfg.ks.n, 2.0 * std::f64::consts::PI)
}

/// Snapshot run from the standard initial condition.
pub fn collect_snapshots(cfg: &RunConfig) -> Result<SnapshotMatrix, CliError> {
    let solver = KsSolver::new(cfg.ks.params())?;
    let u0 = snapshot_initial_condition(cfg.ks.n);
    Ok(pod::collect_snapshots(&solver, ks_grid(cfg), &u0, cfg.pod.schedule())?)
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotMatrix, CliError> {
    Ok(pod::read_snapshots(BufReader::new(File::open(path)?))?)
}

pub fn write_snapshots(snap: &SnapshotMatrix, path: &Path) -> Result<(), CliError> {
    Ok(pod::write_snapshots(snap, BufWriter::new(File::create(path)?))?)
}

pub fn read_basis(path: &Path) -> Result<PodBasis, CliError> {
    Ok(pod::read_basis(BufReader::new(File::open(path)?))?)
}

pub fn write_basis(basis: &PodBasis, path: &Path) -> Result<(), CliError> {
    Ok(pod::write_basis(basis, BufWriter::new(File::create(path)?))?)
}

/// The POD basis named by the config, or one computed from snapshots.
pub fn load_basis(cfg: &RunConfig) -> Result<PodBasis, CliError> {
    if let Some(path) = &cfg.pod.basis {
        let basis = read_basis(path)?;
        if basis.grid.n != cfg.ks.n {
            return Err(CliError::Config(format!(
                "basis grid has {} points, ks.n is {}",
                basis.grid.n, cfg.ks.n
            )));
        }
        return Ok(basis);
    }
    let snap = match &cfg.pod.snapshots {
        Some(path) => read_snapshots(path)?,
        None => collect_snapshots(cfg)?,
    };
    Ok(pod::compute_basis(&snap, cfg.pod.modes)?)
}

pub fn ks_system(cfg: &RunConfig, basis: Arc<PodBasis>) -> Result<KsSystem, CliError> {
    let k = cfg.dim();
    Ok(CoreDynamicalSystem::new(
        KsSolver::new(cfg.ks.params())?,
        PodObservation::new(basis.clone(), k)?,
        PodExtension::new(basis, k, cfg.cds.tail_policy)?,
        cfg.horizon(),
        cfg.cds.grid_size,
    )?)
}

pub fn mg_system(cfg: &RunConfig) -> Result<MgSystem, CliError> {
    let params = cfg.mg.params(cfg.dim());
    Ok(CoreDynamicalSystem::new(
        MgFlow::new(params)?,
        DelayObservation::new(&params)?,
        SplineExtension::new(&params)?,
        cfg.horizon(),
        cfg.cds.grid_size,
    )?)
}

pub fn build(cfg: &RunConfig) -> Result<System, CliError> {
    Ok(match cfg.model {
        ModelKind::Saddle => System::Toy(ToyMap::Saddle),
        ModelKind::Henon => System::Toy(ToyMap::HENON),
        ModelKind::Identity => System::Toy(ToyMap::Identity { dim: cfg.dim() }),
        ModelKind::Ks => System::Ks(Box::new(ks_system(cfg, Arc::new(load_basis(cfg)?))?)),
        ModelKind::Mg => System::Mg(Box::new(mg_system(cfg)?)),
    })
}
