//! Run configuration: a TOML file, `--set section.key=value` overrides and a
//! few dedicated flags, validated before any computation starts.

use std::path::{Path, PathBuf};

use boxcov::cds::TailPolicy;
use boxcov::ks::KsParams;
use boxcov::mackeyglass::MgParams;
use boxcov::pod::SnapshotSchedule;
use boxcov::{ContinuationConfig, Rect, SubdivisionConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ks,
    Mg,
    Saddle,
    Henon,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsConfig {
    pub mu: f64,
    pub n: usize,
    /// Time step; derived from `mu` when absent.
    pub h: Option<f64>,
    pub dealias: bool,
}

impl Default for KsConfig {
    fn default() -> Self {
        let p = KsParams::default();
        Self {
            mu: p.mu,
            n: p.n,
            h: None,
            dealias: p.dealias,
        }
    }
}

impl KsConfig {
    pub fn params(&self) -> KsParams {
        KsParams {
            mu: self.mu,
            n: self.n,
            h: self.h.unwrap_or_else(|| KsParams::default_step(self.mu)),
            dealias: self.dealias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgConfig {
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub tau: f64,
    /// History intervals per delay; 0 picks the default for `k`.
    pub steps_per_delay: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        let p = MgParams::default();
        Self {
            beta: p.beta,
            gamma: p.gamma,
            eta: p.eta,
            tau: p.tau,
            steps_per_delay: p.steps_per_delay,
        }
    }
}

impl MgConfig {
    pub fn params(&self, k: usize) -> MgParams {
        MgParams {
            beta: self.beta,
            gamma: self.gamma,
            eta: self.eta,
            tau: self.tau,
            k,
            steps_per_delay: self.steps_per_delay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PodConfig {
    /// Precomputed basis file; built from a snapshot run when absent.
    pub basis: Option<PathBuf>,
    /// Snapshot file to build the basis from.
    pub snapshots: Option<PathBuf>,
    pub modes: usize,
    pub horizon: f64,
    pub stride: f64,
    pub skip: f64,
}

impl Default for PodConfig {
    fn default() -> Self {
        Self {
            basis: None,
            snapshots: None,
            modes: 13,
            horizon: 500.0,
            stride: 0.5,
            skip: 100.0,
        }
    }
}

impl PodConfig {
    pub fn schedule(&self) -> SnapshotSchedule {
        SnapshotSchedule {
            horizon: self.horizon,
            stride: self.stride,
            skip: self.skip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            center: vec![0.0, 0.0],
            radius: vec![1.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdsConfig {
    /// Horizon of the time-`T` map; 200 for KS and `tau / (k - 1)` for MG
    /// when absent.
    pub horizon: Option<f64>,
    pub grid_size: usize,
    pub tail_policy: TailPolicy,
}

impl Default for CdsConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            grid_size: 1,
            tail_policy: TailPolicy::Statistical,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub ks: KsConfig,
    pub mg: MgConfig,
    pub pod: PodConfig,
    pub domain: DomainConfig,
    pub cds: CdsConfig,
    pub continuation: ContinuationConfig,
    pub subdivision: SubdivisionConfig,
    /// Continuation start `p`; the domain center when absent.
    pub seed_point: Option<Vec<f64>>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Saddle,
            ks: KsConfig::default(),
            mg: MgConfig::default(),
            pod: PodConfig::default(),
            domain: DomainConfig::default(),
            cds: CdsConfig::default(),
            continuation: ContinuationConfig::default(),
            subdivision: SubdivisionConfig::default(),
            seed_point: None,
            output: PathBuf::from("out"),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses the right-hand side of `--set`: a TOML value if it parses as one,
/// otherwise a bare string.
fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Applies a `section.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("bad override key {path:?}")));
    }
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("{key} in {path:?} is not a section")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| config_error(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.domain.center.len()
    }

    pub fn domain(&self) -> Result<Rect, CliError> {
        Rect::new(self.domain.center.clone(), self.domain.radius.clone())
            .map_err(|e| config_error(format!("domain: {e}")))
    }

    pub fn seed_point(&self) -> Vec<f64> {
        self.seed_point.clone().unwrap_or_else(|| self.domain.center.clone())
    }

    pub fn horizon(&self) -> f64 {
        match (self.cds.horizon, self.model) {
            (Some(t), _) => t,
            (None, ModelKind::Mg) => self.mg.params(self.dim()).horizon(),
            (None, _) => 200.0,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let k = self.dim();
        if k == 0 {
            return Err(config_error("domain has dimension 0"));
        }
        if self.domain.radius.len() != k {
            return Err(config_error(format!(
                "domain center has {k} entries but radius has {}",
                self.domain.radius.len()
            )));
        }
        let domain = self.domain()?;
        match self.model {
            ModelKind::Saddle | ModelKind::Henon if k != 2 => {
                return Err(config_error(format!(
                    "{:?} is a planar map but the domain has dimension {k}",
                    self.model
                )))
            }
            ModelKind::Ks => {
                self.ks
                    .params()
                    .validate()
                    .map_err(|e| config_error(format!("ks: {e}")))?;
                if k > self.pod.modes {
                    return Err(config_error(format!(
                        "embedding dimension {k} exceeds the {} POD modes",
                        self.pod.modes
                    )));
                }
                if self.pod.basis.is_none() && self.pod.snapshots.is_none() {
                    self.pod
                        .schedule()
                        .times()
                        .map_err(|e| config_error(format!("pod: {e}")))?;
                }
            }
            ModelKind::Mg => {
                self.mg
                    .params(k)
                    .validate()
                    .map_err(|e| config_error(format!("mg: {e}")))?;
            }
            _ => {}
        }
        for (name, file) in [("pod.basis", &self.pod.basis), ("pod.snapshots", &self.pod.snapshots)] {
            if let Some(f) = file {
                if !f.exists() {
                    return Err(config_error(format!("{name}: {} does not exist", f.display())));
                }
            }
        }
        let horizon = self.horizon();
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(config_error(format!("cds.horizon {horizon} must be > 0")));
        }
        if self.cds.grid_size == 0 {
            return Err(config_error("cds.grid_size must be >= 1"));
        }
        let p = self.seed_point();
        if p.len() != k {
            return Err(config_error(format!(
                "seed_point has {} entries, domain dimension is {k}",
                p.len()
            )));
        }
        if !domain.contains(&p) {
            return Err(config_error(format!("seed_point {p:?} lies outside the domain")));
        }
        let level = self.continuation.depth + self.continuation.refinement;
        if level > boxcov::boxtree::MAX_LEVEL {
            return Err(config_error(format!("continuation level {level} is too deep")));
        }
        Ok(())
    }
}
