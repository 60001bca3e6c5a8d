use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use boxcov::analysis::{box_counting_estimate, coarsened_counts, covering_distance, worst_case_embedding_dim};
use boxcov::boxtree::{read_covering, write_covering};
use boxcov::cds::FlowMap;
use boxcov::continuation::continue_manifold_with;
use boxcov::ks::{snapshot_initial_condition, KsSolver};
use boxcov::mackeyglass::MgFlow;
use boxcov::maps::ToyMap;
use boxcov::subdivision::{relative_attractor_with, StepStats};
use boxcov::{BoxTree, ObservationMap};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{ModelKind, RunConfig};
use crate::system::{self, System};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "boxcov",
    version,
    about = "Box coverings of unstable manifolds and attractors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set continuation.depth=12`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// KS parameter mu.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Sampling seed for subdivision and continuation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(m) = self.model {
            overrides.push(format!("model=\"{}\"", model_name(m)));
        }
        if let Some(mu) = self.mu {
            overrides.push(format!("ks.mu={mu:?}"));
        }
        if let Some(seed) = self.seed {
            overrides.push(format!("continuation.seed={seed}"));
            overrides.push(format!("subdivision.seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output={}", toml::Value::String(out.display().to_string())));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Ks => "ks",
        ModelKind::Mg => "mg",
        ModelKind::Saddle => "saddle",
        ModelKind::Henon => "henon",
        ModelKind::Identity => "identity",
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write its trajectory as CSV.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Final time (iterations for the toy maps).
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Output interval.
        #[arg(long, default_value_t = 0.5)]
        dt: f64,
        /// Also write observation-space coordinates.
        #[arg(long)]
        observe: bool,
    },
    /// Collect a KS snapshot matrix.
    Snapshots {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute a POD basis from a snapshot file.
    Pod {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot file (default: `pod.snapshots`, else a fresh run).
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Number of modes S.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Relative global attractor of the domain by subdivision.
    Subdivide {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        steps: Option<u32>,
        /// Write the covering after every step.
        #[arg(long)]
        emit_steps: bool,
    },
    /// Unstable manifold of the seed point by continuation.
    Continue {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Box-counting dimension of a covering.
    Dimension {
        covering: PathBuf,
        /// Levels to fit (default: the finest level and coarser full cycles).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u32>>,
    },
    /// Distances between a covering and reference points or another covering.
    Compare { covering: PathBuf, reference: PathBuf },
    /// Box centers and radii in three chosen coordinates, as CSV.
    Export {
        covering: PathBuf,
        /// 1-based coordinates to keep.
        #[arg(long, num_args = 3, default_values_t = [1usize, 2, 3])]
        project: Vec<usize>,
        /// Output file (default: stdout).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match &cli.command {
        Command::Simulate { run, .. }
        | Command::Snapshots { run }
        | Command::Pod { run, .. }
        | Command::Subdivide { run, .. }
        | Command::Continue { run } => run.threads,
        _ => None,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            run,
            horizon,
            dt,
            observe,
        } => {
            let cfg = run.load()?;
            simulate(&cfg, horizon, dt, observe).map_err(|e| e.in_stage("simulate"))
        }
        Command::Snapshots { run } => {
            let cfg = run.load()?;
            require_ks(&cfg)?;
            let out = prepare_output(&cfg, "snapshots")?;
            let snap = system::collect_snapshots(&cfg).map_err(|e| e.in_stage("snapshots"))?;
            system::write_snapshots(&snap, &out.join("snapshots.bin"))
        }
        Command::Pod { run, snapshots, modes } => {
            let mut cfg = run.load()?;
            require_ks(&cfg)?;
            if let Some(s) = modes {
                cfg.pod.modes = s;
            }
            if snapshots.is_some() {
                cfg.pod.snapshots = snapshots;
            }
            cfg.pod.basis = None;
            cfg.validate()?;
            let out = prepare_output(&cfg, "pod")?;
            let basis = system::load_basis(&cfg).map_err(|e| e.in_stage("pod"))?;
            system::write_basis(&basis, &out.join("basis.bin"))?;
            let mut sv = BufWriter::new(File::create(out.join("singular_values.csv"))?);
            writeln!(sv, "index,singular_value")?;
            for (i, s) in basis.singular_values.iter().enumerate() {
                writeln!(sv, "{},{s:.16e}", i + 1)?;
            }
            sv.flush()?;
            Ok(())
        }
        Command::Subdivide { run, steps, emit_steps } => {
            let mut cfg = run.load()?;
            if let Some(s) = steps {
                cfg.subdivision.steps = s;
            }
            subdivide(&cfg, emit_steps)
        }
        Command::Continue { run } => {
            let cfg = run.load()?;
            continuation(&cfg)
        }
        Command::Dimension { covering, levels } => {
            let tree = load_covering(&covering)?;
            let value = dimension(&tree, levels)?;
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
        Command::Compare { covering, reference } => {
            let tree = load_covering(&covering)?;
            let points = load_reference(&reference)?;
            let d = covering_distance(&tree, &points)?;
            let diameter = tree.covering_diameter()?;
            let value = json!({
                "reference_to_covering": d.reference_to_covering,
                "covering_to_reference": d.covering_to_reference,
                "hausdorff": d.reference_to_covering.max(d.covering_to_reference),
                "covering_diameter": diameter,
                "boxes": tree.len(),
                "reference_points": points.len(),
            });
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
        Command::Export { covering, project, out } => {
            let tree = load_covering(&covering)?;
            match out {
                Some(path) => export(&tree, &project, BufWriter::new(File::create(path)?)),
                None => export(&tree, &project, std::io::stdout().lock()),
            }
        }
    }
}

fn require_ks(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.model == ModelKind::Ks {
        Ok(())
    } else {
        Err(CliError::Config(
            "POD snapshots are only defined for model = \"ks\"".into(),
        ))
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    verb: &'static str,
    config: &'a RunConfig,
    resolved: serde_json::Value,
}

/// Creates the output directory and records the resolved configuration.
fn prepare_output(cfg: &RunConfig, verb: &'static str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.output)?;
    let k = cfg.dim();
    let resolved = json!({
        "dimension": k,
        "horizon": cfg.horizon(),
        "ks_step": cfg.ks.params().h,
        "mg_history_intervals": cfg.mg.params(k.max(2)).history_intervals(),
        "step_cap": cfg.continuation.step_cap(),
        "seed_point": cfg.seed_point(),
        "threads": rayon::current_num_threads(),
    });
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        verb,
        config: cfg,
        resolved,
    };
    let mut f = BufWriter::new(File::create(cfg.output.join(format!("{verb}.metadata.json")))?);
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    f.flush()?;
    Ok(cfg.output.clone())
}

fn write_covering_file(tree: &BoxTree, path: &Path) -> Result<(), CliError> {
    Ok(write_covering(tree, BufWriter::new(File::create(path)?))?)
}

pub fn load_covering(path: &Path) -> Result<BoxTree, CliError> {
    Ok(read_covering(BufReader::new(File::open(path)?))?)
}

/// Reference points: CSV rows of coordinates, or the box centers of a
/// covering file.
fn load_reference(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path)?;
    if text.starts_with("#boxcov") {
        let tree = read_covering(text.as_bytes())?;
        return Ok(tree.rects().map(|r| r.center).collect());
    }
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => points.push(r),
            // A header line is allowed.
            Err(_) if i == 0 => {}
            Err(e) => {
                return Err(CliError::Core(boxcov::Error::Format(format!(
                    "{} line {}: {e}",
                    path.display(),
                    i + 1
                ))))
            }
        }
    }
    Ok(points)
}

fn csv_row(w: &mut impl Write, t: f64, values: &[f64]) -> std::io::Result<()> {
    write!(w, "{t}")?;
    for v in values {
        write!(w, ",{v:.16e}")?;
    }
    writeln!(w)
}

fn csv_header(w: &mut impl Write, first: &str, prefix: &str, n: usize) -> std::io::Result<()> {
    write!(w, "{first}")?;
    for i in 0..n {
        write!(w, ",{prefix}{i}")?;
    }
    writeln!(w)
}

fn simulate(cfg: &RunConfig, horizon: f64, dt: f64, observe: bool) -> Result<(), CliError> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(CliError::Config("simulate needs dt > 0 and horizon >= 0".into()));
    }
    let out = prepare_output(cfg, "simulate")?;
    let count = (horizon / dt).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|i| i as f64 * dt).collect();
    match cfg.model {
        ModelKind::Saddle | ModelKind::Henon | ModelKind::Identity => {
            let map = match cfg.model {
                ModelKind::Saddle => ToyMap::Saddle,
                ModelKind::Henon => ToyMap::HENON,
                _ => ToyMap::Identity { dim: cfg.dim() },
            };
            let mut w = BufWriter::new(File::create(out.join("trajectory.csv"))?);
            csv_header(&mut w, "n", "x", cfg.dim())?;
            let mut x = cfg.seed_point();
            for n in 0..=horizon as usize {
                csv_row(&mut w, n as f64, &x)?;
                x = map.apply(&x);
            }
            w.flush()?;
        }
        ModelKind::Ks => {
            let solver = KsSolver::new(cfg.ks.params())?;
            let u0 = snapshot_initial_condition(cfg.ks.n);
            let states = solver.trajectory(&u0, &times)?;
            write_states(&out.join("trajectory.csv"), &times, &states, "u")?;
            if observe {
                let basis = Arc::new(system::load_basis(cfg)?);
                let obs = boxcov::cds::PodObservation::new(basis, cfg.dim())?;
                write_observed(&out.join("observed.csv"), &times, &states, &obs)?;
            }
        }
        ModelKind::Mg => {
            let params = cfg.mg.params(cfg.dim());
            let flow = MgFlow::new(params)?;
            let h0 = vec![0.5; flow.state_len()];
            let states = flow.trajectory(&h0, &times)?;
            let current: Vec<Vec<f64>> = states.iter().map(|s| vec![*s.last().unwrap()]).collect();
            write_states(&out.join("trajectory.csv"), &times, &current, "u")?;
            let obs = boxcov::mackeyglass::DelayObservation::new(&params)?;
            write_observed(&out.join("observed.csv"), &times, &states, &obs)?;
        }
    }
    Ok(())
}

fn write_states(path: &Path, times: &[f64], states: &[Vec<f64>], prefix: &str) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    csv_header(&mut w, "t", prefix, states.first().map_or(0, |s| s.len()))?;
    for (t, s) in times.iter().zip(states) {
        csv_row(&mut w, *t, s)?;
    }
    w.flush()?;
    Ok(())
}

fn write_observed(path: &Path, times: &[f64], states: &[Vec<f64>], obs: &dyn ObservationMap) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    csv_header(&mut w, "t", "x", obs.dim())?;
    for (t, s) in times.iter().zip(states) {
        csv_row(&mut w, *t, &obs.observe(s)?)?;
    }
    w.flush()?;
    Ok(())
}

fn jsonl<T: Serialize>(w: &mut impl Write, kind: &str, value: &T) -> Result<(), CliError> {
    let mut v = serde_json::to_value(value)?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("type".into(), json!(kind));
    }
    serde_json::to_writer(&mut *w, &v)?;
    writeln!(w)?;
    Ok(())
}

fn subdivide(cfg: &RunConfig, emit_steps: bool) -> Result<(), CliError> {
    let out = prepare_output(cfg, "subdivide")?;
    let phi = system::build(cfg).map_err(|e| e.in_stage("model setup"))?;
    let start = BoxTree::with_root_occupied(cfg.domain()?);
    let steps_dir = out.join("steps");
    if emit_steps {
        fs::create_dir_all(&steps_dir)?;
    }
    let mut log = BufWriter::new(File::create(out.join("subdivision.jsonl"))?);
    let mut failure = None;
    let result = relative_attractor_with(&start, &phi, &cfg.subdivision, &mut |tree, stats: &StepStats| {
        let mut go = || -> Result<(), CliError> {
            jsonl(&mut log, "step", stats)?;
            if emit_steps {
                write_covering_file(tree, &steps_dir.join(format!("step-{:03}.txt", stats.step + 1)))?;
            }
            Ok(())
        };
        if let Err(e) = go() {
            failure.get_or_insert(e);
        }
    });
    let tree = result.map_err(|e| CliError::from(e).in_stage("subdivide"))?;
    if let Some(e) = failure {
        return Err(e);
    }
    log.flush()?;
    write_covering_file(&tree, &out.join("covering.txt"))
}

fn continuation(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare_output(cfg, "continue")?;
    let phi: System = system::build(cfg).map_err(|e| e.in_stage("model setup"))?;
    let mut log = BufWriter::new(File::create(out.join("report.jsonl"))?);
    let mut failure = None;
    let result = continue_manifold_with(
        &phi,
        &cfg.domain()?,
        &cfg.seed_point(),
        &cfg.continuation,
        &mut |_, stats| {
            if let Err(e) = jsonl(&mut log, "step", stats) {
                failure.get_or_insert(e);
            }
        },
    );
    let (covering, report) = result.map_err(|e| CliError::from(e).in_stage("continue"))?;
    if let Some(e) = failure {
        return Err(e);
    }
    jsonl(&mut log, "report", &report)?;
    log.flush()?;
    write_covering_file(&covering, &out.join("covering.txt"))
}

/// Default fit levels: the finest level and coarser ones in steps of `k`,
/// down to level `k`.
pub fn default_levels(tree: &BoxTree) -> Vec<u32> {
    let k = tree.dim() as u32;
    let Some(&finest) = tree.levels().first() else {
        return Vec::new();
    };
    let mut levels: Vec<u32> = (0..)
        .map(|j| finest as i64 - (j * k) as i64)
        .take_while(|&l| l >= k as i64)
        .map(|l| l as u32)
        .collect();
    levels.reverse();
    levels
}

pub fn dimension(tree: &BoxTree, levels: Option<Vec<u32>>) -> Result<serde_json::Value, CliError> {
    let levels = levels.unwrap_or_else(|| default_levels(tree));
    let counts = coarsened_counts(tree, &levels);
    let est = box_counting_estimate(tree.root(), &counts)?;
    Ok(json!({
        "dimension": est.dimension,
        "residual": est.residual,
        "counts": counts,
        "worst_case_embedding_dim": worst_case_embedding_dim(est.dimension.max(0.0))?,
    }))
}

fn export(tree: &BoxTree, project: &[usize], mut w: impl Write) -> Result<(), CliError> {
    let k = tree.dim();
    if project.len() != 3 || project.iter().any(|&i| i == 0 || i > k) {
        return Err(CliError::Config(format!(
            "--project needs three coordinates in 1..={k}, got {project:?}"
        )));
    }
    let idx: Vec<usize> = project.iter().map(|i| i - 1).collect();
    let names = ["x", "y", "z"];
    let header: Vec<String> = names
        .iter()
        .map(|n| format!("c{n}"))
        .chain(names.iter().map(|n| format!("r{n}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for r in tree.rects() {
        let vals: Vec<String> = idx
            .iter()
            .map(|&i| r.center[i])
            .chain(idx.iter().map(|&i| r.radii[i]))
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(w, "{}", vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}
