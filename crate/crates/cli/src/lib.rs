//! Command-line harness over the core library: configuration loading,
//! canonical JSON reports, run manifests with content digests, and the
//! end-to-end verification pipeline. Every command is a thin wrapper around
//! a library call in [`commands`]; results are identical to calling the
//! library directly.
//!
//! Exit codes are stable: 0 success, 2 configuration or schema error,
//! 3 certification failure, 4 inequality violation, 5 budget exceeded.

pub mod commands;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gibbsgraph_core::gibbs::{GibbsError, TestFunction, DLR_DEFAULT_BUDGET};
use gibbsgraph_core::graph::GraphError;
use gibbsgraph_core::potentials::ModelConfig;
use gibbsgraph_core::report::to_canonical_json;
use gibbsgraph_core::repulsive::RepulsionProfile;
use gibbsgraph_core::{Graph, ModelParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_INEQUALITY: i32 = 4;
pub const EXIT_BUDGET: i32 = 5;

/// Harness-level failure, carrying the exit code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("inequality violated: {0}")]
    Inequality(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Certification(_) => EXIT_CERTIFICATION,
            CliError::Inequality(_) => EXIT_INEQUALITY,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

/// Maps library errors onto exit-code classes: resource blowups keep their
/// budget class, everything else surfaces as a configuration problem.
pub fn classify_gibbs(err: GibbsError) -> CliError {
    match err {
        GibbsError::BudgetExceeded { .. } => CliError::Budget(err.to_string()),
        GibbsError::Quadrature(ref q)
            if matches!(
                q,
                gibbsgraph_core::quadrature::QuadratureError::TailNotCertified { .. }
            ) =>
        {
            CliError::Certification(err.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

pub fn classify_graph(err: GraphError) -> CliError {
    match err {
        GraphError::CensusBudgetExceeded { .. } => CliError::Budget(err.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Global run settings shared by every command.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub threads: usize,
    pub budget: u64,
    /// Optional override for verification tolerances; commands fall back to
    /// the library defaults when absent.
    pub tolerance: Option<f64>,
    pub cache_dir: Option<PathBuf>,
}

impl RunContext {
    /// Installs the global rayon pool. Only the first call in a process can
    /// take effect; later calls are ignored, which keeps in-process tests
    /// harmless.
    pub fn install_thread_pool(&self) {
        if self.threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global();
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Run provenance: digests of everything read and written, emitted with
/// every run. Two runs with identical inputs and seed produce identical
/// manifests except for the timestamp.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        to_canonical_json(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Loads a graph, recording its digest, and — when a cache directory is
/// configured — installs (or stores) the root BFS table keyed by content.
pub fn load_graph(
    path: &Path,
    manifest: &mut RunManifest,
    ctx: &RunContext,
) -> Result<Graph, CliError> {
    let text = read_text(path)?;
    manifest.record_input(path, text.as_bytes());
    let graph = Graph::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(dir) = &ctx.cache_dir {
        let digest = sha256_hex(text.as_bytes());
        attach_distance_cache(&graph, &digest, dir);
    }
    Ok(graph)
}

/// Best-effort disk cache for the root BFS table: a hit installs the stored
/// distances, a miss computes and stores them. Corrupt or unwritable cache
/// entries are ignored; the cache can never fail a run.
pub fn attach_distance_cache(graph: &Graph, digest: &str, dir: &Path) {
    let file = dir.join(format!("{digest}.root.dist"));
    let n = graph.num_vertices();
    if let Ok(bytes) = std::fs::read(&file) {
        if bytes.len() == 4 * n {
            let table: Vec<u32> = bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if graph.install_distances(graph.root(), table).is_ok() {
                return;
            }
        }
    }
    if let Ok(dist) = graph.distances(graph.root()) {
        let mut bytes = Vec::with_capacity(4 * n);
        for &d in dist.iter() {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(&file, bytes);
    }
}

pub fn load_profile(path: &Path, manifest: &mut RunManifest) -> Result<RepulsionProfile, CliError> {
    let text = read_text(path)?;
    manifest.record_input(path, text.as_bytes());
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<ModelParams, CliError> {
    let text = read_text(path)?;
    manifest.record_input(path, text.as_bytes());
    let config: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config
        .build()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses a volume expression: an inclusive range `a..b`, a comma list
/// `3,5,9`, or a single vertex. Vertices must be distinct and in range.
pub fn parse_volume(text: &str, num_vertices: usize) -> Result<Vec<usize>, CliError> {
    let text = text.trim();
    let bad = |msg: String| CliError::Config(format!("volume '{text}': {msg}"));
    let mut out: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad start: {e}")))?;
        let b: usize = b.trim().parse().map_err(|e| bad(format!("bad end: {e}")))?;
        if a > b {
            return Err(bad("start exceeds end".into()));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad vertex: {e}")))?
    };
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(bad("empty".into()));
    }
    if let Some(&v) = out.iter().find(|&&v| v >= num_vertices) {
        return Err(bad(format!("vertex {v} out of range (n = {num_vertices})")));
    }
    Ok(out)
}

/// Boundary-condition recipes: identically zero, geometric decay in the
/// root distance, or seeded bounded noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    Zero,
    Tempered { scale: f64, tau: f64 },
    Noise { amplitude: f64, seed: u64 },
}

impl BoundarySpec {
    /// Accepts `zero`, `tempered:<scale>,<tau>`, or `noise:<amp>,<seed>`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let text = text.trim();
        let bad = |msg: &str| CliError::Config(format!("boundary '{text}': {msg}"));
        if text == "zero" {
            return Ok(BoundarySpec::Zero);
        }
        if let Some(rest) = text.strip_prefix("tempered:") {
            let (s, t) = rest
                .split_once(',')
                .ok_or_else(|| bad("expected tempered:<scale>,<tau>"))?;
            return Ok(BoundarySpec::Tempered {
                scale: s.trim().parse().map_err(|_| bad("bad scale"))?,
                tau: t.trim().parse().map_err(|_| bad("bad tau"))?,
            });
        }
        if let Some(rest) = text.strip_prefix("noise:") {
            let (a, s) = rest
                .split_once(',')
                .ok_or_else(|| bad("expected noise:<amplitude>,<seed>"))?;
            return Ok(BoundarySpec::Noise {
                amplitude: a.trim().parse().map_err(|_| bad("bad amplitude"))?,
                seed: s.trim().parse().map_err(|_| bad("bad seed"))?,
            });
        }
        Err(bad("expected zero | tempered:<scale>,<tau> | noise:<amp>,<seed>"))
    }

    pub fn realize(&self, graph: &Graph) -> Result<Vec<f64>, CliError> {
        match *self {
            BoundarySpec::Zero => Ok(vec![0.0; graph.num_vertices()]),
            BoundarySpec::Tempered { scale, tau } => {
                gibbsgraph_core::fixtures::tempered_boundary(graph, scale, tau)
                    .map_err(classify_graph)
            }
            BoundarySpec::Noise { amplitude, seed } => Ok(
                gibbsgraph_core::fixtures::noise_boundary(graph, amplitude, seed),
            ),
        }
    }
}

/// Vertices ordered by (root distance, index); prefixes of this order form
/// the canonical nested volume chain.
pub fn bfs_order(graph: &Graph) -> Result<Vec<usize>, CliError> {
    let dist = graph.distances(graph.root()).map_err(classify_graph)?;
    let mut order: Vec<usize> = (0..graph.num_vertices()).collect();
    order.sort_by_key(|&v| (dist[v], v));
    Ok(order)
}

/// Nested volumes of the requested sizes along the BFS order.
pub fn bfs_prefix_volumes(graph: &Graph, sizes: &[usize]) -> Result<Vec<Vec<usize>>, CliError> {
    let order = bfs_order(graph)?;
    let mut out = Vec::with_capacity(sizes.len());
    let mut prev = 0usize;
    for &s in sizes {
        if s == 0 || s > order.len() {
            return Err(CliError::Config(format!(
                "volume size {s} out of range (graph has {} vertices)",
                order.len()
            )));
        }
        if s < prev {
            return Err(CliError::Config(
                "volume sizes must be nondecreasing".into(),
            ));
        }
        prev = s;
        let mut v = order[..s].to_vec();
        v.sort_unstable();
        out.push(v);
    }
    Ok(out)
}

/// Bounded observables spanning the volume: constants, hyperbolic tangents
/// of linear forms, and Gaussians of linear forms. Used by the consistency
/// checks; everything is continuous and bounded by one.
pub fn default_test_functions(volume: &[usize]) -> Vec<TestFunction> {
    let mut fs = vec![TestFunction::One];
    let all: Vec<(usize, f64)> = volume.iter().map(|&v| (v, 0.8)).collect();
    fs.push(TestFunction::TanhLinear {
        weights: all.clone(),
        offset: 0.0,
    });
    if volume.len() >= 2 {
        let first = volume[0];
        let last = *volume.last().expect("nonempty volume");
        fs.push(TestFunction::TanhLinear {
            weights: vec![(first, 0.6), (last, -0.4)],
            offset: 0.2,
        });
    }
    fs.push(TestFunction::ExpNegQuadratic {
        weights: volume.iter().map(|&v| (v, 0.5)).collect(),
    });
    fs.push(TestFunction::ExpNegQuadratic {
        weights: vec![(volume[0], 0.7)],
    });
    for &v in volume {
        fs.push(TestFunction::TanhLinear {
            weights: vec![(v, 1.0)],
            offset: 0.1,
        });
    }
    fs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackboneArg {
    Ray,
    BinaryTree,
}

#[derive(Debug, Parser)]
#[command(
    name = "gibbsgraph",
    version,
    about = "Build and certify repulsive graphs, evaluate interaction constants, and run finite-volume Gibbs samplers"
)]
pub struct Cli {
    /// Base seed for every randomized component.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Evaluation budget for nested quadrature and path censuses.
    #[arg(long, global = true, default_value_t = DLR_DEFAULT_BUDGET)]
    pub budget: u64,
    /// Override the pass/fail tolerance of verification commands.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a graph in the profile's repulsive class.
    Generate {
        #[arg(long)]
        profile: PathBuf,
        /// Hub degrees, largest placed first.
        #[arg(long, value_delimiter = ',', required = true)]
        degrees: Vec<u32>,
        #[arg(long, value_enum, default_value_t = BackboneArg::Ray)]
        backbone: BackboneArg,
        /// Backbone radius (ray length or tree depth).
        #[arg(long)]
        radius: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check the hub-separation rule; exit 3 on violation.
    Certify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the tempered degree-weighted sum and its ledger.
    Summability {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        theta: f64,
        /// Also check the root-neighborhood domination bound.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Write the per-radius ledger as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report the model's explicit constants and admissibility audit.
    Constants {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify the sphere-growth bound at every vertex; exit 4 on violation.
    VerifyGrowth {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Randomized single-site moment-bound trials; exit 4 on violation.
    VerifyLemma1 {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Nested-kernel consistency check on a small volume; exit 4 on failure.
    VerifyDlr {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Volume expression: `a..b` (inclusive) or a comma list.
        #[arg(long)]
        volume: String,
        /// Conditioning subset, same syntax.
        #[arg(long)]
        subset: String,
        #[arg(long, default_value = "zero")]
        boundary: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Heat-bath MCMC over a volume; writes batch-means statistics.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        volume: String,
        #[arg(long)]
        sweeps: usize,
        #[arg(long, default_value = "zero")]
        boundary: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Track the cut exponential norm along nested volumes; writes CSV.
    MonitorNorm {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Nested volume sizes along the breadth-first order.
        #[arg(long, value_delimiter = ',', required = true)]
        volumes: Vec<usize>,
        #[arg(long)]
        sweeps: usize,
        #[arg(long, default_value = "zero")]
        boundary: String,
        /// Norm cutoff; defaults to ten times the pilot median.
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a staged verification pipeline from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Bundle directory for stage reports and the manifest.
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Executes a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let ctx = RunContext {
        seed: cli.seed,
        threads: cli.threads,
        budget: cli.budget,
        tolerance: cli.tolerance,
        cache_dir: std::env::var_os("GIBBSGRAPH_CACHE_DIR").map(PathBuf::from),
    };
    ctx.install_thread_pool();
    match commands::dispatch(&ctx, cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

impl fmt::Display for BackboneArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackboneArg::Ray => write!(f, "ray"),
            BackboneArg::BinaryTree => write!(f, "binary-tree"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_expressions_parse() {
        assert_eq!(parse_volume("0..3", 10).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_volume("5, 1, 3", 10).unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_volume("7", 10).unwrap(), vec![7]);
        assert!(parse_volume("3..1", 10).is_err());
        assert!(parse_volume("0..12", 10).is_err());
        assert!(parse_volume("", 10).is_err());
    }

    #[test]
    fn boundary_specs_parse() {
        assert_eq!(BoundarySpec::parse("zero").unwrap(), BoundarySpec::Zero);
        assert_eq!(
            BoundarySpec::parse("tempered:1.5,0.7").unwrap(),
            BoundarySpec::Tempered {
                scale: 1.5,
                tau: 0.7
            }
        );
        assert_eq!(
            BoundarySpec::parse("noise:0.3,9").unwrap(),
            BoundarySpec::Noise {
                amplitude: 0.3,
                seed: 9
            }
        );
        assert!(BoundarySpec::parse("waves:1").is_err());
    }

    #[test]
    fn prefix_volumes_are_nested_and_sorted() {
        let g = gibbsgraph_core::fixtures::path_graph(6, 2);
        let volumes = bfs_prefix_volumes(&g, &[1, 3, 6]).unwrap();
        assert_eq!(volumes[0], vec![2]);
        assert_eq!(volumes[2].len(), 6);
        for w in volumes.windows(2) {
            assert!(w[0].iter().all(|v| w[1].contains(v)));
        }
        assert!(bfs_prefix_volumes(&g, &[3, 2]).is_err());
        assert!(bfs_prefix_volumes(&g, &[0]).is_err());
    }

    #[test]
    fn test_function_library_is_bounded_and_covers_volume() {
        let fs = default_test_functions(&[1, 4, 5]);
        assert!(fs.len() >= 6);
        let values = vec![0.3; 6];
        for f in &fs {
            let y = f.eval(&values);
            assert!(y.is_finite() && y.abs() <= 1.0);
            assert!(f.support().iter().all(|v| [1, 4, 5].contains(v)));
        }
    }

    #[test]
    fn manifest_records_digests() {
        let mut m = RunManifest::new("certify", 7);
        m.record_input(Path::new("a.json"), b"hello");
        m.record_output(Path::new("b.json"), b"world");
        let text = m.to_json().unwrap();
        assert!(text.contains("\"a.json\""));
        assert!(text.contains(&sha256_hex(b"hello")));
        assert!(text.contains(&sha256_hex(b"world")));
    }
}
