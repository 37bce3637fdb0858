//! Command implementations. Every subcommand loads its inputs, calls a pure
//! stage function, writes the canonical report plus a run manifest, and maps
//! failed checks onto the stable exit codes. The pipeline reuses the same
//! stage functions so CLI and library results are identical by construction.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gibbsgraph_core::gibbs::{
    dlr_consistency_check, exp_norm_monitor, mcmc_run, verify_lemma1, DlrReport, McmcStats,
    NormCurve, SamplerState, SpinConfiguration, LEMMA1_TOLERANCE,
};
use gibbsgraph_core::graph::WeightedSumLedger;
use gibbsgraph_core::potentials::{
    admissibility, capacity_constant, check_coercivity, check_envelope, gamma_coupling,
    AdmissibilityReport, CapacityConstant, GridSpec, SlackReport,
};
use gibbsgraph_core::quadrature::QuadratureSpec;
use gibbsgraph_core::report::{format_float, to_canonical_json};
use gibbsgraph_core::repulsive::{
    certify, generate, growth_constant, verify_domination, verify_sphere_growth, Backbone,
    CertificationReport, DominationReport, GrowthConstant, HubPlan, RepulsionProfile, VerifyError,
};
use gibbsgraph_core::{Graph, ModelParams};

use crate::{
    bfs_order, bfs_prefix_volumes, classify_gibbs, classify_graph, default_test_functions,
    load_graph, load_model, load_profile, parse_volume, read_text, write_text, BackboneArg,
    BoundarySpec, CliError, Command, RunContext, RunManifest,
};

fn classify_verify(err: VerifyError) -> CliError {
    match err {
        VerifyError::NoFiniteThreshold { .. } => CliError::Inequality(err.to_string()),
        VerifyError::Graph(g) => classify_graph(g),
        other => CliError::Config(other.to_string()),
    }
}

fn manifest_sibling(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes the report and its manifest next to `output`, or prints a single
/// self-describing envelope to stdout when no path was given.
fn emit(report: &str, output: Option<&Path>, manifest: &mut RunManifest) -> Result<(), CliError> {
    match output {
        Some(path) => {
            write_text(path, report)?;
            manifest.record_output(path, report.as_bytes());
            let text = manifest.to_json()?;
            write_text(&manifest_sibling(path), &text)?;
        }
        None => {
            println!("{{\"manifest\":{},\"report\":{}}}", manifest.to_json()?, report);
        }
    }
    Ok(())
}

fn canonical<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_canonical_json(value).map_err(|e| CliError::Config(e.to_string()))
}

pub fn dispatch(ctx: &RunContext, command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            profile,
            degrees,
            backbone,
            radius,
            output,
        } => cmd_generate(ctx, &profile, degrees, backbone, radius, &output),
        Command::Certify {
            graph,
            profile,
            output,
        } => cmd_certify(ctx, &graph, &profile, output.as_deref()),
        Command::Summability {
            graph,
            alpha,
            theta,
            profile,
            csv,
            output,
        } => cmd_summability(
            ctx,
            &graph,
            alpha,
            theta,
            profile.as_deref(),
            csv.as_deref(),
            output.as_deref(),
        ),
        Command::Constants {
            model,
            graph,
            output,
        } => cmd_constants(ctx, &model, graph.as_deref(), output.as_deref()),
        Command::VerifyGrowth {
            graph,
            profile,
            theta,
            output,
        } => cmd_verify_growth(ctx, &graph, &profile, theta, output.as_deref()),
        Command::VerifyLemma1 {
            graph,
            model,
            trials,
            output,
        } => cmd_verify_lemma1(ctx, &graph, &model, trials, output.as_deref()),
        Command::VerifyDlr {
            graph,
            model,
            volume,
            subset,
            boundary,
            output,
        } => cmd_verify_dlr(ctx, &graph, &model, &volume, &subset, &boundary, output.as_deref()),
        Command::Sample {
            graph,
            model,
            volume,
            sweeps,
            boundary,
            output,
        } => cmd_sample(ctx, &graph, &model, &volume, sweeps, &boundary, &output),
        Command::MonitorNorm {
            graph,
            model,
            volumes,
            sweeps,
            boundary,
            cutoff,
            output,
        } => cmd_monitor_norm(ctx, &graph, &model, &volumes, sweeps, &boundary, cutoff, &output),
        Command::Pipeline { config, output } => cmd_pipeline(ctx, &config, &output),
    }
}

fn cmd_generate(
    ctx: &RunContext,
    profile_path: &Path,
    degrees: Vec<u32>,
    backbone: BackboneArg,
    radius: u32,
    output: &Path,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("generate", ctx.seed);
    let profile = load_profile(profile_path, &mut manifest)?;
    let plan = HubPlan {
        hub_degrees: degrees,
        backbone: match backbone {
            BackboneArg::Ray => Backbone::Ray,
            BackboneArg::BinaryTree => Backbone::BinaryTree,
        },
        radius,
    };
    let graph =
        generate(&profile, &plan, ctx.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let text = canonical(&graph)?;
    emit(&text, Some(output), &mut manifest)
}

fn cmd_certify(
    ctx: &RunContext,
    graph_path: &Path,
    profile_path: &Path,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("certify", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let profile = load_profile(profile_path, &mut manifest)?;
    let report = certify_stage(&graph, &profile)?;
    emit(&canonical(&report)?, output, &mut manifest)?;
    if report.passed {
        Ok(())
    } else if !report.admissible {
        Err(CliError::Certification(
            "profile is inadmissible: the separation scale stays at or below one at the hub threshold".into(),
        ))
    } else {
        let v = &report.violations[0];
        Err(CliError::Certification(format!(
            "{} hub pair(s) too close; first: ({}, {}) at distance {} < {}",
            report.violations.len(),
            v.x,
            v.y,
            v.distance,
            v.required
        )))
    }
}

pub fn certify_stage(
    graph: &Graph,
    profile: &RepulsionProfile,
) -> Result<CertificationReport, CliError> {
    certify(graph, profile).map_err(classify_verify)
}

#[derive(Debug, Clone, Serialize)]
pub struct SummabilityReport {
    pub ledger: WeightedSumLedger,
    pub neighborhood_sum_root: f64,
    pub tail_decay_rate: Option<f64>,
    pub domination: Option<DominationReport>,
}

pub fn summability_stage(
    graph: &Graph,
    alpha: f64,
    theta: f64,
    profile: Option<&RepulsionProfile>,
) -> Result<SummabilityReport, CliError> {
    let ledger = graph
        .weighted_degree_sum(alpha, theta)
        .map_err(classify_graph)?;
    let neighborhood_sum_root = graph
        .neighborhood_sum(alpha, theta, graph.root())
        .map_err(classify_graph)?;
    let tail_decay_rate = ledger.tail_decay_rate();
    let domination = profile
        .map(|p| verify_domination(graph, p, alpha, theta))
        .transpose()
        .map_err(classify_verify)?;
    Ok(SummabilityReport {
        ledger,
        neighborhood_sum_root,
        tail_decay_rate,
        domination,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_summability(
    ctx: &RunContext,
    graph_path: &Path,
    alpha: f64,
    theta: f64,
    profile_path: Option<&Path>,
    csv_path: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("summability", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let profile = profile_path
        .map(|p| load_profile(p, &mut manifest))
        .transpose()?;
    let report = summability_stage(&graph, alpha, theta, profile.as_ref())?;
    if let Some(path) = csv_path {
        let csv = report.ledger.to_csv();
        write_text(path, &csv)?;
        manifest.record_output(path, csv.as_bytes());
    }
    emit(&canonical(&report)?, output, &mut manifest)?;
    match &report.domination {
        Some(d) if !d.passed => Err(CliError::Inequality(format!(
            "weighted degree sum {} exceeds the root-neighborhood bound {}",
            d.weighted_degree_sum, d.bound
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    /// Resolved parameters after catalog defaults and overrides.
    pub model: ModelParams,
    pub exponent_floor: f64,
    /// Coupling constant at the model's `(beta, p)`.
    pub gamma: f64,
    pub capacity: CapacityConstant,
    pub pair_envelope: SlackReport,
    pub site_coercivity: SlackReport,
    pub admissibility: AdmissibilityReport,
}

pub fn constants_stage(
    model: &ModelParams,
    graph: Option<&Graph>,
    quad: &QuadratureSpec,
) -> Result<ConstantsReport, CliError> {
    let gamma = gamma_coupling(&model.pair, model.beta, model.p)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let capacity = capacity_constant(&model.site, model.beta, model.lambda, model.p, quad)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let grid = GridSpec::default();
    Ok(ConstantsReport {
        model: model.clone(),
        exponent_floor: model.exponent_floor(),
        gamma,
        capacity,
        pair_envelope: check_envelope(&model.pair, &grid),
        site_coercivity: check_coercivity(&model.site, &grid),
        admissibility: admissibility(model, graph),
    })
}

fn cmd_constants(
    ctx: &RunContext,
    model_path: &Path,
    graph_path: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("constants", ctx.seed);
    let model = load_model(model_path, &mut manifest)?;
    let graph = graph_path
        .map(|p| load_graph(p, &mut manifest, ctx))
        .transpose()?;
    let report = constants_stage(&model, graph.as_ref(), &QuadratureSpec::default())?;
    emit(&canonical(&report)?, output, &mut manifest)?;
    if !report.pair_envelope.passed {
        return Err(CliError::Inequality(format!(
            "declared pair envelope fails; min slack {} at {:?}",
            report.pair_envelope.min_slack, report.pair_envelope.argmin
        )));
    }
    if !report.site_coercivity.passed {
        return Err(CliError::Inequality(format!(
            "declared site coercivity floor fails; min slack {} at {:?}",
            report.site_coercivity.min_slack, report.site_coercivity.argmin
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub theta: f64,
    pub constant: GrowthConstant,
    pub vertices: usize,
    /// Largest `ln G / N` seen anywhere past the per-vertex thresholds.
    pub max_log_rate: f64,
    /// Largest per-vertex threshold radius.
    pub max_threshold: u32,
    pub violations: usize,
    pub passed: bool,
}

pub fn growth_stage(
    graph: &Graph,
    profile: &RepulsionProfile,
    theta: f64,
) -> Result<GrowthReport, CliError> {
    let constant = growth_constant(profile, theta);
    let reports = (0..graph.num_vertices())
        .into_par_iter()
        .map(|x| verify_sphere_growth(graph, profile, theta, x, &constant))
        .collect::<Result<Vec<_>, _>>()
        .map_err(classify_verify)?;
    let mut max_log_rate = f64::NEG_INFINITY;
    let mut max_threshold = 0u32;
    let mut violations = 0usize;
    for r in &reports {
        max_log_rate = max_log_rate.max(r.max_log_rate);
        max_threshold = max_threshold.max(r.threshold);
        violations += r.violations.len();
    }
    Ok(GrowthReport {
        theta,
        constant,
        vertices: graph.num_vertices(),
        max_log_rate,
        max_threshold,
        violations,
        passed: violations == 0,
    })
}

fn cmd_verify_growth(
    ctx: &RunContext,
    graph_path: &Path,
    profile_path: &Path,
    theta: f64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("verify-growth", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let profile = load_profile(profile_path, &mut manifest)?;
    let report = growth_stage(&graph, &profile, theta)?;
    emit(&canonical(&report)?, output, &mut manifest)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Inequality(format!(
            "{} sphere-growth violation(s); max log rate {} vs allowed {}",
            report.violations, report.max_log_rate, report.constant.a
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Trial {
    pub vertex: usize,
    pub beta: f64,
    pub lambda: f64,
    pub p: f64,
    pub boundary: String,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub slack_log: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Sweep {
    pub trials: usize,
    pub failures: usize,
    pub min_slack_log: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub cases: Vec<Lemma1Trial>,
}

/// Randomized single-site moment-bound trials: vertex, boundary condition,
/// and admissible `(beta, lambda, p)` are drawn around the model's values,
/// then the quadrature left side is compared with the closed-form bound.
pub fn lemma1_stage(
    graph: &Graph,
    model: &ModelParams,
    trials: usize,
    seed: u64,
    tolerance: Option<f64>,
    quad: &QuadratureSpec,
) -> Result<Lemma1Sweep, CliError> {
    let tol = tolerance.unwrap_or(LEMMA1_TOLERANCE);
    let floor = model.exponent_floor();
    let q = model.site.q;
    if !(floor < q) {
        return Err(CliError::Config(format!(
            "no admissible exponent window: floor {floor} >= q {q}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = graph.num_vertices();
    let mut cases = Vec::with_capacity(trials);
    let mut min_slack_log = f64::INFINITY;
    let mut failures = 0usize;
    for t in 0..trials {
        let x = (rng.gen::<u64>() % n as u64) as usize;
        let (boundary, values) = if t % 2 == 0 {
            let scale = 0.5 + 2.0 * rng.gen::<f64>();
            let tau = 0.25 + 0.75 * rng.gen::<f64>();
            let values = gibbsgraph_core::fixtures::tempered_boundary(graph, scale, tau)
                .map_err(classify_graph)?;
            (format!("tempered:{scale:.6},{tau:.6}"), values)
        } else {
            let amplitude = 0.5 + 2.5 * rng.gen::<f64>();
            let noise_seed = rng.gen::<u64>();
            let values =
                gibbsgraph_core::fixtures::noise_boundary(graph, amplitude, noise_seed);
            (format!("noise:{amplitude:.6},{noise_seed}"), values)
        };
        let beta = model.beta * (0.5 + rng.gen::<f64>());
        let lambda = model.lambda * (0.5 + rng.gen::<f64>());
        let p = floor + 0.9 * rng.gen::<f64>() * (q - floor);
        let config = SpinConfiguration::new(graph, &[x], &values).map_err(classify_gibbs)?;
        let report = verify_lemma1(beta, lambda, p, graph, model, &config, x, quad)
            .map_err(classify_gibbs)?;
        let passed = report.slack_log >= -tol;
        if !passed {
            failures += 1;
        }
        min_slack_log = min_slack_log.min(report.slack_log);
        cases.push(Lemma1Trial {
            vertex: x,
            beta,
            lambda,
            p,
            boundary,
            log_lhs: report.log_lhs,
            log_rhs: report.log_rhs,
            slack_log: report.slack_log,
            passed,
        });
    }
    Ok(Lemma1Sweep {
        trials,
        failures,
        min_slack_log,
        tolerance: tol,
        passed: failures == 0,
    cases,
    })
}

fn cmd_verify_lemma1(
    ctx: &RunContext,
    graph_path: &Path,
    model_path: &Path,
    trials: usize,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("verify-lemma1", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let model = load_model(model_path, &mut manifest)?;
    let report = lemma1_stage(
        &graph,
        &model,
        trials,
        ctx.seed,
        ctx.tolerance,
        &QuadratureSpec::default(),
    )?;
    emit(&canonical(&report)?, output, &mut manifest)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Inequality(format!(
            "{} of {} moment-bound trials failed; min log slack {}",
            report.failures, report.trials, report.min_slack_log
        )))
    }
}

pub fn dlr_stage(
    graph: &Graph,
    model: &ModelParams,
    volume: &[usize],
    subset: &[usize],
    boundary: &[f64],
    budget: u64,
    tolerance: Option<f64>,
    quad: &QuadratureSpec,
) -> Result<DlrReport, CliError> {
    let config = SpinConfiguration::new(graph, volume, boundary).map_err(classify_gibbs)?;
    let fs = default_test_functions(volume);
    let mut report = dlr_consistency_check(graph, model, &config, subset, &fs, budget, quad)
        .map_err(classify_gibbs)?;
    if let Some(tol) = tolerance {
        report.tolerance = tol;
        report.passed = report.max_discrepancy <= tol;
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_dlr(
    ctx: &RunContext,
    graph_path: &Path,
    model_path: &Path,
    volume_expr: &str,
    subset_expr: &str,
    boundary_expr: &str,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("verify-dlr", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let model = load_model(model_path, &mut manifest)?;
    let volume = parse_volume(volume_expr, graph.num_vertices())?;
    let subset = parse_volume(subset_expr, graph.num_vertices())?;
    let boundary = BoundarySpec::parse(boundary_expr)?.realize(&graph)?;
    let report = dlr_stage(
        &graph,
        &model,
        &volume,
        &subset,
        &boundary,
        ctx.budget,
        ctx.tolerance,
        &QuadratureSpec::default(),
    )?;
    emit(&canonical(&report)?, output, &mut manifest)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Inequality(format!(
            "kernel consistency discrepancy {} exceeds tolerance {}",
            report.max_discrepancy, report.tolerance
        )))
    }
}

/// Heat-bath statistics over a volume; tracks up to four interior-edge
/// product moments alongside the per-site and norm series.
pub fn sample_stage(
    graph: &Graph,
    model: &ModelParams,
    volume: &[usize],
    boundary: &[f64],
    sweeps: usize,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<McmcStats, CliError> {
    let mut state = SamplerState::with_seed(seed);
    let member = |v: usize| volume.binary_search(&v).is_ok();
    'outer: for &x in volume {
        for &y in graph.neighbors(x) {
            if y > x && member(y) {
                state.track_pairs.push((x, y));
                if state.track_pairs.len() == 4 {
                    break 'outer;
                }
            }
        }
    }
    mcmc_run(graph, model, volume, boundary, sweeps, &state, quad).map_err(classify_gibbs)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    ctx: &RunContext,
    graph_path: &Path,
    model_path: &Path,
    volume_expr: &str,
    sweeps: usize,
    boundary_expr: &str,
    output: &Path,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("sample", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let model = load_model(model_path, &mut manifest)?;
    let volume = parse_volume(volume_expr, graph.num_vertices())?;
    let boundary = BoundarySpec::parse(boundary_expr)?.realize(&graph)?;
    let stats = sample_stage(
        &graph,
        &model,
        &volume,
        &boundary,
        sweeps,
        ctx.seed,
        &QuadratureSpec::default(),
    )?;
    emit(&canonical(&stats)?, Some(output), &mut manifest)
}

pub fn monitor_stage(
    graph: &Graph,
    model: &ModelParams,
    sizes: &[usize],
    boundary: &[f64],
    sweeps: usize,
    seed: u64,
    cutoff: Option<f64>,
    quad: &QuadratureSpec,
) -> Result<NormCurve, CliError> {
    let volumes = bfs_prefix_volumes(graph, sizes)?;
    let state = SamplerState::with_seed(seed);
    exp_norm_monitor(
        graph,
        model,
        &volumes,
        boundary,
        model.lambda,
        model.p,
        model.alpha_bar,
        sweeps,
        &state,
        cutoff,
        quad,
    )
    .map_err(classify_gibbs)
}

pub fn norm_curve_csv(curve: &NormCurve) -> String {
    let mut out = String::from("volume_size,estimate,stderr\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.volume_size,
            format_float(p.estimate),
            format_float(p.std_error)
        ));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn cmd_monitor_norm(
    ctx: &RunContext,
    graph_path: &Path,
    model_path: &Path,
    sizes: &[usize],
    sweeps: usize,
    boundary_expr: &str,
    cutoff: Option<f64>,
    output: &Path,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("monitor-norm", ctx.seed);
    let graph = load_graph(graph_path, &mut manifest, ctx)?;
    let model = load_model(model_path, &mut manifest)?;
    let boundary = BoundarySpec::parse(boundary_expr)?.realize(&graph)?;
    let curve = monitor_stage(
        &graph,
        &model,
        sizes,
        &boundary,
        sweeps,
        ctx.seed,
        cutoff,
        &QuadratureSpec::default(),
    )?;
    let csv = norm_curve_csv(&curve);
    write_text(output, &csv)?;
    manifest.record_output(output, csv.as_bytes());
    let json_path = output.with_extension("json");
    let json = canonical(&curve)?;
    write_text(&json_path, &json)?;
    manifest.record_output(&json_path, json.as_bytes());
    let text = manifest.to_json()?;
    write_text(&manifest_sibling(output), &text)
}

/// Stages the pipeline can run, in the config's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Certify,
    Constants,
    Summability,
    VerifyGrowth,
    VerifyLemma1,
    VerifyDlr,
    Sample,
    MonitorNorm,
}

impl StageKind {
    fn name(self) -> &'static str {
        match self {
            StageKind::Certify => "certify",
            StageKind::Constants => "constants",
            StageKind::Summability => "summability",
            StageKind::VerifyGrowth => "verify_growth",
            StageKind::VerifyLemma1 => "verify_lemma1",
            StageKind::VerifyDlr => "verify_dlr",
            StageKind::Sample => "sample",
            StageKind::MonitorNorm => "monitor_norm",
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    1.0
}
fn default_trials() -> usize {
    20
}
fn default_sample_sweeps() -> usize {
    400
}
fn default_monitor_sweeps() -> usize {
    200
}

/// Pipeline description. File paths are resolved relative to the config
/// file's directory; omitted knobs take small defaults suitable for the
/// bundled examples.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub graph: Option<String>,
    pub profile: Option<String>,
    pub model: Option<String>,
    #[serde(default)]
    pub stages: Vec<StageKind>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_trials")]
    pub lemma1_trials: usize,
    #[serde(default)]
    pub boundary: Option<String>,
    #[serde(default)]
    pub dlr_volume: Option<Vec<usize>>,
    #[serde(default)]
    pub dlr_subset: Option<Vec<usize>>,
    #[serde(default)]
    pub sample_volume: Option<Vec<usize>>,
    #[serde(default = "default_sample_sweeps")]
    pub sample_sweeps: usize,
    #[serde(default)]
    pub monitor_sizes: Option<Vec<usize>>,
    #[serde(default = "default_monitor_sweeps")]
    pub monitor_sweeps: usize,
}

struct PipelineInputs {
    graph: Option<Graph>,
    profile: Option<RepulsionProfile>,
    model: Option<ModelParams>,
}

impl PipelineInputs {
    fn graph(&self) -> Result<&Graph, CliError> {
        self.graph
            .as_ref()
            .ok_or_else(|| CliError::Config("pipeline stage needs a graph file".into()))
    }
    fn profile(&self) -> Result<&RepulsionProfile, CliError> {
        self.profile
            .as_ref()
            .ok_or_else(|| CliError::Config("pipeline stage needs a profile file".into()))
    }
    fn model(&self) -> Result<&ModelParams, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("pipeline stage needs a model file".into()))
    }
}

fn cmd_pipeline(ctx: &RunContext, config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("pipeline", ctx.seed);
    let text = read_text(config_path)?;
    manifest.record_input(config_path, text.as_bytes());
    let config: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &String| -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    };
    let inputs = PipelineInputs {
        graph: config
            .graph
            .as_ref()
            .map(|p| load_graph(&resolve(p), &mut manifest, ctx))
            .transpose()?,
        profile: config
            .profile
            .as_ref()
            .map(|p| load_profile(&resolve(p), &mut manifest))
            .transpose()?,
        model: config
            .model
            .as_ref()
            .map(|p| load_model(&resolve(p), &mut manifest))
            .transpose()?,
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let quad = QuadratureSpec::default();
    let boundary_spec = config
        .boundary
        .as_deref()
        .map(BoundarySpec::parse)
        .transpose()?
        .unwrap_or(BoundarySpec::Zero);
    let mut first_failure: Option<CliError> = None;

    for (index, stage) in config.stages.iter().enumerate() {
        let stage = *stage;
        let file = out_dir.join(format!("{index:02}_{}.json", stage.name()));
        // Each arm yields (report JSON, optional failure for the exit code);
        // hard errors abort the whole pipeline immediately.
        let (json, failure): (String, Option<CliError>) = match stage {
            StageKind::Certify => {
                let report = certify_stage(inputs.graph()?, inputs.profile()?)?;
                let failure = (!report.passed).then(|| {
                    CliError::Certification(format!(
                        "{} separation violation(s)",
                        report.violations.len()
                    ))
                });
                (canonical(&report)?, failure)
            }
            StageKind::Constants => {
                let report = constants_stage(inputs.model()?, inputs.graph.as_ref(), &quad)?;
                let failure = (!report.pair_envelope.passed || !report.site_coercivity.passed)
                    .then(|| CliError::Inequality("declared envelope check failed".into()));
                (canonical(&report)?, failure)
            }
            StageKind::Summability => {
                let report = summability_stage(
                    inputs.graph()?,
                    config.alpha,
                    config.theta,
                    inputs.profile.as_ref(),
                )?;
                let failure = report
                    .domination
                    .as_ref()
                    .filter(|d| !d.passed)
                    .map(|_| CliError::Inequality("domination bound failed".into()));
                (canonical(&report)?, failure)
            }
            StageKind::VerifyGrowth => {
                let report = growth_stage(inputs.graph()?, inputs.profile()?, config.theta)?;
                let failure = (!report.passed).then(|| {
                    CliError::Inequality(format!(
                        "{} sphere-growth violation(s)",
                        report.violations
                    ))
                });
                (canonical(&report)?, failure)
            }
            StageKind::VerifyLemma1 => {
                let report = lemma1_stage(
                    inputs.graph()?,
                    inputs.model()?,
                    config.lemma1_trials,
                    ctx.seed,
                    ctx.tolerance,
                    &quad,
                )?;
                let failure = (!report.passed).then(|| {
                    CliError::Inequality(format!(
                        "{} moment-bound trial(s) failed",
                        report.failures
                    ))
                });
                (canonical(&report)?, failure)
            }
            StageKind::VerifyDlr => {
                let graph = inputs.graph()?;
                let mut volume = config.dlr_volume.clone().unwrap_or_else(Vec::new);
                if volume.is_empty() {
                    volume = bfs_order(graph)?
                        .into_iter()
                        .take(2.min(graph.num_vertices()))
                        .collect();
                }
                volume.sort_unstable();
                let subset = config
                    .dlr_subset
                    .clone()
                    .unwrap_or_else(|| vec![volume[0]]);
                let boundary = boundary_spec.realize(graph)?;
                let report = dlr_stage(
                    graph,
                    inputs.model()?,
                    &volume,
                    &subset,
                    &boundary,
                    ctx.budget,
                    ctx.tolerance,
                    &quad,
                )?;
                let failure = (!report.passed).then(|| {
                    CliError::Inequality(format!(
                        "kernel consistency discrepancy {}",
                        report.max_discrepancy
                    ))
                });
                (canonical(&report)?, failure)
            }
            StageKind::Sample => {
                let graph = inputs.graph()?;
                let volume = match &config.sample_volume {
                    Some(v) => {
                        let mut v = v.clone();
                        v.sort_unstable();
                        v
                    }
                    None => {
                        let mut v: Vec<usize> = bfs_order(graph)?
                            .into_iter()
                            .take(4.min(graph.num_vertices()))
                            .collect();
                        v.sort_unstable();
                        v
                    }
                };
                let boundary = boundary_spec.realize(graph)?;
                let stats = sample_stage(
                    graph,
                    inputs.model()?,
                    &volume,
                    &boundary,
                    config.sample_sweeps,
                    ctx.seed,
                    &quad,
                )?;
                (canonical(&stats)?, None)
            }
            StageKind::MonitorNorm => {
                let graph = inputs.graph()?;
                let sizes = config
                    .monitor_sizes
                    .clone()
                    .unwrap_or_else(|| vec![2.min(graph.num_vertices()), 4.min(graph.num_vertices())]);
                let boundary = boundary_spec.realize(graph)?;
                let curve = monitor_stage(
                    graph,
                    inputs.model()?,
                    &sizes,
                    &boundary,
                    config.monitor_sweeps,
                    ctx.seed,
                    None,
                    &quad,
                )?;
                let csv = norm_curve_csv(&curve);
                let csv_file = out_dir.join(format!("{index:02}_{}.csv", stage.name()));
                write_text(&csv_file, &csv)?;
                manifest.record_output(&csv_file, csv.as_bytes());
                (canonical(&curve)?, None)
            }
        };
        write_text(&file, &json)?;
        manifest.record_output(&file, json.as_bytes());
        if let Some(err) = failure {
            first_failure.get_or_insert(err);
        }
    }

    let manifest_file = out_dir.join("manifest.json");
    let text = manifest.to_json()?;
    write_text(&manifest_file, &text)?;
    match first_failure {
        None => Ok(()),
        Some(err) => Err(err),
    }
}
