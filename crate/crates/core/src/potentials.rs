//! Interaction catalog: symmetric pair potentials with declared growth
//! envelopes, coercive single-site potentials, parameter admissibility, and
//! the explicit coupling/capacity constants computed by quadrature.
//!
//! Envelope and coercivity constants are user-declared and verified by grid
//! sampling rather than inferred; tight-constant search is out of scope.

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::quadrature::{
    abs_powf, integrate_real_line, DecayEnvelope, QuadratureError, QuadratureSpec,
};

/// Errors from potential construction and constant evaluation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum PotentialError {
    #[error("exponent p = {p} must exceed the pair growth exponent r = {r}")]
    ExponentOrder { p: f64, r: f64 },
    #[error("parameter {name} = {value} out of range: {requirement}")]
    BadParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("moment integral diverges: growth exponent p = {p}, decay exponent q = {q}, growth rate {rate} vs coercivity {a_v}")]
    NonIntegrable { p: f64, q: f64, rate: f64, a_v: f64 },
    #[error("vertices {x} and {y} are not adjacent")]
    NotAdjacent { x: usize, y: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Built-in symmetric pair interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairKind {
    /// No coupling; the measure factorizes over sites.
    Zero,
    /// `W(u, v) = j * u * v`.
    Bilinear { j: f64 },
    /// `W(u, v) = j * (u - v)^2 / 2` with `j >= 0`.
    Gradient { j: f64 },
}

/// A pair potential together with its declared envelope
/// `|W(u,v)| <= [i_w + j_w (|u|^r + |v|^r)] / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairPotential {
    pub kind: PairKind,
    pub i_w: f64,
    pub j_w: f64,
    pub r: f64,
}

impl PairPotential {
    pub fn zero() -> Self {
        PairPotential {
            kind: PairKind::Zero,
            i_w: 0.0,
            j_w: 0.0,
            r: 2.0,
        }
    }

    /// `W(u,v) = j u v`; envelope from the arithmetic–geometric mean bound.
    pub fn bilinear(j: f64) -> Self {
        PairPotential {
            kind: PairKind::Bilinear { j },
            i_w: 0.0,
            j_w: j.abs(),
            r: 2.0,
        }
    }

    /// `W(u,v) = j (u-v)^2 / 2`; envelope from `(u-v)^2 <= 2u^2 + 2v^2`.
    pub fn gradient(j: f64) -> Self {
        PairPotential {
            kind: PairKind::Gradient { j },
            i_w: 0.0,
            j_w: 2.0 * j.abs(),
            r: 2.0,
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self.kind {
            PairKind::Zero => 0.0,
            PairKind::Bilinear { j } => j * u * v,
            PairKind::Gradient { j } => 0.5 * j * (u - v) * (u - v),
        }
    }

    /// Envelope right-hand side `[i_w + j_w (|u|^r + |v|^r)] / 2`.
    pub fn envelope(&self, u: f64, v: f64) -> f64 {
        0.5 * (self.i_w + self.j_w * (abs_powf(u, self.r) + abs_powf(v, self.r)))
    }

    fn validate(&self) -> Result<(), PotentialError> {
        if self.i_w < 0.0 {
            return Err(PotentialError::BadParameter {
                name: "i_w",
                value: self.i_w,
                requirement: "must be >= 0",
            });
        }
        if self.j_w < 0.0 {
            return Err(PotentialError::BadParameter {
                name: "j_w",
                value: self.j_w,
                requirement: "must be >= 0",
            });
        }
        if !(self.r > 0.0) {
            return Err(PotentialError::BadParameter {
                name: "r",
                value: self.r,
                requirement: "must be > 0",
            });
        }
        if let PairKind::Gradient { j } = self.kind {
            if j < 0.0 {
                return Err(PotentialError::BadParameter {
                    name: "j",
                    value: j,
                    requirement: "gradient coupling must be >= 0",
                });
            }
        }
        Ok(())
    }
}

/// Built-in single-site potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SiteKind {
    /// `V(u) = u^4 - u^2`.
    DoubleWell,
    /// `V(u) = u^4`.
    Quartic,
}

/// A site potential with its declared coercivity
/// `V(u) >= a_v |u|^q - c_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SitePotential {
    pub kind: SiteKind,
    pub a_v: f64,
    pub c_v: f64,
    pub q: f64,
}

impl SitePotential {
    pub fn double_well() -> Self {
        SitePotential {
            kind: SiteKind::DoubleWell,
            a_v: 0.5,
            c_v: 0.5,
            q: 4.0,
        }
    }

    pub fn quartic() -> Self {
        SitePotential {
            kind: SiteKind::Quartic,
            a_v: 1.0,
            c_v: 0.0,
            q: 4.0,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u2 = u * u;
        match self.kind {
            SiteKind::DoubleWell => u2 * u2 - u2,
            SiteKind::Quartic => u2 * u2,
        }
    }

    /// Coercivity floor `a_v |u|^q - c_v`.
    pub fn floor(&self, u: f64) -> f64 {
        self.a_v * abs_powf(u, self.q) - self.c_v
    }

    fn validate(&self) -> Result<(), PotentialError> {
        if !(self.a_v > 0.0) {
            return Err(PotentialError::BadParameter {
                name: "a_v",
                value: self.a_v,
                requirement: "must be > 0",
            });
        }
        if self.c_v < 0.0 {
            return Err(PotentialError::BadParameter {
                name: "c_v",
                value: self.c_v,
                requirement: "must be >= 0",
            });
        }
        if !(self.q > 2.0) {
            return Err(PotentialError::BadParameter {
                name: "q",
                value: self.q,
                requirement: "must be > 2",
            });
        }
        Ok(())
    }
}

/// The full catalog of built-in potentials with their declared constants.
pub fn builtin_pair_potentials() -> Vec<(&'static str, PairPotential)> {
    vec![
        ("zero", PairPotential::zero()),
        ("bilinear(j=1)", PairPotential::bilinear(1.0)),
        ("gradient(j=1)", PairPotential::gradient(1.0)),
    ]
}

pub fn builtin_site_potentials() -> Vec<(&'static str, SitePotential)> {
    vec![
        ("double_well", SitePotential::double_well()),
        ("quartic", SitePotential::quartic()),
    ]
}

/// Uniform sampling grid for envelope/coercivity verification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of the symmetric window `[-max_abs, max_abs]`.
    pub max_abs: f64,
    /// Number of sample points per axis.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            max_abs: 50.0,
            points: 2001,
        }
    }
}

impl GridSpec {
    fn node(&self, i: usize) -> f64 {
        let n = self.points.max(2);
        -self.max_abs + 2.0 * self.max_abs * (i as f64) / ((n - 1) as f64)
    }
}

/// Result of a grid scan of a declared inequality.
#[derive(Debug, Clone, Serialize)]
pub struct SlackReport {
    pub min_slack: f64,
    /// Grid point attaining the minimum (second coordinate 0 for 1-D scans).
    pub argmin: (f64, f64),
    pub passed: bool,
    pub grid_points: usize,
}

const SLACK_TOLERANCE: f64 = 1e-12;

/// Scans `envelope(u,v) - |W(u,v)|` over the grid; fails when the minimum
/// slack dips below `-1e-12`.
pub fn check_envelope(pair: &PairPotential, grid: &GridSpec) -> SlackReport {
    let n = grid.points.max(2);
    let mut min_slack = f64::INFINITY;
    let mut argmin = (0.0, 0.0);
    for i in 0..n {
        let u = grid.node(i);
        for j in 0..n {
            let v = grid.node(j);
            let slack = pair.envelope(u, v) - pair.eval(u, v).abs();
            if slack < min_slack {
                min_slack = slack;
                argmin = (u, v);
            }
        }
    }
    SlackReport {
        min_slack,
        argmin,
        passed: min_slack >= -SLACK_TOLERANCE,
        grid_points: n * n,
    }
}

/// Scans `V(u) - (a_v |u|^q - c_v)` over the grid.
pub fn check_coercivity(site: &SitePotential, grid: &GridSpec) -> SlackReport {
    let n = grid.points.max(2);
    let mut min_slack = f64::INFINITY;
    let mut argmin = (0.0, 0.0);
    for i in 0..n {
        let u = grid.node(i);
        let slack = site.eval(u) - site.floor(u);
        if slack < min_slack {
            min_slack = slack;
            argmin = (u, 0.0);
        }
    }
    SlackReport {
        min_slack,
        argmin,
        passed: min_slack >= -SLACK_TOLERANCE,
        grid_points: n,
    }
}

/// Pointwise envelope bound with a free Young-inequality split:
/// `kappa (|u|^p + |v|^p) + i_w/2 + 2(p-r) (j_w/2p)^(p/(p-r)) (r/kappa)^(r/(p-r))`.
/// Dominates `|W(u,v)|` for every conforming potential.
pub fn kappa_envelope_rhs(
    pair: &PairPotential,
    kappa: f64,
    p: f64,
    u: f64,
    v: f64,
) -> Result<f64, PotentialError> {
    if !(p > pair.r) {
        return Err(PotentialError::ExponentOrder { p, r: pair.r });
    }
    if !(kappa > 0.0) {
        return Err(PotentialError::BadParameter {
            name: "kappa",
            value: kappa,
            requirement: "must be > 0",
        });
    }
    let r = pair.r;
    let slack_term = 2.0 * (p - r)
        * (pair.j_w / (2.0 * p)).powf(p / (p - r))
        * (r / kappa).powf(r / (p - r));
    Ok(kappa * (abs_powf(u, p) + abs_powf(v, p)) + 0.5 * pair.i_w + slack_term)
}

/// Coupling constant `gamma(beta, p) = i_w + 4(p-r) (j_w/2p)^(p/(p-r)) (r/beta)^(r/(p-r))`.
pub fn gamma_coupling(pair: &PairPotential, beta: f64, p: f64) -> Result<f64, PotentialError> {
    if !(p > pair.r) {
        return Err(PotentialError::ExponentOrder { p, r: pair.r });
    }
    if !(beta > 0.0) {
        return Err(PotentialError::BadParameter {
            name: "beta",
            value: beta,
            requirement: "must be > 0",
        });
    }
    let r = pair.r;
    Ok(pair.i_w
        + 4.0 * (p - r) * (pair.j_w / (2.0 * p)).powf(p / (p - r)) * (r / beta).powf(r / (p - r)))
}

/// Degree-weighted coupling for an edge: `(gamma, gamma * (n(x) n(y))^(r/(p-r)))`.
pub fn edge_coupling(
    pair: &PairPotential,
    beta: f64,
    p: f64,
    graph: &Graph,
    x: usize,
    y: usize,
) -> Result<(f64, f64), PotentialError> {
    if graph.neighbors(x).binary_search(&y).is_err() {
        return Err(PotentialError::NotAdjacent { x, y });
    }
    let gamma = gamma_coupling(pair, beta, p)?;
    let degrees = (graph.degree(x) * graph.degree(y)) as f64;
    Ok((gamma, gamma * degrees.powf(pair.r / (p - pair.r))))
}

/// Capacity constant and its two underlying integrals.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityConstant {
    pub value: f64,
    /// `int exp((lambda + beta)|u|^p - a_v |u|^q) du`.
    pub moment_integral: f64,
    /// `int exp(-beta |u|^p - V(u)) du`.
    pub partition_integral: f64,
}

/// Envelope for `exp(rate * |u|^p - a_v |u|^q)`; folds `p == q` into the
/// decay coefficient and rejects non-integrable combinations.
fn moment_envelope(
    log_scale: f64,
    rate: f64,
    p: f64,
    a_v: f64,
    q: f64,
) -> Result<DecayEnvelope, PotentialError> {
    if p > q || (p == q && rate >= a_v) {
        return Err(PotentialError::NonIntegrable { p, q, rate, a_v });
    }
    if p == q {
        return Ok(DecayEnvelope::new(log_scale, vec![], a_v - rate, q));
    }
    let growth = if rate > 0.0 { vec![(rate, p)] } else { vec![] };
    Ok(DecayEnvelope::new(log_scale, growth, a_v, q))
}

/// `C(beta, lambda, p) = c_v + ln moment_integral - ln partition_integral`,
/// both integrals by certified adaptive quadrature.
pub fn capacity_constant(
    site: &SitePotential,
    beta: f64,
    lambda: f64,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<CapacityConstant, PotentialError> {
    site.validate()?;
    if !(beta > 0.0) || !(lambda >= 0.0) || !(p > 0.0) {
        return Err(PotentialError::BadParameter {
            name: "beta/lambda/p",
            value: beta,
            requirement: "beta > 0, lambda >= 0, p > 0",
        });
    }
    let rate = lambda + beta;
    let env = moment_envelope(0.0, rate, p, site.a_v, site.q)?;
    let moment = integrate_real_line(&|u: f64| (rate * abs_powf(u, p) - site.a_v * abs_powf(u, site.q)).exp(), &env, quad)?;
    // The partition integrand is dominated by exp(c_v - a_v |u|^q) since the
    // beta term only helps.
    let env2 = DecayEnvelope::new(site.c_v, vec![], site.a_v, site.q);
    let partition = integrate_real_line(
        &|u: f64| (-beta * abs_powf(u, p) - site.eval(u)).exp(),
        &env2,
        quad,
    )?;
    Ok(CapacityConstant {
        value: site.c_v + moment.value.ln() - partition.value.ln(),
        moment_integral: moment.value,
        partition_integral: partition.value,
    })
}

/// Full parameter pack for a model run.
#[derive(Debug, Clone, Serialize)]
pub struct ModelParams {
    pub pair: PairPotential,
    pub site: SitePotential,
    /// Degree-sum exponent used throughout the graph functionals.
    pub theta: f64,
    /// Upper end of the tempering-rate interval; a modeling input.
    pub alpha_bar: f64,
    pub beta: f64,
    pub lambda: f64,
    pub p: f64,
}

impl ModelParams {
    pub fn exponent_floor(&self) -> f64 {
        self.pair.r + self.pair.r / self.theta
    }
}

/// Outcome of the parameter admissibility audit.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub p_floor: f64,
    /// `q > r + r/theta`, strictly.
    pub exponent_gap_ok: bool,
    /// `p` lies in `[p_floor, q)`.
    pub p_in_window: bool,
    /// `2 beta e^(alpha_bar) < lambda`.
    pub rate_condition_ok: bool,
    /// Worst vertex value of `sum_(y~x) 2 beta / (lambda n(x) n(y))`.
    pub degree_condition_max: Option<f64>,
    pub degree_condition_vertex: Option<usize>,
    pub degree_condition_ok: Option<bool>,
    pub passed: bool,
}

const DEGREE_CONDITION_TOLERANCE: f64 = 1e-14;

/// Checks the exponent window, the rate condition, and (when a graph is
/// supplied) the per-vertex degree condition
/// `sum_(y~x) 2 beta / (lambda n(x) n(y)) <= 1`.
pub fn admissibility(model: &ModelParams, graph: Option<&Graph>) -> AdmissibilityReport {
    let p_floor = model.exponent_floor();
    let q = model.site.q;
    let exponent_gap_ok = q > p_floor;
    let p_in_window = model.p >= p_floor && model.p < q;
    let rate_condition_ok = 2.0 * model.beta * model.alpha_bar.exp() < model.lambda;
    let (mut max_val, mut max_vertex, mut degree_ok) = (None, None, None);
    if let Some(g) = graph {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_x = 0;
        for x in 0..g.num_vertices() {
            let nx = g.degree(x) as f64;
            let total: f64 = g
                .neighbors(x)
                .iter()
                .map(|&y| 2.0 * model.beta / (model.lambda * nx * g.degree(y) as f64))
                .sum();
            if total > worst {
                worst = total;
                worst_x = x;
            }
        }
        max_val = Some(worst);
        max_vertex = Some(worst_x);
        degree_ok = Some(worst <= 1.0 + DEGREE_CONDITION_TOLERANCE);
    }
    let passed =
        exponent_gap_ok && p_in_window && rate_condition_ok && degree_ok.unwrap_or(true);
    AdmissibilityReport {
        p_floor,
        exponent_gap_ok,
        p_in_window,
        rate_condition_ok,
        degree_condition_max: max_val,
        degree_condition_vertex: max_vertex,
        degree_condition_ok: degree_ok,
        passed,
    }
}

/// On-disk model configuration. Declared envelope constants may be
/// overridden; anything omitted takes the catalog default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub pair: PairConfig,
    pub site: SiteConfig,
    pub theta: f64,
    pub alpha_bar: f64,
    pub beta: f64,
    pub lambda: f64,
    pub p: f64,
}

// `deny_unknown_fields` cannot be combined with `flatten`, so typos in the
// kind-specific keys surface as deserialization errors from the tag enum
// instead of being rejected here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairConfig {
    #[serde(flatten)]
    pub kind: PairKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteConfig {
    #[serde(flatten)]
    pub kind: SiteKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl ModelConfig {
    /// Resolves catalog defaults and overrides into validated parameters.
    pub fn build(&self) -> Result<ModelParams, PotentialError> {
        let mut pair = match self.pair.kind {
            PairKind::Zero => PairPotential::zero(),
            PairKind::Bilinear { j } => PairPotential::bilinear(j),
            PairKind::Gradient { j } => PairPotential::gradient(j),
        };
        if let Some(i_w) = self.pair.i_w {
            pair.i_w = i_w;
        }
        if let Some(j_w) = self.pair.j_w {
            pair.j_w = j_w;
        }
        if let Some(r) = self.pair.r {
            pair.r = r;
        }
        pair.validate()?;
        let mut site = match self.site.kind {
            SiteKind::DoubleWell => SitePotential::double_well(),
            SiteKind::Quartic => SitePotential::quartic(),
        };
        if let Some(a_v) = self.site.a_v {
            site.a_v = a_v;
        }
        if let Some(c_v) = self.site.c_v {
            site.c_v = c_v;
        }
        if let Some(q) = self.site.q {
            site.q = q;
        }
        site.validate()?;
        for (name, value, ok) in [
            ("theta", self.theta, self.theta > 0.0),
            ("beta", self.beta, self.beta > 0.0),
            ("lambda", self.lambda, self.lambda > 0.0),
            ("p", self.p, self.p > 0.0),
            ("alpha_bar", self.alpha_bar, self.alpha_bar > 0.0),
        ] {
            if !ok {
                return Err(PotentialError::BadParameter {
                    name,
                    value,
                    requirement: "must be > 0",
                });
            }
        }
        Ok(ModelParams {
            pair,
            site,
            theta: self.theta,
            alpha_bar: self.alpha_bar,
            beta: self.beta,
            lambda: self.lambda,
            p: self.p,
        })
    }
}
