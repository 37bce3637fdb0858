//! Finite-volume Gibbs machinery over a weighted graph model: local
//! Hamiltonians, certified single-site conditional integrals, an
//! exact-to-tolerance inverse-CDF heat-bath sampler, volume MCMC with
//! batch-means statistics, tensor-grid quadrature oracles for volumes of up
//! to three sites, and the kernel-consistency check that nests them.
//!
//! Conventions: a volume is a set of active vertices; everything outside it
//! is a frozen boundary. Energies are `sum_edges W + sum_sites V` with each
//! interior edge counted once. Integrals that can overflow `f64` are carried
//! in log space with explicit shifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, KahanSum};
use crate::potentials::{capacity_constant, gamma_coupling, ModelParams, PotentialError};
use crate::quadrature::{
    abs_powf, gauss_kronrod_15, integrate_real_line, peak_log, DecayEnvelope, PanelGrid,
    QuadratureError, QuadratureSpec,
};

/// Largest volume the tensor-grid oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 3;
/// Hard ceiling on the tabulated-CDF sampler's Kolmogorov distance.
pub const SAMPLER_KOLMOGOROV_LIMIT: f64 = 1e-6;
/// Relative tolerance granted to the single-site moment bound check.
pub const LEMMA1_TOLERANCE: f64 = 1e-6;
/// Discrepancy allowed by the kernel-consistency check.
pub const DLR_TOLERANCE: f64 = 1e-6;
/// Default evaluation budget for the nested consistency check.
pub const DLR_DEFAULT_BUDGET: u64 = 2_000_000_000;

/// Stride mixing a base seed into per-volume chain seeds.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
/// Largest panel mass, as a fraction of the total, kept by the sampler.
const SPLIT_FRACTION: f64 = 1.0 / 64.0;
/// Mass resolution, as a fraction of the total, of the sampler inversion.
const DESCENT_FRACTION: f64 = 1e-7;
/// Certified bound required on the tensor grid's out-of-window mass ratio.
const GRID_TAIL_TARGET: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error("active set is empty")]
    EmptyVolume,
    #[error("vertex {0} is out of range")]
    VertexOutOfRange(usize),
    #[error("vertex {0} appears twice in the active set")]
    DuplicateVertex(usize),
    #[error("vertex {vertex} is not in the active set")]
    NotActive { vertex: usize },
    #[error("non-finite spin value at vertex {vertex}")]
    NonFiniteValue { vertex: usize },
    #[error("value vector has length {got}, expected {expected}")]
    ValueLength { got: usize, expected: usize },
    #[error("volume of size {size} exceeds the tensor-grid limit {limit}")]
    VolumeTooLarge { size: usize, limit: usize },
    #[error("vertex {vertex} is not inside the conditioning volume")]
    NotASubset { vertex: usize },
    #[error("volume {index} is not contained in volume {}", index + 1)]
    NotNested { index: usize },
    #[error("{sweeps} sweeps leave no samples after a burn-in of {burn_in}")]
    TooFewSweeps { sweeps: usize, burn_in: usize },
    #[error("parameter {name} = {value} violates: {requirement}")]
    BadParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("exponent {p} outside the admissible window [{floor}, {q})")]
    ExponentWindow { p: f64, floor: f64, q: f64 },
    #[error(
        "growth term {coef}*|u|^{power} is not dominated by the site decay {a_v}*|u|^{q}"
    )]
    DivergentMoment {
        coef: f64,
        power: f64,
        a_v: f64,
        q: f64,
    },
    #[error("conditional density mass {total} is not positive")]
    DegenerateDensity { total: f64 },
    #[error("sampler Kolmogorov bound {bound} exceeds the limit {limit}")]
    SamplerTolerance { bound: f64, limit: f64 },
    #[error("estimated cost {estimated} exceeds the evaluation budget {budget}")]
    BudgetExceeded { estimated: u64, budget: u64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A spin configuration split into an active volume and a frozen boundary.
/// `values` covers every vertex; samplers may only write inside the volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    values: Vec<f64>,
    active: Vec<usize>,
    membership: Vec<bool>,
}

impl SpinConfiguration {
    /// `values` supplies both the boundary condition (outside `active`) and
    /// the initial interior state.
    pub fn new(graph: &Graph, active: &[usize], values: &[f64]) -> Result<Self, GibbsError> {
        let n = graph.num_vertices();
        if values.len() != n {
            return Err(GibbsError::ValueLength {
                got: values.len(),
                expected: n,
            });
        }
        if active.is_empty() {
            return Err(GibbsError::EmptyVolume);
        }
        for (x, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GibbsError::NonFiniteValue { vertex: x });
            }
        }
        let mut membership = vec![false; n];
        for &x in active {
            if x >= n {
                return Err(GibbsError::VertexOutOfRange(x));
            }
            if membership[x] {
                return Err(GibbsError::DuplicateVertex(x));
            }
            membership[x] = true;
        }
        let mut sorted = active.to_vec();
        sorted.sort_unstable();
        Ok(SpinConfiguration {
            values: values.to_vec(),
            active: sorted,
            membership,
        })
    }

    pub fn value(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Active vertices in increasing order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, x: usize) -> bool {
        self.membership.get(x).copied().unwrap_or(false)
    }

    pub fn set(&mut self, x: usize, u: f64) -> Result<(), GibbsError> {
        if !self.is_active(x) {
            return Err(GibbsError::NotActive { vertex: x });
        }
        if !u.is_finite() {
            return Err(GibbsError::NonFiniteValue { vertex: x });
        }
        self.values[x] = u;
        Ok(())
    }
}

/// `H_Lambda(omega | xi)`: interior pair terms (each edge once), coupling to
/// the boundary, and one site term per active vertex.
pub fn local_hamiltonian(graph: &Graph, model: &ModelParams, config: &SpinConfiguration) -> f64 {
    let mut acc = KahanSum::default();
    for &x in config.active() {
        let u = config.value(x);
        for &y in graph.neighbors(x) {
            if config.is_active(y) {
                if y > x {
                    acc.add(model.pair.eval(u, config.value(y)));
                }
            } else {
                acc.add(model.pair.eval(u, config.value(y)));
            }
        }
        acc.add(model.site.eval(u));
    }
    acc.value()
}

/// Energy of holding `u` at `x` with every other coordinate frozen at the
/// configuration's current values; the single-site conditional density is
/// proportional to `exp(-site_energy)`.
pub fn site_energy(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    u: f64,
) -> f64 {
    let mut acc = KahanSum::default();
    for &y in graph.neighbors(x) {
        acc.add(model.pair.eval(u, config.value(y)));
    }
    acc.add(model.site.eval(u));
    acc.value()
}

fn energy_with(model: &ModelParams, neighbor_values: &[f64], u: f64) -> f64 {
    let mut acc = KahanSum::default();
    for &v in neighbor_values {
        acc.add(model.pair.eval(u, v));
    }
    acc.add(model.site.eval(u));
    acc.value()
}

/// Analytic envelope for `exp(extra - H_x(u))` given the declared potential
/// constants: pair terms contribute `(J_W/2)|u|^r` per incident edge plus a
/// boundary-dependent constant, the site term is bounded by its coercivity
/// floor. Growth at the decay exponent folds into the decay coefficient.
fn conditional_envelope(
    model: &ModelParams,
    degree: usize,
    boundary_r_sum: f64,
    extra_growth: &[(f64, f64)],
    shift: f64,
) -> Result<DecayEnvelope, GibbsError> {
    let pair = &model.pair;
    let site = &model.site;
    let scale = 0.5 * degree as f64 * pair.i_w + 0.5 * pair.j_w * boundary_r_sum + site.c_v - shift;
    let own = (0.5 * degree as f64 * pair.j_w, pair.r);
    let mut growth = Vec::new();
    let mut decay = site.a_v;
    for &(coef, pow) in std::iter::once(&own).chain(extra_growth) {
        if coef == 0.0 {
            continue;
        }
        if pow < site.q {
            growth.push((coef, pow));
        } else if pow == site.q {
            decay -= coef;
        } else {
            return Err(GibbsError::DivergentMoment {
                coef,
                power: pow,
                a_v: site.a_v,
                q: site.q,
            });
        }
    }
    if !(decay > 0.0) {
        return Err(GibbsError::DivergentMoment {
            coef: site.a_v - decay,
            power: site.q,
            a_v: site.a_v,
            q: site.q,
        });
    }
    Ok(DecayEnvelope::new(scale, growth, decay, site.q))
}

/// A line integral carried with its log to survive large energy offsets.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftedIntegral {
    pub log_value: f64,
    /// Offset subtracted from the log-integrand before quadrature.
    pub shift: f64,
    /// The quadrature value of the shifted integrand.
    pub shifted_value: f64,
    /// Relative error bound: in-window estimate plus certified tail.
    pub rel_error: f64,
    pub radius: f64,
}

impl ShiftedIntegral {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `int exp(lambda |u|^p - H_x(u | xi)) du` by certified adaptive quadrature
/// with an internal shift at the integrand's coarse maximum.
pub fn site_exp_integral(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    lambda: f64,
    p_exp: f64,
    quad: &QuadratureSpec,
) -> Result<ShiftedIntegral, GibbsError> {
    if !(lambda >= 0.0) {
        return Err(GibbsError::BadParameter {
            name: "lambda",
            value: lambda,
            requirement: "lambda >= 0",
        });
    }
    if lambda > 0.0 && !(p_exp > 0.0) {
        return Err(GibbsError::BadParameter {
            name: "p",
            value: p_exp,
            requirement: "p > 0 when lambda > 0",
        });
    }
    if x >= graph.num_vertices() {
        return Err(GibbsError::VertexOutOfRange(x));
    }
    let neighbor_values: Vec<f64> = graph.neighbors(x).iter().map(|&y| config.value(y)).collect();
    let r_sum: f64 = {
        let mut acc = KahanSum::default();
        for &v in &neighbor_values {
            acc.add(abs_powf(v, model.pair.r));
        }
        acc.value()
    };
    let extra = [(lambda, p_exp)];
    let g = |u: f64| lambda * abs_powf(u, p_exp) - energy_with(model, &neighbor_values, u);
    let env0 = conditional_envelope(model, neighbor_values.len(), r_sum, &extra, 0.0)?;
    let shift = coarse_max(&g, &env0)?;
    let env = conditional_envelope(model, neighbor_values.len(), r_sum, &extra, shift)?;
    let line = integrate_real_line(&|u: f64| (g(u) - shift).exp(), &env, quad)?;
    if !(line.value > 0.0) {
        return Err(GibbsError::DegenerateDensity { total: line.value });
    }
    Ok(ShiftedIntegral {
        log_value: line.value.ln() + shift,
        shift,
        shifted_value: line.value,
        rel_error: (line.abs_error + line.tail_bound) / line.value,
        radius: line.radius,
    })
}

/// Coarse maximum of `g` over the window where the envelope retains at least
/// a millionth of its peak; used only to pick a numerically safe shift.
fn coarse_max<F: Fn(f64) -> f64>(g: &F, envelope: &DecayEnvelope) -> Result<f64, GibbsError> {
    let radius = envelope.truncation_radius(peak_log(envelope) + (1e-6f64).ln())?;
    let mut best = f64::NEG_INFINITY;
    let steps = 256;
    for i in 0..=steps {
        let u = -radius + 2.0 * radius * (i as f64) / (steps as f64);
        let v = g(u);
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Normalizing mass `Z_x(xi)` of the single-site conditional at `x`.
pub fn single_site_partition(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    quad: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    Ok(site_exp_integral(graph, model, config, x, 0.0, model.p, quad)?.value())
}

/// `E[exp(lambda |u|^p)]` under the single-site conditional at `x`: the
/// ratio of two certified line integrals, computed in log space.
pub fn single_site_exp_moment(
    lambda: f64,
    p_exp: f64,
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    quad: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    let numerator = site_exp_integral(graph, model, config, x, lambda, p_exp, quad)?;
    let denominator = site_exp_integral(graph, model, config, x, 0.0, p_exp, quad)?;
    Ok((numerator.log_value - denominator.log_value).exp())
}

/// The explicit single-site moment bound, split into its three summands.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma1Bound {
    pub log_value: f64,
    pub value: f64,
    /// Capacity constant from the two reference integrals.
    pub capacity: f64,
    /// `sum_(y~x) 2 beta |xi(y)|^p / (n(x) n(y))`.
    pub boundary_term: f64,
    /// `sum_(y~x) Gamma_xy(beta, p)`.
    pub coupling_term: f64,
}

/// Evaluates the closed-form upper bound on the single-site exponential
/// moment for coupling weight `beta`.
pub fn lemma1_rhs(
    beta: f64,
    lambda: f64,
    p_exp: f64,
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    quad: &QuadratureSpec,
) -> Result<Lemma1Bound, GibbsError> {
    check_moment_window(beta, lambda, p_exp, model)?;
    if x >= graph.num_vertices() {
        return Err(GibbsError::VertexOutOfRange(x));
    }
    let capacity = capacity_constant(&model.site, beta, lambda, p_exp, quad)?;
    let gamma = gamma_coupling(&model.pair, beta, p_exp)?;
    let n_x = graph.degree(x) as f64;
    let ratio = model.pair.r / (p_exp - model.pair.r);
    let mut boundary = KahanSum::default();
    let mut coupling = KahanSum::default();
    for &y in graph.neighbors(x) {
        let n_y = graph.degree(y) as f64;
        boundary.add(2.0 * beta * abs_powf(config.value(y), p_exp) / (n_x * n_y));
        coupling.add(gamma * (n_x * n_y).powf(ratio));
    }
    let log_value = capacity.value + boundary.value() + coupling.value();
    Ok(Lemma1Bound {
        log_value,
        value: log_value.exp(),
        capacity: capacity.value,
        boundary_term: boundary.value(),
        coupling_term: coupling.value(),
    })
}

fn check_moment_window(
    beta: f64,
    lambda: f64,
    p_exp: f64,
    model: &ModelParams,
) -> Result<(), GibbsError> {
    if !(beta > 0.0) {
        return Err(GibbsError::BadParameter {
            name: "beta",
            value: beta,
            requirement: "beta > 0",
        });
    }
    if !(lambda >= 0.0) {
        return Err(GibbsError::BadParameter {
            name: "lambda",
            value: lambda,
            requirement: "lambda >= 0",
        });
    }
    let floor = model.exponent_floor();
    if !(p_exp >= floor && p_exp < model.site.q) {
        return Err(GibbsError::ExponentWindow {
            p: p_exp,
            floor,
            q: model.site.q,
        });
    }
    Ok(())
}

/// Outcome of checking the moment bound at one `(x, xi, beta, lambda, p)`.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub vertex: usize,
    pub beta: f64,
    pub lambda: f64,
    pub p: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// `log_rhs - log_lhs`; nonnegative up to tolerance when the bound holds.
    pub slack_log: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Quadrature LHS vs. closed-form RHS of the single-site moment bound,
/// compared in log space so large capacities cannot overflow.
pub fn verify_lemma1(
    beta: f64,
    lambda: f64,
    p_exp: f64,
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    quad: &QuadratureSpec,
) -> Result<Lemma1Report, GibbsError> {
    if !(lambda > 0.0) {
        return Err(GibbsError::BadParameter {
            name: "lambda",
            value: lambda,
            requirement: "lambda > 0",
        });
    }
    let rhs = lemma1_rhs(beta, lambda, p_exp, graph, model, config, x, quad)?;
    let numerator = site_exp_integral(graph, model, config, x, lambda, p_exp, quad)?;
    let denominator = site_exp_integral(graph, model, config, x, 0.0, p_exp, quad)?;
    let log_lhs = numerator.log_value - denominator.log_value;
    let slack_log = rhs.log_value - log_lhs;
    Ok(Lemma1Report {
        vertex: x,
        beta,
        lambda,
        p: p_exp,
        log_lhs,
        log_rhs: rhs.log_value,
        slack_log,
        tolerance: LEMMA1_TOLERANCE,
        passed: slack_log >= -LEMMA1_TOLERANCE,
    })
}

/// Inverse-CDF sampler for one site's conditional density. The density is
/// integrated once into mass panels; draws invert the tabulated CDF by
/// dyadic mass descent, so each draw is exact to `kolmogorov_bound`.
#[derive(Debug, Clone)]
pub struct SiteSampler {
    neighbor_values: Vec<f64>,
    shift: f64,
    panels: Vec<MassPanel>,
    /// Prefix masses; `prefix[i]` is the mass strictly left of panel `i`.
    prefix: Vec<f64>,
    total: f64,
    /// Certified bound on the Kolmogorov distance of drawn samples.
    pub kolmogorov_bound: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy)]
struct MassPanel {
    a: f64,
    b: f64,
    mass: f64,
}

impl SiteSampler {
    pub fn build(
        graph: &Graph,
        model: &ModelParams,
        config: &SpinConfiguration,
        x: usize,
        quad: &QuadratureSpec,
    ) -> Result<Self, GibbsError> {
        if x >= graph.num_vertices() {
            return Err(GibbsError::VertexOutOfRange(x));
        }
        let neighbor_values: Vec<f64> =
            graph.neighbors(x).iter().map(|&y| config.value(y)).collect();
        let mut r_sum = KahanSum::default();
        for &v in &neighbor_values {
            r_sum.add(abs_powf(v, model.pair.r));
        }
        let g = |u: f64| -energy_with(model, &neighbor_values, u);
        let env0 = conditional_envelope(model, neighbor_values.len(), r_sum.value(), &[], 0.0)?;
        let shift = coarse_max(&g, &env0)?;
        let env = conditional_envelope(model, neighbor_values.len(), r_sum.value(), &[], shift)?;
        let density = |u: f64| (g(u) - shift).exp();
        let line = integrate_real_line(&density, &env, quad)?;
        if !(line.value > 0.0) {
            return Err(GibbsError::DegenerateDensity { total: line.value });
        }
        // Split panels until none carries more than a fixed mass fraction,
        // which caps the dyadic descent depth per draw.
        let cap = line.value * SPLIT_FRACTION;
        let mut work: Vec<MassPanel> = line
            .panels
            .iter()
            .map(|p| MassPanel {
                a: p.a,
                b: p.b,
                mass: p.value.max(0.0),
            })
            .collect();
        let mut panels = Vec::with_capacity(work.len());
        while let Some(panel) = work.pop() {
            let width_floor = f64::EPSILON * (1.0 + panel.a.abs() + panel.b.abs());
            if panel.mass > cap && panel.b - panel.a > width_floor {
                let mid = 0.5 * (panel.a + panel.b);
                let (left, _) = gauss_kronrod_15(&density, panel.a, mid);
                let (right, _) = gauss_kronrod_15(&density, mid, panel.b);
                work.push(MassPanel {
                    a: panel.a,
                    b: mid,
                    mass: left.max(0.0),
                });
                work.push(MassPanel {
                    a: mid,
                    b: panel.b,
                    mass: right.max(0.0),
                });
            } else {
                panels.push(panel);
            }
        }
        panels.sort_by(|p, q| p.a.total_cmp(&q.a));
        let mut prefix = Vec::with_capacity(panels.len() + 1);
        let mut acc = KahanSum::default();
        prefix.push(0.0);
        for panel in &panels {
            acc.add(panel.mass);
            prefix.push(acc.value());
        }
        let total = *prefix.last().expect("nonempty prefix");
        if !(total > 0.0) {
            return Err(GibbsError::DegenerateDensity { total });
        }
        let kolmogorov_bound =
            (line.abs_error + line.tail_bound) / total + 2.0 * DESCENT_FRACTION;
        if !(kolmogorov_bound <= SAMPLER_KOLMOGOROV_LIMIT) {
            return Err(GibbsError::SamplerTolerance {
                bound: kolmogorov_bound,
                limit: SAMPLER_KOLMOGOROV_LIMIT,
            });
        }
        Ok(SiteSampler {
            neighbor_values,
            shift,
            panels,
            prefix,
            total,
            kolmogorov_bound,
            radius: line.radius,
        })
    }

    /// The shifted conditional density the sampler tabulated.
    pub fn density(&self, model: &ModelParams, u: f64) -> f64 {
        (-energy_with(model, &self.neighbor_values, u) - self.shift).exp()
    }

    /// Normalized CDF of the tabulated density.
    pub fn cdf(&self, model: &ModelParams, u: f64) -> f64 {
        let first = self.panels.first().expect("nonempty panels");
        let last = self.panels.last().expect("nonempty panels");
        if u <= first.a {
            return 0.0;
        }
        if u >= last.b {
            return 1.0;
        }
        let idx = self
            .panels
            .partition_point(|p| p.b < u)
            .min(self.panels.len() - 1);
        let panel = self.panels[idx];
        let (part, _) = gauss_kronrod_15(&|t| self.density(model, t), panel.a, u.min(panel.b));
        ((self.prefix[idx] + part.max(0.0)) / self.total).clamp(0.0, 1.0)
    }

    /// Deterministic quantile transform of `v` in `[0, 1]`.
    pub fn inverse_cdf(&self, model: &ModelParams, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let target = v * self.total;
        let mut idx = match self.prefix.partition_point(|&c| c <= target) {
            0 => 0,
            k => k - 1,
        };
        if idx >= self.panels.len() {
            idx = self.panels.len() - 1;
        }
        let panel = self.panels[idx];
        let mut local = (target - self.prefix[idx]).max(0.0);
        let (mut a, mut b) = (panel.a, panel.b);
        let mut mass = panel.mass;
        let floor_mass = self.total * DESCENT_FRACTION;
        for _ in 0..64 {
            if mass <= floor_mass || b - a <= f64::EPSILON * (1.0 + a.abs() + b.abs()) {
                break;
            }
            let mid = 0.5 * (a + b);
            let (left, _) = gauss_kronrod_15(&|t| self.density(model, t), a, mid);
            let left = left.max(0.0);
            if local <= left {
                b = mid;
                mass = left;
            } else {
                local -= left;
                a = mid;
                mass = (mass - left).max(0.0);
            }
        }
        if mass > 0.0 {
            (a + (local / mass) * (b - a)).clamp(a, b)
        } else {
            0.5 * (a + b)
        }
    }

    /// Draws one sample, consuming exactly one uniform from `rng`.
    pub fn draw(&self, model: &ModelParams, rng: &mut ChaCha8Rng) -> f64 {
        let v: f64 = rng.gen();
        self.inverse_cdf(model, v)
    }
}

/// One exact-to-tolerance draw from the conditional at `x`; builds a fresh
/// sampler, so prefer [`SiteSampler`] when drawing repeatedly.
pub fn sample_site(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    x: usize,
    rng: &mut ChaCha8Rng,
    quad: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    Ok(SiteSampler::build(graph, model, config, x, quad)?.draw(model, rng))
}

/// Order in which a sweep visits the volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    Systematic,
    Random,
}

/// Reproducibility contract for a chain: the seed fans out into one
/// substream per site (streams 1..) plus a scan-order stream (stream 0), so
/// identical seeds and configurations give identical trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerState {
    pub seed: u64,
    pub scan: ScanOrder,
    /// Sweeps discarded before statistics start; default is a tenth.
    pub burn_in: Option<usize>,
    /// Batch count for batch-means standard errors.
    pub batches: usize,
    /// Extra vertex pairs whose product moment is tracked.
    pub track_pairs: Vec<(usize, usize)>,
}

impl Default for SamplerState {
    fn default() -> Self {
        SamplerState {
            seed: 0,
            scan: ScanOrder::Systematic,
            burn_in: None,
            batches: 50,
            track_pairs: Vec::new(),
        }
    }
}

impl SamplerState {
    pub fn with_seed(seed: u64) -> Self {
        SamplerState {
            seed,
            ..SamplerState::default()
        }
    }
}

/// Batch-means estimate: the series is cut into equal batches, the mean is
/// the average of batch means, and the error is their sample spread.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatchStat {
    pub mean: f64,
    pub std_error: f64,
    pub batches: usize,
    pub samples: usize,
}

struct SeriesAccumulator {
    sums: Vec<KahanSum>,
    batch_len: usize,
}

impl SeriesAccumulator {
    fn new(batches: usize, batch_len: usize) -> Self {
        SeriesAccumulator {
            sums: (0..batches).map(|_| KahanSum::default()).collect(),
            batch_len,
        }
    }

    fn push(&mut self, sample_index: usize, value: f64) {
        let b = sample_index / self.batch_len;
        if b < self.sums.len() {
            self.sums[b].add(value);
        }
    }

    fn finish(&self) -> BatchStat {
        let b = self.sums.len();
        let len = self.batch_len as f64;
        let means: Vec<f64> = self.sums.iter().map(|s| s.value() / len).collect();
        let mut acc = KahanSum::default();
        for &m in &means {
            acc.add(m);
        }
        let mean = acc.value() / b as f64;
        let std_error = if b > 1 {
            let mut var = KahanSum::default();
            for &m in &means {
                var.add((m - mean) * (m - mean));
            }
            (var.value() / ((b - 1) as f64 * b as f64)).sqrt()
        } else {
            0.0
        };
        BatchStat {
            mean,
            std_error,
            batches: b,
            samples: b * self.batch_len,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteStats {
    pub vertex: usize,
    pub mean: BatchStat,
    pub second_moment: BatchStat,
    /// `exp(lambda |omega(x)|^p)` at the model's `(lambda, p)`.
    pub exp_moment: BatchStat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairProductStat {
    pub x: usize,
    pub y: usize,
    pub product: BatchStat,
}

/// Statistics from a heat-bath run over one volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcStats {
    pub volume: Vec<usize>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub batch_length: usize,
    pub site_stats: Vec<SiteStats>,
    /// `exp(lambda * sum_x |omega(x)|^p e^(-alpha rho(o,x)))` over the volume
    /// at the model's `(lambda, p, alpha_bar)`.
    pub norm_exp: BatchStat,
    pub pair_products: Vec<PairProductStat>,
}

/// Systematic or random-scan heat bath: every sweep redraws each active site
/// from its exact conditional given the current neighbors.
pub fn mcmc_run(
    graph: &Graph,
    model: &ModelParams,
    active: &[usize],
    values: &[f64],
    sweeps: usize,
    state: &SamplerState,
    quad: &QuadratureSpec,
) -> Result<McmcStats, GibbsError> {
    let mut config = SpinConfiguration::new(graph, active, values)?;
    let volume = config.active().to_vec();
    let burn_in = state.burn_in.unwrap_or(sweeps / 10);
    if sweeps <= burn_in {
        return Err(GibbsError::TooFewSweeps { sweeps, burn_in });
    }
    for &(x, y) in &state.track_pairs {
        for v in [x, y] {
            if v >= graph.num_vertices() {
                return Err(GibbsError::VertexOutOfRange(v));
            }
        }
    }
    let post = sweeps - burn_in;
    let batches = state.batches.clamp(1, post);
    let batch_len = post / batches;

    let dist = graph.distances(graph.root())?;
    let weights: Vec<f64> = volume
        .iter()
        .map(|&x| (-model.alpha_bar * f64::from(dist[x])).exp())
        .collect();

    let mut site_rngs: Vec<ChaCha8Rng> = (0..volume.len())
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
            rng.set_stream(1 + i as u64);
            rng
        })
        .collect();
    let mut scan_rng = ChaCha8Rng::seed_from_u64(state.seed);
    scan_rng.set_stream(0);

    let mut mean_acc: Vec<SeriesAccumulator> = volume
        .iter()
        .map(|_| SeriesAccumulator::new(batches, batch_len))
        .collect();
    let mut second_acc: Vec<SeriesAccumulator> = volume
        .iter()
        .map(|_| SeriesAccumulator::new(batches, batch_len))
        .collect();
    let mut exp_acc: Vec<SeriesAccumulator> = volume
        .iter()
        .map(|_| SeriesAccumulator::new(batches, batch_len))
        .collect();
    let mut norm_acc = SeriesAccumulator::new(batches, batch_len);
    let mut pair_acc: Vec<SeriesAccumulator> = state
        .track_pairs
        .iter()
        .map(|_| SeriesAccumulator::new(batches, batch_len))
        .collect();

    let mut order: Vec<usize> = (0..volume.len()).collect();
    for sweep in 0..sweeps {
        if state.scan == ScanOrder::Random {
            for i in (1..order.len()).rev() {
                let j = (scan_rng.gen::<u64>() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
        }
        for &i in &order {
            let x = volume[i];
            let sampler = SiteSampler::build(graph, model, &config, x, quad)?;
            let u = sampler.draw(model, &mut site_rngs[i]);
            config.set(x, u)?;
        }
        if sweep < burn_in {
            continue;
        }
        let s = sweep - burn_in;
        let mut norm_p = KahanSum::default();
        for (i, &x) in volume.iter().enumerate() {
            let u = config.value(x);
            mean_acc[i].push(s, u);
            second_acc[i].push(s, u * u);
            exp_acc[i].push(s, (model.lambda * abs_powf(u, model.p)).exp());
            norm_p.add(weights[i] * abs_powf(u, model.p));
        }
        norm_acc.push(s, (model.lambda * norm_p.value()).exp());
        for (k, &(x, y)) in state.track_pairs.iter().enumerate() {
            pair_acc[k].push(s, config.value(x) * config.value(y));
        }
    }

    let site_stats = volume
        .iter()
        .enumerate()
        .map(|(i, &x)| SiteStats {
            vertex: x,
            mean: mean_acc[i].finish(),
            second_moment: second_acc[i].finish(),
            exp_moment: exp_acc[i].finish(),
        })
        .collect();
    let pair_products = state
        .track_pairs
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| PairProductStat {
            x,
            y,
            product: pair_acc[k].finish(),
        })
        .collect();
    Ok(McmcStats {
        volume,
        sweeps,
        burn_in,
        batch_length: batch_len,
        site_stats,
        norm_exp: norm_acc.finish(),
        pair_products,
    })
}

/// Test observables for expectations and consistency checks. The first three
/// are bounded continuous; the monomial and pair product are unbounded and
/// serve as moment oracles only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    One,
    /// `tanh(sum_i w_i omega(x_i) + offset)`.
    TanhLinear {
        weights: Vec<(usize, f64)>,
        offset: f64,
    },
    /// `exp(-(sum_i w_i omega(x_i))^2)`.
    ExpNegQuadratic { weights: Vec<(usize, f64)> },
    /// `omega(vertex)^power`.
    Monomial { vertex: usize, power: u32 },
    /// `omega(x) omega(y)`.
    PairProduct { x: usize, y: usize },
}

impl TestFunction {
    /// Vertices the observable reads, sorted and deduplicated.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = match self {
            TestFunction::One => Vec::new(),
            TestFunction::TanhLinear { weights, .. }
            | TestFunction::ExpNegQuadratic { weights } => {
                weights.iter().map(|&(v, _)| v).collect()
            }
            TestFunction::Monomial { vertex, .. } => vec![*vertex],
            TestFunction::PairProduct { x, y } => vec![*x, *y],
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::TanhLinear { weights, offset } => {
                let mut acc = *offset;
                for &(v, w) in weights {
                    acc += w * values[v];
                }
                acc.tanh()
            }
            TestFunction::ExpNegQuadratic { weights } => {
                let mut acc = 0.0;
                for &(v, w) in weights {
                    acc += w * values[v];
                }
                (-acc * acc).exp()
            }
            TestFunction::Monomial { vertex, power } => values[*vertex].powi(*power as i32),
            TestFunction::PairProduct { x, y } => values[*x] * values[*y],
        }
    }
}

/// A reusable tensor quadrature rule over a volume of up to three sites,
/// with a certified bound on the mass outside the integration window.
#[derive(Debug, Clone)]
pub struct VolumeGrid {
    axes: Vec<GridAxis>,
    /// Pairs of axis indices joined by an interior edge.
    interior_edges: Vec<(usize, usize)>,
    /// Certified bound on out-of-window mass relative to the partition mass.
    pub tail_ratio: f64,
}

#[derive(Debug, Clone)]
struct GridAxis {
    vertex: usize,
    grid: PanelGrid,
}

impl VolumeGrid {
    pub fn axis_vertices(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.vertex).collect()
    }

    pub fn axis_len(&self, i: usize) -> usize {
        self.axes[i].grid.len()
    }

    pub fn max_abs_node(&self, i: usize) -> f64 {
        self.axes[i]
            .grid
            .nodes
            .iter()
            .fold(0.0f64, |m, &u| m.max(u.abs()))
    }

    pub fn total_points(&self) -> u64 {
        self.axes.iter().map(|a| a.grid.len() as u64).product()
    }
}

fn axis_quadrature_spec(quad: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: quad.abs_tol.max(1e-12),
        rel_tol: quad.rel_tol.max(1e-8),
        max_subdivisions: 400,
        tail_rel: quad.tail_rel.max(1e-12),
    }
}

/// Builds per-site quadrature axes for the active volume, then certifies
/// that the mass left outside the tensor window is negligible relative to
/// the computed partition mass, widening the axes if necessary.
pub fn volume_grid(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    quad: &QuadratureSpec,
) -> Result<VolumeGrid, GibbsError> {
    let active = config.active();
    if active.len() > BRUTE_FORCE_LIMIT {
        return Err(GibbsError::VolumeTooLarge {
            size: active.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut axis_spec: Vec<QuadratureSpec> = active
        .iter()
        .map(|_| axis_quadrature_spec(quad))
        .collect();

    // Per-site pieces of the separable joint envelope.
    struct AxisPlan {
        vertex: usize,
        scale: f64,
        unit_env: DecayEnvelope,
        unit_mass: f64,
        boundary_r_sum: f64,
        interior_degree: usize,
    }
    let mut plans = Vec::with_capacity(active.len());
    for &x in active {
        let mut boundary_r_sum = KahanSum::default();
        let mut interior_degree = 0usize;
        for &y in graph.neighbors(x) {
            if config.is_active(y) {
                interior_degree += 1;
            } else {
                boundary_r_sum.add(abs_powf(config.value(y), model.pair.r));
            }
        }
        let env = conditional_envelope(model, graph.degree(x), boundary_r_sum.value(), &[], 0.0)?;
        let unit_env = DecayEnvelope::new(0.0, env.growth.clone(), env.decay_coef, env.decay_pow);
        let unit_mass = integrate_real_line(
            &|u: f64| unit_env.log_bound(u).exp(),
            &unit_env,
            &axis_quadrature_spec(quad),
        )?
        .value;
        plans.push(AxisPlan {
            vertex: x,
            scale: env.log_scale,
            unit_env,
            unit_mass,
            boundary_r_sum: boundary_r_sum.value(),
            interior_degree,
        });
    }

    let interior_edges: Vec<(usize, usize)> = {
        let mut edges = Vec::new();
        for (i, &x) in active.iter().enumerate() {
            for (j, &y) in active.iter().enumerate().skip(i + 1) {
                if graph.neighbors(x).contains(&y) {
                    edges.push((i, j));
                }
            }
        }
        edges
    };

    for _round in 0..32 {
        let mut axes = Vec::with_capacity(active.len());
        for (plan, spec) in plans.iter().zip(&axis_spec) {
            // The probe keeps true site and boundary terms but treats
            // interior partners at their most permissive envelope value, so
            // panels concentrate wherever the conditional can be large.
            let x = plan.vertex;
            let nvals: Vec<f64> = graph
                .neighbors(x)
                .iter()
                .filter(|&&y| !config.is_active(y))
                .map(|&y| config.value(y))
                .collect();
            let bonus = 0.5 * plan.interior_degree as f64 * model.pair.j_w;
            let s = |u: f64| {
                let mut acc = KahanSum::default();
                for &v in &nvals {
                    acc.add(model.pair.eval(u, v));
                }
                acc.add(model.site.eval(u));
                bonus * abs_powf(u, model.pair.r) - acc.value()
            };
            let env0 = conditional_envelope(
                model,
                graph.degree(x),
                plan.boundary_r_sum,
                &[],
                0.0,
            )?;
            let smax = coarse_max(&s, &env0)?;
            let env = conditional_envelope(
                model,
                graph.degree(x),
                plan.boundary_r_sum,
                &[],
                smax,
            )?;
            let grid = PanelGrid::from_probe(&|u: f64| (s(u) - smax).exp(), &env, spec)?;
            axes.push(GridAxis { vertex: x, grid });
        }
        let candidate = VolumeGrid {
            axes,
            interior_edges: interior_edges.clone(),
            tail_ratio: f64::NAN,
        };
        let (_, log_z) = candidate.expectation_multi(graph, model, config, &[]);

        // Union bound: the mass outside the window is at most the sum over
        // axes of (envelope tail past that axis's radius) times the full
        // envelope mass of the other axes.
        let mut log_env_total = KahanSum::default();
        for plan in &plans {
            log_env_total.add(plan.scale + plan.unit_mass.ln());
        }
        let slack = (log_env_total.value() - log_z).exp();
        let mut ratio = KahanSum::default();
        let mut relative_tails = Vec::with_capacity(plans.len());
        for (plan, axis) in plans.iter().zip(&candidate.axes) {
            let tail = plan.unit_env.tail_mass_bound(axis.grid.radius)?;
            let rel = tail / plan.unit_mass;
            relative_tails.push(rel);
            ratio.add(rel * slack);
        }
        if ratio.value() <= GRID_TAIL_TARGET {
            return Ok(VolumeGrid {
                tail_ratio: ratio.value(),
                ..candidate
            });
        }
        let per_axis_target = GRID_TAIL_TARGET / plans.len() as f64;
        for (i, rel) in relative_tails.iter().enumerate() {
            if rel * slack > per_axis_target {
                axis_spec[i].tail_rel *= 1e-3;
            }
        }
    }
    Err(GibbsError::Quadrature(QuadratureError::TailNotCertified {
        bound: f64::NAN,
        target: GRID_TAIL_TARGET,
        radius: f64::NAN,
    }))
}

impl VolumeGrid {
    /// Normalized expectations of `fs` under the volume's conditional
    /// measure, plus the log partition mass. A streaming running-maximum
    /// rescale keeps the accumulation finite for any energy offset.
    pub fn expectation_multi(
        &self,
        graph: &Graph,
        model: &ModelParams,
        config: &SpinConfiguration,
        fs: &[TestFunction],
    ) -> (Vec<f64>, f64) {
        let mut evals: Vec<Box<dyn FnMut(&[f64], &[usize; 3]) -> f64 + '_>> = fs
            .iter()
            .map(|f| {
                let f = f.clone();
                Box::new(move |values: &[f64], _: &[usize; 3]| f.eval(values)) as _
            })
            .collect();
        self.tensor_scan(graph, model, config, &mut evals)
    }

    /// Core tensor sweep; integrand closures receive the full value vector
    /// and the node index per axis.
    fn tensor_scan(
        &self,
        graph: &Graph,
        model: &ModelParams,
        config: &SpinConfiguration,
        integrands: &mut [Box<dyn FnMut(&[f64], &[usize; 3]) -> f64 + '_>],
    ) -> (Vec<f64>, f64) {
        // Boundary-plus-site energy per axis node, computed once.
        let site_terms: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|axis| {
                axis.grid
                    .nodes
                    .iter()
                    .map(|&u| {
                        let mut acc = KahanSum::default();
                        for &y in graph.neighbors(axis.vertex) {
                            if !config.is_active(y) {
                                acc.add(model.pair.eval(u, config.value(y)));
                            }
                        }
                        acc.add(model.site.eval(u));
                        acc.value()
                    })
                    .collect()
            })
            .collect();
        let mut values = config.values().to_vec();
        let mut state = ScanState::new(integrands.len());
        let has_edge = |a: usize, b: usize| self.interior_edges.contains(&(a, b));
        match self.axes.len() {
            1 => {
                let ax0 = &self.axes[0];
                for i in 0..ax0.grid.len() {
                    let u0 = ax0.grid.nodes[i];
                    values[ax0.vertex] = u0;
                    let g = -site_terms[0][i];
                    let w = ax0.grid.weights[i];
                    state.accumulate(g, w, &values, &[i, 0, 0], integrands);
                }
            }
            2 => {
                let (ax0, ax1) = (&self.axes[0], &self.axes[1]);
                let edge = has_edge(0, 1);
                for i in 0..ax0.grid.len() {
                    let u0 = ax0.grid.nodes[i];
                    values[ax0.vertex] = u0;
                    let g0 = -site_terms[0][i];
                    let w0 = ax0.grid.weights[i];
                    for j in 0..ax1.grid.len() {
                        let u1 = ax1.grid.nodes[j];
                        values[ax1.vertex] = u1;
                        let mut g = g0 - site_terms[1][j];
                        if edge {
                            g -= model.pair.eval(u0, u1);
                        }
                        let w = w0 * ax1.grid.weights[j];
                        state.accumulate(g, w, &values, &[i, j, 0], integrands);
                    }
                }
            }
            3 => {
                let (ax0, ax1, ax2) = (&self.axes[0], &self.axes[1], &self.axes[2]);
                let (e01, e02, e12) = (has_edge(0, 1), has_edge(0, 2), has_edge(1, 2));
                for i in 0..ax0.grid.len() {
                    let u0 = ax0.grid.nodes[i];
                    values[ax0.vertex] = u0;
                    let g0 = -site_terms[0][i];
                    let w0 = ax0.grid.weights[i];
                    for j in 0..ax1.grid.len() {
                        let u1 = ax1.grid.nodes[j];
                        values[ax1.vertex] = u1;
                        let mut g01 = g0 - site_terms[1][j];
                        if e01 {
                            g01 -= model.pair.eval(u0, u1);
                        }
                        let w01 = w0 * ax1.grid.weights[j];
                        for k in 0..ax2.grid.len() {
                            let u2 = ax2.grid.nodes[k];
                            values[ax2.vertex] = u2;
                            let mut g = g01 - site_terms[2][k];
                            if e02 {
                                g -= model.pair.eval(u0, u2);
                            }
                            if e12 {
                                g -= model.pair.eval(u1, u2);
                            }
                            let w = w01 * ax2.grid.weights[k];
                            state.accumulate(g, w, &values, &[i, j, k], integrands);
                        }
                    }
                }
            }
            _ => unreachable!("volume size is validated at construction"),
        }
        state.finish(integrands.len())
    }
}

/// Streaming log-sum-exp accumulator shared by the tensor sweeps.
struct ScanState {
    max_log: f64,
    partition: KahanSum,
    integrals: Vec<KahanSum>,
}

impl ScanState {
    fn new(n: usize) -> Self {
        ScanState {
            max_log: f64::NEG_INFINITY,
            partition: KahanSum::default(),
            integrals: (0..n).map(|_| KahanSum::default()).collect(),
        }
    }

    fn accumulate(
        &mut self,
        g: f64,
        w: f64,
        values: &[f64],
        idx: &[usize; 3],
        integrands: &mut [Box<dyn FnMut(&[f64], &[usize; 3]) -> f64 + '_>],
    ) {
        if g > self.max_log {
            let scale = if self.max_log.is_finite() {
                (self.max_log - g).exp()
            } else {
                0.0
            };
            let mut fresh = KahanSum::default();
            fresh.add(self.partition.value() * scale);
            self.partition = fresh;
            for acc in &mut self.integrals {
                let mut fresh = KahanSum::default();
                fresh.add(acc.value() * scale);
                *acc = fresh;
            }
            self.max_log = g;
        }
        let term = w * (g - self.max_log).exp();
        if term == 0.0 {
            return;
        }
        self.partition.add(term);
        for (acc, f) in self.integrals.iter_mut().zip(integrands.iter_mut()) {
            acc.add(f(values, idx) * term);
        }
    }

    fn finish(self, n: usize) -> (Vec<f64>, f64) {
        let z = self.partition.value();
        let log_z = z.ln() + self.max_log;
        let vals = (0..n).map(|i| self.integrals[i].value() / z).collect();
        (vals, log_z)
    }
}

/// Expectation of one observable under the volume's conditional measure by
/// tensor-grid quadrature; the volume may hold at most three sites.
pub fn brute_force_expectation(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    f: &TestFunction,
    quad: &QuadratureSpec,
) -> Result<f64, GibbsError> {
    let grid = volume_grid(graph, model, config, quad)?;
    let (vals, _) = grid.expectation_multi(graph, model, config, std::slice::from_ref(f));
    Ok(vals[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct DlrCase {
    pub f: TestFunction,
    pub lhs: f64,
    pub rhs: f64,
    pub discrepancy: f64,
}

/// Outcome of the kernel-consistency check on one `(volume, subset)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct DlrReport {
    pub volume: Vec<usize>,
    pub subset: Vec<usize>,
    pub cases: Vec<DlrCase>,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Inner-expectation cells actually evaluated.
    pub inner_cells: u64,
}

/// Checks that conditioning a volume's measure through a sub-volume kernel
/// reproduces the volume's expectations: for each observable `f`, compares
/// `E_volume[ E_subset[f | omega] ]` against `E_volume[f]` by nested tensor
/// quadrature, memoizing inner expectations over the coordinates they
/// actually depend on.
pub fn dlr_consistency_check(
    graph: &Graph,
    model: &ModelParams,
    config: &SpinConfiguration,
    subset: &[usize],
    fs: &[TestFunction],
    budget: u64,
    quad: &QuadratureSpec,
) -> Result<DlrReport, GibbsError> {
    let volume = config.active().to_vec();
    let mut delta = subset.to_vec();
    delta.sort_unstable();
    for w in delta.windows(2) {
        if w[0] == w[1] {
            return Err(GibbsError::DuplicateVertex(w[0]));
        }
    }
    if delta.is_empty() {
        return Err(GibbsError::EmptyVolume);
    }
    for &d in &delta {
        if volume.binary_search(&d).is_err() {
            return Err(GibbsError::NotASubset { vertex: d });
        }
    }

    let outer = volume_grid(graph, model, config, quad)?;
    let (rhs_vals, _) = outer.expectation_multi(graph, model, config, fs);

    let rest: Vec<usize> = volume
        .iter()
        .copied()
        .filter(|v| delta.binary_search(v).is_err())
        .collect();

    // Conservative inner axes: in-volume boundary magnitudes are taken at
    // the largest outer node so one grid serves every outer combination.
    let outer_vertices = outer.axis_vertices();
    let axis_of = |v: usize| outer_vertices.iter().position(|&w| w == v).expect("axis");
    let mut probe_values = config.values().to_vec();
    for &y in &rest {
        probe_values[y] = outer.max_abs_node(axis_of(y));
    }
    let probe_config = SpinConfiguration::new(graph, &delta, &probe_values)?;
    let inner = volume_grid(graph, model, &probe_config, quad)?;
    let inner_points = inner.total_points();

    // Coordinates each observable's inner expectation depends on.
    let delta_neighbors: Vec<usize> = {
        let mut s: Vec<usize> = delta
            .iter()
            .flat_map(|&d| graph.neighbors(d).iter().copied())
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let dependencies: Vec<Vec<usize>> = fs
        .iter()
        .map(|f| {
            let mut d: Vec<usize> = f
                .support()
                .into_iter()
                .chain(delta_neighbors.iter().copied())
                .filter(|v| rest.binary_search(v).is_ok())
                .collect();
            d.sort_unstable();
            d.dedup();
            d
        })
        .collect();

    // Budget check: every memo table filled completely, worst case.
    let outer_points = outer.total_points();
    let mut estimated = outer_points;
    for deps in &dependencies {
        let combos: u64 = deps
            .iter()
            .map(|&v| outer.axis_len(axis_of(v)) as u64)
            .product();
        estimated = estimated.saturating_add(combos.saturating_mul(inner_points));
    }
    if estimated > budget {
        return Err(GibbsError::BudgetExceeded { estimated, budget });
    }

    // Each integrand owns its own memo table (flat-indexed by the outer node
    // indices of its dependencies) and scratch value vector; the shared cell
    // only counts work. tensor_scan drives the closures sequentially.
    let inner_cells = std::cell::Cell::new(0u64);
    let mut evals: Vec<Box<dyn FnMut(&[f64], &[usize; 3]) -> f64 + '_>> = Vec::new();
    for (fi, f) in fs.iter().enumerate() {
        let deps = dependencies[fi].clone();
        let dep_axes: Vec<usize> = deps.iter().map(|&v| axis_of(v)).collect();
        let dims: Vec<usize> = dep_axes.iter().map(|&a| outer.axis_len(a)).collect();
        let table_len: usize = dims.iter().product();
        let mut memo = vec![f64::NAN; table_len];
        let mut scratch = config.values().to_vec();
        let f = f.clone();
        let delta_ref: &[usize] = &delta;
        let inner_ref = &inner;
        let cells_ref = &inner_cells;
        evals.push(Box::new(move |outer_values: &[f64], idx: &[usize; 3]| {
            let mut key = 0usize;
            for (d, &ax) in dep_axes.iter().enumerate() {
                key = key * dims[d] + idx[ax];
            }
            if !memo[key].is_nan() {
                return memo[key];
            }
            for &v in &deps {
                scratch[v] = outer_values[v];
            }
            let inner_config = SpinConfiguration::new(graph, delta_ref, &scratch)
                .expect("inner configuration is valid by construction");
            let (vals, _) = inner_ref.expectation_multi(
                graph,
                model,
                &inner_config,
                std::slice::from_ref(&f),
            );
            cells_ref.set(cells_ref.get() + inner_ref.total_points());
            memo[key] = vals[0];
            vals[0]
        }) as _);
    }
    let (lhs_vals, _) = outer.tensor_scan(graph, model, config, &mut evals);
    drop(evals);
    let cases: Vec<DlrCase> = fs
        .iter()
        .zip(lhs_vals.iter().zip(&rhs_vals))
        .map(|(f, (&lhs, &rhs))| DlrCase {
            f: f.clone(),
            lhs,
            rhs,
            discrepancy: (lhs - rhs).abs(),
        })
        .collect();
    let max_discrepancy = cases.iter().fold(0.0f64, |m, c| m.max(c.discrepancy));
    Ok(DlrReport {
        volume,
        subset: delta,
        passed: max_discrepancy <= DLR_TOLERANCE,
        cases,
        max_discrepancy,
        tolerance: DLR_TOLERANCE,
        inner_cells: inner_cells.get(),
    })
}

/// One point of the growing-volume exponential-norm curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormCurvePoint {
    pub volume_size: usize,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormCurve {
    pub points: Vec<NormCurvePoint>,
    pub cutoff: f64,
    pub lambda: f64,
    pub p: f64,
    pub alpha: f64,
}

/// Tracks `E[exp(lambda * min(sum_x |omega(x)|^p e^(-alpha rho(o,x)), cut))]`
/// over a chain of nested volumes; the min-cutoff keeps the monitored
/// functional finite. When no cutoff is supplied it defaults to ten times
/// the median norm observed during the first volume's burn-in.
#[allow(clippy::too_many_arguments)]
pub fn exp_norm_monitor(
    graph: &Graph,
    model: &ModelParams,
    volumes: &[Vec<usize>],
    boundary: &[f64],
    lambda: f64,
    p_exp: f64,
    alpha: f64,
    sweeps: usize,
    state: &SamplerState,
    cutoff: Option<f64>,
    quad: &QuadratureSpec,
) -> Result<NormCurve, GibbsError> {
    if volumes.is_empty() {
        return Err(GibbsError::EmptyVolume);
    }
    for k in 0..volumes.len().saturating_sub(1) {
        let mut next = volumes[k + 1].clone();
        next.sort_unstable();
        if !volumes[k]
            .iter()
            .all(|v| next.binary_search(v).is_ok())
        {
            return Err(GibbsError::NotNested { index: k });
        }
    }
    let burn_in = state.burn_in.unwrap_or(sweeps / 10);
    if sweeps <= burn_in {
        return Err(GibbsError::TooFewSweeps { sweeps, burn_in });
    }
    let cut = match cutoff {
        Some(c) => {
            if !(c > 0.0) {
                return Err(GibbsError::BadParameter {
                    name: "cutoff",
                    value: c,
                    requirement: "cutoff > 0",
                });
            }
            c
        }
        None => {
            let pilot = norm_chain(
                graph,
                model,
                &volumes[0],
                boundary,
                burn_in.max(1),
                burn_in.max(1) - 1,
                state,
                state.seed,
                lambda,
                p_exp,
                alpha,
                f64::INFINITY,
                quad,
            )?;
            let mut norms = pilot.1;
            norms.sort_by(f64::total_cmp);
            let median = norms.get(norms.len() / 2).copied().unwrap_or(0.0);
            if median > 0.0 {
                10.0 * median
            } else {
                1.0
            }
        }
    };
    let mut points = Vec::with_capacity(volumes.len());
    for (k, volume) in volumes.iter().enumerate() {
        let seed = state
            .seed
            .wrapping_add((k as u64).wrapping_mul(SEED_STRIDE));
        let (stat, _) = norm_chain(
            graph, model, volume, boundary, sweeps, burn_in, state, seed, lambda, p_exp, alpha,
            cut, quad,
        )?;
        points.push(NormCurvePoint {
            volume_size: volume.len(),
            estimate: stat.mean,
            std_error: stat.std_error,
        });
    }
    Ok(NormCurve {
        points,
        cutoff: cut,
        lambda,
        p: p_exp,
        alpha,
    })
}

/// One heat-bath chain tracking only the cut exponential norm; returns the
/// batch statistic and the norms seen during burn-in (for cutoff pilots).
#[allow(clippy::too_many_arguments)]
fn norm_chain(
    graph: &Graph,
    model: &ModelParams,
    active: &[usize],
    boundary: &[f64],
    sweeps: usize,
    burn_in: usize,
    state: &SamplerState,
    seed: u64,
    lambda: f64,
    p_exp: f64,
    alpha: f64,
    cutoff: f64,
    quad: &QuadratureSpec,
) -> Result<(BatchStat, Vec<f64>), GibbsError> {
    let mut config = SpinConfiguration::new(graph, active, boundary)?;
    let volume = config.active().to_vec();
    let post = sweeps.saturating_sub(burn_in);
    let batches = state.batches.clamp(1, post.max(1));
    let batch_len = (post / batches).max(1);
    let dist = graph.distances(graph.root())?;
    let weights: Vec<f64> = volume
        .iter()
        .map(|&x| (-alpha * f64::from(dist[x])).exp())
        .collect();
    let mut site_rngs: Vec<ChaCha8Rng> = (0..volume.len())
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + i as u64);
            rng
        })
        .collect();
    let mut scan_rng = ChaCha8Rng::seed_from_u64(seed);
    scan_rng.set_stream(0);
    let mut acc = SeriesAccumulator::new(batches, batch_len);
    let mut burn_norms = Vec::new();
    let mut order: Vec<usize> = (0..volume.len()).collect();
    for sweep in 0..sweeps {
        if state.scan == ScanOrder::Random {
            for i in (1..order.len()).rev() {
                let j = (scan_rng.gen::<u64>() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
        }
        for &i in &order {
            let x = volume[i];
            let sampler = SiteSampler::build(graph, model, &config, x, quad)?;
            let u = sampler.draw(model, &mut site_rngs[i]);
            config.set(x, u)?;
        }
        let mut norm_p = KahanSum::default();
        for (i, &x) in volume.iter().enumerate() {
            norm_p.add(weights[i] * abs_powf(config.value(x), p_exp));
        }
        if sweep < burn_in {
            burn_norms.push(norm_p.value());
        } else {
            acc.push(sweep - burn_in, (lambda * norm_p.value().min(cutoff)).exp());
        }
    }
    Ok((acc.finish(), burn_norms))
}
