//! Hub-separation ("repulsive") graph machinery: the separation profile
//! `phi(b) = upsilon * ln b * (ln ln b)^(1+epsilon)`, certification of the
//! pairwise hub-distance rule, a deterministic generator that realizes
//! planned hub degrees on a low-degree backbone, and the growth verifiers
//! (ball degree threshold, sphere degree-sum growth, tempered-sum domination)
//! built on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphError, KahanSum};

/// Errors from profile evaluation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ProfileError {
    #[error("n_star = {0} must exceed 2")]
    BadNStar(u32),
    #[error("upsilon = {0} must be positive")]
    BadUpsilon(f64),
    #[error("epsilon = {0} must be positive")]
    BadEpsilon(f64),
    #[error("phi argument {b} below domain start {min}")]
    BelowDomain { b: f64, min: f64 },
    #[error("phi_inverse argument {t} below range start {min}")]
    BelowRange { t: f64, min: f64 },
}

/// Errors from graph synthesis.
#[derive(Debug, Clone, thiserror::Error)]
pub enum GenerateError {
    #[error("hub degree {0} does not exceed n_star")]
    HubTooSmall(u32),
    #[error("radius {radius} cannot host the hub spacing; span of {required} backbone steps needed")]
    Infeasible { required: u64, radius: u32 },
    #[error("radius {radius} below the profile scale ceil(phi(d_max)) = {needed}")]
    RadiusBelowScale { radius: u32, needed: u32 },
    #[error("planned graph would have {vertices} vertices; cap is {cap}")]
    TooLarge { vertices: u64, cap: u64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Errors from the growth verifiers.
#[derive(Debug, Clone, thiserror::Error)]
pub enum VerifyError {
    #[error("ball degree bound fails at vertex {vertex} through its eccentricity {radius}; no finite threshold exists on this truncation")]
    NoFiniteThreshold { vertex: usize, radius: u32 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Separation profile: hubs are vertices of degree above `n_star`, and any
/// two hubs must be at distance at least `phi` of the larger degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepulsionProfile {
    pub n_star: u32,
    pub upsilon: f64,
    pub epsilon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    n_star: u32,
    upsilon: f64,
    epsilon: f64,
}

impl<'de> Deserialize<'de> for RepulsionProfile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ProfileFile::deserialize(deserializer)?;
        RepulsionProfile::new(raw.n_star, raw.upsilon, raw.epsilon)
            .map_err(serde::de::Error::custom)
    }
}

impl RepulsionProfile {
    pub fn new(n_star: u32, upsilon: f64, epsilon: f64) -> Result<Self, ProfileError> {
        if n_star <= 2 {
            return Err(ProfileError::BadNStar(n_star));
        }
        if !(upsilon > 0.0) {
            return Err(ProfileError::BadUpsilon(upsilon));
        }
        if !(epsilon > 0.0) {
            return Err(ProfileError::BadEpsilon(epsilon));
        }
        Ok(RepulsionProfile {
            n_star,
            upsilon,
            epsilon,
        })
    }

    /// Smallest admissible argument of `phi`.
    pub fn domain_start(&self) -> f64 {
        f64::from(self.n_star) + 1.0
    }

    /// `phi(b) = upsilon * ln b * (ln ln b)^(1 + epsilon)`; strictly
    /// increasing on the domain since `b >= n_star + 1 >= 4 > e`.
    pub fn phi(&self, b: f64) -> Result<f64, ProfileError> {
        let min = self.domain_start();
        if !(b >= min) {
            return Err(ProfileError::BelowDomain { b, min });
        }
        let ln_b = b.ln();
        Ok(self.upsilon * ln_b * ln_b.ln().powf(1.0 + self.epsilon))
    }

    /// Monotone bisection inverse of `phi`, to relative tolerance 1e-10.
    pub fn phi_inverse(&self, t: f64) -> Result<f64, ProfileError> {
        let mut lo = self.domain_start();
        let min = self.phi(lo)?;
        if !(t >= min) {
            return Err(ProfileError::BelowRange { t, min });
        }
        let mut hi = lo.max(1.0);
        for _ in 0..1100 {
            if self.phi(hi)? >= t {
                break;
            }
            hi *= 2.0;
        }
        for _ in 0..200 {
            if (hi - lo) <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.phi(mid)? >= t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The admissibility flag `phi(n_star + 1) > 1`; guarantees adjacent
    /// vertices are never both hubs.
    pub fn admissible(&self) -> bool {
        self.phi(self.domain_start())
            .map(|v| v > 1.0)
            .unwrap_or(false)
    }
}

/// Vertices of degree above `n_star`, ascending.
pub fn hub_set(graph: &Graph, n_star: u32) -> Vec<usize> {
    (0..graph.num_vertices())
        .filter(|&x| graph.degree(x) > n_star as usize)
        .collect()
}

/// A hub pair closer than the profile demands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HubViolation {
    pub x: usize,
    pub y: usize,
    pub distance: u32,
    pub required: f64,
}

/// Outcome of [`certify`].
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub admissible: bool,
    pub hubs: Vec<usize>,
    pub violations: Vec<HubViolation>,
    /// Whether the weaker min-degree variant of the separation rule holds;
    /// informational only, drives no verification.
    pub min_variant_ok: bool,
    pub passed: bool,
}

/// Checks `rho(x, y) >= phi(max(n(x), n(y)))` for every unordered hub pair.
/// Violations are report data, never errors.
pub fn certify(graph: &Graph, profile: &RepulsionProfile) -> Result<CertificationReport, VerifyError> {
    let hubs = hub_set(graph, profile.n_star);
    let per_hub: Vec<(Vec<HubViolation>, bool)> = hubs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| -> Result<(Vec<HubViolation>, bool), VerifyError> {
            let dist = graph.distances_uncached(x)?;
            let mut rows = Vec::new();
            let mut min_ok = true;
            for &y in &hubs[i + 1..] {
                let (dx, dy) = (graph.degree(x) as f64, graph.degree(y) as f64);
                let required = profile.phi(dx.max(dy))?;
                let d = dist[y];
                if f64::from(d) < required {
                    rows.push(HubViolation {
                        x,
                        y,
                        distance: d,
                        required,
                    });
                }
                if f64::from(d) < profile.phi(dx.min(dy))? {
                    min_ok = false;
                }
            }
            Ok((rows, min_ok))
        })
        .collect::<Result<_, _>>()?;
    let mut violations = Vec::new();
    let mut min_variant_ok = true;
    for (rows, min_ok) in per_hub {
        violations.extend(rows);
        min_variant_ok &= min_ok;
    }
    let admissible = profile.admissible();
    let passed = admissible && violations.is_empty();
    Ok(CertificationReport {
        admissible,
        hubs,
        violations,
        min_variant_ok,
        passed,
    })
}

/// Backbone shape for synthesized graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Ray,
    BinaryTree,
}

/// Construction plan: hub degrees to realize on a backbone of the given
/// radius (path length for a ray, depth for a tree).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HubPlan {
    pub hub_degrees: Vec<u32>,
    pub backbone: Backbone,
    pub radius: u32,
}

/// Hard cap on synthesized graph size.
pub const MAX_GENERATED_VERTICES: u64 = 2_000_000;

/// Deterministically synthesizes a member of the profile's class: a backbone
/// of degree at most 3 (which never exceeds `n_star >= 3`), with each planned
/// hub realized by padding a backbone vertex with fresh leaves. Hub positions
/// are spaced at least `ceil(phi(max degree)) + 1` apart, so the output
/// always certifies; leftover backbone length is distributed by the seed.
pub fn generate(
    profile: &RepulsionProfile,
    plan: &HubPlan,
    seed: u64,
) -> Result<Graph, GenerateError> {
    for &d in &plan.hub_degrees {
        if d <= profile.n_star {
            return Err(GenerateError::HubTooSmall(d));
        }
    }
    let mut degrees = plan.hub_degrees.clone();
    degrees.sort_unstable_by(|a, b| b.cmp(a));
    if let Some(&d_max) = degrees.first() {
        let needed = profile.phi(f64::from(d_max))?.ceil() as u32;
        if plan.radius < needed {
            return Err(GenerateError::RadiusBelowScale {
                radius: plan.radius,
                needed,
            });
        }
    }
    let backbone_len: u64 = match plan.backbone {
        Backbone::Ray => u64::from(plan.radius) + 1,
        Backbone::BinaryTree => {
            if plan.radius >= 32 {
                return Err(GenerateError::TooLarge {
                    vertices: u64::MAX,
                    cap: MAX_GENERATED_VERTICES,
                });
            }
            (1u64 << (plan.radius + 1)) - 1
        }
    };
    let total = backbone_len + degrees.iter().map(|&d| u64::from(d)).sum::<u64>();
    if total > MAX_GENERATED_VERTICES {
        return Err(GenerateError::TooLarge {
            vertices: total,
            cap: MAX_GENERATED_VERTICES,
        });
    }

    // Positions along the spine, largest hub first: consecutive spacing of
    // ceil(phi(larger degree)) + 1 makes every pair separation at least
    // ceil(phi(its max degree)) + 1.
    let gaps: Vec<u64> = degrees
        .iter()
        .take(degrees.len().saturating_sub(1))
        .map(|&d| Ok(profile.phi(f64::from(d))?.ceil() as u64 + 1))
        .collect::<Result<_, ProfileError>>()?;
    let span: u64 = gaps.iter().sum();
    if span > u64::from(plan.radius) {
        return Err(GenerateError::Infeasible {
            required: span,
            radius: plan.radius,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(degrees.len());
    if !degrees.is_empty() {
        // Spread the slack across the leading offset and the gaps.
        let slack = u64::from(plan.radius) - span;
        let slots = degrees.len();
        let weights: Vec<f64> = (0..=slots).map(|_| rng.gen::<f64>() + 1e-9).collect();
        let weight_sum: f64 = weights.iter().sum();
        let mut extra: Vec<u64> = weights
            .iter()
            .map(|w| ((slack as f64) * w / weight_sum).floor() as u64)
            .collect();
        let used: u64 = extra.iter().sum();
        extra[slots] += slack - used; // remainder stays past the last hub
        let mut pos = extra[0];
        positions.push(pos);
        for (i, &gap) in gaps.iter().enumerate() {
            pos += gap + extra[i + 1];
            positions.push(pos);
        }
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Spine vertex id at a given depth, plus its backbone edge set.
    let spine: Vec<usize> = match plan.backbone {
        Backbone::Ray => {
            for i in 0..plan.radius as usize {
                edges.push((i, i + 1));
            }
            (0..=plan.radius as usize).collect()
        }
        Backbone::BinaryTree => {
            let n = backbone_len as usize;
            for i in 0..n {
                for child in [2 * i + 1, 2 * i + 2] {
                    if child < n {
                        edges.push((i, child));
                    }
                }
            }
            // Leftmost root-to-leaf path: depth d sits at id 2^d - 1.
            (0..=plan.radius as usize).map(|d| (1usize << d) - 1).collect()
        }
    };
    let mut next_id = backbone_len as usize;
    let mut backbone_degree = vec![0usize; backbone_len as usize];
    for &(a, b) in &edges {
        backbone_degree[a] += 1;
        backbone_degree[b] += 1;
    }
    for (k, &d) in degrees.iter().enumerate() {
        let anchor = spine[positions[k] as usize];
        let pad = d as usize - backbone_degree[anchor];
        for _ in 0..pad {
            edges.push((anchor, next_id));
            next_id += 1;
        }
    }
    Ok(Graph::from_edges(next_id, 0, &edges)?)
}

/// The sphere-growth rate constant and its ingredients.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthConstant {
    pub a: f64,
    pub sigma: f64,
    pub k_star: u32,
    pub tail: f64,
    /// Guaranteed absolute error bound on `tail`.
    pub tail_halfwidth: f64,
}

/// Target absolute error for the series tail.
const TAIL_TARGET: f64 = 1e-9;

/// Evaluates the growth constant
/// `a = (1 + theta) sigma + ln n_star + (2e / upsilon) * tail` with
/// `sigma = max(2/upsilon, e)`, `k_star` the least `k >= 1` with
/// `exp(e^(k+1)) >= n_star + 1`, and `tail = sum_(k >= k_star) k^-(1+epsilon)`
/// bracketed by integral bounds to within 1e-9.
pub fn growth_constant(profile: &RepulsionProfile, theta: f64) -> GrowthConstant {
    let sigma = (2.0 / profile.upsilon).max(std::f64::consts::E);
    let mut k_star = 1u32;
    // exp(e^(k+1)) overflows to +inf long before k grows large; the
    // comparison stays correct either way.
    while (f64::from(k_star) + 1.0).exp().exp() < f64::from(profile.n_star) + 1.0 {
        k_star += 1;
    }
    let (tail, halfwidth) = bracketed_series_tail(k_star, profile.epsilon, TAIL_TARGET);
    let a = (1.0 + theta) * sigma
        + f64::from(profile.n_star).ln()
        + (2.0 * std::f64::consts::E / profile.upsilon) * tail;
    GrowthConstant {
        a,
        sigma,
        k_star,
        tail,
        tail_halfwidth: halfwidth,
    }
}

/// `sum_(k >= start) k^-(1+epsilon)` as a partial sum plus the midpoint of
/// the integral bracket `[int_(K+1), int_K]` of the remainder; the returned
/// halfwidth bounds the absolute error.
pub fn bracketed_series_tail(start: u32, epsilon: f64, target: f64) -> (f64, f64) {
    let remainder_bracket = |k: f64| -> (f64, f64) {
        let lower = (k + 1.0).powf(-epsilon) / epsilon;
        let upper = k.powf(-epsilon) / epsilon;
        (lower, upper)
    };
    let mut cutoff = f64::from(start.max(1)) + 8.0;
    for _ in 0..200 {
        let (lo, hi) = remainder_bracket(cutoff);
        if 0.5 * (hi - lo) <= target {
            break;
        }
        cutoff *= 2.0;
    }
    let mut partial = KahanSum::default();
    let mut k = f64::from(start.max(1));
    while k <= cutoff {
        partial.add(k.powf(-(1.0 + epsilon)));
        k += 1.0;
    }
    // The loop leaves k = floor boundary + 1; the remainder starts after the
    // last summed integer.
    let last = k - 1.0;
    let (lo, hi) = remainder_bracket(last);
    (partial.value() + 0.5 * (lo + hi), 0.5 * (hi - lo))
}

/// Outcome of the ball degree-threshold scan at one vertex.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallBoundReport {
    pub vertex: usize,
    /// First radius from which the bound holds through the eccentricity.
    pub threshold: u32,
    pub ok_through: u32,
}

/// Finds the smallest radius `N_x` such that for every `N` from it through
/// the eccentricity, the maximum degree in the ball `B(N, x)` stays within
/// the profile's inverse scale — checked as
/// `phi(max(ball max degree, n_star + 1)) <= 2N`, which avoids inverting
/// `phi` numerically.
pub fn verify_ball_degree_bound(
    graph: &Graph,
    profile: &RepulsionProfile,
    x: usize,
) -> Result<BallBoundReport, VerifyError> {
    let dist = graph.distances_uncached(x)?;
    let ecc = *dist.iter().max().expect("non-empty graph") as usize;
    // Max degree per radius, then prefix max = max degree in the ball.
    let mut max_at = vec![0usize; ecc + 1];
    for (y, &d) in dist.iter().enumerate() {
        let d = d as usize;
        max_at[d] = max_at[d].max(graph.degree(y));
    }
    let mut last_fail = 0u32;
    let mut ball_max = max_at[0];
    let floor = profile.domain_start();
    for n in 1..=ecc {
        ball_max = ball_max.max(max_at[n]);
        let arg = (ball_max as f64).max(floor);
        if profile.phi(arg)? > 2.0 * n as f64 {
            last_fail = n as u32;
        }
    }
    if last_fail as usize == ecc && ecc > 0 {
        return Err(VerifyError::NoFiniteThreshold {
            vertex: x,
            radius: ecc as u32,
        });
    }
    Ok(BallBoundReport {
        vertex: x,
        threshold: last_fail + 1,
        ok_through: ecc as u32,
    })
}

/// A radius where the sphere degree sum exceeds its exponential bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphereGrowthViolation {
    pub radius: u32,
    pub log_sum: f64,
    pub log_bound: f64,
}

/// Outcome of the sphere-growth scan at one vertex.
#[derive(Debug, Clone, Serialize)]
pub struct SphereGrowthReport {
    pub vertex: usize,
    pub threshold: u32,
    pub eccentricity: u32,
    /// Largest observed `ln G / N`; stays below `a` on conforming graphs.
    pub max_log_rate: f64,
    pub violations: Vec<SphereGrowthViolation>,
    pub passed: bool,
}

/// Checks `G_theta(N, x) <= exp(a N)` (in log form) for every radius from the
/// ball-bound threshold through the eccentricity.
pub fn verify_sphere_growth(
    graph: &Graph,
    profile: &RepulsionProfile,
    theta: f64,
    x: usize,
    growth: &GrowthConstant,
) -> Result<SphereGrowthReport, VerifyError> {
    let ball = verify_ball_degree_bound(graph, profile, x)?;
    let dist = graph.distances_uncached(x)?;
    let ecc = ball.ok_through as usize;
    let mut sums = vec![KahanSum::default(); ecc + 1];
    for (y, &d) in dist.iter().enumerate() {
        sums[d as usize].add((graph.degree(y) as f64).powf(1.0 + theta));
    }
    let mut violations = Vec::new();
    let mut max_log_rate = f64::NEG_INFINITY;
    for n in ball.threshold as usize..=ecc {
        let g = sums[n].value();
        if g <= 0.0 {
            continue;
        }
        let log_sum = g.ln();
        let log_bound = growth.a * n as f64;
        max_log_rate = max_log_rate.max(log_sum / n as f64);
        if log_sum > log_bound {
            violations.push(SphereGrowthViolation {
                radius: n as u32,
                log_sum,
                log_bound,
            });
        }
    }
    let passed = violations.is_empty();
    Ok(SphereGrowthReport {
        vertex: x,
        threshold: ball.threshold,
        eccentricity: ball.ok_through,
        max_log_rate,
        violations,
        passed,
    })
}

/// Outcome of the tempered-sum domination check.
#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub alpha: f64,
    pub theta: f64,
    pub weighted_degree_sum: f64,
    pub neighborhood_sum_root: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Checks `Theta(alpha, theta) <= n_star^theta (e^alpha + 1) T_o(alpha,
/// theta)` exactly on the finite graph.
pub fn verify_domination(
    graph: &Graph,
    profile: &RepulsionProfile,
    alpha: f64,
    theta: f64,
) -> Result<DominationReport, VerifyError> {
    let ledger = graph.weighted_degree_sum(alpha, theta)?;
    let t_root = graph.neighborhood_sum(alpha, theta, graph.root())?;
    let bound = f64::from(profile.n_star).powf(theta) * (alpha.exp() + 1.0) * t_root;
    Ok(DominationReport {
        alpha,
        theta,
        weighted_degree_sum: ledger.total,
        neighborhood_sum_root: t_root,
        bound,
        passed: ledger.total <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_10_1(n_star: u32) -> RepulsionProfile {
        RepulsionProfile::new(n_star, 10.0, 1.0).unwrap()
    }

    /// Ray 0..=len with extra leaves attached to the listed (anchor, count)
    /// positions.
    fn ray_with_leaves(len: usize, pads: &[(usize, usize)]) -> Graph {
        let mut edges: Vec<(usize, usize)> = (0..len).map(|i| (i, i + 1)).collect();
        let mut next = len + 1;
        for &(anchor, count) in pads {
            for _ in 0..count {
                edges.push((anchor, next));
                next += 1;
            }
        }
        Graph::from_edges(next, 0, &edges).unwrap()
    }

    #[test]
    fn profile_validation() {
        assert!(matches!(
            RepulsionProfile::new(2, 1.0, 1.0),
            Err(ProfileError::BadNStar(2))
        ));
        assert!(RepulsionProfile::new(3, 10.0, 1.0).is_ok());
        assert!(RepulsionProfile::new(3, 0.0, 1.0).is_err());
        assert!(RepulsionProfile::new(3, 1.0, -0.5).is_err());
        let parsed: Result<RepulsionProfile, _> =
            serde_json::from_str(r#"{"n_star": 3, "upsilon": 10.0, "epsilon": 1.0}"#);
        assert!(parsed.is_ok());
        let bad: Result<RepulsionProfile, _> =
            serde_json::from_str(r#"{"n_star": 1, "upsilon": 10.0, "epsilon": 1.0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn phi_matches_reference_values() {
        let p = profile_10_1(3);
        assert!((p.phi(4.0).unwrap() - 1.47903661921259).abs() < 1e-11);
        assert!((p.phi(5.0).unwrap() - 3.64483817311831).abs() < 1e-11);
        assert!((p.phi(40.0).unwrap() - 62.8536165862907).abs() < 1e-10);
        // ln ln b = 1 at b = e^e, so phi = upsilon * e there.
        let unit = RepulsionProfile::new(3, 1.0, 0.7).unwrap();
        let b = std::f64::consts::E.exp();
        assert!((unit.phi(b).unwrap() - std::f64::consts::E).abs() < 1e-12);
        assert!(matches!(
            p.phi(3.5),
            Err(ProfileError::BelowDomain { .. })
        ));
    }

    #[test]
    fn phi_is_strictly_increasing() {
        let p = profile_10_1(3);
        let mut prev = 0.0;
        for i in 0..500 {
            let b = 4.0 + 0.5 * f64::from(i);
            let v = p.phi(b).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn phi_inverse_round_trips() {
        let p = profile_10_1(3);
        assert!((p.phi_inverse(3.64483817311831).unwrap() - 5.0).abs() < 1e-6);
        for b in [4.0, 5.5, 17.0, 120.0, 3.3e4] {
            let t = p.phi(b).unwrap();
            let back = p.phi_inverse(t).unwrap();
            assert!((back - b).abs() <= 1e-8 * b, "b = {b}, back = {back}");
        }
        let unit = RepulsionProfile::new(3, 1.0, 1.0).unwrap();
        let b = unit.phi_inverse(std::f64::consts::E).unwrap();
        assert!((b - std::f64::consts::E.exp()).abs() < 1e-6);
        assert!(matches!(
            p.phi_inverse(0.5),
            Err(ProfileError::BelowRange { .. })
        ));
    }

    #[test]
    fn admissibility_flag() {
        // phi(4) = 1.479 > 1 for upsilon = 10.
        assert!(profile_10_1(3).admissible());
        // upsilon = 1 drops phi(4) to 0.148.
        assert!(!RepulsionProfile::new(3, 1.0, 1.0).unwrap().admissible());
    }

    #[test]
    fn hub_sets() {
        let star = ray_with_leaves(1, &[(0, 4)]); // degree 5 at vertex 0
        assert_eq!(hub_set(&star, 3), vec![0]);
        assert!(hub_set(&star, 5).is_empty());
    }

    #[test]
    fn certify_flags_close_hubs() {
        let p = profile_10_1(3);
        // Two degree-5 hubs at distance 3: phi(5) = 3.645 > 3.
        let bad = ray_with_leaves(6, &[(1, 3), (4, 3)]);
        let report = certify(&bad, &p).unwrap();
        assert_eq!(report.hubs, vec![1, 4]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].distance, 3);
        assert!(!report.passed);
        // Same hubs at distance 4 pass.
        let good = ray_with_leaves(7, &[(1, 3), (5, 3)]);
        let report = certify(&good, &p).unwrap();
        assert!(report.violations.is_empty());
        assert!(report.passed);
        assert!(report.min_variant_ok);
        // No hubs at all passes vacuously while the profile is admissible.
        let bare = ray_with_leaves(5, &[]);
        assert!(certify(&bare, &p).unwrap().passed);
        assert!(!certify(&bare, &RepulsionProfile::new(3, 1.0, 1.0).unwrap())
            .unwrap()
            .passed);
    }

    #[test]
    fn min_variant_is_weaker() {
        let p = profile_10_1(3);
        // Hubs of degree 5 and 40 at distance 8: phi(5) = 3.64 <= 8 but
        // phi(40) = 62.85 > 8, so the max rule fails while min holds.
        let g = ray_with_leaves(12, &[(1, 3), (9, 38)]);
        let report = certify(&g, &p).unwrap();
        assert!(!report.passed);
        assert!(report.min_variant_ok);
    }

    #[test]
    fn generate_zero_hubs_gives_backbone() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![],
            backbone: Backbone::Ray,
            radius: 10,
        };
        let g = generate(&p, &plan, 7).unwrap();
        assert_eq!(g.num_vertices(), 11);
        assert!(certify(&g, &p).unwrap().passed);
    }

    #[test]
    fn generate_places_hubs_with_spacing() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![5, 5],
            backbone: Backbone::Ray,
            radius: 20,
        };
        let g = generate(&p, &plan, 42).unwrap();
        let report = certify(&g, &p).unwrap();
        assert!(report.passed, "{:?}", report.violations);
        assert_eq!(report.hubs.len(), 2);
        let d = g
            .distance(report.hubs[0], report.hubs[1])
            .unwrap();
        assert!(d >= 4); // ceil(phi(5)) + 1
        for &h in &report.hubs {
            assert_eq!(g.degree(h), 5);
        }
    }

    #[test]
    fn generate_on_tree_backbone() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![5, 6],
            backbone: Backbone::BinaryTree,
            radius: 10,
        };
        let g = generate(&p, &plan, 3).unwrap();
        let report = certify(&g, &p).unwrap();
        assert!(report.passed, "{:?}", report.violations);
        assert_eq!(report.hubs.len(), 2);
        let degrees: Vec<usize> = report.hubs.iter().map(|&h| g.degree(h)).collect();
        assert!(degrees.contains(&5) && degrees.contains(&6));
    }

    #[test]
    fn generate_rejects_infeasible_plans() {
        let p = profile_10_1(3);
        // phi(40) = 62.85 -> single-hub scale check demands radius >= 63.
        let plan = HubPlan {
            hub_degrees: vec![40, 5],
            backbone: Backbone::Ray,
            radius: 20,
        };
        assert!(matches!(
            generate(&p, &plan, 0),
            Err(GenerateError::RadiusBelowScale { needed: 63, .. })
        ));
        // With radius 63 the scale passes but the two hubs need a span of
        // ceil(phi(40)) + 1 = 64 backbone steps.
        let plan = HubPlan {
            radius: 63,
            ..plan
        };
        assert!(matches!(
            generate(&p, &plan, 0),
            Err(GenerateError::Infeasible { required: 64, .. })
        ));
        let plan = HubPlan {
            radius: 64,
            ..plan
        };
        assert!(certify(&generate(&p, &plan, 0).unwrap(), &p).unwrap().passed);
        // Degrees at or below n_star are not hubs and are rejected.
        let plan = HubPlan {
            hub_degrees: vec![3],
            backbone: Backbone::Ray,
            radius: 20,
        };
        assert!(matches!(
            generate(&p, &plan, 0),
            Err(GenerateError::HubTooSmall(3))
        ));
    }

    #[test]
    fn generate_is_seed_deterministic() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![5, 7, 4],
            backbone: Backbone::Ray,
            radius: 40,
        };
        let a = generate(&p, &plan, 11).unwrap();
        let b = generate(&p, &plan, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn growth_constant_matches_series_oracle() {
        // epsilon = 1, n_star = 3: k* = 1 since exp(e^2) ~ 1618 >= 4, and the
        // full series from k = 1 is pi^2 / 6.
        let p = profile_10_1(3);
        let gc = growth_constant(&p, 1.0);
        assert_eq!(gc.k_star, 1);
        assert!((gc.tail - std::f64::consts::PI.powi(2) / 6.0).abs() <= 2e-9);
        assert!(gc.tail_halfwidth <= 1e-9);
        assert!((gc.sigma - std::f64::consts::E).abs() < 1e-15);
        assert!((gc.a - 7.42945482217155).abs() < 1e-7);

        // sigma switches to 2/upsilon once upsilon is small.
        let small = RepulsionProfile::new(3, 0.5, 1.0).unwrap();
        assert_eq!(growth_constant(&small, 1.0).sigma, 4.0);
        // Large n_star pushes k_star up: need exp(e^(k+1)) >= n_star + 1.
        let big = RepulsionProfile::new(2000, 10.0, 1.0).unwrap();
        assert!(growth_constant(&big, 1.0).k_star >= 2);
    }

    #[test]
    fn series_tail_brackets_are_consistent() {
        // Two brackets at different cutoffs must agree within their combined
        // halfwidths.
        let (fine, h_fine) = bracketed_series_tail(1, 1.0, 1e-9);
        let (coarse, h_coarse) = bracketed_series_tail(1, 1.0, 1e-5);
        assert!((fine - coarse).abs() <= h_fine + h_coarse);
        assert!(h_fine <= 1e-9);
        // Shifting the start by one term is exact.
        let (from2, _) = bracketed_series_tail(2, 1.0, 1e-9);
        assert!((fine - 1.0 - from2).abs() <= 3e-9);
    }

    #[test]
    fn ball_bound_on_hub_free_ray() {
        // phi(4) = 1.479 <= 2 means the threshold collapses to 1.
        let p = profile_10_1(3);
        let g = ray_with_leaves(12, &[]);
        let report = verify_ball_degree_bound(&g, &p, 4).unwrap();
        assert_eq!(report.threshold, 1);
        assert_eq!(report.ok_through, g.eccentricity(4).unwrap());
        // n_star = 4 lifts phi(5) = 3.645 above 2, delaying the threshold.
        let p4 = profile_10_1(4);
        let report = verify_ball_degree_bound(&g, &p4, 4).unwrap();
        assert_eq!(report.threshold, 2);
    }

    #[test]
    fn ball_bound_sees_hubs() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![6, 5],
            backbone: Backbone::Ray,
            radius: 30,
        };
        let g = generate(&p, &plan, 5).unwrap();
        for x in 0..g.num_vertices() {
            let report = verify_ball_degree_bound(&g, &p, x).unwrap();
            assert!(report.threshold >= 1);
            assert!(report.threshold <= report.ok_through);
        }
    }

    #[test]
    fn sphere_growth_on_generated_graph() {
        let p = profile_10_1(3);
        let plan = HubPlan {
            hub_degrees: vec![5, 5],
            backbone: Backbone::Ray,
            radius: 20,
        };
        let g = generate(&p, &plan, 42).unwrap();
        let gc = growth_constant(&p, 1.0);
        for x in 0..g.num_vertices() {
            let report = verify_sphere_growth(&g, &p, 1.0, x, &gc).unwrap();
            assert!(report.passed, "vertex {x}: {:?}", report.violations);
            assert!(report.max_log_rate <= gc.a);
        }
    }

    #[test]
    fn domination_bound_on_fixtures() {
        let p = profile_10_1(3);
        // Rooted 3-path: 6 <= 3 * 3 * 5 = 45.
        let g = Graph::from_edges(3, 1, &[(0, 1), (1, 2)]).unwrap();
        let report = verify_domination(&g, &p, 2f64.ln(), 1.0).unwrap();
        assert!((report.weighted_degree_sum - 6.0).abs() < 1e-12);
        assert!((report.bound - 45.0).abs() < 1e-12);
        assert!(report.passed);

        let plan = HubPlan {
            hub_degrees: vec![5, 5],
            backbone: Backbone::Ray,
            radius: 20,
        };
        let gen = generate(&p, &plan, 42).unwrap();
        for alpha in [0.5, 1.0, 2.0] {
            for theta in [0.5, 1.0] {
                assert!(verify_domination(&gen, &p, alpha, theta).unwrap().passed);
            }
        }
    }
}
