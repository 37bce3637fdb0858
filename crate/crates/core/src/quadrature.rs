//! Adaptive Gauss–Kronrod quadrature for densities of the form
//! `exp(polynomial growth - coercive power decay)` on the real line.
//!
//! The full-line driver truncates to `[-U, U]` using an analytic envelope of
//! the log-integrand and certifies the discarded tail with the bound
//! `int_U^inf e^g <= e^(g(U)) / (-g'(U))`, valid once `g` is decreasing with
//! nonincreasing slope beyond `U`. Subdivision is worst-panel-first and fully
//! deterministic; results are summed in interval order with compensation, so
//! a given integrand always reproduces the same bytes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::graph::KahanSum;

/// 15-point Kronrod abscissae on [0, 1] (symmetric about the origin).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// 7-point Gauss weights for the even-indexed Kronrod abscissae.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Errors from quadrature and envelope handling.
#[derive(Debug, Clone, thiserror::Error)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("envelope is not integrable: {0}")]
    BadEnvelope(String),
    #[error("adaptive refinement did not converge: error {achieved:.3e} > tolerance {required:.3e} after {panels} panels")]
    NonConvergent {
        achieved: f64,
        required: f64,
        panels: usize,
    },
    #[error("integrand returned a non-finite value near u = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("tail certification failed: bound {bound:.3e} exceeds target {target:.3e} at radius {radius}")]
    TailNotCertified { bound: f64, target: f64, radius: f64 },
}

/// Tolerances and resource limits for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Absolute tolerance on the accumulated error estimate.
    pub abs_tol: f64,
    /// Relative tolerance against the current value estimate.
    pub rel_tol: f64,
    /// Panel-split budget per integral.
    pub max_subdivisions: usize,
    /// Certified tail mass allowed, relative to the integral value.
    pub tail_rel: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_subdivisions: 4000,
            tail_rel: 1e-12,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol >= 0.0) || !(self.tail_rel > 0.0) {
            return Err(QuadratureError::InvalidSpec(
                "tolerances must be positive".to_string(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(QuadratureError::InvalidSpec(
                "max_subdivisions must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One Gauss–Kronrod evaluation over `[a, b]`: returns the Kronrod value and
/// a conservative error estimate (QUADPACK-style rescaling).
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let fc = f(centr);
    let mut resg = WG[3] * fc;
    let mut resk = WGK[7] * fc;
    let mut resabs = WGK[7] * fc.abs();
    let mut fv1 = [0.0f64; 7];
    let mut fv2 = [0.0f64; 7];
    for j in 0..7 {
        let absc = hlgth * XGK[j];
        let f1 = f(centr - absc);
        let f2 = f(centr + absc);
        fv1[j] = f1;
        fv2[j] = f2;
        let fsum = f1 + f2;
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * hlgth;
    let resabs = resabs * hlgth.abs();
    let resasc = resasc * hlgth.abs();
    let mut abserr = ((resk - resg) * hlgth).abs();
    if resasc != 0.0 && abserr != 0.0 {
        abserr = resasc * (200.0 * abserr / resasc).powf(1.5).min(1.0);
    }
    let uflow = f64::MIN_POSITIVE;
    let eps = f64::EPSILON;
    if resabs > uflow / (50.0 * eps) {
        abserr = abserr.max(50.0 * eps * resabs);
    }
    (result, abserr)
}

/// A converged subinterval of an adaptive run.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.a == other.a
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on error, with the left endpoint as a deterministic tie
        // breaker.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Value, error estimate, and panel count for a finite-interval integral.
#[derive(Debug, Clone)]
pub struct IntervalIntegral {
    pub value: f64,
    pub abs_error: f64,
    pub panels: Vec<Panel>,
}

/// Adaptively integrates `f` over `[a, b]` to the requested tolerances by
/// repeatedly bisecting the panel with the largest error estimate.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<IntervalIntegral, QuadratureError> {
    spec.validate()?;
    if !(a < b) {
        return Err(QuadratureError::InvalidSpec(format!(
            "empty or inverted interval [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    let (value, error) = gauss_kronrod_15(f, a, b);
    heap.push(Panel {
        a,
        b,
        value,
        error,
    });
    let mut splits = 0usize;
    loop {
        let total_value: f64 = {
            let mut acc = KahanSum::default();
            for p in heap.iter() {
                acc.add(p.value);
            }
            acc.value()
        };
        let total_error: f64 = heap.iter().map(|p| p.error).sum();
        if !total_value.is_finite() || !total_error.is_finite() {
            let bad = heap.iter().find(|p| !p.value.is_finite() || !p.error.is_finite());
            return Err(QuadratureError::NonFiniteIntegrand {
                at: bad.map(|p| 0.5 * (p.a + p.b)).unwrap_or(a),
            });
        }
        let tol = spec.abs_tol.max(spec.rel_tol * total_value.abs());
        if total_error <= tol {
            break;
        }
        if splits >= spec.max_subdivisions {
            return Err(QuadratureError::NonConvergent {
                achieved: total_error,
                required: tol,
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval is at floating-point resolution; accept as-is.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            continue;
        }
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gauss_kronrod_15(f, lo, hi);
            heap.push(Panel {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
        splits += 1;
    }
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut acc = KahanSum::default();
    let mut err = 0.0;
    for p in &panels {
        acc.add(p.value);
        err += p.error;
    }
    Ok(IntervalIntegral {
        value: acc.value(),
        abs_error: err,
        panels,
    })
}

/// Analytic upper envelope for a log-integrand on the real line:
/// `ln f(u) <= log_scale + sum_j growth_j.0 * |u|^growth_j.1
///             - decay_coef * |u|^decay_pow`.
#[derive(Debug, Clone)]
pub struct DecayEnvelope {
    pub log_scale: f64,
    pub growth: Vec<(f64, f64)>,
    pub decay_coef: f64,
    pub decay_pow: f64,
}

impl DecayEnvelope {
    pub fn new(log_scale: f64, growth: Vec<(f64, f64)>, decay_coef: f64, decay_pow: f64) -> Self {
        DecayEnvelope {
            log_scale,
            growth,
            decay_coef,
            decay_pow,
        }
    }

    fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.decay_coef > 0.0) || !(self.decay_pow > 1.0) {
            return Err(QuadratureError::BadEnvelope(format!(
                "decay term {}*|u|^{} does not dominate",
                self.decay_coef, self.decay_pow
            )));
        }
        for &(c, p) in &self.growth {
            if c < 0.0 || !(p > 0.0) {
                return Err(QuadratureError::BadEnvelope(format!(
                    "growth term {c}*|u|^{p} is malformed"
                )));
            }
            if p >= self.decay_pow && c > 0.0 {
                return Err(QuadratureError::BadEnvelope(format!(
                    "growth power {p} is not dominated by decay power {}",
                    self.decay_pow
                )));
            }
        }
        if !self.log_scale.is_finite() {
            return Err(QuadratureError::BadEnvelope(
                "non-finite log scale".to_string(),
            ));
        }
        Ok(())
    }

    /// Envelope value `g(|u|)`.
    pub fn log_bound(&self, u: f64) -> f64 {
        let a = u.abs();
        let mut g = self.log_scale - self.decay_coef * a.powf(self.decay_pow);
        for &(c, p) in &self.growth {
            g += c * a.powf(p);
        }
        g
    }

    /// `-g'(u)` for `u > 0`; positive once the decay term dominates.
    fn neg_slope(&self, u: f64) -> f64 {
        let mut s = self.decay_coef * self.decay_pow * u.powf(self.decay_pow - 1.0);
        for &(c, p) in &self.growth {
            s -= c * p * u.powf(p - 1.0);
        }
        s
    }

    /// Certified bound on `int_{|u| >= radius} e^(g(|u|)) du` (both tails).
    /// Requires the slope to be safely negative at the radius.
    pub fn tail_mass_bound(&self, radius: f64) -> Result<f64, QuadratureError> {
        let slope = self.neg_slope(radius);
        if !(slope > 0.0) {
            return Err(QuadratureError::BadEnvelope(format!(
                "envelope is not decreasing at radius {radius}"
            )));
        }
        Ok(2.0 * self.log_bound(radius).exp() / slope)
    }

    /// Smallest scanned radius whose certified tail mass is below
    /// `exp(log_target)`; scans geometrically from just past the envelope
    /// peak.
    pub fn truncation_radius(&self, log_target: f64) -> Result<f64, QuadratureError> {
        self.validate()?;
        let mut u = 1.0f64;
        // Step past the peak first so that the slope test is meaningful.
        for _ in 0..20_000 {
            if self.neg_slope(u) > 0.0 {
                break;
            }
            u *= 1.25;
        }
        for _ in 0..20_000 {
            let slope = self.neg_slope(u);
            if slope > 0.0 {
                let log_tail = std::f64::consts::LN_2 + self.log_bound(u) - slope.ln();
                if log_tail <= log_target {
                    return Ok(u);
                }
            }
            u *= 1.25;
        }
        Err(QuadratureError::BadEnvelope(format!(
            "no truncation radius reaches log tail target {log_target}"
        )))
    }
}

/// Result of a certified full-line integral.
#[derive(Debug, Clone)]
pub struct LineIntegral {
    pub value: f64,
    /// Quadrature error estimate inside the truncation window.
    pub abs_error: f64,
    /// Certified bound on the discarded tail mass.
    pub tail_bound: f64,
    pub radius: f64,
    pub panels: Vec<Panel>,
}

/// Integrates a nonnegative-envelope integrand over the whole line: truncates
/// where the envelope certifies the tail, integrates adaptively, then widens
/// until the certified tail is below `tail_rel` of the value.
pub fn integrate_real_line<F: Fn(f64) -> f64>(
    f: &F,
    envelope: &DecayEnvelope,
    spec: &QuadratureSpec,
) -> Result<LineIntegral, QuadratureError> {
    spec.validate()?;
    envelope.validate()?;
    // Initial radius: drive the certified tail below tail_rel relative to the
    // envelope peak scale, which upper-bounds the density peak.
    let peak = peak_log(envelope);
    let mut radius = envelope.truncation_radius(peak + spec.tail_rel.ln())?;
    let mut inner = integrate_interval(f, -radius, radius, spec)?;
    for _ in 0..64 {
        let tail = envelope.tail_mass_bound(radius)?;
        let target = spec.abs_tol.max(spec.tail_rel * inner.value.abs());
        if tail <= target {
            return Ok(LineIntegral {
                value: inner.value,
                abs_error: inner.abs_error,
                tail_bound: tail,
                radius,
                panels: inner.panels,
            });
        }
        // Widen and integrate the new shells, keeping panel bookkeeping.
        let wider = radius * 1.5;
        let left = integrate_interval(f, -wider, -radius, spec)?;
        let right = integrate_interval(f, radius, wider, spec)?;
        let mut panels = left.panels;
        panels.extend(inner.panels.iter().copied());
        panels.extend(right.panels);
        panels.sort_by(|p, q| p.a.total_cmp(&q.a));
        let mut acc = KahanSum::default();
        for p in &panels {
            acc.add(p.value);
        }
        inner = IntervalIntegral {
            value: acc.value(),
            abs_error: inner.abs_error + left.abs_error + right.abs_error,
            panels,
        };
        radius = wider;
    }
    let tail = envelope.tail_mass_bound(radius)?;
    Err(QuadratureError::TailNotCertified {
        bound: tail,
        target: spec.abs_tol.max(spec.tail_rel * inner.value.abs()),
        radius,
    })
}

pub(crate) fn peak_log(envelope: &DecayEnvelope) -> f64 {
    // Coarse scan for the envelope maximum; only used to set scales.
    let mut best = envelope.log_bound(0.0);
    let mut u = 1e-3f64;
    for _ in 0..200 {
        best = best.max(envelope.log_bound(u));
        u *= 1.2;
        if envelope.neg_slope(u) > 0.0 && u > 1.0 {
            break;
        }
    }
    best
}

/// A fixed quadrature rule assembled from the converged panels of a probe
/// integrand; reusable across integrands with the same concentration.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub radius: f64,
}

impl PanelGrid {
    /// Builds a grid by adaptively integrating `probe` on the certified
    /// window, bisecting every converged panel once more as a safety margin,
    /// and expanding each panel into Gauss–Kronrod nodes.
    pub fn from_probe<F: Fn(f64) -> f64>(
        probe: &F,
        envelope: &DecayEnvelope,
        spec: &QuadratureSpec,
    ) -> Result<PanelGrid, QuadratureError> {
        let line = integrate_real_line(probe, envelope, spec)?;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for panel in &line.panels {
            let mid = 0.5 * (panel.a + panel.b);
            for (a, b) in [(panel.a, mid), (mid, panel.b)] {
                if !(a < b) {
                    continue;
                }
                let centr = 0.5 * (a + b);
                let hlgth = 0.5 * (b - a);
                for j in (0..7).rev() {
                    nodes.push(centr - hlgth * XGK[j]);
                    weights.push(WGK[j] * hlgth);
                }
                nodes.push(centr);
                weights.push(WGK[7] * hlgth);
                for j in 0..7 {
                    nodes.push(centr + hlgth * XGK[j]);
                    weights.push(WGK[j] * hlgth);
                }
            }
        }
        Ok(PanelGrid {
            nodes,
            weights,
            radius: line.radius,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to an arbitrary integrand.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut acc = KahanSum::default();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x));
        }
        acc.value()
    }
}

/// `|u|^p` with the `u = 0` case exact for every positive exponent. Small
/// integer exponents use plain multiplication so that identities such as
/// `|u|^4 = (u^2)^2` hold bit-for-bit against directly multiplied potentials.
pub fn abs_powf(u: f64, p: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let a = u.abs();
    if p == 2.0 {
        u * u
    } else if p == 4.0 {
        let s = u * u;
        s * s
    } else if p == 1.0 {
        a
    } else if p == 3.0 {
        a * u * u
    } else {
        a.powf(p)
    }
}
