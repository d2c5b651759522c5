//! Hermite analysis of the subordinating function g.
//!
//! Coefficients are obtained from Gaussian-weight quadrature of g against the
//! normalized Hermite polynomials `ψ_q = H_q / √q!`, so the quantity computed
//! directly is `β_q = E[g(X) ψ_q(X)] = c_q √q!` and `q! c_q² = β_q²` never
//! touches a factorial. Rank and chaotic gap are read off the thresholded
//! coefficient vector.

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Probabilists' Hermite polynomial `H_q(x)` by the three-term recurrence.
///
/// `H_0 = 1`.
pub fn hermite_poly(q: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if q == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[q] = H_q(x) / √q!` for `q = 0..out.len()`.
pub fn normalized_hermite_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for q in 1..out.len() - 1 {
        let qf = q as f64;
        out[q + 1] = (x * out[q] - qf.sqrt() * out[q - 1]) / (qf + 1.0).sqrt();
    }
}

/// Builtin families of subordinating functions. Every builtin is centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum FunctionKind {
    /// `H_q(x)`.
    Hermite { q: u32 },
    /// `|x|^p - μ_p`.
    Power { p: f64 },
    /// `sign(x) |x|^p`.
    SignedPower { p: f64 },
    /// `1{x >= t} - P(X >= t)`.
    Indicator { threshold: f64 },
    /// `e^{ax} - e^{a²/2}`.
    Exponential { a: f64 },
    /// `Σ c_q H_q(x)` over the listed `(q, c_q)` with `q >= 1`.
    Coefficients { terms: Vec<(u32, f64)> },
}

/// Declarative description of g plus its declared density flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    kind: FunctionKind,
    zero_measure_preserving: bool,
    centre: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFunctionSpec {
    #[serde(flatten)]
    kind: FunctionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zero_measure_preserving: Option<bool>,
}

impl FunctionSpec {
    pub fn new(kind: FunctionKind) -> Result<Self> {
        Self::with_flag(kind, None)
    }

    /// Builds a spec, checking a declared density flag against the builtin
    /// value. Only the coefficient kind takes its flag from the caller.
    pub fn with_flag(kind: FunctionKind, declared: Option<bool>) -> Result<Self> {
        let builtin = match &kind {
            FunctionKind::Hermite { q } => {
                if *q == 0 {
                    return Err(Error::Domain("hermite order must be >= 1".into()));
                }
                Some(true)
            }
            FunctionKind::Power { p } | FunctionKind::SignedPower { p } => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::Domain(format!("power p must be > 0, got {p}")));
                }
                Some(true)
            }
            FunctionKind::Indicator { threshold } => {
                if !threshold.is_finite() {
                    return Err(Error::Domain("indicator threshold must be finite".into()));
                }
                Some(false)
            }
            FunctionKind::Exponential { a } => {
                if !a.is_finite() {
                    return Err(Error::Domain("exponential rate must be finite".into()));
                }
                // a = 0 is the constant function; rejected later by the expansion.
                Some(*a != 0.0)
            }
            FunctionKind::Coefficients { terms } => {
                if terms.iter().any(|(q, c)| *q == 0 || !c.is_finite()) {
                    return Err(Error::InvalidInput(
                        "coefficient terms need q >= 1 and finite values".into(),
                    ));
                }
                None
            }
        };
        let flag = match (builtin, declared) {
            (Some(b), Some(d)) if b != d => {
                return Err(Error::InvalidInput(format!(
                    "declared zero_measure_preserving = {d} contradicts the builtin value {b}"
                )))
            }
            (Some(b), _) => b,
            // non-constant polynomials are 0-measure-preserving
            (None, d) => d.unwrap_or(true),
        };
        let centre = match &kind {
            FunctionKind::Power { p } => mu_p(*p)?,
            FunctionKind::Indicator { threshold } => numeric::normal_sf(*threshold),
            FunctionKind::Exponential { a } => (0.5 * a * a).exp(),
            _ => 0.0,
        };
        Ok(Self {
            kind,
            zero_measure_preserving: flag,
            centre,
        })
    }

    pub fn hermite(q: u32) -> Result<Self> {
        Self::new(FunctionKind::Hermite { q })
    }

    pub fn power(p: f64) -> Result<Self> {
        Self::new(FunctionKind::Power { p })
    }

    pub fn signed_power(p: f64) -> Result<Self> {
        Self::new(FunctionKind::SignedPower { p })
    }

    pub fn indicator(threshold: f64) -> Result<Self> {
        Self::new(FunctionKind::Indicator { threshold })
    }

    pub fn exponential(a: f64) -> Result<Self> {
        Self::new(FunctionKind::Exponential { a })
    }

    pub fn coefficients(terms: Vec<(u32, f64)>) -> Result<Self> {
        Self::new(FunctionKind::Coefficients { terms })
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn zero_measure_preserving(&self) -> bool {
        self.zero_measure_preserving
    }

    /// The constant subtracted from the raw function to centre it.
    pub fn centre(&self) -> f64 {
        self.centre
    }

    /// Evaluates the centred function.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            FunctionKind::Hermite { q } => hermite_poly(*q, x),
            FunctionKind::Power { p } => x.abs().powf(*p) - self.centre,
            FunctionKind::SignedPower { p } => x.signum() * x.abs().powf(*p),
            FunctionKind::Indicator { threshold } => {
                if x >= *threshold {
                    1.0 - self.centre
                } else {
                    -self.centre
                }
            }
            FunctionKind::Exponential { a } => (a * x).exp() - self.centre,
            FunctionKind::Coefficients { terms } => {
                let top = terms.iter().map(|t| t.0).max().unwrap_or(0) as usize;
                let mut psi = vec![0.0; top + 1];
                normalized_hermite_into(x, &mut psi);
                terms
                    .iter()
                    .map(|&(q, c)| {
                        c * psi[q as usize] * (0.5 * numeric::ln_factorial(q as u64)).exp()
                    })
                    .sum()
            }
        }
    }

    /// Points where g is not smooth; quadrature panels are graded towards them.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            FunctionKind::Power { .. } | FunctionKind::SignedPower { .. } => vec![0.0],
            FunctionKind::Indicator { threshold } => vec![*threshold],
            _ => Vec::new(),
        }
    }

    /// Log of a growth envelope for |g(x)| at large |x|.
    fn ln_envelope(&self, x: f64) -> f64 {
        let x = x.abs().max(1.0);
        match &self.kind {
            FunctionKind::Hermite { q } => *q as f64 * x.ln(),
            FunctionKind::Power { p } | FunctionKind::SignedPower { p } => p * x.ln(),
            FunctionKind::Indicator { .. } => 0.0,
            FunctionKind::Exponential { a } => a.abs() * x,
            FunctionKind::Coefficients { terms } => {
                terms.iter().map(|t| t.0).max().unwrap_or(0) as f64 * x.ln()
                    + terms.iter().map(|t| t.1.abs()).sum::<f64>().max(1.0).ln()
            }
        }
    }

    /// True when the Hermite expansion is finite by construction.
    fn is_polynomial(&self) -> bool {
        matches!(
            self.kind,
            FunctionKind::Hermite { .. } | FunctionKind::Coefficients { .. }
        )
    }
}

impl Serialize for FunctionSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawFunctionSpec {
            kind: self.kind.clone(),
            zero_measure_preserving: Some(self.zero_measure_preserving),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FunctionSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFunctionSpec::deserialize(d)?;
        FunctionSpec::with_flag(raw.kind, raw.zero_measure_preserving)
            .map_err(serde::de::Error::custom)
    }
}

impl FromStr for FunctionSpec {
    type Err = Error;

    /// Parses `hermite:3`, `power:1.5`, `signed_power:1`, `indicator:0`,
    /// `exponential:1` or `coeffs:2=1.0,4=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("function spec '{s}' lacks ':'")))?;
        let num = |a: &str| -> Result<f64> {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number '{a}' in '{s}'")))
        };
        let kind = match name.trim() {
            "hermite" => FunctionKind::Hermite {
                q: arg
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad order in '{s}'")))?,
            },
            "power" => FunctionKind::Power { p: num(arg)? },
            "signed_power" => FunctionKind::SignedPower { p: num(arg)? },
            "indicator" => FunctionKind::Indicator {
                threshold: num(arg)?,
            },
            "exponential" | "exp" => FunctionKind::Exponential { a: num(arg)? },
            "coeffs" | "coefficients" => {
                let mut terms = Vec::new();
                for item in arg.split(',') {
                    let (q, c) = item
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidInput(format!("bad term '{item}'")))?;
                    let q = q
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad order '{q}'")))?;
                    terms.push((q, num(c)?));
                }
                FunctionKind::Coefficients { terms }
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown function kind '{other}'"
                )))
            }
        };
        FunctionSpec::new(kind)
    }
}

/// Chaotic gap: a positive integer or infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gap {
    Finite(u32),
    Infinite,
}

impl Gap {
    pub fn finite(self) -> Option<u32> {
        match self {
            Gap::Finite(g) => Some(g),
            Gap::Infinite => None,
        }
    }
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gap::Finite(g) => write!(f, "{g}"),
            Gap::Infinite => f.write_str("INFINITE"),
        }
    }
}

impl FromStr for Gap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Gap::Infinite),
            t => match t.parse::<u32>() {
                Ok(g) if g >= 1 => Ok(Gap::Finite(g)),
                _ => Err(Error::InvalidInput(format!("bad chaotic gap '{s}'"))),
            },
        }
    }
}

impl Serialize for Gap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gap::Finite(g) => s.serialize_u32(*g),
            Gap::Infinite => s.serialize_str("INFINITE"),
        }
    }
}

impl<'de> Deserialize<'de> for Gap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|g| *g >= 1)
                .map(|g| Gap::Finite(g as u32))
                .ok_or_else(|| serde::de::Error::custom("gap must be a positive integer")),
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom(
                "gap must be an integer or \"INFINITE\"",
            )),
        }
    }
}

/// Knobs of the quadrature engine and the expansion diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Minimal truncation radius; grown per function envelope.
    pub radius: f64,
    pub panel_width: f64,
    pub nodes_per_panel: usize,
    /// Number of geometric refinements towards each non-smooth point.
    pub grading_levels: usize,
    pub summability_epsilon: f64,
    /// Relative threshold on `|c_q| √q!` below which a coefficient is zero.
    pub zero_threshold: f64,
    /// Raise `SummabilityViolation` instead of only reporting the verdict.
    pub strict_summability: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            radius: 12.0,
            panel_width: 0.25,
            nodes_per_panel: 20,
            grading_levels: 40,
            summability_epsilon: 0.1,
            zero_threshold: 1e-9,
            strict_summability: false,
        }
    }
}

pub const DEFAULT_Q_MAX: u32 = 30;

/// Composite Gauss-Legendre rule against the standard Gaussian density on
/// `[-R, R]`, graded towards a set of breakpoints.
#[derive(Debug, Clone)]
pub struct GaussianQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianQuadrature {
    pub fn new(
        radius: f64,
        breakpoints: &[f64],
        config: &QuadratureConfig,
        panel_width: f64,
    ) -> Self {
        let (gx, gw) = numeric::gauss_legendre(config.nodes_per_panel);
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|b| b.abs() < radius)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = vec![-radius];
        edges.extend(&cuts);
        edges.push(radius);

        let mut panels: Vec<(f64, f64)> = Vec::new();
        for (seg, w) in edges.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            let grade_lo = seg > 0;
            let grade_hi = seg + 1 < edges.len() - 1;
            let len = hi - lo;
            let zone = match (grade_lo, grade_hi) {
                (true, true) => panel_width.min(0.5 * len),
                (true, false) | (false, true) => panel_width.min(len),
                _ => 0.0,
            };
            let mut inner_lo = lo;
            let mut inner_hi = hi;
            if grade_lo {
                push_graded(&mut panels, lo, zone, config.grading_levels);
                inner_lo = lo + zone;
            }
            if grade_hi {
                push_graded(&mut panels, hi, -zone, config.grading_levels);
                inner_hi = hi - zone;
            }
            let span = inner_hi - inner_lo;
            if span > 0.0 {
                let count = (span / panel_width).ceil().max(1.0) as usize;
                let h = span / count as f64;
                for i in 0..count {
                    panels.push((inner_lo + i as f64 * h, inner_lo + (i + 1) as f64 * h));
                }
            }
        }

        let mut nodes = Vec::with_capacity(panels.len() * gx.len());
        let mut weights = Vec::with_capacity(panels.len() * gx.len());
        for (a, b) in panels {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gx.iter().zip(&gw) {
                let t = mid + half * x;
                nodes.push(t);
                weights.push(half * w * numeric::normal_pdf(t));
            }
        }
        Self { nodes, weights }
    }

    /// E[f(X)] over the truncated range.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut acc = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(X) ψ_q(X)]` for `q = 0..=q_max`.
    pub fn project<F: Fn(f64) -> f64>(&self, f: F, q_max: u32) -> Vec<f64> {
        let len = q_max as usize + 1;
        let mut acc = vec![CompensatedSum::new(); len];
        let mut psi = vec![0.0; len];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let fx = w * f(*x);
            if fx == 0.0 {
                continue;
            }
            normalized_hermite_into(*x, &mut psi);
            for (a, p) in acc.iter_mut().zip(&psi) {
                a.add(fx * p);
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }
}

fn push_graded(panels: &mut Vec<(f64, f64)>, at: f64, zone: f64, levels: usize) {
    if zone == 0.0 {
        return;
    }
    let mut outer = 1.0;
    for _ in 0..levels {
        let inner = 0.5 * outer;
        let (a, b) = (at + inner * zone, at + outer * zone);
        panels.push((a.min(b), a.max(b)));
        outer = inner;
    }
    let (a, b) = (at, at + outer * zone);
    panels.push((a.min(b), a.max(b)));
}

/// Standard Gaussian absolute moment `E|X|^p`.
pub fn mu_p(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Domain(format!("mu_p needs p > 0, got {p}")));
    }
    let config = QuadratureConfig::default();
    let radius = radius_for(|x| p * x.abs().max(1.0).ln(), config.radius);
    let quad = GaussianQuadrature::new(radius, &[0.0], &config, config.panel_width);
    Ok(quad.expect(|x| x.abs().powf(p)))
}

/// Smallest radius >= `base` at which `envelope(R) · e^{-R²/4}` has fallen to
/// the level `e^{-base²/4}` it has for bounded functions.
fn radius_for<F: Fn(f64) -> f64>(ln_envelope: F, base: f64) -> f64 {
    let target = -0.25 * base * base;
    let mut r = base;
    while ln_envelope(r) - 0.25 * r * r > target && r < 1e4 {
        r += 0.25;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummabilityVerdict {
    Convergent,
    Divergent,
}

/// Partial sum of `q! c_q² (2+ε)^{2q}` and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summability {
    pub epsilon: f64,
    pub value: f64,
    pub verdict: SummabilityVerdict,
}

/// Parseval diagnostics: the raw partial sum is `var_g`; `accelerated` is the
/// limit of the series estimated from the computed terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsevalTail {
    pub accelerated: f64,
    pub tail: f64,
    pub accelerated_by_levin: bool,
}

/// Hermite expansion of a centred function up to `q_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    pub spec: FunctionSpec,
    pub q_max: u32,
    /// `c_q` for `q = 0..=q_max`; `c_0 = 0` after centring.
    pub coefficients: Vec<f64>,
    /// `q! c_q²` for `q = 0..=q_max`.
    pub chaos_weights: Vec<f64>,
    /// Quadrature estimate of `E g(X)` for the centred function (≈ 0).
    pub mean: f64,
    pub rank: u32,
    pub gap: Gap,
    /// Set when a single active order below `q_max` made the gap infinite
    /// only up to the truncation.
    pub gap_truncated: bool,
    /// `Σ_{q=1}^{q_max} q! c_q²`.
    pub var_g: f64,
    /// `Var g(X)` by an independent quadrature of `g²`.
    pub variance: f64,
    pub parseval: ParsevalTail,
    pub summability: Summability,
    pub zero_threshold: f64,
    pub config: QuadratureConfig,
}

/// Hermite expansion of `g` up to order `q_max`.
pub fn hermite_expand(
    g: &FunctionSpec,
    q_max: u32,
    config: &QuadratureConfig,
) -> Result<HermiteExpansion> {
    if q_max < 1 {
        return Err(Error::InvalidInput("q_max must be >= 1".into()));
    }
    let radius = radius_for(|x| g.ln_envelope(x), config.radius);
    let width = config.panel_width.min(2.0 / ((q_max + 1) as f64).sqrt());
    let quad = GaussianQuadrature::new(radius, &g.breakpoints(), config, width);

    // E g² at R and on a wider range: disagreement means the Gaussian tail
    // still carries mass, i.e. g ∉ L²(γ) numerically.
    let second = quad.expect(|x| g.eval(x).powi(2));
    let wide = GaussianQuadrature::new(radius + 8.0, &g.breakpoints(), config, width);
    let second_wide = wide.expect(|x| g.eval(x).powi(2));
    if !second.is_finite()
        || !second_wide.is_finite()
        || (second_wide - second).abs() > 1e-6 * second_wide.abs().max(1e-300)
    {
        return Err(Error::NonSquareIntegrable(format!(
            "E g(X)^2 = {second:e} on [-{radius}, {radius}] but {second_wide:e} on the widened range"
        )));
    }

    let (mut betas, mean) = match g.kind() {
        FunctionKind::Coefficients { terms } => {
            let mut betas = vec![0.0; q_max as usize + 1];
            for &(q, c) in terms {
                if q > q_max {
                    return Err(Error::InvalidInput(format!(
                        "coefficient order {q} exceeds q_max = {q_max}"
                    )));
                }
                betas[q as usize] += c * (0.5 * numeric::ln_factorial(q as u64)).exp();
            }
            (betas, 0.0)
        }
        _ => {
            let mut betas = quad.project(|x| g.eval(x), q_max);
            let mean = betas[0];
            betas[0] = 0.0;
            (betas, mean)
        }
    };
    let variance = second - mean * mean;

    let scale = betas.iter().skip(1).fold(0.0_f64, |m, b| m.max(b.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::ConstantFunction(q_max));
    }
    let cutoff = config.zero_threshold * scale;
    for b in betas.iter_mut() {
        if b.abs() < cutoff {
            *b = 0.0;
        }
    }
    let active: Vec<u32> = (1..=q_max).filter(|&q| betas[q as usize] != 0.0).collect();
    let rank = active[0];
    let (gap, gap_truncated) = gap_from_orders(&active, !g.is_polynomial());

    let coefficients: Vec<f64> = betas
        .iter()
        .enumerate()
        .map(|(q, b)| b * (-0.5 * numeric::ln_factorial(q as u64)).exp())
        .collect();
    let chaos_weights: Vec<f64> = betas.iter().map(|b| b * b).collect();
    let var_g = numeric::compensated_sum(chaos_weights.iter().skip(1).copied());
    let parseval = parseval_tail(&chaos_weights, var_g);
    let summability = summability(&chaos_weights, &active, config.summability_epsilon);
    if config.strict_summability && summability.verdict == SummabilityVerdict::Divergent {
        return Err(Error::SummabilityViolation(format!(
            "q! c_q^2 (2+{})^(2q) keeps growing near q_max = {q_max}",
            config.summability_epsilon
        )));
    }

    Ok(HermiteExpansion {
        spec: g.clone(),
        q_max,
        coefficients,
        chaos_weights,
        mean,
        rank,
        gap,
        gap_truncated,
        var_g,
        variance,
        parseval,
        summability,
        zero_threshold: config.zero_threshold,
        config: config.clone(),
    })
}

/// Rank-free gap extraction from the sorted list of active orders.
pub fn gap_from_orders(active: &[u32], may_be_truncated: bool) -> (Gap, bool) {
    match active.len() {
        0 | 1 => (Gap::Infinite, may_be_truncated),
        _ => {
            let g = active.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(1);
            (Gap::Finite(g), false)
        }
    }
}

fn summability(weights: &[f64], active: &[u32], epsilon: f64) -> Summability {
    let ln_base = 2.0 * (2.0 + epsilon).ln();
    let terms: Vec<f64> = active
        .iter()
        .map(|&q| (weights[q as usize].ln() + q as f64 * ln_base).exp())
        .collect();
    let value = numeric::compensated_sum(terms.iter().copied());
    let tail = &terms[terms.len().saturating_sub(6)..];
    let growing = tail.len() == 6 && tail.windows(2).all(|w| w[1] > w[0]);
    Summability {
        epsilon,
        value,
        verdict: if growing {
            SummabilityVerdict::Divergent
        } else {
            SummabilityVerdict::Convergent
        },
    }
}

const LEVIN_TERMS: usize = 15;

fn parseval_tail(weights: &[f64], partial: f64) -> ParsevalTail {
    let pairs: Vec<f64> = weights[1..].chunks_exact(2).map(|c| c[0] + c[1]).collect();
    let converged = pairs.last().is_none_or(|&last| last <= 1e-15 * partial);
    let usable = pairs.len() >= 6 && pairs.iter().all(|&t| t > 0.0);
    // The transform loses precision past roughly fifteen terms; the series
    // has nonnegative terms, so an estimate below the partial sum is rejected.
    let accelerated = if !converged && usable {
        levin_u(&pairs[..pairs.len().min(LEVIN_TERMS)]).filter(|v| v.is_finite() && *v >= partial)
    } else {
        None
    };
    match accelerated {
        Some(value) => ParsevalTail {
            accelerated: value,
            tail: value - partial,
            accelerated_by_levin: true,
        },
        None => ParsevalTail {
            accelerated: partial,
            tail: 0.0,
            accelerated_by_levin: false,
        },
    }
}

/// Levin u-transform of the series `Σ terms[j]`, using all supplied terms.
pub fn levin_u(terms: &[f64]) -> Option<f64> {
    let k = terms.len().checked_sub(1)?;
    let mut partial = 0.0;
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    let top = (k + 1) as f64;
    let mut binom = 1.0;
    for (j, &a) in terms.iter().enumerate() {
        partial += a;
        let n = (j + 1) as f64;
        let omega = n * a;
        if omega == 0.0 {
            return None;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * binom * (n / top).powi(k as i32 - 1) / omega;
        num.add(w * partial);
        den.add(w);
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    let d = den.value();
    (d != 0.0).then(|| num.value() / d)
}

impl HermiteExpansion {
    pub fn coefficient(&self, q: u32) -> f64 {
        self.coefficients.get(q as usize).copied().unwrap_or(0.0)
    }

    /// `q! c_q²`, zero beyond `q_max`.
    pub fn chaos_weight(&self, q: u32) -> f64 {
        self.chaos_weights.get(q as usize).copied().unwrap_or(0.0)
    }

    /// `ln |c_q|`.
    pub fn ln_abs_coefficient(&self, q: u32) -> f64 {
        let w = self.chaos_weight(q);
        0.5 * (w.ln() - numeric::ln_factorial(q as u64))
    }

    /// Orders `1..=q_max` with nonzero coefficient.
    pub fn active_orders(&self) -> Vec<u32> {
        (1..=self.q_max)
            .filter(|&q| self.chaos_weight(q) != 0.0)
            .collect()
    }

    /// The same expansion computed up to a higher order.
    pub fn extended(&self, q_max: u32) -> Result<HermiteExpansion> {
        if q_max <= self.q_max {
            return Ok(self.clone());
        }
        let mut config = self.config.clone();
        config.strict_summability = false;
        let mut ext = hermite_expand(&self.spec, q_max, &config)?;
        ext.config.strict_summability = self.config.strict_summability;
        Ok(ext)
    }

    /// Copy with every coefficient multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> HermiteExpansion {
        let mut out = self.clone();
        for c in out.coefficients.iter_mut() {
            *c *= lambda;
        }
        for w in out.chaos_weights.iter_mut() {
            *w *= lambda * lambda;
        }
        out.var_g *= lambda * lambda;
        out.variance *= lambda * lambda;
        out
    }

    /// CSV rows `(q, c_q)`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "c_q"])?;
        for (q, c) in self.coefficients.iter().enumerate() {
            w.write_record([q.to_string(), format!("{:.11e}", c)])?;
        }
        w.flush()?;
        Ok(())
    }
}
