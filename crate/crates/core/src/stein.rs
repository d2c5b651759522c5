//! Distance bounds between the normalized partial sum `F_n / σ_n` and a
//! standard Gaussian.

use crate::contractions::{kernel_norm_sq, log_weight, ContractionConfig, ContractionTable};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::hermite::{Gap, HermiteExpansion};
use crate::numeric::{self, CompensatedSum};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Probability metrics covered by the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "W")]
    Wasserstein,
    #[serde(rename = "bW")]
    BoundedWasserstein,
    #[serde(rename = "K")]
    Kolmogorov,
    #[serde(rename = "TV")]
    TotalVariation,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Wasserstein,
        Metric::BoundedWasserstein,
        Metric::Kolmogorov,
        Metric::TotalVariation,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Metric::Wasserstein => "W",
            Metric::BoundedWasserstein => "bW",
            Metric::Kolmogorov => "K",
            Metric::TotalVariation => "TV",
        }
    }

    pub fn needs_density(self) -> bool {
        matches!(self, Metric::Kolmogorov | Metric::TotalVariation)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "W" | "w" => Ok(Metric::Wasserstein),
            "bW" | "bw" | "BW" => Ok(Metric::BoundedWasserstein),
            "K" | "k" => Ok(Metric::Kolmogorov),
            "TV" | "tv" => Ok(Metric::TotalVariation),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

/// Metric constant of the Stein bound: `√(2/π)` for W and bW, 1 for K, 2 for TV.
pub fn c_phi(metric: Metric, has_density: bool) -> Result<f64> {
    if metric.needs_density() && !has_density {
        return Err(Error::DensityRequired(metric.symbol()));
    }
    Ok(match metric {
        Metric::Wasserstein | Metric::BoundedWasserstein => (2.0 / std::f64::consts::PI).sqrt(),
        Metric::Kolmogorov => 1.0,
        Metric::TotalVariation => 2.0,
    })
}

/// `Var F_n = Σ_q q! c_q² Σ_{|k|<n} (1 - |k|/n) ρ(k)^q` over every order of the expansion.
pub fn sigma_n_sq(expansion: &HermiteExpansion, model: &CovarianceModel, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let lags = model.lags(n);
    let v = numeric::compensated_sum(
        expansion
            .active_orders()
            .into_iter()
            .map(|q| expansion.chaos_weight(q) * kernel_norm_from(&lags, q)),
    );
    if !(v > 1e-12) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok(v)
}

fn kernel_norm_from(lags: &[f64], q: u32) -> f64 {
    let n = lags.len();
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    for (k, r) in lags.iter().enumerate().skip(1) {
        acc.add(2.0 * (1.0 - k as f64 / n as f64) * r.powi(q as i32));
    }
    acc.value()
}

/// Limit variance, or the marker for a non-summable covariance power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaLimit {
    Value(f64),
    Nonsummable,
}

impl SigmaLimit {
    pub fn value(self) -> Option<f64> {
        match self {
            SigmaLimit::Value(v) => Some(v),
            SigmaLimit::Nonsummable => None,
        }
    }
}

impl fmt::Display for SigmaLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaLimit::Value(v) => write!(f, "{v:.11e}"),
            SigmaLimit::Nonsummable => f.write_str("NONSUMMABLE"),
        }
    }
}

impl Serialize for SigmaLimit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaLimit::Value(v) => s.serialize_f64(*v),
            SigmaLimit::Nonsummable => s.serialize_str("NONSUMMABLE"),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => Ok(SigmaLimit::Value(n.as_f64().unwrap_or(f64::NAN))),
            serde_json::Value::String(s) if s == "NONSUMMABLE" => Ok(SigmaLimit::Nonsummable),
            _ => Err(serde::de::Error::custom(
                "expected a number or \"NONSUMMABLE\"",
            )),
        }
    }
}

const LIMIT_MAX_LAG: usize = 1 << 23;

/// `Σ_q q! c_q² Σ_{k∈Z} ρ(k)^q`.
///
/// Finite-support models are summed exactly. Otherwise lags are added in
/// doubling blocks, each partial sum completed by the power-law tail
/// `ρ(K)^q K / (αq - 1)`, until the completed value moves by less than
/// `1e-12` relative.
pub fn sigma_limit_sq(expansion: &HermiteExpansion, model: &CovarianceModel) -> SigmaLimit {
    let orders = expansion.active_orders();
    if let Some(support) = model.support() {
        let lags = model.lags(support + 1);
        let v = numeric::compensated_sum(orders.iter().map(|&q| {
            let s: f64 =
                1.0 + 2.0 * numeric::compensated_sum(lags[1..].iter().map(|r| r.powi(q as i32)));
            expansion.chaos_weight(q) * s
        }));
        return SigmaLimit::Value(v);
    }
    let Some(alpha) = model.decay_alpha else {
        return SigmaLimit::Nonsummable;
    };
    if alpha * expansion.rank as f64 <= 1.0 {
        return SigmaLimit::Nonsummable;
    }
    let mut sums: Vec<CompensatedSum> = orders.iter().map(|_| CompensatedSum::new()).collect();
    let mut done = 1usize; // lags 1..done already summed
    let mut block = 1024usize;
    let mut previous = f64::NAN;
    loop {
        let hi = (done + block).min(LIMIT_MAX_LAG);
        for k in done..hi {
            let r = model.rho(k as i64);
            for (acc, &q) in sums.iter_mut().zip(&orders) {
                acc.add(r.powi(q as i32));
            }
        }
        done = hi;
        let last = model.rho(done as i64 - 1);
        let total = numeric::compensated_sum(orders.iter().zip(&sums).map(|(&q, acc)| {
            let decay = alpha * q as f64;
            let tail = last.powi(q as i32) * (done - 1) as f64 / (decay - 1.0);
            expansion.chaos_weight(q) * (1.0 + 2.0 * (acc.value() + tail))
        }));
        if (total - previous).abs() <= 1e-12 * total.abs() || done >= LIMIT_MAX_LAG {
            return SigmaLimit::Value(total);
        }
        previous = total;
        block *= 2;
    }
}

/// Estimated contribution of the orders beyond `Q_max` and of skipped pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TailEstimate {
    /// `converged` is false when the extension hit its order limit first.
    Finite { value: f64, converged: bool },
    /// The coefficient brackets kept growing; `partial` is the sum reached.
    Divergent { partial: f64 },
}

impl TailEstimate {
    pub fn value(self) -> f64 {
        match self {
            TailEstimate::Finite { value, .. } => value,
            TailEstimate::Divergent { .. } => f64::INFINITY,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, TailEstimate::Divergent { .. })
    }
}

impl fmt::Display for TailEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailEstimate::Finite { value, .. } => write!(f, "{value:.11e}"),
            TailEstimate::Divergent { .. } => f.write_str("DIVERGENT"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub p: u32,
    pub q: u32,
    pub r: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub metrics: Vec<Metric>,
    /// Pairs whose coefficient bracket is below this fraction of the largest
    /// one are not evaluated; their capped mass goes to the tail.
    pub skip_ratio: f64,
    pub tail_tolerance: f64,
    /// Highest order used when extending the expansion for the tail.
    pub tail_max_order: u32,
    /// Raise `SummabilityViolation` when the tail diverges.
    pub strict: bool,
    pub breakdown_len: usize,
    pub contraction: ContractionConfig,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Wasserstein, Metric::BoundedWasserstein],
            skip_ratio: 1e-18,
            tail_tolerance: 1e-16,
            tail_max_order: 120,
            strict: false,
            breakdown_len: 20,
            contraction: ContractionConfig::default(),
        }
    }
}

impl BoundConfig {
    pub fn with_metrics(metrics: &[Metric]) -> Self {
        Self {
            metrics: metrics.to_vec(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub q_max: u32,
    pub model: String,
    pub sigma_n_sq: f64,
    pub sigma_limit_sq: SigmaLimit,
    pub bound_core: f64,
    pub per_metric: BTreeMap<Metric, f64>,
    pub truncation_tail: TailEstimate,
    pub breakdown: Vec<BoundTerm>,
    pub terms_evaluated: usize,
    pub terms_skipped: usize,
}

impl BoundReport {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.per_metric.get(&m).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: [&'static str; 6] =
        ["n", "sigma_n_sq", "bound_W", "bound_K", "bound_TV", "tail"];

    pub fn csv_row(&self) -> [String; 6] {
        let opt = |m| {
            self.metric(m)
                .map(|v| format!("{v:.11e}"))
                .unwrap_or_default()
        };
        [
            self.n.to_string(),
            format!("{:.11e}", self.sigma_n_sq),
            opt(Metric::Wasserstein),
            opt(Metric::Kolmogorov),
            opt(Metric::TotalVariation),
            self.truncation_tail.to_string(),
        ]
    }
}

/// One CSV row per report.
pub fn write_bound_csv<W: std::io::Write>(reports: &[BoundReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BoundReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Unnormalized bracket `p · w(p,q,r) · |c_p c_q|` for an ordered pair.
fn bracket(expansion: &HermiteExpansion, p: u32, q: u32, r: u32) -> f64 {
    let lw =
        log_weight(p, q, r) + expansion.ln_abs_coefficient(p) + expansion.ln_abs_coefficient(q);
    p as f64 * lw.exp()
}

/// Contraction orders entering the bound for the pair `p <= q`.
fn contraction_range(p: u32, q: u32) -> std::ops::RangeInclusive<u32> {
    if p == q {
        1..=p - 1
    } else {
        1..=p
    }
}

/// Triples whose dominance bounds control every other absolute sum.
pub fn base_triples(rank: u32, gap: Gap) -> Vec<(u32, u32, u32)> {
    let mut out: Vec<(u32, u32, u32)> = (1..rank).map(|r| (rank, rank, r)).collect();
    if rank == 1 {
        out.push((1, 1, 1));
    }
    if let Some(g) = gap.finite() {
        out.push((rank, rank + g, rank));
    }
    out
}

/// Candidate terms `(p, q, r)` with `p <= q <= q_max`, each with its
/// pair-symmetrized bracket (the pair `(p,q)`, `(q,p)` carries `p + q`).
fn candidates(expansion: &HermiteExpansion, q_max: u32) -> Vec<((u32, u32, u32), f64)> {
    let orders: Vec<u32> = expansion
        .active_orders()
        .into_iter()
        .filter(|&q| q <= q_max)
        .collect();
    let mut out = Vec::new();
    for (i, &p) in orders.iter().enumerate() {
        for &q in &orders[i..] {
            for r in contraction_range(p, q) {
                let u = if p == q {
                    bracket(expansion, p, p, r)
                } else {
                    bracket(expansion, p, q, r) + bracket(expansion, q, p, r)
                };
                out.push(((p, q, r), u));
            }
        }
    }
    out
}

/// Largest bracket over the whole expansion. Taking it independent of the
/// bound's `Q_max` keeps the skipped set, and so the bound, monotone in `Q_max`.
fn skip_reference(expansion: &HermiteExpansion) -> f64 {
    candidates(expansion, expansion.q_max)
        .iter()
        .fold(0.0_f64, |m, c| m.max(c.1))
}

/// Triples the bound at `q_max` reads from a contraction table, after the
/// skip rule, together with the base triples used by the tail.
pub fn required_triples(
    expansion: &HermiteExpansion,
    q_max: u32,
    config: &BoundConfig,
) -> Vec<(u32, u32, u32)> {
    let cands = candidates(expansion, q_max);
    let top = skip_reference(expansion);
    let mut out: Vec<(u32, u32, u32)> = cands
        .iter()
        .filter(|c| c.1 >= config.skip_ratio * top)
        .map(|c| c.0)
        .collect();
    out.extend(base_triples(expansion.rank, expansion.gap));
    out.sort_unstable();
    out.dedup();
    out
}

/// Bound for `F_n / σ_n` at one `n`.
pub fn univariate_bound(
    expansion: &HermiteExpansion,
    model: &CovarianceModel,
    n: usize,
    q_max: u32,
    config: &BoundConfig,
) -> Result<BoundReport> {
    check_metrics(expansion, config)?;
    let q_max = q_max.min(expansion.q_max);
    let triples = required_triples(expansion, q_max, config);
    let p_max = triples.iter().map(|t| t.1).max().unwrap_or(1).max(q_max);
    let table = ContractionTable::compute(model, n, p_max, &triples, &config.contraction)?;
    univariate_bound_from_table(expansion, model, &table, q_max, config)
}

fn check_metrics(expansion: &HermiteExpansion, config: &BoundConfig) -> Result<()> {
    for &m in &config.metrics {
        c_phi(m, expansion.spec.zero_measure_preserving())?;
    }
    Ok(())
}

/// Bound assembled from a precomputed table that holds at least
/// `required_triples(expansion, q_max, config)`.
pub fn univariate_bound_from_table(
    expansion: &HermiteExpansion,
    model: &CovarianceModel,
    table: &ContractionTable,
    q_max: u32,
    config: &BoundConfig,
) -> Result<BoundReport> {
    check_metrics(expansion, config)?;
    let q_max = q_max.min(expansion.q_max);
    let n = table.n;
    let sigma_sq = sigma_n_sq(expansion, model, n)?;

    let cands = candidates(expansion, q_max);
    let top = skip_reference(expansion);
    let base_cap = base_triples(expansion.rank, expansion.gap)
        .iter()
        .filter_map(|&(p, q, r)| table.absolute(p, q, r))
        .fold(0.0_f64, f64::max)
        .sqrt();
    let mut terms: Vec<BoundTerm> = Vec::new();
    let mut skipped = CompensatedSum::new();
    let mut skipped_count = 0usize;
    for &((p, q, r), u) in &cands {
        if u < config.skip_ratio * top {
            skipped.add(u * base_cap);
            skipped_count += 1;
            continue;
        }
        let s = table.signed(p, q, r).ok_or_else(|| {
            Error::InvalidInput(format!(
                "contraction table lacks the triple ({p}, {q}, {r})"
            ))
        })?;
        terms.push(BoundTerm {
            p,
            q,
            r,
            value: u * s.max(0.0).sqrt() / sigma_sq,
        });
    }
    terms.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then((a.p, a.q, a.r).cmp(&(b.p, b.q, b.r)))
    });
    let bound_core = numeric::compensated_sum(terms.iter().map(|t| t.value));
    let terms_evaluated = terms.len();
    terms.truncate(config.breakdown_len);

    let tail = tail_estimate(expansion, q_max, config)?;
    let truncation_tail = match tail {
        TailEstimate::Finite { value, converged } => TailEstimate::Finite {
            value: (value * base_cap + skipped.value()) / sigma_sq,
            converged,
        },
        TailEstimate::Divergent { partial } => TailEstimate::Divergent {
            partial: (partial * base_cap + skipped.value()) / sigma_sq,
        },
    };
    if config.strict && truncation_tail.is_divergent() {
        return Err(Error::SummabilityViolation(
            "coefficient brackets beyond Q_max keep growing".into(),
        ));
    }

    let has_density = expansion.spec.zero_measure_preserving();
    let mut per_metric = BTreeMap::new();
    for &m in &config.metrics {
        per_metric.insert(m, c_phi(m, has_density)? * bound_core);
    }
    Ok(BoundReport {
        n,
        q_max,
        model: model.label.clone(),
        sigma_n_sq: sigma_sq,
        sigma_limit_sq: sigma_limit_sq(expansion, model),
        bound_core,
        per_metric,
        truncation_tail,
        breakdown: terms,
        terms_evaluated,
        terms_skipped: skipped_count,
    })
}

/// Sum of the brackets with `max(p, q) > q_max`, extending the expansion
/// one active order at a time.
fn tail_estimate(
    expansion: &HermiteExpansion,
    q_max: u32,
    config: &BoundConfig,
) -> Result<TailEstimate> {
    let polynomial = matches!(
        expansion.spec.kind(),
        crate::hermite::FunctionKind::Hermite { .. }
            | crate::hermite::FunctionKind::Coefficients { .. }
    );
    let limit = if polynomial {
        expansion.q_max
    } else {
        config.tail_max_order.max(q_max)
    };
    if limit <= q_max {
        return Ok(TailEstimate::Finite {
            value: 0.0,
            converged: true,
        });
    }
    let ext = if limit <= expansion.q_max {
        expansion.clone()
    } else {
        expansion.extended(limit)?
    };
    let orders = ext.active_orders();
    let mut total = CompensatedSum::new();
    let mut small_run = 0usize;
    let mut growth_run = 0usize;
    let mut last_inc = 0.0_f64;
    for &big in orders.iter().filter(|&&q| q > q_max) {
        let mut inc = CompensatedSum::new();
        for &p in orders.iter().take_while(|&&p| p <= big) {
            for r in contraction_range(p, big) {
                inc.add(if p == big {
                    bracket(&ext, p, p, r)
                } else {
                    bracket(&ext, p, big, r) + bracket(&ext, big, p, r)
                });
            }
        }
        let inc = inc.value();
        total.add(inc);
        if inc > last_inc && last_inc > 0.0 {
            growth_run += 1;
        } else {
            growth_run = 0;
        }
        if growth_run >= 5 {
            return Ok(TailEstimate::Divergent {
                partial: total.value(),
            });
        }
        last_inc = inc;
        if inc < config.tail_tolerance * total.value() {
            small_run += 1;
            if small_run >= 4 {
                return Ok(TailEstimate::Finite {
                    value: total.value(),
                    converged: true,
                });
            }
        } else {
            small_run = 0;
        }
    }
    // every active order up to the limit has been included
    let converged = polynomial || orders.last().is_none_or(|&q| q < limit);
    Ok(TailEstimate::Finite {
        value: total.value(),
        converged,
    })
}

/// Bound reports over several sample sizes.
pub fn bound_sweep(
    expansion: &HermiteExpansion,
    model: &CovarianceModel,
    ns: &[usize],
    q_max: u32,
    config: &BoundConfig,
) -> Result<Vec<BoundReport>> {
    ns.iter()
        .map(|&n| univariate_bound(expansion, model, n, q_max, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiBoundReport {
    pub d: usize,
    pub n: usize,
    pub covariance: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub c_front: f64,
    pub core: f64,
    pub bound: f64,
    pub condition_number: f64,
    pub jacobi_sweeps: usize,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending,
/// with the number of sweeps used.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>], tol: f64) -> (Vec<f64>, usize) {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let frob: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    loop {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= tol * frob.max(f64::MIN_POSITIVE) || sweeps >= 100 {
            break;
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    (eig, sweeps)
}

/// Bound for the vector `(F_n^{(1)}, …, F_n^{(d)})` of partial sums driven by
/// the same sequence.
pub fn multivariate_bound(
    expansions: &[HermiteExpansion],
    model: &CovarianceModel,
    n: usize,
    q_max: u32,
    config: &BoundConfig,
) -> Result<MultiBoundReport> {
    let d = expansions.len();
    if d < 2 {
        return Err(Error::InvalidInput(
            "multivariate bound needs at least two functions; use the univariate bound".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let q_top = expansions
        .iter()
        .map(|e| e.q_max)
        .min()
        .unwrap_or(1)
        .min(q_max);
    let kernels: Vec<f64> = (0..=q_top).map(|q| kernel_norm_sq(model, n, q)).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = numeric::compensated_sum((1..=q_top).map(|q| {
                let ci = expansions[i].coefficient(q);
                let cj = expansions[j].coefficient(q);
                (numeric::ln_factorial(q as u64)).exp() * ci * cj * kernels[q as usize]
            }));
        }
    }
    let (eig, sweeps) = symmetric_eigenvalues(&cov, 1e-12);
    let (lo, hi) = (eig[0], eig[d - 1]);
    if !(lo > 1e-10 * hi) {
        return Err(Error::SingularCovariance { min: lo, max: hi });
    }
    let c_front = (d as f64).sqrt() * hi.sqrt() / lo;

    // triples for all cross pairs of active orders
    let active: Vec<Vec<u32>> = expansions
        .iter()
        .map(|e| {
            e.active_orders()
                .into_iter()
                .filter(|&q| q <= q_top)
                .collect()
        })
        .collect();
    let mut triples = Vec::new();
    for ai in &active {
        for aj in &active {
            for &p in ai {
                for &q in aj {
                    let range = if p == q { 1..=p - 1 } else { 1..=p.min(q) };
                    triples.extend(range.map(|r| (p.min(q), p.max(q), r)));
                }
            }
        }
    }
    triples.sort_unstable();
    triples.dedup();
    let table = ContractionTable::compute(model, n, q_top, &triples, &config.contraction)?;
    let mut core = CompensatedSum::new();
    for (i, ai) in active.iter().enumerate() {
        for (j, aj) in active.iter().enumerate() {
            for &p in ai {
                for &q in aj {
                    let range = if p == q { 1..=p - 1 } else { 1..=p.min(q) };
                    for r in range {
                        let s = table.signed(p, q, r).unwrap_or(0.0).max(0.0);
                        let lw = log_weight(p, q, r)
                            + expansions[i].ln_abs_coefficient(p)
                            + expansions[j].ln_abs_coefficient(q);
                        core.add(p as f64 * lw.exp() * s.sqrt());
                    }
                }
            }
        }
    }
    let core = core.value();
    Ok(MultiBoundReport {
        d,
        n,
        covariance: cov,
        eigenvalues: eig,
        c_front,
        core,
        bound: c_front * core,
        condition_number: hi / lo,
        jacobi_sweeps: sweeps,
    })
}
