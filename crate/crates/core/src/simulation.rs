//! Exact sampling of stationary Gaussian sequences by circulant embedding,
//! Monte Carlo estimates of the distance between `F_n / σ_n` and `N(0, 1)`,
//! and log-log rate regression.

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::hermite::FunctionSpec;
use crate::numeric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Relative tolerance for negative circulant eigenvalues.
pub const EIGEN_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 6;

/// Circulant embedding of the covariance of `(X_0, …, X_{n-1})`.
#[derive(Clone)]
pub struct Sampler {
    pub n: usize,
    pub embedding_size: usize,
    /// Circulant eigenvalues after clipping.
    pub eigenvalues: Vec<f64>,
    /// Sum of the magnitudes of clipped negative eigenvalues.
    pub clipped_mass: f64,
    pub doublings: usize,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sampler")
            .field("n", &self.n)
            .field("embedding_size", &self.embedding_size)
            .field("clipped_mass", &self.clipped_mass)
            .field("doublings", &self.doublings)
            .finish()
    }
}

fn circulant_eigenvalues(
    model: &CovarianceModel,
    size: usize,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let half = size / 2;
    let mut row: Vec<Complex<f64>> = (0..size)
        .map(|k| {
            let lag = if k <= half { k } else { size - k };
            Complex::new(model.rho(lag as i64), 0.0)
        })
        .collect();
    planner.plan_fft_forward(size).process(&mut row);
    row.iter().map(|z| z.re).collect()
}

pub fn build_sampler(model: &CovarianceModel, n: usize) -> Result<Sampler> {
    if n < 2 {
        return Err(Error::InvalidInput("the sampler needs n >= 2".into()));
    }
    let mut planner = FftPlanner::new();
    let mut size = (2 * (n - 1)).next_power_of_two().max(2);
    let mut most_negative = 0.0;
    for doublings in 0..=MAX_DOUBLINGS {
        let eig = circulant_eigenvalues(model, size, &mut planner);
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min >= -EIGEN_TOL * max {
            let clipped_mass: f64 = eig.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
            let eig: Vec<f64> = eig.into_iter().map(|v| v.max(0.0)).collect();
            let scale = eig.iter().map(|v| (v / size as f64).sqrt()).collect();
            return Ok(Sampler {
                n,
                embedding_size: size,
                eigenvalues: eig,
                clipped_mass,
                doublings,
                scale,
                fft: planner.plan_fft_forward(size),
            });
        }
        most_negative = min;
        size *= 2;
    }
    Err(Error::EmbeddingFailed {
        most_negative,
        size: size / 2,
    })
}

/// Generator for the pair of paths with index `pair`: one ChaCha stream per pair.
fn pair_rng(seed: u64, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair);
    rng
}

impl Sampler {
    /// Two independent paths from one transform (real and imaginary part).
    pub fn sample_pair(&self, seed: u64, pair: u64) -> (Vec<f64>, Vec<f64>) {
        let mut buf = Vec::with_capacity(self.embedding_size);
        let mut scratch = Vec::new();
        self.sample_pair_into(seed, pair, &mut buf, &mut scratch);
        (
            buf[..self.n].iter().map(|z| z.re).collect(),
            buf[..self.n].iter().map(|z| z.im).collect(),
        )
    }

    fn sample_pair_into(
        &self,
        seed: u64,
        pair: u64,
        buf: &mut Vec<Complex<f64>>,
        scratch: &mut Vec<Complex<f64>>,
    ) {
        let mut rng = pair_rng(seed, pair);
        buf.clear();
        for &s in &self.scale {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            buf.push(Complex::new(s * re, s * im));
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
        self.fft.process_with_scratch(buf, scratch);
    }

    /// Path number `replication`: the real part of pair `replication / 2`
    /// for even indices, the imaginary part for odd ones.
    pub fn sample_path(&self, seed: u64, replication: u64) -> Vec<f64> {
        let (re, im) = self.sample_pair(seed, replication / 2);
        if replication.is_multiple_of(2) {
            re
        } else {
            im
        }
    }
}

/// `n^{-1/2} Σ_k (g(X_k) - c0)`.
pub fn evaluate_fn(path: &[f64], g: &FunctionSpec, c0: f64) -> f64 {
    let s: f64 = numeric::compensated_sum(path.iter().map(|&x| g.eval(x) - c0));
    s / (path.len() as f64).sqrt()
}

/// `(d_K, d_W)` between the empirical law of `sorted` and `N(0, 1)`.
pub fn empirical_distances(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let nf = n as f64;
    let mut dk = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = numeric::normal_cdf(x);
        dk = dk
            .max(((i + 1) as f64 / nf - phi).abs())
            .max((i as f64 / nf - phi).abs());
    }
    // Ψ(x) = xΦ(x) + φ(x) is an antiderivative of Φ
    let psi = |x: f64| x * numeric::normal_cdf(x) + numeric::normal_pdf(x);
    let mut acc = numeric::CompensatedSum::new();
    acc.add(psi(sorted[0]));
    acc.add(psi(-sorted[n - 1]));
    for i in 1..n {
        let (a, b) = (sorted[i - 1], sorted[i]);
        if b <= a {
            continue;
        }
        let level = i as f64 / nf;
        // ∫_a^b (level - Φ) with a sign change at Φ^{-1}(level)
        let signed = |lo: f64, hi: f64| level * (hi - lo) - (psi(hi) - psi(lo));
        let z = numeric::normal_quantile(level);
        if z > a && z < b {
            acc.add(signed(a, z).abs());
            acc.add(signed(z, b).abs());
        } else {
            acc.add(signed(a, b).abs());
        }
    }
    (dk, acc.value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub replications: usize,
    pub seed: u64,
    pub bootstrap: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            replications: 100_000,
            seed: 2024,
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub n: usize,
    pub replications: usize,
    pub d_k: f64,
    pub d_k_ci: f64,
    pub d_w: f64,
    pub d_w_ci: f64,
    pub seed: u64,
    /// Mean and variance of the normalized statistic.
    pub mean: f64,
    pub var: f64,
    pub sigma_n_sq: f64,
    pub embedding_size: usize,
    pub clipped_mass: f64,
}

impl SimulationResult {
    pub const CSV_HEADER: [&'static str; 9] = [
        "n", "N", "d_K", "d_K_ci", "d_W", "d_W_ci", "mean", "var", "seed",
    ];

    pub fn csv_row(&self) -> [String; 9] {
        [
            self.n.to_string(),
            self.replications.to_string(),
            format!("{:.11e}", self.d_k),
            format!("{:.11e}", self.d_k_ci),
            format!("{:.11e}", self.d_w),
            format!("{:.11e}", self.d_w_ci),
            format!("{:.11e}", self.mean),
            format!("{:.11e}", self.var),
            self.seed.to_string(),
        ]
    }
}

pub fn write_simulation_csv<W: std::io::Write>(
    results: &[SimulationResult],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SimulationResult::CSV_HEADER)?;
    for r in results {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Replications of `F_n / σ_n` in replication order.
pub fn sample_statistic(
    sampler: &Sampler,
    g: &FunctionSpec,
    c0: f64,
    sigma_n: f64,
    replications: usize,
    seed: u64,
) -> Vec<f64> {
    let pairs = replications.div_ceil(2);
    let values: Vec<[f64; 2]> = (0..pairs as u64)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, scratch), pair| {
                sampler.sample_pair_into(seed, pair, buf, scratch);
                let path = &buf[..sampler.n];
                let scale = 1.0 / ((sampler.n as f64).sqrt() * sigma_n);
                let re = numeric::compensated_sum(path.iter().map(|z| g.eval(z.re) - c0));
                let im = numeric::compensated_sum(path.iter().map(|z| g.eval(z.im) - c0));
                [re * scale, im * scale]
            },
        )
        .collect();
    let mut out: Vec<f64> = values.into_iter().flatten().collect();
    out.truncate(replications);
    out
}

/// Monte Carlo estimate of `d_K` and `d_W` for `F_n / σ_n`, with 95%
/// percentile-bootstrap half-widths.
pub fn simulate(
    g: &FunctionSpec,
    c0: f64,
    sigma_n_sq: f64,
    model: &CovarianceModel,
    n: usize,
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    if config.replications < 100 {
        return Err(Error::InvalidInput(
            "at least 100 replications are required".into(),
        ));
    }
    if !(sigma_n_sq > 0.0) {
        return Err(Error::DegenerateVariance(sigma_n_sq));
    }
    let sampler = build_sampler(model, n)?;
    let mut values = sample_statistic(
        &sampler,
        g,
        c0,
        sigma_n_sq.sqrt(),
        config.replications,
        config.seed,
    );
    let nf = values.len() as f64;
    let mean = numeric::compensated_sum(values.iter().copied()) / nf;
    let var = numeric::compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (nf - 1.0);
    values.sort_by(f64::total_cmp);
    let (d_k, d_w) = empirical_distances(&values);
    let (d_k_ci, d_w_ci) = bootstrap_half_widths(&values, config.bootstrap, config.seed);
    Ok(SimulationResult {
        n,
        replications: config.replications,
        d_k,
        d_k_ci,
        d_w,
        d_w_ci,
        seed: config.seed,
        mean,
        var,
        sigma_n_sq,
        embedding_size: sampler.embedding_size,
        clipped_mass: sampler.clipped_mass,
    })
}

/// Stream reserved for bootstrap resampling, disjoint from the path streams.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

fn bootstrap_half_widths(sorted: &[f64], rounds: usize, seed: u64) -> (f64, f64) {
    if rounds < 2 {
        return (0.0, 0.0);
    }
    let len = sorted.len();
    let stats: Vec<(f64, f64)> = (0..rounds as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rng.set_stream(BOOTSTRAP_STREAM);
            let mut resample: Vec<f64> =
                (0..len).map(|_| sorted[rng.random_range(0..len)]).collect();
            resample.sort_by(f64::total_cmp);
            empirical_distances(&resample)
        })
        .collect();
    let half = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (quantile(&v, 0.975) - quantile(&v, 0.025)) / 2.0
    };
    (
        half(stats.iter().map(|s| s.0).collect()),
        half(stats.iter().map(|s| s.1).collect()),
    )
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub points: usize,
}

/// Least squares of `ln value` on `ln n`.
pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} points given, rate fits need at least 4",
            pairs.len()
        )));
    }
    if let Some(&(_, v)) = pairs.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonPositiveValue(v));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let slope_se = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        points: pairs.len(),
    })
}
