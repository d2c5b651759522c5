//! Kernel norms and contraction sums of the partial-sum kernels.
//!
//! Every sum here is written at unit coefficient:
//!
//! `S_n(p,q,r) = n^{-2} Σ_{i,j,k,l} ρ^r(i-j) ρ^r(k-l) ρ^{p-r}(i-k) ρ^{q-r}(j-l)`
//!
//! with all four indices in `0..n`. `A_n` is the same sum with `|ρ|`.
//! Three evaluators are provided: a direct four-fold loop, a triple loop
//! over index differences, and a table engine that computes the diagonal
//! profile of the matrix product `A C A` by an `O(n²)` recurrence in the
//! column index.

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const NAIVE_CAP: usize = 64;
pub const FAST_CAP: usize = 4096;
pub const TABLE_CAP: usize = 16384;
/// Fixed number of `u` blocks in the parallel triple loop.
pub const PARTITIONS: usize = 64;

/// `ρ(k)` or `|ρ(k)|` for `k = 0..=n`, with the entry at lag `n` set to zero
/// since no pair of indices in `0..n` is that far apart.
fn base_lags(model: &CovarianceModel, n: usize, use_abs: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n as i64)
        .map(|k| {
            let r = model.rho(k);
            if use_abs {
                r.abs()
            } else {
                r
            }
        })
        .collect();
    v.push(0.0);
    v
}

/// Elementwise integer power with `x^0 = 1`, keeping the zero at lag `n`.
fn power(base: &[f64], e: u32) -> Vec<f64> {
    let n = base.len() - 1;
    let mut v: Vec<f64> = base[..n].iter().map(|x| x.powi(e as i32)).collect();
    v.push(0.0);
    v
}

#[inline(always)]
fn at(arr: &[f64], lag: isize) -> f64 {
    arr[lag.unsigned_abs()]
}

fn check_orders(p: u32, q: u32, r: u32) -> Result<()> {
    if p == 0 || q == 0 || r > p.min(q) {
        return Err(Error::InvalidInput(format!(
            "contraction order needs p, q >= 1 and r <= min(p, q); got ({p}, {q}, {r})"
        )));
    }
    Ok(())
}

/// `Σ_{|k|<=n-1} (1 - |k|/n) ρ(k)^q`.
pub fn kernel_norm_sq(model: &CovarianceModel, n: usize, q: u32) -> f64 {
    kernel_norm_from_lags(&base_lags(model, n.max(1), false), q)
}

fn kernel_norm_from_lags(lags: &[f64], q: u32) -> f64 {
    let n = lags.len() - 1;
    let mut acc = CompensatedSum::new();
    for k in 1..n {
        acc.add(2.0 * (1.0 - k as f64 / n as f64) * lags[k].powi(q as i32));
    }
    acc.add(1.0);
    acc.value()
}

/// Direct four-index evaluation of the contraction sum.
pub fn contraction_sum_naive(
    model: &CovarianceModel,
    n: usize,
    p: u32,
    q: u32,
    r: u32,
    use_abs: bool,
) -> Result<f64> {
    check_orders(p, q, r)?;
    if n > NAIVE_CAP {
        return Err(Error::CapExceeded {
            method: "contraction_sum_naive",
            n,
            cap: NAIVE_CAP,
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let base = base_lags(model, n, use_abs);
    let a = power(&base, r);
    let b = power(&base, p - r);
    let c = power(&base, q - r);
    let mut acc = CompensatedSum::new();
    let n = n as isize;
    for i in 0..n {
        for j in 0..n {
            let aij = at(&a, i - j);
            for k in 0..n {
                let f = aij * at(&b, i - k);
                if f == 0.0 {
                    continue;
                }
                for l in 0..n {
                    acc.add(f * at(&a, k - l) * at(&c, j - l));
                }
            }
        }
    }
    Ok(acc.value() / (n * n) as f64)
}

/// Contraction sum over the differences `u = i-j`, `v = i-k`, `w = j-l`,
/// weighting each triple by its number of lattice realisations.
pub fn contraction_sum_fast(
    model: &CovarianceModel,
    n: usize,
    p: u32,
    q: u32,
    r: u32,
    use_abs: bool,
) -> Result<f64> {
    check_orders(p, q, r)?;
    if n > FAST_CAP {
        return Err(Error::CapExceeded {
            method: "contraction_sum_fast",
            n,
            cap: FAST_CAP,
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let base = base_lags(model, n, use_abs);
    let a = power(&base, r);
    let b = power(&base, p - r);
    let c = power(&base, q - r);
    let ni = n as isize;
    let us: Vec<isize> = (1 - ni..ni).collect();
    let block = us.len().div_ceil(PARTITIONS);
    let partials: Vec<CompensatedSum> = us
        .par_chunks(block.max(1))
        .map(|chunk| {
            let mut acc = CompensatedSum::new();
            for &u in chunk {
                let au = at(&a, u);
                if au == 0.0 {
                    continue;
                }
                for v in 1 - ni..ni {
                    let bv = at(&b, v);
                    if bv == 0.0 {
                        continue;
                    }
                    let lo0 = 0.min(u).min(v);
                    let hi0 = 0.max(u).max(v);
                    if hi0 - lo0 >= ni {
                        continue;
                    }
                    // x = u + w must keep the span of {0, u, v, x} below n
                    let mut inner = 0.0;
                    for x in (hi0 - ni + 1)..=(lo0 + ni - 1) {
                        let w = x - u;
                        if w.unsigned_abs() >= n {
                            continue;
                        }
                        let span = hi0.max(x) - lo0.min(x);
                        let count = ni - span;
                        inner += at(&c, w) * at(&a, x - v) * count as f64;
                    }
                    acc.add(au * bv * inner);
                }
            }
            acc
        })
        .collect();
    let mut total = CompensatedSum::new();
    for part in &partials {
        total.merge(part);
    }
    Ok(total.value() / (n * n) as f64)
}

/// `D(d) = Σ_{i-k=d} (A C A)_{ik}` for `d = -(n-1)..=n-1`, stored at `d + n - 1`,
/// where `A_{ij} = a(i-j)` and `C_{jl} = c(j-l)` on `0..n`.
fn diagonal_profile(a: &[f64], c: &[f64]) -> Vec<f64> {
    let n = a.len() - 1;
    let support =
        |v: &[f64]| v[1..n].iter().filter(|x| **x != 0.0).count() * 2 + usize::from(v[0] != 0.0);
    let (sa, sc) = (support(a), support(c));
    if (sa * sa).saturating_mul(sc) < 5 * n * n {
        sparse_profile(a, c)
    } else {
        recurrence_profile(a, c)
    }
}

fn sparse_profile(a: &[f64], c: &[f64]) -> Vec<f64> {
    let n = a.len() - 1;
    let ni = n as isize;
    let lags = |v: &[f64]| -> Vec<(isize, f64)> {
        (1 - ni..ni)
            .filter_map(|x| {
                let val = at(v, x);
                (val != 0.0).then_some((x, val))
            })
            .collect()
    };
    let (la, lc) = (lags(a), lags(c));
    let mut d = vec![CompensatedSum::new(); 2 * n - 1];
    for &(x, ax) in &la {
        for &(y, cy) in &lc {
            let xy = x + y;
            for &(z, az) in &la {
                let s = xy + z;
                if s.unsigned_abs() >= n {
                    continue;
                }
                let hi = 0.max(x).max(xy).max(s);
                let lo = 0.min(x).min(xy).min(s);
                let count = ni - (hi - lo);
                if count > 0 {
                    d[(s + ni - 1) as usize].add(ax * cy * az * count as f64);
                }
            }
        }
    }
    d.iter().map(CompensatedSum::value).collect()
}

fn recurrence_profile(a: &[f64], c: &[f64]) -> Vec<f64> {
    let n = a.len() - 1;
    let ni = n as isize;
    // g_k(j) = Σ_l c(j-l) a(l-k),  m_k(i) = Σ_j a(i-j) g_k(j),  i, j in 0..n
    let mut g: Vec<f64> = (0..ni)
        .map(|j| (0..ni).map(|l| at(c, j - l) * at(a, l)).sum())
        .collect();
    let mut m: Vec<f64> = (0..ni)
        .map(|i| (0..ni).map(|j| at(a, i - j) * g[j as usize]).sum())
        .collect();
    let pv: Vec<f64> = (0..ni)
        .map(|i| (0..ni).map(|j| at(a, i - j) * at(c, j)).sum())
        .collect();
    let qv: Vec<f64> = (0..ni)
        .map(|i| (0..ni).map(|j| at(a, i - j) * at(c, j - ni)).sum())
        .collect();
    // a(i) and a(i - n) for i in 0..n
    let a_fwd: Vec<f64> = (0..ni).map(|i| at(a, i)).collect();
    let a_back: Vec<f64> = (0..ni).map(|i| at(a, i - ni)).collect();
    let c_fwd: Vec<f64> = (0..ni).map(|j| at(c, j)).collect();
    let c_back: Vec<f64> = (0..ni).map(|j| at(c, j - ni)).collect();

    let mut sum = vec![0.0; 2 * n - 1];
    let mut comp = vec![0.0; 2 * n - 1];
    let accumulate = |m: &[f64], k: usize, sum: &mut [f64], comp: &mut [f64]| {
        // d = i - k stored at d + n - 1
        let off = n - 1 - k;
        for (i, &v) in m.iter().enumerate() {
            let s = &mut sum[i + off];
            let t = *s + v;
            comp[i + off] += if s.abs() >= v.abs() {
                (*s - t) + v
            } else {
                (v - t) + *s
            };
            *s = t;
        }
    };
    accumulate(&m, 0, &mut sum, &mut comp);

    for k in 0..n - 1 {
        let kk = k as isize;
        let g_before: f64 = (0..ni).map(|l| at(c, -1 - l) * at(a, l - kk)).sum();
        let g_last = g[n - 1];
        let m_before: f64 = (0..ni).map(|j| at(a, -1 - j) * g[j as usize]).sum();
        let a_next = at(a, kk + 1);
        let a_tail = at(a, ni - 1 - kk);
        for i in (1..n).rev() {
            m[i] = m[i - 1] + a_fwd[i] * g_before - a_back[i] * g_last + a_next * pv[i]
                - a_tail * qv[i];
        }
        m[0] =
            m_before + a_fwd[0] * g_before - a_back[0] * g_last + a_next * pv[0] - a_tail * qv[0];
        for j in (1..n).rev() {
            g[j] = g[j - 1] + c_fwd[j] * a_next - c_back[j] * a_tail;
        }
        g[0] = g_before + c_fwd[0] * a_next - c_back[0] * a_tail;
        accumulate(&m, k + 1, &mut sum, &mut comp);
    }
    sum.iter().zip(&comp).map(|(s, c)| s + c).collect()
}

/// `n^{-2} Σ_d b(d) D(d)`.
fn close_profile(profile: &[f64], b: &[f64]) -> f64 {
    let n = b.len() - 1;
    let ni = n as isize;
    let mut acc = CompensatedSum::new();
    for (idx, &v) in profile.iter().enumerate() {
        acc.add(at(b, idx as isize - (ni - 1)) * v);
    }
    acc.value() / (n * n) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionConfig {
    pub cap: usize,
    /// Entries with magnitude below `drop_below / n³` are stored as zero.
    pub drop_below: f64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            cap: TABLE_CAP,
            drop_below: 1e-30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEntry {
    pub signed: f64,
    pub absolute: f64,
}

/// Signed and absolute contraction sums for a set of order triples at one `n`.
///
/// Keys are stored with `p <= q` and, on the diagonal, `r <= p - r`; lookups
/// accept any equivalent triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionTable {
    pub n: usize,
    pub p_max: u32,
    pub model: String,
    /// Unit-coefficient kernel norms for `q = 0..=p_max`.
    pub kernel_norms: Vec<f64>,
    pub kernel_norms_abs: Vec<f64>,
    entries: BTreeMap<(u32, u32, u32), ContractionEntry>,
}

/// Swapping `j` and `k` in the sum shows `S(p,p,r) = S(p,p,p-r)`; both keys
/// map to the smaller contraction order so the identity holds exactly. In
/// particular `S(p,p,p)` is the squared kernel norm.
fn canonical(p: u32, q: u32, r: u32) -> (u32, u32, u32) {
    let (p, q) = (p.min(q), p.max(q));
    if p == q && p - r < r {
        (p, q, p - r)
    } else {
        (p, q, r)
    }
}

impl ContractionTable {
    /// Every triple `p <= q <= p_max`, `1 <= r <= p`.
    pub fn full(
        model: &CovarianceModel,
        n: usize,
        p_max: u32,
        config: &ContractionConfig,
    ) -> Result<Self> {
        let mut triples = Vec::new();
        for p in 1..=p_max {
            for q in p..=p_max {
                for r in 1..=p {
                    triples.push((p, q, r));
                }
            }
        }
        Self::compute(model, n, p_max, &triples, config)
    }

    /// Table restricted to the given triples. Triples with `r = 0` are
    /// products of kernel norms and need no profile.
    pub fn compute(
        model: &CovarianceModel,
        n: usize,
        p_max: u32,
        triples: &[(u32, u32, u32)],
        config: &ContractionConfig,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if n > config.cap {
            return Err(Error::CapExceeded {
                method: "ContractionTable",
                n,
                cap: config.cap,
            });
        }
        for &(p, q, r) in triples {
            if p == 0 || q == 0 || r > p.min(q) || p.max(q) > p_max {
                return Err(Error::InvalidInput(format!(
                    "triple ({p}, {q}, {r}) outside 1 <= r <= min(p, q), p, q <= {p_max}"
                )));
            }
        }
        let signed_base = base_lags(model, n, false);
        let nonnegative = signed_base.iter().all(|v| *v >= 0.0);
        let abs_base = if nonnegative {
            signed_base.clone()
        } else {
            base_lags(model, n, true)
        };
        let kernel_norms: Vec<f64> = (0..=p_max)
            .map(|q| kernel_norm_from_lags(&signed_base, q))
            .collect();
        let kernel_norms_abs: Vec<f64> = (0..=p_max)
            .map(|q| kernel_norm_from_lags(&abs_base, q))
            .collect();

        // group by (r, max(s, t)) and close each profile with min(s, t)
        let mut groups: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        let mut wanted: Vec<(u32, u32, u32)> = triples
            .iter()
            .map(|&(p, q, r)| canonical(p, q, r))
            .collect();
        wanted.sort_unstable();
        wanted.dedup();
        for &(p, q, r) in &wanted {
            if r == 0 {
                continue;
            }
            let (s, t) = (p - r, q - r);
            groups.entry((r, s.max(t))).or_default().push(s.min(t));
        }
        let keys: Vec<((u32, u32), Vec<u32>)> = groups.into_iter().collect();
        let bases: Vec<&[f64]> = if nonnegative {
            vec![&signed_base]
        } else {
            vec![&signed_base, &abs_base]
        };
        let work: Vec<(usize, usize)> = (0..keys.len())
            .flat_map(|k| (0..bases.len()).map(move |b| (k, b)))
            .collect();
        let results: Vec<Vec<f64>> = work
            .par_iter()
            .map(|&(ki, bi)| {
                let ((r, u), closers) = &keys[ki];
                let base = bases[bi];
                let profile = diagonal_profile(&power(base, *r), &power(base, *u));
                closers
                    .iter()
                    .map(|&s| close_profile(&profile, &power(base, s)))
                    .collect()
            })
            .collect();

        let floor = config.drop_below / (n as f64).powi(3);
        let clean = |v: f64| if v.abs() < floor { 0.0 } else { v };
        let mut entries = BTreeMap::new();
        for (wi, &(ki, bi)) in work.iter().enumerate() {
            let ((r, u), closers) = &keys[ki];
            for (&s, &value) in closers.iter().zip(&results[wi]) {
                let key = (r + s, r + u, *r);
                let e = entries.entry(key).or_insert(ContractionEntry {
                    signed: 0.0,
                    absolute: 0.0,
                });
                if bi == 0 {
                    e.signed = clean(value);
                    if nonnegative {
                        e.absolute = e.signed;
                    }
                } else {
                    e.absolute = clean(value);
                }
            }
        }
        for &(p, q, r) in &wanted {
            if r == 0 {
                entries.insert(
                    (p, q, 0),
                    ContractionEntry {
                        signed: kernel_norms[p as usize] * kernel_norms[q as usize],
                        absolute: kernel_norms_abs[p as usize] * kernel_norms_abs[q as usize],
                    },
                );
            }
        }
        Ok(Self {
            n,
            p_max,
            model: model.label.clone(),
            kernel_norms,
            kernel_norms_abs,
            entries,
        })
    }

    pub fn get(&self, p: u32, q: u32, r: u32) -> Option<ContractionEntry> {
        if r == 0 && p.max(q) <= self.p_max {
            return Some(ContractionEntry {
                signed: self.kernel_norms[p as usize] * self.kernel_norms[q as usize],
                absolute: self.kernel_norms_abs[p as usize] * self.kernel_norms_abs[q as usize],
            });
        }
        self.entries.get(&canonical(p, q, r)).copied()
    }

    pub fn signed(&self, p: u32, q: u32, r: u32) -> Option<f64> {
        self.get(p, q, r).map(|e| e.signed)
    }

    pub fn absolute(&self, p: u32, q: u32, r: u32) -> Option<f64> {
        self.get(p, q, r).map(|e| e.absolute)
    }

    pub fn kernel_norm(&self, q: u32) -> Option<f64> {
        self.kernel_norms.get(q as usize).copied()
    }

    /// Stored triples in lexicographic order, in canonical form.
    pub fn entries(&self) -> impl Iterator<Item = ((u32, u32, u32), ContractionEntry)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest violation of `S(p,q,r)² <= S(p,p,p-r) S(q,q,q-r)` over the
    /// stored triples whose companions are also available, or zero.
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        let mut worst = 0.0_f64;
        for ((p, q, r), e) in self.entries() {
            let (Some(a), Some(b)) = (self.signed(p, p, p - r), self.signed(q, q, q - r)) else {
                continue;
            };
            worst = worst.max(e.signed * e.signed - a * b);
        }
        worst
    }

    /// CSV with columns `p,q,r,signed,absolute`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p", "q", "r", "signed", "absolute"])?;
        for ((p, q, r), e) in self.entries() {
            w.write_record([
                p.to_string(),
                q.to_string(),
                r.to_string(),
                format!("{:.11e}", e.signed),
                format!("{:.11e}", e.absolute),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which of the two computable dominating quantities to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YoungCase {
    /// `(1/n) ‖ρ_{r,n} * ρ_{m-r,n}‖²` for `1 <= r <= m-1`.
    Diagonal { r: u32 },
    /// `(1/n) (Σ_{|k|<=n-1} |ρ|^m)² Σ_{|j|<=n-1} |ρ|^γ`.
    Gap { gamma: u32 },
}

/// Upper bound for `A_n(m,m,r)` (diagonal case, `r < m`) or for
/// `A_n(m, m+γ, m)` (gap case, `r = m`).
pub fn young_upper_bound(
    model: &CovarianceModel,
    n: usize,
    m: u32,
    gamma: crate::hermite::Gap,
    r: u32,
) -> Result<f64> {
    let case = if r >= 1 && r < m {
        YoungCase::Diagonal { r }
    } else if r == m {
        match gamma.finite() {
            Some(g) => YoungCase::Gap { gamma: g },
            None => {
                return Err(Error::InvalidInput(
                    "the gap case needs a finite chaotic gap".into(),
                ))
            }
        }
    } else {
        return Err(Error::InvalidInput(format!("r = {r} outside 1..={m}")));
    };
    young_bound(model, n, m, case)
}

pub fn young_bound(model: &CovarianceModel, n: usize, m: u32, case: YoungCase) -> Result<f64> {
    if n == 0 || m < 2 {
        return Err(Error::InvalidInput(
            "young bound needs n >= 1 and m >= 2".into(),
        ));
    }
    let base = base_lags(model, n, true);
    let two_sided = |e: u32| -> Vec<f64> {
        let ni = n as isize;
        (1 - ni..ni).map(|k| at(&base, k).powi(e as i32)).collect()
    };
    match case {
        YoungCase::Diagonal { r } => {
            if r == 0 || r >= m {
                return Err(Error::InvalidInput(format!(
                    "diagonal case needs 1 <= r < m, got r = {r}"
                )));
            }
            let conv = convolve(&two_sided(r), &two_sided(m - r));
            Ok(numeric::compensated_sum(conv.iter().map(|x| x * x)) / n as f64)
        }
        YoungCase::Gap { gamma } => {
            let sm = numeric::compensated_sum(two_sided(m));
            let sg = numeric::compensated_sum(two_sided(gamma));
            Ok(sm * sm * sg / n as f64)
        }
    }
}

/// Linear convolution through a zero-padded FFT.
fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let len = x.len() + y.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out = vec![Complex::new(0.0, 0.0); size];
        for (o, &x) in out.iter_mut().zip(v) {
            o.re = x;
        }
        out
    };
    let (mut fx, mut fy) = (pad(x), pad(y));
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    for (a, b) in fx.iter_mut().zip(&fy) {
        *a *= b;
    }
    inv.process(&mut fx);
    fx[..len].iter().map(|z| z.re / size as f64).collect()
}

/// `ln[(r-1)! C(p-1,r-1) C(q-1,r-1) √((p+q-2r)!)]`.
pub fn log_weight(p: u32, q: u32, r: u32) -> f64 {
    debug_assert!(r >= 1 && r <= p.min(q));
    let (p, q, r) = (p as u64, q as u64, r as u64);
    numeric::ln_factorial(r - 1)
        + numeric::ln_binomial(p - 1, r - 1)
        + numeric::ln_binomial(q - 1, r - 1)
        + 0.5 * numeric::ln_factorial(p + q - 2 * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::Gap;
    use proptest::prelude::*;

    fn models() -> Vec<CovarianceModel> {
        vec![
            CovarianceModel::white_noise(),
            CovarianceModel::fbm_increments(0.3).unwrap(),
            CovarianceModel::fbm_increments(0.7).unwrap(),
            CovarianceModel::cauchy(0.6, 1.0).unwrap(),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn kernel_norm_examples() {
        let w = CovarianceModel::white_noise();
        assert_eq!(kernel_norm_sq(&w, 100, 3), 1.0);
        let f = CovarianceModel::fbm_increments(0.75).unwrap();
        assert_eq!(kernel_norm_sq(&f, 1, 4), 1.0);
        let rho1 = 0.5 * (2f64.powf(1.5) - 2.0);
        assert!((kernel_norm_sq(&f, 2, 2) - (1.0 + rho1 * rho1)).abs() < 1e-15);
        assert!((kernel_norm_sq(&f, 2, 2) - 1.171_573).abs() < 1e-6);
    }

    #[test]
    fn white_noise_sums_are_one_over_n() {
        let w = CovarianceModel::white_noise();
        for n in [1usize, 2, 5, 17] {
            for (p, q, r) in [(2, 2, 1), (3, 5, 2), (4, 6, 4), (1, 3, 1)] {
                let want = 1.0 / n as f64;
                assert!(
                    (contraction_sum_naive(&w, n, p, q, r, false).unwrap() - want).abs() < 1e-15
                );
                assert!((contraction_sum_fast(&w, n, p, q, r, true).unwrap() - want).abs() < 1e-15);
            }
        }
        assert_eq!(contraction_sum_fast(&w, 2, 2, 2, 1, false).unwrap(), 0.5);
        // p = q = r leaves no factor tying i to k: the sum is the squared kernel norm
        assert_eq!(contraction_sum_fast(&w, 9, 3, 3, 3, false).unwrap(), 1.0);
    }

    #[test]
    fn single_index_sum_is_one() {
        for m in models() {
            assert_eq!(contraction_sum_naive(&m, 1, 3, 2, 1, false).unwrap(), 1.0);
            assert_eq!(contraction_sum_fast(&m, 1, 3, 2, 2, false).unwrap(), 1.0);
        }
    }

    #[test]
    fn caps_are_enforced() {
        let w = CovarianceModel::white_noise();
        assert!(matches!(
            contraction_sum_naive(&w, 65, 2, 2, 1, false),
            Err(Error::CapExceeded { cap: 64, .. })
        ));
        assert!(matches!(
            contraction_sum_fast(&w, 4097, 2, 2, 1, false),
            Err(Error::CapExceeded { cap: 4096, .. })
        ));
        assert!(contraction_sum_fast(&w, 8, 2, 2, 3, false).is_err());
    }

    #[test]
    fn fast_matches_naive_for_fbm_example() {
        let m = CovarianceModel::fbm_increments(0.7).unwrap();
        let a = contraction_sum_naive(&m, 16, 2, 2, 1, true).unwrap();
        let b = contraction_sum_fast(&m, 16, 2, 2, 1, true).unwrap();
        assert!(rel(a, b) < 1e-12);
    }

    #[test]
    fn table_matches_naive_on_small_sweep() {
        for model in models() {
            for n in [1usize, 2, 3, 7, 12] {
                let table =
                    ContractionTable::full(&model, n, 4, &ContractionConfig::default()).unwrap();
                for ((p, q, r), e) in table.entries() {
                    let s = contraction_sum_naive(&model, n, p, q, r, false).unwrap();
                    let a = contraction_sum_naive(&model, n, p, q, r, true).unwrap();
                    assert!(
                        (e.signed - s).abs() <= 1e-12 * s.abs().max(1e-12),
                        "{} n={n} {:?}",
                        model.label,
                        (p, q, r)
                    );
                    assert!((e.absolute - a).abs() <= 1e-12 * a.abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn recurrence_and_sparse_profiles_agree() {
        let model = CovarianceModel::cauchy(0.6, 1.0).unwrap();
        let base = base_lags(&model, 40, false);
        let a = power(&base, 2);
        let c = power(&base, 1);
        let r = recurrence_profile(&a, &c);
        let s = sparse_profile(&a, &c);
        for (x, y) in r.iter().zip(&s) {
            assert!((x - y).abs() < 1e-11 * y.abs().max(1.0));
        }
    }

    #[test]
    fn table_matches_fast_at_moderate_n() {
        let model = CovarianceModel::fbm_increments(0.3).unwrap();
        let table = ContractionTable::compute(
            &model,
            300,
            3,
            &[(2, 2, 1), (2, 3, 2), (3, 3, 1)],
            &ContractionConfig::default(),
        )
        .unwrap();
        for (p, q, r) in [(2, 2, 1), (2, 3, 2), (3, 3, 1)] {
            let s = contraction_sum_fast(&model, 300, p, q, r, false).unwrap();
            let a = contraction_sum_fast(&model, 300, p, q, r, true).unwrap();
            assert!(rel(table.signed(p, q, r).unwrap(), s) < 1e-11);
            assert!(rel(table.absolute(q, p, r).unwrap(), a) < 1e-11);
        }
    }

    #[test]
    fn table_invariants() {
        for model in models() {
            let t = ContractionTable::full(&model, 20, 5, &ContractionConfig::default()).unwrap();
            for ((p, q, r), e) in t.entries() {
                assert!(e.signed >= -1e-12, "{:?}", (p, q, r));
                assert!(e.signed <= e.absolute + 1e-12);
                assert!(e.absolute <= (t.n * t.n) as f64);
                if p == q && r < p {
                    assert_eq!(e.absolute, t.absolute(p, p, p - r).unwrap());
                }
            }
            assert!(t.cauchy_schwarz_excess() <= 1e-12);
        }
    }

    #[test]
    fn dominance_reductions_hold() {
        let m = 2u32;
        let gamma = 2u32;
        for model in [
            CovarianceModel::fbm_increments(0.7).unwrap(),
            CovarianceModel::cauchy(0.6, 1.0).unwrap(),
        ] {
            let t = ContractionTable::full(&model, 16, 6, &ContractionConfig::default()).unwrap();
            for p in (2..=6).step_by(2) {
                for q in (p..=6).step_by(2) {
                    for r in 1..p.min(q) {
                        let red = r.min(p - r).min(m - 1);
                        assert!(
                            t.absolute(p, q, r).unwrap() <= t.absolute(m, m, red).unwrap() + 1e-15
                        );
                    }
                    if q >= p + gamma {
                        assert!(
                            t.absolute(p, q, p).unwrap()
                                <= t.absolute(m, m + gamma, m).unwrap() + 1e-15
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn young_bound_examples() {
        let w = CovarianceModel::white_noise();
        for r in 1..4 {
            assert!(
                (young_upper_bound(&w, 50, 4, Gap::Infinite, r).unwrap() - 1.0 / 50.0).abs()
                    < 1e-15
            );
        }
        let f = CovarianceModel::fbm_increments(0.7).unwrap();
        let v = young_upper_bound(&f, 1024, 2, Gap::Finite(2), 2).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let v2 = young_upper_bound(&f, 2048, 2, Gap::Finite(2), 2).unwrap();
        // α = 0.6 > 1/γ: the bound decays like 1/n up to constants
        assert!(v2 * 2048.0 <= 1.2 * v * 1024.0);
        assert!(young_upper_bound(&f, 64, 2, Gap::Infinite, 2).is_err());
    }

    #[test]
    fn young_bound_dominates_absolute_sums() {
        for model in models() {
            for n in [4usize, 16, 40] {
                let t =
                    ContractionTable::full(&model, n, 5, &ContractionConfig::default()).unwrap();
                for m in 2..=4u32 {
                    for r in 1..m {
                        let y = young_upper_bound(&model, n, m, Gap::Infinite, r).unwrap();
                        assert!(
                            t.absolute(m, m, r).unwrap() <= y * (1.0 + 1e-12),
                            "{} n={n} m={m} r={r}",
                            model.label
                        );
                    }
                    let y = young_upper_bound(&model, n, 2, Gap::Finite(m - 1), 2).unwrap();
                    assert!(t.absolute(2, m + 1, 2).unwrap() <= y * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn log_weight_examples() {
        assert!((log_weight(2, 2, 1) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((log_weight(3, 3, 1) - 0.5 * 24f64.ln()).abs() < 1e-14);
        fn fact(k: u64) -> f64 {
            (1..=k).map(|x| x as f64).product()
        }
        fn binom(n: u64, k: u64) -> f64 {
            fact(n) / (fact(k) * fact(n - k))
        }
        for p in 1..=10u64 {
            for q in 1..=10u64 {
                for r in 1..=p.min(q) {
                    let exact = fact(r - 1)
                        * binom(p - 1, r - 1)
                        * binom(q - 1, r - 1)
                        * fact(p + q - 2 * r).sqrt();
                    let got = log_weight(p as u32, q as u32, r as u32).exp();
                    assert!(rel(got, exact) < 1e-12, "({p}, {q}, {r})");
                }
            }
        }
    }

    #[test]
    fn csv_export_columns() {
        let t = ContractionTable::full(
            &CovarianceModel::white_noise(),
            4,
            2,
            &ContractionConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "p,q,r,signed,absolute");
        assert_eq!(text.lines().count(), 1 + t.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sums_symmetric_in_outer_orders(h in 0.05f64..0.95, n in 1usize..14, p in 1u32..5, q in 1u32..5) {
            let model = CovarianceModel::fbm_increments(h).unwrap();
            for r in 1..=p.min(q) {
                let a = contraction_sum_fast(&model, n, p, q, r, false).unwrap();
                let b = contraction_sum_fast(&model, n, q, p, r, false).unwrap();
                prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-13));
            }
        }

        #[test]
        fn signed_sums_are_nonnegative(h in 0.05f64..0.95, n in 1usize..20, p in 1u32..5, q in 1u32..5) {
            let model = CovarianceModel::fbm_increments(h).unwrap();
            for r in 1..=p.min(q) {
                prop_assert!(contraction_sum_fast(&model, n, p, q, r, false).unwrap() >= -1e-12);
            }
        }
    }
}
