//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use chaosbound::*;
use std::f64::consts::PI;
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

type Outcome = std::result::Result<String, String>;

/// Cauchy–Schwarz excess of every table computed by the other criteria.
static TABLE_EXCESS: Mutex<Vec<(String, f64)>> = Mutex::new(Vec::new());

fn record_table(label: String, table: &ContractionTable) {
    TABLE_EXCESS
        .lock()
        .unwrap()
        .push((label, table.cauchy_schwarz_excess()));
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn models() -> Vec<CovarianceModel> {
    vec![
        CovarianceModel::white_noise(),
        CovarianceModel::fbm_increments(0.3).unwrap(),
        CovarianceModel::fbm_increments(0.7).unwrap(),
        CovarianceModel::cauchy(0.6, 1.0).unwrap(),
    ]
}

fn expand(g: FunctionSpec) -> HermiteExpansion {
    hermite_expand(&g, 30, &QuadratureConfig::default()).unwrap()
}

fn criterion_1() -> Outcome {
    let w = (2.0 / PI).sqrt();
    for has_density in [true, false] {
        ensure(c_phi(Metric::Wasserstein, has_density) == Ok(w), || {
            "c_phi(W)".into()
        })?;
        ensure(
            c_phi(Metric::BoundedWasserstein, has_density) == Ok(w),
            || "c_phi(bW)".into(),
        )?;
    }
    ensure(c_phi(Metric::Kolmogorov, true) == Ok(1.0), || {
        "c_phi(K)".into()
    })?;
    ensure(c_phi(Metric::TotalVariation, true) == Ok(2.0), || {
        "c_phi(TV)".into()
    })?;
    for m in [Metric::Kolmogorov, Metric::TotalVariation] {
        ensure(
            matches!(c_phi(m, false), Err(Error::DensityRequired(_))),
            || format!("{m:?} without density"),
        )?;
    }
    Ok("W = bW = sqrt(2/pi), K = 1, TV = 2, DensityRequired for K and TV".into())
}

/// Oracle for the piecewise exponent table. Returns the interior exponent,
/// or the sorted endpoints of the case.
fn rate_oracle(m: u32, wide: bool, a: f64) -> f64 {
    let mf = m as f64;
    match (m, wide) {
        (2, false) if a > 1.0 => -0.5,
        (2, false) if a > 2.0 / 3.0 => -a / 2.0,
        (2, false) => 1.0 - 2.0 * a,
        (2, true) if a > 0.75 => -0.5,
        (2, true) => 1.0 - 2.0 * a,
        (_, false) if a > 1.0 => -0.5,
        (_, false) if a > 1.0 / (mf - 0.5) => -a / 2.0,
        (_, false) => 1.0 - mf * a,
        (_, true) if a > 0.5 => -0.5,
        (_, true) if a > 1.0 / (mf - 1.0) => -a,
        (_, true) => 1.0 - mf * a,
    }
}

/// Interior endpoints of the case, with whether the lower piece includes it.
fn rate_endpoints(m: u32, wide: bool) -> Vec<(f64, bool)> {
    let mf = m as f64;
    match (m, wide) {
        (2, false) => vec![(2.0 / 3.0, true), (1.0, false)],
        (2, true) => vec![(0.75, false)],
        (_, false) => vec![(1.0 / (mf - 0.5), true), (1.0, false)],
        (_, true) => {
            let mut v = vec![(0.5, false)];
            let b = 1.0 / (mf - 1.0);
            if b < 0.5 {
                v.insert(0, (b, false));
            }
            v
        }
    }
}

fn criterion_2() -> Outcome {
    let gammas = [
        Gap::Finite(1),
        Gap::Finite(2),
        Gap::Finite(3),
        Gap::Infinite,
    ];
    let mut checked = 0;
    let mut boundaries = 0;
    for m in 2..=5u32 {
        let lower = 1.0 / m as f64;
        for gamma in gammas {
            let wide = gamma != Gap::Finite(1);
            let ends = rate_endpoints(m, wide);
            for k in 0..50 {
                let mut a = lower + (1.6 - lower) * (k as f64 + 0.5) / 50.0;
                if ends.iter().any(|e| (e.0 - a).abs() < 1e-6) {
                    a += 1e-3;
                }
                let got = predict_rate(m, gamma, a).map_err(err)?;
                let want = rate_oracle(m, wide, a);
                ensure(got.exponent == want && !got.boundary, || {
                    format!("m={m} gamma={gamma} alpha={a}: {} vs {want}", got.exponent)
                })?;
                checked += 1;
            }
            ensure(
                matches!(predict_rate(m, gamma, lower), Err(Error::OutOfRegime(_))),
                || format!("m={m} gamma={gamma} alpha=1/m"),
            )?;
            for (b, included) in ends {
                let res = predict_rate(m, gamma, b);
                let ok = match &res {
                    Err(Error::BoundaryCase { left, right, .. }) => {
                        !included
                            && (*left - rate_oracle(m, wide, b - 1e-9)).abs() < 1e-6
                            && (*right - rate_oracle(m, wide, b + 1e-9)).abs() < 1e-6
                    }
                    Ok(p) => included && p.boundary && p.exponent == rate_oracle(m, wide, b),
                    Err(_) => false,
                };
                ensure(ok, || format!("m={m} gamma={gamma} endpoint {b}: {res:?}"))?;
                boundaries += 1;
            }
        }
    }
    Ok(format!(
        "{checked} interior exponents exact, {boundaries} endpoints flagged"
    ))
}

fn criterion_3() -> Outcome {
    let mut comparisons = 0;
    let mut worst = 0.0_f64;
    for model in models() {
        for n in 1..=24usize {
            for p in 1..=5u32 {
                for q in 1..=5u32 {
                    for r in 1..=p.min(q) {
                        for use_abs in [false, true] {
                            let a =
                                contraction_sum_naive(&model, n, p, q, r, use_abs).map_err(err)?;
                            let b =
                                contraction_sum_fast(&model, n, p, q, r, use_abs).map_err(err)?;
                            let rel = (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
                            let rel = if a == b { 0.0 } else { rel };
                            worst = worst.max(rel);
                            ensure(rel <= 1e-12, || {
                                format!(
                                    "{} n={n} ({p},{q},{r}) abs={use_abs}: {a} vs {b}",
                                    model.label
                                )
                            })?;
                            comparisons += 1;
                        }
                    }
                }
            }
            let table =
                ContractionTable::full(&model, n, 5, &ContractionConfig::default()).map_err(err)?;
            record_table(format!("{} n={n}", model.label), &table);
        }
    }
    ensure(comparisons >= 5000, || {
        format!("only {comparisons} comparisons")
    })?;
    Ok(format!(
        "{comparisons} comparisons, worst relative difference {worst:.2e}"
    ))
}

fn criterion_4() -> Outcome {
    let white = CovarianceModel::white_noise();
    let mut checked = 0;
    for n in [1usize, 2, 5, 17, 64, 300] {
        let table =
            ContractionTable::full(&white, n, 6, &ContractionConfig::default()).map_err(err)?;
        record_table(format!("white n={n}"), &table);
        for p in 1..=6u32 {
            for q in p..=6u32 {
                for r in 1..=p {
                    if p == q && q == r {
                        continue;
                    }
                    let want = 1.0 / n as f64;
                    let e = table
                        .get(p, q, r)
                        .ok_or_else(|| format!("({p},{q},{r}) missing"))?;
                    let mut vals = vec![e.signed, e.absolute];
                    if n <= 64 {
                        vals.push(contraction_sum_fast(&white, n, p, q, r, false).map_err(err)?);
                    }
                    for v in vals {
                        ensure((v - want).abs() <= 1e-12 * want, || {
                            format!("n={n} ({p},{q},{r}): {v}")
                        })?;
                        checked += 1;
                    }
                }
            }
        }
    }
    for q in 1..=8u32 {
        let e = expand(FunctionSpec::hermite(q).unwrap());
        let s = sigma_n_sq(&e, &white, 100).map_err(err)?;
        let fact: f64 = (1..=q).map(f64::from).product();
        ensure((s - fact).abs() <= 1e-9 * fact, || {
            format!("sigma_n^2 for hermite({q}) = {s}")
        })?;
    }
    let h2 = expand(FunctionSpec::hermite(2).unwrap());
    for n in [1usize, 4, 10, 100, 1000, 4096] {
        let r = univariate_bound(&h2, &white, n, 30, &BoundConfig::default()).map_err(err)?;
        let want = (2.0 / n as f64).sqrt();
        ensure((r.bound_core - want).abs() <= 1e-12, || {
            format!("n={n}: {} vs {want}", r.bound_core)
        })?;
    }
    Ok(format!(
        "{checked} contraction values equal 1/n, sigma_n^2 = q!, bound_core = sqrt(2/n)"
    ))
}

fn criterion_5() -> Outcome {
    // closed-form variances
    let cases = [
        (FunctionSpec::power(1.0).unwrap(), 1.0 - 2.0 / PI),
        (FunctionSpec::power(3.0).unwrap(), 15.0 - 8.0 / PI),
        (FunctionSpec::indicator(0.0).unwrap(), 0.25),
    ];
    let mut worst = 0.0_f64;
    for (g, var) in cases {
        let e = expand(g);
        let diff = (e.parseval.accelerated - var).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-6, || {
            format!("{:?}: {} vs {var}", e.spec.kind(), e.parseval.accelerated)
        })?;
        ensure((e.variance - var).abs() <= 1e-9, || {
            format!("{:?}: variance {}", e.spec.kind(), e.variance)
        })?;
    }
    Ok(format!("largest Parseval gap {worst:.2e}"))
}

fn slope_of(e: &HermiteExpansion, model: &CovarianceModel) -> std::result::Result<f64, String> {
    let mut pts = Vec::new();
    for k in 8..=12 {
        let n = 1usize << k;
        let r = univariate_bound(e, model, n, 30, &BoundConfig::default()).map_err(err)?;
        pts.push((n as f64, r.bound_core));
    }
    Ok(rate_fit(&pts).map_err(err)?.slope)
}

fn criterion_6() -> Outcome {
    let h2 = expand(FunctionSpec::hermite(2).unwrap());
    let s1 = slope_of(&h2, &CovarianceModel::fbm_increments(0.55).unwrap())?;
    let s2 = slope_of(&h2, &CovarianceModel::fbm_increments(0.7).unwrap())?;
    ensure((s1 + 0.5).abs() <= 0.1, || format!("fbm(0.55) slope {s1}"))?;
    ensure((s2 + 0.2).abs() <= 0.1, || format!("fbm(0.7) slope {s2}"))?;
    Ok(format!("fbm(0.55) slope {s1:.4}, fbm(0.7) slope {s2:.4}"))
}

fn criterion_7() -> Outcome {
    let model = CovarianceModel::fbm_increments(0.55).unwrap();
    let cfg = BoundConfig::default();
    let powers = [2.0, 1.0, 1.5, 3.0];
    let exps: Vec<HermiteExpansion> = powers
        .iter()
        .map(|&p| expand(FunctionSpec::power(p).unwrap()))
        .collect();
    let mut pts = vec![Vec::new(); powers.len()];
    for k in 8..=12 {
        let n = 1usize << k;
        let mut triples: Vec<(u32, u32, u32)> = exps
            .iter()
            .flat_map(|e| required_triples(e, 30, &cfg))
            .collect();
        triples.sort_unstable();
        triples.dedup();
        let p_max = triples.iter().map(|t| t.1).max().unwrap_or(30).max(30);
        let table =
            ContractionTable::compute(&model, n, p_max, &triples, &cfg.contraction).map_err(err)?;
        record_table(format!("fbm(0.55) n={n}"), &table);
        for (e, v) in exps.iter().zip(pts.iter_mut()) {
            let r = univariate_bound_from_table(e, &model, &table, 30, &cfg).map_err(err)?;
            v.push((n as f64, r.bound_core));
        }
    }
    let slopes: Vec<f64> = pts
        .iter()
        .map(|v| rate_fit(v).map(|f| f.slope).map_err(err))
        .collect::<std::result::Result<_, _>>()?;
    for (p, s) in powers.iter().zip(&slopes).skip(1) {
        ensure((s - slopes[0]).abs() <= 0.1, || {
            format!("p={p} slope {s} vs {}", slopes[0])
        })?;
    }
    Ok(format!(
        "slopes p=2 {:.4}, p=1 {:.4}, p=1.5 {:.4}, p=3 {:.4}",
        slopes[0], slopes[1], slopes[2], slopes[3]
    ))
}

fn criterion_8() -> Outcome {
    let model = CovarianceModel::fbm_increments(0.5).unwrap();
    let g = FunctionSpec::hermite(2).unwrap();
    let e = expand(g.clone());
    let bcfg = BoundConfig::with_metrics(&[Metric::Kolmogorov]);
    let scfg = SimulationConfig {
        replications: 100_000,
        seed: 2024,
        bootstrap: 200,
    };
    let band = 1.36 / (scfg.replications as f64).sqrt();
    let mut prev = f64::INFINITY;
    let mut line = Vec::new();
    for n in [256usize, 1024, 4096] {
        let b = univariate_bound(&e, &model, n, 30, &bcfg).map_err(err)?;
        let kb = b.metric(Metric::Kolmogorov).ok_or("no K bound")?;
        let s = simulate(&g, e.mean, b.sigma_n_sq, &model, n, &scfg).map_err(err)?;
        ensure(s.d_k < prev, || {
            format!("d_K not decreasing at n={n}: {} after {prev}", s.d_k)
        })?;
        ensure(s.d_k < kb + band, || {
            format!("n={n}: d_K {} above {kb} + {band}", s.d_k)
        })?;
        prev = s.d_k;
        line.push(format!("n={n} d_K={:.4} (bound {kb:.4})", s.d_k));
    }
    Ok(line.join(", "))
}

fn criterion_9() -> Outcome {
    let white = CovarianceModel::white_noise();
    let e2 = expand(FunctionSpec::hermite(2).unwrap());
    let e3 = expand(FunctionSpec::hermite(3).unwrap());
    let r = multivariate_bound(&[e2.clone(), e3], &white, 64, 30, &BoundConfig::default())
        .map_err(err)?;
    let want = [[2.0, 0.0], [0.0, 6.0]];
    for i in 0..2 {
        for j in 0..2 {
            ensure((r.covariance[i][j] - want[i][j]).abs() <= 1e-12, || {
                format!("C[{i}][{j}] = {}", r.covariance[i][j])
            })?;
        }
    }
    let front = 2f64.sqrt() * 0.5 * 6f64.sqrt();
    ensure((r.c_front - front).abs() <= 1e-12 * front, || {
        format!("c_front {}", r.c_front)
    })?;
    let same = multivariate_bound(&[e2.clone(), e2], &white, 64, 30, &BoundConfig::default());
    ensure(
        matches!(same, Err(Error::SingularCovariance { .. })),
        || format!("{same:?}"),
    )?;
    Ok(format!(
        "C = diag(2, 6), c_front = {:.12}, SingularCovariance raised",
        r.c_front
    ))
}

fn criterion_10() -> Outcome {
    let tables = TABLE_EXCESS.lock().unwrap();
    ensure(!tables.is_empty(), || "no tables recorded".into())?;
    let worst =
        tables.iter().cloned().fold(
            ("".to_string(), f64::MIN),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    ensure(worst.1 <= 1e-12, || {
        format!("{}: excess {}", worst.0, worst.1)
    })?;
    Ok(format!(
        "{} tables, largest excess {:.2e}",
        tables.len(),
        worst.1.max(0.0)
    ))
}

fn main() {
    let start = Instant::now();
    let criteria: Vec<(u32, fn() -> Outcome)> = vec![
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let handles: Vec<_> = criteria
        .into_iter()
        .map(|(id, f)| {
            (
                id,
                thread::spawn(move || {
                    let t = Instant::now();
                    (f(), t.elapsed())
                }),
            )
        })
        .collect();
    let mut results: Vec<(u32, Outcome, std::time::Duration)> = handles
        .into_iter()
        .map(|(id, h)| {
            let (out, dt) = h
                .join()
                .unwrap_or_else(|p| (Err(format!("panicked: {p:?}")), Default::default()));
            (id, out, dt)
        })
        .collect();
    let t = Instant::now();
    results.push((10, criterion_10(), t.elapsed()));
    let mut failed = 0;
    for (id, out, dt) in &results {
        match out {
            Ok(msg) => println!("PASS criterion {id:>2} ({:.1}s): {msg}", dt.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({:.1}s): {msg}", dt.as_secs_f64());
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
