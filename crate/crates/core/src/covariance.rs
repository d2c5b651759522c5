//! Stationary covariance functions `ρ(j) = E[X_0 X_j]`.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

/// Parameters of a covariance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceParams {
    /// Increments of fractional Brownian motion with Hurst index `hurst`.
    Fbm { hurst: f64 },
    /// `(1 + |j|^β)^{-α/β}`.
    Cauchy { alpha: f64, beta: f64 },
    /// Explicit values for lags `0..values.len()`, zero beyond.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct CovarianceModel {
    pub label: String,
    pub params: CovarianceParams,
    /// Declared exponent α in `|ρ(j)| ~ |j|^{-α}`; metadata only.
    pub decay_alpha: Option<f64>,
}

#[derive(Deserialize)]
struct RawModel {
    #[serde(default)]
    label: Option<String>,
    params: CovarianceParams,
    #[serde(default)]
    decay_alpha: Option<f64>,
}

impl TryFrom<RawModel> for CovarianceModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        let mut model = match raw.params {
            CovarianceParams::Fbm { hurst } => CovarianceModel::fbm_increments(hurst)?,
            CovarianceParams::Cauchy { alpha, beta } => CovarianceModel::cauchy(alpha, beta)?,
            CovarianceParams::Table { values } => CovarianceModel::from_table(values)?,
        };
        if let Some(label) = raw.label {
            model.label = label;
        }
        if let Some(a) = raw.decay_alpha {
            model = model.with_decay_alpha(a)?;
        }
        Ok(model)
    }
}

/// Lag beyond which the fBm covariance switches to its binomial series.
const FBM_SERIES_LAG: u64 = 8;

fn fbm_rho(h: f64, j: u64) -> f64 {
    let two_h = 2.0 * h;
    if j == 0 {
        return 1.0;
    }
    if j < FBM_SERIES_LAG {
        let jf = j as f64;
        return 0.5 * ((jf + 1.0).powf(two_h) + (jf - 1.0).powf(two_h) - 2.0 * jf.powf(two_h));
    }
    // ½ j^{2H} [(1+1/j)^{2H} + (1-1/j)^{2H} - 2] = j^{2H} Σ_{k>=1} C(2H, 2k) j^{-2k}
    let x = 1.0 / (j as f64 * j as f64);
    let mut binom = 1.0;
    let mut power = 1.0;
    let mut acc = CompensatedSum::new();
    for k in 1..200u32 {
        let a = 2.0 * k as f64;
        binom *= (two_h - a + 2.0) * (two_h - a + 1.0) / ((a - 1.0) * a);
        power *= x;
        let term = binom * power;
        acc.add(term);
        if term == 0.0 || term.abs() < 1e-18 * acc.value().abs() {
            break;
        }
    }
    (j as f64).powf(two_h) * acc.value()
}

impl CovarianceModel {
    pub fn fbm_increments(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::Domain(format!(
                "Hurst index must lie in (0, 1), got {hurst}"
            )));
        }
        Ok(Self {
            label: format!("fbm(H={hurst})"),
            params: CovarianceParams::Fbm { hurst },
            decay_alpha: Some(2.0 - 2.0 * hurst),
        })
    }

    pub fn cauchy(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "Cauchy alpha must be > 0, got {alpha}"
            )));
        }
        if !(beta > 0.0 && beta <= 2.0) {
            return Err(Error::Domain(format!(
                "Cauchy beta must lie in (0, 2], got {beta}"
            )));
        }
        Ok(Self {
            label: format!("cauchy(alpha={alpha},beta={beta})"),
            params: CovarianceParams::Cauchy { alpha, beta },
            decay_alpha: Some(alpha),
        })
    }

    pub fn from_table(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            Some(&v) if v == 1.0 => {}
            Some(&v) => {
                return Err(Error::InvalidCovariance(format!(
                    "rho(0) must equal 1, got {v}"
                )))
            }
            None => return Err(Error::InvalidCovariance("empty covariance table".into())),
        }
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::InvalidCovariance(format!(
                "|rho({j})| = {v} exceeds 1"
            )));
        }
        Ok(Self {
            label: if values.len() == 1 {
                "white".into()
            } else {
                format!("table({} lags)", values.len())
            },
            params: CovarianceParams::Table { values },
            decay_alpha: None,
        })
    }

    /// Independent standard Gaussians.
    pub fn white_noise() -> Self {
        Self::from_table(vec![1.0]).expect("unit table is valid")
    }

    /// Reads `(lag, rho)` rows; missing lags inside the range are zero.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let (Some(l), Some(r)) = (record.get(0), record.get(1)) else {
                return Err(Error::InvalidInput("covariance rows need lag,rho".into()));
            };
            let (Ok(lag), Ok(rho)) = (l.parse::<usize>(), r.parse::<f64>()) else {
                if rows.is_empty() {
                    continue; // header
                }
                return Err(Error::InvalidInput(format!("bad covariance row '{l},{r}'")));
            };
            rows.push((lag, rho));
        }
        let len = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut values = vec![0.0; len];
        for (lag, rho) in rows {
            values[lag] = rho;
        }
        Self::from_table(values)
    }

    pub fn with_decay_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "decay exponent must be > 0, got {alpha}"
            )));
        }
        self.decay_alpha = Some(alpha);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `ρ(j)`, symmetric in `j`.
    pub fn rho(&self, j: i64) -> f64 {
        let a = j.unsigned_abs();
        match &self.params {
            CovarianceParams::Fbm { hurst } => fbm_rho(*hurst, a),
            CovarianceParams::Cauchy { alpha, beta } => {
                if a == 0 {
                    1.0
                } else {
                    (-(alpha / beta) * (a as f64).powf(*beta).ln_1p()).exp()
                }
            }
            CovarianceParams::Table { values } => values.get(a as usize).copied().unwrap_or(0.0),
        }
    }

    /// `[ρ(0), ρ(1), …, ρ(len-1)]`.
    pub fn lags(&self, len: usize) -> Vec<f64> {
        (0..len as i64).map(|j| self.rho(j)).collect()
    }

    /// Largest lag with possibly nonzero covariance, if finite.
    pub fn support(&self) -> Option<usize> {
        match &self.params {
            CovarianceParams::Table { values } => {
                Some(values.iter().rposition(|v| *v != 0.0).unwrap_or(0))
            }
            CovarianceParams::Fbm { hurst } if *hurst == 0.5 => Some(0),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl FromStr for CovarianceModel {
    type Err = Error;

    /// Parses `fbm:H`, `cauchy:alpha,beta`, `white` or `table:path.csv`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |a: &str| -> Result<f64> {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number '{a}' in '{s}'")))
        };
        match name.trim() {
            "fbm" => Self::fbm_increments(num(arg)?),
            "cauchy" => {
                let (a, b) = arg.split_once(',').ok_or_else(|| {
                    Error::InvalidInput(format!("cauchy needs alpha,beta in '{s}'"))
                })?;
                Self::cauchy(num(a)?, num(b)?)
            }
            "white" => Ok(Self::white_noise()),
            "table" => Self::from_csv(arg.trim()),
            other => Err(Error::InvalidInput(format!(
                "unknown covariance model '{other}'"
            ))),
        }
    }
}

/// Negated least-squares slope of `ln|ρ(j)|` against `ln j` over the lags
/// `lo..=hi` where `ρ(j) != 0`.
pub fn fit_decay_exponent(model: &CovarianceModel, lo: u64, hi: u64) -> Result<f64> {
    let points: Vec<(f64, f64)> = (lo.max(1)..=hi)
        .filter_map(|j| {
            let r = model.rho(j as i64);
            (r != 0.0).then(|| ((j as f64).ln(), r.abs().ln()))
        })
        .collect();
    if points.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "{} nonzero lags in [{lo}, {hi}], need at least 8",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fbm_examples() {
        let half = CovarianceModel::fbm_increments(0.5).unwrap();
        assert_eq!(half.rho(0), 1.0);
        for j in 1..50 {
            assert_eq!(half.rho(j), 0.0);
        }
        let m = CovarianceModel::fbm_increments(0.75).unwrap();
        assert!((m.rho(1) - 0.5 * (2f64.powf(1.5) - 2.0)).abs() < 1e-15);
        assert_eq!(m.decay_alpha, Some(0.5));
        assert!(CovarianceModel::fbm_increments(1.0).is_err());
        assert!(CovarianceModel::fbm_increments(0.0).is_err());
    }

    #[test]
    fn fbm_series_matches_direct_form_where_both_are_accurate() {
        for &h in &[0.1, 0.3, 0.55, 0.7, 0.9] {
            for j in 8..40u64 {
                let jf = j as f64;
                let direct = 0.5
                    * ((jf + 1.0).powf(2.0 * h) + (jf - 1.0).powf(2.0 * h)
                        - 2.0 * jf.powf(2.0 * h));
                let got = fbm_rho(h, j);
                // the direct form carries an absolute error of a few ulps of j^{2H}
                assert!(
                    (got - direct).abs() < 1e-14 * jf.powf(2.0 * h),
                    "H = {h}, j = {j}"
                );
            }
        }
    }

    #[test]
    fn fbm_large_lag_asymptotics() {
        // ρ(j) ≈ H(2H-1) j^{2H-2} with relative correction O(j^{-2})
        let h = 0.7;
        let m = CovarianceModel::fbm_increments(h).unwrap();
        let j = 1_000_000i64;
        let lead = h * (2.0 * h - 1.0) * (j as f64).powf(2.0 * h - 2.0);
        assert!((m.rho(j) / lead - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fbm_sign_pattern() {
        for &h in &[0.2, 0.4, 0.49] {
            let m = CovarianceModel::fbm_increments(h).unwrap();
            assert!((1..=100).all(|j| m.rho(j) < 0.0));
        }
        for &h in &[0.5, 0.6, 0.95] {
            let m = CovarianceModel::fbm_increments(h).unwrap();
            assert!((1..=100).all(|j| m.rho(j) >= 0.0));
        }
    }

    #[test]
    fn cauchy_examples() {
        let m = CovarianceModel::cauchy(1.0, 1.0).unwrap();
        assert_eq!(m.rho(0), 1.0);
        assert!((m.rho(1) - 0.5).abs() < 1e-15);
        let m = CovarianceModel::cauchy(2.0, 2.0).unwrap();
        assert!((m.rho(2) - 0.2).abs() < 1e-15);
        assert!(CovarianceModel::cauchy(1.0, 2.5).is_err());
        assert!(CovarianceModel::cauchy(-1.0, 1.0).is_err());
    }

    #[test]
    fn table_examples() {
        let w = CovarianceModel::from_table(vec![1.0]).unwrap();
        assert_eq!(w.rho(0), 1.0);
        assert_eq!(w.rho(3), 0.0);
        let t = CovarianceModel::from_table(vec![1.0, 0.5]).unwrap();
        assert_eq!(t.rho(1), 0.5);
        assert_eq!(t.rho(-1), 0.5);
        assert_eq!(t.rho(2), 0.0);
        assert!(matches!(
            CovarianceModel::from_table(vec![1.0, 1.5]),
            Err(Error::InvalidCovariance(_))
        ));
        assert!(CovarianceModel::from_table(vec![0.9]).is_err());
    }

    #[test]
    fn fit_decay_examples() {
        let c = CovarianceModel::cauchy(1.5, 1.0).unwrap();
        assert!((fit_decay_exponent(&c, 100, 10_000).unwrap() - 1.5).abs() < 0.05);
        let f = CovarianceModel::fbm_increments(0.75).unwrap();
        assert!((fit_decay_exponent(&f, 100, 10_000).unwrap() - 0.5).abs() < 0.05);
        let mut values = vec![1.0];
        values.extend((1..=200).map(|j| (j as f64).powi(-2)));
        let t = CovarianceModel::from_table(values).unwrap();
        assert!((fit_decay_exponent(&t, 1, 200).unwrap() - 2.0).abs() < 1e-6);
        let short = CovarianceModel::from_table(vec![1.0, 0.5, 0.25]).unwrap();
        assert!(matches!(
            fit_decay_exponent(&short, 1, 100),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        std::fs::write(&path, "lag,rho\n0,1.0\n1,0.5\n3,-0.25\n").unwrap();
        let m = CovarianceModel::from_csv(&path).unwrap();
        assert_eq!(m.lags(5), vec![1.0, 0.5, 0.0, -0.25, 0.0]);
        let spec = format!("table:{}", path.display());
        assert_eq!(spec.parse::<CovarianceModel>().unwrap(), m);
    }

    #[test]
    fn json_round_trip_validates() {
        for m in [
            CovarianceModel::fbm_increments(0.3).unwrap(),
            CovarianceModel::cauchy(0.8, 1.5).unwrap(),
            CovarianceModel::from_table(vec![1.0, -0.2]).unwrap(),
        ] {
            let back = CovarianceModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
        let bad = r#"{"params":{"family":"fbm","hurst":1.2}}"#;
        assert!(CovarianceModel::from_json(bad).is_err());
    }

    #[test]
    fn string_forms() {
        assert_eq!(
            "white".parse::<CovarianceModel>().unwrap(),
            CovarianceModel::white_noise()
        );
        assert_eq!(
            "cauchy:1,1".parse::<CovarianceModel>().unwrap(),
            CovarianceModel::cauchy(1.0, 1.0).unwrap()
        );
        assert!("gauss:2".parse::<CovarianceModel>().is_err());
    }

    proptest! {
        #[test]
        fn constructor_outputs_are_symmetric_and_bounded(h in 0.01f64..0.99, a in 0.05f64..4.0, b in 0.05f64..2.0) {
            for m in [CovarianceModel::fbm_increments(h).unwrap(), CovarianceModel::cauchy(a, b).unwrap()] {
                prop_assert_eq!(m.rho(0), 1.0);
                for j in (1..10_000i64).step_by(37).chain([1, 2, 3, 9_999]) {
                    prop_assert_eq!(m.rho(j), m.rho(-j));
                    prop_assert!(m.rho(j).abs() <= 1.0);
                }
            }
        }
    }
}
