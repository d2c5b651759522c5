//! Predicted polynomial rates `d(F_n/σ_n, Z) ≲ n^{exponent}` as a function of
//! the Hermite rank `m`, the chaotic gap `γ` and the covariance decay `α`.

use crate::error::{Error, Result};
use crate::hermite::Gap;
use serde::{Deserialize, Serialize};

/// Tolerance for recognising an interval endpoint.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum RateCase {
    M2_G1,
    M2_G2PLUS,
    M3PLUS_G1,
    M3PLUS_G2PLUS,
    M1_NONLINEAR,
    /// Continuous-time partial integrals.
    CONTINUOUS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub case_id: RateCase,
    pub exponent: f64,
    pub validity: String,
    /// Set when α sits on an endpoint that belongs to the reported interval.
    pub boundary: bool,
    /// True when the limit variance is known to be finite and positive, so
    /// the `1/σ_n²` factor converges to a constant.
    pub prefactor_resolved: bool,
}

impl RatePrediction {
    /// One-line summary for terminals.
    pub fn summary(&self) -> String {
        format!(
            "{:?}: n^{:.11e} on {}{}{}",
            self.case_id,
            self.exponent,
            self.validity,
            if self.boundary {
                " (included endpoint)"
            } else {
                ""
            },
            if self.prefactor_resolved {
                ""
            } else {
                "; variance prefactor unresolved"
            }
        )
    }
}

/// A rate piece on the α-interval `(lo, hi)`; `hi_closed` marks `hi` as included.
struct Piece {
    lo: f64,
    hi: f64,
    hi_closed: bool,
    exponent: fn(f64, u32) -> f64,
    label: &'static str,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_TOL * b.abs().max(1.0)
}

fn pieces(case: RateCase, m: u32) -> Vec<Piece> {
    let mf = m as f64;
    let half: fn(f64, u32) -> f64 = |_, _| -0.5;
    let neg_half_alpha: fn(f64, u32) -> f64 = |a, _| -0.5 * a;
    let neg_alpha: fn(f64, u32) -> f64 = |a, _| -a;
    let one_minus_m_alpha: fn(f64, u32) -> f64 = |a, m| 1.0 - m as f64 * a;
    match case {
        RateCase::M2_G1 => vec![
            Piece {
                lo: 0.5,
                hi: 2.0 / 3.0,
                hi_closed: true,
                exponent: one_minus_m_alpha,
                label: "1-2alpha",
            },
            Piece {
                lo: 2.0 / 3.0,
                hi: 1.0,
                hi_closed: false,
                exponent: neg_half_alpha,
                label: "-alpha/2",
            },
            Piece {
                lo: 1.0,
                hi: f64::INFINITY,
                hi_closed: false,
                exponent: half,
                label: "-1/2",
            },
        ],
        RateCase::M2_G2PLUS => vec![
            Piece {
                lo: 0.5,
                hi: 0.75,
                hi_closed: false,
                exponent: one_minus_m_alpha,
                label: "1-2alpha",
            },
            Piece {
                lo: 0.75,
                hi: f64::INFINITY,
                hi_closed: false,
                exponent: half,
                label: "-1/2",
            },
        ],
        RateCase::M3PLUS_G1 => {
            let mid = 1.0 / (mf - 0.5);
            vec![
                Piece {
                    lo: 1.0 / mf,
                    hi: mid,
                    hi_closed: true,
                    exponent: one_minus_m_alpha,
                    label: "1-m*alpha",
                },
                Piece {
                    lo: mid,
                    hi: 1.0,
                    hi_closed: false,
                    exponent: neg_half_alpha,
                    label: "-alpha/2",
                },
                Piece {
                    lo: 1.0,
                    hi: f64::INFINITY,
                    hi_closed: false,
                    exponent: half,
                    label: "-1/2",
                },
            ]
        }
        RateCase::M3PLUS_G2PLUS => {
            let mid = 1.0 / (mf - 1.0);
            let mut v = vec![Piece {
                lo: 1.0 / mf,
                hi: mid,
                hi_closed: false,
                exponent: one_minus_m_alpha,
                label: "1-m*alpha",
            }];
            if mid < 0.5 {
                v.push(Piece {
                    lo: mid,
                    hi: 0.5,
                    hi_closed: false,
                    exponent: neg_alpha,
                    label: "-alpha",
                });
            }
            v.push(Piece {
                lo: 0.5,
                hi: f64::INFINITY,
                hi_closed: false,
                exponent: half,
                label: "-1/2",
            });
            v
        }
        RateCase::M1_NONLINEAR => vec![Piece {
            lo: 1.0,
            hi: f64::INFINITY,
            hi_closed: false,
            exponent: half,
            label: "-1/2",
        }],
        RateCase::CONTINUOUS => Vec::new(),
    }
}

fn interval(p: &Piece) -> String {
    let hi = if p.hi.is_infinite() {
        "inf)".to_string()
    } else if p.hi_closed {
        format!("{}]", p.hi)
    } else {
        format!("{})", p.hi)
    };
    format!("exponent {} for alpha in ({}, {}", p.label, p.lo, hi)
}

/// Rate exponent for rank `m`, gap `gamma` and decay `alpha`.
pub fn predict_rate(m: u32, gamma: Gap, alpha: f64) -> Result<RatePrediction> {
    if m == 0 {
        return Err(Error::Domain("Hermite rank must be >= 1".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain(format!(
            "decay exponent must be positive, got {alpha}"
        )));
    }
    let wide_gap = gamma.finite().is_none_or(|g| g >= 2);
    let case = match m {
        1 => {
            if gamma == Gap::Infinite {
                return Err(Error::ExactGaussian);
            }
            RateCase::M1_NONLINEAR
        }
        2 if wide_gap => RateCase::M2_G2PLUS,
        2 => RateCase::M2_G1,
        _ if wide_gap => RateCase::M3PLUS_G2PLUS,
        _ => RateCase::M3PLUS_G1,
    };
    let lower = 1.0 / m as f64;
    if alpha <= lower || near(alpha, lower) {
        return Err(Error::OutOfRegime(format!(
            "alpha = {alpha} <= 1/m = {lower}: the covariance power rho^m is not summable"
        )));
    }
    let ps = pieces(case, m);
    for (i, piece) in ps.iter().enumerate() {
        if i + 1 < ps.len() && near(alpha, piece.hi) {
            if piece.hi_closed {
                return Ok(RatePrediction {
                    case_id: case,
                    exponent: (piece.exponent)(piece.hi, m),
                    validity: interval(piece),
                    boundary: true,
                    prefactor_resolved: m.is_multiple_of(2),
                });
            }
            let next = &ps[i + 1];
            return Err(Error::BoundaryCase {
                alpha,
                boundary: piece.hi,
                left: (piece.exponent)(piece.hi, m),
                right: (next.exponent)(piece.hi, m),
            });
        }
        if alpha > piece.lo && alpha < piece.hi {
            return Ok(RatePrediction {
                case_id: case,
                exponent: (piece.exponent)(alpha, m),
                validity: interval(piece),
                boundary: false,
                // Σ_k ρ^q(k) >= 0 for every q, and Σ_k ρ^m(k) >= 1 for even m
                prefactor_resolved: m.is_multiple_of(2),
            });
        }
    }
    Err(Error::OutOfRegime(format!(
        "alpha = {alpha} is not covered for m = {m}, gap = {gamma}"
    )))
}

/// Power variations over fBm increments: rank 2, gap 2, `α = 2 - 2H`.
pub fn fbm_power_variation_rate(hurst: f64) -> Result<RatePrediction> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::Domain(format!(
            "Hurst index must lie in (0, 1), got {hurst}"
        )));
    }
    if hurst >= 0.75 || near(hurst, 0.75) {
        return Err(Error::NonGaussianRegime(hurst));
    }
    predict_rate(2, Gap::Finite(2), 2.0 - 2.0 * hurst)
}

/// Power variations over the Cauchy class with decay `alpha`.
pub fn cauchy_power_variation_rate(alpha: f64) -> Result<RatePrediction> {
    predict_rate(2, Gap::Finite(2), alpha)
}

/// Continuous-time partial integrals `T^{-1/2} ∫_0^T g(X_t) dt`.
pub fn continuous_time_rate(
    integrable_covariance: bool,
    symmetric_g: bool,
) -> Result<RatePrediction> {
    if !integrable_covariance {
        return Err(Error::OutOfRegime(
            "the covariance must be integrable over the real line".into(),
        ));
    }
    Ok(RatePrediction {
        case_id: RateCase::CONTINUOUS,
        exponent: -0.5,
        validity: "exponent -1/2 in T for integrable covariance".into(),
        boundary: false,
        prefactor_resolved: symmetric_g,
    })
}
