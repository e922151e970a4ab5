//! Registry of the four f-divergences used throughout the crate.
//!
//! An f-divergence between densities `p` and `q` is `D_f(p,q) = ∫ p(x) f(q(x)/p(x)) dx`
//! for a convex `f` with `f(1) = 0`. The four members in scope:
//!
//! | name  | f(r)                        | r·f''(r)   |
//! |-------|-----------------------------|------------|
//! | KL    | −ln r                       | 1/r        |
//! | RevKL | r ln r                      | 1          |
//! | 2JS   | −(r+1)ln((1+r)/2) + r ln r  | 1/(1+r)    |
//! | H²    | (√r − 1)²                   | 1/(2√r)    |
//!
//! JS is carried as twice the Jensen-Shannon divergence so that its minimax loss
//! pair matches the classic GAN objective exactly; the CLI still labels it `js`.
//!
//! Everything here is expressed through the log-ratio `d = D(x) = ln(p_*(x)/p_θ(x))`,
//! which is what discriminators model. The generator-side scaling factor is
//! `s(d) = f''(e^{−d})·e^{−d}`, the only divergence-dependent piece of the
//! generator gradient, and it coincides with the derivative of the second
//! minimax loss: `s(d) = dl₂(d)/dd` for every kind.
//!
//! Exponent arguments are capped at 50: an `exp` whose argument exceeds the cap
//! reports an overflow instead of saturating, so KL-type blowups surface in the
//! harness. Arguments below −50 underflow toward zero, which is the exact limit
//! and carries no instability, so they evaluate normally; the 2JS pair is built
//! from `softplus`/`sigmoid` and never overflows at all.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest argument allowed inside an `exp` before the operation reports overflow.
pub const EXPONENT_CAP: f64 = 50.0;

/// The four supported f-divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FDivergence {
    /// Kullback-Leibler, `f(r) = −ln r`.
    Kl,
    /// Reverse Kullback-Leibler, `f(r) = r ln r`.
    RevKl,
    /// Twice the Jensen-Shannon divergence, `f(r) = −(r+1)ln((1+r)/2) + r ln r`.
    Js2,
    /// Squared Hellinger distance, `f(r) = (√r − 1)²`.
    H2,
}

/// All four kinds, in table order.
pub const ALL_DIVERGENCES: [FDivergence; 4] =
    [FDivergence::Kl, FDivergence::RevKl, FDivergence::Js2, FDivergence::H2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("f({r}) undefined: argument must be a positive finite real")]
    Domain { r: f64 },
    #[error("exponent argument {arg} exceeds cap {cap} for {kind}")]
    Overflow { kind: FDivergence, arg: f64, cap: f64 },
}

impl std::fmt::Display for FDivergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FDivergence {
    /// CLI name: `kl | revkl | js | h2`.
    pub fn name(self) -> &'static str {
        match self {
            FDivergence::Kl => "kl",
            FDivergence::RevKl => "revkl",
            FDivergence::Js2 => "js",
            FDivergence::H2 => "h2",
        }
    }

    /// Parse a case-insensitive CLI name.
    pub fn parse(s: &str) -> Option<FDivergence> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Some(FDivergence::Kl),
            "revkl" | "rkl" => Some(FDivergence::RevKl),
            "js" | "js2" | "2js" => Some(FDivergence::Js2),
            "h2" => Some(FDivergence::H2),
            _ => None,
        }
    }
}

fn checked_exp(kind: FDivergence, arg: f64) -> Result<f64, DivergenceError> {
    if !arg.is_finite() || arg > EXPONENT_CAP {
        Err(DivergenceError::Overflow { kind, arg, cap: EXPONENT_CAP })
    } else {
        Ok(arg.exp())
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable `1/(1 + e^{−x})`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluate `f(r)` for the given kind.
///
/// `r` is the density ratio `q/p`; it must be a positive finite real.
pub fn f_value(div: FDivergence, r: f64) -> Result<f64, DivergenceError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(DivergenceError::Domain { r });
    }
    Ok(match div {
        FDivergence::Kl => -r.ln(),
        FDivergence::RevKl => r * r.ln(),
        FDivergence::Js2 => -(r + 1.0) * ((1.0 + r) / 2.0).ln() + r * r.ln(),
        FDivergence::H2 => {
            let s = r.sqrt() - 1.0;
            s * s
        }
    })
}

/// Second derivative `f''(r)`; strictly positive on r > 0 for every kind.
pub fn f_second(div: FDivergence, r: f64) -> Result<f64, DivergenceError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(DivergenceError::Domain { r });
    }
    Ok(match div {
        FDivergence::Kl => 1.0 / (r * r),
        FDivergence::RevKl => 1.0 / r,
        FDivergence::Js2 => 1.0 / (r * (1.0 + r)),
        FDivergence::H2 => 0.5 / (r * r.sqrt()),
    })
}

/// Generator-side scaling factor `s = f''(e^{−d})·e^{−d}` expressed through the
/// log-ratio `d = ln r`.
///
/// Closed forms: KL → `e^d`; RevKL → `1`; 2JS → `1/(1+e^{−d})`; H² → `e^{d/2}/2`.
/// At `d = 0` these are exactly `(1, 1, 1/2, 1/2)`.
pub fn scaling_factor(div: FDivergence, d: f64) -> Result<f64, DivergenceError> {
    if !d.is_finite() {
        return Err(DivergenceError::Overflow { kind: div, arg: d, cap: EXPONENT_CAP });
    }
    Ok(match div {
        FDivergence::Kl => checked_exp(div, d)?,
        FDivergence::RevKl => 1.0,
        FDivergence::Js2 => sigmoid(d),
        FDivergence::H2 => 0.5 * checked_exp(div, 0.5 * d)?,
    })
}

/// Derivative of the scaling factor with respect to `d`.
///
/// Needed by the asymptotics oracle when differentiating the gradient
/// integrand in the discriminator parameter.
pub fn scaling_factor_deriv(div: FDivergence, d: f64) -> Result<f64, DivergenceError> {
    if !d.is_finite() {
        return Err(DivergenceError::Overflow { kind: div, arg: d, cap: EXPONENT_CAP });
    }
    Ok(match div {
        FDivergence::Kl => checked_exp(div, d)?,
        FDivergence::RevKl => 0.0,
        FDivergence::Js2 => sigmoid(d) * sigmoid(-d),
        FDivergence::H2 => 0.25 * checked_exp(div, 0.5 * d)?,
    })
}

/// Minimax loss pair `(l₁(d), l₂(d))` together with the derivatives
/// `(dl₁/dd, dl₂/dd)`, with the log-ratio `d` standing in for `D(x)`:
///
/// | kind  | l₁(d)          | l₂(d)         |
/// |-------|----------------|---------------|
/// | KL    | −d             | e^d           |
/// | RevKL | e^{−d}         | d             |
/// | 2JS   | ln(1+e^{−d})   | ln(1+e^d)     |
/// | H²    | e^{−d/2}       | e^{d/2}       |
///
/// For every kind `dl₂(d) = scaling_factor(d)`, which is what makes the
/// divergence-specific generator update and the plug-in gradient estimator the
/// same computation.
pub fn fgan_losses(div: FDivergence, d: f64) -> Result<(f64, f64, f64, f64), DivergenceError> {
    if !d.is_finite() {
        return Err(DivergenceError::Overflow { kind: div, arg: d, cap: EXPONENT_CAP });
    }
    Ok(match div {
        FDivergence::Kl => {
            let e = checked_exp(div, d)?;
            (-d, e, -1.0, e)
        }
        FDivergence::RevKl => {
            let e = checked_exp(div, -d)?;
            (e, d, -e, 1.0)
        }
        FDivergence::Js2 => (softplus(-d), softplus(d), -sigmoid(-d), sigmoid(d)),
        FDivergence::H2 => {
            let en = checked_exp(div, -0.5 * d)?;
            let ep = checked_exp(div, 0.5 * d)?;
            (en, ep, -0.5 * en, 0.5 * ep)
        }
    })
}

/// Second derivatives `(d²l₁/dd², d²l₂/dd²)` of the minimax loss pair.
///
/// Used by the Newton discriminator fit; both are nonnegative for every kind,
/// so the empirical loss is convex in a linear-in-features discriminator.
pub fn fgan_curvatures(div: FDivergence, d: f64) -> Result<(f64, f64), DivergenceError> {
    if !d.is_finite() {
        return Err(DivergenceError::Overflow { kind: div, arg: d, cap: EXPONENT_CAP });
    }
    Ok(match div {
        FDivergence::Kl => (0.0, checked_exp(div, d)?),
        FDivergence::RevKl => (checked_exp(div, -d)?, 0.0),
        FDivergence::Js2 => {
            let w = sigmoid(d) * sigmoid(-d);
            (w, w)
        }
        FDivergence::H2 => {
            (0.25 * checked_exp(div, -0.5 * d)?, 0.25 * checked_exp(div, 0.5 * d)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f_is_normalized_at_one() {
        for div in ALL_DIVERGENCES {
            assert_eq!(f_value(div, 1.0).unwrap(), 0.0, "{div}");
        }
    }

    #[test]
    fn f_values_match_table() {
        assert_eq!(f_value(FDivergence::Kl, 1.0).unwrap(), 0.0);
        assert_eq!(f_value(FDivergence::H2, 4.0).unwrap(), 1.0);
        let js3 = f_value(FDivergence::Js2, 3.0).unwrap();
        let expect = -4.0 * 2.0_f64.ln() + 3.0 * 3.0_f64.ln();
        assert!((js3 - expect).abs() < 1e-15);
        assert!((expect - 0.52325).abs() < 5e-6);
    }

    #[test]
    fn f_rejects_bad_arguments() {
        for div in ALL_DIVERGENCES {
            assert!(matches!(f_value(div, 0.0), Err(DivergenceError::Domain { .. })));
            assert!(matches!(f_value(div, -1.0), Err(DivergenceError::Domain { .. })));
            assert!(matches!(f_value(div, f64::NAN), Err(DivergenceError::Domain { .. })));
            assert!(matches!(f_value(div, f64::INFINITY), Err(DivergenceError::Domain { .. })));
        }
    }

    #[test]
    fn scaling_factors_at_zero_are_exact() {
        let expect = [1.0, 1.0, 0.5, 0.5];
        for (div, want) in ALL_DIVERGENCES.into_iter().zip(expect) {
            assert_eq!(scaling_factor(div, 0.0).unwrap(), want, "{div}");
        }
    }

    #[test]
    fn scaling_factor_closed_forms() {
        let d = 2.0_f64.ln();
        assert!((scaling_factor(FDivergence::Kl, d).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(scaling_factor(FDivergence::RevKl, 123.0).unwrap(), 1.0);
        assert!((scaling_factor(FDivergence::Js2, d).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((scaling_factor(FDivergence::H2, d).unwrap() - 2.0_f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_factor_matches_definition_through_f_second() {
        // s(d) = f''(e^{-d}) e^{-d}
        for div in ALL_DIVERGENCES {
            for d in [-3.0_f64, -0.7, 0.0, 0.4, 2.5] {
                let r_inv = (-d).exp();
                let direct = f_second(div, r_inv).unwrap() * r_inv;
                let s = scaling_factor(div, d).unwrap();
                assert!((s - direct).abs() <= 1e-12 * direct.max(1.0), "{div} d={d}");
            }
        }
    }

    #[test]
    fn overflow_is_reported_not_saturated() {
        let err = scaling_factor(FDivergence::Kl, 51.0).unwrap_err();
        assert!(matches!(err, DivergenceError::Overflow { kind: FDivergence::Kl, .. }));
        // blowup directions of the loss pairs
        assert!(fgan_losses(FDivergence::H2, 101.0).is_err());
        assert!(fgan_losses(FDivergence::H2, -101.0).is_err());
        assert!(fgan_losses(FDivergence::H2, 99.0).is_ok());
        assert!(fgan_losses(FDivergence::RevKl, -51.0).is_err());
        assert!(fgan_losses(FDivergence::Kl, 51.0).is_err());
        // underflow saturates toward the exact limit and is not an error
        assert!(scaling_factor(FDivergence::Kl, -60.0).unwrap() < 1e-25);
        assert!(fgan_losses(FDivergence::Kl, -60.0).is_ok());
        assert!(scaling_factor(FDivergence::RevKl, 1e6).is_ok());
        // the 2JS pair is entire and never overflows
        assert!(fgan_losses(FDivergence::Js2, 300.0).is_ok());
        assert!(fgan_losses(FDivergence::Js2, -300.0).is_ok());
        // non-finite arguments are rejected everywhere
        assert!(scaling_factor(FDivergence::Js2, f64::NAN).is_err());
        assert!(fgan_losses(FDivergence::Js2, f64::INFINITY).is_err());
    }

    #[test]
    fn fgan_losses_match_table() {
        let (l1, l2, dl1, dl2) = fgan_losses(FDivergence::Kl, 0.0).unwrap();
        assert_eq!((l1, l2, dl1, dl2), (0.0, 1.0, -1.0, 1.0));

        let (l1, l2, dl1, dl2) = fgan_losses(FDivergence::Js2, 0.0).unwrap();
        assert!((l1 - 2.0_f64.ln()).abs() < 1e-15);
        assert!((l2 - 2.0_f64.ln()).abs() < 1e-15);
        assert_eq!(dl1, -0.5);
        assert_eq!(dl2, 0.5);

        let (l1, l2, dl1, dl2) = fgan_losses(FDivergence::H2, 2.0).unwrap();
        let e = 1.0_f64.exp();
        assert!((l1 - 1.0 / e).abs() < 1e-15);
        assert!((l2 - e).abs() < 1e-15);
        assert!((dl1 + 0.5 / e).abs() < 1e-15);
        assert!((dl2 - 0.5 * e).abs() < 1e-15);
    }

    #[test]
    fn l2_derivative_equals_scaling_factor_at_random_points() {
        // d/dθ l₂(d(θ)) = s(d)·d'(θ): checked by finite differences through a
        // smooth d(θ) at 100 random (kind, d) pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let div = ALL_DIVERGENCES[rng.random_range(0..4)];
            let d0: f64 = rng.random_range(-4.0..4.0);
            let a: f64 = rng.random_range(0.5..2.0);
            // d(θ) = d0 + a·θ around θ = 0, so d'(0) = a.
            let l2 = |theta: f64| fgan_losses(div, d0 + a * theta).unwrap().1;
            let h = 1e-6;
            let fd = (l2(h) - l2(-h)) / (2.0 * h);
            let s = scaling_factor(div, d0).unwrap() * a;
            let rel = (fd - s).abs() / s.abs().max(1e-12);
            assert!(rel <= 1e-6, "{div} d0={d0} fd={fd} s={s}");
        }
    }

    #[test]
    fn curvatures_are_second_differences() {
        for div in ALL_DIVERGENCES {
            for d in [-2.0, -0.3, 0.0, 1.7] {
                let h = 1e-5;
                let (l1m, l2m, ..) = fgan_losses(div, d - h).unwrap();
                let (l10, l20, ..) = fgan_losses(div, d).unwrap();
                let (l1p, l2p, ..) = fgan_losses(div, d + h).unwrap();
                let (c1, c2) = fgan_curvatures(div, d).unwrap();
                let fd1 = (l1p - 2.0 * l10 + l1m) / (h * h);
                let fd2 = (l2p - 2.0 * l20 + l2m) / (h * h);
                assert!((fd1 - c1).abs() < 1e-4 * (1.0 + c1), "{div} d={d}");
                assert!((fd2 - c2).abs() < 1e-4 * (1.0 + c2), "{div} d={d}");
                assert!(c1 >= 0.0 && c2 >= 0.0);
            }
        }
    }
}
