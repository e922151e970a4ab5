//! Discriminator fitting by damped Newton iteration.
//!
//! Two convex objectives over linear-in-features discriminators `D_ψ(x) = ψᵀφ(x)`:
//!
//! - the λ-weighted logistic loss
//!   `(1/n)Σ ln(1+λe^{−D(xᵢ)}) + (1/m)Σ λ·ln(1+e^{D(x̃ⱼ)}/λ)`, and
//! - a divergence-specific minimax loss
//!   `(1/n)Σ l₁(D(xᵢ)) + (1/m)Σ l₂(D(x̃ⱼ))`.
//!
//! Both run through one Newton loop (backtracking line search, Armijo constant
//! 1e−4, halving) so that at λ = 1 the JS minimax fit is the logistic fit,
//! floating-point op for floating-point op. Objectives are smooth, convex and
//! at most six-dimensional here, so second-order convergence is cheap and keeps
//! Monte-Carlo tables stable.
//!
//! ψ starts at 0 unless a warm start is supplied. There is no explicit
//! Ψ-compactness projection; a ‖ψ‖ blowup past 1e6 is reported as separation,
//! which is what perfectly separable data produces at finite samples.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::divergence::{fgan_curvatures, fgan_losses, FDivergence};
use crate::model::{Sample, Setting};

/// Gradient-norm convergence tolerance.
pub const GRAD_TOL: f64 = 1e-10;
/// Iteration cap.
pub const MAX_ITERS: usize = 200;
/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// ‖ψ‖ beyond which the data is declared separable.
pub const SEPARATION_NORM: f64 = 1e6;

#[derive(Debug, Error, Clone)]
pub enum FitError {
    #[error("empty sample passed to discriminator fit")]
    EmptySample,
    #[error("separable data: ‖ψ‖ = {psi_norm:.3e} exceeded {}", SEPARATION_NORM)]
    Separation { psi_norm: f64 },
    #[error("discriminator loss diverged (persistent overflow) after {iterations} iterations")]
    Divergence { iterations: usize },
}

/// Fitted discriminator parameters with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct DiscriminatorFit {
    pub psi_hat: DVector<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when a Newton system was singular and a gradient step was used.
    pub newton_fallback: bool,
}

/// Row-major feature matrix (`rows × cols`).
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Self {
        assert!(cols > 0 && data.len() % cols == 0);
        FeatureMatrix { rows: data.len() / cols, data, cols }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Apply a setting's feature map to a whole sample.
pub fn feature_matrix(setting: &Setting, sample: &Sample) -> FeatureMatrix {
    let cols = setting.psi_dim();
    let mut data = vec![0.0; sample.len() * cols];
    for (i, x) in sample.rows().enumerate() {
        setting.features_into(x, &mut data[i * cols..(i + 1) * cols]);
    }
    FeatureMatrix::new(data, cols)
}

#[derive(Debug, Clone, Copy)]
enum LossKind {
    /// λ-weighted logistic regression.
    Logistic { ln_lambda: f64, lambda: f64 },
    /// Minimax loss pair of the given divergence.
    Fgan(FDivergence),
}

/// `(softplus(u), σ(u), σ(−u))` from a single exponential.
///
/// Bit-identical to calling the three helpers separately: all three share the
/// same `exp(−|u|)` and rational forms.
#[inline]
fn logistic_parts(u: f64) -> (f64, f64, f64) {
    if u >= 0.0 {
        let e = (-u).exp();
        (u + e.ln_1p(), 1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = u.exp();
        (e.ln_1p(), e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

impl LossKind {
    /// `(value, d/dD, d²/dD²)` of the real-side per-point loss at `d = D(x)`.
    #[inline]
    fn real_terms(self, d: f64) -> Option<(f64, f64, f64)> {
        match self {
            LossKind::Logistic { ln_lambda, .. } => {
                let (sp, s, sneg) = logistic_parts(ln_lambda - d);
                Some((sp, -s, s * sneg))
            }
            LossKind::Fgan(div) => {
                let (l1, _, dl1, _) = fgan_losses(div, d).ok()?;
                let (c1, _) = fgan_curvatures(div, d).ok()?;
                Some((l1, dl1, c1))
            }
        }
    }

    /// Same for the generated-side per-point loss.
    #[inline]
    fn fake_terms(self, d: f64) -> Option<(f64, f64, f64)> {
        match self {
            LossKind::Logistic { ln_lambda, lambda } => {
                let (sp, s, sneg) = logistic_parts(d - ln_lambda);
                Some((lambda * sp, lambda * s, lambda * (s * sneg)))
            }
            LossKind::Fgan(div) => {
                let (_, l2, _, dl2) = fgan_losses(div, d).ok()?;
                let (_, c2) = fgan_curvatures(div, d).ok()?;
                Some((l2, dl2, c2))
            }
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

#[inline]
fn dot(psi: &[f64], feat: &[f64]) -> f64 {
    let mut d = 0.0;
    for (p, f) in psi.iter().zip(feat) {
        d += p * f;
    }
    d
}

/// Loss only; `None` when an exponent overflows (line-search backtracks on it).
fn eval_loss(kind: LossKind, real: &FeatureMatrix, fake: &FeatureMatrix, psi: &[f64]) -> Option<f64> {
    let mut acc = Kahan::default();
    for i in 0..real.rows {
        let (l, _, _) = kind.real_terms(dot(psi, real.row(i)))?;
        acc.add(l);
    }
    let real_part = acc.sum / real.rows as f64;
    let mut acc = Kahan::default();
    for j in 0..fake.rows {
        let (l, _, _) = kind.fake_terms(dot(psi, fake.row(j)))?;
        acc.add(l);
    }
    let v = real_part + acc.sum / fake.rows as f64;
    v.is_finite().then_some(v)
}

/// Loss, gradient, and Hessian (upper triangle accumulated, then mirrored).
fn eval_full(
    kind: LossKind,
    real: &FeatureMatrix,
    fake: &FeatureMatrix,
    psi: &[f64],
) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let p = real.cols;
    let mut loss = Kahan::default();
    let mut grad = vec![Kahan::default(); p];
    let mut hess = vec![0.0; p * (p + 1) / 2];

    let mut side = |feats: &FeatureMatrix, is_real: bool| -> Option<f64> {
        let mut side_loss = Kahan::default();
        let mut side_grad = vec![Kahan::default(); p];
        let mut side_hess = vec![0.0; p * (p + 1) / 2];
        for i in 0..feats.rows {
            let row = feats.row(i);
            let d = dot(psi, row);
            let (l, g, h) = if is_real { kind.real_terms(d)? } else { kind.fake_terms(d)? };
            side_loss.add(l);
            let mut idx = 0;
            for a in 0..p {
                side_grad[a].add(g * row[a]);
                let ha = h * row[a];
                for b in a..p {
                    side_hess[idx] += ha * row[b];
                    idx += 1;
                }
            }
        }
        let inv = 1.0 / feats.rows as f64;
        for a in 0..p {
            grad[a].add(side_grad[a].sum * inv);
        }
        for (dst, src) in hess.iter_mut().zip(&side_hess) {
            *dst += src * inv;
        }
        Some(side_loss.sum * inv)
    };

    loss.add(side(real, true)?);
    loss.add(side(fake, false)?);

    if !loss.sum.is_finite() {
        return None;
    }
    let g = DVector::from_iterator(p, grad.iter().map(|k| k.sum));
    let mut h = DMatrix::zeros(p, p);
    let mut idx = 0;
    for a in 0..p {
        for b in a..p {
            h[(a, b)] = hess[idx];
            h[(b, a)] = hess[idx];
            idx += 1;
        }
    }
    Some((loss.sum, g, h))
}

fn newton(
    kind: LossKind,
    real: &FeatureMatrix,
    fake: &FeatureMatrix,
    warm_start: Option<&DVector<f64>>,
) -> Result<DiscriminatorFit, FitError> {
    if real.rows == 0 || fake.rows == 0 {
        return Err(FitError::EmptySample);
    }
    assert_eq!(real.cols, fake.cols);
    let p = real.cols;
    let separation_error = |psi_norm: f64, iterations: usize| match kind {
        LossKind::Logistic { .. } => FitError::Separation { psi_norm },
        LossKind::Fgan(_) => {
            let _ = psi_norm;
            FitError::Divergence { iterations }
        }
    };

    let mut psi = warm_start.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut state = eval_full(kind, real, fake, psi.as_slice());
    if state.is_none() && warm_start.is_some() {
        // warm start landed outside the loss domain; restart cold
        psi = DVector::zeros(p);
        state = eval_full(kind, real, fake, psi.as_slice());
    }
    let (mut loss, mut grad, mut hess) =
        state.ok_or(FitError::Divergence { iterations: 0 })?;

    let mut iterations = 0;
    let mut newton_fallback = false;
    let mut converged = grad.norm() <= GRAD_TOL;

    while !converged && iterations < MAX_ITERS {
        // Newton direction; gradient step when the system is singular. The
        // Hessian is positive semidefinite for these losses, so a Cholesky
        // failure means rank deficiency, not indefiniteness.
        let dir = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => {
                debug_assert!(
                    hess.clone().symmetric_eigen().eigenvalues.min() >= -1e-10,
                    "discriminator Hessian lost positive semidefiniteness"
                );
                newton_fallback = true;
                -&grad
            }
        };
        let slope = grad.dot(&dir);
        if slope >= 0.0 {
            // not a descent direction; numerical floor reached
            break;
        }

        // Once the Newton decrement falls below what the loss can resolve in
        // f64, Armijo can no longer certify progress; the iterate is inside
        // the quadratic-convergence basin, so take the full step ungated.
        let fp_floor = 16.0 * f64::EPSILON * (1.0 + loss.abs());
        let ungated = -slope <= fp_floor;

        // Full evaluation at the t = 1 candidate: when it passes the decrease
        // test (the common case for Newton), its gradient and Hessian feed the
        // next iteration with no extra pass over the data.
        let full_step = &psi + &dir;
        let full_state = eval_full(kind, real, fake, full_step.as_slice());
        let full_ok = match &full_state {
            Some((l, _, _)) if ungated => *l <= loss + fp_floor,
            Some((l, _, _)) => *l <= loss + ARMIJO_C * slope,
            None => false,
        };

        let accepted = if full_ok {
            Some((full_step, full_state.unwrap()))
        } else if ungated {
            None
        } else {
            // backtrack with loss-only evaluations
            let mut found = None;
            let mut saw_finite = full_state.is_some();
            let mut t = 0.5;
            while t >= 1e-20 {
                let cand = &psi + t * &dir;
                if let Some(l) = eval_loss(kind, real, fake, cand.as_slice()) {
                    saw_finite = true;
                    if l <= loss + ARMIJO_C * t * slope {
                        found = Some(cand);
                        break;
                    }
                }
                t *= 0.5;
            }
            match found {
                Some(cand) => {
                    let st = eval_full(kind, real, fake, cand.as_slice())
                        .ok_or(FitError::Divergence { iterations })?;
                    Some((cand, st))
                }
                None if saw_finite => None,
                None => return Err(FitError::Divergence { iterations }),
            }
        };
        let Some((cand, (new_loss, new_grad, new_hess))) = accepted else {
            // finite everywhere but no certifiable decrease left
            break;
        };

        assert!(
            new_loss <= loss + fp_floor,
            "Newton iterate increased the loss beyond floating-point resolution"
        );
        psi = cand;
        loss = new_loss;
        grad = new_grad;
        hess = new_hess;
        iterations += 1;

        let psi_norm = psi.norm();
        if psi_norm > SEPARATION_NORM {
            return Err(separation_error(psi_norm, iterations));
        }
        converged = grad.norm() <= GRAD_TOL;
    }

    let grad_norm = grad.norm();
    Ok(DiscriminatorFit { psi_hat: psi, loss, grad_norm, iterations, converged, newton_fallback })
}

/// Fit the λ-weighted logistic loss on precomputed feature rows.
///
/// `lambda` is the weighting used in the loss, not the row-count ratio, so
/// callers control the imbalance correction.
pub fn fit_logistic_features(
    real: &FeatureMatrix,
    fake: &FeatureMatrix,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<DiscriminatorFit, FitError> {
    newton(LossKind::Logistic { ln_lambda: lambda.ln(), lambda }, real, fake, warm_start)
}

/// Fit a divergence-specific minimax loss on precomputed feature rows.
///
/// No λ weighting: the minimax loss is used uncorrected. KL and H² exponent
/// overflow during line search backtracks; persistent overflow is reported as
/// divergence, which is the instability the harness counts.
pub fn fit_fgan_features(
    div: FDivergence,
    real: &FeatureMatrix,
    fake: &FeatureMatrix,
    warm_start: Option<&DVector<f64>>,
) -> Result<DiscriminatorFit, FitError> {
    newton(LossKind::Fgan(div), real, fake, warm_start)
}

/// Convenience wrapper: build features from a setting, then fit the logistic loss.
pub fn fit_logistic(
    setting: &Setting,
    real_x: &Sample,
    fake_x: &Sample,
    lambda: f64,
) -> Result<DiscriminatorFit, FitError> {
    let real = feature_matrix(setting, real_x);
    let fake = feature_matrix(setting, fake_x);
    fit_logistic_features(&real, &fake, lambda, None)
}

/// Convenience wrapper: build features from a setting, then fit the minimax loss.
pub fn fit_fgan(
    div: FDivergence,
    setting: &Setting,
    real_x: &Sample,
    fake_x: &Sample,
) -> Result<DiscriminatorFit, FitError> {
    let real = feature_matrix(setting, real_x);
    let fake = feature_matrix(setting, fake_x);
    fit_fgan_features(div, &real, &fake, None)
}
