//! Plug-in generator gradients.
//!
//! Per latent draw, the gradient contribution is
//! `h'(z; θ) = −s(D_ψ(G_θ(z))) · ∇_θG_θ(z)ᵀ · ∇ₓD_ψ(G_θ(z))`,
//! with `s` the divergence's scaling factor, and the estimator `h(θ)` is the
//! plain arithmetic mean over the batch. Everything is analytic — closed-form
//! Jacobians and feature gradients — so the estimate is deterministic given
//! the batch.
//!
//! Batch means are accumulated by fixed-shape pairwise summation, so the
//! result is bit-stable no matter how the surrounding harness parallelizes.

use nalgebra::DVector;
use thiserror::Error;

use crate::divergence::{scaling_factor, DivergenceError, FDivergence};
use crate::model::{Sample, Setting};

#[derive(Debug, Error, Clone)]
pub enum GradError {
    #[error("scaling factor overflow at θ={theta:?}, z={z:?} (draw {draw}): {source}")]
    Scaling { theta: Vec<f64>, z: Vec<f64>, draw: usize, source: DivergenceError },
    #[error("non-finite gradient contribution at draw {draw}")]
    NonFinite { draw: usize },
}

/// Monte-Carlo gradient estimate over a latent batch.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub h: DVector<f64>,
    pub per_draw_norm_mean: f64,
    pub m_used: usize,
}

/// Workspace buffers reused across draws.
struct Scratch {
    x: Vec<f64>,
    gx: Vec<f64>,
    h: Vec<f64>,
}

impl Scratch {
    fn new(setting: &Setting) -> Self {
        Scratch {
            x: vec![0.0; setting.data_dim()],
            gx: vec![0.0; setting.data_dim()],
            h: vec![0.0; setting.theta_dim()],
        }
    }
}

fn h_prime_scratch(
    div: FDivergence,
    setting: &Setting,
    theta: &[f64],
    psi: &[f64],
    z: &[f64],
    draw: usize,
    ws: &mut Scratch,
) -> Result<(), GradError> {
    setting.generate_into(theta, z, &mut ws.x);
    let mut d = 0.0;
    {
        // D(x) = ψᵀφ(x) without materializing φ
        let mut feat = [0.0; 8];
        let p = setting.psi_dim();
        setting.features_into(&ws.x, &mut feat[..p]);
        for (pi, fi) in psi.iter().zip(&feat[..p]) {
            d += pi * fi;
        }
    }
    let s = scaling_factor(div, d).map_err(|source| GradError::Scaling {
        theta: theta.to_vec(),
        z: z.to_vec(),
        draw,
        source,
    })?;
    setting.disc_grad_x_into(psi, &ws.x, &mut ws.gx);
    setting.jacobian_t_apply(theta, z, &ws.gx, &mut ws.h);
    for v in ws.h.iter_mut() {
        *v *= -s;
        if !v.is_finite() {
            return Err(GradError::NonFinite { draw });
        }
    }
    Ok(())
}

/// Single-draw gradient contribution `h'(z; θ)`.
pub fn h_prime(
    div: FDivergence,
    setting: &Setting,
    theta: &[f64],
    psi: &[f64],
    z: &[f64],
) -> Result<DVector<f64>, GradError> {
    let mut ws = Scratch::new(setting);
    h_prime_scratch(div, setting, theta, psi, z, 0, &mut ws)?;
    Ok(DVector::from_vec(ws.h.clone()))
}

/// Pairwise mean over `len` items of `k`-vectors produced by `eval`.
fn pairwise_mean<E>(
    k: usize,
    len: usize,
    eval: &mut impl FnMut(usize, &mut [f64]) -> Result<(), E>,
) -> Result<Vec<f64>, E> {
    fn sum_range<E>(
        k: usize,
        lo: usize,
        hi: usize,
        eval: &mut impl FnMut(usize, &mut [f64]) -> Result<(), E>,
        buf: &mut Vec<f64>,
    ) -> Result<Vec<f64>, E> {
        const LEAF: usize = 64;
        if hi - lo <= LEAF {
            let mut acc = vec![0.0; k];
            for i in lo..hi {
                eval(i, buf)?;
                for (a, b) in acc.iter_mut().zip(buf.iter()) {
                    *a += b;
                }
            }
            Ok(acc)
        } else {
            let mid = lo + (hi - lo) / 2;
            let mut left = sum_range(k, lo, mid, eval, buf)?;
            let right = sum_range(k, mid, hi, eval, buf)?;
            for (a, b) in left.iter_mut().zip(right) {
                *a += b;
            }
            Ok(left)
        }
    }
    let mut buf = vec![0.0; k];
    let mut total = sum_range(k, 0, len, eval, &mut buf)?;
    for v in total.iter_mut() {
        *v /= len as f64;
    }
    Ok(total)
}

/// Mean of `h'` over the latent batch, plus the mean per-draw norm.
pub fn h_estimate(
    div: FDivergence,
    setting: &Setting,
    theta: &[f64],
    psi: &[f64],
    z_batch: &Sample,
) -> Result<GradientEstimate, GradError> {
    assert!(!z_batch.is_empty(), "latent batch must be nonempty");
    let td = setting.theta_dim();
    let mut ws = Scratch::new(setting);
    // last slot carries ‖h'‖ so the norm mean shares the same summation tree
    let mean = pairwise_mean(td + 1, z_batch.len(), &mut |i, out: &mut [f64]| {
        h_prime_scratch(div, setting, theta, psi, z_batch.row(i), i, &mut ws)?;
        out[..td].copy_from_slice(&ws.h);
        out[td] = ws.h.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(())
    })?;
    Ok(GradientEstimate {
        h: DVector::from_column_slice(&mean[..td]),
        per_draw_norm_mean: mean[td],
        m_used: z_batch.len(),
    })
}

/// Local-GAN gradient: score-feature discriminator with reverse-KL scaling.
///
/// Per draw, `h̃'(z; θ) = −[∇ₓS(θ̂; G_θ(z)) ∇_θG_θ(z)]ᵀ ψ`; the scaling factor
/// is identically 1.
pub fn h_estimate_score(
    setting: &Setting,
    theta_hat: &[f64],
    theta: &[f64],
    psi: &[f64],
    z_batch: &Sample,
) -> Result<GradientEstimate, GradError> {
    assert!(!z_batch.is_empty(), "latent batch must be nonempty");
    let td = setting.theta_dim();
    let dd = setting.data_dim();
    let mut x = vec![0.0; dd];
    let mut row = vec![0.0; dd];
    let mut h = vec![0.0; td];
    let mean = pairwise_mean(td + 1, z_batch.len(), &mut |i, out: &mut [f64]| {
        let z = z_batch.row(i);
        setting.generate_into(theta, z, &mut x);
        let sg = setting.score_grad_x(theta_hat, &x);
        // v = ψᵀ·∇ₓS  (length data_dim), then h̃' = −Jᵀv
        for j in 0..dd {
            let mut acc = 0.0;
            for a in 0..td {
                acc += psi[a] * sg[(a, j)];
            }
            row[j] = acc;
        }
        setting.jacobian_t_apply(theta, z, &row, &mut h);
        for v in h.iter_mut() {
            *v = -*v;
            if !v.is_finite() {
                return Err(GradError::NonFinite { draw: i });
            }
        }
        out[..td].copy_from_slice(&h);
        out[td] = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(())
    })?;
    Ok(GradientEstimate {
        h: DVector::from_column_slice(&mean[..td]),
        per_draw_norm_mean: mean[td],
        m_used: z_batch.len(),
    })
}
