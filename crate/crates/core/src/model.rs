//! Closed-form experimental settings.
//!
//! Each setting bundles a true density `p_*` with a sampler, a parametric
//! generator family `G_θ` (Jacobian, induced log-density, Fisher score), a
//! discriminator feature map `φ` so that `D_ψ(x) = ψᵀφ(x)`, and the analytic
//! optimal discriminator `ψ*(θ)` encoding `ln(p_*(x)/p_θ(x))` in that basis.
//!
//! Settings:
//! - `GaussianMean`: `p_* = N(μ₀, I_d)`, `G_θ(z) = θ + z`, features `(1, x)`.
//!   Well-specified; the reference case for efficiency comparisons with MLE.
//! - `LaplaceGaussian`: `p_*` Laplace with scale `b`, `G_θ(z) = θz` (a
//!   misspecified `N(0, θ²)` family), features `(1, |x|, x²)`.
//! - `Gaussian2`: `p_* = N(μ₀, σ₀²)` learned by `N(0, θ²)`, features `(1, x, x²)`.
//! - `TwoGaussianClassify`: a pure discriminator task between two 2-D Gaussians
//!   `p₁ = N(0, σ₁²I₂)` (real) and `p₂ = N((μ₂,μ₂), σ₂²I₂)` (generated),
//!   features `(1, x₁, x₂, x₁², x₂², x₁x₂)`. No trainable generator parameter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::divergence::FDivergence;
use crate::quadrature;

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Tail mass dropped by domain truncation.
pub const TAIL_EPS: f64 = 1e-13;
/// Gaussian truncation radius in standard deviations (mass beyond ±9σ ≈ 2e−19).
pub const GAUSS_RADIUS: f64 = 9.0;

/// Absolute tolerance of the golden-section refinement in [`theta_star`].
pub const THETA_STAR_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid setting parameter: {0}")]
    InvalidParameter(String),
    #[error("{setting} does not support {operation}")]
    Unsupported { setting: String, operation: String },
    #[error("objective minimization failed: {message} ({} profile points attached)", profile.len())]
    Optimization { message: String, profile: Vec<(f64, f64)> },
}

/// Flat row-major sample matrix (n × dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Vec<f64>,
    pub dim: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Sample { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// A closed-form experimental scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Setting {
    GaussianMean { dim: usize, mu0: DVector<f64> },
    LaplaceGaussian { b: f64 },
    Gaussian2 { mu0: f64, sigma0: f64 },
    TwoGaussianClassify { mu2: f64, sigma1_sq: f64, sigma2_sq: f64 },
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Setting {
    pub fn gaussian_mean(dim: usize, mu0: DVector<f64>) -> Result<Self, ModelError> {
        if dim == 0 || mu0.len() != dim {
            return Err(ModelError::InvalidParameter(format!(
                "gaussian-mean requires dim ≥ 1 and a μ0 of matching length (dim={dim}, len={})",
                mu0.len()
            )));
        }
        Ok(Setting::GaussianMean { dim, mu0 })
    }

    pub fn laplace_gaussian(b: f64) -> Result<Self, ModelError> {
        if !(b.is_finite() && b > 0.0) {
            return Err(ModelError::InvalidParameter(format!("laplace-gaussian scale b={b} must be positive")));
        }
        Ok(Setting::LaplaceGaussian { b })
    }

    pub fn gaussian2(mu0: f64, sigma0: f64) -> Result<Self, ModelError> {
        if !(sigma0.is_finite() && sigma0 > 0.0) {
            return Err(ModelError::InvalidParameter(format!("gaussian2 scale σ0={sigma0} must be positive")));
        }
        Ok(Setting::Gaussian2 { mu0, sigma0 })
    }

    /// σ₁² and σ₂² default to 0.1 and 0.05; they must differ, otherwise the
    /// quadratic coefficient of the optimal discriminator degenerates.
    pub fn two_gaussian(mu2: f64, sigma1_sq: f64, sigma2_sq: f64) -> Result<Self, ModelError> {
        if !(sigma1_sq > 0.0 && sigma2_sq > 0.0) {
            return Err(ModelError::InvalidParameter("two-gaussian variances must be positive".into()));
        }
        if sigma1_sq == sigma2_sq {
            return Err(ModelError::InvalidParameter(
                "two-gaussian requires σ1² ≠ σ2² (quadratic discriminator coefficient degenerates)".into(),
            ));
        }
        Ok(Setting::TwoGaussianClassify { mu2, sigma1_sq, sigma2_sq })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Setting::GaussianMean { .. } => "gaussian-mean",
            Setting::LaplaceGaussian { .. } => "laplace-gaussian",
            Setting::Gaussian2 { .. } => "gaussian2",
            Setting::TwoGaussianClassify { .. } => "two-gaussian",
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            Setting::GaussianMean { dim, .. } => *dim,
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => 1,
            Setting::TwoGaussianClassify { .. } => 2,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.data_dim()
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            Setting::GaussianMean { dim, .. } => *dim,
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => 1,
            Setting::TwoGaussianClassify { .. } => 0,
        }
    }

    pub fn psi_dim(&self) -> usize {
        match self {
            Setting::GaussianMean { dim, .. } => dim + 1,
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => 3,
            Setting::TwoGaussianClassify { .. } => 6,
        }
    }

    /// First feature is the constant 1 in every built-in setting.
    pub fn has_intercept(&self) -> bool {
        true
    }

    /// Per-coordinate closed parameter box Θ.
    pub fn theta_box(&self) -> Vec<(f64, f64)> {
        match self {
            Setting::GaussianMean { dim, .. } => vec![(-1e3, 1e3); *dim],
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => vec![(0.1, 1e3)],
            Setting::TwoGaussianClassify { .. } => vec![],
        }
    }

    /// Project θ onto the box, coordinate by coordinate.
    pub fn clip_theta(&self, theta: &mut DVector<f64>) {
        for (t, (lo, hi)) in theta.iter_mut().zip(self.theta_box()) {
            *t = t.clamp(lo, hi);
        }
    }

    pub fn log_p_star(&self, x: &[f64]) -> f64 {
        match self {
            Setting::GaussianMean { dim, mu0 } => {
                let mut q = 0.0;
                for i in 0..*dim {
                    let d = x[i] - mu0[i];
                    q += d * d;
                }
                -0.5 * (*dim as f64) * LN_2PI - 0.5 * q
            }
            Setting::LaplaceGaussian { b } => -x[0].abs() / b - (2.0 * b).ln(),
            Setting::Gaussian2 { mu0, sigma0 } => {
                let d = (x[0] - mu0) / sigma0;
                -0.5 * LN_2PI - sigma0.ln() - 0.5 * d * d
            }
            Setting::TwoGaussianClassify { sigma1_sq, .. } => {
                let q = (x[0] * x[0] + x[1] * x[1]) / sigma1_sq;
                -LN_2PI - sigma1_sq.ln() - 0.5 * q
            }
        }
    }

    /// Induced log-density `ln p_θ(x)`; for the classification setting this is
    /// the second class `p₂`, which plays the role of the generated law.
    pub fn log_p_theta(&self, theta: &[f64], x: &[f64]) -> f64 {
        match self {
            Setting::GaussianMean { dim, .. } => {
                let mut q = 0.0;
                for i in 0..*dim {
                    let d = x[i] - theta[i];
                    q += d * d;
                }
                -0.5 * (*dim as f64) * LN_2PI - 0.5 * q
            }
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                let t = theta[0];
                let d = x[0] / t;
                -0.5 * LN_2PI - t.ln() - 0.5 * d * d
            }
            Setting::TwoGaussianClassify { mu2, sigma2_sq, .. } => {
                let dx = x[0] - mu2;
                let dy = x[1] - mu2;
                -LN_2PI - sigma2_sq.ln() - 0.5 * (dx * dx + dy * dy) / sigma2_sq
            }
        }
    }

    /// Discriminator feature map `φ(x)` written into `out` (`psi_dim` entries).
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Setting::GaussianMean { dim, .. } => {
                out[0] = 1.0;
                out[1..=*dim].copy_from_slice(&x[..*dim]);
            }
            Setting::LaplaceGaussian { .. } => {
                out[0] = 1.0;
                out[1] = x[0].abs();
                out[2] = x[0] * x[0];
            }
            Setting::Gaussian2 { .. } => {
                out[0] = 1.0;
                out[1] = x[0];
                out[2] = x[0] * x[0];
            }
            Setting::TwoGaussianClassify { .. } => {
                out[0] = 1.0;
                out[1] = x[0];
                out[2] = x[1];
                out[3] = x[0] * x[0];
                out[4] = x[1] * x[1];
                out[5] = x[0] * x[1];
            }
        }
    }

    pub fn features(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.psi_dim()];
        self.features_into(x, &mut out);
        DVector::from_vec(out)
    }

    /// `∇ₓφ(x)` as a `psi_dim × data_dim` matrix; row k is the gradient of the
    /// k-th feature. The intercept row is identically zero.
    pub fn feature_grad_x(&self, x: &[f64]) -> DMatrix<f64> {
        let (p, d) = (self.psi_dim(), self.data_dim());
        let mut g = DMatrix::zeros(p, d);
        match self {
            Setting::GaussianMean { dim, .. } => {
                for i in 0..*dim {
                    g[(i + 1, i)] = 1.0;
                }
            }
            Setting::LaplaceGaussian { .. } => {
                g[(1, 0)] = x[0].signum() * f64::from(x[0] != 0.0);
                g[(2, 0)] = 2.0 * x[0];
            }
            Setting::Gaussian2 { .. } => {
                g[(1, 0)] = 1.0;
                g[(2, 0)] = 2.0 * x[0];
            }
            Setting::TwoGaussianClassify { .. } => {
                g[(1, 0)] = 1.0;
                g[(2, 1)] = 1.0;
                g[(3, 0)] = 2.0 * x[0];
                g[(4, 1)] = 2.0 * x[1];
                g[(5, 0)] = x[1];
                g[(5, 1)] = x[0];
            }
        }
        g
    }

    /// `∇ₓD_ψ(x) = (∇ₓφ)ᵀψ`, written into `out` (`data_dim` entries).
    pub fn disc_grad_x_into(&self, psi: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            Setting::GaussianMean { dim, .. } => {
                out[..*dim].copy_from_slice(&psi[1..=*dim]);
            }
            Setting::LaplaceGaussian { .. } => {
                let sgn = x[0].signum() * f64::from(x[0] != 0.0);
                out[0] = psi[1] * sgn + 2.0 * psi[2] * x[0];
            }
            Setting::Gaussian2 { .. } => {
                out[0] = psi[1] + 2.0 * psi[2] * x[0];
            }
            Setting::TwoGaussianClassify { .. } => {
                out[0] = psi[1] + 2.0 * psi[3] * x[0] + psi[5] * x[1];
                out[1] = psi[2] + 2.0 * psi[4] * x[1] + psi[5] * x[0];
            }
        }
    }

    /// Generator map `G_θ(z)` written into `out`.
    pub fn generate_into(&self, theta: &[f64], z: &[f64], out: &mut [f64]) {
        match self {
            Setting::GaussianMean { dim, .. } => {
                for i in 0..*dim {
                    out[i] = theta[i] + z[i];
                }
            }
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                out[0] = theta[0] * z[0];
            }
            Setting::TwoGaussianClassify { mu2, sigma2_sq, .. } => {
                let s = sigma2_sq.sqrt();
                out[0] = mu2 + s * z[0];
                out[1] = mu2 + s * z[1];
            }
        }
    }

    /// Jacobian `∇_θG_θ(z)` as a `data_dim × theta_dim` matrix.
    pub fn jacobian(&self, _theta: &[f64], z: &[f64]) -> DMatrix<f64> {
        match self {
            Setting::GaussianMean { dim, .. } => DMatrix::identity(*dim, *dim),
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                DMatrix::from_element(1, 1, z[0])
            }
            Setting::TwoGaussianClassify { .. } => DMatrix::zeros(2, 0),
        }
    }

    /// `∇_θG_θ(z)ᵀ v` without materializing the Jacobian; `out` has
    /// `theta_dim` entries.
    pub fn jacobian_t_apply(&self, _theta: &[f64], z: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Setting::GaussianMean { dim, .. } => out[..*dim].copy_from_slice(&v[..*dim]),
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                out[0] = z[0] * v[0];
            }
            Setting::TwoGaussianClassify { .. } => {}
        }
    }

    /// Fisher score `S(θ; x) = ∇_θ ln p_θ(x)`.
    pub fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        match self {
            Setting::GaussianMean { dim, .. } => {
                DVector::from_iterator(*dim, (0..*dim).map(|i| x[i] - theta[i]))
            }
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                let t = theta[0];
                DVector::from_element(1, -1.0 / t + x[0] * x[0] / (t * t * t))
            }
            Setting::TwoGaussianClassify { .. } => DVector::zeros(0),
        }
    }

    /// `∇ₓS(θ; x)` as a `theta_dim × data_dim` matrix.
    pub fn score_grad_x(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64> {
        match self {
            Setting::GaussianMean { dim, .. } => DMatrix::identity(*dim, *dim),
            Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
                let t = theta[0];
                DMatrix::from_element(1, 1, 2.0 * x[0] / (t * t * t))
            }
            Setting::TwoGaussianClassify { .. } => DMatrix::zeros(0, 2),
        }
    }

    /// n i.i.d. draws from the true density `p_*`.
    ///
    /// Laplace draws use the inverse CDF `sign(U−½)·b·ln(1−2|U−½|)` so the
    /// stream is identical on every platform given the same RNG.
    pub fn sample_real<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        let dim = self.data_dim();
        let mut data = Vec::with_capacity(n * dim);
        match self {
            Setting::GaussianMean { dim, mu0 } => {
                for _ in 0..n {
                    for i in 0..*dim {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(mu0[i] + z);
                    }
                }
            }
            Setting::LaplaceGaussian { b } => {
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let t = (1.0 - 2.0 * (u - 0.5).abs()).max(f64::MIN_POSITIVE);
                    data.push((u - 0.5).signum() * b * t.ln());
                }
            }
            Setting::Gaussian2 { mu0, sigma0 } => {
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    data.push(mu0 + sigma0 * z);
                }
            }
            Setting::TwoGaussianClassify { sigma1_sq, .. } => {
                let s = sigma1_sq.sqrt();
                for _ in 0..n {
                    let z0: f64 = rng.sample(StandardNormal);
                    let z1: f64 = rng.sample(StandardNormal);
                    data.push(s * z0);
                    data.push(s * z1);
                }
            }
        }
        Sample::new(data, dim)
    }

    /// m i.i.d. standard-normal latent draws.
    pub fn sample_latent<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Sample {
        let dim = self.latent_dim();
        let mut data = Vec::with_capacity(m * dim);
        for _ in 0..m * dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z);
        }
        Sample::new(data, dim)
    }

    /// Push the latent sample through `G_θ`.
    pub fn generate_sample(&self, theta: &[f64], z: &Sample) -> Sample {
        let dim = self.data_dim();
        let mut data = vec![0.0; z.len() * dim];
        for (i, zi) in z.rows().enumerate() {
            self.generate_into(theta, zi, &mut data[i * dim..(i + 1) * dim]);
        }
        Sample::new(data, dim)
    }

    /// Coefficients `ψ*(θ)` with `D_{ψ*}(x) = ln(p_*(x)/p_θ(x))` exactly.
    pub fn optimal_psi(&self, theta: &[f64]) -> DVector<f64> {
        match self {
            Setting::GaussianMean { dim, mu0 } => {
                let tt: f64 = theta.iter().map(|t| t * t).sum();
                let mm: f64 = mu0.iter().map(|m| m * m).sum();
                let mut psi = Vec::with_capacity(dim + 1);
                psi.push(0.5 * (tt - mm));
                for i in 0..*dim {
                    psi.push(mu0[i] - theta[i]);
                }
                DVector::from_vec(psi)
            }
            Setting::LaplaceGaussian { b } => {
                let t = theta[0];
                DVector::from_vec(vec![
                    ((2.0 * std::f64::consts::PI).sqrt() * t / (2.0 * b)).ln(),
                    -1.0 / b,
                    0.5 / (t * t),
                ])
            }
            Setting::Gaussian2 { mu0, sigma0 } => {
                let t = theta[0];
                let s2 = sigma0 * sigma0;
                DVector::from_vec(vec![
                    (t / sigma0).ln() - 0.5 * mu0 * mu0 / s2,
                    mu0 / s2,
                    0.5 * (1.0 / (t * t) - 1.0 / s2),
                ])
            }
            Setting::TwoGaussianClassify { mu2, sigma1_sq, sigma2_sq } => {
                let lin = -mu2 / sigma2_sq;
                let quad = 0.5 * (1.0 / sigma2_sq - 1.0 / sigma1_sq);
                DVector::from_vec(vec![
                    (sigma2_sq / sigma1_sq).ln() + mu2 * mu2 / sigma2_sq,
                    lin,
                    lin,
                    quad,
                    quad,
                    0.0,
                ])
            }
        }
    }

    /// Truncation window for x-integrals: the hull of the effective supports of
    /// `p_*` and `p_θ` (per coordinate).
    pub fn integration_domain(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        let laplace_radius = |b: f64| b * (1.0 / TAIL_EPS).ln();
        match self {
            Setting::GaussianMean { dim, mu0 } => (0..*dim)
                .map(|i| {
                    let lo = (mu0[i] - GAUSS_RADIUS).min(theta[i] - GAUSS_RADIUS);
                    let hi = (mu0[i] + GAUSS_RADIUS).max(theta[i] + GAUSS_RADIUS);
                    (lo, hi)
                })
                .collect(),
            Setting::LaplaceGaussian { b } => {
                let r = laplace_radius(*b).max(GAUSS_RADIUS * theta[0]);
                vec![(-r, r)]
            }
            Setting::Gaussian2 { mu0, sigma0 } => {
                let lo = (mu0 - GAUSS_RADIUS * sigma0).min(-GAUSS_RADIUS * theta[0]);
                let hi = (mu0 + GAUSS_RADIUS * sigma0).max(GAUSS_RADIUS * theta[0]);
                vec![(lo, hi)]
            }
            Setting::TwoGaussianClassify { mu2, sigma1_sq, sigma2_sq } => {
                let s1 = sigma1_sq.sqrt();
                let s2 = sigma2_sq.sqrt();
                let lo = (-GAUSS_RADIUS * s1).min(mu2 - GAUSS_RADIUS * s2);
                let hi = (GAUSS_RADIUS * s1).max(mu2 + GAUSS_RADIUS * s2);
                vec![(lo, hi), (lo, hi)]
            }
        }
    }

    /// Truncation window for latent (standard normal) integrals.
    pub fn latent_domain(&self) -> (f64, f64) {
        (-GAUSS_RADIUS, GAUSS_RADIUS)
    }
}

/// Pointwise integrand `p·f(q/p)` evaluated stably from log-densities.
pub fn fdiv_integrand(div: FDivergence, lp: f64, lq: f64) -> f64 {
    match div {
        FDivergence::Kl => lp.exp() * (lp - lq),
        FDivergence::RevKl => lq.exp() * (lq - lp),
        FDivergence::Js2 => {
            let m = lp.max(lq);
            let s = m + ((lp - m).exp() + (lq - m).exp()).ln();
            lp.exp() * lp + lq.exp() * lq - s.exp() * (s - std::f64::consts::LN_2)
        }
        FDivergence::H2 => {
            let d = (0.5 * lq).exp() - (0.5 * lp).exp();
            d * d
        }
    }
}

/// Quadrature evaluation of the objective `L(θ) = D_f(p_*, p_θ)` for
/// one-dimensional-θ settings.
pub fn fdiv_objective(setting: &Setting, div: FDivergence, theta: f64) -> f64 {
    let th = [theta];
    let (a, b) = setting.integration_domain(&th)[0];
    let f = |x: f64| {
        let xs = [x];
        fdiv_integrand(div, setting.log_p_star(&xs), setting.log_p_theta(&th, &xs))
    };
    quadrature::integrate(&f, a, b).value[0]
}

/// Minimizer of the quadrature-evaluated `D_f(p_*, p_θ)` over the parameter box.
///
/// 1-D settings go through a log-spaced profile scan, golden-section refinement
/// to [`THETA_STAR_TOL`], and a final three-point parabolic polish. The
/// Gaussian-mean family is well-specified, so its minimizer is `μ0` exactly.
pub fn theta_star(setting: &Setting, div: FDivergence) -> Result<DVector<f64>, ModelError> {
    match setting {
        Setting::GaussianMean { mu0, .. } => Ok(mu0.clone()),
        Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
            let (lo, hi) = setting.theta_box()[0];
            let obj = |t: f64| fdiv_objective(setting, div, t);
            let t = minimize_1d(&obj, lo, hi)?;
            Ok(DVector::from_element(1, t))
        }
        Setting::TwoGaussianClassify { .. } => Err(ModelError::Unsupported {
            setting: setting.name().into(),
            operation: "theta_star (no trainable generator parameter)".into(),
        }),
    }
}

/// Profile scan + golden section + parabolic polish on `[lo, hi]`.
fn minimize_1d<F: Fn(f64) -> f64>(obj: &F, lo: f64, hi: f64) -> Result<f64, ModelError> {
    const GRID: usize = 81;
    let llo = lo.ln();
    let lhi = hi.ln();
    let grid: Vec<f64> =
        (0..GRID).map(|i| (llo + (lhi - llo) * i as f64 / (GRID - 1) as f64).exp()).collect();
    let profile: Vec<(f64, f64)> = grid.iter().map(|&t| (t, obj(t))).collect();
    let (imin, _) = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .unwrap();
    if imin == 0 || imin == GRID - 1 {
        return Err(ModelError::Optimization {
            message: format!(
                "no interior bracket: profile minimum at boundary θ={:.6}",
                profile[imin].0
            ),
            profile,
        });
    }

    // Golden-section on the bracketing triple.
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[imin - 1], grid[imin + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while (b - a) > THETA_STAR_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    let mut t = 0.5 * (a + b);

    // Parabolic polish: a wider stencil keeps quadrature noise out of the vertex.
    let h = 1e-4;
    let (fm, f0, fp) = (obj(t - h), obj(t), obj(t + h));
    let denom = fm - 2.0 * f0 + fp;
    if denom > 0.0 {
        let step = 0.5 * h * (fm - fp) / denom;
        if step.abs() < h {
            t += step;
        }
    }
    Ok(t.clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::ALL_DIVERGENCES;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_settings() -> Vec<Setting> {
        vec![
            Setting::gaussian_mean(1, DVector::from_element(1, 1.0)).unwrap(),
            Setting::laplace_gaussian(1.5).unwrap(),
            Setting::gaussian2(1.0, 1.0).unwrap(),
            Setting::two_gaussian(0.3, 0.1, 0.05).unwrap(),
        ]
    }

    #[test]
    fn constructors_validate() {
        assert!(Setting::laplace_gaussian(0.0).is_err());
        assert!(Setting::gaussian2(0.0, -1.0).is_err());
        assert!(Setting::two_gaussian(0.3, 0.1, 0.1).is_err());
        assert!(Setting::gaussian_mean(2, DVector::from_element(1, 0.0)).is_err());
    }

    #[test]
    fn optimal_psi_gaussian_mean_example() {
        let s = Setting::gaussian_mean(1, DVector::from_element(1, 1.0)).unwrap();
        let psi = s.optimal_psi(&[0.5]);
        assert!((psi[0] - (-0.375)).abs() < 1e-15);
        assert!((psi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimal_psi_two_gaussian_example() {
        let s = Setting::two_gaussian(0.3, 0.1, 0.05).unwrap();
        let psi = s.optimal_psi(&[]);
        let expect = [1.1068528194400546, -6.0, -6.0, 5.0, 5.0, 0.0];
        for (a, b) in psi.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn optimal_psi_gaussian2_example() {
        let s = Setting::gaussian2(1.0, 1.0).unwrap();
        let psi = s.optimal_psi(&[1.0]);
        assert!((psi[0] - (-0.5)).abs() < 1e-15);
        assert!((psi[1] - 1.0).abs() < 1e-15);
        assert!(psi[2].abs() < 1e-15);
    }

    #[test]
    fn psi_star_is_the_exact_log_ratio() {
        // exp(D_ψ*(x))·p_θ(x) must integrate to 1: ψ* encodes ln(p_*/p_θ).
        for setting in all_settings() {
            let thetas: Vec<Vec<f64>> = match setting.theta_dim() {
                0 => vec![vec![]],
                _ => (0..20).map(|i| vec![0.4 + 0.15 * i as f64]).collect(),
            };
            for th in thetas {
                let psi = setting.optimal_psi(&th);
                let dim = setting.data_dim();
                let dom = setting.integration_domain(&th);
                let mut feat = vec![0.0; setting.psi_dim()];
                if dim == 1 {
                    let f = |x: f64| {
                        let xs = [x];
                        let mut buf = [0.0; 8];
                        setting.features_into(&xs, &mut buf[..setting.psi_dim()]);
                        let d: f64 =
                            psi.iter().zip(&buf[..setting.psi_dim()]).map(|(p, f)| p * f).sum();
                        (d + setting.log_p_theta(&th, &xs)).exp()
                    };
                    let mass = quadrature::integrate(&f, dom[0].0, dom[0].1).value[0];
                    assert!((mass - 1.0).abs() < 1e-8, "{setting} θ={th:?} mass={mass}");
                } else if matches!(setting, Setting::TwoGaussianClassify { .. }) {
                    let f = |x: f64, y: f64, out: &mut [f64]| {
                        let xs = [x, y];
                        let mut buf = [0.0; 6];
                        setting.features_into(&xs, &mut buf);
                        let d: f64 = psi.iter().zip(&buf).map(|(p, f)| p * f).sum();
                        out[0] = (d + setting.log_p_theta(&th, &xs)).exp();
                    };
                    let mass = quadrature::integrate2_vec(1, &f, dom[0], dom[1], 1e-12).value[0];
                    assert!((mass - 1.0).abs() < 1e-8, "{setting} mass={mass}");
                }
                let _ = &mut feat;
            }
        }
    }

    #[test]
    fn jacobian_and_score_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for setting in all_settings() {
            if setting.theta_dim() == 0 {
                continue;
            }
            for _ in 0..20 {
                let td = setting.theta_dim();
                let theta: Vec<f64> = (0..td).map(|_| rng.random_range(0.5..2.0)).collect();
                let z: Vec<f64> =
                    (0..setting.latent_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
                let jac = setting.jacobian(&theta, &z);
                let h = 1e-6;
                let dd = setting.data_dim();
                for j in 0..td {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    let mut gp = vec![0.0; dd];
                    let mut gm = vec![0.0; dd];
                    setting.generate_into(&tp, &z, &mut gp);
                    setting.generate_into(&tm, &z, &mut gm);
                    for i in 0..dd {
                        let fd = (gp[i] - gm[i]) / (2.0 * h);
                        let rel = (jac[(i, j)] - fd).abs() / fd.abs().max(1.0);
                        assert!(rel <= 1e-6, "{setting} jac[{i},{j}]");
                    }
                }
                // score = ∇_θ ln p_θ at a generated point
                let mut x = vec![0.0; dd];
                setting.generate_into(&theta, &z, &mut x);
                let score = setting.score(&theta, &x);
                for j in 0..td {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    let fd =
                        (setting.log_p_theta(&tp, &x) - setting.log_p_theta(&tm, &x)) / (2.0 * h);
                    let rel = (score[j] - fd).abs() / fd.abs().max(1.0);
                    assert!(rel <= 1e-6, "{setting} score[{j}]");
                }
            }
        }
    }

    #[test]
    fn feature_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for setting in all_settings() {
            for _ in 0..20 {
                let dd = setting.data_dim();
                let x: Vec<f64> = (0..dd)
                    .map(|_| {
                        // keep |x| smooth for the Laplace |x| feature
                        let v: f64 = rng.random_range(0.2..2.0);
                        if rng.random::<bool>() {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                let g = setting.feature_grad_x(&x);
                let p = setting.psi_dim();
                let h = 1e-6;
                for j in 0..dd {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let mut fp = vec![0.0; p];
                    let mut fm = vec![0.0; p];
                    setting.features_into(&xp, &mut fp);
                    setting.features_into(&xm, &mut fm);
                    for k in 0..p {
                        let fd = (fp[k] - fm[k]) / (2.0 * h);
                        assert!(
                            (g[(k, j)] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                            "{setting} feat[{k},{j}]"
                        );
                    }
                }
                // intercept row is identically zero
                for j in 0..dd {
                    assert_eq!(g[(0, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let g2 = Setting::gaussian2(1.0, 1.0).unwrap();
        let s = g2.sample_real(1_000_000, &mut rng);
        let mean: f64 = s.data.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean={mean}");

        let lap = Setting::laplace_gaussian(1.5).unwrap();
        let s = lap.sample_real(1_000_000, &mut rng);
        let mean_abs: f64 = s.data.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64;
        assert!((mean_abs - 1.5).abs() < 0.01, "E|X|={mean_abs}");

        let tg = Setting::two_gaussian(0.3, 0.1, 0.05).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(41);
        let z = tg.sample_latent(1_000_000, &mut rng2);
        let fake = tg.generate_sample(&[], &z);
        let n = fake.len() as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for r in fake.rows() {
            m0 += r[0];
            m1 += r[1];
        }
        m0 /= n;
        m1 /= n;
        let (mut c00, mut c11, mut c01) = (0.0, 0.0, 0.0);
        for r in fake.rows() {
            c00 += (r[0] - m0) * (r[0] - m0);
            c11 += (r[1] - m1) * (r[1] - m1);
            c01 += (r[0] - m0) * (r[1] - m1);
        }
        c00 /= n - 1.0;
        c11 /= n - 1.0;
        c01 /= n - 1.0;
        assert!((c00 - 0.05).abs() < 0.0005 && (c11 - 0.05).abs() < 0.0005);
        assert!(c01.abs() < 0.0005);
        assert!((m0 - 0.3).abs() < 0.001 && (m1 - 0.3).abs() < 0.001);
    }

    #[test]
    fn theta_star_closed_forms() {
        let g2 = Setting::gaussian2(1.0, 1.0).unwrap();
        let t_rkl = theta_star(&g2, FDivergence::RevKl).unwrap()[0];
        assert!((t_rkl - 1.0).abs() < 1e-6, "revkl θ*={t_rkl}");
        let t_kl = theta_star(&g2, FDivergence::Kl).unwrap()[0];
        assert!((t_kl - 2.0_f64.sqrt()).abs() < 1e-6, "kl θ*={t_kl}");

        let lap = Setting::laplace_gaussian(1.5).unwrap();
        let t_kl = theta_star(&lap, FDivergence::Kl).unwrap()[0];
        assert!((t_kl - 1.5 * 2.0_f64.sqrt()).abs() < 1e-6, "lap kl θ*={t_kl}");
    }

    #[test]
    fn theta_star_matches_grid_search_oracle() {
        // Independent oracle: dense grid over the quadrature objective.
        let lap = Setting::laplace_gaussian(1.5).unwrap();
        for div in ALL_DIVERGENCES {
            let fine = theta_star(&lap, div).unwrap()[0];
            let mut best = (f64::INFINITY, 0.0);
            let mut t = 0.5;
            while t < 5.0 {
                let v = fdiv_objective(&lap, div, t);
                if v < best.0 {
                    best = (v, t);
                }
                t += 1e-3;
            }
            assert!((fine - best.1).abs() < 2e-3, "{div}: golden={fine} grid={}", best.1);
        }
    }

    #[test]
    fn js_theta_star_sits_between_revkl_and_kl() {
        let g2 = Setting::gaussian2(1.0, 1.0).unwrap();
        let t_js = theta_star(&g2, FDivergence::Js2).unwrap()[0];
        let t_rkl = theta_star(&g2, FDivergence::RevKl).unwrap()[0];
        let t_kl = theta_star(&g2, FDivergence::Kl).unwrap()[0];
        assert!(t_rkl < t_js && t_js < t_kl, "rkl={t_rkl} js={t_js} kl={t_kl}");
    }

    #[test]
    fn gaussian_mean_generator_identities() {
        let s = Setting::gaussian_mean(3, DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        let jac = s.jacobian(&[0.0, 0.0, 0.0], &[0.1, 0.2, 0.3]);
        assert_eq!(jac, DMatrix::identity(3, 3));
        let score = s.score(&[1.0, 1.0, 1.0], &[2.0, 0.0, 1.5]);
        assert_eq!(score, DVector::from_vec(vec![1.0, -1.0, 0.5]));
    }

    #[test]
    fn clip_keeps_iterates_in_box() {
        let lap = Setting::laplace_gaussian(1.5).unwrap();
        let mut th = DVector::from_element(1, -3.0);
        lap.clip_theta(&mut th);
        assert_eq!(th[0], 0.1);
        let mut th = DVector::from_element(1, 2e3);
        lap.clip_theta(&mut th);
        assert_eq!(th[0], 1e3);
    }
}
