//! Training procedures: AGE, f-GAN, local GAN, and closed-form MLE baselines.
//!
//! All three iterative methods are instances of approximate gradient descent:
//! draw the real sample and latent sample once, then for t = 0..T fit a
//! discriminator at θ_t, estimate the gradient, record ‖h_t‖, and step with
//! projection onto the parameter box. The returned estimate is the iterate
//! with the smallest recorded gradient norm over t = 1..T (ties to the
//! smallest t), computed right after the fit at θ_t and before the step.
//!
//! The one-sample scheme reuses the same latent draws for the discriminator
//! fit and the generator step; the two-sample scheme steps with an independent,
//! equally sized latent sample, which zeroes the covariance cross-term in the
//! asymptotic variance.
//!
//! Runs are pure functions of their seed: identical configurations produce
//! bit-identical results regardless of the harness thread count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::disc_fit::{
    self, feature_matrix, fit_fgan_features, fit_logistic_features, FeatureMatrix, FitError,
};
use crate::divergence::FDivergence;
use crate::grad_estimator::{h_estimate, h_estimate_score, GradError};
use crate::model::{ModelError, Setting};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("discriminator failed at iteration {t}: {source}")]
    DiscriminatorFailure { t: usize, source: FitError },
    #[error("gradient estimation failed at iteration {t}: {source}")]
    Gradient { t: usize, source: GradError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Latent-sample handling for the generator step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    OneSample,
    TwoSample,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::OneSample => "one-sample",
            Scheme::TwoSample => "two-sample",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "one-sample" | "one" | "onesample" => Some(Scheme::OneSample),
            "two-sample" | "two" | "twosample" => Some(Scheme::TwoSample),
            _ => None,
        }
    }
}

/// Meta-parameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Iteration horizon T; the loop runs t = 0..=T.
    pub t_steps: usize,
    /// Learning rate η.
    pub eta: f64,
    pub theta0: DVector<f64>,
    pub scheme: Scheme,
    /// Ratio m/n of generated to real sample sizes; weights the logistic loss.
    pub lambda: f64,
    pub n: usize,
    pub seed: u64,
    /// Initialize each discriminator fit at the previous iteration's solution.
    /// Off by default so every fit is independent of trajectory history; the
    /// fitted minimizer agrees with a cold start to the gradient tolerance.
    pub warm_start: bool,
}

impl TrainConfig {
    pub fn new(setting: &Setting, n: usize, lambda: f64, seed: u64) -> Self {
        TrainConfig {
            t_steps: default_t_steps(),
            eta: default_eta(setting),
            theta0: default_theta0(setting),
            scheme: Scheme::OneSample,
            lambda,
            n,
            seed,
            warm_start: false,
        }
    }

    pub fn validate(&self, setting: &Setting) -> Result<(), TrainError> {
        if self.t_steps < 1 {
            return Err(TrainError::InvalidConfig("T must be ≥ 1".into()));
        }
        if !(self.eta > 0.0) && self.eta != 0.0 {
            return Err(TrainError::InvalidConfig(format!("eta={} must be ≥ 0", self.eta)));
        }
        if !(self.lambda >= 1.0) {
            return Err(TrainError::InvalidConfig(format!("lambda={} must be ≥ 1", self.lambda)));
        }
        if self.n < 2 {
            return Err(TrainError::InvalidConfig(format!("n={} must be ≥ 2", self.n)));
        }
        if self.theta0.len() != setting.theta_dim() {
            return Err(TrainError::InvalidConfig(format!(
                "theta0 has {} coordinates, setting {} needs {}",
                self.theta0.len(),
                setting.name(),
                setting.theta_dim()
            )));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        (self.lambda * self.n as f64).round() as usize
    }
}

/// T = 100 for every simulation.
pub fn default_t_steps() -> usize {
    100
}

/// Standard learning rates: 0.5 for the scale-family settings, 1 for the
/// Gaussian-mean setting.
pub fn default_eta(setting: &Setting) -> f64 {
    match setting {
        Setting::GaussianMean { .. } => 1.0,
        _ => 0.5,
    }
}

/// Standard initial parameters: 0.1 for Laplace-Gaussian, 0.5 otherwise.
pub fn default_theta0(setting: &Setting) -> DVector<f64> {
    match setting {
        Setting::GaussianMean { dim, .. } => DVector::from_element(*dim, 0.5),
        Setting::LaplaceGaussian { .. } => DVector::from_element(1, 0.1),
        Setting::Gaussian2 { .. } => DVector::from_element(1, 0.5),
        Setting::TwoGaussianClassify { .. } => DVector::zeros(0),
    }
}

/// Trajectory of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub theta_hat: DVector<f64>,
    /// θ_0..θ_T.
    pub theta_path: Vec<DVector<f64>>,
    /// ‖h_t‖ recorded at θ_t before the step, t = 0..T.
    pub h_norm_path: Vec<f64>,
    /// Index of the returned iterate; minimal ‖h_t‖ over t = 1..T, ties to the
    /// smallest t (θ_0 is recorded but not eligible).
    pub selected_t: usize,
    /// Per-iteration discriminator convergence flags.
    pub disc_converged: Vec<bool>,
}

fn select_min_norm(h_norms: &[f64]) -> usize {
    let mut best = 1;
    for t in 1..h_norms.len() {
        if h_norms[t] < h_norms[best] {
            best = t;
        }
    }
    best
}

enum DiscLoss {
    Logistic { lambda: f64 },
    Fgan(FDivergence),
}

fn adversarial_run(
    setting: &Setting,
    div: FDivergence,
    cfg: &TrainConfig,
    loss: DiscLoss,
) -> Result<RunResult, TrainError> {
    cfg.validate(setting)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let real = setting.sample_real(cfg.n, &mut rng);
    let m = cfg.m();
    let z_fit = setting.sample_latent(m, &mut rng);
    let z_step = match cfg.scheme {
        Scheme::OneSample => None,
        Scheme::TwoSample => Some(setting.sample_latent(m, &mut rng)),
    };

    let real_feats = feature_matrix(setting, &real);
    let mut theta = cfg.theta0.clone();
    setting.clip_theta(&mut theta);

    let mut theta_path = Vec::with_capacity(cfg.t_steps + 1);
    let mut h_norms = Vec::with_capacity(cfg.t_steps + 1);
    let mut disc_converged = Vec::with_capacity(cfg.t_steps + 1);
    let mut warm: Option<DVector<f64>> = None;

    for t in 0..=cfg.t_steps {
        let fakes = setting.generate_sample(theta.as_slice(), &z_fit);
        let fake_feats = feature_matrix(setting, &fakes);
        let fit = match &loss {
            DiscLoss::Logistic { lambda } => {
                fit_logistic_features(&real_feats, &fake_feats, *lambda, warm.as_ref())
            }
            DiscLoss::Fgan(d) => fit_fgan_features(*d, &real_feats, &fake_feats, warm.as_ref()),
        }
        .map_err(|source| TrainError::DiscriminatorFailure { t, source })?;
        if cfg.warm_start {
            warm = Some(fit.psi_hat.clone());
        }

        let step_batch = z_step.as_ref().unwrap_or(&z_fit);
        let est = h_estimate(div, setting, theta.as_slice(), fit.psi_hat.as_slice(), step_batch)
            .map_err(|source| TrainError::Gradient { t, source })?;

        theta_path.push(theta.clone());
        h_norms.push(est.h.norm());
        disc_converged.push(fit.converged);

        if t < cfg.t_steps {
            theta -= cfg.eta * &est.h;
            setting.clip_theta(&mut theta);
        }
    }

    let selected_t = select_min_norm(&h_norms);
    Ok(RunResult {
        theta_hat: theta_path[selected_t].clone(),
        theta_path,
        h_norm_path: h_norms,
        selected_t,
        disc_converged,
    })
}

/// AGE: logistic-regression discriminator with λ weighting, plug-in gradient.
pub fn run_age(
    setting: &Setting,
    div: FDivergence,
    cfg: &TrainConfig,
) -> Result<RunResult, TrainError> {
    adversarial_run(setting, div, cfg, DiscLoss::Logistic { lambda: cfg.lambda })
}

/// f-GAN: divergence-specific discriminator loss, same generator update.
///
/// Exponent overflow failures (KL, H²) are returned as errors so the harness
/// can count them instead of averaging them in.
pub fn run_fgan(
    setting: &Setting,
    div: FDivergence,
    cfg: &TrainConfig,
) -> Result<RunResult, TrainError> {
    adversarial_run(setting, div, cfg, DiscLoss::Fgan(div))
}

/// Local GAN: logistic fit on the no-intercept linear score class
/// `D_ψ(s) = ψᵀs` with scores taken at the supplied root-n initial estimate,
/// and a generator step with reverse-KL scaling.
pub fn run_local_gan(
    setting: &Setting,
    cfg: &TrainConfig,
    theta_init: &DVector<f64>,
) -> Result<RunResult, TrainError> {
    if theta_init.len() != setting.theta_dim() {
        return Err(TrainError::InvalidConfig(format!(
            "theta_init has {} coordinates, setting {} needs {}",
            theta_init.len(),
            setting.name(),
            setting.theta_dim()
        )));
    }
    // validate against a copy whose theta0 is the local-GAN initial point
    let mut local_cfg = cfg.clone();
    local_cfg.theta0 = theta_init.clone();
    local_cfg.validate(setting)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let real = setting.sample_real(cfg.n, &mut rng);
    let m = cfg.m();
    let z_fit = setting.sample_latent(m, &mut rng);
    let z_step = match cfg.scheme {
        Scheme::OneSample => None,
        Scheme::TwoSample => Some(setting.sample_latent(m, &mut rng)),
    };

    let th_hat = theta_init.as_slice();
    let td = setting.theta_dim();
    // real scores are fixed across iterations
    let mut real_scores = Vec::with_capacity(real.len() * td);
    for x in real.rows() {
        real_scores.extend_from_slice(setting.score(th_hat, x).as_slice());
    }
    let real_feats = FeatureMatrix::new(real_scores, td);

    let mut theta = theta_init.clone();
    setting.clip_theta(&mut theta);

    let mut theta_path = Vec::with_capacity(cfg.t_steps + 1);
    let mut h_norms = Vec::with_capacity(cfg.t_steps + 1);
    let mut disc_converged = Vec::with_capacity(cfg.t_steps + 1);
    let mut warm: Option<DVector<f64>> = None;

    for t in 0..=cfg.t_steps {
        let fakes = setting.generate_sample(theta.as_slice(), &z_fit);
        let mut fake_scores = Vec::with_capacity(fakes.len() * td);
        for x in fakes.rows() {
            fake_scores.extend_from_slice(setting.score(th_hat, x).as_slice());
        }
        let fake_feats = FeatureMatrix::new(fake_scores, td);

        let fit = fit_logistic_features(&real_feats, &fake_feats, cfg.lambda, warm.as_ref())
            .map_err(|source| TrainError::DiscriminatorFailure { t, source })?;
        if cfg.warm_start {
            warm = Some(fit.psi_hat.clone());
        }

        let step_batch = z_step.as_ref().unwrap_or(&z_fit);
        let est = h_estimate_score(setting, th_hat, theta.as_slice(), fit.psi_hat.as_slice(), step_batch)
            .map_err(|source| TrainError::Gradient { t, source })?;

        theta_path.push(theta.clone());
        h_norms.push(est.h.norm());
        disc_converged.push(fit.converged);

        if t < cfg.t_steps {
            theta -= cfg.eta * &est.h;
            setting.clip_theta(&mut theta);
        }
    }

    let selected_t = select_min_norm(&h_norms);
    Ok(RunResult {
        theta_hat: theta_path[selected_t].clone(),
        theta_path,
        h_norm_path: h_norms,
        selected_t,
        disc_converged,
    })
}

/// Closed-form maximum-likelihood estimate of the model family on a fresh
/// sample from `p_*`: the sample mean for the Gaussian-mean family, and
/// `θ̂² = (1/n)Σxᵢ²` for the scale families. The result is projected onto the
/// parameter box.
pub fn run_mle(setting: &Setting, n: usize, seed: u64) -> Result<DVector<f64>, TrainError> {
    if n < 2 {
        return Err(TrainError::InvalidConfig(format!("n={n} must be ≥ 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = setting.sample_real(n, &mut rng);
    let mut theta = match setting {
        Setting::GaussianMean { dim, .. } => {
            let mut mean = DVector::zeros(*dim);
            for x in sample.rows() {
                for i in 0..*dim {
                    mean[i] += x[i];
                }
            }
            mean / n as f64
        }
        Setting::LaplaceGaussian { .. } | Setting::Gaussian2 { .. } => {
            let ms: f64 = sample.data.iter().map(|x| x * x).sum::<f64>() / n as f64;
            DVector::from_element(1, ms.sqrt())
        }
        Setting::TwoGaussianClassify { .. } => {
            return Err(TrainError::Model(ModelError::Unsupported {
                setting: setting.name().into(),
                operation: "run_mle (no generator family)".into(),
            }))
        }
    };
    setting.clip_theta(&mut theta);
    Ok(theta)
}

/// One logistic or minimax discriminator fit on fresh samples; the
/// single-shot experiment behind the discriminator-estimation tables.
pub fn run_disc_fit(
    setting: &Setting,
    method_divergence: Option<FDivergence>,
    n: usize,
    lambda: f64,
    seed: u64,
) -> Result<disc_fit::DiscriminatorFit, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = setting.sample_real(n, &mut rng);
    let m = (lambda * n as f64).round() as usize;
    let z = setting.sample_latent(m, &mut rng);
    let theta: Vec<f64> = Vec::new();
    let fake = setting.generate_sample(&theta, &z);
    let res = match method_divergence {
        None => disc_fit::fit_logistic(setting, &real, &fake, lambda),
        Some(div) => disc_fit::fit_fgan(div, setting, &real, &fake),
    };
    res.map_err(|source| TrainError::DiscriminatorFailure { t: 0, source })
}
