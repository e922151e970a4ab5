//! f-divergence generative estimation with parametric generators and
//! discriminators.
//!
//! The crate implements the AGE estimator (approximate gradient descent with a
//! logistic-regression discriminator), the classic f-GAN minimax estimator,
//! a local GAN built on Fisher-score discriminators, and closed-form MLE
//! baselines, over a set of analytically tractable experimental settings.
//! A quadrature oracle evaluates every closed-form asymptotic covariance
//! (discriminator sandwich variances, generator variances with their
//! covariance cross-terms, Fisher information), and a Monte-Carlo harness
//! reproduces the simulation tables and checks empirical variances against
//! the oracle.
//!
//! Modules mirror the pipeline: [`divergence`] (the four f-divergences and
//! their minimax losses), [`model`] (settings), [`disc_fit`] (Newton
//! discriminator fitting), [`grad_estimator`] (plug-in generator gradients),
//! [`train`] (training loops), [`asymptotics`] (quadrature oracle),
//! [`montecarlo`] (repetition harness), and [`verify`] (cross-module
//! invariant suite).

pub mod asymptotics;
pub mod disc_fit;
pub mod divergence;
pub mod grad_estimator;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod train;
pub mod verify;

pub use divergence::FDivergence;
pub use model::{Sample, Setting};
