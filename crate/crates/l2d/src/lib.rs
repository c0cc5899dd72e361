//! Learning to defer: surrogate losses, deferral model training, and
//! numerical certification of their consistency properties.
//!
//! A deferral predictor scores `n` classes plus one extra deferral action;
//! deferring hands the decision to a fixed expert at a per-example cost in
//! [0, 1]. This crate provides:
//!
//! - the deferral (target) loss and the RL2D surrogate family, a
//!   cost-weighted mixture of comp-sum and modified comp-sum losses
//!   parameterized by a non-increasing transform (log, generalized
//!   cross-entropy, or mean absolute error), with analytic gradients
//!   ([`losses`]);
//! - four baseline surrogates: cross-entropy, one-vs-all, the realizable
//!   surrogate, and the general-cost baseline ([`losses`]);
//! - conditional-error machinery certifying the consistency bounds
//!   numerically: closed-form deferral regret, approximate best-in-class
//!   surrogate error with an independent grid-search cross-check, and the
//!   concave transforms relating the regrets ([`condcheck`]);
//! - a deterministic trainer for linear (and one-hidden-layer) deferral
//!   models with validation-based model selection ([`train`]);
//! - a synthetic realizable dataset generator with a zero-loss linear
//!   witness, plus CSV ingestion ([`data`]);
//! - evaluation metrics and randomized verification suites
//!   ([`metrics`], [`verify`]).

pub mod condcheck;
pub mod core;
pub mod data;
mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod train;
pub mod verify;

pub use self::core::{predict, AugmentedScores, CondInstance, CostContext, CostSpec, Prediction, PsiSpec};
pub use self::error::{Error, Result};
pub use self::losses::LossKind;
pub use self::model::{DeferralModel, LinearDeferralModel};
