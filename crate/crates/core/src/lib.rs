//! Granger-causality structure learned by a single jointly trained neural
//! predictor.
//!
//! A dropout-regularized MLP is fit to predict every channel of a
//! multivariate series from its past `K` lags. Afterwards, for each ordered
//! channel pair `(i, j)`, Monte-Carlo dropout passes with and without the
//! past of `i` give two distributions of prediction error for `j`; a
//! logistic classifier measures how far apart they are and turns that into a
//! score for `i -> j`.
//!
//! The numeric core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`). The aliases at the bottom of this file fix the
//! common `f64` instantiation.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod extract;
pub mod generators;
pub mod mlp;
pub mod scalar;
pub mod svg;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Series = data::MultivariateSeries<f64>;
pub type Series32 = data::MultivariateSeries<f32>;
pub type Dataset = data::LaggedDataset<f64>;
pub type Dataset32 = data::LaggedDataset<f32>;
pub type Mlp = mlp::MlpRegressor<f64>;
pub type Mlp32 = mlp::MlpRegressor<f32>;
pub type ScoreMatrix = extract::GcScoreMatrix<f64>;
pub type ScoreMatrix32 = extract::GcScoreMatrix<f32>;
pub type Residuals = extract::ResidualPair<f64>;
