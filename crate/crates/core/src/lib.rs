//! Measurement and prediction toolkit for data-limited scaling of
//! autoregressive language models: tokenization, lagged token covariances,
//! power-law fitting, closed-form scaling predictions, curve collapse and
//! synthetic-language generators.
//!
//! Numerical code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod collapse;
pub mod covstats;
pub mod fitkit;
pub mod linalg;
pub mod pipeline;

pub mod scalar;
pub mod synthlang;
pub mod theory;
pub mod tokenizer;

pub use scalar::Scalar;

pub type PowerLawFit64 = fitkit::PowerLawFit<f64>;
pub type AsymptoteFit64 = fitkit::AsymptoteFit<f64>;
pub type BrokenPowerLawFit64 = fitkit::BrokenPowerLawFit<f64>;
pub type CovarianceOperator64 = covstats::CovarianceOperator<f64>;
pub type LagCovarianceSummary64 = covstats::LagCovarianceSummary<f64>;
pub type HorizonReport64 = covstats::HorizonReport<f64>;
pub type LanguageExponents64 = theory::LanguageExponents<f64>;
pub type AnsatzSpec64 = theory::AnsatzSpec<f64>;
pub type LossCurveSet64 = theory::LossCurveSet<f64>;
pub type CollapseReport64 = collapse::CollapseReport<f64>;
