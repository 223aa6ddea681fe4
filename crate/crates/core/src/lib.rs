//! Streaming nonparametric deconvolution with Newton's recursive estimator.
//!
//! Observations `y = x + z` arrive one at a time, where `x` follows an unknown mixture of
//! Gaussian kernels over a finite parameter grid and `z` is independent noise with a
//! known Laplace or Gaussian law. The estimator keeps only the current mixing pmf and
//! updates it in O(K) per observation.

pub mod calibrate;
pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod error;
pub mod input;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod synth;
pub mod uncertainty;

pub use engine::{bayes_reweight, KernelRecursion, EstimatorState, LearningRateSchedule};
pub use error::{Error, Result};
pub use model::{
    kernel_pdf, kernel_pdf_deriv, mixture_pdf, EvalGrid, GridSpec, MixingPmf, ParameterGrid,
    ThetaAtom,
};
pub use noise::{convolved_kernel_pdf, noise_pdf, noise_sample, NoiseFamily, NoiseModel};
pub use rng::StreamRng;
pub use uncertainty::{
    band_constant, credible_band, credible_interval, credible_intervals, psi_n, psi_table,
    sigma_n, variance_vn, BandPoint, BandResult, CredibleBand, IntervalResult, ProbeSpec,
    PsiTable, QuadratureSpec,
};
pub use calibrate::{calibrate_gamma, CalibrationConfig, CalibrationResult, GammaScore};
pub use synth::{generate_stream, MixturePreset, Observation, PresetName};
pub use config::{ColumnSel, RunConfig};
pub use input::{parse_observations, Observations};
