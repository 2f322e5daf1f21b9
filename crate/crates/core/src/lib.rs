//! Bayesian phase estimation with NOON (Schrödinger-cat) states.
//!
//! The library is generic over the floating-point scalar ([`Real`]); the
//! `*64` and `*32` aliases below pin it for callers that do not care.

pub mod analysis;
pub mod error;
pub mod fringe;
pub mod montecarlo;
pub mod posterior;
mod scalar;
pub mod schedule;

pub use analysis::{
    fig_m_sweep, fit_prefactor, gain_db, gain_scan, gaussian_prediction, heisenberg_limit,
    shot_noise_limit, Baseline, GainFamily, GaussianFamily, ScalingFamily, ScalingFit,
    SensitivityReport,
};
pub use error::{Error, Result};
pub use fringe::{load_calibration, noon_overlap_oracle, CalibrationTable, FringeModel, Outcome};
pub use montecarlo::{
    run_ensemble, run_trial, EnsembleStats, ModelSource, OutcomeLog, SeedSpec, Simulator,
    TrialConfig, TrialResult,
};
pub use posterior::{
    asymptotic_posterior, uniform_prior, Density, LogPosterior, PhaseGrid, PosteriorSummary,
    PriorWindow, CONFIDENCE_MASS,
};
pub use scalar::Real;
pub use schedule::{Schedule, ScheduleSpec, Step};

pub type FringeModel64 = FringeModel<f64>;
pub type CalibrationTable64 = CalibrationTable<f64>;
pub type PhaseGrid64 = PhaseGrid<f64>;
pub type PriorWindow64 = PriorWindow<f64>;
pub type LogPosterior64 = LogPosterior<f64>;
pub type Density64 = Density<f64>;
pub type TrialConfig64 = TrialConfig<f64>;
pub type TrialResult64 = TrialResult<f64>;
pub type EnsembleStats64 = EnsembleStats<f64>;

pub type FringeModel32 = FringeModel<f32>;
pub type CalibrationTable32 = CalibrationTable<f32>;
pub type PhaseGrid32 = PhaseGrid<f32>;
pub type PriorWindow32 = PriorWindow<f32>;
pub type LogPosterior32 = LogPosterior<f32>;
pub type Density32 = Density<f32>;
pub type TrialConfig32 = TrialConfig<f32>;
pub type TrialResult32 = TrialResult<f32>;
pub type EnsembleStats32 = EnsembleStats<f32>;
