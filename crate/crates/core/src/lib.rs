//! Frequency estimation for a point source oscillating below the diffraction
//! limit, compared across direct imaging, Hermite-Gaussian mode sorting and
//! two-mode plus/minus sorting.
//!
//! * [`motion`]: trajectories, frame schedules, photon budgets.
//! * [`modes`]: detector probabilities and the information density `gamma`.
//! * [`fisher`]: classical and quantum Fisher information, Cramér-Rao bounds.
//! * [`sim`]: seeded Poisson photon-count simulation.
//! * [`estimate`]: per-frame MLE, least-squares frequency fit, ensemble statistics.
//! * [`holo`]: phase-hologram synthesis and a Fourier-plane readout.
//!
//! Everything is generic over the scalar ([`Real`]); the aliases below pin `f64`
//! and `f32`.

pub mod error;
pub mod estimate;
pub mod fisher;
pub mod holo;
pub mod modes;
pub mod motion;
pub mod scalar;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MotionModelF64 = motion::MotionModel<f64>;
pub type MotionModelF32 = motion::MotionModel<f32>;
pub type SamplingScheduleF64 = motion::SamplingSchedule<f64>;
pub type SamplingScheduleF32 = motion::SamplingSchedule<f32>;
pub type NoiseBudgetF64 = motion::NoiseBudget<f64>;
pub type NoiseBudgetF32 = motion::NoiseBudget<f32>;
pub type SchemeF64 = modes::Scheme<f64>;
pub type SchemeF32 = modes::Scheme<f32>;
pub type FisherMatrixF64 = fisher::FisherMatrix<f64>;
pub type FisherMatrixF32 = fisher::FisherMatrix<f32>;
pub type FisherReportF64 = fisher::FisherReport<f64>;
pub type FisherReportF32 = fisher::FisherReport<f32>;
pub type TrialConfigF64 = sim::TrialConfig<f64>;
pub type TrialConfigF32 = sim::TrialConfig<f32>;
pub type TrialResultF64 = sim::TrialResult<f64>;
pub type TrialResultF32 = sim::TrialResult<f32>;
pub type PipelineF64 = estimate::Pipeline<f64>;
pub type PipelineF32 = estimate::Pipeline<f32>;
pub type HologramF64 = holo::Hologram<f64>;
pub type HologramF32 = holo::Hologram<f32>;
