//! Presence probabilities of branching random walks and homogeneous
//! fragmentations in subcritical windows.

pub mod analytic;
pub mod brw;
pub mod error;
pub mod frag;
pub mod numerics;
pub mod offspring;
pub mod report;
pub mod rng;

pub use brw::{GridField, GridSpec, TestFunction};
pub use analytic::{critical_exponents, EvalMode, FragSpectrum, Regime, Spectrum, TiltedStepLaw};
pub use error::{Error, Result};
pub use frag::{DislocationModel, FragmentationState, SplitLaw};
pub use offspring::{Ensemble, OffspringKind, OffspringModel, PalmKernel, PointConfiguration};
pub use report::{EstimatorReport, Moments};
pub use rng::Runner;
