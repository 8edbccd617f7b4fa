//! Finite-activity homogeneous fragmentations.

mod conditioning;
mod dislocation;
mod estimators;
mod g_levy;
mod levy;
mod simulate;
mod skeleton;

pub use conditioning::{conditioned_law, ConditioningOptions, Event};
pub use dislocation::{DislocationModel, JumpSampler, SplitLaw};
pub use estimators::{
    estimate_uv, martingale_mean, martingale_value, martingale_value_unchecked, mean_count_prediction, v_growth,
    UvOptions, DEFAULT_PRUNE_MARGIN,
};
pub use g_levy::{beta_average, estimate_g_levy, estimate_k_levy, levy_presence};
pub use levy::{build_dual_levy, v_levy, DualLevyLaw};
pub use simulate::{
    simulate_fragmentation, simulate_fragmentation_with, Fragment, FragmentationState, SimOptions, SplitEvent,
    DEFAULT_POPULATION_CAP,
};
pub use skeleton::{
    kp_mesh_invariance, kp_via_skeleton, skeleton_ensemble, skeleton_model, SkeletonOptions, SkeletonPresence,
    DEFAULT_ENSEMBLE, MIN_ENSEMBLE,
};
