//! Branching random walk engine.

mod grid;
mod population;
mod recursion;
mod tilted;

pub use grid::{FieldKind, GridField, GridSpec, Lattice, TestFunction, WalkPath, EDGE_NEGLIGIBLE};
pub use population::simulate_population;
pub use recursion::{u_grid, u_grid_all, v_grid, v_grid_all, GridRecursion};
pub use tilted::{
    estimate_g, estimate_k, lclt_limit, u_palm_representation, v_tilted, PalmOptions, DEFAULT_K_NODES,
    GRID_MISS_LIMIT,
};
