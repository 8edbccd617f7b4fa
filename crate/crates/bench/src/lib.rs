//! Shared workloads for the criterion benches.

use presence_core::{DislocationModel, GridSpec, OffspringModel, Runner, TestFunction};

pub const SEED: u64 = 0xBE7C;

pub struct GridCase {
    pub model: OffspringModel,
    pub f: TestFunction,
    pub n: usize,
    pub spec: GridSpec,
}

pub fn grid_case(n: usize, delta: f64) -> GridCase {
    GridCase {
        model: OffspringModel::gaussian2(),
        f: TestFunction::indicator(0.0, 1.0).expect("valid window"),
        n,
        spec: GridSpec::default().with_delta(delta),
    }
}

pub fn fragmentation() -> DislocationModel {
    DislocationModel::uniform_binary()
}

pub fn runner(workers: usize) -> Runner {
    Runner::new(SEED).with_workers(workers)
}
