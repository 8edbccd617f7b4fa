//! Discrete skeletons: the fragmentation observed at times `h, 2h, ...` is a
//! branching random walk on log-masses, whose presence and mean-count fields
//! are computed by the lattice recursions.

use super::dislocation::DislocationModel;
use super::simulate::simulate_fragmentation;
use crate::analytic::critical_exponents;
use crate::brw::{u_grid_all, v_grid_all, GridField, GridSpec, TestFunction, EDGE_NEGLIGIBLE};
use crate::error::{invalid, Error, Result};
use crate::offspring::{Ensemble, OffspringModel};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;

const TAG_SKELETON: u32 = 0x5E10;

pub const DEFAULT_ENSEMBLE: usize = 10_000;
pub const MIN_ENSEMBLE: usize = 1_000;

/// Log-masses at time `h` of `size` independent fragmentations started from
/// a unit mass.
pub fn skeleton_ensemble(d: &DislocationModel, h: f64, size: usize, runner: &Runner) -> Result<Ensemble> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("skeleton mesh {h} must be positive")));
    }
    let parts = runner.blocks(TAG_SKELETON, size, |rng, range| -> Result<Vec<Vec<f64>>> {
        range
            .map(|_| Ok(simulate_fragmentation(d, h, None, rng)?.log_masses().collect()))
            .collect()
    });
    let mut raw = Vec::with_capacity(size);
    for part in parts {
        raw.extend(part?);
    }
    Ensemble::new(raw)
}

pub fn skeleton_model(d: &DislocationModel, h: f64, size: usize, runner: &Runner) -> Result<OffspringModel> {
    let ensemble = skeleton_ensemble(d, h, size, runner)?;
    OffspringModel::empirical(format!("{}-skeleton-h{h}", d.name), ensemble)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonOptions {
    pub ensemble: usize,
    /// Independent ensembles; the spread of their estimates gives the error bar.
    pub replicates: usize,
    pub grid: GridSpec,
}

impl Default for SkeletonOptions {
    fn default() -> Self {
        Self {
            ensemble: DEFAULT_ENSEMBLE,
            replicates: 4,
            grid: GridSpec::default(),
        }
    }
}

/// `U_{kh}[f]` and `V_{kh}[f]` in y-coordinates: `U(t, y)` is the probability
/// that some fragment at time `t` has `y + log X` in the support of `f`.
#[derive(Debug, Clone)]
pub struct SkeletonPresence {
    pub h: f64,
    pub u: Vec<GridField>,
    pub v: Vec<GridField>,
    lower: f64,
}

impl SkeletonPresence {
    pub fn build(model: &OffspringModel, h: f64, f: &TestFunction, steps: usize, grid: &GridSpec) -> Result<Self> {
        Ok(Self {
            h,
            u: u_grid_all(model, f, steps, grid)?,
            v: v_grid_all(model, f, steps, grid)?,
            lower: f.support().0,
        })
    }

    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.h
    }

    /// Log-masses never increase, so both fields vanish below the support.
    fn read(&self, field: &GridField, y: f64) -> (f64, bool) {
        if y < self.lower {
            return (0.0, false);
        }
        match field.lookup(y) {
            Some(v) => (v, false),
            None => (1.0, field.edge_max() > EDGE_NEGLIGIBLE),
        }
    }

    fn interpolate(&self, fields: &[GridField], t: f64, y: f64) -> Result<(f64, bool)> {
        let s = t / self.h;
        if !(s >= 0.0 && s <= self.steps() as f64 + 1e-9) {
            return Err(invalid(format!("time {t} outside [0, {}]", self.horizon())));
        }
        let k = (s.floor() as usize).min(self.steps());
        let frac = s - k as f64;
        let (a, ma) = self.read(&fields[k], y);
        if frac < 1e-9 || k == self.steps() {
            return Ok((a, ma));
        }
        let (b, mb) = self.read(&fields[k + 1], y);
        Ok((a + frac * (b - a), ma || mb))
    }

    /// `U(t, y)`, linear in time between skeleton steps. Reads above the
    /// window return the bound 1 and are flagged.
    pub fn u_at(&self, t: f64, y: f64) -> Result<(f64, bool)> {
        self.interpolate(&self.u, t, y)
    }

    pub fn v_at(&self, t: f64, y: f64) -> Result<(f64, bool)> {
        self.interpolate(&self.v, t, y)
    }
}

fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    let s = horizon / h;
    let n = s.round();
    if !(n >= 1.0) || (s - n).abs() > 1e-9 * s.max(1.0) {
        return Err(invalid(format!("horizon {horizon} is not a positive multiple of the mesh {h}")));
    }
    Ok(n as usize)
}

pub(crate) fn check_regular_exponent(d: &DislocationModel, p: f64) -> Result<()> {
    if let Some(r) = d.geometric() {
        return Err(Error::GeometricModel(r));
    }
    let (_, p_bar) = critical_exponents(d)?;
    if !(p > p_bar) {
        return Err(Error::NotSubcritical(p - p_bar));
    }
    Ok(())
}

/// Ratio `u_n / v_n` at `y* = n h Phi'(p) + c` of the mesh-`h` skeleton,
/// `n h = horizon`, averaged over independent skeleton ensembles.
pub fn kp_via_skeleton(
    d: &DislocationModel,
    p: f64,
    h: f64,
    horizon: f64,
    c: f64,
    f: &TestFunction,
    opts: &SkeletonOptions,
    runner: &Runner,
) -> Result<EstimatorReport> {
    check_regular_exponent(d, p)?;
    if opts.ensemble < MIN_ENSEMBLE {
        return Err(invalid(format!("skeleton ensemble {} < {MIN_ENSEMBLE}", opts.ensemble)));
    }
    if opts.replicates < 2 {
        return Err(invalid("need at least 2 skeleton replicates"));
    }
    let steps = steps_for(horizon, h)?;
    let (d1, _) = d.phi_derivs(p)?;
    let y_star = horizon * d1 + c;
    let grid = opts.grid.clone().with_targets([y_star]);
    let (mut ratio, mut u_m, mut v_m) = (Moments::new(), Moments::new(), Moments::new());
    let mut grid_len = 0usize;
    let mut mass_loss = 0.0f64;
    for i in 0..opts.replicates {
        let model = skeleton_model(d, h, opts.ensemble, &runner.child(i as u64))?;
        let sk = SkeletonPresence::build(&model, h, f, steps, &grid)?;
        let (u, mu) = sk.u_at(horizon, y_star)?;
        let (v, mv) = sk.v_at(horizon, y_star)?;
        if mu || mv || !(v > 0.0) {
            return Err(invalid(format!("target {y_star} not resolved by the skeleton grid")));
        }
        grid_len = sk.u[0].len();
        mass_loss = mass_loss.max(sk.u[steps].mass_loss).max(sk.v[steps].mass_loss);
        ratio.push(u / v);
        u_m.push(u);
        v_m.push(v);
    }
    Ok(EstimatorReport::from_moments(&ratio, runner.seed)
        .with_diag("h", h)
        .with_diag("steps", steps as f64)
        .with_diag("y_star", y_star)
        .with_diag("u", u_m.mean())
        .with_diag("v", v_m.mean())
        .with_diag("grid_len", grid_len as f64)
        .with_diag("mass_loss", mass_loss))
}

/// [`kp_via_skeleton`] at two meshes with the same horizon.
pub fn kp_mesh_invariance(
    d: &DislocationModel,
    p: f64,
    meshes: (f64, f64),
    horizon: f64,
    c: f64,
    f: &TestFunction,
    opts: &SkeletonOptions,
    runner: &Runner,
) -> Result<(EstimatorReport, EstimatorReport)> {
    let a = kp_via_skeleton(d, p, meshes.0, horizon, c, f, opts, &runner.child(0))?;
    let b = kp_via_skeleton(d, p, meshes.1, horizon, c, f, opts, &runner.child(1))?;
    Ok((a, b))
}
