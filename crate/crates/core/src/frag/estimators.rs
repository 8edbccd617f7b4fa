use super::dislocation::DislocationModel;
use super::simulate::{simulate_fragmentation, FragmentationState};
use crate::analytic::critical_exponents;
use crate::error::{invalid, Error, Result};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;

const TAG_UV: u32 = 0xF0A1;
const TAG_MART: u32 = 0xF0A2;

pub const DEFAULT_PRUNE_MARGIN: f64 = 2.0;

/// `M(p, t) = e^{t Phi(p)} sum_i X_i(t)^{p+1}`.
///
/// At `p = 0` this is the total mass, which is 1 for a conservative
/// dislocation measure; the identity is returned rather than a rounded sum.
pub fn martingale_value(d: &DislocationModel, p: f64, state: &FragmentationState) -> Result<f64> {
    if state.pruned_count > 0 {
        return Err(Error::PruningBias(state.pruned_mass));
    }
    martingale_value_unchecked(d, p, state)
}

/// As [`martingale_value`], accepting pruned states (the pruned ledger is
/// ignored, so the result is biased low).
pub fn martingale_value_unchecked(d: &DislocationModel, p: f64, state: &FragmentationState) -> Result<f64> {
    let phi = d.phi(p)?;
    if p == 0.0 && state.pruned_count == 0 {
        return Ok(1.0);
    }
    let q = p + 1.0;
    let sum: f64 = state.log_masses().map(|l| (q * l).exp()).sum();
    Ok((state.t * phi).exp() * sum)
}

/// Monte Carlo mean of `M(p, t)` over `n` unpruned fragmentations.
pub fn martingale_mean(d: &DislocationModel, p: f64, t: f64, n: usize, runner: &Runner) -> Result<EstimatorReport> {
    let parts = runner.blocks(TAG_MART, n, |rng, range| -> Result<Moments> {
        let mut m = Moments::new();
        for _ in range {
            let s = simulate_fragmentation(d, t, None, rng)?;
            m.push(martingale_value(d, p, &s)?);
        }
        Ok(m)
    });
    let mut m = Moments::new();
    for part in parts {
        m.merge(&part?);
    }
    Ok(EstimatorReport::from_moments(&m, runner.seed)
        .with_diag("p", p)
        .with_diag("t", t))
}

/// `(2 pi |Phi''(p)|)^{-1/2} (p+1)^{-1} (e^{-(p+1) alpha} - e^{-(p+1) beta})`.
pub fn mean_count_prediction(d: &DislocationModel, p: f64, alpha: f64, beta: f64) -> Result<f64> {
    let (_, d2) = d.phi_derivs(p)?;
    let q = p + 1.0;
    let window = (-q * alpha).exp() * -(-q * (beta - alpha)).exp_m1();
    Ok(window / (q * (2.0 * std::f64::consts::PI * d2.abs()).sqrt()))
}

/// `e^{t((p+1) Phi'(p) - Phi(p))}`, the exponential order of `V` at speed `-Phi'(p)`.
pub fn v_growth(d: &DislocationModel, p: f64, t: f64) -> Result<f64> {
    let phi = d.phi(p)?;
    let (d1, _) = d.phi_derivs(p)?;
    Ok((t * ((p + 1.0) * d1 - phi)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvOptions {
    /// Log-mass distance below the window at which fragments are frozen.
    pub prune_margin: f64,
    pub prune: bool,
    /// Permit `p <= p_bar`, where the window is not rare.
    pub allow_supercritical: bool,
}

impl Default for UvOptions {
    fn default() -> Self {
        Self {
            prune_margin: DEFAULT_PRUNE_MARGIN,
            prune: true,
            allow_supercritical: false,
        }
    }
}

/// Presence frequency `U` and mean count `V` of fragments with log-mass in
/// `x + [alpha, beta]`, `x = -t Phi'(p)`.
pub fn estimate_uv(
    d: &DislocationModel,
    p: f64,
    t: f64,
    alpha: f64,
    beta: f64,
    n_runs: usize,
    opts: &UvOptions,
    runner: &Runner,
) -> Result<(EstimatorReport, EstimatorReport)> {
    if !(alpha < beta) {
        return Err(invalid(format!("empty window [{alpha}, {beta}]")));
    }
    let (_, p_bar) = critical_exponents(d)?;
    if !opts.allow_supercritical && !(p > p_bar) {
        return Err(Error::NotSubcritical(p - p_bar));
    }
    let (d1, _) = d.phi_derivs(p)?;
    let x = -t * d1;
    let (lo, hi) = (x + alpha, x + beta);
    let threshold = lo - opts.prune_margin;
    let prune = move |_: f64| threshold;
    let prune_ref: Option<&(dyn Fn(f64) -> f64 + Sync)> = if opts.prune { Some(&prune) } else { None };
    let parts = runner.blocks(TAG_UV, n_runs, |rng, range| -> Result<(Moments, Moments, Moments)> {
        let (mut u, mut v, mut live) = (Moments::new(), Moments::new(), Moments::new());
        for _ in range {
            let s = simulate_fragmentation(d, t, prune_ref, rng)?;
            let count = s.count_in(lo, hi) as f64;
            u.push(f64::from(count >= 1.0));
            v.push(count);
            live.push(s.fragments.len() as f64);
        }
        Ok((u, v, live))
    });
    let (mut u, mut v, mut live) = (Moments::new(), Moments::new(), Moments::new());
    for part in parts {
        let (a, b, c) = part?;
        u.merge(&a);
        v.merge(&b);
        live.merge(&c);
    }
    let scale = t.sqrt() / v_growth(d, p, t)?;
    let ur = EstimatorReport::from_moments(&u, runner.seed)
        .with_diag("x", x)
        .with_diag("prune_threshold", threshold)
        .with_diag("mean_live_fragments", live.mean());
    let vr = EstimatorReport::from_moments(&v, runner.seed)
        .with_diag("x", x)
        .with_diag("scaled", scale * v.mean())
        .with_diag("scaled_stderr", scale * v.stderr())
        .with_diag("prediction", mean_count_prediction(d, p, alpha, beta)?);
    Ok((ur, vr))
}
