//! Law of the fragmentation at time `s` given presence in the rare window at
//! time `t + s`, against its h-transform by the additive martingale.

use serde::{Deserialize, Serialize};

use super::dislocation::DislocationModel;
use super::estimators::martingale_value;
use super::simulate::{simulate_fragmentation, FragmentationState};
use super::skeleton::{check_regular_exponent, skeleton_model, SkeletonOptions, SkeletonPresence};
use crate::brw::{TestFunction, GRID_MISS_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::report::{EstimatorReport, Moments, PairMoments};
use crate::rng::Runner;

const TAG_COND: u32 = 0xC0D1;

/// Predicate on the ranked masses at time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Always,
    /// The largest fragment has mass at most `x`.
    MaxMassAtMost { x: f64 },
}

impl Event {
    pub fn holds(&self, state: &FragmentationState) -> bool {
        match self {
            Event::Always => true,
            Event::MaxMassAtMost { x } => state.log_masses().all(|l| l.exp() <= *x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningOptions {
    pub n_paths: usize,
    /// Skeleton mesh for the `U_t` fields.
    pub h: f64,
    pub skeleton: SkeletonOptions,
}

impl Default for ConditioningOptions {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            h: 0.5,
            skeleton: SkeletonOptions::default(),
        }
    }
}

/// Returns `(conditional, htransform)`.
///
/// `conditional` estimates `P(event | presence in -Phi'(p)(t+s) + [alpha, beta] at t+s)`
/// as `E[1_event (1 - prod_j (1 - A_j))] / E[1 - prod_j (1 - A_j)]` over the
/// same paths, where `A_j = U_t(log X_j(s) + (t+s) Phi'(p))` is read from the
/// skeleton recursion (at `t = 0`, `A_j` is the indicator itself). The
/// denominator is `U_{t+s}(-a(t+s))` by the fragmentation property; its
/// skeleton-grid value is reported as `grid_presence`.
///
/// `htransform` estimates `E[1_event M(p, s)]`.
pub fn conditioned_law(
    d: &DislocationModel,
    p: f64,
    s: f64,
    t: f64,
    event: Event,
    f: &TestFunction,
    opts: &ConditioningOptions,
    runner: &Runner,
) -> Result<(EstimatorReport, EstimatorReport)> {
    check_regular_exponent(d, p)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid(format!("negative time s = {s}, t = {t}")));
    }
    let (d1, _) = d.phi_derivs(p)?;
    let shift = (t + s) * d1;
    let presence = if t > 0.0 {
        let steps = ((t + s) / opts.h).round() as usize;
        if ((steps as f64) * opts.h - (t + s)).abs() > 1e-9 || (t / opts.h).fract().abs() > 1e-9 {
            return Err(invalid(format!("t = {t} and t + s = {} must be multiples of h = {}", t + s, opts.h)));
        }
        let model = skeleton_model(d, opts.h, opts.skeleton.ensemble, &runner.child(1))?;
        let grid = opts.skeleton.grid.clone().with_targets([shift]);
        Some(SkeletonPresence::build(&model, opts.h, f, steps, &grid)?)
    } else {
        None
    };

    struct Acc {
        joint: PairMoments,
        mart: Moments,
        lookups: u64,
        misses: u64,
    }
    let parts = runner.child(0).blocks(TAG_COND, opts.n_paths, |rng, range| -> Result<Acc> {
        let mut acc = Acc {
            joint: PairMoments::new(),
            mart: Moments::new(),
            lookups: 0,
            misses: 0,
        };
        for _ in range {
            let state = simulate_fragmentation(d, s, None, rng)?;
            let hit = f64::from(event.holds(&state));
            let mut keep = 1.0;
            for l in state.log_masses() {
                let y = l + shift;
                let a = match &presence {
                    Some(sk) => {
                        let (a, miss) = sk.u_at(t, y)?;
                        acc.lookups += 1;
                        acc.misses += u64::from(miss);
                        a.clamp(0.0, 1.0)
                    }
                    None => f.eval(y),
                };
                keep *= 1.0 - a;
            }
            let present = 1.0 - keep;
            acc.joint.push(hit * present, present);
            acc.mart.push(hit * martingale_value(d, p, &state)?);
        }
        Ok(acc)
    });
    let (mut joint, mut mart, mut lookups, mut misses) = (PairMoments::new(), Moments::new(), 0u64, 0u64);
    for part in parts {
        let a = part?;
        joint.merge(&a.joint);
        mart.merge(&a.mart);
        lookups += a.lookups;
        misses += a.misses;
    }
    let miss_rate = if lookups == 0 { 0.0 } else { misses as f64 / lookups as f64 };
    if miss_rate > GRID_MISS_LIMIT {
        return Err(Error::GridMiss {
            rate: miss_rate,
            limit: GRID_MISS_LIMIT,
        });
    }
    let (ratio, ratio_se) = joint.ratio();
    let mut conditional = EstimatorReport::new(ratio, ratio_se, joint.count(), runner.seed)
        .with_diag("presence_mean", joint.y().mean())
        .with_diag("presence_stderr", joint.y().stderr())
        .with_diag("grid_miss_rate", miss_rate)
        .with_diag("t", t)
        .with_diag("s", s);
    if let Some(sk) = &presence {
        let (denominator, _) = sk.u_at(t + s, shift)?;
        if !(denominator > 0.0) {
            return Err(invalid("presence probability vanishes on the skeleton grid"));
        }
        conditional = conditional
            .with_diag("grid_presence", denominator)
            .with_diag("grid_normalized", joint.x().mean() / denominator);
    }
    let htransform = EstimatorReport::from_moments(&mart, runner.seed)
        .with_diag("p", p)
        .with_diag("s", s);
    Ok((conditional, htransform))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_predicate() {
        let d = DislocationModel::uniform_binary();
        let mut rng = crate::rng::stream(1, 0, 0);
        let s0 = simulate_fragmentation(&d, 0.0, None, &mut rng).unwrap();
        assert!(Event::Always.holds(&s0));
        assert!(!Event::MaxMassAtMost { x: 0.7 }.holds(&s0));
        assert!(Event::MaxMassAtMost { x: 1.0 }.holds(&s0));
    }

    #[test]
    fn event_serde() {
        let e: Event = serde_json::from_str(r#"{"event":"max-mass-at-most","x":0.7}"#).unwrap();
        assert_eq!(e, Event::MaxMassAtMost { x: 0.7 });
    }

    #[test]
    fn trivial_event_at_zero_horizon() {
        let d = DislocationModel::uniform_binary();
        let f = TestFunction::indicator(0.0, 1.0).unwrap();
        let opts = ConditioningOptions {
            n_paths: 20_000,
            ..ConditioningOptions::default()
        };
        let (c, m) = conditioned_law(&d, 2.0, 1.0, 0.0, Event::Always, &f, &opts, &Runner::new(2)).unwrap();
        assert_eq!(c.estimate, 1.0);
        assert!(m.z_score(1.0).abs() < 3.0, "{} ± {}", m.estimate, m.stderr);
    }
}
