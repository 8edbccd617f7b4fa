//! The functional `G(p, y)` along the dual Lévy process, and the constant it
//! yields after averaging over the window. Approximate: the product over
//! jump times is cut at `r_max` and `U_r` is read from a skeleton grid,
//! linearly interpolated in time.

use super::dislocation::DislocationModel;
use super::levy::build_dual_levy;
use super::skeleton::{check_regular_exponent, skeleton_model, SkeletonOptions, SkeletonPresence};
use crate::brw::{TestFunction, GRID_MISS_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;
use rand_distr::{Distribution, Exp};

const TAG_GLEVY: u32 = 0x6E71;

/// `int_0^1 prod_i (1 - b u_i) db`, integrated exactly.
pub fn beta_average(us: &[f64]) -> f64 {
    let mut coef = vec![1.0];
    for &u in us {
        let mut next = vec![0.0; coef.len() + 1];
        for (k, c) in coef.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * u;
        }
        coef = next;
    }
    coef.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).sum()
}

/// Skeleton `U` fields reaching horizon `r_max`, wide enough for the dual
/// walk started anywhere in the support of `f`.
pub fn levy_presence(
    d: &DislocationModel,
    p: f64,
    h: f64,
    r_max: f64,
    f: &TestFunction,
    opts: &SkeletonOptions,
    runner: &Runner,
) -> Result<SkeletonPresence> {
    let (d1, d2) = d.phi_derivs(p)?;
    let steps = (r_max / h).ceil() as usize;
    let horizon = steps as f64 * h;
    let top = f.support().1 + d1 * horizon + 8.0 * (d2.abs() * horizon).sqrt();
    let model = skeleton_model(d, h, opts.ensemble, runner)?;
    SkeletonPresence::build(&model, h, f, steps, &opts.grid.clone().with_targets([top]))
}

struct Acc {
    g: Moments,
    tail: Moments,
    lookups: u64,
    misses: u64,
}

impl Acc {
    fn new() -> Self {
        Self {
            g: Moments::new(),
            tail: Moments::new(),
            lookups: 0,
            misses: 0,
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.g.merge(&o.g);
        self.tail.merge(&o.tail);
        self.lookups += o.lookups;
        self.misses += o.misses;
    }
}

/// `E prod_{r <= r_max, jump at r} H_r(Delta zeta_r, y + chi_r)`.
pub fn estimate_g_levy(
    d: &DislocationModel,
    p: f64,
    y: f64,
    r_max: f64,
    fields: &SkeletonPresence,
    n_paths: usize,
    runner: &Runner,
) -> Result<EstimatorReport> {
    check_regular_exponent(d, p)?;
    if !(r_max > 0.0) || r_max > fields.horizon() + 1e-9 {
        return Err(invalid(format!("r_max {r_max} outside (0, {}]", fields.horizon())));
    }
    let law = build_dual_levy(d, p)?;
    let clock = Exp::new(law.jump_rate).map_err(|e| invalid(e.to_string()))?;
    let tail_from = r_max - 0.25 * r_max;
    let parts = runner.blocks(TAG_GLEVY, n_paths, |rng, range| -> Result<Acc> {
        let mut acc = Acc::new();
        for _ in range {
            let (mut r, mut chi, mut prod, mut tail) = (0.0, 0.0, 1.0, 0.0f64);
            loop {
                r += clock.sample(rng);
                if r > r_max {
                    break;
                }
                let (jump, x_star) = law.sampler.sample(rng);
                chi += jump;
                let z = y + chi;
                let mut us = Vec::with_capacity(2);
                for x in d.palm_remainder(x_star)? {
                    let (u, miss) = fields.u_at(r, z + x.ln())?;
                    acc.lookups += 1;
                    acc.misses += u64::from(miss);
                    us.push(u.clamp(0.0, 1.0));
                }
                let hr = beta_average(&us);
                if r > tail_from {
                    tail = tail.max(1.0 - hr);
                }
                prod *= hr;
            }
            acc.g.push(prod);
            acc.tail.push(tail);
        }
        Ok(acc)
    });
    let mut acc = Acc::new();
    for part in parts {
        acc.merge(&part?);
    }
    let miss_rate = if acc.lookups == 0 { 0.0 } else { acc.misses as f64 / acc.lookups as f64 };
    if miss_rate > GRID_MISS_LIMIT {
        return Err(Error::GridMiss {
            rate: miss_rate,
            limit: GRID_MISS_LIMIT,
        });
    }
    Ok(EstimatorReport::from_moments(&acc.g, runner.seed)
        .with_diag("y", y)
        .with_diag("r_max", r_max)
        .with_diag("grid_miss_rate", miss_rate)
        .with_diag("truncation_dev_mean", acc.tail.mean())
        .with_note("approximate: jump-time product truncated at r_max"))
}

/// `int e^{-(p+1)y} G(p, y) f(y) dy / int e^{-(p+1)y} f(y) dy` on `nodes`
/// midpoints of the support of `f`.
pub fn estimate_k_levy(
    d: &DislocationModel,
    p: f64,
    f: &TestFunction,
    nodes: usize,
    r_max: f64,
    fields: &SkeletonPresence,
    n_paths: usize,
    runner: &Runner,
) -> Result<EstimatorReport> {
    if nodes == 0 {
        return Err(invalid("need at least one node"));
    }
    let (a, b) = f.support();
    let w = (b - a) / nodes as f64;
    let q = p + 1.0;
    let (mut num, mut var, mut den) = (0.0, 0.0, 0.0);
    let (mut g_min, mut tail) = (f64::INFINITY, 0.0f64);
    for i in 0..nodes {
        let y = a + (i as f64 + 0.5) * w;
        let weight = (-q * y).exp() * f.eval(y);
        if weight == 0.0 {
            continue;
        }
        let g = estimate_g_levy(d, p, y, r_max, fields, n_paths, &runner.child(i as u64))?;
        num += weight * g.estimate;
        var += (weight * g.stderr).powi(2);
        den += weight;
        g_min = g_min.min(g.estimate);
        tail = tail.max(g.diag("truncation_dev_mean").unwrap_or(0.0));
    }
    if !(den > 0.0) {
        return Err(invalid("test function vanishes on every node"));
    }
    Ok(
        EstimatorReport::new(num / den, var.sqrt() / den, (nodes * n_paths) as u64, runner.seed)
            .with_diag("g_min", g_min)
            .with_diag("truncation_dev_mean", tail)
            .with_diag("r_max", r_max)
            .with_note("approximate: jump-time product truncated at r_max"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::GridSpec;

    #[test]
    fn beta_average_closed_forms() {
        assert_eq!(beta_average(&[]), 1.0);
        assert!((beta_average(&[0.4]) - 0.8).abs() < 1e-15);
        let (u, v) = (0.3, 0.6);
        let exact = 1.0 - (u + v) / 2.0 + u * v / 3.0;
        assert!((beta_average(&[u, v]) - exact).abs() < 1e-15);
    }

    #[test]
    fn zero_fields_give_one() {
        let d = DislocationModel::uniform_binary();
        let f = TestFunction::indicator(0.0, 1.0).unwrap();
        let opts = SkeletonOptions {
            ensemble: 1000,
            ..SkeletonOptions::default()
        };
        let mut fields = levy_presence(&d, 2.0, 0.5, 4.0, &f, &opts, &Runner::new(1)).unwrap();
        for u in &mut fields.u {
            u.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let g = estimate_g_levy(&d, 2.0, 0.5, 4.0, &fields, 1000, &Runner::new(2)).unwrap();
        assert_eq!((g.estimate, g.stderr), (1.0, 0.0));
        let k = estimate_k_levy(&d, 2.0, &f, 4, 4.0, &fields, 100, &Runner::new(3)).unwrap();
        assert_eq!(k.estimate, 1.0);
    }

    #[test]
    fn rejects_horizon_beyond_fields() {
        let d = DislocationModel::uniform_binary();
        let f = TestFunction::indicator(0.0, 1.0).unwrap();
        let model = skeleton_model(&d, 0.5, 1000, &Runner::new(4)).unwrap();
        let sk = SkeletonPresence::build(&model, 0.5, &f, 2, &GridSpec::default()).unwrap();
        assert!(estimate_g_levy(&d, 2.0, 0.5, 3.0, &sk, 10, &Runner::new(5)).is_err());
    }
}
