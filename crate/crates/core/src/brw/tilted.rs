//! Estimators along the tilted random walk: the plain representation of
//! `v_n`, the Palm representation of `u_n`, and the limit functional `G`.

use rand::Rng;

use super::grid::{GridField, TestFunction, WalkPath};
use crate::analytic::{Spectrum, TiltedStepLaw};
use crate::error::{invalid, Error, Result};
use crate::offspring::{OffspringModel, PalmKernel};
use crate::report::{EstimatorReport, Moments};
use crate::rng::{Runner, StreamRng};

pub const GRID_MISS_LIMIT: f64 = 1e-3;
pub const DEFAULT_K_NODES: usize = 20;

const TAG_V_TILTED: u32 = 0x7A11;
const TAG_U_PALM: u32 = 0x9A13;
const TAG_G: u32 = 0x6001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalmOptions {
    pub n_walks: usize,
    /// Palm draws averaged inside each factor `H_r`.
    pub inner: usize,
}

impl Default for PalmOptions {
    fn default() -> Self {
        Self {
            n_walks: 100_000,
            inner: 1,
        }
    }
}

/// `e^{theta c} int e^{-theta y} f(y) dy`.
pub fn lclt_limit(theta: f64, f: &TestFunction, c: f64) -> f64 {
    (theta * c).exp() * f.tilted_integral(theta)
}

fn setup(model: &OffspringModel, theta: f64) -> Result<(TiltedStepLaw, f64)> {
    let spec = Spectrum::new(model);
    let law = spec.tilt(theta)?;
    let lambda_star = spec.rate_at_theta(theta)?;
    Ok((law, lambda_star))
}

fn base_report(m: &Moments, runner: &Runner, law: &TiltedStepLaw, lambda_star: f64) -> EstimatorReport {
    EstimatorReport::from_moments(m, runner.seed)
        .with_diag("theta", law.theta)
        .with_diag("drift", law.drift)
        .with_diag("sigma", law.sigma())
        .with_diag("lambda_star", lambda_star)
}

/// Estimate of `e^{n Lambda*(a)} v_n[f](-na + c) = e^{theta c} E_theta f_theta(S_n + c)`.
pub fn v_tilted(
    model: &OffspringModel,
    f: &TestFunction,
    n: usize,
    theta: f64,
    c: f64,
    n_walks: usize,
    runner: &Runner,
) -> Result<EstimatorReport> {
    let (law, lambda_star) = setup(model, theta)?;
    let limit = lclt_limit(theta, f, c);
    let lclt_factor = law.sigma() * (2.0 * std::f64::consts::PI * n as f64).sqrt();
    if n == 0 {
        return Ok(EstimatorReport::exact(f.eval(c)).with_diag("lclt_limit", limit));
    }
    let m = runner.fold(
        TAG_V_TILTED,
        n_walks,
        Moments::new(),
        |rng, range, acc| {
            for _ in range {
                let mut s = 0.0;
                for _ in 0..n {
                    s += law.sample(rng);
                }
                acc.push((-theta * s).exp() * f.eval(s + c));
            }
        },
        |a, b| a.merge(b),
    );
    Ok(base_report(&m, runner, &law, lambda_star)
        .with_diag("lclt_factor", lclt_factor)
        .with_diag("lclt_scaled", lclt_factor * m.mean())
        .with_diag("lclt_limit", limit))
}

#[derive(Debug, Clone, Copy, Default)]
struct FactorStats {
    lookups: u64,
    misses: u64,
    h_min: f64,
    h_max: f64,
}

impl FactorStats {
    fn new() -> Self {
        Self {
            h_min: f64::INFINITY,
            h_max: f64::NEG_INFINITY,
            ..Self::default()
        }
    }

    fn merge(&mut self, o: &FactorStats) {
        self.lookups += o.lookups;
        self.misses += o.misses;
        self.h_min = self.h_min.min(o.h_min);
        self.h_max = self.h_max.max(o.h_max);
    }

    fn miss_rate(&self) -> f64 {
        if self.lookups == 0 {
            0.0
        } else {
            self.misses as f64 / self.lookups as f64
        }
    }
}

/// One unbiased draw of `H_r[f](y, s)` from `inner` Palm configurations,
/// each with its own uniform `beta`.
fn h_factor(
    kernel: &PalmKernel<'_>,
    field: &GridField,
    y: f64,
    s: f64,
    inner: usize,
    stats: &mut FactorStats,
    rng: &mut StreamRng,
) -> Result<f64> {
    let mut acc = 0.0;
    for _ in 0..inner {
        let z = kernel.sample_palm(y, rng)?;
        let beta: f64 = rng.random();
        let mut prod = 1.0;
        for p in &z.points {
            let (u, miss) = field.at_checked(s + p);
            stats.lookups += 1;
            stats.misses += u64::from(miss);
            prod *= 1.0 - beta * u;
        }
        acc += prod;
    }
    let h = acc / inner as f64;
    stats.h_min = stats.h_min.min(h);
    stats.h_max = stats.h_max.max(h);
    Ok(h)
}

fn check_fields(fields: &[GridField], depth: usize) -> Result<()> {
    if fields.len() < depth {
        return Err(invalid(format!(
            "need u fields u_0..u_{} , got {}",
            depth.saturating_sub(1),
            fields.len()
        )));
    }
    for (r, g) in fields.iter().take(depth).enumerate() {
        if g.n != r {
            return Err(invalid(format!("field {r} holds generation {}", g.n)));
        }
    }
    Ok(())
}

fn collect<T>(parts: Vec<Result<(Moments, FactorStats, T)>>, fold: impl Fn(&mut T, &T), init: T) -> Result<(Moments, FactorStats, T)> {
    let mut m = Moments::new();
    let mut st = FactorStats::new();
    let mut extra = init;
    for p in parts {
        let (pm, ps, pe) = p?;
        m.merge(&pm);
        st.merge(&ps);
        fold(&mut extra, &pe);
    }
    Ok((m, st, extra))
}

fn check_miss_rate(st: &FactorStats) -> Result<()> {
    let rate = st.miss_rate();
    if rate > GRID_MISS_LIMIT {
        Err(Error::GridMiss {
            rate,
            limit: GRID_MISS_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Estimate of `e^{n Lambda*(a)} u_n[f](-na + c)` by the Palm representation:
/// `f_theta`-weighted tilted paths times independent factor estimates
/// `H_r[f](a + xi_r, c + S_n - S_r - r a)`, which read `u_{r-1}` from `fields`.
pub fn u_palm_representation(
    model: &OffspringModel,
    f: &TestFunction,
    n: usize,
    theta: f64,
    c: f64,
    fields: &[GridField],
    opts: &PalmOptions,
    runner: &Runner,
) -> Result<EstimatorReport> {
    let kernel = model.palm_kernel()?;
    let (law, lambda_star) = setup(model, theta)?;
    if n == 0 {
        return Ok(EstimatorReport::exact(f.eval(c)));
    }
    check_fields(fields, n)?;
    if opts.inner == 0 {
        return Err(invalid("inner must be >= 1"));
    }
    let a = law.drift;
    let parts = runner.blocks(TAG_U_PALM, opts.n_walks, |rng, range| {
        let mut m = Moments::new();
        let mut st = FactorStats::new();
        let mut path = WalkPath::default();
        for _ in range {
            path.resample(&law, n, rng);
            let sn = path.last();
            let weight = (-theta * sn).exp() * f.eval(sn + c);
            let mut prod = 1.0;
            if weight > 0.0 {
                for r in 1..=n {
                    let s = c + sn - path.sum(r) - r as f64 * a;
                    let y = a + path.steps[r - 1];
                    prod *= h_factor(&kernel, &fields[r - 1], y, s, opts.inner, &mut st, rng)?;
                }
            }
            m.push(weight * prod);
        }
        Ok((m, st, ()))
    });
    let (m, st, ()) = collect(parts, |_, _| {}, ())?;
    check_miss_rate(&st)?;
    Ok(base_report(&m, runner, &law, lambda_star)
        .with_diag("grid_miss_rate", st.miss_rate())
        .with_diag("h_min", st.h_min)
        .with_diag("h_max", st.h_max))
}

fn check_subcritical(law: &TiltedStepLaw, lambda_star: f64) -> Result<()> {
    if !(lambda_star > 0.0) {
        return Err(Error::NotSubcritical(lambda_star));
    }
    if law.is_degenerate() {
        return Err(Error::DegenerateWalk(law.sigma2));
    }
    Ok(())
}

/// `G[f](theta, y) = E_theta prod_{r >= 1} H_r[f](a + xi_r, y - a r - S_r)`,
/// truncated after `r_max` factors.
pub fn estimate_g(
    model: &OffspringModel,
    theta: f64,
    y: f64,
    r_max: usize,
    fields: &[GridField],
    opts: &PalmOptions,
    runner: &Runner,
) -> Result<EstimatorReport> {
    let kernel = model.palm_kernel()?;
    let (law, lambda_star) = setup(model, theta)?;
    check_subcritical(&law, lambda_star)?;
    check_fields(fields, r_max)?;
    if opts.inner == 0 {
        return Err(invalid("inner must be >= 1"));
    }
    let a = law.drift;
    let r_cut = r_max - r_max / 4;
    let parts = runner.blocks(TAG_G, opts.n_walks, |rng, range| {
        let mut m = Moments::new();
        let mut st = FactorStats::new();
        let mut tail = Moments::new();
        for _ in range {
            let mut s = 0.0;
            let mut prod = 1.0;
            let mut tail_dev: f64 = 0.0;
            for r in 1..=r_max {
                let xi = law.sample(rng);
                s += xi;
                let h = h_factor(&kernel, &fields[r - 1], a + xi, y - a * r as f64 - s, opts.inner, &mut st, rng)?;
                prod *= h;
                if r > r_cut {
                    tail_dev = tail_dev.max((1.0 - h).abs());
                }
            }
            m.push(prod);
            tail.push(tail_dev);
        }
        Ok((m, st, tail))
    });
    let (m, st, tail) = collect(parts, |a, b| a.merge(b), Moments::new())?;
    check_miss_rate(&st)?;
    Ok(base_report(&m, runner, &law, lambda_star)
        .with_diag("y", y)
        .with_diag("r_max", r_max as f64)
        .with_diag("truncation_dev_mean", tail.mean())
        .with_diag("grid_miss_rate", st.miss_rate())
        .with_diag("h_min", st.h_min))
}

/// `K = int e^{-theta y} f(y) G[f](theta, y) dy / int e^{-theta y} f(y) dy`
/// by the midpoint rule on `nodes` points of the support of `f`, one
/// independent `G` estimate per node.
pub fn estimate_k(
    model: &OffspringModel,
    f: &TestFunction,
    theta: f64,
    nodes: usize,
    r_max: usize,
    fields: &[GridField],
    opts: &PalmOptions,
    runner: &Runner,
) -> Result<EstimatorReport> {
    if nodes == 0 {
        return Err(invalid("need at least one quadrature node"));
    }
    let (lo, hi) = f.support();
    let h = (hi - lo) / nodes as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut var = 0.0;
    let mut n_total = 0;
    let mut trunc: f64 = 0.0;
    let mut g_min = f64::INFINITY;
    for i in 0..nodes {
        let y = lo + (i as f64 + 0.5) * h;
        let w = (-theta * y).exp() * f.eval(y);
        if w == 0.0 {
            continue;
        }
        let g = estimate_g(model, theta, y, r_max, fields, opts, &runner.child(i as u64))?;
        num += w * g.estimate;
        den += w;
        var += (w * g.stderr).powi(2);
        n_total += g.n;
        trunc = trunc.max(g.diag("truncation_dev_mean").unwrap_or(0.0));
        g_min = g_min.min(g.estimate);
    }
    Ok(EstimatorReport::new(num / den, var.sqrt() / den, n_total, runner.seed)
        .with_diag("nodes", nodes as f64)
        .with_diag("r_max", r_max as f64)
        .with_diag("g_min", g_min)
        .with_diag("truncation_dev_mean", trunc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::grid::GridSpec;
    use crate::brw::recursion::{u_grid_all, v_grid};

    fn unit() -> TestFunction {
        TestFunction::indicator(0.0, 1.0).unwrap()
    }

    #[test]
    fn lclt_limit_closed_forms() {
        assert!((lclt_limit(2.0, &unit(), 0.0) - 0.432_332_358_381_693_6).abs() < 1e-12);
        assert!((lclt_limit(2.0, &unit(), 0.4) - 0.8f64.exp() * lclt_limit(2.0, &unit(), 0.0)).abs() < 1e-14);
        let f = TestFunction::indicator(-0.5, 1.25).unwrap();
        assert!((lclt_limit(0.0, &f, 3.0) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn v_tilted_zero_generations_is_f() {
        let m = OffspringModel::gaussian2();
        let r = v_tilted(&m, &unit(), 0, 2.0, 0.5, 10, &Runner::new(1)).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn v_tilted_matches_grid() {
        let m = OffspringModel::gaussian2();
        let n = 10;
        let r = v_tilted(&m, &unit(), n, 2.0, 0.0, 200_000, &Runner::new(2)).unwrap();
        let a = 2.0;
        let spec = GridSpec::default().with_targets([-a * n as f64]);
        let v = v_grid(&m, &unit(), n, &spec).unwrap();
        let ls = r.diag("lambda_star").unwrap();
        let target = v.at(-a * n as f64) * (n as f64 * ls).exp();
        assert!(r.z_score(target).abs() < 4.0, "{} vs {target} ± {}", r.estimate, r.stderr);
    }

    #[test]
    fn palm_factors_bounded_and_zero_depth() {
        let m = OffspringModel::gaussian2();
        let n = 2;
        let spec = GridSpec::default().with_targets([-4.0]);
        let fields = u_grid_all(&m, &unit(), n, &spec).unwrap();
        let r = u_palm_representation(&m, &unit(), n, 2.0, 0.0, &fields, &PalmOptions { n_walks: 5000, inner: 1 }, &Runner::new(3))
            .unwrap();
        assert!(r.diag("h_min").unwrap() >= 0.0 && r.diag("h_max").unwrap() <= 1.0);
        let r0 = u_palm_representation(&m, &unit(), 0, 2.0, 0.3, &[], &PalmOptions::default(), &Runner::new(3)).unwrap();
        assert_eq!(r0.estimate, 1.0);
    }

    #[test]
    fn g_requires_subcritical_speed() {
        let m = OffspringModel::gaussian2();
        let spec = GridSpec::default();
        let fields = u_grid_all(&m, &unit(), 2, &spec).unwrap();
        // theta = 1: Lambda* = 1 - (log 2 + 1/2) < 0.
        let err = estimate_g(&m, 1.0, 0.5, 2, &fields, &PalmOptions::default(), &Runner::new(1)).unwrap_err();
        assert!(matches!(err, Error::NotSubcritical(_)));
    }

    #[test]
    fn zero_fields_give_unit_k() {
        let m = OffspringModel::gaussian2();
        let spec = GridSpec::default();
        let mut fields = u_grid_all(&m, &unit(), 5, &spec).unwrap();
        for g in &mut fields {
            g.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let k = estimate_k(&m, &unit(), 2.0, 20, 5, &fields, &PalmOptions { n_walks: 100, inner: 1 }, &Runner::new(4))
            .unwrap();
        assert_eq!(k.estimate, 1.0);
        assert_eq!(k.stderr, 0.0);
    }
}
