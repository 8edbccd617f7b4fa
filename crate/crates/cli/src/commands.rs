use presence_core::analytic::FragSpectrum;
use presence_core::brw::{
    estimate_g, estimate_k, simulate_population, u_grid_all, u_palm_representation, v_grid_all, v_tilted, PalmOptions,
};
use presence_core::frag::{
    conditioned_law, estimate_g_levy, estimate_k_levy, estimate_uv, kp_mesh_invariance, kp_via_skeleton, levy_presence,
    martingale_value, simulate_fragmentation_with, v_levy, ConditioningOptions, SimOptions, SkeletonOptions, UvOptions,
    DEFAULT_ENSEMBLE,
};
use presence_core::offspring::DEFAULT_CAP;
use presence_core::report::Moments;
use presence_core::{
    critical_exponents, DislocationModel, EstimatorReport, GridField, GridSpec, OffspringModel, Regime, Runner, Spectrum,
};

use crate::config::{finite, positive, require, ExperimentConfig, Model};
use crate::error::{LabError, Result};
use crate::report::RunReport;
use crate::table::Table;

const TAG_MART_PATHS: u32 = 0x1AB1;
const TAG_POPULATION: u32 = 0x1AB2;
const TAG_TRAJECTORY: u32 = 0x1AB3;

pub const BRW_OPERATIONS: &[&str] = &["u_grid", "v_grid", "v_tilted", "u_palm", "estimate_g", "estimate_k", "population"];
pub const FRAG_OPERATIONS: &[&str] = &[
    "martingale",
    "uv",
    "v_levy",
    "kp_skeleton",
    "kp_mesh",
    "conditioned",
    "g_levy",
    "k_levy",
    "skeleton_residual",
    "simulate",
];

fn operation<'a>(cfg: &'a ExperimentConfig, allowed: &[&str], command: &str) -> Result<&'a str> {
    let op = cfg
        .operation
        .as_deref()
        .ok_or_else(|| LabError::config("operation", format!("required for {command}; one of {}", allowed.join(", "))))?;
    if !allowed.contains(&op) {
        return Err(LabError::config(
            "operation",
            format!("unknown {command} operation {op:?}; one of {}", allowed.join(", ")),
        ));
    }
    Ok(op)
}

fn offspring(cfg: &ExperimentConfig, command: &str) -> Result<OffspringModel> {
    match cfg.model.build()? {
        Model::Offspring(m) => Ok(m),
        Model::Dislocation(_) => Err(LabError::config("model", format!("{command} needs an offspring model"))),
    }
}

fn dislocation(cfg: &ExperimentConfig, command: &str) -> Result<DislocationModel> {
    match cfg.model.build()? {
        Model::Dislocation(d) => Ok(d),
        Model::Offspring(_) => Err(LabError::config("model", format!("{command} needs a dislocation model"))),
    }
}

fn grid_spec(cfg: &ExperimentConfig) -> Result<GridSpec> {
    let mut spec = GridSpec::default();
    if let Some(d) = cfg.params.delta {
        spec = spec.with_delta(positive(d, "delta")?);
    }
    Ok(spec)
}

fn integer(v: f64, field: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(LabError::config(format!("params.{field}"), format!("must be a positive integer here, got {v}")))
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Supercritical => "supercritical",
        Regime::Critical => "critical",
        Regime::Subcritical => "subcritical",
    }
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut out = RunReport::new("analyze", cfg);
    match cfg.model.build()? {
        Model::Offspring(m) => {
            if !matches!(cfg.operation.as_deref(), None | Some("spectrum")) {
                return Err(LabError::config("operation", "analyze on an offspring model supports only \"spectrum\""));
            }
            if cfg.params.p_grid.is_some() {
                return Err(LabError::config("params.p_grid", "applies to dislocation models"));
            }
            let span = cfg
                .params
                .theta_grid
                .ok_or_else(|| LabError::config("params.theta_grid", "required by analyze"))?;
            let thetas = span.points("params.theta_grid")?;
            let s = Spectrum::new(&m);
            let mut t = Table::new(&["theta", "lambda", "lambda_prime", "lambda_second", "rate", "duality_residual", "regime"]);
            let mut lambdas = Vec::with_capacity(thetas.len());
            let mut worst: f64 = 0.0;
            for &theta in &thetas {
                let ctx = || LabError::engine(format!("analyze at theta = {theta}"));
                let lam = s.cumulant(theta).map_err(ctx())?;
                let a = s.derivative(theta).map_err(ctx())?;
                let l2 = s.second_derivative(theta).map_err(ctx())?;
                let (_, rate) = s.rate_function(a).map_err(ctx())?;
                let residual = rate + lam - theta * a;
                let regime = s.classify_speed(a).map_err(ctx())?;
                worst = worst.max(residual.abs());
                lambdas.push(lam);
                t.push(vec![
                    theta.into(),
                    lam.into(),
                    a.into(),
                    l2.into(),
                    rate.into(),
                    residual.into(),
                    regime_name(regime).into(),
                ]);
            }
            let min_second = lambdas
                .windows(3)
                .map(|w| w[0] + w[2] - 2.0 * w[1])
                .fold(f64::INFINITY, f64::min);
            out.diag("max_duality_residual", worst);
            if min_second.is_finite() {
                out.diag("min_second_difference", min_second);
            }
            out.table("spectrum.csv", t);
        }
        Model::Dislocation(d) => {
            if !matches!(cfg.operation.as_deref(), None | Some("exponents")) {
                return Err(LabError::config("operation", "analyze on a dislocation model supports only \"exponents\""));
            }
            if cfg.params.theta_grid.is_some() {
                return Err(LabError::config("params.theta_grid", "applies to offspring models"));
            }
            let ps = match cfg.params.p_grid {
                Some(span) => Some(span.points("params.p_grid")?),
                None => None,
            };
            let fs = FragSpectrum::new(&d).map_err(LabError::engine("analyze"))?;
            let (p_lower, p_bar) = critical_exponents(&d).map_err(LabError::engine("analyze: critical exponents"))?;
            let at_bar = fs.criticality(p_bar).map_err(LabError::engine("analyze"))?;
            let mut e = Table::new(&["p_lower", "p_bar", "criticality_at_p_bar"]);
            e.push(vec![p_lower.into(), p_bar.into(), at_bar.into()]);
            out.table("exponents.csv", e);
            out.diag("p_lower", p_lower);
            out.diag("p_bar", p_bar);
            if let Some(ps) = ps {
                let mut t = Table::new(&["p", "phi", "phi_prime", "phi_second", "criticality"]);
                for &p in &ps {
                    let ctx = || LabError::engine(format!("analyze at p = {p}"));
                    let phi = fs.phi(p).map_err(ctx())?;
                    let (d1, d2) = fs.phi_derivs(p).map_err(ctx())?;
                    let crit = fs.criticality(p).map_err(ctx())?;
                    t.push(vec![p.into(), phi.into(), d1.into(), d2.into(), crit.into()]);
                }
                out.table("phi.csv", t);
            }
        }
    }
    Ok(out)
}

fn field_table(field: &GridField) -> Table {
    let mut t = Table::new(&["x", "value"]);
    for (k, v) in field.values.iter().enumerate() {
        t.push(vec![field.x(k).into(), (*v).into()]);
    }
    t
}

pub fn brw(cfg: &ExperimentConfig, runner: &Runner) -> Result<RunReport> {
    let op = operation(cfg, BRW_OPERATIONS, "brw")?;
    let m = offspring(cfg, "brw")?;
    let p = &cfg.params;
    let f = p.test_function()?;
    let spec = grid_spec(cfg)?;
    let c = finite(p.c.unwrap_or(0.0), "c")?;
    let mut out = RunReport::new("brw", cfg);
    let ctx = |what: &str| LabError::engine(format!("brw {op}: {what}"));
    let drift = |theta: f64| -> Result<(f64, f64)> {
        let s = Spectrum::new(&m);
        let law = s.tilt(theta).map_err(ctx("tilt"))?;
        Ok((law.drift, law.sigma()))
    };
    match op {
        "u_grid" | "v_grid" => {
            let n = require(p.n, "n")?;
            let targets = p.targets.clone().unwrap_or_else(|| vec![0.0]);
            for (k, x) in targets.iter().enumerate() {
                finite(*x, &format!("targets[{k}]"))?;
            }
            let spec = spec.with_targets(targets.iter().copied());
            let fields = if op == "u_grid" {
                u_grid_all(&m, &f, n, &spec)
            } else {
                v_grid_all(&m, &f, n, &spec)
            }
            .map_err(ctx("grid recursion"))?;
            let mut t = Table::new(&["n", "x", "value", "outside_window"]);
            for g in &fields {
                for &x in &targets {
                    let (v, miss) = g.at_checked(x);
                    t.push(vec![g.n.into(), x.into(), v.into(), miss.into()]);
                }
            }
            let last = &fields[n];
            out.diag("grid_len", last.len() as f64);
            out.diag("delta", last.delta);
            out.diag("mass_loss", fields.iter().map(|g| g.mass_loss).fold(0.0, f64::max));
            out.diag("edge_max", last.edge_max());
            out.table(&format!("{op}.csv"), field_table(last));
            out.table("targets.csv", t);
        }
        "v_tilted" => {
            let (n, theta) = (require(p.n, "n")?, finite(require(p.theta, "theta")?, "theta")?);
            let r = v_tilted(&m, &f, n, theta, c, p.runs(100_000)?, runner).map_err(ctx("estimator"))?;
            out.report("v_tilted", r);
        }
        "u_palm" => {
            let (n, theta) = (require(p.n, "n")?, finite(require(p.theta, "theta")?, "theta")?);
            let runs = p.runs(100_000)?;
            let (a, _) = drift(theta)?;
            let x = -(n as f64) * a + c;
            let fields = u_grid_all(&m, &f, n, &spec.with_targets([x])).map_err(ctx("grid recursion"))?;
            let opts = PalmOptions { n_walks: runs, inner: 1 };
            let r = u_palm_representation(&m, &f, n, theta, c, &fields, &opts, runner).map_err(ctx("estimator"))?;
            let lambda_star = Spectrum::new(&m).rate_at_theta(theta).map_err(ctx("rate"))?;
            let grid = (n as f64 * lambda_star).exp() * fields[n].at(x);
            out.report("u_palm", r);
            out.report("u_grid_scaled", EstimatorReport::exact(grid).with_diag("x", x));
        }
        "estimate_g" | "estimate_k" => {
            let theta = finite(require(p.theta, "theta")?, "theta")?;
            let r_max = integer(p.r_max.unwrap_or(30.0), "r_max")?;
            let runs = p.runs(10_000)?;
            let (a, sigma) = drift(theta)?;
            let rf = r_max as f64;
            let lo = f.support().0.min(p.y.unwrap_or(0.0)) - a * rf - 8.0 * sigma * rf.sqrt() - 5.0;
            let fields = u_grid_all(&m, &f, r_max, &spec.with_targets([lo])).map_err(ctx("grid recursion"))?;
            let opts = PalmOptions { n_walks: runs, inner: 1 };
            if op == "estimate_g" {
                let y = finite(require(p.y, "y")?, "y")?;
                let r = estimate_g(&m, theta, y, r_max, &fields, &opts, runner).map_err(ctx("estimator"))?;
                out.report("g", r);
            } else {
                let nodes = p.nodes.unwrap_or(20);
                let r = estimate_k(&m, &f, theta, nodes, r_max, &fields, &opts, runner).map_err(ctx("estimator"))?;
                out.report("k", r);
            }
        }
        "population" => {
            let n = require(p.n, "n")?;
            let runs = p.runs(10_000)?;
            let parts = runner.blocks(TAG_POPULATION, runs, |rng, range| -> presence_core::Result<(Moments, Moments)> {
                let (mut u, mut v) = (Moments::new(), Moments::new());
                for _ in range {
                    let gen = simulate_population(&m, n, DEFAULT_CAP, rng)?;
                    let (mut miss, mut count) = (1.0, 0.0);
                    for z in gen {
                        let w = f.eval(c + z);
                        miss *= 1.0 - w;
                        count += w;
                    }
                    u.push(1.0 - miss);
                    v.push(count);
                }
                Ok((u, v))
            });
            let (mut u, mut v) = (Moments::new(), Moments::new());
            for part in parts {
                let (a, b) = part.map_err(ctx("simulation"))?;
                u.merge(&a);
                v.merge(&b);
            }
            out.report("u_mc", EstimatorReport::from_moments(&u, runner.seed).with_diag("x", c));
            out.report("v_mc", EstimatorReport::from_moments(&v, runner.seed).with_diag("x", c));
        }
        _ => unreachable!("operation validated"),
    }
    Ok(out)
}

fn skeleton_options(cfg: &ExperimentConfig) -> Result<SkeletonOptions> {
    Ok(SkeletonOptions {
        ensemble: cfg.params.ensemble.unwrap_or(DEFAULT_ENSEMBLE),
        replicates: cfg.params.replicates.unwrap_or(4),
        grid: grid_spec(cfg)?,
    })
}

pub fn frag(cfg: &ExperimentConfig, runner: &Runner) -> Result<RunReport> {
    let op = operation(cfg, FRAG_OPERATIONS, "frag")?;
    let d = dislocation(cfg, "frag")?;
    let p = &cfg.params;
    let c = finite(p.c.unwrap_or(0.0), "c")?;
    let mut out = RunReport::new("frag", cfg);
    let ctx = |what: &str| LabError::engine(format!("frag {op}: {what}"));
    let exponent = || -> Result<f64> { finite(require(p.p, "p")?, "p") };
    let time = |field: &str, v: Option<f64>| -> Result<f64> {
        let t = finite(require(v, field)?, field)?;
        if t < 0.0 {
            return Err(LabError::config(format!("params.{field}"), "must be >= 0"));
        }
        Ok(t)
    };
    match op {
        "martingale" => {
            let (q, t) = (exponent()?, time("t", p.t)?);
            let runs = p.runs(10_000)?;
            d.phi(q).map_err(ctx("exponent"))?;
            let parts = runner.blocks(TAG_MART_PATHS, runs, |rng, range| -> presence_core::Result<Vec<f64>> {
                range
                    .map(|_| {
                        let s = simulate_fragmentation_with(&d, t, &SimOptions::default(), rng)?;
                        martingale_value(&d, q, &s)
                    })
                    .collect()
            });
            let mut t_out = Table::new(&["path", "value"]);
            let mut m = Moments::new();
            let mut k = 0usize;
            for part in parts {
                for v in part.map_err(ctx("simulation"))? {
                    m.push(v);
                    t_out.push(vec![k.into(), v.into()]);
                    k += 1;
                }
            }
            out.report("martingale", EstimatorReport::from_moments(&m, runner.seed).with_diag("p", q).with_diag("t", t));
            out.table("martingale.csv", t_out);
        }
        "uv" => {
            let (q, t) = (exponent()?, time("t", p.t)?);
            let (alpha, beta) = p.window()?;
            let (u, v) = estimate_uv(&d, q, t, alpha, beta, p.runs(100_000)?, &UvOptions::default(), runner)
                .map_err(ctx("estimator"))?;
            out.report("u", u);
            out.report("v", v);
        }
        "v_levy" => {
            let (q, t) = (exponent()?, time("t", p.t)?);
            let (alpha, beta) = p.window()?;
            let r = v_levy(&d, q, t, c, alpha, beta, p.runs(1_000_000)?, runner).map_err(ctx("estimator"))?;
            out.report("v_levy", r);
        }
        "kp_skeleton" => {
            let q = exponent()?;
            let horizon = time("horizon", p.horizon)?;
            let h = positive(p.h.unwrap_or(0.5), "h")?;
            let f = p.test_function()?;
            let r = kp_via_skeleton(&d, q, h, horizon, c, &f, &skeleton_options(cfg)?, runner).map_err(ctx("estimator"))?;
            out.report("kp", r);
        }
        "kp_mesh" => {
            let q = exponent()?;
            let horizon = time("horizon", p.horizon)?;
            let (h1, h2) = p.meshes.unwrap_or((0.25, 0.5));
            let meshes = (positive(h1, "meshes")?, positive(h2, "meshes")?);
            let f = p.test_function()?;
            let (a, b) = kp_mesh_invariance(&d, q, meshes, horizon, c, &f, &skeleton_options(cfg)?, runner)
                .map_err(ctx("estimator"))?;
            out.diag("ratio", a.estimate / b.estimate);
            out.report("kp_h1", a);
            out.report("kp_h2", b);
        }
        "conditioned" => {
            let q = exponent()?;
            let (s, t) = (time("s", p.s)?, time("t", p.t)?);
            let event = p
                .event
                .ok_or_else(|| LabError::config("params.event", "required by this operation"))?;
            let opts = ConditioningOptions {
                n_paths: p.runs(100_000)?,
                h: positive(p.h.unwrap_or(0.5), "h")?,
                skeleton: skeleton_options(cfg)?,
            };
            let f = p.test_function()?;
            let (cond, ht) = conditioned_law(&d, q, s, t, event, &f, &opts, runner).map_err(ctx("estimator"))?;
            out.diag("relative_gap", cond.estimate / ht.estimate - 1.0);
            out.report("conditional", cond);
            out.report("htransform", ht);
        }
        "g_levy" | "k_levy" => {
            let q = exponent()?;
            let r_max = positive(require(p.r_max, "r_max")?, "r_max")?;
            let h = positive(p.h.unwrap_or(0.5), "h")?;
            let f = p.test_function()?;
            let runs = p.runs(5000)?;
            let fields = levy_presence(&d, q, h, r_max, &f, &skeleton_options(cfg)?, &runner.child(1))
                .map_err(ctx("skeleton fields"))?;
            let r = if op == "g_levy" {
                let y = finite(require(p.y, "y")?, "y")?;
                estimate_g_levy(&d, q, y, r_max, &fields, runs, &runner.child(0))
            } else {
                estimate_k_levy(&d, q, &f, p.nodes.unwrap_or(10), r_max, &fields, runs, &runner.child(0))
            }
            .map_err(ctx("estimator"))?;
            out.report(if op == "g_levy" { "g_levy" } else { "k_levy" }, r);
        }
        "skeleton_residual" => {
            let q = exponent()?;
            let h = positive(require(p.h, "h")?, "h")?;
            let r = presence_core::analytic::skeleton_spectrum_residual(&d, h, q + 1.0, p.runs(10_000)?, runner)
                .map_err(ctx("estimator"))?;
            out.report("residual", r.with_diag("p", q).with_diag("h", h));
        }
        "simulate" => {
            let t = time("t", p.t)?;
            let runs = p.runs(1)?;
            let opts = SimOptions {
                record: true,
                ..SimOptions::default()
            };
            let mut traj = String::from("run,t,event,parent,child,log_mass\n");
            let mut masses = Table::new(&["run", "rank", "mass"]);
            let mut counts = Moments::new();
            for run in 0..runs {
                let mut rng = runner.rng(TAG_TRAJECTORY, run as u32);
                let s = simulate_fragmentation_with(&d, t, &opts, &mut rng).map_err(ctx("simulation"))?;
                if let Some(csv) = s.trajectory_csv() {
                    for line in csv.lines().skip(1) {
                        traj.push_str(&format!("{run},{line}\n"));
                    }
                }
                for (rank, x) in s.ranked_masses().into_iter().enumerate() {
                    masses.push(vec![run.into(), rank.into(), x.into()]);
                }
                counts.push(s.fragments.len() as f64);
            }
            out.report("fragments", EstimatorReport::from_moments(&counts, runner.seed).with_diag("t", t));
            out.text("trajectory.csv", traj);
            out.table("masses.csv", masses);
        }
        _ => unreachable!("operation validated"),
    }
    Ok(out)
}
