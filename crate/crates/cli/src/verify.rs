use std::collections::BTreeMap;
use std::f64::consts::PI;

use presence_core::analytic::skeleton_spectrum_residual;
use presence_core::brw::{estimate_k, u_grid_all, u_palm_representation, v_grid_all, v_tilted, PalmOptions};
use presence_core::frag::{
    conditioned_law, estimate_uv, kp_mesh_invariance, martingale_mean, mean_count_prediction, skeleton_model, v_levy,
    ConditioningOptions, Event, SkeletonOptions, UvOptions,
};
use presence_core::{DislocationModel, GridSpec, OffspringModel, Runner, Spectrum, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::report::RunReport;
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Analytic,
    Brw,
    Frag,
    Full,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Analytic => "analytic",
            Suite::Brw => "brw",
            Suite::Frag => "frag",
            Suite::Full => "full",
        }
    }

    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::Analytic => vec![2, 3],
            Suite::Brw => vec![1, 4, 5, 6],
            Suite::Frag => vec![7, 8, 9, 10, 11],
            Suite::Full => (1..=12).collect(),
        }
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "gw-closed-form"),
    (2, "legendre-duality"),
    (3, "tilted-centering"),
    (4, "local-clt-scaling"),
    (5, "palm-representation"),
    (6, "k-consistency"),
    (7, "fragmentation-moments"),
    (8, "skeleton-identity"),
    (9, "levy-scaling"),
    (10, "skeleton-invariance"),
    (11, "htransform-conditioning"),
    (12, "determinism"),
];

pub fn criterion_name(id: u8) -> &'static str {
    CRITERIA.iter().find(|(i, _)| *i == id).map(|(_, n)| *n).unwrap_or("unknown")
}

/// Raw measured quantities of one criterion; expected values are not stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<f64>>,
}

impl Measurement {
    fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    fn push(&mut self, key: &str, v: f64) {
        self.series.entry(key.to_string()).or_default().push(v);
    }

    pub fn value(&self, key: &str) -> f64 {
        *self.values.get(key).unwrap_or_else(|| panic!("no measured value {key:?}"))
    }

    pub fn series(&self, key: &str) -> &[f64] {
        self.series.get(key).unwrap_or_else(|| panic!("no measured series {key:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub measurement: Measurement,
}

pub const GW_Q: f64 = 1.0 / 3.0;
pub const GW_DEPTH: usize = 30;
pub const DUALITY_POINTS: usize = 50;
pub const CENTERING_DRAWS: usize = 100_000;
pub const SKELETON_ENSEMBLE: usize = 10_000;
pub const LCLT_DEPTH: usize = 50;
pub const LCLT_WALKS: usize = 1_000_000;
pub const PALM_DEPTHS: [usize; 4] = [1, 2, 3, 5];
pub const PALM_WALKS: usize = 100_000;
pub const K_DEPTH: usize = 40;
pub const K_R_MAX: usize = 30;
pub const K_WALKS: usize = 40_000;
pub const K_NODES: usize = 20;
pub const K_SHIFT: f64 = 0.3;
pub const SHIFT_WALKS: usize = 200_000;
pub const MOMENT_EXPONENTS: [f64; 3] = [0.5, 1.0, 2.0];
pub const MOMENT_PATHS: usize = 10_000;
pub const SKELETON_CASES: [(f64, f64); 2] = [(0.25, 1.0), (0.5, 2.0)];
pub const LEVY_TIMES: [f64; 3] = [10.0, 15.0, 20.0];
pub const LEVY_MC_PATHS: usize = 100_000;
pub const LEVY_PATHS: usize = 10_000_000;
pub const MESH_HORIZON: f64 = 40.0;
pub const COND_T: f64 = 12.0;
pub const COND_S: f64 = 1.0;
pub const COND_X: f64 = 0.7;
pub const COND_PATHS: usize = 100_000;
pub const COND_ENSEMBLE: usize = 100_000;

fn unit() -> TestFunction {
    TestFunction::indicator(0.0, 1.0).expect("valid window")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Runs the measurements of criterion `id` with streams derived from `runner`.
pub fn measure(id: u8, runner: &Runner) -> Result<Measurement> {
    let runner = runner.child(u64::from(id));
    let ctx = |what: &str| LabError::engine(format!("criterion {id} ({}): {what}", criterion_name(id)));
    let mut m = Measurement::default();
    match id {
        1 => {
            let model = OffspringModel::geometric_origin(GW_Q).map_err(ctx("model"))?;
            let f = TestFunction::cell(0.0, 1.0);
            let spec = GridSpec::default().with_targets([0.0]);
            let u = u_grid_all(&model, &f, GW_DEPTH, &spec).map_err(ctx("u grid"))?;
            let v = v_grid_all(&model, &f, GW_DEPTH, &spec).map_err(ctx("v grid"))?;
            for n in 0..=GW_DEPTH {
                m.push("u", u[n].at(0.0));
                m.push("v", v[n].at(0.0));
            }
        }
        2 => {
            for model in [OffspringModel::gaussian2(), OffspringModel::binary_pm1()] {
                let s = Spectrum::new(&model);
                for theta in linspace(-3.0, 3.0, DUALITY_POINTS) {
                    let a = s.derivative(theta).map_err(ctx("derivative"))?;
                    let (_, rate) = s.rate_function(a).map_err(ctx("rate function"))?;
                    m.push(&format!("{}/theta", model.name), theta);
                    m.push(&format!("{}/lambda", model.name), s.cumulant(theta).map_err(ctx("cumulant"))?);
                    m.push(&format!("{}/a", model.name), a);
                    m.push(&format!("{}/rate", model.name), rate);
                }
            }
        }
        3 => {
            let g = OffspringModel::gaussian2();
            let law = Spectrum::new(&g).tilt(2.0).map_err(ctx("tilt"))?;
            let r = law.empirical_mean(CENTERING_DRAWS, &runner.child(0));
            m.set("gaussian-2/mean", r.estimate);
            m.set("gaussian-2/sigma", law.sigma());
            m.set("gaussian-2/n", r.n as f64);
            let sk = skeleton_model(&DislocationModel::uniform_binary(), 0.5, SKELETON_ENSEMBLE, &runner.child(1))
                .map_err(ctx("skeleton"))?;
            let law = Spectrum::new(&sk).tilt(3.0).map_err(ctx("tilt"))?;
            let r = law.empirical_mean(CENTERING_DRAWS, &runner.child(2));
            m.set("skeleton/mean", r.estimate);
            m.set("skeleton/sigma", law.sigma());
            m.set("skeleton/n", r.n as f64);
        }
        4 => {
            let g = OffspringModel::gaussian2();
            let r = v_tilted(&g, &unit(), LCLT_DEPTH, 2.0, 0.0, LCLT_WALKS, &runner).map_err(ctx("estimator"))?;
            let sigma = r.diag("sigma").unwrap_or(f64::NAN);
            m.set("estimate", r.estimate);
            m.set("stderr", r.stderr);
            m.set("sigma", sigma);
            m.set("scaled", sigma * (2.0 * PI * LCLT_DEPTH as f64).sqrt() * r.estimate);
        }
        5 => {
            let g = OffspringModel::gaussian2();
            let s = Spectrum::new(&g);
            let a = s.derivative(2.0).map_err(ctx("derivative"))?;
            let lambda_star = s.rate_at_theta(2.0).map_err(ctx("rate"))?;
            m.set("lambda_star", lambda_star);
            m.set("a", a);
            for n in PALM_DEPTHS {
                let x = -a * n as f64;
                let fields = u_grid_all(&g, &unit(), n, &GridSpec::default().with_targets([x])).map_err(ctx("u grid"))?;
                let opts = PalmOptions { n_walks: PALM_WALKS, inner: 1 };
                let r = u_palm_representation(&g, &unit(), n, 2.0, 0.0, &fields, &opts, &runner.child(n as u64))
                    .map_err(ctx("palm representation"))?;
                m.push("n", n as f64);
                m.push("palm", r.estimate);
                m.push("palm_stderr", r.stderr);
                m.push("grid_u", fields[n].at(x));
            }
        }
        6 => {
            let g = OffspringModel::gaussian2();
            let f = unit();
            let law = Spectrum::new(&g).tilt(2.0).map_err(ctx("tilt"))?;
            let a = law.drift;
            let x = -a * K_DEPTH as f64;
            let spec = GridSpec::default().with_targets([x, x + K_SHIFT]);
            let u = u_grid_all(&g, &f, K_DEPTH, &spec).map_err(ctx("u grid"))?;
            let v = v_grid_all(&g, &f, K_DEPTH, &spec).map_err(ctx("v grid"))?;
            m.set("ratio", u[K_DEPTH].at(x) / v[K_DEPTH].at(x));
            m.set("ratio_shift", u[K_DEPTH].at(x + K_SHIFT) / v[K_DEPTH].at(x + K_SHIFT));
            let r = K_R_MAX as f64;
            let lo = -a * r - 8.0 * law.sigma() * r.sqrt() - 5.0;
            let fields = u_grid_all(&g, &f, K_R_MAX, &GridSpec::default().with_targets([lo])).map_err(ctx("u grid"))?;
            let opts = PalmOptions { n_walks: K_WALKS, inner: 1 };
            let k = estimate_k(&g, &f, 2.0, K_NODES, K_R_MAX, &fields, &opts, &runner.child(0)).map_err(ctx("estimate K"))?;
            m.set("k", k.estimate);
            m.set("k_stderr", k.stderr);
            let opts = PalmOptions { n_walks: SHIFT_WALKS, inner: 1 };
            for (i, (c, key)) in [(0.0, "palm_ratio"), (K_SHIFT, "palm_ratio_shift")].into_iter().enumerate() {
                let up = u_palm_representation(&g, &f, K_DEPTH, 2.0, c, &u, &opts, &runner.child(1 + 2 * i as u64))
                    .map_err(ctx("palm representation"))?;
                let vt = v_tilted(&g, &f, K_DEPTH, 2.0, c, SHIFT_WALKS, &runner.child(2 + 2 * i as u64))
                    .map_err(ctx("tilted mean"))?;
                let ratio = up.estimate / vt.estimate;
                let rel = ((up.stderr / up.estimate).powi(2) + (vt.stderr / vt.estimate).powi(2)).sqrt();
                m.set(key, ratio);
                m.set(&format!("{key}_stderr"), ratio * rel);
            }
        }
        7 => {
            let d = DislocationModel::uniform_binary();
            for (k, p) in MOMENT_EXPONENTS.into_iter().enumerate() {
                let r = martingale_mean(&d, p, 3.0, MOMENT_PATHS, &runner.child(k as u64)).map_err(ctx("martingale"))?;
                m.push("p", p);
                m.push("mean", r.estimate);
                m.push("stderr", r.stderr);
            }
            let r = martingale_mean(&d, 0.0, 3.0, MOMENT_PATHS, &runner.child(9)).map_err(ctx("martingale"))?;
            m.set("m0", r.estimate);
            m.set("m0_stderr", r.stderr);
        }
        8 => {
            let d = DislocationModel::uniform_binary();
            for (k, (h, p)) in SKELETON_CASES.into_iter().enumerate() {
                let r = skeleton_spectrum_residual(&d, h, p + 1.0, SKELETON_ENSEMBLE, &runner.child(k as u64))
                    .map_err(ctx("skeleton spectrum"))?;
                m.push("h", h);
                m.push("p", p);
                m.push("lambda_hat", r.diag("lambda_hat").unwrap_or(f64::NAN));
                m.push("residual", r.estimate);
                m.push("stderr", r.stderr);
            }
        }
        9 => {
            let d = DislocationModel::uniform_binary();
            m.set("prediction", mean_count_prediction(&d, 2.0, 0.0, 1.0).map_err(ctx("prediction"))?);
            for (k, t) in LEVY_TIMES.into_iter().enumerate() {
                let (_, v) = estimate_uv(&d, 2.0, t, 0.0, 1.0, LEVY_MC_PATHS, &UvOptions::default(), &runner.child(k as u64))
                    .map_err(ctx("pruned simulation"))?;
                let l = v_levy(&d, 2.0, t, 0.0, 0.0, 1.0, LEVY_PATHS, &runner.child(10 + k as u64)).map_err(ctx("levy"))?;
                let diag = |r: &presence_core::EstimatorReport, key: &str| r.diag(key).unwrap_or(f64::NAN);
                m.push("t", t);
                m.push("mc_v", v.estimate);
                m.push("mc_v_stderr", v.stderr);
                m.push("mc_scaled", diag(&v, "scaled"));
                m.push("mc_scaled_stderr", diag(&v, "scaled_stderr"));
                m.push("levy_v", l.estimate);
                m.push("levy_v_stderr", l.stderr);
                m.push("levy_scaled", diag(&l, "scaled"));
                m.push("levy_scaled_stderr", diag(&l, "scaled_stderr"));
            }
        }
        10 => {
            let d = DislocationModel::uniform_binary();
            let (a, b) = kp_mesh_invariance(&d, 2.0, (0.25, 0.5), MESH_HORIZON, 0.0, &unit(), &SkeletonOptions::default(), &runner)
                .map_err(ctx("skeleton"))?;
            m.set("k_h1", a.estimate);
            m.set("k_h1_stderr", a.stderr);
            m.set("k_h2", b.estimate);
            m.set("k_h2_stderr", b.stderr);
        }
        11 => {
            let d = DislocationModel::uniform_binary();
            let opts = ConditioningOptions {
                n_paths: COND_PATHS,
                h: 0.5,
                skeleton: SkeletonOptions {
                    ensemble: COND_ENSEMBLE,
                    ..SkeletonOptions::default()
                },
            };
            let cases = [(Event::MaxMassAtMost { x: COND_X }, ""), (Event::Always, "trivial_")];
            for (k, (event, prefix)) in cases.into_iter().enumerate() {
                let (c, h) = conditioned_law(&d, 2.0, COND_S, COND_T, event, &unit(), &opts, &runner.child(k as u64))
                    .map_err(ctx("conditioning"))?;
                m.set(&format!("{prefix}conditional"), c.estimate);
                m.set(&format!("{prefix}conditional_stderr"), c.stderr);
                m.set(&format!("{prefix}htransform"), h.estimate);
                m.set(&format!("{prefix}htransform_stderr"), h.stderr);
            }
        }
        12 => {
            let one = run_suite(Suite::Analytic, &runner.with_workers(1))?.to_json();
            let four = run_suite(Suite::Analytic, &runner.with_workers(4))?.to_json();
            m.set("identical", f64::from(one == four));
            m.set("bytes", one.len() as f64);
        }
        _ => return Err(LabError::config("criterion", format!("no criterion {id}"))),
    }
    Ok(m)
}

fn within(x: f64, target: f64, k: f64, se: f64) -> bool {
    (x - target).abs() <= k * se
}

/// Verdict and a one-line summary for a measurement.
pub fn judge(id: u8, m: &Measurement) -> (bool, String) {
    match id {
        1 => {
            let (u, v) = (m.series("u"), m.series("v"));
            let mut du: f64 = 0.0;
            let mut dv: f64 = 0.0;
            for n in 0..u.len() {
                du = du.max((u[n] - 1.0 / (2f64.powi(n as i32 + 1) - 1.0)).abs());
                dv = dv.max((v[n] - 0.5f64.powi(n as i32)).abs());
            }
            let n = (u.len() - 1) as i32;
            let dr = (u[n as usize] / v[n as usize] - 2f64.powi(n) / (2f64.powi(n + 1) - 1.0)).abs();
            (
                du <= 1e-9 && dv <= 1e-9 && dr <= 1e-8,
                format!("max |u err| {du:.3e}, max |v err| {dv:.3e}, ratio err {dr:.3e}"),
            )
        }
        2 => {
            let mut worst: f64 = 0.0;
            for name in ["gaussian-2", "binary-pm1"] {
                let get = |k: &str| m.series(&format!("{name}/{k}"));
                let (th, lam, a, rate) = (get("theta"), get("lambda"), get("a"), get("rate"));
                for i in 0..th.len() {
                    worst = worst.max((rate[i] + lam[i] - th[i] * a[i]).abs());
                }
            }
            (worst < 1e-8, format!("max duality residual {worst:.3e}"))
        }
        3 => {
            let mut ok = true;
            let mut parts = Vec::new();
            for name in ["gaussian-2", "skeleton"] {
                let (mean, sigma, n) = (m.value(&format!("{name}/mean")), m.value(&format!("{name}/sigma")), m.value(&format!("{name}/n")));
                let z = mean / (sigma / n.sqrt());
                ok &= z.abs() <= 4.0;
                parts.push(format!("{name} z {z:.2}"));
            }
            (ok, parts.join(", "))
        }
        4 => {
            let limit = -(-2f64).exp_m1() / 2.0;
            let rel = m.value("scaled") / limit - 1.0;
            (rel.abs() <= 0.02, format!("scaled {:.5} vs {limit:.5} ({:+.2}%)", m.value("scaled"), 100.0 * rel))
        }
        5 => {
            let ls = m.value("lambda_star");
            let (ns, palm, se, grid) = (m.series("n"), m.series("palm"), m.series("palm_stderr"), m.series("grid_u"));
            let mut worst: f64 = 0.0;
            for i in 0..ns.len() {
                worst = worst.max(((palm[i] - (ns[i] * ls).exp() * grid[i]) / se[i]).abs());
            }
            (worst <= 3.0, format!("max |z| {worst:.2} over n = {ns:?}"))
        }
        6 => {
            let rel = m.value("k") / m.value("ratio") - 1.0;
            let se = m.value("palm_ratio_stderr").hypot(m.value("palm_ratio_shift_stderr"));
            let gap = m.value("palm_ratio_shift") - m.value("palm_ratio");
            (
                rel.abs() <= 0.1 && gap.abs() <= 2.0 * se,
                format!(
                    "K {:.4} vs ratio {:.4} ({:+.2}%), shift gap {gap:.4} ({:.2} stderr)",
                    m.value("k"),
                    m.value("ratio"),
                    100.0 * rel,
                    gap.abs() / se
                ),
            )
        }
        7 => {
            let (mean, se) = (m.series("mean"), m.series("stderr"));
            let worst = mean.iter().zip(se).map(|(x, s)| ((x - 1.0) / s).abs()).fold(0.0, f64::max);
            let exact = m.value("m0") == 1.0 && m.value("m0_stderr") == 0.0;
            (worst <= 3.0 && exact, format!("max |z| {worst:.2}, M(0, t) exact: {exact}"))
        }
        8 => {
            let (r, se) = (m.series("residual"), m.series("stderr"));
            let worst = r.iter().zip(se).map(|(x, s)| (x / s).abs()).fold(0.0, f64::max);
            (worst <= 3.0, format!("max |residual| / stderr {worst:.2}"))
        }
        9 => {
            let pred = m.value("prediction");
            let (mc, lv) = (m.series("mc_scaled"), m.series("levy_scaled"));
            let band = mc.iter().all(|x| (x / pred - 1.0).abs() <= 0.25);
            let dev: Vec<f64> = lv.iter().map(|x| (x / pred - 1.0).abs()).collect();
            let monotone = dev.windows(2).all(|w| w[1] <= w[0]);
            let (mv, ms, lvv, ls) = (m.series("mc_v"), m.series("mc_v_stderr"), m.series("levy_v"), m.series("levy_v_stderr"));
            let cross = (0..mv.len()).all(|i| within(mv[i], lvv[i], 3.0, ms[i].hypot(ls[i])));
            (
                band && monotone && cross,
                format!(
                    "deviations {} (monotone {monotone}), MC within 25% {band}, MC vs levy {cross}",
                    dev.iter().map(|d| format!("{:.2}%", 100.0 * d)).collect::<Vec<_>>().join(" ")
                ),
            )
        }
        10 => {
            let (a, b) = (m.value("k_h1"), m.value("k_h2"));
            let inside = a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0;
            let rel = a / b - 1.0;
            (inside && rel.abs() <= 0.15, format!("K(h=0.25) {a:.4}, K(h=0.5) {b:.4} ({:+.2}%)", 100.0 * rel))
        }
        11 => {
            let rel = m.value("conditional") / m.value("htransform") - 1.0;
            let trivial = within(m.value("trivial_conditional"), 1.0, 3.0, m.value("trivial_conditional_stderr"))
                && within(m.value("trivial_htransform"), 1.0, 3.0, m.value("trivial_htransform_stderr"));
            (
                rel.abs() <= 0.1 && trivial,
                format!(
                    "conditional {:.4} vs h-transform {:.4} ({:+.2}%), trivial event ok: {trivial}",
                    m.value("conditional"),
                    m.value("htransform"),
                    100.0 * rel
                ),
            )
        }
        12 => (m.value("identical") == 1.0, format!("reports identical across 1 and 4 workers: {}", m.value("identical") == 1.0)),
        _ => (false, format!("no criterion {id}")),
    }
}

pub fn run_criterion(id: u8, runner: &Runner) -> Result<CriterionOutcome> {
    let measurement = measure(id, runner)?;
    let (pass, detail) = judge(id, &measurement);
    Ok(CriterionOutcome {
        id,
        name: criterion_name(id).to_string(),
        pass,
        detail,
        measurement,
    })
}

pub fn run_suite(suite: Suite, runner: &Runner) -> Result<RunReport> {
    let mut out = RunReport::bare("verify");
    out.seed = runner.seed;
    out.suite = Some(suite.name().to_string());
    let mut t = Table::new(&["id", "name", "pass", "detail"]);
    for id in suite.criteria() {
        let c = run_criterion(id, runner)?;
        t.push(vec![
            Cell::Int(i64::from(c.id)),
            c.name.as_str().into(),
            (if c.pass { "PASS" } else { "FAIL" }).into(),
            c.detail.as_str().into(),
        ]);
        out.criteria.push(c);
    }
    out.diag("criteria", out.criteria.len() as f64);
    out.diag("failed", out.failed() as f64);
    out.table("summary.csv", t);
    Ok(out)
}
