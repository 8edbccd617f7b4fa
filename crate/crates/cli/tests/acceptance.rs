//! Acceptance criteria 1-12. Expected values come from the closed forms and
//! series below; the library supplies only measurements. Prints one PASS/FAIL
//! line per criterion and exits nonzero on any unexpected outcome.

use std::f64::consts::{LN_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use presence_core::Runner;
use presence_lab::verify::{judge, measure, run_suite, Measurement, Suite};
use statrs::function::gamma::{gamma_lr, ln_gamma};

const SEED: u64 = 0x5EED_2026;

const GW_ABS: f64 = 1e-9;
const GW_RATIO_ABS: f64 = 1e-8;
const DUALITY_ABS: f64 = 1e-8;
const CENTERING_Z: f64 = 4.0;
const LCLT_REL: f64 = 0.02;
const PALM_Z: f64 = 3.0;
const K_REL: f64 = 0.10;
const SHIFT_Z: f64 = 2.0;
const MOMENT_Z: f64 = 3.0;
const SKELETON_Z: f64 = 3.0;
const LEVY_BAND: f64 = 0.25;
const LEVY_CROSS_Z: f64 = 3.0;
const SERIES_Z: f64 = 4.0;
const MESH_REL: f64 = 0.15;
const COND_REL: f64 = 0.10;
const TRIVIAL_Z: f64 = 3.0;

/// Criteria expected to fail, with the band the measured outcome must fall in.
/// 11: the conditional law at t = 12 sits about 11% below its h-transform
/// limit (noise-free reference -11.6%); the gap closes with t but not by t = 12.
const KNOWN_RED: &[(u8, &str, f64, f64)] = &[(11, "relative_gap", -0.15, -0.07)];

fn z(x: f64, target: f64, se: f64) -> f64 {
    if se == 0.0 {
        if x == target { 0.0 } else { f64::INFINITY }
    } else {
        (x - target) / se
    }
}

/// `V_t[1_[0,1]](y)` of the uniform binary fragmentation, many-to-one series:
/// the tagged log-mass is compound Poisson with rate 1 and Exp(2) jumps.
fn v_series(t: f64, y: f64) -> f64 {
    let f0 = if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 };
    let mut total = (-t).exp() * f0;
    let (a, b) = ((y - 1.0).max(0.0), y.max(0.0));
    if b <= 0.0 {
        return total;
    }
    for k in 1..400 {
        let kf = k as f64;
        let w = (-t + kf * (2.0 * t).ln() - ln_gamma(kf + 1.0)).exp();
        total += w * (gamma_lr(kf, b) - if a > 0.0 { gamma_lr(kf, a) } else { 0.0 });
    }
    total
}

/// Uniform binary: `Phi(p) = p / (p + 2)`.
fn phi_uniform(p: f64) -> f64 {
    p / (p + 2.0)
}

struct Verdict {
    pass: bool,
    detail: String,
    /// Named quantity used by `KNOWN_RED`.
    key: Option<(&'static str, f64)>,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, key: None }
}

fn check(id: u8, m: &Measurement) -> Verdict {
    match id {
        1 => {
            let (u, v) = (m.series("u"), m.series("v"));
            let mut worst: f64 = 0.0;
            for n in 0..=30 {
                let exact_u = 1.0 / (2f64.powi(n + 1) - 1.0);
                let exact_v = 2f64.powi(-n);
                worst = worst.max((u[n as usize] - exact_u).abs()).max((v[n as usize] - exact_v).abs());
            }
            let ratio = u[30] / v[30];
            let exact = 2f64.powi(30) / (2f64.powi(31) - 1.0);
            let dr = (ratio - exact).abs();
            verdict(
                u.len() == 31 && worst <= GW_ABS && dr <= GW_RATIO_ABS,
                format!("max abs error {worst:.2e}, ratio at n=30 {ratio:.12} (K = 1/2, error {dr:.2e})"),
            )
        }
        2 => {
            let mut worst: f64 = 0.0;
            let models: [(&str, fn(f64) -> f64, fn(f64) -> f64); 2] = [
                ("gaussian-2", |t| LN_2 + t * t / 2.0, |t| t),
                ("binary-pm1", |t| (2.0 * t.cosh()).ln(), |t| t.tanh()),
            ];
            let mut count = 0;
            for (name, lam, dlam) in models {
                let theta = m.series(&format!("{name}/theta"));
                let rate = m.series(&format!("{name}/rate"));
                for (t, r) in theta.iter().zip(rate) {
                    worst = worst.max((r + lam(*t) - t * dlam(*t)).abs());
                    count += 1;
                }
            }
            verdict(count == 100 && worst < DUALITY_ABS, format!("{count} points, max residual {worst:.2e}"))
        }
        3 => {
            let n = m.value("gaussian-2/n");
            // Gaussian-2 tilted at theta: N(0, 1) steps.
            let zg = m.value("gaussian-2/mean") / (1.0 / n.sqrt());
            let zs = m.value("skeleton/mean") / (m.value("skeleton/sigma") / m.value("skeleton/n").sqrt());
            verdict(
                n >= 1e5 && zg.abs() <= CENTERING_Z && zs.abs() <= CENTERING_Z,
                format!("gaussian-2 z {zg:+.2}, skeleton z {zs:+.2}"),
            )
        }
        4 => {
            let limit = (1.0 - (-2f64).exp()) / 2.0;
            let scaled = (2.0 * PI * 50.0).sqrt() * m.value("estimate");
            let rel = scaled / limit - 1.0;
            verdict(rel.abs() <= LCLT_REL, format!("scaled {scaled:.5} vs {limit:.5} ({:+.2}%)", 100.0 * rel))
        }
        5 => {
            let lambda_star = 2.0 - LN_2;
            let (ns, palm, se, grid) = (m.series("n"), m.series("palm"), m.series("palm_stderr"), m.series("grid_u"));
            let zs: Vec<f64> = (0..ns.len()).map(|i| z(palm[i], (ns[i] * lambda_star).exp() * grid[i], se[i])).collect();
            verdict(
                ns == [1.0, 2.0, 3.0, 5.0] && zs.iter().all(|x| x.abs() <= PALM_Z),
                format!("z by n: {}", zs.iter().map(|x| format!("{x:+.2}")).collect::<Vec<_>>().join(" ")),
            )
        }
        6 => {
            let rel = m.value("k") / m.value("ratio") - 1.0;
            let gap = m.value("palm_ratio_shift") - m.value("palm_ratio");
            let se = (m.value("palm_ratio_stderr").powi(2) + m.value("palm_ratio_shift_stderr").powi(2)).sqrt();
            verdict(
                rel.abs() <= K_REL && (gap / se).abs() <= SHIFT_Z,
                format!(
                    "K {:.4} vs u/v {:.4} ({:+.2}%), c=0.3 shift {:+.2} stderr",
                    m.value("k"),
                    m.value("ratio"),
                    100.0 * rel,
                    gap / se
                ),
            )
        }
        7 => {
            let zs: Vec<f64> = m.series("mean").iter().zip(m.series("stderr")).map(|(x, s)| z(*x, 1.0, *s)).collect();
            let exact = m.value("m0") == 1.0 && m.value("m0_stderr") == 0.0;
            verdict(
                m.series("p") == [0.5, 1.0, 2.0] && zs.iter().all(|x| x.abs() <= MOMENT_Z) && exact,
                format!(
                    "z by p: {}, M(0,3) = {}",
                    zs.iter().map(|x| format!("{x:+.2}")).collect::<Vec<_>>().join(" "),
                    m.value("m0")
                ),
            )
        }
        8 => {
            let (h, p, lh, se) = (m.series("h"), m.series("p"), m.series("lambda_hat"), m.series("stderr"));
            let zs: Vec<f64> = (0..h.len()).map(|i| z(lh[i] + h[i] * phi_uniform(p[i]), 0.0, se[i])).collect();
            verdict(
                zs.len() == 2 && zs.iter().all(|x| x.abs() <= SKELETON_Z),
                format!("z by (h, p): {}", zs.iter().map(|x| format!("{x:+.2}")).collect::<Vec<_>>().join(" ")),
            )
        }
        9 => {
            // Phi''(2) = -1/16, Phi'(2) = 1/8, growth e^{t((p+1)Phi' - Phi)} = e^{-t/8}.
            let pred = (2.0 * PI / 16.0).powf(-0.5) / 3.0 * (1.0 - (-3f64).exp());
            let ts = m.series("t");
            let scale = |t: f64| t.sqrt() * (t / 8.0).exp();
            let (mv, ms, lv, ls) = (m.series("mc_v"), m.series("mc_v_stderr"), m.series("levy_v"), m.series("levy_v_stderr"));
            let mc_dev: Vec<f64> = (0..ts.len()).map(|i| scale(ts[i]) * mv[i] / pred - 1.0).collect();
            let levy_dev: Vec<f64> = (0..ts.len()).map(|i| (scale(ts[i]) * lv[i] / pred - 1.0).abs()).collect();
            let band = mc_dev.iter().all(|d| d.abs() <= LEVY_BAND);
            let monotone = levy_dev.windows(2).all(|w| w[1] <= w[0]);
            let cross = (0..ts.len()).all(|i| z(mv[i], lv[i], ms[i].hypot(ls[i])).abs() <= LEVY_CROSS_Z);
            let series_z: Vec<f64> = (0..ts.len()).map(|i| z(lv[i], v_series(ts[i], ts[i] / 8.0), ls[i])).collect();
            let exact = series_z.iter().all(|x| x.abs() <= SERIES_Z);
            verdict(
                ts == [10.0, 15.0, 20.0] && band && monotone && cross && exact,
                format!(
                    "MC deviation {}, levy deviation {}, levy vs series z {}",
                    mc_dev.iter().map(|d| format!("{:+.1}%", 100.0 * d)).collect::<Vec<_>>().join(" "),
                    levy_dev.iter().map(|d| format!("{:.2}%", 100.0 * d)).collect::<Vec<_>>().join(" "),
                    series_z.iter().map(|x| format!("{x:+.1}")).collect::<Vec<_>>().join(" ")
                ),
            )
        }
        10 => {
            let (a, b) = (m.value("k_h1"), m.value("k_h2"));
            let rel = a / b - 1.0;
            verdict(
                (0.0..1.0).contains(&a) && a > 0.0 && (0.0..1.0).contains(&b) && b > 0.0 && rel.abs() <= MESH_REL,
                format!("K(0.25) {a:.4}, K(0.5) {b:.4} ({:+.2}%)", 100.0 * rel),
            )
        }
        11 => {
            let rel = m.value("conditional") / m.value("htransform") - 1.0;
            let zc = z(m.value("trivial_conditional"), 1.0, m.value("trivial_conditional_stderr"));
            let zh = z(m.value("trivial_htransform"), 1.0, m.value("trivial_htransform_stderr"));
            let trivial = zc.abs() <= TRIVIAL_Z && zh.abs() <= TRIVIAL_Z;
            Verdict {
                pass: rel.abs() <= COND_REL && trivial,
                detail: format!(
                    "conditional {:.4} vs E[1_A M] {:.4} ({:+.2}%), trivial z {zc:+.2} / {zh:+.2}",
                    m.value("conditional"),
                    m.value("htransform"),
                    100.0 * rel
                ),
                key: Some(("relative_gap", rel)),
            }
        }
        12 => verdict(m.value("identical") == 1.0, format!("{} report bytes", m.value("bytes"))),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let runner = Runner::new(SEED);
    let mut unexpected = Vec::new();
    for id in 1..=12u8 {
        let start = Instant::now();
        let m = if id == 12 {
            // Determinism on the brw suite: 1 worker against 4.
            let one = run_suite(Suite::Brw, &runner.with_workers(1)).expect("brw suite").to_json();
            let four = run_suite(Suite::Brw, &runner.with_workers(4)).expect("brw suite").to_json();
            let mut m = Measurement::default();
            m.values.insert("identical".into(), f64::from(one == four));
            m.values.insert("bytes".into(), one.len() as f64);
            m
        } else {
            measure(id, &runner).unwrap_or_else(|e| panic!("criterion {id}: {e}"))
        };
        let v = check(id, &m);
        let (lib_pass, _) = judge(id, &m);
        let red = KNOWN_RED.iter().find(|r| r.0 == id);
        let label = if v.pass { "PASS" } else { "FAIL" };
        let note = match red {
            Some(_) => " [known red]",
            None => "",
        };
        println!("criterion {id:>2}: {label}{note}  {}  ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
        if lib_pass != v.pass {
            unexpected.push(format!("criterion {id}: verify suite verdict {lib_pass} disagrees"));
        }
        match red {
            None if !v.pass => unexpected.push(format!("criterion {id} failed")),
            Some((_, key, lo, hi)) => {
                let measured = v.key.filter(|(k, _)| k == key).map(|(_, x)| x);
                match measured {
                    _ if v.pass => unexpected.push(format!("criterion {id} is listed as known red but passed")),
                    Some(x) if (*lo..=*hi).contains(&x) => {}
                    other => unexpected.push(format!("criterion {id}: {key} = {other:?} outside [{lo}, {hi}]")),
                }
            }
            None => {}
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all outcomes as expected ({} known red)", KNOWN_RED.len());
        ExitCode::SUCCESS
    } else {
        for u in &unexpected {
            println!("acceptance: UNEXPECTED {u}");
        }
        ExitCode::FAILURE
    }
}
