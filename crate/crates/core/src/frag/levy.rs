//! The centred compound-Poisson process `zeta_t = t Phi'(p) - chi_t` whose
//! jumps follow `e^{-p D} L(dD)`, and the representation of `V_t` along it.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::dislocation::{DislocationModel, JumpSampler};
use super::estimators::{mean_count_prediction, v_growth};
use crate::brw::TestFunction;
use crate::error::{invalid, Result};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;

const TAG_LEVY: u32 = 0x1E71;
const TAG_CENTER: u32 = 0x1E72;

#[derive(Debug, Clone, PartialEq)]
pub struct DualLevyLaw {
    pub p: f64,
    /// Total mass `nu(S) - Phi(p)` of the tilted jump measure.
    pub jump_rate: f64,
    /// `Phi'(p)`.
    pub drift: f64,
    /// `|Phi''(p)|`, the variance of `zeta_1`.
    pub variance: f64,
    pub sampler: JumpSampler,
    /// `drift - jump_rate * E D` when the jump mean is known in closed form.
    pub mean_check: Option<f64>,
}

/// Jumps `D = -log x_* > 0` are log-mass decreases of the tagged fragment;
/// `zeta` runs in the direction of increasing log-mass relative to the
/// moving frame `-t Phi'(p)`.
pub fn build_dual_levy(d: &DislocationModel, p: f64) -> Result<DualLevyLaw> {
    let jump_rate = d.tilted_jump_rate(p)?;
    let sampler = d.tilted_jump_sampler(p)?;
    let (d1, d2) = d.phi_derivs(p)?;
    let mean_check = sampler.mean_jump().map(|m| d1 - jump_rate * m);
    Ok(DualLevyLaw {
        p,
        jump_rate,
        drift: d1,
        variance: d2.abs(),
        sampler,
        mean_check,
    })
}

impl DualLevyLaw {
    /// `chi_t`, the accumulated jumps up to time `t`.
    pub fn sample_chi<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let mean = self.jump_rate * t;
        if mean <= 0.0 {
            return 0.0;
        }
        let k = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
        if k == 0 {
            return 0.0;
        }
        match &self.sampler {
            JumpSampler::Exponential { rate } => Gamma::new(k as f64, 1.0 / rate).expect("valid").sample(rng),
            other => (0..k).map(|_| other.sample(rng).0).sum(),
        }
    }

    pub fn sample_zeta<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        self.drift * t - self.sample_chi(t, rng)
    }

    /// Empirical mean of `zeta_t`; should be 0.
    pub fn centering(&self, t: f64, n: usize, runner: &Runner) -> EstimatorReport {
        let m = runner.fold(
            TAG_CENTER,
            n,
            Moments::new(),
            |rng, range, acc| {
                for _ in range {
                    acc.push(self.sample_zeta(t, rng));
                }
            },
            |a, b| a.merge(b),
        );
        EstimatorReport::from_moments(&m, runner.seed)
            .with_diag("t", t)
            .with_diag("sigma", (self.variance * t).sqrt())
    }
}

/// `V_t[f](t Phi'(p) + c) = e^{t((p+1)Phi' - Phi)} e^{(p+1)c} E f_{p+1}(zeta_t + c)`
/// with `f = 1_[alpha, beta]`: the mean number of fragments with log-mass in
/// `-t Phi'(p) - c + [alpha, beta]`.
pub fn v_levy(
    d: &DislocationModel,
    p: f64,
    t: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    n_paths: usize,
    runner: &Runner,
) -> Result<EstimatorReport> {
    let f = TestFunction::indicator(alpha, beta)?;
    if !(t >= 0.0) {
        return Err(invalid(format!("negative horizon {t}")));
    }
    let law = build_dual_levy(d, p)?;
    let q = p + 1.0;
    let window_lo = -t * law.drift - c + alpha;
    if t == 0.0 {
        return Ok(EstimatorReport::exact(f.eval(c)).with_diag("window_lo", window_lo));
    }
    let m = runner.fold(
        TAG_LEVY,
        n_paths,
        Moments::new(),
        |rng, range, acc| {
            for _ in range {
                let y = law.sample_zeta(t, rng) + c;
                acc.push((-q * y).exp() * f.eval(y));
            }
        },
        |a, b| a.merge(b),
    );
    let growth = v_growth(d, p, t)?;
    let factor = growth * (q * c).exp();
    let scale = t.sqrt() / growth;
    let r = EstimatorReport::from_moments(&m, runner.seed).scaled(factor);
    let (est, se) = (r.estimate, r.stderr);
    Ok(r.with_diag("window_lo", window_lo)
        .with_diag("mean_f", m.mean())
        .with_diag("scaled", scale * est)
        .with_diag("scaled_stderr", scale * se)
        .with_diag("prediction", mean_count_prediction(d, p, alpha, beta)?))
}
