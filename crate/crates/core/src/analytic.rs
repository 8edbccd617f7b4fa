//! Cumulants, rate functions, tilted step laws and fragmentation exponents.
//!
//! `Lambda(theta) = log int e^{theta x} rho(dx)` is evaluated in closed form
//! for every built-in offspring family (finite atom sets and stored ensembles
//! are exact finite sums). `Lambda*` is obtained by solving
//! `Lambda'(theta) = a` with a bracketed root finder, which is well posed
//! because `Lambda` is strictly convex for non-degenerate models.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frag::{simulate_fragmentation, DislocationModel};
use crate::numerics::{adaptive_simpson, bracketed_root, central_first, central_second};
use crate::offspring::{Displacement, OffspringKind, OffspringModel};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;

pub const CRITICAL_ZERO_BAND: f64 = 1e-10;
pub const P_BAR_Q_MAX: f64 = 50.0;
const BRACKET_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

/// Cumulant of an offspring model restricted to a declared domain.
#[derive(Debug, Clone, Copy)]
pub struct Spectrum<'a> {
    pub model: &'a OffspringModel,
    pub theta_domain: (f64, f64),
    pub eval_mode: EvalMode,
}

impl<'a> Spectrum<'a> {
    pub fn new(model: &'a OffspringModel) -> Self {
        Self {
            model,
            theta_domain: model.theta_domain,
            eval_mode: EvalMode::ClosedForm,
        }
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.eval_mode = mode;
        self
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.theta_domain = (lo, hi);
        self
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        let (lo, hi) = self.theta_domain;
        if theta.is_finite() && theta > lo && theta < hi {
            Ok(())
        } else {
            Err(Error::ThetaOutOfDomain { theta, lo, hi })
        }
    }

    fn quadrature_cumulant(&self, theta: f64) -> f64 {
        match &self.model.kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement: Displacement::Normal { mean, sd },
            } => {
                let pdf = |x: f64| {
                    let z = (x - mean) / sd;
                    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
                };
                let shift = theta * sd * sd;
                let lo = mean - 14.0 * sd + shift.min(0.0);
                let hi = mean + 14.0 * sd + shift.max(0.0);
                // Integrate e^{theta (x - c)} for a stable scale, then add back theta c.
                let c = mean + shift;
                let v = adaptive_simpson(|x| (theta * (x - c)).exp() * pdf(x), lo, hi, 1e-15);
                multiplicity.mean().ln() + theta * c + v.ln()
            }
            _ => self.model.cumulant_closed_form(theta).0,
        }
    }

    /// `Lambda(theta)`.
    pub fn cumulant(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let v = match self.eval_mode {
            EvalMode::ClosedForm => self.model.cumulant_closed_form(theta).0,
            EvalMode::Quadrature => self.quadrature_cumulant(theta),
            EvalMode::MonteCarlo => {
                return Err(invalid(
                    "Monte Carlo spectra are evaluated through cumulant_estimate",
                ))
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            let (lo, hi) = self.theta_domain;
            Err(Error::ThetaOutOfDomain { theta, lo, hi })
        }
    }

    /// `Lambda(theta)` as an estimator report; exact (stderr 0) unless the
    /// spectrum is in Monte Carlo mode.
    pub fn cumulant_estimate(&self, theta: f64, n: usize, runner: &Runner) -> Result<EstimatorReport> {
        self.check_theta(theta)?;
        match self.eval_mode {
            EvalMode::MonteCarlo => self.model.empirical_cumulant(theta, n, runner),
            _ => Ok(EstimatorReport::exact(self.cumulant(theta)?)),
        }
    }

    /// `Lambda'(theta)`.
    pub fn derivative(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.eval_mode {
            EvalMode::Quadrature => central_first(|t| self.quadrature_cumulant(t), theta),
            _ => self.model.cumulant_closed_form(theta).1,
        })
    }

    /// `Lambda''(theta)`, the variance of the tilted step law.
    pub fn second_derivative(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self.eval_mode {
            EvalMode::Quadrature => central_second(|t| self.quadrature_cumulant(t), theta),
            _ => self.model.cumulant_closed_form(theta).2,
        })
    }

    fn clamp_into_domain(&self, x: f64) -> f64 {
        let (lo, hi) = self.theta_domain;
        if x > lo && x < hi {
            x
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo + 1.0
        } else {
            hi - 1.0
        }
    }

    /// Solve `Lambda'(theta_a) = a`; returns `(theta_a, Lambda*(a))`.
    pub fn rate_function(&self, a: f64) -> Result<(f64, f64)> {
        if !a.is_finite() {
            return Err(Error::SpeedOutOfRange(a));
        }
        let (dom_lo, dom_hi) = self.theta_domain;
        let g = |t: f64| self.derivative(t).map(|d| d - a).unwrap_or(f64::NAN);
        let dg = |t: f64| self.second_derivative(t).unwrap_or(f64::NAN);
        let start = self.clamp_into_domain(0.0);
        let g0 = g(start);
        if g0 == 0.0 {
            return Ok((start, start * a - self.cumulant(start)?));
        }
        // Grow a bracket geometrically away from the start point.
        let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
        let (mut near, mut far, mut step) = (start, start, 1.0);
        loop {
            let cand = start + dir * step;
            let inside = cand > dom_lo && cand < dom_hi;
            let cand = if inside {
                cand
            } else {
                // Approach the open boundary without touching it.
                let edge = if dir > 0.0 { dom_hi } else { dom_lo };
                far + 0.5 * (edge - far)
            };
            if (cand - start).abs() > BRACKET_LIMIT || (cand - far).abs() < 1e-12 {
                return Err(Error::SpeedOutOfRange(a));
            }
            let gc = g(cand);
            if !gc.is_finite() {
                return Err(Error::SpeedOutOfRange(a));
            }
            if gc.signum() != g0.signum() || gc == 0.0 {
                far = cand;
                break;
            }
            near = cand;
            far = cand;
            step *= 2.0;
        }
        let (lo, hi) = if dir > 0.0 { (near, far) } else { (far, near) };
        let theta = bracketed_root(g, Some(&dg), lo, hi, 1e-15)?;
        Ok((theta, theta * a - self.cumulant(theta)?))
    }

    pub fn classify_speed(&self, a: f64) -> Result<Regime> {
        self.classify_speed_with_band(a, CRITICAL_ZERO_BAND)
    }

    pub fn classify_speed_with_band(&self, a: f64, band: f64) -> Result<Regime> {
        let (_, ls) = self.rate_function(a)?;
        Ok(if ls.abs() < band {
            Regime::Critical
        } else if ls < 0.0 {
            Regime::Supercritical
        } else {
            Regime::Subcritical
        })
    }

    /// `Lambda*(Lambda'(theta)) = theta Lambda'(theta) - Lambda(theta)` without a root solve.
    pub fn rate_at_theta(&self, theta: f64) -> Result<f64> {
        Ok(theta * self.derivative(theta)? - self.cumulant(theta)?)
    }

    /// Step law `e^{theta x - Lambda(theta)} rho(dx)`, re-centered by `Lambda'(theta)`.
    pub fn tilt(&self, theta: f64) -> Result<TiltedStepLaw> {
        self.check_theta(theta)?;
        let (_, drift, sigma2) = self.model.cumulant_closed_form(theta);
        let law = match &self.model.kind {
            OffspringKind::IidDisplacement { displacement, .. } => match displacement {
                Displacement::Normal { sd, .. } => StepLaw::Normal { sd: *sd },
                Displacement::Dirac { .. } => StepLaw::Point,
                Displacement::Atoms { values, probs } => StepLaw::atoms(
                    values.iter().copied().zip(probs.iter().copied()),
                    theta,
                    drift,
                ),
            },
            _ => {
                let configs = self.model.finite_configs().expect("finite model");
                StepLaw::atoms(
                    configs
                        .iter()
                        .flat_map(|(p, c)| c.iter().map(move |z| (*z, *p))),
                    theta,
                    drift,
                )
            }
        };
        Ok(TiltedStepLaw {
            theta,
            drift,
            sigma2,
            law,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepLaw {
    Normal { sd: f64 },
    /// Degenerate: every step is exactly 0.
    Point,
    Atoms { values: Vec<f64>, cdf: Vec<f64> },
}

impl StepLaw {
    fn atoms(atoms: impl Iterator<Item = (f64, f64)>, theta: f64, drift: f64) -> StepLaw {
        let atoms: Vec<(f64, f64)> = atoms.filter(|(_, w)| *w > 0.0).collect();
        let shift = atoms
            .iter()
            .map(|(z, _)| theta * z)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = atoms
            .iter()
            .map(|(z, w)| w * (theta * z - shift).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        StepLaw::Atoms {
            values: atoms.iter().map(|(z, _)| z - drift).collect(),
            cdf,
        }
    }
}

/// Centered step law of the auxiliary random walk at tilt `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedStepLaw {
    pub theta: f64,
    /// `a = Lambda'(theta)`.
    pub drift: f64,
    /// `Lambda''(theta)`.
    pub sigma2: f64,
    pub law: StepLaw,
}

impl TiltedStepLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.law {
            StepLaw::Normal { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            StepLaw::Point => 0.0,
            StepLaw::Atoms { values, cdf } => {
                let u: f64 = rng.random();
                let i = cdf.partition_point(|c| *c <= u).min(values.len() - 1);
                values[i]
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.sigma2 > 0.0)
    }

    /// Exact mean of the step law (0 up to rounding).
    pub fn mean(&self) -> f64 {
        match &self.law {
            StepLaw::Normal { .. } | StepLaw::Point => 0.0,
            StepLaw::Atoms { values, cdf } => {
                let mut prev = 0.0;
                values
                    .iter()
                    .zip(cdf)
                    .map(|(v, c)| {
                        let w = c - prev;
                        prev = *c;
                        v * w
                    })
                    .sum()
            }
        }
    }

    /// Sample mean of `n` steps, for centering checks.
    pub fn empirical_mean(&self, n: usize, runner: &Runner) -> EstimatorReport {
        let m = runner.fold(
            0x7117,
            n,
            Moments::new(),
            |rng, range, acc| {
                for _ in range {
                    acc.push(self.sample(rng));
                }
            },
            |a, b| a.merge(b),
        );
        EstimatorReport::from_moments(&m, runner.seed).with_diag("sigma", self.sigma())
    }
}

/// `Phi` and the critical exponents of a dislocation measure.
#[derive(Debug, Clone)]
pub struct FragSpectrum<'a> {
    pub disloc: &'a DislocationModel,
    pub p_lower: f64,
    pub p_bar: f64,
}

impl<'a> FragSpectrum<'a> {
    pub fn new(disloc: &'a DislocationModel) -> Result<Self> {
        let (p_lower, p_bar) = critical_exponents(disloc)?;
        Ok(Self {
            disloc,
            p_lower,
            p_bar,
        })
    }

    pub fn phi(&self, p: f64) -> Result<f64> {
        self.disloc.phi(p)
    }

    /// `(Phi'(p), Phi''(p))`.
    pub fn phi_derivs(&self, p: f64) -> Result<(f64, f64)> {
        self.disloc.phi_derivs(p)
    }

    /// `Phi(q) - (q + 1) Phi'(q)`; vanishes at `p_bar`.
    pub fn criticality(&self, q: f64) -> Result<f64> {
        Ok(self.phi(q)? - (q + 1.0) * self.phi_derivs(q)?.0)
    }
}

/// `Phi(q) - (q+1) Phi'(q)` for a dislocation model.
fn criticality(d: &DislocationModel, q: f64) -> f64 {
    match (d.phi(q), d.phi_derivs(q)) {
        (Ok(phi), Ok((d1, _))) => phi - (q + 1.0) * d1,
        _ => f64::NAN,
    }
}

/// `(p_lower, p_bar)` where `p_bar` solves `Phi(q) = (q + 1) Phi'(q)`.
pub fn critical_exponents(d: &DislocationModel) -> Result<(f64, f64)> {
    let p_lower = d.p_lower();
    // Below q = -1 the exponent q + 1 is negative and the criticality
    // function can have a second, irrelevant zero.
    let start = if p_lower.is_finite() {
        (p_lower + 1.0).max(-1.0)
    } else {
        -1.0
    };
    let g0 = criticality(d, start);
    if !(g0 < 0.0) {
        return Err(Error::NoConvergence(format!(
            "criticality function is {g0} at the bracket start q = {start}"
        )));
    }
    let mut lo = start;
    let mut step = 1.0;
    loop {
        let hi = (start + step).min(P_BAR_Q_MAX);
        let g = criticality(d, hi);
        if g > 0.0 {
            let dg = |q: f64| d.phi_derivs(q).map(|(_, d2)| -(q + 1.0) * d2).unwrap_or(f64::NAN);
            let p_bar = bracketed_root(|q| criticality(d, q), Some(&dg), lo, hi, 1e-15)?;
            return Ok((p_lower, p_bar));
        }
        if hi >= P_BAR_Q_MAX {
            return Err(Error::NoConvergence(format!(
                "no sign change of Phi(q) - (q+1)Phi'(q) up to q = {P_BAR_Q_MAX}"
            )));
        }
        lo = hi;
        step *= 2.0;
    }
}

/// Log of the mean of `sum_i X_i(h)^theta` over `n` fragmentations, minus
/// its exact value `-h Phi(theta - 1)`.
pub fn skeleton_spectrum_residual(
    d: &DislocationModel,
    h: f64,
    theta: f64,
    n: usize,
    runner: &Runner,
) -> Result<EstimatorReport> {
    let p = theta - 1.0;
    let phi = d.phi(p)?;
    if !(h >= 0.0) {
        return Err(invalid("skeleton mesh h must be >= 0"));
    }
    if n < 2 {
        return Err(invalid("need at least 2 skeleton samples"));
    }
    let parts = runner.blocks(0x5E1E, n, |rng, range| -> Result<Moments> {
        let mut m = Moments::new();
        for _ in range {
            let state = simulate_fragmentation(d, h, None, rng)?;
            m.push(state.log_masses().map(|l| (theta * l).exp()).sum());
        }
        Ok(m)
    });
    let mut total = Moments::new();
    for p in parts {
        total.merge(&p?);
    }
    let mean = total.mean();
    let lambda_hat = mean.ln();
    Ok(
        EstimatorReport::new(lambda_hat + h * phi, total.stderr() / mean, total.count(), runner.seed)
            .with_diag("lambda_hat", lambda_hat)
            .with_diag("target", -h * phi),
    )
}
