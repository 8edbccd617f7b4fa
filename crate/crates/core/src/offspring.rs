//! Offspring point processes: samplers, intensities and reduced Palm kernels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::{EstimatorReport, Moments};
use crate::rng::Runner;

pub const DEFAULT_CAP: usize = 1 << 20;

/// Finite list of child displacements relative to the parent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<f64>,
}

impl PointConfiguration {
    pub fn new(points: Vec<f64>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum_i exp(theta * z_i)`.
    pub fn zhat(&self, theta: f64) -> f64 {
        self.points.iter().map(|z| (theta * z).exp()).sum()
    }
}

/// Law of the number of children for i.i.d.-displacement families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Multiplicity {
    Fixed { m: u32 },
    Poisson { lambda: f64 },
    /// `P(N = k) = (1 - q) q^k`, k >= 0.
    Geometric { q: f64 },
    /// `P(N = k) = pmf[k]`.
    Discrete { pmf: Vec<f64> },
}

impl Multiplicity {
    fn validate(&self) -> Result<()> {
        match self {
            Multiplicity::Fixed { .. } => Ok(()),
            Multiplicity::Poisson { lambda } if *lambda > 0.0 && lambda.is_finite() => Ok(()),
            Multiplicity::Geometric { q } if *q > 0.0 && *q < 1.0 => Ok(()),
            Multiplicity::Discrete { pmf }
                if !pmf.is_empty()
                    && pmf.iter().all(|p| *p >= 0.0 && p.is_finite())
                    && (pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12 =>
            {
                Ok(())
            }
            other => Err(invalid(format!("invalid multiplicity law {other:?}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Multiplicity::Fixed { m } => *m as f64,
            Multiplicity::Poisson { lambda } => *lambda,
            Multiplicity::Geometric { q } => q / (1.0 - q),
            Multiplicity::Discrete { pmf } => {
                pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
        }
    }

    /// `E[N (N - 1)]`.
    pub fn factorial_moment2(&self) -> f64 {
        match self {
            Multiplicity::Fixed { m } => (*m as f64) * (*m as f64 - 1.0),
            Multiplicity::Poisson { lambda } => lambda * lambda,
            Multiplicity::Geometric { q } => 2.0 * q * q / ((1.0 - q) * (1.0 - q)),
            Multiplicity::Discrete { pmf } => pmf
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * (k as f64 - 1.0) * p)
                .sum(),
        }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match self {
            Multiplicity::Fixed { m } => f64::from(k == *m as usize),
            Multiplicity::Poisson { lambda } => {
                let lk = k as f64 * lambda.ln() - lambda - statrs::function::gamma::ln_gamma(k as f64 + 1.0);
                lk.exp()
            }
            Multiplicity::Geometric { q } => (1.0 - q) * q.powi(k as i32),
            Multiplicity::Discrete { pmf } => pmf.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Multiplicity of the reduced Palm configuration: `(k+1) P(N = k+1) / E N`.
    pub fn palm_pmf(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * self.pmf(k + 1) / self.mean()
    }

    /// Probability generating function `E s^N`.
    pub fn pgf(&self, s: f64) -> f64 {
        1.0 - self.one_minus_pgf_at_complement(1.0 - s)
    }

    /// `1 - E (1 - s)^N`, without cancellation for small `s`.
    pub fn one_minus_pgf_at_complement(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Multiplicity::Fixed { m } => -(*m as f64 * (-s).ln_1p()).exp_m1(),
            Multiplicity::Poisson { lambda } => -(-lambda * s).exp_m1(),
            Multiplicity::Geometric { q } => q * s / (1.0 - q + q * s),
            Multiplicity::Discrete { pmf } => {
                let l = (-s).ln_1p();
                pmf.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, p)| p * -(k as f64 * l).exp_m1())
                    .sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Multiplicity::Fixed { m } => *m as usize,
            Multiplicity::Poisson { lambda } => {
                let d = Poisson::new(*lambda).expect("validated lambda");
                let x: f64 = d.sample(rng);
                x as usize
            }
            Multiplicity::Geometric { q } => {
                let d = Geometric::new(1.0 - q).expect("validated q");
                d.sample(rng) as usize
            }
            Multiplicity::Discrete { pmf } => sample_table(pmf.iter().copied(), rng),
        }
    }

    /// Draw from the size-biased-minus-one law `palm_pmf`.
    pub fn sample_palm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Multiplicity::Fixed { m } => (*m as usize).saturating_sub(1),
            // Slivnyak: the reduced Palm law of a Poisson process is itself.
            Multiplicity::Poisson { .. } => self.sample(rng),
            // (k+1)(1-q)^2 q^k: negative binomial, the sum of two geometrics.
            Multiplicity::Geometric { q } => {
                let d = Geometric::new(1.0 - q).expect("validated q");
                (d.sample(rng) + d.sample(rng)) as usize
            }
            Multiplicity::Discrete { pmf } => {
                let mean = self.mean();
                let w = pmf
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, p)| k as f64 * p / mean);
                sample_table(w, rng)
            }
        }
    }
}

fn sample_table<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Law of a single child displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Displacement {
    Dirac { at: f64 },
    Normal { mean: f64, sd: f64 },
    Atoms { values: Vec<f64>, probs: Vec<f64> },
}

impl Displacement {
    fn validate(&self) -> Result<()> {
        match self {
            Displacement::Dirac { at } if at.is_finite() => Ok(()),
            Displacement::Normal { mean, sd } if mean.is_finite() && *sd > 0.0 => Ok(()),
            Displacement::Atoms { values, probs }
                if !values.is_empty()
                    && values.len() == probs.len()
                    && values.iter().all(|v| v.is_finite())
                    && probs.iter().all(|p| *p >= 0.0)
                    && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-12 =>
            {
                Ok(())
            }
            other => Err(invalid(format!("invalid displacement law {other:?}"))),
        }
    }

    /// Log moment generating function and its first two derivatives.
    pub fn log_mgf(&self, theta: f64) -> (f64, f64, f64) {
        match self {
            Displacement::Dirac { at } => (theta * at, *at, 0.0),
            Displacement::Normal { mean, sd } => {
                let v = sd * sd;
                (theta * mean + 0.5 * v * theta * theta, mean + v * theta, v)
            }
            Displacement::Atoms { values, probs } => {
                weighted_log_sum_exp(values.iter().copied().zip(probs.iter().copied()), theta)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Displacement::Dirac { at } => *at,
            Displacement::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Displacement::Atoms { values, probs } => {
                values[sample_table(probs.iter().copied(), rng)]
            }
        }
    }
}

/// `log sum_i w_i e^{theta z_i}` and the mean and variance of `z` under the
/// tilted weights.
pub(crate) fn weighted_log_sum_exp(
    atoms: impl Iterator<Item = (f64, f64)> + Clone,
    theta: f64,
) -> (f64, f64, f64) {
    let mut shift = f64::NEG_INFINITY;
    for (z, w) in atoms.clone() {
        if w > 0.0 {
            shift = shift.max(theta * z);
        }
    }
    if !shift.is_finite() {
        return (f64::NEG_INFINITY, 0.0, 0.0);
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (z, w) in atoms.clone() {
        if w > 0.0 {
            let e = w * (theta * z - shift).exp();
            s0 += e;
            s1 += e * z;
        }
    }
    let mean = s1 / s0;
    for (z, w) in atoms {
        if w > 0.0 {
            let e = w * (theta * z - shift).exp();
            s2 += e * (z - mean) * (z - mean);
        }
    }
    (shift + s0.ln(), mean, s2 / s0)
}

/// A stored sample of configurations, resampled uniformly with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    raw: Vec<Vec<f64>>,
    unique: Vec<(f64, Vec<f64>)>,
}

impl Ensemble {
    pub fn new(raw: Vec<Vec<f64>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(invalid("empty ensemble"));
        }
        if raw.iter().flatten().any(|z| !z.is_finite()) {
            return Err(invalid("non-finite point in ensemble"));
        }
        let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for c in &raw {
            let mut key: Vec<f64> = c.clone();
            key.sort_by(|a, b| b.total_cmp(a));
            *counts.entry(key.iter().map(|z| z.to_bits()).collect()).or_default() += 1;
        }
        let n = raw.len() as f64;
        let unique = counts
            .into_iter()
            .map(|(k, c)| (c as f64 / n, k.into_iter().map(f64::from_bits).collect()))
            .collect();
        Ok(Self { raw, unique })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    /// Distinct configurations with their empirical probabilities.
    pub fn unique(&self) -> &[(f64, Vec<f64>)] {
        &self.unique
    }

    /// One configuration per line, points separated by commas.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.raw {
            let line: Vec<String> = c.iter().map(|z| format!("{z:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let raw = text
            .lines()
            .map(|line| {
                let line = line.trim();
                if line.is_empty() {
                    return Ok(Vec::new());
                }
                line.split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|e| invalid(format!("bad point {t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OffspringKind {
    IidDisplacement {
        multiplicity: Multiplicity,
        displacement: Displacement,
    },
    /// Finitely many possible configurations with their probabilities.
    AtomSet { configs: Vec<(f64, Vec<f64>)> },
    Empirical(Ensemble),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PalmKind {
    DeterministicMinusOne,
    Slivnyak,
    SizeBiasedMultiplicity,
    AtomEnumeration,
    EnsembleReweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffspringModel {
    pub name: String,
    pub kind: OffspringKind,
    /// Declared open interval on which the cumulant is finite.
    pub theta_domain: (f64, f64),
    pub cap: usize,
    /// Declared `E[Z(theta) log^{1+eps}(1 + Z(theta))] < inf` on the domain.
    pub xlogx_declared: bool,
    /// Allow the nearest-point Palm approximation for empirical ensembles.
    pub approximate_palm: bool,
}

impl OffspringModel {
    pub fn new(name: impl Into<String>, kind: OffspringKind, allow_subcritical: bool) -> Result<Self> {
        match &kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                multiplicity.validate()?;
                displacement.validate()?;
            }
            OffspringKind::AtomSet { configs } => {
                if configs.is_empty()
                    || configs.iter().any(|(p, c)| *p < 0.0 || c.iter().any(|z| !z.is_finite()))
                    || (configs.iter().map(|(p, _)| p).sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(invalid("atom-set probabilities must be >= 0 and sum to 1"));
                }
            }
            OffspringKind::Empirical(_) => {}
        }
        let model = Self {
            name: name.into(),
            kind,
            theta_domain: (f64::NEG_INFINITY, f64::INFINITY),
            cap: DEFAULT_CAP,
            xlogx_declared: true,
            approximate_palm: false,
        };
        let mass = model.intensity_mass();
        if !allow_subcritical && mass <= 1.0 {
            return Err(invalid(format!(
                "intensity mass {mass} <= 1; pass allow_subcritical for Galton-Watson test models"
            )));
        }
        Ok(model)
    }

    /// Two children with i.i.d. standard normal displacements.
    pub fn gaussian2() -> Self {
        Self::iid_normal(2, 0.0, 1.0).expect("valid")
    }

    pub fn iid_normal(m: u32, mean: f64, sd: f64) -> Result<Self> {
        Self::new(
            if m == 2 && mean == 0.0 && sd == 1.0 {
                "gaussian-2".to_string()
            } else {
                format!("fixed{m}-normal({mean},{sd})")
            },
            OffspringKind::IidDisplacement {
                multiplicity: Multiplicity::Fixed { m },
                displacement: Displacement::Normal { mean, sd },
            },
            false,
        )
    }

    /// Children at exactly -1 and +1.
    pub fn binary_pm1() -> Self {
        Self::new(
            "binary-pm1",
            OffspringKind::AtomSet {
                configs: vec![(1.0, vec![-1.0, 1.0])],
            },
            false,
        )
        .expect("valid")
    }

    /// Geometric(q) many children, all at the parent's position (a
    /// linear-fractional Galton-Watson process embedded in a BRW).
    pub fn geometric_origin(q: f64) -> Result<Self> {
        Self::new(
            "geometric-origin",
            OffspringKind::IidDisplacement {
                multiplicity: Multiplicity::Geometric { q },
                displacement: Displacement::Dirac { at: 0.0 },
            },
            true,
        )
    }

    pub fn poisson_normal(lambda: f64) -> Result<Self> {
        Self::new(
            "poisson-normal",
            OffspringKind::IidDisplacement {
                multiplicity: Multiplicity::Poisson { lambda },
                displacement: Displacement::Normal { mean: 0.0, sd: 1.0 },
            },
            true,
        )
    }

    pub fn empirical(name: impl Into<String>, ensemble: Ensemble) -> Result<Self> {
        Self::new(name, OffspringKind::Empirical(ensemble), true)
    }

    /// `rho(R)`, the mean number of children.
    pub fn intensity_mass(&self) -> f64 {
        match &self.kind {
            OffspringKind::IidDisplacement { multiplicity, .. } => multiplicity.mean(),
            OffspringKind::AtomSet { configs } => {
                configs.iter().map(|(p, c)| p * c.len() as f64).sum()
            }
            OffspringKind::Empirical(e) => e
                .unique()
                .iter()
                .map(|(p, c)| p * c.len() as f64)
                .sum(),
        }
    }

    /// Weighted configurations for finite (atom-set or empirical) models.
    pub fn finite_configs(&self) -> Option<&[(f64, Vec<f64>)]> {
        match &self.kind {
            OffspringKind::AtomSet { configs } => Some(configs),
            OffspringKind::Empirical(e) => Some(e.unique()),
            OffspringKind::IidDisplacement { .. } => None,
        }
    }

    /// Closed-form `(Lambda, Lambda', Lambda'')`, ignoring the declared domain.
    pub fn cumulant_closed_form(&self, theta: f64) -> (f64, f64, f64) {
        match &self.kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                let (k, k1, k2) = displacement.log_mgf(theta);
                (multiplicity.mean().ln() + k, k1, k2)
            }
            _ => {
                let configs = self.finite_configs().expect("finite model");
                weighted_log_sum_exp(
                    configs
                        .iter()
                        .flat_map(|(p, c)| c.iter().map(move |z| (*z, *p))),
                    theta,
                )
            }
        }
    }

    pub fn palm_kind(&self) -> Result<PalmKind> {
        match &self.kind {
            OffspringKind::IidDisplacement { multiplicity, .. } => Ok(match multiplicity {
                Multiplicity::Fixed { .. } => PalmKind::DeterministicMinusOne,
                Multiplicity::Poisson { .. } => PalmKind::Slivnyak,
                _ => PalmKind::SizeBiasedMultiplicity,
            }),
            OffspringKind::AtomSet { .. } => Ok(PalmKind::AtomEnumeration),
            OffspringKind::Empirical(_) if self.approximate_palm => Ok(PalmKind::EnsembleReweighted),
            OffspringKind::Empirical(_) => Err(Error::UnsupportedPalm(format!(
                "{}: empirical ensemble without reweighting metadata",
                self.name
            ))),
        }
    }

    pub fn palm_kernel(&self) -> Result<PalmKernel<'_>> {
        let kind = self.palm_kind()?;
        Ok(PalmKernel { model: self, kind })
    }

    fn check_cap(&self, size: usize) -> Result<()> {
        if size >= self.cap {
            Err(Error::CapExceeded {
                size,
                cap: self.cap,
            })
        } else {
            Ok(())
        }
    }

    /// One independent draw of the offspring point process.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PointConfiguration> {
        let points = match &self.kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                let n = multiplicity.sample(rng);
                self.check_cap(n)?;
                (0..n).map(|_| displacement.sample(rng)).collect()
            }
            OffspringKind::AtomSet { configs } => {
                configs[sample_table(configs.iter().map(|(p, _)| *p), rng)].1.clone()
            }
            OffspringKind::Empirical(e) => e.raw[rng.random_range(0..e.raw.len())].clone(),
        };
        self.check_cap(points.len())?;
        Ok(PointConfiguration { points })
    }

    /// Log of the sample mean of `Z(theta)` with a delta-method standard error.
    pub fn empirical_cumulant(&self, theta: f64, n: usize, runner: &Runner) -> Result<EstimatorReport> {
        if n < 2 {
            return Err(invalid("empirical_cumulant needs n >= 2"));
        }
        let parts = runner.blocks(0x0C01, n, |rng, range| -> Result<Moments> {
            let mut m = Moments::new();
            for _ in range {
                let z = self.sample_offspring(rng)?.zhat(theta);
                if !z.is_finite() {
                    return Err(Error::NonFiniteSample(theta));
                }
                m.push(z);
            }
            Ok(m)
        });
        let mut total = Moments::new();
        for p in parts {
            total.merge(&p?);
        }
        let mean = total.mean();
        Ok(EstimatorReport::new(mean.ln(), total.stderr() / mean, total.count(), runner.seed)
            .with_diag("mean_zhat", mean))
    }
}

/// Sampler for the reduced Palm distributions `E^{!x}` of a model.
#[derive(Debug, Clone, Copy)]
pub struct PalmKernel<'a> {
    pub model: &'a OffspringModel,
    pub kind: PalmKind,
}

const ATOM_MATCH_TOL: f64 = 1e-9;

impl PalmKernel<'_> {
    /// Exact law of `E^{!x}` as weighted configurations, for models with
    /// finitely many configurations.
    pub fn law(&self, x: f64) -> Result<Vec<(f64, Vec<f64>)>> {
        let close = |z: &f64| (z - x).abs() <= ATOM_MATCH_TOL * (1.0 + x.abs());
        match &self.model.kind {
            OffspringKind::AtomSet { configs } => {
                let mut out = Vec::new();
                for (p, c) in configs {
                    let hits = c.iter().filter(|z| close(z)).count();
                    if hits == 0 || *p == 0.0 {
                        continue;
                    }
                    let drop = c.iter().position(&close).expect("hit");
                    let rest = c.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, z)| *z).collect();
                    out.push((p * hits as f64, rest));
                }
                let total: f64 = out.iter().map(|(w, _)| w).sum();
                if total <= 0.0 {
                    return Err(Error::XNotInSupport(x));
                }
                out.iter_mut().for_each(|(w, _)| *w /= total);
                Ok(out)
            }
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                let atoms: Vec<(f64, f64)> = match displacement {
                    Displacement::Dirac { at } => vec![(*at, 1.0)],
                    Displacement::Atoms { values, probs } => values.iter().copied().zip(probs.iter().copied()).collect(),
                    Displacement::Normal { .. } => {
                        return Err(Error::UnsupportedPalm(format!("{}: continuous displacements", self.model.name)))
                    }
                };
                if !atoms.iter().any(|(z, p)| *p > 0.0 && close(z)) {
                    return Err(Error::XNotInSupport(x));
                }
                let kmax = match multiplicity {
                    Multiplicity::Fixed { m } => *m as usize,
                    Multiplicity::Discrete { pmf } => pmf.len(),
                    _ => {
                        return Err(Error::UnsupportedPalm(format!(
                            "{}: unbounded multiplicity",
                            self.model.name
                        )))
                    }
                };
                let mut out = Vec::new();
                for k in 0..kmax {
                    let pk = multiplicity.palm_pmf(k);
                    if pk == 0.0 {
                        continue;
                    }
                    let mut tuples: Vec<(f64, Vec<f64>)> = vec![(pk, Vec::new())];
                    for _ in 0..k {
                        tuples = tuples
                            .into_iter()
                            .flat_map(|(w, c)| {
                                atoms.iter().map(move |(z, p)| {
                                    let mut c = c.clone();
                                    c.push(*z);
                                    (w * p, c)
                                })
                            })
                            .collect();
                    }
                    out.extend(tuples);
                }
                Ok(out)
            }
            OffspringKind::Empirical(_) => Err(Error::UnsupportedPalm(self.model.name.clone())),
        }
    }

    /// Draw the rest of the family given a child at displacement `x`.
    pub fn sample_palm<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<PointConfiguration> {
        let points = match &self.model.kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                let k = multiplicity.sample_palm(rng);
                self.model.check_cap(k)?;
                (0..k).map(|_| displacement.sample(rng)).collect()
            }
            OffspringKind::AtomSet { configs } => {
                let close = |z: &f64| (z - x).abs() <= ATOM_MATCH_TOL * (1.0 + x.abs());
                let weights: Vec<f64> = configs
                    .iter()
                    .map(|(p, c)| p * c.iter().filter(|z| close(z)).count() as f64)
                    .collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::XNotInSupport(x));
                }
                let ci = sample_table(weights.iter().map(|w| w / total), rng);
                let c = &configs[ci].1;
                let matches: Vec<usize> = (0..c.len()).filter(|&i| close(&c[i])).collect();
                let drop = matches[rng.random_range(0..matches.len())];
                c.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != drop)
                    .map(|(_, z)| *z)
                    .collect()
            }
            OffspringKind::Empirical(e) => {
                if self.kind != PalmKind::EnsembleReweighted {
                    return Err(Error::UnsupportedPalm(self.model.name.clone()));
                }
                // Approximate: size-biased configuration, then drop the point nearest x.
                let configs = e.unique();
                let mass: f64 = configs.iter().map(|(p, c)| p * c.len() as f64).sum();
                let ci = sample_table(configs.iter().map(|(p, c)| p * c.len() as f64 / mass), rng);
                let c = &configs[ci].1;
                let drop = c
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                c.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != drop)
                    .map(|(_, z)| *z)
                    .collect()
            }
        };
        Ok(PointConfiguration { points })
    }
}
