//! Finite, conservative dislocation measures with binary splits.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{invalid, Error, Result};
use crate::numerics::{central_first, central_second};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "kebab-case")]
pub enum SplitLaw {
    /// `(max(U, 1-U), min(U, 1-U))`, `U` uniform on (0, 1).
    UniformBinary,
    /// `(1/2, 1/2)`.
    Dyadic,
    /// Ranked `(U, 1-U)` with `U ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DislocationModel {
    pub name: String,
    /// Total mass `nu(S)`; each fragment splits at this rate.
    pub rate: f64,
    pub law: SplitLaw,
}

impl DislocationModel {
    pub fn new(name: impl Into<String>, rate: f64, law: SplitLaw) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("dislocation rate must be positive and finite"));
        }
        if let SplitLaw::Beta { a, b } = law {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(invalid("beta split parameters must be positive"));
            }
        }
        Ok(Self {
            name: name.into(),
            rate,
            law,
        })
    }

    pub fn uniform_binary() -> Self {
        Self::new("uniform-binary", 1.0, SplitLaw::UniformBinary).expect("valid")
    }

    pub fn dyadic() -> Self {
        Self::new("dyadic", 1.0, SplitLaw::Dyadic).expect("valid")
    }

    pub fn beta_split(a: f64, b: f64) -> Result<Self> {
        Self::new(format!("beta-split({a},{b})"), 1.0, SplitLaw::Beta { a, b })
    }

    /// `Some(r)` when the measure is r-geometric.
    pub fn geometric(&self) -> Option<f64> {
        match self.law {
            SplitLaw::Dyadic => Some(2.0),
            _ => None,
        }
    }

    /// `inf { p : int sum_{i>=2} s_i^{p+1} nu(ds) < inf }`.
    pub fn p_lower(&self) -> f64 {
        match self.law {
            SplitLaw::UniformBinary => -2.0,
            SplitLaw::Dyadic => f64::NEG_INFINITY,
            SplitLaw::Beta { a, b } => -1.0 - a.min(b),
        }
    }

    fn check_p(&self, p: f64) -> Result<()> {
        let p_lower = self.p_lower();
        if p > p_lower && p.is_finite() {
            Ok(())
        } else {
            Err(Error::BelowDomain { p, p_lower })
        }
    }

    /// Ranked split, summing to 1.
    pub fn sample_split<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let u: f64 = match self.law {
            SplitLaw::UniformBinary => {
                // Open interval: U = 0 would create a zero-mass fragment.
                loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                }
            }
            SplitLaw::Dyadic => 0.5,
            SplitLaw::Beta { a, b } => loop {
                let u = Beta::new(a, b).expect("validated").sample(rng);
                if u > 0.0 && u < 1.0 {
                    break u;
                }
            },
        };
        let v = 1.0 - u;
        if u >= v {
            [u, v]
        } else {
            [v, u]
        }
    }

    /// `E_nu-normalized sum_i s_i^{q}`.
    fn power_sum(&self, q: f64) -> f64 {
        match self.law {
            SplitLaw::UniformBinary => 2.0 / (q + 1.0),
            SplitLaw::Dyadic => 2.0 * 0.5f64.powf(q),
            SplitLaw::Beta { a, b } => {
                let lb = ln_beta(a, b);
                (ln_beta(a + q, b) - lb).exp() + (ln_beta(a, b + q) - lb).exp()
            }
        }
    }

    /// `Phi(p) = int (1 - sum_i s_i^{p+1}) nu(ds)`.
    pub fn phi(&self, p: f64) -> Result<f64> {
        self.check_p(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(self.rate * (1.0 - self.power_sum(p + 1.0)))
    }

    /// `(Phi'(p), Phi''(p))`; closed form where available, else central differences.
    pub fn phi_derivs(&self, p: f64) -> Result<(f64, f64)> {
        self.check_p(p)?;
        let r = self.rate;
        Ok(match self.law {
            SplitLaw::UniformBinary => {
                let s = p + 2.0;
                (r * 2.0 / (s * s), -r * 4.0 / (s * s * s))
            }
            SplitLaw::Dyadic => {
                let l = std::f64::consts::LN_2;
                let e = 0.5f64.powf(p);
                (r * l * e, -r * l * l * e)
            }
            SplitLaw::Beta { .. } => {
                let f = |q: f64| self.rate * (1.0 - self.power_sum(q + 1.0));
                (central_first(f, p), central_second(f, p))
            }
        })
    }

    /// Size-biased pick `x_*` from a fresh split and the remaining parts.
    pub fn size_biased_pick<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Vec<f64>) {
        let s = self.sample_split(rng);
        let u: f64 = rng.random();
        if u < s[0] {
            (s[0], vec![s[1]])
        } else {
            (s[1], vec![s[0]])
        }
    }

    /// A draw from `nu^{!x}`: the split with the size-biased pick `x` removed.
    /// For binary conservative splits this is the complementary fragment.
    pub fn palm_remainder(&self, x: f64) -> Result<Vec<f64>> {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid(format!("size-biased pick {x} outside (0, 1)")));
        }
        Ok(vec![1.0 - x])
    }

    /// Total mass of the tilted jump measure `e^{-p D} L(dD)`.
    pub fn tilted_jump_rate(&self, p: f64) -> Result<f64> {
        Ok(self.rate - self.phi(p)?)
    }

    /// Sampler for the normalized tilted jump law `e^{-p D} L(dD)`, where `L`
    /// is the image of the size-biased pick under `x -> -log x`.
    pub fn tilted_jump_sampler(&self, p: f64) -> Result<JumpSampler> {
        self.check_p(p)?;
        match self.law {
            // L(dD) = 2 e^{-2D} dD, so the tilted law is Exp(p + 2).
            SplitLaw::UniformBinary => Ok(JumpSampler::Exponential { rate: p + 2.0 }),
            _ if p > -1.0 => Ok(JumpSampler::Reweighted {
                model: self.clone(),
                power: p + 1.0,
                bound: 2f64.powf((-p).max(0.0)),
            }),
            _ => Err(Error::UnsupportedSizeBiased(format!(
                "{}: no tilted jump sampler for p = {p}",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JumpSampler {
    Exponential {
        rate: f64,
    },
    /// Draw a split, accept with probability `sum_i s_i^power / bound`, then
    /// pick part `i` with probability proportional to `s_i^power`.
    Reweighted {
        model: DislocationModel,
        power: f64,
        bound: f64,
    },
}

impl JumpSampler {
    /// A jump size `D = -log x_* > 0` and the picked mass `x_* = e^{-D}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JumpSampler::Exponential { rate } => {
                let d = Exp::new(*rate).expect("positive rate").sample(rng);
                (d, (-d).exp())
            }
            JumpSampler::Reweighted {
                model,
                power,
                bound,
            } => loop {
                let s = model.sample_split(rng);
                let w = [s[0].powf(*power), s[1].powf(*power)];
                let total = w[0] + w[1];
                let u: f64 = rng.random();
                if u * bound < total {
                    let v: f64 = rng.random();
                    let x = if v * total < w[0] { s[0] } else { s[1] };
                    return (-x.ln(), x);
                }
            },
        }
    }

    pub fn mean_jump(&self) -> Option<f64> {
        match self {
            JumpSampler::Exponential { rate } => Some(1.0 / rate),
            JumpSampler::Reweighted { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Moments;
    use crate::rng::stream;

    #[test]
    fn splits_are_ranked_and_conservative() {
        let mut rng = stream(1, 0, 0);
        for d in [
            DislocationModel::uniform_binary(),
            DislocationModel::dyadic(),
            DislocationModel::beta_split(2.0, 3.0).unwrap(),
        ] {
            for _ in 0..10_000 {
                let s = d.sample_split(&mut rng);
                assert!(s[0] >= s[1] && s[1] > 0.0 && s[0] < 1.0 || s == [0.5, 0.5]);
                assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_phi_closed_form() {
        let d = DislocationModel::uniform_binary();
        for p in [-1.5, 0.0, 0.5, 1.0, 2.0, 7.0] {
            assert!((d.phi(p).unwrap() - p / (p + 2.0)).abs() < 1e-14);
        }
        let (d1, d2) = d.phi_derivs(2.0).unwrap();
        assert_eq!(d1, 0.125);
        assert_eq!(d2, -0.0625);
    }

    #[test]
    fn beta_one_one_is_uniform() {
        let b = DislocationModel::beta_split(1.0, 1.0).unwrap();
        let u = DislocationModel::uniform_binary();
        assert_eq!(b.p_lower(), -2.0);
        for p in [-1.0, 0.5, 2.0, 4.0] {
            assert!((b.phi(p).unwrap() - u.phi(p).unwrap()).abs() < 1e-12);
            let (b1, b2) = b.phi_derivs(p).unwrap();
            let (u1, u2) = u.phi_derivs(p).unwrap();
            assert!((b1 - u1).abs() < 1e-8);
            assert!((b2 - u2).abs() < 1e-6);
        }
    }

    #[test]
    fn phi_is_concave_increasing() {
        for d in [
            DislocationModel::uniform_binary(),
            DislocationModel::beta_split(0.7, 2.5).unwrap(),
            DislocationModel::dyadic(),
        ] {
            let lo = d.p_lower().max(-3.0) + 0.1;
            let h = 0.05;
            let mut p = lo + h;
            while p < 10.0 - h {
                let f = |x| d.phi(x).unwrap();
                assert!(f(p + h) - 2.0 * f(p) + f(p - h) <= 1e-12, "{} at {p}", d.name);
                assert!(f(p + h) > f(p));
                p += h;
            }
        }
    }

    #[test]
    fn tilted_jump_rate_matches_uniform_closed_form() {
        let d = DislocationModel::uniform_binary();
        for p in [0.0, 1.0, 2.0] {
            assert!((d.tilted_jump_rate(p).unwrap() - 2.0 / (p + 2.0)).abs() < 1e-14);
        }
        assert_eq!(d.tilted_jump_rate(0.0).unwrap(), 1.0);
    }

    #[test]
    fn reweighted_sampler_matches_exponential_law() {
        // Force the generic path on the uniform split via Beta(1, 1).
        let b = DislocationModel::beta_split(1.0, 1.0).unwrap();
        let s = b.tilted_jump_sampler(2.0).unwrap();
        assert!(matches!(s, JumpSampler::Reweighted { .. }));
        let mut rng = stream(2, 0, 0);
        let m: Moments = (0..100_000).map(|_| s.sample(&mut rng).0).collect();
        // Exp(4): mean 1/4, variance 1/16.
        assert!((m.mean() - 0.25).abs() < 4.0 * m.stderr(), "{}", m.mean());
        assert!((m.variance() - 0.0625).abs() < 0.003);
    }

    #[test]
    fn size_biased_pick_mean() {
        // E[x_*] = E[U^2 + (1-U)^2] = 2/3 for the uniform split.
        let d = DislocationModel::uniform_binary();
        let mut rng = stream(3, 0, 0);
        let m: Moments = (0..100_000)
            .map(|_| {
                let (x, rest) = d.size_biased_pick(&mut rng);
                assert!((x + rest[0] - 1.0).abs() < 1e-12);
                x
            })
            .collect();
        assert!((m.mean() - 2.0 / 3.0).abs() < 4.0 * m.stderr());
    }

    #[test]
    fn geometric_flag() {
        assert_eq!(DislocationModel::dyadic().geometric(), Some(2.0));
        assert_eq!(DislocationModel::uniform_binary().geometric(), None);
    }
}
