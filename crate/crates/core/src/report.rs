//! Monte Carlo summaries.
//!
//! Every randomized operation returns an [`EstimatorReport`]. Partial sums are
//! kept in [`Moments`] / [`PairMoments`] accumulators that merge exactly the
//! same way regardless of how replicates were split across workers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EstimatorReport {
    pub fn new(estimate: f64, stderr: f64, n: u64, seed: u64) -> Self {
        Self {
            estimate,
            stderr,
            n,
            seed,
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// A deterministic value reported through the Monte Carlo interface.
    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0, 0)
    }

    pub fn from_moments(m: &Moments, seed: u64) -> Self {
        Self::new(m.mean(), m.stderr(), m.count(), seed)
    }

    pub fn with_diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn diag(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    /// Multiply estimate and standard error by a known constant.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.estimate *= factor;
        self.stderr *= factor.abs();
        self
    }

    /// Number of standard errors separating this estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.estimate == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.estimate - target) / self.stderr
        }
    }
}

/// `|a - b|` in units of the combined standard error of two independent estimates.
pub fn combined_z(a: &EstimatorReport, b: &EstimatorReport) -> f64 {
    let se = a.stderr.hypot(b.stderr);
    let d = a.estimate - b.estimate;
    if se == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d.abs() / se
    }
}

/// Running mean and variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Joint first and second moments of a pair, for ratio estimators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    cxx: f64,
    cyy: f64,
    cxy: f64,
}

impl PairMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.cxx += dx * (x - self.mean_x);
        self.cyy += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, o: &PairMoments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = (self.n + o.n) as f64;
        let (na, nb) = (self.n as f64, o.n as f64);
        let dx = o.mean_x - self.mean_x;
        let dy = o.mean_y - self.mean_y;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.cxx += o.cxx + dx * dx * na * nb / n;
        self.cyy += o.cyy + dy * dy * na * nb / n;
        self.cxy += o.cxy + dx * dy * na * nb / n;
        self.n += o.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn x(&self) -> Moments {
        Moments {
            n: self.n,
            mean: self.mean_x,
            m2: self.cxx,
        }
    }

    pub fn y(&self) -> Moments {
        Moments {
            n: self.n,
            mean: self.mean_y,
            m2: self.cyy,
        }
    }

    pub fn covariance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.cxy / (self.n - 1) as f64
        }
    }

    /// Ratio of means `E[x] / E[y]` with its delta-method standard error.
    pub fn ratio(&self) -> (f64, f64) {
        let n = self.n as f64;
        let (mx, my) = (self.mean_x, self.mean_y);
        let r = mx / my;
        let vx = self.x().variance();
        let vy = self.y().variance();
        let var = (vx - 2.0 * r * self.covariance() + r * r * vy) / (my * my * n);
        (r, var.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let all: Moments = xs.iter().copied().collect();
        let mut a: Moments = xs[..313].iter().copied().collect();
        let b: Moments = xs[313..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn pair_ratio_of_proportional_data_has_zero_error() {
        let mut p = PairMoments::new();
        for i in 1..100 {
            p.push(3.0 * i as f64, i as f64);
        }
        let (r, se) = p.ratio();
        assert!((r - 3.0).abs() < 1e-12);
        assert!(se < 1e-9);
    }

    #[test]
    fn pair_merge_matches_sequential() {
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|i| ((i % 13) as f64, ((i * 7) % 11) as f64 + 1.0))
            .collect();
        let mut all = PairMoments::new();
        pts.iter().for_each(|&(x, y)| all.push(x, y));
        let mut a = PairMoments::new();
        let mut b = PairMoments::new();
        pts[..200].iter().for_each(|&(x, y)| a.push(x, y));
        pts[200..].iter().for_each(|&(x, y)| b.push(x, y));
        a.merge(&b);
        assert!((a.covariance() - all.covariance()).abs() < 1e-9);
        assert!((a.ratio().0 - all.ratio().0).abs() < 1e-12);
    }
}
