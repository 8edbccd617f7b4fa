use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Test function `f` with `0 <= f <= 1` and compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `1_[alpha, beta]`.
    Indicator { alpha: f64, beta: f64 },
    /// Constant `values[k]` on `[origin + k delta - delta/2, origin + k delta + delta/2)`.
    Step { origin: f64, delta: f64, values: Vec<f64> },
}

impl TestFunction {
    pub fn indicator(alpha: f64, beta: f64) -> Result<Self> {
        let f = TestFunction::Indicator { alpha, beta };
        f.validate()?;
        Ok(f)
    }

    /// Indicator of the single grid cell centred at `at`.
    pub fn cell(at: f64, delta: f64) -> Self {
        TestFunction::Step {
            origin: at,
            delta,
            values: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Indicator { alpha, beta } => {
                if !(alpha.is_finite() && beta.is_finite() && alpha < beta) {
                    return Err(invalid(format!("indicator needs alpha < beta, got [{alpha}, {beta}]")));
                }
            }
            TestFunction::Step { origin, delta, values } => {
                if !(origin.is_finite() && *delta > 0.0) {
                    return Err(invalid("step function needs a finite origin and delta > 0"));
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(invalid("step function values must lie in [0, 1]"));
                }
                if values.iter().all(|v| *v == 0.0) {
                    return Err(invalid("step function has zero integral"));
                }
            }
        }
        Ok(())
    }

    /// Closed hull of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            TestFunction::Indicator { alpha, beta } => (*alpha, *beta),
            TestFunction::Step { origin, delta, values } => (
                origin - 0.5 * delta,
                origin + (values.len() as f64 - 0.5) * delta,
            ),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TestFunction::Indicator { alpha, beta } => {
                if y >= *alpha && y <= *beta {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Step { origin, delta, values } => {
                let k = ((y - origin) / delta + 0.5).floor();
                if k >= 0.0 && (k as usize) < values.len() {
                    values[k as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// Mean of `f` over `[lo, hi]`.
    pub fn average(&self, lo: f64, hi: f64) -> f64 {
        let overlap = |a: f64, b: f64| (hi.min(b) - lo.max(a)).max(0.0);
        let total = match self {
            TestFunction::Indicator { alpha, beta } => overlap(*alpha, *beta),
            TestFunction::Step { origin, delta, values } => values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let c = origin + k as f64 * delta;
                    v * overlap(c - 0.5 * delta, c + 0.5 * delta)
                })
                .sum(),
        };
        total / (hi - lo)
    }

    /// `int exp(-theta y) f(y) dy`.
    pub fn tilted_integral(&self, theta: f64) -> f64 {
        let piece = |a: f64, b: f64| {
            if theta == 0.0 {
                b - a
            } else {
                // exp(-theta a) (1 - exp(-theta (b - a))) / theta
                (-theta * a).exp() * -(-theta * (b - a)).exp_m1() / theta
            }
        };
        match self {
            TestFunction::Indicator { alpha, beta } => piece(*alpha, *beta),
            TestFunction::Step { origin, delta, values } => values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let c = origin + k as f64 * delta;
                    v * piece(c - 0.5 * delta, c + 0.5 * delta)
                })
                .sum(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.tilted_integral(0.0)
    }

    /// `tau_c f = f(c + .)`.
    pub fn shifted(&self, c: f64) -> Self {
        match self {
            TestFunction::Indicator { alpha, beta } => TestFunction::Indicator {
                alpha: alpha - c,
                beta: beta - c,
            },
            TestFunction::Step { origin, delta, values } => TestFunction::Step {
                origin: origin - c,
                delta: *delta,
                values: values.clone(),
            },
        }
    }

    /// Grid step resolving `f`: a fiftieth of an indicator, the native step of a step function.
    pub fn default_delta(&self) -> f64 {
        match self {
            TestFunction::Indicator { alpha, beta } => (beta - alpha) / 50.0,
            TestFunction::Step { delta, .. } => *delta,
        }
    }

    pub fn max_delta(&self) -> f64 {
        match self {
            TestFunction::Indicator { alpha, beta } => (beta - alpha) / 20.0,
            TestFunction::Step { delta, .. } => *delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    U,
    V,
}

/// Requested lattice for a grid recursion. Unset fields are chosen from the
/// model and test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub delta: Option<f64>,
    pub window: Option<(f64, f64)>,
    /// Points at which the caller will read the result.
    pub targets: Vec<f64>,
    pub pad: f64,
    pub mass_tol: f64,
    /// Gaussian kernels are truncated at this many standard deviations.
    pub kernel_sds: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            delta: None,
            window: None,
            targets: Vec::new(),
            pad: 5.0,
            mass_tol: 1e-8,
            kernel_sds: 8.0,
        }
    }
}

impl GridSpec {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }

    pub fn with_targets(mut self, targets: impl IntoIterator<Item = f64>) -> Self {
        self.targets.extend(targets);
        self
    }
}

/// Uniform lattice `x_k = (k0 + k) delta`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub k0: i64,
    pub delta: f64,
    pub len: usize,
}

impl Lattice {
    pub fn covering(lo: f64, hi: f64, delta: f64) -> Self {
        let k0 = (lo / delta - 1e-9).floor() as i64;
        let k1 = (hi / delta + 1e-9).ceil() as i64;
        Lattice {
            k0,
            delta,
            len: (k1 - k0 + 1).max(1) as usize,
        }
    }

    pub fn x(&self, k: usize) -> f64 {
        (self.k0 + k as i64) as f64 * self.delta
    }
}

/// Function on a uniform lattice, zero outside its window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub k0: i64,
    pub delta: f64,
    pub values: Vec<f64>,
    pub kind: FieldKind,
    /// Generation index `n` of `u_n` or `v_n`.
    pub n: usize,
    /// Worst relative mass dropped at the window edges in one step.
    pub mass_loss: f64,
}

/// Edge values below this are treated as zero when judging window misses.
pub const EDGE_NEGLIGIBLE: f64 = 1e-12;

impl GridField {
    pub fn from_test_function(f: &TestFunction, lattice: Lattice, kind: FieldKind) -> Self {
        let h = lattice.delta;
        let values = (0..lattice.len)
            .map(|k| {
                let x = lattice.x(k);
                f.average(x - 0.5 * h, x + 0.5 * h)
            })
            .collect();
        GridField {
            k0: lattice.k0,
            delta: h,
            values,
            kind,
            n: 0,
            mass_loss: 0.0,
        }
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            k0: self.k0,
            delta: self.delta,
            len: self.values.len(),
        }
    }

    pub fn x(&self, k: usize) -> f64 {
        self.lattice().x(k)
    }

    pub fn window(&self) -> (f64, f64) {
        (self.x(0), self.x(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn edge_max(&self) -> f64 {
        self.values[0].max(*self.values.last().unwrap_or(&0.0))
    }

    /// Linear interpolation; `None` outside the window.
    pub fn lookup(&self, x: f64) -> Option<f64> {
        let t = x / self.delta - self.k0 as f64;
        let last = (self.values.len() - 1) as f64;
        if !(t >= -1e-9 && t <= last + 1e-9) {
            return None;
        }
        let t = t.clamp(0.0, last);
        let i = t.floor() as usize;
        let frac = t - i as f64;
        if i + 1 >= self.values.len() || frac < 1e-12 {
            return Some(self.values[i]);
        }
        if frac > 1.0 - 1e-12 {
            return Some(self.values[i + 1]);
        }
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// Interpolated value, zero outside the window.
    pub fn at(&self, x: f64) -> f64 {
        self.lookup(x).unwrap_or(0.0)
    }

    /// Lookup that reports whether a value was needed outside the window
    /// while the field is not negligible at its edges.
    pub fn at_checked(&self, x: f64) -> (f64, bool) {
        match self.lookup(x) {
            Some(v) => (v, false),
            None => (0.0, self.edge_max() > EDGE_NEGLIGIBLE),
        }
    }

    /// `x,value` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.x(k), v);
        }
        out
    }
}

/// Steps and partial sums of one tilted walk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WalkPath {
    pub steps: Vec<f64>,
    pub sums: Vec<f64>,
}

impl WalkPath {
    pub fn sample<R: rand::Rng + ?Sized>(law: &crate::analytic::TiltedStepLaw, n: usize, rng: &mut R) -> Self {
        let mut path = WalkPath::default();
        path.resample(law, n, rng);
        path
    }

    /// Redraw in place, reusing the buffers.
    pub fn resample<R: rand::Rng + ?Sized>(&mut self, law: &crate::analytic::TiltedStepLaw, n: usize, rng: &mut R) {
        self.steps.clear();
        self.sums.clear();
        let mut s = 0.0;
        for _ in 0..n {
            let xi = law.sample(rng);
            s += xi;
            self.steps.push(xi);
            self.sums.push(s);
        }
    }

    /// `S_r`, with `S_0 = 0`.
    pub fn sum(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.sums[r - 1]
        }
    }

    pub fn last(&self) -> f64 {
        self.sums.last().copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_integrals() {
        let f = TestFunction::indicator(0.0, 1.0).unwrap();
        assert!((f.tilted_integral(2.0) - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
        assert_eq!(f.integral(), 1.0);
        assert!(TestFunction::indicator(1.0, 1.0).is_err());
    }

    #[test]
    fn cell_averages_on_aligned_lattice() {
        let f = TestFunction::indicator(0.0, 1.0).unwrap();
        let lat = Lattice::covering(-1.0, 2.0, 0.02);
        let g = GridField::from_test_function(&f, lat, FieldKind::V);
        assert!((g.at(0.0) - 0.5).abs() < 1e-9);
        assert!((g.at(0.5) - 1.0).abs() < 1e-12);
        assert!((g.at(1.0) - 0.5).abs() < 1e-9);
        assert_eq!(g.at(1.5), 0.0);
        let sum: f64 = g.values.iter().sum::<f64>() * 0.02;
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_cell_function() {
        let f = TestFunction::cell(0.0, 1.0);
        let g = GridField::from_test_function(&f, Lattice::covering(-3.0, 3.0, 1.0), FieldKind::U);
        assert_eq!(g.at(0.0), 1.0);
        assert_eq!(g.at(1.0), 0.0);
        assert_eq!(g.at(-1.0), 0.0);
    }

    #[test]
    fn shift_moves_support() {
        let f = TestFunction::indicator(0.0, 1.0).unwrap().shifted(0.3);
        assert_eq!(f.support(), (-0.3, 0.7));
        assert_eq!(f.eval(0.69), 1.0);
    }

    #[test]
    fn lookup_outside_window() {
        let g = GridField {
            k0: 0,
            delta: 0.5,
            values: vec![1.0, 0.5, 0.0],
            kind: FieldKind::U,
            n: 0,
            mass_loss: 0.0,
        };
        assert_eq!(g.lookup(-0.1), None);
        assert_eq!(g.at_checked(-0.1), (0.0, true));
        assert!((g.at(0.25) - 0.75).abs() < 1e-15);
        assert!(g.to_csv().starts_with("x,value\n0.0000000000000000e0,1.0000000000000000e0\n"));
    }
}
