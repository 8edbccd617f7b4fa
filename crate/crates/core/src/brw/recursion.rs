//! Exact lattice recursions for `u_n[f]` and `v_n[f]`.

use super::grid::{FieldKind, GridField, GridSpec, Lattice, TestFunction};
use crate::error::{invalid, Error, Result};
use crate::numerics::normal_interval;
use crate::offspring::{Displacement, Multiplicity, OffspringKind, OffspringModel};

/// Weights `w[i]` at lattice offsets `jmin + i`.
#[derive(Debug, Clone, PartialEq)]
struct DenseKernel {
    jmin: i64,
    w: Vec<f64>,
}

/// A point `z` as lattice offset `j` plus interpolation fraction.
fn split_point(z: f64, delta: f64) -> (i64, f64) {
    let t = z / delta;
    let j = t.floor();
    let frac = t - j;
    if frac < 1e-9 {
        (j as i64, 0.0)
    } else if frac > 1.0 - 1e-9 {
        (j as i64 + 1, 0.0)
    } else {
        (j as i64, frac)
    }
}

impl DenseKernel {
    fn from_points(points: impl Iterator<Item = (f64, f64)>, delta: f64) -> Self {
        let mut pairs = Vec::new();
        for (z, w) in points {
            if w == 0.0 {
                continue;
            }
            let (j, frac) = split_point(z, delta);
            pairs.push((j, w * (1.0 - frac)));
            if frac > 0.0 {
                pairs.push((j + 1, w * frac));
            }
        }
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: Vec<(i64, f64)>) -> Self {
        let jmin = pairs.iter().map(|p| p.0).min().unwrap_or(0);
        let jmax = pairs.iter().map(|p| p.0).max().unwrap_or(0);
        let mut w = vec![0.0; (jmax - jmin + 1) as usize];
        for (j, x) in pairs {
            w[(j - jmin) as usize] += x;
        }
        DenseKernel { jmin, w }
    }

    fn normal(mean: f64, sd: f64, delta: f64, sds: f64) -> Self {
        let lo = ((mean - sds * sd) / delta).floor() as i64;
        let hi = ((mean + sds * sd) / delta).ceil() as i64;
        let w = (lo..=hi)
            .map(|j| {
                let c = j as f64 * delta;
                normal_interval(mean, sd, c - 0.5 * delta, c + 0.5 * delta)
            })
            .collect();
        DenseKernel { jmin: lo, w }
    }

    fn scaled(mut self, factor: f64) -> Self {
        for w in &mut self.w {
            *w *= factor;
        }
        self
    }

    fn jmax(&self) -> i64 {
        self.jmin + self.w.len() as i64 - 1
    }

    fn mass(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Mean and standard deviation of the normalized kernel, in space units.
    fn moments(&self, delta: f64) -> (f64, f64) {
        let m = self.mass();
        let mut mean = 0.0;
        for (i, w) in self.w.iter().enumerate() {
            mean += w * (self.jmin + i as i64) as f64;
        }
        mean /= m;
        let mut var = 0.0;
        for (i, w) in self.w.iter().enumerate() {
            let d = (self.jmin + i as i64) as f64 - mean;
            var += w * d * d;
        }
        (mean * delta, (var / m).max(0.0).sqrt() * delta)
    }

    /// `new[k] = sum_j w_j old[k + j]`; returns mass that would have come
    /// from outside the window, extrapolating the edge values.
    fn apply(&self, old: &[f64], new: &mut [f64]) -> f64 {
        let len = old.len() as i64;
        new.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for (i, &w) in self.w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let j = self.jmin + i as i64;
            let k_lo = (-j).clamp(0, len);
            let k_hi = (len - j).clamp(0, len);
            if k_lo < k_hi {
                let src = &old[(k_lo + j) as usize..(k_hi + j) as usize];
                for (dst, s) in new[k_lo as usize..k_hi as usize].iter_mut().zip(src) {
                    *dst += w * s;
                }
            }
            loss += w * (k_lo as f64 * old[0] + (len - k_hi) as f64 * old[len as usize - 1]);
        }
        loss
    }
}

#[inline]
fn interp(old: &[f64], idx: i64, frac: f64) -> f64 {
    let get = |i: i64| {
        if i >= 0 && (i as usize) < old.len() {
            old[i as usize]
        } else {
            0.0
        }
    };
    let v0 = get(idx);
    if frac == 0.0 {
        v0
    } else {
        v0 + frac * (get(idx + 1) - v0)
    }
}

enum ProductRule {
    /// `u = 1 - F(1 - s)` with `s` the smoothing by the displacement law.
    Pgf {
        multiplicity: Multiplicity,
        smoothing: DenseKernel,
    },
    /// Weighted configurations as `(probability, [(offset, frac)])`.
    Enumerate(Vec<(f64, Vec<(i64, f64)>)>),
}

/// Lattice plus the transition operators of one model.
pub struct GridRecursion {
    pub lattice: Lattice,
    pub mass_tol: f64,
    intensity: DenseKernel,
    product: ProductRule,
}

impl GridRecursion {
    pub fn new(model: &OffspringModel, f: &TestFunction, n: usize, spec: &GridSpec) -> Result<Self> {
        f.validate()?;
        let delta = spec.delta.unwrap_or_else(|| f.default_delta());
        if !(delta > 0.0) || delta > f.max_delta() * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "grid step {delta} does not resolve the test function (need <= {})",
                f.max_delta()
            )));
        }
        let (intensity, product) = match &model.kind {
            OffspringKind::IidDisplacement {
                multiplicity,
                displacement,
            } => {
                let smoothing = match displacement {
                    Displacement::Dirac { at } => DenseKernel::from_points([(*at, 1.0)].into_iter(), delta),
                    Displacement::Normal { mean, sd } => DenseKernel::normal(*mean, *sd, delta, spec.kernel_sds),
                    Displacement::Atoms { values, probs } => DenseKernel::from_points(
                        values.iter().copied().zip(probs.iter().copied()),
                        delta,
                    ),
                };
                (
                    smoothing.clone().scaled(multiplicity.mean()),
                    ProductRule::Pgf {
                        multiplicity: multiplicity.clone(),
                        smoothing,
                    },
                )
            }
            _ => {
                let configs = model
                    .finite_configs()
                    .ok_or_else(|| Error::UnsupportedModel(model.name.clone()))?;
                let intensity = DenseKernel::from_points(
                    configs.iter().flat_map(|(p, c)| c.iter().map(move |z| (*z, *p))),
                    delta,
                );
                let rule = ProductRule::Enumerate(
                    configs
                        .iter()
                        .map(|(p, c)| (*p, c.iter().map(|z| split_point(*z, delta)).collect()))
                        .collect(),
                );
                (intensity, rule)
            }
        };
        let lattice = match spec.window {
            Some((lo, hi)) => {
                if !(lo < hi) {
                    return Err(invalid(format!("empty grid window [{lo}, {hi}]")));
                }
                Lattice::covering(lo, hi, delta)
            }
            None => auto_window(&intensity, f, n, spec, delta),
        };
        Ok(Self {
            lattice,
            mass_tol: spec.mass_tol,
            intensity,
            product,
        })
    }

    pub fn initial(&self, f: &TestFunction, kind: FieldKind) -> GridField {
        GridField::from_test_function(f, self.lattice, kind)
    }

    fn check_loss(&self, loss: f64, new: &[f64]) -> Result<f64> {
        let total: f64 = new.iter().sum();
        let rel = if loss == 0.0 {
            0.0
        } else if total > 0.0 {
            loss / total
        } else {
            f64::INFINITY
        };
        if rel > self.mass_tol {
            return Err(Error::WindowOverflow {
                loss: rel,
                tolerance: self.mass_tol,
            });
        }
        Ok(rel)
    }

    pub fn step_v(&self, prev: &GridField) -> Result<GridField> {
        let mut values = vec![0.0; prev.len()];
        let loss = self.intensity.apply(&prev.values, &mut values);
        let rel = self.check_loss(loss, &values)?;
        Ok(GridField {
            values,
            n: prev.n + 1,
            mass_loss: prev.mass_loss.max(rel),
            ..prev.clone()
        })
    }

    pub fn step_u(&self, prev: &GridField) -> Result<GridField> {
        let len = prev.len();
        let mut values = vec![0.0; len];
        let loss = match &self.product {
            ProductRule::Pgf {
                multiplicity,
                smoothing,
            } => {
                let loss = smoothing.apply(&prev.values, &mut values);
                for v in &mut values {
                    *v = multiplicity.one_minus_pgf_at_complement(v.clamp(0.0, 1.0)).clamp(0.0, 1.0);
                }
                loss * multiplicity.mean()
            }
            ProductRule::Enumerate(configs) => {
                let old = &prev.values;
                let (lo_edge, hi_edge) = (old[0], old[len - 1]);
                let mut loss = 0.0;
                for (p, pts) in configs {
                    for (k, out) in values.iter_mut().enumerate() {
                        let mut hit = 0.0;
                        for &(j, frac) in pts {
                            let u = interp(old, k as i64 + j, frac);
                            hit += u * (1.0 - hit);
                        }
                        *out += p * hit;
                    }
                    for &(j, _) in pts {
                        let below = (-j).clamp(0, len as i64) as f64;
                        let above = j.clamp(0, len as i64) as f64;
                        loss += p * (below * lo_edge + above * hi_edge);
                    }
                }
                for v in &mut values {
                    *v = v.clamp(0.0, 1.0);
                }
                loss
            }
        };
        let rel = self.check_loss(loss, &values)?;
        Ok(GridField {
            values,
            n: prev.n + 1,
            mass_loss: prev.mass_loss.max(rel),
            ..prev.clone()
        })
    }
}

/// Window holding the bulk of `v_n` and every requested target. For
/// one-sided displacement laws the side that never feeds back is cut at the
/// targets.
fn auto_window(intensity: &DenseKernel, f: &TestFunction, n: usize, spec: &GridSpec, delta: f64) -> Lattice {
    let (alpha, beta) = f.support();
    let (mu, sigma) = intensity.moments(delta);
    let zmin = intensity.jmin as f64 * delta;
    let zmax = intensity.jmax() as f64 * delta;
    let nf = n as f64;
    let spread = 10.0 * sigma * nf.sqrt();
    let mut lo = (alpha - nf * zmax).max(alpha - nf * mu - spread) - spec.pad;
    let mut hi = (beta - nf * zmin).min(beta - nf * mu + spread) + spec.pad;
    let t_lo = spec.targets.iter().copied().fold(alpha, f64::min) - spec.pad;
    let t_hi = spec.targets.iter().copied().fold(beta, f64::max) + spec.pad;
    lo = lo.min(t_lo);
    hi = hi.max(t_hi);
    if zmax <= 0.0 {
        hi = hi.min(t_hi);
    }
    if zmin >= 0.0 {
        lo = lo.max(t_lo);
    }
    Lattice::covering(lo, hi, delta)
}

/// `v_0, ..., v_n`.
pub fn v_grid_all(model: &OffspringModel, f: &TestFunction, n: usize, spec: &GridSpec) -> Result<Vec<GridField>> {
    let rec = GridRecursion::new(model, f, n, spec)?;
    let mut out = vec![rec.initial(f, FieldKind::V)];
    for _ in 0..n {
        let next = rec.step_v(out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// `u_0, ..., u_n`, on the same lattice as [`v_grid_all`].
pub fn u_grid_all(model: &OffspringModel, f: &TestFunction, n: usize, spec: &GridSpec) -> Result<Vec<GridField>> {
    let rec = GridRecursion::new(model, f, n, spec)?;
    let mut out = vec![rec.initial(f, FieldKind::U)];
    for _ in 0..n {
        let next = rec.step_u(out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

pub fn v_grid(model: &OffspringModel, f: &TestFunction, n: usize, spec: &GridSpec) -> Result<GridField> {
    let rec = GridRecursion::new(model, f, n, spec)?;
    let mut v = rec.initial(f, FieldKind::V);
    for _ in 0..n {
        v = rec.step_v(&v)?;
    }
    Ok(v)
}

pub fn u_grid(model: &OffspringModel, f: &TestFunction, n: usize, spec: &GridSpec) -> Result<GridField> {
    let rec = GridRecursion::new(model, f, n, spec)?;
    let mut u = rec.initial(f, FieldKind::U);
    for _ in 0..n {
        u = rec.step_u(&u)?;
    }
    Ok(u)
}
