use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::dislocation::DislocationModel;
use crate::error::{Error, Result};

pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    /// `log` of the mass, `<= 0`.
    pub log_mass: f64,
    pub id: u64,
    pub parent: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    pub t: f64,
    pub parent: u64,
    pub children: Vec<(u64, f64)>,
}

/// Population of a fragmentation at time `t`, started from one unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentationState {
    pub fragments: Vec<Fragment>,
    pub t: f64,
    /// Total mass of fragments that were frozen by the prune threshold.
    pub pruned_mass: f64,
    pub pruned_count: usize,
    pub events: usize,
    pub trajectory: Option<Vec<SplitEvent>>,
}

impl FragmentationState {
    pub fn log_masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.fragments.iter().map(|f| f.log_mass)
    }

    /// Masses in decreasing order.
    pub fn ranked_masses(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.log_masses().map(f64::exp).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }

    pub fn live_mass(&self) -> f64 {
        self.log_masses().map(f64::exp).sum()
    }

    /// Live plus pruned mass; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.live_mass() + self.pruned_mass
    }

    /// `#{i : lo <= log X_i <= hi}`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.log_masses().filter(|l| *l >= lo && *l <= hi).count()
    }

    /// CSV dump `t,event,parent,child,log_mass` of recorded splits.
    pub fn trajectory_csv(&self) -> Option<String> {
        let events = self.trajectory.as_ref()?;
        let mut out = String::from("t,event,parent,child,log_mass\n");
        for (k, e) in events.iter().enumerate() {
            for (child, lm) in &e.children {
                let _ = writeln!(out, "{:.16e},{k},{},{child},{lm:.16e}", e.t, e.parent);
            }
        }
        Some(out)
    }
}

/// Options for [`simulate_fragmentation_with`].
#[derive(Clone, Copy)]
pub struct SimOptions<'a> {
    /// Fragments born with log-mass below `prune(t)` stop splitting.
    pub prune: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    pub cap: usize,
    pub record: bool,
}

impl Default for SimOptions<'_> {
    fn default() -> Self {
        Self {
            prune: None,
            cap: DEFAULT_POPULATION_CAP,
            record: false,
        }
    }
}

pub fn simulate_fragmentation<R: Rng + ?Sized>(
    d: &DislocationModel,
    t: f64,
    prune: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    rng: &mut R,
) -> Result<FragmentationState> {
    simulate_fragmentation_with(
        d,
        t,
        &SimOptions {
            prune,
            ..SimOptions::default()
        },
        rng,
    )
}

/// Exact simulation: every live fragment carries an independent exponential
/// clock of rate `nu(S)`; at a ring its mass is multiplied by a fresh split.
pub fn simulate_fragmentation_with<R: Rng + ?Sized>(
    d: &DislocationModel,
    t: f64,
    opts: &SimOptions<'_>,
    rng: &mut R,
) -> Result<FragmentationState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative horizon {t}")));
    }
    let clock = Exp::new(d.rate).expect("validated rate");
    let mut state = FragmentationState {
        fragments: Vec::new(),
        t,
        pruned_mass: 0.0,
        pruned_count: 0,
        events: 0,
        trajectory: opts.record.then(Vec::new),
    };
    let mut next_id = 1u64;
    // (log_mass, birth time, id, parent)
    let mut stack: Vec<(f64, f64, u64, Option<u64>)> = vec![(0.0, 0.0, 0, None)];
    while let Some((log_mass, born, id, parent)) = stack.pop() {
        if let Some(prune) = opts.prune {
            if log_mass < prune(born) {
                state.pruned_mass += log_mass.exp();
                state.pruned_count += 1;
                continue;
            }
        }
        let ring = born + clock.sample(rng);
        if ring >= t {
            state.fragments.push(Fragment {
                log_mass,
                id,
                parent,
            });
            if state.fragments.len() + stack.len() > opts.cap {
                return Err(Error::PopulationCap {
                    size: state.fragments.len() + stack.len(),
                    cap: opts.cap,
                });
            }
            continue;
        }
        state.events += 1;
        let split = d.sample_split(rng);
        let mut children = Vec::with_capacity(split.len());
        for s in split {
            let child = (log_mass + s.ln(), ring, next_id, Some(id));
            children.push((next_id, child.0));
            next_id += 1;
            stack.push(child);
        }
        if let Some(tr) = state.trajectory.as_mut() {
            tr.push(SplitEvent {
                t: ring,
                parent: id,
                children,
            });
        }
        if state.fragments.len() + stack.len() > opts.cap {
            return Err(Error::PopulationCap {
                size: state.fragments.len() + stack.len(),
                cap: opts.cap,
            });
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Moments;
    use crate::rng::stream;

    #[test]
    fn zero_horizon_is_single_fragment() {
        let s = simulate_fragmentation(&DislocationModel::uniform_binary(), 0.0, None, &mut stream(1, 0, 0)).unwrap();
        assert_eq!(s.fragments.len(), 1);
        assert_eq!(s.fragments[0].log_mass, 0.0);
    }

    #[test]
    fn mass_is_conserved() {
        let d = DislocationModel::uniform_binary();
        let mut rng = stream(2, 0, 0);
        for _ in 0..500 {
            let s = simulate_fragmentation(&d, 3.0, None, &mut rng).unwrap();
            assert!((s.total_mass() - 1.0).abs() < 1e-9);
        }
        let prune = |_: f64| -2.0;
        for _ in 0..500 {
            let s = simulate_fragmentation(&d, 6.0, Some(&prune), &mut rng).unwrap();
            assert!((s.total_mass() - 1.0).abs() < 1e-9);
            assert!(s.log_masses().all(|l| l >= -2.0));
        }
    }

    #[test]
    fn dyadic_lines_halve_per_event() {
        let d = DislocationModel::dyadic();
        let mut rng = stream(3, 0, 0);
        let s = simulate_fragmentation_with(
            &d,
            2.0,
            &SimOptions {
                record: true,
                ..SimOptions::default()
            },
            &mut rng,
        )
        .unwrap();
        let events = s.trajectory.as_ref().unwrap();
        // Depth of each fragment = number of ancestors that split.
        let mut parent_of = std::collections::HashMap::new();
        for e in events {
            for (c, _) in &e.children {
                parent_of.insert(*c, e.parent);
            }
        }
        for f in &s.fragments {
            let mut k = 0;
            let mut id = f.id;
            while let Some(p) = parent_of.get(&id) {
                k += 1;
                id = *p;
            }
            assert!((f.log_mass + k as f64 * std::f64::consts::LN_2).abs() < 1e-12);
        }
        assert!(s.trajectory_csv().unwrap().starts_with("t,event,parent,child,log_mass\n"));
    }

    #[test]
    fn log_mass_decreases_along_ancestry() {
        let d = DislocationModel::uniform_binary();
        let s = simulate_fragmentation_with(
            &d,
            3.0,
            &SimOptions {
                record: true,
                ..SimOptions::default()
            },
            &mut stream(4, 0, 0),
        )
        .unwrap();
        let mut lm = std::collections::HashMap::from([(0u64, 0.0f64)]);
        for e in s.trajectory.as_ref().unwrap() {
            let parent = lm[&e.parent];
            for (c, l) in &e.children {
                assert!(*l <= parent);
                lm.insert(*c, *l);
            }
        }
    }

    #[test]
    fn tagged_fragment_mean_log_mass() {
        // Size-biased pick, Rao-Blackwellized: E sum X_i log X_i = -t Phi'(0) = -t/2.
        let d = DislocationModel::uniform_binary();
        let t = 2.0;
        let mut rng = stream(5, 0, 0);
        let m: Moments = (0..20_000)
            .map(|_| {
                let s = simulate_fragmentation(&d, t, None, &mut rng).unwrap();
                s.log_masses().map(|l| l.exp() * l).sum::<f64>()
            })
            .collect();
        assert!((m.mean() + t / 2.0).abs() < 3.0 * m.stderr(), "{} ± {}", m.mean(), m.stderr());
    }

    #[test]
    fn population_cap() {
        let d = DislocationModel::uniform_binary();
        let r = simulate_fragmentation_with(
            &d,
            20.0,
            &SimOptions {
                cap: 1000,
                ..SimOptions::default()
            },
            &mut stream(6, 0, 0),
        );
        assert!(matches!(r, Err(Error::PopulationCap { cap: 1000, .. })));
    }
}
