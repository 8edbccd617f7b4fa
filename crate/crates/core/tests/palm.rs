use presence_core::offspring::{Displacement, Multiplicity};
use presence_core::{Error, OffspringKind, OffspringModel};

fn h(x: f64, rest: &[f64]) -> f64 {
    (0.3 * x).exp() * rest.iter().map(|z| 1.0 - 0.2 * (1.0 + (2.0 * z).sin())).product::<f64>() + 0.1 * rest.len() as f64
}

/// Every configuration with its probability.
fn configurations(model: &OffspringModel) -> Vec<(f64, Vec<f64>)> {
    match &model.kind {
        OffspringKind::AtomSet { configs } => configs.clone(),
        OffspringKind::IidDisplacement {
            multiplicity: Multiplicity::Discrete { pmf },
            displacement: Displacement::Atoms { values, probs },
        } => {
            let mut out = Vec::new();
            for (n, pn) in pmf.iter().enumerate() {
                let mut tuples = vec![(*pn, Vec::new())];
                for _ in 0..n {
                    let mut next = Vec::new();
                    for (w, c) in &tuples {
                        for (z, p) in values.iter().zip(probs) {
                            let mut c: Vec<f64> = c.clone();
                            c.push(*z);
                            next.push((w * p, c));
                        }
                    }
                    tuples = next;
                }
                out.extend(tuples);
            }
            out
        }
        _ => unreachable!(),
    }
}

fn check_disintegration(model: &OffspringModel, atoms: &[f64]) {
    let configs = configurations(model);
    let lhs: f64 = configs
        .iter()
        .map(|(p, c)| {
            p * (0..c.len())
                .map(|i| {
                    let rest: Vec<f64> = c.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, z)| *z).collect();
                    h(c[i], &rest)
                })
                .sum::<f64>()
        })
        .sum();
    let kernel = model.palm_kernel().unwrap();
    let rhs: f64 = atoms
        .iter()
        .map(|x| {
            let rho: f64 = configs.iter().map(|(p, c)| p * c.iter().filter(|z| *z == x).count() as f64).sum();
            let law = kernel.law(*x).unwrap();
            assert!((law.iter().map(|(w, _)| w).sum::<f64>() - 1.0).abs() < 1e-12);
            rho * law.iter().map(|(w, rest)| w * h(*x, rest)).sum::<f64>()
        })
        .sum();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn atom_set_disintegration() {
    let model = OffspringModel::new(
        "atoms",
        OffspringKind::AtomSet {
            configs: vec![
                (0.2, vec![-1.0, 0.5]),
                (0.3, vec![0.5, 0.5, 2.0]),
                (0.1, vec![]),
                (0.4, vec![-1.0, -1.0, 0.5, 1.25]),
            ],
        },
        false,
    )
    .unwrap();
    check_disintegration(&model, &[-1.0, 0.5, 1.25, 2.0]);
}

#[test]
fn iid_discrete_disintegration() {
    let model = OffspringModel::new(
        "iid",
        OffspringKind::IidDisplacement {
            multiplicity: Multiplicity::Discrete {
                pmf: vec![0.1, 0.15, 0.2, 0.25, 0.1, 0.1, 0.1],
            },
            displacement: Displacement::Atoms {
                values: vec![-0.7, 0.0, 0.4, 1.1],
                probs: vec![0.1, 0.2, 0.3, 0.4],
            },
        },
        false,
    )
    .unwrap();
    check_disintegration(&model, &[-0.7, 0.0, 0.4, 1.1]);
}

#[test]
fn palm_multiplicity_law() {
    let m = Multiplicity::Discrete {
        pmf: vec![0.05, 0.2, 0.3, 0.25, 0.1, 0.05, 0.05],
    };
    let total: f64 = (0..7).map(|k| m.palm_pmf(k)).sum();
    let mean: f64 = (0..7).map(|k| k as f64 * m.palm_pmf(k)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!((mean - m.factorial_moment2() / m.mean()).abs() < 1e-12);
}

#[test]
fn palm_law_rejects_non_atoms() {
    let model = OffspringModel::binary_pm1();
    let kernel = model.palm_kernel().unwrap();
    assert!(matches!(kernel.law(0.3), Err(Error::XNotInSupport(_))));
    assert!(matches!(
        OffspringModel::gaussian2().palm_kernel().unwrap().law(0.0),
        Err(Error::UnsupportedPalm(_))
    ));
}
