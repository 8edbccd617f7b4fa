use rand::Rng;

use crate::error::{Error, Result};
use crate::offspring::OffspringModel;

/// Positions of generation `n` of the branching random walk started from one
/// particle at 0, by direct simulation of the tree.
pub fn simulate_population<R: Rng + ?Sized>(
    model: &OffspringModel,
    n: usize,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut gen = vec![0.0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(gen.len() * 2);
        for x in &gen {
            let z = model.sample_offspring(rng)?;
            next.extend(z.points.iter().map(|d| x + d));
            if next.len() > cap {
                return Err(Error::CapExceeded { size: next.len(), cap });
            }
        }
        gen = next;
        if gen.is_empty() {
            break;
        }
    }
    Ok(gen)
}
