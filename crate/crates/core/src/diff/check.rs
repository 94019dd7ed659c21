use rand::seq::index::sample;

use super::matrix::Matrix;
use super::rng::SeededRng;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Compares reverse-mode gradients with central differences.
///
/// `f` builds a scalar loss on a fresh tape from leaves holding `params`.
/// At most `max_coords` coordinates are probed (chosen with `rng` when there
/// are more). Returns the largest
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Matrix],
    step: f64,
    max_coords: usize,
    rng: &mut SeededRng,
) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|m| tape.leaf(m.clone(), false))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).as_scalar()
    };

    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|m| tape.leaf(m.clone(), true))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, m)| (0..m.len()).map(move |k| (p, k)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= max_coords {
        (0..coords.len()).collect()
    } else {
        let mut picked = sample(rng, coords.len(), max_coords).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for c in chosen {
        let (p, k) = coords[c];
        let analytic = grads.get(vars[p]).map_or(0.0, |g| g.data()[k]);
        let orig = probe[p].data()[k];
        probe[p].data_mut()[k] = orig + step;
        let up = eval(&probe)?;
        probe[p].data_mut()[k] = orig - step;
        let down = eval(&probe)?;
        probe[p].data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
