//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::ParamTree;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub coordinates_checked: usize,
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// Every coordinate is checked when there are at most `max_coords`;
/// otherwise a seeded random subset of `max_coords` (at least 50) is used.
pub fn gradient_check<P, F>(
    f: F,
    params: &P,
    analytic: &P,
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    P: ParamTree + Clone,
    F: Fn(&P) -> Result<f64>,
{
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    let shapes: Vec<(String, usize)> = params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let total: usize = shapes.iter().map(|(_, n)| n).sum();
    let budget = max_coords.max(50);
    let coords: Vec<usize> = if total <= budget {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, total, budget).into_vec();
        c.sort_unstable();
        c
    };

    let analytic_flat: Vec<f64> = analytic
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
        .collect();
    if analytic_flat.len() != total {
        return Err(Error::shape("analytic gradient does not match parameters"));
    }

    let mut worst = (0.0f64, String::new());
    let mut probe = params.clone();
    for &c in &coords {
        let (tensor, offset) = locate(&shapes, c);
        let orig = nth(&probe, tensor, offset);
        set(&mut probe, tensor, offset, orig + epsilon);
        let plus = f(&probe)?;
        set(&mut probe, tensor, offset, orig - epsilon);
        let minus = f(&probe)?;
        set(&mut probe, tensor, offset, orig);

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic_flat[c];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of {}[{offset}]",
                shapes[tensor].0
            )));
        }
        let err = relative_error(a, numeric);
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, format!("{}[{offset}]", shapes[tensor].0));
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_parameter: worst.1,
        coordinates_checked: coords.len(),
    })
}

fn locate(shapes: &[(String, usize)], mut flat: usize) -> (usize, usize) {
    for (i, (_, n)) in shapes.iter().enumerate() {
        if flat < *n {
            return (i, flat);
        }
        flat -= n;
    }
    unreachable!("coordinate in range")
}

fn nth<P: ParamTree>(p: &P, tensor: usize, offset: usize) -> f64 {
    let ts = p.tensors();
    *ts[tensor].1.iter().nth(offset).unwrap()
}

fn set<P: ParamTree>(p: &mut P, tensor: usize, offset: usize, value: f64) {
    let mut ts = p.tensors_mut();
    *ts[tensor].1.iter_mut().nth(offset).unwrap() = value;
}
