use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamSet};

/// Which coordinates a gradient check visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    /// A seeded random sample of `count` coordinates (at least 200 is customary).
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// `(parameter name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares `analytic` against central differences of `loss_fn`.
///
/// Relative error per coordinate is `|a - n| / max(1e-12, |a| + |n|)`.
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamSet,
    analytic: &Gradients,
    h: f64,
    subset: Subset,
) -> GradCheckReport
where
    F: Fn(&ParamSet) -> f64,
{
    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.value.len()).map(move |j| (pi, j)))
        .collect();
    if let Subset::Random { count, seed } = subset {
        if count < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> = sample(&mut rng, coords.len(), count).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: coords.len(),
        worst: None,
    };
    for (pi, j) in coords {
        let orig = probe.value(pi).data()[j];
        probe.value_mut(pi).data_mut()[j] = orig + h;
        let plus = loss_fn(&probe);
        probe.value_mut(pi).data_mut()[j] = orig - h;
        let minus = loss_fn(&probe);
        probe.value_mut(pi).data_mut()[j] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.0[pi].data()[j];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = Some((params.iter().nth(pi).unwrap().name.clone(), j));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncore::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::from_vec(&[1], vec![3.0]).unwrap()).unwrap();
        let analytic = Gradients(vec![Tensor::from_vec(&[1], vec![6.0]).unwrap()]);
        let report = grad_check(|p| p.value(0).data()[0].powi(2), &ps, &analytic, 1e-5, Subset::All);
        assert!(report.max_rel_err < 1e-9, "{report:?}");
        assert_eq!(report.coords_checked, 1);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let analytic = Gradients(vec![Tensor::from_vec(&[2], vec![2.0, 1.0]).unwrap()]);
        let report = grad_check(
            |p| p.value(0).data().iter().map(|v| v * v).sum(),
            &ps,
            &analytic,
            1e-5,
            Subset::All,
        );
        assert!(report.max_rel_err > 0.1);
        assert_eq!(report.worst, Some(("w".to_string(), 1)));
    }

    #[test]
    fn random_subset_size() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::zeros(&[50])).unwrap();
        let analytic = ps.zero_grads();
        let report = grad_check(|_| 0.0, &ps, &analytic, 1e-5, Subset::Random { count: 10, seed: 1 });
        assert_eq!(report.coords_checked, 10);
        assert_eq!(report.max_rel_err, 0.0);
    }
}
