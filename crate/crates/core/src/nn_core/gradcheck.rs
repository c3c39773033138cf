use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum tolerated relative error.
    pub tolerance: f64,
    /// Coordinates sampled per parameter tensor; smaller tensors are checked in full.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            coords_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub passed: bool,
}

/// Denominator floor so near-zero gradients are judged on absolute error.
const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients against central differences.
///
/// `loss_fn(store, backward)` must return the loss and, when `backward` is
/// true, accumulate its gradient into the (pre-zeroed) parameter grads. It
/// must be deterministic.
pub fn grad_check<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    mut loss_fn: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    store.zero_grad();
    let base = loss_fn(store, true)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("grad_check: loss is {base}")));
    }
    let analytic: Vec<Vec<f64>> = params.iter().map(|&p| store.grad(p).to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        passed: true,
    };
    for (pi, &p) in params.iter().enumerate() {
        let len = store.data(p).len();
        let coords: Vec<usize> = if len <= cfg.coords_per_param {
            (0..len).collect()
        } else {
            sample(&mut rng, len, cfg.coords_per_param).into_vec()
        };
        for k in coords {
            let orig = store.data(p)[k];
            store.data_mut(p)[k] = orig + cfg.step;
            let up = loss_fn(store, false)?;
            store.data_mut(p)[k] = orig - cfg.step;
            let down = loss_fn(store, false)?;
            store.data_mut(p)[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "grad_check: non-finite loss perturbing {}[{k}]",
                    store.get(p).name
                )));
            }
            let numeric = (up - down) / (2.0 * cfg.step);
            let err = relative_error(analytic[pi][k], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(p).name.clone(), k));
            }
        }
    }
    report.passed = report.max_rel_error < cfg.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn_core::{Tape, Tensor};

    fn sum_of_squares(store: &mut ParamStore, id: ParamId, backward: bool, factor: f64) -> f64 {
        let mut tape = Tape::new();
        let x = tape.param_slice(store, id, 0, store.data(id).len());
        let sq = tape.mul(x, x);
        let ones = tape.input(vec![1.0; store.data(id).len()]);
        let total = {
            let w = tape.mul(sq, ones);
            let parts: Vec<_> = (0..store.data(id).len()).map(|i| tape.slice(w, i, 1)).collect();
            tape.sum(&parts)
        };
        if backward {
            tape.backward_with_seed(total, &[factor], store);
        }
        tape.scalar(total)
    }

    fn store() -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::from_vec(&[4], vec![0.5, -1.5, 2.0, 3.25]).unwrap());
        (s, id)
    }

    #[test]
    fn sum_of_squares_passes() {
        let (mut s, id) = store();
        let cfg = GradCheckConfig {
            tolerance: 1e-8,
            ..Default::default()
        };
        let r = grad_check(&mut s, &[id], |s, b| Ok(sum_of_squares(s, id, b, 1.0)), &cfg).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 4);
        assert_eq!(s.grad(id), &[1.0, -3.0, 4.0, 6.5]);
    }

    #[test]
    fn doubled_gradient_fails() {
        let (mut s, id) = store();
        let r = grad_check(
            &mut s,
            &[id],
            |s, b| Ok(sum_of_squares(s, id, b, 2.0)),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.4);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (mut s, id) = store();
        let r = grad_check(&mut s, &[id], |_, _| Ok(f64::NAN), &GradCheckConfig::default());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
