use rand::Rng;

use super::tensor::{Parameter, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sum(exp(v)))` with a max shift.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("log_sum_exp of an empty vector".into()));
    }
    Ok(log_sum_exp_unchecked(v))
}

pub(crate) fn log_sum_exp_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Inverted dropout on a plain tensor. Eval mode is the identity.
pub fn dropout_apply<R: Rng>(x: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Rescale all gradients so their global L2 norm is at most `threshold`.
/// Returns the applied scale (1.0 when nothing was clipped).
pub fn clip_gradients(params: &mut [Parameter], threshold: f64) -> f64 {
    let sq: f64 = params
        .iter()
        .filter_map(|p| p.tensor.grad())
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum();
    let norm = sq.sqrt();
    // Rounding can leave an already-clipped norm an ulp or two above threshold.
    if !(norm > threshold * (1.0 + 1e-12)) {
        return 1.0;
    }
    let scale = threshold / norm;
    for p in params.iter_mut() {
        if let Some(g) = p.tensor.grad_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        let big = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!(big.is_finite());
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn log_sum_exp_bounds(v in proptest::collection::vec(-500.0f64..500.0, 1..20)) {
            let lse = log_sum_exp(&v).unwrap();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lse >= max);
            prop_assert!(lse <= max + (v.len() as f64).ln() + 1e-12);
        }
    }

    fn grads(vals: &[f64]) -> Vec<Parameter> {
        let mut t = Tensor::from_vec(&[vals.len()], vec![0.0; vals.len()]).unwrap().with_grad();
        t.grad_mut().unwrap().copy_from_slice(vals);
        vec![Parameter { name: "p".into(), tensor: t }]
    }

    #[test]
    fn clipping_halves_norm_ten() {
        let mut p = grads(&[6.0, 8.0]);
        assert_eq!(clip_gradients(&mut p, 5.0), 0.5);
        assert_eq!(p[0].tensor.grad().unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn clipping_below_threshold_is_noop() {
        let mut p = grads(&[0.0, 3.0]);
        assert_eq!(clip_gradients(&mut p, 5.0), 1.0);
        assert_eq!(p[0].tensor.grad().unwrap(), &[0.0, 3.0]);
        let mut z = grads(&[0.0, 0.0]);
        assert_eq!(clip_gradients(&mut z, 5.0), 1.0);
        assert!(z[0].tensor.grad().unwrap().iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn clipping_is_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 1..30), t in 0.1f64..10.0) {
            let mut p = grads(&v);
            clip_gradients(&mut p, t);
            prop_assert_eq!(clip_gradients(&mut p, t), 1.0);
        }
    }

    #[test]
    fn dropout_contracts() {
        let x = Tensor::from_vec(&[10], vec![1.0; 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(dropout_apply(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout_apply(&x, 0.5, Mode::Eval, &mut rng).unwrap(), x);
        let y = dropout_apply(&x, 0.5, Mode::Train, &mut rng).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0 || *v == 2.0));
        assert!(matches!(
            dropout_apply(&x, 1.0, Mode::Train, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dropout_same_seed_is_bitwise_reproducible() {
        let x = Tensor::from_vec(&[64], (0..64).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = dropout_apply(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = dropout_apply(&x, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }
}
