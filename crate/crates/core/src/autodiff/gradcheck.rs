//! Central-difference gradient checking.

use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares the tape gradient of `f` at `point` against central differences.
///
/// `f` records a scalar on the given tape from the leaf holding the input.
/// Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Config(format!("grad_check step must be > 0, got {step}")));
    }

    let mut tape = Tape::new();
    let x = tape.variable(point.clone());
    let y = f(&mut tape, x)?;
    let fx = tape.value(y).item();
    if !fx.is_finite() {
        return Err(Error::NonFinite("grad_check: f(point)".into()));
    }
    let analytic = tape.backward(y)?.wrt(x);

    let eval = |p: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(p);
        let y = f(&mut tape, x)?;
        let v = tape.value(y).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("grad_check: perturbed evaluation".into()))
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.values_mut()[i] += step;
        let mut minus = point.clone();
        minus.values_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.values()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_form_is_nearly_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let p = Tensor::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        // f(x) = x A xᵀ
        let err = grad_check(
            |t, x| {
                let a = t.constant(a.clone());
                let ax = t.matmul(x, a)?;
                let prod = t.mul(ax, x)?;
                t.sum(prod)
            },
            &p,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let p = Tensor::row(vec![0.3, -0.7]);
        let err = grad_check(
            |t, x| {
                let z = t.scale(x, 0.0)?;
                let s = t.sum(z)?;
                t.add_scalar(s, 4.0)
            },
            &p,
            DEFAULT_STEP,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        let p = Tensor::scalar(1.0);
        assert!(grad_check(|t, x| t.sum(x), &p, 0.0).is_err());
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let p = Tensor::scalar(1000.0);
        let res = grad_check(
            |t, x| {
                let e = t.exp(x)?;
                t.sum(e)
            },
            &p,
            DEFAULT_STEP,
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
