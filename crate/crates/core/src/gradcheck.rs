//! Central finite-difference gradient verification.
//!
//! The checker only evaluates the supplied closure; it never touches the tape
//! internals, so it stays independent of the reverse-mode path it validates.

use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Central-difference gradients of a scalar function of several tensors.
pub fn finite_difference_grads<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let n = inputs[i].len();
        let mut g = vec![0.0; n];
        for e in 0..n {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + step;
            let plus = f(&work);
            work[i].data_mut()[e] = orig - step;
            let minus = f(&work);
            work[i].data_mut()[e] = orig;
            g[e] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    grads
}

/// Worst relative error between analytic and finite-difference gradients.
///
/// relative error = |ad - fd| / (|fd| + 1e-8)
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.len(), n.len(), "gradient length mismatch");
        for (&av, &nv) in a.iter().zip(n) {
            let rel = (av - nv).abs() / (nv.abs() + 1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Run a full gradient check: evaluate `f` through finite differences and
/// compare against `analytic`. Returns the worst relative error, or an error
/// message naming the offending input and element.
pub fn check_gradients<F>(
    f: F,
    inputs: &[Tensor<f64>],
    analytic: &[Vec<f64>],
    step: f64,
    tolerance: f64,
) -> Result<f64, String>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    let numeric = finite_difference_grads(f, inputs, step);
    let mut worst = 0.0f64;
    let mut at = (0usize, 0usize);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (e, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let rel = (av - nv).abs() / (nv.abs() + 1e-8);
            if rel > worst {
                worst = rel;
                at = (i, e);
            }
        }
    }
    if worst < tolerance {
        Ok(worst)
    } else {
        Err(format!(
            "gradient check failed: relative error {:.3e} at input {} element {} (analytic {:.6e}, numeric {:.6e})",
            worst,
            at.0,
            at.1,
            analytic[at.0][at.1],
            numeric[at.0][at.1]
        ))
    }
}
