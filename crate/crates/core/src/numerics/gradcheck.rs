//! Finite-difference verification of tape gradients.

use crate::error::{CoreError, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Relative error uses this floor in the denominator so near-zero gradients
/// are compared on an absolute scale instead of blowing up.
const REL_FLOOR: f64 = 1e-2;

/// Outcome of one gradient check over every coordinate of the input.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub coords: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` must build a scalar loss from the given leaf and must not depend on
/// anything mutable across calls; it is evaluated `2 * numel + 1` times.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &Var) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(CoreError::config(format!(
            "finite-difference step must be positive and finite, got {step}"
        )));
    }
    let tape = Tape::new();
    let leaf = tape.leaf(x.clone(), true);
    let loss = f(&tape, &leaf)?;
    if loss.value().numel() != 1 {
        return Err(CoreError::structure(format!(
            "grad_check needs a scalar loss, got shape {:?}",
            loss.value().shape()
        )));
    }
    tape.backward(&loss)?;
    let analytic = leaf
        .grad()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |probe: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let leaf = tape.leaf(probe.clone(), false);
        let loss = f(&tape, &leaf)?;
        loss.item()
    };

    let mut max_rel_err = 0.0_f64;
    let mut worst_coord = 0;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(CoreError::NonFinite { op: "grad_check" });
        }
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_coord = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_coord,
        coords: x.numel(),
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_matches_closed_form() {
        let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let report = grad_check(
            |_, v| v.mul(v)?.sum_all(),
            &x,
            1e-5,
            1e-7,
        )
        .unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }

    #[test]
    fn constant_function_scores_zero_error() {
        let x = Tensor::from_vec(vec![3], vec![0.5, -0.25, 2.0]).unwrap();
        let report = grad_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(7.0))),
            &x,
            1e-5,
            1e-9,
        )
        .unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn rejects_non_scalar_loss() {
        let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let err = grad_check(|_, v| v.mul(v), &x, 1e-5, 1e-7).unwrap_err();
        assert!(err.to_string().contains("scalar"));
    }
}
