//! Central finite-difference verification of tape gradients.

use super::tape::{Fault, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-6;

/// Outcome of one gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// (input index, element index) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares tape gradients of the scalar function `f` against central
/// differences over every element of every input.
///
/// `f` receives the tape and one trainable leaf per input and must return a
/// 1×1 tensor. The relative error per element is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn gradient_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    gradient_check_with_fault(f, inputs, eps, None)
}

pub fn gradient_check_with_fault<F>(
    f: F,
    inputs: &[Tensor],
    eps: f64,
    fault: Option<Fault>,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "gradient_check eps must be > 0, got {eps}"
        )));
    }

    let mut tape = Tape::with_fault(fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value}")));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {v} under perturbation"
            )));
        }
        Ok(v)
    };

    let mut work: Vec<Tensor> = inputs.iter().map(Tensor::detached).collect();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for i in 0..work.len() {
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            let (hi, lo) = (orig + eps, orig - eps);
            work[i].data_mut()[j] = hi;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = lo;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;

            // divide by the step actually taken, not the nominal 2·eps
            let numeric = (plus - minus) / (hi - lo);
            let a = analytic[i][j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_no_error() {
        for v in [0.3, -1.7, 12.5] {
            let x = Tensor::scalar(v);
            let rep = gradient_check(|t, v| Ok(t.sum(v[0])), &[x], DEFAULT_EPS).unwrap();
            assert!(rep.max_rel_error < 1e-10, "{rep:?}");
        }
    }

    #[test]
    fn sum_error_is_rounding_only() {
        let x = Tensor::from_fn(3, 2, |r, c| r as f64 - c as f64 * 0.5);
        let rep = gradient_check(|t, v| Ok(t.sum(v[0])), &[x], DEFAULT_EPS).unwrap();
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
        assert_eq!(rep.checked, 6);
    }

    #[test]
    fn rejects_bad_eps() {
        let x = Tensor::zeros(1, 1);
        assert!(gradient_check(|t, v| Ok(t.sum(v[0])), &[x], 0.0).is_err());
    }

    #[test]
    fn detects_injected_fault() {
        let x = Tensor::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let f = |t: &mut Tape, v: &[Var]| {
            let h = t.hardswish(v[0]);
            Ok(t.sum(h))
        };
        let ok = gradient_check(f, std::slice::from_ref(&x), DEFAULT_EPS).unwrap();
        assert!(ok.max_rel_error < 1e-6);
        let bad =
            gradient_check_with_fault(f, &[x], DEFAULT_EPS, Some(Fault::HardswishGrad)).unwrap();
        assert!(bad.max_rel_error > 0.1);
    }
}
