use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares the reverse-mode gradient of scalar `f` at `x` with central
/// differences of step `h`, over `coords` (all coordinates when `None`).
///
/// Returns the max over coordinates of `|analytic - numeric| / (|numeric| + 1e-6)`.
pub fn finite_difference_check<S: Scalar>(
    f: impl Fn(&Tensor<S>) -> Tensor<S>,
    x: &Tensor<S>,
    h: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheck> {
    let leaf = x.detach_param();
    let y = f(&leaf);
    if y.numel() != 1 {
        return Err(Error::dim("finite_difference_check needs a scalar-valued function"));
    }
    if !y.item().is_finite() {
        return Err(Error::Numeric("function value is not finite".into()));
    }
    y.backward();
    let analytic = leaf.grad().unwrap_or_else(|| vec![S::zero(); x.numel()]);
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.numel()).collect();
            &all
        }
    };
    let eval = |i: usize, delta: f64| -> Result<f64> {
        let mut data = x.to_vec();
        data[i] = data[i] + S::of(delta);
        let v = super::no_grad(|| f(&Tensor::new(x.shape(), data))).item();
        v.to_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Numeric(format!("non-finite value perturbing coordinate {i}")))
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: coords.len(),
    };
    for &i in coords {
        let numeric = (eval(i, h)? - eval(i, -h)?) / (2.0 * h);
        let a = analytic[i].to_f64().unwrap_or(f64::NAN);
        let rel = (a - numeric).abs() / (numeric.abs() + 1e-6);
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = Tensor::<f64>::new(&[1], vec![3.0]);
        let r = finite_difference_check(|t| t.square().sum(), &x, 1e-3, None).unwrap();
        assert!(r.max_rel_error < 1e-4);
        let leaf = x.detach_param();
        leaf.square().sum().backward();
        assert_eq!(leaf.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::<f64>::new(&[3], vec![1.0, 2.0, 3.0]);
        let r = finite_difference_check(|t| t.scale(0.0).sum().add_scalar(5.0), &x, 1e-3, None).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let x = Tensor::<f64>::new(&[1], vec![0.0]);
        let r = finite_difference_check(|t| t.ln().sum(), &x, 1e-3, None);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
