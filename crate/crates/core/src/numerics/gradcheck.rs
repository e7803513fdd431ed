use super::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, element index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// At most `max_coords` evenly spaced coordinates are probed per tensor
/// (`None` probes all). The step actually taken is measured after rounding
/// to `T`, so f32 parameters are not penalized for representation error.
pub fn finite_diff_check<T, F>(
    mut loss: F,
    params: &mut [Tensor<T>],
    analytic: &[Tensor<T>],
    eps: f64,
    max_coords: Option<usize>,
) -> GradCheckReport
where
    T: Real,
    F: FnMut(&[Tensor<T>]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for p in 0..params.len() {
        let n = params[p].len();
        let count = max_coords.map_or(n, |m| m.min(n));
        for s in 0..count {
            let idx = if count == n { s } else { s * n / count };
            let orig = params[p].data()[idx];
            let plus = T::from_f64_lossy(orig.as_f64() + eps);
            let minus = T::from_f64_lossy(orig.as_f64() - eps);
            params[p].data_mut()[idx] = plus;
            let f_plus = loss(params);
            params[p].data_mut()[idx] = minus;
            let f_minus = loss(params);
            params[p].data_mut()[idx] = orig;
            let numeric = (f_plus - f_minus) / (plus.as_f64() - minus.as_f64());
            let err = relative_error(analytic[p].data()[idx].as_f64(), numeric);
            report.coords_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((p, idx));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_is_exact() {
        let mut params = vec![Tensor::<f64>::from_fn(&[7], |i| i as f64 * 0.3 - 1.0)];
        let grad = vec![Tensor::from_vec(&[7], vec![1.0; 7]).unwrap()];
        let r = finite_diff_check(|p| p[0].data().iter().sum(), &mut params, &grad, 1e-3, None);
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
        assert_eq!(r.coords_checked, 7);
    }

    #[test]
    fn quadratic_loss_is_exact_for_central_differences() {
        let mut params = vec![Tensor::<f64>::from_vec(&[3], vec![1.0; 3]).unwrap()];
        let grad = vec![Tensor::from_vec(&[3], vec![2.0; 3]).unwrap()];
        let r = finite_diff_check(
            |p| p[0].data().iter().map(|v| v * v).sum(),
            &mut params,
            &grad,
            1e-3,
            None,
        );
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut params = vec![Tensor::<f64>::from_vec(&[2], vec![0.5, 2.0]).unwrap()];
        let grad = vec![Tensor::from_vec(&[2], vec![1.0, 3.0]).unwrap()];
        let r = finite_diff_check(|p| p[0].data().iter().sum(), &mut params, &grad, 1e-3, None);
        assert!(r.max_rel_error > 0.5);
        assert_eq!(r.worst, Some((0, 1)));
    }

    #[test]
    fn sampling_limits_coordinates() {
        let mut params = vec![Tensor::<f64>::zeros(&[100])];
        let grad = vec![Tensor::from_vec(&[100], vec![1.0; 100]).unwrap()];
        let r = finite_diff_check(|p| p[0].data().iter().sum(), &mut params, &grad, 1e-3, Some(10));
        assert_eq!(r.coords_checked, 10);
    }
}
