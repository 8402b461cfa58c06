//! Central-difference verification of analytic gradients.

use super::params::ParamSet;
use crate::error::{Result, VgsError};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tol: f64,
    /// Components whose absolute discrepancy is at most this are counted as
    /// exact; this keeps relative error meaningful where both gradients are ~0.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: Option<Mismatch>,
    pub passed: bool,
}

/// Compares `params[*].grad` against `(f(θ+h) − f(θ−h)) / 2h` for every
/// scalar component. `params` is restored to its original values.
pub fn grad_check<F>(
    params: &mut ParamSet,
    mut f: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut eval = |p: &ParamSet| -> Result<f64> {
        let v = f(p)?;
        if !v.is_finite() {
            return Err(VgsError::NonFinite(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };
    eval(params)?;

    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    for slot in 0..params.len() {
        for idx in 0..params.param(slot).value.len() {
            let orig = params.param(slot).value.data()[idx];
            params.param_mut(slot).value.data_mut()[idx] = orig + cfg.step;
            let plus = eval(params);
            params.param_mut(slot).value.data_mut()[idx] = orig - cfg.step;
            let minus = eval(params);
            params.param_mut(slot).value.data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            let analytic = params.param(slot).grad.data()[idx];
            let diff = (analytic - numeric).abs();
            let rel = if diff <= cfg.abs_floor {
                0.0
            } else {
                diff / analytic.abs().max(numeric.abs())
            };
            checked += 1;
            if rel > max_rel || worst.is_none() {
                worst = Some(Mismatch {
                    param: params.param(slot).name.clone(),
                    index: idx,
                    analytic,
                    numeric,
                });
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked,
        worst,
        passed: max_rel <= cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::params::Parameter;
    use crate::numcore::tensor::Tensor;

    fn set_with(values: Vec<f64>) -> ParamSet {
        let mut set = ParamSet::new();
        set.push(Parameter::new("theta", Tensor::vector(values)))
            .unwrap();
        set
    }

    #[test]
    fn quadratic_passes() {
        let mut set = set_with(vec![0.3, -1.2, 2.5]);
        let grad: Vec<f64> = set.param(0).value.data().iter().map(|v| 2.0 * v).collect();
        set.param_mut(0).grad = Tensor::vector(grad);
        let report = grad_check(
            &mut set,
            |p| Ok(p.param(0).value.sum_squares()),
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_rel_error < 1e-8);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn constant_objective_zero_gradient() {
        let mut set = set_with(vec![1.0, 2.0]);
        let report = grad_check(&mut set, |_| Ok(4.0), GradCheckConfig::default()).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn wrong_gradient_fails() {
        let mut set = set_with(vec![1.0]);
        set.param_mut(0).grad = Tensor::vector(vec![1.0]);
        let report = grad_check(
            &mut set,
            |p| Ok(p.param(0).value.sum_squares()),
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst.unwrap().param, "theta");
    }

    #[test]
    fn non_finite_objective_errors() {
        let mut set = set_with(vec![1.0]);
        assert!(grad_check(&mut set, |_| Ok(f64::NAN), GradCheckConfig::default()).is_err());
    }

    #[test]
    fn restores_values() {
        let mut set = set_with(vec![0.25, 0.5]);
        let before = set.param(0).value.clone();
        grad_check(
            &mut set,
            |p| Ok(p.param(0).value.data()[0].sin()),
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(set.param(0).value, before);
    }
}
