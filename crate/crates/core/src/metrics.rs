//! Accuracy metrics in linear seconds: MAPE and R² for per-task predictions,
//! SAPE for the aggregate over the remaining tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("{metric} needs at least {min} samples, got {got}")]
    TooFew {
        metric: &'static str,
        min: usize,
        got: usize,
    },
    #[error("actual value at index {0} is not positive")]
    NonPositiveActual(usize),
    #[error("R² undefined: actual values have zero variance")]
    ZeroVariance,
    #[error("SAPE undefined at full completion")]
    NothingRemaining,
}

fn check_lengths<T>(actual: &[T], predicted: &[T]) -> Result<(), MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T, MetricError> {
    check_lengths(actual, predicted)?;
    if actual.is_empty() {
        return Err(MetricError::TooFew {
            metric: "MAPE",
            min: 1,
            got: 0,
        });
    }
    let mut total = T::zero();
    for (i, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        if !(a > T::zero()) {
            return Err(MetricError::NonPositiveActual(i));
        }
        total += (a - p).abs() / a;
    }
    Ok(total / T::of_usize(actual.len()) * T::of(100.0))
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T, MetricError> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(MetricError::TooFew {
            metric: "R²",
            min: 2,
            got: actual.len(),
        });
    }
    let mean = actual.iter().copied().sum::<T>() / T::of_usize(actual.len());
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for (&a, &p) in actual.iter().zip(predicted) {
        ss_res += (a - p) * (a - p);
        ss_tot += (a - mean) * (a - mean);
    }
    if ss_tot == T::zero() {
        return Err(MetricError::ZeroVariance);
    }
    Ok(T::one() - ss_res / ss_tot)
}

/// Sum absolute percentage error of the aggregate, in percent.
pub fn sape<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T, MetricError> {
    check_lengths(actual, predicted)?;
    if actual.is_empty() {
        return Err(MetricError::NothingRemaining);
    }
    let total_actual = actual.iter().copied().sum::<T>();
    let total_predicted = predicted.iter().copied().sum::<T>();
    if !(total_actual > T::zero()) {
        return Err(MetricError::NonPositiveActual(0));
    }
    Ok(sape_totals(total_actual, total_predicted))
}

/// SAPE from already-aggregated totals.
pub fn sape_totals<T: Scalar>(total_actual: T, total_predicted: T) -> T {
    (total_actual - total_predicted).abs() / total_actual * T::of(100.0)
}

/// Metrics for one predictor at one completion ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mape: f64,
    /// `None` when the remaining actual times have zero variance or fewer
    /// than two tasks remain.
    pub r2: Option<f64>,
    pub sape: f64,
    pub n: usize,
}

impl MetricReport {
    /// Evaluates per-task predictions against ground truth. `predicted_total`
    /// overrides the aggregate used by SAPE for predictors whose total is not
    /// the sum of their per-task values.
    pub fn evaluate(
        actual: &[f64],
        predicted: &[f64],
        predicted_total: Option<f64>,
    ) -> Result<Self, MetricError> {
        let sape = match predicted_total {
            Some(total) => {
                check_lengths(actual, predicted)?;
                if actual.is_empty() {
                    return Err(MetricError::NothingRemaining);
                }
                sape_totals(actual.iter().sum(), total)
            }
            None => sape(actual, predicted)?,
        };
        let r2 = match r2(actual, predicted) {
            Ok(v) => Some(v),
            Err(MetricError::ZeroVariance | MetricError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mape: mape(actual, predicted)?,
            r2,
            sape,
            n: actual.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_relative_eq!(mape(&[10.0], &[12.0]).unwrap(), 20.0, max_relative = 1e-12);
        assert_relative_eq!(
            mape(&[10.0, 10.0], &[5.0, 15.0]).unwrap(),
            50.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mape_errors() {
        assert_eq!(
            mape(&[1.0, 2.0], &[1.0]),
            Err(MetricError::LengthMismatch {
                actual: 2,
                predicted: 1
            })
        );
        assert_eq!(mape(&[1.0, 0.0], &[1.0, 1.0]), Err(MetricError::NonPositiveActual(1)));
    }

    #[test]
    fn r2_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(r2(&a, &a).unwrap(), 1.0);
        assert_eq!(r2(&a, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        // SS_res = 4 + 0 + 4 = 8, SS_tot = 2, 1 - 8/2 = -3
        assert_relative_eq!(r2(&a, &[3.0, 2.0, 1.0]).unwrap(), -3.0, max_relative = 1e-12);
        assert_eq!(r2(&[5.0, 5.0], &[1.0, 2.0]), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn sape_examples() {
        assert_eq!(sape(&[4.0, 9.0], &[4.0, 9.0]).unwrap(), 0.0);
        assert_relative_eq!(sape(&[10.0, 10.0], &[9.0, 12.0]).unwrap(), 5.0, max_relative = 1e-12);
        assert_eq!(sape(&[10.0, 10.0], &[13.0, 7.0]).unwrap(), 0.0);
        assert_eq!(sape::<f64>(&[], &[]), Err(MetricError::NothingRemaining));
    }

    #[test]
    fn metrics_work_in_single_precision() {
        assert_relative_eq!(mape(&[10.0_f32], &[12.0]).unwrap(), 20.0, max_relative = 1e-6);
        assert_relative_eq!(sape(&[10.0_f32, 10.0], &[9.0, 12.0]).unwrap(), 5.0, max_relative = 1e-6);
    }

    #[test]
    fn report_marks_constant_actual_r2_as_undefined() {
        let r = MetricReport::evaluate(&[2.0, 2.0], &[2.0, 2.0], None).unwrap();
        assert_eq!(r.r2, None);
        assert_eq!(r.sape, 0.0);
        assert_eq!(r.n, 2);
    }
}
