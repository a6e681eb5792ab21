//! Projection pursuit: fit single-index components one at a time to the
//! residuals of the previous stages.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig};
use crate::likelihood::{link_eval, residuals};
use crate::model::Dataset;
use crate::wavelet::Basis;

pub const DEFAULT_VAR_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuitComponent {
    /// Unit direction with positive first coordinate.
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxComponents,
    VarianceThreshold,
    StageFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PursuitModel {
    pub components: Vec<PursuitComponent>,
    /// Mean squared residual over the kept rows; entry 0 is the raw response,
    /// entry `l` the residual after `l` components.
    pub residual_variance: Vec<f64>,
    pub stopped_by: StopReason,
    /// Message of the stage fit that failed, if any.
    pub failure: Option<String>,
}

/// Greedy pursuit with at most `max_components` stages. With a threshold,
/// stops after the first stage whose explained share of the initial variance
/// falls below it.
pub fn fit_pursuit(
    data: &Dataset,
    basis: &Basis,
    config: &EstimatorConfig,
    max_components: usize,
    var_threshold: Option<f64>,
) -> Result<PursuitModel> {
    if max_components == 0 {
        return Err(Error::Config("pursuit needs at least one component".into()));
    }
    let mean_sq = |y: &DVector<f64>| {
        data.kept.iter().map(|&i| y[i] * y[i]).sum::<f64>() / data.n_kept().max(1) as f64
    };
    let mut current = data.clone();
    let mut model = PursuitModel {
        components: Vec::new(),
        residual_variance: vec![mean_sq(&data.y)],
        stopped_by: StopReason::MaxComponents,
        failure: None,
    };
    let initial = model.residual_variance[0];
    for _ in 0..max_components {
        let est = match fit(&current, basis, config) {
            Ok(est) => est,
            Err(e) => {
                model.stopped_by = StopReason::StageFailure;
                model.failure = Some(e.to_string());
                break;
            }
        };
        let r = residuals(&current, basis, &est.param);
        let mut y = DVector::zeros(data.n());
        for (&i, v) in current.kept.iter().zip(&r) {
            y[i] = *v;
        }
        current = current.with_response(y);
        let before = *model.residual_variance.last().expect("nonempty");
        let after = mean_sq(&current.y);
        model.residual_variance.push(after);
        model.components.push(PursuitComponent { theta: est.theta, eta: est.param.eta });
        if let Some(threshold) = var_threshold {
            if initial > 0.0 && (before - after) / initial < threshold {
                model.stopped_by = StopReason::VarianceThreshold;
                break;
            }
        }
    }
    Ok(model)
}

/// Sum of the component links at `x`.
pub fn predict(model: &PursuitModel, basis: &Basis, x: &[f64]) -> f64 {
    model
        .components
        .iter()
        .map(|c| {
            let t: f64 = c.theta.iter().zip(x).map(|(a, b)| a * b).sum();
            link_eval(basis, &c.eta, t)
        })
        .sum()
}
