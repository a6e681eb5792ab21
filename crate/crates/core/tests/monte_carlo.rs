//! Small Monte Carlo checks of estimator and pursuit behavior.

use std::sync::Arc;

use nalgebra::DVector;
use sieve_index::estimator::{fit, EstimatorConfig};
use sieve_index::model::{simulate, stream_seed, truncate, LinkSpec, ModelSpec};
use sieve_index::pursuit::fit_pursuit;
use sieve_index::sphere::{angular_distance, SphereAngles};
use sieve_index::wavelet::{build_table, Basis};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn angular_error_shrinks_with_n() {
    let b = Basis::new(Arc::new(build_table(12).unwrap()), 1.0, 17).unwrap();
    let theta = SphereAngles::new(vec![1.0, 0.3]).embed();
    let spec = ModelSpec::single_index(theta.iter().copied().collect(), LinkSpec::named("sin"), 0.1, 1.0);
    let config = EstimatorConfig::default();
    let errors = |n: usize| -> Vec<f64> {
        (0..50)
            .map(|r| {
                let d = truncate(&simulate(&spec, None, n, stream_seed(5, n as u64, r)).unwrap(), 1.0).unwrap();
                angular_distance(&fit(&d, &b, &config).unwrap().theta, &theta)
            })
            .collect()
    };
    let small = median(errors(500));
    let large = median(errors(2000));
    assert!(large < small, "n=2000: {large}, n=500: {small}");
}

#[test]
fn second_pursuit_stage_adds_little_for_one_component() {
    let b = Basis::new(Arc::new(build_table(12).unwrap()), 1.0, 17).unwrap();
    let theta = DVector::from_vec(vec![0.6, 0.0, 0.8]);
    let spec = ModelSpec::single_index(theta.iter().copied().collect(), LinkSpec::named("sin"), 0.1, 1.0);
    let d = truncate(&simulate(&spec, None, 4000, 9).unwrap(), 1.0).unwrap();
    let config = EstimatorConfig { tau: 0.15, ..Default::default() };
    let model = fit_pursuit(&d, &b, &config, 2, None).unwrap();
    let v = &model.residual_variance;
    assert_eq!(v.len(), 3);
    assert!(angular_distance(&model.components[0].theta, &theta) < 0.05);
    assert!((v[1] - v[2]) / v[0] < 0.05, "{v:?}");
    assert!(v[2] <= v[1] + 1e-8 && v[1] <= v[0] + 1e-8);
}
