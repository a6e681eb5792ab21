//! Sieve profile estimator: closed-form `eta` step, ascent `theta` step on the
//! half-sphere chart, grid initialization and the alternating loop.
//!
//! When the empirical Gram matrix is too ill-conditioned the `eta` step
//! solves the ridge system `(G + lambda I) eta = sum Y_i e_i`. The alternating
//! loop then fixes `lambda` and maximizes the penalized criterion
//! `L(theta, eta) - lambda |eta|^2 / 2`, which is what the reported
//! "profile objective" refers to.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{hessian_blocks, loglik, loglik_and_score, FullParam};
use crate::model::Dataset;
use crate::sphere::{make_grid_with_budget, SphereAngles, SphereGrid, BOX_MARGIN, DEFAULT_GRID_BUDGET};
use crate::wavelet::Basis;

/// Gram condition number above which the ridge is switched on.
pub const CONDITION_LIMIT: f64 = 1e12;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Sieve dimension.
    pub m: usize,
    /// Covering radius of the initialization grid.
    pub tau: f64,
    pub max_alt_iters: usize,
    /// Iteration budget of each `theta` step.
    pub theta_step_iters: usize,
    /// Threshold on the joint parameter change between alternating rounds.
    pub tol: f64,
    /// Relative ridge; the jitter is `ridge * trace(Gram) / m`.
    pub ridge: f64,
    /// Optional cap `r°` on `|eta|`; exceeding it raises a flag.
    pub eta_radius: Option<f64>,
    pub grid_budget: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            m: 17,
            tau: 0.1,
            max_alt_iters: 500,
            theta_step_iters: 25,
            tol: 1e-8,
            ridge: 1e-10,
            eta_radius: None,
            grid_budget: DEFAULT_GRID_BUDGET,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be non-negative".into()));
        }
        if self.m == 0 || self.max_alt_iters == 0 || self.theta_step_iters == 0 {
            return Err(Error::Config("m and iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the `eta` step at a fixed direction.
#[derive(Debug, Clone)]
pub struct EtaFit {
    pub eta: DVector<f64>,
    /// Absolute jitter added to the Gram diagonal (zero when unregularized).
    pub jitter: f64,
    /// Condition number of the unregularized Gram matrix.
    pub condition: f64,
    /// `L(theta, eta)` at the solution, without the ridge term.
    pub loglik: f64,
}

impl EtaFit {
    pub fn regularized(&self) -> bool {
        self.jitter > 0.0
    }
}

/// How the `eta` step treats an ill-conditioned Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Switch on `ridge * trace / m` when the condition number exceeds the limit.
    Relative(f64),
    /// Always add this jitter.
    Fixed(f64),
}

/// Basis values at the kept indices, row-major with one row per kept
/// observation.
fn design_rows(data: &Dataset, basis: &Basis, theta: &DVector<f64>) -> Vec<f64> {
    let m = basis.m();
    let p = data.p();
    let mut out = vec![0.0; data.n_kept() * m];
    for (row, &i) in out.chunks_exact_mut(m).zip(&data.kept) {
        let u: f64 = (0..p).map(|j| data.x[(i, j)] * theta[j]).sum();
        basis.values_into(u, row);
    }
    out
}

/// Maximizer of `L(theta, .)` (of the ridge-penalized criterion when the
/// Gram matrix is ill-conditioned).
pub fn eta_step(data: &Dataset, basis: &Basis, angles: &SphereAngles, ridge: Ridge) -> Result<EtaFit> {
    if data.kept.is_empty() {
        return Err(Error::DegenerateData("no kept observations".into()));
    }
    let m = basis.m();
    let rows = design_rows(data, basis, &angles.embed());
    let mut gram = DMatrix::zeros(m, m);
    let mut moment = DVector::zeros(m);
    for (e, &i) in rows.chunks_exact(m).zip(&data.kept) {
        for k in 0..m {
            let ek = e[k];
            if ek == 0.0 {
                continue;
            }
            moment[k] += data.y[i] * ek;
            let column = &mut gram.as_mut_slice()[k * m..k * m + k + 1];
            for (g, el) in column.iter_mut().zip(&e[..=k]) {
                *g += ek * el;
            }
        }
    }
    gram.fill_lower_triangle_with_upper_triangle();
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let jitter = match ridge {
        Ridge::Fixed(j) => j,
        Ridge::Relative(r) if condition > CONDITION_LIMIT => r * gram.trace() / m as f64,
        Ridge::Relative(_) => 0.0,
    };
    if jitter == 0.0 && !(lo > 0.0) {
        return Err(Error::RankDeficient(format!(
            "Gram matrix is singular (smallest eigenvalue {lo:e}) and no ridge is configured"
        )));
    }
    let mut system = gram;
    for k in 0..m {
        system[(k, k)] += jitter;
    }
    let chol = system.cholesky().ok_or_else(|| {
        Error::RankDeficient(format!("Gram matrix not positive definite (jitter {jitter:e})"))
    })?;
    let eta = chol.solve(&moment);
    let loglik = -0.5
        * rows
            .chunks_exact(m)
            .zip(&data.kept)
            .map(|(e, &i)| {
                let fit: f64 = e.iter().zip(eta.iter()).map(|(a, b)| a * b).sum();
                (data.y[i] - fit).powi(2)
            })
            .sum::<f64>();
    Ok(EtaFit {
        eta,
        jitter,
        condition,
        loglik,
    })
}

/// Penalized profile objective `L(theta, eta) - jitter |eta|^2 / 2`.
pub fn objective(data: &Dataset, basis: &Basis, param: &FullParam, jitter: f64) -> f64 {
    loglik(data, basis, param) - 0.5 * jitter * param.eta.norm_squared()
}

/// Outcome of a `theta` step.
#[derive(Debug, Clone)]
pub struct ThetaStep {
    pub angles: SphereAngles,
    pub loglik: f64,
    pub iterations: usize,
    /// No ascent step was found at all.
    pub stalled: bool,
}

/// Quasi-Newton ascent of `L(., eta)` in the angle chart, started from the
/// Gauss-Newton curvature and kept inside `W_S` by clamping.
pub fn theta_step(
    data: &Dataset,
    basis: &Basis,
    eta: &DVector<f64>,
    start: &SphereAngles,
    budget: usize,
) -> ThetaStep {
    let d = start.0.len();
    let mut angles = start.clamped(BOX_MARGIN);
    let param = FullParam::new(angles.clone(), eta.clone());
    let (mut value, mut grad, _) = loglik_and_score(data, basis, &param);

    let curvature = hessian_blocks(data, basis, &param, true).d2;
    let shift = 1e-10 * curvature.trace().abs().max(1e-300) + 1e-300;
    let mut inverse = (curvature + DMatrix::identity(d, d) * shift)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(d, d));

    let mut iterations = 0;
    let mut any_step = false;
    while iterations < budget {
        iterations += 1;
        let mut direction = &inverse * &grad;
        if direction.dot(&grad) <= 0.0 {
            inverse = DMatrix::identity(d, d) / grad.norm().max(1e-300);
            direction = &inverse * &grad;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = SphereAngles::new(
                angles.0.iter().zip(direction.iter()).map(|(a, s)| a + step * s).collect(),
            )
            .clamped(BOX_MARGIN);
            let moved = DVector::from_iterator(
                d,
                candidate.0.iter().zip(&angles.0).map(|(c, a)| c - a),
            );
            let gain = grad.dot(&moved);
            if gain > 0.0 {
                let trial = FullParam::new(candidate.clone(), eta.clone());
                let trial_value = loglik(data, basis, &trial);
                if trial_value >= value + ARMIJO * gain {
                    accepted = Some((candidate, trial, trial_value, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, trial, trial_value, moved)) = accepted else {
            break;
        };
        any_step = true;
        let (_, new_grad, _) = loglik_and_score(data, basis, &trial);
        // BFGS on -L: y = grad_old - grad_new
        let y = &grad - &new_grad;
        let sy = moved.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(d, d);
            let left = &identity - &moved * y.transpose() * rho;
            let right = &identity - &y * moved.transpose() * rho;
            inverse = &left * &inverse * &right + &moved * moved.transpose() * rho;
        }
        let improvement = trial_value - value;
        angles = candidate;
        value = trial_value;
        grad = new_grad;
        if moved.norm() <= 1e-13 || improvement <= 1e-15 * value.abs() {
            break;
        }
    }
    ThetaStep {
        angles,
        loglik: value,
        iterations,
        stalled: !any_step && grad.norm() > 1e-9 * value.abs().max(1.0),
    }
}

/// Best grid point after profiling out `eta`.
#[derive(Debug, Clone)]
pub struct GridStart {
    pub param: FullParam,
    pub objective: f64,
    pub jitter: f64,
    pub index: usize,
}

/// Profiles every grid point and returns the best one (lowest index on ties).
pub fn grid_init(data: &Dataset, basis: &Basis, grid: &SphereGrid, ridge: f64) -> Result<GridStart> {
    if grid.is_empty() {
        return Err(Error::Initialization("empty grid".into()));
    }
    let scored: Vec<Option<(f64, EtaFit)>> = grid
        .angles
        .par_iter()
        .map(|angles| {
            eta_step(data, basis, angles, Ridge::Relative(ridge)).ok().map(|fit| {
                (fit.loglik - 0.5 * fit.jitter * fit.eta.norm_squared(), fit)
            })
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (index, entry) in scored.iter().enumerate() {
        if let Some((value, _)) = entry {
            if best.is_none_or(|(_, b)| *value > b) {
                best = Some((index, *value));
            }
        }
    }
    let (index, value) = best.ok_or_else(|| {
        Error::Initialization("eta step failed at every grid point".into())
    })?;
    let fit = scored[index].as_ref().map(|(_, f)| f.clone()).expect("scored");
    Ok(GridStart {
        param: FullParam::new(grid.angles[index].clone(), fit.eta),
        objective: value,
        jitter: fit.jitter,
        index,
    })
}

/// One recorded iterate of the alternating loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePoint {
    pub param: FullParam,
    pub loglik: f64,
    /// Penalized objective maximized by the loop.
    pub objective: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AlternatingTrace {
    pub iterates: Vec<TracePoint>,
    pub converged: bool,
    pub iterations_used: usize,
    pub stalled_steps: usize,
}

/// Result of [`alternate`].
#[derive(Debug, Clone)]
pub struct AlternatingResult {
    /// Final `(theta, eta_hat(theta))`.
    pub param: FullParam,
    pub trace: AlternatingTrace,
    pub jitter: f64,
    pub condition: f64,
}

/// Alternates `eta` and `theta` steps from `init` until the joint change is
/// below `config.tol` or the budget runs out.
pub fn alternate(
    data: &Dataset,
    basis: &Basis,
    config: &EstimatorConfig,
    init: &FullParam,
) -> Result<AlternatingResult> {
    config.validate()?;
    let mut trace = AlternatingTrace::default();
    let mut current = FullParam::new(init.angles.clamped(BOX_MARGIN), init.eta.clone());
    let mut ridge = Ridge::Relative(config.ridge);
    let mut jitter = 0.0;
    let mut condition = f64::NAN;
    let record = |trace: &mut AlternatingTrace, param: &FullParam, jitter: f64| {
        let value = loglik(data, basis, param);
        trace.iterates.push(TracePoint {
            param: param.clone(),
            loglik: value,
            objective: value - 0.5 * jitter * param.eta.norm_squared(),
        });
    };

    for round in 1..=config.max_alt_iters {
        let fit = eta_step(data, basis, &current.angles, ridge)?;
        condition = fit.condition;
        if fit.regularized() {
            jitter = fit.jitter;
            ridge = Ridge::Fixed(jitter);
        }
        let half = FullParam::new(current.angles.clone(), fit.eta);
        record(&mut trace, &half, jitter);

        let step = theta_step(data, basis, &half.eta, &half.angles, config.theta_step_iters);
        if step.stalled {
            trace.stalled_steps += 1;
        }
        let next = FullParam::new(step.angles, half.eta);
        record(&mut trace, &next, jitter);

        let change = next.distance(&current);
        current = next;
        trace.iterations_used = round;
        if change <= config.tol {
            trace.converged = true;
            break;
        }
    }
    let fit = eta_step(data, basis, &current.angles, ridge)?;
    let param = FullParam::new(current.angles, fit.eta);
    Ok(AlternatingResult {
        param,
        trace,
        jitter: fit.jitter.max(jitter),
        condition,
    })
}

/// Fitted sieve estimator with diagnostics.
#[derive(Debug, Clone)]
pub struct SieveEstimate {
    pub param: FullParam,
    /// Cartesian direction with positive first coordinate.
    pub theta: DVector<f64>,
    pub loglik: f64,
    pub objective: f64,
    pub trace: AlternatingTrace,
    pub jitter: f64,
    pub condition: f64,
    /// `|eta|` exceeds the configured radius.
    pub eta_on_boundary: bool,
    pub grid_points: usize,
    /// Relative ridge of the configuration, used when no jitter was needed.
    pub relative_ridge: f64,
}

impl SieveEstimate {
    /// Ridge policy that reproduces this fit's `eta` step elsewhere: the
    /// fitted jitter when one was used, the configured rule otherwise.
    pub fn ridge(&self) -> Ridge {
        if self.jitter > 0.0 {
            Ridge::Fixed(self.jitter)
        } else {
            Ridge::Relative(self.relative_ridge)
        }
    }
}

/// Grid initialization followed by alternating maximization.
pub fn fit(data: &Dataset, basis: &Basis, config: &EstimatorConfig) -> Result<SieveEstimate> {
    config.validate()?;
    let grid = make_grid_with_budget(data.p(), config.tau, config.grid_budget)?;
    fit_from_grid(data, basis, config, &grid)
}

pub fn fit_from_grid(
    data: &Dataset,
    basis: &Basis,
    config: &EstimatorConfig,
    grid: &SphereGrid,
) -> Result<SieveEstimate> {
    let start = grid_init(data, basis, grid, config.ridge)?;
    let result = alternate(data, basis, config, &start.param)?;
    let value = loglik(data, basis, &result.param);
    let eta_norm = result.param.eta.norm();
    Ok(SieveEstimate {
        theta: result.param.theta(),
        loglik: value,
        objective: value - 0.5 * result.jitter * eta_norm * eta_norm,
        eta_on_boundary: config.eta_radius.is_some_and(|r| eta_norm > r),
        param: result.param,
        trace: result.trace,
        jitter: result.jitter,
        condition: result.condition,
        grid_points: grid.len(),
        relative_ridge: config.ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::score;
    use crate::model::{simulate, truncate, LinkSpec, ModelSpec};
    use crate::sphere::make_grid;
    use crate::wavelet::build_table;
    use std::sync::Arc;

    fn basis(m: usize) -> Basis {
        Basis::new(Arc::new(build_table(12).unwrap()), 1.0, m).unwrap()
    }

    fn eta_star(m: usize) -> Vec<f64> {
        (0..m).map(|k| ((k as f64) * 1.3 + 0.4).sin()).collect()
    }

    fn data(basis: &Basis, angles: &[f64], n: usize, sigma: f64, seed: u64) -> Dataset {
        let theta: Vec<f64> = SphereAngles::new(angles.to_vec()).embed().iter().copied().collect();
        let spec = ModelSpec::single_index(theta, LinkSpec::Sieve(eta_star(basis.m())), sigma, 1.0);
        truncate(&simulate(&spec, Some(basis), n, seed).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn eta_step_recovers_generator_when_well_conditioned() {
        let b = basis(5);
        let a = SphereAngles::new(vec![1.0, 0.2]);
        let d = data(&b, &a.0, 300, 0.0, 1);
        let fit = eta_step(&d, &b, &a, Ridge::Relative(1e-10)).unwrap();
        assert!(!fit.regularized());
        let err = (fit.eta - DVector::from_vec(eta_star(5))).norm();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn eta_step_zero_response_gives_zero() {
        let b = basis(17);
        let a = SphereAngles::new(vec![1.0]);
        let mut d = data(&b, &a.0, 100, 0.1, 2);
        d.y.fill(0.0);
        let fit = eta_step(&d, &b, &a, Ridge::Relative(1e-10)).unwrap();
        assert_eq!(fit.eta.amax(), 0.0);
    }

    #[test]
    fn eta_step_satisfies_normal_equations() {
        let b = basis(17);
        let a = SphereAngles::new(vec![0.7]);
        let d = data(&b, &[1.2], 200, 0.3, 3);
        let fit = eta_step(&d, &b, &a, Ridge::Relative(1e-10)).unwrap();
        assert!(fit.regularized() && fit.condition > CONDITION_LIMIT);
        let (_, se) = score(&d, &b, &FullParam::new(a, fit.eta.clone()));
        // penalized normal equations: score_eta = jitter * eta
        let gap = (&se - &fit.eta * fit.jitter).amax();
        let scale = d.kept.iter().map(|&i| d.y[i].abs()).sum::<f64>();
        assert!(gap <= 1e-8 * scale, "{gap}");
    }

    #[test]
    fn singular_gram_without_ridge_errors() {
        let b = basis(17);
        let a = SphereAngles::new(vec![0.7]);
        let mut d = data(&b, &[0.7], 40, 0.1, 4);
        d.kept.truncate(3);
        assert!(matches!(
            eta_step(&d, &b, &a, Ridge::Relative(0.0)),
            Err(Error::RankDeficient(_))
        ));
        assert!(eta_step(&d, &b, &a, Ridge::Relative(1e-10)).is_ok());
    }

    #[test]
    fn theta_step_is_monotone_and_fixed_at_truth() {
        let b = basis(5);
        let truth = [1.0, -0.4];
        let d = data(&b, &truth, 300, 0.0, 5);
        let eta = DVector::from_vec(eta_star(5));
        let at_truth = theta_step(&d, &b, &eta, &SphereAngles::new(truth.to_vec()), 20);
        for (x, y) in at_truth.angles.0.iter().zip(&truth) {
            assert!((x - y).abs() < 1e-8);
        }
        let start = SphereAngles::new(vec![0.8, -0.2]);
        let before = loglik(&d, &b, &FullParam::new(start.clone(), eta.clone()));
        let moved = theta_step(&d, &b, &eta, &start, 20);
        assert!(moved.loglik >= before);
        assert!(!moved.stalled);
    }

    #[test]
    fn theta_step_matches_dense_scan_for_p2() {
        let b = basis(17);
        let d = data(&b, &[1.1], 300, 0.2, 6);
        let eta = eta_step(&d, &b, &SphereAngles::new(vec![1.0]), Ridge::Relative(1e-10)).unwrap().eta;
        let scan = 10_000;
        let spacing = std::f64::consts::PI / scan as f64;
        let (best_a, _) = (0..scan)
            .map(|i| {
                let a = (i as f64 + 0.5) * spacing;
                (a, loglik(&d, &b, &FullParam::new(SphereAngles::new(vec![a]), eta.clone())))
            })
            .fold((0.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        let step = theta_step(&d, &b, &eta, &SphereAngles::new(vec![best_a]), 50);
        assert!((step.angles.0[0] - best_a).abs() <= spacing, "{} vs {best_a}", step.angles.0[0]);
    }

    #[test]
    fn grid_init_picks_truth_in_noiseless_case() {
        let b = basis(5);
        let grid = make_grid(2, 0.1).unwrap();
        let truth = grid.angles[7].clone();
        let d = data(&b, &truth.0, 200, 0.0, 7);
        let start = grid_init(&d, &b, &grid, 1e-10).unwrap();
        assert_eq!(start.index, 7);
        assert!((start.param.eta.clone() - DVector::from_vec(eta_star(5))).norm() < 1e-8);
        // exhaustive comparison
        for angles in &grid.angles {
            let fit = eta_step(&d, &b, angles, Ridge::Relative(1e-10)).unwrap();
            let v = objective(&d, &b, &FullParam::new(angles.clone(), fit.eta), fit.jitter);
            assert!(start.objective >= v);
        }
        let single = SphereGrid::single(SphereAngles::new(vec![0.4]));
        let s = grid_init(&d, &b, &single, 1e-10).unwrap();
        assert_eq!(s.index, 0);
        assert_eq!(s.param.angles.0, vec![0.4]);
    }

    #[test]
    fn alternate_converges_immediately_at_optimum() {
        let b = basis(5);
        let truth = [1.3];
        let d = data(&b, &truth, 200, 0.0, 8);
        let init = FullParam::new(SphereAngles::new(truth.to_vec()), DVector::from_vec(eta_star(5)));
        let r = alternate(&d, &b, &EstimatorConfig::default(), &init).unwrap();
        assert!(r.trace.converged);
        assert_eq!(r.trace.iterations_used, 1);
    }

    #[test]
    fn trace_is_monotone_and_theta_on_half_sphere() {
        let b = basis(17);
        let d = data(&b, &[0.9, 0.3], 400, 0.1, 9);
        let config = EstimatorConfig { tau: 0.2, ..Default::default() };
        let est = fit(&d, &b, &config).unwrap();
        let obj: Vec<f64> = est.trace.iterates.iter().map(|t| t.objective).collect();
        for w in obj.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        assert!(est.theta[0] > 0.0);
        assert!((est.theta.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_noiseless_model() {
        let b = basis(5);
        let truth = [1.2, 0.25];
        let d = data(&b, &truth, 400, 0.0, 10);
        let config = EstimatorConfig { tau: 0.15, ..Default::default() };
        let est = fit(&d, &b, &config).unwrap();
        for (x, y) in est.param.angles.0.iter().zip(&truth) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        assert!((est.param.eta.clone() - DVector::from_vec(eta_star(5))).norm() < 1e-6);
        let again = fit(&d, &b, &config).unwrap();
        assert_eq!(est.param, again.param);
    }

    #[test]
    fn eta_radius_flag() {
        let b = basis(17);
        let d = data(&b, &[1.0], 200, 0.1, 11);
        let config = EstimatorConfig { tau: 0.2, eta_radius: Some(1e-3), ..Default::default() };
        assert!(fit(&d, &b, &config).unwrap().eta_on_boundary);
    }
}
