//! Profile inference: efficient information `D̆²`, profile score `ξ̆`, the
//! identifiability coefficient `rho`, Wilks statistics, the Fisher-expansion
//! residual and likelihood-ratio confidence sets.
//!
//! All quantities refer to the criterion the estimator maximizes, so when the
//! `eta` step runs with a ridge `lambda` the nuisance block is `H2 + lambda I`
//! and the profiled objective is `max_eta L(theta, eta) - lambda |eta|^2 / 2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::{eta_step, Ridge, SieveEstimate};
use crate::likelihood::{hessian_blocks, residuals, FullParam, LikelihoodBlocks};
use crate::model::Dataset;
use crate::sphere::SphereAngles;
use crate::wavelet::Basis;

/// Relative eigenvalue slack tolerated before `D̆²` is declared indefinite.
const PSD_SLACK: f64 = 1e-10;

/// Symmetric PSD square root and pseudo inverse square root, eigenvalues
/// floored at zero.
pub fn psd_sqrt(mat: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new((mat + mat.transpose()) * 0.5);
    let top = eig.eigenvalues.amax();
    let cut = top * 1e-14;
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let inv_root = eig.eigenvalues.map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 });
    let q = &eig.eigenvectors;
    let sqrt = q * DMatrix::from_diagonal(&root) * q.transpose();
    let inv = q * DMatrix::from_diagonal(&inv_root) * q.transpose();
    (sqrt, inv, eig.eigenvalues)
}

fn penalized_h2(blocks: &LikelihoodBlocks, jitter: f64) -> DMatrix<f64> {
    let m = blocks.h2.nrows();
    &blocks.h2 + DMatrix::identity(m, m) * jitter
}

/// Schur complement and identifiability coefficient of one set of blocks.
#[derive(Debug, Clone)]
pub struct ProfileBlocks {
    pub breve_d2: DMatrix<f64>,
    pub rho: f64,
}

/// `D̆² = D2 - A (H2 + jitter)^-1 A^T` and
/// `rho = |(H2 + jitter)^{-1/2} A^T D2^{-1/2}|_2`.
pub fn profile_blocks(blocks: &LikelihoodBlocks, jitter: f64) -> Result<ProfileBlocks> {
    let h2 = penalized_h2(blocks, jitter);
    let chol = h2
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("nuisance information is singular".into()))?;
    let solved = chol.solve(&blocks.a.transpose());
    let schur = &blocks.d2 - &blocks.a * solved;
    let breve_d2 = (&schur + schur.transpose()) * 0.5;

    let (_, d_inv, d_eig) = psd_sqrt(&blocks.d2);
    if d_eig.min() <= 0.0 {
        return Err(Error::RankDeficient("direction information D2 is singular".into()));
    }
    let (_, h_inv, _) = psd_sqrt(&h2);
    let core = h_inv * blocks.a.transpose() * d_inv;
    let rho = core.singular_values().amax();
    Ok(ProfileBlocks { breve_d2, rho })
}

/// Same Schur complement via the inverse of the full information matrix.
pub fn breve_d2_by_inversion(blocks: &LikelihoodBlocks, jitter: f64) -> Result<DMatrix<f64>> {
    let mut full = blocks.full_information();
    let d = blocks.d2.nrows();
    for k in d..full.nrows() {
        full[(k, k)] += jitter;
    }
    let inv = full
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("full information is singular".into()))?;
    inv.view((0, 0), (d, d))
        .into_owned()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("direction block of the inverse is singular".into()))
}

/// `ξ̆ = score_theta - A (H2 + jitter)^-1 (score_eta - jitter eta)` at `param`.
pub fn profile_score(data: &Dataset, basis: &Basis, param: &FullParam, jitter: f64) -> Result<DVector<f64>> {
    let blocks = hessian_blocks(data, basis, param, false);
    profile_score_from(&blocks, &param.eta, jitter)
}

fn profile_score_from(blocks: &LikelihoodBlocks, eta: &DVector<f64>, jitter: f64) -> Result<DVector<f64>> {
    let chol = penalized_h2(blocks, jitter)
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("nuisance information is singular".into()))?;
    let eta_score = &blocks.score_eta - eta * jitter;
    Ok(&blocks.score_theta - &blocks.a * chol.solve(&eta_score))
}

/// Profiled objective at `angles` and the maximizing `eta`.
pub fn profiled_loglik(
    data: &Dataset,
    basis: &Basis,
    angles: &SphereAngles,
    ridge: Ridge,
) -> Result<(f64, FullParam)> {
    let fit = eta_step(data, basis, angles, ridge)?;
    let value = fit.loglik - 0.5 * fit.jitter * fit.eta.norm_squared();
    Ok((value, FullParam::new(angles.clone(), fit.eta)))
}

/// `2 (P(theta_hat) - P(theta_ref))` for the profiled objective `P`.
pub fn wilks_stat(
    data: &Dataset,
    basis: &Basis,
    theta_hat: &SphereAngles,
    theta_ref: &SphereAngles,
    ridge: Ridge,
) -> Result<f64> {
    if theta_hat == theta_ref {
        return Ok(0.0);
    }
    let (top, _) = profiled_loglik(data, basis, theta_hat, ridge)?;
    let (reference, _) = profiled_loglik(data, basis, theta_ref, ridge)?;
    Ok(2.0 * (top - reference))
}

/// Fisher-expansion residual and the size of the normalized profile score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResidual {
    /// `|D̆ (a_hat - a_ref) - D̆^-1 ξ̆|`.
    pub residual: f64,
    /// `|D̆^-1 ξ̆|`.
    pub score_norm: f64,
}

/// Residual of the linear expansion `D̆ (a_hat - a_ref) ≈ D̆^-1 ξ̆` for a
/// given `D̆²`, angle difference and raw profile score.
pub fn fisher_residual_from(
    breve_d2: &DMatrix<f64>,
    delta: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<FisherResidual> {
    let (root, inv_root, eig) = psd_sqrt(breve_d2);
    if eig.min() < -PSD_SLACK * eig.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite(eig.iter().copied().collect()));
    }
    let normalized = &inv_root * xi;
    Ok(FisherResidual {
        residual: (&root * delta - &normalized).norm(),
        score_norm: normalized.norm(),
    })
}

/// Fisher-expansion residual with `D̆` and `ξ̆` taken at the profile point of
/// `theta_ref`, using the full (not Gauss-Newton) information.
pub fn fisher_residual(
    data: &Dataset,
    basis: &Basis,
    theta_hat: &SphereAngles,
    theta_ref: &SphereAngles,
    ridge: Ridge,
) -> Result<FisherResidual> {
    let fit = eta_step(data, basis, theta_ref, ridge)?;
    let param = FullParam::new(theta_ref.clone(), fit.eta);
    let blocks = hessian_blocks(data, basis, &param, false);
    let breve = profile_blocks(&blocks, fit.jitter)?;
    let xi = profile_score_from(&blocks, &param.eta, fit.jitter)?;
    let delta = DVector::from_iterator(
        theta_hat.0.len(),
        theta_hat.0.iter().zip(&theta_ref.0).map(|(a, b)| a - b),
    );
    fisher_residual_from(&breve.breve_d2, &delta, &xi)
}

/// `RSS / (|kept| - (p - 1 + m))`: noise level used to scale likelihood ratios.
pub fn sigma2_hat(data: &Dataset, basis: &Basis, param: &FullParam) -> Result<f64> {
    let dof = data.n_kept() as f64 - (param.angles.0.len() + basis.m()) as f64;
    if dof <= 0.0 {
        return Err(Error::DegenerateData("too few observations to estimate the noise level".into()));
    }
    let rss: f64 = residuals(data, basis, param).iter().map(|r| r * r).sum();
    Ok(rss / dof)
}

/// Chi-square quantile.
pub fn chi2_quantile(df: f64, level: f64) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| Error::Statistics(e.to_string()))?;
    Ok(dist.inverse_cdf(level))
}

/// Degrees of freedom used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    /// `p - 1`, the dimension of the angle chart.
    Chart,
    /// `p`, the ambient dimension.
    Ambient,
}

impl Calibration {
    pub fn df(self, p: usize) -> f64 {
        match self {
            Calibration::Chart => (p - 1) as f64,
            Calibration::Ambient => p as f64,
        }
    }
}

/// Likelihood-ratio confidence set
/// `{theta : 2 (P(theta_hat) - P(theta)) / sigma2 <= q}`.
#[derive(Debug, Clone)]
pub struct ConfidenceSet<'a> {
    data: &'a Dataset,
    basis: &'a Basis,
    pub center: SphereAngles,
    pub ridge: Ridge,
    pub level: f64,
    pub df: f64,
    pub sigma2: f64,
    pub threshold: f64,
    center_value: f64,
}

/// Confidence set around a fitted estimate.
pub fn confidence_set<'a>(
    data: &'a Dataset,
    basis: &'a Basis,
    fit: &SieveEstimate,
    level: f64,
    calibration: Calibration,
) -> Result<ConfidenceSet<'a>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    let df = calibration.df(data.p());
    let ridge = fit.ridge();
    let (center_value, param) = profiled_loglik(data, basis, &fit.param.angles, ridge)?;
    let sigma2 = sigma2_hat(data, basis, &param)?;
    Ok(ConfidenceSet {
        data,
        basis,
        center: fit.param.angles.clone(),
        ridge,
        level,
        df,
        sigma2,
        threshold: chi2_quantile(df, level)?,
        center_value,
    })
}

impl ConfidenceSet<'_> {
    /// Scaled likelihood ratio of `angles` against the center.
    pub fn statistic(&self, angles: &SphereAngles) -> Result<f64> {
        if *angles == self.center {
            return Ok(0.0);
        }
        let (value, _) = profiled_loglik(self.data, self.basis, angles, self.ridge)?;
        Ok(2.0 * (self.center_value - value) / self.sigma2)
    }

    pub fn contains(&self, angles: &SphereAngles) -> Result<bool> {
        Ok(self.statistic(angles)? <= self.threshold)
    }

    /// Boundary crossing along `center + t * direction`, `t in (0, t_max]`,
    /// by bisection; `None` when the ray stays inside up to the box edge.
    fn ray_crossing(&self, direction: &[f64], t_max: f64) -> Result<Option<SphereAngles>> {
        let at = |t: f64| {
            SphereAngles::new(self.center.0.iter().zip(direction).map(|(c, d)| c + t * d).collect())
        };
        // clip to the chart box
        let mut hi = t_max;
        for (i, (c, d)) in self.center.0.iter().zip(direction).enumerate() {
            let (lo_b, hi_b) = SphereAngles::bounds(i);
            if *d > 0.0 {
                hi = hi.min((hi_b - c) / d);
            } else if *d < 0.0 {
                hi = hi.min((lo_b - c) / d);
            }
        }
        if self.contains(&at(hi))? {
            return Ok(None);
        }
        let mut lo = 0.0;
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            if self.contains(&at(mid))? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(at(0.5 * (lo + hi))))
    }

    /// Boundary points: two for `p = 2`, a closed polyline of `resolution`
    /// rays in the angle plane for `p = 3`. Rays leaving the box are skipped.
    pub fn boundary(&self, resolution: usize) -> Result<Vec<SphereAngles>> {
        let reach = std::f64::consts::PI;
        let directions: Vec<Vec<f64>> = match self.center.0.len() {
            1 => vec![vec![-1.0], vec![1.0]],
            2 => (0..resolution.max(3))
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / resolution.max(3) as f64;
                    vec![phi.cos(), phi.sin()]
                })
                .collect(),
            d => {
                return Err(Error::Config(format!(
                    "boundary tracing supports p = 2, 3 (got p = {})",
                    d + 1
                )))
            }
        };
        let mut out = Vec::with_capacity(directions.len());
        for dir in &directions {
            if let Some(point) = self.ray_crossing(dir, reach)? {
                out.push(point);
            }
        }
        Ok(out)
    }
}

/// All profile diagnostics of a fit against a reference direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileQuantities {
    pub breve_d2: DMatrix<f64>,
    pub breve_xi: DVector<f64>,
    pub rho: f64,
    pub wilks: f64,
    pub fisher_residual: f64,
    pub score_norm: f64,
    pub sigma2: f64,
}

/// Profile diagnostics of `fit` against `theta_ref`; `rho` uses the
/// Gauss-Newton blocks at the estimate, `D̆²` and `ξ̆` the full blocks at the
/// reference profile point.
pub fn profile_quantities(
    data: &Dataset,
    basis: &Basis,
    fit: &SieveEstimate,
    theta_ref: &SphereAngles,
) -> Result<ProfileQuantities> {
    let ridge = fit.ridge();
    let gn = hessian_blocks(data, basis, &fit.param, true);
    let rho = profile_blocks(&gn, fit.jitter)?.rho;

    let ref_fit = eta_step(data, basis, theta_ref, ridge)?;
    let ref_param = FullParam::new(theta_ref.clone(), ref_fit.eta);
    let blocks = hessian_blocks(data, basis, &ref_param, false);
    let breve = profile_blocks(&blocks, ref_fit.jitter)?;
    let xi = profile_score_from(&blocks, &ref_param.eta, ref_fit.jitter)?;
    let delta = DVector::from_iterator(
        theta_ref.0.len(),
        fit.param.angles.0.iter().zip(&theta_ref.0).map(|(a, b)| a - b),
    );
    let fr = fisher_residual_from(&breve.breve_d2, &delta, &xi)?;
    Ok(ProfileQuantities {
        breve_d2: breve.breve_d2,
        breve_xi: xi,
        rho,
        wilks: wilks_stat(data, basis, &fit.param.angles, theta_ref, ridge)?,
        fisher_residual: fr.residual,
        score_norm: fr.score_norm,
        sigma2: sigma2_hat(data, basis, &fit.param)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, EstimatorConfig};
    use crate::model::{simulate, truncate, LinkSpec, ModelSpec};
    use crate::wavelet::build_table;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn basis(m: usize) -> Basis {
        Basis::new(Arc::new(build_table(12).unwrap()), 1.0, m).unwrap()
    }

    fn sin_data(angles: &[f64], n: usize, sigma: f64, seed: u64) -> Dataset {
        let theta: Vec<f64> = SphereAngles::new(angles.to_vec()).embed().iter().copied().collect();
        let spec = ModelSpec::single_index(theta, LinkSpec::named("sin"), sigma, 1.0);
        truncate(&simulate(&spec, None, n, seed).unwrap(), 1.0).unwrap()
    }

    fn random_blocks(d: usize, m: usize, seed: u64) -> LikelihoodBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = d + m;
        let g = DMatrix::from_fn(n + 3, n, |_, _| rng.gen_range(-1.0..1.0));
        let full = g.transpose() * g;
        LikelihoodBlocks {
            d2: full.view((0, 0), (d, d)).into_owned(),
            a: full.view((0, d), (d, m)).into_owned(),
            h2: full.view((d, d), (m, m)).into_owned(),
            score_theta: DVector::zeros(d),
            score_eta: DVector::zeros(m),
            loglik: 0.0,
            gauss_newton_only: true,
        }
    }

    #[test]
    fn block_diagonal_case() {
        let mut b = random_blocks(2, 5, 1);
        b.a.fill(0.0);
        let pb = profile_blocks(&b, 0.0).unwrap();
        assert_eq!(pb.breve_d2, b.d2);
        assert_eq!(pb.rho, 0.0);
    }

    #[test]
    fn schur_matches_inversion_route() {
        for seed in 0..20 {
            let b = random_blocks(3, 6, seed);
            let schur = profile_blocks(&b, 0.0).unwrap().breve_d2;
            let direct = breve_d2_by_inversion(&b, 0.0).unwrap();
            let rel = (&schur - &direct).amax() / direct.amax();
            assert!(rel <= 1e-8, "{rel}");
        }
    }

    #[test]
    fn rho_invariant_under_orthogonal_reparametrization() {
        let b = random_blocks(2, 6, 3);
        let rho = profile_blocks(&b, 0.0).unwrap().rho;
        assert!((0.0..1.0).contains(&rho));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let mut c = b.clone();
        c.a = &b.a * &q;
        c.h2 = q.transpose() * &b.h2 * &q;
        let rotated = profile_blocks(&c, 0.0).unwrap().rho;
        assert!((rho - rotated).abs() <= 1e-10, "{rho} {rotated}");
    }

    #[test]
    fn singular_nuisance_errors() {
        let mut b = random_blocks(2, 4, 4);
        b.h2.fill(0.0);
        assert!(matches!(profile_blocks(&b, 0.0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn profile_score_at_profile_point_is_theta_score() {
        let bs = basis(17);
        let d = sin_data(&[1.0, 0.3], 400, 0.1, 5);
        let angles = SphereAngles::new(vec![0.9, 0.35]);
        let fit = eta_step(&d, &bs, &angles, Ridge::Relative(1e-10)).unwrap();
        let param = FullParam::new(angles, fit.eta);
        let xi = profile_score(&d, &bs, &param, fit.jitter).unwrap();
        let st = hessian_blocks(&d, &bs, &param, false).score_theta;
        assert!((&xi - &st).norm() <= 1e-6 * st.norm().max(1.0));
    }

    #[test]
    fn profile_score_matches_envelope_gradient() {
        let bs = basis(17);
        let d = sin_data(&[1.0, 0.3], 400, 0.1, 6);
        let angles = SphereAngles::new(vec![0.85, 0.4]);
        let lam = eta_step(&d, &bs, &angles, Ridge::Relative(1e-10)).unwrap().jitter;
        let ridge = Ridge::Fixed(lam);
        let (_, param) = profiled_loglik(&d, &bs, &angles, ridge).unwrap();
        let xi = profile_score(&d, &bs, &param, lam).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut up = angles.0.clone();
            let mut dn = angles.0.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = profiled_loglik(&d, &bs, &SphereAngles::new(up), ridge).unwrap().0;
            let fd = profiled_loglik(&d, &bs, &SphereAngles::new(dn), ridge).unwrap().0;
            let fdiff = (fu - fd) / (2.0 * h);
            let rel = (fdiff - xi[i]).abs() / xi.norm();
            assert!(rel <= 1e-4, "component {i}: {fdiff} vs {}", xi[i]);
        }
    }

    #[test]
    fn perfect_fit_has_zero_profile_score() {
        let bs = basis(5);
        let theta: Vec<f64> = SphereAngles::new(vec![1.1]).embed().iter().copied().collect();
        let eta: Vec<f64> = vec![0.3, -0.2, 0.5, 0.1, 0.7];
        let spec = ModelSpec::single_index(theta, LinkSpec::Sieve(eta.clone()), 0.0, 1.0);
        let d = truncate(&simulate(&spec, Some(&bs), 200, 1).unwrap(), 1.0).unwrap();
        let param = FullParam::new(SphereAngles::new(vec![1.1]), DVector::from_vec(eta));
        let xi = profile_score(&d, &bs, &param, 0.0).unwrap();
        assert!(xi.norm() < 1e-10);
    }

    #[test]
    fn wilks_zero_at_self_and_nonnegative_at_fit() {
        let bs = basis(17);
        let d = sin_data(&[1.2], 300, 0.1, 7);
        let est = fit(&d, &bs, &EstimatorConfig::default()).unwrap();
        let r = est.ridge();
        assert_eq!(wilks_stat(&d, &bs, &est.param.angles, &est.param.angles, r).unwrap(), 0.0);
        for a in [0.3, 1.0, 1.19, 1.25, 2.5] {
            let w = wilks_stat(&d, &bs, &est.param.angles, &SphereAngles::new(vec![a]), r).unwrap();
            assert!(w >= -1e-8 * d.n() as f64, "{a}: {w}");
        }
    }

    #[test]
    fn wilks_matches_dense_scan() {
        let bs = basis(17);
        let d = sin_data(&[0.8], 200, 0.1, 8);
        let est = fit(&d, &bs, &EstimatorConfig::default()).unwrap();
        let ridge = est.ridge();
        let scan = 10_000;
        let best = (0..scan)
            .map(|i| {
                let a = (i as f64 + 0.5) * std::f64::consts::PI / scan as f64;
                profiled_loglik(&d, &bs, &SphereAngles::new(vec![a]), ridge).unwrap().0
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let truth = SphereAngles::new(vec![0.8]);
        let oracle = 2.0 * (best - profiled_loglik(&d, &bs, &truth, ridge).unwrap().0);
        let w = wilks_stat(&d, &bs, &est.param.angles, &truth, ridge).unwrap();
        assert!(w >= oracle - 1e-9 * d.n() as f64);
        assert!((w - oracle).abs() <= 1e-6 * d.n() as f64, "{w} vs {oracle}");
    }

    #[test]
    fn fisher_residual_vanishes_on_quadratic_model() {
        // P(a) = -(a - c)^T B (a - c) / 2: score at a_ref is B (c - a_ref),
        // maximizer is c, so D̆ (c - a_ref) = D̆^-1 ξ̆ exactly.
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 0.7, 0.7, 1.5]);
        let c = DVector::from_vec(vec![0.4, -0.2]);
        let a_ref = DVector::from_vec(vec![0.1, 0.3]);
        let xi = &b * (&c - &a_ref);
        let r = fisher_residual_from(&b, &(&c - &a_ref), &xi).unwrap();
        assert!(r.residual <= 1e-14, "{}", r.residual);
        assert!(r.score_norm > 0.0);
    }

    #[test]
    fn fisher_residual_zero_at_stationary_self() {
        let bs = basis(17);
        let d = sin_data(&[1.0], 500, 0.1, 9);
        let est = fit(&d, &bs, &EstimatorConfig::default()).unwrap();
        let r = fisher_residual(&d, &bs, &est.param.angles, &est.param.angles, est.ridge()).unwrap();
        assert!(r.residual <= 1e-6 * r.score_norm.max(1.0) + 1e-6, "{r:?}");
    }

    #[test]
    fn indefinite_d2_reports_eigenvalues() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let z = DVector::zeros(2);
        match fisher_residual_from(&b, &z, &z) {
            Err(Error::NotPositiveSemidefinite(eig)) => assert_eq!(eig.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn confidence_set_contains_center_and_nests() {
        let bs = basis(17);
        let d = sin_data(&[1.0], 500, 0.1, 10);
        let est = fit(&d, &bs, &EstimatorConfig::default()).unwrap();
        let narrow = confidence_set(&d, &bs, &est, 0.5, Calibration::Chart).unwrap();
        let wide = confidence_set(&d, &bs, &est, 0.95, Calibration::Chart).unwrap();
        assert!(narrow.contains(&est.param.angles).unwrap());
        for k in 0..40 {
            let a = SphereAngles::new(vec![0.9 + 0.005 * k as f64]);
            if narrow.contains(&a).unwrap() {
                assert!(wide.contains(&a).unwrap());
            }
        }
        let edge = wide.boundary(0).unwrap();
        assert_eq!(edge.len(), 2);
        assert!(edge[0].0[0] < est.param.angles.0[0] && edge[1].0[0] > est.param.angles.0[0]);
        for e in &edge {
            assert!((wide.statistic(e).unwrap() - wide.threshold).abs() < 1e-6);
        }
        assert!(confidence_set(&d, &bs, &est, 1.0, Calibration::Chart).is_err());
    }

    #[test]
    fn confidence_boundary_p3() {
        let bs = basis(17);
        let d = sin_data(&[1.0, 0.2], 600, 0.1, 11);
        let est = fit(&d, &bs, &EstimatorConfig { tau: 0.15, ..Default::default() }).unwrap();
        let set = confidence_set(&d, &bs, &est, 0.9, Calibration::Chart).unwrap();
        let ring = set.boundary(12).unwrap();
        assert_eq!(ring.len(), 12);
        for point in &ring {
            assert!((set.statistic(point).unwrap() - set.threshold).abs() < 1e-6);
        }
    }
}
