//! Quadratic quasi log-likelihood of the sieve single-index model in the
//! `(angles, eta)` chart, with its gradient and information blocks.
//!
//! ```text
//! L(a, eta) = -1/2 sum_{i kept} (Y_i - f_eta(X_i^T Phi(a)))^2,   f_eta = sum_k eta_k e_k
//! ```
//!
//! The blocks returned by [`hessian_blocks`] are those of the negative
//! Hessian `-nabla^2 L`:
//!
//! ```text
//! D2 = sum f'^2 g g^T - sum r (f'' g g^T + f' X^T nabla^2 Phi [X])
//! A  = sum f' g e^T   - sum r g e'^T
//! H2 = sum e e^T
//! ```
//!
//! with `g = nabla Phi^T X` and residual `r = Y - f_eta(X^T theta)`. The
//! Gauss-Newton variant drops the residual-weighted terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::Dataset;
use crate::sphere::{grad_embed, hess_embed, SphereAngles};
use crate::wavelet::Basis;

/// Full parameter `(theta, eta)` with `theta` given by its chart angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullParam {
    pub angles: SphereAngles,
    pub eta: DVector<f64>,
}

impl FullParam {
    pub fn new(angles: SphereAngles, eta: DVector<f64>) -> Self {
        Self { angles, eta }
    }

    pub fn theta(&self) -> DVector<f64> {
        self.angles.embed()
    }

    /// Euclidean distance in the joint `(angles, eta)` coordinates.
    pub fn distance(&self, other: &FullParam) -> f64 {
        let da: f64 = self
            .angles
            .as_slice()
            .iter()
            .zip(other.angles.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (da + (&self.eta - &other.eta).norm_squared()).sqrt()
    }
}

/// Score and information blocks at one parameter.
#[derive(Debug, Clone)]
pub struct LikelihoodBlocks {
    pub d2: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub score_theta: DVector<f64>,
    pub score_eta: DVector<f64>,
    pub loglik: f64,
    pub gauss_newton_only: bool,
}

impl LikelihoodBlocks {
    /// Assembled `(p - 1 + m)`-square information matrix.
    pub fn full_information(&self) -> DMatrix<f64> {
        let d = self.d2.nrows();
        let m = self.h2.nrows();
        let mut out = DMatrix::zeros(d + m, d + m);
        out.view_mut((0, 0), (d, d)).copy_from(&self.d2);
        out.view_mut((0, d), (d, m)).copy_from(&self.a);
        out.view_mut((d, 0), (m, d)).copy_from(&self.a.transpose());
        out.view_mut((d, d), (m, m)).copy_from(&self.h2);
        out
    }

    pub fn full_score(&self) -> DVector<f64> {
        let d = self.score_theta.len();
        let m = self.score_eta.len();
        DVector::from_iterator(
            d + m,
            self.score_theta.iter().chain(self.score_eta.iter()).copied(),
        )
    }
}

/// `f_eta(x)`.
pub fn link_eval(basis: &Basis, eta: &DVector<f64>, x: f64) -> f64 {
    basis.basis_vector(x).dot(eta)
}

/// `f_eta'(x)`.
pub fn link_deriv(basis: &Basis, eta: &DVector<f64>, x: f64) -> f64 {
    basis.basis_deriv_vector(x).dot(eta)
}

/// `f_eta''(x)`.
pub fn link_second_deriv(basis: &Basis, eta: &DVector<f64>, x: f64) -> f64 {
    (1..=basis.m()).map(|k| eta[k - 1] * basis.eval_second_deriv(k, x)).sum()
}

#[derive(Clone, Copy, PartialEq)]
enum Order {
    Value,
    Gradient,
    Hessian { gauss_newton_only: bool },
}

struct Accumulated {
    loglik: f64,
    score_theta: DVector<f64>,
    score_eta: DVector<f64>,
    d2: DMatrix<f64>,
    a: DMatrix<f64>,
    h2: DMatrix<f64>,
}

fn accumulate(data: &Dataset, basis: &Basis, param: &FullParam, order: Order) -> Accumulated {
    let m = basis.m();
    let angles = param.angles.as_slice();
    let d = angles.len();
    let p = d + 1;
    let theta = param.theta();
    let jac = grad_embed(angles);
    let hess = match order {
        Order::Hessian { gauss_newton_only: false } => Some(hess_embed(angles)),
        _ => None,
    };
    let want_grad = order != Order::Value;
    let want_hess = matches!(order, Order::Hessian { .. });

    let mut out = Accumulated {
        loglik: 0.0,
        score_theta: DVector::zeros(d),
        score_eta: DVector::zeros(m),
        d2: DMatrix::zeros(d, d),
        a: DMatrix::zeros(d, m),
        h2: DMatrix::zeros(m, m),
    };
    let mut e = DVector::zeros(m);
    let mut de = DVector::zeros(m);
    let mut d2e = DVector::zeros(m);
    let mut g = DVector::zeros(d);
    let mut x = vec![0.0; p];

    for &i in &data.kept {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = data.x[(i, j)];
        }
        let u: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        basis.jets_into(u, e.as_mut_slice(), de.as_mut_slice(), d2e.as_mut_slice());
        let f = e.dot(&param.eta);
        let r = data.y[i] - f;
        out.loglik -= 0.5 * r * r;
        if !want_grad {
            continue;
        }
        let f1 = de.dot(&param.eta);
        for k in 0..d {
            g[k] = (0..p).map(|q| jac[(q, k)] * x[q]).sum();
        }
        out.score_theta.axpy(r * f1, &g, 1.0);
        out.score_eta.axpy(r, &e, 1.0);
        if !want_hess {
            continue;
        }
        out.d2.ger(f1 * f1, &g, &g, 1.0);
        out.a.ger(f1, &g, &e, 1.0);
        out.h2.ger(1.0, &e, &e, 1.0);
        if let Some(hess) = &hess {
            let f2 = d2e.dot(&param.eta);
            out.d2.ger(-r * f2, &g, &g, 1.0);
            for (q, hq) in hess.iter().enumerate() {
                let w = -r * f1 * x[q];
                out.d2.zip_apply(hq, |acc, h| *acc += w * h);
            }
            out.a.ger(-r, &g, &de, 1.0);
        }
    }
    if want_hess {
        // ger accumulates both triangles; enforce exact symmetry
        let d2t = out.d2.transpose();
        out.d2 = (&out.d2 + d2t) * 0.5;
        let h2t = out.h2.transpose();
        out.h2 = (&out.h2 + h2t) * 0.5;
    }
    out
}

/// Quasi log-likelihood over the kept observations.
pub fn loglik(data: &Dataset, basis: &Basis, param: &FullParam) -> f64 {
    accumulate(data, basis, param, Order::Value).loglik
}

/// Gradient of [`loglik`] in `(angles, eta)`.
pub fn score(data: &Dataset, basis: &Basis, param: &FullParam) -> (DVector<f64>, DVector<f64>) {
    let acc = accumulate(data, basis, param, Order::Gradient);
    (acc.score_theta, acc.score_eta)
}

/// Log-likelihood and its gradient in one pass.
pub fn loglik_and_score(
    data: &Dataset,
    basis: &Basis,
    param: &FullParam,
) -> (f64, DVector<f64>, DVector<f64>) {
    let acc = accumulate(data, basis, param, Order::Gradient);
    (acc.loglik, acc.score_theta, acc.score_eta)
}

/// Information blocks, with or without the residual-weighted terms.
pub fn hessian_blocks(
    data: &Dataset,
    basis: &Basis,
    param: &FullParam,
    gauss_newton_only: bool,
) -> LikelihoodBlocks {
    let acc = accumulate(data, basis, param, Order::Hessian { gauss_newton_only });
    LikelihoodBlocks {
        d2: acc.d2,
        a: acc.a,
        h2: acc.h2,
        score_theta: acc.score_theta,
        score_eta: acc.score_eta,
        loglik: acc.loglik,
        gauss_newton_only,
    }
}

/// Residuals `Y_i - f_eta(X_i^T theta)` over the kept observations.
pub fn residuals(data: &Dataset, basis: &Basis, param: &FullParam) -> Vec<f64> {
    let theta = param.theta();
    let mut e = vec![0.0; basis.m()];
    data.kept
        .iter()
        .map(|&i| {
            let u = data.x.row(i).transpose().dot(&theta);
            basis.values_into(u, &mut e);
            let f: f64 = e.iter().zip(param.eta.iter()).map(|(a, b)| a * b).sum();
            data.y[i] - f
        })
        .collect()
}
