//! Chart of the half-sphere `S^{p,+} = {theta : |theta| = 1, theta_1 >= 0}`.
//!
//! Angles live in `W_S = [0, pi] x [-pi/2, pi/2]^{p-2}` and map to
//!
//! ```text
//! theta_1 = sin a_1 cos a_2 ... cos a_{p-1}
//! theta_2 = cos a_1 cos a_2 ... cos a_{p-1}
//! theta_q = sin a_{q-1} cos a_q ... cos a_{p-1}     (q >= 3)
//! ```
//!
//! so `theta_1 > 0` on the interior of `W_S`. The columns of the Jacobian are
//! mutually orthogonal with norms at most one.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin used when clamping iterates into `W_S`.
pub const BOX_MARGIN: f64 = 1e-8;

/// Default cap on the number of grid points built by [`make_grid`].
pub const DEFAULT_GRID_BUDGET: usize = 2_000_000;

/// Point of `W_S`, i.e. `p - 1` spherical angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SphereAngles(pub Vec<f64>);

impl SphereAngles {
    pub fn new(angles: Vec<f64>) -> Self {
        Self(angles)
    }

    /// Dimension `p` of the ambient space.
    pub fn p(&self) -> usize {
        self.0.len() + 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn embed(&self) -> DVector<f64> {
        embed(&self.0)
    }

    pub fn from_theta(theta: &DVector<f64>) -> Self {
        Self(angles(theta))
    }

    /// Bounds of coordinate `i` of `W_S`.
    pub fn bounds(i: usize) -> (f64, f64) {
        if i == 0 {
            (0.0, PI)
        } else {
            (-FRAC_PI_2, FRAC_PI_2)
        }
    }

    pub fn in_box(&self) -> bool {
        self.0.iter().enumerate().all(|(i, a)| {
            let (lo, hi) = Self::bounds(i);
            *a >= lo && *a <= hi
        })
    }

    /// Projection onto `W_S` shrunk by `margin`.
    pub fn clamped(&self, margin: f64) -> Self {
        Self(
            self.0
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let (lo, hi) = Self::bounds(i);
                    a.clamp(lo + margin, hi - margin)
                })
                .collect(),
        )
    }
}

#[derive(Clone, Copy)]
enum Factor {
    One,
    Sin,
    Cos,
}

/// Factor of coordinate `q` (0-based) that depends on angle `k` (0-based).
fn factor(q: usize, k: usize) -> Factor {
    match q {
        0 => {
            if k == 0 {
                Factor::Sin
            } else {
                Factor::Cos
            }
        }
        1 => Factor::Cos,
        _ => {
            if k + 1 < q {
                Factor::One
            } else if k + 1 == q {
                Factor::Sin
            } else {
                Factor::Cos
            }
        }
    }
}

/// `d^order/da^order` of a factor evaluated at `(sin a, cos a)`.
fn factor_derivative(f: Factor, order: usize, s: f64, c: f64) -> f64 {
    match f {
        Factor::One => {
            if order == 0 {
                1.0
            } else {
                0.0
            }
        }
        Factor::Sin => [s, c, -s][order],
        Factor::Cos => [c, -s, -c][order],
    }
}

fn coordinate(angles: &[f64], q: usize, orders: &[usize]) -> f64 {
    angles
        .iter()
        .enumerate()
        .map(|(k, a)| factor_derivative(factor(q, k), orders[k], a.sin(), a.cos()))
        .product()
}

/// `Phi(angles)`, a unit vector with non-negative first coordinate.
pub fn embed(angles: &[f64]) -> DVector<f64> {
    let p = angles.len() + 1;
    let orders = vec![0; angles.len()];
    DVector::from_iterator(p, (0..p).map(|q| coordinate(angles, q, &orders)))
}

/// Inverse of [`embed`] for unit vectors with `theta_1 >= 0`.
pub fn angles(theta: &DVector<f64>) -> Vec<f64> {
    let p = theta.len();
    let mut out = vec![0.0; p - 1];
    let mut head = theta[0] * theta[0] + theta[1] * theta[1];
    out[0] = theta[0].atan2(theta[1]);
    for q in 2..p {
        out[q - 1] = theta[q].atan2(head.sqrt());
        head += theta[q] * theta[q];
    }
    out
}

/// Jacobian `p x (p-1)` of [`embed`].
pub fn grad_embed(angles: &[f64]) -> DMatrix<f64> {
    let d = angles.len();
    let p = d + 1;
    let mut jac = DMatrix::zeros(p, d);
    let mut orders = vec![0; d];
    for k in 0..d {
        orders[k] = 1;
        for q in 0..p {
            jac[(q, k)] = coordinate(angles, q, &orders);
        }
        orders[k] = 0;
    }
    jac
}

/// Second derivatives: entry `q` is the `(p-1) x (p-1)` Hessian of `theta_q`.
pub fn hess_embed(angles: &[f64]) -> Vec<DMatrix<f64>> {
    let d = angles.len();
    let p = d + 1;
    let mut out = vec![DMatrix::zeros(d, d); p];
    let mut orders = vec![0; d];
    for k in 0..d {
        for l in k..d {
            orders[k] += 1;
            orders[l] += 1;
            for (q, hq) in out.iter_mut().enumerate() {
                let v = coordinate(angles, q, &orders);
                hq[(k, l)] = v;
                hq[(l, k)] = v;
            }
            orders[k] = 0;
            orders[l] = 0;
        }
    }
    out
}

/// Contraction `sum_q x_q d^2 theta_q`, i.e. the Hessian of `x^T Phi`.
pub fn contract_hessian(hess: &[DMatrix<f64>], x: &[f64]) -> DMatrix<f64> {
    let d = hess[0].nrows();
    let mut out = DMatrix::zeros(d, d);
    for (hq, xq) in hess.iter().zip(x) {
        out += hq * *xq;
    }
    out
}

/// Product grid in angle space whose image covers the half-sphere.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub points: Vec<DVector<f64>>,
    pub angles: Vec<SphereAngles>,
    /// Guaranteed covering radius of the image (Euclidean distance).
    pub tau: f64,
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A single-point grid.
    pub fn single(angles: SphereAngles) -> Self {
        Self {
            points: vec![angles.embed()],
            angles: vec![angles],
            tau: f64::INFINITY,
        }
    }
}

pub fn make_grid(p: usize, tau: f64) -> Result<SphereGrid> {
    make_grid_with_budget(p, tau, DEFAULT_GRID_BUDGET)
}

/// Cell-centred product grid with covering radius at most `tau`.
///
/// Chart columns are orthogonal with norm at most one, so a box of half-widths
/// `h_k` in angle space maps into a ball of radius `sqrt(sum h_k^2)`.
pub fn make_grid_with_budget(p: usize, tau: f64, budget: usize) -> Result<SphereGrid> {
    if p < 2 {
        return Err(Error::Config(format!("dimension p must be at least 2, got {p}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("grid fineness must lie in (0, 1), got {tau}")));
    }
    let d = p - 1;
    let spacing = 2.0 * tau / (d as f64).sqrt();
    let counts: Vec<usize> = (0..d)
        .map(|k| {
            let (lo, hi) = SphereAngles::bounds(k);
            ((hi - lo) / spacing).ceil().max(1.0) as usize
        })
        .collect();
    let total = counts
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(*c))
        .filter(|t| *t <= budget)
        .ok_or_else(|| {
            Error::Resource(format!(
                "grid with fineness {tau} in dimension {p} exceeds {budget} points"
            ))
        })?;
    let realized = counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (lo, hi) = SphereAngles::bounds(k);
            let half = (hi - lo) / *c as f64 / 2.0;
            half * half
        })
        .sum::<f64>()
        .sqrt();

    let mut angles = Vec::with_capacity(total);
    let mut counter = vec![0usize; d];
    for _ in 0..total {
        let point: Vec<f64> = counter
            .iter()
            .enumerate()
            .map(|(k, i)| {
                let (lo, hi) = SphereAngles::bounds(k);
                lo + (hi - lo) * (*i as f64 + 0.5) / counts[k] as f64
            })
            .collect();
        angles.push(SphereAngles(point));
        for k in (0..d).rev() {
            counter[k] += 1;
            if counter[k] < counts[k] {
                break;
            }
            counter[k] = 0;
        }
    }
    Ok(SphereGrid {
        points: angles.iter().map(SphereAngles::embed).collect(),
        angles,
        tau: realized,
    })
}

/// Angle between two unit vectors, ignoring sign, in radians.
pub fn angular_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let cos = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    cos.acos()
}

/// Reflects `theta` into the half-sphere and normalizes it.
pub fn to_half_sphere(theta: &DVector<f64>) -> DVector<f64> {
    let unit = theta / theta.norm();
    if unit[0] < 0.0 {
        -unit
    } else {
        unit
    }
}
