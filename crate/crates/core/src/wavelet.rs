//! Daubechies scaling function and wavelet with nine vanishing moments,
//! sampled on dyadic grids by the cascade algorithm, and the finite wavelet
//! dictionary used as the sieve on `[-s_X, s_X]`.
//!
//! The dictionary follows the interval construction: seventeen translates of
//! the rescaled scaling function, followed by complete wavelet levels
//! `j = 0, 1, ...`. Every member is an affine rescaling of a mother function
//! supported on `[0, 17]`:
//!
//! ```text
//! e(t) = 2^{j/2} s_X^{-1/2} g(2^j t / s_X + shift + 1)
//! ```
//!
//! with `g` the scaling function (block of seventeen, `j = 0`,
//! `shift = 0..=16`) or the mother wavelet (levels `j >= 0`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the mother support `[0, 17]`.
pub const SUPPORT_LEN: usize = 17;

/// Number of scaling translates in the coarse block.
pub const SCALING_COUNT: usize = 17;

pub const MIN_DEPTH: u32 = 8;
pub const MAX_DEPTH: u32 = 16;
pub const DEFAULT_DEPTH: u32 = 12;

/// Extremal-phase Daubechies low-pass filter with nine vanishing moments,
/// normalized so that the coefficients sum to `sqrt(2)`.
#[allow(clippy::excessive_precision)]
pub const DB9_LOWPASS: [f64; 18] = [
    0.038_077_947_363_878_346_588_7,
    0.243_834_674_612_590_353_732,
    0.604_823_123_690_111_111_903_1,
    0.657_288_078_051_300_538_078_2,
    0.133_197_385_825_007_576_191,
    -0.293_273_783_279_174_908_806_4,
    -0.096_840_783_222_976_460_513_51,
    0.148_540_749_338_106_380_135_1,
    0.030_725_681_479_333_379_212_32,
    -0.067_632_829_061_329_973_675_64,
    0.000_250_947_114_831_451_957_587_2,
    0.022_361_662_123_679_097_205_37,
    -0.004_723_204_757_751_397_277_926,
    -0.004_281_503_682_463_429_834_497,
    0.001_847_646_883_056_226_476_619,
    0.000_230_385_763_523_195_967_205_2,
    -0.000_251_963_188_942_710_136_975,
    0.000_039_347_320_316_271_599_480_69,
];

/// High-pass (wavelet) filter `g_k = (-1)^k h_{17-k}`.
pub fn db9_highpass() -> [f64; 18] {
    let mut g = [0.0; 18];
    for (k, gk) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *gk = sign * DB9_LOWPASS[17 - k];
    }
    g
}

/// Value, first and second derivative of a function at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub deriv: f64,
    pub second: f64,
}

/// Dyadic samples of the mother scaling function and wavelet on `[0, 17]`.
#[derive(Debug, Clone)]
pub struct WaveletTable {
    depth: u32,
    phi: Vec<f64>,
    psi: Vec<f64>,
    phi_deriv: Vec<f64>,
    psi_deriv: Vec<f64>,
}

/// Which mother function a table lookup refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mother {
    Scaling,
    Wavelet,
}

/// Runs the cascade algorithm to dyadic `depth` and returns the sampled pair.
pub fn build_table(depth: u32) -> Result<WaveletTable> {
    if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
        return Err(Error::Config(format!(
            "wavelet depth {depth} outside [{MIN_DEPTH}, {MAX_DEPTH}]"
        )));
    }
    let h = DB9_LOWPASS;
    let sqrt2 = std::f64::consts::SQRT_2;
    let n_int = SUPPORT_LEN + 1;

    // Values at the integers: eigenvector of M_{ij} = sqrt2 h_{2i-j} for
    // eigenvalue one, normalized by the partition of unity.
    let mut system = DMatrix::<f64>::zeros(n_int, n_int);
    for i in 0..n_int {
        for j in 0..n_int {
            let idx = 2 * i as i64 - j as i64;
            if (0..h.len() as i64).contains(&idx) {
                system[(i, j)] = sqrt2 * h[idx as usize];
            }
        }
        system[(i, i)] -= 1.0;
    }
    for j in 0..n_int {
        system[(n_int - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n_int);
    rhs[n_int - 1] = 1.0;
    let integer_values = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Config("cascade eigen-system is singular".into()))?;

    let mut phi: Vec<f64> = integer_values.iter().copied().collect();
    phi[0] = 0.0;
    phi[SUPPORT_LEN] = 0.0;

    for level in 1..=depth {
        let len = SUPPORT_LEN * (1usize << level) + 1;
        let half = 1usize << (level - 1);
        let mut next = vec![0.0; len];
        for (q, slot) in next.iter_mut().enumerate() {
            if q % 2 == 0 {
                *slot = phi[q / 2];
                continue;
            }
            // phi(x) = sqrt2 sum_n h_n phi(2x - n); 2x - n lies on the coarser grid.
            let mut acc = 0.0;
            for (n, hn) in h.iter().enumerate() {
                let idx = q as i64 - (n * half) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += hn * phi[idx as usize];
                }
            }
            *slot = sqrt2 * acc;
        }
        phi = next;
    }

    let g = db9_highpass();
    let scale = 1usize << depth;
    let psi: Vec<f64> = (0..phi.len())
        .map(|q| {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                let idx = 2 * q as i64 - (k * scale) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += gk * phi[idx as usize];
                }
            }
            sqrt2 * acc
        })
        .collect();

    let step = 1.0 / scale as f64;
    Ok(WaveletTable {
        depth,
        phi_deriv: centered_differences(&phi, step),
        psi_deriv: centered_differences(&psi, step),
        phi,
        psi,
    })
}

fn centered_differences(values: &[f64], step: f64) -> Vec<f64> {
    let last = values.len() - 1;
    (0..values.len())
        .map(|i| {
            if i == 0 {
                (values[1] - values[0]) / step
            } else if i == last {
                (values[last] - values[last - 1]) / step
            } else {
                (values[i + 1] - values[i - 1]) / (2.0 * step)
            }
        })
        .collect()
}

impl WaveletTable {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Grid spacing `2^{-depth}` in mother coordinates.
    pub fn spacing(&self) -> f64 {
        1.0 / (1u64 << self.depth) as f64
    }

    pub fn phi_samples(&self) -> &[f64] {
        &self.phi
    }

    pub fn psi_samples(&self) -> &[f64] {
        &self.psi
    }

    pub fn phi_deriv_samples(&self) -> &[f64] {
        &self.phi_deriv
    }

    pub fn psi_deriv_samples(&self) -> &[f64] {
        &self.psi_deriv
    }

    pub fn sup_phi(&self) -> f64 {
        self.phi.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn sup_psi(&self) -> f64 {
        self.psi.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Piecewise cubic Hermite interpolant of the tabulated values and
    /// derivatives, so the returned derivative is the exact derivative of the
    /// returned value. Zero outside the open support `(0, 17)`.
    /// Interpolant value at table position `i + t` from precomputed Hermite
    /// weights; zero outside the table.
    fn value_at(&self, mother: Mother, i: i64, weights: &[f64; 4]) -> f64 {
        let (values, derivs) = match mother {
            Mother::Scaling => (&self.phi, &self.phi_deriv),
            Mother::Wavelet => (&self.psi, &self.psi_deriv),
        };
        if i < 0 || i as usize + 1 >= values.len() {
            return 0.0;
        }
        let i = i as usize;
        weights[0] * values[i] + weights[1] * derivs[i] + weights[2] * values[i + 1] + weights[3] * derivs[i + 1]
    }

    /// Hermite weights at fractional offset `t`, derivative weights already
    /// scaled by the table spacing.
    fn hermite_weights(&self, t: f64) -> [f64; 4] {
        let h = self.spacing();
        let t2 = t * t;
        let t3 = t2 * t;
        [
            2.0 * t3 - 3.0 * t2 + 1.0,
            (t3 - 2.0 * t2 + t) * h,
            -2.0 * t3 + 3.0 * t2,
            (t3 - t2) * h,
        ]
    }

    pub fn jet(&self, mother: Mother, u: f64) -> Jet {
        if !(u > 0.0 && u < SUPPORT_LEN as f64) {
            return Jet::default();
        }
        let (values, derivs) = match mother {
            Mother::Scaling => (&self.phi, &self.phi_deriv),
            Mother::Wavelet => (&self.psi, &self.psi_deriv),
        };
        let scale = (1u64 << self.depth) as f64;
        let pos = u * scale;
        let i = (pos.floor() as usize).min(values.len() - 2);
        let t = pos - i as f64;
        let h = 1.0 / scale;
        let (y0, y1) = (values[i], values[i + 1]);
        let (d0, d1) = (derivs[i] * h, derivs[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1;
        let dt = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * d1;
        let dtt = (12.0 * t - 6.0) * y0
            + (6.0 * t - 4.0) * d0
            + (-12.0 * t + 6.0) * y1
            + (6.0 * t - 2.0) * d1;
        Jet {
            value,
            deriv: dt * scale,
            second: dtt * scale * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Scaling,
    Wavelet,
}

/// Structured position of a dictionary member.
///
/// `shift` is the translate index: `k - 1` for the scaling block and the
/// wavelet shift `r` otherwise. The mother argument is
/// `2^level * t / s_X + shift + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisIndex {
    /// 1-based flat index in the canonical ordering.
    pub k: usize,
    pub kind: BasisKind,
    pub level: u32,
    pub shift: i64,
}

impl BasisIndex {
    fn mother(&self) -> Mother {
        match self.kind {
            BasisKind::Scaling => Mother::Scaling,
            BasisKind::Wavelet => Mother::Wavelet,
        }
    }
}

/// Wavelet shifts of `level` whose support meets `(-s_X, s_X)` in an open set.
///
/// The support of shift `r` is `s_X 2^{-j} [-(r + 1), 16 - r]`, which
/// overlaps the interval exactly when `-2^j <= r <= 15 + 2^j`.
pub fn level_shifts(level: u32) -> std::ops::RangeInclusive<i64> {
    let width = 1i64 << level;
    -width..=(SUPPORT_LEN as i64 - 2 + width)
}

/// Number of members contributed by wavelet `level`.
pub fn level_count(level: u32) -> usize {
    let shifts = level_shifts(level);
    (shifts.end() - shifts.start() + 1) as usize
}

/// Canonical index list: seventeen scaling translates, then wavelet levels
/// `0..=max_level` (pass `-1` for the scaling block alone).
pub fn enumerate_levels(_s_x: f64, max_level: i32) -> Vec<BasisIndex> {
    let mut out: Vec<BasisIndex> = (0..SCALING_COUNT)
        .map(|i| BasisIndex {
            k: i + 1,
            kind: BasisKind::Scaling,
            level: 0,
            shift: i as i64,
        })
        .collect();
    for level in 0..=max_level.max(-1) {
        let level = level as u32;
        for shift in level_shifts(level) {
            out.push(BasisIndex {
                k: out.len() + 1,
                kind: BasisKind::Wavelet,
                level,
                shift,
            });
        }
    }
    out
}

/// Dictionary sizes made of the scaling block plus complete wavelet levels.
pub fn admissible_sizes(max_level: u32) -> Vec<usize> {
    let mut sizes = vec![SCALING_COUNT];
    for level in 0..=max_level {
        let last = *sizes.last().expect("non-empty");
        sizes.push(last + level_count(level));
    }
    sizes
}

/// Closed support interval of a member.
pub fn support(idx: &BasisIndex, s_x: f64) -> (f64, f64) {
    let width = s_x / (1u64 << idx.level) as f64;
    (
        -(idx.shift as f64 + 1.0) * width,
        (SUPPORT_LEN as f64 - 1.0 - idx.shift as f64) * width,
    )
}

/// Finite wavelet dictionary `e_1, ..., e_m` on `[-s_X, s_X]`.
#[derive(Debug, Clone)]
pub struct Basis {
    s_x: f64,
    table: Arc<WaveletTable>,
    index: Vec<BasisIndex>,
}

impl Basis {
    /// First `m` members of the canonical ordering.
    ///
    /// `m` need not close a wavelet level; see [`admissible_sizes`] for the
    /// sizes that do.
    pub fn new(table: Arc<WaveletTable>, s_x: f64, m: usize) -> Result<Self> {
        if !(s_x.is_finite() && s_x > 0.0) {
            return Err(Error::Config(format!("s_X must be positive, got {s_x}")));
        }
        if m == 0 {
            return Err(Error::Config("basis size must be at least 1".into()));
        }
        let mut max_level = -1i32;
        let mut total = SCALING_COUNT;
        while total < m {
            max_level += 1;
            if max_level > 20 {
                return Err(Error::Config(format!("basis size {m} is too large")));
            }
            total += level_count(max_level as u32);
        }
        let mut index = enumerate_levels(s_x, max_level);
        index.truncate(m);
        Ok(Self { s_x, table, index })
    }

    /// Scaling block plus complete wavelet levels `0..=max_level`.
    pub fn with_levels(table: Arc<WaveletTable>, s_x: f64, max_level: i32) -> Result<Self> {
        let m = enumerate_levels(s_x, max_level).len();
        Self::new(table, s_x, m)
    }

    pub fn m(&self) -> usize {
        self.index.len()
    }

    pub fn s_x(&self) -> f64 {
        self.s_x
    }

    pub fn table(&self) -> &WaveletTable {
        &self.table
    }

    pub fn index_map(&self) -> &[BasisIndex] {
        &self.index
    }

    /// Structured index of the 1-based flat index `k`.
    pub fn index(&self, k: usize) -> &BasisIndex {
        &self.index[k - 1]
    }

    /// Inverse of [`Basis::index`].
    pub fn flat_index(&self, kind: BasisKind, level: u32, shift: i64) -> Option<usize> {
        match kind {
            BasisKind::Scaling => {
                (level == 0 && (0..SCALING_COUNT as i64).contains(&shift)).then(|| shift as usize + 1)
            }
            BasisKind::Wavelet => {
                let shifts = level_shifts(level);
                if !shifts.contains(&shift) {
                    return None;
                }
                let before: usize = SCALING_COUNT + (0..level).map(level_count).sum::<usize>();
                let k = before + (shift - shifts.start()) as usize + 1;
                (k <= self.m()).then_some(k)
            }
        }
    }

    pub fn support(&self, k: usize) -> (f64, f64) {
        support(self.index(k), self.s_x)
    }

    fn member_jet(&self, idx: &BasisIndex, x: f64) -> Jet {
        let dilation = (1u64 << idx.level) as f64 / self.s_x;
        let u = dilation * x + idx.shift as f64 + 1.0;
        let jet = self.table.jet(idx.mother(), u);
        if jet.value == 0.0 && jet.deriv == 0.0 && jet.second == 0.0 {
            return jet;
        }
        let amplitude = ((1u64 << idx.level) as f64 / self.s_x).sqrt();
        Jet {
            value: amplitude * jet.value,
            deriv: amplitude * dilation * jet.deriv,
            second: amplitude * dilation * dilation * jet.second,
        }
    }

    /// `e_k(x)`; zero outside the support of `e_k`.
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        self.member_jet(self.index(k), x).value
    }

    /// `e_k'(x)`.
    pub fn eval_deriv(&self, k: usize, x: f64) -> f64 {
        self.member_jet(self.index(k), x).deriv
    }

    /// `e_k''(x)` of the piecewise cubic interpolant.
    pub fn eval_second_deriv(&self, k: usize, x: f64) -> f64 {
        self.member_jet(self.index(k), x).second
    }

    pub fn basis_vector(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.index.iter().map(|i| self.member_jet(i, x).value))
    }

    pub fn basis_deriv_vector(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.index.iter().map(|i| self.member_jet(i, x).deriv))
    }

    /// Writes value, derivative and second derivative of every member at `x`.
    pub fn jets_into(&self, x: f64, values: &mut [f64], derivs: &mut [f64], seconds: &mut [f64]) {
        for (slot, idx) in self.index.iter().enumerate() {
            let jet = self.member_jet(idx, x);
            values[slot] = jet.value;
            derivs[slot] = jet.deriv;
            seconds[slot] = jet.second;
        }
    }

    /// Writes member values at `x` into `values`.
    pub fn values_into(&self, x: f64, values: &mut [f64]) {
        // members of one level share the fractional table position
        let scale = (1u64 << self.table.depth()) as i64;
        let mut current = None;
        let (mut base, mut amplitude, mut weights) = (0i64, 0.0, [0.0; 4]);
        for (slot, idx) in self.index.iter().enumerate() {
            if current != Some(idx.level) {
                current = Some(idx.level);
                let dilation = (1u64 << idx.level) as f64 / self.s_x;
                let pos = (dilation * x + 1.0) * scale as f64;
                let floor = pos.floor();
                base = floor as i64;
                amplitude = dilation.sqrt();
                weights = self.table.hermite_weights(pos - floor);
            }
            let i = base + idx.shift * scale;
            values[slot] = amplitude * self.table.value_at(idx.mother(), i, &weights);
        }
    }

    /// Number of interval-dictionary members at wavelet level `level` whose
    /// support starts inside the support of `e_k` (and therefore meets it).
    ///
    /// For members away from the interval ends this is `17 * 2^(level - j_k)`.
    pub fn overlap_count(&self, k: usize, level: u32) -> usize {
        let (lo, hi) = self.support(k);
        level_shifts(level)
            .map(|shift| {
                support(
                    &BasisIndex {
                        k: 0,
                        kind: BasisKind::Wavelet,
                        level,
                        shift,
                    },
                    self.s_x,
                )
            })
            .filter(|(start, _)| *start >= lo && *start < hi)
            .count()
    }

    /// Gram matrix `int e_k e_l` by the composite midpoint rule on a grid
    /// `2^{-depth}` times finer than the finest level present.
    pub fn quadrature_gram(&self) -> DMatrix<f64> {
        let m = self.m();
        let finest = self.index.iter().map(|i| i.level).max().unwrap_or(0);
        let step = self.s_x * self.table.spacing() / (1u64 << finest) as f64;
        let (lo, hi) = self
            .index
            .iter()
            .map(|i| support(i, self.s_x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| (a.min(l), b.max(h)));
        let cells = ((hi - lo) / step).ceil() as usize;
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut values = vec![0.0; m];
        let mut active = Vec::with_capacity(m);
        for c in 0..cells {
            let x = lo + (c as f64 + 0.5) * step;
            self.values_into(x, &mut values);
            active.clear();
            active.extend((0..m).filter(|&k| values[k] != 0.0));
            for &a in &active {
                for &b in &active {
                    if b >= a {
                        gram[(a, b)] += values[a] * values[b] * step;
                    }
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        gram
    }
}
