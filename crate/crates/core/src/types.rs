//! Domain types shared by the codec, channel, rate and detector modules.
//!
//! Everything here is an immutable value once constructed. Constructors
//! validate their invariants, so downstream code can rely on them.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// A permutation of `0..N`, standing for the `N×N` permutation matrix whose
/// row `k` has its single one in column `map[k]`.
///
/// Applying the matrix to a vector is a gather: `(P·v)[k] = v[map[k]]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty".into()));
        }
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n {
                return Err(Error::InvalidPermutation(format!(
                    "entry {v} outside 0..{n}"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidPermutation(format!("entry {v} repeated")));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (k, &v) in self.0.iter().enumerate() {
            inv[v] = k;
        }
        Self(inv)
    }

    /// `P·v`.
    pub fn gather<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| v[i]).collect()
    }

    /// `Pᵀ·v`, the inverse of [`gather`](Self::gather).
    pub fn scatter<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (k, &i) in self.0.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    /// Dense 0/1 matrix form. Only used for display and tests.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        permutation_to_matrix(self)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(value: Vec<usize>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

pub fn permutation_to_matrix(p: &Permutation) -> DMatrix<f64> {
    let n = p.len();
    let mut m = DMatrix::zeros(n, n);
    for (row, &col) in p.as_slice().iter().enumerate() {
        m[(row, col)] = 1.0;
    }
    m
}

/// Default relative distinctness margin between per-antenna powers.
pub const DEFAULT_DISTINCTNESS: f64 = 1e-6;

/// Per-antenna power fractions for the generic allocation with 3 antennas.
pub const TABLE2_N3: [f64; 3] = [0.39, 0.33, 0.28];
/// Per-antenna power fractions for the generic allocation with 4 antennas.
pub const TABLE2_N4: [f64; 4] = [0.34, 0.28, 0.22, 0.16];
/// Per-antenna power fractions for the generic allocation with 6 antennas.
pub const TABLE2_N6: [f64; 6] = [0.27, 0.23, 0.19, 0.14, 0.10, 0.07];
/// The sparser 4-antenna allocation used for SER comparisons ("PA-2").
pub const PA2_N4: [f64; 4] = [0.45, 0.30, 0.15, 0.10];

/// Positive, pairwise-distinct per-antenna powers summing to the total
/// transmit power `rho`. Entry `i` is the squared amplitude `γ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPowerAllocation")]
pub struct PowerAllocation {
    gamma: Vec<f64>,
    rho: f64,
}

#[derive(Deserialize)]
struct RawPowerAllocation {
    gamma: Vec<f64>,
    rho: f64,
}

impl TryFrom<RawPowerAllocation> for PowerAllocation {
    type Error = Error;

    fn try_from(raw: RawPowerAllocation) -> Result<Self> {
        Self::new(raw.gamma, raw.rho)
    }
}

impl PowerAllocation {
    pub fn new(gamma: Vec<f64>, rho: f64) -> Result<Self> {
        Self::with_distinctness(gamma, rho, DEFAULT_DISTINCTNESS)
    }

    /// Like [`new`](Self::new) with a custom distinctness margin, relative to `rho`.
    pub fn with_distinctness(gamma: Vec<f64>, rho: f64, rel_margin: f64) -> Result<Self> {
        if !rho.is_finite() || rho <= 0.0 {
            return Err(Error::InvalidPower(format!(
                "total power {rho} must be positive"
            )));
        }
        if gamma.is_empty() {
            return Err(Error::InvalidPower("need at least one antenna".into()));
        }
        for &g in &gamma {
            if !g.is_finite() || g <= 0.0 || g > rho {
                return Err(Error::InvalidPower(format!("power {g} outside (0, {rho}]")));
            }
        }
        let sum: f64 = gamma.iter().sum();
        if (sum - rho).abs() > 1e-9 * rho {
            return Err(Error::InvalidPower(format!(
                "powers sum to {sum}, expected {rho}"
            )));
        }
        let gap = min_pairwise_gap(&gamma);
        if gap.is_nan() || gap <= rel_margin * rho {
            return Err(Error::InvalidPower(format!(
                "powers not distinct: minimum gap {gap} <= {}",
                rel_margin * rho
            )));
        }
        Ok(Self { gamma, rho })
    }

    /// Scales fractions of the total power by `rho`.
    pub fn from_fractions(fractions: &[f64], rho: f64) -> Result<Self> {
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPower(format!(
                "fractions sum to {total}, expected 1"
            )));
        }
        Self::new(fractions.iter().map(|f| f * rho).collect(), rho)
    }

    /// The generic allocation for `n` antennas; see [`default_power_allocation`].
    pub fn generic(n: usize, rho: f64) -> Result<Self> {
        default_power_allocation(n, rho)
    }

    pub fn pa2(rho: f64) -> Result<Self> {
        Self::from_fractions(&PA2_N4, rho)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| g / self.rho).collect()
    }

    pub fn min_gap(&self) -> f64 {
        min_pairwise_gap(&self.gamma)
    }

    /// Same fractions at a different total power.
    pub fn rescaled(&self, rho: f64) -> Result<Self> {
        Self::from_fractions(&self.fractions(), rho)
    }
}

pub(crate) fn min_pairwise_gap(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Tabulated generic allocation for 3, 4 and 6 antennas, scaled by `rho`.
///
/// Other antenna counts fall back to the arithmetic progression
/// `γ_i ∝ N + 1 − i`, normalized to `rho`.
pub fn default_power_allocation(n: usize, rho: f64) -> Result<PowerAllocation> {
    match n {
        0 | 1 => Err(Error::InvalidArgument(format!(
            "power allocation needs at least 2 antennas, got {n}"
        ))),
        3 => PowerAllocation::from_fractions(&TABLE2_N3, rho),
        4 => PowerAllocation::from_fractions(&TABLE2_N4, rho),
        6 => PowerAllocation::from_fractions(&TABLE2_N6, rho),
        _ => {
            let total = (n * (n + 1) / 2) as f64;
            let fractions: Vec<f64> = (1..=n).map(|i| (n + 1 - i) as f64 / total).collect();
            PowerAllocation::from_fractions(&fractions, rho)
        }
    }
}

/// Gray-labelled `Q`-PSK with points `e^{j2πk/Q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    order: usize,
    bits: u32,
    points: Vec<Complex64>,
    /// Bit label carried by point `k`.
    labels: Vec<u32>,
    /// Point index carrying label `l`.
    point_of_label: Vec<usize>,
}

impl Constellation {
    pub fn psk(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "modulation order {order} must be a power of two >= 2"
            )));
        }
        let bits = order.trailing_zeros();
        let points = (0..order)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64))
            .collect();
        let labels: Vec<u32> = (0..order as u32).map(|k| k ^ (k >> 1)).collect();
        let mut point_of_label = vec![0; order];
        for (k, &l) in labels.iter().enumerate() {
            point_of_label[l as usize] = k;
        }
        Ok(Self {
            order,
            bits,
            points,
            labels,
            point_of_label,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn index_of_label(&self, label: u32) -> usize {
        self.point_of_label[label as usize]
    }

    /// Index of the constellation point nearest to `z`. For PSK this is the
    /// point with the closest phase, independent of `|z|`.
    pub fn nearest(&self, z: Complex64) -> usize {
        let q = self.order as f64;
        let k = (z.arg() * q / (2.0 * PI)).round() as i64;
        k.rem_euclid(self.order as i64) as usize
    }
}

/// Singular value decomposition `H = U·diag(λ)·Vᴴ` of a square channel.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

/// One `M×N` flat-fading channel matrix. The SVD is computed lazily on
/// first use and cached.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    h: CMatrix,
    svd: OnceLock<Svd>,
}

impl ChannelRealization {
    pub fn new(h: CMatrix) -> Self {
        Self {
            h,
            svd: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.h
    }

    /// Receive antenna count `M`.
    pub fn rx(&self) -> usize {
        self.h.nrows()
    }

    /// Transmit antenna count `N`.
    pub fn tx(&self) -> usize {
        self.h.ncols()
    }

    /// The cached SVD. Only square channels are decomposed.
    pub fn svd(&self) -> Result<&Svd> {
        if let Some(svd) = self.svd.get() {
            return Ok(svd);
        }
        if self.rx() != self.tx() {
            return Err(Error::MissingSvd(format!(
                "channel is {}x{}, the parallel-channel path needs N = M",
                self.rx(),
                self.tx()
            )));
        }
        let svd = decompose(&self.h)?;
        Ok(self.svd.get_or_init(|| svd))
    }
}

fn decompose(h: &CMatrix) -> Result<Svd> {
    let n = h.ncols();
    let raw = h.clone().svd(true, true);
    let (u, v_t) = match (raw.u, raw.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::MissingSvd("decomposition failed".into())),
    };
    let v = v_t.adjoint();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw.singular_values[b].total_cmp(&raw.singular_values[a]));

    let mut u_sorted = CMatrix::zeros(n, n);
    let mut v_sorted = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let vcol = v.column(src);
        // Rotate the pair so the first significant entry of v_k is real-positive.
        let scale = vcol.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = vcol
            .iter()
            .find(|z| z.norm() > 1e-12 * scale)
            .copied()
            .unwrap_or(Complex64::new(1.0, 0.0));
        let phase = Complex64::from_polar(1.0, -pivot.arg());
        v_sorted.set_column(dst, &(vcol * phase));
        u_sorted.set_column(dst, &(u.column(src) * phase));
        values.push(raw.singular_values[src]);
    }
    Ok(Svd {
        u: u_sorted,
        singular_values: values,
        v: v_sorted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left.is_empty() {
                out.push(prefix.clone());
                return;
            }
            for i in 0..left.len() {
                let v = left.remove(i);
                prefix.push(v);
                rec(prefix, left, out);
                prefix.pop();
                left.insert(i, v);
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
        out
    }

    #[test]
    fn identity_matrix() {
        let m = permutation_to_matrix(&Permutation::identity(3));
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn rotation_matrix_has_expected_rows() {
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        let m = permutation_to_matrix(&p);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        assert_eq!(m, expected);
    }

    #[test]
    fn matrices_are_orthogonal_and_injective() {
        for n in 1..=5 {
            let mats: Vec<_> = all_permutations(n)
                .into_iter()
                .map(|p| permutation_to_matrix(&Permutation::new(p).unwrap()))
                .collect();
            for m in &mats {
                assert_eq!(m * m.transpose(), DMatrix::identity(n, n));
            }
            for i in 0..mats.len() {
                for j in i + 1..mats.len() {
                    assert_ne!(mats[i], mats[j]);
                }
            }
        }
    }

    #[test]
    fn gather_matches_matrix_product_and_scatter_inverts() {
        let p = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let v = [10.0, 20.0, 30.0, 40.0];
        let dense = p.to_matrix() * nalgebra::DVector::from_row_slice(&v);
        assert_eq!(p.gather(&v), dense.as_slice());
        assert_eq!(p.scatter(&p.gather(&v)), v);
        assert_eq!(p.inverse().gather(&p.gather(&v)), v);
    }

    #[test]
    fn invalid_permutations_are_rejected() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::new(vec![]).is_err());
    }

    #[test]
    fn table_rows() {
        let pa = default_power_allocation(3, 1.0).unwrap();
        assert_eq!(pa.gamma(), &[0.39, 0.33, 0.28]);
        let pa = default_power_allocation(4, 2.0).unwrap();
        assert_eq!(pa.gamma(), &[0.68, 0.56, 0.44, 0.32]);
        let pa = default_power_allocation(6, 1.0).unwrap();
        assert_eq!(pa.gamma(), &[0.27, 0.23, 0.19, 0.14, 0.10, 0.07]);
    }

    #[test]
    fn fallback_allocation_is_arithmetic() {
        let pa = default_power_allocation(2, 3.0).unwrap();
        assert!((pa.gamma()[0] - 2.0).abs() < 1e-12);
        assert!((pa.gamma()[1] - 1.0).abs() < 1e-12);
        assert!(default_power_allocation(1, 1.0).is_err());
    }

    #[test]
    fn power_invariants_enforced() {
        assert!(PowerAllocation::new(vec![0.5, 0.5], 1.0).is_err());
        assert!(PowerAllocation::new(vec![0.6, 0.5], 1.0).is_err());
        assert!(PowerAllocation::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(PowerAllocation::new(vec![0.6, 0.4], 0.0).is_err());
        assert!(PowerAllocation::new(vec![0.6, 0.4], 1.0).is_ok());
        let pa2 = PowerAllocation::pa2(1.0).unwrap();
        assert_eq!(pa2.gamma(), &PA2_N4);
    }

    #[test]
    fn psk_points_and_gray_labels() {
        for q in [2, 4, 8, 16] {
            let c = Constellation::psk(q).unwrap();
            let mean: Complex64 = c.points().iter().sum::<Complex64>() / q as f64;
            assert!(mean.norm() < 1e-12);
            for k in 0..q {
                assert!((c.point(k).norm() - 1.0).abs() < 1e-12);
                let next = (k + 1) % q;
                assert_eq!((c.label(k) ^ c.label(next)).count_ones(), 1);
                assert_eq!(c.index_of_label(c.label(k)), k);
                assert_eq!(c.nearest(c.point(k) * 3.7), k);
            }
        }
        assert!(Constellation::psk(3).is_err());
        assert!(Constellation::psk(1).is_err());
    }

    #[test]
    fn bpsk_mapping() {
        let c = Constellation::psk(2).unwrap();
        assert!((c.point(c.index_of_label(0)) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((c.point(c.index_of_label(1)) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_and_is_sorted() {
        let h = CMatrix::from_fn(3, 3, |i, j| {
            Complex64::new((i * 3 + j) as f64 * 0.3 - 1.0, (i as f64 - j as f64) * 0.7)
        });
        let ch = ChannelRealization::new(h.clone());
        let svd = ch.svd().unwrap();
        let sigma = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            svd.singular_values.iter().map(|&s| Complex64::new(s, 0.0)),
        ));
        let rebuilt = &svd.u * sigma * svd.v.adjoint();
        assert!(frobenius(&(rebuilt - &h)) <= 1e-9 * frobenius(&h));
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let eye = CMatrix::identity(3, 3);
        assert!(frobenius(&(svd.u.adjoint() * &svd.u - &eye)) < 1e-9);
        assert!(frobenius(&(svd.v.adjoint() * &svd.v - &eye)) < 1e-9);
        for k in 0..3 {
            let first = svd.v.column(k)[0];
            assert!(first.im.abs() < 1e-12 && first.re >= 0.0);
        }
    }

    #[test]
    fn non_square_channel_has_no_svd() {
        let ch = ChannelRealization::new(CMatrix::zeros(2, 3));
        assert!(matches!(ch.svd(), Err(Error::MissingSvd(_))));
    }
}
