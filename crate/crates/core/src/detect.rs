//! Maximum-likelihood and zero-forcing receivers, plus their flop counts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codec::{demodulate_indices, word_to_bits, Frame};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::types::{ChannelRealization, Constellation, Permutation, PowerAllocation};

/// Default largest ML search space, `2^24` hypotheses.
pub const DEFAULT_ML_CAP: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub permutation: Permutation,
    /// Position of the detected permutation in the usable set.
    pub permutation_index: usize,
    pub symbol_indices: Vec<usize>,
    pub symbols: Vec<Complex64>,
    /// Recovered bits, symbol block first, then the permutation index.
    pub bits: Vec<u8>,
}

impl DetectionResult {
    fn assemble(
        set: &[Permutation],
        permutation_index: usize,
        symbol_indices: Vec<usize>,
        c: &Constellation,
    ) -> Self {
        let mut bits = demodulate_indices(&symbol_indices, c);
        let width = usize::BITS - (set.len().max(1) - 1).leading_zeros();
        bits.extend(word_to_bits(permutation_index as u64, width));
        Self {
            permutation: set[permutation_index].clone(),
            permutation_index,
            symbols: symbol_indices.iter().map(|&k| c.point(k)).collect(),
            symbol_indices,
            bits,
        }
    }

    pub fn frame(&self) -> Frame {
        Frame {
            permutation: self.permutation.clone(),
            symbols: self.symbol_indices.clone(),
        }
    }
}

fn check_inputs(
    y: &CVector,
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
) -> Result<()> {
    if y.len() != channel.rx() {
        return Err(Error::DimensionMismatch {
            expected: channel.rx(),
            found: y.len(),
        });
    }
    if pa.len() != channel.tx() {
        return Err(Error::DimensionMismatch {
            expected: channel.tx(),
            found: pa.len(),
        });
    }
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty permutation set".into()));
    }
    if let Some(p) = set.iter().find(|p| p.len() != pa.len()) {
        return Err(Error::DimensionMismatch {
            expected: pa.len(),
            found: p.len(),
        });
    }
    Ok(())
}

/// Exhaustive search with the default cap; see [`detect_ml_capped`].
pub fn detect_ml(
    y: &CVector,
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    c: &Constellation,
) -> Result<DetectionResult> {
    detect_ml_capped(y, channel, set, pa, c, DEFAULT_ML_CAP)
}

/// Minimizes `‖y − H·P·Γ·s‖²` over every usable permutation and every symbol
/// vector. Hypotheses are visited in (permutation index, symbol indices)
/// lexicographic order and only a strictly smaller cost replaces the
/// incumbent, so ties resolve to the first hypothesis in that order.
pub fn detect_ml_capped(
    y: &CVector,
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    c: &Constellation,
    cap: u128,
) -> Result<DetectionResult> {
    check_inputs(y, channel, set, pa)?;
    let n = pa.len();
    let m = channel.rx();
    let q = c.order();
    let size = (q as u128)
        .checked_pow(n as u32)
        .and_then(|v| v.checked_mul(set.len() as u128))
        .ok_or(Error::Overflow)?;
    if size > cap {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }

    let h = channel.matrix();
    let amplitudes: Vec<f64> = pa.gamma().iter().map(|g| g.sqrt()).collect();
    // contributions[(j·Q + s)·M + i]: row i of antenna-power j carrying point s.
    let mut contributions = vec![Complex64::new(0.0, 0.0); n * q * m];
    // residuals[level·M + i] holds y minus the first `level` contributions.
    let mut residuals = vec![Complex64::new(0.0, 0.0); (n + 1) * m];
    residuals[..m].copy_from_slice(y.as_slice());
    let mut choice = vec![0usize; n];

    let mut best_cost = f64::INFINITY;
    let mut best: Option<(usize, Vec<usize>)> = None;

    for (pi, p) in set.iter().enumerate() {
        let inv = p.inverse();
        for (j, (&amp, &src)) in amplitudes.iter().zip(inv.as_slice()).enumerate() {
            let col = h.column(src);
            for s in 0..q {
                let z = c.point(s) * amp;
                let base = (j * q + s) * m;
                for i in 0..m {
                    contributions[base + i] = col[i] * z;
                }
            }
        }

        // Depth-first over symbol indices with running residuals.
        let mut level = 0;
        choice[0] = 0;
        loop {
            if choice[level] == q {
                if level == 0 {
                    break;
                }
                level -= 1;
                choice[level] += 1;
                continue;
            }
            let base = (level * q + choice[level]) * m;
            let (done, rest) = residuals.split_at_mut((level + 1) * m);
            let prev = &done[level * m..];
            let next = &mut rest[..m];
            for i in 0..m {
                next[i] = prev[i] - contributions[base + i];
            }
            if level + 1 == n {
                let cost: f64 = next.iter().map(|z| z.norm_sqr()).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best = Some((pi, choice.clone()));
                }
                choice[level] += 1;
            } else {
                level += 1;
                choice[level] = 0;
            }
        }
    }

    let (pi, symbols) = best.ok_or_else(|| {
        Error::InvalidArgument("received vector produced no finite ML cost".into())
    })?;
    Ok(DetectionResult::assemble(set, pi, symbols, c))
}

/// `(HᴴH)⁻¹·Hᴴ`, solved through a Cholesky factorization of the Gram matrix.
pub fn zf_pseudoinverse(h: &CMatrix) -> Result<CMatrix> {
    if h.ncols() > h.nrows() {
        return Err(Error::Unsupported(format!(
            "zero-forcing needs at least as many receive as transmit antennas ({} > {})",
            h.ncols(),
            h.nrows()
        )));
    }
    let gram = linalg::hermitian_part(&(h.adjoint() * h));
    let chol = linalg::cholesky(&gram).map_err(|_| Error::SingularChannel)?;
    let trace: f64 = (0..gram.nrows()).map(|k| gram[(k, k)].re).sum();
    let floor = gram.nrows() as f64 * f64::EPSILON * trace;
    let l = chol.l_dirty();
    if (0..gram.nrows()).any(|k| l[(k, k)].re.powi(2) <= floor) {
        return Err(Error::SingularChannel);
    }
    Ok(chol.solve(&h.adjoint()))
}

/// Equalizes with the channel pseudoinverse, picks the permutation with the
/// largest power-weighted energy `Σ_j γ_j·|(Pᵀ·ỹ)_j|²`, then slices each
/// de-permuted entry to the nearest constellation point.
pub fn detect_zf(
    y: &CVector,
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    c: &Constellation,
) -> Result<DetectionResult> {
    check_inputs(y, channel, set, pa)?;
    let pinv = zf_pseudoinverse(channel.matrix())?;
    let equalized = pinv * y;
    let energy: Vec<f64> = equalized.iter().map(|z| z.norm_sqr()).collect();
    let gamma = pa.gamma();

    let mut best_score = f64::NEG_INFINITY;
    let mut best_index = 0;
    for (pi, p) in set.iter().enumerate() {
        let score: f64 = p
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, &j)| gamma[j] * energy[k])
            .sum();
        if score > best_score {
            best_score = score;
            best_index = pi;
        }
    }

    let restored = set[best_index].scatter(equalized.as_slice());
    let symbols = restored.iter().map(|&z| c.nearest(z)).collect();
    Ok(DetectionResult::assemble(set, best_index, symbols, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Ml,
    Zf,
}

impl Detector {
    pub fn as_str(&self) -> &'static str {
        match self {
            Detector::Ml => "ml",
            Detector::Zf => "zf",
        }
    }

    pub fn detect(
        &self,
        y: &CVector,
        channel: &ChannelRealization,
        set: &[Permutation],
        pa: &PowerAllocation,
        c: &Constellation,
    ) -> Result<DetectionResult> {
        match self {
            Detector::Ml => detect_ml(y, channel, set, pa, c),
            Detector::Zf => detect_zf(y, channel, set, pa, c),
        }
    }
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Detector::Ml),
            "zf" => Ok(Detector::Zf),
            other => Err(Error::InvalidArgument(format!(
                "unknown detector '{other}'"
            ))),
        }
    }
}

fn check_positive(args: &[(&str, u128)]) -> Result<()> {
    for (name, v) in args {
        if *v == 0 {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    Ok(())
}

/// `r·Q^N·(N² + N + (2N − 1)·M + 3M − 1)`.
pub fn ml_flops(n: u32, m: u32, q: u32, r: u128) -> Result<u128> {
    let (n, m, q) = (u128::from(n), u128::from(m), u128::from(q));
    check_positive(&[("N", n), ("M", m), ("Q", q), ("r", r)])?;
    let per_hypothesis = n * n + n + (2 * n - 1) * m + 3 * m - 1;
    q.checked_pow(n as u32)
        .and_then(|v| v.checked_mul(r))
        .and_then(|v| v.checked_mul(per_hypothesis))
        .ok_or(Error::Overflow)
}

/// `4M³ + 2(N²M + (M − 1)N) + r(4M − 1) + 2NQ`.
pub fn zf_flops(n: u32, m: u32, q: u32, r: u128) -> Result<u128> {
    let (n, m, q) = (u128::from(n), u128::from(m), u128::from(q));
    check_positive(&[("N", n), ("M", m), ("Q", q), ("r", r)])?;
    let pinv = 4 * m * m * m + 2 * (n * n * m + (m - 1) * n);
    r.checked_mul(4 * m - 1)
        .and_then(|v| v.checked_add(pinv + 2 * n * q))
        .ok_or(Error::Overflow)
}

/// ZF count for a square channel, where the pseudoinverse is a plain
/// inverse: `4M³ + r(4M − 1) + 2MQ`.
pub fn zf_flops_square(m: u32, q: u32, r: u128) -> Result<u128> {
    let (m, q) = (u128::from(m), u128::from(q));
    check_positive(&[("M", m), ("Q", q), ("r", r)])?;
    r.checked_mul(4 * m - 1)
        .and_then(|v| v.checked_add(4 * m * m * m + 2 * m * q))
        .ok_or(Error::Overflow)
}

/// One row of a complexity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: u32,
    pub m: u32,
    pub q: u32,
    pub r: u128,
    pub ml_flops: u128,
    pub zf_flops: u128,
    /// Square-channel count, present only when `N = M`.
    pub zf_flops_direct: Option<u128>,
    pub ratio: f64,
}

/// Flop counts for `N` antennas with the usable set size `2^⌊log2 N!⌋`.
pub fn complexity_row(n: u32, m: u32, q: u32) -> Result<ComplexityRow> {
    let r = u128::from(crate::codec::split_bits(n as usize, 2)?.usable_permutations);
    let ml = ml_flops(n, m, q, r)?;
    let zf = zf_flops(n, m, q, r)?;
    Ok(ComplexityRow {
        n,
        m,
        q,
        r,
        ml_flops: ml,
        zf_flops: zf,
        zf_flops_direct: if n == m {
            Some(zf_flops_square(m, q, r)?)
        } else {
            None
        },
        ratio: ml as f64 / zf as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, transmit, NoiseModel};
    use crate::codec::{usable_permutations, FrameCodec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent brute force: enumerate every hypothesis, build `x` with
    /// the precoder and compare full residuals.
    fn brute_force_ml(
        y: &CVector,
        ch: &ChannelRealization,
        set: &[Permutation],
        pa: &PowerAllocation,
        c: &Constellation,
    ) -> (usize, Vec<usize>) {
        let n = pa.len();
        let q = c.order();
        let mut best = (f64::INFINITY, 0, vec![]);
        for (pi, p) in set.iter().enumerate() {
            for code in 0..q.pow(n as u32) {
                let idx: Vec<usize> = (0..n)
                    .map(|j| (code / q.pow((n - 1 - j) as u32)) % q)
                    .collect();
                let s: Vec<Complex64> = idx.iter().map(|&k| c.point(k)).collect();
                let x = crate::codec::precode(p, pa, &s).unwrap();
                let cost = (y - ch.matrix() * x).norm_squared();
                if cost < best.0 {
                    best = (cost, pi, idx);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn ml_matches_brute_force_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let c = Constellation::psk(4).unwrap();
        for &(n, m) in &[(2usize, 2usize), (3, 3), (3, 2), (2, 3)] {
            let set = usable_permutations(n).unwrap();
            let pa = PowerAllocation::generic(n, 2.0).unwrap();
            for _ in 0..30 {
                let ch = draw_channel(m, n, &mut rng);
                let y = NoiseModel::unit().draw(m, &mut rng);
                let got = detect_ml(&y, &ch, &set, &pa, &c).unwrap();
                let (pi, idx) = brute_force_ml(&y, &ch, &set, &pa, &c);
                assert_eq!((got.permutation_index, got.symbol_indices), (pi, idx));
            }
        }
    }

    #[test]
    fn noiseless_recovery_both_detectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 2..=4 {
            for q in [2, 4] {
                let c = Constellation::psk(q).unwrap();
                let codec = FrameCodec::new(n, c.clone()).unwrap();
                let set = usable_permutations(n).unwrap();
                let pa = PowerAllocation::generic(n, 1.0).unwrap();
                for _ in 0..40 {
                    let ch = draw_channel(n, n, &mut rng);
                    let bits: Vec<u8> = (0..codec.split().total_bits())
                        .map(|_| rng.random_range(0..2u8))
                        .collect();
                    let frame = codec.encode(&bits).unwrap();
                    let x = codec.precode(&frame, &pa).unwrap();
                    let y = transmit(&ch, &x, &NoiseModel::silent(), &mut rng).unwrap();
                    for det in [Detector::Ml, Detector::Zf] {
                        let out = det.detect(&y, &ch, &set, &pa, &c).unwrap();
                        assert_eq!(out.frame(), frame, "{det} N={n} Q={q}");
                        assert_eq!(out.bits, bits);
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_bpsk_reduces_to_sign() {
        let ch = ChannelRealization::new(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let c = Constellation::psk(2).unwrap();
        let set = vec![Permutation::identity(1)];
        let pa1 = PowerAllocation::new(vec![1.0], 1.0).unwrap();
        for (re, want) in [(0.3, 0usize), (-0.2, 1), (2.0, 0), (-5.0, 1)] {
            let y = CVector::from_element(1, Complex64::new(re, 0.4));
            let out = detect_ml(&y, &ch, &set, &pa1, &c).unwrap();
            assert_eq!(out.symbol_indices, vec![want]);
        }
    }

    #[test]
    fn ml_tie_goes_to_first_hypothesis() {
        let ch = ChannelRealization::new(CMatrix::zeros(2, 2));
        let c = Constellation::psk(4).unwrap();
        let set = usable_permutations(2).unwrap();
        let pa = PowerAllocation::generic(2, 1.0).unwrap();
        let out = detect_ml(&CVector::zeros(2), &ch, &set, &pa, &c).unwrap();
        assert_eq!(out.permutation_index, 0);
        assert_eq!(out.symbol_indices, vec![0, 0]);
    }

    #[test]
    fn ml_refuses_large_search_space() {
        let ch = ChannelRealization::new(CMatrix::identity(3, 3));
        let c = Constellation::psk(4).unwrap();
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 1.0).unwrap();
        let r = detect_ml_capped(&CVector::zeros(3), &ch, &set, &pa, &c, 100);
        assert!(matches!(
            r,
            Err(Error::SearchSpaceTooLarge {
                size: 256,
                cap: 100
            })
        ));
    }

    #[test]
    fn zf_limitations() {
        let c = Constellation::psk(4).unwrap();
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let wide = draw_channel(2, 3, &mut rng);
        assert!(matches!(
            detect_zf(&CVector::zeros(2), &wide, &set, &pa, &c),
            Err(Error::Unsupported(_))
        ));
        let mut h = CMatrix::identity(3, 3);
        h.set_column(2, &h.column(1).clone_owned());
        let singular = ChannelRealization::new(h);
        assert!(matches!(
            detect_zf(&CVector::zeros(3), &singular, &set, &pa, &c),
            Err(Error::SingularChannel)
        ));
    }

    #[test]
    fn identity_hypothesis_scores_highest() {
        // Score for identity on ỹ = Γ·s is Σγ²; the swap scores 2·γ₁·γ₂.
        let ch = ChannelRealization::new(CMatrix::identity(2, 2));
        let pa = PowerAllocation::new(vec![0.7, 0.3], 1.0).unwrap();
        let c = Constellation::psk(4).unwrap();
        let set = usable_permutations(2).unwrap();
        let y = CVector::from_vec(vec![c.point(1) * 0.7f64.sqrt(), c.point(3) * 0.3f64.sqrt()]);
        let out = detect_zf(&y, &ch, &set, &pa, &c).unwrap();
        assert_eq!(out.permutation_index, 0);
        assert_eq!(out.symbol_indices, vec![1, 3]);
        assert!(0.7f64.powi(2) + 0.3f64.powi(2) > 2.0 * 0.7 * 0.3);
    }

    #[test]
    fn zf_noise_covariance_is_inverse_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let ch = draw_channel(4, 3, &mut rng);
        let pinv = zf_pseudoinverse(ch.matrix()).unwrap();
        let trials = 100_000;
        let mut cov = CMatrix::zeros(3, 3);
        for _ in 0..trials {
            let w = &pinv * NoiseModel::unit().draw(4, &mut rng);
            cov += &w * w.adjoint();
        }
        cov /= Complex64::new(trials as f64, 0.0);
        let expect = (ch.matrix().adjoint() * ch.matrix()).try_inverse().unwrap();
        let rel = linalg::frobenius(&(cov - &expect)) / linalg::frobenius(&expect);
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn flop_formulas_by_hand() {
        assert_eq!(ml_flops(4, 4, 4, 16).unwrap(), 16 * 256 * 59);
        assert_eq!(ml_flops(4, 4, 4, 16).unwrap(), 241_664);
        // 4·64 + 2·(16·4 + 3·4) + 16·15 + 2·4·4
        assert_eq!(zf_flops(4, 4, 4, 16).unwrap(), 256 + 152 + 240 + 32);
        assert_eq!(zf_flops(4, 4, 4, 16).unwrap(), 680);
        assert_eq!(zf_flops_square(4, 4, 16).unwrap(), 256 + 240 + 32);
        assert!(ml_flops(0, 4, 4, 16).is_err());
        assert!(matches!(ml_flops(200, 4, 1 << 20, 1), Err(Error::Overflow)));
    }

    #[test]
    fn ratio_grows_with_antennas_and_order() {
        let rows: Vec<_> = (2..=8).map(|n| complexity_row(n, 4, 4).unwrap()).collect();
        for w in rows.windows(2) {
            assert!(w[1].ratio > w[0].ratio);
        }
        assert_eq!(rows[6].r, 1 << 15);
        assert!(rows[6].ratio > 3.1e5);
        let by_q: Vec<_> = [2, 4, 8, 16, 32]
            .iter()
            .map(|&q| complexity_row(4, 4, q).unwrap())
            .collect();
        for w in by_q.windows(2) {
            assert!(w[1].ratio > w[0].ratio);
        }
        for m in 1..=8 {
            let r = complexity_row(m, m, 4).unwrap();
            assert!(r.zf_flops >= r.zf_flops_direct.unwrap());
        }
    }
}
