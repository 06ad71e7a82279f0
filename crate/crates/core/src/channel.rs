//! Rayleigh channel draws, additive noise and the forward model `y = Hx + n`.
//!
//! Noise is always circularly-symmetric with identity covariance; SNR
//! sweeps scale the transmit power instead, so `SNR(dB) = 10·log10(ρ)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::types::ChannelRealization;

/// Total transmit power for a given SNR in dB under unit-variance noise.
pub fn snr_db_to_power(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// One `CN(0, 1)` draw: real and imaginary parts each have variance 1/2.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// I.i.d. `CN(0, 1)` entries, drawn row by row.
pub fn draw_channel<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> ChannelRealization {
    let entries: Vec<Complex64> = (0..m * n).map(|_| complex_gaussian(rng)).collect();
    ChannelRealization::new(CMatrix::from_row_slice(m, n, &entries))
}

/// Additive white noise with per-component variance `scale²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    scale: f64,
}

impl NoiseModel {
    /// `n ~ CN(0, I)`.
    pub const fn unit() -> Self {
        Self { scale: 1.0 }
    }

    /// No noise at all; `transmit` returns `H·x` exactly.
    pub const fn silent() -> Self {
        Self { scale: 0.0 }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> CVector {
        if self.scale == 0.0 {
            return CVector::zeros(m);
        }
        CVector::from_iterator(m, (0..m).map(|_| complex_gaussian(rng) * self.scale))
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::unit()
    }
}

pub fn transmit<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    x: &CVector,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CVector> {
    if x.len() != channel.tx() {
        return Err(Error::DimensionMismatch {
            expected: channel.tx(),
            found: x.len(),
        });
    }
    Ok(channel.matrix() * x + noise.draw(channel.rx(), rng))
}

/// `ỹ = Uᴴ·y`, turning the SVD-precoded link into parallel subchannels.
pub fn csit_postprocess(channel: &ChannelRealization, y: &CVector) -> Result<CVector> {
    let svd = channel.svd()?;
    if y.len() != svd.u.nrows() {
        return Err(Error::DimensionMismatch {
            expected: svd.u.nrows(),
            found: y.len(),
        });
    }
    Ok(svd.u.adjoint() * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{bits_to_permutation, precode, precode_csit};
    use crate::types::{Permutation, PowerAllocation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channel_entries_are_unit_variance_and_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut power = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            let h = draw_channel(1, 1, &mut rng);
            let z = h.matrix()[(0, 0)];
            power += z.norm_sqr();
            mean += z;
        }
        power /= n as f64;
        mean /= n as f64;
        assert!((power - 1.0).abs() < 0.02, "power {power}");
        // Each part has std 1/sqrt(2); 3σ bound on the sample mean.
        let bound = 3.0 * (0.5f64 / n as f64).sqrt();
        assert!(
            mean.re.abs() < bound && mean.im.abs() < bound,
            "mean {mean}"
        );
    }

    #[test]
    fn same_seed_same_channel() {
        let a = draw_channel(3, 4, &mut ChaCha8Rng::seed_from_u64(42));
        let b = draw_channel(3, 4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn noiseless_identity_channel_passes_input() {
        let ch = ChannelRealization::new(CMatrix::identity(3, 3));
        let x = CVector::from_vec(vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, 3.0),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = transmit(&ch, &x, &NoiseModel::silent(), &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(transmit(&ch, &CVector::zeros(2), &NoiseModel::unit(), &mut rng).is_err());
    }

    #[test]
    fn zero_input_gives_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = draw_channel(2, 2, &mut rng);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let y = transmit(&ch, &CVector::zeros(2), &NoiseModel::unit(), &mut a).unwrap();
        assert_eq!(y, NoiseModel::unit().draw(2, &mut b));
    }

    #[test]
    fn received_energy_matches_trace_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = draw_channel(3, 3, &mut rng);
        let pa = PowerAllocation::generic(3, 2.0).unwrap();
        let s = vec![Complex64::new(1.0, 0.0); 3];
        let x = precode(&Permutation::identity(3), &pa, &s).unwrap();
        // Fixed x: E‖y‖² = ‖Hx‖² + M.
        let expected = (ch.matrix() * &x).norm_squared() + 3.0;
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += transmit(&ch, &x, &NoiseModel::unit(), &mut rng)
                .unwrap()
                .norm_squared();
        }
        let got = acc / trials as f64;
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn csit_path_gives_parallel_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channel(3, 3, &mut rng);
        let pa = PowerAllocation::generic(3, 1.5).unwrap();
        let p = bits_to_permutation(3, 3).unwrap();
        let s: Vec<Complex64> = (0..3)
            .map(|k| Complex64::from_polar(1.0, 0.4 + k as f64))
            .collect();
        let x = precode_csit(&p, &pa, &s, &ch).unwrap();
        let plain = precode(&p, &pa, &s).unwrap();
        assert!((x.norm() - plain.norm()).abs() < 1e-12);

        let y = transmit(&ch, &x, &NoiseModel::silent(), &mut rng).unwrap();
        let yt = csit_postprocess(&ch, &y).unwrap();
        let lambda = &ch.svd().unwrap().singular_values;
        for k in 0..3 {
            let i = p.as_slice()[k];
            let expect = s[i] * pa.gamma()[i].sqrt() * lambda[k];
            assert!(
                (yt[k] - expect).norm() < 1e-10,
                "{k}: {} vs {}",
                yt[k],
                expect
            );
        }
    }

    #[test]
    fn identity_u_leaves_output_unchanged() {
        let ch = ChannelRealization::new(CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
        ])));
        let y = CVector::from_vec(vec![Complex64::new(0.3, -1.0), Complex64::new(4.0, 0.5)]);
        let yt = csit_postprocess(&ch, &y).unwrap();
        assert!((yt - y).norm() < 1e-14);
    }

    #[test]
    fn rotated_noise_stays_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = draw_channel(3, 3, &mut rng);
        let trials = 100_000;
        let mut cov = CMatrix::zeros(3, 3);
        for _ in 0..trials {
            let n = NoiseModel::unit().draw(3, &mut rng);
            let r = csit_postprocess(&ch, &n).unwrap();
            cov += &r * r.adjoint();
        }
        cov /= Complex64::new(trials as f64, 0.0);
        let err = (cov - CMatrix::identity(3, 3)).norm() / 3f64.sqrt();
        assert!(err < 0.02, "relative error {err}");
    }
}
