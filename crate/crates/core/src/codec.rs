//! Bitstream to transmit-vector mapping.
//!
//! Each channel use consumes `a + b` bits: the first `a = N·log2(Q)` bits
//! pick one Gray-labelled PSK point per antenna (antenna-major, most
//! significant bit first) and the last `b = ⌊log2 N!⌋` bits pick the
//! permutation of lexicographic rank equal to their value. Only the first
//! `r = 2^b` permutations are ever used.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::types::{ChannelRealization, Constellation, Permutation, PowerAllocation};

/// Largest antenna count whose factorial fits in a `u64`.
pub const MAX_ANTENNAS: usize = 20;

/// Largest usable-permutation set that [`usable_permutations`] will build.
pub const MAX_ENUMERATED_PERMUTATIONS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBlockSplit {
    /// Bits carried by the constellation symbols, `N·log2(Q)`.
    pub symbol_bits: u32,
    /// Bits carried by the permutation, `⌊log2 N!⌋`.
    pub permutation_bits: u32,
    /// Number of usable permutations, `2^b`.
    pub usable_permutations: u64,
}

impl BitBlockSplit {
    pub fn total_bits(&self) -> u32 {
        self.symbol_bits + self.permutation_bits
    }
}

pub fn factorial(n: usize) -> Result<u64> {
    if n > MAX_ANTENNAS {
        return Err(Error::InvalidArgument(format!(
            "antenna count {n} exceeds supported maximum {MAX_ANTENNAS}"
        )));
    }
    Ok((1..=n as u64).product())
}

pub fn split_bits(n: usize, q: usize) -> Result<BitBlockSplit> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one antenna".into()));
    }
    if q < 2 || !q.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "modulation order {q} must be a power of two >= 2"
        )));
    }
    let fact = factorial(n)?;
    let b = 63 - fact.leading_zeros();
    Ok(BitBlockSplit {
        symbol_bits: n as u32 * q.trailing_zeros(),
        permutation_bits: b,
        usable_permutations: 1u64 << b,
    })
}

/// Permutation of `0..n` with the given lexicographic rank (Lehmer code
/// decoding in the factorial number system).
pub fn unrank_permutation(rank: u64, n: usize) -> Result<Permutation> {
    let total = factorial(n)?;
    if rank >= total {
        return Err(Error::OutOfRange {
            value: rank,
            limit: total,
        });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rest = rank;
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = factorial(k)?;
        let digit = (rest / f) as usize;
        rest %= f;
        out.push(pool.remove(digit));
    }
    Permutation::new(out)
}

pub fn rank_permutation(p: &Permutation) -> u64 {
    let n = p.len();
    let mut rank = 0u64;
    let mut used = vec![false; n];
    let mut fact: u64 = (1..n as u64).product();
    for (k, &v) in p.as_slice().iter().enumerate() {
        let smaller_unused = used[..v].iter().filter(|u| !**u).count() as u64;
        rank += smaller_unused * fact;
        used[v] = true;
        if k + 1 < n {
            fact /= (n - 1 - k) as u64;
        }
    }
    rank
}

pub fn bits_to_permutation(word: u64, n: usize) -> Result<Permutation> {
    let split = split_bits(n, 2)?;
    if word >= split.usable_permutations {
        return Err(Error::OutOfRange {
            value: word,
            limit: split.usable_permutations,
        });
    }
    unrank_permutation(word, n)
}

pub fn permutation_to_bits(p: &Permutation) -> Result<u64> {
    let split = split_bits(p.len(), 2)?;
    let rank = rank_permutation(p);
    if rank >= split.usable_permutations {
        return Err(Error::OutOfRange {
            value: rank,
            limit: split.usable_permutations,
        });
    }
    Ok(rank)
}

/// The usable permutation set, in rank order.
pub fn usable_permutations(n: usize) -> Result<Vec<Permutation>> {
    let split = split_bits(n, 2)?;
    if split.usable_permutations > MAX_ENUMERATED_PERMUTATIONS {
        return Err(Error::Unsupported(format!(
            "{} permutations is too many to enumerate",
            split.usable_permutations
        )));
    }
    (0..split.usable_permutations)
        .map(|w| unrank_permutation(w, n))
        .collect()
}

/// Packs bits (each 0 or 1, most significant first) into an integer.
pub fn bits_to_word(bits: &[u8]) -> u64 {
    bits.iter()
        .fold(0u64, |acc, &b| (acc << 1) | u64::from(b & 1))
}

pub fn word_to_bits(word: u64, width: u32) -> Vec<u8> {
    (0..width).rev().map(|i| ((word >> i) & 1) as u8).collect()
}

/// Constellation point indices for `n` antennas.
pub fn symbol_indices(bits: &[u8], c: &Constellation, n: usize) -> Result<Vec<usize>> {
    let m = c.bits_per_symbol() as usize;
    if bits.len() != n * m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            found: bits.len(),
        });
    }
    Ok(bits
        .chunks(m)
        .map(|chunk| c.index_of_label(bits_to_word(chunk) as u32))
        .collect())
}

pub fn modulate_symbols(bits: &[u8], c: &Constellation, n: usize) -> Result<Vec<Complex64>> {
    Ok(symbol_indices(bits, c, n)?
        .into_iter()
        .map(|k| c.point(k))
        .collect())
}

/// Inverse of [`symbol_indices`].
pub fn demodulate_indices(indices: &[usize], c: &Constellation) -> Vec<u8> {
    let m = c.bits_per_symbol();
    indices
        .iter()
        .flat_map(|&k| word_to_bits(u64::from(c.label(k)), m))
        .collect()
}

/// `x = P·Γ·s`: entry `k` is `√γ_{p[k]}·s_{p[k]}`.
pub fn precode(p: &Permutation, pa: &PowerAllocation, s: &[Complex64]) -> Result<CVector> {
    if p.len() != pa.len() || s.len() != pa.len() {
        return Err(Error::DimensionMismatch {
            expected: pa.len(),
            found: if p.len() != pa.len() {
                p.len()
            } else {
                s.len()
            },
        });
    }
    let scaled: Vec<Complex64> = pa
        .gamma()
        .iter()
        .zip(s)
        .map(|(g, z)| z * g.sqrt())
        .collect();
    Ok(CVector::from_vec(p.gather(&scaled)))
}

/// `x = V·P·Γ·s` using the right singular vectors of a square channel.
pub fn precode_csit(
    p: &Permutation,
    pa: &PowerAllocation,
    s: &[Complex64],
    channel: &ChannelRealization,
) -> Result<CVector> {
    let svd = channel.svd()?;
    let x = precode(p, pa, s)?;
    if svd.v.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: svd.v.ncols(),
            found: x.len(),
        });
    }
    Ok(&svd.v * x)
}

/// One channel use worth of modulated data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub permutation: Permutation,
    pub symbols: Vec<usize>,
}

/// Encoder/decoder for a fixed antenna count and constellation.
#[derive(Clone, Debug)]
pub struct FrameCodec {
    n: usize,
    constellation: Constellation,
    split: BitBlockSplit,
}

impl FrameCodec {
    pub fn new(n: usize, constellation: Constellation) -> Result<Self> {
        let split = split_bits(n, constellation.order())?;
        Ok(Self {
            n,
            constellation,
            split,
        })
    }

    pub fn antennas(&self) -> usize {
        self.n
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn split(&self) -> BitBlockSplit {
        self.split
    }

    /// Maps `a + b` bits (symbol block first) to a frame.
    pub fn encode(&self, bits: &[u8]) -> Result<Frame> {
        let total = self.split.total_bits() as usize;
        if bits.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                found: bits.len(),
            });
        }
        let (sym_bits, perm_bits) = bits.split_at(self.split.symbol_bits as usize);
        Ok(Frame {
            permutation: bits_to_permutation(bits_to_word(perm_bits), self.n)?,
            symbols: symbol_indices(sym_bits, &self.constellation, self.n)?,
        })
    }

    pub fn decode(&self, frame: &Frame) -> Result<Vec<u8>> {
        let mut bits = demodulate_indices(&frame.symbols, &self.constellation);
        let word = permutation_to_bits(&frame.permutation)?;
        bits.extend(word_to_bits(word, self.split.permutation_bits));
        Ok(bits)
    }

    pub fn symbols(&self, frame: &Frame) -> Vec<Complex64> {
        frame
            .symbols
            .iter()
            .map(|&k| self.constellation.point(k))
            .collect()
    }

    pub fn precode(&self, frame: &Frame, pa: &PowerAllocation) -> Result<CVector> {
        precode(&frame.permutation, pa, &self.symbols(frame))
    }
}
