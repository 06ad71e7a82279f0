//! Monte Carlo sweeps: symbol error rates and ensemble-average rates.
//!
//! Every trial draws from its own stream, keyed by `(master seed, SNR point,
//! trial)` through SHA-256, so results do not depend on thread scheduling.
//! Within one SER point the streams ignore the detector and power preset:
//! runs that differ only in those see the same channels, bits and noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{draw_channel, snr_db_to_power, transmit, NoiseModel};
use crate::codec::{usable_permutations, FrameCodec};
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::gmm::uniform_weights;
use crate::optpower::{optimize_power, OptimizerConfig};
use crate::rate::{self, csit_refined, RateResult, Scheme};
use crate::types::{default_power_allocation, Constellation, PowerAllocation, PA2_N4};

/// Smallest SER sample size, in bits per SNR point.
pub const MIN_BITS_PER_POINT: u64 = 10_000;

const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Independent, reproducible random stream for one trial of one SNR point.
/// `(seed, 0, 0)` is the canonical regression stream.
pub fn derive_stream(master_seed: u64, point_index: u64, trial_index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"pmm-stream");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(point_index.to_le_bytes());
    hasher.update(trial_index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Inclusive SNR grid `start, start + step, …, ≤ stop`, in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SnrGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let grid = Self { start, stop, step };
        grid.validate()?;
        Ok(grid)
    }

    pub fn single(snr_db: f64) -> Self {
        Self {
            start: snr_db,
            stop: snr_db,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() || !self.step.is_finite() {
            return Err(Error::InvalidArgument("SNR grid must be finite".into()));
        }
        if self.stop < self.start {
            return Err(Error::InvalidArgument(format!(
                "SNR grid stop {} below start {}",
                self.stop, self.start
            )));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(Error::InvalidArgument(
                "SNR grid step must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

impl FromStr for SnrGrid {
    type Err = Error;

    /// Parses `start:stop:step`, `start:stop` (step 1) or a single value.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad SNR grid '{s}'")))
            })
            .collect::<Result<_>>()?;
        match parts[..] {
            [v] => Ok(Self::single(v)),
            [a, b] => Self::new(a, b, 1.0),
            [a, b, c] => Self::new(a, b, c),
            _ => Err(Error::InvalidArgument(format!("bad SNR grid '{s}'"))),
        }
    }
}

impl fmt::Display for SnrGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Per-antenna power, as fractions of the total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PowerPreset {
    /// The tabulated generic allocation.
    Table2,
    /// The sparser 4-antenna allocation.
    Pa2,
    /// Per-channel optimized powers on the SVD-precoded link.
    Optimized,
    /// Fractions read from a file.
    File { path: String, fractions: Vec<f64> },
}

impl PowerPreset {
    pub fn label(&self) -> &'static str {
        match self {
            PowerPreset::Table2 => "table2",
            PowerPreset::Pa2 => "pa2",
            PowerPreset::Optimized => "optimized",
            PowerPreset::File { .. } => "file",
        }
    }

    /// Fixed allocation at total power `rho`; the optimized preset yields
    /// its starting point.
    pub fn allocation(&self, n: usize, rho: f64) -> Result<PowerAllocation> {
        match self {
            PowerPreset::Table2 | PowerPreset::Optimized => default_power_allocation(n, rho),
            PowerPreset::Pa2 => {
                if n != PA2_N4.len() {
                    return Err(Error::InvalidArgument(format!(
                        "the pa2 allocation is defined for 4 antennas, not {n}"
                    )));
                }
                PowerAllocation::pa2(rho)
            }
            PowerPreset::File { fractions, .. } => {
                if fractions.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: fractions.len(),
                    });
                }
                PowerAllocation::from_fractions(fractions, rho)
            }
        }
    }
}

/// Everything needed to reproduce one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scheme: Scheme,
    pub tx: usize,
    pub rx: usize,
    pub mod_order: usize,
    pub detector: Detector,
    pub power: PowerPreset,
    pub snr: SnrGrid,
    pub bits_per_point: u64,
    pub channels_per_point: usize,
    pub master_seed: u64,
    /// Evaluate PMM rates on the SVD-precoded parallel channel.
    #[serde(default)]
    pub csit: bool,
    /// Active antennas for the GSM baseline; `N/2` when absent.
    #[serde(default)]
    pub gsm_active: Option<usize>,
    /// Keep each channel's rate in the results, not just the mean.
    #[serde(default)]
    pub keep_per_channel: bool,
}

impl SweepSpec {
    pub fn new(tx: usize, rx: usize) -> Self {
        Self {
            scheme: Scheme::Pmm,
            tx,
            rx,
            mod_order: 4,
            detector: Detector::Ml,
            power: PowerPreset::Table2,
            snr: SnrGrid::single(10.0),
            bits_per_point: 100_000,
            channels_per_point: 500,
            master_seed: 0,
            csit: false,
            gsm_active: None,
            keep_per_channel: false,
        }
    }

    fn validate_common(&self) -> Result<()> {
        self.snr.validate()?;
        if self.tx == 0 || self.rx == 0 {
            return Err(Error::InvalidArgument(
                "antenna counts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_ser(&self) -> Result<()> {
        self.validate_common()?;
        if self.scheme != Scheme::Pmm {
            return Err(Error::Unsupported(format!(
                "symbol error rate is simulated for pmm only, not {}",
                self.scheme
            )));
        }
        if self.detector == Detector::Zf && self.tx > self.rx {
            return Err(Error::Unsupported(format!(
                "zero-forcing needs N <= M, got N = {} and M = {}",
                self.tx, self.rx
            )));
        }
        if self.power == PowerPreset::Optimized {
            return Err(Error::Unsupported(
                "optimized powers apply to rate sweeps only".into(),
            ));
        }
        if self.bits_per_point < MIN_BITS_PER_POINT {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_BITS_PER_POINT} bits per point required, got {}",
                self.bits_per_point
            )));
        }
        Constellation::psk(self.mod_order)?;
        Ok(())
    }

    pub fn validate_rate(&self) -> Result<()> {
        self.validate_common()?;
        if self.channels_per_point == 0 {
            return Err(Error::InvalidArgument(
                "need at least one channel per point".into(),
            ));
        }
        let csit = self.csit || self.power == PowerPreset::Optimized;
        if csit && (self.scheme != Scheme::Pmm || self.tx != self.rx) {
            return Err(Error::Unsupported(
                "the SVD-precoded link needs the pmm scheme with N = M".into(),
            ));
        }
        Ok(())
    }
}

/// Empirical error rates at one SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerPoint {
    pub snr_db: f64,
    /// Channel uses where the permutation or any symbol was wrong.
    pub symbol_errors: u64,
    pub symbols_sent: u64,
    pub ser: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Wrong permutation decisions.
    pub permutation_errors: u64,
    /// Wrong individual constellation symbols, out of `N·symbols_sent`.
    pub entry_errors: u64,
    pub entries_sent: u64,
}

impl SerPoint {
    pub fn entry_error_rate(&self) -> f64 {
        self.entry_errors as f64 / self.entries_sent as f64
    }

    pub fn permutation_error_rate(&self) -> f64 {
        self.permutation_errors as f64 / self.symbols_sent as f64
    }

    pub fn wilson_width(&self) -> f64 {
        self.wilson_high - self.wilson_low
    }
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if k == 0.0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if p == 1.0 {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (low, high)
}

#[derive(Clone, Copy, Default)]
struct ErrorTally {
    tuples: u64,
    permutations: u64,
    entries: u64,
}

impl ErrorTally {
    fn add(self, other: Self) -> Self {
        Self {
            tuples: self.tuples + other.tuples,
            permutations: self.permutations + other.permutations,
            entries: self.entries + other.entries,
        }
    }
}

pub fn run_ser(spec: &SweepSpec) -> Result<Vec<SerPoint>> {
    spec.validate_ser()?;
    let constellation = Constellation::psk(spec.mod_order)?;
    let codec = FrameCodec::new(spec.tx, constellation.clone())?;
    let set = usable_permutations(spec.tx)?;
    let bits_per_use = u64::from(codec.split().total_bits());
    let symbols = spec.bits_per_point.div_ceil(bits_per_use);

    spec.snr
        .points()
        .into_iter()
        .enumerate()
        .map(|(point, snr_db)| {
            let pa = spec.power.allocation(spec.tx, snr_db_to_power(snr_db))?;
            let tally = (0..symbols)
                .into_par_iter()
                .map(|trial| -> Result<ErrorTally> {
                    let mut rng = derive_stream(spec.master_seed, point as u64, trial);
                    let channel = draw_channel(spec.rx, spec.tx, &mut rng);
                    let bits: Vec<u8> = (0..bits_per_use)
                        .map(|_| rng.random_range(0..2u8))
                        .collect();
                    let frame = codec.encode(&bits)?;
                    let x = codec.precode(&frame, &pa)?;
                    let y = transmit(&channel, &x, &NoiseModel::unit(), &mut rng)?;
                    let out = spec
                        .detector
                        .detect(&y, &channel, &set, &pa, &constellation)?;
                    let perm_wrong = out.permutation != frame.permutation;
                    let entries = out
                        .symbol_indices
                        .iter()
                        .zip(&frame.symbols)
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    Ok(ErrorTally {
                        tuples: u64::from(perm_wrong || entries > 0),
                        permutations: u64::from(perm_wrong),
                        entries,
                    })
                })
                .try_reduce(ErrorTally::default, |a, b| Ok(a.add(b)))?;
            let (wilson_low, wilson_high) = wilson_interval(tally.tuples, symbols);
            Ok(SerPoint {
                snr_db,
                symbol_errors: tally.tuples,
                symbols_sent: symbols,
                ser: tally.tuples as f64 / symbols as f64,
                wilson_low,
                wilson_high,
                permutation_errors: tally.permutations,
                entry_errors: tally.entries,
                entries_sent: symbols * spec.tx as u64,
            })
        })
        .collect()
}

/// Ensemble-average rate per SNR point. Channel `c` comes from stream
/// `(seed, 0, c)` and is shared by every SNR point and every scheme.
pub fn run_rate(spec: &SweepSpec) -> Result<Vec<RateResult>> {
    spec.validate_rate()?;
    let set = if matches!(spec.scheme, Scheme::Pmm | Scheme::PmmCapacity) {
        usable_permutations(spec.tx)?
    } else {
        Vec::new()
    };
    let weights = uniform_weights(set.len().max(1));
    let channels: Vec<_> = (0..spec.channels_per_point)
        .map(|c| {
            draw_channel(
                spec.rx,
                spec.tx,
                &mut derive_stream(spec.master_seed, 0, c as u64),
            )
        })
        .collect();
    let csit = spec.csit || spec.power == PowerPreset::Optimized;
    let cfg = OptimizerConfig::default();

    spec.snr
        .points()
        .into_iter()
        .map(|snr_db| {
            let rho = snr_db_to_power(snr_db);
            let values = channels
                .par_iter()
                .map(|ch| -> Result<f64> {
                    match spec.scheme {
                        Scheme::Pmm if spec.power == PowerPreset::Optimized => {
                            Ok(optimize_power(ch, &set, &weights, rho, &cfg)?.rate)
                        }
                        Scheme::Pmm if csit => {
                            let pa = spec.power.allocation(spec.tx, rho)?;
                            Ok(csit_refined(ch, &set, pa.gamma(), &weights)?.0)
                        }
                        Scheme::Pmm => {
                            let pa = spec.power.allocation(spec.tx, rho)?;
                            rate::pmm_rate(ch, &set, &pa, &weights)
                        }
                        Scheme::PmmCapacity => {
                            rate::capacity(ch, &spec.power.allocation(spec.tx, rho)?)
                        }
                        Scheme::Sm => {
                            let t = rate::sm_covariances(spec.tx, rho).len();
                            rate::sm_rate(ch, rho, &uniform_weights(t))
                        }
                        Scheme::Gsm => {
                            let active = spec.gsm_active.unwrap_or((spec.tx / 2).max(1));
                            let v = rate::gsm_covariances(spec.tx, active, rho)?.len();
                            rate::gsm_rate(ch, rho, active, &uniform_weights(v))
                        }
                        Scheme::VblastCapacity => rate::vblast_capacity(ch, rho),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(RateResult::from_samples(
                spec.scheme.as_str(),
                snr_db,
                values,
                spec.keep_per_channel,
            ))
        })
        .collect()
}
