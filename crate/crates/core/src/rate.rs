//! Achievable rates and capacities, all in bits per channel use.
//!
//! Every mixture-based rate has the same shape,
//! `Σ_i α_i·(log2(1/α_i) + log2 det(I + H·C_i·Hᴴ))`, tightened by the merge
//! refinement in [`crate::gmm`]. Schemes differ only in their covariance
//! sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{self, covariance_diagonals, receive_mixture};
use crate::linalg;
use crate::types::{ChannelRealization, Permutation, PowerAllocation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Pmm,
    PmmCapacity,
    Sm,
    Gsm,
    VblastCapacity,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Pmm => "pmm",
            Scheme::PmmCapacity => "pmm-capacity",
            Scheme::Sm => "sm",
            Scheme::Gsm => "gsm",
            Scheme::VblastCapacity => "vblast-capacity",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pmm" => Scheme::Pmm,
            "pmm-capacity" => Scheme::PmmCapacity,
            "sm" => Scheme::Sm,
            "gsm" => Scheme::Gsm,
            "vblast-capacity" | "vblast" => Scheme::VblastCapacity,
            other => return Err(Error::InvalidArgument(format!("unknown scheme '{other}'"))),
        })
    }
}

/// Ensemble-average rate at one SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub scheme: String,
    pub snr_db: f64,
    pub bits_per_channel_use: f64,
    pub stderr: f64,
    pub channel_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_channel_values: Option<Vec<f64>>,
}

impl RateResult {
    pub fn from_samples(
        scheme: impl Into<String>,
        snr_db: f64,
        values: Vec<f64>,
        keep: bool,
    ) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            scheme: scheme.into(),
            snr_db,
            bits_per_channel_use: mean,
            stderr,
            channel_count: n,
            per_channel_values: keep.then_some(values),
        }
    }
}

/// Unrefined and refined values of one mixture rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBreakdown {
    pub refined: f64,
    pub unrefined: f64,
    /// Leading components merged at the minimizing stage.
    pub best_stage: usize,
}

/// Mixture rate for arbitrary diagonal transmit covariances.
pub fn mixture_rate(
    channel: &ChannelRealization,
    diagonals: &[Vec<f64>],
    weights: &[f64],
) -> Result<RateBreakdown> {
    let mix = receive_mixture(channel, diagonals, weights)?;
    let r = gmm::refine_rate(&mix)?;
    Ok(RateBreakdown {
        refined: r.bound,
        unrefined: r.unrefined,
        best_stage: r.best_stage,
    })
}

pub fn pmm_rate_detail(
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    weights: &[f64],
) -> Result<RateBreakdown> {
    check_tx(channel, pa.len())?;
    mixture_rate(channel, &covariance_diagonals(set, pa.gamma()), weights)
}

/// Refined PMM achievable rate.
pub fn pmm_rate(
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    weights: &[f64],
) -> Result<f64> {
    Ok(pmm_rate_detail(channel, set, pa, weights)?.refined)
}

/// `log2 det(I + H·diag(γ)·Hᴴ)`.
pub fn capacity(channel: &ChannelRealization, pa: &PowerAllocation) -> Result<f64> {
    check_tx(channel, pa.len())?;
    gaussian_rate(channel, pa.gamma())
}

fn gaussian_rate(channel: &ChannelRealization, diag: &[f64]) -> Result<f64> {
    linalg::log2_det_hpd(&linalg::identity_plus_sandwich(channel.matrix(), diag))
}

/// Equal-power Gaussian capacity `log2 det(I + (ρ/N)·H·Hᴴ)`.
pub fn vblast_capacity(channel: &ChannelRealization, rho: f64) -> Result<f64> {
    let n = channel.tx();
    gaussian_rate(channel, &vec![rho / n as f64; n])
}

fn check_tx(channel: &ChannelRealization, n: usize) -> Result<()> {
    if channel.tx() != n {
        return Err(Error::DimensionMismatch {
            expected: channel.tx(),
            found: n,
        });
    }
    Ok(())
}

fn floor_pow2(v: u64) -> u64 {
    if v == 0 {
        0
    } else {
        1 << (63 - v.leading_zeros())
    }
}

/// One single-antenna covariance at full power per transmit antenna.
pub fn sm_covariances(n: usize, rho: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = rho;
            d
        })
        .collect()
}

/// Equal-power covariances `ρ/n_act` on each of the first
/// `2^⌊log2 C(N, n_act)⌋` antenna subsets in lexicographic order.
pub fn gsm_covariances(n: usize, active: usize, rho: f64) -> Result<Vec<Vec<f64>>> {
    if active == 0 || active > n {
        return Err(Error::InvalidArgument(format!(
            "active antenna count {active} outside [1, {n}]"
        )));
    }
    let total = binomial(n as u64, active as u64);
    let v = floor_pow2(total) as usize;
    let mut out = Vec::with_capacity(v);
    let mut combo: Vec<usize> = (0..active).collect();
    while out.len() < v {
        let mut d = vec![0.0; n];
        for &i in &combo {
            d[i] = rho / active as f64;
        }
        out.push(d);
        // Advance to the next subset in lexicographic order.
        let Some(pos) = (0..active).rev().find(|&i| combo[i] < n - active + i) else {
            break;
        };
        combo[pos] += 1;
        for i in pos + 1..active {
            combo[i] = combo[i - 1] + 1;
        }
    }
    Ok(out)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

pub fn sm_rate(channel: &ChannelRealization, rho: f64, weights: &[f64]) -> Result<f64> {
    Ok(mixture_rate(channel, &sm_covariances(channel.tx(), rho), weights)?.refined)
}

pub fn gsm_rate(
    channel: &ChannelRealization,
    rho: f64,
    active: usize,
    weights: &[f64],
) -> Result<f64> {
    Ok(mixture_rate(
        channel,
        &gsm_covariances(channel.tx(), active, rho)?,
        weights,
    )?
    .refined)
}

/// Number of components merged at the head of the mixture when forming the
/// tight bound on the parallel channel (1 means nothing merged).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub merged: usize,
}

fn squared_singular_values(channel: &ChannelRealization) -> Result<Vec<f64>> {
    Ok(channel
        .svd()?
        .singular_values
        .iter()
        .map(|l| l * l)
        .collect())
}

/// Parallel-channel rate `Σ_j α_j·(log2(1/α_j) + Σ_k log2(1 + λ_k²·γ_{p_j[k]}))`.
pub fn csit_rate(
    channel: &ChannelRealization,
    set: &[Permutation],
    pa: &PowerAllocation,
    weights: &[f64],
) -> Result<f64> {
    r_tight_csit(channel, set, pa.gamma(), weights, MergeSpec { merged: 1 })
}

/// Tight parallel-channel bound with the first `merge.merged` components
/// merged into one block `X` and the rest left as the unmerged tail `Y`.
pub fn r_tight_csit(
    channel: &ChannelRealization,
    set: &[Permutation],
    gamma: &[f64],
    weights: &[f64],
    merge: MergeSpec,
) -> Result<f64> {
    check_tx(channel, gamma.len())?;
    let lambda_sq = squared_singular_values(channel)?;
    let r = set.len();
    if weights.len() != r || merge.merged == 0 || merge.merged > r {
        return Err(Error::InvalidArgument(format!(
            "merge of {} components over a set of {r} with {} weights",
            merge.merged,
            weights.len()
        )));
    }
    let diags = covariance_diagonals(set, gamma);
    let parallel = |w: f64, d: &[f64]| -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let det: f64 = lambda_sq
            .iter()
            .zip(d)
            .map(|(l, c)| (1.0 + l * c).log2())
            .sum();
        w * (-w.log2() + det)
    };

    let u = merge.merged;
    let head_weight: f64 = weights[..u].iter().sum();
    let n = gamma.len();
    let mut head = vec![0.0; n];
    if head_weight > 0.0 {
        for (w, d) in weights[..u].iter().zip(&diags[..u]) {
            for k in 0..n {
                head[k] += w / head_weight * d[k];
            }
        }
    }
    let x = parallel(head_weight, &head);
    let y: f64 = weights[u..]
        .iter()
        .zip(&diags[u..])
        .map(|(&w, d)| parallel(w, d))
        .sum();
    Ok(x + y)
}

/// Minimum of [`r_tight_csit`] over every head-merge size, with the
/// minimizing merge.
pub fn csit_refined(
    channel: &ChannelRealization,
    set: &[Permutation],
    gamma: &[f64],
    weights: &[f64],
) -> Result<(f64, MergeSpec)> {
    let mut best = (f64::INFINITY, MergeSpec { merged: 1 });
    for u in 1..=set.len() {
        let spec = MergeSpec { merged: u };
        let v = r_tight_csit(channel, set, gamma, weights, spec)?;
        if v < best.0 {
            best = (v, spec);
        }
    }
    Ok(best)
}
