//! Zero-mean complex Gaussian mixtures: construction from permutation sets,
//! density evaluation, moment-preserving merges, Salmond distance and the
//! entropy upper bound with its merge-based refinement.
//!
//! All entropies are in bits.

use std::f64::consts::{E, LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::types::{ChannelRealization, Permutation, PowerAllocation};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;

/// Mixture of zero-mean circularly-symmetric complex Gaussians.
///
/// There is no mean field: every mixture in this crate is zero-mean, so the
/// moment-preserving merge and the Salmond distance take their simplified
/// forms.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    covariances: Vec<CMatrix>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, covariances: Vec<CMatrix>) -> Result<Self> {
        if weights.is_empty() || weights.len() != covariances.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} covariances",
                weights.len(),
                covariances.len()
            )));
        }
        check_weights(&weights)?;
        let dim = covariances[0].nrows();
        for c in &covariances {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.nrows().max(c.ncols()),
                });
            }
            if linalg::hermitian_defect(c) > HERMITIAN_TOL {
                return Err(Error::NotPositiveDefinite);
            }
            linalg::cholesky(c)?;
        }
        Ok(Self {
            weights,
            covariances,
            dim,
        })
    }

    /// Mixture whose component covariances are the given diagonals.
    pub fn from_diagonals(weights: Vec<f64>, diagonals: &[Vec<f64>]) -> Result<Self> {
        let covs = diagonals.iter().map(|d| diagonal_matrix(d)).collect();
        Self::new(weights, covs)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariances(&self) -> &[CMatrix] {
        &self.covariances
    }

    /// `Σ α_i·Σ_i`.
    pub fn overall_covariance(&self) -> CMatrix {
        weighted_average(&self.weights, &self.covariances)
            .unwrap_or_else(|| CMatrix::zeros(self.dim, self.dim))
    }

    /// Components reordered so that new position `k` holds old component `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let p = Permutation::new(order.to_vec())?;
        if p.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: p.len(),
            });
        }
        Ok(Self {
            weights: p.gather(&self.weights),
            covariances: p
                .as_slice()
                .iter()
                .map(|&i| self.covariances[i].clone())
                .collect(),
            dim: self.dim,
        })
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidArgument(
            "mixture weight outside [0, 1]".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!(
            "mixture weights sum to {sum}"
        )));
    }
    Ok(())
}

fn diagonal_matrix(d: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        d.len(),
        d.iter().map(|&v| Complex64::new(v, 0.0)),
    ))
}

/// Weight-normalized convex combination, or `None` when the weights vanish.
fn weighted_average(weights: &[f64], covs: &[CMatrix]) -> Option<CMatrix> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let dim = covs[0].nrows();
    let mut acc = CMatrix::zeros(dim, dim);
    for (w, c) in weights.iter().zip(covs) {
        acc += c * Complex64::new(w / total, 0.0);
    }
    Some(acc)
}

pub fn uniform_weights(r: usize) -> Vec<f64> {
    vec![1.0 / r as f64; r]
}

/// Diagonal of `P_i·diag(γ)·P_iᵀ` for each permutation: entry `k` is `γ[p_i[k]]`.
pub fn covariance_diagonals(set: &[Permutation], gamma: &[f64]) -> Vec<Vec<f64>> {
    set.iter().map(|p| p.gather(gamma)).collect()
}

/// Conditional transmit covariances `C_i`, one per permutation, as diagonals.
pub fn conditional_covariances(set: &[Permutation], pa: &PowerAllocation) -> Vec<Vec<f64>> {
    covariance_diagonals(set, pa.gamma())
}

/// Transmit-side mixture `{(α_i, C_i)}`.
pub fn mixture_of_x(
    set: &[Permutation],
    pa: &PowerAllocation,
    weights: &[f64],
) -> Result<GaussianMixture> {
    if set.iter().any(|p| p.len() != pa.len()) {
        return Err(Error::DimensionMismatch {
            expected: pa.len(),
            found: set
                .iter()
                .map(|p| p.len())
                .find(|&l| l != pa.len())
                .unwrap_or(0),
        });
    }
    GaussianMixture::from_diagonals(weights.to_vec(), &conditional_covariances(set, pa))
}

/// Receive-side mixture `{(α_i, D_i = H·C_i·Hᴴ + I)}`.
pub fn mixture_of_y(
    channel: &ChannelRealization,
    mix_x: &GaussianMixture,
) -> Result<GaussianMixture> {
    let h = channel.matrix();
    if h.ncols() != mix_x.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.ncols(),
            found: mix_x.dim(),
        });
    }
    let m = h.nrows();
    let covs = mix_x
        .covariances()
        .iter()
        .map(|c| {
            let mut d = h * c * h.adjoint();
            for k in 0..m {
                d[(k, k)] += Complex64::new(1.0, 0.0);
            }
            linalg::hermitian_part(&d)
        })
        .collect();
    GaussianMixture::new(mix_x.weights().to_vec(), covs)
}

/// Receive-side mixture built straight from diagonal transmit covariances.
pub fn receive_mixture(
    channel: &ChannelRealization,
    diagonals: &[Vec<f64>],
    weights: &[f64],
) -> Result<GaussianMixture> {
    let h = channel.matrix();
    if let Some(d) = diagonals.iter().find(|d| d.len() != h.ncols()) {
        return Err(Error::DimensionMismatch {
            expected: h.ncols(),
            found: d.len(),
        });
    }
    let covs = diagonals
        .iter()
        .map(|d| linalg::identity_plus_sandwich(h, d))
        .collect();
    GaussianMixture::new(weights.to_vec(), covs)
}

/// Mixture density at `z`, evaluated in log space.
pub fn pdf_eval(mix: &GaussianMixture, z: &CVector) -> Result<f64> {
    Ok(ln_pdf(mix, z)?.exp())
}

pub fn ln_pdf(mix: &GaussianMixture, z: &CVector) -> Result<f64> {
    if z.len() != mix.dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.dim(),
            found: z.len(),
        });
    }
    let d = mix.dim() as f64;
    let mut terms = Vec::with_capacity(mix.len());
    for (&w, c) in mix.weights().iter().zip(mix.covariances()) {
        if w == 0.0 {
            continue;
        }
        let chol = linalg::cholesky(c)?;
        let ln_det = linalg::ln_det_hpd(c)?;
        let solved = chol.solve(z);
        let quad = z.dotc(&solved).re;
        terms.push(w.ln() - d * PI.ln() - ln_det - quad);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
}

/// A moment-preserving merge result.
#[derive(Clone, Debug)]
pub struct MergeRecord {
    /// Original component indices folded into this one.
    pub merged_indices: Vec<usize>,
    pub weight: f64,
    pub covariance: CMatrix,
}

/// Replaces components `i` and `j` by their moment-preserving merge, placed
/// at position `min(i, j)`. Zero means make the spread term vanish.
pub fn merge_components(mix: &GaussianMixture, i: usize, j: usize) -> Result<GaussianMixture> {
    let r = mix.len();
    if i == j || i >= r || j >= r {
        return Err(Error::InvalidArgument(format!(
            "cannot merge components {i} and {j} of {r}"
        )));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let record = merge_pair(mix, lo, hi);
    let mut weights = Vec::with_capacity(r - 1);
    let mut covs = Vec::with_capacity(r - 1);
    for k in 0..r {
        if k == lo {
            weights.push(record.weight);
            covs.push(record.covariance.clone());
        } else if k != hi {
            weights.push(mix.weights[k]);
            covs.push(mix.covariances[k].clone());
        }
    }
    Ok(GaussianMixture {
        weights,
        covariances: covs,
        dim: mix.dim,
    })
}

fn merge_pair(mix: &GaussianMixture, i: usize, j: usize) -> MergeRecord {
    let (wi, wj) = (mix.weights[i], mix.weights[j]);
    let pair = [mix.covariances[i].clone(), mix.covariances[j].clone()];
    let covariance = weighted_average(&[wi, wj], &pair)
        .unwrap_or_else(|| weighted_average(&[1.0, 1.0], &pair).expect("positive weights"));
    MergeRecord {
        merged_indices: vec![i, j],
        weight: wi + wj,
        covariance,
    }
}

/// Squared Salmond distance `tr(C̃⁻¹·ΔW_ij)` between components `i` and `j`,
/// `C̃` being the overall covariance. With zero means `ΔW_ij = 0`.
pub fn salmond_distance(mix: &GaussianMixture, i: usize, j: usize) -> Result<f64> {
    let r = mix.len();
    if i >= r || j >= r {
        return Err(Error::InvalidArgument(format!(
            "component index out of range for {r} components"
        )));
    }
    let overall = mix.overall_covariance();
    let chol = linalg::cholesky(&overall)?;
    let (wi, wj) = (mix.weights[i], mix.weights[j]);
    let mean_diff = CVector::zeros(mix.dim());
    let spread = if wi + wj > 0.0 {
        wi * wj / (wi + wj)
    } else {
        0.0
    };
    let delta_w = &mean_diff * mean_diff.adjoint() * Complex64::new(spread, 0.0);
    Ok(chol.solve(&delta_w).trace().re.max(0.0))
}

/// Per-component terms `α_i·(log2(1/α_i) + offset + log2 det Σ_i)`;
/// zero-weight components contribute nothing.
fn component_terms(mix: &GaussianMixture, offset: f64) -> Result<Vec<f64>> {
    mix.weights
        .iter()
        .zip(&mix.covariances)
        .map(|(&w, c)| {
            if w == 0.0 {
                Ok(0.0)
            } else {
                Ok(w * (-w.log2() + offset + linalg::log2_det_hpd(c)?))
            }
        })
        .collect()
}

fn gaussian_offset(dim: usize) -> f64 {
    dim as f64 * (PI * E).ln() / LN_2
}

/// `Σ_i α_i·(log2(1/α_i) + log2((πe)^d·det Σ_i))`, in bits.
pub fn entropy_upper_bound(mix: &GaussianMixture) -> Result<f64> {
    Ok(component_terms(mix, gaussian_offset(mix.dim))?.iter().sum())
}

/// Outcome of the upper-bound refinement.
#[derive(Clone, Debug)]
pub struct Refinement {
    /// Smallest bound over all stages.
    pub bound: f64,
    /// Bound of the original, unmerged mixture.
    pub unrefined: f64,
    /// Number of leading components merged into one at the best stage
    /// (1 means nothing merged).
    pub best_stage: usize,
    /// Bound at every stage; entry `k - 1` has the first `k` components merged.
    pub stage_bounds: Vec<f64>,
    /// Merges performed to reach the best stage, in order.
    pub schedule: Vec<MergeRecord>,
}

/// Upper-bound refinement: successively merges component `k` into the
/// running merge of components `0..k`, evaluating the bound after every
/// merge, and keeps the minimum over all stages.
pub fn refine_bound(mix: &GaussianMixture) -> Result<Refinement> {
    refine_with_offset(mix, gaussian_offset(mix.dim))
}

/// Same refinement with the `d·log2(πe)` entropy offset removed, so the
/// returned bounds are achievable rates `H(y) − H(n)` directly.
pub fn refine_rate(mix: &GaussianMixture) -> Result<Refinement> {
    refine_with_offset(mix, 0.0)
}

fn refine_with_offset(mix: &GaussianMixture, offset: f64) -> Result<Refinement> {
    let r = mix.len();
    let terms = component_terms(mix, offset)?;
    let mut suffix = vec![0.0; r + 1];
    for k in (0..r).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }

    let mut stage_bounds = Vec::with_capacity(r);
    stage_bounds.push(suffix[0]);
    let mut records = Vec::with_capacity(r.saturating_sub(1));

    let mut merged_weight = mix.weights[0];
    let mut merged_cov = mix.covariances[0].clone();
    for k in 1..r {
        let wk = mix.weights[k];
        let total = merged_weight + wk;
        if total > 0.0 {
            merged_cov = &merged_cov * Complex64::new(merged_weight / total, 0.0)
                + &mix.covariances[k] * Complex64::new(wk / total, 0.0);
        } else {
            merged_cov = (&merged_cov + &mix.covariances[k]) * Complex64::new(0.5, 0.0);
        }
        merged_weight = total;
        let head = if merged_weight == 0.0 {
            0.0
        } else {
            merged_weight * (-merged_weight.log2() + offset + linalg::log2_det_hpd(&merged_cov)?)
        };
        stage_bounds.push(head + suffix[k + 1]);
        records.push(MergeRecord {
            merged_indices: (0..=k).collect(),
            weight: merged_weight,
            covariance: merged_cov.clone(),
        });
    }

    let (best, &bound) = stage_bounds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one stage");
    records.truncate(best);
    Ok(Refinement {
        bound,
        unrefined: stage_bounds[0],
        best_stage: best + 1,
        stage_bounds,
        schedule: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::codec::usable_permutations;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn log2_pi_e() -> f64 {
        (PI * E).log2()
    }

    #[test]
    fn three_antenna_covariances() {
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 1.0).unwrap();
        let g = pa.gamma();
        let covs = conditional_covariances(&set, &pa);
        assert_eq!(covs[0], vec![g[0], g[1], g[2]]);
        assert_eq!(covs[1], vec![g[0], g[2], g[1]]);
        assert_eq!(covs[2], vec![g[1], g[0], g[2]]);
        assert_eq!(covs[3], vec![g[1], g[2], g[0]]);
    }

    #[test]
    fn covariances_pairwise_distinct() {
        for n in 2..=5 {
            let set = usable_permutations(n).unwrap();
            let pa = PowerAllocation::generic(n, 1.0).unwrap();
            let covs = conditional_covariances(&set, &pa);
            for i in 0..covs.len() {
                for j in i + 1..covs.len() {
                    assert_ne!(covs[i], covs[j]);
                }
            }
        }
    }

    #[test]
    fn transmit_mixture_average_and_trace() {
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 1.0).unwrap();
        let mix = mixture_of_x(&set, &pa, &uniform_weights(4)).unwrap();
        let c = mix.overall_covariance();
        let g = pa.gamma();
        // Averaging the four diagonals by hand.
        let expect = [
            0.5 * g[0] + 0.5 * g[1],
            0.25 * g[1] + 0.25 * g[2] + 0.25 * g[0] + 0.25 * g[2],
            0.25 * g[2] + 0.25 * g[1] + 0.25 * g[2] + 0.25 * g[0],
        ];
        for k in 0..3 {
            assert!((c[(k, k)].re - expect[k]).abs() < 1e-15);
        }
        assert!((c.trace().re - 1.0).abs() < 1e-12);

        let weights = [0.1, 0.2, 0.3, 0.4];
        let mix = mixture_of_x(&set, &pa, &weights).unwrap();
        assert!((mix.overall_covariance().trace().re - 1.0).abs() < 1e-12);
        assert!(mixture_of_x(&set, &pa, &[0.5, 0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn single_component_mixture() {
        let set = vec![Permutation::identity(3)];
        let pa = PowerAllocation::generic(3, 1.0).unwrap();
        let mix = mixture_of_x(&set, &pa, &[1.0]).unwrap();
        assert_eq!(mix.overall_covariance(), mix.covariances()[0]);
    }

    #[test]
    fn receive_mixture_special_channels() {
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 2.0).unwrap();
        let mix = mixture_of_x(&set, &pa, &uniform_weights(4)).unwrap();

        let zero = ChannelRealization::new(CMatrix::zeros(2, 3));
        let y = mixture_of_y(&zero, &mix).unwrap();
        for d in y.covariances() {
            assert_eq!(d, &CMatrix::identity(2, 2));
        }

        let eye = ChannelRealization::new(CMatrix::identity(3, 3));
        let y = mixture_of_y(&eye, &mix).unwrap();
        for (d, c) in y.covariances().iter().zip(mix.covariances()) {
            assert!((d - c - CMatrix::identity(3, 3)).norm() < 1e-15);
        }
    }

    #[test]
    fn receive_mixture_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_channel(3, 4, &mut rng);
        let set = usable_permutations(4).unwrap();
        let pa = PowerAllocation::generic(4, 5.0).unwrap();
        let w = uniform_weights(set.len());
        let a = mixture_of_y(&ch, &mixture_of_x(&set, &pa, &w).unwrap()).unwrap();
        let b = receive_mixture(&ch, &conditional_covariances(&set, &pa), &w).unwrap();
        for (x, y) in a.covariances().iter().zip(b.covariances()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn pdf_peak_and_convexity() {
        let mix = GaussianMixture::new(vec![1.0], vec![CMatrix::identity(2, 2)]).unwrap();
        let v = pdf_eval(&mix, &CVector::zeros(2)).unwrap();
        assert!((v - 1.0 / (PI * PI)).abs() < 1e-15);

        let a = CMatrix::identity(2, 2) * Complex64::new(2.0, 0.0);
        let b = diagonal_matrix(&[0.5, 3.0]);
        let mix = GaussianMixture::new(vec![0.3, 0.7], vec![a.clone(), b.clone()]).unwrap();
        let z = CVector::from_vec(vec![Complex64::new(0.4, -0.2), Complex64::new(1.1, 0.3)]);
        let pa = pdf_eval(&GaussianMixture::new(vec![1.0], vec![a]).unwrap(), &z).unwrap();
        let pb = pdf_eval(&GaussianMixture::new(vec![1.0], vec![b]).unwrap(), &z).unwrap();
        let pm = pdf_eval(&mix, &z).unwrap();
        assert!((pm - (0.3 * pa + 0.7 * pb)).abs() < 1e-15);
    }

    #[test]
    fn mixture_rejects_bad_covariance() {
        let bad = diagonal_matrix(&[1.0, -1.0]);
        assert!(GaussianMixture::new(vec![1.0], vec![bad]).is_err());
        let mut asym = CMatrix::identity(2, 2);
        asym[(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(GaussianMixture::new(vec![1.0], vec![asym]).is_err());
    }

    #[test]
    fn equal_weight_merge_is_average() {
        let a = diagonal_matrix(&[1.0, 2.0]);
        let b = diagonal_matrix(&[3.0, 1.0]);
        let c = diagonal_matrix(&[2.0, 2.0]);
        let mix =
            GaussianMixture::new(vec![0.25, 0.25, 0.5], vec![a.clone(), b.clone(), c]).unwrap();
        let merged = merge_components(&mix, 1, 0).unwrap();
        assert_eq!(merged.len(), 2);
        assert!((merged.weights()[0] - 0.5).abs() < 1e-15);
        assert!((&merged.covariances()[0] - (a + b) * Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(merge_components(&mix, 1, 1).is_err());
        assert!(merge_components(&mix, 0, 3).is_err());
    }

    #[test]
    fn merging_everything_gives_overall_covariance_and_keeps_trace() {
        let set = usable_permutations(4).unwrap();
        let pa = PowerAllocation::generic(4, 1.0).unwrap();
        let weights: Vec<f64> = (1..=16).map(|k| k as f64 / 136.0).collect();
        let mut mix = mixture_of_x(&set, &pa, &weights).unwrap();
        let overall = mix.overall_covariance();
        let weighted_trace = |m: &GaussianMixture| -> f64 {
            m.weights()
                .iter()
                .zip(m.covariances())
                .map(|(w, c)| w * c.trace().re)
                .sum()
        };
        let trace0 = weighted_trace(&mix);
        while mix.len() > 1 {
            mix = merge_components(&mix, mix.len() - 1, 0).unwrap();
            assert!((weighted_trace(&mix) - trace0).abs() < 1e-12);
            assert!((mix.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((mix.overall_covariance() - &overall).norm() < 1e-12);
        }
        assert!((&mix.covariances()[0] - overall).norm() < 1e-12);
    }

    #[test]
    fn salmond_distance_vanishes() {
        let set = usable_permutations(4).unwrap();
        let pa = PowerAllocation::generic(4, 3.0).unwrap();
        let mix = mixture_of_x(&set, &pa, &uniform_weights(16)).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(salmond_distance(&mix, i, j).unwrap(), 0.0);
            }
        }
        assert!(salmond_distance(&mix, 0, 16).is_err());
    }

    #[test]
    fn gaussian_entropy() {
        let mix = GaussianMixture::new(vec![1.0], vec![CMatrix::identity(2, 2)]).unwrap();
        assert!((entropy_upper_bound(&mix).unwrap() - 2.0 * log2_pi_e()).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_add_log_r() {
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 4.0).unwrap();
        let mix = mixture_of_x(&set, &pa, &uniform_weights(4)).unwrap();
        let gaussian: f64 = mix
            .covariances()
            .iter()
            .map(|c| 0.25 * (3.0 * log2_pi_e() + linalg::log2_det_hpd(c).unwrap()))
            .sum();
        assert!((entropy_upper_bound(&mix).unwrap() - gaussian - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_components_are_skipped() {
        let mix = GaussianMixture::new(
            vec![1.0, 0.0],
            vec![
                CMatrix::identity(1, 1),
                CMatrix::identity(1, 1) * Complex64::new(9.0, 0.0),
            ],
        )
        .unwrap();
        assert!((entropy_upper_bound(&mix).unwrap() - log2_pi_e()).abs() < 1e-12);
    }

    #[test]
    fn single_component_refinement_is_unrefined_bound() {
        let mix = GaussianMixture::new(vec![1.0], vec![diagonal_matrix(&[2.0, 5.0])]).unwrap();
        let r = refine_bound(&mix).unwrap();
        assert_eq!(r.bound, entropy_upper_bound(&mix).unwrap());
        assert_eq!(r.best_stage, 1);
        assert!(r.schedule.is_empty());
    }

    #[test]
    fn identical_components_merge_fully() {
        let c = diagonal_matrix(&[2.0, 3.0]);
        let mix = GaussianMixture::new(vec![0.5, 0.5], vec![c.clone(), c.clone()]).unwrap();
        let r = refine_bound(&mix).unwrap();
        let det_term = 2.0 * log2_pi_e() + 6f64.log2();
        assert!((r.stage_bounds[0] - (1.0 + det_term)).abs() < 1e-12);
        assert!((r.stage_bounds[1] - det_term).abs() < 1e-12);
        assert_eq!(r.best_stage, 2);
        assert_eq!(r.schedule.len(), 1);
        assert!((r.schedule[0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stage_bounds_match_explicit_merging() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = draw_channel(3, 3, &mut rng);
        let set = usable_permutations(3).unwrap();
        let pa = PowerAllocation::generic(3, 10.0).unwrap();
        let weights = [0.1, 0.4, 0.2, 0.3];
        let y = mixture_of_y(&ch, &mixture_of_x(&set, &pa, &weights).unwrap()).unwrap();
        let r = refine_bound(&y).unwrap();
        let mut staged = y.clone();
        assert!((r.stage_bounds[0] - entropy_upper_bound(&staged).unwrap()).abs() < 1e-12);
        for k in 1..4 {
            staged = merge_components(&staged, 0, 1).unwrap();
            let direct = entropy_upper_bound(&staged).unwrap();
            assert!((r.stage_bounds[k] - direct).abs() < 1e-10);
        }
        assert!(r.bound <= r.unrefined);
        let rate = refine_rate(&y).unwrap();
        for (a, b) in rate.stage_bounds.iter().zip(&r.stage_bounds) {
            assert!((b - a - 3.0 * log2_pi_e()).abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_power_bound_tends_to_noise_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_channel(4, 4, &mut rng);
        let set = usable_permutations(4).unwrap();
        let pa = PowerAllocation::generic(4, 1e-9).unwrap();
        let y = receive_mixture(
            &ch,
            &conditional_covariances(&set, &pa),
            &uniform_weights(16),
        )
        .unwrap();
        let r = refine_bound(&y).unwrap();
        assert!((r.bound - 4.0 * log2_pi_e()).abs() < 1e-6);
    }
}
