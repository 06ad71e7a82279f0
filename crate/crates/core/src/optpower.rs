//! Log-barrier maximization of the tight parallel-channel bound over the
//! power simplex `{γ : 0 ≤ γ_j ≤ ρ, Σγ_j = ρ}`.
//!
//! One power is eliminated through `γ_p = ρ − Σ_{j≠p} γ_j`, leaving an
//! inequality-only problem in `N − 1` variables with `2N` box constraints.
//! Each centering step eliminates whichever power is currently largest.
//! The objective is written as `const + Σ_t w_t·log2(1 + a_t·γ)`, which gives
//! closed-form first and second derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{csit_refined, r_tight_csit, MergeSpec};
use crate::types::{default_power_allocation, min_pairwise_gap, ChannelRealization, Permutation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub barrier_weight_initial: f64,
    pub barrier_decrease_factor: f64,
    /// Target for the duality-gap bound `2N·μ` and for the stationarity
    /// residual of the final Newton solve.
    pub newton_tolerance: f64,
    pub max_newton_steps: usize,
    pub max_outer_iterations: usize,
    /// Minimum pairwise power gap, relative to `ρ`, before the result is
    /// flagged as not distinct.
    pub distinctness_floor: f64,
    /// Move a non-distinct optimum to the nearest point whose powers are
    /// separated by at least the floor.
    pub project_to_distinct: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            barrier_weight_initial: 1.0,
            barrier_decrease_factor: 10.0,
            newton_tolerance: 1e-9,
            max_newton_steps: 200,
            max_outer_iterations: 60,
            distinctness_floor: crate::types::DEFAULT_DISTINCTNESS,
            project_to_distinct: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.barrier_decrease_factor.is_nan() || self.barrier_decrease_factor <= 1.0 {
            return Err(Error::InvalidArgument(
                "barrier decrease factor must exceed 1".into(),
            ));
        }
        if self.barrier_weight_initial.is_nan()
            || self.barrier_weight_initial <= 0.0
            || self.newton_tolerance.is_nan()
            || self.newton_tolerance <= 0.0
            || self.distinctness_floor.is_nan()
            || self.distinctness_floor < 0.0
        {
            return Err(Error::InvalidArgument(
                "barrier weight and tolerances must be positive".into(),
            ));
        }
        if self.max_newton_steps == 0 || self.max_outer_iterations == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Optimized powers (after projection, when requested).
    pub gamma: Vec<f64>,
    pub rho: f64,
    /// Tight bound at `gamma` under the merge held during the solve.
    pub rate: f64,
    /// Tight bound at the starting point under the same merge.
    pub start_rate: f64,
    pub merge: MergeSpec,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Objective value after each outer iteration.
    pub history: Vec<f64>,
    pub min_gap: f64,
    pub distinct: bool,
    pub projected: bool,
}

/// `Σ_t w_t·log2(1 + a_t·γ)` plus a constant, in terms of the full power vector.
#[derive(Clone, Debug)]
pub struct TightObjective {
    constant: f64,
    weights: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    n: usize,
}

impl TightObjective {
    pub fn new(
        lambda_sq: &[f64],
        set: &[Permutation],
        weights: &[f64],
        merge: MergeSpec,
    ) -> Result<Self> {
        let n = lambda_sq.len();
        let r = set.len();
        if weights.len() != r || merge.merged == 0 || merge.merged > r {
            return Err(Error::InvalidArgument(format!(
                "merge of {} components over a set of {r} with {} weights",
                merge.merged,
                weights.len()
            )));
        }
        if let Some(p) = set.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.len(),
            });
        }

        let mut blocks: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
        let head: f64 = weights[..merge.merged].iter().sum();
        if head > 0.0 {
            blocks.push((
                head,
                (0..merge.merged).map(|j| (j, weights[j] / head)).collect(),
            ));
        }
        for (j, &w) in weights.iter().enumerate().skip(merge.merged) {
            if w > 0.0 {
                blocks.push((w, vec![(j, 1.0)]));
            }
        }

        let mut constant = 0.0;
        let mut term_weights = Vec::new();
        let mut coefficients = Vec::new();
        for (w, members) in blocks {
            constant -= w * w.log2();
            for (k, &l2) in lambda_sq.iter().enumerate() {
                let mut a = vec![0.0; n];
                for &(j, share) in &members {
                    a[set[j].as_slice()[k]] += l2 * share;
                }
                term_weights.push(w);
                coefficients.push(a);
            }
        }
        Ok(Self {
            constant,
            weights: term_weights,
            coefficients,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn value(&self, gamma: &[f64]) -> f64 {
        self.constant
            + self
                .weights
                .iter()
                .zip(&self.coefficients)
                .map(|(w, a)| w * (1.0 + dot(a, gamma)).log2())
                .sum::<f64>()
    }

    pub fn gradient(&self, gamma: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for (w, a) in self.weights.iter().zip(&self.coefficients) {
            let s = w / ((1.0 + dot(a, gamma)) * std::f64::consts::LN_2);
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += s * ai;
            }
        }
        g
    }

    pub fn hessian(&self, gamma: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (w, a) in self.weights.iter().zip(&self.coefficients) {
            let d = 1.0 + dot(a, gamma);
            let s = -w / (d * d * std::f64::consts::LN_2);
            for i in 0..self.n {
                for j in 0..self.n {
                    h[(i, j)] += s * a[i] * a[j];
                }
            }
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Barrier problem over all powers but one: the power at `pivot` is
/// `ρ − Σz`, the rest are the free coordinates `z` in their original order.
struct Reduced<'a> {
    objective: &'a TightObjective,
    rho: f64,
    pivot: usize,
}

impl Reduced<'_> {
    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.objective.dim()).filter(move |&i| i != self.pivot)
    }

    fn restrict(&self, gamma: &[f64]) -> Vec<f64> {
        self.free().map(|i| gamma[i]).collect()
    }

    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut g = z.to_vec();
        g.insert(self.pivot, self.rho - z.iter().sum::<f64>());
        g
    }

    fn feasible(&self, z: &[f64]) -> bool {
        self.expand(z).iter().all(|&g| g > 0.0 && g < self.rho)
    }

    /// `−R(γ) + μ·φ(γ)` with `φ = −Σ ln γ_j − Σ ln(ρ − γ_j)`.
    fn value(&self, z: &[f64], mu: f64) -> f64 {
        let g = self.expand(z);
        let barrier: f64 = g.iter().map(|&x| -(x.ln() + (self.rho - x).ln())).sum();
        -self.objective.value(&g) + mu * barrier
    }

    fn derivatives(&self, z: &[f64], mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = z.len();
        let p = self.pivot;
        let g = self.expand(z);
        let full_grad = self.objective.gradient(&g);
        let full_hess = self.objective.hessian(&g);
        let idx: Vec<usize> = self.free().collect();

        // Chain rule through γ_p = ρ − Σz: ∂γ_p/∂z_j = −1.
        let bar1: Vec<f64> = g.iter().map(|&x| -1.0 / x + 1.0 / (self.rho - x)).collect();
        let bar2: Vec<f64> = g
            .iter()
            .map(|&x| 1.0 / (x * x) + 1.0 / ((self.rho - x) * (self.rho - x)))
            .collect();
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        for (a, &i) in idx.iter().enumerate() {
            grad[a] = -(full_grad[i] - full_grad[p]) + mu * (bar1[i] - bar1[p]);
            for (b, &j) in idx.iter().enumerate() {
                let f =
                    full_hess[(i, j)] - full_hess[(i, p)] - full_hess[(p, j)] + full_hess[(p, p)];
                let d = if i == j { bar2[i] } else { 0.0 } + bar2[p];
                hess[(a, b)] = -f + mu * d;
            }
        }
        (grad, hess)
    }
}

/// Maximizes the tight bound for a fixed merge, starting from `start`.
pub fn optimize_power_from(
    channel: &ChannelRealization,
    set: &[Permutation],
    weights: &[f64],
    merge: MergeSpec,
    start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let lambda_sq: Vec<f64> = channel
        .svd()?
        .singular_values
        .iter()
        .map(|l| l * l)
        .collect();
    if lambda_sq.iter().all(|&l| l == 0.0) {
        return Err(Error::InvalidArgument(
            "channel has no nonzero singular values".into(),
        ));
    }
    let n = lambda_sq.len();
    if start.len() != n || n < 2 {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: start.len(),
        });
    }
    let rho: f64 = start.iter().sum();
    let objective = TightObjective::new(&lambda_sq, set, weights, merge)?;
    if !start.iter().all(|&g| g > 0.0 && g < rho) {
        return Err(Error::InvalidPower(
            "starting point must lie strictly inside the power simplex".into(),
        ));
    }

    let start_rate = objective.value(start);
    let mut gamma = start.to_vec();
    let mut mu = cfg.barrier_weight_initial;
    let mut history = Vec::new();
    let mut newton_steps = 0;
    let mut outer = 0;
    let constraints = 2.0 * n as f64;

    let kkt = loop {
        outer += 1;
        // The largest power is the one eliminated.
        let pivot = (0..n)
            .max_by(|&a, &b| gamma[a].total_cmp(&gamma[b]))
            .unwrap_or(0);
        let problem = Reduced {
            objective: &objective,
            rho,
            pivot,
        };
        let mut z = problem.restrict(&gamma);
        let (steps, residual) = centering(&problem, &mut z, mu, cfg)?;
        newton_steps += steps;
        gamma = problem.expand(&z);
        history.push(objective.value(&gamma));
        if constraints * mu < cfg.newton_tolerance {
            break residual.max(constraints * mu);
        }
        if outer >= cfg.max_outer_iterations {
            let rate = objective.value(&gamma);
            return Err(Error::NotConverged {
                iterations: outer,
                best: gamma,
                rate,
            });
        }
        mu /= cfg.barrier_decrease_factor;
    };

    let min_gap = min_pairwise_gap(&gamma);
    let floor = cfg.distinctness_floor * rho;
    let distinct = min_gap > floor;
    let mut projected = false;
    if !distinct {
        log::info!("optimized powers are not distinct: minimum gap {min_gap:e}");
        if cfg.project_to_distinct {
            gamma = project_distinct(&gamma, floor)?;
            projected = true;
        }
    }
    let rate = objective.value(&gamma);
    debug_assert!(
        (rate - r_tight_csit(channel, set, &gamma, weights, merge).unwrap_or(rate)).abs()
            < 1e-9 * rate.abs().max(1.0)
    );
    Ok(OptimizationResult {
        min_gap: min_pairwise_gap(&gamma),
        distinct: min_pairwise_gap(&gamma) > floor,
        gamma,
        rho,
        rate,
        start_rate,
        merge,
        kkt_residual: kkt,
        outer_iterations: outer,
        newton_steps,
        history,
        projected,
    })
}

/// Damped Newton on the barrier objective; returns the number of steps taken
/// and the final gradient norm.
fn centering(
    problem: &Reduced<'_>,
    z: &mut Vec<f64>,
    mu: f64,
    cfg: &OptimizerConfig,
) -> Result<(usize, f64)> {
    let mut steps = 0;
    loop {
        let (grad, hess) = problem.derivatives(z, mu);
        let grad_norm = grad.norm();
        let direction = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => -&grad,
        };
        let decrement = -grad.dot(&direction);
        if decrement / 2.0 <= 1e-3 * cfg.newton_tolerance.powi(2) || grad_norm <= 1e-13 {
            return Ok((steps, grad_norm));
        }
        if steps >= cfg.max_newton_steps {
            return Ok((steps, grad_norm));
        }

        let f0 = problem.value(z, mu);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = z
                .iter()
                .zip(direction.iter())
                .map(|(a, d)| a + t * d)
                .collect();
            // Once the predicted decrease drops below what `f64` can resolve in
            // the barrier value, feasibility alone decides the step.
            let resolvable = decrement > 1e-12 * (1.0 + f0.abs());
            if problem.feasible(&cand)
                && (!resolvable || problem.value(&cand, mu) <= f0 - 0.25 * t * decrement)
            {
                *z = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        if !moved {
            return Ok((steps, grad_norm));
        }
    }
}

/// Starts from the generic allocation and holds the merge that minimizes
/// the bound there.
pub fn optimize_power(
    channel: &ChannelRealization,
    set: &[Permutation],
    weights: &[f64],
    rho: f64,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    let start = default_power_allocation(channel.tx(), rho)?;
    let (_, merge) = csit_refined(channel, set, start.gamma(), weights)?;
    optimize_power_from(channel, set, weights, merge, start.gamma(), cfg)
}

/// Nearest point (in squared distance) whose sorted powers are separated by
/// at least `floor`, keeping the total unchanged.
pub fn project_distinct(gamma: &[f64], floor: f64) -> Result<Vec<f64>> {
    let n = gamma.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gamma[a].total_cmp(&gamma[b]).then(a.cmp(&b)));
    // In ascending order, u_i − i·floor must be nondecreasing.
    let shifted: Vec<f64> = order
        .iter()
        .enumerate()
        .map(|(i, &k)| gamma[k] - i as f64 * floor)
        .collect();
    let fitted = isotonic_nondecreasing(&shifted);
    let mut out = vec![0.0; n];
    for (i, &k) in order.iter().enumerate() {
        out[k] = fitted[i] + i as f64 * floor;
    }
    if out.iter().any(|&g| g <= 0.0) {
        return Err(Error::InvalidPower(
            "distinctness floor too large for the total power".into(),
        ));
    }
    Ok(out)
}

/// Pool-adjacent-violators fit; preserves the sum of the input.
fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = (
                (m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64,
                c1 + c2,
            );
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, c)| std::iter::repeat_n(m, c))
        .collect()
}
