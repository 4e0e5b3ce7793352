//! Exact compressed-space solvers: value iteration and policy iteration,
//! plus the interval-precision iteration bound used as a diagnostic.

use crate::backup::{
    dl_transition_matrix, execution_weights, greedy_dl, greedy_order, map_states, BackupError,
};
use crate::model::{
    substream, AvailabilityModel, DecisionListPolicy, Instance, ModelError, QFunction,
    ValueFunction,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backup(#[from] BackupError),
    #[error("value iteration stopped after {} iterations with residual {:.3e}",
            .0.iterations, .0.residuals.last().copied().unwrap_or(f64::NAN))]
    NotConverged(Box<ViSolution>),
    #[error("linear system solve left residual {residual:.3e}")]
    SingularSystem { residual: f64 },
    #[error("policy iteration failed to stabilize within {0} iterations")]
    PolicyCycle(usize),
}

/// Sup-norm residual below which the greedy policy of the iterate is
/// eps-optimal: `eps (1 - gamma) / (2 gamma)`.
///
/// For `gamma = 0` one sweep is already exact, so any residual qualifies.
pub fn residual_threshold(eps: f64, gamma: f64) -> f64 {
    if gamma > 0.0 {
        eps * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    }
}

/// One application of the compressed Bellman operator.
#[derive(Debug, Clone)]
pub struct BellmanBackup {
    /// `T V` per state.
    pub values: ValueFunction,
    /// One-step Q-values the backup was computed from.
    pub q: QFunction,
    /// Greedy decision list (actions sorted by Q descending).
    pub policy: DecisionListPolicy,
}

/// Exact compressed Bellman backup for PDA or explicit availability.
///
/// Per state: compute `Q(s, k) = r^k_s + gamma * p^k_s . v`, sort actions by
/// Q (which is the greedy decision list), and take the expectation of the
/// best-available Q via execution weights. `O(n m log m)` plus the cost of
/// the Q-value dot products.
pub fn bellman_backup(inst: &Instance, v: &ValueFunction) -> Result<BellmanBackup, SolveError> {
    bellman_backup_inner(inst, v, true)
}

/// Sequential reference for [`bellman_backup`]: bitwise-identical output,
/// never touches the rayon pool.
pub fn bellman_backup_seq(inst: &Instance, v: &ValueFunction) -> Result<BellmanBackup, SolveError> {
    bellman_backup_inner(inst, v, false)
}

fn bellman_backup_inner(
    inst: &Instance,
    v: &ValueFunction,
    allow_parallel: bool,
) -> Result<BellmanBackup, SolveError> {
    if inst.availability().is_sampler() {
        return Err(ModelError::UnsupportedModel {
            op: "bellman_backup",
        }
        .into());
    }
    let per_state = map_states(inst.n_states(), allow_parallel, |s| {
        let mut backups = vec![0.0; inst.n_actions()];
        inst.mdp().action_backups(s, v, &mut backups);
        let order = greedy_order(&backups);
        let weights =
            execution_weights(inst.availability(), s, &order).expect("exact availability model");
        let value = weights.iter().zip(&backups).map(|(w, b)| w * b).sum();
        (value, backups, order)
    });
    Ok(collect_backup(per_state))
}

/// Monte-Carlo compressed Bellman backup: Q-values are exact one-step
/// backups, but the expectation over available sets is estimated from
/// `n_samples` draws per state. Requires a sampler availability model.
pub fn bellman_backup_ads(
    inst: &Instance,
    v: &ValueFunction,
    n_samples: usize,
    seed: u64,
) -> Result<BellmanBackup, SolveError> {
    if !inst.availability().is_sampler() {
        return Err(ModelError::UnsupportedModel {
            op: "bellman_backup_ads",
        }
        .into());
    }
    if n_samples == 0 {
        return Err(BackupError::BadSampleCount.into());
    }
    let per_state = map_states(inst.n_states(), true, |s| {
        let mut backups = vec![0.0; inst.n_actions()];
        inst.mdp().action_backups(s, v, &mut backups);
        let order = greedy_order(&backups);
        let mut rng = substream(seed, s as u64, 0x42454c4c);
        let mut counts = vec![0u64; inst.n_actions()];
        for _ in 0..n_samples {
            let set = inst.availability().sample_set(s, &mut rng);
            // First entry of the sorted list present in the draw, i.e. the
            // best available action.
            if let Some(k) = order.iter().copied().find(|&k| set.contains(k)) {
                counts[k] += 1;
            }
        }
        let value = counts
            .iter()
            .zip(&backups)
            .map(|(&c, b)| (c as f64 / n_samples as f64) * b)
            .sum();
        (value, backups, order)
    });
    Ok(collect_backup(per_state))
}

fn collect_backup(per_state: Vec<(f64, Vec<f64>, Vec<usize>)>) -> BellmanBackup {
    let mut values = Vec::with_capacity(per_state.len());
    let mut q_rows = Vec::with_capacity(per_state.len());
    let mut orders = Vec::with_capacity(per_state.len());
    for (value, q_row, order) in per_state {
        values.push(value);
        q_rows.push(q_row);
        orders.push(order);
    }
    BellmanBackup {
        values: ValueFunction::from_vec(values),
        q: QFunction::from_rows(q_rows),
        policy: DecisionListPolicy::new(orders).expect("sorted orders are permutations"),
    }
}

/// Options for [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ViOptions {
    /// Target optimality gap of the returned greedy policy.
    pub eps: f64,
    pub max_iters: usize,
    /// Draws per state per sweep when the availability model is a sampler.
    pub ads_samples: usize,
    /// Master seed for sampler-mode sweeps; each sweep re-draws subsets from
    /// an iteration-indexed substream.
    pub seed: u64,
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions {
            eps: 1e-8,
            max_iters: 100_000,
            ads_samples: 1_000,
            seed: 0,
        }
    }
}

/// Result of value iteration.
#[derive(Debug, Clone)]
pub struct ViSolution {
    pub values: ValueFunction,
    /// Greedy decision list of the final iterate.
    pub policy: DecisionListPolicy,
    pub iterations: usize,
    /// Sup-norm residual after each sweep.
    pub residuals: Vec<f64>,
}

/// Value iteration on the compressed MDP, starting from the zero function.
///
/// Stops when the sup-norm residual drops below
/// [`residual_threshold`]`(eps, gamma)`; with a sampler model each sweep
/// uses fresh subsets drawn from an iteration-indexed substream of
/// `opts.seed`.
pub fn value_iteration(inst: &Instance, opts: &ViOptions) -> Result<ViSolution, SolveError> {
    assert!(opts.eps > 0.0, "eps must be positive");
    let gamma = inst.discount();
    let threshold = residual_threshold(opts.eps, gamma);
    // Both the sampler's own seed and the solver seed feed the sweep
    // streams, so either one reproduces or perturbs a run.
    let master = inst
        .availability()
        .sampler_seed()
        .map(|s| s.wrapping_mul(0xd129_0d3b).wrapping_add(opts.seed));

    let mut v = ValueFunction::zeros(inst.n_states());
    let mut residuals = Vec::new();
    let mut last = None;
    for t in 1..=opts.max_iters {
        let backup = match master {
            Some(master) => {
                bellman_backup_ads(inst, &v, opts.ads_samples, substream_seed(master, t))?
            }
            None => bellman_backup(inst, &v)?,
        };
        let residual = backup.values.max_abs_diff(&v);
        residuals.push(residual);
        v = backup.values.clone();
        last = Some(backup);
        if residual <= threshold {
            return Ok(ViSolution {
                values: v,
                policy: last.expect("at least one sweep ran").policy,
                iterations: t,
                residuals,
            });
        }
    }
    Err(SolveError::NotConverged(Box::new(ViSolution {
        values: v,
        policy: last.expect("max_iters >= 1").policy,
        iterations: opts.max_iters,
        residuals,
    })))
}

fn substream_seed(master: u64, iteration: usize) -> u64 {
    master ^ (iteration as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Upper bound on the number of VI sweeps needed before the greedy policy is
/// exactly optimal, for instances whose rewards, transition and availability
/// probabilities are integer multiples of `1 / delta`:
/// `ceil(log(2 delta^{2n(m+1)} n^n nm) / log(1/gamma))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationBound {
    Iterations(u64),
    /// The bound exceeds machine range; its base-10 logarithm is reported.
    LogScale {
        log10: f64,
    },
}

/// Diagnostic iteration bound for value iteration under product-form
/// availability. The caller asserts that all instance numbers are rational
/// with denominator `delta`; the bound is not meaningful otherwise.
pub fn vi_iteration_bound(inst: &Instance, delta: u32) -> Result<IterationBound, SolveError> {
    if !matches!(inst.availability(), AvailabilityModel::Pda { .. }) {
        return Err(ModelError::UnsupportedModel {
            op: "vi_iteration_bound",
        }
        .into());
    }
    Ok(iteration_bound_formula(
        inst.n_states(),
        inst.n_actions(),
        delta,
        inst.discount(),
    ))
}

/// `ceil(log(2 delta^{2n(m+1)} n^n nm) / log(1/gamma))`, evaluated in log
/// space so enormous instances degrade to a symbolic answer instead of
/// overflowing.
pub fn iteration_bound_formula(
    n_states: usize,
    n_actions: usize,
    delta: u32,
    gamma: f64,
) -> IterationBound {
    let n = n_states as f64;
    let m = n_actions as f64;
    let log_numerator =
        2f64.ln() + 2.0 * n * (m + 1.0) * (delta as f64).ln() + n * n.ln() + (n * m).ln();
    if gamma == 0.0 {
        return IterationBound::Iterations(1);
    }
    let bound = log_numerator / (1.0 / gamma).ln();
    let iterations = bound.ceil().max(1.0);
    if iterations <= 2f64.powi(62) {
        IterationBound::Iterations(iterations as u64)
    } else {
        IterationBound::LogScale {
            log10: bound.log10(),
        }
    }
}

/// Exact evaluation of a decision-list policy: solves
/// `(I - gamma P_mu) V = r_mu` with the policy's expected transition matrix.
pub fn policy_evaluation(
    inst: &Instance,
    policy: &DecisionListPolicy,
) -> Result<ValueFunction, SolveError> {
    let (matrix, rewards) = dl_transition_matrix(inst, policy)?;
    let n = inst.n_states();
    let gamma = inst.discount();
    let mut a = vec![vec![0.0; n]; n];
    for s in 0..n {
        for s_next in 0..n {
            a[s][s_next] = if s == s_next { 1.0 } else { 0.0 } - gamma * matrix[s][s_next];
        }
    }
    let v = solve_dense(&a, &rewards).ok_or(SolveError::SingularSystem { residual: f64::NAN })?;

    // (I - gamma P) is nonsingular for gamma < 1, so a large residual means
    // the numerics broke, not the model.
    let mut residual = 0.0_f64;
    for s in 0..n {
        let lhs: f64 = (0..n).map(|s_next| a[s][s_next] * v[s_next]).sum();
        residual = residual.max((lhs - rewards[s]).abs());
    }
    if residual > 1e-9 || v.iter().any(|x| !x.is_finite()) {
        return Err(SolveError::SingularSystem { residual });
    }
    Ok(ValueFunction::from_vec(v))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[pivot][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        for row in col + 1..n {
            let factor = aug[row][col] / aug[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..=n {
                aug[row][k] -= factor * aug[col][k];
            }
        }
    }

    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = aug[row][n];
        for col in row + 1..n {
            acc -= aug[row][col] * x[col];
        }
        x[row] = acc / aug[row][row];
    }
    Some(x)
}

/// Result of policy iteration.
#[derive(Debug, Clone)]
pub struct PiSolution {
    pub values: ValueFunction,
    pub policy: DecisionListPolicy,
    /// Number of evaluate-improve rounds, including the final unchanged one.
    pub iterations: usize,
}

/// Policy iteration over decision lists: evaluate the current list exactly,
/// re-sort actions by the resulting Q-values, stop when the list is
/// unchanged. Deterministic tie-breaking makes the equality test sound.
pub fn policy_iteration(
    inst: &Instance,
    initial: Option<DecisionListPolicy>,
) -> Result<PiSolution, SolveError> {
    let mut policy =
        initial.unwrap_or_else(|| DecisionListPolicy::identity(inst.n_states(), inst.n_actions()));
    // Termination is guaranteed by monotone improvement over finitely many
    // lists; the cap only guards against floating-point flip-flop.
    let cap = 10_000 + 100 * inst.n_states() * inst.n_actions();
    for iteration in 1..=cap {
        let v = policy_evaluation(inst, &policy)?;
        let q = one_step_q(inst, &v);
        let improved = greedy_dl(&q);
        if improved == policy {
            return Ok(PiSolution {
                values: v,
                policy,
                iterations: iteration,
            });
        }
        policy = improved;
    }
    Err(SolveError::PolicyCycle(cap))
}

/// `Q(s, k) = r^k_s + gamma * p^k_s . v` for all pairs.
pub fn one_step_q(inst: &Instance, v: &ValueFunction) -> QFunction {
    let mut q = QFunction::zeros(inst.n_states(), inst.n_actions());
    let mut backups = vec![0.0; inst.n_actions()];
    for s in 0..inst.n_states() {
        inst.mdp().action_backups(s, v, &mut backups);
        q.row_mut(s).copy_from_slice(&backups);
    }
    q
}
