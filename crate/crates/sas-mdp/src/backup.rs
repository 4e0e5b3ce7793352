//! Decision-list policy backups over the compressed state space.
//!
//! A decision list executes the first available action in its order, so the
//! expected backup at a state is a weighted sum of per-action backups, with
//! weights equal to the probability that each action is the first available
//! one. For product-form availability those weights are prefix products
//! (`prod_{j<i} (1 - rho_j) * rho_i`), computed without enumerating subsets;
//! for explicit tables they come from a single scan of the listed subsets;
//! for black-box samplers they are estimated by Monte Carlo.

use crate::model::{
    substream, AvailabilityModel, DecisionListPolicy, Instance, ModelError, QFunction,
    ValueFunction,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackupError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sample count must be at least 1")]
    BadSampleCount,
}

/// Probability that each action is the executed (first available) one under
/// `order`, for the availability distribution at state `s`.
///
/// Weights are indexed by action and sum to 1 for validated instances.
pub fn execution_weights(
    availability: &AvailabilityModel,
    s: usize,
    order: &[usize],
) -> Result<Vec<f64>, ModelError> {
    let m = order.len();
    let mut weights = vec![0.0; m];
    match availability {
        AvailabilityModel::Pda { rho } => {
            let rho_s = &rho[s];
            let mut prefix = 1.0;
            // All m positions contribute; once a sure action is passed the
            // prefix is 0 and later terms vanish.
            for &k in order {
                weights[k] = prefix * rho_s[k];
                prefix *= 1.0 - rho_s[k];
            }
        }
        AvailabilityModel::Explicit { support } => {
            for entry in &support[s] {
                if entry.prob == 0.0 {
                    continue;
                }
                if let Some(k) = order.iter().copied().find(|&k| entry.set.contains(k)) {
                    weights[k] += entry.prob;
                }
            }
        }
        AvailabilityModel::SamplerSeed { .. } => {
            return Err(ModelError::UnsupportedModel {
                op: "execution_weights",
            })
        }
    }
    Ok(weights)
}

fn weighted_state_backup(
    inst: &Instance,
    s: usize,
    order: &[usize],
    v: &ValueFunction,
) -> Result<f64, ModelError> {
    let weights = execution_weights(inst.availability(), s, order)?;
    let mut backups = vec![0.0; inst.n_actions()];
    inst.mdp().action_backups(s, v, &mut backups);
    Ok(weights.iter().zip(&backups).map(|(w, b)| w * b).sum())
}

/// Exact policy backup for a decision list under product-form availability.
pub fn dl_backup_pda(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
) -> Result<ValueFunction, BackupError> {
    match inst.availability() {
        AvailabilityModel::Pda { .. } => {}
        _ => {
            return Err(ModelError::UnsupportedModel {
                op: "dl_backup_pda",
            }
            .into())
        }
    }
    let values = map_states(inst.n_states(), true, |s| {
        weighted_state_backup(inst, s, policy.order(s), v).expect("PDA weights cannot fail")
    });
    Ok(ValueFunction::from_vec(values))
}

/// Exact policy backup by direct expectation over an explicit subset table.
pub fn dl_backup_explicit(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
) -> Result<ValueFunction, BackupError> {
    match inst.availability() {
        AvailabilityModel::Explicit { .. } => {}
        _ => {
            return Err(ModelError::UnsupportedModel {
                op: "dl_backup_explicit",
            }
            .into())
        }
    }
    let values = map_states(inst.n_states(), true, |s| {
        weighted_state_backup(inst, s, policy.order(s), v).expect("explicit weights cannot fail")
    });
    Ok(ValueFunction::from_vec(values))
}

/// Exact policy backup for either exact availability model.
pub fn dl_backup(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
) -> Result<ValueFunction, BackupError> {
    match inst.availability() {
        AvailabilityModel::Pda { .. } => dl_backup_pda(inst, policy, v),
        AvailabilityModel::Explicit { .. } => dl_backup_explicit(inst, policy, v),
        AvailabilityModel::SamplerSeed { .. } => {
            Err(ModelError::UnsupportedModel { op: "dl_backup" }.into())
        }
    }
}

/// Monte-Carlo policy backup for sampler availability: averages, over
/// `n_samples` drawn subsets per state, the backup of the first listed
/// action present in each draw.
///
/// Deterministic for a fixed sampler seed; an unbiased estimator of the
/// exact backup under the sampler's distribution.
pub fn dl_backup_ads(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
    n_samples: usize,
) -> Result<ValueFunction, BackupError> {
    let seed = inst
        .availability()
        .sampler_seed()
        .ok_or(ModelError::UnsupportedModel {
            op: "dl_backup_ads",
        })?;
    dl_backup_sampled(inst, policy, v, n_samples, seed)
}

/// As [`dl_backup_ads`] with an explicit sampling seed, so solvers can draw
/// fresh subsets every sweep.
pub fn dl_backup_sampled(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
    n_samples: usize,
    seed: u64,
) -> Result<ValueFunction, BackupError> {
    dl_backup_sampled_inner(inst, policy, v, n_samples, seed, true)
}

/// Sequential reference for [`dl_backup_sampled`]: never touches the rayon
/// pool, produces bitwise-identical output. Exists for benchmarking and for
/// verifying scheduling independence.
pub fn dl_backup_sampled_seq(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
    n_samples: usize,
    seed: u64,
) -> Result<ValueFunction, BackupError> {
    dl_backup_sampled_inner(inst, policy, v, n_samples, seed, false)
}

fn dl_backup_sampled_inner(
    inst: &Instance,
    policy: &DecisionListPolicy,
    v: &ValueFunction,
    n_samples: usize,
    seed: u64,
    allow_parallel: bool,
) -> Result<ValueFunction, BackupError> {
    if n_samples == 0 {
        return Err(BackupError::BadSampleCount);
    }
    let values = map_states(inst.n_states(), allow_parallel, |s| {
        let mut backups = vec![0.0; inst.n_actions()];
        inst.mdp().action_backups(s, v, &mut backups);
        let mut rng = substream(seed, s as u64, 0x41445f53);
        // Count how often each action is the executed one, then take a
        // single weighted sum: the same estimator, but the empirical
        // weights line up with the exact path (a degenerate sampler gives
        // bitwise-equal results for any sample count).
        let mut counts = vec![0u64; inst.n_actions()];
        for _ in 0..n_samples {
            let set = inst.availability().sample_set(s, &mut rng);
            if let Some(k) = policy.execute(s, set) {
                counts[k] += 1;
            }
        }
        counts
            .iter()
            .zip(&backups)
            .map(|(&c, b)| (c as f64 / n_samples as f64) * b)
            .sum()
    });
    Ok(ValueFunction::from_vec(values))
}

/// Expected transition matrix and reward vector of a decision-list policy:
/// `P[s][s'] = E_A p^{mu_s(A)}_{s,s'}` and `r[s] = E_A r^{mu_s(A)}_s`.
pub fn dl_transition_matrix(
    inst: &Instance,
    policy: &DecisionListPolicy,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), BackupError> {
    let (n, m) = (inst.n_states(), inst.n_actions());
    let mut matrix = vec![vec![0.0; n]; n];
    let mut rewards = vec![0.0; n];
    for s in 0..n {
        let weights = execution_weights(inst.availability(), s, policy.order(s)).map_err(|_| {
            ModelError::UnsupportedModel {
                op: "dl_transition_matrix",
            }
        })?;
        for k in 0..m {
            let w = weights[k];
            if w == 0.0 {
                continue;
            }
            rewards[s] += w * inst.mdp().reward(s, k);
            for (s_next, p) in inst.mdp().transition_row(s, k).iter().enumerate() {
                matrix[s][s_next] += w * p;
            }
        }
    }
    Ok((matrix, rewards))
}

/// Sorts each state's actions by Q-value, descending, ties broken by
/// ascending action index. The resulting order is the greedy decision list.
pub fn greedy_dl(q: &QFunction) -> DecisionListPolicy {
    let orders = (0..q.n_states()).map(|s| greedy_order(q.row(s))).collect();
    DecisionListPolicy::new(orders).expect("sorted indices form a permutation")
}

/// Action indices of one state sorted by Q descending, ties ascending.
pub fn greedy_order(q_row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q_row.len()).collect();
    order.sort_by(|&a, &b| q_row[b].total_cmp(&q_row[a]).then(a.cmp(&b)));
    order
}

/// Applies `f` to every state index. With the `parallel` feature enabled and
/// `allow_parallel` set, large state spaces map on the rayon pool; each
/// state's slot is produced independently, so results are bitwise identical
/// either way.
#[cfg(feature = "parallel")]
pub(crate) fn map_states<T, F>(n_states: usize, allow_parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if allow_parallel && n_states >= crate::PARALLEL_STATE_THRESHOLD {
        (0..n_states).into_par_iter().map(f).collect()
    } else {
        (0..n_states).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_states<T, F>(n_states: usize, allow_parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let _ = allow_parallel;
    (0..n_states).map(f).collect()
}
