//! Linear-programming solution of the compressed MDP.
//!
//! The primal program minimizes a positively weighted sum of state values
//! subject to one constraint per (state, action permutation): the value must
//! dominate the expected Q-value of executing that permutation as a decision
//! list. Permutations are factorially many, so constraints are generated on
//! demand: the greedy (Q-sorted) permutation is always a maximally violated
//! one, giving an exact separation oracle.

use crate::backup::{execution_weights, greedy_order};
use crate::model::{DecisionListPolicy, Instance, ModelError, ValueFunction};
use crate::simplex::{simplex_solve, LinearProgram, SimplexError, SimplexSolution};
use crate::solve::one_step_q;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state weights must be positive")]
    BadWeights,
    #[error("constraint generation exceeded {rounds} rounds (max violation {violation:.3e})")]
    MaxRoundsExceeded { rounds: usize, violation: f64 },
    #[error("relaxed LP reported unbounded; the per-state seed constraints should prevent this")]
    Unbounded,
    #[error("relaxed LP infeasible: {0}")]
    Simplex(SimplexError),
    #[error("violated constraints were already active; simplex tolerance too loose")]
    Stalled,
}

/// One generated constraint: `coeffs . v >= rhs`, the linearization of
/// "v_s dominates the decision list `order` at state `state`".
#[derive(Debug, Clone)]
pub struct DlConstraint {
    pub state: usize,
    pub order: Vec<usize>,
    /// Length-n row over the value variables.
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Builds the constraint row for a permutation at a state by expanding
/// `Q_s(order) = sum_k w_k (r^k_s + gamma p^k_s . v)` and moving the value
/// terms to the left-hand side.
pub fn dl_constraint(
    inst: &Instance,
    state: usize,
    order: &[usize],
) -> Result<DlConstraint, LpError> {
    let n = inst.n_states();
    let weights = execution_weights(inst.availability(), state, order)?;
    let mut coeffs = vec![0.0; n];
    coeffs[state] = 1.0;
    let mut rhs = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        rhs += w * inst.mdp().reward(state, k);
        for (s_next, &p) in inst.mdp().transition_row(state, k).iter().enumerate() {
            coeffs[s_next] -= inst.discount() * w * p;
        }
    }
    Ok(DlConstraint {
        state,
        order: order.to_vec(),
        coeffs,
        rhs,
    })
}

/// Expected Q-value of executing permutation `order` at `state` given the
/// value estimate `v`.
pub fn dl_q_value(
    inst: &Instance,
    state: usize,
    order: &[usize],
    v: &ValueFunction,
) -> Result<f64, LpError> {
    let weights = execution_weights(inst.availability(), state, order)?;
    let mut backups = vec![0.0; inst.n_actions()];
    inst.mdp().action_backups(state, v, &mut backups);
    Ok(weights.iter().zip(&backups).map(|(w, b)| w * b).sum())
}

/// Finds a maximally violated constraint at `state`: the permutation sorting
/// actions by one-step Q-value (descending, ties by index) maximizes the
/// expected executed Q-value over all permutations.
///
/// Returns the permutation and its violation `Q_s(order) - v_s` (positive
/// means the constraint is violated by `v`).
pub fn separation_oracle(
    inst: &Instance,
    v: &ValueFunction,
    state: usize,
) -> Result<(Vec<usize>, f64), LpError> {
    let mut backups = vec![0.0; inst.n_actions()];
    inst.mdp().action_backups(state, v, &mut backups);
    let order = greedy_order(&backups);
    let weights = execution_weights(inst.availability(), state, &order)?;
    let q: f64 = weights.iter().zip(&backups).map(|(w, b)| w * b).sum();
    Ok((order, q - v.get(state)))
}

/// Options for [`solve_lp`].
#[derive(Debug, Clone, Default)]
pub struct LpOptions {
    /// Positive per-state objective weights; uniform `1/n` when absent.
    pub alpha: Option<Vec<f64>>,
    /// Constraints violated by more than this are added; also the
    /// termination criterion. Zero or negative selects the default `1e-8`.
    pub tol: f64,
    /// Cap on generation rounds; `None` selects `10 * n * m`.
    pub max_rounds: Option<usize>,
}

/// Result of constraint generation.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: ValueFunction,
    pub policy: DecisionListPolicy,
    /// Active constraints when generation stopped (including the seeds).
    pub constraints: usize,
    pub rounds: usize,
    /// Relaxed objective after each round; non-decreasing.
    pub objective_trace: Vec<f64>,
}

/// Solves the compressed MDP by LP constraint generation.
///
/// Seeds one constraint per state (the identity permutation, which keeps the
/// relaxation bounded), then alternates: solve the relaxed LP over split
/// positive variables with the dense simplex, query the separation oracle at
/// every state, add everything violated by more than `tol`.
pub fn solve_lp(inst: &Instance, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let (n, m) = (inst.n_states(), inst.n_actions());
    let tol = if opts.tol > 0.0 { opts.tol } else { 1e-8 };
    let max_rounds = opts.max_rounds.unwrap_or(10 * n * m);
    let alpha = match &opts.alpha {
        Some(a) => {
            if a.len() != n || a.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
                return Err(LpError::BadWeights);
            }
            a.clone()
        }
        None => vec![1.0 / n as f64; n],
    };

    let mut active: Vec<DlConstraint> = Vec::new();
    let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();
    for s in 0..n {
        let identity: Vec<usize> = (0..m).collect();
        seen.insert((s, identity.clone()));
        active.push(dl_constraint(inst, s, &identity)?);
    }

    let mut objective_trace = Vec::new();
    let mut values = ValueFunction::zeros(n);
    for round in 1..=max_rounds {
        let relaxed = solve_relaxed(&alpha, &active)?;
        values = ValueFunction::from_vec(relaxed);
        objective_trace.push(
            alpha
                .iter()
                .zip(values.as_slice())
                .map(|(a, v)| a * v)
                .sum(),
        );

        let mut added = false;
        let mut max_violation = 0.0_f64;
        for s in 0..n {
            let (order, violation) = separation_oracle(inst, &values, s)?;
            max_violation = max_violation.max(violation);
            if violation > tol {
                let key = (s, order.clone());
                if seen.insert(key) {
                    active.push(dl_constraint(inst, s, &order)?);
                    added = true;
                }
            }
        }

        if max_violation <= tol {
            let policy = greedy_policy_at(inst, &values)?;
            return Ok(LpSolution {
                values,
                policy,
                constraints: active.len(),
                rounds: round,
                objective_trace,
            });
        }
        if !added {
            // Oracle still sees a violation but every such constraint is
            // already active: the simplex failed to honor it.
            return Err(LpError::Stalled);
        }
    }

    let final_violation = (0..n)
        .map(|s| separation_oracle(inst, &values, s).map(|(_, v)| v))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Err(LpError::MaxRoundsExceeded {
        rounds: max_rounds,
        violation: final_violation,
    })
}

fn greedy_policy_at(
    inst: &Instance,
    values: &ValueFunction,
) -> Result<DecisionListPolicy, LpError> {
    let q = one_step_q(inst, values);
    Ok(crate::backup::greedy_dl(&q))
}

/// Solves the relaxed LP `min alpha . v  s.t.  coeffs . v >= rhs` with free
/// `v`, by splitting `v = v_plus - v_minus` into nonnegative parts.
fn solve_relaxed(alpha: &[f64], active: &[DlConstraint]) -> Result<Vec<f64>, LpError> {
    let n = alpha.len();
    let mut objective = Vec::with_capacity(2 * n);
    objective.extend_from_slice(alpha);
    objective.extend(alpha.iter().map(|a| -a));

    let mut rows = Vec::with_capacity(active.len());
    let mut rhs = Vec::with_capacity(active.len());
    for constraint in active {
        let mut row = Vec::with_capacity(2 * n);
        row.extend_from_slice(&constraint.coeffs);
        row.extend(constraint.coeffs.iter().map(|c| -c));
        rows.push(row);
        rhs.push(constraint.rhs);
    }

    let lp = LinearProgram {
        objective,
        rows,
        rhs,
    };
    let SimplexSolution { x, .. } = simplex_solve(&lp).map_err(|e| match e {
        SimplexError::Unbounded => LpError::Unbounded,
        other => LpError::Simplex(other),
    })?;
    Ok((0..n).map(|s| x[s] - x[n + s]).collect())
}
