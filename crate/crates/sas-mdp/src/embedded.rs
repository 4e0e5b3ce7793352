//! Brute-force embedded MDP: every (base state, realized subset) pair with
//! positive probability becomes a state of an ordinary MDP. Exponential in
//! the number of actions, so it is strictly a ground-truth oracle for the
//! compressed-space solvers on small instances.

use crate::model::{AvailabilityModel, Instance, ModelError, QFunction, ValueFunction};
use crate::set::ActionSet;
use std::collections::HashMap;
use thiserror::Error;

/// Cap on subset enumeration: `2^m` embedded states per base state.
pub const MAX_ENUMERABLE_ACTIONS: usize = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddedError {
    #[error("embedded construction refuses {n_actions} actions (limit {MAX_ENUMERABLE_ACTIONS})")]
    TooLarge { n_actions: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no action available in the given set")]
    EmptySet,
}

/// The embedded MDP of an instance. States are `(base state, subset)` pairs
/// restricted to subsets of positive probability.
#[derive(Debug, Clone)]
pub struct EmbeddedMdp {
    inst: Instance,
    /// All embedded states, grouped by base state.
    states: Vec<(usize, ActionSet)>,
    /// `P_s(A)` aligned with `states`.
    probs: Vec<f64>,
    /// First embedded index of each base state's group.
    offsets: Vec<usize>,
    index: HashMap<(usize, u64), usize>,
}

impl EmbeddedMdp {
    pub fn n_embedded_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[(usize, ActionSet)] {
        &self.states
    }

    pub fn discount(&self) -> f64 {
        self.inst.discount()
    }

    pub fn state_index(&self, base: usize, set: ActionSet) -> Option<usize> {
        self.index.get(&(base, set.bits())).copied()
    }

    /// `P_s(A)` of the embedded state.
    pub fn state_probability(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    /// Transition distribution over embedded states for action `k` at
    /// embedded state `idx`: `p^k_{s,s'} * P_{s'}(A')`.
    pub fn transition_row(&self, idx: usize, k: usize) -> Vec<(usize, f64)> {
        let (s, set) = self.states[idx];
        debug_assert!(set.contains(k));
        let mut row = Vec::new();
        for (s_next, &p) in self.inst.mdp().transition_row(s, k).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let group = self.offsets[s_next]..self.offsets[s_next + 1];
            for e_next in group {
                row.push((e_next, p * self.probs[e_next]));
            }
        }
        row
    }

    /// One sweep of the embedded Bellman operator.
    ///
    /// The inner expectation over successor subsets is shared across all
    /// embedded states of a base state, so a sweep costs
    /// `O(|S_e| * m * n)` rather than touching every embedded transition.
    pub fn bellman_apply(&self, v: &[f64]) -> Vec<f64> {
        let expected = self.expectation(v);
        self.states
            .iter()
            .map(|&(s, set)| {
                set.iter()
                    .map(|k| self.action_value(s, k, &expected))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Expectation over subsets per base state: `E V(s) = sum_A P_s(A) V(s o A)`.
    pub fn expectation(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.states.len());
        let n = self.inst.n_states();
        let mut out = vec![0.0; n];
        for (idx, &(s, _)) in self.states.iter().enumerate() {
            out[s] += self.probs[idx] * v[idx];
        }
        out
    }

    fn action_value(&self, s: usize, k: usize, expected: &[f64]) -> f64 {
        let dot: f64 = self
            .inst
            .mdp()
            .transition_row(s, k)
            .iter()
            .zip(expected)
            .map(|(p, ev)| p * ev)
            .sum();
        self.inst.mdp().reward(s, k) + self.inst.discount() * dot
    }
}

/// Builds the embedded MDP. Refuses product-form models with more than
/// [`MAX_ENUMERABLE_ACTIONS`] actions and sampler models outright.
pub fn build_embedded(inst: &Instance) -> Result<EmbeddedMdp, EmbeddedError> {
    let (n, m) = (inst.n_states(), inst.n_actions());
    match inst.availability() {
        AvailabilityModel::Pda { .. } => {
            if m > MAX_ENUMERABLE_ACTIONS {
                return Err(EmbeddedError::TooLarge { n_actions: m });
            }
        }
        AvailabilityModel::Explicit { .. } => {}
        AvailabilityModel::SamplerSeed { .. } => {
            return Err(ModelError::UnsupportedModel {
                op: "build_embedded",
            }
            .into())
        }
    }

    let mut states = Vec::new();
    let mut probs = Vec::new();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut index = HashMap::new();
    for s in 0..n {
        offsets.push(states.len());
        // Consolidate duplicate subsets and drop zero-probability ones:
        // unreachable embedded states are never materialized.
        let mut merged: HashMap<u64, f64> = HashMap::new();
        for entry in inst.availability().state_support(s, m)? {
            if entry.prob > 0.0 {
                *merged.entry(entry.set.bits()).or_insert(0.0) += entry.prob;
            }
        }
        let mut group: Vec<(u64, f64)> = merged.into_iter().collect();
        group.sort_by_key(|&(bits, _)| bits);
        for (bits, prob) in group {
            index.insert((s, bits), states.len());
            states.push((s, ActionSet::from_bits(bits)));
            probs.push(prob);
        }
    }
    offsets.push(states.len());

    Ok(EmbeddedMdp {
        inst: inst.clone(),
        states,
        probs,
        offsets,
        index,
    })
}

/// Result of value iteration on the embedded MDP.
#[derive(Debug, Clone)]
pub struct EmbeddedSolution {
    /// Optimal value per embedded state.
    pub values: Vec<f64>,
    /// Greedy action per embedded state; always a member of its subset.
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Standard value iteration on the embedded MDP.
///
/// Stops once the sup-norm residual is below `eps * (1 - gamma) / (2 gamma)`,
/// which makes the greedy policy eps-optimal and the returned values accurate
/// to `eps / 2`.
pub fn solve_embedded_vi(emb: &EmbeddedMdp, eps: f64) -> EmbeddedSolution {
    assert!(eps > 0.0, "eps must be positive");
    let gamma = emb.discount();
    let threshold = crate::solve::residual_threshold(eps, gamma);

    let mut v = vec![0.0; emb.n_embedded_states()];
    let mut iterations = 0;
    loop {
        let next = emb.bellman_apply(&v);
        let residual = sup_diff(&next, &v);
        v = next;
        iterations += 1;
        if residual <= threshold {
            break;
        }
    }

    let expected = emb.expectation(&v);
    let policy = emb
        .states()
        .iter()
        .map(|&(s, set)| {
            set.iter()
                .max_by(|&a, &b| {
                    emb.action_value(s, a, &expected)
                        .total_cmp(&emb.action_value(s, b, &expected))
                        .then(b.cmp(&a))
                })
                .expect("validated subsets are nonempty")
        })
        .collect();

    EmbeddedSolution {
        values: v,
        policy,
        iterations,
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Compresses an embedded-space value function to base-state space by taking
/// the expectation over realized subsets.
pub fn compress_value(emb: &EmbeddedMdp, v_e: &[f64]) -> ValueFunction {
    ValueFunction::from_vec(emb.expectation(v_e))
}

/// Greedy embedded policy recovered from a compressed value function: a
/// one-step backup of `v_c` scores every base action, and each realized set
/// picks its best member.
#[derive(Debug, Clone)]
pub struct CompressedGreedyPolicy {
    q: QFunction,
}

impl CompressedGreedyPolicy {
    pub fn q(&self) -> &QFunction {
        &self.q
    }

    /// Best available action at `(s, available)`; ties by ascending index.
    pub fn action(&self, s: usize, available: ActionSet) -> Result<usize, EmbeddedError> {
        available
            .iter()
            .max_by(|&a, &b| {
                self.q
                    .get(s, a)
                    .total_cmp(&self.q.get(s, b))
                    .then(b.cmp(&a))
            })
            .ok_or(EmbeddedError::EmptySet)
    }
}

/// Builds the greedy embedded policy for an arbitrary compressed value
/// function (optimal when `v_c` is the optimal compressed value).
pub fn extract_embedded_policy(inst: &Instance, v_c: &ValueFunction) -> CompressedGreedyPolicy {
    let (n, m) = (inst.n_states(), inst.n_actions());
    let mut q = QFunction::zeros(n, m);
    let mut backups = vec![0.0; m];
    for s in 0..n {
        inst.mdp().action_backups(s, v_c, &mut backups);
        q.row_mut(s).copy_from_slice(&backups);
    }
    CompressedGreedyPolicy { q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AvailabilityModel, BaseMdp};
    use crate::sample::{random_instance, two_state_instance, InstanceShape};

    #[test]
    fn two_state_embedding_has_three_states() {
        let inst = two_state_instance(0.2, 0.9);
        let emb = build_embedded(&inst).unwrap();
        assert_eq!(emb.n_embedded_states(), 3);
        assert!(emb
            .state_index(0, ActionSet::from_indices([0, 1]))
            .is_some());
        assert!(emb
            .state_index(1, ActionSet::from_indices([0, 1]))
            .is_some());
        assert!(emb.state_index(1, ActionSet::singleton(0)).is_some());
        // The zero-probability subset {Up} is never materialized.
        assert!(emb.state_index(1, ActionSet::singleton(1)).is_none());
    }

    #[test]
    fn go_splits_by_availability_of_up() {
        let p = 0.2;
        let inst = two_state_instance(p, 0.9);
        let emb = build_embedded(&inst).unwrap();
        let s1 = emb.state_index(0, ActionSet::from_indices([0, 1])).unwrap();
        let both = emb.state_index(1, ActionSet::from_indices([0, 1])).unwrap();
        let down_only = emb.state_index(1, ActionSet::singleton(0)).unwrap();

        // Taking Go at s1 reaches s2 with {Up, Down} w.p. p, {Down} w.p. 1-p.
        let row = emb.transition_row(s1, 1);
        let lookup: std::collections::HashMap<usize, f64> = row.into_iter().collect();
        assert!((lookup[&both] - p).abs() < 1e-15);
        assert!((lookup[&down_only] - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn transition_rows_are_stochastic() {
        for seed in 0..10 {
            let inst = random_instance(&InstanceShape::explicit(3, 4), seed);
            let emb = build_embedded(&inst).unwrap();
            for idx in 0..emb.n_embedded_states() {
                let (_, set) = emb.states()[idx];
                for k in set.iter() {
                    let total: f64 = emb.transition_row(idx, k).iter().map(|(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-10, "non-stochastic embedded row");
                }
            }
        }
    }

    #[test]
    fn full_availability_embeds_isomorphically() {
        let inst = random_instance(&InstanceShape::pda(4, 3), 3).assume_full_availability();
        let emb = build_embedded(&inst).unwrap();
        assert_eq!(emb.n_embedded_states(), 4);
        for (idx, &(s, set)) in emb.states().iter().enumerate() {
            assert_eq!(idx, s);
            assert_eq!(set, ActionSet::full(3));
            assert_eq!(emb.state_probability(idx), 1.0);
        }
    }

    #[test]
    fn refuses_large_pda_and_samplers() {
        let n_actions = MAX_ENUMERABLE_ACTIONS + 1;
        let rewards = vec![vec![0.0; n_actions]];
        let transitions = vec![vec![vec![1.0]; n_actions]];
        let mdp = BaseMdp::new(1, n_actions, 0.9, rewards, transitions).unwrap();
        let inst = Instance::new(mdp, AvailabilityModel::full(1, n_actions)).unwrap();
        assert!(matches!(
            build_embedded(&inst),
            Err(EmbeddedError::TooLarge { .. })
        ));

        let sampled = two_state_instance(0.2, 0.9);
        let sampled = sampled
            .with_availability(sampled.availability().clone().into_sampler(1))
            .unwrap();
        assert!(matches!(
            build_embedded(&sampled),
            Err(EmbeddedError::Model(ModelError::UnsupportedModel { .. }))
        ));
    }

    #[test]
    fn two_state_optimum_is_stay_forever_for_low_p() {
        // p = 0.2 < 1/2: staying at s1 yields 0.5 per stage, a geometric
        // series worth 0.5 / (1 - 0.9) = 5.
        let inst = two_state_instance(0.2, 0.9);
        let emb = build_embedded(&inst).unwrap();
        let sol = solve_embedded_vi(&emb, 1e-10);
        let s1 = emb.state_index(0, ActionSet::from_indices([0, 1])).unwrap();
        assert!((sol.values[s1] - 5.0).abs() < 1e-9);
        assert_eq!(sol.policy[s1], 0, "Stay is optimal at s1");
    }

    #[test]
    fn single_state_single_action_geometric_series() {
        let mdp = BaseMdp::new(1, 1, 0.9, vec![vec![1.0]], vec![vec![vec![1.0]]]).unwrap();
        let inst = Instance::new(mdp, AvailabilityModel::full(1, 1)).unwrap();
        let emb = build_embedded(&inst).unwrap();
        let sol = solve_embedded_vi(&emb, 1e-10);
        assert!((sol.values[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn full_availability_matches_plain_value_iteration() {
        // With every action always available the embedded MDP *is* the base
        // MDP; compare against a straightforward VI written here.
        let inst = random_instance(&InstanceShape::pda(4, 3), 21).assume_full_availability();
        let emb = build_embedded(&inst).unwrap();
        let sol = solve_embedded_vi(&emb, 1e-10);

        let mut v = vec![0.0; 4];
        for _ in 0..2000 {
            let mut next = vec![f64::NEG_INFINITY; 4];
            for s in 0..4 {
                for k in 0..3 {
                    let dot: f64 = inst
                        .mdp()
                        .transition_row(s, k)
                        .iter()
                        .zip(&v)
                        .map(|(p, value)| p * value)
                        .sum();
                    next[s] = next[s].max(inst.mdp().reward(s, k) + 0.9 * dot);
                }
            }
            v = next;
        }
        for s in 0..4 {
            assert!((sol.values[s] - v[s]).abs() < 1e-8);
        }
    }

    #[test]
    fn compress_value_is_expectation() {
        let p = 0.2;
        let inst = two_state_instance(p, 0.9);
        let emb = build_embedded(&inst).unwrap();
        let sol = solve_embedded_vi(&emb, 1e-10);
        let compressed = compress_value(&emb, &sol.values);
        let both = emb.state_index(1, ActionSet::from_indices([0, 1])).unwrap();
        let down_only = emb.state_index(1, ActionSet::singleton(0)).unwrap();
        let expected = p * sol.values[both] + (1.0 - p) * sol.values[down_only];
        assert!((compressed.get(1) - expected).abs() < 1e-12);
    }

    #[test]
    fn compress_value_of_constant_is_constant() {
        let inst = random_instance(&InstanceShape::explicit(3, 3), 9);
        let emb = build_embedded(&inst).unwrap();
        let v_e = vec![2.5; emb.n_embedded_states()];
        let compressed = compress_value(&emb, &v_e);
        for s in 0..3 {
            assert!((compressed.get(s) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn extracted_policy_agrees_with_embedded_solution() {
        for seed in 0..20 {
            let inst = random_instance(&InstanceShape::pda(3, 3), seed);
            let emb = build_embedded(&inst).unwrap();
            let sol = solve_embedded_vi(&emb, 1e-11);
            let v_c = compress_value(&emb, &sol.values);
            let greedy = extract_embedded_policy(&inst, &v_c);
            for (idx, &(s, set)) in emb.states().iter().enumerate() {
                assert_eq!(
                    greedy.action(s, set).unwrap(),
                    sol.policy[idx],
                    "greedy from V_c must match embedded VI at seed {seed}"
                );
            }
        }
    }

    #[test]
    fn singleton_set_forces_its_action() {
        let inst = two_state_instance(0.2, 0.9);
        let greedy = extract_embedded_policy(&inst, &ValueFunction::zeros(2));
        assert_eq!(greedy.action(1, ActionSet::singleton(0)).unwrap(), 0);
        assert!(matches!(
            greedy.action(1, ActionSet::EMPTY),
            Err(EmbeddedError::EmptySet)
        ));
    }

    #[test]
    fn stay_is_extracted_at_s1_for_low_p() {
        let inst = two_state_instance(0.2, 0.9);
        let emb = build_embedded(&inst).unwrap();
        let sol = solve_embedded_vi(&emb, 1e-10);
        let v_c = compress_value(&emb, &sol.values);
        let greedy = extract_embedded_policy(&inst, &v_c);
        assert_eq!(
            greedy.action(0, ActionSet::from_indices([0, 1])).unwrap(),
            0
        );
    }
}
