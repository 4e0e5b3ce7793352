//! Domain types: base MDP, availability models, decision-list policies,
//! value and Q functions, and instance validation.

use crate::set::{nonempty_subsets, ActionSet, MAX_SET_ACTIONS};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Row-sum tolerance for transition kernels and explicit subset tables.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite discounted MDP over a fixed base action set.
///
/// Every state carries the same `n_actions` base actions; which of them can
/// actually be executed on a given visit is governed by a separate
/// [`AvailabilityModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    /// `rewards[s * n_actions + k]`
    rewards: Vec<f64>,
    /// `transitions[(s * n_actions + k) * n_states + s']`
    transitions: Vec<f64>,
}

impl BaseMdp {
    /// Builds a base MDP from nested rows. Dimensions are checked here;
    /// numeric invariants (stochastic rows, finite rewards, discount range)
    /// are checked by [`Instance::new`].
    pub fn new(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ValidationError> {
        if n_states == 0 || n_actions == 0 {
            return Err(ValidationError::DimensionMismatch {
                what: "n_states and n_actions must be positive".into(),
            });
        }
        if rewards.len() != n_states || rewards.iter().any(|row| row.len() != n_actions) {
            return Err(ValidationError::DimensionMismatch {
                what: format!("rewards must be {n_states}x{n_actions}"),
            });
        }
        if transitions.len() != n_states
            || transitions
                .iter()
                .any(|per_action| per_action.len() != n_actions)
            || transitions
                .iter()
                .flatten()
                .any(|row| row.len() != n_states)
        {
            return Err(ValidationError::DimensionMismatch {
                what: format!("transitions must be {n_states}x{n_actions}x{n_states}"),
            });
        }
        Ok(BaseMdp {
            n_states,
            n_actions,
            discount,
            rewards: rewards.into_iter().flatten().collect(),
            transitions: transitions.into_iter().flatten().flatten().collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: usize, k: usize) -> f64 {
        self.rewards[s * self.n_actions + k]
    }

    /// Transition distribution over successor states for `(s, k)`.
    pub fn transition_row(&self, s: usize, k: usize) -> &[f64] {
        let base = (s * self.n_actions + k) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    /// `r^k_s + gamma * sum_{s'} p^k_{s,s'} v(s')` for every action of `s`.
    pub fn action_backups(&self, s: usize, v: &ValueFunction, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_actions);
        for (k, slot) in out.iter_mut().enumerate() {
            let dot: f64 = self
                .transition_row(s, k)
                .iter()
                .zip(v.as_slice())
                .map(|(p, value)| p * value)
                .sum();
            *slot = self.reward(s, k) + self.discount * dot;
        }
    }

    /// Largest absolute one-step reward; `max|r| / (1 - gamma)` bounds any
    /// achievable value.
    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0, |acc, r| acc.max(r.abs()))
    }
}

/// One entry of an explicit per-state subset table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetProb {
    pub set: ActionSet,
    pub prob: f64,
}

/// Distribution family a seeded sampler draws from. Exact solvers never look
/// inside; only [`AvailabilityModel::sample_set`] does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SamplerDist {
    /// Every action always available.
    Full { n_actions: usize },
    /// Independent per-action availability probabilities.
    Pda { rho: Vec<Vec<f64>> },
    /// Categorical over listed subsets.
    Explicit { support: Vec<Vec<SubsetProb>> },
}

/// Per-state distribution over realized action subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AvailabilityModel {
    /// Product distribution: action `k` at state `s` is available
    /// independently with probability `rho[s][k]`.
    Pda { rho: Vec<Vec<f64>> },
    /// Explicit categorical distribution over subsets, listed per state.
    Explicit { support: Vec<Vec<SubsetProb>> },
    /// Seeded black-box sampler. The underlying distribution is carried for
    /// reproducibility but is only ever *sampled*, never summed over.
    SamplerSeed { seed: u64, dist: SamplerDist },
}

impl AvailabilityModel {
    /// Full availability (all `rho = 1`): the degenerate case in which the
    /// instance behaves exactly like its base MDP.
    pub fn full(n_states: usize, n_actions: usize) -> Self {
        AvailabilityModel::Pda {
            rho: vec![vec![1.0; n_actions]; n_states],
        }
    }

    /// Wraps an exact model as a seeded black-box sampler.
    pub fn into_sampler(self, seed: u64) -> Self {
        let dist = match self {
            AvailabilityModel::Pda { rho } => SamplerDist::Pda { rho },
            AvailabilityModel::Explicit { support } => SamplerDist::Explicit { support },
            AvailabilityModel::SamplerSeed { dist, .. } => dist,
        };
        AvailabilityModel::SamplerSeed { seed, dist }
    }

    pub fn is_sampler(&self) -> bool {
        matches!(self, AvailabilityModel::SamplerSeed { .. })
    }

    /// Seed of the black-box sampler, if this model is one.
    pub fn sampler_seed(&self) -> Option<u64> {
        match self {
            AvailabilityModel::SamplerSeed { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    /// `P_s(A)` for exact models.
    ///
    /// PDA: `prod_{k in A} rho_k * prod_{k not in A} (1 - rho_k)`.
    /// Explicit: table lookup, 0 for absent subsets.
    pub fn subset_probability(&self, s: usize, set: ActionSet) -> Result<f64, ModelError> {
        match self {
            AvailabilityModel::Pda { rho } => {
                let rho_s = &rho[s];
                if let Some(max) = set.max_action() {
                    if max >= rho_s.len() {
                        return Err(ModelError::BadActionIndex {
                            action: max,
                            n_actions: rho_s.len(),
                        });
                    }
                }
                let mut p = 1.0;
                for (k, &r) in rho_s.iter().enumerate() {
                    p *= if set.contains(k) { r } else { 1.0 - r };
                }
                Ok(p)
            }
            AvailabilityModel::Explicit { support } => Ok(support[s]
                .iter()
                .filter(|entry| entry.set == set)
                .map(|entry| entry.prob)
                .sum()),
            AvailabilityModel::SamplerSeed { .. } => Err(ModelError::UnsupportedModel {
                op: "subset_probability",
            }),
        }
    }

    /// Support of `P_s` as an explicit subset table (exact models only).
    ///
    /// For PDA this enumerates `2^m` subsets and keeps those of positive
    /// probability, so it is limited to small action sets.
    pub fn state_support(&self, s: usize, n_actions: usize) -> Result<Vec<SubsetProb>, ModelError> {
        match self {
            AvailabilityModel::Pda { .. } => {
                if n_actions > crate::embedded::MAX_ENUMERABLE_ACTIONS {
                    return Err(ModelError::TooLarge {
                        n_actions,
                        limit: crate::embedded::MAX_ENUMERABLE_ACTIONS,
                    });
                }
                let mut entries = Vec::new();
                for set in nonempty_subsets(n_actions) {
                    let p = self.subset_probability(s, set)?;
                    if p > 0.0 {
                        entries.push(SubsetProb { set, prob: p });
                    }
                }
                Ok(entries)
            }
            AvailabilityModel::Explicit { support } => Ok(support[s].clone()),
            AvailabilityModel::SamplerSeed { .. } => Err(ModelError::UnsupportedModel {
                op: "state_support",
            }),
        }
    }

    /// Expands a PDA model into the equivalent explicit table.
    pub fn to_explicit(&self, n_states: usize, n_actions: usize) -> Result<Self, ModelError> {
        let support = (0..n_states)
            .map(|s| self.state_support(s, n_actions))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AvailabilityModel::Explicit { support })
    }

    /// Draws a realized available set at `s`.
    ///
    /// The draw consumes a fixed amount of randomness per model kind, so a
    /// given seed always reproduces the same subset sequence.
    pub fn sample_set(&self, s: usize, rng: &mut impl Rng) -> ActionSet {
        match self {
            AvailabilityModel::Pda { rho } => sample_pda_set(&rho[s], rng),
            AvailabilityModel::Explicit { support } => sample_explicit_set(&support[s], rng),
            AvailabilityModel::SamplerSeed { dist, .. } => match dist {
                SamplerDist::Full { n_actions } => ActionSet::full(*n_actions),
                SamplerDist::Pda { rho } => sample_pda_set(&rho[s], rng),
                SamplerDist::Explicit { support } => sample_explicit_set(&support[s], rng),
            },
        }
    }
}

fn sample_pda_set(rho_s: &[f64], rng: &mut impl Rng) -> ActionSet {
    let mut set = ActionSet::EMPTY;
    for (k, &r) in rho_s.iter().enumerate() {
        if rng.gen_bool(r.clamp(0.0, 1.0)) {
            set.insert(k);
        }
    }
    set
}

fn sample_explicit_set(support_s: &[SubsetProb], rng: &mut impl Rng) -> ActionSet {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for entry in support_s {
        acc += entry.prob;
        if u < acc {
            return entry.set;
        }
    }
    support_s.last().map(|e| e.set).unwrap_or(ActionSet::EMPTY)
}

/// Deterministic per-(seed, index) stream: used wherever a master seed has to
/// spawn independent substreams (per state, per iteration, per episode).
pub fn substream(master: u64, a: u64, b: u64) -> ChaCha8Rng {
    // SplitMix64-style mixing so nearby indices decorrelate.
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Per-state total ordering of the base actions; executed by taking the
/// first listed action that is available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionListPolicy {
    orders: Vec<Vec<usize>>,
}

impl DecisionListPolicy {
    pub fn new(orders: Vec<Vec<usize>>) -> Result<Self, ValidationError> {
        for (s, order) in orders.iter().enumerate() {
            if !is_permutation(order) {
                return Err(ValidationError::NotAPermutation { state: s });
            }
        }
        Ok(DecisionListPolicy { orders })
    }

    /// The identity ordering `[0, 1, .., m-1]` at every state.
    pub fn identity(n_states: usize, n_actions: usize) -> Self {
        DecisionListPolicy {
            orders: vec![(0..n_actions).collect(); n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.orders.len()
    }

    pub fn order(&self, s: usize) -> &[usize] {
        &self.orders[s]
    }

    pub fn orders(&self) -> &[Vec<usize>] {
        &self.orders
    }

    /// First action of the state's list contained in `available`.
    pub fn execute(&self, s: usize, available: ActionSet) -> Option<usize> {
        self.orders[s]
            .iter()
            .copied()
            .find(|&k| available.contains(k))
    }
}

fn is_permutation(order: &[usize]) -> bool {
    let m = order.len();
    let mut seen = vec![false; m];
    for &k in order {
        if k >= m || seen[k] {
            return false;
        }
        seen[k] = true;
    }
    true
}

/// A real-valued function over base states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn zeros(n_states: usize) -> Self {
        ValueFunction(vec![0.0; n_states])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ValueFunction(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Sup-norm distance to another value function.
    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl fmt::Display for ValueFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        write!(f, "]")
    }
}

/// A real-valued function over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QFunction {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        QFunction {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, |r| r.len());
        debug_assert!(rows.iter().all(|r| r.len() == n_actions));
        QFunction {
            n_states,
            n_actions,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values[s * self.n_actions + k]
    }

    pub fn set(&mut self, s: usize, k: usize, value: f64) {
        self.values[s * self.n_actions + k] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// A single violated invariant found during validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("transition row (state {state}, action {action}) is not a distribution (sum {sum})")]
    NonStochasticRow {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("state {state} can realize an empty action set")]
    EmptySubsetPossible { state: usize },
    #[error("discount {discount} outside [0, 1)")]
    BadDiscount { discount: f64 },
    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: String },
    #[error("reward (state {state}, action {action}) is not finite")]
    NonFiniteReward { state: usize, action: usize },
    #[error("availability probability (state {state}): {what}")]
    BadAvailability { state: usize, what: String },
    #[error("state {state}: action order is not a permutation")]
    NotAPermutation { state: usize },
}

/// Errors from availability-model queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{op} is not defined for black-box sampler models")]
    UnsupportedModel { op: &'static str },
    #[error("action index {action} out of range (n_actions = {n_actions})")]
    BadActionIndex { action: usize, n_actions: usize },
    #[error("subset enumeration over {n_actions} actions exceeds the limit of {limit}")]
    TooLarge { n_actions: usize, limit: usize },
}

/// A validated (base MDP, availability model) pair.
///
/// Construction is the only way to obtain one, so every operation downstream
/// can rely on the type invariants. Immutable and `Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    mdp: BaseMdp,
    availability: AvailabilityModel,
}

impl Instance {
    /// Validates all invariants, reporting *every* violation found.
    pub fn new(
        mdp: BaseMdp,
        availability: AvailabilityModel,
    ) -> Result<Self, Vec<ValidationError>> {
        let errors = validate(&mdp, &availability);
        if errors.is_empty() {
            Ok(Instance { mdp, availability })
        } else {
            Err(errors)
        }
    }

    pub fn mdp(&self) -> &BaseMdp {
        &self.mdp
    }

    pub fn availability(&self) -> &AvailabilityModel {
        &self.availability
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.mdp.discount
    }

    /// Same base MDP with a different (validated) availability model.
    pub fn with_availability(
        &self,
        availability: AvailabilityModel,
    ) -> Result<Self, Vec<ValidationError>> {
        Instance::new(self.mdp.clone(), availability)
    }

    /// Same instance with every action made surely available; solving it is
    /// equivalent to solving the base MDP.
    pub fn assume_full_availability(&self) -> Instance {
        Instance {
            mdp: self.mdp.clone(),
            availability: AvailabilityModel::full(self.n_states(), self.n_actions()),
        }
    }
}

/// Checks every type invariant of the pair, collecting all violations.
pub fn validate(mdp: &BaseMdp, availability: &AvailabilityModel) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let (n, m) = (mdp.n_states, mdp.n_actions);

    if !(mdp.discount >= 0.0 && mdp.discount < 1.0) {
        errors.push(ValidationError::BadDiscount {
            discount: mdp.discount,
        });
    }
    for s in 0..n {
        for k in 0..m {
            if !mdp.reward(s, k).is_finite() {
                errors.push(ValidationError::NonFiniteReward {
                    state: s,
                    action: k,
                });
            }
            let row = mdp.transition_row(s, k);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&p| p < 0.0 || !p.is_finite())
            {
                errors.push(ValidationError::NonStochasticRow {
                    state: s,
                    action: k,
                    sum,
                });
            }
        }
    }

    validate_availability(availability, n, m, &mut errors);
    errors
}

fn validate_availability(
    availability: &AvailabilityModel,
    n: usize,
    m: usize,
    errors: &mut Vec<ValidationError>,
) {
    match availability {
        AvailabilityModel::Pda { rho } => validate_pda(rho, n, m, errors),
        AvailabilityModel::Explicit { support } => validate_explicit(support, n, m, errors),
        AvailabilityModel::SamplerSeed { dist, .. } => match dist {
            SamplerDist::Full { n_actions } => {
                if *n_actions != m || *n_actions > MAX_SET_ACTIONS {
                    errors.push(ValidationError::DimensionMismatch {
                        what: format!("full sampler covers {n_actions} actions, expected {m}"),
                    });
                }
            }
            SamplerDist::Pda { rho } => validate_pda(rho, n, m, errors),
            SamplerDist::Explicit { support } => validate_explicit(support, n, m, errors),
        },
    }
}

fn validate_pda(rho: &[Vec<f64>], n: usize, m: usize, errors: &mut Vec<ValidationError>) {
    if rho.len() != n || rho.iter().any(|row| row.len() != m) {
        errors.push(ValidationError::DimensionMismatch {
            what: format!("availability rho must be {n}x{m}"),
        });
        return;
    }
    for (s, row) in rho.iter().enumerate() {
        for &r in row {
            if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                errors.push(ValidationError::BadAvailability {
                    state: s,
                    what: format!("rho = {r} outside [0, 1]"),
                });
            }
        }
        // Some action must be surely available, otherwise the all-unavailable
        // subset has positive probability.
        if !row.contains(&1.0) {
            errors.push(ValidationError::EmptySubsetPossible { state: s });
        }
    }
}

fn validate_explicit(
    support: &[Vec<SubsetProb>],
    n: usize,
    m: usize,
    errors: &mut Vec<ValidationError>,
) {
    if support.len() != n {
        errors.push(ValidationError::DimensionMismatch {
            what: format!("explicit support must list {n} states"),
        });
        return;
    }
    if m > MAX_SET_ACTIONS {
        errors.push(ValidationError::DimensionMismatch {
            what: format!("explicit models support at most {MAX_SET_ACTIONS} actions"),
        });
        return;
    }
    for (s, entries) in support.iter().enumerate() {
        let mut sum = 0.0;
        for entry in entries {
            if entry.set.is_empty() && entry.prob > 0.0 {
                errors.push(ValidationError::EmptySubsetPossible { state: s });
            }
            if let Some(max) = entry.set.max_action() {
                if max >= m {
                    errors.push(ValidationError::DimensionMismatch {
                        what: format!("state {s}: subset {} references action >= {m}", entry.set),
                    });
                }
            }
            if !(0.0..=1.0).contains(&entry.prob) || !entry.prob.is_finite() {
                errors.push(ValidationError::BadAvailability {
                    state: s,
                    what: format!("subset probability {} outside [0, 1]", entry.prob),
                });
            }
            sum += entry.prob;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            errors.push(ValidationError::BadAvailability {
                state: s,
                what: format!("subset probabilities sum to {sum}"),
            });
        }
        if entries.is_empty() {
            errors.push(ValidationError::EmptySubsetPossible { state: s });
        }
    }
}
