//! Seeded construction of instances: the bundled two-state example and
//! random generators used by tests, cross-checks and demos.

use crate::model::{
    substream, AvailabilityModel, BaseMdp, DecisionListPolicy, Instance, QFunction, SubsetProb,
    ValueFunction,
};
use crate::set::ActionSet;
use rand::Rng;

/// The two-state example: at `s1` both `Stay` (action 0) and `Go` (action 1)
/// are always available with reward 1/2; at `s2`, `Down` (action 0, reward 0)
/// is always available while `Up` (action 1, reward 1) is available with
/// probability `p`. Both actions at `s2` return to `s1`.
///
/// For `p < 1/2` staying at `s1` forever is optimal, worth `0.5 / (1 - gamma)`;
/// for `p > 1/2` the alternating policy is optimal, worth
/// `(0.5 + gamma * p) / (1 - gamma^2)` from `s1`.
pub fn two_state_instance(p: f64, gamma: f64) -> Instance {
    let mdp = BaseMdp::new(
        2,
        2,
        gamma,
        vec![vec![0.5, 0.5], vec![0.0, 1.0]],
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ],
    )
    .expect("two-state dimensions are fixed");
    let avail = AvailabilityModel::Pda {
        rho: vec![vec![1.0, 1.0], vec![1.0, p]],
    };
    Instance::new(mdp, avail).expect("two-state instance is valid")
}

/// Index of `s1` in [`two_state_instance`].
pub const TWO_STATE_START: usize = 0;

/// What kind of availability model a random instance should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvailabilityKind {
    Pda,
    Explicit,
}

/// Shape parameters for [`random_instance`].
#[derive(Debug, Clone)]
pub struct InstanceShape {
    pub n_states: usize,
    pub n_actions: usize,
    pub availability: AvailabilityKind,
    pub discount: f64,
}

impl InstanceShape {
    pub fn pda(n_states: usize, n_actions: usize) -> Self {
        InstanceShape {
            n_states,
            n_actions,
            availability: AvailabilityKind::Pda,
            discount: 0.9,
        }
    }

    pub fn explicit(n_states: usize, n_actions: usize) -> Self {
        InstanceShape {
            n_states,
            n_actions,
            availability: AvailabilityKind::Explicit,
            discount: 0.9,
        }
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }
}

/// Draws a valid random instance: dense stochastic transition rows, rewards
/// in `[-1, 1]`, and an availability model with a sure action per state.
pub fn random_instance(shape: &InstanceShape, seed: u64) -> Instance {
    let mut rng = substream(seed, 0x9e37, 0x11);
    let (n, m) = (shape.n_states, shape.n_actions);

    let rewards: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let transitions: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| (0..m).map(|_| random_stochastic_row(n, &mut rng)).collect())
        .collect();
    let mdp = BaseMdp::new(n, m, shape.discount, rewards, transitions).expect("generated shape");

    let avail = match shape.availability {
        AvailabilityKind::Pda => {
            let rho: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut row: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
                    let sure = rng.gen_range(0..m);
                    row[sure] = 1.0;
                    row
                })
                .collect();
            AvailabilityModel::Pda { rho }
        }
        AvailabilityKind::Explicit => {
            let support: Vec<Vec<SubsetProb>> =
                (0..n).map(|_| random_subset_support(m, &mut rng)).collect();
            AvailabilityModel::Explicit { support }
        }
    };
    Instance::new(mdp, avail).expect("generated instance is valid")
}

fn random_stochastic_row(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Pin the row sum exactly to 1 so validation tolerances never bite.
    let partial: f64 = row[..n - 1].iter().sum();
    row[n - 1] = (1.0 - partial).max(0.0);
    row
}

fn random_subset_support(m: usize, rng: &mut impl Rng) -> Vec<SubsetProb> {
    let max_mask = (1u64 << m) - 1;
    let count = rng.gen_range(1..=4usize.min(max_mask as usize));
    let mut masks = Vec::with_capacity(count);
    while masks.len() < count {
        let mask = rng.gen_range(1..=max_mask);
        if !masks.contains(&mask) {
            masks.push(mask);
        }
    }
    let raw: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let partial: f64 = probs[..count - 1].iter().sum();
    probs[count - 1] = (1.0 - partial).max(0.0);
    masks
        .into_iter()
        .zip(probs)
        .map(|(mask, prob)| SubsetProb {
            set: ActionSet::from_bits(mask),
            prob,
        })
        .collect()
}

/// Random instance whose rewards, transition probabilities and availability
/// probabilities are all integer multiples of `1 / delta`, with discount 0.9.
/// Used by the iteration-bound diagnostics, which assume rational inputs.
pub fn random_rational_instance(
    n_states: usize,
    n_actions: usize,
    delta: u32,
    seed: u64,
) -> Instance {
    let mut rng = substream(seed, 0x9e38, 0x13);
    let (n, m) = (n_states, n_actions);
    let d = delta as f64;

    let rewards: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| rng.gen_range(-(delta as i64)..=delta as i64) as f64 / d)
                .collect()
        })
        .collect();
    let transitions: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    // Random composition of `delta` units over n slots.
                    let mut units = vec![0u32; n];
                    for _ in 0..delta {
                        units[rng.gen_range(0..n)] += 1;
                    }
                    units.into_iter().map(|u| u as f64 / d).collect()
                })
                .collect()
        })
        .collect();
    let mdp = BaseMdp::new(n, m, 0.9, rewards, transitions).expect("generated shape");

    let rho: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..m)
                .map(|_| rng.gen_range(0..=delta) as f64 / d)
                .collect();
            let sure = rng.gen_range(0..m);
            row[sure] = 1.0;
            row
        })
        .collect();
    Instance::new(mdp, AvailabilityModel::Pda { rho }).expect("generated instance is valid")
}

/// Uniformly random decision list per state.
pub fn random_decision_list(inst: &Instance, seed: u64) -> DecisionListPolicy {
    let mut rng = substream(seed, 0x9e39, 0x17);
    let m = inst.n_actions();
    let orders = (0..inst.n_states())
        .map(|_| {
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            order
        })
        .collect();
    DecisionListPolicy::new(orders).expect("shuffled identity is a permutation")
}

/// Value function with entries uniform in `[-scale, scale]`.
pub fn random_value_function(n_states: usize, seed: u64, scale: f64) -> ValueFunction {
    let mut rng = substream(seed, 0x9e3a, 0x19);
    ValueFunction::from_vec(
        (0..n_states)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    )
}

/// Q function with entries uniform in `[-scale, scale]`.
pub fn random_q_function(n_states: usize, n_actions: usize, seed: u64, scale: f64) -> QFunction {
    let mut rng = substream(seed, 0x9e3b, 0x1d);
    QFunction::from_rows(
        (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| rng.gen_range(-scale..scale))
                    .collect()
            })
            .collect(),
    )
}
