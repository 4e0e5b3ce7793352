//! Reproducible desk-scale experiments: the two-state availability curve and
//! a synthetic routing problem with an unreliable bridge.

use crate::model::{DecisionListPolicy, Instance, ValidationError};
use crate::sample::two_state_instance;
use crate::solve::{policy_evaluation, value_iteration, SolveError, ViOptions};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("probability {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("generated graph cannot reach the destination from the source")]
    DisconnectedGraph,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("generated instance failed validation: {0:?}")]
    Validation(Vec<ValidationError>),
}

/// Decision list of the availability-oblivious baseline: solve the base MDP
/// as if every action were always available, then rank actions by those
/// Q-values. At run time the baseline executes its best *available* action.
pub fn oblivious_dl(inst: &Instance) -> Result<DecisionListPolicy, SolveError> {
    let full = inst.assume_full_availability();
    Ok(value_iteration(&full, &ViOptions::default())?.policy)
}

/// One row of the two-state comparison curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub p: f64,
    /// Exact value at `s1` of the decision list found by the solver.
    pub v_sas: f64,
    /// Exact value at `s1` of the oblivious decision list.
    pub v_naive: f64,
    /// `1 - v_naive / v_sas`.
    pub fraction_lost: f64,
}

/// Sweeps availability probabilities on the two-state instance, comparing
/// the solver's policy against the oblivious baseline. Both policies are
/// evaluated exactly, so for `p >= 1/2` (where the baseline's list is
/// optimal) the lost fraction vanishes.
pub fn example_curve(p_grid: &[f64], gamma: f64) -> Result<Vec<CurvePoint>, ExperimentError> {
    let mut points = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ExperimentError::BadProbability(p));
        }
        let inst = two_state_instance(p, gamma);
        let sas_dl = value_iteration(&inst, &ViOptions::default())?.policy;
        let v_sas = policy_evaluation(&inst, &sas_dl)?.get(0);
        let naive_dl = oblivious_dl(&inst)?;
        let v_naive = policy_evaluation(&inst, &naive_dl)?.get(0);
        points.push(CurvePoint {
            p,
            v_sas,
            v_naive,
            fraction_lost: 1.0 - v_naive / v_sas,
        });
    }
    Ok(points)
}

/// Parameters of the synthetic routing graph.
///
/// Two chains lead from a source to an absorbing destination: a short one
/// whose final edge is the bridge (available with probability
/// `bridge_prob`), and a longer detour of costlier edges. Every other edge
/// realizes with probability `edge_avail`, and every node can always wait
/// in place at `noop_cost`. Travel costs enter the MDP as negative rewards.
#[derive(Debug, Clone)]
pub struct RoutingParams {
    /// Total node count; split roughly 3:4 between the chains. At least 5.
    pub nodes: usize,
    /// `None` removes the bridge edge from the graph entirely.
    pub bridge_prob: Option<f64>,
    pub edge_avail: f64,
    pub noop_cost: f64,
    /// Jitters detour edge costs by up to 2% to break ties.
    pub seed: u64,
    pub discount: f64,
}

impl Default for RoutingParams {
    fn default() -> Self {
        RoutingParams {
            nodes: 7,
            bridge_prob: Some(0.5),
            edge_avail: 0.5,
            noop_cost: 1.0,
            seed: 0,
            discount: 0.999,
        }
    }
}

/// A generated routing instance plus its landmarks.
#[derive(Debug, Clone)]
pub struct RoutingInstance {
    pub inst: Instance,
    pub source: usize,
    pub destination: usize,
    /// Node whose outgoing edge is (or would be) the bridge.
    pub bridge_node: usize,
}

const SHORT_EDGE_COST: f64 = 1.0;
const LONG_EDGE_COST: f64 = 1.15;

/// Builds the shortest-path SAS-MDP for the routing demo.
///
/// Actions per node: slot 0 the primary outgoing edge, slot 1 a secondary
/// edge where one exists (the detour start at the source), slot 2 the no-op.
/// Missing slots are padded with never-available copies of the no-op.
pub fn routing_instance(params: &RoutingParams) -> Result<RoutingInstance, ExperimentError> {
    use crate::model::{AvailabilityModel, BaseMdp};
    use rand::Rng;

    if params.nodes < 5 {
        return Err(ExperimentError::BadParams(format!(
            "need at least 5 nodes, got {}",
            params.nodes
        )));
    }
    if !(params.edge_avail > 0.0 && params.edge_avail <= 1.0) {
        return Err(ExperimentError::BadProbability(params.edge_avail));
    }
    if let Some(p) = params.bridge_prob {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ExperimentError::BadProbability(p));
        }
    }
    if !params.noop_cost.is_finite() || params.noop_cost < 0.0 {
        return Err(ExperimentError::BadParams(
            "noop cost must be nonnegative".into(),
        ));
    }

    // Short chain: source -> 1 -> .. -> (k-1) -bridge-> dest, k edges.
    // Long chain: source -> k+1 -> .. -> k+l-1 -> dest, l edges.
    let k = 2.max(3 * params.nodes / 7);
    let l = params.nodes - k;
    if l < k + 1 {
        return Err(ExperimentError::BadParams(format!(
            "node split k={k}, l={l} leaves no longer detour"
        )));
    }
    let n = params.nodes;
    let m = 3usize;
    let source = 0usize;
    let dest = k;
    let bridge_node = k - 1;

    let mut rng = crate::model::substream(params.seed, 0x726f7574, 0);
    let mut jitter = || 1.0 + rng.gen_range(-0.02..0.02);

    // Per node and slot: (successor, cost, availability).
    let mut edges: Vec<[(usize, f64, f64); 3]> = Vec::with_capacity(n);
    for node in 0..n {
        let noop = (node, params.noop_cost, 1.0);
        let pad = (node, params.noop_cost, 0.0);
        let row = if node == source {
            [
                (1, SHORT_EDGE_COST, params.edge_avail),
                (k + 1, LONG_EDGE_COST * jitter(), params.edge_avail),
                noop,
            ]
        } else if node == dest {
            [(dest, 0.0, 0.0), (dest, 0.0, 0.0), (dest, 0.0, 1.0)]
        } else if node < dest {
            if node == bridge_node {
                match params.bridge_prob {
                    Some(p) => [(dest, SHORT_EDGE_COST, p), pad, noop],
                    None => [pad, pad, noop],
                }
            } else {
                [(node + 1, SHORT_EDGE_COST, params.edge_avail), pad, noop]
            }
        } else {
            // Long-chain node k+j; the last one feeds the destination.
            let next = if node == k + l - 1 { dest } else { node + 1 };
            [
                (next, LONG_EDGE_COST * jitter(), params.edge_avail),
                pad,
                noop,
            ]
        };
        edges.push(row);
    }

    let mut rewards = vec![vec![0.0; m]; n];
    let mut transitions = vec![vec![vec![0.0; n]; m]; n];
    let mut rho = vec![vec![0.0; m]; n];
    for node in 0..n {
        for slot in 0..m {
            let (succ, cost, avail) = edges[node][slot];
            rewards[node][slot] = -cost;
            transitions[node][slot][succ] = 1.0;
            rho[node][slot] = avail;
        }
    }

    let mdp = BaseMdp::new(n, m, params.discount, rewards, transitions)
        .map_err(|e| ExperimentError::Validation(vec![e]))?;
    let inst =
        Instance::new(mdp, AvailabilityModel::Pda { rho }).map_err(ExperimentError::Validation)?;

    // The destination must be reachable from the source through edges of
    // positive availability.
    let mut reachable = vec![false; n];
    let mut stack = vec![source];
    reachable[source] = true;
    while let Some(node) = stack.pop() {
        for slot in 0..m {
            let (succ, _, avail) = edges[node][slot];
            if avail > 0.0 && !reachable[succ] {
                reachable[succ] = true;
                stack.push(succ);
            }
        }
    }
    if !reachable[dest] {
        return Err(ExperimentError::DisconnectedGraph);
    }

    Ok(RoutingInstance {
        inst,
        source,
        destination: dest,
        bridge_node,
    })
}

/// One bridge-availability setting of the routing comparison.
#[derive(Debug, Clone, Copy)]
pub struct RoutingPoint {
    pub p: f64,
    /// Expected discounted travel cost from the source under the
    /// availability-aware optimal policy.
    pub sas_cost: f64,
    /// Same under the oblivious baseline.
    pub oblivious_cost: f64,
}

/// Solves the routing instance for each bridge probability, reporting exact
/// expected costs of the availability-aware and oblivious policies.
pub fn routing_comparison(
    params: &RoutingParams,
    p_grid: &[f64],
) -> Result<Vec<RoutingPoint>, ExperimentError> {
    let mut points = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let routing = routing_instance(&RoutingParams {
            bridge_prob: Some(p),
            ..params.clone()
        })?;
        let inst = &routing.inst;
        let sas_dl = value_iteration(inst, &ViOptions::default())?.policy;
        let sas_cost = -policy_evaluation(inst, &sas_dl)?.get(routing.source);
        let oblivious = oblivious_dl(inst)?;
        let oblivious_cost = -policy_evaluation(inst, &oblivious)?.get(routing.source);
        points.push(RoutingPoint {
            p,
            sas_cost,
            oblivious_cost,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_reproduces_the_closed_forms() {
        let gamma = 0.9;
        let points = example_curve(&[0.2, 0.5, 1.0], gamma).unwrap();

        // p = 0.2: optimum stays (0.5 / 0.1 = 5), the naive list alternates.
        let naive = (0.5 + gamma * 0.2) / (1.0 - gamma * gamma);
        assert!((points[0].v_sas - 5.0).abs() < 1e-9);
        assert!((points[0].v_naive - naive).abs() < 1e-9);
        assert!((points[0].fraction_lost - (1.0 - naive / 5.0)).abs() < 1e-9);

        // Crossover: no loss at p = 0.5 and p = 1.
        assert!(points[1].fraction_lost.abs() <= 1e-9);
        assert!(points[2].fraction_lost.abs() <= 1e-9);
        assert_eq!(
            points[2].fraction_lost, 0.0,
            "identical lists evaluate identically"
        );
    }

    #[test]
    fn curve_rejects_bad_probabilities() {
        assert!(matches!(
            example_curve(&[0.0], 0.9),
            Err(ExperimentError::BadProbability(_))
        ));
        assert!(matches!(
            example_curve(&[1.2], 0.9),
            Err(ExperimentError::BadProbability(_))
        ));
    }

    #[test]
    fn routing_instance_is_well_formed() {
        let routing = routing_instance(&RoutingParams::default()).unwrap();
        assert_eq!(routing.inst.n_states(), 7);
        assert_eq!(routing.inst.n_actions(), 3);
        assert_eq!(routing.source, 0);
        // Destination is absorbing and free.
        let d = routing.destination;
        for k in 0..3 {
            assert_eq!(routing.inst.mdp().reward(d, k), 0.0);
            assert_eq!(routing.inst.mdp().transition_row(d, k)[d], 1.0);
        }
    }

    #[test]
    fn undersized_graphs_are_rejected() {
        let params = RoutingParams {
            nodes: 4,
            ..Default::default()
        };
        assert!(matches!(
            routing_instance(&params),
            Err(ExperimentError::BadParams(_))
        ));
    }

    #[test]
    fn sure_bridge_and_sure_edges_make_the_policies_identical() {
        let params = RoutingParams {
            bridge_prob: Some(1.0),
            edge_avail: 1.0,
            ..Default::default()
        };
        let routing = routing_instance(&params).unwrap();
        let sas = value_iteration(&routing.inst, &ViOptions::default())
            .unwrap()
            .policy;
        let oblivious = oblivious_dl(&routing.inst).unwrap();
        assert_eq!(sas, oblivious);
        let cost = |dl: &DecisionListPolicy| {
            -policy_evaluation(&routing.inst, dl)
                .unwrap()
                .get(routing.source)
        };
        assert!((cost(&sas) - cost(&oblivious)).abs() < 1e-12);
    }

    #[test]
    fn removing_the_bridge_equalizes_both_policies() {
        let params = RoutingParams {
            bridge_prob: None,
            ..Default::default()
        };
        let routing = routing_instance(&params).unwrap();
        let inst = &routing.inst;
        let sas = value_iteration(inst, &ViOptions::default()).unwrap().policy;
        let oblivious = oblivious_dl(inst).unwrap();
        let sas_cost = -policy_evaluation(inst, &sas).unwrap().get(routing.source);
        let oblivious_cost = -policy_evaluation(inst, &oblivious)
            .unwrap()
            .get(routing.source);
        assert!(
            (sas_cost - oblivious_cost).abs() < 1e-9,
            "sas {sas_cost} vs oblivious {oblivious_cost}"
        );
    }

    #[test]
    fn gap_shrinks_as_the_bridge_firms_up() {
        let points = routing_comparison(&RoutingParams::default(), &[0.1, 0.2, 0.4, 1.0]).unwrap();
        let mut last_gap = f64::INFINITY;
        for point in &points {
            assert!(
                point.sas_cost <= point.oblivious_cost + 1e-9,
                "p={}: sas {} > oblivious {}",
                point.p,
                point.sas_cost,
                point.oblivious_cost
            );
            let gap = point.oblivious_cost - point.sas_cost;
            assert!(gap <= last_gap + 1e-9, "gap grew at p={}", point.p);
            last_gap = gap;
        }
        let final_point = points.last().unwrap();
        assert!(
            (final_point.oblivious_cost - final_point.sas_cost).abs() <= 1e-9,
            "costs must coincide at p = 1"
        );
        // The demo is only interesting if scarcity actually hurts.
        assert!(points[0].oblivious_cost - points[0].sas_cost > 0.1);
    }
}
