//! Distributed stochastic search baseline (variant B): every round each agent
//! best-responds to its neighbors' current values and moves with probability
//! `p` when the move strictly improves or, under violations, reduces them.
//! No bounds are produced, so traces carry lower-bound columns only.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{initialize_values, InitMode};
use crate::error::Result;
use crate::model::{AgentId, DcopInstance, VarId};
use crate::sim::{Message, Network, Payload};
use crate::trace::{RunTrace, TraceRow};
use crate::utility::Utility;

pub const DEFAULT_ACTIVATION_P: f64 = 0.6;

/// (violations ascending, utility descending) preference key for one value.
fn response_key(
    inst: &DcopInstance,
    var: VarId,
    value: i64,
    views: &BTreeMap<VarId, i64>,
) -> Result<(u64, Utility)> {
    let mut violations = 0u64;
    let mut util = Utility::ZERO;
    for &fi in inst.functions_of(var) {
        let f = &inst.functions()[fi];
        let other = f.other(var).unwrap();
        let u = inst.evaluate_function(f, (var, value), (other, views[&other]))?;
        if u.is_neg_inf() {
            violations += 1;
        } else {
            util = util + u;
        }
    }
    Ok((violations, util))
}

pub fn dsa_b(
    inst: &DcopInstance,
    p: f64,
    iterations: u64,
    seed: u64,
    t_cc: u64,
    t_msg: u64,
) -> Result<RunTrace> {
    let started = std::time::Instant::now();
    let mut net = Network::new(inst.agents(), t_cc, t_msg);
    let owner_of: BTreeMap<VarId, AgentId> = inst
        .variables()
        .iter()
        .map(|v| (*v, inst.owner(*v).unwrap()))
        .collect();

    let mut current = initialize_values(inst, &InitMode::Random, seed)?;
    // round zero: everyone announces its initial value
    net.begin_phase();
    for var in inst.variables() {
        let v = current.get(*var).unwrap();
        for nbr in inst.neighbors(*var)? {
            net.send(Message {
                sender: owner_of[var],
                receiver: owner_of[nbr],
                payload: Payload::ValuePair { lb: v, ub: v },
            })?;
        }
    }
    net.deliver_round();
    for agent in net.agents().to_vec() {
        net.take_inbox(agent);
    }
    net.end_phase(1);

    let mut views: BTreeMap<VarId, BTreeMap<VarId, i64>> = inst
        .variables()
        .iter()
        .map(|v| {
            let view = inst
                .neighbors(*v)
                .unwrap()
                .iter()
                .map(|n| (*n, current.get(*n).unwrap()))
                .collect();
            (*v, view)
        })
        .collect();

    let mut trace = RunTrace {
        algo: "dsa".into(),
        ..RunTrace::default()
    };
    let mut best = inst.evaluate_total(&current)?;
    let mut best_solution = best.is_finite().then(|| current.clone());
    let mut first_feasible = best.is_finite().then_some(0);
    push_row(&mut trace, 0, best, best, &net, &started);

    for k in 1..=iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        net.begin_phase();

        // all decisions read the round-start views, then moves apply at once
        let mut moves: Vec<(VarId, i64)> = Vec::new();
        for var in inst.variables() {
            let dom = inst.domain(*var)?;
            let view = &views[var];
            net.note_checks(owner_of[var], (dom.len() * view.len()) as u64);
            let cur_key = response_key(inst, *var, current.get(*var).unwrap(), view)?;
            let mut best_val = current.get(*var).unwrap();
            let mut best_key = cur_key;
            for &value in dom {
                let key = response_key(inst, *var, value, view)?;
                if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 > best_key.1) {
                    best_key = key;
                    best_val = value;
                }
            }
            let improves =
                best_key.0 < cur_key.0 || (best_key.0 == cur_key.0 && best_key.1 > cur_key.1);
            if improves && rng.gen_bool(p) {
                moves.push((*var, best_val));
            }
        }

        for (var, value) in &moves {
            current.bind(*var, *value);
            for nbr in inst.neighbors(*var)? {
                net.send(Message {
                    sender: owner_of[var],
                    receiver: owner_of[nbr],
                    payload: Payload::ValuePair {
                        lb: *value,
                        ub: *value,
                    },
                })?;
            }
        }
        net.deliver_round();
        for agent in net.agents().to_vec() {
            for msg in net.take_inbox(agent) {
                if let Payload::ValuePair { lb, .. } = msg.payload {
                    let sender_var = inst.variable_of(msg.sender)?;
                    let receiver_var = inst.variable_of(agent)?;
                    views.get_mut(&receiver_var).unwrap().insert(sender_var, lb);
                }
            }
        }
        net.end_phase(1);

        let quality = inst.evaluate_total(&current)?;
        if quality > best {
            best = quality;
            best_solution = Some(current.clone());
        }
        if quality.is_finite() && first_feasible.is_none() {
            first_feasible = Some(k);
        }
        push_row(&mut trace, k, quality, best, &net, &started);
    }

    trace.best_solution = best_solution;
    trace.first_feasible_k = first_feasible;
    Ok(trace)
}

fn push_row(
    trace: &mut RunTrace,
    k: u64,
    lb: Utility,
    best_lb: Utility,
    net: &Network,
    started: &std::time::Instant,
) {
    let m = &net.metrics;
    trace.rows.push(TraceRow {
        k,
        sim_time: m.simulated_time,
        wall_ms: started.elapsed().as_millis() as u64,
        lb,
        ub: None,
        best_lb,
        best_ub: None,
        rho: None,
        msgs: m.messages_sent(),
        payload: m.total_payload,
        max_payload: m.max_payload,
        ccs: m.total_checks(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinaryFunction, DcopInstance, FunctionId};

    fn two_agent_instance() -> DcopInstance {
        // single function with a unique equilibrium at its global argmax
        let table = vec![
            Utility::Finite(10.0),
            Utility::Finite(6.0),
            Utility::Finite(7.0),
            Utility::Finite(5.0),
        ];
        let f = BinaryFunction::new(FunctionId(0), (VarId(0), VarId(1)), 2, 2, table).unwrap();
        DcopInstance::new(
            vec![(VarId(0), vec![0, 1]), (VarId(1), vec![0, 1])],
            vec![f],
            [(VarId(0), AgentId(0)), (VarId(1), AgentId(1))]
                .into_iter()
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn p_zero_freezes_the_initial_assignment() {
        let inst = two_agent_instance();
        let trace = dsa_b(&inst, 0.0, 10, 42, 1, 100).unwrap();
        let first = trace.rows[0].lb;
        assert!(trace.rows.iter().all(|r| r.lb == first));
    }

    #[test]
    fn converges_to_the_single_function_argmax() {
        let inst = two_agent_instance();
        let trace = dsa_b(&inst, 0.6, 50, 7, 1, 100).unwrap();
        assert_eq!(trace.final_best_lb(), Utility::Finite(10.0));
    }

    #[test]
    fn best_so_far_quality_is_nondecreasing() {
        let inst = two_agent_instance();
        let trace = dsa_b(&inst, 0.6, 30, 11, 1, 100).unwrap();
        let mut prev = Utility::NegInf;
        for row in &trace.rows {
            assert!(row.best_lb >= prev);
            assert!(row.ub.is_none() && row.best_ub.is_none() && row.rho.is_none());
            prev = row.best_lb;
        }
    }
}
