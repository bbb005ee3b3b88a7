//! Shared helpers for the integration suites: fixture loading and
//! enumeration oracles kept independent of the solver code paths.

use std::collections::{BTreeMap, BTreeSet};

use dlns_core::{Assignment, DcopInstance, FunctionId, Utility, VarId};

pub fn worked_example() -> DcopInstance {
    dlns_core::io::from_json(include_str!("../data/worked_example.json")).unwrap()
}

pub fn worked_example_initial() -> Assignment {
    Assignment::from_pairs([(VarId(1), 0), (VarId(2), 1), (VarId(3), 0), (VarId(4), 0)])
}

/// All assignments over `vars` (odometer order, values ascending).
pub fn assignments_over(inst: &DcopInstance, vars: &[VarId]) -> Vec<BTreeMap<VarId, i64>> {
    let doms: Vec<&[i64]> = vars.iter().map(|v| inst.domain(*v).unwrap()).collect();
    let mut idx = vec![0usize; vars.len()];
    let mut out = Vec::new();
    loop {
        out.push(
            vars.iter()
                .zip(&idx)
                .map(|(v, i)| (*v, doms[vars.iter().position(|x| x == v).unwrap()][*i]))
                .collect(),
        );
        let mut pos = vars.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < doms[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Brute-force optima of the two relaxed problems for a given destroyed set,
/// previous assignment, and relaxation-edge set: the lower-bound side counts
/// relaxation edges plus destroyed-to-preserved edges at previous values, the
/// upper-bound side counts relaxation edges only.
pub fn enumerate_relaxed(
    inst: &DcopInstance,
    destroyed: &BTreeSet<VarId>,
    prev: &Assignment,
    relaxation_edges: &BTreeSet<FunctionId>,
) -> (Utility, Utility) {
    let vars: Vec<VarId> = destroyed.iter().copied().collect();
    let mut best_check = Utility::NegInf;
    let mut best_hat = Utility::NegInf;
    if vars.is_empty() {
        return (Utility::ZERO, Utility::ZERO);
    }
    for combo in assignments_over(inst, &vars) {
        let mut check = Utility::ZERO;
        let mut hat = Utility::ZERO;
        for f in inst.functions() {
            let (a, b) = f.scope;
            let (da, db) = (destroyed.contains(&a), destroyed.contains(&b));
            if da && db {
                if relaxation_edges.contains(&f.id) {
                    let u = inst
                        .evaluate_function(f, (a, combo[&a]), (b, combo[&b]))
                        .unwrap();
                    check = check + u;
                    hat = hat + u;
                }
            } else if da || db {
                let (dv, pv) = if da { (a, b) } else { (b, a) };
                let u = inst
                    .evaluate_function(f, (dv, combo[&dv]), (pv, prev.get(pv).unwrap()))
                    .unwrap();
                check = check + u;
            }
        }
        best_check = best_check.max(check);
        best_hat = best_hat.max(hat);
    }
    (best_check, best_hat)
}

/// Complete an assignment over the destroyed set with previous values.
#[allow(dead_code)]
pub fn compose(
    inst: &DcopInstance,
    prev: &Assignment,
    chosen: &BTreeMap<VarId, i64>,
) -> Assignment {
    Assignment::from_pairs(inst.variables().iter().map(|v| {
        let value = chosen
            .get(v)
            .copied()
            .unwrap_or_else(|| prev.get(*v).unwrap());
        (*v, value)
    }))
}
