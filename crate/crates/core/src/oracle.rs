//! Ground truth by exhaustive enumeration, with hard-constraint pruning.

use crate::error::{Error, Result};
use crate::model::{Assignment, DcopInstance, VarId};
use crate::utility::Utility;

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// True optimum of the instance. Infeasible instances report `NegInf`
/// together with the all-lowest assignment.
///
/// Errors when the assignment space exceeds `cap` rows.
pub fn exact_solve(inst: &DcopInstance, cap: u128) -> Result<(Assignment, Utility)> {
    let vars: Vec<VarId> = inst.variables().to_vec();
    let mut rows: u128 = 1;
    for v in &vars {
        rows = rows.saturating_mul(inst.domain(*v)?.len() as u128);
        if rows > cap {
            return Err(Error::EnumerationCapExceeded { rows, cap });
        }
    }

    // depth-first over variables in id order, accumulating the utility of
    // edges into already-assigned neighbors and pruning on NegInf
    let mut best_util = Utility::NegInf;
    let mut best: Option<Assignment> = None;
    let mut partial = Assignment::new();
    search(
        inst,
        &vars,
        0,
        Utility::ZERO,
        &mut partial,
        &mut best_util,
        &mut best,
    )?;

    let assignment = match best {
        Some(a) => a,
        None => Assignment::from_pairs(vars.iter().map(|v| (*v, inst.domain(*v).unwrap()[0]))),
    };
    Ok((assignment, best_util))
}

fn search(
    inst: &DcopInstance,
    vars: &[VarId],
    depth: usize,
    acc: Utility,
    partial: &mut Assignment,
    best_util: &mut Utility,
    best: &mut Option<Assignment>,
) -> Result<()> {
    if depth == vars.len() {
        if acc > *best_util || (best.is_none() && acc.is_finite()) {
            *best_util = acc;
            *best = Some(partial.clone());
        }
        return Ok(());
    }
    let var = vars[depth];
    for &value in inst.domain(var)? {
        let mut util = acc;
        for &fi in inst.functions_of(var) {
            let f = &inst.functions()[fi];
            let other = f.other(var).unwrap();
            // variables are assigned in ascending id order; higher ids may
            // carry stale bindings from sibling branches
            if other >= var {
                continue;
            }
            let vo = partial.get(other).expect("lower ids are bound");
            util = util + inst.evaluate_function(f, (var, value), (other, vo))?;
            if util.is_neg_inf() {
                break;
            }
        }
        if util.is_neg_inf() {
            continue;
        }
        partial.bind(var, value);
        search(inst, vars, depth + 1, util, partial, best_util, best)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentId, BinaryFunction, FunctionId};
    use rand::{Rng, SeedableRng};

    #[test]
    fn unconstrained_single_variable_scores_zero() {
        let inst = DcopInstance::new(
            vec![(VarId(0), vec![4, 7])],
            vec![],
            [(VarId(0), AgentId(0))].into_iter().collect(),
        )
        .unwrap();
        let (a, u) = exact_solve(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(u, Utility::ZERO);
        assert!(inst.is_complete(&a));
    }

    #[test]
    fn fully_infeasible_instance_reports_neg_inf() {
        let f = BinaryFunction::new(
            FunctionId(0),
            (VarId(0), VarId(1)),
            2,
            2,
            vec![Utility::NegInf; 4],
        )
        .unwrap();
        let inst = DcopInstance::new(
            vec![(VarId(0), vec![0, 1]), (VarId(1), vec![0, 1])],
            vec![f],
            [(VarId(0), AgentId(0)), (VarId(1), AgentId(1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let (a, u) = exact_solve(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(u.is_neg_inf());
        assert!(inst.is_complete(&a));
    }

    #[test]
    fn cap_exceeded_is_a_capacity_error() {
        let inst = DcopInstance::new(
            vec![(VarId(0), vec![0, 1, 2, 3]), (VarId(1), vec![0, 1, 2, 3])],
            vec![],
            [(VarId(0), AgentId(0)), (VarId(1), AgentId(1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            exact_solve(&inst, 8),
            Err(Error::EnumerationCapExceeded { rows: 16, cap: 8 })
        ));
    }

    #[test]
    fn example_instance_optimum_is_38() {
        let inst = crate::io::from_json(include_str!("../tests/data/worked_example.json")).unwrap();
        let (x, u) = exact_solve(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(u, Utility::Finite(38.0));
        assert!(inst.evaluate_total(&x).unwrap().approx_eq(u, 1e-9));
    }

    #[test]
    fn optimum_dominates_random_sampling() {
        let inst = crate::io::from_json(include_str!("../tests/data/worked_example.json")).unwrap();
        let (_, opt) = exact_solve(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let a = Assignment::from_pairs(inst.variables().iter().map(|v| {
                let dom = inst.domain(*v).unwrap();
                (*v, dom[rng.gen_range(0..dom.len())])
            }));
            let u = inst.evaluate_total(&a).unwrap();
            assert!(u <= opt);
        }
    }
}
