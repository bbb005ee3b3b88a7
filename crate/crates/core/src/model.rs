//! Problem model: variables with finite integer domains, binary utility
//! functions with extended utilities, agent ownership, assignments, and the
//! global objective.
//!
//! One variable per agent; at most one function per unordered variable pair.
//! Instances are immutable after construction and safe to share read-only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::Utility;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a decision variable.
    VarId
);
id_type!(
    /// Identifier of an agent. With one variable per agent, agent and
    /// variable ids coincide index-wise but remain distinct types.
    AgentId
);
id_type!(
    /// Identifier of a binary utility function.
    FunctionId
);

/// A binary utility function over an unordered pair of variables.
///
/// The table is stored dense in scope order; lookups by variable id reorder
/// arguments, so scope order never leaks into callers.
#[derive(Clone, Debug)]
pub struct BinaryFunction {
    pub id: FunctionId,
    pub scope: (VarId, VarId),
    /// Row-major over (first scope domain, second scope domain).
    table: Vec<Utility>,
    dom_i: usize,
    dom_j: usize,
}

impl BinaryFunction {
    pub fn new(
        id: FunctionId,
        scope: (VarId, VarId),
        dom_i: usize,
        dom_j: usize,
        table: Vec<Utility>,
    ) -> Result<Self> {
        if scope.0 == scope.1 {
            return Err(Error::InvalidInstance(format!(
                "function {id} scope repeats variable {}",
                scope.0
            )));
        }
        if table.len() != dom_i * dom_j {
            return Err(Error::InvalidInstance(format!(
                "function {id} table has {} entries, expected {}",
                table.len(),
                dom_i * dom_j
            )));
        }
        if table
            .iter()
            .any(|u| matches!(u, Utility::Finite(v) if *v < 0.0 || v.is_nan()))
        {
            return Err(Error::InvalidInstance(format!(
                "function {id} has a negative or NaN finite entry"
            )));
        }
        Ok(Self {
            id,
            scope,
            table,
            dom_i,
            dom_j,
        })
    }

    /// Table entry at domain indices in scope order.
    #[inline]
    pub fn value_by_index(&self, i: usize, j: usize) -> Utility {
        self.table[i * self.dom_j + j]
    }

    /// True if `var` is one of the two scope variables.
    pub fn involves(&self, var: VarId) -> bool {
        self.scope.0 == var || self.scope.1 == var
    }

    /// The scope variable other than `var`.
    pub fn other(&self, var: VarId) -> Option<VarId> {
        if self.scope.0 == var {
            Some(self.scope.1)
        } else if self.scope.1 == var {
            Some(self.scope.0)
        } else {
            None
        }
    }

    /// Maximum table entry.
    pub fn max_pair(&self) -> Utility {
        self.table
            .iter()
            .copied()
            .fold(Utility::NegInf, Utility::max)
    }

    pub fn entries(&self) -> &[Utility] {
        &self.table
    }
}

/// A (possibly partial) value assignment, keyed by variable id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    bindings: BTreeMap<VarId, i64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, i64)>) -> Self {
        Self {
            bindings: pairs.into_iter().collect(),
        }
    }

    pub fn bind(&mut self, var: VarId, value: i64) {
        self.bindings.insert(var, value);
    }

    pub fn get(&self, var: VarId) -> Option<i64> {
        self.bindings.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.bindings.iter().map(|(v, x)| (*v, *x))
    }
}

/// Metadata attached to meeting-scheduling instances; drives the
/// domain-knowledge destroy strategy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingInfo {
    pub variable: VarId,
    pub duration: i64,
    pub participants: Vec<u32>,
}

/// Provenance header for generated instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub family: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_max: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meetings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participants: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot_max: Option<i64>,
}

/// The problem tuple: variables, domains, binary functions, and ownership.
#[derive(Clone, Debug)]
pub struct DcopInstance {
    variables: Vec<VarId>,
    domains: BTreeMap<VarId, Vec<i64>>,
    functions: Vec<BinaryFunction>,
    function_index: BTreeMap<FunctionId, usize>,
    ownership: BTreeMap<VarId, AgentId>,
    neighbors: BTreeMap<VarId, BTreeSet<VarId>>,
    functions_of: BTreeMap<VarId, Vec<usize>>,
    value_index: BTreeMap<VarId, BTreeMap<i64, usize>>,
    pub generator: Option<GeneratorInfo>,
    pub meetings: Option<Vec<MeetingInfo>>,
}

impl DcopInstance {
    pub fn new(
        variables: Vec<(VarId, Vec<i64>)>,
        functions: Vec<BinaryFunction>,
        ownership: BTreeMap<VarId, AgentId>,
    ) -> Result<Self> {
        let mut domains = BTreeMap::new();
        let mut var_order = Vec::with_capacity(variables.len());
        for (var, domain) in variables {
            if domain.is_empty() {
                return Err(Error::InvalidInstance(format!(
                    "variable {var} has an empty domain"
                )));
            }
            if domains.insert(var, domain).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate variable {var}")));
            }
            var_order.push(var);
        }
        var_order.sort_unstable();

        for var in &var_order {
            if !ownership.contains_key(var) {
                return Err(Error::InvalidInstance(format!(
                    "variable {var} has no owning agent"
                )));
            }
        }
        let mut owners = BTreeSet::new();
        for agent in ownership.values() {
            if !owners.insert(*agent) {
                return Err(Error::InvalidInstance(format!(
                    "agent {agent} owns more than one variable"
                )));
            }
        }

        let mut seen_pairs = BTreeSet::new();
        let mut seen_ids = BTreeSet::new();
        for f in &functions {
            if !seen_ids.insert(f.id) {
                return Err(Error::InvalidInstance(format!(
                    "duplicate function id {}",
                    f.id
                )));
            }
            for v in [f.scope.0, f.scope.1] {
                if !domains.contains_key(&v) {
                    return Err(Error::UnknownVariable(v));
                }
            }
            let key = if f.scope.0 < f.scope.1 {
                (f.scope.0, f.scope.1)
            } else {
                (f.scope.1, f.scope.0)
            };
            if !seen_pairs.insert(key) {
                return Err(Error::InvalidInstance(format!(
                    "more than one function over the pair ({}, {})",
                    key.0, key.1
                )));
            }
            let (di, dj) = (domains[&f.scope.0].len(), domains[&f.scope.1].len());
            if f.dom_i != di || f.dom_j != dj {
                return Err(Error::InvalidInstance(format!(
                    "function {} table shape does not match its scope domains",
                    f.id
                )));
            }
        }

        let mut neighbors: BTreeMap<VarId, BTreeSet<VarId>> =
            var_order.iter().map(|v| (*v, BTreeSet::new())).collect();
        let mut functions_of: BTreeMap<VarId, Vec<usize>> =
            var_order.iter().map(|v| (*v, Vec::new())).collect();
        for (idx, f) in functions.iter().enumerate() {
            neighbors.get_mut(&f.scope.0).unwrap().insert(f.scope.1);
            neighbors.get_mut(&f.scope.1).unwrap().insert(f.scope.0);
            functions_of.get_mut(&f.scope.0).unwrap().push(idx);
            functions_of.get_mut(&f.scope.1).unwrap().push(idx);
        }

        let value_index = domains
            .iter()
            .map(|(v, dom)| {
                (
                    *v,
                    dom.iter()
                        .enumerate()
                        .map(|(i, x)| (*x, i))
                        .collect::<BTreeMap<_, _>>(),
                )
            })
            .collect();
        let function_index = functions
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id, i))
            .collect();

        Ok(Self {
            variables: var_order,
            domains,
            functions,
            function_index,
            ownership,
            neighbors,
            functions_of,
            value_index,
            generator: None,
            meetings: None,
        })
    }

    pub fn variables(&self) -> &[VarId] {
        &self.variables
    }

    pub fn domain(&self, var: VarId) -> Result<&[i64]> {
        self.domains
            .get(&var)
            .map(|d| d.as_slice())
            .ok_or(Error::UnknownVariable(var))
    }

    pub fn functions(&self) -> &[BinaryFunction] {
        &self.functions
    }

    pub fn function(&self, id: FunctionId) -> Option<&BinaryFunction> {
        self.function_index.get(&id).map(|i| &self.functions[*i])
    }

    /// Indices into `functions()` of the functions whose scope contains `var`.
    pub fn functions_of(&self, var: VarId) -> &[usize] {
        self.functions_of
            .get(&var)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn owner(&self, var: VarId) -> Result<AgentId> {
        self.ownership
            .get(&var)
            .copied()
            .ok_or(Error::UnknownVariable(var))
    }

    /// The variable controlled by `agent`.
    pub fn variable_of(&self, agent: AgentId) -> Result<VarId> {
        self.ownership
            .iter()
            .find(|(_, a)| **a == agent)
            .map(|(v, _)| *v)
            .ok_or(Error::UnknownAgent(agent))
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.variables.iter().map(|v| self.ownership[v])
    }

    /// Domain index of `value` for `var`.
    pub fn index_of(&self, var: VarId, value: i64) -> Result<usize> {
        self.value_index
            .get(&var)
            .ok_or(Error::UnknownVariable(var))?
            .get(&value)
            .copied()
            .ok_or(Error::ValueOutsideDomain { var, value })
    }

    /// Neighbors of the agent owning `var` in the constraint graph.
    pub fn neighbors(&self, var: VarId) -> Result<&BTreeSet<VarId>> {
        self.neighbors.get(&var).ok_or(Error::UnknownVariable(var))
    }

    /// Order-insensitive function lookup by variable-labelled arguments.
    pub fn evaluate_function(
        &self,
        f: &BinaryFunction,
        a: (VarId, i64),
        b: (VarId, i64),
    ) -> Result<Utility> {
        let (first, second) = if a.0 == f.scope.0 && b.0 == f.scope.1 {
            (a, b)
        } else if a.0 == f.scope.1 && b.0 == f.scope.0 {
            (b, a)
        } else {
            return Err(Error::InvalidInstance(format!(
                "arguments ({}, {}) do not match the scope of function {}",
                a.0, b.0, f.id
            )));
        };
        let i = self.index_of(first.0, first.1)?;
        let j = self.index_of(second.0, second.1)?;
        Ok(f.value_by_index(i, j))
    }

    /// Sum of all functions whose scope is fully bound by `assignment`.
    /// `NegInf` entries absorb the total.
    pub fn evaluate_total(&self, assignment: &Assignment) -> Result<Utility> {
        for (var, value) in assignment.iter() {
            // surfaces unknown ids and out-of-domain bindings
            self.index_of(var, value)?;
        }
        let mut total = Utility::ZERO;
        for f in &self.functions {
            let (Some(vi), Some(vj)) = (assignment.get(f.scope.0), assignment.get(f.scope.1))
            else {
                continue;
            };
            let i = self.index_of(f.scope.0, vi)?;
            let j = self.index_of(f.scope.1, vj)?;
            total = total + f.value_by_index(i, j);
            if total.is_neg_inf() {
                return Ok(Utility::NegInf);
            }
        }
        Ok(total)
    }

    pub fn is_complete(&self, assignment: &Assignment) -> bool {
        self.variables.iter().all(|v| assignment.get(*v).is_some())
    }
}
