//! Instance file format.
//!
//! ```json
//! {
//!   "variables": [{"id": 0, "domain": [0, 1]}],
//!   "agents":    [{"id": 0, "owns": [0]}],
//!   "functions": [{"id": 0, "scope": [0, 1], "table": [[0, 0, 7], [0, 1, "-inf"]]}]
//! }
//! ```
//!
//! Hard-constraint entries serialize as the string `"-inf"`. Generated files
//! carry a `generator` provenance header and, for meeting instances, a
//! `meetings` block. Serialization is canonical (ids sorted), so a
//! serialize/parse/serialize round trip is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AgentId, Assignment, BinaryFunction, DcopInstance, FunctionId, GeneratorInfo, MeetingInfo,
    VarId,
};
use crate::utility::Utility;

#[derive(Serialize, Deserialize)]
struct VariableDecl {
    id: VarId,
    domain: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct AgentDecl {
    id: AgentId,
    owns: Vec<VarId>,
}

#[derive(Serialize, Deserialize)]
struct FunctionDecl {
    id: FunctionId,
    scope: [VarId; 2],
    table: Vec<(i64, i64, Utility)>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meetings: Option<Vec<MeetingInfo>>,
    variables: Vec<VariableDecl>,
    agents: Vec<AgentDecl>,
    functions: Vec<FunctionDecl>,
}

/// Render an instance as canonical JSON.
pub fn to_json(inst: &DcopInstance) -> String {
    let variables = inst
        .variables()
        .iter()
        .map(|v| VariableDecl {
            id: *v,
            domain: inst.domain(*v).unwrap().to_vec(),
        })
        .collect();
    let mut agents: Vec<AgentDecl> = inst
        .variables()
        .iter()
        .map(|v| AgentDecl {
            id: inst.owner(*v).unwrap(),
            owns: vec![*v],
        })
        .collect();
    agents.sort_by_key(|a| a.id);
    let mut functions: Vec<&BinaryFunction> = inst.functions().iter().collect();
    functions.sort_by_key(|f| f.id);
    let functions = functions
        .into_iter()
        .map(|f| {
            let (di, dj) = (
                inst.domain(f.scope.0).unwrap(),
                inst.domain(f.scope.1).unwrap(),
            );
            let mut table = Vec::with_capacity(di.len() * dj.len());
            for (i, vi) in di.iter().enumerate() {
                for (j, vj) in dj.iter().enumerate() {
                    table.push((*vi, *vj, f.value_by_index(i, j)));
                }
            }
            FunctionDecl {
                id: f.id,
                scope: [f.scope.0, f.scope.1],
                table,
            }
        })
        .collect();
    let file = InstanceFile {
        generator: inst.generator.clone(),
        meetings: inst.meetings.clone(),
        variables,
        agents,
        functions,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("instance serializes");
    out.push('\n');
    out
}

/// Parse an instance from JSON text.
pub fn from_json(text: &str) -> Result<DcopInstance> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;

    let variables: Vec<(VarId, Vec<i64>)> = file
        .variables
        .iter()
        .map(|v| (v.id, v.domain.clone()))
        .collect();
    let mut ownership = std::collections::BTreeMap::new();
    for agent in &file.agents {
        for var in &agent.owns {
            if ownership.insert(*var, agent.id).is_some() {
                return Err(Error::Parse(format!("variable {var} owned by two agents")));
            }
        }
    }

    let mut functions = Vec::with_capacity(file.functions.len());
    for decl in &file.functions {
        let dom_of = |v: VarId| {
            file.variables
                .iter()
                .find(|d| d.id == v)
                .map(|d| d.domain.clone())
                .ok_or(Error::Parse(format!(
                    "function {} references unknown variable {v}",
                    decl.id
                )))
        };
        let di = dom_of(decl.scope[0])?;
        let dj = dom_of(decl.scope[1])?;
        let pos = |dom: &[i64], value: i64, var: VarId| {
            dom.iter()
                .position(|x| *x == value)
                .ok_or(Error::Parse(format!(
                    "function {}: value {value} not in the domain of {var}",
                    decl.id
                )))
        };
        let mut table = vec![None; di.len() * dj.len()];
        for (vi, vj, u) in &decl.table {
            let i = pos(&di, *vi, decl.scope[0])?;
            let j = pos(&dj, *vj, decl.scope[1])?;
            table[i * dj.len() + j] = Some(*u);
        }
        let table: Vec<Utility> = table
            .into_iter()
            .enumerate()
            .map(|(at, u)| {
                u.ok_or(Error::Parse(format!(
                    "function {} table is not total (missing entry {at})",
                    decl.id
                )))
            })
            .collect::<Result<_>>()?;
        functions.push(BinaryFunction::new(
            decl.id,
            (decl.scope[0], decl.scope[1]),
            di.len(),
            dj.len(),
            table,
        )?);
    }

    let mut inst = DcopInstance::new(variables, functions, ownership)?;
    inst.generator = file.generator;
    inst.meetings = file.meetings;
    Ok(inst)
}

pub fn write_file(inst: &DcopInstance, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(inst))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<DcopInstance> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

/// Parse `{"var": value, ...}` style assignment JSON (used by CLI output).
pub fn assignment_to_json(a: &Assignment) -> String {
    let map: std::collections::BTreeMap<String, i64> =
        a.iter().map(|(v, x)| (v.to_string(), x)).collect();
    serde_json::to_string(&map).expect("assignment serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../tests/data/worked_example.json");

    #[test]
    fn example_fixture_loads_with_five_functions() {
        let inst = from_json(EXAMPLE).unwrap();
        assert_eq!(inst.variables().len(), 4);
        assert_eq!(inst.functions().len(), 5);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let inst = from_json(EXAMPLE).unwrap();
        let first = to_json(&inst);
        let again = to_json(&from_json(&first).unwrap());
        assert_eq!(first, again);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let cut = &EXAMPLE[..EXAMPLE.len() / 2];
        match from_json(cut) {
            Err(Error::Parse(msg)) => assert!(msg.contains("line")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn neg_inf_entries_survive_round_trip() {
        // the fixture keeps table rows on one line, so this rewrites the
        // (0, 0) entry of every function that has utility 10 there
        let text = EXAMPLE.replace("[0, 0, 10]", "[0, 0, \"-inf\"]");
        let mut parsed = from_json(&text).unwrap();
        let f = parsed.function(FunctionId(0)).unwrap();
        assert_eq!(f.value_by_index(0, 0), Utility::NegInf);
        parsed.meetings = Some(vec![MeetingInfo {
            variable: VarId(1),
            duration: 3,
            participants: vec![7, 9],
        }]);
        let first = to_json(&parsed);
        let reparsed = from_json(&first).unwrap();
        assert_eq!(reparsed.meetings.as_ref().unwrap().len(), 1);
        assert_eq!(
            reparsed
                .function(FunctionId(0))
                .unwrap()
                .value_by_index(0, 0),
            Utility::NegInf
        );
        assert_eq!(first, to_json(&reparsed));
    }
}
