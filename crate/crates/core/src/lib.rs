//! Distributed large neighborhood search for DCOPs.
//!
//! The solver iterates a destroy/repair loop over a deterministic simulated
//! multi-agent substrate. Two bounded repair algorithms refine anytime lower
//! and upper bounds: a tree relaxation with linear-size messages, and an exact
//! bucket-elimination repair over the whole destroyed subgraph. A stochastic
//! local-search baseline, an exhaustive oracle, and instance generators round
//! out the benchmark harness.

pub mod dpop;
pub mod dsa;
pub mod engine;
pub mod error;
pub mod generators;
pub mod graph;
pub mod io;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod tdbr;
pub mod trace;
pub mod utility;

pub use engine::{
    destroy_domain_knowledge, destroy_random, initialize_values, DestroyFlag, DestroyStrategy,
    DomainKnowledgeDestroy, EngineConfig, InitMode, RandomDestroy, RepairAlgorithm,
    ScriptedDestroy, TerminationRule,
};
pub use error::{Error, Result};
pub use model::{
    AgentId, Assignment, BinaryFunction, DcopInstance, FunctionId, GeneratorInfo, MeetingInfo,
    VarId,
};
pub use trace::{normalize_quality, quality_ratios, RunTrace, TraceRow};
pub use utility::Utility;
