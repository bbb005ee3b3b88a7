//! Deterministic synchronous message-passing substrate.
//!
//! Agents run in barrier-delimited phases. Within a phase the harness executes
//! handlers in agent-id order, collects outgoing messages, and delivers them
//! (sorted by sender) before the next round, so results are independent of any
//! real scheduling. Metrics track message counts, payload sizes, per-agent
//! constraint checks, and a simulated clock in which message latency dominates
//! compute.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{AgentId, VarId};
use crate::utility::Utility;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Util,
    Value,
    Bounds,
}

/// Message payloads; `size` is always computed from the content.
#[derive(Clone, Debug)]
pub enum Payload {
    /// Two projected utility lists indexed by the parent's domain.
    UtilLists { lb: Vec<Utility>, ub: Vec<Utility> },
    /// Separator-indexed table pair (bucket-elimination repair).
    UtilTables {
        separator: Vec<VarId>,
        lb: Vec<Utility>,
        ub: Vec<Utility>,
    },
    /// The sender's chosen pair of values.
    ValuePair { lb: i64, ub: i64 },
    /// Chosen pairs for several variables (separator forwarding).
    ValueSet { assignments: Vec<(VarId, i64, i64)> },
    /// Accumulated lower/upper bounds.
    BoundsPair { lb: Utility, ub: Utility },
}

impl Payload {
    /// Number of scalar entries carried.
    pub fn size(&self) -> u64 {
        match self {
            Payload::UtilLists { lb, ub } => (lb.len() + ub.len()) as u64,
            Payload::UtilTables { lb, ub, .. } => (lb.len() + ub.len()) as u64,
            Payload::ValuePair { .. } => 2,
            Payload::ValueSet { assignments } => 2 * assignments.len() as u64,
            Payload::BoundsPair { .. } => 2,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::UtilLists { .. } | Payload::UtilTables { .. } => MessageKind::Util,
            Payload::ValuePair { .. } | Payload::ValueSet { .. } => MessageKind::Value,
            Payload::BoundsPair { .. } => MessageKind::Bounds,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Message {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    pub fn size(&self) -> u64 {
        self.payload.size()
    }
}

/// Run-wide accounting. All counters are monotone within a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub sent_by_kind: BTreeMap<MessageKind, u64>,
    pub delivered_by_kind: BTreeMap<MessageKind, u64>,
    pub total_payload: u64,
    pub max_payload: u64,
    pub constraint_checks_per_agent: BTreeMap<AgentId, u64>,
    pub simulated_time: u64,
}

impl Metrics {
    pub fn messages_sent(&self) -> u64 {
        self.sent_by_kind.values().sum()
    }

    pub fn messages_delivered(&self) -> u64 {
        self.delivered_by_kind.values().sum()
    }

    pub fn total_checks(&self) -> u64 {
        self.constraint_checks_per_agent.values().sum()
    }

    /// Counter-wise difference against an earlier snapshot of the same run.
    pub fn delta_since(&self, earlier: &Metrics) -> Metrics {
        let sub = |a: &BTreeMap<MessageKind, u64>, b: &BTreeMap<MessageKind, u64>| {
            a.iter()
                .map(|(k, v)| (*k, v - b.get(k).copied().unwrap_or(0)))
                .collect()
        };
        Metrics {
            sent_by_kind: sub(&self.sent_by_kind, &earlier.sent_by_kind),
            delivered_by_kind: sub(&self.delivered_by_kind, &earlier.delivered_by_kind),
            total_payload: self.total_payload - earlier.total_payload,
            max_payload: self.max_payload, // running maximum, not differenced
            constraint_checks_per_agent: self
                .constraint_checks_per_agent
                .iter()
                .map(|(a, v)| {
                    (
                        *a,
                        v - earlier
                            .constraint_checks_per_agent
                            .get(a)
                            .copied()
                            .unwrap_or(0),
                    )
                })
                .collect(),
            simulated_time: self.simulated_time - earlier.simulated_time,
        }
    }
}

/// Simulated-time cost of one phase: the slowest agent's compute plus one
/// message latency per sequential hop along the tree being traversed.
pub fn simulated_clock_advance(
    per_agent_checks: impl IntoIterator<Item = u64>,
    message_depth: u64,
    t_cc: u64,
    t_msg: u64,
) -> u64 {
    let max_checks = per_agent_checks.into_iter().max().unwrap_or(0);
    max_checks * t_cc + message_depth * t_msg
}

/// Mailboxes plus metrics for one run.
#[derive(Clone, Debug)]
pub struct Network {
    agents: Vec<AgentId>,
    inboxes: BTreeMap<AgentId, Vec<Message>>,
    in_flight: Vec<Message>,
    pub metrics: Metrics,
    pub t_cc: u64,
    pub t_msg: u64,
    phase_check_base: BTreeMap<AgentId, u64>,
}

pub const DEFAULT_T_CC: u64 = 1;
pub const DEFAULT_T_MSG: u64 = 100;

impl Network {
    pub fn new(agents: impl IntoIterator<Item = AgentId>, t_cc: u64, t_msg: u64) -> Self {
        let agents: Vec<AgentId> = {
            let mut a: Vec<AgentId> = agents.into_iter().collect();
            a.sort_unstable();
            a.dedup();
            a
        };
        let inboxes = agents.iter().map(|a| (*a, Vec::new())).collect();
        Self {
            agents,
            inboxes,
            in_flight: Vec::new(),
            metrics: Metrics::default(),
            t_cc,
            t_msg,
            phase_check_base: BTreeMap::new(),
        }
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn send(&mut self, msg: Message) -> Result<()> {
        if !self.inboxes.contains_key(&msg.receiver) {
            return Err(Error::UnknownReceiver(msg.receiver));
        }
        *self.metrics.sent_by_kind.entry(msg.kind()).or_insert(0) += 1;
        let size = msg.size();
        self.metrics.total_payload += size;
        self.metrics.max_payload = self.metrics.max_payload.max(size);
        self.in_flight.push(msg);
        Ok(())
    }

    /// Deliver everything sent this round, per-inbox sorted by sender id so
    /// downstream handling is schedule-independent.
    pub fn deliver_round(&mut self) {
        let mut moved = std::mem::take(&mut self.in_flight);
        moved.sort_by_key(|m| (m.receiver, m.sender));
        for msg in moved {
            *self
                .metrics
                .delivered_by_kind
                .entry(msg.kind())
                .or_insert(0) += 1;
            self.inboxes
                .get_mut(&msg.receiver)
                .expect("receiver checked on send")
                .push(msg);
        }
    }

    pub fn take_inbox(&mut self, agent: AgentId) -> Vec<Message> {
        self.inboxes
            .get_mut(&agent)
            .map(std::mem::take)
            .unwrap_or_default()
    }

    pub fn pending(&self) -> bool {
        !self.in_flight.is_empty() || self.inboxes.values().any(|b| !b.is_empty())
    }

    pub fn note_checks(&mut self, agent: AgentId, n: u64) {
        *self
            .metrics
            .constraint_checks_per_agent
            .entry(agent)
            .or_insert(0) += n;
    }

    /// Snapshot per-agent check counters at the start of a protocol phase.
    pub fn begin_phase(&mut self) {
        self.phase_check_base = self.metrics.constraint_checks_per_agent.clone();
    }

    /// Advance the clock for the phase just finished.
    pub fn end_phase(&mut self, message_depth: u64) {
        let deltas: Vec<u64> = self
            .metrics
            .constraint_checks_per_agent
            .iter()
            .map(|(a, v)| v - self.phase_check_base.get(a).copied().unwrap_or(0))
            .collect();
        self.metrics.simulated_time +=
            simulated_clock_advance(deltas, message_depth, self.t_cc, self.t_msg);
    }
}

/// One barrier-delimited step: every agent's handler runs in ascending id
/// order on its freshly-drained inbox, then new messages are delivered.
/// Returns the metrics delta for the step.
pub fn run_phase<S>(
    net: &mut Network,
    states: &mut BTreeMap<AgentId, S>,
    mut handler: impl FnMut(AgentId, &mut S, Vec<Message>, &mut Network) -> Result<()>,
) -> Result<Metrics> {
    let before = net.metrics.clone();
    let order: Vec<AgentId> = net.agents.to_vec();
    for agent in order {
        let inbox = net.take_inbox(agent);
        if let Some(state) = states.get_mut(&agent) {
            handler(agent, state, inbox, net)?;
        } else if !inbox.is_empty() {
            return Err(Error::UnknownReceiver(agent));
        }
    }
    net.deliver_round();
    Ok(net.metrics.delta_since(&before))
}
