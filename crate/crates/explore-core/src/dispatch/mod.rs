//! Commit-style dispatch: negotiating allocation rounds over a lossy link.
//!
//! Agents within radio range form a group; the lowest id hosts. The host
//! proposes an allocation, gathers accepts, commits, gathers acks, then
//! finalizes. Every exchange is idempotent: retransmitted requests get the
//! byte-identical cached reply, and versions give rounds a total order so
//! stale traffic can never roll an agent backwards.

pub mod codec;
pub mod network;
pub mod protocol;

use std::cmp::Ordering;

use crate::tasks::UnitRecord;
use crate::{AgentId, Point3, Real};

/// Round identity. Orders by counter first, then the tick the round began,
/// then the host id as the final tiebreak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Version {
    pub host: AgentId,
    pub counter: u32,
    pub tick: u32,
}

impl Ord for Version {
    fn cmp(&self, o: &Self) -> Ordering {
        self.counter
            .cmp(&o.counter)
            .then(self.tick.cmp(&o.tick))
            .then(self.host.cmp(&o.host))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgKind {
    Proposal = 1,
    Accept = 2,
    Reject = 3,
    Commit = 4,
    Ack = 5,
    Finalize = 6,
    Cancel = 7,
}

impl MsgKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(MsgKind::Proposal),
            2 => Some(MsgKind::Accept),
            3 => Some(MsgKind::Reject),
            4 => Some(MsgKind::Commit),
            5 => Some(MsgKind::Ack),
            6 => Some(MsgKind::Finalize),
            7 => Some(MsgKind::Cancel),
            _ => None,
        }
    }
}

pub const REASON_VALIDATION: u8 = 1;
pub const REASON_SUPERSEDED: u8 = 2;

/// Allocation content carried by proposals and finalizes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalBody {
    /// True when `records` is the sender's complete ledger rather than just
    /// the entries changed since the last finalized round.
    pub full: bool,
    /// Sender-side ledger revision the record set was taken at.
    pub base_revision: u64,
    /// Unit records, ascending by id.
    pub records: Vec<UnitRecord>,
    /// Unit visit sequences per agent, ascending by agent id.
    pub sequences: Vec<(AgentId, Vec<u64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Proposal(ProposalBody),
    Accept,
    Reject(u8),
    Commit,
    Ack,
    Finalize(ProposalBody),
    Cancel,
}

impl Payload {
    pub fn kind(&self) -> MsgKind {
        match self {
            Payload::Proposal(_) => MsgKind::Proposal,
            Payload::Accept => MsgKind::Accept,
            Payload::Reject(_) => MsgKind::Reject,
            Payload::Commit => MsgKind::Commit,
            Payload::Ack => MsgKind::Ack,
            Payload::Finalize(_) => MsgKind::Finalize,
            Payload::Cancel => MsgKind::Cancel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub version: Version,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub payload: Payload,
}

/// One radio-range component with its elected host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGroup {
    pub host: AgentId,
    /// All group members including the host, ascending.
    pub members: Vec<AgentId>,
}

/// Groups agents by transitive radio proximity (pairwise distance within
/// `r_comm`) and elects the lowest id in each component as host. Groups
/// come back sorted by host id.
pub fn elect_hosts(positions: &[(AgentId, Point3)], r_comm: Real) -> Vec<CommGroup> {
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if positions[i].1.distance(positions[j].1) <= r_comm {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<AgentId>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(positions[i].0);
    }
    let mut out: Vec<CommGroup> = groups
        .into_values()
        .map(|mut members| {
            members.sort_unstable();
            CommGroup { host: members[0], members }
        })
        .collect();
    out.sort_by_key(|g| g.host);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_order_is_counter_tick_host() {
        let a = Version { host: 2, counter: 1, tick: 5 };
        let b = Version { host: 1, counter: 2, tick: 0 };
        let c = Version { host: 1, counter: 1, tick: 6 };
        let d = Version { host: 3, counter: 1, tick: 5 };
        assert!(a < b); // counter dominates
        assert!(a < c); // then tick
        assert!(a < d); // then host
        assert_eq!(a.cmp(&a), Ordering::Equal);
    }

    #[test]
    fn election_groups_by_transitive_proximity() {
        let p = |x: Real| Point3::new(x, 0.0, 0.0);
        // 0-1-2 chain within 5 m hops, 3 isolated
        let groups = elect_hosts(
            &[(0, p(0.0)), (1, p(4.0)), (2, p(8.0)), (3, p(50.0))],
            5.0,
        );
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0], CommGroup { host: 0, members: vec![0, 1, 2] });
        assert_eq!(groups[1], CommGroup { host: 3, members: vec![3] });
    }

    #[test]
    fn election_boundary_is_inclusive() {
        let p = |x: Real| Point3::new(x, 0.0, 0.0);
        let groups = elect_hosts(&[(7, p(0.0)), (4, p(5.0))], 5.0);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].host, 4);
    }
}
