//! Commit-style allocation rounds between one host and its group members.
//!
//! A round moves through two phases. The host sends a `Proposal` to every
//! member and waits for unanimous `Accept`s; any `Reject` cancels the round.
//! Once all members accept, the host reaches its single decision point: it
//! applies the allocation locally and sends `Commit`s. From that moment the
//! round can only end in `Finalize` — never `Cancel` — so every participant
//! that applies does so for a version the host also applied. Members apply
//! on `Commit` and answer `Ack`; members that stay silent are repaired later
//! by `Finalize` messages, which carry the complete allocation and are safe
//! to apply in isolation.
//!
//! Reliability against a lossy link comes from three mechanisms:
//!
//! * per-phase retries with doubling timeouts (base 10 ticks, cap 160,
//!   budget 5), resending only to silent members;
//! * byte-identical cached replies, so a duplicated request is answered
//!   exactly like the original and never re-runs side effects;
//! * periodic `Finalize` beacons to members that have not acknowledged the
//!   last finalized round, which also brings late joiners up to date.
//!
//! Versions order rounds globally: `(counter, tick, host)` with every engine
//! raising its counter to the highest it has seen. A participant accepts a
//! newer proposal over an older in-flight one, applies content at most once,
//! and only acknowledges versions it actually applied.

use std::collections::{BTreeMap, BTreeSet};

use super::codec::{decode, encode};
use super::{Message, MsgKind, Payload, ProposalBody, Version, REASON_SUPERSEDED, REASON_VALIDATION};
use crate::AgentId;

/// Hook into the state the protocol negotiates over. `validate` runs when a
/// proposal arrives; `apply` runs at most once per version, on commit or
/// finalize.
pub trait DispatchContext {
    fn validate(&mut self, version: Version, body: &ProposalBody) -> bool;
    fn apply(&mut self, version: Version, body: &ProposalBody);
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostConfig {
    /// Resends attempted per phase before giving up on silent members.
    pub retry_budget: u32,
    /// Ticks to wait before the first resend; doubles per resend.
    pub base_timeout: u64,
    /// Upper bound on the doubled wait.
    pub timeout_cap: u64,
    /// Interval between finalize beacons to unacknowledged members.
    pub beacon_interval: u64,
}

impl Default for HostConfig {
    fn default() -> Self {
        Self { retry_budget: 5, base_timeout: 10, timeout_cap: 160, beacon_interval: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutMsg {
    pub to: AgentId,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CancelCause {
    Rejected { by: AgentId, reason: u8 },
    TimedOut,
    /// A new round was started while this one was still proposing.
    Superseded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// This engine mutated its context with the body for `version`.
    Applied { version: Version },
    /// A hosted round reached its end state; `missing` lists members that
    /// never acknowledged (empty on a clean finish).
    Finalized { version: Version, missing: Vec<AgentId> },
    /// A hosted round was abandoned before its decision point.
    Cancelled { version: Version, cause: CancelCause },
}

#[derive(Debug, PartialEq)]
enum Phase {
    Proposing,
    Committing,
}

#[derive(Debug)]
struct HostRound {
    version: Version,
    /// Other agents in the round, ascending; never contains the host.
    members: Vec<AgentId>,
    proposal_bytes: BTreeMap<AgentId, Vec<u8>>,
    commit_bytes: BTreeMap<AgentId, Vec<u8>>,
    full_body: ProposalBody,
    phase: Phase,
    /// Members that answered the current phase (accepted or acked).
    responded: BTreeSet<AgentId>,
    deadline: u64,
    wait: u64,
    retries_left: u32,
}

#[derive(Debug)]
struct FinalizedRound {
    version: Version,
    body: ProposalBody,
    acked: BTreeSet<AgentId>,
}

#[derive(Debug)]
struct Inflight {
    version: Version,
    body: ProposalBody,
}

const REPLY_CACHE_CAP: usize = 128;

#[derive(Debug)]
pub struct DispatchEngine {
    id: AgentId,
    cfg: HostConfig,
    counter: u32,
    round: Option<HostRound>,
    /// Accepted-but-uncommitted proposal this engine is a participant in.
    part: Option<Inflight>,
    /// Byte-identical replies already sent, keyed by the request that
    /// produced them.
    reply_cache: BTreeMap<(Version, u8), Vec<u8>>,
    last_applied: Option<Version>,
    finalized: Option<FinalizedRound>,
    last_beacon: u64,
    /// Undecodable or misaddressed inputs seen, for diagnostics.
    pub malformed: u64,
}

impl DispatchEngine {
    pub fn new(id: AgentId, cfg: HostConfig) -> Self {
        Self {
            id,
            cfg,
            counter: 0,
            round: None,
            part: None,
            reply_cache: BTreeMap::new(),
            last_applied: None,
            finalized: None,
            last_beacon: 0,
            malformed: 0,
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn last_applied(&self) -> Option<Version> {
        self.last_applied
    }

    pub fn round_active(&self) -> bool {
        self.round.is_some()
    }

    pub fn finalized_version(&self) -> Option<Version> {
        self.finalized.as_ref().map(|f| f.version)
    }

    /// Members known to have applied the last finalized allocation. Safe
    /// recipients for delta proposals against that base.
    pub fn acked_members(&self) -> BTreeSet<AgentId> {
        self.finalized.as_ref().map(|f| f.acked.clone()).unwrap_or_default()
    }

    /// Start a round toward `members` (the host itself is filtered out).
    ///
    /// `full` must be the complete allocation. When `delta` is given, its
    /// body is sent instead of `full` to the members listed alongside it;
    /// callers should only list members that acknowledged the round the
    /// delta is based on, and should fall back to full bodies whenever the
    /// previous round did not finish cleanly or membership changed.
    ///
    /// A still-active round is resolved first: cancelled if it was still
    /// proposing, finalized with missing acks if it was already committed.
    pub fn begin_round(
        &mut self,
        ctx: &mut dyn DispatchContext,
        members: &[AgentId],
        full: ProposalBody,
        delta: Option<(ProposalBody, BTreeSet<AgentId>)>,
        now: u64,
    ) -> (Vec<OutMsg>, Vec<Event>) {
        let mut out = Vec::new();
        let mut events = Vec::new();
        self.resolve_active(now, &mut out, &mut events);

        self.counter += 1;
        let version = Version { host: self.id, counter: self.counter, tick: now as u32 };
        let members: Vec<AgentId> = {
            let mut m: Vec<AgentId> = members.iter().copied().filter(|&m| m != self.id).collect();
            m.sort_unstable();
            m.dedup();
            m
        };

        if members.is_empty() {
            ctx.apply(version, &full);
            self.last_applied = Some(version);
            events.push(Event::Applied { version });
            self.finalized =
                Some(FinalizedRound { version, body: full, acked: BTreeSet::new() });
            self.last_beacon = now;
            events.push(Event::Finalized { version, missing: Vec::new() });
            return (out, events);
        }

        let mut proposal_bytes = BTreeMap::new();
        for &m in &members {
            let body = match &delta {
                Some((d, ok)) if ok.contains(&m) => d.clone(),
                _ => full.clone(),
            };
            let bytes = encode(&Message {
                version,
                sender: self.id,
                recipient: m,
                payload: Payload::Proposal(body),
            });
            out.push(OutMsg { to: m, bytes: bytes.clone() });
            proposal_bytes.insert(m, bytes);
        }

        self.round = Some(HostRound {
            version,
            members,
            proposal_bytes,
            commit_bytes: BTreeMap::new(),
            full_body: full,
            phase: Phase::Proposing,
            responded: BTreeSet::new(),
            deadline: now + self.cfg.base_timeout,
            wait: self.cfg.base_timeout,
            retries_left: self.cfg.retry_budget,
        });
        (out, events)
    }

    /// Feed one received frame. Returns replies to send and local events.
    pub fn handle(
        &mut self,
        ctx: &mut dyn DispatchContext,
        bytes: &[u8],
        now: u64,
    ) -> (Vec<OutMsg>, Vec<Event>) {
        let mut out = Vec::new();
        let mut events = Vec::new();
        let msg = match decode(bytes) {
            Ok(m) => m,
            Err(_) => {
                self.malformed += 1;
                return (out, events);
            }
        };
        if msg.recipient != self.id {
            self.malformed += 1;
            return (out, events);
        }
        self.counter = self.counter.max(msg.version.counter);
        let v = msg.version;

        match msg.payload {
            Payload::Proposal(body) => {
                if v.host != msg.sender {
                    self.malformed += 1;
                    return (out, events);
                }
                if let Some(cached) = self.cached(v, MsgKind::Proposal) {
                    out.push(OutMsg { to: msg.sender, bytes: cached });
                    return (out, events);
                }
                let reject = if self.last_applied.map_or(false, |la| la >= v) {
                    Some(REASON_SUPERSEDED)
                } else if self.part.as_ref().map_or(false, |p| p.version > v) {
                    Some(REASON_SUPERSEDED)
                } else if !ctx.validate(v, &body) {
                    Some(REASON_VALIDATION)
                } else {
                    None
                };
                let payload = match reject {
                    Some(reason) => Payload::Reject(reason),
                    None => {
                        self.part = Some(Inflight { version: v, body });
                        Payload::Accept
                    }
                };
                self.reply(v, MsgKind::Proposal, msg.sender, payload, &mut out);
            }
            Payload::Commit => {
                if let Some(cached) = self.cached(v, MsgKind::Commit) {
                    out.push(OutMsg { to: msg.sender, bytes: cached });
                    return (out, events);
                }
                let matches = self.part.as_ref().map_or(false, |p| p.version == v);
                if matches {
                    let inflight = self.part.take().unwrap();
                    if self.last_applied.map_or(true, |la| v > la) {
                        ctx.apply(v, &inflight.body);
                        self.last_applied = Some(v);
                        events.push(Event::Applied { version: v });
                        self.reply(v, MsgKind::Commit, msg.sender, Payload::Ack, &mut out);
                    }
                    // Otherwise something newer was applied since we
                    // accepted; dropping the stale proposal without an ack
                    // keeps "ack" meaning "applied".
                }
                // A commit for a version we hold no proposal for is
                // unanswerable; the finalize path repairs us later.
            }
            Payload::Finalize(body) => {
                if v.host != msg.sender {
                    self.malformed += 1;
                    return (out, events);
                }
                if let Some(cached) = self.cached(v, MsgKind::Finalize) {
                    out.push(OutMsg { to: msg.sender, bytes: cached });
                    return (out, events);
                }
                if self.last_applied.map_or(false, |la| la > v) {
                    return (out, events);
                }
                if self.last_applied.map_or(true, |la| v > la) {
                    ctx.apply(v, &body);
                    self.last_applied = Some(v);
                    events.push(Event::Applied { version: v });
                }
                if self.part.as_ref().map_or(false, |p| p.version <= v) {
                    self.part = None;
                }
                self.reply(v, MsgKind::Finalize, msg.sender, Payload::Ack, &mut out);
            }
            Payload::Cancel => {
                if self.part.as_ref().map_or(false, |p| p.version == v) {
                    self.part = None;
                }
            }
            Payload::Accept => {
                let complete = match &mut self.round {
                    Some(r)
                        if r.phase == Phase::Proposing
                            && r.version == v
                            && r.members.contains(&msg.sender) =>
                    {
                        r.responded.insert(msg.sender);
                        r.responded.len() == r.members.len()
                    }
                    _ => false,
                };
                if complete {
                    self.enter_commit(ctx, now, &mut out, &mut events);
                }
            }
            Payload::Reject(reason) => {
                let cancel = matches!(
                    &self.round,
                    Some(r) if r.phase == Phase::Proposing && r.version == v
                );
                if cancel {
                    self.cancel_round(
                        CancelCause::Rejected { by: msg.sender, reason },
                        &mut out,
                        &mut events,
                    );
                }
            }
            Payload::Ack => {
                let complete = match &mut self.round {
                    Some(r)
                        if r.phase == Phase::Committing
                            && r.version == v
                            && r.members.contains(&msg.sender) =>
                    {
                        r.responded.insert(msg.sender);
                        r.responded.len() == r.members.len()
                    }
                    _ => false,
                };
                if complete {
                    self.finalize_round(now, &mut out, &mut events);
                } else if let Some(f) = &mut self.finalized {
                    // Late ack for an already finalized round, usually in
                    // response to a beacon.
                    if f.version == v {
                        f.acked.insert(msg.sender);
                    }
                }
            }
        }
        (out, events)
    }

    /// Drive timeouts and beacons. `current_members` is the present group
    /// (with or without this engine); it only steers beacon targeting.
    pub fn poll(
        &mut self,
        now: u64,
        current_members: &[AgentId],
    ) -> (Vec<OutMsg>, Vec<Event>) {
        let mut out = Vec::new();
        let mut events = Vec::new();
        if let Some(r) = &mut self.round {
            if now >= r.deadline {
                if r.retries_left > 0 {
                    r.retries_left -= 1;
                    let bytes = match r.phase {
                        Phase::Proposing => &r.proposal_bytes,
                        Phase::Committing => &r.commit_bytes,
                    };
                    for &m in &r.members {
                        if !r.responded.contains(&m) {
                            out.push(OutMsg { to: m, bytes: bytes[&m].clone() });
                        }
                    }
                    r.wait = (r.wait * 2).min(self.cfg.timeout_cap);
                    r.deadline = now + r.wait;
                } else {
                    match r.phase {
                        Phase::Proposing => {
                            self.cancel_round(CancelCause::TimedOut, &mut out, &mut events)
                        }
                        Phase::Committing => self.finalize_round(now, &mut out, &mut events),
                    }
                }
            }
        } else if let Some(f) = &self.finalized {
            if self.cfg.beacon_interval > 0 && now >= self.last_beacon + self.cfg.beacon_interval {
                let stragglers: Vec<AgentId> = current_members
                    .iter()
                    .copied()
                    .filter(|&m| m != self.id && !f.acked.contains(&m))
                    .collect();
                if !stragglers.is_empty() {
                    for m in stragglers {
                        out.push(OutMsg {
                            to: m,
                            bytes: encode(&Message {
                                version: f.version,
                                sender: self.id,
                                recipient: m,
                                payload: Payload::Finalize(f.body.clone()),
                            }),
                        });
                    }
                    self.last_beacon = now;
                }
            }
        }
        (out, events)
    }

    /// Wind down the active round without starting a new one: a proposing
    /// round cancels, a committing round finalizes with its silent members
    /// listed as missing. Used when this engine stops being a host, e.g.
    /// after two components merge and the election picks the other one.
    pub fn resolve_round(&mut self, now: u64) -> (Vec<OutMsg>, Vec<Event>) {
        let mut out = Vec::new();
        let mut events = Vec::new();
        self.resolve_active(now, &mut out, &mut events);
        (out, events)
    }

    fn resolve_active(&mut self, now: u64, out: &mut Vec<OutMsg>, events: &mut Vec<Event>) {
        match self.round.as_ref().map(|r| &r.phase) {
            Some(Phase::Proposing) => {
                self.cancel_round(CancelCause::Superseded, out, events);
            }
            Some(Phase::Committing) => self.finalize_round(now, out, events),
            None => {}
        }
    }

    /// Decision point: unanimous accepts turn into local application plus
    /// commits. After this the round may only finalize.
    fn enter_commit(
        &mut self,
        ctx: &mut dyn DispatchContext,
        now: u64,
        out: &mut Vec<OutMsg>,
        events: &mut Vec<Event>,
    ) {
        let r = self.round.as_mut().expect("commit without a round");
        ctx.apply(r.version, &r.full_body);
        self.last_applied = Some(r.version);
        events.push(Event::Applied { version: r.version });

        r.phase = Phase::Committing;
        r.responded.clear();
        r.retries_left = self.cfg.retry_budget;
        r.wait = self.cfg.base_timeout;
        r.deadline = now + r.wait;
        for &m in &r.members {
            let bytes = encode(&Message {
                version: r.version,
                sender: self.id,
                recipient: m,
                payload: Payload::Commit,
            });
            out.push(OutMsg { to: m, bytes: bytes.clone() });
            r.commit_bytes.insert(m, bytes);
        }
    }

    fn cancel_round(&mut self, cause: CancelCause, out: &mut Vec<OutMsg>, events: &mut Vec<Event>) {
        let r = self.round.take().expect("cancel without a round");
        debug_assert_eq!(r.phase, Phase::Proposing, "cannot cancel past the decision point");
        for &m in &r.members {
            out.push(OutMsg {
                to: m,
                bytes: encode(&Message {
                    version: r.version,
                    sender: self.id,
                    recipient: m,
                    payload: Payload::Cancel,
                }),
            });
        }
        events.push(Event::Cancelled { version: r.version, cause });
    }

    fn finalize_round(&mut self, now: u64, out: &mut Vec<OutMsg>, events: &mut Vec<Event>) {
        let r = self.round.take().expect("finalize without a round");
        let missing: Vec<AgentId> =
            r.members.iter().copied().filter(|m| !r.responded.contains(m)).collect();
        for &m in &missing {
            out.push(OutMsg {
                to: m,
                bytes: encode(&Message {
                    version: r.version,
                    sender: self.id,
                    recipient: m,
                    payload: Payload::Finalize(r.full_body.clone()),
                }),
            });
        }
        self.finalized = Some(FinalizedRound {
            version: r.version,
            body: r.full_body,
            acked: r.responded,
        });
        self.last_beacon = now;
        events.push(Event::Finalized { version: r.version, missing });
    }

    fn cached(&self, version: Version, kind: MsgKind) -> Option<Vec<u8>> {
        self.reply_cache.get(&(version, kind as u8)).cloned()
    }

    fn reply(
        &mut self,
        version: Version,
        to_kind: MsgKind,
        to: AgentId,
        payload: Payload,
        out: &mut Vec<OutMsg>,
    ) {
        let bytes = encode(&Message { version, sender: self.id, recipient: to, payload });
        self.reply_cache.insert((version, to_kind as u8), bytes.clone());
        while self.reply_cache.len() > REPLY_CACHE_CAP {
            self.reply_cache.pop_first();
        }
        out.push(OutMsg { to, bytes });
    }
}
