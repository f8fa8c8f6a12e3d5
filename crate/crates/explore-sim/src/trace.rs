//! Binary run trace: every dispatch frame sent plus every plan an agent
//! adopts, in one append-only file.
//!
//! Layout: a fixed magic, then framed records `kind:u8 | tick:u32 |
//! len:u32 | payload`, all little-endian. Wire records carry the exact
//! encoded dispatch frame, so a trace replays through the normal message
//! decoder; plan records carry the tour order, chosen viewpoints, and the
//! waypoint polyline the agent started following.

use thiserror::Error;

use explore_core::dispatch::codec;
use explore_core::dispatch::{Message, Version};
use explore_core::planner::Viewpoint;
use explore_core::{AgentId, Point3, Real};

pub const TRACE_MAGIC: &[u8; 4] = b"XPLT";

const KIND_CONFIG: u8 = 0;
const KIND_WIRE: u8 = 1;
const KIND_PLAN: u8 = 2;

/// Marks a plan record that targets no unit (greedy mode or idling).
pub const NO_UNIT: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace truncated at byte {0}")]
    Truncated(usize),
    #[error("bad trace magic")]
    BadMagic,
    #[error("unknown record kind {0}")]
    BadKind(u8),
    #[error("wire record does not decode: {0}")]
    BadWire(#[from] codec::CodecError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub agent: AgentId,
    /// Allocation version the plan was derived from; zero when none applied.
    pub version: Version,
    /// Unit the local tour works on, or [`NO_UNIT`].
    pub unit: u64,
    /// Remaining global tour over unit ids, current unit first.
    pub order: Vec<u64>,
    pub viewpoints: Vec<Viewpoint>,
    /// Waypoints the agent set out to follow.
    pub waypoints: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    /// Effective coordination configuration, written once at the start.
    Config { tick: u32, text: String },
    /// One dispatch frame as sent (before any network loss).
    Wire { tick: u32, bytes: Vec<u8> },
    Plan { tick: u32, plan: PlanRecord },
}

#[derive(Debug, Default)]
pub struct TraceWriter {
    buf: Vec<u8>,
}

impl TraceWriter {
    pub fn new() -> Self {
        Self { buf: TRACE_MAGIC.to_vec() }
    }

    fn record(&mut self, kind: u8, tick: u64, payload: &[u8]) {
        self.buf.push(kind);
        self.buf.extend_from_slice(&(tick as u32).to_le_bytes());
        self.buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(payload);
    }

    pub fn config(&mut self, tick: u64, text: &str) {
        self.record(KIND_CONFIG, tick, text.as_bytes());
    }

    pub fn wire(&mut self, tick: u64, frame: &[u8]) {
        self.record(KIND_WIRE, tick, frame);
    }

    pub fn plan(&mut self, tick: u64, plan: &PlanRecord) {
        let mut p = Vec::new();
        p.extend_from_slice(&plan.agent.to_le_bytes());
        p.extend_from_slice(&plan.version.counter.to_le_bytes());
        p.extend_from_slice(&plan.version.tick.to_le_bytes());
        p.extend_from_slice(&plan.version.host.to_le_bytes());
        p.extend_from_slice(&plan.unit.to_le_bytes());
        p.extend_from_slice(&(plan.order.len() as u16).to_le_bytes());
        for id in &plan.order {
            p.extend_from_slice(&id.to_le_bytes());
        }
        p.extend_from_slice(&(plan.viewpoints.len() as u16).to_le_bytes());
        for vp in &plan.viewpoints {
            for v in [vp.position.x, vp.position.y, vp.position.z, vp.yaw] {
                p.extend_from_slice(&v.to_le_bytes());
            }
            p.extend_from_slice(&vp.covered.to_le_bytes());
        }
        p.extend_from_slice(&(plan.waypoints.len() as u32).to_le_bytes());
        for w in &plan.waypoints {
            for v in [w.x, w.y, w.z] {
                p.extend_from_slice(&v.to_le_bytes());
            }
        }
        self.record(KIND_PLAN, tick, &p);
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceError> {
        if self.pos + n > self.buf.len() {
            return Err(TraceError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<Real, TraceError> {
        Ok(Real::from_bits(self.u64()?))
    }
}

pub fn parse_trace(bytes: &[u8]) -> Result<Vec<TraceRecord>, TraceError> {
    if bytes.len() < TRACE_MAGIC.len() || &bytes[..TRACE_MAGIC.len()] != TRACE_MAGIC {
        return Err(TraceError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: TRACE_MAGIC.len() };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let kind = r.u8()?;
        let tick = r.u32()?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?;
        match kind {
            KIND_CONFIG => out.push(TraceRecord::Config {
                tick,
                text: String::from_utf8_lossy(payload).into_owned(),
            }),
            KIND_WIRE => {
                // Validate the frame decodes; the raw bytes stay authoritative.
                codec::decode(payload)?;
                out.push(TraceRecord::Wire { tick, bytes: payload.to_vec() });
            }
            KIND_PLAN => {
                let mut p = Reader { buf: payload, pos: 0 };
                let agent = p.u16()?;
                let version = Version { counter: p.u32()?, tick: p.u32()?, host: p.u16()? };
                let unit = p.u64()?;
                let n_order = p.u16()? as usize;
                let mut order = Vec::with_capacity(n_order);
                for _ in 0..n_order {
                    order.push(p.u64()?);
                }
                let n_vps = p.u16()? as usize;
                let mut viewpoints = Vec::with_capacity(n_vps);
                for _ in 0..n_vps {
                    let position = Point3::new(p.f64()?, p.f64()?, p.f64()?);
                    let yaw = p.f64()?;
                    let covered = p.u32()?;
                    viewpoints.push(Viewpoint { position, yaw, covered });
                }
                let n_wps = p.u32()? as usize;
                let mut waypoints = Vec::with_capacity(n_wps);
                for _ in 0..n_wps {
                    waypoints.push(Point3::new(p.f64()?, p.f64()?, p.f64()?));
                }
                out.push(TraceRecord::Plan {
                    tick,
                    plan: PlanRecord { agent, version, unit, order, viewpoints, waypoints },
                });
            }
            other => return Err(TraceError::BadKind(other)),
        }
    }
    Ok(out)
}

/// Decoded view of one wire record.
pub fn decode_wire(bytes: &[u8]) -> Result<Message, TraceError> {
    Ok(codec::decode(bytes)?)
}

/// Human-readable rendering of a whole trace, one line per record plus a
/// count summary; what `replay` prints.
pub fn render_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    let (mut wires, mut plans) = (0u64, 0u64);
    for rec in records {
        match rec {
            TraceRecord::Config { tick, text } => {
                out.push_str(&format!("[{tick:>6}] config {text}\n"));
            }
            TraceRecord::Wire { tick, bytes } => {
                wires += 1;
                match decode_wire(bytes) {
                    Ok(msg) => {
                        let v = msg.version;
                        out.push_str(&format!(
                            "[{tick:>6}] {:<8} {} -> {}  v={}/{}@{}  {}B\n",
                            format!("{:?}", msg.payload.kind()).to_lowercase(),
                            msg.sender,
                            msg.recipient,
                            v.counter,
                            v.host,
                            v.tick,
                            bytes.len(),
                        ));
                    }
                    Err(e) => out.push_str(&format!("[{tick:>6}] undecodable wire: {e}\n")),
                }
            }
            TraceRecord::Plan { tick, plan } => {
                plans += 1;
                let unit = if plan.unit == NO_UNIT {
                    "-".to_string()
                } else {
                    plan.unit.to_string()
                };
                out.push_str(&format!(
                    "[{tick:>6}] plan     agent {} unit {} order {:?} vps {} wps {}\n",
                    plan.agent,
                    unit,
                    plan.order,
                    plan.viewpoints.len(),
                    plan.waypoints.len(),
                ));
            }
        }
    }
    out.push_str(&format!("{} records: {wires} wire, {plans} plan\n", records.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use explore_core::dispatch::{Payload, ProposalBody};

    fn sample_wire() -> Vec<u8> {
        codec::encode(&Message {
            version: Version { host: 1, counter: 3, tick: 40 },
            sender: 1,
            recipient: 2,
            payload: Payload::Proposal(ProposalBody::default()),
        })
    }

    #[test]
    fn roundtrip_all_record_kinds() {
        let mut w = TraceWriter::new();
        w.config(0, "mode=full contiguity=on");
        w.wire(4, &sample_wire());
        let plan = PlanRecord {
            agent: 2,
            version: Version { host: 1, counter: 3, tick: 40 },
            unit: 17,
            order: vec![17, 4, 9],
            viewpoints: vec![Viewpoint {
                position: Point3::new(1.5, 2.5, 0.5),
                yaw: 0.25,
                covered: 11,
            }],
            waypoints: vec![Point3::zero(), Point3::new(1.0, 0.0, 0.0)],
        };
        w.plan(5, &plan);

        let records = parse_trace(w.bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(
            records[0],
            TraceRecord::Config { tick: 0, text: "mode=full contiguity=on".into() }
        );
        assert!(matches!(&records[1], TraceRecord::Wire { tick: 4, .. }));
        assert_eq!(records[2], TraceRecord::Plan { tick: 5, plan });
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(matches!(parse_trace(b"nope"), Err(TraceError::BadMagic)));
        let mut w = TraceWriter::new();
        w.wire(1, &sample_wire());
        let bytes = w.bytes();
        assert!(matches!(
            parse_trace(&bytes[..bytes.len() - 3]),
            Err(TraceError::Truncated(_))
        ));
        let mut bad = bytes.to_vec();
        bad[TRACE_MAGIC.len()] = 9; // unknown record kind
        assert!(matches!(parse_trace(&bad), Err(TraceError::BadKind(9))));
    }

    #[test]
    fn render_mentions_each_record_once() {
        let mut w = TraceWriter::new();
        w.config(0, "mode=greedy");
        w.wire(2, &sample_wire());
        let text = render_trace(&parse_trace(w.bytes()).unwrap());
        assert!(text.contains("config mode=greedy"));
        assert!(text.contains("proposal 1 -> 2"));
        assert!(text.contains("2 records: 1 wire, 0 plan"));
    }
}
