//! Binary message format.
//!
//! Header, 19 bytes, all multi-byte fields little-endian:
//!
//! | offset | size | field       |
//! |-------:|-----:|-------------|
//! |      0 |    1 | kind        |
//! |      1 |    2 | host id     |
//! |      3 |    4 | counter     |
//! |      7 |    4 | tick        |
//! |     11 |    2 | sender      |
//! |     13 |    2 | recipient   |
//! |     15 |    4 | payload len |
//!
//! Proposal and finalize payloads carry `full` (u8), `base_revision` (u64),
//! a record count (u32) followed by unit records, then a sequence count
//! (u16) followed by `(agent u16, len u16, unit ids u64...)` entries.
//! Reject carries a single reason byte; the remaining kinds are empty.

use thiserror::Error;

use super::{Message, MsgKind, Payload, ProposalBody, Version};
use crate::tasks::{RecordError, UnitRecord};
use crate::AgentId;

pub const HEADER_LEN: usize = 19;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message kind {0}")]
    BadKind(u8),
    #[error("payload length mismatch: header says {header}, got {actual}")]
    LengthMismatch { header: usize, actual: usize },
    #[error("payload has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error(transparent)]
    Record(#[from] RecordError),
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut payload = Vec::new();
    match &msg.payload {
        Payload::Proposal(body) | Payload::Finalize(body) => encode_body(body, &mut payload),
        Payload::Reject(reason) => payload.push(*reason),
        Payload::Accept | Payload::Commit | Payload::Ack | Payload::Cancel => {}
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(msg.payload.kind() as u8);
    out.extend_from_slice(&msg.version.host.to_le_bytes());
    out.extend_from_slice(&msg.version.counter.to_le_bytes());
    out.extend_from_slice(&msg.version.tick.to_le_bytes());
    out.extend_from_slice(&msg.sender.to_le_bytes());
    out.extend_from_slice(&msg.recipient.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn encode_body(body: &ProposalBody, out: &mut Vec<u8>) {
    out.push(body.full as u8);
    out.extend_from_slice(&body.base_revision.to_le_bytes());
    out.extend_from_slice(&(body.records.len() as u32).to_le_bytes());
    for r in &body.records {
        r.encode(out);
    }
    out.extend_from_slice(&(body.sequences.len() as u16).to_le_bytes());
    for (agent, units) in &body.sequences {
        out.extend_from_slice(&agent.to_le_bytes());
        out.extend_from_slice(&(units.len() as u16).to_le_bytes());
        for u in units {
            out.extend_from_slice(&u.to_le_bytes());
        }
    }
}

pub fn decode(buf: &[u8]) -> Result<Message, CodecError> {
    if buf.len() < HEADER_LEN {
        return Err(CodecError::Truncated);
    }
    let kind = MsgKind::from_u8(buf[0]).ok_or(CodecError::BadKind(buf[0]))?;
    let host = AgentId::from_le_bytes(buf[1..3].try_into().unwrap());
    let counter = u32::from_le_bytes(buf[3..7].try_into().unwrap());
    let tick = u32::from_le_bytes(buf[7..11].try_into().unwrap());
    let sender = AgentId::from_le_bytes(buf[11..13].try_into().unwrap());
    let recipient = AgentId::from_le_bytes(buf[13..15].try_into().unwrap());
    let len = u32::from_le_bytes(buf[15..19].try_into().unwrap()) as usize;
    let payload = &buf[HEADER_LEN..];
    if payload.len() != len {
        return Err(CodecError::LengthMismatch { header: len, actual: payload.len() });
    }
    let payload = match kind {
        MsgKind::Proposal => Payload::Proposal(decode_body(payload)?),
        MsgKind::Finalize => Payload::Finalize(decode_body(payload)?),
        MsgKind::Reject => {
            if payload.len() != 1 {
                return Err(CodecError::Truncated);
            }
            Payload::Reject(payload[0])
        }
        MsgKind::Accept | MsgKind::Commit | MsgKind::Ack | MsgKind::Cancel => {
            if !payload.is_empty() {
                return Err(CodecError::TrailingBytes(payload.len()));
            }
            match kind {
                MsgKind::Accept => Payload::Accept,
                MsgKind::Commit => Payload::Commit,
                MsgKind::Ack => Payload::Ack,
                _ => Payload::Cancel,
            }
        }
    };
    Ok(Message {
        version: Version { host, counter, tick },
        sender,
        recipient,
        payload,
    })
}

fn decode_body(buf: &[u8]) -> Result<ProposalBody, CodecError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CodecError> {
        let s = buf.get(*pos..*pos + n).ok_or(CodecError::Truncated)?;
        *pos += n;
        Ok(s)
    };
    let full = take(&mut pos, 1)?[0] != 0;
    let base_revision = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let n_records = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut records = Vec::with_capacity(n_records.min(1024));
    for _ in 0..n_records {
        let (record, used) = UnitRecord::decode(&buf[pos..])?;
        pos += used;
        records.push(record);
    }
    let n_seq = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
    let mut sequences = Vec::with_capacity(n_seq);
    for _ in 0..n_seq {
        let agent = AgentId::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
        let len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let mut units = Vec::with_capacity(len);
        for _ in 0..len {
            units.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        sequences.push((agent, units));
    }
    if pos != buf.len() {
        return Err(CodecError::TrailingBytes(buf.len() - pos));
    }
    Ok(ProposalBody { full, base_revision, records, sequences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{TaskStatus, UnitDescriptor};
    use crate::{Point2, Point3};

    fn sample_body() -> ProposalBody {
        ProposalBody {
            full: true,
            base_revision: 17,
            records: vec![
                UnitRecord {
                    id: 3,
                    anchor: Point3::new(1.0, 2.0, 0.5),
                    descriptor: UnitDescriptor::WholeGrid(4),
                    z_range: (0.0, 3.0),
                    voxel_count: 1000,
                    owner: None,
                    status: TaskStatus::Pending,
                },
                UnitRecord {
                    id: 6,
                    anchor: Point3::new(8.0, 1.0, 1.5),
                    descriptor: UnitDescriptor::Hull {
                        footprint: vec![Point2::new(7.0, 0.0), Point2::new(9.0, 0.0), Point2::new(8.0, 2.0)],
                    },
                    z_range: (1.0, 2.0),
                    voxel_count: 40,
                    owner: Some(1),
                    status: TaskStatus::Assigned,
                },
            ],
            sequences: vec![(0, vec![3]), (1, vec![6])],
        }
    }

    #[test]
    fn header_layout_is_exact() {
        let msg = Message {
            version: Version { host: 0x0102, counter: 0x03040506, tick: 0x0708090a },
            sender: 0x0b0c,
            recipient: 0x0d0e,
            payload: Payload::Accept,
        };
        let bytes = encode(&msg);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(bytes[0], MsgKind::Accept as u8);
        assert_eq!(&bytes[1..3], &[0x02, 0x01]); // host, little-endian
        assert_eq!(&bytes[3..7], &[0x06, 0x05, 0x04, 0x03]); // counter
        assert_eq!(&bytes[7..11], &[0x0a, 0x09, 0x08, 0x07]); // tick
        assert_eq!(&bytes[11..13], &[0x0c, 0x0b]); // sender
        assert_eq!(&bytes[13..15], &[0x0e, 0x0d]); // recipient
        assert_eq!(&bytes[15..19], &[0, 0, 0, 0]); // empty payload
    }

    #[test]
    fn roundtrip_all_kinds() {
        let v = Version { host: 1, counter: 9, tick: 100 };
        let payloads = vec![
            Payload::Proposal(sample_body()),
            Payload::Accept,
            Payload::Reject(super::super::REASON_VALIDATION),
            Payload::Commit,
            Payload::Ack,
            Payload::Finalize(ProposalBody::default()),
            Payload::Cancel,
        ];
        for payload in payloads {
            let msg = Message { version: v, sender: 1, recipient: 2, payload };
            let decoded = decode(&encode(&msg)).unwrap();
            assert_eq!(decoded, msg);
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(decode(&[1, 2, 3]), Err(CodecError::Truncated));
        let msg = Message {
            version: Version { host: 0, counter: 0, tick: 0 },
            sender: 0,
            recipient: 1,
            payload: Payload::Commit,
        };
        let mut bytes = encode(&msg);
        bytes[0] = 99;
        assert_eq!(decode(&bytes), Err(CodecError::BadKind(99)));
        let mut bytes = encode(&msg);
        bytes.push(0); // trailing garbage disagrees with the length field
        assert!(matches!(decode(&bytes), Err(CodecError::LengthMismatch { .. })));
    }

    #[test]
    fn encoding_is_deterministic() {
        let msg = Message {
            version: Version { host: 1, counter: 2, tick: 3 },
            sender: 1,
            recipient: 0,
            payload: Payload::Proposal(sample_body()),
        };
        assert_eq!(encode(&msg), encode(&msg));
    }
}
