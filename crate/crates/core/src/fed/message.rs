//! The message boundary between the three agents.
//!
//! [`FedMessage`] is the complete vocabulary of the boundary: Q-vectors,
//! batch indices, federated Q-vectors and the shared target values. No
//! variant can carry raw states, raw rewards (other than the shared
//! targets) or network parameters. Every exchange flows through
//! [`Channel::transfer`], which validates direction and payload shape and
//! optionally records an audit log.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentId {
    Alpha,
    Beta,
    Fed,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentId::Alpha => write!(f, "alpha"),
            AgentId::Beta => write!(f, "beta"),
            AgentId::Fed => write!(f, "fed"),
        }
    }
}

/// The only data allowed to cross the agent boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum FedMessage {
    /// Inquiry for a local Q-vector.
    QueryQ,
    /// A local Q-vector (one row, length N).
    QVector(Vec<f64>),
    /// A federated Q-vector (one row, length N).
    FedQVector(Vec<f64>),
    /// Replay indices for one training batch.
    BatchIds(Vec<u32>),
    /// The shared target values Y (length |B|), the only reward-bearing
    /// message.
    SharedTarget(Vec<f64>),
}

pub const TAG_QUERY_Q: u8 = 1;
pub const TAG_Q_VECTOR: u8 = 2;
pub const TAG_FED_Q_VECTOR: u8 = 3;
pub const TAG_BATCH_IDS: u8 = 4;
pub const TAG_SHARED_TARGET: u8 = 5;

impl FedMessage {
    pub fn tag(&self) -> u8 {
        match self {
            FedMessage::QueryQ => TAG_QUERY_Q,
            FedMessage::QVector(_) => TAG_Q_VECTOR,
            FedMessage::FedQVector(_) => TAG_FED_Q_VECTOR,
            FedMessage::BatchIds(_) => TAG_BATCH_IDS,
            FedMessage::SharedTarget(_) => TAG_SHARED_TARGET,
        }
    }

    pub fn payload_len(&self) -> usize {
        match self {
            FedMessage::QueryQ => 0,
            FedMessage::QVector(v) | FedMessage::FedQVector(v) | FedMessage::SharedTarget(v) => {
                v.len()
            }
            FedMessage::BatchIds(v) => v.len(),
        }
    }

    /// Wire encoding: tag byte, little-endian u32 element count, payload of
    /// little-endian 64-bit floats (or 32-bit unsigned indices for
    /// `BatchIds`).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload_len() * 8);
        out.push(self.tag());
        out.extend_from_slice(&(self.payload_len() as u32).to_le_bytes());
        match self {
            FedMessage::QueryQ => {}
            FedMessage::QVector(v) | FedMessage::FedQVector(v) | FedMessage::SharedTarget(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            FedMessage::BatchIds(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 5 {
            return Err(Error::contract("message shorter than its header"));
        }
        let tag = bytes[0];
        let count = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
        let item_size = if tag == TAG_BATCH_IDS { 4 } else { 8 };
        let body_len = count * item_size;
        if bytes.len() < 5 + body_len {
            return Err(Error::contract("truncated message payload"));
        }
        let body = &bytes[5..5 + body_len];
        let floats = || -> Vec<f64> {
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let msg = match tag {
            TAG_QUERY_Q => {
                if count != 0 {
                    return Err(Error::contract("QueryQ carries no payload"));
                }
                FedMessage::QueryQ
            }
            TAG_Q_VECTOR => FedMessage::QVector(floats()),
            TAG_FED_Q_VECTOR => FedMessage::FedQVector(floats()),
            TAG_SHARED_TARGET => FedMessage::SharedTarget(floats()),
            TAG_BATCH_IDS => FedMessage::BatchIds(
                body.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            other => return Err(Error::contract(format!("unknown message tag {other}"))),
        };
        Ok((msg, 5 + body_len))
    }
}

/// One audit-log entry per transferred message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: u64,
    pub from: AgentId,
    pub to: AgentId,
    pub tag: u8,
    pub payload_len: usize,
}

/// In-process channel: the single gate through which protocol data moves.
#[derive(Debug, Default)]
pub struct Channel {
    /// When true, every transfer is recorded for audit.
    pub record: bool,
    log: Vec<MessageRecord>,
}

impl Channel {
    pub fn new(record: bool) -> Self {
        Self {
            record,
            log: Vec::new(),
        }
    }

    /// Move a message across the boundary. Direction legality is enforced
    /// here: queries, batch ids and federated Q-vectors originate from the
    /// fed agent, Q-vectors from the locals, and shared targets pass from
    /// alpha to beta only.
    pub fn transfer(
        &mut self,
        round: u64,
        from: AgentId,
        to: AgentId,
        msg: FedMessage,
    ) -> Result<FedMessage> {
        let legal = match &msg {
            FedMessage::QueryQ | FedMessage::BatchIds(_) | FedMessage::FedQVector(_) => {
                from == AgentId::Fed && to != AgentId::Fed
            }
            FedMessage::QVector(_) => from != AgentId::Fed && to == AgentId::Fed,
            FedMessage::SharedTarget(_) => from == AgentId::Alpha && to == AgentId::Beta,
        };
        if !legal {
            return Err(Error::contract(format!(
                "illegal message direction {from}->{to} for tag {}",
                msg.tag()
            )));
        }
        if self.record {
            self.log.push(MessageRecord {
                round,
                from,
                to,
                tag: msg.tag(),
                payload_len: msg.payload_len(),
            });
        }
        Ok(msg)
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    pub fn clear(&mut self) {
        self.log.clear();
    }

    /// Message-log file: one line per message with round, direction, tag and
    /// payload length.
    pub fn write_log<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "round,direction,tag,payload_len")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{}->{},{},{}",
                r.round, r.from, r.to, r.tag, r.payload_len
            )?;
        }
        Ok(())
    }
}

/// Mechanical audit over a recorded message log.
///
/// Verifies that only the five known tags appear, that payload widths match
/// the Q-vector length `n_candidates` or the batch size (so no state vector
/// or parameter blob can masquerade as a message), and that the only
/// reward-bearing tag is `SharedTarget` travelling alpha -> beta.
pub fn audit_log(
    log: &[MessageRecord],
    n_candidates: usize,
    batch_size: usize,
) -> Result<MessageAudit> {
    let mut audit = MessageAudit::default();
    for r in log {
        match r.tag {
            TAG_QUERY_Q => {
                audit.query_q += 1;
                if r.payload_len != 0 {
                    return Err(Error::contract("QueryQ with payload"));
                }
            }
            TAG_Q_VECTOR => {
                audit.q_vector += 1;
                if r.payload_len != n_candidates {
                    return Err(Error::contract(format!(
                        "QVector payload {} != candidate count {n_candidates}",
                        r.payload_len
                    )));
                }
            }
            TAG_FED_Q_VECTOR => {
                audit.fed_q_vector += 1;
                if r.payload_len != n_candidates {
                    return Err(Error::contract(format!(
                        "FedQVector payload {} != candidate count {n_candidates}",
                        r.payload_len
                    )));
                }
            }
            TAG_BATCH_IDS => {
                audit.batch_ids += 1;
                if r.payload_len != batch_size {
                    return Err(Error::contract("BatchIds payload != batch size"));
                }
            }
            TAG_SHARED_TARGET => {
                audit.shared_target += 1;
                if !(r.from == AgentId::Alpha && r.to == AgentId::Beta) {
                    return Err(Error::contract("SharedTarget outside alpha->beta"));
                }
                if r.payload_len != batch_size {
                    return Err(Error::contract("SharedTarget payload != batch size"));
                }
            }
            other => return Err(Error::contract(format!("unknown tag {other} in log"))),
        }
    }
    Ok(audit)
}

/// Tag counts produced by [`audit_log`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageAudit {
    pub query_q: usize,
    pub q_vector: usize,
    pub fed_q_vector: usize,
    pub batch_ids: usize,
    pub shared_target: usize,
}

impl MessageAudit {
    pub fn total(&self) -> usize {
        self.query_q + self.q_vector + self.fed_q_vector + self.batch_ids + self.shared_target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let messages = vec![
            FedMessage::QueryQ,
            FedMessage::QVector(vec![1.5, -2.25, 0.0]),
            FedMessage::FedQVector(vec![f64::MIN_POSITIVE, 7.0]),
            FedMessage::BatchIds(vec![0, 42, 9999]),
            FedMessage::SharedTarget(vec![3.25; 4]),
        ];
        for msg in messages {
            let bytes = msg.encode();
            assert_eq!(bytes[0], msg.tag());
            let (decoded, used) = FedMessage::decode(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(decoded, msg);
        }
    }

    #[test]
    fn decode_rejects_truncation_and_bad_tags() {
        let bytes = FedMessage::QVector(vec![1.0, 2.0]).encode();
        assert!(FedMessage::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = 77;
        assert!(FedMessage::decode(&bad).is_err());
    }

    #[test]
    fn channel_enforces_directions() {
        let mut ch = Channel::new(true);
        assert!(ch
            .transfer(0, AgentId::Fed, AgentId::Alpha, FedMessage::QueryQ)
            .is_ok());
        assert!(ch
            .transfer(0, AgentId::Alpha, AgentId::Fed, FedMessage::QVector(vec![1.0]))
            .is_ok());
        assert!(ch
            .transfer(0, AgentId::Alpha, AgentId::Beta, FedMessage::SharedTarget(vec![1.0]))
            .is_ok());
        // Reversed directions are rejected.
        assert!(ch
            .transfer(0, AgentId::Alpha, AgentId::Fed, FedMessage::QueryQ)
            .is_err());
        assert!(ch
            .transfer(0, AgentId::Beta, AgentId::Alpha, FedMessage::SharedTarget(vec![1.0]))
            .is_err());
        assert!(ch
            .transfer(0, AgentId::Fed, AgentId::Alpha, FedMessage::QVector(vec![1.0]))
            .is_err());
        assert_eq!(ch.log().len(), 3);
    }

    #[test]
    fn audit_checks_widths_and_tags() {
        let mut ch = Channel::new(true);
        ch.transfer(0, AgentId::Fed, AgentId::Alpha, FedMessage::QueryQ)
            .unwrap();
        ch.transfer(0, AgentId::Alpha, AgentId::Fed, FedMessage::QVector(vec![0.0; 3]))
            .unwrap();
        ch.transfer(1, AgentId::Fed, AgentId::Beta, FedMessage::BatchIds(vec![1, 2]))
            .unwrap();
        let audit = audit_log(ch.log(), 3, 2).unwrap();
        assert_eq!(audit.query_q, 1);
        assert_eq!(audit.q_vector, 1);
        assert_eq!(audit.batch_ids, 1);

        // A state-vector-sized payload cannot pass as a Q-vector.
        let bad = [MessageRecord {
            round: 0,
            from: AgentId::Alpha,
            to: AgentId::Fed,
            tag: TAG_Q_VECTOR,
            payload_len: 16,
        }];
        assert!(audit_log(&bad, 3, 2).is_err());
    }

    #[test]
    fn log_file_has_one_line_per_message() {
        let mut ch = Channel::new(true);
        ch.transfer(5, AgentId::Fed, AgentId::Beta, FedMessage::QueryQ)
            .unwrap();
        ch.transfer(5, AgentId::Beta, AgentId::Fed, FedMessage::QVector(vec![1.0]))
            .unwrap();
        let mut buf = Vec::new();
        ch.write_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "5,fed->beta,1,0");
        assert_eq!(lines[2], "5,beta->fed,2,1");
    }
}
