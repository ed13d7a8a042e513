//! In-process simulated transport with per-direction drop rates and a fixed
//! per-hop latency. Every message is encoded, recorded in the transcript and
//! decoded again on delivery.

use rand::Rng;

use crate::cost::CostCounters;
use crate::radio::SimRng;
use crate::wire::{decode_message, encode_message, ProtocolMessage, WireError};

pub type SessionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Mt(u32),
    Ns,
    As,
    Adversary,
}

impl Node {
    fn is_radio(self) -> bool {
        matches!(self, Node::Mt(_) | Node::Adversary)
    }
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Mt(id) => write!(f, "mt{id}"),
            Node::Ns => f.write_str("ns"),
            Node::As => f.write_str("as"),
            Node::Adversary => f.write_str("adv"),
        }
    }
}

/// One message as it appeared on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRecord {
    pub time_ns: u64,
    pub session: SessionId,
    pub from: Node,
    pub to: Node,
    pub bytes: Vec<u8>,
    pub delivered: bool,
}

#[derive(Debug, Clone)]
pub struct Transport {
    pub latency_ns: u64,
    /// Drop probability for messages sent by a radio node.
    pub uplink_drop: f64,
    /// Drop probability for messages addressed to a radio node.
    pub downlink_drop: f64,
    records: Vec<WireRecord>,
}

impl Transport {
    pub fn new(latency_ns: u64) -> Self {
        Self {
            latency_ns,
            uplink_drop: 0.0,
            downlink_drop: 0.0,
            records: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &[WireRecord] {
        &self.records
    }

    pub fn session_transcript(&self, session: SessionId) -> impl Iterator<Item = &WireRecord> {
        self.records.iter().filter(move |r| r.session == session)
    }

    pub fn clear_transcript(&mut self) {
        self.records.clear();
    }

    fn dropped(p: f64, rng: &mut SimRng) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            rng.gen_bool(p)
        }
    }

    /// Puts `msg` on the wire at `now_ns`. Returns the arrival time and the
    /// message as decoded by the receiver, or `None` if it was dropped.
    #[allow(clippy::too_many_arguments)]
    pub fn send(
        &mut self,
        now_ns: u64,
        session: SessionId,
        from: Node,
        to: Node,
        msg: &ProtocolMessage,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<Option<(u64, ProtocolMessage)>, WireError> {
        let bytes = encode_message(msg)?;
        let drop_p = if to.is_radio() {
            self.downlink_drop
        } else if from.is_radio() {
            self.uplink_drop
        } else {
            0.0
        };
        let delivered = !Self::dropped(drop_p, rng);
        costs.messages_sent += 1;
        costs.bytes_sent += bytes.len() as u64;
        let decoded = if delivered {
            Some((now_ns + self.latency_ns, decode_message(&bytes)?))
        } else {
            None
        };
        self.records.push(WireRecord {
            time_ns: now_ns,
            session,
            from,
            to,
            bytes,
            delivered,
        });
        Ok(decoded)
    }

    /// Records bytes injected by an adversary without decoding them.
    pub fn record_raw(&mut self, now_ns: u64, session: SessionId, from: Node, to: Node, bytes: Vec<u8>) {
        self.records.push(WireRecord {
            time_ns: now_ns,
            session,
            from,
            to,
            bytes,
            delivered: true,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::rng_from_seed;
    use crate::wire::ReasonCode;

    #[test]
    fn records_and_counts() {
        let mut t = Transport::new(5);
        let mut c = CostCounters::default();
        let msg = ProtocolMessage::Verdict {
            accept: true,
            reason: ReasonCode::Ok,
        };
        let got = t
            .send(10, 1, Node::Ns, Node::Mt(0), &msg, &mut rng_from_seed(1), &mut c)
            .unwrap();
        assert_eq!(got, Some((15, msg)));
        assert_eq!(c.messages_sent, 1);
        assert_eq!(c.bytes_sent, 3);
        assert_eq!(t.transcript().len(), 1);
    }

    #[test]
    fn full_drop_by_direction() {
        let mut t = Transport::new(1);
        t.downlink_drop = 1.0;
        let mut c = CostCounters::default();
        let mut rng = rng_from_seed(1);
        let msg = ProtocolMessage::ResResponse { res: [0; 8] };
        assert!(t.send(0, 1, Node::Ns, Node::Mt(3), &msg, &mut rng, &mut c).unwrap().is_none());
        assert!(t.send(0, 1, Node::Mt(3), Node::Ns, &msg, &mut rng, &mut c).unwrap().is_some());
        assert!(t.send(0, 1, Node::Ns, Node::As, &msg, &mut rng, &mut c).unwrap().is_some());
        assert!(!t.transcript()[0].delivered);
    }
}
