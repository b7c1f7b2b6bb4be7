//! Synchronous round-based message transport with exact communication
//! accounting.
//!
//! A round is open from construction. Nodes broadcast a payload to all of
//! their topology neighbours; [`RoundTransport::close_round`] delivers every
//! outbox at once and opens the next round. A payload sent in round `t` is
//! readable only through the delivery of round `t`.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::EdgeSupport;

/// Ledger bucket a round is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    /// One-time bootstrap exchanges (local fits for edge weights).
    Setup,
    /// Per-iteration exchanges of the solver.
    Iterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub bucket: Bucket,
    pub scalars: u64,
    pub messages: u64,
}

/// Cumulative counts of transmitted real scalars and messages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommLedger {
    pub scalars_sent: u64,
    pub messages_sent: u64,
    pub setup_scalars: u64,
    pub setup_messages: u64,
    pub iterate_scalars: u64,
    pub iterate_messages: u64,
    pub per_round: Vec<RoundRecord>,
}

impl CommLedger {
    fn charge(&mut self, bucket: Bucket, scalars: u64, messages: u64) {
        self.scalars_sent += scalars;
        self.messages_sent += messages;
        match bucket {
            Bucket::Setup => {
                self.setup_scalars += scalars;
                self.setup_messages += messages;
            }
            Bucket::Iterate => {
                self.iterate_scalars += scalars;
                self.iterate_messages += messages;
            }
        }
    }

    /// Adds another ledger's totals and rounds to this one.
    pub fn absorb(&mut self, other: &CommLedger) {
        self.scalars_sent += other.scalars_sent;
        self.messages_sent += other.messages_sent;
        self.setup_scalars += other.setup_scalars;
        self.setup_messages += other.setup_messages;
        self.iterate_scalars += other.iterate_scalars;
        self.iterate_messages += other.iterate_messages;
        self.per_round.extend_from_slice(&other.per_round);
    }
}

/// One point-to-point delivery, for audit dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub round: usize,
    pub sender: usize,
    pub receiver: usize,
    pub scalar_count: usize,
}

#[derive(Debug, Clone)]
pub struct RoundTransport {
    neighbors: Vec<Vec<usize>>,
    outbox: Vec<Vec<f64>>,
    sent: Vec<bool>,
    inbox: Vec<Vec<f64>>,
    delivered: Vec<bool>,
    round: usize,
    open: bool,
    bucket: Bucket,
    pending_scalars: u64,
    pending_messages: u64,
    ledger: CommLedger,
    trace: Option<Vec<TraceRecord>>,
}

impl RoundTransport {
    /// Transport whose links are the edges of `support`.
    pub fn new(support: &EdgeSupport, bucket: Bucket) -> Self {
        let neighbors = (0..support.node_count()).map(|i| support.neighbors(i).to_vec()).collect();
        Self::from_neighbors(neighbors, bucket)
    }

    /// Neighbour lists must be symmetric; they are sorted here.
    pub fn from_neighbors(mut neighbors: Vec<Vec<usize>>, bucket: Bucket) -> Self {
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let k = neighbors.len();
        Self {
            neighbors,
            outbox: vec![Vec::new(); k],
            sent: vec![false; k],
            inbox: vec![Vec::new(); k],
            delivered: vec![false; k],
            round: 0,
            open: true,
            bucket,
            pending_scalars: 0,
            pending_messages: 0,
            ledger: CommLedger::default(),
            trace: None,
        }
    }

    /// Records every delivery for [`RoundTransport::trace`].
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn set_bucket(&mut self, bucket: Bucket) {
        self.bucket = bucket;
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> CommLedger {
        self.ledger
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    /// Enqueues `payload` for every neighbour of `node`. Each node may
    /// broadcast at most once per round.
    pub fn broadcast_to_neighbors(&mut self, node: usize, payload: &[f64]) -> Result<()> {
        if !self.open {
            return Err(Error::Protocol(format!("node {node} sent after the transport was shut down")));
        }
        if node >= self.neighbors.len() {
            return Err(Error::Protocol(format!("unknown node {node}")));
        }
        if self.sent[node] {
            return Err(Error::Protocol(format!(
                "node {node} already broadcast in round {}",
                self.round
            )));
        }
        let buf = &mut self.outbox[node];
        buf.clear();
        buf.extend_from_slice(payload);
        self.sent[node] = true;
        let deg = self.neighbors[node].len() as u64;
        self.pending_scalars += deg * payload.len() as u64;
        self.pending_messages += deg;
        Ok(())
    }

    /// Delivers all outboxes of the current round and opens the next one.
    pub fn close_round(&mut self) -> Result<Delivery<'_>> {
        if !self.open {
            return Err(Error::Protocol("close_round on a shut-down transport".into()));
        }
        std::mem::swap(&mut self.outbox, &mut self.inbox);
        std::mem::swap(&mut self.sent, &mut self.delivered);
        self.sent.iter_mut().for_each(|s| *s = false);

        if let Some(trace) = self.trace.as_mut() {
            for (receiver, senders) in self.neighbors.iter().enumerate() {
                for &sender in senders {
                    if self.delivered[sender] {
                        trace.push(TraceRecord {
                            round: self.round,
                            sender,
                            receiver,
                            scalar_count: self.inbox[sender].len(),
                        });
                    }
                }
            }
        }

        let (scalars, messages) = (self.pending_scalars, self.pending_messages);
        self.ledger.charge(self.bucket, scalars, messages);
        self.ledger.per_round.push(RoundRecord { round: self.round, bucket: self.bucket, scalars, messages });
        self.pending_scalars = 0;
        self.pending_messages = 0;
        self.round += 1;

        Ok(Delivery { transport: self })
    }

    /// Ends the session; later sends are protocol errors. Unsent pending
    /// payloads are dropped uncharged.
    pub fn shutdown(&mut self) {
        self.open = false;
        self.sent.iter_mut().for_each(|s| *s = false);
        self.pending_scalars = 0;
        self.pending_messages = 0;
    }
}

/// Read-only view of the messages delivered by the last closed round.
pub struct Delivery<'a> {
    transport: &'a RoundTransport,
}

impl<'a> Delivery<'a> {
    /// Messages received by `receiver`, ordered by sender id.
    pub fn inbox(&self, receiver: usize) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        let t = self.transport;
        t.neighbors[receiver]
            .iter()
            .filter(move |&&s| t.delivered[s])
            .map(move |&s| (s, t.inbox[s].as_slice()))
    }

    /// Payload `receiver` got from `sender`, if they are linked and the sender spoke.
    pub fn from(&self, receiver: usize, sender: usize) -> Option<&'a [f64]> {
        let t = self.transport;
        if t.neighbors[receiver].binary_search(&sender).is_ok() && t.delivered[sender] {
            Some(t.inbox[sender].as_slice())
        } else {
            None
        }
    }
}

/// Writes trace records as `round, sender, receiver, scalar_count` lines.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}, {}, {}, {}", r.round, r.sender, r.receiver, r.scalar_count)?;
    }
    Ok(())
}
