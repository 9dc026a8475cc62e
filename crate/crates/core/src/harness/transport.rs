//! Deterministic in-process message router with a full transcript.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::protocol::{MessageKind, Party, ProtocolError, ProtocolMessage, Round, Transport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub phase: String,
    /// Causal depth within the phase: 1 for messages sent before any
    /// delivery, `k + 1` for messages sent after delivering one at depth `k`.
    pub depth: u32,
    pub kind: MessageKind,
    pub sender: Party,
    pub recipient: Party,
    pub round: Round,
    /// Encoded frame as it crossed the wire.
    pub frame: Vec<u8>,
    pub dropped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// SHA-256 over every frame, its drop flag and phase label, in send order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update((e.phase.len() as u32).to_be_bytes());
            h.update(e.phase.as_bytes());
            h.update([e.dropped as u8]);
            h.update((e.frame.len() as u32).to_be_bytes());
            h.update(&e.frame);
        }
        hex::encode(h.finalize())
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    /// Distinct `(phase, depth)` pairs among the entries matching `filter`:
    /// the number of sequential communication rounds they span.
    pub fn communication_rounds<F>(&self, filter: F) -> usize
    where
        F: Fn(&TranscriptEntry) -> bool,
    {
        self.entries
            .iter()
            .filter(|e| filter(e))
            .map(|e| (e.phase.as_str(), e.depth))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Whether `needle` occurs anywhere in any frame.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        !needle.is_empty()
            && self
                .entries
                .iter()
                .any(|e| e.frame.windows(needle.len()).any(|w| w == needle))
    }
}

/// Drops matching messages on send; used to model silent or faulty nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropRule {
    pub sender: Party,
    pub kind: Option<MessageKind>,
}

impl DropRule {
    fn matches(&self, msg: &ProtocolMessage) -> bool {
        self.sender == msg.sender && self.kind.is_none_or(|k| k == msg.kind)
    }
}

/// Single-threaded router. Messages are FIFO per `(sender, recipient)`
/// channel; which non-empty channel is served next is drawn from a seeded
/// generator, so a replay with the same seed yields the same transcript.
#[derive(Debug)]
pub struct SimTransport {
    roles: BTreeSet<Party>,
    channels: BTreeMap<(Party, Party), VecDeque<(ProtocolMessage, u32)>>,
    rng: ChaCha20Rng,
    transcript: Transcript,
    phase: String,
    last_depth: u32,
    drops: Vec<DropRule>,
}

impl SimTransport {
    pub fn new(seed: u64, roles: impl IntoIterator<Item = Party>) -> Self {
        Self {
            roles: roles.into_iter().collect(),
            channels: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            transcript: Transcript::default(),
            phase: String::new(),
            last_depth: 0,
            drops: Vec::new(),
        }
    }

    pub fn drop_messages(&mut self, rule: DropRule) {
        self.drops.push(rule);
    }

    pub fn clear_drops(&mut self) {
        self.drops.clear();
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn pending(&self) -> usize {
        self.channels.values().map(VecDeque::len).sum()
    }
}

impl Transport for SimTransport {
    fn send(&mut self, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        if !self.roles.contains(&msg.recipient) {
            return Err(ProtocolError::UndeliverableMessage(msg.recipient));
        }
        let depth = self.last_depth + 1;
        let dropped = self.drops.iter().any(|r| r.matches(&msg));
        self.transcript.entries.push(TranscriptEntry {
            seq: self.transcript.entries.len() as u64,
            phase: self.phase.clone(),
            depth,
            kind: msg.kind,
            sender: msg.sender,
            recipient: msg.recipient,
            round: msg.round,
            frame: msg.encode(),
            dropped,
        });
        if !dropped {
            self.channels
                .entry((msg.sender, msg.recipient))
                .or_default()
                .push_back((msg, depth));
        }
        Ok(())
    }

    fn deliver(&mut self) -> Option<ProtocolMessage> {
        self.channels.retain(|_, q| !q.is_empty());
        if self.channels.is_empty() {
            return None;
        }
        let pick = self.rng.gen_range(0..self.channels.len());
        let queue = self
            .channels
            .values_mut()
            .nth(pick)
            .expect("index in range");
        let (msg, depth) = queue.pop_front().expect("non-empty channel");
        self.last_depth = depth;
        Some(msg)
    }

    fn begin_phase(&mut self, label: &str) {
        self.phase = label.to_string();
        self.last_depth = 0;
    }
}

/// Routes a fixed schedule of messages among `roles` and returns the
/// transcript together with the delivery order.
pub fn simulate_transport(
    roles: &[Party],
    schedule: Vec<ProtocolMessage>,
    seed: u64,
) -> Result<(Transcript, Vec<ProtocolMessage>), ProtocolError> {
    let mut transport = SimTransport::new(seed, roles.iter().copied());
    transport.begin_phase("schedule");
    for msg in schedule {
        transport.send(msg)?;
    }
    let mut delivered = Vec::new();
    while let Some(msg) = transport.deliver() {
        delivered.push(msg);
    }
    Ok((transport.into_transcript(), delivered))
}
