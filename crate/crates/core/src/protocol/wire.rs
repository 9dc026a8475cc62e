//! Binary framing for protocol messages.
//!
//! ```text
//! frame   = len:u32 kind:u8 sender:u64 recipient:u64 round:u64 payload
//! bigint  = len:u32 magnitude (big-endian)
//! ```
//! All integers are big-endian. Party id 0 is the server; round
//! `u64::MAX` is the setup phase.

use num_bigint::BigUint;
use thiserror::Error;

use crate::ids::NodeId;
use crate::joye_libert::{JlCiphertext, JlLayout};
use crate::lom::MaskedVector;

use super::{ProtectedUpdate, UpdateBody};

const HEADER_LEN: usize = 1 + 8 + 8 + 8;
const SETUP_ROUND: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Server,
    Node(NodeId),
}

impl Party {
    fn wire_id(self) -> u64 {
        match self {
            Party::Server => 0,
            Party::Node(id) => id.get(),
        }
    }

    fn from_wire(id: u64) -> Self {
        NodeId::new(id).map_or(Party::Server, Party::Node)
    }

    pub fn is_server(self) -> bool {
        matches!(self, Party::Server)
    }
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Party::Server => f.write_str("server"),
            Party::Node(id) => id.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Round {
    Setup,
    Online(u64),
}

impl Round {
    fn wire(self) -> u64 {
        match self {
            Round::Setup => SETUP_ROUND,
            Round::Online(tau) => tau,
        }
    }

    fn from_wire(v: u64) -> Self {
        if v == SETUP_ROUND {
            Round::Setup
        } else {
            Round::Online(v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageKind {
    PublicKey = 1,
    ShamirShare = 2,
    ServerKeyShare = 3,
    ProtectedUpdate = 4,
    GlobalModel = 5,
    Abort = 6,
}

impl MessageKind {
    fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => MessageKind::PublicKey,
            2 => MessageKind::ShamirShare,
            3 => MessageKind::ServerKeyShare,
            4 => MessageKind::ProtectedUpdate,
            5 => MessageKind::GlobalModel,
            6 => MessageKind::Abort,
            other => return Err(WireError::UnknownKind(other)),
        })
    }
}

/// Typed message body.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    PublicKey(BigUint),
    /// `[s_sender]_recipient`; the evaluation point is the recipient id.
    ShamirShare(BigUint),
    /// `[sk_0]_sender`
    ServerKeyShare(BigUint),
    ProtectedUpdate(ProtectedUpdate),
    GlobalModel(Vec<f64>),
    Abort(String),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::PublicKey(_) => MessageKind::PublicKey,
            Payload::ShamirShare(_) => MessageKind::ShamirShare,
            Payload::ServerKeyShare(_) => MessageKind::ServerKeyShare,
            Payload::ProtectedUpdate(_) => MessageKind::ProtectedUpdate,
            Payload::GlobalModel(_) => MessageKind::GlobalModel,
            Payload::Abort(_) => MessageKind::Abort,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Payload::PublicKey(v) | Payload::ShamirShare(v) | Payload::ServerKeyShare(v) => {
                put_bigint(&mut out, v)
            }
            Payload::ProtectedUpdate(update) => encode_update(&mut out, update),
            Payload::GlobalModel(model) => {
                out.extend_from_slice(&(model.len() as u64).to_be_bytes());
                for v in model {
                    out.extend_from_slice(&v.to_bits().to_be_bytes());
                }
            }
            Payload::Abort(reason) => out.extend_from_slice(reason.as_bytes()),
        }
        out
    }

    pub fn decode(kind: MessageKind, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let payload = match kind {
            MessageKind::PublicKey => Payload::PublicKey(r.bigint()?),
            MessageKind::ShamirShare => Payload::ShamirShare(r.bigint()?),
            MessageKind::ServerKeyShare => Payload::ServerKeyShare(r.bigint()?),
            MessageKind::ProtectedUpdate => Payload::ProtectedUpdate(decode_update(&mut r)?),
            MessageKind::GlobalModel => {
                let d = r.u64()? as usize;
                if d > r.remaining() / 8 {
                    return Err(WireError::Truncated);
                }
                let model = (0..d)
                    .map(|_| r.u64().map(f64::from_bits))
                    .collect::<Result<_, _>>()?;
                Payload::GlobalModel(model)
            }
            MessageKind::Abort => {
                let reason = std::str::from_utf8(r.rest())
                    .map_err(|_| WireError::Malformed("abort reason is not utf-8"))?;
                Payload::Abort(reason.to_string())
            }
        };
        r.finish()?;
        Ok(payload)
    }
}

const BODY_JL_NAIVE: u8 = 0;
const BODY_JL_PACKED: u8 = 1;
const BODY_LOM: u8 = 2;

fn encode_update(out: &mut Vec<u8>, update: &ProtectedUpdate) {
    out.extend_from_slice(&update.weight.to_be_bytes());
    out.extend_from_slice(&(update.dim as u64).to_be_bytes());
    match &update.body {
        UpdateBody::Jl(ct) => {
            let (tag, slots) = match ct.layout {
                JlLayout::Naive => (BODY_JL_NAIVE, 0u32),
                JlLayout::Packed { slots_per_residue } => {
                    (BODY_JL_PACKED, slots_per_residue as u32)
                }
            };
            out.push(tag);
            out.extend_from_slice(&ct.slot_bits.to_be_bytes());
            out.extend_from_slice(&slots.to_be_bytes());
            out.extend_from_slice(&ct.round.to_be_bytes());
            out.extend_from_slice(&(ct.dim as u64).to_be_bytes());
            out.extend_from_slice(&(ct.residues.len() as u32).to_be_bytes());
            for r in &ct.residues {
                put_bigint(out, r);
            }
        }
        UpdateBody::Lom { sum_bits, masked } => {
            out.push(BODY_LOM);
            out.extend_from_slice(&sum_bits.to_be_bytes());
            out.extend_from_slice(&(masked.values.len() as u32).to_be_bytes());
            let width = lom_value_width(*sum_bits);
            for v in &masked.values {
                out.extend_from_slice(&v.to_be_bytes()[8 - width..]);
            }
        }
    }
}

/// Bytes per masked value on the wire, `ceil(M / 8)`.
pub fn lom_value_width(sum_bits: u32) -> usize {
    sum_bits.div_ceil(8).clamp(1, 8) as usize
}

fn decode_update(r: &mut Reader<'_>) -> Result<ProtectedUpdate, WireError> {
    let weight = r.u64()?;
    let dim = r.u64()? as usize;
    let body = match r.u8()? {
        tag @ (BODY_JL_NAIVE | BODY_JL_PACKED) => {
            let slot_bits = r.u32()?;
            let slots = r.u32()? as usize;
            let round = r.u64()?;
            let ct_dim = r.u64()? as usize;
            let count = r.u32()? as usize;
            if count > r.remaining() / 4 {
                return Err(WireError::Truncated);
            }
            let residues = (0..count).map(|_| r.bigint()).collect::<Result<_, _>>()?;
            let layout = if tag == BODY_JL_NAIVE {
                JlLayout::Naive
            } else {
                if slots == 0 {
                    return Err(WireError::Malformed("packed layout with zero slots"));
                }
                JlLayout::Packed {
                    slots_per_residue: slots,
                }
            };
            UpdateBody::Jl(JlCiphertext {
                residues,
                layout,
                slot_bits,
                dim: ct_dim,
                round,
            })
        }
        BODY_LOM => {
            let sum_bits = r.u32()?;
            if sum_bits == 0 || sum_bits > 64 {
                return Err(WireError::Malformed("mask width out of range"));
            }
            let count = r.u32()? as usize;
            let width = lom_value_width(sum_bits);
            if count > r.remaining() / width {
                return Err(WireError::Truncated);
            }
            let values = (0..count)
                .map(|_| {
                    let mut buf = [0u8; 8];
                    buf[8 - width..].copy_from_slice(r.take(width)?);
                    Ok(u64::from_be_bytes(buf))
                })
                .collect::<Result<_, WireError>>()?;
            UpdateBody::Lom {
                sum_bits,
                masked: MaskedVector { values },
            }
        }
        _ => return Err(WireError::Malformed("unknown update body")),
    };
    Ok(ProtectedUpdate { body, weight, dim })
}

fn put_bigint(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn bigint(&mut self) -> Result<BigUint, WireError> {
        let len = self.u32()? as usize;
        Ok(BigUint::from_bytes_be(self.take(len)?))
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

/// One addressed message with an opaque, kind-specific payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: Party,
    pub recipient: Party,
    pub round: Round,
    pub payload: Vec<u8>,
}

impl ProtocolMessage {
    pub fn new(sender: Party, recipient: Party, round: Round, payload: &Payload) -> Self {
        Self {
            kind: payload.kind(),
            sender,
            recipient,
            round,
            payload: payload.encode(),
        }
    }

    pub fn decode_payload(&self) -> Result<Payload, WireError> {
        Payload::decode(self.kind, &self.payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let body_len = HEADER_LEN + self.payload.len();
        let mut out = Vec::with_capacity(4 + body_len);
        out.extend_from_slice(&(body_len as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.sender.wire_id().to_be_bytes());
        out.extend_from_slice(&self.recipient.wire_id().to_be_bytes());
        out.extend_from_slice(&self.round.wire().to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(frame);
        let len = r.u32()? as usize;
        if len < HEADER_LEN {
            return Err(WireError::Truncated);
        }
        if r.remaining() < len {
            return Err(WireError::Truncated);
        }
        if r.remaining() > len {
            return Err(WireError::TrailingBytes(r.remaining() - len));
        }
        let kind = MessageKind::from_byte(r.u8()?)?;
        let sender = Party::from_wire(r.u64()?);
        let recipient = Party::from_wire(r.u64()?);
        let round = Round::from_wire(r.u64()?);
        let payload = r.rest().to_vec();
        Ok(Self {
            kind,
            sender,
            recipient,
            round,
            payload,
        })
    }
}
