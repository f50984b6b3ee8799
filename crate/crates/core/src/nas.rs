//! NAS message codec for the inventory and command services.
//!
//! Messages travel end to end between the core-network function and
//! devices; every intermediate node forwards the encoded bytes untouched.
//! The layout is a fixed-order TLV designed to keep worst-case PDUs at
//! [`MAX_PDU_LEN`] (64) bytes:
//!
//! ```text
//! header   kind(1) taskId(4 BE) flags(1)
//! body     fields in declared order:
//!   InventoryRequest   mask, challenge?
//!   InventoryResponse  deviceId(14), counter(4 BE), authTag?
//!   CommandRequest     target(14), op(1), address(1), payload, challenge?
//!   CommandResponse    deviceId(14), op(1), status(1), payload,
//!                      counter(4 BE), authTag?
//! ```
//!
//! * `payload` is a 1-byte length followed by at most 32 bytes.
//! * optionals (`challenge?` 8 bytes, `authTag?` 4 bytes) are a 1-byte
//!   presence flag (0 or 1) followed by the value when present.
//! * `mask` is one header byte (low 7 bits prefix length 0..=96, high bit
//!   set when an owner filter follows), `ceil(prefixBits/8)` prefix bytes,
//!   then `idType(1) ownerCode(2 BE)` when the owner filter is present.
//!
//! The decoder is total: any byte string yields `Ok` or a [`DecodeError`],
//! never a panic, and it is strict, rejecting non-canonical input
//! (unknown flag bits, presence bytes other than 0/1, mask bits past the
//! prefix, trailing bytes) so that decode of anything it accepts
//! re-encodes to the identical bytes.
//!
//! Confidentiality never covers the message structure: when the `CONF`
//! flag is set, the payload field carries ciphertext and everything else
//! stays cleartext so nodes can route and the receiver can locate the
//! key material (device id, counter) to decipher. See [`crate::security`].

use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::identity::{DeviceId, IdMask, IdType, OwnerFilter, TaskId, OWNER_CODE_MAX, PREFIX_BITS_MAX};

/// Hard upper bound on an encoded PDU, sized for backscatter budgets.
pub const MAX_PDU_LEN: usize = 64;

/// Upper bound on a command payload.
pub const MAX_PAYLOAD_LEN: usize = 32;

/// Security indication bits carried in the message header.
///
/// `AUTH`: a challenge (requests) or auth tag (responses) is present.
/// `CONF`: the payload field is ciphered. `REPLAY`: responses are
/// checked against the per-device counter window.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SecurityFlags(u8);

impl SecurityFlags {
    pub const NONE: Self = SecurityFlags(0);
    pub const AUTH: Self = SecurityFlags(0x01);
    pub const CONF: Self = SecurityFlags(0x02);
    pub const REPLAY: Self = SecurityFlags(0x04);
    const ALL: u8 = 0x07;

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Rejects unknown bits.
    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::ALL == 0).then_some(SecurityFlags(bits))
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl core::ops::BitOr for SecurityFlags {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        SecurityFlags(self.0 | rhs.0)
    }
}

impl fmt::Debug for SecurityFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("NONE");
        }
        let mut first = true;
        for (bit, name) in [(Self::AUTH, "AUTH"), (Self::CONF, "CONF"), (Self::REPLAY, "REPLAY")] {
            if self.contains(bit) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Per-message security header: the flag bits plus how many body bytes
/// are ciphered (always the payload field, or zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SecurityEnvelope {
    pub flags: SecurityFlags,
    pub ciphered_length: u8,
}

impl SecurityEnvelope {
    pub fn cleartext() -> Self {
        SecurityEnvelope::default()
    }

    pub fn with_flags(flags: SecurityFlags) -> Self {
        SecurityEnvelope { flags, ciphered_length: 0 }
    }
}

/// Message kinds, in wire-code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    InventoryRequest,
    InventoryResponse,
    CommandRequest,
    CommandResponse,
}

impl MessageKind {
    pub fn code(self) -> u8 {
        match self {
            MessageKind::InventoryRequest => 1,
            MessageKind::InventoryResponse => 2,
            MessageKind::CommandRequest => 3,
            MessageKind::CommandResponse => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(MessageKind::InventoryRequest),
            2 => Some(MessageKind::InventoryResponse),
            3 => Some(MessageKind::CommandRequest),
            4 => Some(MessageKind::CommandResponse),
            _ => None,
        }
    }
}

/// Device memory operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum CommandOp {
    Read,
    Write,
    Activate,
    Deactivate,
}

impl CommandOp {
    pub fn code(self) -> u8 {
        match self {
            CommandOp::Read => 0,
            CommandOp::Write => 1,
            CommandOp::Activate => 2,
            CommandOp::Deactivate => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CommandOp::Read),
            1 => Some(CommandOp::Write),
            2 => Some(CommandOp::Activate),
            3 => Some(CommandOp::Deactivate),
            _ => None,
        }
    }
}

/// Device-side outcome of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum CommandStatus {
    Ok,
    NotSupported,
    MemoryError,
    Deactivated,
}

impl CommandStatus {
    pub fn code(self) -> u8 {
        match self {
            CommandStatus::Ok => 0,
            CommandStatus::NotSupported => 1,
            CommandStatus::MemoryError => 2,
            CommandStatus::Deactivated => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CommandStatus::Ok),
            1 => Some(CommandStatus::NotSupported),
            2 => Some(CommandStatus::MemoryError),
            3 => Some(CommandStatus::Deactivated),
            _ => None,
        }
    }
}

/// Command payload bytes, bounded at [`MAX_PAYLOAD_LEN`] by construction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct Payload(Vec<u8>);

/// Error from [`Payload::new`]: too many bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("payload of {0} bytes exceeds the {max}-byte bound", max = MAX_PAYLOAD_LEN)]
pub struct PayloadTooLong(pub usize);

impl Payload {
    pub fn empty() -> Self {
        Payload(Vec::new())
    }

    pub fn new(bytes: Vec<u8>) -> Result<Self, PayloadTooLong> {
        if bytes.len() > MAX_PAYLOAD_LEN {
            return Err(PayloadTooLong(bytes.len()));
        }
        Ok(Payload(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PayloadTooLong> {
        Self::new(bytes.to_vec())
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }
}

impl Deref for Payload {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<&[u8]> for Payload {
    type Error = PayloadTooLong;
    fn try_from(bytes: &[u8]) -> Result<Self, PayloadTooLong> {
        Self::from_slice(bytes)
    }
}

/// Message bodies, fields in wire order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NasBody {
    InventoryRequest {
        mask: IdMask,
        challenge: Option<[u8; 8]>,
    },
    InventoryResponse {
        device_id: DeviceId,
        counter: u32,
        auth_tag: Option<[u8; 4]>,
    },
    CommandRequest {
        target: DeviceId,
        op: CommandOp,
        address: u8,
        payload: Payload,
        challenge: Option<[u8; 8]>,
    },
    CommandResponse {
        device_id: DeviceId,
        op: CommandOp,
        status: CommandStatus,
        payload: Payload,
        counter: u32,
        auth_tag: Option<[u8; 4]>,
    },
}

/// One NAS message: task correlation, security header, body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NasMessage {
    pub task_id: TaskId,
    pub security: SecurityEnvelope,
    pub body: NasBody,
}

/// Encoding failure. Valid in-memory messages always encode; these arise
/// only from hand-built inconsistent values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    /// Envelope does not match the body: `CONF` requires a command
    /// body whose payload length equals `ciphered_length` (zero when
    /// there is nothing to cipher yet); without `CONF`,
    /// `ciphered_length` must be zero.
    #[error("security envelope inconsistent with body")]
    EnvelopeMismatch,
}

/// Decoding failure, with enough context to point at the offending byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input of {0} bytes exceeds the {max}-byte PDU bound", max = MAX_PDU_LEN)]
    TooLong(usize),
    #[error("input ended at byte {at}, more needed")]
    Truncated { at: usize },
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("unknown security flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("unknown command op {0:#04x}")]
    UnknownOp(u8),
    #[error("unknown command status {0:#04x}")]
    UnknownStatus(u8),
    #[error("unknown id type nibble {0:#x}")]
    IdType(u8),
    #[error("mask prefix of {0} bits exceeds {max}", max = PREFIX_BITS_MAX)]
    MaskPrefixBits(u8),
    #[error("mask prefix value has bits set past the prefix")]
    MaskTrailingBits,
    #[error("owner code {0:#06x} exceeds {max:#x}", max = OWNER_CODE_MAX)]
    OwnerCodeRange(u16),
    #[error("payload length {0} exceeds {max}", max = MAX_PAYLOAD_LEN)]
    PayloadLength(u8),
    #[error("presence byte must be 0 or 1, got {0:#04x}")]
    PresenceByte(u8),
    #[error("security envelope inconsistent with body")]
    EnvelopeMismatch,
    #[error("{extra} trailing bytes after message")]
    TrailingBytes { extra: usize },
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated { at: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32_be(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn device_id(&mut self) -> Result<DeviceId, DecodeError> {
        let bytes = self.take(DeviceId::WIRE_LEN)?;
        DeviceId::from_wire(bytes).map_err(|e| match e {
            crate::identity::WireError::IdType(n) => DecodeError::IdType(n),
            // Length is impossible: take() returned exactly WIRE_LEN.
            crate::identity::WireError::Length(_) => DecodeError::Truncated { at: self.buf.len() },
        })
    }

    fn presence(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DecodeError::PresenceByte(other)),
        }
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(DecodeError::TrailingBytes { extra: self.buf.len() - self.pos });
        }
        Ok(())
    }
}

fn encode_mask(out: &mut Vec<u8>, mask: &IdMask) {
    let bits = mask.prefix_bits();
    let mut header = bits;
    if mask.owner_filter().is_some() {
        header |= 0x80;
    }
    out.push(header);
    out.extend_from_slice(&mask.prefix_value()[..usize::from(bits).div_ceil(8)]);
    if let Some(owner) = mask.owner_filter() {
        out.push(owner.id_type.code());
        out.extend_from_slice(&owner.owner_code.to_be_bytes());
    }
}

fn decode_mask(c: &mut Cursor<'_>) -> Result<IdMask, DecodeError> {
    let header = c.u8()?;
    let bits = header & 0x7F;
    if bits > PREFIX_BITS_MAX {
        return Err(DecodeError::MaskPrefixBits(bits));
    }
    let mut prefix = [0u8; 12];
    let nbytes = usize::from(bits).div_ceil(8);
    prefix[..nbytes].copy_from_slice(c.take(nbytes)?);
    let owner = if header & 0x80 != 0 {
        let code = c.u8()?;
        let id_type = IdType::from_code(code).ok_or(DecodeError::IdType(code))?;
        let owner_code = u16::from_be_bytes(c.array()?);
        if owner_code > OWNER_CODE_MAX {
            return Err(DecodeError::OwnerCodeRange(owner_code));
        }
        Some(OwnerFilter { id_type, owner_code })
    } else {
        None
    };
    IdMask::new(bits, prefix, owner).map_err(|e| match e {
        crate::identity::MaskError::PrefixBits(b) => DecodeError::MaskPrefixBits(b),
        crate::identity::MaskError::TrailingBits(_) => DecodeError::MaskTrailingBits,
    })
}

fn encode_payload(out: &mut Vec<u8>, payload: &Payload) {
    out.push(payload.len() as u8);
    out.extend_from_slice(payload);
}

fn decode_payload(c: &mut Cursor<'_>) -> Result<Payload, DecodeError> {
    let len = c.u8()?;
    if usize::from(len) > MAX_PAYLOAD_LEN {
        return Err(DecodeError::PayloadLength(len));
    }
    Ok(Payload(c.take(usize::from(len))?.to_vec()))
}

fn encode_optional(out: &mut Vec<u8>, value: Option<&[u8]>) {
    match value {
        Some(v) => {
            out.push(1);
            out.extend_from_slice(v);
        }
        None => out.push(0),
    }
}

impl NasMessage {
    pub fn kind(&self) -> MessageKind {
        match self.body {
            NasBody::InventoryRequest { .. } => MessageKind::InventoryRequest,
            NasBody::InventoryResponse { .. } => MessageKind::InventoryResponse,
            NasBody::CommandRequest { .. } => MessageKind::CommandRequest,
            NasBody::CommandResponse { .. } => MessageKind::CommandResponse,
        }
    }

    fn payload_len(&self) -> usize {
        match &self.body {
            NasBody::CommandRequest { payload, .. } | NasBody::CommandResponse { payload, .. } => payload.len(),
            _ => 0,
        }
    }

    /// Whether the envelope's ciphering claim matches the body. `CONF`
    /// belongs on command bodies only (inventory messages carry no
    /// payload field to protect) and its `ciphered_length` must equal
    /// the payload length; a confidential request whose payload is
    /// empty legitimately carries `CONF` with a length of zero, telling
    /// the device to protect whatever it sends back.
    pub fn envelope_consistent(&self) -> bool {
        let has_payload_field = matches!(
            self.body,
            NasBody::CommandRequest { .. } | NasBody::CommandResponse { .. }
        );
        let plen = self.payload_len();
        if self.security.flags.contains(SecurityFlags::CONF) {
            has_payload_field && usize::from(self.security.ciphered_length) == plen
        } else {
            self.security.ciphered_length == 0
        }
    }

    /// Encodes to wire bytes. The result never exceeds [`MAX_PDU_LEN`].
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        if !self.envelope_consistent() {
            return Err(EncodeError::EnvelopeMismatch);
        }
        let mut out = Vec::with_capacity(MAX_PDU_LEN);
        out.push(self.kind().code());
        out.extend_from_slice(&self.task_id.0.to_be_bytes());
        out.push(self.security.flags.bits());
        match &self.body {
            NasBody::InventoryRequest { mask, challenge } => {
                encode_mask(&mut out, mask);
                encode_optional(&mut out, challenge.as_ref().map(|c| &c[..]));
            }
            NasBody::InventoryResponse { device_id, counter, auth_tag } => {
                out.extend_from_slice(&device_id.to_wire());
                out.extend_from_slice(&counter.to_be_bytes());
                encode_optional(&mut out, auth_tag.as_ref().map(|t| &t[..]));
            }
            NasBody::CommandRequest { target, op, address, payload, challenge } => {
                out.extend_from_slice(&target.to_wire());
                out.push(op.code());
                out.push(*address);
                encode_payload(&mut out, payload);
                encode_optional(&mut out, challenge.as_ref().map(|c| &c[..]));
            }
            NasBody::CommandResponse { device_id, op, status, payload, counter, auth_tag } => {
                out.extend_from_slice(&device_id.to_wire());
                out.push(op.code());
                out.push(status.code());
                encode_payload(&mut out, payload);
                out.extend_from_slice(&counter.to_be_bytes());
                encode_optional(&mut out, auth_tag.as_ref().map(|t| &t[..]));
            }
        }
        debug_assert!(out.len() <= MAX_PDU_LEN);
        Ok(out)
    }

    /// Decodes wire bytes. Total: every input yields `Ok` or an error.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() > MAX_PDU_LEN {
            return Err(DecodeError::TooLong(bytes.len()));
        }
        let mut c = Cursor::new(bytes);
        let kind_code = c.u8()?;
        let kind = MessageKind::from_code(kind_code).ok_or(DecodeError::UnknownKind(kind_code))?;
        let task_id = TaskId(c.u32_be()?);
        let flag_bits = c.u8()?;
        let flags = SecurityFlags::from_bits(flag_bits).ok_or(DecodeError::UnknownFlags(flag_bits))?;
        let body = match kind {
            MessageKind::InventoryRequest => {
                let mask = decode_mask(&mut c)?;
                let challenge = c.presence()?.then(|| c.array()).transpose()?;
                NasBody::InventoryRequest { mask, challenge }
            }
            MessageKind::InventoryResponse => {
                let device_id = c.device_id()?;
                let counter = c.u32_be()?;
                let auth_tag = c.presence()?.then(|| c.array()).transpose()?;
                NasBody::InventoryResponse { device_id, counter, auth_tag }
            }
            MessageKind::CommandRequest => {
                let target = c.device_id()?;
                let op_code = c.u8()?;
                let op = CommandOp::from_code(op_code).ok_or(DecodeError::UnknownOp(op_code))?;
                let address = c.u8()?;
                let payload = decode_payload(&mut c)?;
                let challenge = c.presence()?.then(|| c.array()).transpose()?;
                NasBody::CommandRequest { target, op, address, payload, challenge }
            }
            MessageKind::CommandResponse => {
                let device_id = c.device_id()?;
                let op_code = c.u8()?;
                let op = CommandOp::from_code(op_code).ok_or(DecodeError::UnknownOp(op_code))?;
                let status_code = c.u8()?;
                let status = CommandStatus::from_code(status_code).ok_or(DecodeError::UnknownStatus(status_code))?;
                let payload = decode_payload(&mut c)?;
                let counter = c.u32_be()?;
                let auth_tag = c.presence()?.then(|| c.array()).transpose()?;
                NasBody::CommandResponse { device_id, op, status, payload, counter, auth_tag }
            }
        };
        c.finish()?;
        let plen = match &body {
            NasBody::CommandRequest { payload, .. } | NasBody::CommandResponse { payload, .. } => payload.len(),
            _ => 0,
        };
        let msg = NasMessage {
            task_id,
            security: SecurityEnvelope {
                flags,
                // plen fits in u8: payloads are bounded at 32.
                ciphered_length: if flags.contains(SecurityFlags::CONF) { plen as u8 } else { 0 },
            },
            body,
        };
        if !msg.envelope_consistent() {
            return Err(DecodeError::EnvelopeMismatch);
        }
        Ok(msg)
    }
}
