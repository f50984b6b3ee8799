//! Device identities, owner filters and task ids.
//!
//! An ambient-IoT device id has two parts: a header naming the id type and
//! the owning operator or enterprise, and a 96-bit device part unique
//! within that owner's scope. The canonical text form is
//! `<type>-<owner>-<part>` with the owner as three uppercase hex digits
//! and the part as twenty-four, e.g. `2-ABC-00112233445566778899AABB`.
//!
//! On the wire an id packs into [`DeviceId::WIRE_LEN`] (14) bytes: the id
//! type nibble and the 12-bit owner code share the first two bytes, the
//! device part fills the remaining twelve. The id type nibble is never
//! zero, so an all-zero buffer is not a valid wire id.
//!
//! Ids travel in cleartext; anyone on the radio path can read them. Hiding
//! them would need a temporary-id scheme the current design does not have.

use core::fmt;
use core::str::FromStr;

/// Largest owner code representable in the 12-bit field.
pub const OWNER_CODE_MAX: u16 = 0xFFF;

/// Longest supported mask prefix, the full 96-bit device part.
pub const PREFIX_BITS_MAX: u8 = 96;

/// Namespace an id was assigned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum IdType {
    /// Assigned by the network operator.
    NetworkAssigned,
    /// Assigned by a third-party enterprise from its own owner-code block.
    ThirdPartyEnterprise,
}

impl IdType {
    /// Numeric code used in both the text and wire forms.
    pub fn code(self) -> u8 {
        match self {
            IdType::NetworkAssigned => 1,
            IdType::ThirdPartyEnterprise => 2,
        }
    }

    /// Inverse of [`IdType::code`].
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(IdType::NetworkAssigned),
            2 => Some(IdType::ThirdPartyEnterprise),
            _ => None,
        }
    }
}

impl fmt::Display for IdType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdType::NetworkAssigned => f.write_str("network-assigned"),
            IdType::ThirdPartyEnterprise => f.write_str("third-party-enterprise"),
        }
    }
}

/// Two-part ambient-IoT device identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId {
    id_type: IdType,
    owner_code: u16,
    device_part: [u8; 12],
}

/// Error from [`DeviceId::new`]: owner code does not fit in 12 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("owner code {0:#x} exceeds {max:#x}", max = OWNER_CODE_MAX)]
pub struct OwnerCodeRange(pub u16);

/// Error from [`DeviceId::from_wire`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    /// Buffer was not exactly [`DeviceId::WIRE_LEN`] bytes.
    #[error("wire id must be {expected} bytes, got {0}", expected = DeviceId::WIRE_LEN)]
    Length(usize),
    /// Leading nibble is not a known id type code.
    #[error("unknown id type nibble {0:#x}")]
    IdType(u8),
}

impl DeviceId {
    /// Packed wire size in bytes.
    pub const WIRE_LEN: usize = 14;

    /// Builds an id, rejecting owner codes that do not fit in 12 bits.
    pub fn new(id_type: IdType, owner_code: u16, device_part: [u8; 12]) -> Result<Self, OwnerCodeRange> {
        if owner_code > OWNER_CODE_MAX {
            return Err(OwnerCodeRange(owner_code));
        }
        Ok(DeviceId { id_type, owner_code, device_part })
    }

    pub fn id_type(&self) -> IdType {
        self.id_type
    }

    pub fn owner_code(&self) -> u16 {
        self.owner_code
    }

    pub fn device_part(&self) -> &[u8; 12] {
        &self.device_part
    }

    /// Packs the id into its 14-byte wire form.
    pub fn to_wire(&self) -> [u8; Self::WIRE_LEN] {
        let mut w = [0u8; Self::WIRE_LEN];
        w[0] = (self.id_type.code() << 4) | (self.owner_code >> 8) as u8;
        w[1] = (self.owner_code & 0xFF) as u8;
        w[2..].copy_from_slice(&self.device_part);
        w
    }

    /// Unpacks a 14-byte wire id.
    pub fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != Self::WIRE_LEN {
            return Err(WireError::Length(bytes.len()));
        }
        let id_type = IdType::from_code(bytes[0] >> 4).ok_or(WireError::IdType(bytes[0] >> 4))?;
        let owner_code = u16::from(bytes[0] & 0x0F) << 8 | u16::from(bytes[1]);
        let mut device_part = [0u8; 12];
        device_part.copy_from_slice(&bytes[2..]);
        Ok(DeviceId { id_type, owner_code, device_part })
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:03X}-", self.id_type.code(), self.owner_code)?;
        for b in &self.device_part {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

/// Where and why parsing a device id failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// First character must be an id type digit, `1` or `2`.
    IdTypeDigit,
    /// Expected a `-` separator.
    Separator,
    /// Expected a hex digit.
    HexDigit,
    /// Input ended before the id was complete.
    UnexpectedEnd,
    /// Input continues past a complete id.
    TrailingInput,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::IdTypeDigit => "expected id type digit 1 or 2",
            ParseErrorKind::Separator => "expected '-'",
            ParseErrorKind::HexDigit => "expected hex digit",
            ParseErrorKind::UnexpectedEnd => "input ended early",
            ParseErrorKind::TrailingInput => "trailing input after id",
        })
    }
}

/// Error from parsing the canonical text form, with the byte offset at
/// which parsing stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid device id at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

impl FromStr for DeviceId {
    type Err = ParseError;

    /// Parses `<type>-<owner>-<part>`. Hex digits are accepted in either
    /// case; [`fmt::Display`] always renders the canonical uppercase form.
    fn from_str(s: &str) -> Result<Self, ParseError> {
        let b = s.as_bytes();
        let at = |i: usize| -> Result<u8, ParseError> {
            b.get(i).copied().ok_or(ParseError { offset: b.len(), kind: ParseErrorKind::UnexpectedEnd })
        };
        let hex_at = |i: usize| -> Result<u8, ParseError> {
            hex_val(at(i)?).ok_or(ParseError { offset: i, kind: ParseErrorKind::HexDigit })
        };

        let id_type = match at(0)? {
            b'1' => IdType::NetworkAssigned,
            b'2' => IdType::ThirdPartyEnterprise,
            _ => return Err(ParseError { offset: 0, kind: ParseErrorKind::IdTypeDigit }),
        };
        if at(1)? != b'-' {
            return Err(ParseError { offset: 1, kind: ParseErrorKind::Separator });
        }
        let mut owner_code = 0u16;
        for i in 2..5 {
            owner_code = owner_code << 4 | u16::from(hex_at(i)?);
        }
        if at(5)? != b'-' {
            return Err(ParseError { offset: 5, kind: ParseErrorKind::Separator });
        }
        let mut device_part = [0u8; 12];
        for (n, byte) in device_part.iter_mut().enumerate() {
            let i = 6 + 2 * n;
            *byte = hex_at(i)? << 4 | hex_at(i + 1)?;
        }
        if b.len() > 30 {
            return Err(ParseError { offset: 30, kind: ParseErrorKind::TrailingInput });
        }
        Ok(DeviceId { id_type, owner_code, device_part })
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for DeviceId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for DeviceId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = DeviceId;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a device id like 1-00A-000102030405060708090A0B")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<DeviceId, E> {
                v.parse().map_err(E::custom)
            }
        }
        deserializer.deserialize_str(V)
    }
}

/// Filter on the owner header of an id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OwnerFilter {
    pub id_type: IdType,
    pub owner_code: u16,
}

impl OwnerFilter {
    pub fn new(id_type: IdType, owner_code: u16) -> Result<Self, OwnerCodeRange> {
        if owner_code > OWNER_CODE_MAX {
            return Err(OwnerCodeRange(owner_code));
        }
        Ok(OwnerFilter { id_type, owner_code })
    }
}

/// Error from [`IdMask::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    /// Prefix length exceeds the 96-bit device part.
    #[error("prefix of {0} bits exceeds the {max}-bit device part", max = PREFIX_BITS_MAX)]
    PrefixBits(u8),
    /// Prefix value has bits set beyond the prefix length.
    #[error("prefix value has bits set past the {0}-bit prefix")]
    TrailingBits(u8),
}

/// Population filter for inventory: a device-part bit prefix plus an
/// optional owner filter. The empty mask matches every id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdMask {
    prefix_bits: u8,
    prefix_value: [u8; 12],
    owner_filter: Option<OwnerFilter>,
}

impl IdMask {
    /// The match-everything mask.
    pub const fn empty() -> Self {
        IdMask { prefix_bits: 0, prefix_value: [0; 12], owner_filter: None }
    }

    /// Builds a mask, rejecting out-of-range prefix lengths and prefix
    /// values with bits set past the prefix.
    pub fn new(
        prefix_bits: u8,
        prefix_value: [u8; 12],
        owner_filter: Option<OwnerFilter>,
    ) -> Result<Self, MaskError> {
        if prefix_bits > PREFIX_BITS_MAX {
            return Err(MaskError::PrefixBits(prefix_bits));
        }
        let full = usize::from(prefix_bits / 8);
        let rem = prefix_bits % 8;
        let mut i = full;
        if rem != 0 {
            if prefix_value[full] & (0xFF >> rem) != 0 {
                return Err(MaskError::TrailingBits(prefix_bits));
            }
            i += 1;
        }
        if prefix_value[i..].iter().any(|&b| b != 0) {
            return Err(MaskError::TrailingBits(prefix_bits));
        }
        Ok(IdMask { prefix_bits, prefix_value, owner_filter })
    }

    pub fn prefix_bits(&self) -> u8 {
        self.prefix_bits
    }

    pub fn prefix_value(&self) -> &[u8; 12] {
        &self.prefix_value
    }

    pub fn owner_filter(&self) -> Option<OwnerFilter> {
        self.owner_filter
    }

    /// True when the mask constrains nothing.
    pub fn is_empty(&self) -> bool {
        self.prefix_bits == 0 && self.owner_filter.is_none()
    }

    /// Whether `id` falls inside the mask's population.
    pub fn matches(&self, id: &DeviceId) -> bool {
        if let Some(owner) = self.owner_filter {
            if id.id_type != owner.id_type || id.owner_code != owner.owner_code {
                return false;
            }
        }
        let part = &id.device_part;
        let full = usize::from(self.prefix_bits / 8);
        let rem = self.prefix_bits % 8;
        if part[..full] != self.prefix_value[..full] {
            return false;
        }
        if rem != 0 {
            let keep = 0xFFu8 << (8 - rem);
            if (part[full] ^ self.prefix_value[full]) & keep != 0 {
                return false;
            }
        }
        true
    }
}

impl Default for IdMask {
    fn default() -> Self {
        IdMask::empty()
    }
}

/// Opaque task identifier, unique and monotone within a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
