//! NAS-layer security: challenge-response device authentication, payload
//! ciphering and replay windows over pre-shared 128-bit keys.
//!
//! The network proves nothing to the device; the device proves key
//! possession to the network. A task-scoped 8-byte challenge rides on the
//! request, and each device-to-reader message carries a 4-byte tag:
//!
//! ```text
//! tag = CMAC-AES128(key, challenge || deviceId wire form || counter BE)[..4]
//! ```
//!
//! The counter is the device's NAS counter, strictly increasing with
//! every message the device emits, which gives replay protection: the
//! network remembers the last accepted counter per device and rejects
//! anything at or below it while the task profile enables `antiReplay`.
//!
//! Confidentiality ciphers payload bytes by XOR with an AES-128 keystream
//! whose blocks are fully determined by public message fields:
//!
//! ```text
//! block[i] = AES128(key, challenge || counter BE || direction || 0x00 || i as u16 BE)
//! ```
//!
//! Reader-to-device messages use counter 0 (the challenge is fresh per
//! task, so the keystream is too); device-to-reader messages use the
//! counter carried in the response. Requests carry no tag: a rogue
//! reader can trigger devices, a known gap of the mode modelled here.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use cmac::{Cmac, Mac};
use core::fmt;
use rand::RngCore;

use crate::identity::DeviceId;

/// Pre-shared AES-128 key.
pub type Key128 = [u8; 16];

/// Challenge nonce size in bytes.
pub const CHALLENGE_LEN: usize = 8;

/// Truncated tag size in bytes.
pub const TAG_LEN: usize = 4;

/// Which security means a task enables. Stronger means imply `auth`:
/// ciphering and replay windows are meaningless without knowing who is
/// talking, so [`SecurityProfile::validate`] rejects profiles that
/// enable them alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", default))]
pub struct SecurityProfile {
    pub auth: bool,
    pub confidentiality: bool,
    pub anti_replay: bool,
}

/// Error from [`SecurityProfile::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("confidentiality requires auth")]
    ConfidentialityWithoutAuth,
    #[error("antiReplay requires auth")]
    AntiReplayWithoutAuth,
}

impl SecurityProfile {
    /// Everything off, the Release-19-style baseline.
    pub const OFF: Self = SecurityProfile { auth: false, confidentiality: false, anti_replay: false };

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.confidentiality && !self.auth {
            return Err(ProfileError::ConfidentialityWithoutAuth);
        }
        if self.anti_replay && !self.auth {
            return Err(ProfileError::AntiReplayWithoutAuth);
        }
        Ok(())
    }

    /// Header bits shared by every message of the task. `CONF` is not
    /// included: it is set per message, only when a ciphered payload is
    /// actually present.
    pub fn base_flags(&self) -> crate::nas::SecurityFlags {
        use crate::nas::SecurityFlags;
        let mut flags = SecurityFlags::NONE;
        if self.auth {
            flags = flags | SecurityFlags::AUTH;
        }
        if self.anti_replay {
            flags = flags | SecurityFlags::REPLAY;
        }
        flags
    }
}

/// Who holds the authentication root for a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum Ownership {
    /// Keys live in the operator's own subscription database.
    #[default]
    Operator,
    /// Keys live with a third party behind an AAA interface.
    ExternalAaa,
}

/// Network-side view of one device's credentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredCredential {
    pub key: Key128,
    pub ownership: Ownership,
    /// Highest counter accepted so far; 0 until the first accept.
    pub last_counter: u32,
}

/// Error from provisioning the same device twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("device {0} already provisioned")]
pub struct DuplicateDevice(pub DeviceId);

/// Network-side credential and replay-window store. Only the
/// core-network aggregation path mutates it.
#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    entries: BTreeMap<DeviceId, StoredCredential>,
}

impl CredentialStore {
    pub fn new() -> Self {
        CredentialStore::default()
    }

    pub fn insert(&mut self, device: DeviceId, key: Key128, ownership: Ownership) -> Result<(), DuplicateDevice> {
        if self.entries.contains_key(&device) {
            return Err(DuplicateDevice(device));
        }
        self.entries.insert(device, StoredCredential { key, ownership, last_counter: 0 });
        Ok(())
    }

    pub fn get(&self, device: &DeviceId) -> Option<&StoredCredential> {
        self.entries.get(device)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_by_ownership(&self, ownership: Ownership) -> usize {
        self.entries.values().filter(|e| e.ownership == ownership).count()
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceId> {
        self.entries.keys()
    }
}

/// Draws a fresh 8-byte challenge from the task-scoped stream.
pub fn make_challenge(rng: &mut impl RngCore) -> [u8; CHALLENGE_LEN] {
    let mut nonce = [0u8; CHALLENGE_LEN];
    rng.fill_bytes(&mut nonce);
    nonce
}

/// Computes the 4-byte device authentication tag.
pub fn device_auth_tag(
    key: &Key128,
    challenge: &[u8; CHALLENGE_LEN],
    device: &DeviceId,
    counter: u32,
) -> [u8; TAG_LEN] {
    let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(key).expect("AES-128 key length");
    mac.update(challenge);
    mac.update(&device.to_wire());
    mac.update(&counter.to_be_bytes());
    let full = mac.finalize().into_bytes();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&full[..TAG_LEN]);
    tag
}

/// Keystream direction domain separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ReaderToDevice,
    DeviceToReader,
}

impl Direction {
    fn byte(self) -> u8 {
        match self {
            Direction::ReaderToDevice => 0,
            Direction::DeviceToReader => 1,
        }
    }
}

/// XORs the confidentiality keystream over `data` in place. Its own
/// inverse: protecting and unprotecting are the same operation.
fn apply_keystream(
    key: &Key128,
    challenge: &[u8; CHALLENGE_LEN],
    counter: u32,
    direction: Direction,
    data: &mut [u8],
) {
    if data.is_empty() {
        return;
    }
    let cipher = Aes128::new_from_slice(key).expect("AES-128 key length");
    for (i, chunk) in data.chunks_mut(16).enumerate() {
        let mut block = [0u8; 16];
        block[..8].copy_from_slice(challenge);
        block[8..12].copy_from_slice(&counter.to_be_bytes());
        block[12] = direction.byte();
        // block[13] stays 0: reserved.
        block[14..16].copy_from_slice(&(i as u16).to_be_bytes());
        let mut block = aes::Block::from(block);
        cipher.encrypt_block(&mut block);
        for (b, k) in chunk.iter_mut().zip(block.iter()) {
            *b ^= k;
        }
    }
}

/// Ciphers a payload for transmission. Empty in, empty out.
pub fn protect_payload(
    key: &Key128,
    challenge: &[u8; CHALLENGE_LEN],
    counter: u32,
    direction: Direction,
    body: &[u8],
) -> Vec<u8> {
    let mut out = body.to_vec();
    apply_keystream(key, challenge, counter, direction, &mut out);
    out
}

/// Deciphers a received payload. Identical to [`protect_payload`]; the
/// two names keep call sites honest about direction of travel.
pub fn unprotect_payload(
    key: &Key128,
    challenge: &[u8; CHALLENGE_LEN],
    counter: u32,
    direction: Direction,
    body: &[u8],
) -> Vec<u8> {
    protect_payload(key, challenge, counter, direction, body)
}

/// Why a response failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// No credential provisioned for the claimed id.
    UnknownDevice,
    /// Tag does not match the pre-shared key.
    BadTag,
    /// Counter at or below the last accepted one.
    Replay,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::UnknownDevice => "unknown device",
            RejectReason::BadTag => "bad tag",
            RejectReason::Replay => "replay",
        })
    }
}

/// Outcome of verifying one device-to-reader message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accept,
    Reject(RejectReason),
}

/// Verifies a response tag and, on accept, advances the device's replay
/// window to the accepted counter.
///
/// Checks run authentication first, freshness second: an attacker
/// replaying an old message with a valid tag is reported as [`Replay`],
/// anything with a bad tag as [`BadTag`] regardless of its counter.
/// The replay check only applies when `anti_replay` is on; the store is
/// still updated on accept so that turning the window on later has
/// history to work with.
///
/// [`Replay`]: RejectReason::Replay
/// [`BadTag`]: RejectReason::BadTag
pub fn verify_and_update(
    store: &mut CredentialStore,
    device: &DeviceId,
    challenge: &[u8; CHALLENGE_LEN],
    counter: u32,
    tag: &[u8; TAG_LEN],
    anti_replay: bool,
) -> VerifyOutcome {
    let Some(entry) = store.entries.get_mut(device) else {
        return VerifyOutcome::Reject(RejectReason::UnknownDevice);
    };
    let expected = device_auth_tag(&entry.key, challenge, device, counter);
    if expected != *tag {
        return VerifyOutcome::Reject(RejectReason::BadTag);
    }
    if anti_replay && counter <= entry.last_counter {
        return VerifyOutcome::Reject(RejectReason::Replay);
    }
    entry.last_counter = counter;
    VerifyOutcome::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::TaskId;
    use crate::rng::StreamForker;
    use alloc::string::String;
    use alloc::vec;

    fn vector_lines(kind: &str) -> Vec<Vec<String>> {
        include_str!("../vectors/security_golden.txt")
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| l.split('|').map(|f| String::from(f.trim())).collect::<Vec<_>>())
            .filter(|fields| fields[0] == kind)
            .collect()
    }

    fn unhex<const N: usize>(s: &str) -> [u8; N] {
        let v = hex::decode(s).unwrap();
        v.try_into().unwrap()
    }

    #[test]
    fn tag_vectors_match_independent_implementation() {
        let lines = vector_lines("tag");
        assert_eq!(lines.len(), 3);
        for fields in lines {
            let key: Key128 = unhex(&fields[1]);
            let challenge: [u8; 8] = unhex(&fields[2]);
            let device = DeviceId::from_wire(&hex::decode(&fields[3]).unwrap()).unwrap();
            let counter = u32::from_be_bytes(unhex(&fields[4]));
            let expected: [u8; 4] = unhex(&fields[5]);
            assert_eq!(device_auth_tag(&key, &challenge, &device, counter), expected);
        }
    }

    #[test]
    fn keystream_vectors_match_independent_implementation() {
        let lines = vector_lines("keystream");
        assert_eq!(lines.len(), 2);
        for fields in lines {
            let key: Key128 = unhex(&fields[1]);
            let challenge: [u8; 8] = unhex(&fields[2]);
            let counter = u32::from_be_bytes(unhex(&fields[3]));
            let direction = match fields[4].as_str() {
                "00" => Direction::ReaderToDevice,
                "01" => Direction::DeviceToReader,
                other => panic!("direction {other}"),
            };
            let expected = hex::decode(&fields[5]).unwrap();
            // Keystream = ciphertext of zeros.
            let got = protect_payload(&key, &challenge, counter, direction, &vec![0u8; expected.len()]);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn challenge_comes_from_the_task_stream() {
        let lines = vector_lines("challenge");
        assert_eq!(lines.len(), 2);
        for fields in lines {
            let seed: u64 = fields[1].parse().unwrap();
            let task: u32 = fields[2].parse().unwrap();
            let expected: [u8; 8] = unhex(&fields[3]);
            let mut rng = StreamForker::new(seed).task_stream(TaskId(task));
            assert_eq!(make_challenge(&mut rng), expected);
        }
    }

    fn test_device() -> DeviceId {
        "2-ABC-00112233445566778899AABB".parse().unwrap()
    }

    #[test]
    fn protect_unprotect_is_identity() {
        let key = [7u8; 16];
        let challenge = [1, 2, 3, 4, 5, 6, 7, 8];
        for len in [0usize, 1, 15, 16, 17, 32] {
            let body: Vec<u8> = (0..len as u8).collect();
            let ct = protect_payload(&key, &challenge, 5, Direction::DeviceToReader, &body);
            assert_eq!(ct.len(), body.len());
            if !body.is_empty() {
                assert_ne!(ct, body, "len {len}: keystream must actually cipher");
            }
            let pt = unprotect_payload(&key, &challenge, 5, Direction::DeviceToReader, &ct);
            assert_eq!(pt, body, "len {len}");
        }
    }

    #[test]
    fn directions_and_counters_separate_keystreams() {
        let key = [7u8; 16];
        let challenge = [9u8; 8];
        let body = [0u8; 16];
        let r2d = protect_payload(&key, &challenge, 1, Direction::ReaderToDevice, &body);
        let d2r = protect_payload(&key, &challenge, 1, Direction::DeviceToReader, &body);
        let d2r2 = protect_payload(&key, &challenge, 2, Direction::DeviceToReader, &body);
        assert_ne!(r2d, d2r);
        assert_ne!(d2r, d2r2);
    }

    fn store_with(device: DeviceId, key: Key128) -> CredentialStore {
        let mut store = CredentialStore::new();
        store.insert(device, key, Ownership::Operator).unwrap();
        store
    }

    #[test]
    fn verify_accepts_fresh_then_rejects_replay() {
        let device = test_device();
        let key = [3u8; 16];
        let challenge = [0xAA; 8];
        let mut store = store_with(device, key);

        let tag = device_auth_tag(&key, &challenge, &device, 1);
        assert_eq!(verify_and_update(&mut store, &device, &challenge, 1, &tag, true), VerifyOutcome::Accept);
        assert_eq!(store.get(&device).unwrap().last_counter, 1);

        // Same counter again: replay.
        assert_eq!(
            verify_and_update(&mut store, &device, &challenge, 1, &tag, true),
            VerifyOutcome::Reject(RejectReason::Replay)
        );
        // Gaps are fine, the window is strictly-greater.
        let tag5 = device_auth_tag(&key, &challenge, &device, 5);
        assert_eq!(verify_and_update(&mut store, &device, &challenge, 5, &tag5, true), VerifyOutcome::Accept);
        let tag3 = device_auth_tag(&key, &challenge, &device, 3);
        assert_eq!(
            verify_and_update(&mut store, &device, &challenge, 3, &tag3, true),
            VerifyOutcome::Reject(RejectReason::Replay)
        );
        // Rejections leave the window untouched.
        assert_eq!(store.get(&device).unwrap().last_counter, 5);
    }

    #[test]
    fn verify_rejects_bad_tags_and_unknown_devices() {
        let device = test_device();
        let key = [3u8; 16];
        let challenge = [0xAA; 8];
        let mut store = store_with(device, key);

        let mut tag = device_auth_tag(&key, &challenge, &device, 1);
        tag[0] ^= 0x01;
        assert_eq!(
            verify_and_update(&mut store, &device, &challenge, 1, &tag, true),
            VerifyOutcome::Reject(RejectReason::BadTag)
        );
        assert_eq!(store.get(&device).unwrap().last_counter, 0);

        let stranger: DeviceId = "1-001-000000000000000000000099".parse().unwrap();
        assert_eq!(
            verify_and_update(&mut store, &stranger, &challenge, 1, &[0; 4], true),
            VerifyOutcome::Reject(RejectReason::UnknownDevice)
        );
    }

    #[test]
    fn bad_tag_wins_over_replay() {
        let device = test_device();
        let key = [3u8; 16];
        let challenge = [0xAA; 8];
        let mut store = store_with(device, key);
        let tag = device_auth_tag(&key, &challenge, &device, 4);
        assert_eq!(verify_and_update(&mut store, &device, &challenge, 4, &tag, true), VerifyOutcome::Accept);

        let mut stale_bad = device_auth_tag(&key, &challenge, &device, 2);
        stale_bad[3] ^= 0x80;
        assert_eq!(
            verify_and_update(&mut store, &device, &challenge, 2, &stale_bad, true),
            VerifyOutcome::Reject(RejectReason::BadTag)
        );
    }

    #[test]
    fn replay_window_off_still_requires_a_valid_tag() {
        let device = test_device();
        let key = [3u8; 16];
        let challenge = [0xAA; 8];
        let mut store = store_with(device, key);
        let tag = device_auth_tag(&key, &challenge, &device, 2);
        assert_eq!(verify_and_update(&mut store, &device, &challenge, 2, &tag, false), VerifyOutcome::Accept);
        // Replay accepted with the window off...
        assert_eq!(verify_and_update(&mut store, &device, &challenge, 2, &tag, false), VerifyOutcome::Accept);
        // ...but a wrong key still is not.
        let forged = device_auth_tag(&[4u8; 16], &challenge, &device, 3);
        assert_eq!(
            verify_and_update(&mut store, &device, &challenge, 3, &forged, false),
            VerifyOutcome::Reject(RejectReason::BadTag)
        );
    }

    #[test]
    fn store_rejects_double_provisioning_and_counts_partitions() {
        let mut store = CredentialStore::new();
        let a = test_device();
        let b: DeviceId = "1-001-000000000000000000000001".parse().unwrap();
        store.insert(a, [0; 16], Ownership::Operator).unwrap();
        store.insert(b, [1; 16], Ownership::ExternalAaa).unwrap();
        assert_eq!(store.insert(a, [2; 16], Ownership::Operator), Err(DuplicateDevice(a)));
        assert_eq!(store.len(), 2);
        assert_eq!(store.count_by_ownership(Ownership::Operator), 1);
        assert_eq!(store.count_by_ownership(Ownership::ExternalAaa), 1);
    }

    #[test]
    fn profile_invariants() {
        assert!(SecurityProfile::OFF.validate().is_ok());
        assert!(SecurityProfile { auth: true, confidentiality: true, anti_replay: true }.validate().is_ok());
        assert_eq!(
            SecurityProfile { auth: false, confidentiality: true, anti_replay: false }.validate(),
            Err(ProfileError::ConfidentialityWithoutAuth)
        );
        assert_eq!(
            SecurityProfile { auth: false, confidentiality: false, anti_replay: true }.validate(),
            Err(ProfileError::AntiReplayWithoutAuth)
        );
    }

    #[test]
    fn base_flags_reflect_profile() {
        use crate::nas::SecurityFlags;
        let p = SecurityProfile { auth: true, confidentiality: true, anti_replay: true };
        assert_eq!(p.base_flags(), SecurityFlags::AUTH | SecurityFlags::REPLAY);
        assert_eq!(SecurityProfile::OFF.base_flags(), SecurityFlags::NONE);
    }
}
