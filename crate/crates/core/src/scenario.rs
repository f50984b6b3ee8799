//! Declarative scenario input: the full description of one simulated
//! deployment, deserialized from JSON by the CLI and cross-validated
//! before anything runs.
//!
//! A scenario lists the physical world (devices, readers, base
//! stations), the core-network registries (AIOTFs, subscriptions,
//! credentials, application functions), global timing knobs, and an
//! ordered list of application requests. Validation checks referential
//! integrity and bounds so the simulation itself never has to guess
//! what a half-declared node means; anything that can legitimately
//! fail at runtime (an out-of-scope request, an unauthorized reader)
//! is deliberately left to the run and reported as a failed task, not
//! a config error.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::core_network::{ArchOption, ServiceType, SelectionMode, TargetSelector, TaskScope};
use crate::device::{DeviceType, EnergyModel};
use crate::hexstr::{self, HexError};
use crate::identity::{DeviceId, IdMask, IdType, OwnerFilter};
use crate::nas::{CommandOp, MAX_PAYLOAD_LEN};
use crate::radio::ContentionPlan;
use crate::reader::ReaderKind;
use crate::security::{Ownership, SecurityProfile};

/// Opaque bytes written as a hex string in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HexBytes(pub Vec<u8>);

/// A 16-byte key written as 32 hex digits in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HexKey(pub [u8; 16]);

#[cfg(feature = "serde")]
impl serde::Serialize for HexBytes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hexstr::encode(&self.0))
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for HexBytes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        hexstr::decode(&text).map(HexBytes).map_err(serde::de::Error::custom)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for HexKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hexstr::encode(&self.0))
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for HexKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        hexstr::decode_array(&text).map(HexKey).map_err(serde::de::Error::custom)
    }
}

/// Adaptive-contention bounds shared by every task in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", default, deny_unknown_fields))]
pub struct ContentionConfig {
    pub min_frame: u32,
    pub max_frame: u32,
    pub termination_empty_frames: u32,
    pub max_frames: u32,
    /// Single-slot attempts per command target before giving up.
    pub command_retry_budget: u32,
}

impl Default for ContentionConfig {
    fn default() -> Self {
        ContentionConfig {
            min_frame: 4,
            max_frame: 1024,
            termination_empty_frames: 3,
            max_frames: 1000,
            command_retry_budget: 8,
        }
    }
}

impl ContentionConfig {
    /// The plan template tasks start from; inventory overrides the
    /// initial frame from assistance info.
    pub fn base_plan(&self) -> ContentionPlan {
        ContentionPlan {
            initial_frame_size: self.min_frame,
            min_frame: self.min_frame,
            max_frame: self.max_frame,
            termination_empty_frames: self.termination_empty_frames,
            max_frames: self.max_frames,
        }
    }
}

/// One device on the ground.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct DeviceDecl {
    pub id: DeviceId,
    #[cfg_attr(feature = "serde", serde(default))]
    pub device_type: DeviceType,
    #[cfg_attr(feature = "serde", serde(default))]
    pub energy: EnergyModel,
    #[cfg_attr(feature = "serde", serde(default))]
    pub position: Option<(f64, f64)>,
    /// Starts deactivated when false (reachable only by Activate).
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub active: bool,
    /// Read-only sensor values by address.
    #[cfg_attr(feature = "serde", serde(default))]
    pub sensors: BTreeMap<u8, HexBytes>,
    /// Pre-loaded writable memory by address.
    #[cfg_attr(feature = "serde", serde(default))]
    pub memory: BTreeMap<u8, HexBytes>,
    /// Key burned into the device. Defaults to the provisioned
    /// credential for this id; declare explicitly to model a device
    /// whose key disagrees with the network's records.
    #[cfg_attr(feature = "serde", serde(default))]
    pub device_key: Option<HexKey>,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

/// Coverage as declared in config.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(rename_all = "camelCase", rename_all_fields = "camelCase", deny_unknown_fields)
)]
pub enum CoverageDecl {
    /// Fixed device list.
    DeviceIds(Vec<DeviceId>),
    /// Disc around a point; device type scales the effective radius.
    Radius { radius_meters: f64, position: (f64, f64) },
}

impl CoverageDecl {
    pub fn to_spec(&self) -> crate::radio::CoverageSpec {
        match self {
            CoverageDecl::DeviceIds(ids) => {
                crate::radio::CoverageSpec::Explicit(ids.iter().copied().collect())
            }
            CoverageDecl::Radius { radius_meters, position } => {
                crate::radio::CoverageSpec::Radius { center: *position, radius_meters: *radius_meters }
            }
        }
    }
}

/// One reader deployment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct ReaderDecl {
    pub reader_id: u32,
    pub kind: ReaderKind,
    pub area_id: u32,
    pub coverage: CoverageDecl,
    /// Hosting UE; required for UE readers.
    #[cfg_attr(feature = "serde", serde(default))]
    pub ue_id: Option<u64>,
    /// Serving base station; required for UE readers, optional for RAN
    /// readers (a RAN reader may be hosted by a gNB).
    #[cfg_attr(feature = "serde", serde(default))]
    pub serving_gnb: Option<u32>,
}

/// A base station (control-plane anchor for UE readers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct GnbDecl {
    pub gnb_id: u32,
}

/// An AIOTF instance and its registered service areas.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct AiotfDecl {
    pub aiotf_id: u32,
    pub service_areas: Vec<u32>,
}

/// Per-UE subscription record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct SubscriptionDecl {
    pub ue_id: u64,
    /// Whether this UE may act as an intermediate reader.
    #[cfg_attr(feature = "serde", serde(default))]
    pub aiot_reader: bool,
}

/// A pre-shared device credential held by the network.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct CredentialDecl {
    pub device: DeviceId,
    pub key: HexKey,
    #[cfg_attr(feature = "serde", serde(default))]
    pub ownership: Ownership,
}

/// An application function's authorization scope.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct AfDecl {
    pub af_id: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub allowed_areas: Vec<u32>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub allowed_services: Vec<ServiceType>,
}

/// An owner filter inside a mask declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct OwnerDecl {
    pub id_type: IdType,
    pub owner_code: u16,
}

/// Mask declaration: a prefix as hex (up to 24 digits, zero-padded on
/// the right) plus the number of significant bits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", default, deny_unknown_fields))]
pub struct MaskDecl {
    pub prefix_bits: u8,
    pub prefix_hex: String,
    pub owner: Option<OwnerDecl>,
}

/// Error building an [`IdMask`] from a declaration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaskBuildError {
    #[error("prefixHex: {0}")]
    Hex(#[from] HexError),
    #[error("prefixHex longer than 12 bytes ({0})")]
    TooLong(usize),
    #[error("{0}")]
    Mask(#[from] crate::identity::MaskError),
    #[error("{0}")]
    Owner(#[from] crate::identity::OwnerCodeRange),
}

impl MaskDecl {
    pub fn to_mask(&self) -> Result<IdMask, MaskBuildError> {
        let bytes = hexstr::decode(&self.prefix_hex)?;
        if bytes.len() > 12 {
            return Err(MaskBuildError::TooLong(bytes.len()));
        }
        let mut prefix = [0u8; 12];
        prefix[..bytes.len()].copy_from_slice(&bytes);
        let owner = match self.owner {
            Some(decl) => Some(OwnerFilter::new(decl.id_type, decl.owner_code)?),
            None => None,
        };
        Ok(IdMask::new(self.prefix_bits, prefix, owner)?)
    }
}

/// Target declaration on a task.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub enum TargetsDecl {
    Mask(MaskDecl),
    DeviceIds(Vec<DeviceId>),
}

impl TargetsDecl {
    pub fn to_selector(&self) -> Result<TargetSelector, MaskBuildError> {
        match self {
            TargetsDecl::Mask(decl) => Ok(TargetSelector::Mask(decl.to_mask()?)),
            TargetsDecl::DeviceIds(ids) => Ok(TargetSelector::Devices(ids.clone())),
        }
    }
}

/// The command body of a command task.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct CommandDecl {
    pub op: CommandOp,
    #[cfg_attr(feature = "serde", serde(default))]
    pub address: u8,
    #[cfg_attr(feature = "serde", serde(default))]
    pub payload: HexBytes,
}

/// One application request in the scenario's ordered task list.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct TaskDecl {
    pub af: u32,
    pub service: ServiceType,
    pub targets: TargetsDecl,
    /// Exactly one of `area` / `ueReaders` must be given.
    #[cfg_attr(feature = "serde", serde(default))]
    pub area: Option<u32>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub ue_readers: Option<Vec<u32>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub security: SecurityProfile,
    #[cfg_attr(feature = "serde", serde(default))]
    pub reader_selection: SelectionMode,
    #[cfg_attr(feature = "serde", serde(default))]
    pub estimated_device_count: Option<u32>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub command: Option<CommandDecl>,
}

impl TaskDecl {
    /// The resolved scope, if the declaration is well-formed.
    pub fn scope(&self) -> Option<TaskScope> {
        match (self.area, &self.ue_readers) {
            (Some(area), None) => Some(TaskScope::Area(area)),
            (None, Some(ids)) => Some(TaskScope::UeReaders(ids.clone())),
            _ => None,
        }
    }
}

/// The complete simulation input.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", deny_unknown_fields))]
pub struct ScenarioConfig {
    /// Root of all randomness; rerunning with the same seed reproduces
    /// every byte of output.
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub arch_option: ArchOption,
    /// Contention slot duration.
    #[cfg_attr(feature = "serde", serde(default = "default_slot_micros"))]
    pub slot_micros: u64,
    /// Spacing between consecutive control-plane steps of a task.
    #[cfg_attr(feature = "serde", serde(default = "default_control_step_micros"))]
    pub control_step_micros: u64,
    /// Latency of any hop not listed in `hop_micros`.
    #[cfg_attr(feature = "serde", serde(default = "default_hop_micros"))]
    pub default_hop_micros: u64,
    /// Per-hop latency overrides, keyed by encapsulation label.
    #[cfg_attr(feature = "serde", serde(default))]
    pub hop_micros: BTreeMap<String, u64>,
    /// Probability that a collision slot still yields one response.
    #[cfg_attr(feature = "serde", serde(default))]
    pub capture_probability: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub contention: ContentionConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub devices: Vec<DeviceDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub readers: Vec<ReaderDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub gnbs: Vec<GnbDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub aiotfs: Vec<AiotfDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub subscriptions: Vec<SubscriptionDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub credentials: Vec<CredentialDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub afs: Vec<AfDecl>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub tasks: Vec<TaskDecl>,
}

fn default_slot_micros() -> u64 {
    1_000
}

fn default_control_step_micros() -> u64 {
    10
}

fn default_hop_micros() -> u64 {
    50
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            arch_option: ArchOption::default(),
            slot_micros: default_slot_micros(),
            control_step_micros: default_control_step_micros(),
            default_hop_micros: default_hop_micros(),
            hop_micros: BTreeMap::new(),
            capture_probability: 0.0,
            contention: ContentionConfig::default(),
            devices: Vec::new(),
            readers: Vec::new(),
            gnbs: Vec::new(),
            aiotfs: Vec::new(),
            subscriptions: Vec::new(),
            credentials: Vec::new(),
            afs: Vec::new(),
            tasks: Vec::new(),
        }
    }
}

/// What a scenario got wrong, with enough context to fix it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("duplicate {kind} id {id}")]
    Duplicate { kind: &'static str, id: String },
    #[error("{context} references unknown {kind} {id}")]
    UnknownReference { context: String, kind: &'static str, id: String },
    #[error("reader {0}: ue readers need both ueId and servingGnb")]
    UeReaderIncomplete(u32),
    #[error("reader {0}: ran readers must not declare a ueId")]
    RanReaderWithUe(u32),
    #[error("task {0}: exactly one of area or ueReaders must be given")]
    TaskScopeShape(usize),
    #[error("task {0}: ueReaders must not be empty")]
    EmptyUeReaderList(usize),
    #[error("task {0}: ue-reader scopes and dynamic selection need a ue-reader option")]
    NeedsUeOption(usize),
    #[error("task {index}: scoped reader {reader} is not a ue reader")]
    ScopedReaderKind { index: usize, reader: u32 },
    #[error("task {0}: command tasks need a command body")]
    CommandMissing(usize),
    #[error("task {0}: inventory tasks must not carry a command body")]
    CommandOnInventory(usize),
    #[error("task {0}: command payload exceeds {MAX_PAYLOAD_LEN} bytes")]
    CommandPayloadTooLong(usize),
    #[error("task {0}: explicit target list must not be empty")]
    EmptyTargetList(usize),
    #[error("task {index}: command target {device} has no credential but the profile demands confidentiality")]
    CommandTargetUnkeyed { index: usize, device: String },
    #[error("task {index}: invalid security profile: {source}")]
    Profile { index: usize, source: crate::security::ProfileError },
    #[error("task {index}: invalid target mask: {reason}")]
    Mask { index: usize, reason: String },
    #[error("device {device}: {field} value at address {address} exceeds {MAX_PAYLOAD_LEN} bytes")]
    SlotTooLong { device: String, field: &'static str, address: u8 },
    #[error("device {device}: energy field {field} must be finite and non-negative")]
    Energy { device: String, field: &'static str },
    #[error("{0}")]
    Timing(&'static str),
    #[error("contention: {0}")]
    Contention(&'static str),
    #[error("hopMicros key {0} is not a known hop label")]
    UnknownHopLabel(String),
}

impl ScenarioConfig {
    /// Checks bounds and referential integrity. A passing scenario can
    /// always be built into a runnable simulation; whether its tasks
    /// succeed is the run's business.
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.validate_timing()?;
        self.validate_contention()?;
        let device_ids = self.validate_devices()?;
        let gnb_ids = unique(self.gnbs.iter().map(|g| g.gnb_id), "gnb")?;
        let reader_index = self.validate_readers(&device_ids, &gnb_ids)?;
        unique(self.aiotfs.iter().map(|a| a.aiotf_id), "aiotf")?;
        unique(self.subscriptions.iter().map(|s| s.ue_id), "subscription ue")?;
        let credential_ids = self.validate_credentials(&device_ids)?;
        let af_ids = unique(self.afs.iter().map(|a| a.af_id), "af")?;
        self.validate_tasks(&device_ids, &reader_index, &af_ids, &credential_ids)?;
        Ok(())
    }

    fn validate_timing(&self) -> Result<(), ValidationError> {
        if self.slot_micros == 0 {
            return Err(ValidationError::Timing("slotMicros must be at least 1"));
        }
        if self.control_step_micros == 0 {
            return Err(ValidationError::Timing("controlStepMicros must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.capture_probability) {
            return Err(ValidationError::Timing("captureProbability must lie in [0, 1]"));
        }
        let known: BTreeSet<&'static str> = [
            ArchOption::Top1Direct,
            ArchOption::Top1Indirect,
            ArchOption::Top2ControlPlane,
            ArchOption::Top2UserPlane,
        ]
        .iter()
        .flat_map(|o| o.hops().iter().map(|h| h.label))
        .collect();
        for key in self.hop_micros.keys() {
            if !known.contains(key.as_str()) {
                return Err(ValidationError::UnknownHopLabel(key.clone()));
            }
        }
        Ok(())
    }

    fn validate_contention(&self) -> Result<(), ValidationError> {
        let c = &self.contention;
        if c.min_frame == 0 {
            return Err(ValidationError::Contention("minFrame must be at least 1"));
        }
        if c.max_frame < c.min_frame {
            return Err(ValidationError::Contention("maxFrame must be at least minFrame"));
        }
        if c.termination_empty_frames == 0 {
            return Err(ValidationError::Contention("terminationEmptyFrames must be at least 1"));
        }
        if c.max_frames == 0 {
            return Err(ValidationError::Contention("maxFrames must be at least 1"));
        }
        if c.command_retry_budget == 0 {
            return Err(ValidationError::Contention("commandRetryBudget must be at least 1"));
        }
        Ok(())
    }

    fn validate_devices(&self) -> Result<BTreeSet<DeviceId>, ValidationError> {
        let ids = unique(self.devices.iter().map(|d| d.id), "device")?;
        for decl in &self.devices {
            let e = &decl.energy;
            for (value, field) in [
                (e.capacity_nano, "capacityNano"),
                (e.threshold_nano, "thresholdNano"),
                (e.charge_rate_nano_per_micro, "chargeRateNanoPerMicro"),
                (e.response_cost_nano, "responseCostNano"),
                (e.initial_nano, "initialNano"),
            ] {
                if !value.is_finite() || value < 0.0 {
                    return Err(ValidationError::Energy {
                        device: decl.id.to_string(),
                        field,
                    });
                }
            }
            for (field, map) in [("sensors", &decl.sensors), ("memory", &decl.memory)] {
                for (address, bytes) in map {
                    if bytes.0.len() > MAX_PAYLOAD_LEN {
                        return Err(ValidationError::SlotTooLong {
                            device: decl.id.to_string(),
                            field,
                            address: *address,
                        });
                    }
                }
            }
        }
        Ok(ids)
    }

    fn validate_readers(
        &self,
        device_ids: &BTreeSet<DeviceId>,
        gnb_ids: &BTreeSet<u32>,
    ) -> Result<BTreeMap<u32, ReaderKind>, ValidationError> {
        unique(self.readers.iter().map(|r| r.reader_id), "reader")?;
        let mut index = BTreeMap::new();
        for decl in &self.readers {
            let context = || alloc::format!("reader {}", decl.reader_id);
            match decl.kind {
                ReaderKind::UeReader => {
                    if decl.ue_id.is_none() || decl.serving_gnb.is_none() {
                        return Err(ValidationError::UeReaderIncomplete(decl.reader_id));
                    }
                }
                ReaderKind::RanReader => {
                    if decl.ue_id.is_some() {
                        return Err(ValidationError::RanReaderWithUe(decl.reader_id));
                    }
                }
            }
            if let Some(gnb) = decl.serving_gnb {
                if !gnb_ids.contains(&gnb) {
                    return Err(ValidationError::UnknownReference {
                        context: context(),
                        kind: "gnb",
                        id: gnb.to_string(),
                    });
                }
            }
            if let CoverageDecl::DeviceIds(ids) = &decl.coverage {
                for id in ids {
                    if !device_ids.contains(id) {
                        return Err(ValidationError::UnknownReference {
                            context: context(),
                            kind: "device",
                            id: id.to_string(),
                        });
                    }
                }
            }
            index.insert(decl.reader_id, decl.kind);
        }
        Ok(index)
    }

    fn validate_credentials(
        &self,
        device_ids: &BTreeSet<DeviceId>,
    ) -> Result<BTreeSet<DeviceId>, ValidationError> {
        let ids = unique(self.credentials.iter().map(|c| c.device), "credential device")?;
        for decl in &self.credentials {
            if !device_ids.contains(&decl.device) {
                return Err(ValidationError::UnknownReference {
                    context: "credentials".to_string(),
                    kind: "device",
                    id: decl.device.to_string(),
                });
            }
        }
        Ok(ids)
    }

    fn validate_tasks(
        &self,
        device_ids: &BTreeSet<DeviceId>,
        reader_index: &BTreeMap<u32, ReaderKind>,
        af_ids: &BTreeSet<u32>,
        credential_ids: &BTreeSet<DeviceId>,
    ) -> Result<(), ValidationError> {
        let ue_option = matches!(
            self.arch_option,
            ArchOption::Top2ControlPlane | ArchOption::Top2UserPlane
        );
        for (index, task) in self.tasks.iter().enumerate() {
            if !af_ids.contains(&task.af) {
                return Err(ValidationError::UnknownReference {
                    context: alloc::format!("task {index}"),
                    kind: "af",
                    id: task.af.to_string(),
                });
            }
            let scope = task.scope().ok_or(ValidationError::TaskScopeShape(index))?;
            if let TaskScope::UeReaders(ids) = &scope {
                if ids.is_empty() {
                    return Err(ValidationError::EmptyUeReaderList(index));
                }
                if !ue_option {
                    return Err(ValidationError::NeedsUeOption(index));
                }
                for id in ids {
                    match reader_index.get(id) {
                        None => {
                            return Err(ValidationError::UnknownReference {
                                context: alloc::format!("task {index}"),
                                kind: "reader",
                                id: id.to_string(),
                            })
                        }
                        Some(ReaderKind::RanReader) => {
                            return Err(ValidationError::ScopedReaderKind { index, reader: *id })
                        }
                        Some(ReaderKind::UeReader) => {}
                    }
                }
            }
            if task.reader_selection == SelectionMode::Dynamic && !ue_option {
                return Err(ValidationError::NeedsUeOption(index));
            }
            task.security
                .validate()
                .map_err(|source| ValidationError::Profile { index, source })?;
            let selector = task
                .targets
                .to_selector()
                .map_err(|e| ValidationError::Mask { index, reason: e.to_string() })?;
            if let TargetsDecl::DeviceIds(ids) = &task.targets {
                if ids.is_empty() {
                    return Err(ValidationError::EmptyTargetList(index));
                }
                for id in ids {
                    if !device_ids.contains(id) {
                        return Err(ValidationError::UnknownReference {
                            context: alloc::format!("task {index}"),
                            kind: "device",
                            id: id.to_string(),
                        });
                    }
                }
            }
            match task.service {
                ServiceType::Inventory => {
                    if task.command.is_some() {
                        return Err(ValidationError::CommandOnInventory(index));
                    }
                }
                ServiceType::Command => {
                    let command = task.command.as_ref().ok_or(ValidationError::CommandMissing(index))?;
                    if command.payload.0.len() > MAX_PAYLOAD_LEN {
                        return Err(ValidationError::CommandPayloadTooLong(index));
                    }
                    // A confidential exchange needs the shared key on
                    // both ends; the core skips unkeyed targets, so an
                    // explicit list naming one is a config mistake.
                    if task.security.confidentiality {
                        if let TargetSelector::Devices(ids) = &selector {
                            for id in ids {
                                if !credential_ids.contains(id) {
                                    return Err(ValidationError::CommandTargetUnkeyed {
                                        index,
                                        device: id.to_string(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn unique<T: Ord + ToString>(
    items: impl Iterator<Item = T>,
    kind: &'static str,
) -> Result<BTreeSet<T>, ValidationError> {
    let mut seen = BTreeSet::new();
    for item in items {
        let id = item.to_string();
        if !seen.insert(item) {
            return Err(ValidationError::Duplicate { kind, id });
        }
    }
    Ok(seen)
}
