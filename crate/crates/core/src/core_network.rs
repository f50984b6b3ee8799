//! Simulated 5G core for ambient-IoT: AF exposure and authorization,
//! AIOTF selection, task preparation, transport paths for the four
//! architecture options, and response aggregation.
//!
//! The model keeps the moving parts of a real core that matter for
//! protocol behavior (who is allowed to ask for what, which function
//! serves which area, how many hops a PDU crosses, how responses are
//! validated and consolidated) and drops everything else: no HTTP
//! service APIs, no mobility management, no charging. Links between
//! network functions are reliable; contention on the air interface is
//! the only loss mechanism in the system.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::device::DeviceState;
use crate::identity::{DeviceId, IdMask, TaskId};
use crate::nas::{
    CommandOp, CommandStatus, NasBody, NasMessage, Payload, SecurityEnvelope, SecurityFlags,
};
use crate::reader::{AssistanceInfo, ReaderKind, ReaderNode, ReaderTask};
use crate::rng::StreamForker;
use crate::security::{
    self, CredentialStore, Direction, Key128, Ownership, RejectReason, SecurityProfile,
    VerifyOutcome, CHALLENGE_LEN,
};

/// The four deployment options for connecting the AIOTF to readers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum ArchOption {
    /// AIOTF talks straight to the RAN reader.
    #[default]
    Top1Direct,
    /// AIOTF reaches the RAN reader through the AMF.
    Top1Indirect,
    /// AIOTF reaches a UE reader over control-plane signaling via AMF
    /// and its serving base station.
    Top2ControlPlane,
    /// AIOTF reaches a UE reader over a user-plane session via the UPF.
    Top2UserPlane,
}

/// Network functions a task transits on its way to the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum NodeKind {
    Ran,
    Amf,
    Gnb,
    UeReader,
    Upf,
}

/// One transport hop: the node reached and the encapsulation it uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub node: NodeKind,
    pub label: &'static str,
}

impl ArchOption {
    /// The fixed hop sequence from the AIOTF to the reader. Upstream
    /// collection walks the same hops in reverse.
    pub fn hops(self) -> &'static [Hop] {
        match self {
            ArchOption::Top1Direct => &[Hop { node: NodeKind::Ran, label: "aiotf-ran:direct" }],
            ArchOption::Top1Indirect => &[
                Hop { node: NodeKind::Amf, label: "aiotf-amf:sbi" },
                Hop { node: NodeKind::Ran, label: "amf-ran:ngap" },
            ],
            ArchOption::Top2ControlPlane => &[
                Hop { node: NodeKind::Amf, label: "aiotf-amf:sbi" },
                Hop { node: NodeKind::Gnb, label: "amf-gnb:ngap" },
                Hop { node: NodeKind::UeReader, label: "gnb-ue:rrc" },
            ],
            ArchOption::Top2UserPlane => &[
                Hop { node: NodeKind::Upf, label: "aiotf-upf:userplane" },
                Hop { node: NodeKind::UeReader, label: "upf-ue:pdu-session" },
            ],
        }
    }

    /// Which reader kind terminates this option's transport path.
    pub fn reader_kind(self) -> ReaderKind {
        match self {
            ArchOption::Top1Direct | ArchOption::Top1Indirect => ReaderKind::RanReader,
            ArchOption::Top2ControlPlane | ArchOption::Top2UserPlane => ReaderKind::UeReader,
        }
    }
}

/// What a task asks the devices to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum ServiceType {
    Inventory,
    Command,
}

/// Which devices a task addresses.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSelector {
    /// All devices matching an id mask.
    Mask(IdMask),
    /// An explicit device list, attempted in the given order.
    Devices(Vec<DeviceId>),
}

impl TargetSelector {
    pub fn selects(&self, id: &DeviceId) -> bool {
        match self {
            TargetSelector::Mask(mask) => mask.matches(id),
            TargetSelector::Devices(ids) => ids.contains(id),
        }
    }
}

/// Where a task runs: a service area, or specific UE readers named by
/// the application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskScope {
    Area(u32),
    UeReaders(Vec<u32>),
}

/// How the reader list is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum SelectionMode {
    /// Location map only: every matching reader participates.
    #[default]
    Static,
    /// UE-reader options only: the serving base station additionally
    /// drops candidates whose coverage reaches none of the task's
    /// target devices (a stand-in for radio-condition reports).
    Dynamic,
}

/// The command a task carries, before per-target encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSpec {
    pub op: CommandOp,
    pub address: u8,
    pub payload: Vec<u8>,
}

/// An application's service request as it arrives through the NEF.
#[derive(Debug, Clone, PartialEq)]
pub struct AfRequest {
    pub af_id: u32,
    pub service: ServiceType,
    pub targets: TargetSelector,
    pub scope: TaskScope,
    pub security: SecurityProfile,
    pub selection: SelectionMode,
    /// Application's guess at the matching population, if it has one.
    pub estimated_device_count: Option<u32>,
    pub command: Option<CommandSpec>,
}

/// Lifecycle of a task inside the AIOTF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum TaskStatus {
    Pending,
    Dispatched,
    Collecting,
    Done,
    Failed,
}

impl TaskStatus {
    /// Legal transitions: Pending to Dispatched to Collecting to a
    /// terminal state, and failure from anywhere non-terminal.
    pub fn can_advance_to(self, next: TaskStatus) -> bool {
        matches!(
            (self, next),
            (TaskStatus::Pending, TaskStatus::Dispatched)
                | (TaskStatus::Dispatched, TaskStatus::Collecting)
                | (TaskStatus::Collecting, TaskStatus::Done)
                | (TaskStatus::Pending, TaskStatus::Failed)
                | (TaskStatus::Dispatched, TaskStatus::Failed)
                | (TaskStatus::Collecting, TaskStatus::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Done | TaskStatus::Failed)
    }
}

/// One consolidated row of a task's results.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub struct DeviceReport {
    pub device_id: DeviceId,
    pub reader_id: u32,
    /// The collecting reader's area: device position is known only as
    /// "near that reader".
    pub area_id: u32,
    pub auth_verified: bool,
    /// Deciphered command result bytes; absent for inventory.
    #[cfg_attr(
        feature = "serde",
        serde(
            skip_serializing_if = "Option::is_none",
            default,
            with = "crate::hexstr::serde_opt_vec"
        )
    )]
    pub data: Option<Vec<u8>>,
    /// Command completion status; absent for inventory.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub command_status: Option<CommandStatus>,
}

/// Why a task never reached its readers (or died on the way).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskFailure {
    #[error("application function {0} is not registered")]
    UnknownAf(u32),
    #[error("request outside the application function's allowed scope")]
    ScopeViolation,
    #[error("no aiotf serves area {0}")]
    NoAiotfForArea(u32),
    #[error("ue reader {0} is not registered")]
    UnknownUeReader(u32),
    #[error("no eligible reader for the task")]
    EmptyReaderList,
    #[error("dynamic reader selection requires a ue-reader option")]
    DynamicSelectionUnsupported,
    #[error("command task without a command body")]
    MissingCommand,
    #[error("command payload exceeds the wire bound")]
    CommandPayloadTooLong,
}

/// Per-application authorization scope held by the NEF.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AfEntry {
    pub allowed_areas: BTreeSet<u32>,
    pub allowed_services: BTreeSet<ServiceType>,
}

/// Registry of application functions allowed to request services.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AfRegistry {
    entries: BTreeMap<u32, AfEntry>,
}

impl AfRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, af_id: u32, entry: AfEntry) {
        self.entries.insert(af_id, entry);
    }

    pub fn get(&self, af_id: u32) -> Option<&AfEntry> {
        self.entries.get(&af_id)
    }
}

/// Checks an AF request against the registry: the AF must exist and
/// every touched area and the service must lie inside its grant.
pub fn nef_authorize_af(
    registry: &AfRegistry,
    af_id: u32,
    service: ServiceType,
    areas: &[u32],
) -> Result<(), TaskFailure> {
    let entry = registry.get(af_id).ok_or(TaskFailure::UnknownAf(af_id))?;
    if !entry.allowed_services.contains(&service) {
        return Err(TaskFailure::ScopeViolation);
    }
    if areas.iter().any(|a| !entry.allowed_areas.contains(a)) {
        return Err(TaskFailure::ScopeViolation);
    }
    Ok(())
}

/// AIOTF instances and the service areas they registered for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NrfRegistry {
    entries: BTreeMap<u32, BTreeSet<u32>>,
}

impl NrfRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, aiotf_id: u32, service_areas: BTreeSet<u32>) {
        self.entries.insert(aiotf_id, service_areas);
    }

    /// Lowest-id AIOTF serving the area; ties break low for
    /// determinism.
    pub fn select(&self, area: u32) -> Option<u32> {
        self.entries.iter().find(|(_, areas)| areas.contains(&area)).map(|(id, _)| *id)
    }
}

/// Per-UE grants from subscription data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubscriptionStore {
    entries: BTreeMap<u64, bool>,
}

impl SubscriptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, ue_id: u64, aiot_reader: bool) {
        self.entries.insert(ue_id, aiot_reader);
    }

    /// Whether this UE may act as a reader. Unknown UEs may not.
    pub fn allows_reading(&self, ue_id: u64) -> bool {
        self.entries.get(&ue_id).copied().unwrap_or(false)
    }
}

/// Hands out task ids, monotonically from 1, unique for a whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskIdAllocator {
    next: u32,
}

impl TaskIdAllocator {
    pub fn new() -> Self {
        TaskIdAllocator { next: 1 }
    }

    pub fn allocate(&mut self) -> TaskId {
        let id = TaskId(self.next);
        self.next += 1;
        id
    }
}

/// Loads pre-shared device credentials into the store, atomically: on
/// any duplicate (within the batch or against existing entries)
/// nothing at all is written.
pub fn provision_devices(
    store: &mut CredentialStore,
    entries: &[(DeviceId, Key128, Ownership)],
) -> Result<u32, security::DuplicateDevice> {
    let mut fresh = BTreeSet::new();
    for (id, _, _) in entries {
        if store.get(id).is_some() || !fresh.insert(*id) {
            return Err(security::DuplicateDevice(*id));
        }
    }
    for (id, key, ownership) in entries {
        store.insert(*id, *key, *ownership).expect("pre-checked for duplicates");
    }
    Ok(entries.len() as u32)
}

/// Picks the serving AIOTF for an area, or for the area of a UE reader
/// (resolved through the reader registry first).
pub fn select_aiotf(
    nrf: &NrfRegistry,
    query_area: Option<u32>,
    query_ue_reader: Option<u32>,
    readers: &BTreeMap<u32, ReaderNode>,
) -> Result<(u32, u32), TaskFailure> {
    let area = match (query_area, query_ue_reader) {
        (Some(area), _) => area,
        (None, Some(reader_id)) => {
            readers.get(&reader_id).ok_or(TaskFailure::UnknownUeReader(reader_id))?.area_id
        }
        (None, None) => return Err(TaskFailure::EmptyReaderList),
    };
    match nrf.select(area) {
        Some(aiotf) => Ok((aiotf, area)),
        None => Err(TaskFailure::NoAiotfForArea(area)),
    }
}

/// Produces the ordered reader list for a task.
///
/// Static selection takes every authorized reader of the option's kind
/// in the scope (area match, or the explicit UE-reader list). Dynamic
/// selection, available only for UE-reader options, additionally drops
/// readers whose coverage reaches none of the target devices, standing
/// in for the serving base station's radio-condition refinement. The
/// result is ascending by reader id.
pub fn select_readers(
    option: ArchOption,
    scope: &TaskScope,
    selection: SelectionMode,
    readers: &BTreeMap<u32, ReaderNode>,
    devices: &[DeviceState],
    targets: &TargetSelector,
) -> Result<Vec<u32>, TaskFailure> {
    let wanted_kind = option.reader_kind();
    if selection == SelectionMode::Dynamic && wanted_kind != ReaderKind::UeReader {
        return Err(TaskFailure::DynamicSelectionUnsupported);
    }
    let mut selected = Vec::new();
    match scope {
        TaskScope::Area(area) => {
            for (id, reader) in readers {
                if reader.kind == wanted_kind && reader.area_id == *area && reader.authorized {
                    selected.push(*id);
                }
            }
        }
        TaskScope::UeReaders(ids) => {
            let mut ordered: Vec<u32> = ids.clone();
            ordered.sort_unstable();
            ordered.dedup();
            for id in ordered {
                let reader = readers.get(&id).ok_or(TaskFailure::UnknownUeReader(id))?;
                if reader.kind == wanted_kind && reader.authorized {
                    selected.push(id);
                }
            }
        }
    }
    if selection == SelectionMode::Dynamic {
        selected.retain(|id| {
            let reader = &readers[id];
            devices.iter().any(|d| targets.selects(&d.id()) && reader.coverage.covers(d))
        });
    }
    if selected.is_empty() {
        return Err(TaskFailure::EmptyReaderList);
    }
    Ok(selected)
}

/// A task the AIOTF accepted and encoded, ready for dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTask {
    pub task_id: TaskId,
    pub af_id: u32,
    pub aiotf_id: u32,
    pub service: ServiceType,
    pub security: SecurityProfile,
    pub targets: TargetSelector,
    /// Ascending reader ids the task is dispatched to.
    pub readers: Vec<u32>,
    /// The radio work, identical bytes for every reader.
    pub work: ReaderTask,
    pub assistance: AssistanceInfo,
    /// Challenge for this task's authenticated exchanges.
    pub challenge: Option<[u8; CHALLENGE_LEN]>,
}

/// Consolidation result for one task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AggregateOutcome {
    pub reports: Vec<DeviceReport>,
    /// Responses excluded by validation: undecodable bytes, security
    /// flags that contradict the task profile, missing or wrong tags,
    /// replayed counters.
    pub security_rejects: u32,
    /// Verified responses dropped because an earlier verified response
    /// already reported the same device.
    pub duplicates_collapsed: u32,
}

/// The simulated core: registries, credentials, readers, and the
/// AIOTF task logic that ties them together. One instance models one
/// deployment, so it is pinned to a single architecture option.
#[derive(Debug, Clone, Default)]
pub struct AiotCore {
    pub option: ArchOption,
    pub credentials: CredentialStore,
    pub afs: AfRegistry,
    pub nrf: NrfRegistry,
    pub subscriptions: SubscriptionStore,
    pub readers: BTreeMap<u32, ReaderNode>,
    allocator: TaskIdAllocator,
}

impl AiotCore {
    pub fn new(option: ArchOption) -> Self {
        AiotCore { option, allocator: TaskIdAllocator::new(), ..Default::default() }
    }

    /// Registers a reader, resolving UE-reader authorization from
    /// subscription data and caching it on the node.
    pub fn register_reader(&mut self, mut reader: ReaderNode) {
        if reader.kind == ReaderKind::UeReader {
            reader.authorized =
                reader.ue_id.map(|ue| self.subscriptions.allows_reading(ue)).unwrap_or(false);
        } else {
            reader.authorized = true;
        }
        self.readers.insert(reader.reader_id, reader);
    }

    /// Expands command targets: an explicit list is kept in order, a
    /// mask selects every provisioned device matching it, ascending.
    fn command_targets(&self, targets: &TargetSelector) -> Vec<DeviceId> {
        match targets {
            TargetSelector::Devices(ids) => ids.clone(),
            TargetSelector::Mask(mask) => {
                self.credentials.devices().copied().filter(|id| mask.matches(id)).collect()
            }
        }
    }

    fn estimate_targets(&self, targets: &TargetSelector) -> u32 {
        let n = match targets {
            TargetSelector::Devices(ids) => ids.len(),
            TargetSelector::Mask(mask) => {
                self.credentials.devices().filter(|id| mask.matches(id)).count()
            }
        };
        (n as u32).max(1)
    }

    /// Runs the admission pipeline for one AF request: NEF scope
    /// check, AIOTF selection through the NRF, task id allocation,
    /// reader selection, challenge generation, and NAS encoding.
    ///
    /// The returned task carries everything dispatch needs; a failure
    /// carries the stage that refused it, and guarantees nothing was
    /// sent anywhere.
    pub fn handle_af_request(
        &mut self,
        request: &AfRequest,
        devices: &[DeviceState],
        forker: &StreamForker,
    ) -> Result<PreparedTask, TaskFailure> {
        // Resolve every area the request touches, then authorize.
        let touched_areas: Vec<u32> = match &request.scope {
            TaskScope::Area(a) => alloc::vec![*a],
            TaskScope::UeReaders(ids) => {
                let mut areas = Vec::new();
                for id in ids {
                    let reader =
                        self.readers.get(id).ok_or(TaskFailure::UnknownUeReader(*id))?;
                    areas.push(reader.area_id);
                }
                areas.sort_unstable();
                areas.dedup();
                areas
            }
        };
        nef_authorize_af(&self.afs, request.af_id, request.service, &touched_areas)?;

        let (aiotf_id, _) = match &request.scope {
            TaskScope::Area(a) => select_aiotf(&self.nrf, Some(*a), None, &self.readers)?,
            TaskScope::UeReaders(ids) => {
                let lowest = ids.iter().min().copied().ok_or(TaskFailure::EmptyReaderList)?;
                select_aiotf(&self.nrf, None, Some(lowest), &self.readers)?
            }
        };

        let task_id = self.allocator.allocate();
        let readers = select_readers(
            self.option,
            &request.scope,
            request.selection,
            &self.readers,
            devices,
            &request.targets,
        )?;

        let challenge = request.security.auth.then(|| {
            let mut rng = forker.task_stream(task_id);
            security::make_challenge(&mut rng)
        });
        let base_flags = request.security.base_flags();

        let (work, estimated) = match request.service {
            ServiceType::Inventory => {
                let mask = match &request.targets {
                    TargetSelector::Mask(mask) => mask.clone(),
                    // An explicit inventory list still goes on the air
                    // as a broadcast; the narrowest shared prefix is the
                    // empty mask, and aggregation filters to the list.
                    TargetSelector::Devices(_) => IdMask::empty(),
                };
                let message = NasMessage {
                    task_id,
                    security: SecurityEnvelope::with_flags(base_flags),
                    body: NasBody::InventoryRequest { mask, challenge },
                };
                let pdu = message.encode().expect("inventory requests are wire-consistent");
                (ReaderTask::Inventory { pdu }, self.estimate_targets(&request.targets))
            }
            ServiceType::Command => {
                let spec = request.command.as_ref().ok_or(TaskFailure::MissingCommand)?;
                if spec.payload.len() > crate::nas::MAX_PAYLOAD_LEN {
                    return Err(TaskFailure::CommandPayloadTooLong);
                }
                // Confidentiality needs the challenge; an injected
                // request claiming CONF without AUTH degrades to
                // cleartext rather than emitting a lying flag.
                let conf_active = request.security.confidentiality && challenge.is_some();
                let targets = self.command_targets(&request.targets);
                let mut pdus = Vec::with_capacity(targets.len());
                for target in targets {
                    let cipher_key = if conf_active {
                        match self.credentials.get(&target) {
                            Some(cred) => Some(cred.key),
                            // Without a shared key the device could
                            // neither decipher the payload nor have its
                            // protected answer read back. Skip.
                            None => continue,
                        }
                    } else {
                        None
                    };
                    let (wire_payload, ciphered_length) = match (cipher_key, challenge) {
                        (Some(key), Some(ch)) if !spec.payload.is_empty() => {
                            let wire = security::protect_payload(
                                &key,
                                &ch,
                                0,
                                Direction::ReaderToDevice,
                                &spec.payload,
                            );
                            let len = wire.len() as u8;
                            (wire, len)
                        }
                        _ => (spec.payload.clone(), 0),
                    };
                    let flags =
                        if conf_active { base_flags | SecurityFlags::CONF } else { base_flags };
                    let message = NasMessage {
                        task_id,
                        security: SecurityEnvelope { flags, ciphered_length },
                        body: NasBody::CommandRequest {
                            target,
                            op: spec.op,
                            address: spec.address,
                            payload: Payload::new(wire_payload)
                                .map_err(|_| TaskFailure::CommandPayloadTooLong)?,
                            challenge,
                        },
                    };
                    let pdu = message.encode().expect("command requests are wire-consistent");
                    pdus.push((target, pdu));
                }
                let estimated = (pdus.len() as u32).max(1);
                (ReaderTask::Command { pdus }, estimated)
            }
        };

        let estimated_device_count = request.estimated_device_count.unwrap_or(estimated).max(1);
        // Response size on the air: header plus id, counter and tag
        // presence for inventory; commands round up to the PDU bound.
        let d2r_response_size = match request.service {
            ServiceType::Inventory => 25 + if request.security.auth { 4 } else { 0 },
            ServiceType::Command => crate::nas::MAX_PDU_LEN as u16,
        };

        Ok(PreparedTask {
            task_id,
            af_id: request.af_id,
            aiotf_id,
            service: request.service,
            security: request.security,
            targets: request.targets.clone(),
            readers,
            work,
            assistance: AssistanceInfo {
                task: task_id,
                service: request.service,
                estimated_device_count,
                d2r_response_size,
            },
            challenge,
        })
    }

    /// Validates, verifies, deciphers, and consolidates the collected
    /// responses of one task into per-device reports.
    ///
    /// `arrivals` is (bytes, reader id) in arrival order. Responses
    /// that fail validation (undecodable, flags contradicting the task
    /// profile, missing/bad tag, replayed counter) are counted and
    /// excluded. Among verified responses the first per device wins;
    /// later ones only bump the duplicate counter. With authentication
    /// off, responses are taken at face value and marked unverified.
    pub fn aggregate(&mut self, task: &PreparedTask, arrivals: &[(Vec<u8>, u32)]) -> AggregateOutcome {
        let mut outcome = AggregateOutcome::default();
        let mut reported: BTreeSet<DeviceId> = BTreeSet::new();
        let profile = task.security;
        let expected_base = profile.base_flags();

        for (bytes, reader_id) in arrivals {
            let Ok(message) = NasMessage::decode(bytes) else {
                outcome.security_rejects += 1;
                continue;
            };
            if message.task_id != task.task_id {
                outcome.security_rejects += 1;
                continue;
            }
            let flags = message.security.flags;
            let base = SecurityFlags::from_bits(
                flags.bits() & (SecurityFlags::AUTH | SecurityFlags::REPLAY).bits(),
            )
            .expect("masked to known bits");
            if base != expected_base {
                outcome.security_rejects += 1;
                continue;
            }
            if flags.contains(SecurityFlags::CONF) && !profile.confidentiality {
                outcome.security_rejects += 1;
                continue;
            }

            let (device_id, counter, auth_tag, command) = match &message.body {
                NasBody::InventoryResponse { device_id, counter, auth_tag } => {
                    if task.service != ServiceType::Inventory || !task.targets.selects(device_id) {
                        outcome.security_rejects += 1;
                        continue;
                    }
                    (*device_id, *counter, *auth_tag, None)
                }
                NasBody::CommandResponse { device_id, op, status, payload, counter, auth_tag } => {
                    if task.service != ServiceType::Command {
                        outcome.security_rejects += 1;
                        continue;
                    }
                    (*device_id, *counter, *auth_tag, Some((*op, *status, payload.to_vec())))
                }
                // Requests coming back upstream are nonsense.
                NasBody::InventoryRequest { .. } | NasBody::CommandRequest { .. } => {
                    outcome.security_rejects += 1;
                    continue;
                }
            };

            let auth_verified = if profile.auth {
                let (Some(challenge), Some(tag)) = (task.challenge.as_ref(), auth_tag.as_ref())
                else {
                    outcome.security_rejects += 1;
                    continue;
                };
                match security::verify_and_update(
                    &mut self.credentials,
                    &device_id,
                    challenge,
                    counter,
                    tag,
                    profile.anti_replay,
                ) {
                    VerifyOutcome::Accept => true,
                    VerifyOutcome::Reject(
                        RejectReason::UnknownDevice
                        | RejectReason::BadTag
                        | RejectReason::Replay,
                    ) => {
                        outcome.security_rejects += 1;
                        continue;
                    }
                }
            } else {
                false
            };

            // A ciphered result is only readable with the device key;
            // profile invariants guarantee auth (and thus a challenge)
            // whenever confidentiality is on.
            let (data, command_status) = match command {
                None => (None, None),
                Some((_, status, payload)) => {
                    if message.security.flags.contains(SecurityFlags::CONF) {
                        let (Some(challenge), Some(cred)) =
                            (task.challenge.as_ref(), self.credentials.get(&device_id))
                        else {
                            outcome.security_rejects += 1;
                            continue;
                        };
                        let plain = security::unprotect_payload(
                            &cred.key,
                            challenge,
                            counter,
                            Direction::DeviceToReader,
                            &payload,
                        );
                        (Some(plain), Some(status))
                    } else {
                        (Some(payload), Some(status))
                    }
                }
            };

            if !reported.insert(device_id) {
                outcome.duplicates_collapsed += 1;
                continue;
            }
            let area_id = self.readers.get(reader_id).map(|r| r.area_id).unwrap_or(0);
            outcome.reports.push(DeviceReport {
                device_id,
                reader_id: *reader_id,
                area_id,
                auth_verified,
                data,
                command_status,
            });
        }
        outcome
    }
}
