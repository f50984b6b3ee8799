//! Ambient-IoT device models: capability classes, harvested-energy
//! budgets, and the trigger-response state machine.
//!
//! Devices have no radio resource state and no connection: they hold a
//! charge, and when a reader's carrier energizes them above threshold
//! they answer matching requests in a randomly chosen slot of the
//! announced frame. Silence is the only error mode, as for real tags:
//! a device that is unpowered, masked out, deactivated or already
//! inventoried simply does not transmit.
//!
//! Device-originated traffic (a device transmitting without a preceding
//! trigger) is not modelled; every emission here happens inside
//! [`on_trigger`](DeviceState::on_trigger) in direct response to a
//! request, matching device-terminated and DO-DTT patterns only.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use rand::Rng;

use crate::identity::{DeviceId, TaskId};
use crate::nas::{CommandOp, CommandStatus, NasBody, NasMessage, Payload, SecurityEnvelope, SecurityFlags};
use crate::rng::SimRng;
use crate::security::{self, Direction, Key128};

/// Capability class of a device.
///
/// Type 1 harvests everything and backscatters without amplification at
/// about a microwatt. Type 2a backscatters with amplification, type 2b
/// generates its carrier internally; both have a few hundred microwatts
/// available, which this model expresses as a lower effective energize
/// threshold and a larger coverage radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum DeviceType {
    /// The fully passive class; also the default for declarations that
    /// do not say otherwise.
    #[default]
    Type1,
    Type2a,
    Type2b,
}

impl DeviceType {
    /// Scales the energize threshold: amplified types wake on less.
    pub fn threshold_factor(self) -> f64 {
        match self {
            DeviceType::Type1 => 1.0,
            DeviceType::Type2a | DeviceType::Type2b => 0.5,
        }
    }

    /// Scales a reader's coverage radius for this device.
    pub fn coverage_multiplier(self) -> f64 {
        match self {
            DeviceType::Type1 => 1.0,
            DeviceType::Type2a | DeviceType::Type2b => 2.0,
        }
    }
}

/// How a device gets bits onto the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum TxMode {
    /// Reflects the reader carrier.
    Backscatter,
    /// Generates its own carrier.
    ActiveInternal,
}

/// Static capability profile derived from the device type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceProfile {
    pub device_type: DeviceType,
    pub peak_power_microwatts: f64,
    pub tx_mode: TxMode,
    pub amplifies_signal: bool,
}

/// Error from [`DeviceProfile::validate`].
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ProfileInvariant {
    #[error("peak power must be positive")]
    NonPositivePower,
    #[error("type 1 devices are bounded at 1 microwatt")]
    Type1PowerBound,
    #[error("type 1 devices backscatter without amplification")]
    Type1Amplified,
    #[error("type 2a devices backscatter with amplification")]
    Type2aShape,
    #[error("type 2b devices transmit actively with amplification")]
    Type2bShape,
}

impl DeviceProfile {
    /// Canonical profile for a device type.
    pub fn for_type(device_type: DeviceType) -> Self {
        match device_type {
            DeviceType::Type1 => DeviceProfile {
                device_type,
                peak_power_microwatts: 1.0,
                tx_mode: TxMode::Backscatter,
                amplifies_signal: false,
            },
            DeviceType::Type2a => DeviceProfile {
                device_type,
                peak_power_microwatts: 500.0,
                tx_mode: TxMode::Backscatter,
                amplifies_signal: true,
            },
            DeviceType::Type2b => DeviceProfile {
                device_type,
                peak_power_microwatts: 500.0,
                tx_mode: TxMode::ActiveInternal,
                amplifies_signal: true,
            },
        }
    }

    /// Checks the class invariants.
    pub fn validate(&self) -> Result<(), ProfileInvariant> {
        if !(self.peak_power_microwatts > 0.0) {
            return Err(ProfileInvariant::NonPositivePower);
        }
        match self.device_type {
            DeviceType::Type1 => {
                if self.peak_power_microwatts > 1.0 {
                    return Err(ProfileInvariant::Type1PowerBound);
                }
                if self.tx_mode != TxMode::Backscatter || self.amplifies_signal {
                    return Err(ProfileInvariant::Type1Amplified);
                }
            }
            DeviceType::Type2a => {
                if self.tx_mode != TxMode::Backscatter || !self.amplifies_signal {
                    return Err(ProfileInvariant::Type2aShape);
                }
            }
            DeviceType::Type2b => {
                if self.tx_mode != TxMode::ActiveInternal || !self.amplifies_signal {
                    return Err(ProfileInvariant::Type2bShape);
                }
            }
        }
        Ok(())
    }
}

/// Harvested-energy parameters, all in nanojoules and microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", default))]
pub struct EnergyModel {
    /// Storage capacity.
    pub capacity_nano: f64,
    /// Base energize threshold, scaled by the device type factor.
    pub threshold_nano: f64,
    /// Linear charge rate while a carrier is active.
    pub charge_rate_nano_per_micro: f64,
    /// Debit per transmitted response.
    pub response_cost_nano: f64,
    /// Charge at scenario start.
    pub initial_nano: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        // Generous defaults: a frame of carrier recharges far more than a
        // response costs, so devices starve only when configured to.
        EnergyModel {
            capacity_nano: 1_000_000.0,
            threshold_nano: 100.0,
            charge_rate_nano_per_micro: 1.0,
            response_cost_nano: 50.0,
            initial_nano: 0.0,
        }
    }
}

/// A device's response to one trigger: the slot it picked in the
/// announced frame and the message it transmits there.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerResponse {
    pub slot: u32,
    pub message: NasMessage,
}

/// Full mutable state of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    id: DeviceId,
    profile: DeviceProfile,
    energy_model: EnergyModel,
    energy_nano: f64,
    nas_counter: u32,
    inventoried_tasks: BTreeSet<TaskId>,
    active: bool,
    memory: BTreeMap<u8, Vec<u8>>,
    sensors: BTreeMap<u8, Vec<u8>>,
    key: Option<Key128>,
    position: Option<(f64, f64)>,
}

impl DeviceState {
    pub fn new(id: DeviceId, device_type: DeviceType, energy_model: EnergyModel) -> Self {
        DeviceState {
            id,
            profile: DeviceProfile::for_type(device_type),
            energy_model,
            energy_nano: energy_model.initial_nano.min(energy_model.capacity_nano),
            nas_counter: 0,
            inventoried_tasks: BTreeSet::new(),
            active: true,
            memory: BTreeMap::new(),
            sensors: BTreeMap::new(),
            key: None,
            position: None,
        }
    }

    pub fn id(&self) -> DeviceId {
        self.id
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn set_profile(&mut self, profile: DeviceProfile) {
        self.profile = profile;
    }

    pub fn energy_nano(&self) -> f64 {
        self.energy_nano
    }

    pub fn nas_counter(&self) -> u32 {
        self.nas_counter
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn set_key(&mut self, key: Option<Key128>) {
        self.key = key;
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.position
    }

    pub fn set_position(&mut self, position: Option<(f64, f64)>) {
        self.position = position;
    }

    pub fn preload_memory(&mut self, address: u8, bytes: Vec<u8>) {
        self.memory.insert(address, bytes);
    }

    pub fn set_sensor(&mut self, address: u8, bytes: Vec<u8>) {
        self.sensors.insert(address, bytes);
    }

    pub fn memory_at(&self, address: u8) -> Option<&[u8]> {
        self.memory.get(&address).map(Vec::as_slice)
    }

    /// Effective energize threshold for this device's type.
    pub fn effective_threshold_nano(&self) -> f64 {
        self.energy_model.threshold_nano * self.profile.device_type.threshold_factor()
    }

    /// Whether the charge is high enough to respond.
    pub fn energized(&self) -> bool {
        self.energy_nano >= self.effective_threshold_nano()
    }

    /// Linear charge from `micros` of carrier, capped at capacity.
    /// Monotone: charge never decreases from energizing.
    pub fn energize(&mut self, micros: u64) {
        let gained = self.energy_model.charge_rate_nano_per_micro * micros as f64;
        self.energy_nano = (self.energy_nano + gained).min(self.energy_model.capacity_nano);
    }

    /// Marks this device as counted for an inventory task; it stays
    /// silent for that task from now on.
    pub fn mark_inventoried(&mut self, task: TaskId) {
        self.inventoried_tasks.insert(task);
    }

    pub fn is_inventoried(&self, task: TaskId) -> bool {
        self.inventoried_tasks.contains(&task)
    }

    /// Drops per-task state for a finished task. Task ids are never
    /// reused, so forgetting one cannot change behavior on future tasks.
    pub fn forget_task(&mut self, task: TaskId) {
        self.inventoried_tasks.remove(&task);
    }

    fn emit(&mut self) -> u32 {
        self.nas_counter = self.nas_counter.wrapping_add(1);
        self.energy_nano = (self.energy_nano - self.energy_model.response_cost_nano).max(0.0);
        self.nas_counter
    }

    /// Reacts to a broadcast request during a contention frame.
    ///
    /// Returns the chosen slot and response message, or `None` when the
    /// device stays silent: not energized, not matched by the mask or
    /// target, already inventoried for this task, deactivated (except
    /// for Activate commands), or unable to satisfy the request's
    /// security demands (no key). A response emission always increments
    /// the NAS counter and debits the response energy cost, whether or
    /// not it later survives the slot.
    pub fn on_trigger(
        &mut self,
        request: &NasMessage,
        frame_size: u32,
        rng: &mut SimRng,
    ) -> Option<TriggerResponse> {
        if frame_size == 0 || !self.energized() {
            return None;
        }
        let flags = request.security.flags;
        let want_auth = flags.contains(SecurityFlags::AUTH);
        match &request.body {
            NasBody::InventoryRequest { mask, challenge } => {
                if !self.active
                    || self.inventoried_tasks.contains(&request.task_id)
                    || !mask.matches(&self.id)
                {
                    return None;
                }
                let tag_input = match (want_auth, challenge, self.key) {
                    (false, _, _) => None,
                    (true, Some(ch), Some(key)) => Some((*ch, key)),
                    // Auth demanded but unsatisfiable: stay silent.
                    (true, _, _) => return None,
                };
                let counter = self.emit();
                let auth_tag = tag_input.map(|(ch, key)| security::device_auth_tag(&key, &ch, &self.id, counter));
                let message = NasMessage {
                    task_id: request.task_id,
                    security: SecurityEnvelope::with_flags(flags),
                    body: NasBody::InventoryResponse { device_id: self.id, counter, auth_tag },
                };
                Some(TriggerResponse { slot: rng.random_range(0..frame_size), message })
            }
            NasBody::CommandRequest { target, op, address, payload, challenge } => {
                if *target != self.id {
                    return None;
                }
                if !self.active && *op != CommandOp::Activate {
                    return None;
                }
                let key_material = match (want_auth, challenge, self.key) {
                    (false, _, _) => None,
                    (true, Some(ch), Some(key)) => Some((*ch, key)),
                    (true, _, _) => return None,
                };
                let ciphered = flags.contains(SecurityFlags::CONF);
                let plain: Vec<u8> = if ciphered {
                    let (ch, key) = key_material?;
                    security::unprotect_payload(&key, &ch, 0, Direction::ReaderToDevice, payload)
                } else {
                    payload.to_vec()
                };
                let (status, result) = self.apply_command(*op, *address, &plain);
                let counter = self.emit();
                let auth_tag =
                    key_material.map(|(ch, key)| security::device_auth_tag(&key, &ch, &self.id, counter));
                let (wire_payload, conf) = match (key_material, ciphered, result.is_empty()) {
                    (Some((ch, key)), true, false) => {
                        (security::protect_payload(&key, &ch, counter, Direction::DeviceToReader, &result), true)
                    }
                    _ => (result, false),
                };
                let mut response_flags = flags
                    .contains(SecurityFlags::REPLAY)
                    .then_some(SecurityFlags::REPLAY)
                    .unwrap_or(SecurityFlags::NONE);
                if auth_tag.is_some() {
                    response_flags = response_flags | SecurityFlags::AUTH;
                }
                if conf {
                    response_flags = response_flags | SecurityFlags::CONF;
                }
                let payload_len = wire_payload.len() as u8;
                let message = NasMessage {
                    task_id: request.task_id,
                    security: SecurityEnvelope {
                        flags: response_flags,
                        ciphered_length: if conf { payload_len } else { 0 },
                    },
                    body: NasBody::CommandResponse {
                        device_id: self.id,
                        op: *op,
                        status,
                        payload: Payload::new(wire_payload).expect("results bounded at 32 bytes"),
                        counter,
                        auth_tag,
                    },
                };
                Some(TriggerResponse { slot: rng.random_range(0..frame_size), message })
            }
            // Responses never trigger devices.
            NasBody::InventoryResponse { .. } | NasBody::CommandResponse { .. } => None,
        }
    }

    /// Executes a command against local state, returning the status and
    /// result bytes. Writable memory shadows read-only sensors at the
    /// same address so write-then-read always returns what was written.
    /// On a deactivated device every op except Activate reports
    /// `Deactivated` and has no effect.
    pub fn apply_command(&mut self, op: CommandOp, address: u8, payload: &[u8]) -> (CommandStatus, Vec<u8>) {
        if !self.active && op != CommandOp::Activate {
            return (CommandStatus::Deactivated, Vec::new());
        }
        match op {
            CommandOp::Read => match self.memory.get(&address).or_else(|| self.sensors.get(&address)) {
                Some(bytes) => (CommandStatus::Ok, bytes.clone()),
                None => (CommandStatus::NotSupported, Vec::new()),
            },
            CommandOp::Write => {
                if payload.len() > crate::nas::MAX_PAYLOAD_LEN {
                    return (CommandStatus::MemoryError, Vec::new());
                }
                self.memory.insert(address, payload.to_vec());
                (CommandStatus::Ok, Vec::new())
            }
            CommandOp::Activate => {
                self.active = true;
                (CommandStatus::Ok, Vec::new())
            }
            CommandOp::Deactivate => {
                self.active = false;
                (CommandStatus::Ok, Vec::new())
            }
        }
    }
}
