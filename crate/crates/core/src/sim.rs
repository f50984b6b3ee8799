//! The deterministic simulation harness: builds a runnable world from a
//! [`ScenarioConfig`], plays its tasks through the core and the
//! readers, stamps every step onto a simulated clock, and folds the
//! results into a metrics report.
//!
//! Time is a single `u64` microsecond counter. Control-plane steps
//! advance it by a fixed stride, transport hops by their per-label
//! latency, radio frames by `frame_size * slot_micros`. Nothing reads a
//! wall clock and all randomness flows from the scenario seed, so two
//! runs of the same scenario produce identical metrics and identical
//! trace bytes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::core_network::{
    AfEntry, AfRequest, AiotCore, ArchOption, CommandSpec, DeviceReport, NodeKind, PreparedTask,
    ServiceType, TaskStatus,
};
use crate::device::DeviceState;
use crate::identity::TaskId;
use crate::reader::{allocate_resources, ReaderKind, ReaderNode};
use crate::rng::StreamForker;
use crate::scenario::{MaskBuildError, ScenarioConfig, TaskDecl};

/// One timestamped step of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub struct TraceEvent {
    pub time_micros: u64,
    /// What happened: `afRequest`, `dispatchHop`, `frame`, ...
    pub event: String,
    /// Who it happened at: `nef`, `aiotf-1`, `reader-3`, `amf`, ...
    pub node: String,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub task_index: Option<u32>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub task_id: Option<u32>,
    pub detail: String,
    /// Digest of the bytes moving in this step, for comparing payloads
    /// across runs and architecture options without dumping them.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub digest: Option<String>,
}

/// Receives trace events as the simulation produces them.
pub trait TraceSink {
    fn record(&mut self, event: TraceEvent);
}

impl TraceSink for Vec<TraceEvent> {
    fn record(&mut self, event: TraceEvent) {
        self.push(event);
    }
}

/// Swallows the trace for runs where only the metrics matter.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: TraceEvent) {}
}

/// FNV-1a over the bytes, as 16 hex digits.
pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Outcome and accounting for one task of the run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub struct TaskMetrics {
    /// Position in submission order, from 0.
    pub task_index: u32,
    /// Core-allocated id; absent when admission refused the request.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub task_id: Option<u32>,
    pub status: TaskStatus,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub failure: Option<String>,
    pub service: ServiceType,
    /// Target devices inside the coverage of at least one selected
    /// reader: the population the task could possibly have reached.
    pub devices_matched: u32,
    pub devices_reported: u32,
    /// `devices_matched - devices_reported`: reported and missed always
    /// add back up to matched.
    pub devices_missed: u32,
    pub duplicates_collapsed: u32,
    pub security_rejects: u32,
    pub frames: u32,
    pub collision_slots: u32,
    pub empty_slots: u32,
    /// Time spent on the air across all selected readers.
    pub air_time_micros: u64,
    /// Submission to consolidation, hops and control steps included.
    pub duration_micros: u64,
    /// PDU-bearing messages per hop label, dispatch and collection.
    pub messages_per_hop: BTreeMap<String, u64>,
    pub reports: Vec<DeviceReport>,
}

/// Whole-run accumulation over all tasks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub struct Totals {
    pub tasks_done: u32,
    pub tasks_failed: u32,
    pub devices_matched: u64,
    pub devices_reported: u64,
    pub devices_missed: u64,
    pub duplicates_collapsed: u64,
    pub security_rejects: u64,
    pub frames: u64,
    pub collision_slots: u64,
    pub empty_slots: u64,
    /// Final value of the simulated clock.
    pub sim_duration_micros: u64,
    pub messages_per_hop: BTreeMap<String, u64>,
}

/// Everything a run produces besides the trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub struct MetricsReport {
    pub seed: u64,
    pub arch_option: ArchOption,
    pub slot_micros: u64,
    pub capture_probability: f64,
    pub tasks: Vec<TaskMetrics>,
    pub totals: Totals,
}

/// Why a scenario could not be turned into a running simulation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Validation(#[from] crate::scenario::ValidationError),
}

/// Why a task declaration could not become an AF request (only
/// possible for declarations that skipped scenario validation, such as
/// requests injected at runtime).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestShapeError {
    #[error("exactly one of area or ueReaders must be given")]
    Scope,
    #[error("invalid target mask: {0}")]
    Mask(#[from] MaskBuildError),
}

/// Translates a task declaration into the AF request the core consumes.
pub fn request_from_decl(decl: &TaskDecl) -> Result<AfRequest, RequestShapeError> {
    Ok(AfRequest {
        af_id: decl.af,
        service: decl.service,
        targets: decl.targets.to_selector()?,
        scope: decl.scope().ok_or(RequestShapeError::Scope)?,
        security: decl.security,
        selection: decl.reader_selection,
        estimated_device_count: decl.estimated_device_count,
        command: decl.command.as_ref().map(|c| CommandSpec {
            op: c.op,
            address: c.address,
            payload: c.payload.0.clone(),
        }),
    })
}

/// A built, runnable world. Submit requests one at a time, then take
/// the report.
#[derive(Debug)]
pub struct Simulation {
    seed: u64,
    option: ArchOption,
    slot_micros: u64,
    control_step_micros: u64,
    default_hop_micros: u64,
    hop_micros: BTreeMap<String, u64>,
    capture_probability: f64,
    contention: crate::scenario::ContentionConfig,
    devices: Vec<DeviceState>,
    core: AiotCore,
    forker: StreamForker,
    now: u64,
    next_index: u32,
    tasks: Vec<TaskMetrics>,
}

impl Simulation {
    /// Validates the scenario and builds the world: devices with their
    /// keys and state, the core with its registries, readers
    /// registered (which resolves their authorization). Emits the
    /// setup events at time zero.
    pub fn new(config: &ScenarioConfig, sink: &mut dyn TraceSink) -> Result<Self, RunError> {
        config.validate()?;

        let credential_entries: Vec<_> = config
            .credentials
            .iter()
            .map(|c| (c.device, c.key.0, c.ownership))
            .collect();
        let key_of = |id| {
            credential_entries.iter().find(|(d, _, _)| *d == id).map(|(_, key, _)| *key)
        };

        let mut devices = Vec::with_capacity(config.devices.len());
        for decl in &config.devices {
            let mut device = DeviceState::new(decl.id, decl.device_type, decl.energy);
            device.set_position(decl.position);
            for (address, bytes) in &decl.sensors {
                device.set_sensor(*address, bytes.0.clone());
            }
            for (address, bytes) in &decl.memory {
                device.preload_memory(*address, bytes.0.clone());
            }
            device.set_key(decl.device_key.map(|k| k.0).or_else(|| key_of(decl.id)));
            if !decl.active {
                device.apply_command(crate::nas::CommandOp::Deactivate, 0, &[]);
            }
            devices.push(device);
        }

        let mut core = AiotCore::new(config.arch_option);
        for af in &config.afs {
            core.afs.register(
                af.af_id,
                AfEntry {
                    allowed_areas: af.allowed_areas.iter().copied().collect(),
                    allowed_services: af.allowed_services.iter().copied().collect(),
                },
            );
        }
        for aiotf in &config.aiotfs {
            core.nrf.register(aiotf.aiotf_id, aiotf.service_areas.iter().copied().collect());
        }
        for sub in &config.subscriptions {
            core.subscriptions.set(sub.ue_id, sub.aiot_reader);
        }
        crate::core_network::provision_devices(&mut core.credentials, &credential_entries)
            .expect("validation rejects duplicate credentials");

        let mut sim = Simulation {
            seed: config.seed,
            option: config.arch_option,
            slot_micros: config.slot_micros,
            control_step_micros: config.control_step_micros,
            default_hop_micros: config.default_hop_micros,
            hop_micros: config.hop_micros.clone(),
            capture_probability: config.capture_probability,
            contention: config.contention,
            devices,
            core,
            forker: StreamForker::new(config.seed),
            now: 0,
            next_index: 0,
            tasks: Vec::new(),
        };

        sim.emit(
            sink,
            "provision",
            "core".to_string(),
            None,
            None,
            format!("{} credentials, {} devices", credential_entries.len(), sim.devices.len()),
            None,
        );
        for decl in &config.readers {
            let node = match decl.kind {
                ReaderKind::RanReader => {
                    let mut node =
                        ReaderNode::ran(decl.reader_id, decl.area_id, decl.coverage.to_spec());
                    node.serving_gnb = decl.serving_gnb;
                    node
                }
                ReaderKind::UeReader => ReaderNode::ue(
                    decl.reader_id,
                    decl.area_id,
                    decl.coverage.to_spec(),
                    decl.ue_id.expect("validation pins ue readers to a ue"),
                    decl.serving_gnb.expect("validation pins ue readers to a gnb"),
                    false,
                ),
            };
            sim.core.register_reader(node);
            let registered = &sim.core.readers[&decl.reader_id];
            let kind = match registered.kind {
                ReaderKind::RanReader => "ran",
                ReaderKind::UeReader => "ue",
            };
            let detail = format!(
                "kind {kind}, area {}, authorized {}",
                registered.area_id, registered.authorized
            );
            sim.emit(
                sink,
                "readerRegistered",
                format!("reader-{}", decl.reader_id),
                None,
                None,
                detail,
                None,
            );
        }
        Ok(sim)
    }

    fn emit(
        &self,
        sink: &mut dyn TraceSink,
        event: &str,
        node: String,
        task_index: Option<u32>,
        task_id: Option<TaskId>,
        detail: String,
        digest: Option<String>,
    ) {
        sink.record(TraceEvent {
            time_micros: self.now,
            event: event.to_string(),
            node,
            task_index,
            task_id: task_id.map(|t| t.0),
            detail,
            digest,
        });
    }

    fn step(&mut self) {
        self.now += self.control_step_micros;
    }

    fn hop_cost(&self, label: &str) -> u64 {
        self.hop_micros.get(label).copied().unwrap_or(self.default_hop_micros)
    }

    fn hop_node(&self, node: NodeKind, reader_id: u32) -> String {
        match node {
            NodeKind::Amf => "amf".to_string(),
            NodeKind::Gnb => "gnb".to_string(),
            NodeKind::Upf => "upf".to_string(),
            NodeKind::Ran | NodeKind::UeReader => format!("reader-{reader_id}"),
        }
    }

    fn work_digest(task: &PreparedTask) -> String {
        let mut bytes = Vec::new();
        match &task.work {
            crate::reader::ReaderTask::Inventory { pdu } => bytes.extend_from_slice(pdu),
            crate::reader::ReaderTask::Command { pdus } => {
                for (_, pdu) in pdus {
                    bytes.extend_from_slice(pdu);
                }
            }
        }
        digest_hex(&bytes)
    }

    /// Runs one AF request through admission, dispatch, the radio, and
    /// consolidation, and appends its row to the report.
    pub fn submit(&mut self, request: &AfRequest, sink: &mut dyn TraceSink) -> &TaskMetrics {
        let index = self.next_index;
        self.next_index += 1;
        let started = self.now;

        self.step();
        let scope_detail = match &request.scope {
            crate::core_network::TaskScope::Area(a) => format!("area {a}"),
            crate::core_network::TaskScope::UeReaders(ids) => format!("ueReaders {ids:?}"),
        };
        self.emit(
            sink,
            "afRequest",
            format!("af-{}", request.af_id),
            Some(index),
            None,
            format!("{:?}, {scope_detail}", request.service),
            None,
        );

        let prepared =
            match self.core.handle_af_request(request, &self.devices, &self.forker) {
                Ok(prepared) => prepared,
                Err(failure) => {
                    self.step();
                    self.emit(
                        sink,
                        "taskFailed",
                        "core".to_string(),
                        Some(index),
                        None,
                        failure.to_string(),
                        None,
                    );
                    self.tasks.push(TaskMetrics {
                        task_index: index,
                        task_id: None,
                        status: TaskStatus::Failed,
                        failure: Some(failure.to_string()),
                        service: request.service,
                        devices_matched: 0,
                        devices_reported: 0,
                        devices_missed: 0,
                        duplicates_collapsed: 0,
                        security_rejects: 0,
                        frames: 0,
                        collision_slots: 0,
                        empty_slots: 0,
                        air_time_micros: 0,
                        duration_micros: self.now - started,
                        messages_per_hop: BTreeMap::new(),
                        reports: Vec::new(),
                    });
                    return self.tasks.last().expect("just pushed");
                }
            };

        let task_id = prepared.task_id;
        self.step();
        self.emit(
            sink,
            "nefAuthorized",
            "nef".to_string(),
            Some(index),
            Some(task_id),
            format!("af {} cleared for {:?}", prepared.af_id, prepared.service),
            None,
        );
        self.step();
        self.emit(
            sink,
            "aiotfSelected",
            format!("aiotf-{}", prepared.aiotf_id),
            Some(index),
            Some(task_id),
            format!("auth {}", prepared.security.auth),
            None,
        );
        self.step();
        let work_digest = Self::work_digest(&prepared);
        self.emit(
            sink,
            "readersSelected",
            format!("aiotf-{}", prepared.aiotf_id),
            Some(index),
            Some(task_id),
            format!("readers {:?}", prepared.readers),
            Some(work_digest.clone()),
        );

        let devices_matched = self
            .devices
            .iter()
            .filter(|d| {
                prepared.targets.selects(&d.id())
                    && prepared
                        .readers
                        .iter()
                        .any(|r| self.core.readers[r].coverage.covers(d))
            })
            .count() as u32;

        let plan = allocate_resources(
            &prepared.assistance,
            &self.contention.base_plan(),
            self.contention.command_retry_budget,
        );
        let hops = self.option.hops();
        let mut messages_per_hop: BTreeMap<String, u64> = BTreeMap::new();
        let mut arrivals: Vec<(Vec<u8>, u32)> = Vec::new();
        let mut frames = 0u32;
        let mut collision_slots = 0u32;
        let mut empty_slots = 0u32;
        let mut air_time_micros = 0u64;
        let mut execute_failure: Option<String> = None;

        for &reader_id in &prepared.readers {
            for hop in hops {
                self.now += self.hop_cost(hop.label);
                *messages_per_hop.entry(hop.label.to_string()).or_insert(0) += 1;
                self.emit(
                    sink,
                    "dispatchHop",
                    self.hop_node(hop.node, reader_id),
                    Some(index),
                    Some(task_id),
                    format!("{} toward reader {reader_id}", hop.label),
                    Some(work_digest.clone()),
                );
            }
            self.step();
            self.emit(
                sink,
                "resourceAllocation",
                format!("reader-{reader_id}"),
                Some(index),
                Some(task_id),
                format!(
                    "initial frame {}, frame budget {}",
                    plan.initial_frame_size, plan.max_frames
                ),
                None,
            );

            let reader = &self.core.readers[&reader_id];
            let execution = match reader.execute_task(
                &mut self.devices,
                task_id,
                &prepared.work,
                &plan,
                self.slot_micros,
                self.capture_probability,
                &self.forker,
            ) {
                Ok(execution) => execution,
                Err(error) => {
                    execute_failure = Some(error.to_string());
                    break;
                }
            };
            for frame in &execution.frames {
                self.now += frame.duration_micros;
                frames += 1;
                collision_slots += frame.collision_slots;
                empty_slots += frame.empty_slots;
                self.emit(
                    sink,
                    "frame",
                    format!("reader-{reader_id}"),
                    Some(index),
                    Some(task_id),
                    format!(
                        "frame {}: size {}, responders {}, successes {}, collisions {}, empty {}",
                        frame.frame_seq,
                        frame.frame_size,
                        frame.responders,
                        frame.successes,
                        frame.collision_slots,
                        frame.empty_slots
                    ),
                    None,
                );
            }
            air_time_micros += execution.duration_micros;

            let mut collected = Vec::new();
            for bytes in execution.responses {
                collected.extend_from_slice(&bytes);
                arrivals.push((bytes, reader_id));
            }
            let response_count = arrivals.len() as u64;
            for hop in hops.iter().rev() {
                self.now += self.hop_cost(hop.label);
                *messages_per_hop.entry(hop.label.to_string()).or_insert(0) +=
                    arrivals.iter().filter(|(_, r)| *r == reader_id).count() as u64;
                self.emit(
                    sink,
                    "collectHop",
                    self.hop_node(hop.node, reader_id),
                    Some(index),
                    Some(task_id),
                    format!(
                        "{} back from reader {reader_id}, {} responses so far",
                        hop.label, response_count
                    ),
                    Some(digest_hex(&collected)),
                );
            }
        }

        if let Some(failure) = execute_failure {
            self.step();
            self.emit(
                sink,
                "taskFailed",
                format!("aiotf-{}", prepared.aiotf_id),
                Some(index),
                Some(task_id),
                failure.clone(),
                None,
            );
            self.tasks.push(TaskMetrics {
                task_index: index,
                task_id: Some(task_id.0),
                status: TaskStatus::Failed,
                failure: Some(failure),
                service: prepared.service,
                devices_matched,
                devices_reported: 0,
                devices_missed: devices_matched,
                duplicates_collapsed: 0,
                security_rejects: 0,
                frames,
                collision_slots,
                empty_slots,
                air_time_micros,
                duration_micros: self.now - started,
                messages_per_hop,
                reports: Vec::new(),
            });
            return self.tasks.last().expect("just pushed");
        }

        self.step();
        let outcome = self.core.aggregate(&prepared, &arrivals);
        let devices_reported = outcome.reports.len() as u32;
        self.emit(
            sink,
            "aggregate",
            format!("aiotf-{}", prepared.aiotf_id),
            Some(index),
            Some(task_id),
            format!(
                "reports {devices_reported}, rejects {}, duplicates {}",
                outcome.security_rejects, outcome.duplicates_collapsed
            ),
            None,
        );
        self.step();
        self.emit(
            sink,
            "taskDone",
            format!("aiotf-{}", prepared.aiotf_id),
            Some(index),
            Some(task_id),
            format!("matched {devices_matched}, reported {devices_reported}"),
            None,
        );

        self.tasks.push(TaskMetrics {
            task_index: index,
            task_id: Some(task_id.0),
            status: TaskStatus::Done,
            failure: None,
            service: prepared.service,
            devices_matched,
            devices_reported,
            devices_missed: devices_matched.saturating_sub(devices_reported),
            duplicates_collapsed: outcome.duplicates_collapsed,
            security_rejects: outcome.security_rejects,
            frames,
            collision_slots,
            empty_slots,
            air_time_micros,
            duration_micros: self.now - started,
            messages_per_hop,
            reports: outcome.reports,
        });
        self.tasks.last().expect("just pushed")
    }

    /// Read-only view of the rows accumulated so far.
    pub fn tasks(&self) -> &[TaskMetrics] {
        &self.tasks
    }

    /// Current simulated time.
    pub fn now_micros(&self) -> u64 {
        self.now
    }

    /// Folds the run into its report.
    pub fn finish(self) -> MetricsReport {
        let mut totals = Totals { sim_duration_micros: self.now, ..Totals::default() };
        for task in &self.tasks {
            match task.status {
                TaskStatus::Done => totals.tasks_done += 1,
                _ => totals.tasks_failed += 1,
            }
            totals.devices_matched += task.devices_matched as u64;
            totals.devices_reported += task.devices_reported as u64;
            totals.devices_missed += task.devices_missed as u64;
            totals.duplicates_collapsed += task.duplicates_collapsed as u64;
            totals.security_rejects += task.security_rejects as u64;
            totals.frames += task.frames as u64;
            totals.collision_slots += task.collision_slots as u64;
            totals.empty_slots += task.empty_slots as u64;
            for (label, count) in &task.messages_per_hop {
                *totals.messages_per_hop.entry(label.clone()).or_insert(0) += count;
            }
        }
        MetricsReport {
            seed: self.seed,
            arch_option: self.option,
            slot_micros: self.slot_micros,
            capture_probability: self.capture_probability,
            tasks: self.tasks,
            totals,
        }
    }
}

/// Builds the world and plays the scenario's declared tasks in order.
pub fn run(config: &ScenarioConfig, sink: &mut dyn TraceSink) -> Result<MetricsReport, RunError> {
    let mut sim = Simulation::new(config, sink)?;
    for decl in &config.tasks {
        let request = request_from_decl(decl)
            .expect("validation already built every declared task's request");
        sim.submit(&request, sink);
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceType;
    use crate::identity::DeviceId;
    use crate::nas::CommandOp;
    use crate::scenario::{
        AfDecl, AiotfDecl, CommandDecl, CoverageDecl, CredentialDecl, DeviceDecl, HexBytes,
        HexKey, MaskDecl, ReaderDecl, TargetsDecl, TaskDecl,
    };
    use crate::security::{Ownership, SecurityProfile};
    use alloc::vec;

    fn id(n: u32) -> DeviceId {
        format!("1-00A-{n:024X}").parse().unwrap()
    }

    fn device_decl(n: u32) -> DeviceDecl {
        DeviceDecl {
            id: id(n),
            device_type: DeviceType::Type1,
            energy: Default::default(),
            position: None,
            active: true,
            sensors: BTreeMap::new(),
            memory: BTreeMap::new(),
            device_key: None,
        }
    }

    fn inventory_task(area: u32) -> TaskDecl {
        TaskDecl {
            af: 5,
            service: ServiceType::Inventory,
            targets: TargetsDecl::Mask(MaskDecl::default()),
            area: Some(area),
            ue_readers: None,
            security: SecurityProfile::OFF,
            reader_selection: Default::default(),
            estimated_device_count: None,
            command: None,
        }
    }

    /// Two devices under one RAN reader in area 7, device 1 keyed.
    fn base_config() -> ScenarioConfig {
        ScenarioConfig {
            seed: 99,
            devices: vec![device_decl(1), device_decl(2)],
            readers: vec![ReaderDecl {
                reader_id: 1,
                kind: ReaderKind::RanReader,
                area_id: 7,
                coverage: CoverageDecl::DeviceIds(vec![id(1), id(2)]),
                ue_id: None,
                serving_gnb: None,
            }],
            aiotfs: vec![AiotfDecl { aiotf_id: 1, service_areas: vec![7, 8] }],
            credentials: vec![CredentialDecl {
                device: id(1),
                key: HexKey([0x11; 16]),
                ownership: Ownership::Operator,
            }],
            afs: vec![AfDecl {
                af_id: 5,
                allowed_areas: vec![7, 8],
                allowed_services: vec![ServiceType::Inventory, ServiceType::Command],
            }],
            tasks: vec![inventory_task(7)],
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn a_small_run_reports_every_covered_device() {
        let mut trace = Vec::new();
        let report = run(&base_config(), &mut trace).unwrap();
        assert_eq!(report.tasks.len(), 1);
        let task = &report.tasks[0];
        assert_eq!(task.status, TaskStatus::Done);
        assert_eq!(task.devices_matched, 2);
        assert_eq!(task.devices_reported, 2);
        assert_eq!(task.devices_missed, 0);
        assert_eq!(task.duplicates_collapsed, 0);
        assert_eq!(task.security_rejects, 0);
        assert!(task.frames >= 3, "at least the termination streak runs");
        assert!(task.duration_micros > 0);
        assert_eq!(task.reports.len(), 2);
        assert!(task.reports.iter().all(|r| r.area_id == 7 && r.reader_id == 1));
        assert_eq!(report.totals.tasks_done, 1);
        assert_eq!(report.totals.devices_reported, 2);
        assert_eq!(report.totals.sim_duration_micros, task.duration_micros);
    }

    #[test]
    fn the_trace_walks_the_stages_in_order_on_a_monotone_clock() {
        let mut trace = Vec::new();
        run(&base_config(), &mut trace).unwrap();
        let kinds: Vec<&str> = trace.iter().map(|e| e.event.as_str()).collect();
        assert_eq!(kinds[0], "provision");
        assert_eq!(kinds[1], "readerRegistered");
        let order = [
            "afRequest",
            "nefAuthorized",
            "aiotfSelected",
            "readersSelected",
            "dispatchHop",
            "resourceAllocation",
            "frame",
            "collectHop",
            "aggregate",
            "taskDone",
        ];
        let mut last = 1;
        for stage in order {
            let at = kinds.iter().position(|k| *k == stage).unwrap_or_else(|| {
                panic!("missing stage {stage} in {kinds:?}")
            });
            assert!(at > last || stage == "afRequest", "{stage} out of order");
            last = at;
        }
        assert!(
            trace.windows(2).all(|w| w[0].time_micros <= w[1].time_micros),
            "clock never goes backwards"
        );
        // Hop and frame events both carry real durations.
        let dispatch =
            trace.iter().find(|e| e.event == "dispatchHop").expect("dispatch present");
        assert_eq!(dispatch.node, "reader-1");
        assert!(dispatch.digest.is_some());
    }

    #[test]
    fn identical_seeds_reproduce_the_run_exactly() {
        let mut trace_a = Vec::new();
        let mut trace_b = Vec::new();
        let a = run(&base_config(), &mut trace_a).unwrap();
        let b = run(&base_config(), &mut trace_b).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace_a, trace_b);

        let mut other = base_config();
        other.seed = 100;
        let mut trace_c = Vec::new();
        let c = run(&other, &mut trace_c).unwrap();
        assert_eq!(c.tasks[0].devices_reported, 2, "outcome holds across seeds");
    }

    #[test]
    fn runtime_failures_are_rows_not_errors() {
        let mut config = base_config();
        // Area 8 is within the AF's grant and the AIOTF serves it, but
        // no reader lives there.
        config.tasks.push(inventory_task(8));
        let mut trace = Vec::new();
        let report = run(&config, &mut trace).unwrap();
        assert_eq!(report.tasks.len(), 2);
        let failed = &report.tasks[1];
        assert_eq!(failed.status, TaskStatus::Failed);
        assert_eq!(failed.failure.as_deref(), Some("no eligible reader for the task"));
        assert_eq!(failed.task_id, None);
        assert_eq!(failed.devices_reported, 0);
        assert_eq!(report.totals.tasks_failed, 1);
        assert!(trace.iter().any(|e| e.event == "taskFailed"));
    }

    #[test]
    fn ciphered_commands_come_back_readable() {
        let mut config = base_config();
        config.devices[0].sensors.insert(3, HexBytes(vec![0xAA, 0xBB]));
        config.tasks = vec![TaskDecl {
            service: ServiceType::Command,
            targets: TargetsDecl::DeviceIds(vec![id(1)]),
            security: SecurityProfile { auth: true, confidentiality: true, anti_replay: true },
            command: Some(CommandDecl {
                op: CommandOp::Read,
                address: 3,
                payload: HexBytes(Vec::new()),
            }),
            ..inventory_task(7)
        }];
        let report = run(&config, &mut NullSink).unwrap();
        let task = &report.tasks[0];
        assert_eq!(task.status, TaskStatus::Done);
        assert_eq!(task.devices_reported, 1);
        let report_row = &task.reports[0];
        assert!(report_row.auth_verified);
        assert_eq!(report_row.data.as_deref(), Some(&[0xAA, 0xBB][..]));
        // Single target over the direct option: one dispatch, one
        // response back across the same hop.
        assert_eq!(task.messages_per_hop["aiotf-ran:direct"], 2);
    }

    #[test]
    fn hop_latency_overrides_stretch_the_clock() {
        let quick = run(&base_config(), &mut NullSink).unwrap();
        let mut slowed = base_config();
        slowed.hop_micros.insert("aiotf-ran:direct".to_string(), 5_000);
        let slow = run(&slowed, &mut NullSink).unwrap();
        assert_eq!(
            slow.totals.sim_duration_micros - quick.totals.sim_duration_micros,
            2 * (5_000 - 50),
            "one dispatch and one collect crossing, each slowed by the override"
        );
        assert_eq!(slow.tasks[0].devices_reported, quick.tasks[0].devices_reported);
    }

    #[test]
    fn reported_and_missed_always_add_up_to_matched() {
        let mut config = base_config();
        // An uncovered device still matches the broadcast mask.
        config.devices.push(device_decl(3));
        // A deactivated covered device matches but stays silent.
        config.devices.push(DeviceDecl { active: false, ..device_decl(4) });
        if let CoverageDecl::DeviceIds(ids) = &mut config.readers[0].coverage {
            ids.push(id(4));
        }
        let report = run(&config, &mut NullSink).unwrap();
        let task = &report.tasks[0];
        assert_eq!(task.devices_matched, 3, "devices 1, 2, 4 are covered");
        assert_eq!(task.devices_reported, 2);
        assert_eq!(task.devices_missed, 1, "the deactivated device");
        assert_eq!(
            task.devices_reported + task.devices_missed,
            task.devices_matched
        );
    }

    #[test]
    fn injected_requests_can_fail_admission_per_request() {
        let mut sim = Simulation::new(&base_config(), &mut NullSink).unwrap();
        let rogue = TaskDecl { af: 99, ..inventory_task(7) };
        let request = request_from_decl(&rogue).unwrap();
        let row = sim.submit(&request, &mut NullSink);
        assert_eq!(row.status, TaskStatus::Failed);
        assert_eq!(row.failure.as_deref(), Some("application function 99 is not registered"));
        let fine = request_from_decl(&inventory_task(7)).unwrap();
        let row = sim.submit(&fine, &mut NullSink);
        assert_eq!(row.status, TaskStatus::Done);
        let report = sim.finish();
        assert_eq!(report.totals.tasks_failed, 1);
        assert_eq!(report.totals.tasks_done, 1);

        let shapeless = TaskDecl { area: None, ..inventory_task(7) };
        assert_eq!(request_from_decl(&shapeless), Err(RequestShapeError::Scope));
    }
}
