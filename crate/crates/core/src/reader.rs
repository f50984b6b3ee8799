//! Reader-side task execution.
//!
//! A reader is the radio endpoint of a task: RAN readers are operator
//! infrastructure (base stations or dedicated gateways), UE readers are
//! subscriber handsets that need an explicit subscription grant before
//! they may inventory anything. Either way the reader is transparent to
//! NAS: it broadcasts the PDU bytes it was handed, runs the contention
//! frames, and forwards whatever bytes the devices answered with. The
//! decode call inside [`ReaderNode::execute_task`] stands in for each
//! device demodulating the same broadcast; the reader itself never acts
//! on the message content.

use alloc::vec::Vec;

use crate::core_network::ServiceType;
use crate::device::DeviceState;
use crate::identity::{DeviceId, TaskId};
use crate::nas::{DecodeError, NasMessage};
use crate::radio::{
    self, coverage_indices, ContentionPlan, CoverageSpec, FrameOutcome, SlotOutcome,
};
use crate::rng::StreamForker;

/// What kind of node is doing the reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum ReaderKind {
    /// Base station or dedicated operator gateway.
    RanReader,
    /// A subscriber handset acting as an intermediate reader.
    UeReader,
}

/// One deployed reader.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderNode {
    pub reader_id: u32,
    pub kind: ReaderKind,
    /// Service area this reader belongs to, stamped on every report
    /// built from its collected responses.
    pub area_id: u32,
    pub coverage: CoverageSpec,
    /// Identity of the hosting UE for UE readers.
    pub ue_id: Option<u64>,
    /// Serving base station for UE readers (the control-plane anchor).
    pub serving_gnb: Option<u32>,
    /// RAN readers are authorized by construction; UE readers only
    /// when their subscription carries the reader grant.
    pub authorized: bool,
}

impl ReaderNode {
    pub fn ran(reader_id: u32, area_id: u32, coverage: CoverageSpec) -> Self {
        ReaderNode {
            reader_id,
            kind: ReaderKind::RanReader,
            area_id,
            coverage,
            ue_id: None,
            serving_gnb: None,
            authorized: true,
        }
    }

    pub fn ue(
        reader_id: u32,
        area_id: u32,
        coverage: CoverageSpec,
        ue_id: u64,
        serving_gnb: u32,
        authorized: bool,
    ) -> Self {
        ReaderNode {
            reader_id,
            kind: ReaderKind::UeReader,
            area_id,
            coverage,
            ue_id: Some(ue_id),
            serving_gnb: Some(serving_gnb),
            authorized,
        }
    }
}

/// Briefing sent alongside a task so the reader can size its radio
/// resources before the first frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssistanceInfo {
    pub task: TaskId,
    pub service: ServiceType,
    /// Expected number of devices the task will reach; floored at 1.
    pub estimated_device_count: u32,
    /// Expected size of one device response on the air.
    pub d2r_response_size: u16,
}

/// Sizes the contention plan for a task from its assistance info.
///
/// Inventory opens with a frame matching the device estimate so the
/// first round already operates near the throughput optimum. Commands
/// address a single device at a time, so they run one-slot frames and
/// use the frame budget as a per-target retry budget.
pub fn allocate_resources(
    assistance: &AssistanceInfo,
    base: &ContentionPlan,
    command_retry_budget: u32,
) -> ContentionPlan {
    match assistance.service {
        ServiceType::Inventory => ContentionPlan {
            initial_frame_size: assistance
                .estimated_device_count
                .max(1)
                .clamp(base.min_frame, base.max_frame),
            ..*base
        },
        ServiceType::Command => ContentionPlan {
            initial_frame_size: 1,
            min_frame: 1,
            max_frame: 1,
            termination_empty_frames: base.termination_empty_frames,
            max_frames: command_retry_budget.max(1),
        },
    }
}

/// The radio work for one task, as handed to a reader: pre-encoded NAS
/// PDUs, which the reader broadcasts without interpretation.
#[derive(Debug, Clone, PartialEq)]
pub enum ReaderTask {
    /// One broadcast inventory request.
    Inventory { pdu: Vec<u8> },
    /// Per-target command requests, attempted in order.
    Command { pdus: Vec<(DeviceId, Vec<u8>)> },
}

/// Radio accounting for one executed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_seq: u32,
    pub frame_size: u32,
    pub responders: u32,
    pub successes: u32,
    pub collision_slots: u32,
    pub empty_slots: u32,
    pub duration_micros: u64,
}

impl FrameRecord {
    fn from_outcome(frame_seq: u32, out: &FrameOutcome, slot_micros: u64) -> Self {
        FrameRecord {
            frame_seq,
            frame_size: out.frame_size,
            responders: out.responders,
            successes: out.successes(),
            collision_slots: out.collision_slots(),
            empty_slots: out.empty_slots(),
            duration_micros: out.frame_size as u64 * slot_micros,
        }
    }
}

/// Everything a reader hands back after working a task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskExecution {
    /// Raw device response bytes in arrival order (frame by frame,
    /// slot order within a frame). The reader does not decode them.
    pub responses: Vec<Vec<u8>>,
    pub frames: Vec<FrameRecord>,
    /// Total air time spent.
    pub duration_micros: u64,
}

/// Error from [`ReaderNode::execute_task`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecuteError {
    #[error("reader {0} is not authorized to execute aiot tasks")]
    Unauthorized(u32),
    #[error("task pdu does not decode: {0}")]
    BadPdu(#[from] DecodeError),
}

impl ReaderNode {
    /// Runs the contention frames for one task against the local
    /// device population and returns the collected raw responses.
    ///
    /// Inventory adapts the frame size from the collision count of the
    /// previous frame and stops after `termination_empty_frames`
    /// consecutive frames with no transmissions, or at the frame
    /// budget. Commands walk their targets in order, one single-slot
    /// frame per attempt, moving on at the first response or when the
    /// per-target budget is spent. Frame randomness comes from a
    /// dedicated stream per (task, reader, frame), so executions are
    /// reproducible and independent of wall-clock interleaving.
    pub fn execute_task(
        &self,
        devices: &mut [DeviceState],
        task: TaskId,
        work: &ReaderTask,
        plan: &ContentionPlan,
        slot_micros: u64,
        capture_probability: f64,
        forker: &StreamForker,
    ) -> Result<TaskExecution, ExecuteError> {
        if !self.authorized {
            return Err(ExecuteError::Unauthorized(self.reader_id));
        }
        let coverage = coverage_indices(devices, &self.coverage);
        let mut execution = TaskExecution { responses: Vec::new(), frames: Vec::new(), duration_micros: 0 };
        let mut frame_seq: u32 = 0;

        let run_one = |devices: &mut [DeviceState],
                           msg: &NasMessage,
                           frame_size: u32,
                           frame_seq: u32,
                           execution: &mut TaskExecution|
         -> (FrameOutcome, bool) {
            let mut rng = forker.frame_stream(task, self.reader_id, frame_seq);
            let out =
                radio::run_frame(devices, &coverage, msg, frame_size, slot_micros, capture_probability, &mut rng);
            let mut any_success = false;
            for slot in &out.slots {
                if let SlotOutcome::Success { bytes, .. } = slot {
                    execution.responses.push(bytes.clone());
                    any_success = true;
                }
            }
            let record = FrameRecord::from_outcome(frame_seq, &out, slot_micros);
            execution.duration_micros += record.duration_micros;
            execution.frames.push(record);
            (out, any_success)
        };

        match work {
            ReaderTask::Inventory { pdu } => {
                let msg = NasMessage::decode(pdu)?;
                let mut frame_size = plan.initial_frame_size.clamp(plan.min_frame, plan.max_frame);
                let mut empty_streak = 0;
                while frame_seq < plan.max_frames {
                    let (out, _) = run_one(devices, &msg, frame_size, frame_seq, &mut execution);
                    frame_seq += 1;
                    if out.is_all_empty() {
                        empty_streak += 1;
                        if empty_streak >= plan.termination_empty_frames {
                            break;
                        }
                    } else {
                        empty_streak = 0;
                    }
                    frame_size = radio::next_frame_size(radio::estimate_backlog(out.collision_slots()), plan);
                }
            }
            ReaderTask::Command { pdus } => {
                for (_, pdu) in pdus {
                    let msg = NasMessage::decode(pdu)?;
                    let mut attempts = 0;
                    while attempts < plan.max_frames {
                        let (_, answered) = run_one(devices, &msg, 1, frame_seq, &mut execution);
                        frame_seq += 1;
                        attempts += 1;
                        if answered {
                            break;
                        }
                    }
                }
            }
        }
        Ok(execution)
    }
}
