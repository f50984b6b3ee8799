//! Framed slotted ALOHA contention between a reader and the devices in
//! its coverage.
//!
//! A frame announces `frame_size` slots; every covered, willing device
//! picks one slot uniformly at random. A slot with exactly one
//! transmission delivers its bytes, a slot with more collides (unless a
//! configured capture effect rescues one transmission), an unpicked
//! slot stays empty. For `n` responders over `L` slots the expected
//! number of delivered responses is `n * (1 - 1/L)^(n-1)`, which the
//! tests and the reader's backlog estimator both lean on.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use rand::Rng;

use crate::device::DeviceState;
use crate::identity::DeviceId;
use crate::nas::{NasBody, NasMessage};
use crate::rng::SimRng;

/// Default duration of one contention slot.
pub const DEFAULT_SLOT_MICROS: u64 = 1_000;

/// Multiplier of the Schoute backlog estimator: an observed collision
/// slot accounts for about 2.39 unresolved devices on average.
pub const SCHOUTE_FACTOR: f64 = 2.39;

/// Frame sizing and termination parameters for one task at one reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase", default))]
pub struct ContentionPlan {
    /// Slot count of the first frame.
    pub initial_frame_size: u32,
    /// Lower clamp for adaptive sizing.
    pub min_frame: u32,
    /// Upper clamp for adaptive sizing.
    pub max_frame: u32,
    /// Stop after this many consecutive all-empty frames.
    pub termination_empty_frames: u32,
    /// Hard cap on frames per task regardless of progress.
    pub max_frames: u32,
}

impl Default for ContentionPlan {
    fn default() -> Self {
        ContentionPlan {
            initial_frame_size: 4,
            min_frame: 4,
            max_frame: 1024,
            termination_empty_frames: 3,
            max_frames: 1000,
        }
    }
}

/// Which devices a reader's carrier and receiver reach.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "camelCase"))]
pub enum CoverageSpec {
    /// A fixed set of device ids, positions ignored.
    Explicit(BTreeSet<DeviceId>),
    /// Everything within `radius_meters` of `center`, where the
    /// effective radius scales with each device's coverage multiplier
    /// (amplifying types are reachable at twice the distance).
    Radius { center: (f64, f64), radius_meters: f64 },
}

impl CoverageSpec {
    pub fn covers(&self, device: &DeviceState) -> bool {
        match self {
            CoverageSpec::Explicit(ids) => ids.contains(&device.id()),
            CoverageSpec::Radius { center, radius_meters } => match device.position() {
                Some((x, y)) => {
                    let r = radius_meters * device.profile().device_type.coverage_multiplier();
                    let dx = x - center.0;
                    let dy = y - center.1;
                    dx * dx + dy * dy <= r * r
                }
                None => false,
            },
        }
    }
}

/// Indices (ascending) of the devices a coverage spec reaches.
pub fn coverage_indices(devices: &[DeviceState], spec: &CoverageSpec) -> Vec<usize> {
    devices
        .iter()
        .enumerate()
        .filter(|(_, d)| spec.covers(d))
        .map(|(i, _)| i)
        .collect()
}

/// What happened in one slot of a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotOutcome {
    Empty,
    /// Exactly one transmission (or a capture winner) got through.
    Success { device: usize, bytes: Vec<u8> },
    /// `count` transmissions overlapped and all were lost.
    Collision { count: u32 },
}

/// One executed frame: per-slot outcomes plus the responder total.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame_size: u32,
    pub slots: Vec<SlotOutcome>,
    /// Devices that transmitted anywhere in the frame.
    pub responders: u32,
}

impl FrameOutcome {
    pub fn successes(&self) -> u32 {
        self.slots.iter().filter(|s| matches!(s, SlotOutcome::Success { .. })).count() as u32
    }

    pub fn collision_slots(&self) -> u32 {
        self.slots.iter().filter(|s| matches!(s, SlotOutcome::Collision { .. })).count() as u32
    }

    pub fn empty_slots(&self) -> u32 {
        self.slots.iter().filter(|s| matches!(s, SlotOutcome::Empty)).count() as u32
    }

    /// Transmissions lost to collisions (capture winners excluded).
    pub fn collided_responders(&self) -> u32 {
        self.slots
            .iter()
            .map(|s| match s {
                SlotOutcome::Collision { count } => *count,
                _ => 0,
            })
            .sum()
    }

    pub fn is_all_empty(&self) -> bool {
        self.responders == 0
    }
}

/// Runs one contention frame.
///
/// Every covered device first harvests carrier energy for the whole
/// frame duration, then devices are triggered in ascending index order
/// (each willing responder draws exactly one slot from `rng`), and
/// finally slots are resolved in order. When `capture_probability` is
/// positive, each collision slot draws once for capture and, on
/// capture, once more to pick the surviving transmission uniformly.
/// Successful inventory responses mark their device as counted for the
/// request's task, silencing it in later frames.
pub fn run_frame(
    devices: &mut [DeviceState],
    coverage: &[usize],
    request: &NasMessage,
    frame_size: u32,
    slot_micros: u64,
    capture_probability: f64,
    rng: &mut SimRng,
) -> FrameOutcome {
    let carrier_micros = frame_size as u64 * slot_micros;
    for &i in coverage {
        devices[i].energize(carrier_micros);
    }

    let mut emissions: Vec<(u32, usize, Vec<u8>)> = Vec::new();
    for &i in coverage {
        if let Some(response) = devices[i].on_trigger(request, frame_size, rng) {
            let bytes = response.message.encode().expect("device responses are wire-consistent");
            emissions.push((response.slot, i, bytes));
        }
    }
    let responders = emissions.len() as u32;

    let inventory = matches!(request.body, NasBody::InventoryRequest { .. });
    let mut slots = Vec::with_capacity(frame_size as usize);
    for slot in 0..frame_size {
        let mut in_slot = emissions.iter().filter(|(s, _, _)| *s == slot);
        let first = in_slot.next();
        let rest = in_slot.count() as u32;
        let outcome = match (first, rest) {
            (None, _) => SlotOutcome::Empty,
            (Some((_, device, bytes)), 0) => SlotOutcome::Success { device: *device, bytes: bytes.clone() },
            (Some(_), extra) => {
                let count = extra + 1;
                if capture_probability > 0.0 && rng.random::<f64>() < capture_probability {
                    let winner_pos = rng.random_range(0..count);
                    let (_, device, bytes) = emissions
                        .iter()
                        .filter(|(s, _, _)| *s == slot)
                        .nth(winner_pos as usize)
                        .expect("winner index within slot population");
                    SlotOutcome::Success { device: *device, bytes: bytes.clone() }
                } else {
                    SlotOutcome::Collision { count }
                }
            }
        };
        if inventory {
            if let SlotOutcome::Success { device, .. } = outcome {
                devices[device].mark_inventoried(request.task_id);
            }
        }
        slots.push(outcome);
    }

    FrameOutcome { frame_size, slots, responders }
}

/// Schoute backlog estimate: unresolved devices inferred from the
/// number of collision slots in the last frame.
pub fn estimate_backlog(collision_slots: u32) -> f64 {
    SCHOUTE_FACTOR * collision_slots as f64
}

/// Next frame size: the estimate rounded half-up, clamped to the plan.
pub fn next_frame_size(estimate: f64, plan: &ContentionPlan) -> u32 {
    let rounded = (estimate + 0.5) as u32;
    rounded.clamp(plan.min_frame, plan.max_frame)
}
