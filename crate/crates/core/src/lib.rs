//! Deterministic simulator and protocol library for ambient-IoT inventory
//! and command services over a simulated 5G system.
//!
//! The crate models the full chain from an application function request to
//! the radio contention rounds of battery-less backscatter devices:
//!
//! * [`identity`]: two-part device ids, owner filters, task ids.
//! * [`nas`]: the compact NAS TLV codec carried end to end between the
//!   core-network function and devices.
//! * [`security`]: pre-shared-key challenge-response tags, payload
//!   ciphering and replay windows.
//! * [`device`]: energy-harvesting device state machines.
//! * [`radio`]: framed slotted-ALOHA contention rounds.
//! * [`reader`]: RAN and UE readers executing inventory/command tasks.
//! * [`core_network`]: AIOTF task lifecycle, NEF authorization, NRF
//!   selection, reader selection, transport paths and aggregation.
//! * [`scenario`]: declarative simulation input with cross-validation.
//! * [`sim`]: the discrete-event engine, metrics and trace stream.
//!
//! Everything is deterministic: a scenario plus a seed reproduces the
//! same metrics and trace byte for byte. The crate is `no_std`-compatible
//! (`alloc` required); the companion CLI crate adds file IO on top.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod core_network;
pub mod device;
pub mod hexstr;
pub mod identity;
pub mod nas;
pub mod radio;
pub mod reader;
pub mod rng;
pub mod scenario;
pub mod security;
pub mod sim;

pub use identity::{DeviceId, IdMask, IdType, TaskId};
pub use nas::{CommandOp, CommandStatus, MessageKind, NasMessage, SecurityFlags};
pub use scenario::ScenarioConfig;
pub use sim::{run, MetricsReport, NullSink, Simulation, TraceEvent, TraceSink};
