//! Deterministic random-stream forking.
//!
//! One scenario seed spawns many independent ChaCha12 streams, keyed by
//! what the stream is for. Unrelated parts of a run never share a stream,
//! so adding a reader or an extra contention frame cannot perturb any
//! other reader's draws. Stream keys pack their labels injectively
//! (seed, domain byte, three u32 labels, zero padding), so distinct
//! labels yield distinct streams by construction, no hashing involved.
//!
//! The key layout is part of the reproducibility contract: a scenario
//! plus a seed must reproduce identical traces across platforms and
//! releases. The frozen vectors in `vectors/security_golden.txt` pin it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::identity::TaskId;

/// The concrete RNG handed to device and radio code.
pub type SimRng = ChaCha12Rng;

const DOMAIN_TASK: u8 = 1;
const DOMAIN_FRAME: u8 = 2;

/// Forks purpose-keyed random streams from the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamForker {
    seed: u64,
}

impl StreamForker {
    pub fn new(seed: u64) -> Self {
        StreamForker { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn fork(&self, domain: u8, a: u32, b: u32, c: u32) -> SimRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8] = domain;
        key[9..13].copy_from_slice(&a.to_be_bytes());
        key[13..17].copy_from_slice(&b.to_be_bytes());
        key[17..21].copy_from_slice(&c.to_be_bytes());
        SimRng::from_seed(key)
    }

    /// Stream owning a task's security material (challenge nonces).
    pub fn task_stream(&self, task: TaskId) -> SimRng {
        self.fork(DOMAIN_TASK, task.0, 0, 0)
    }

    /// Stream owning one contention frame's draws at one reader.
    ///
    /// `frame_seq` counts frames per (task, reader) pair, including
    /// command retries, so every frame gets a fresh stream.
    pub fn frame_stream(&self, task: TaskId, reader_id: u32, frame_seq: u32) -> SimRng {
        self.fork(DOMAIN_FRAME, task.0, reader_id, frame_seq)
    }
}
