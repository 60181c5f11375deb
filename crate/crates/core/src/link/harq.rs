//! HARQ process bookkeeping with standalone (non-combining) decoding.

use crate::phy::{CrcStatus, RV_SEQUENCE};

pub const N_HARQ_PIDS: usize = 16;
pub const MAX_ATTEMPTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PidState {
    Idle,
    Pending { payload: Vec<u8>, attempt: usize },
}

/// What a pid transmits next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transmission {
    NewData,
    Retransmission { payload: Vec<u8>, attempt: usize },
}

impl Transmission {
    pub fn attempt(&self) -> usize {
        match self {
            Transmission::NewData => 0,
            Transmission::Retransmission { attempt, .. } => *attempt,
        }
    }

    pub fn new_data_indicator(&self) -> bool {
        matches!(self, Transmission::NewData)
    }

    /// Redundancy version index of this attempt.
    pub fn rv(&self) -> u8 {
        RV_SEQUENCE[self.attempt() % RV_SEQUENCE.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarqState {
    pids: Vec<PidState>,
    max_attempts: usize,
}

impl Default for HarqState {
    fn default() -> Self {
        Self::new(MAX_ATTEMPTS)
    }
}

impl HarqState {
    /// `max_attempts` is clamped to `1..=4`.
    pub fn new(max_attempts: usize) -> Self {
        Self {
            pids: vec![PidState::Idle; N_HARQ_PIDS],
            max_attempts: max_attempts.clamp(1, RV_SEQUENCE.len()),
        }
    }

    pub fn max_attempts(&self) -> usize {
        self.max_attempts
    }

    /// Pids are served round-robin, one per slot.
    pub fn pid_for_slot(slot_index: u64) -> u8 {
        (slot_index % N_HARQ_PIDS as u64) as u8
    }

    pub fn state(&self, pid: u8) -> &PidState {
        &self.pids[usize::from(pid)]
    }

    pub fn next_transmission(&self, pid: u8) -> Transmission {
        match &self.pids[usize::from(pid)] {
            PidState::Idle => Transmission::NewData,
            PidState::Pending { payload, attempt } => Transmission::Retransmission {
                payload: payload.clone(),
                attempt: *attempt,
            },
        }
    }

    /// Records the outcome of `attempt` carrying `payload` on `pid`.
    pub fn on_result(&mut self, pid: u8, payload: &[u8], attempt: usize, crc: CrcStatus) {
        let next = attempt + 1;
        self.pids[usize::from(pid)] = if crc.is_pass() || next >= self.max_attempts {
            PidState::Idle
        } else {
            PidState::Pending {
                payload: payload.to_vec(),
                attempt: next,
            }
        };
    }
}
