//! Per-tick recordings of both vehicles.

use serde::{Deserialize, Serialize};

use crate::command::Side;
use crate::sim::{AgentId, AgentSnapshot, WorldConfig};

/// Both vehicles at one tick boundary. `agents[0]` is the standard vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time_s: f64,
    pub agents: [AgentSnapshot; 2],
}

impl TickRecord {
    pub fn agent(&self, id: AgentId) -> &AgentSnapshot {
        match id {
            AgentId::Standard => &self.agents[0],
            AgentId::Affective => &self.agents[1],
        }
    }
}

/// A move command applied at the boundary where `tick_count == tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMark {
    pub tick: u64,
    pub utterance_id: String,
    pub target: Side,
    pub emoji: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lanes {
    pub standard: f64,
    pub affective: f64,
}

impl Lanes {
    pub fn of(&self, id: AgentId) -> f64 {
        match id {
            AgentId::Standard => self.standard,
            AgentId::Affective => self.affective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub lanes: Lanes,
    /// The neutral emoji, reported for the standard vehicle in metrics.
    #[serde(default)]
    pub neutral_emoji: String,
    pub records: Vec<TickRecord>,
    pub commands: Vec<CommandMark>,
}

impl TrajectoryLog {
    pub fn new(config: &WorldConfig) -> Self {
        Self {
            dt: config.dt,
            lanes: Lanes {
                standard: config.lane_y_standard,
                affective: config.lane_y_affective,
            },
            neutral_emoji: String::new(),
            records: Vec::new(),
            commands: Vec::new(),
        }
    }

    /// True when consecutive records advance by exactly one tick.
    pub fn is_contiguous(&self) -> bool {
        self.records.windows(2).all(|w| w[1].tick == w[0].tick + 1)
    }

    /// Index of the record for `tick`, given contiguity.
    pub fn index_of(&self, tick: u64) -> Option<usize> {
        let first = self.records.first()?.tick;
        let idx = usize::try_from(tick.checked_sub(first)?).ok()?;
        (idx < self.records.len()).then_some(idx)
    }
}
