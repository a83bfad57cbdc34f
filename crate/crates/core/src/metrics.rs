//! Dual-agent comparison numbers and arousal sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{map_vad, MappingParams, VadTriple};
use crate::command::{CommandIntent, Side};
use crate::sim::{AgentId, SimError, World, WorldConfig};
use crate::trajectory::TrajectoryLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMetrics {
    pub utterance_id: String,
    pub agent: AgentId,
    /// Seconds from command to arrival; absent when preempted or unfinished.
    pub time_to_target: Option<f64>,
    pub peak_deviation: f64,
    pub path_length: f64,
    pub emoji: String,
}

/// One record per (move command, agent), in command order, standard first.
pub fn compute_metrics(traj: &TrajectoryLog) -> Vec<CommandMetrics> {
    let mut out = Vec::new();
    for (i, mark) in traj.commands.iter().enumerate() {
        let Some(start) = traj.index_of(mark.tick) else {
            continue;
        };
        // the next move command preempts this one at its boundary
        let end = traj
            .commands
            .get(i + 1)
            .and_then(|next| traj.index_of(next.tick))
            .unwrap_or(traj.records.len() - 1);

        for id in AgentId::ALL {
            let lane = traj.lanes.of(id);
            let arrival = (start + 1..=end).find(|&k| traj.records[k].agent(id).arrived);
            let flight_end = arrival.unwrap_or(end);

            let mut peak_deviation: f64 = 0.0;
            let mut path_length = 0.0;
            for k in start..=flight_end {
                let a = traj.records[k].agent(id);
                peak_deviation = peak_deviation.max((a.y - lane).abs());
                if k > start {
                    let p = traj.records[k - 1].agent(id);
                    path_length += ((a.x - p.x).powi(2) + (a.y - p.y).powi(2)).sqrt();
                }
            }
            let emoji = match id {
                AgentId::Standard => traj.neutral_emoji.clone(),
                AgentId::Affective => mark.emoji.clone(),
            };
            out.push(CommandMetrics {
                utterance_id: mark.utterance_id.clone(),
                agent: id,
                time_to_target: arrival.map(|k| (traj.records[k].tick - mark.tick) as f64 * traj.dt),
                peak_deviation,
                path_length,
                emoji,
            });
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("arousal {arousal}: {source}")]
    Timeout {
        arousal: f64,
        #[source]
        source: SimError,
    },
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::InvalidGrid(_) => "invalid_grid",
            MetricsError::Timeout { .. } => "timeout_exceeded",
        }
    }
}

/// Parses `0.1,0.5,0.9` style grids; every value must lie in `[0, 1]`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, MetricsError> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            let value: f64 = item
                .parse()
                .map_err(|_| MetricsError::InvalidGrid(format!("{item:?} is not a decimal")))?;
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::InvalidGrid(format!("{item} outside [0,1]")));
            }
            Ok(value)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub arousal: f64,
    pub time_to_target_s: f64,
}

/// Seconds the vehicle `id` needs for one left-to-right command.
pub fn time_to_cross(
    world: &WorldConfig,
    mapping: &MappingParams,
    vad: VadTriple,
    id: AgentId,
) -> Result<f64, SimError> {
    let mut w = World::new(world.clone(), "");
    w.apply_utterance(
        &CommandIntent::move_to(Side::Right, "right", 0),
        map_vad(vad, mapping),
        "",
    );
    w.run_until(|w| w.vehicle(id).arrived, world.t_max)?;
    Ok(w.time_s())
}

/// Affective time-to-target for each arousal at neutral valence and dominance.
pub fn sweep(world: &WorldConfig, mapping: &MappingParams, grid: &[f64]) -> Result<Vec<SweepRow>, MetricsError> {
    if grid.is_empty() {
        return Err(MetricsError::InvalidGrid("grid is empty".into()));
    }
    let mut rows = grid
        .iter()
        .map(|&arousal| {
            time_to_cross(world, mapping, VadTriple::new(0.5, arousal, 0.5), AgentId::Affective)
                .map(|t| SweepRow {
                    arousal,
                    time_to_target_s: t,
                })
                .map_err(|source| MetricsError::Timeout { arousal, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.arousal.total_cmp(&b.arousal));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = String::from("arousal,time_to_target_s\n");
    for row in rows {
        csv.push_str(&format!("{},{}\n", row.arousal, row.time_to_target_s));
    }
    csv
}
