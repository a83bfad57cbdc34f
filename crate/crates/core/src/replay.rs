//! Re-simulates a session log and checks it against the logged snapshots.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::engine::{EngineSettings, SessionEngine};
use crate::protocol::{kinds, Envelope, Event, State, Utterance};
use crate::session::{parse_entry, Direction};
use crate::trajectory::TrajectoryLog;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("log corrupt at line {line}: {detail}")]
    LogCorrupt { line: usize, detail: String },
    #[error("replay diverged at tick {tick}: {detail}")]
    Divergence { tick: u64, detail: String },
}

impl ReplayError {
    pub fn code(&self) -> &'static str {
        match self {
            ReplayError::LogCorrupt { .. } => "log_corrupt",
            ReplayError::Divergence { .. } => "divergence",
        }
    }

    fn corrupt(line: usize, detail: impl Into<String>) -> Self {
        ReplayError::LogCorrupt {
            line,
            detail: detail.into(),
        }
    }
}

fn is_consequence(ev: &Event) -> bool {
    ev.kind == kinds::COMMAND_ACCEPTED || ev.kind == kinds::NO_COMMAND
}

struct Scheduled {
    tick: u64,
    received_tick: u64,
    utterance: Utterance,
    event: Event,
}

/// Rebuilds the per-tick trajectory of a logged session.
///
/// Every logged state and utterance-consequence event must be reproduced
/// exactly; the first mismatch is reported as a divergence.
pub fn replay(log: &[u8]) -> Result<TrajectoryLog, ReplayError> {
    let text = std::str::from_utf8(log).map_err(|e| ReplayError::corrupt(0, e.to_string()))?;
    if text.is_empty() {
        return Err(ReplayError::corrupt(0, "empty log"));
    }
    if !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(ReplayError::corrupt(line, "truncated final line"));
    }

    let mut settings = None;
    let mut inbound: HashMap<String, VecDeque<Utterance>> = HashMap::new();
    let mut schedule: Vec<Scheduled> = Vec::new();
    let mut states: Vec<State> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let entry = parse_entry(line).map_err(|e| ReplayError::corrupt(n, e))?;
        match (entry.dir, entry.envelope) {
            (Direction::In, Envelope::Utterance(u)) => {
                inbound.entry(u.utterance_id.clone()).or_default().push_back(u);
            }
            (Direction::Out, Envelope::Event(ev)) if ev.kind == kinds::SESSION_CONFIG => {
                if settings.is_some() {
                    return Err(ReplayError::corrupt(n, "duplicate session_config"));
                }
                if !states.is_empty() || !schedule.is_empty() {
                    return Err(ReplayError::corrupt(n, "session_config must precede simulation output"));
                }
                let parsed = EngineSettings::from_event(&ev)
                    .ok_or_else(|| ReplayError::corrupt(n, "unreadable session_config settings"))?;
                settings = Some(parsed);
            }
            (Direction::Out, Envelope::Event(ev)) if is_consequence(&ev) => {
                let (Some(tick), Some(received_tick)) = (ev.field::<u64>("tick"), ev.field::<u64>("received_tick"))
                else {
                    return Err(ReplayError::corrupt(n, format!("{} event without tick", ev.kind)));
                };
                let id = ev
                    .utterance_id
                    .clone()
                    .ok_or_else(|| ReplayError::corrupt(n, "consequence event without utterance_id"))?;
                let utterance = inbound
                    .get_mut(&id)
                    .and_then(VecDeque::pop_front)
                    .ok_or_else(|| ReplayError::corrupt(n, format!("no inbound utterance for {id:?}")))?;
                if schedule.last().is_some_and(|s| s.tick > tick) {
                    return Err(ReplayError::corrupt(n, "consequence ticks go backwards"));
                }
                schedule.push(Scheduled {
                    tick,
                    received_tick,
                    utterance,
                    event: ev,
                });
            }
            (Direction::Out, Envelope::State(state)) => states.push(state),
            _ => {}
        }
    }

    let settings = settings.ok_or_else(|| ReplayError::corrupt(1, "missing session_config header"))?;
    let mut engine = SessionEngine::new(settings).record_trajectory();
    let interval = engine.broadcast_interval();

    for (i, state) in states.iter().enumerate() {
        let expected = (i as u64 + 1) * interval;
        if state.tick != expected {
            return Err(ReplayError::corrupt(
                0,
                format!("non-contiguous state ticks: expected {expected}, found {}", state.tick),
            ));
        }
    }

    let last_tick = states
        .last()
        .map(|s| s.tick)
        .into_iter()
        .chain(schedule.last().map(|s| s.tick + 1))
        .max()
        .unwrap_or(0);

    let mut schedule = schedule.into_iter().peekable();
    let mut logged_states = states.iter();
    let mut logged_events: VecDeque<Event> = VecDeque::new();
    while engine.tick_count() < last_tick {
        let now = engine.tick_count();
        while let Some(s) = schedule.next_if(|s| s.tick == now) {
            engine.enqueue_received_at(s.utterance, s.received_tick);
            logged_events.push_back(s.event);
        }
        for env in engine.step() {
            match env {
                Envelope::State(produced) => {
                    let Some(logged) = logged_states.next() else {
                        continue;
                    };
                    if &produced != logged {
                        return Err(ReplayError::Divergence {
                            tick: produced.tick,
                            detail: "state snapshot differs".into(),
                        });
                    }
                }
                Envelope::Event(produced) => {
                    let logged = logged_events
                        .pop_front()
                        .expect("one logged event per scheduled utterance");
                    if produced != logged {
                        return Err(ReplayError::Divergence {
                            tick: now,
                            detail: format!("event for {:?} differs", produced.utterance_id.as_deref().unwrap_or("")),
                        });
                    }
                }
                _ => {}
            }
        }
    }

    Ok(engine.into_trajectory().expect("recording enabled"))
}
