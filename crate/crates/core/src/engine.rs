//! Tick-aligned session logic shared by the live hub, headless runs and replay.
//!
//! Utterances are queued as they arrive and applied at the next tick
//! boundary, in arrival order, before the world advances. The world is never
//! touched between ticks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::affect::{map_vad, EmojiTable, MappingParams};
use crate::command::{parse_transcript, IntentKind};
use crate::config::HubConfig;
use crate::protocol::{kinds, Envelope, Event, State, Utterance};
use crate::sim::{World, WorldConfig};
use crate::trajectory::{CommandMark, TrajectoryLog};

/// Everything needed to reproduce a session's simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub world: WorldConfig,
    pub mapping: MappingParams,
    pub emoji_table: EmojiTable,
    pub state_broadcast_hz: f64,
}

impl EngineSettings {
    pub fn from_config(config: &HubConfig, emoji_table: EmojiTable) -> Self {
        Self {
            world: config.world.clone(),
            mapping: config.mapping,
            emoji_table,
            state_broadcast_hz: config.state_broadcast_hz,
        }
    }

    pub fn broadcast_interval(&self) -> u64 {
        crate::config::broadcast_interval(self.world.dt, self.state_broadcast_hz)
    }

    /// The `session_config` event that heads every session log.
    pub fn to_event(&self, session: &str) -> Event {
        Event::new(kinds::SESSION_CONFIG, None)
            .with("session", session)
            .with("settings", self)
    }

    pub fn from_event(event: &Event) -> Option<Self> {
        if event.kind != kinds::SESSION_CONFIG {
            return None;
        }
        event.field("settings")
    }
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self::from_config(&HubConfig::default(), EmojiTable::default())
    }
}

#[derive(Debug, Clone)]
struct Pending {
    utterance: Utterance,
    received_tick: u64,
}

#[derive(Debug, Clone)]
pub struct SessionEngine {
    settings: EngineSettings,
    world: World,
    interval: u64,
    pending: VecDeque<Pending>,
    recording: Option<TrajectoryLog>,
}

impl SessionEngine {
    pub fn new(settings: EngineSettings) -> Self {
        let world = World::new(settings.world.clone(), settings.emoji_table.neutral_label());
        let interval = settings.broadcast_interval();
        Self {
            settings,
            world,
            interval,
            pending: VecDeque::new(),
            recording: None,
        }
    }

    /// Starts keeping a per-tick trajectory, beginning with the current state.
    pub fn record_trajectory(mut self) -> Self {
        let mut log = TrajectoryLog::new(self.world.config());
        log.neutral_emoji = self.settings.emoji_table.neutral_label().to_owned();
        log.records.push(self.world.record());
        self.recording = Some(log);
        self
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn tick_count(&self) -> u64 {
        self.world.tick_count()
    }

    pub fn broadcast_interval(&self) -> u64 {
        self.interval
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Queues an utterance received during the current tick.
    pub fn enqueue(&mut self, utterance: Utterance) {
        let received_tick = self.world.tick_count();
        self.enqueue_received_at(utterance, received_tick);
    }

    /// Queues an utterance with an explicit receipt tick (replay).
    pub fn enqueue_received_at(&mut self, utterance: Utterance, received_tick: u64) {
        self.pending.push_back(Pending {
            utterance,
            received_tick,
        });
    }

    /// Runs one tick boundary: applies queued utterances, advances the world
    /// and emits a state snapshot when one is due. Returns the outbound
    /// envelopes in order.
    pub fn step(&mut self) -> Vec<Envelope> {
        let mut out = Vec::with_capacity(self.pending.len() + 1);
        while let Some(p) = self.pending.pop_front() {
            out.push(Envelope::Event(self.apply(p)));
        }
        self.world.tick();
        if let Some(log) = &mut self.recording {
            log.records.push(self.world.record());
        }
        if self.world.tick_count().is_multiple_of(self.interval) {
            out.push(Envelope::State(self.snapshot()));
        }
        out
    }

    fn apply(&mut self, p: Pending) -> Event {
        let Pending {
            utterance,
            received_tick,
        } = p;
        let tick = self.world.tick_count();
        let intent = parse_transcript(&utterance.transcript);
        let modifiers = map_vad(utterance.vad, &self.settings.mapping);
        let emoji = self.settings.emoji_table.classify(utterance.vad).to_owned();
        self.world.apply_utterance(&intent, modifiers, &emoji);

        let id = utterance.utterance_id.as_str();
        match intent.kind() {
            IntentKind::MoveTo(side) => {
                if let Some(log) = &mut self.recording {
                    log.commands.push(CommandMark {
                        tick,
                        utterance_id: id.to_owned(),
                        target: side,
                        emoji: emoji.clone(),
                    });
                }
                Event::command_accepted(id, "move_to", Some(side), &emoji, modifiers, tick, received_tick)
            }
            IntentKind::LightOn => {
                Event::command_accepted(id, "light_on", None, &emoji, modifiers, tick, received_tick)
            }
            IntentKind::NoCommand => Event::no_command(id, tick, received_tick),
        }
    }

    /// Immutable snapshot of the current tick.
    pub fn snapshot(&self) -> State {
        State {
            tick: self.world.tick_count(),
            time_s: self.world.time_s(),
            agents: self.world.vehicles().iter().map(|v| v.snapshot()).collect(),
        }
    }

    pub fn trajectory(&self) -> Option<&TrajectoryLog> {
        self.recording.as_ref()
    }

    pub fn into_trajectory(self) -> Option<TrajectoryLog> {
        self.recording
    }
}
