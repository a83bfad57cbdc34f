//! Emotional speech commands: what was said steers two vehicles, how it was
//! said changes how the affective one flies.
//!
//! The pieces, bottom up:
//!
//! - [`affect`]: VAD samples, the VAD to behavior mapping and the emoji classifier.
//! - [`command`]: keyword detection on transcripts.
//! - [`sim`]: the fixed-timestep steering world.
//! - [`protocol`]: NDJSON envelopes.
//! - [`engine`] and [`session`]: tick-aligned command application and session logs.
//! - [`replay`] and [`metrics`]: re-simulation, comparison numbers and sweeps.

pub mod affect;
pub mod command;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod protocol;
pub mod replay;
pub mod script;
pub mod session;
pub mod sim;
pub mod trajectory;

pub use affect::{classify_emoji, map_vad, BehaviorModifiers, EmojiTable, MappingParams, VadTriple};
pub use command::{normalize, parse_transcript, CommandIntent, IntentKind, Side};
pub use config::{ConfigError, HubConfig};
pub use engine::{EngineSettings, SessionEngine};
pub use metrics::{compute_metrics, sweep, CommandMetrics, SweepRow};
pub use protocol::{Envelope, ProtocolError};
pub use replay::{replay, ReplayError};
pub use script::ScriptEntry;
pub use sim::{AgentId, World, WorldConfig};
pub use trajectory::TrajectoryLog;
