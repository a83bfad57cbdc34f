//! A running session: the engine plus its NDJSON session log.
//!
//! Log lines look like
//! `{"dir":"in"|"out","t_wall_ms":int,"envelope":{...}}`. The first line is
//! always an outbound `session_config` event carrying the engine settings,
//! which is what makes a log replayable on its own.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{EngineSettings, SessionEngine};
use crate::protocol::{self, Envelope, Utterance};
use crate::script::ScriptEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub dir: Direction,
    pub t_wall_ms: u64,
    pub envelope: Envelope,
}

pub fn format_entry(dir: Direction, t_wall_ms: u64, envelope: &Envelope) -> String {
    let env = envelope.encode();
    format!(
        "{{\"dir\":\"{}\",\"t_wall_ms\":{},\"envelope\":{}}}\n",
        dir.as_str(),
        t_wall_ms,
        env.trim_end_matches('\n')
    )
}

#[derive(Deserialize)]
struct RawEntry {
    dir: Direction,
    t_wall_ms: u64,
    envelope: Value,
}

/// Parses one log line.
pub fn parse_entry(line: &str) -> Result<LogEntry, String> {
    let raw: RawEntry = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let bytes = serde_json::to_vec(&raw.envelope).map_err(|e| e.to_string())?;
    let envelope = protocol::decode(&bytes).map_err(|e| e.to_string())?;
    Ok(LogEntry {
        dir: raw.dir,
        t_wall_ms: raw.t_wall_ms,
        envelope,
    })
}

/// Where log timestamps come from.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    /// Milliseconds of simulated time; makes logs reproducible.
    Simulated,
    /// Milliseconds of wall time since the session started.
    Wall(Instant),
}

pub struct Session<W: Write> {
    engine: SessionEngine,
    session_id: String,
    clock: Clock,
    log: Option<W>,
}

impl<W: Write> Session<W> {
    /// Creates the session and writes the `session_config` header when logging.
    pub fn new(engine: SessionEngine, session_id: String, clock: Clock, log: Option<W>) -> io::Result<Self> {
        let mut session = Self {
            engine,
            session_id,
            clock,
            log,
        };
        let header = Envelope::Event(session.engine.settings().to_event(&session.session_id));
        session.log_out(&header)?;
        Ok(session)
    }

    pub fn engine(&self) -> &SessionEngine {
        &self.engine
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn now_ms(&self) -> u64 {
        match self.clock {
            Clock::Simulated => (self.engine.world().time_s() * 1000.0).round() as u64,
            Clock::Wall(start) => start.elapsed().as_millis() as u64,
        }
    }

    fn write(&mut self, dir: Direction, envelope: &Envelope) -> io::Result<()> {
        let t = self.now_ms();
        match &mut self.log {
            Some(out) => out.write_all(format_entry(dir, t, envelope).as_bytes()),
            None => Ok(()),
        }
    }

    pub fn log_in(&mut self, envelope: &Envelope) -> io::Result<()> {
        self.write(Direction::In, envelope)
    }

    pub fn log_out(&mut self, envelope: &Envelope) -> io::Result<()> {
        self.write(Direction::Out, envelope)
    }

    /// Logs and queues an utterance for the next tick boundary.
    pub fn receive_utterance(&mut self, utterance: Utterance) -> io::Result<()> {
        let env = Envelope::Utterance(utterance);
        let res = self.log_in(&env);
        let Envelope::Utterance(utterance) = env else {
            unreachable!()
        };
        self.engine.enqueue(utterance);
        res
    }

    /// Runs one tick boundary and logs what it emitted.
    pub fn step(&mut self) -> (Vec<Envelope>, io::Result<()>) {
        let out = self.engine.step();
        let mut res = Ok(());
        for env in &out {
            if let Err(e) = self.log_out(env) {
                res = Err(e);
            }
        }
        (out, res)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.log {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }

    pub fn into_parts(self) -> (SessionEngine, Option<W>) {
        (self.engine, self.log)
    }
}

/// Tick at which a script entry is delivered.
pub fn script_tick(at_s: f64, dt: f64) -> u64 {
    (at_s / dt).round().max(0.0) as u64
}

/// Plays a script straight into an engine without any networking and returns
/// the session log. Runs `tail_ticks` more ticks after the last entry.
pub fn run_script_headless(
    settings: EngineSettings,
    session_id: &str,
    script: &[ScriptEntry],
    tail_ticks: u64,
) -> Vec<u8> {
    let dt = settings.world.dt;
    let engine = SessionEngine::new(settings);
    let mut session =
        Session::new(engine, session_id.to_owned(), Clock::Simulated, Some(Vec::new())).expect("writing to memory");
    for (index, entry) in script.iter().enumerate() {
        let due = script_tick(entry.at_s, dt);
        while session.engine().tick_count() < due {
            session.step().1.expect("writing to memory");
        }
        session
            .receive_utterance(entry.to_utterance(index))
            .expect("writing to memory");
    }
    for _ in 0..tail_ticks {
        session.step().1.expect("writing to memory");
    }
    session.into_parts().1.unwrap_or_default()
}
