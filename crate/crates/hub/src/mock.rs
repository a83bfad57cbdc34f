//! Scripted recognizer clients that stand in for the speech models.

use std::collections::HashMap;
use std::convert::Infallible;
use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use emocmd_core::protocol::{Envelope, Hello, Role, Utterance, PROTO_VERSION};
use emocmd_core::script::ScriptEntry;
use emocmd_core::session::script_tick;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::time::Instant;

use crate::server::{HubError, TickDriver};

/// How [`run_script`] spaces its utterances.
pub enum Pacing {
    /// Sleep until each entry's `at_s` after connecting.
    Wall,
    /// Drive a manual-clock hub to each entry's tick, then send immediately.
    Fast(TickDriver),
}

#[derive(Debug, Error)]
pub enum MockError {
    #[error("connection lost at script index {index}: {detail}")]
    ConnectionLost { index: usize, detail: String },
    #[error("hub refused the recognizer: {0}")]
    Refused(String),
    #[error("lookup table is empty")]
    EmptyLookup,
}

impl MockError {
    pub fn code(&self) -> &'static str {
        match self {
            MockError::ConnectionLost { .. } => "connection_lost",
            MockError::Refused(_) => "refused",
            MockError::EmptyLookup => "empty_lookup",
        }
    }
}

struct Link {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
    buf: String,
}

impl Link {
    async fn connect(hub: SocketAddr) -> Result<Link, MockError> {
        let lost = |e: io::Error| MockError::ConnectionLost {
            index: 0,
            detail: e.to_string(),
        };
        let (read, writer) = TcpStream::connect(hub).await.map_err(lost)?.into_split();
        let mut link = Link {
            reader: BufReader::new(read),
            writer,
            buf: String::new(),
        };
        let hello = Envelope::Hello(Hello {
            role: Role::Recognizer,
            proto: PROTO_VERSION,
        });
        link.send(&hello).await.map_err(lost)?;
        loop {
            match link.recv().await.map_err(lost)? {
                None => return Err(lost(io::ErrorKind::UnexpectedEof.into())),
                Some(Envelope::Welcome(_)) => return Ok(link),
                Some(Envelope::Error(e)) => return Err(MockError::Refused(format!("{}: {}", e.code, e.message))),
                Some(_) => {}
            }
        }
    }

    async fn send(&mut self, env: &Envelope) -> io::Result<()> {
        self.writer.write_all(env.encode().as_bytes()).await
    }

    /// Next decodable envelope, or `None` at end of stream.
    async fn recv(&mut self) -> io::Result<Option<Envelope>> {
        loop {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf).await? == 0 {
                return Ok(None);
            }
            match Envelope::decode(self.buf.trim_end_matches(['\n', '\r'])) {
                Ok(env) => return Ok(Some(env)),
                Err(e) => log::warn!("mock recognizer ignoring line: {e}"),
            }
        }
    }

    /// Resolves when the hub closes the connection.
    async fn closed(&mut self) -> io::Error {
        loop {
            match self.recv().await {
                Ok(Some(_)) => {}
                Ok(None) => return io::ErrorKind::UnexpectedEof.into(),
                Err(e) => return e,
            }
        }
    }
}

/// Plays `script` to the hub as a recognizer. Entry `i` goes out as utterance
/// `script-<i>`. Returns the number of utterances sent.
pub async fn run_script(script: &[ScriptEntry], hub: SocketAddr, pacing: Pacing) -> Result<usize, MockError> {
    let mut link = Link::connect(hub).await?;
    let start = Instant::now();
    let base = match &pacing {
        Pacing::Fast(driver) => driver.utterances_received().await.map_err(hub_lost(0))?,
        Pacing::Wall => 0,
    };
    for (index, entry) in script.iter().enumerate() {
        match &pacing {
            Pacing::Wall => tokio::time::sleep_until(start + Duration::from_secs_f64(entry.at_s)).await,
            Pacing::Fast(driver) => {
                driver
                    .advance_to(script_tick(entry.at_s, driver.dt()))
                    .await
                    .map_err(hub_lost(index))?;
            }
        }
        link.send(&Envelope::Utterance(entry.to_utterance(index)))
            .await
            .map_err(|e| MockError::ConnectionLost {
                index,
                detail: e.to_string(),
            })?;
        if let Pacing::Fast(driver) = &pacing {
            // the hub must hold the utterance before time moves on
            tokio::select! {
                r = driver.wait_for_utterances(base + index as u64 + 1) => r.map_err(hub_lost(index))?,
                e = link.closed() => return Err(MockError::ConnectionLost { index, detail: e.to_string() }),
            }
        }
    }
    let _ = link.writer.shutdown().await;
    Ok(script.len())
}

fn hub_lost(index: usize) -> impl Fn(HubError) -> MockError {
    move |e| MockError::ConnectionLost {
        index,
        detail: e.to_string(),
    }
}

/// Answers every forwarded audio envelope with the scripted utterance for its
/// id, ignoring the audio itself. Unknown ids get an `unknown_utterance` error.
/// Runs until the hub goes away, which is reported as `ConnectionLost` with
/// the number of envelopes answered.
pub async fn echo_audio_mode(hub: SocketAddr, lookup: &HashMap<String, ScriptEntry>) -> Result<Infallible, MockError> {
    if lookup.is_empty() {
        return Err(MockError::EmptyLookup);
    }
    let mut link = Link::connect(hub).await?;
    let mut answered = 0;
    loop {
        let lost = |detail: String| MockError::ConnectionLost {
            index: answered,
            detail,
        };
        let env = match link.recv().await {
            Ok(Some(env)) => env,
            Ok(None) => return Err(lost("closed by hub".into())),
            Err(e) => return Err(lost(e.to_string())),
        };
        let Envelope::Audio(audio) = env else {
            continue;
        };
        let reply = match lookup.get(&audio.utterance_id) {
            Some(entry) => Envelope::Utterance(Utterance {
                utterance_id: audio.utterance_id,
                transcript: entry.transcript.clone(),
                vad: entry.vad,
                duration_ms: 0,
            }),
            None => Envelope::error(
                "unknown_utterance",
                format!("no scripted utterance for {}", audio.utterance_id),
            ),
        };
        link.send(&reply).await.map_err(|e| lost(e.to_string()))?;
        answered += 1;
    }
}
