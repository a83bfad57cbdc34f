#![allow(dead_code)]

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use emocmd_core::protocol::{Envelope, Event, Hello, Role, State, PROTO_VERSION};
use emocmd_core::HubConfig;
use emocmd_hub::{Hub, TickMode};
use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const TIMEOUT: Duration = Duration::from_secs(10);

pub fn test_config(log_path: Option<PathBuf>) -> HubConfig {
    HubConfig {
        tcp_port: 0,
        ws_port: 0,
        log_path,
        session_seed: Some(42),
        ..HubConfig::default()
    }
}

pub async fn start(mode: TickMode, log_path: Option<PathBuf>) -> Hub {
    Hub::start(&test_config(log_path), Ipv4Addr::LOCALHOST.into(), mode)
        .await
        .expect("hub starts")
}

pub fn hello(role: Role) -> Envelope {
    Envelope::Hello(Hello {
        role,
        proto: PROTO_VERSION,
    })
}

pub struct TcpClient {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
}

impl TcpClient {
    pub async fn connect(addr: SocketAddr) -> Self {
        let (r, w) = TcpStream::connect(addr).await.unwrap().into_split();
        Self {
            reader: BufReader::new(r),
            writer: w,
        }
    }

    pub async fn join(addr: SocketAddr, role: Role) -> Self {
        let mut c = Self::connect(addr).await;
        c.send(&hello(role)).await;
        assert!(matches!(c.recv().await, Some(Envelope::Welcome(_))));
        c
    }

    pub async fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).await.unwrap();
    }

    pub async fn send(&mut self, env: &Envelope) {
        self.send_raw(env.encode().as_bytes()).await;
    }

    /// Next raw line including its newline, `None` at end of stream.
    pub async fn recv_line(&mut self) -> Option<String> {
        let mut line = String::new();
        let n = tokio::time::timeout(TIMEOUT, self.reader.read_line(&mut line))
            .await
            .expect("line within timeout")
            .ok()?;
        (n > 0).then_some(line)
    }

    pub async fn recv(&mut self) -> Option<Envelope> {
        let line = self.recv_line().await?;
        Some(Envelope::decode(line.trim_end()).expect("hub sends valid envelopes"))
    }

    pub async fn close(mut self) {
        let _ = self.writer.shutdown().await;
    }
}

pub struct WsClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl WsClient {
    pub async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
        Self { ws }
    }

    pub async fn join(addr: SocketAddr, role: Role) -> Self {
        let mut c = Self::connect(addr).await;
        c.send(&hello(role)).await;
        assert!(matches!(c.recv().await, Some(Envelope::Welcome(_))));
        c
    }

    pub async fn send_text(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_owned().into())).await.unwrap();
    }

    pub async fn send(&mut self, env: &Envelope) {
        let line = env.encode();
        self.send_text(line.trim_end()).await;
    }

    pub async fn recv_text(&mut self) -> Option<String> {
        loop {
            let msg = tokio::time::timeout(TIMEOUT, self.ws.next())
                .await
                .expect("frame within timeout")?;
            match msg.ok()? {
                Message::Text(t) => return Some(t.to_string()),
                Message::Close(_) => return None,
                _ => {}
            }
        }
    }

    pub async fn recv(&mut self) -> Option<Envelope> {
        let text = self.recv_text().await?;
        assert!(!text.contains('\n'), "one envelope per frame, no newline");
        Some(Envelope::decode(&text).expect("hub sends valid envelopes"))
    }

    /// Skips envelopes until one is an event of `kind`.
    pub async fn event(&mut self, kind: &str) -> Event {
        loop {
            match self.recv().await.expect("connection open") {
                Envelope::Event(e) if e.kind == kind => return e,
                _ => {}
            }
        }
    }

    pub async fn state(&mut self) -> State {
        loop {
            if let Envelope::State(s) = self.recv().await.expect("connection open") {
                return s;
            }
        }
    }
}

/// Synthetic push-to-talk recording: `samples` of a quiet ramp as base64 PCM16LE.
pub fn synthetic_audio(utterance_id: &str, samples: usize) -> Envelope {
    use base64::Engine;
    let pcm: Vec<u8> = (0..samples)
        .flat_map(|i| ((i % 200) as i16 - 100).to_le_bytes())
        .collect();
    Envelope::Audio(emocmd_core::protocol::Audio {
        utterance_id: utterance_id.into(),
        format: emocmd_core::protocol::AUDIO_FORMAT.into(),
        data: base64::engine::general_purpose::STANDARD.encode(pcm),
    })
}
