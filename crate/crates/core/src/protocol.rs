//! Newline-delimited JSON envelopes spoken over TCP and WebSocket.
//!
//! Every envelope encodes to exactly one line of minified JSON followed by a
//! single `\n`. Unknown fields are ignored when decoding. Event envelopes are
//! the exception: anything besides `kind` and `utterance_id` is carried as a
//! kind-specific field.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::affect::{BehaviorModifiers, VadTriple};
use crate::command::Side;
use crate::sim::{AgentSnapshot, Vec2, WorldConfig};

pub const PROTO_VERSION: u32 = 1;
pub const AUDIO_FORMAT: &str = "pcm16le-mono-16000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ui,
    Recognizer,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub role: Role,
    pub proto: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldGeometry {
    pub width: f64,
    pub height: f64,
    pub left_target: Vec2,
    pub right_target: Vec2,
}

impl From<&WorldConfig> for WorldGeometry {
    fn from(c: &WorldConfig) -> Self {
        Self {
            width: c.width,
            height: c.height,
            left_target: c.left_target,
            right_target: c.right_target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub session: String,
    pub world: WorldGeometry,
}

/// One push-to-talk recording: base64 of little-endian 16-bit mono PCM at 16 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audio {
    pub utterance_id: String,
    pub format: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub transcript: String,
    pub vad: VadTriple,
    #[serde(default)]
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub tick: u64,
    pub time_s: f64,
    pub agents: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: String,
    #[serde(default)]
    pub utterance_id: Option<String>,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Envelope {
    Hello(Hello),
    Welcome(Welcome),
    Audio(Audio),
    Utterance(Utterance),
    State(State),
    Event(Event),
    Error(ErrorMsg),
}

impl Envelope {
    pub fn type_name(&self) -> &'static str {
        match self {
            Envelope::Hello(_) => "hello",
            Envelope::Welcome(_) => "welcome",
            Envelope::Audio(_) => "audio",
            Envelope::Utterance(_) => "utterance",
            Envelope::State(_) => "state",
            Envelope::Event(_) => "event",
            Envelope::Error(_) => "error",
        }
    }

    pub fn error(code: impl Into<String>, message: impl Into<String>) -> Self {
        Envelope::Error(ErrorMsg {
            code: code.into(),
            message: message.into(),
        })
    }

    /// Minified JSON with a trailing newline.
    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("envelopes always serialize");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Self, ProtocolError> {
        decode(line.as_bytes())
    }
}

/// Event kinds the hub emits.
pub mod kinds {
    pub const COMMAND_ACCEPTED: &str = "command_accepted";
    pub const NO_COMMAND: &str = "no_command";
    pub const RECOGNIZER_UNAVAILABLE: &str = "recognizer_unavailable";
    pub const RECOGNIZER_ERROR: &str = "recognizer_error";
    pub const SESSION_CONFIG: &str = "session_config";
}

impl Event {
    pub fn new(kind: &str, utterance_id: Option<String>) -> Self {
        Self {
            kind: kind.to_owned(),
            utterance_id,
            fields: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        debug_assert!(key != "kind" && key != "utterance_id" && key != "type");
        self.fields.insert(
            key.to_owned(),
            serde_json::to_value(value).expect("event field serializes"),
        );
        self
    }

    pub fn field<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Option<T> {
        self.fields
            .get(key)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    /// Builds a `command_accepted` event.
    pub fn command_accepted(
        utterance_id: &str,
        command: &str,
        target: Option<Side>,
        emoji: &str,
        modifiers: BehaviorModifiers,
        tick: u64,
        received_tick: u64,
    ) -> Self {
        Self::new(kinds::COMMAND_ACCEPTED, Some(utterance_id.to_owned()))
            .with("command", command)
            .with("target", target)
            .with("emoji", emoji)
            .with("modifiers", modifiers)
            .with("tick", tick)
            .with("received_tick", received_tick)
    }

    pub fn no_command(utterance_id: &str, tick: u64, received_tick: u64) -> Self {
        Self::new(kinds::NO_COMMAND, Some(utterance_id.to_owned()))
            .with("tick", tick)
            .with("received_tick", received_tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolErrorCode {
    MalformedJson,
    UnknownType,
    MissingField,
    InvalidField,
}

impl ProtocolErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MalformedJson => "malformed_json",
            Self::UnknownType => "unknown_type",
            Self::MissingField => "missing_field",
            Self::InvalidField => "invalid_field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolError {
    pub code: ProtocolErrorCode,
    pub detail: String,
}

impl ProtocolError {
    fn new(code: ProtocolErrorCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_envelope(&self) -> Envelope {
        Envelope::error(self.code.as_str(), self.detail.clone())
    }
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.detail)
    }
}

impl std::error::Error for ProtocolError {}

fn required_fields(ty: &str) -> Option<&'static [&'static str]> {
    Some(match ty {
        "hello" => &["role", "proto"],
        "welcome" => &["session", "world"],
        "audio" => &["utterance_id", "format", "data"],
        // vad is the payload; report it first when a bare utterance arrives
        "utterance" => &["vad", "utterance_id", "transcript"],
        "state" => &["tick", "time_s", "agents"],
        "event" => &["kind"],
        "error" => &["code", "message"],
        _ => return None,
    })
}

fn field_error(err: serde_json::Error) -> ProtocolError {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return ProtocolError::new(ProtocolErrorCode::MissingField, &rest[..end]);
        }
    }
    ProtocolError::new(ProtocolErrorCode::InvalidField, msg)
}

fn variant<T: for<'de> Deserialize<'de>>(obj: Map<String, Value>) -> Result<T, ProtocolError> {
    serde_json::from_value(Value::Object(obj)).map_err(field_error)
}

/// Decodes one line (a trailing newline is tolerated).
pub fn decode(line: &[u8]) -> Result<Envelope, ProtocolError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let value: Value = serde_json::from_slice(line)
        .map_err(|e| ProtocolError::new(ProtocolErrorCode::MalformedJson, e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(ProtocolError::new(
            ProtocolErrorCode::MalformedJson,
            "envelope must be a JSON object",
        ));
    };
    let ty = match obj.remove("type") {
        None => return Err(ProtocolError::new(ProtocolErrorCode::MissingField, "type")),
        Some(Value::String(s)) => s,
        Some(other) => {
            return Err(ProtocolError::new(
                ProtocolErrorCode::UnknownType,
                format!("type must be a string, got {other}"),
            ))
        }
    };
    let required = required_fields(&ty)
        .ok_or_else(|| ProtocolError::new(ProtocolErrorCode::UnknownType, format!("unknown type {ty:?}")))?;
    if let Some(missing) = required.iter().find(|f| !obj.contains_key(**f)) {
        return Err(ProtocolError::new(ProtocolErrorCode::MissingField, *missing));
    }

    Ok(match ty.as_str() {
        "hello" => Envelope::Hello(variant(obj)?),
        "welcome" => Envelope::Welcome(variant(obj)?),
        "audio" => {
            let audio: Audio = variant(obj)?;
            if audio.format != AUDIO_FORMAT {
                return Err(ProtocolError::new(
                    ProtocolErrorCode::InvalidField,
                    format!("format must be {AUDIO_FORMAT:?}, got {:?}", audio.format),
                ));
            }
            Envelope::Audio(audio)
        }
        "utterance" => Envelope::Utterance(variant(obj)?),
        "state" => Envelope::State(variant(obj)?),
        "event" => {
            for reserved in ["kind", "utterance_id"] {
                if let Some(v) = obj.get(reserved) {
                    if !(v.is_string() || (reserved == "utterance_id" && v.is_null())) {
                        return Err(ProtocolError::new(
                            ProtocolErrorCode::InvalidField,
                            format!("{reserved} must be a string"),
                        ));
                    }
                }
            }
            Envelope::Event(variant(obj)?)
        }
        "error" => Envelope::Error(variant(obj)?),
        _ => unreachable!("required_fields covers every known type"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AgentId;

    fn code_of(line: &str) -> (ProtocolErrorCode, String) {
        let e = decode(line.as_bytes()).unwrap_err();
        (e.code, e.detail)
    }

    #[test]
    fn hello_round_trips_bytes() {
        let line = r#"{"type":"hello","role":"ui","proto":1}"#;
        let env = decode(line.as_bytes()).unwrap();
        assert_eq!(
            env,
            Envelope::Hello(Hello {
                role: Role::Ui,
                proto: 1
            })
        );
        assert_eq!(env.encode(), format!("{line}\n"));
    }

    #[test]
    fn error_table() {
        assert_eq!(code_of("not json").0, ProtocolErrorCode::MalformedJson);
        assert_eq!(code_of("").0, ProtocolErrorCode::MalformedJson);
        assert_eq!(code_of("[1,2]").0, ProtocolErrorCode::MalformedJson);
        assert_eq!(code_of(r#"{"type":"hello""#).0, ProtocolErrorCode::MalformedJson);
        assert_eq!(
            code_of(r#"{"role":"ui"}"#),
            (ProtocolErrorCode::MissingField, "type".into())
        );
        assert_eq!(code_of(r#"{"type":"bogus"}"#).0, ProtocolErrorCode::UnknownType);
        assert_eq!(code_of(r#"{"type":7}"#).0, ProtocolErrorCode::UnknownType);
        assert_eq!(
            code_of(r#"{"type":"utterance"}"#),
            (ProtocolErrorCode::MissingField, "vad".into())
        );
        assert_eq!(
            code_of(
                r#"{"type":"utterance","utterance_id":"u","transcript":"x","vad":{"valence":0.5,"dominance":0.5}}"#
            ),
            (ProtocolErrorCode::MissingField, "arousal".into())
        );
        assert_eq!(
            code_of(r#"{"type":"hello","role":"ui"}"#),
            (ProtocolErrorCode::MissingField, "proto".into())
        );
        assert_eq!(
            code_of(r#"{"type":"hello","role":"pilot","proto":1}"#).0,
            ProtocolErrorCode::InvalidField
        );
        assert_eq!(
            code_of(r#"{"type":"audio","utterance_id":"u","format":"wav","data":""}"#).0,
            ProtocolErrorCode::InvalidField
        );
        assert_eq!(
            code_of(r#"{"type":"event","kind":3}"#).0,
            ProtocolErrorCode::InvalidField
        );
        assert_eq!(
            code_of(r#"{"type":"state","tick":-1,"time_s":0,"agents":[]}"#).0,
            ProtocolErrorCode::InvalidField
        );
    }

    #[test]
    fn unknown_fields_ignored_on_read() {
        let env = decode(br#"{"type":"error","code":"x","message":"y","extra":[1,2,3]}"#).unwrap();
        assert_eq!(env.encode(), "{\"type\":\"error\",\"code\":\"x\",\"message\":\"y\"}\n");
    }

    #[test]
    fn event_keeps_kind_fields_in_order() {
        let ev = Event::command_accepted(
            "u1",
            "move_to",
            Some(Side::Left),
            "🤩",
            BehaviorModifiers::NEUTRAL,
            12,
            12,
        );
        let env = Envelope::Event(ev.clone());
        let line = env.encode();
        assert!(line.starts_with(r#"{"type":"event","kind":"command_accepted","utterance_id":"u1","#));
        assert_eq!(line.matches('\n').count(), 1);
        let back = decode(line.as_bytes()).unwrap();
        assert_eq!(back, env);
        assert_eq!(ev.field::<Side>("target"), Some(Side::Left));
        assert_eq!(ev.field::<u64>("tick"), Some(12));
    }

    #[test]
    fn null_utterance_id_is_emitted() {
        let line = Envelope::Event(Event::new("x", None)).encode();
        assert_eq!(line, "{\"type\":\"event\",\"kind\":\"x\",\"utterance_id\":null}\n");
    }

    #[test]
    fn newlines_in_strings_stay_on_one_line() {
        let env = Envelope::error("c", "line one\nline two");
        let line = env.encode();
        assert_eq!(line.matches('\n').count(), 1);
        assert_eq!(decode(line.as_bytes()).unwrap(), env);
    }

    #[test]
    fn state_shape() {
        let env = Envelope::State(State {
            tick: 3,
            time_s: 0.05,
            agents: vec![AgentSnapshot {
                id: AgentId::Standard,
                x: 200.0,
                y: 500.0,
                vx: 0.0,
                vy: 0.0,
                target: None,
                emoji: "😐".into(),
                light: false,
                arrived: false,
            }],
        });
        let line = env.encode();
        assert_eq!(
            line,
            "{\"type\":\"state\",\"tick\":3,\"time_s\":0.05,\"agents\":[{\"id\":\"standard\",\"x\":200.0,\"y\":500.0,\"vx\":0.0,\"vy\":0.0,\"target\":null,\"emoji\":\"😐\",\"light\":false,\"arrived\":false}]}\n"
        );
    }

    #[test]
    fn welcome_shape() {
        let env = Envelope::Welcome(Welcome {
            session: "s".into(),
            world: WorldGeometry::from(&WorldConfig::default()),
        });
        assert_eq!(
            env.encode(),
            "{\"type\":\"welcome\",\"session\":\"s\",\"world\":{\"width\":2500.0,\"height\":1300.0,\"left_target\":[200.0,650.0],\"right_target\":[2300.0,650.0]}}\n"
        );
    }
}
