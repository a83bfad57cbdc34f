//! Networked side of emocmd: the session hub and a scripted stand-in for the
//! speech recognizer.
//!
//! Recognizers talk NDJSON over TCP; UIs send the same JSON one envelope per
//! WebSocket text frame.

pub mod mock;
pub mod server;

pub use mock::{echo_audio_mode, run_script, MockError, Pacing};
pub use server::{Hub, HubError, TickDriver, TickMode};
