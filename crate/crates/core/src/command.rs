//! Keyword detection over recognized transcripts.

use serde::{Deserialize, Serialize};

/// One of the two targets at the ends of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentKind {
    MoveTo(Side),
    LightOn,
    NoCommand,
}

/// The parsed command. Keyword and offset are present exactly when a command was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandIntent {
    kind: IntentKind,
    matched: Option<(String, usize)>,
}

impl CommandIntent {
    pub fn no_command() -> Self {
        Self {
            kind: IntentKind::NoCommand,
            matched: None,
        }
    }

    pub fn move_to(side: Side, keyword: impl Into<String>, offset: usize) -> Self {
        Self {
            kind: IntentKind::MoveTo(side),
            matched: Some((keyword.into(), offset)),
        }
    }

    pub fn light_on(keyword: impl Into<String>, offset: usize) -> Self {
        Self {
            kind: IntentKind::LightOn,
            matched: Some((keyword.into(), offset)),
        }
    }

    pub fn kind(&self) -> IntentKind {
        self.kind
    }

    pub fn target(&self) -> Option<Side> {
        match self.kind {
            IntentKind::MoveTo(side) => Some(side),
            _ => None,
        }
    }

    pub fn matched_keyword(&self) -> Option<&str> {
        self.matched.as_ref().map(|(k, _)| k.as_str())
    }

    /// Character index of the match in the space-joined normalized transcript.
    pub fn match_offset(&self) -> Option<usize> {
        self.matched.as_ref().map(|&(_, o)| o)
    }

    pub fn is_command(&self) -> bool {
        self.kind != IntentKind::NoCommand
    }
}

/// Lowercases, turns every non-alphanumeric character into a separator and splits.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn target_vote(token: &str) -> Option<Side> {
    match token {
        "red" | "circle" | "left" => Some(Side::Left),
        "blue" | "square" | "right" => Some(Side::Right),
        _ => None,
    }
}

/// Extracts the command from a transcript.
///
/// The last target keyword wins. Without any target keyword, the presence of
/// both `light` and `on` yields a light command.
pub fn parse_transcript(text: &str) -> CommandIntent {
    let tokens = normalize(text);

    let mut offset = 0;
    let mut last_target = None;
    let mut light_at = None;
    let mut saw_on = false;
    for token in &tokens {
        if let Some(side) = target_vote(token) {
            last_target = Some((side, token.as_str(), offset));
        }
        match token.as_str() {
            "light" if light_at.is_none() => light_at = Some(offset),
            "on" => saw_on = true,
            _ => {}
        }
        offset += token.chars().count() + 1;
    }

    if let Some((side, keyword, at)) = last_target {
        return CommandIntent::move_to(side, keyword, at);
    }
    match light_at {
        Some(at) if saw_on => CommandIntent::light_on("light", at),
        _ => CommandIntent::no_command(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_excited_phrase() {
        assert_eq!(
            normalize("Move to the RED circle, go go go!"),
            ["move", "to", "the", "red", "circle", "go", "go", "go"]
        );
    }

    #[test]
    fn normalizes_empty_and_odd_punctuation() {
        assert!(normalize("").is_empty());
        assert!(normalize("  ?!  ").is_empty());
        assert_eq!(normalize("Don´t defy me!"), ["don", "t", "defy", "me"]);
    }

    #[test]
    fn excited_red_circle_goes_left() {
        let intent = parse_transcript("Move to the red circle, go go go!");
        assert_eq!(intent.kind(), IntentKind::MoveTo(Side::Left));
        assert_eq!(intent.matched_keyword(), Some("circle"));
        // "move to the red " is 16 chars
        assert_eq!(intent.match_offset(), Some(16));
    }

    #[test]
    fn light_phrase() {
        let intent = parse_transcript("turn on the light");
        assert_eq!(intent.kind(), IntentKind::LightOn);
        assert_eq!(intent.matched_keyword(), Some("light"));
        assert_eq!(intent.match_offset(), Some(12));
    }

    #[test]
    fn self_correction_takes_last_keyword() {
        let intent = parse_transcript("go to the red, no wait, the blue one");
        assert_eq!(intent.kind(), IntentKind::MoveTo(Side::Right));
        assert_eq!(intent.matched_keyword(), Some("blue"));
    }

    #[test]
    fn chit_chat_is_no_command() {
        let intent = parse_transcript("hello there, how are you");
        assert_eq!(intent, CommandIntent::no_command());
        assert_eq!(intent.matched_keyword(), None);
        assert_eq!(intent.match_offset(), None);
    }

    #[test]
    fn turn_around_to_blue() {
        assert_eq!(
            parse_transcript("Please turn around and go to blue. Go, go, go!").target(),
            Some(Side::Right)
        );
    }

    #[test]
    fn targets_beat_light() {
        assert_eq!(
            parse_transcript("light on and go left").kind(),
            IntentKind::MoveTo(Side::Left)
        );
    }

    #[test]
    fn no_stemming() {
        assert_eq!(parse_transcript("squares and circles").kind(), IntentKind::NoCommand);
        assert_eq!(parse_transcript("turn on the lights").kind(), IntentKind::NoCommand);
        assert_eq!(parse_transcript("light it up").kind(), IntentKind::NoCommand);
    }

    proptest! {
        #[test]
        fn case_insensitive(s in "[A-Za-z ,.!?]{0,40}") {
            prop_assert_eq!(parse_transcript(&s), parse_transcript(&s.to_lowercase()));
        }

        #[test]
        fn appended_keyword_overrides(s in "[a-z ,.]{0,40}", kw in prop::sample::select(vec!["red", "blue", "left", "right", "circle", "square"])) {
            let intent = parse_transcript(&format!("{s} {kw}"));
            prop_assert_eq!(intent.target(), target_vote(kw));
            prop_assert_eq!(intent.matched_keyword(), Some(kw));
        }

        #[test]
        fn keyword_and_offset_point_into_normalized_text(s in "[a-zA-Z ,.!]{0,60}") {
            let intent = parse_transcript(&s);
            let joined = normalize(&s).join(" ");
            match (intent.matched_keyword(), intent.match_offset()) {
                (Some(k), Some(o)) => {
                    let tail: String = joined.chars().skip(o).collect();
                    prop_assert!(tail.starts_with(k));
                }
                (None, None) => prop_assert!(!intent.is_command()),
                _ => prop_assert!(false, "keyword/offset presence mismatch"),
            }
        }
    }
}
