//! Emotion data model and the mapping from speech emotion to behavior.
//!
//! A [`VadTriple`] is one valence/arousal/dominance sample in the unit cube,
//! produced once per utterance. [`map_vad`] turns it into the
//! [`BehaviorModifiers`] the affective vehicle flies with, and
//! [`EmojiTable::classify`] picks the emoji it displays.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Neutral value of every VAD dimension.
pub const NEUTRAL_LEVEL: f64 = 0.5;

const SPEED_SCALE_RANGE: (f64, f64) = (0.4, 1.6);
const FORCE_SCALE_RANGE: (f64, f64) = (0.5, 1.5);

/// Squared distances closer than this are treated as ties.
const TIE_EPSILON: f64 = 1e-12;

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        NEUTRAL_LEVEL
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Valence, arousal and dominance, each in `[0, 1]` with `0.5` neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawVad", into = "RawVad")]
pub struct VadTriple {
    valence: f64,
    arousal: f64,
    dominance: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVad {
    valence: f64,
    arousal: f64,
    dominance: f64,
}

impl From<RawVad> for VadTriple {
    fn from(raw: RawVad) -> Self {
        Self::new(raw.valence, raw.arousal, raw.dominance)
    }
}

impl From<VadTriple> for RawVad {
    fn from(vad: VadTriple) -> Self {
        Self {
            valence: vad.valence,
            arousal: vad.arousal,
            dominance: vad.dominance,
        }
    }
}

impl VadTriple {
    pub const NEUTRAL: Self = Self {
        valence: NEUTRAL_LEVEL,
        arousal: NEUTRAL_LEVEL,
        dominance: NEUTRAL_LEVEL,
    };

    /// Builds a triple, clamping each component into `[0, 1]`. NaN becomes neutral.
    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Self {
        Self {
            valence: clamp_unit(valence),
            arousal: clamp_unit(arousal),
            dominance: clamp_unit(dominance),
        }
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn arousal(&self) -> f64 {
        self.arousal
    }

    pub fn dominance(&self) -> f64 {
        self.dominance
    }
}

impl Default for VadTriple {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

/// How the affective vehicle deviates from the standard one for a command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModifiers {
    pub speed_scale: f64,
    pub force_scale: f64,
    /// Vertical launch kick in px/s. Negative is screen-up.
    pub impulse_vy: f64,
}

impl BehaviorModifiers {
    pub const NEUTRAL: Self = Self {
        speed_scale: 1.0,
        force_scale: 1.0,
        impulse_vy: 0.0,
    };
}

impl Default for BehaviorModifiers {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

/// Constants of the VAD to behavior mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    pub speed_base: f64,
    pub speed_gain: f64,
    pub force_base: f64,
    pub force_gain: f64,
    pub impulse_gain: f64,
    pub valence_weight: f64,
    pub dominance_weight: f64,
    pub impulse_cap: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            speed_base: 0.4,
            speed_gain: 1.2,
            force_base: 0.5,
            force_gain: 1.0,
            impulse_gain: 800.0,
            valence_weight: 1.0,
            dominance_weight: 0.5,
            impulse_cap: 600.0,
        }
    }
}

impl MappingParams {
    /// Checks that every field is finite, gains are nonnegative and the cap is positive.
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("speed_base", self.speed_base),
            ("speed_gain", self.speed_gain),
            ("force_base", self.force_base),
            ("force_gain", self.force_gain),
            ("impulse_gain", self.impulse_gain),
            ("valence_weight", self.valence_weight),
            ("dominance_weight", self.dominance_weight),
            ("impulse_cap", self.impulse_cap),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(format!("mapping.{name} must be finite"));
            }
        }
        for (name, value) in [
            ("speed_gain", self.speed_gain),
            ("force_gain", self.force_gain),
            ("impulse_gain", self.impulse_gain),
        ] {
            if value < 0.0 {
                return Err(format!("mapping.{name} must be >= 0"));
            }
        }
        if self.impulse_cap <= 0.0 {
            return Err("mapping.impulse_cap must be > 0".into());
        }
        Ok(())
    }
}

/// Maps one emotion sample to behavior modifiers.
///
/// Arousal drives speed and force affinely; valence and dominance, weighted,
/// drive a signed vertical kick. High valence/dominance veers screen-up.
pub fn map_vad(vad: VadTriple, params: &MappingParams) -> BehaviorModifiers {
    let speed_scale =
        (params.speed_base + params.speed_gain * vad.arousal).clamp(SPEED_SCALE_RANGE.0, SPEED_SCALE_RANGE.1);
    let force_scale =
        (params.force_base + params.force_gain * vad.arousal).clamp(FORCE_SCALE_RANGE.0, FORCE_SCALE_RANGE.1);
    let lift = params.impulse_gain
        * (params.valence_weight * (vad.valence - NEUTRAL_LEVEL)
            + params.dominance_weight * (vad.dominance - NEUTRAL_LEVEL));
    let impulse_vy = -lift.clamp(-params.impulse_cap, params.impulse_cap);
    BehaviorModifiers {
        speed_scale,
        force_scale,
        // normalise -0.0 so that neutral input yields exactly 0.0
        impulse_vy: if impulse_vy == 0.0 { 0.0 } else { impulse_vy },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmojiCentroid {
    pub label: String,
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmojiTableError {
    #[error("malformed emoji table: {0}")]
    MalformedTable(String),
    #[error("invalid emoji table: {0}")]
    InvalidTable(String),
}

impl EmojiTableError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MalformedTable(_) => "malformed_table",
            Self::InvalidTable(_) => "invalid_table",
        }
    }
}

#[derive(Clone, Deserialize, Serialize)]
struct RawTable {
    neutral_index: i64,
    centroids: Vec<EmojiCentroid>,
}

static DEFAULT_TABLE_JSON: &str = include_str!("../assets/emoji_table.json");

/// Nearest-centroid emoji classifier over the valence/arousal plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct EmojiTable {
    centroids: Vec<EmojiCentroid>,
    neutral_index: usize,
}

impl EmojiTable {
    /// Parses and validates a table from JSON bytes.
    pub fn from_json(bytes: &[u8]) -> Result<Self, EmojiTableError> {
        let raw: RawTable =
            serde_json::from_slice(bytes).map_err(|e| EmojiTableError::MalformedTable(e.to_string()))?;
        Self::new(raw.centroids, raw.neutral_index)
    }

    /// Validates an in-memory table.
    pub fn new(centroids: Vec<EmojiCentroid>, neutral_index: i64) -> Result<Self, EmojiTableError> {
        if centroids.is_empty() {
            return Err(EmojiTableError::InvalidTable(
                "centroids: at least one centroid required".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (i, c) in centroids.iter().enumerate() {
            for (axis, value) in [("valence", c.valence), ("arousal", c.arousal)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(EmojiTableError::InvalidTable(format!(
                        "centroids[{i}] ({:?}): {axis} {value} outside [0,1]",
                        c.label
                    )));
                }
            }
            if !seen.insert(c.label.as_str()) {
                return Err(EmojiTableError::InvalidTable(format!(
                    "centroids[{i}]: duplicate label {:?}",
                    c.label
                )));
            }
        }
        let neutral_index = usize::try_from(neutral_index)
            .ok()
            .filter(|&i| i < centroids.len())
            .ok_or_else(|| {
                EmojiTableError::InvalidTable(format!(
                    "neutral_index {neutral_index} out of range for {} centroids",
                    centroids.len()
                ))
            })?;
        let neutral = &centroids[neutral_index];
        if neutral.valence != NEUTRAL_LEVEL || neutral.arousal != NEUTRAL_LEVEL {
            return Err(EmojiTableError::InvalidTable(format!(
                "centroids[{neutral_index}] ({:?}): neutral centroid must sit at (0.5, 0.5)",
                neutral.label
            )));
        }
        Ok(Self {
            centroids,
            neutral_index,
        })
    }

    /// Returns the label of the closest centroid; dominance is ignored and
    /// ties (within rounding) go to the lowest index.
    pub fn classify(&self, vad: VadTriple) -> &str {
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let dv = vad.valence - c.valence;
            let da = vad.arousal - c.arousal;
            let d2 = dv * dv + da * da;
            if d2 < best_d2 - TIE_EPSILON {
                best = i;
                best_d2 = d2;
            }
        }
        &self.centroids[best].label
    }

    pub fn neutral_label(&self) -> &str {
        &self.centroids[self.neutral_index].label
    }

    pub fn neutral_index(&self) -> usize {
        self.neutral_index
    }

    pub fn centroids(&self) -> &[EmojiCentroid] {
        &self.centroids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("emoji table serializes")
    }
}

impl TryFrom<RawTable> for EmojiTable {
    type Error = EmojiTableError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        Self::new(raw.centroids, raw.neutral_index)
    }
}

impl From<EmojiTable> for RawTable {
    fn from(table: EmojiTable) -> Self {
        Self {
            neutral_index: table.neutral_index as i64,
            centroids: table.centroids,
        }
    }
}

impl Default for EmojiTable {
    /// The shipped 22-entry table.
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE_JSON.as_bytes()).expect("shipped emoji table is valid")
    }
}

/// Free-function form of [`EmojiTable::classify`].
pub fn classify_emoji(vad: VadTriple, table: &EmojiTable) -> &str {
    table.classify(vad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults() -> MappingParams {
        MappingParams::default()
    }

    #[test]
    fn neutral_maps_to_identity() {
        let m = map_vad(VadTriple::NEUTRAL, &defaults());
        assert_eq!(m, BehaviorModifiers::NEUTRAL);
        assert!(m.impulse_vy.is_sign_positive());
    }

    #[test]
    fn arousal_extreme() {
        let m = map_vad(VadTriple::new(0.5, 1.0, 0.5), &defaults());
        assert!((m.speed_scale - 1.6).abs() < 1e-12);
        assert!((m.force_scale - 1.5).abs() < 1e-12);
        assert_eq!(m.impulse_vy, 0.0);
    }

    #[test]
    fn high_valence_veers_up() {
        let m = map_vad(VadTriple::new(0.9, 0.5, 0.5), &defaults());
        assert!((m.impulse_vy - -320.0).abs() < 1e-9);
        assert_eq!(m.speed_scale, 1.0);
    }

    #[test]
    fn low_valence_high_dominance_veers_down() {
        // hand evaluation: 800 * (1.0 * (0.1 - 0.5) + 0.5 * (0.9 - 0.5)) = 800 * -0.2 = -160
        let m = map_vad(VadTriple::new(0.1, 0.5, 0.9), &defaults());
        assert!((m.impulse_vy - 160.0).abs() < 1e-9);
    }

    #[test]
    fn impulse_is_capped() {
        let params = MappingParams {
            impulse_gain: 5000.0,
            ..defaults()
        };
        assert_eq!(map_vad(VadTriple::new(1.0, 0.5, 1.0), &params).impulse_vy, -600.0);
        assert_eq!(map_vad(VadTriple::new(0.0, 0.5, 0.0), &params).impulse_vy, 600.0);
    }

    #[test]
    fn constructor_clamps() {
        let v = VadTriple::new(-3.0, 7.0, f64::NAN);
        assert_eq!((v.valence(), v.arousal(), v.dominance()), (0.0, 1.0, 0.5));
        let v = VadTriple::new(f64::NEG_INFINITY, f64::INFINITY, 0.25);
        assert_eq!((v.valence(), v.arousal(), v.dominance()), (0.0, 1.0, 0.25));
    }

    #[test]
    fn vad_deserialization_clamps() {
        let v: VadTriple = serde_json::from_str(r#"{"valence":1.5,"arousal":-1,"dominance":0.2}"#).unwrap();
        assert_eq!(v, VadTriple::new(1.0, 0.0, 0.2));
    }

    #[test]
    fn mapping_params_validation() {
        assert!(defaults().validate().is_ok());
        let bad = MappingParams {
            speed_gain: -1.0,
            ..defaults()
        };
        assert!(bad.validate().unwrap_err().contains("speed_gain"));
        let bad = MappingParams {
            impulse_cap: 0.0,
            ..defaults()
        };
        assert!(bad.validate().is_err());
        let bad = MappingParams {
            force_base: f64::NAN,
            ..defaults()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_table_round_trips_through_loader() {
        let table = EmojiTable::default();
        assert_eq!(table.centroids().len(), 22);
        let neutral = &table.centroids()[table.neutral_index()];
        assert_eq!((neutral.valence, neutral.arousal), (0.5, 0.5));
        let reloaded = EmojiTable::from_json(table.to_json().as_bytes()).unwrap();
        assert_eq!(reloaded, table);
    }

    #[test]
    fn neutral_vad_classifies_neutral() {
        let table = EmojiTable::default();
        for d in [0.0, 0.5, 1.0] {
            assert_eq!(table.classify(VadTriple::new(0.5, 0.5, d)), table.neutral_label());
        }
    }

    #[test]
    fn exact_centroid_hits_its_label() {
        let table = EmojiTable::default();
        for c in table.centroids() {
            assert_eq!(table.classify(VadTriple::new(c.valence, c.arousal, 0.5)), c.label);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let table = EmojiTable::new(
            vec![
                EmojiCentroid {
                    label: "n".into(),
                    valence: 0.5,
                    arousal: 0.5,
                },
                EmojiCentroid {
                    label: "a".into(),
                    valence: 0.25,
                    arousal: 0.25,
                },
                EmojiCentroid {
                    label: "b".into(),
                    valence: 0.75,
                    arousal: 0.25,
                },
            ],
            0,
        )
        .unwrap();
        // equidistant from "a" and "b", farther from "n"
        assert_eq!(table.classify(VadTriple::new(0.5, 0.0, 0.5)), "a");
    }

    #[test]
    fn loader_rejects_duplicates() {
        let json = r#"{"neutral_index":0,"centroids":[
            {"label":"x","valence":0.5,"arousal":0.5},
            {"label":"x","valence":0.1,"arousal":0.1}]}"#;
        let err = EmojiTable::from_json(json.as_bytes()).unwrap_err();
        assert!(matches!(err, EmojiTableError::InvalidTable(ref m) if m.contains("centroids[1]")));
    }

    #[test]
    fn loader_rejects_empty() {
        let err = EmojiTable::from_json(br#"{"neutral_index":0,"centroids":[]}"#).unwrap_err();
        assert!(matches!(err, EmojiTableError::InvalidTable(_)));
    }

    #[test]
    fn loader_rejects_out_of_range_and_bad_neutral() {
        let json = br#"{"neutral_index":0,"centroids":[{"label":"x","valence":0.5,"arousal":1.2}]}"#;
        assert!(matches!(
            EmojiTable::from_json(json).unwrap_err(),
            EmojiTableError::InvalidTable(ref m) if m.contains("arousal")
        ));
        let json = br#"{"neutral_index":3,"centroids":[{"label":"x","valence":0.5,"arousal":0.5}]}"#;
        assert!(matches!(
            EmojiTable::from_json(json).unwrap_err(),
            EmojiTableError::InvalidTable(ref m) if m.contains("neutral_index")
        ));
        let json = br#"{"neutral_index":0,"centroids":[{"label":"x","valence":0.4,"arousal":0.5}]}"#;
        assert!(matches!(
            EmojiTable::from_json(json).unwrap_err(),
            EmojiTableError::InvalidTable(_)
        ));
    }

    #[test]
    fn loader_rejects_garbage() {
        assert!(matches!(
            EmojiTable::from_json(b"{nope").unwrap_err(),
            EmojiTableError::MalformedTable(_)
        ));
        assert!(matches!(
            EmojiTable::from_json(br#"{"centroids":[]}"#).unwrap_err(),
            EmojiTableError::MalformedTable(_)
        ));
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0..=1.0f64
    }

    proptest! {
        #[test]
        fn speed_and_force_monotone_in_arousal(v in unit(), d in unit(), a1 in unit(), a2 in unit()) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let p = defaults();
            let m1 = map_vad(VadTriple::new(v, lo, d), &p);
            let m2 = map_vad(VadTriple::new(v, hi, d), &p);
            prop_assert!(m1.speed_scale <= m2.speed_scale);
            prop_assert!(m1.force_scale <= m2.force_scale);
        }

        #[test]
        fn outputs_bounded_and_finite(v in unit(), a in unit(), d in unit()) {
            let m = map_vad(VadTriple::new(v, a, d), &defaults());
            prop_assert!(m.speed_scale.is_finite() && (0.4..=1.6).contains(&m.speed_scale));
            prop_assert!(m.force_scale.is_finite() && (0.5..=1.5).contains(&m.force_scale));
            prop_assert!(m.impulse_vy.is_finite() && m.impulse_vy.abs() <= 600.0);
        }

        #[test]
        fn impulse_sign_and_antisymmetry(v in unit(), a in unit(), d in unit()) {
            let p = defaults();
            let m = map_vad(VadTriple::new(v, a, d), &p);
            let mirrored = map_vad(VadTriple::new(1.0 - v, a, 1.0 - d), &p);
            let lift = p.valence_weight * (v - 0.5) + p.dominance_weight * (d - 0.5);
            if lift > 0.0 {
                prop_assert!(m.impulse_vy < 0.0);
            } else if lift < 0.0 {
                prop_assert!(m.impulse_vy > 0.0);
            } else {
                prop_assert_eq!(m.impulse_vy, 0.0);
            }
            prop_assert!((m.impulse_vy + mirrored.impulse_vy).abs() <= 1e-9);
        }
    }
}
