//! Functionality-specific command inference, manufacturer lookup and scoring.

mod engine;
mod oui;
mod rules;

pub(crate) use engine::zone_status_count as engine_zone_status_count;
pub use engine::{
    candidate_frame, infer_command, AmbiguousMatch, BurstContext, RuleMatch, CANDIDATE_MAX_LEN,
    CANDIDATE_MIN_LEN,
};
pub use oui::{lookup_manufacturer, Manufacturer, OuiClass, OuiParseError, OuiRecord, OuiTable};
pub use rules::{Condition, InferenceRule, RuleDirection, RuleParseError, RuleSet, Yield};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceType {
    DoorLock,
    Outlet,
    Bulb,
    OutletOrBulb,
    MotionSensor,
    DoorSensor,
    FloodSensor,
    AudioSensor,
    Unknown,
}

impl DeviceType {
    pub const ALL: [DeviceType; 9] = [
        DeviceType::DoorLock,
        DeviceType::Outlet,
        DeviceType::Bulb,
        DeviceType::OutletOrBulb,
        DeviceType::MotionSensor,
        DeviceType::DoorSensor,
        DeviceType::FloodSensor,
        DeviceType::AudioSensor,
        DeviceType::Unknown,
    ];

    /// Resolves an outlet-or-bulb verdict once the node is known to be a bulb.
    pub fn refine(self, known: Option<DeviceType>) -> DeviceType {
        match (self, known) {
            (DeviceType::OutletOrBulb, Some(DeviceType::Bulb)) => DeviceType::Bulb,
            _ => self,
        }
    }

    /// Whether a verdict of `self` is consistent with a device that really is `actual`.
    pub fn covers(self, actual: DeviceType) -> bool {
        self == actual
            || (self == DeviceType::OutletOrBulb
                && matches!(actual, DeviceType::Outlet | DeviceType::Bulb))
    }

    /// Coarse specificity rank: refinement may only increase it.
    pub fn specificity(self) -> u8 {
        match self {
            DeviceType::Unknown => 0,
            DeviceType::OutletOrBulb => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for DeviceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceType::ALL
            .into_iter()
            .find(|d| d.to_string() == s)
            .ok_or_else(|| format!("unknown device type `{s}`"))
    }
}

/// How precisely an attribute was recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Unidentified,
    Uncertain,
    Indistinct,
    Identified,
}

impl Resolution {
    pub fn weight(self) -> f64 {
        match self {
            Resolution::Unidentified => 0.0,
            Resolution::Uncertain => 1.0,
            Resolution::Indistinct => 1.5,
            Resolution::Identified => 2.0,
        }
    }

    pub fn from_weight(w: f64) -> Option<Resolution> {
        [
            Resolution::Unidentified,
            Resolution::Uncertain,
            Resolution::Indistinct,
            Resolution::Identified,
        ]
        .into_iter()
        .find(|r| r.weight() == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub m: f64,
    pub dt: f64,
    pub et: f64,
    pub total: f64,
}

impl ScoreBreakdown {
    pub const ZERO: ScoreBreakdown = ScoreBreakdown {
        m: 0.0,
        dt: 0.0,
        et: 0.0,
        total: 0.0,
    };
}

impl fmt::Display for ScoreBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M={} DT={} ET={} Score={}", self.m, self.dt, self.et, self.total)
    }
}

/// Device score: one point for a real-vendor OUI plus the device-type and event weights.
pub fn score(dt: Resolution, et: Resolution, klass: Option<OuiClass>) -> ScoreBreakdown {
    let m = if klass == Some(OuiClass::Real) { 1.0 } else { 0.0 };
    let (dt, et) = (dt.weight(), et.weight());
    ScoreBreakdown {
        m,
        dt,
        et,
        total: m + dt + et,
    }
}

/// Sensor subtype from the number of Zone Status frames in a burst and whether it repeats.
pub fn classify_zone_status(count: usize, repeats: bool) -> (DeviceType, &'static str) {
    match (count, repeats) {
        (1, true) => (DeviceType::MotionSensor, "motion"),
        (1, false) => (DeviceType::DoorSensor, "open|close"),
        (2, _) => (DeviceType::FloodSensor, "water leakage"),
        (3, _) => (DeviceType::AudioSensor, "audio detected"),
        _ => (DeviceType::Unknown, "unknown"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    /// Timestamp of the candidate frame, seconds.
    pub timestamp: f64,
    pub rule_id: String,
    pub command: String,
    pub device_type: DeviceType,
    pub event: String,
    pub manufacturer: Option<Manufacturer>,
    pub score: ScoreBreakdown,
    /// Capture index of the candidate frame.
    pub candidate: usize,
    /// Capture indices of every frame in the burst (and its absorbed repeat).
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Several rules fired on one candidate; nothing was emitted.
    AmbiguousMatch {
        #[serde(with = "crate::addr::short_hex")]
        node: u16,
        timestamp: f64,
        candidate: usize,
        rules: Vec<String>,
        score: ScoreBreakdown,
    },
    /// A Zone Status burst whose frame count no rule covers.
    UnknownSensor {
        #[serde(with = "crate::addr::short_hex")]
        node: u16,
        timestamp: f64,
        candidate: usize,
        count: usize,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_on_real_oui_is_five() {
        let s = score(Resolution::Identified, Resolution::Identified, Some(OuiClass::Real));
        assert_eq!((s.m, s.dt, s.et, s.total), (1.0, 2.0, 2.0, 5.0));
    }

    #[test]
    fn onoff_on_soc_is_three() {
        let s = score(Resolution::Indistinct, Resolution::Indistinct, Some(OuiClass::Soc));
        assert_eq!(s.total, 3.0);
    }

    #[test]
    fn nothing_inferred_is_zero() {
        let s = score(Resolution::Unidentified, Resolution::Unidentified, None);
        assert_eq!(s, ScoreBreakdown::ZERO);
    }

    #[test]
    fn zone_status_counts() {
        assert_eq!(classify_zone_status(1, true).0, DeviceType::MotionSensor);
        assert_eq!(classify_zone_status(1, false).0, DeviceType::DoorSensor);
        assert_eq!(classify_zone_status(2, false).0, DeviceType::FloodSensor);
        assert_eq!(classify_zone_status(3, true).0, DeviceType::AudioSensor);
        assert_eq!(classify_zone_status(4, false).0, DeviceType::Unknown);
    }

    #[test]
    fn refine_only_upgrades_outlet_or_bulb() {
        assert_eq!(DeviceType::OutletOrBulb.refine(Some(DeviceType::Bulb)), DeviceType::Bulb);
        assert_eq!(DeviceType::Bulb.refine(Some(DeviceType::OutletOrBulb)), DeviceType::Bulb);
        assert_eq!(DeviceType::OutletOrBulb.refine(None), DeviceType::OutletOrBulb);
    }

    #[test]
    fn device_type_round_trips_through_text() {
        for d in DeviceType::ALL {
            assert_eq!(d.to_string().parse::<DeviceType>().unwrap(), d);
        }
    }
}
