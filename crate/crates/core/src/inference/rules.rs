//! Rule file loading.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DeviceType, Resolution};

pub const DEFAULT_RULES: &str = include_str!("../../data/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleDirection {
    #[serde(rename = "ZC->ZED")]
    ZcToZed,
    /// Coordinator to any end device or router.
    #[serde(rename = "ZC->D")]
    ZcToDevice,
    #[serde(rename = "ZED->ZC")]
    ZedToZc,
}

impl fmt::Display for RuleDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleDirection::ZcToZed => "ZC->ZED",
            RuleDirection::ZcToDevice => "ZC->D",
            RuleDirection::ZedToZc => "ZED->ZC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    ResponseIn(Vec<u16>),
    ResponseNotIn(Vec<u16>),
    PrecedingNot { len: u16, broadcast_only: bool },
    RequiresNetworkDiscovery,
    ExcludesBroadcastLen(u16),
    ZoneStatusCount(usize),
    BurstRepeats(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Yield {
    pub command: String,
    pub device_type: DeviceType,
    pub event: String,
    pub dt: Resolution,
    pub et: Resolution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRule {
    pub id: String,
    pub direction: RuleDirection,
    pub target_len: u16,
    pub conditions: Vec<Condition>,
    pub yields: Yield,
}

impl InferenceRule {
    pub fn requires_repeat(&self) -> bool {
        self.conditions.contains(&Condition::BurstRepeats(true))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleParseError {
    #[error("rule file line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read rule file: {0}")]
    Io(String),
}

impl RuleParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            RuleParseError::Syntax { line, .. } => Some(*line),
            RuleParseError::Io(_) => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<toml::Spanned<RuleRecord>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Preceding {
    len: u16,
    #[serde(default)]
    broadcast: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    direction: RuleDirection,
    target_len: u16,
    response_in: Option<Vec<u16>>,
    response_not_in: Option<Vec<u16>>,
    preceding_not: Option<Preceding>,
    #[serde(default)]
    network_discovery: bool,
    excludes_broadcast_len: Option<u16>,
    zone_status_count: Option<usize>,
    burst_repeats: Option<bool>,
    command: String,
    device_type: String,
    event: String,
    dt: Resolution,
    et: Resolution,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<InferenceRule>,
}

impl RuleSet {
    pub fn load(path: impl AsRef<Path>) -> Result<RuleSet, RuleParseError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RuleParseError::Io(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InferenceRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn extend(&mut self, other: RuleSet) -> Result<(), RuleParseError> {
        for r in other.rules {
            if self.get(&r.id).is_some() {
                return Err(RuleParseError::Syntax {
                    line: 0,
                    message: format!("duplicate rule id `{}`", r.id),
                });
            }
            self.rules.push(r);
        }
        Ok(())
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        DEFAULT_RULES.parse().expect("bundled rule file is valid")
    }
}

impl FromStr for RuleSet {
    type Err = RuleParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let file: RuleFile = toml::from_str(text).map_err(|e| RuleParseError::Syntax {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut seen = HashSet::new();
        let mut rules = Vec::with_capacity(file.rule.len());
        for spanned in file.rule {
            let line = line_of(text, spanned.span().start);
            let r = spanned.into_inner();
            let err = |message: String| RuleParseError::Syntax { line, message };
            if !seen.insert(r.id.clone()) {
                return Err(err(format!("duplicate rule id `{}`", r.id)));
            }
            if !(11..=17).contains(&r.target_len) {
                return Err(err(format!("target_len {} outside 11..=17", r.target_len)));
            }
            if r.command.is_empty() || r.event.is_empty() {
                return Err(err("yields must be non-empty".into()));
            }
            let device_type: DeviceType = r.device_type.parse().map_err(err)?;
            let mut conditions = Vec::new();
            if let Some(v) = r.response_in {
                conditions.push(Condition::ResponseIn(v));
            }
            if let Some(v) = r.response_not_in {
                conditions.push(Condition::ResponseNotIn(v));
            }
            if let Some(p) = r.preceding_not {
                conditions.push(Condition::PrecedingNot {
                    len: p.len,
                    broadcast_only: p.broadcast,
                });
            }
            if r.network_discovery {
                conditions.push(Condition::RequiresNetworkDiscovery);
            }
            if let Some(v) = r.excludes_broadcast_len {
                conditions.push(Condition::ExcludesBroadcastLen(v));
            }
            if let Some(n) = r.zone_status_count {
                conditions.push(Condition::ZoneStatusCount(n));
            }
            if let Some(b) = r.burst_repeats {
                conditions.push(Condition::BurstRepeats(b));
            }
            rules.push(InferenceRule {
                id: r.id,
                direction: r.direction,
                target_len: r.target_len,
                conditions,
                yields: Yield {
                    command: r.command,
                    device_type,
                    event: r.event,
                    dt: r.dt,
                    et: r.et,
                },
            });
        }
        Ok(RuleSet { rules })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_eight_rows() {
        let r = RuleSet::default();
        assert_eq!(r.len(), 8);
        assert!(r.rules.iter().all(|r| (11..=17).contains(&r.target_len)));
    }

    #[test]
    fn empty_file_is_empty_set() {
        assert!("".parse::<RuleSet>().unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_reports_second_record_line() {
        let one = "[[rule]]\nid = \"a\"\ndirection = \"ZC->D\"\ntarget_len = 11\ncommand = \"c\"\n\
                   device_type = \"Bulb\"\nevent = \"e\"\ndt = \"identified\"\net = \"identified\"\n";
        let text = format!("{one}\n{one}");
        let err = text.parse::<RuleSet>().unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        assert_eq!(err.line(), Some(11));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = "[[rule]]\nid = \"a\"\ntarget_len = \n".parse::<RuleSet>().unwrap_err();
        assert_eq!(err.line(), Some(3));
    }

    #[test]
    fn out_of_range_target_rejected() {
        let text = "[[rule]]\nid = \"a\"\ndirection = \"ZC->D\"\ntarget_len = 20\ncommand = \"c\"\n\
                    device_type = \"Bulb\"\nevent = \"e\"\ndt = \"identified\"\net = \"identified\"\n";
        assert!(text.parse::<RuleSet>().is_err());
    }
}
