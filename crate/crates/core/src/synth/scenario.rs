//! Scenario configuration.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::ExtAddr;
use crate::mapper::COORDINATOR;

use super::model::{self, DeviceModel, EventKind, HubKind};

/// Room left after the last event start for its repeat and any poll-delayed delivery, seconds.
pub(crate) const EVENT_TAIL: f64 = 8.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Countermeasures {
    /// Pad every APL payload with 0 to 3 random bytes.
    #[serde(default)]
    pub pad_random_0_3: bool,
    /// Replace vendor OUIs with the chipset vendor's OUI.
    #[serde(default)]
    pub soc_oui_mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    /// Catalog model id, e.g. `yale_lock`.
    pub model: String,
    #[serde(default, with = "crate::addr::opt_short_hex", skip_serializing_if = "Option::is_none")]
    pub addr: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended: Option<ExtAddr>,
    /// Router (or `0x0000`) the device joined through.
    #[serde(default, with = "crate::addr::opt_short_hex", skip_serializing_if = "Option::is_none")]
    pub parent: Option<u16>,
}

impl DeviceSpec {
    pub fn new(model: &str) -> Self {
        DeviceSpec {
            model: model.into(),
            addr: None,
            extended: None,
            parent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEvent {
    /// Seconds from capture start.
    pub time: f64,
    /// Index into the device list.
    pub device: usize,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Capture length, seconds.
    pub duration: f64,
    #[serde(default = "default_hub")]
    pub hub: HubKind,
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceSpec>,
    #[serde(default, rename = "event")]
    pub events: Vec<ScheduledEvent>,
    /// Additional events placed at random on random devices.
    #[serde(default)]
    pub random_events: usize,
    /// Generic application bursts per scheduled event.
    #[serde(default)]
    pub noise_rate: f64,
    /// Probability that a unicast frame is sent twice.
    #[serde(default)]
    pub retransmission_rate: f64,
    /// Emit periodic reports.
    #[serde(default = "yes")]
    pub reports: bool,
    /// Emit Data Request polls, Link Status and MAC acks.
    #[serde(default = "yes")]
    pub control_traffic: bool,
    #[serde(default)]
    pub countermeasures: Countermeasures,
}

fn default_hub() -> HubKind {
    HubKind::SmartThings
}

fn yes() -> bool {
    true
}

impl ScenarioConfig {
    pub fn new(seed: u64, duration: f64, hub: HubKind) -> Self {
        ScenarioConfig {
            seed,
            duration,
            hub,
            devices: Vec::new(),
            events: Vec::new(),
            random_events: 0,
            noise_rate: 0.0,
            retransmission_rate: 0.0,
            reports: true,
            control_traffic: true,
            countermeasures: Countermeasures::default(),
        }
    }

    pub fn with_device(mut self, model: &str) -> Self {
        self.devices.push(DeviceSpec::new(model));
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Resolves model ids and rejects inconsistent configurations.
    pub fn validate(&self) -> Result<Vec<&'static DeviceModel>, ConfigError> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::Invalid(format!("duration {} must be a non-negative number", self.duration)));
        }
        for (name, p) in [("noise_rate", self.noise_rate), ("retransmission_rate", self.retransmission_rate)] {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} {p} must be non-negative")));
            }
        }
        if self.retransmission_rate > 1.0 {
            return Err(ConfigError::Invalid("retransmission_rate must be at most 1".into()));
        }
        let models = self
            .devices
            .iter()
            .map(|d| model::model(&d.model).ok_or_else(|| ConfigError::UnknownArchetype(d.model.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut addrs = HashSet::from([COORDINATOR]);
        for d in &self.devices {
            if let Some(a) = d.addr {
                if a >= 0xfff8 || !addrs.insert(a) {
                    return Err(ConfigError::AddressClash(a));
                }
            }
        }
        let mut exts = HashSet::new();
        for d in self.devices.iter().filter_map(|d| d.extended) {
            if !exts.insert(d) {
                return Err(ConfigError::Invalid(format!("extended address {d} used twice")));
            }
        }
        for (i, d) in self.devices.iter().enumerate() {
            if let Some(p) = d.parent.filter(|&p| p != COORDINATOR) {
                let parent = self
                    .devices
                    .iter()
                    .position(|o| o.addr == Some(p))
                    .ok_or_else(|| ConfigError::Invalid(format!("device {i}: parent {p:#06x} is not a device")))?;
                if models[parent].ltype() != crate::mapper::LogicalType::ZR || parent == i {
                    return Err(ConfigError::Invalid(format!("device {i}: parent {p:#06x} is not a router")));
                }
            }
        }
        for e in &self.events {
            let m = models
                .get(e.device)
                .ok_or_else(|| ConfigError::Invalid(format!("event for missing device {}", e.device)))?;
            if !m.archetype.events().contains(&e.event) {
                return Err(ConfigError::Invalid(format!("{} cannot produce `{}`", m.id, e.event)));
            }
            if !(0.0..=self.duration - EVENT_TAIL).contains(&e.time) {
                return Err(ConfigError::Invalid(format!("event at {} outside capture", e.time)));
            }
        }
        if self.random_events > 0 && self.devices.is_empty() {
            return Err(ConfigError::Invalid("random events need at least one device".into()));
        }
        Ok(models)
    }
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("address {0:#06x} is reserved or used twice")]
    AddressClash(u16),
    #[error("unknown device model `{0}`")]
    UnknownArchetype(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario i/o: {0}")]
    Io(String),
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
seed = 7
duration = 120.0
hub = "smartthings"
noise_rate = 0.2

[[device]]
model = "yale_lock"
addr = "0x1a2b"

[[event]]
time = 30.0
device = 0
event = "lock"

[countermeasures]
pad_random_0_3 = true
"#;
        let cfg: ScenarioConfig = text.parse().unwrap();
        assert_eq!(cfg.devices[0].addr, Some(0x1a2b));
        assert!(cfg.countermeasures.pad_random_0_3);
        assert!(cfg.reports);
        let back: ScenarioConfig = cfg.to_toml().parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn coordinator_address_is_reserved() {
        let mut cfg = ScenarioConfig::new(1, 10.0, HubKind::SmartThings).with_device("yale_lock");
        cfg.devices[0].addr = Some(0);
        assert_eq!(cfg.validate().unwrap_err(), ConfigError::AddressClash(0));
    }

    #[test]
    fn unknown_model_rejected() {
        let cfg = ScenarioConfig::new(1, 10.0, HubKind::SmartThings).with_device("toaster");
        assert!(matches!(cfg.validate(), Err(ConfigError::UnknownArchetype(_))));
    }

    #[test]
    fn event_must_fit_archetype() {
        let mut cfg = ScenarioConfig::new(1, 10.0, HubKind::SmartThings).with_device("yale_lock");
        cfg.events.push(ScheduledEvent {
            time: 1.0,
            device: 0,
            event: EventKind::Color,
        });
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
