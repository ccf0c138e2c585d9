//! Device behavior models: event templates and periodic reporting patterns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::inference::DeviceType;
use crate::mapper::LogicalType;

/// Direction relative to the hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    /// Hub to device.
    Down,
    /// Device to hub.
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub dir: Dir,
    /// APL payload length before padding.
    pub len: u16,
}

const fn down(len: u16) -> FrameSpec {
    FrameSpec { dir: Dir::Down, len }
}

const fn up(len: u16) -> FrameSpec {
    FrameSpec { dir: Dir::Up, len }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    DoorLock,
    Outlet,
    ColorBulb,
    WhiteBulb,
    MotionSensor,
    DoorSensor,
    FloodSensor,
    AudioSensor,
}

impl Archetype {
    pub const ALL: [Archetype; 8] = [
        Archetype::DoorLock,
        Archetype::Outlet,
        Archetype::ColorBulb,
        Archetype::WhiteBulb,
        Archetype::MotionSensor,
        Archetype::DoorSensor,
        Archetype::FloodSensor,
        Archetype::AudioSensor,
    ];

    pub fn ltype(self) -> LogicalType {
        match self {
            Archetype::Outlet | Archetype::ColorBulb | Archetype::WhiteBulb => LogicalType::ZR,
            _ => LogicalType::ZED,
        }
    }

    pub fn device_type(self) -> DeviceType {
        match self {
            Archetype::DoorLock => DeviceType::DoorLock,
            Archetype::Outlet => DeviceType::Outlet,
            Archetype::ColorBulb | Archetype::WhiteBulb => DeviceType::Bulb,
            Archetype::MotionSensor => DeviceType::MotionSensor,
            Archetype::DoorSensor => DeviceType::DoorSensor,
            Archetype::FloodSensor => DeviceType::FloodSensor,
            Archetype::AudioSensor => DeviceType::AudioSensor,
        }
    }

    pub fn events(self) -> &'static [EventKind] {
        use EventKind::*;
        match self {
            Archetype::DoorLock => &[Lock, Unlock],
            Archetype::Outlet => &[On, Off],
            Archetype::ColorBulb => &[On, Off, Level, Color],
            Archetype::WhiteBulb => &[On, Off, Level],
            Archetype::MotionSensor => &[Motion],
            Archetype::DoorSensor => &[Open, Close],
            Archetype::FloodSensor => &[Leak],
            Archetype::AudioSensor => &[Audio],
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Lock,
    Unlock,
    On,
    Off,
    Level,
    Color,
    Motion,
    Open,
    Close,
    Leak,
    Audio,
}

impl EventKind {
    /// The word an identification's event text must contain.
    pub fn word(self) -> &'static str {
        match self {
            EventKind::Lock => "lock",
            EventKind::Unlock => "unlock",
            EventKind::On => "on",
            EventKind::Off => "off",
            EventKind::Level => "level changed",
            EventKind::Color => "color changed",
            EventKind::Motion => "motion",
            EventKind::Open => "open",
            EventKind::Close => "close",
            EventKind::Leak => "water leakage",
            EventKind::Audio => "audio detected",
        }
    }

    pub fn template(self) -> Template {
        use EventKind::*;
        let frames: &'static [FrameSpec] = match self {
            Lock => const { &[down(11), up(12), up(20), down(8)] },
            Unlock => const { &[down(11), up(21), up(20), down(8)] },
            On => const { &[down(11), up(13), up(15), down(8)] },
            Off => const { &[down(11), up(15), down(8)] },
            Level => const { &[down(14), up(13), up(18), down(8)] },
            Color => const { &[down(15), up(13), up(20), down(8)] },
            Motion => const { &[up(17), down(8)] },
            Open | Close => const { &[up(17), down(8), up(20)] },
            Leak => const { &[up(17), down(8), up(17), down(8)] },
            Audio => const { &[up(17), down(8), up(17), down(8), up(17), down(8)] },
        };
        Template {
            id: match self {
                Lock => "lock",
                Unlock => "unlock",
                On => "on",
                Off => "off",
                Level => "level",
                Color => "color",
                Motion => "zone_motion",
                Open | Close => "zone_contact",
                Leak => "zone_flood",
                Audio => "zone_audio",
            },
            frames,
            route_request: matches!(self, Level | Color),
            broadcast_before: None,
            repeat: self == Motion,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Lock => "lock",
            EventKind::Unlock => "unlock",
            EventKind::On => "on",
            EventKind::Off => "off",
            EventKind::Level => "level",
            EventKind::Color => "color",
            EventKind::Motion => "motion",
            EventKind::Open => "open",
            EventKind::Close => "close",
            EventKind::Leak => "leak",
            EventKind::Audio => "audio",
        })
    }
}

/// A burst recipe: optional hub broadcasts just before, then the frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub frames: &'static [FrameSpec],
    /// Hub broadcasts a Route Request shortly before the burst.
    pub route_request: bool,
    /// Hub broadcasts an APL frame of this length shortly before the burst.
    pub broadcast_before: Option<u16>,
    /// The burst is sent again a few seconds later.
    pub repeat: bool,
}

/// Generic application traffic shaped to resemble, but not satisfy, a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    ReadAttributes,
    LevelWithoutDiscovery,
    ColorLikeWithResponse12,
    OnOffLikeAfterBroadcast12,
    ZoneLikeAfterBroadcast13,
    LevelLikeAfterBroadcast17,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::ReadAttributes,
        NoiseKind::LevelWithoutDiscovery,
        NoiseKind::ColorLikeWithResponse12,
        NoiseKind::OnOffLikeAfterBroadcast12,
        NoiseKind::ZoneLikeAfterBroadcast13,
        NoiseKind::LevelLikeAfterBroadcast17,
    ];

    pub fn template(self) -> Template {
        let (id, frames, route_request, broadcast_before): (_, &'static [FrameSpec], _, _) = match self {
            NoiseKind::ReadAttributes => ("read_attributes", const { &[down(13), up(20)] }, false, None),
            NoiseKind::LevelWithoutDiscovery => ("level_no_nd", const { &[down(14), up(13)] }, false, None),
            NoiseKind::ColorLikeWithResponse12 => ("color_resp12", const { &[down(15), up(12)] }, true, None),
            NoiseKind::OnOffLikeAfterBroadcast12 => ("onoff_bcast12", const { &[down(11), up(13)] }, false, Some(12)),
            NoiseKind::ZoneLikeAfterBroadcast13 => ("zone_bcast13", const { &[up(17), down(8)] }, false, Some(13)),
            NoiseKind::LevelLikeAfterBroadcast17 => ("level_bcast17", const { &[down(14), up(13)] }, true, Some(17)),
        };
        Template {
            id,
            frames,
            route_request,
            broadcast_before,
            repeat: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HubKind {
    #[serde(alias = "smartthings")]
    SmartThings,
    Echo,
    Hue,
    Sengled,
}

impl HubKind {
    pub const ALL: [HubKind; 4] = [HubKind::SmartThings, HubKind::Echo, HubKind::Hue, HubKind::Sengled];

    pub fn label(self) -> &'static str {
        match self {
            HubKind::SmartThings => "SMT",
            HubKind::Echo => "Echo",
            HubKind::Hue => "Hue",
            HubKind::Sengled => "Sengled",
        }
    }

    /// Vendor name looked up in the OUI table for the hub's own address.
    pub fn vendor(self) -> &'static str {
        match self {
            HubKind::SmartThings => "SmartThi",
            HubKind::Echo => "ember",
            HubKind::Hue => "PhilipsL",
            HubKind::Sengled => "Zhejiang",
        }
    }

    /// Trailing application frames the hub adds to every event burst.
    pub fn event_filler(self) -> &'static [FrameSpec] {
        match self {
            HubKind::SmartThings => &[],
            HubKind::Echo => const { &[up(16)] },
            HubKind::Hue => const { &[down(19)] },
            HubKind::Sengled => const { &[down(19), up(22)] },
        }
    }
}

impl fmt::Display for HubKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for HubKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HubKind::ALL
            .into_iter()
            .find(|h| h.to_string().eq_ignore_ascii_case(s) || h.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown hub `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPattern {
    pub frames: Vec<FrameSpec>,
    /// Seconds between reports.
    pub ri: f64,
}

const S: f64 = 1.0;
const M: f64 = 60.0;
const H: f64 = 3600.0;

type PatternRow = (&'static [FrameSpec], f64);

#[derive(Debug)]
pub struct DeviceModel {
    pub id: &'static str,
    pub label: &'static str,
    pub archetype: Archetype,
    /// OUI table name of the vendor prefix.
    pub vendor: &'static str,
    /// Chipset vendor substituted when OUI masking is on.
    pub soc_vendor: &'static str,
    reports: &'static [(HubKind, &'static [PatternRow])],
}

impl DeviceModel {
    pub fn ltype(&self) -> LogicalType {
        self.archetype.ltype()
    }

    /// Reporting patterns when paired with `hub`; hubs without their own entry
    /// fall back to the SmartThings behavior.
    pub fn reports(&self, hub: HubKind) -> Vec<ReportPattern> {
        let row = self
            .reports
            .iter()
            .find(|(h, _)| *h == hub)
            .or_else(|| self.reports.iter().find(|(h, _)| *h == HubKind::SmartThings))
            .map_or(&[][..], |(_, p)| *p);
        row.iter()
            .map(|(frames, ri)| ReportPattern {
                frames: frames.to_vec(),
                ri: *ri,
            })
            .collect()
    }

    pub fn supports(&self, hub: HubKind) -> bool {
        self.reports.iter().any(|(h, _)| *h == hub)
    }

    pub fn signature_label(&self, hub: HubKind) -> String {
        format!("{} @ {}", self.label, hub.label())
    }
}

use HubKind::{Echo, Hue, Sengled, SmartThings};

static CATALOG: [DeviceModel; 11] = [
    DeviceModel {
        id: "centralite_outlet",
        label: "Centralite Outlet",
        archetype: Archetype::Outlet,
        vendor: "SiliconL",
        soc_vendor: "SiliconL",
        reports: &[
            (SmartThings, &[(&[up(22), down(8)], 5.0 * M), (&[up(25), down(8)], 10.0 * M)]),
            (Echo, &[(&[up(22), down(8)], 5.0 * M), (&[up(27), down(8)], 9.0 * M)]),
        ],
    },
    DeviceModel {
        id: "sonoff_outlet",
        label: "Sonoff Outlet",
        archetype: Archetype::Outlet,
        vendor: "TexasIns",
        soc_vendor: "TexasIns",
        reports: &[
            (SmartThings, &[(&[up(24), down(8)], 5.0 * M)]),
            (Echo, &[(&[up(24), down(8)], 5.0 * M), (&[up(26), down(8)], 10.0 * M)]),
        ],
    },
    DeviceModel {
        id: "smt_outlet",
        label: "SMT Outlet",
        archetype: Archetype::Outlet,
        vendor: "SmartThi",
        soc_vendor: "SiliconL",
        reports: &[
            (SmartThings, &[(&[up(23), down(8)], 5.0 * M), (&[up(28), down(8)], 10.0 * M)]),
            (Echo, &[(&[up(28), down(8)], 10.0 * M)]),
        ],
    },
    DeviceModel {
        id: "sengled_white",
        label: "Sengled White Bulb",
        archetype: Archetype::WhiteBulb,
        vendor: "Zhejiang",
        soc_vendor: "TexasIns",
        reports: &[
            (SmartThings, &[(&[up(21), down(8)], 5.0 * M)]),
            (Echo, &[(&[up(21), down(8)], 10.0 * M)]),
            (
                Sengled,
                &[(&[up(21), down(8)], 5.0 * M), (&[up(29), down(8)], 20.0 * M), (&[up(31), down(8)], 25.0 * M)],
            ),
        ],
    },
    DeviceModel {
        id: "sengled_color",
        label: "Sengled Color Bulb",
        archetype: Archetype::ColorBulb,
        vendor: "Zhejiang",
        soc_vendor: "TexasIns",
        reports: &[
            (SmartThings, &[(&[up(30), down(8)], 10.0 * M), (&[up(33), down(8)], 1.0 * H)]),
            (Echo, &[(&[up(30), down(8)], 10.0 * M), (&[up(33), down(8)], 1.0 * H)]),
            (
                Sengled,
                &[(&[up(30), down(8)], 5.0 * M), (&[up(34), down(8)], 20.0 * M), (&[up(35), down(8)], 25.0 * M)],
            ),
        ],
    },
    DeviceModel {
        id: "philips_hue_color",
        label: "Philips Hue Color Bulb",
        archetype: Archetype::ColorBulb,
        vendor: "PhilipsL",
        soc_vendor: "ember",
        reports: &[
            (SmartThings, &[(&[up(18), down(8)], 1.0 * S), (&[up(36), down(8)], 2.0 * M)]),
            (Echo, &[(&[up(18), down(8)], 1.0 * S), (&[up(36), down(8)], 2.0 * M)]),
            (Hue, &[(&[up(18), down(8)], 1.0 * S), (&[up(36), down(8)], 2.0 * M)]),
        ],
    },
    DeviceModel {
        id: "smt_motion_im",
        label: "SMT Motion Sensor IM",
        archetype: Archetype::MotionSensor,
        vendor: "SmartThi",
        soc_vendor: "SiliconL",
        reports: &[
            (SmartThings, &[(&[up(19), down(8)], 5.0 * M)]),
            (Echo, &[(&[up(19), down(8)], 5.0 * M)]),
        ],
    },
    DeviceModel {
        id: "smt_multisensor",
        label: "SMT Multisensor",
        archetype: Archetype::DoorSensor,
        vendor: "samjin",
        soc_vendor: "SiliconL",
        reports: &[
            (SmartThings, &[(&[up(19), down(8)], 5.0 * M), (&[up(32), down(8), up(24)], 1.0 * H)]),
            (Echo, &[(&[up(19), down(8)], 5.0 * M), (&[up(32), down(8), up(24)], 1.0 * H)]),
        ],
    },
    DeviceModel {
        id: "ecolink_water",
        label: "Ecolink Water Sensor",
        archetype: Archetype::FloodSensor,
        vendor: "ember",
        soc_vendor: "ember",
        reports: &[(SmartThings, &[(&[up(26), down(8)], 30.0 * M), (&[up(20), up(22), down(8)], 30.0 * M)])],
    },
    DeviceModel {
        id: "ecolink_sound",
        label: "Ecolink Sound Sensor",
        archetype: Archetype::AudioSensor,
        vendor: "ember",
        soc_vendor: "ember",
        reports: &[(SmartThings, &[(&[up(25), down(8)], 27.0 * M), (&[up(20), up(23), down(8)], 30.0 * M)])],
    },
    DeviceModel {
        id: "yale_lock",
        label: "Yale Door Lock",
        archetype: Archetype::DoorLock,
        vendor: "ember",
        soc_vendor: "ember",
        reports: &[
            (SmartThings, &[(&[up(27), down(8), up(19)], 1.0 * H)]),
            (Echo, &[(&[up(27), down(8), up(19)], 10.0 * M)]),
        ],
    },
];

pub fn catalog() -> &'static [DeviceModel] {
    &CATALOG
}

pub fn model(id: &str) -> Option<&'static DeviceModel> {
    CATALOG.iter().find(|m| m.id == id)
}

/// One model per archetype, used when a scenario only names archetypes.
pub fn model_for(archetype: Archetype) -> &'static DeviceModel {
    let id = match archetype {
        Archetype::DoorLock => "yale_lock",
        Archetype::Outlet => "smt_outlet",
        Archetype::ColorBulb => "philips_hue_color",
        Archetype::WhiteBulb => "sengled_white",
        Archetype::MotionSensor => "smt_motion_im",
        Archetype::DoorSensor => "smt_multisensor",
        Archetype::FloodSensor => "ecolink_water",
        Archetype::AudioSensor => "ecolink_sound",
    };
    model(id).expect("catalog covers every archetype")
}
