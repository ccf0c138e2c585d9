//! Ground-truth sidecar written next to every generated capture.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::addr::ExtAddr;
use crate::inference::{DeviceType, OuiClass};
use crate::mapper::LogicalType;

use super::model::{Archetype, EventKind, HubKind, NoiseKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Event,
    Report,
    Noise,
    /// A byte-identical MAC retransmission.
    Retransmission,
    /// A later hop of a multi-hop frame.
    Relay,
    /// Acks, Data Requests, Link Status.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub index: usize,
    pub kind: FrameKind,
    /// Event or noise id for `Event`/`Noise` frames and their copies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<usize>,
    /// Report occurrence id for `Report` frames and their copies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
    /// Padding bytes added to the APL payload.
    #[serde(default)]
    pub pad: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTruth {
    #[serde(with = "crate::addr::short_hex")]
    pub addr: u16,
    pub extended: ExtAddr,
    pub ltype: LogicalType,
    pub oui_class: OuiClass,
    /// Catalog id, or `hub` for the coordinator.
    pub model: String,
    pub label: String,
    pub archetype: Option<Archetype>,
    pub device_type: Option<DeviceType>,
    #[serde(default, with = "crate::addr::opt_short_hex", skip_serializing_if = "Option::is_none")]
    pub parent: Option<u16>,
    /// Label a reporting signature for this node would carry.
    pub signature_label: Option<String>,
    /// Reporting intervals the node was configured with, seconds.
    pub intervals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub id: usize,
    pub time: f64,
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub archetype: Archetype,
    pub event: EventKind,
    pub device_type: DeviceType,
    pub template: String,
    /// Index of the first copy of the command frame.
    pub candidate: usize,
    /// First-copy indices of every APL frame of the event, repeats included.
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTruth {
    pub id: usize,
    pub time: f64,
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub kind: NoiseKind,
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub capture_id: String,
    pub seed: u64,
    pub hub: HubKind,
    pub nodes: Vec<NodeTruth>,
    pub events: Vec<EventTruth>,
    pub noise: Vec<NoiseTruth>,
    pub frames: Vec<FrameLabel>,
}

impl GroundTruth {
    pub fn node(&self, addr: u16) -> Option<&NodeTruth> {
        self.nodes.iter().find(|n| n.addr == addr)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self).map_err(std::io::Error::other)
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<GroundTruth> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        serde_json::from_reader(f).map_err(std::io::Error::other)
    }
}

/// Lowercase hex SHA-256 of a capture file's bytes.
pub fn capture_id_of(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn capture_id_of_file(path: impl AsRef<Path>) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
