//! Passive network mapping: logical address -> (extended address, logical type).
//!
//! Four observations classify nodes:
//!
//! * `0x0000` is always the coordinator.
//! * The source of a MAC Data Request is an end device; its destination, unless
//!   it is the coordinator, is a router.
//! * The source of a Link Status, Rejoin Response or Network Report is a router.
//! * The destination of a source-routed frame is a router, provided it never
//!   sent a Data Request. This needs the whole capture, so it is applied by
//!   [`NetworkMapper::finish`].
//!
//! When rules disagree the higher-priority one (in the order above) decides and
//! the disagreement stays in the node's evidence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::{fmt_short, parse_short, ExtAddr};
use crate::capture::{is_broadcast, FrameRecord, MacCommand};

pub const COORDINATOR: u16 = 0x0000;
/// "No short address" sentinel used during association.
const UNASSIGNED: u16 = 0xfffe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogicalType {
    ZC,
    ZR,
    ZED,
    Unknown,
}

impl fmt::Display for LogicalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogicalType::ZC => "ZC",
            LogicalType::ZR => "ZR",
            LogicalType::ZED => "ZED",
            LogicalType::Unknown => "Unknown",
        })
    }
}

impl FromStr for LogicalType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ZC" => Ok(LogicalType::ZC),
            "ZR" => Ok(LogicalType::ZR),
            "ZED" => Ok(LogicalType::ZED),
            "Unknown" => Ok(LogicalType::Unknown),
            other => Err(format!("unknown logical type `{other}`")),
        }
    }
}

/// Mapping rules, declared in priority order (earlier wins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRule {
    ZcAddress,
    DataRequest,
    NwkCommandSource,
    SourceRouteDestination,
}

impl MapRule {
    pub fn id(self) -> &'static str {
        match self {
            MapRule::ZcAddress => "zc_address",
            MapRule::DataRequest => "data_request",
            MapRule::NwkCommandSource => "nwk_command_source",
            MapRule::SourceRouteDestination => "source_route_destination",
        }
    }
}

impl FromStr for MapRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            MapRule::ZcAddress,
            MapRule::DataRequest,
            MapRule::NwkCommandSource,
            MapRule::SourceRouteDestination,
        ]
        .into_iter()
        .find(|r| r.id() == s)
        .ok_or_else(|| format!("unknown mapping rule `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: MapRule,
    pub verdict: LogicalType,
    /// First frame that triggered the rule; absent for imported maps.
    pub frame: Option<usize>,
    /// Set when this evidence disagrees with the node's final type.
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEntry {
    #[serde(with = "crate::addr::short_hex")]
    pub logical_addr: u16,
    pub extended_addr: Option<ExtAddr>,
    pub ltype: LogicalType,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapWarning {
    /// One logical address seen with two extended addresses; the later binding won.
    AddressConflict {
        logical: u16,
        previous: ExtAddr,
        current: ExtAddr,
        frame: usize,
    },
    /// An extended address moved to a different logical address (leave/rejoin).
    AddressMoved {
        extended: ExtAddr,
        from: u16,
        to: u16,
        frame: usize,
    },
    /// Rules assigned different types; the higher-priority verdict was kept.
    RoleConflict {
        logical: u16,
        kept: LogicalType,
        rejected: LogicalType,
        rule: MapRule,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMap {
    entries: BTreeMap<u16, NodeEntry>,
    by_extended: HashMap<ExtAddr, u16>,
    pub warnings: Vec<MapWarning>,
}

impl NodeMap {
    pub fn get(&self, addr: u16) -> Option<&NodeEntry> {
        self.entries.get(&addr)
    }

    pub fn ltype_of(&self, addr: u16) -> LogicalType {
        self.entries.get(&addr).map_or(LogicalType::Unknown, |e| e.ltype)
    }

    pub fn logical_for(&self, ext: ExtAddr) -> Option<u16> {
        self.by_extended.get(&ext).copied()
    }

    pub fn extended_of(&self, addr: u16) -> Option<ExtAddr> {
        self.entries.get(&addr).and_then(|e| e.extended_addr)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, ltype: LogicalType) -> usize {
        self.entries.values().filter(|e| e.ltype == ltype).count()
    }

    /// Writes one `logical,extended,type,evidence` record per node.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# logical,extended,type,evidence")?;
        for e in self.entries.values() {
            let ext = e.extended_addr.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            let ev: Vec<String> = e
                .evidence
                .iter()
                .map(|ev| format!("{}={}", ev.rule.id(), ev.verdict))
                .collect();
            writeln!(w, "{},{},{},{}", fmt_short(e.logical_addr), ext, e.ltype, ev.join(";"))?;
        }
        Ok(())
    }

    pub fn import<R: BufRead>(r: R) -> Result<NodeMap, MapImportError> {
        let mut map = NodeMap::default();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| MapImportError { line: line_no, message: e.to_string() })?;
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |message: String| MapImportError { line: line_no, message };
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let logical = parse_short(fields[0]).map_err(err)?;
            let extended = match fields[1] {
                "-" => None,
                s => Some(s.parse::<ExtAddr>().map_err(err)?),
            };
            let ltype: LogicalType = fields[2].parse().map_err(err)?;
            let mut evidence = Vec::new();
            for item in fields[3].split(';').filter(|s| !s.is_empty()) {
                let (rule, verdict) = item
                    .split_once('=')
                    .ok_or_else(|| err(format!("bad evidence `{item}`")))?;
                let verdict: LogicalType = verdict.parse().map_err(err)?;
                evidence.push(Evidence {
                    rule: rule.parse().map_err(err)?,
                    verdict,
                    frame: None,
                    conflict: verdict != ltype,
                });
            }
            if map.entries.contains_key(&logical) {
                return Err(err(format!("duplicate logical address {}", fmt_short(logical))));
            }
            if let Some(x) = extended {
                if map.by_extended.insert(x, logical).is_some() {
                    return Err(err(format!("duplicate extended address {x}")));
                }
            }
            map.entries.insert(
                logical,
                NodeEntry {
                    logical_addr: logical,
                    extended_addr: extended,
                    ltype,
                    evidence,
                },
            );
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node map line {line}: {message}")]
pub struct MapImportError {
    pub line: usize,
    pub message: String,
}

/// Incremental builder; feed frames in capture order, then [`finish`](Self::finish).
#[derive(Debug, Default)]
pub struct NetworkMapper {
    map: NodeMap,
    seen_rules: HashSet<(u16, MapRule, LogicalType)>,
    data_request_senders: HashSet<u16>,
    source_route_targets: BTreeMap<u16, usize>,
}

fn is_node_address(addr: u16) -> bool {
    !is_broadcast(addr) && addr != UNASSIGNED
}

impl NetworkMapper {
    pub fn new() -> Self {
        Self::default()
    }

    fn touch(&mut self, addr: u16) {
        if !is_node_address(addr) {
            return;
        }
        self.map.entries.entry(addr).or_insert_with(|| NodeEntry {
            logical_addr: addr,
            extended_addr: None,
            ltype: LogicalType::Unknown,
            evidence: Vec::new(),
        });
        if addr == COORDINATOR {
            self.evidence(addr, MapRule::ZcAddress, LogicalType::ZC, None);
        }
    }

    fn evidence(&mut self, addr: u16, rule: MapRule, verdict: LogicalType, frame: Option<usize>) {
        if !is_node_address(addr) || !self.seen_rules.insert((addr, rule, verdict)) {
            return;
        }
        if let Some(e) = self.map.entries.get_mut(&addr) {
            e.evidence.push(Evidence {
                rule,
                verdict,
                frame,
                conflict: false,
            });
        }
    }

    fn bind(&mut self, addr: u16, ext: u64, frame: usize) {
        if !is_node_address(addr) {
            return;
        }
        let ext = ExtAddr(ext);
        self.touch(addr);
        let entry = self.map.entries.get_mut(&addr).expect("touched");
        match entry.extended_addr {
            Some(prev) if prev == ext => return,
            Some(prev) => {
                log::warn!("{} rebound from {prev} to {ext} at frame {frame}", fmt_short(addr));
                self.map.warnings.push(MapWarning::AddressConflict {
                    logical: addr,
                    previous: prev,
                    current: ext,
                    frame,
                });
                self.map.by_extended.remove(&prev);
            }
            None => {}
        }
        entry.extended_addr = Some(ext);
        if let Some(old) = self.map.by_extended.insert(ext, addr) {
            if old != addr {
                self.map.warnings.push(MapWarning::AddressMoved {
                    extended: ext,
                    from: old,
                    to: addr,
                    frame,
                });
                if let Some(o) = self.map.entries.get_mut(&old) {
                    o.extended_addr = None;
                }
            }
        }
    }

    pub fn observe(&mut self, f: &FrameRecord) {
        for a in [f.src_short, f.dst_short].into_iter().flatten() {
            self.touch(a);
        }
        if f.mac_command == Some(MacCommand::DataRequest) {
            let src = f
                .src_short
                .or_else(|| f.src_extended.and_then(|x| self.map.logical_for(ExtAddr(x))));
            if let Some(src) = src {
                self.touch(src);
                self.data_request_senders.insert(src);
                self.evidence(src, MapRule::DataRequest, LogicalType::ZED, Some(f.index));
            }
            if let Some(dst) = f.dst_short.filter(|&d| d != COORDINATOR) {
                self.evidence(dst, MapRule::DataRequest, LogicalType::ZR, Some(f.index));
            }
        }
        if let (Some(src), Some(x)) = (f.src_short, f.src_extended) {
            self.bind(src, x, f.index);
        }
        let Some(n) = &f.nwk else { return };
        self.touch(n.nwk_src);
        self.touch(n.nwk_dst);
        if let Some(x) = n.extended_src {
            self.bind(n.nwk_src, x, f.index);
        }
        if let Some(x) = n.extended_dst {
            self.bind(n.nwk_dst, x, f.index);
        }
        if let (Some(hop), Some(x)) = (f.src_short, n.aux_source) {
            self.bind(hop, x, f.index);
        }
        if let Some(cmd) = n.nwk_command {
            if cmd.marks_router() && n.nwk_src != COORDINATOR {
                self.evidence(n.nwk_src, MapRule::NwkCommandSource, LogicalType::ZR, Some(f.index));
            }
        }
        if n.has_source_route && is_node_address(n.nwk_dst) {
            self.source_route_targets.entry(n.nwk_dst).or_insert(f.index);
        }
    }

    pub fn finish(mut self) -> NodeMap {
        let targets = std::mem::take(&mut self.source_route_targets);
        for (addr, frame) in targets {
            if !self.data_request_senders.contains(&addr) {
                self.evidence(addr, MapRule::SourceRouteDestination, LogicalType::ZR, Some(frame));
            }
        }
        let mut warnings = Vec::new();
        for e in self.map.entries.values_mut() {
            // Stable sort keeps first-observed order within a rule.
            e.evidence.sort_by_key(|ev| ev.rule);
            let kept = e.evidence.first().map_or(LogicalType::Unknown, |ev| ev.verdict);
            e.ltype = kept;
            for ev in e.evidence.iter_mut() {
                ev.conflict = ev.verdict != kept;
                if ev.conflict {
                    warnings.push(MapWarning::RoleConflict {
                        logical: e.logical_addr,
                        kept,
                        rejected: ev.verdict,
                        rule: ev.rule,
                    });
                }
            }
        }
        self.map.warnings.extend(warnings);
        self.map
    }
}

pub fn map_network<'a>(frames: impl IntoIterator<Item = &'a FrameRecord>) -> NodeMap {
    let mut m = NetworkMapper::new();
    for f in frames {
        m.observe(f);
    }
    m.finish()
}

/// Free-function form of [`NodeMap::ltype_of`].
pub fn ltype_of(map: &NodeMap, addr: u16) -> LogicalType {
    map.ltype_of(addr)
}
