//! End-to-end pipeline: parse, map, deduplicate, segment, infer, score.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::addr::ExtAddr;
use crate::burst::{push_frame, secs_to_us, segment_bursts, Burst, BurstFrame, Deduplicator, DEFAULT_BURST_GAP};
use crate::capture::{
    CaptureError, FrameParser, FrameRecord, NwkCommandKind, NwkCommandTable, PcapReader, RawFrame, SkippedFrame,
};
use crate::inference::{
    engine_zone_status_count, infer_command, lookup_manufacturer, score, BurstContext, DeviceType, Diagnostic,
    Identification, Manufacturer, OuiTable, Resolution, RuleSet,
};
use crate::mapper::{LogicalType, NetworkMapper, NodeMap, COORDINATOR};

pub const DEFAULT_REPEAT_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Seconds of silence that close a burst.
    pub burst_gap: f64,
    /// Signed correction added to every APL length.
    pub len_offset: i32,
    /// Seconds within which an identical burst counts as a repeat.
    pub repeat_window: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            burst_gap: DEFAULT_BURST_GAP,
            len_offset: 0,
            repeat_window: DEFAULT_REPEAT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstVerdict {
    /// No rule fired; the burst is usable for reporting signatures.
    Idle,
    Matched,
    /// Repeat of an earlier matched burst, folded into its identification.
    Absorbed,
    Ambiguous,
}

impl BurstVerdict {
    pub fn is_functional(self) -> bool {
        self != BurstVerdict::Idle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedBurst {
    pub burst: Burst,
    pub verdict: BurstVerdict,
    pub network_discovery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub ltype: LogicalType,
    pub extended: Option<ExtAddr>,
    pub manufacturer: Option<Manufacturer>,
    /// Most specific device type among the node's identifications.
    pub device_type: Option<DeviceType>,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub frames_in: usize,
    pub parsed: usize,
    pub skipped: Vec<SkippedFrame>,
    pub duplicates: usize,
    pub first_us: Option<u64>,
    pub last_us: Option<u64>,
    pub map: NodeMap,
    /// Bursts of every non-coordinator node, ordered by node then time.
    pub bursts: Vec<AnalyzedBurst>,
    /// Ordered by time, then node.
    pub identifications: Vec<Identification>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn span_secs(&self) -> f64 {
        match (self.first_us, self.last_us) {
            (Some(a), Some(b)) => (b - a) as f64 / 1e6,
            _ => 0.0,
        }
    }

    pub fn bursts_of(&self, node: u16) -> impl Iterator<Item = &AnalyzedBurst> {
        self.bursts.iter().filter(move |b| b.burst.node == node)
    }

    pub fn devices(&self, oui: &OuiTable) -> Vec<DeviceSummary> {
        self.map
            .nodes()
            .map(|e| {
                let ids: Vec<&Identification> =
                    self.identifications.iter().filter(|i| i.node == e.logical_addr).collect();
                DeviceSummary {
                    node: e.logical_addr,
                    ltype: e.ltype,
                    extended: e.extended_addr,
                    manufacturer: lookup_manufacturer(e.extended_addr, oui),
                    device_type: ids.iter().map(|i| i.device_type).max_by_key(|d| d.specificity()),
                    events: ids.len(),
                }
            })
            .collect()
    }
}

/// Everything collected in the streaming pass over a capture.
struct Ingest {
    parser: FrameParser,
    mapper: NetworkMapper,
    dedup: Deduplicator,
    parts: BTreeMap<u16, Vec<BurstFrame>>,
    broadcasts: Vec<BurstFrame>,
    route_requests: Vec<u64>,
    frames_in: usize,
    parsed: usize,
    skipped: Vec<SkippedFrame>,
    duplicates: usize,
    first_us: Option<u64>,
    last_us: Option<u64>,
}

impl Ingest {
    fn new(parser: FrameParser) -> Self {
        Ingest {
            parser,
            mapper: NetworkMapper::new(),
            dedup: Deduplicator::new(),
            parts: BTreeMap::new(),
            broadcasts: Vec::new(),
            route_requests: Vec::new(),
            frames_in: 0,
            parsed: 0,
            skipped: Vec::new(),
            duplicates: 0,
            first_us: None,
            last_us: None,
        }
    }

    fn raw(&mut self, raw: &RawFrame) {
        self.frames_in += 1;
        self.first_us.get_or_insert(raw.timestamp_us);
        self.last_us = Some(raw.timestamp_us);
        match self.parser.parse(raw) {
            Ok(rec) => self.record(&rec),
            Err(e) => {
                log::debug!("frame {} skipped: {e}", raw.index);
                self.skipped.push(SkippedFrame {
                    index: raw.index,
                    reason: e.to_string(),
                });
            }
        }
    }

    fn record(&mut self, rec: &FrameRecord) {
        self.parsed += 1;
        self.mapper.observe(rec);
        if !self.dedup.keep(rec) {
            self.duplicates += 1;
            return;
        }
        if let Some(n) = &rec.nwk {
            if n.is_broadcast && n.nwk_command == Some(NwkCommandKind::RouteRequest) {
                self.route_requests.push(rec.timestamp_us);
            }
        }
        if let Some(from) = push_frame(&mut self.parts, rec) {
            if from.broadcast {
                self.broadcasts.push(from);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analyzer {
    pub config: AnalysisConfig,
    pub rules: RuleSet,
    pub oui: OuiTable,
    pub commands: NwkCommandTable,
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new(AnalysisConfig::default())
    }
}

impl Analyzer {
    pub fn new(config: AnalysisConfig) -> Self {
        Analyzer {
            config,
            rules: RuleSet::default(),
            oui: OuiTable::default(),
            commands: NwkCommandTable::default(),
        }
    }

    fn ingest(&self) -> Ingest {
        Ingest::new(FrameParser::new(self.config.len_offset, self.commands.clone()))
    }

    pub fn analyze_path(&self, path: impl AsRef<Path>) -> Result<Analysis, CaptureError> {
        self.analyze_raw(PcapReader::open(path)?)
    }

    /// Streams raw frames; a read error aborts, a malformed frame does not.
    pub fn analyze_raw<I>(&self, frames: I) -> Result<Analysis, CaptureError>
    where
        I: IntoIterator<Item = Result<RawFrame, CaptureError>>,
    {
        let mut ing = self.ingest();
        for raw in frames {
            ing.raw(&raw?);
        }
        Ok(self.finish(ing))
    }

    pub fn analyze_frames<'a>(&self, frames: impl IntoIterator<Item = &'a RawFrame>) -> Analysis {
        let mut ing = self.ingest();
        for raw in frames {
            ing.raw(raw);
        }
        self.finish(ing)
    }

    pub fn analyze_records<'a>(&self, records: impl IntoIterator<Item = &'a FrameRecord>) -> Analysis {
        let mut ing = self.ingest();
        for r in records {
            ing.frames_in += 1;
            ing.first_us.get_or_insert(r.timestamp_us);
            ing.last_us = Some(r.timestamp_us);
            ing.record(r);
        }
        self.finish(ing)
    }

    fn context(&self, ing: &Ingest, b: &Burst) -> BurstContext {
        let lo = b.start_us.saturating_sub(secs_to_us(self.config.burst_gap));
        let hi = b.end_us;
        let rr = ing.route_requests.partition_point(|&t| t < lo);
        let network_discovery = ing.route_requests.get(rr).is_some_and(|&t| t <= hi);
        let first = ing.broadcasts.partition_point(|f| f.timestamp_us < lo);
        let broadcasts = ing.broadcasts[first..]
            .iter()
            .take_while(|f| f.timestamp_us <= hi)
            .copied()
            .collect();
        BurstContext {
            network_discovery,
            broadcasts,
            repeats: false,
        }
    }

    fn finish(&self, mut ing: Ingest) -> Analysis {
        let mapper = std::mem::take(&mut ing.mapper);
        let map = mapper.finish();
        let gap = secs_to_us(self.config.burst_gap);
        let window = secs_to_us(self.config.repeat_window);
        let mut bursts = Vec::new();
        let mut identifications = Vec::new();
        let mut diagnostics = Vec::new();

        for (&node, frames) in &ing.parts {
            if node == COORDINATOR || map.ltype_of(node) == LogicalType::ZC {
                continue;
            }
            let segs = segment_bursts(frames, node, gap);
            let manufacturer = lookup_manufacturer(map.extended_of(node), &self.oui);
            let klass = manufacturer.as_ref().map(|m| m.klass);
            let mut verdicts = vec![BurstVerdict::Idle; segs.len()];
            let mut nd = vec![false; segs.len()];
            let mut known: Option<DeviceType> = None;

            for i in 0..segs.len() {
                let mut ctx = self.context(&ing, &segs[i]);
                nd[i] = ctx.network_discovery;
                if verdicts[i] == BurstVerdict::Absorbed {
                    continue;
                }
                let shape = segs[i].shape();
                let partner = (i + 1..segs.len())
                    .take_while(|&j| segs[j].start_us - segs[i].start_us <= window)
                    .find(|&j| verdicts[j] == BurstVerdict::Idle && segs[j].shape() == shape);
                ctx.repeats = partner.is_some();
                let ts = |idx: usize| {
                    segs[i]
                        .frames
                        .iter()
                        .find(|f| f.index == idx)
                        .map_or(segs[i].start(), |f| f.timestamp_us as f64 / 1e6)
                };
                match infer_command(&segs[i], &ctx, &map, &self.rules) {
                    Ok(Some(m)) => {
                        verdicts[i] = BurstVerdict::Matched;
                        let rule = &self.rules.rules[m.rule];
                        let mut evidence = m.frames.clone();
                        if rule.requires_repeat() {
                            if let Some(j) = partner {
                                verdicts[j] = BurstVerdict::Absorbed;
                                evidence.extend(segs[j].indices());
                            }
                        }
                        let y = &rule.yields;
                        let device_type = y.device_type.refine(known);
                        let dt = if device_type != y.device_type {
                            Resolution::Identified
                        } else {
                            y.dt
                        };
                        if device_type.specificity() >= known.map_or(0, |k| k.specificity()) {
                            known = Some(device_type);
                        }
                        identifications.push(Identification {
                            node,
                            timestamp: ts(m.candidate),
                            rule_id: m.rule_id,
                            command: y.command.clone(),
                            device_type,
                            event: y.event.clone(),
                            manufacturer: manufacturer.clone(),
                            score: score(dt, y.et, klass),
                            candidate: m.candidate,
                            evidence,
                        });
                    }
                    Ok(None) => {
                        if let Some(pos) = crate::inference::candidate_frame(&segs[i]) {
                            if let Some(count) = engine_zone_status_count(&segs[i], pos, &map) {
                                if count > 3 {
                                    let c = segs[i].frames[pos].index;
                                    diagnostics.push(Diagnostic::UnknownSensor {
                                        node,
                                        timestamp: ts(c),
                                        candidate: c,
                                        count,
                                    });
                                }
                            }
                        }
                    }
                    Err(amb) => {
                        verdicts[i] = BurstVerdict::Ambiguous;
                        log::info!("{amb}");
                        diagnostics.push(Diagnostic::AmbiguousMatch {
                            node,
                            timestamp: ts(amb.candidate),
                            candidate: amb.candidate,
                            rules: amb.rules,
                            score: score(Resolution::Uncertain, Resolution::Uncertain, klass),
                        });
                    }
                }
            }
            bursts.extend(segs.into_iter().zip(verdicts).zip(nd).map(|((burst, verdict), network_discovery)| {
                AnalyzedBurst {
                    burst,
                    verdict,
                    network_discovery,
                }
            }));
        }
        identifications.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.node.cmp(&b.node)));

        Analysis {
            frames_in: ing.frames_in,
            parsed: ing.parsed,
            skipped: ing.skipped,
            duplicates: ing.duplicates,
            first_us: ing.first_us,
            last_us: ing.last_us,
            map,
            bursts,
            identifications,
            diagnostics,
        }
    }
}

/// Identifications for a parsed capture using bundled rules and tables.
pub fn identify_events(records: &[FrameRecord]) -> Vec<Identification> {
    Analyzer::default().analyze_records(records).identifications
}
