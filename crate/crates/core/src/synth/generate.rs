//! Scenario to capture: topology, schedule, frame assembly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::addr::{ExtAddr, Oui};
use crate::capture::{mac::fcs, LinkType, PcapWriter, RawFrame};
use crate::inference::{OuiClass, OuiTable};
use crate::mapper::{LogicalType, COORDINATOR};

use super::model::{Dir, DeviceModel, EventKind, FrameSpec, NoiseKind, Template};
use super::scenario::{ConfigError, ScenarioConfig, EVENT_TAIL};
use super::truth::{EventTruth, FrameKind, FrameLabel, GroundTruth, NodeTruth, NoiseTruth};

const PAN: u16 = 0x1a62;
/// Capture start, microseconds since the Unix epoch.
const EPOCH_US: u64 = 1_600_000_000_000_000;
const BROADCAST_ALL: u16 = 0xffff;
const BROADCAST_RX_ON: u16 = 0xfffd;
const BROADCAST_ROUTERS: u16 = 0xfffc;
const AUX_LEN: usize = 14;
const MIC_LEN: usize = 4;
const ROUTE_REQUEST_LEN: usize = 6;

/// Minimum spacing between foreground bursts anywhere in the network, seconds.
const GLOBAL_SPACING: (f64, f64) = (4.0, 6.0);
/// Minimum spacing between foreground bursts of one node, seconds.
const NODE_SPACING: f64 = 12.0;
const FIRST_EVENT: f64 = 5.0;
/// Reports this close to a foreground burst of the same node are not sent.
const REPORT_GUARD: f64 = 1.0;
/// Reports closer than this to another report of the node would share its burst.
const MERGE_GUARD: f64 = 0.6;
const REPORT_JITTER: f64 = 0.02;
/// Report trains at or below this interval absorb colliding reports into their bursts.
const DENSE_REPORT_RI: f64 = 2.0;
/// Upper bound on the length of one (possibly chained) report burst, seconds.
const MAX_REPORT_SPAN: f64 = 5.0;

#[derive(Debug)]
pub struct Generated {
    pub frames: Vec<RawFrame>,
    pub truth: GroundTruth,
}

impl Generated {
    pub fn write(&self, capture: impl AsRef<Path>, truth: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(capture)?);
        let mut w = PcapWriter::new(f, LinkType::Ieee802154WithFcs).map_err(std::io::Error::other)?;
        for r in &self.frames {
            w.write_frame(r.timestamp_us, &r.bytes).map_err(std::io::Error::other)?;
        }
        w.finish().map_err(std::io::Error::other)?.flush()?;
        self.truth.save(truth)
    }
}

struct Node {
    addr: u16,
    ext: u64,
    ltype: LogicalType,
    model: Option<&'static DeviceModel>,
    parent: Option<u16>,
    mac_seq: u8,
    nwk_seq: u8,
    fc: u32,
}

struct Tx {
    t_us: u64,
    order: usize,
    bytes: Vec<u8>,
    kind: FrameKind,
    event: Option<usize>,
    group: Option<usize>,
    pad: u8,
}

#[derive(Clone, Copy)]
struct Tag {
    kind: FrameKind,
    event: Option<usize>,
    group: Option<usize>,
}

impl Tag {
    fn control() -> Tag {
        Tag {
            kind: FrameKind::Control,
            event: None,
            group: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Foreground {
    Event(EventKind),
    Noise(NoiseKind),
}

struct Item {
    node: usize,
    what: Foreground,
    time: f64,
}

struct Gen<'c> {
    cfg: &'c ScenarioConfig,
    rng: ChaCha8Rng,
    pad_rng: ChaCha8Rng,
    byte_rng: ChaCha8Rng,
    nodes: Vec<Node>,
    index_of: BTreeMap<u16, usize>,
    txs: Vec<Tx>,
}

fn secs(t: f64) -> u64 {
    EPOCH_US + (t.max(0.0) * 1e6).round() as u64
}

fn with_fcs(mut b: Vec<u8>) -> Vec<u8> {
    let c = fcs(&b);
    b.extend_from_slice(&c.to_le_bytes());
    b
}

impl<'c> Gen<'c> {
    fn push(&mut self, t: f64, bytes: Vec<u8>, tag: Tag, pad: u8) -> usize {
        let order = self.txs.len();
        debug_assert!(bytes.len() + 2 <= 127, "frame exceeds the PHY limit");
        self.txs.push(Tx {
            t_us: secs(t),
            order,
            bytes: with_fcs(bytes),
            kind: tag.kind,
            event: tag.event,
            group: tag.group,
            pad,
        });
        order
    }

    fn node(&mut self, addr: u16) -> &mut Node {
        let i = self.index_of[&addr];
        &mut self.nodes[i]
    }

    fn next_mac_seq(&mut self, addr: u16) -> u8 {
        let n = self.node(addr);
        let s = n.mac_seq;
        n.mac_seq = s.wrapping_add(1);
        s
    }

    fn next_fc(&mut self, addr: u16) -> (u32, u64) {
        let n = self.node(addr);
        let fc = n.fc;
        n.fc = fc.wrapping_add(1);
        (fc, n.ext)
    }

    fn next_nwk_seq(&mut self, addr: u16) -> u8 {
        let n = self.node(addr);
        let s = n.nwk_seq;
        n.nwk_seq = s.wrapping_add(1);
        s
    }

    /// Nodes from the coordinator down to `addr`, both ends included.
    fn path_from_zc(&self, addr: u16) -> Vec<u16> {
        let mut path = vec![addr];
        let mut cur = addr;
        while cur != COORDINATOR {
            cur = self.nodes[self.index_of[&cur]].parent.unwrap_or(COORDINATOR);
            path.push(cur);
        }
        path.reverse();
        path
    }

    fn routers(&self) -> Vec<u16> {
        self.nodes
            .iter()
            .filter(|n| n.ltype == LogicalType::ZR)
            .map(|n| n.addr)
            .collect()
    }

    fn mac_header(&mut self, fcf: u16, hop_src: u16, hop_dst: u16) -> Vec<u8> {
        let seq = self.next_mac_seq(hop_src);
        let mut b = Vec::with_capacity(64);
        b.extend_from_slice(&fcf.to_le_bytes());
        b.push(seq);
        b.extend_from_slice(&PAN.to_le_bytes());
        b.extend_from_slice(&hop_dst.to_le_bytes());
        b.extend_from_slice(&hop_src.to_le_bytes());
        b
    }

    fn ack(&mut self, t: f64, seq: u8) {
        if self.cfg.control_traffic {
            self.push(t, vec![0x02, 0x00, seq], Tag::control(), 0);
        }
    }

    /// Secured NWK frame from `hop_src`; `body` is the plaintext length.
    #[allow(clippy::too_many_arguments)]
    fn nwk_frame(
        &mut self,
        hop_src: u16,
        hop_dst: u16,
        command: bool,
        nwk_src: u16,
        nwk_dst: u16,
        radius: u8,
        seq: u8,
        source_route: Option<(u8, &[u16])>,
        body: usize,
    ) -> Vec<u8> {
        let unicast = hop_dst != BROADCAST_ALL;
        let fcf: u16 = 0x8841 | if unicast { 0x0020 } else { 0 };
        let mut b = self.mac_header(fcf, hop_src, hop_dst);
        let src_ieee = (nwk_src != COORDINATOR).then(|| self.nodes[self.index_of[&nwk_src]].ext);
        let mut nfc: u16 = (command as u16) | (2 << 2) | (1 << 9);
        if !command {
            nfc |= 1 << 6;
        }
        if source_route.is_some() {
            nfc |= 1 << 10;
        }
        if src_ieee.is_some() {
            nfc |= 1 << 12;
        }
        b.extend_from_slice(&nfc.to_le_bytes());
        b.extend_from_slice(&nwk_dst.to_le_bytes());
        b.extend_from_slice(&nwk_src.to_le_bytes());
        b.push(radius);
        b.push(seq);
        if let Some(x) = src_ieee {
            b.extend_from_slice(&x.to_le_bytes());
        }
        if let Some((index, relays)) = source_route {
            b.push(relays.len() as u8);
            b.push(index);
            for r in relays {
                b.extend_from_slice(&r.to_le_bytes());
            }
        }
        let (fc, aux_src) = self.next_fc(hop_src);
        b.push(0x28);
        b.extend_from_slice(&fc.to_le_bytes());
        b.extend_from_slice(&aux_src.to_le_bytes());
        b.push(0);
        let start = b.len();
        b.resize(start + body + MIC_LEN, 0);
        self.byte_rng.fill_bytes(&mut b[start..]);
        debug_assert!(b.len() - start + AUX_LEN == body + MIC_LEN + AUX_LEN);
        b
    }

    fn maybe_retransmit(&mut self, t: f64, bytes_with_fcs: &[u8], tag: Tag, pad: u8) {
        if self.cfg.retransmission_rate > 0.0 && self.rng.gen_bool(self.cfg.retransmission_rate) {
            let dt = self.rng.gen_range(0.005..0.030);
            let order = self.txs.len();
            self.txs.push(Tx {
                t_us: secs(t + dt),
                order,
                bytes: bytes_with_fcs.to_vec(),
                kind: FrameKind::Retransmission,
                event: tag.event,
                group: tag.group,
                pad,
            });
        }
    }

    fn data_request(&mut self, t: f64, zed: u16, parent: u16) {
        let mut b = self.mac_header(0x8863, zed, parent);
        b.push(0x04);
        let seq = b[2];
        self.push(t, b, Tag::control(), 0);
        self.ack(t + 0.001, seq);
    }

    /// Unicast APL frame between the coordinator and `dev`; returns the order of the first hop.
    fn apl_unicast(&mut self, t: f64, dev: u16, spec: FrameSpec, tag: Tag) -> usize {
        let pad = if self.cfg.countermeasures.pad_random_0_3 {
            self.pad_rng.gen_range(0..=3u8)
        } else {
            0
        };
        let body = spec.len as usize + pad as usize;
        let down_path = self.path_from_zc(dev);
        let (nwk_src, nwk_dst, path) = match spec.dir {
            Dir::Down => (COORDINATOR, dev, down_path),
            Dir::Up => (dev, COORDINATOR, down_path.into_iter().rev().collect()),
        };
        let seq = self.next_nwk_seq(nwk_src);
        // Relays listed from the destination side, as in a source-route subframe.
        let relays: Vec<u16> = if nwk_src == COORDINATOR && path.len() > 2 {
            path[1..path.len() - 1].iter().rev().copied().collect()
        } else {
            Vec::new()
        };
        let mut first = None;
        let mut th = t;
        for hop in 0..path.len() - 1 {
            let (u, v) = (path[hop], path[hop + 1]);
            let v_ltype = self.nodes[self.index_of[&v]].ltype;
            if v_ltype == LogicalType::ZED && self.cfg.control_traffic {
                let lead = self.rng.gen_range(0.002..0.006);
                self.data_request(th - lead, v, u);
            }
            let sr = (!relays.is_empty()).then(|| ((relays.len() - 1).saturating_sub(hop) as u8, &relays[..]));
            let radius = 30u8.saturating_sub(hop as u8);
            let b = self.nwk_frame(u, v, false, nwk_src, nwk_dst, radius, seq, sr, body);
            let seq_mac = b[2];
            let hop_tag = if hop == 0 {
                tag
            } else {
                Tag {
                    kind: FrameKind::Relay,
                    ..tag
                }
            };
            let order = self.push(th, b, hop_tag, pad);
            first.get_or_insert(order);
            let copy = self.txs[order].bytes.clone();
            self.maybe_retransmit(th, &copy, hop_tag, pad);
            self.ack(th + 0.001, seq_mac);
            th += self.rng.gen_range(0.003..0.008);
        }
        first.expect("path has at least one hop")
    }

    /// Network-wide broadcast from the coordinator, rebroadcast once by each router.
    fn broadcast(&mut self, t: f64, command: bool, body: usize, tag: Tag) {
        let nwk_dst = if command { BROADCAST_ROUTERS } else { BROADCAST_RX_ON };
        let seq = self.next_nwk_seq(COORDINATOR);
        let pad = if !command && self.cfg.countermeasures.pad_random_0_3 {
            self.pad_rng.gen_range(0..=3u8)
        } else {
            0
        };
        let b = self.nwk_frame(COORDINATOR, BROADCAST_ALL, command, COORDINATOR, nwk_dst, 30, seq, None, body + pad as usize);
        self.push(t, b, tag, pad);
        for r in self.routers() {
            let dt = self.rng.gen_range(0.005..0.030);
            let b = self.nwk_frame(r, BROADCAST_ALL, command, COORDINATOR, nwk_dst, 29, seq, None, body + pad as usize);
            self.push(
                t + dt,
                b,
                Tag {
                    kind: FrameKind::Relay,
                    ..tag
                },
                pad,
            );
        }
    }

    fn link_status(&mut self, t: f64, src: u16) {
        let neighbours = (self.routers().len()).max(1);
        // Entries are capped so the frame stays within the 127-byte PHY limit.
        let body = 2 + 3 * neighbours.min(20);
        let seq = self.next_nwk_seq(src);
        let b = self.nwk_frame(src, BROADCAST_ALL, true, src, BROADCAST_ROUTERS, 1, seq, None, body);
        self.push(t, b, Tag::control(), 0);
    }

    /// Intra-burst frame times starting at `t0`.
    fn burst_times(&mut self, t0: f64, n: usize) -> Vec<f64> {
        let mut ts = Vec::with_capacity(n);
        let mut t = t0;
        for i in 0..n {
            if i > 0 {
                t += self.rng.gen_range(0.010..0.100);
            }
            ts.push(t);
        }
        ts
    }

    fn emit_template(&mut self, t0: f64, dev: u16, frames: &[FrameSpec], times: &[f64], tag: Tag) -> Vec<usize> {
        frames
            .iter()
            .zip(times)
            .map(|(&spec, &t)| self.apl_unicast(t, dev, spec, tag))
            .collect::<Vec<_>>()
            .into_iter()
            .inspect(|_| debug_assert!(t0 <= times[0]))
            .collect()
    }

    /// Emits a foreground burst and returns the first-hop orders of its APL frames.
    fn foreground(&mut self, t: f64, dev: u16, tpl: Template, filler: &[FrameSpec], tag: Tag) -> Vec<usize> {
        if tpl.route_request {
            let lead = self.rng.gen_range(0.10..0.20);
            self.broadcast(t - lead, true, ROUTE_REQUEST_LEN, tag);
        }
        if let Some(len) = tpl.broadcast_before {
            let lead = self.rng.gen_range(0.02..0.08);
            self.broadcast(t - lead, false, len as usize, tag);
        }
        let frames: Vec<FrameSpec> = tpl.frames.iter().chain(filler).copied().collect();
        let times = self.burst_times(t, frames.len());
        let mut orders = self.emit_template(t, dev, &frames, &times, tag);
        if tpl.repeat {
            let t2 = t + self.rng.gen_range(3.0..6.0);
            let times = self.burst_times(t2, frames.len());
            orders.extend(self.emit_template(t2, dev, &frames, &times, tag));
        }
        orders
    }
}

fn random_addr(rng: &mut ChaCha8Rng, used: &mut std::collections::HashSet<u16>) -> u16 {
    loop {
        let a = rng.gen_range(0x0001..0xfff8u16);
        if used.insert(a) {
            return a;
        }
    }
}

fn vendor_oui(table: &OuiTable, name: &str) -> (Oui, OuiClass) {
    table
        .by_name(name)
        .map(|r| (r.prefix, r.klass))
        .unwrap_or((Oui(0x02_00_00), OuiClass::Private))
}

/// Places items without fixed times so that spacing constraints hold.
fn schedule(rng: &mut ChaCha8Rng, mut fixed: Vec<Item>, mut free: Vec<Item>, duration: f64) -> Result<Vec<Item>, ConfigError> {
    free.shuffle(rng);
    fixed.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut placed: Vec<(f64, usize)> = fixed.iter().map(|i| (i.time, i.node)).collect();
    let mut cursor = FIRST_EVENT;
    let last_start = duration - EVENT_TAIL;
    for item in free.iter_mut() {
        let mut t = cursor + rng.gen_range(GLOBAL_SPACING.0..GLOBAL_SPACING.1);
        loop {
            if t > last_start {
                return Err(ConfigError::Invalid(format!(
                    "{} events and noise bursts do not fit in {duration} s",
                    fixed.len() + free.len()
                )));
            }
            let clash = placed.iter().any(|&(pt, pn)| {
                (pt - t).abs() < GLOBAL_SPACING.0 || (pn == item.node && (pt - t).abs() < NODE_SPACING)
            });
            if !clash {
                break;
            }
            t += 1.0;
        }
        item.time = t;
        cursor = t;
        placed.push((t, item.node));
    }
    fixed.extend(free);
    fixed.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)));
    Ok(fixed)
}

/// One scheduled report occurrence.
struct ReportBurst {
    dev: usize,
    frames: Vec<FrameSpec>,
    times: Vec<f64>,
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Generated, ConfigError> {
    let models = cfg.validate()?;
    let oui = OuiTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pad_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pad_rng.set_stream(1);
    let mut byte_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    byte_rng.set_stream(2);

    // Topology.
    let mut used: std::collections::HashSet<u16> = cfg.devices.iter().filter_map(|d| d.addr).collect();
    used.insert(COORDINATOR);
    let (hub_oui, hub_class) = vendor_oui(&oui, cfg.hub.vendor());
    let hub_ext = ExtAddr(rng.gen::<u64>()).with_oui(hub_oui);
    let mut nodes = vec![Node {
        addr: COORDINATOR,
        ext: hub_ext.0,
        ltype: LogicalType::ZC,
        model: None,
        parent: None,
        mac_seq: rng.gen(),
        nwk_seq: rng.gen(),
        fc: rng.gen_range(0..1u32 << 31),
    }];
    let mut classes = vec![hub_class];
    for (d, m) in cfg.devices.iter().zip(&models) {
        let addr = d.addr.unwrap_or_else(|| random_addr(&mut rng, &mut used));
        let drawn = ExtAddr(rng.gen::<u64>());
        let (vendor, class) = vendor_oui(&oui, m.vendor);
        let mut ext = d.extended.unwrap_or_else(|| drawn.with_oui(vendor));
        let mut class = if d.extended.is_some() { oui.lookup(ext).klass } else { class };
        if cfg.countermeasures.soc_oui_mask {
            let (soc, soc_class) = vendor_oui(&oui, m.soc_vendor);
            ext = ext.with_oui(soc);
            class = soc_class;
        }
        nodes.push(Node {
            addr,
            ext: ext.0,
            ltype: m.ltype(),
            model: Some(*m),
            parent: Some(d.parent.unwrap_or(COORDINATOR)),
            mac_seq: rng.gen(),
            nwk_seq: rng.gen(),
            fc: rng.gen_range(0..1u32 << 31),
        });
        classes.push(class);
    }
    let index_of: BTreeMap<u16, usize> = nodes.iter().enumerate().map(|(i, n)| (n.addr, i)).collect();
    for n in &nodes {
        let mut cur = n.addr;
        for _ in 0..=nodes.len() {
            if cur == COORDINATOR {
                break;
            }
            cur = nodes[index_of[&cur]].parent.unwrap_or(COORDINATOR);
        }
        if cur != COORDINATOR {
            return Err(ConfigError::Invalid(format!("parent chain of {:#06x} has a cycle", n.addr)));
        }
    }

    // Foreground schedule; device indices are 1-based in `nodes`.
    let fixed: Vec<Item> = cfg
        .events
        .iter()
        .map(|e| Item {
            node: e.device,
            what: Foreground::Event(e.event),
            time: e.time,
        })
        .collect();
    let mut free = Vec::new();
    for _ in 0..cfg.random_events {
        let d = rng.gen_range(0..models.len());
        let evs = models[d].archetype.events();
        free.push(Item {
            node: d,
            what: Foreground::Event(evs[rng.gen_range(0..evs.len())]),
            time: 0.0,
        });
    }
    let n_events = cfg.events.len() + cfg.random_events;
    let n_noise = (cfg.noise_rate * n_events as f64).round() as usize;
    if n_noise > 0 && models.is_empty() {
        return Err(ConfigError::Invalid("noise needs at least one device".into()));
    }
    for _ in 0..n_noise {
        free.push(Item {
            node: rng.gen_range(0..models.len()),
            what: Foreground::Noise(NoiseKind::ALL[rng.gen_range(0..NoiseKind::ALL.len())]),
            time: 0.0,
        });
    }
    let items = schedule(&mut rng, fixed, free, cfg.duration)?;

    let mut g = Gen {
        cfg,
        rng,
        pad_rng,
        byte_rng,
        nodes,
        index_of,
        txs: Vec::new(),
    };

    let mut events = Vec::new();
    let mut noise = Vec::new();
    // Per device: foreground windows (start, end) used to keep reports apart.
    let mut windows: Vec<Vec<(f64, f64)>> = vec![Vec::new(); models.len()];
    for item in &items {
        let dev = g.nodes[item.node + 1].addr;
        let first = g.txs.len();
        let (tpl, filler, tag) = match item.what {
            Foreground::Event(kind) => {
                let id = events.len();
                (
                    kind.template(),
                    cfg.hub.event_filler(),
                    Tag {
                        kind: FrameKind::Event,
                        event: Some(id),
                        group: None,
                    },
                )
            }
            Foreground::Noise(kind) => {
                let id = noise.len();
                (
                    kind.template(),
                    &[][..],
                    Tag {
                        kind: FrameKind::Noise,
                        event: Some(id),
                        group: None,
                    },
                )
            }
        };
        let orders = g.foreground(item.time, dev, tpl, filler, tag);
        let end = g.txs[first..].iter().map(|t| t.t_us).max().unwrap_or(0);
        let start = g.txs[first..].iter().map(|t| t.t_us).min().unwrap_or(0);
        windows[item.node].push(((start - EPOCH_US) as f64 / 1e6, (end - EPOCH_US) as f64 / 1e6));
        match item.what {
            Foreground::Event(kind) => {
                let m = models[item.node];
                events.push(EventTruth {
                    id: events.len(),
                    time: item.time,
                    node: dev,
                    archetype: m.archetype,
                    event: kind,
                    device_type: m.archetype.device_type(),
                    template: tpl.id.to_string(),
                    candidate: orders[0],
                    frames: orders,
                });
            }
            Foreground::Noise(kind) => noise.push(NoiseTruth {
                id: noise.len(),
                time: item.time,
                node: dev,
                kind,
                frames: orders,
            }),
        }
    }

    // Periodic reports.
    let mut reports: Vec<ReportBurst> = Vec::new();
    let mut intervals: Vec<Vec<f64>> = vec![Vec::new(); models.len()];
    if cfg.reports {
        for (d, m) in models.iter().enumerate() {
            let mut pats = m.reports(cfg.hub);
            pats.sort_by(|a, b| a.ri.total_cmp(&b.ri));
            intervals[d] = pats.iter().map(|p| p.ri).collect();
            let mut phases: Vec<f64> = Vec::new();
            for (k, p) in pats.iter().enumerate() {
                let mut phase = g.rng.gen_range(0.0..0.5 * p.ri);
                for _ in 0..50 {
                    let clear = pats[..k].iter().zip(&phases).all(|(q, &qp)| {
                        let guard = 1.0 + 2.0 * REPORT_JITTER * (p.ri + q.ri);
                        if q.ri <= 2.0 * guard {
                            return true;
                        }
                        let off = (phase - qp).rem_euclid(q.ri);
                        off > guard && q.ri - off > guard
                    });
                    if clear {
                        break;
                    }
                    phase = g.rng.gen_range(0.0..0.5 * p.ri);
                }
                phases.push(phase);
            }
            // Placed report bursts of this device: (start, end, index into `reports`).
            let mut placed: BTreeMap<u64, (f64, f64, usize, f64)> = BTreeMap::new();
            for (p, &phase) in pats.iter().zip(&phases) {
                let mut n = 0u64;
                loop {
                    let nominal = phase + n as f64 * p.ri;
                    n += 1;
                    let t = nominal + g.rng.gen_range(-REPORT_JITTER..REPORT_JITTER) * p.ri;
                    if nominal >= cfg.duration - 1.0 {
                        break;
                    }
                    if t < 0.0 || t >= cfg.duration - 1.0 {
                        continue;
                    }
                    let times = g.burst_times(t, p.frames.len());
                    let end = *times.last().expect("non-empty pattern");
                    let near_fg = |s: f64, e: f64| {
                        windows[d].iter().any(|&(ws, we)| s < we + REPORT_GUARD && e > ws - REPORT_GUARD)
                    };
                    if near_fg(t, end) {
                        continue;
                    }
                    let collision = |placed: &BTreeMap<u64, (f64, f64, usize, f64)>, t: f64, end: f64| {
                        placed
                            .range(secs(t - MAX_REPORT_SPAN - MERGE_GUARD)..=secs(end + MERGE_GUARD))
                            .find(|(_, &(s, e, _, _))| t < e + MERGE_GUARD && end > s - MERGE_GUARD)
                            .map(|(&k, &v)| (k, v))
                    };
                    match collision(&placed, t, end) {
                        None => {
                            placed.insert(secs(t), (t, end, reports.len(), p.ri));
                            reports.push(ReportBurst {
                                dev: d,
                                frames: p.frames.clone(),
                                times,
                            });
                        }
                        Some((_, (_, he, _, hri))) if hri > DENSE_REPORT_RI => {
                            // Sent once the other report is out, as a burst of its own.
                            let t2 = he + g.rng.gen_range(0.7..1.0);
                            let times = g.burst_times(t2, p.frames.len());
                            let end2 = *times.last().expect("non-empty pattern");
                            if near_fg(t2, end2) || end2 >= cfg.duration || collision(&placed, t2, end2).is_some() {
                                continue;
                            }
                            placed.insert(secs(t2), (t2, end2, reports.len(), p.ri));
                            reports.push(ReportBurst {
                                dev: d,
                                frames: p.frames.clone(),
                                times,
                            });
                        }
                        Some((h, _)) => {
                            // A dense train leaves no silent gap: chain onto the latest burst starting before `t`.
                            let host = placed.range(..=secs(t)).next_back().map_or(h, |(&k, _)| k);
                            let (hs, he, ri, hri) = placed[&host];
                            let t2 = he + g.rng.gen_range(0.010..0.100);
                            let times = g.burst_times(t2, p.frames.len());
                            let end2 = *times.last().expect("non-empty pattern");
                            if near_fg(hs, end2) || end2 >= cfg.duration {
                                continue;
                            }
                            placed.insert(host, (hs, end2, ri, hri));
                            reports[ri].frames.extend(&p.frames);
                            reports[ri].times.extend(times);
                        }
                    }
                }
            }
        }
    }
    for (gid, r) in reports.iter().enumerate() {
        let dev = g.nodes[r.dev + 1].addr;
        let tag = Tag {
            kind: FrameKind::Report,
            event: None,
            group: Some(gid),
        };
        for (&spec, &t) in r.frames.iter().zip(&r.times) {
            g.apl_unicast(t, dev, spec, tag);
        }
    }

    // Background control traffic.
    if cfg.control_traffic {
        for i in 0..g.nodes.len() {
            let (addr, ltype, parent) = (g.nodes[i].addr, g.nodes[i].ltype, g.nodes[i].parent);
            match ltype {
                LogicalType::ZED => {
                    let parent = parent.unwrap_or(COORDINATOR);
                    let mut t = g.rng.gen_range(0.0..7.5);
                    while t < cfg.duration {
                        g.data_request(t, addr, parent);
                        t += g.rng.gen_range(6.5..8.5);
                    }
                }
                LogicalType::ZR | LogicalType::ZC => {
                    let mut t = g.rng.gen_range(0.0..15.0);
                    while t < cfg.duration {
                        g.link_status(t, addr);
                        t += g.rng.gen_range(14.0..16.0);
                    }
                }
                LogicalType::Unknown => {}
            }
        }
    }

    // Serialize in time order.
    let mut txs = std::mem::take(&mut g.txs);
    txs.sort_by_key(|t| (t.t_us, t.order));
    let mut index_of_order = vec![0usize; txs.len()];
    for (i, t) in txs.iter().enumerate() {
        index_of_order[t.order] = i;
    }
    for e in events.iter_mut() {
        e.candidate = index_of_order[e.candidate];
        for f in e.frames.iter_mut() {
            *f = index_of_order[*f];
        }
    }
    for n in noise.iter_mut() {
        for f in n.frames.iter_mut() {
            *f = index_of_order[*f];
        }
    }
    let mut frames = Vec::with_capacity(txs.len());
    let mut labels = Vec::with_capacity(txs.len());
    for (i, t) in txs.into_iter().enumerate() {
        labels.push(FrameLabel {
            index: i,
            kind: t.kind,
            event: t.event,
            group: t.group,
            pad: t.pad,
        });
        frames.push(RawFrame {
            index: i,
            timestamp_us: t.t_us,
            bytes: t.bytes,
            link_type: LinkType::Ieee802154WithFcs,
        });
    }

    let node_truth = g
        .nodes
        .iter()
        .zip(&classes)
        .enumerate()
        .map(|(i, (n, &class))| match n.model {
            None => NodeTruth {
                addr: n.addr,
                extended: ExtAddr(n.ext),
                ltype: n.ltype,
                oui_class: class,
                model: "hub".into(),
                label: format!("{} hub", cfg.hub.label()),
                archetype: None,
                device_type: None,
                parent: None,
                signature_label: None,
                intervals: Vec::new(),
            },
            Some(m) => NodeTruth {
                addr: n.addr,
                extended: ExtAddr(n.ext),
                ltype: n.ltype,
                oui_class: class,
                model: m.id.into(),
                label: m.label.into(),
                archetype: Some(m.archetype),
                device_type: Some(m.archetype.device_type()),
                parent: n.parent,
                signature_label: (!intervals[i - 1].is_empty()).then(|| m.signature_label(cfg.hub)),
                intervals: intervals[i - 1].clone(),
            },
        })
        .collect();

    let truth = GroundTruth {
        capture_id: capture_id_of_frames(&frames),
        seed: cfg.seed,
        hub: cfg.hub,
        nodes: node_truth,
        events,
        noise,
        frames: labels,
    };
    Ok(Generated { frames, truth })
}

struct HashSink(Sha256);

impl Write for HashSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Capture id of the file [`Generated::write`] would produce.
pub fn capture_id_of_frames(frames: &[RawFrame]) -> String {
    let mut w = PcapWriter::new(HashSink(Sha256::new()), LinkType::Ieee802154WithFcs).expect("hash sink");
    for f in frames {
        w.write_frame(f.timestamp_us, &f.bytes).expect("ordered frames");
    }
    let sink = w.finish().expect("hash sink");
    sink.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Swaps the first two frames of report occurrence `group`, keeping timestamps,
/// as a sniffer that records them out of order would.
pub fn inject_out_of_order(gen: &mut Generated, group: usize) -> bool {
    let idx: Vec<usize> = gen
        .truth
        .frames
        .iter()
        .filter(|l| l.group == Some(group) && l.kind == FrameKind::Report)
        .map(|l| l.index)
        .collect();
    let [a, b, ..] = idx[..] else { return false };
    let tmp = std::mem::take(&mut gen.frames[a].bytes);
    gen.frames[a].bytes = std::mem::replace(&mut gen.frames[b].bytes, tmp);
    gen.truth.frames.swap(a, b);
    gen.truth.frames[a].index = a;
    gen.truth.frames[b].index = b;
    gen.truth.capture_id = capture_id_of_frames(&gen.frames);
    true
}
