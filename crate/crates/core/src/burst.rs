//! Deduplication, per-node APL selection and gap-based burst segmentation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capture::{FrameRecord, MacFrameType, NwkFrameType};

/// Default inter-frame gap that closes a burst, in seconds.
pub const DEFAULT_BURST_GAP: f64 = 0.5;
/// Window within which identical copies count as duplicates.
pub const DUP_WINDOW_US: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    ToNode,
    FromNode,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::ToNode => Direction::FromNode,
            Direction::FromNode => Direction::ToNode,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::ToNode => "to",
            Direction::FromNode => "from",
        })
    }
}

/// One APL-bearing frame as seen from a particular node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstFrame {
    pub index: usize,
    pub timestamp_us: u64,
    pub dir: Direction,
    #[serde(with = "crate::addr::short_hex")]
    pub src: u16,
    #[serde(with = "crate::addr::short_hex")]
    pub dst: u16,
    pub apl_len: u16,
    pub broadcast: bool,
}

impl BurstFrame {
    /// View of `f` relative to `node`, or `None` if `f` carries no APL payload or
    /// does not involve `node`. Broadcasts belong to their source only.
    pub fn for_node(f: &FrameRecord, node: u16) -> Option<BurstFrame> {
        let n = f.nwk.as_ref()?;
        let apl_len = apl_frame_len(f)?;
        let dir = if n.nwk_src == node {
            Direction::FromNode
        } else if n.nwk_dst == node && !n.is_broadcast {
            Direction::ToNode
        } else {
            return None;
        };
        Some(BurstFrame {
            index: f.index,
            timestamp_us: f.timestamp_us,
            dir,
            src: n.nwk_src,
            dst: n.nwk_dst,
            apl_len,
            broadcast: n.is_broadcast,
        })
    }
}

/// APL length for secured NWK Data frames; `None` for everything else.
fn apl_frame_len(f: &FrameRecord) -> Option<u16> {
    if f.mac_frame_type != MacFrameType::Data {
        return None;
    }
    let n = f.nwk.as_ref()?;
    if n.nwk_frame_type != NwkFrameType::NwkData || !n.security_enabled {
        return None;
    }
    n.apl_payload_len
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub frames: Vec<BurstFrame>,
    pub start_us: u64,
    pub end_us: u64,
}

impl Burst {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.start_us as f64 / 1e6
    }

    pub fn end(&self) -> f64 {
        self.end_us as f64 / 1e6
    }

    /// The (direction, length) sequence; two bursts with equal shapes look identical on air.
    pub fn shape(&self) -> Vec<(Direction, u16)> {
        self.frames.iter().map(|f| (f.dir, f.apl_len)).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.index).collect()
    }
}

impl fmt::Display for Burst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6}-{:.6} [",
            crate::addr::fmt_short(self.node),
            self.start(),
            self.end()
        )?;
        for (i, fr) in self.frames.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let arrow = match fr.dir {
                Direction::ToNode => "<",
                Direction::FromNode => ">",
            };
            write!(f, "{arrow}{}", fr.apl_len)?;
            if fr.broadcast {
                f.write_str("*")?;
            }
        }
        f.write_str("]")
    }
}

#[derive(Hash, PartialEq, Eq)]
enum MacSender {
    Short(u16),
    Extended(u64),
}

/// Streaming form of [`dedup`]: feed frames in capture order.
#[derive(Default)]
pub struct Deduplicator {
    // Keyed by (sender, sequence number) so the table stays bounded on long captures.
    mac: HashMap<(MacSender, u8), (u64, u64)>,
    nwk: HashSet<(u16, u32)>,
    relay: HashMap<(u16, u16, u8, NwkFrameType, Option<u16>), u64>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` for a duplicate; state only advances on kept frames.
    pub fn keep(&mut self, f: &FrameRecord) -> bool {
        if f.mac_frame_type == MacFrameType::Ack {
            return true;
        }
        let t = f.timestamp_us;
        let recent = |last: Option<&u64>| last.is_some_and(|&l| t.saturating_sub(l) < DUP_WINDOW_US);

        let sender = match (f.src_short, f.src_extended) {
            (Some(s), _) => Some(MacSender::Short(s)),
            (None, Some(x)) => Some(MacSender::Extended(x)),
            _ => None,
        };
        let mac_key = sender.map(|s| (s, f.mac_seq));
        if let Some(k) = &mac_key {
            if let Some((digest, last)) = self.mac.get(k) {
                if *digest == f.digest && recent(Some(last)) {
                    return false;
                }
            }
        }
        let mut nwk_key = None;
        let mut relay_key = None;
        if let Some(n) = &f.nwk {
            if let Some(fc) = n.frame_counter {
                if self.nwk.contains(&(n.nwk_src, fc)) {
                    return false;
                }
                nwk_key = Some((n.nwk_src, fc));
            }
            let k = (n.nwk_src, n.nwk_dst, n.nwk_seq, n.nwk_frame_type, n.apl_payload_len);
            if recent(self.relay.get(&k)) {
                return false;
            }
            relay_key = Some(k);
        }
        if let Some(k) = mac_key {
            self.mac.insert(k, (f.digest, t));
        }
        if let Some(k) = nwk_key {
            self.nwk.insert(k);
        }
        if let Some(k) = relay_key {
            self.relay.insert(k, t);
        }
        true
    }
}

/// Indices (into `frames`) of the copies that survive deduplication.
///
/// A frame is dropped when an earlier kept frame is
/// a MAC retransmission of it (same sender, sequence number and bytes within
/// [`DUP_WINDOW_US`]), carries the same NWK source and frame counter, or is a
/// relayed copy with the same NWK source, destination, sequence number and
/// length within the window. Acks always pass.
pub fn dedup_indices(frames: &[FrameRecord]) -> Vec<usize> {
    let mut d = Deduplicator::new();
    (0..frames.len()).filter(|&i| d.keep(&frames[i])).collect()
}

pub fn dedup(frames: &[FrameRecord]) -> Vec<FrameRecord> {
    dedup_indices(frames).into_iter().map(|i| frames[i].clone()).collect()
}

/// APL frames touching `node`, tagged with direction.
pub fn filter_apl<'a>(frames: impl IntoIterator<Item = &'a FrameRecord>, node: u16) -> Vec<BurstFrame> {
    frames
        .into_iter()
        .filter_map(|f| BurstFrame::for_node(f, node))
        .collect()
}

/// Single pass equivalent of calling [`filter_apl`] for every node.
pub fn partition_by_node<'a>(
    frames: impl IntoIterator<Item = &'a FrameRecord>,
) -> BTreeMap<u16, Vec<BurstFrame>> {
    let mut out = BTreeMap::new();
    for f in frames {
        push_frame(&mut out, f);
    }
    out
}

/// Appends `f` to the lists of the nodes it touches; returns the source-side
/// view when `f` is an APL frame.
pub fn push_frame(parts: &mut BTreeMap<u16, Vec<BurstFrame>>, f: &FrameRecord) -> Option<BurstFrame> {
    let n = f.nwk.as_ref()?;
    apl_frame_len(f)?;
    let (src, dst, bc) = (n.nwk_src, n.nwk_dst, n.is_broadcast);
    let from = BurstFrame::for_node(f, src)?;
    parts.entry(src).or_default().push(from);
    if !bc && dst != src {
        if let Some(bf) = BurstFrame::for_node(f, dst) {
            parts.entry(dst).or_default().push(bf);
        }
    }
    Some(from)
}

/// Splits time-ordered single-node frames wherever the gap reaches `burst_gap_us`.
pub fn segment_bursts(frames: &[BurstFrame], node: u16, burst_gap_us: u64) -> Vec<Burst> {
    let mut out: Vec<Burst> = Vec::new();
    for &f in frames {
        match out.last_mut() {
            Some(b) if f.timestamp_us.saturating_sub(b.end_us) < burst_gap_us => {
                b.end_us = f.timestamp_us;
                b.frames.push(f);
            }
            _ => out.push(Burst {
                node,
                frames: vec![f],
                start_us: f.timestamp_us,
                end_us: f.timestamp_us,
            }),
        }
    }
    out
}

pub fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{is_broadcast, NwkMeta};

    fn rec(index: usize, t_ms: u64, src: u16, dst: u16, fc: u32, len: u16) -> FrameRecord {
        FrameRecord {
            index,
            timestamp_us: t_ms * 1000,
            frame_len: 40,
            mac_frame_type: MacFrameType::Data,
            mac_seq: (index % 256) as u8,
            mac_command: None,
            src_pan: None,
            dst_pan: Some(1),
            src_short: Some(src),
            dst_short: Some(dst),
            src_extended: None,
            dst_extended: None,
            digest: index as u64,
            nwk: Some(NwkMeta {
                nwk_frame_type: NwkFrameType::NwkData,
                nwk_src: src,
                nwk_dst: dst,
                radius: 30,
                nwk_seq: (index % 256) as u8,
                security_enabled: true,
                has_source_route: false,
                extended_src: None,
                extended_dst: None,
                aux_source: None,
                frame_counter: Some(fc),
                nwk_payload_len: len + 18,
                apl_payload_len: Some(len),
                nwk_command: None,
                is_broadcast: is_broadcast(dst),
            }),
        }
    }

    fn bf(t_ms: u64) -> BurstFrame {
        BurstFrame {
            index: t_ms as usize,
            timestamp_us: t_ms * 1000,
            dir: Direction::FromNode,
            src: 1,
            dst: 0,
            apl_len: 11,
            broadcast: false,
        }
    }

    #[test]
    fn retransmission_within_window_dropped() {
        let a = rec(0, 0, 1, 0, 10, 11);
        let mut b = a.clone();
        b.index = 1;
        b.timestamp_us = 20_000;
        assert_eq!(dedup_indices(&[a, b]), vec![0]);
    }

    #[test]
    fn sequence_reuse_after_window_survives() {
        let mut a = rec(0, 0, 1, 0, 10, 11);
        let mut b = a.clone();
        b.index = 1;
        b.timestamp_us = 300_000_000;
        // Different frame counter: a genuinely new frame that reuses the MAC sequence.
        b.nwk.as_mut().unwrap().frame_counter = Some(11);
        b.nwk.as_mut().unwrap().nwk_seq = 77;
        a.digest = 5;
        b.digest = 5;
        assert_eq!(dedup_indices(&[a, b]), vec![0, 1]);
    }

    #[test]
    fn nwk_counter_duplicate_dropped() {
        let a = rec(0, 0, 1, 0, 10, 11);
        let mut b = rec(1, 5000, 1, 0, 10, 12);
        b.src_short = Some(7);
        assert_eq!(dedup_indices(&[a, b]), vec![0]);
    }

    #[test]
    fn relay_copy_dropped() {
        let a = rec(0, 0, 0, 9, 100, 11);
        let mut b = a.clone();
        b.index = 1;
        b.timestamp_us = 8_000;
        b.digest = 99;
        b.src_short = Some(4);
        b.nwk.as_mut().unwrap().frame_counter = Some(5000);
        assert_eq!(dedup_indices(&[a, b]), vec![0]);
    }

    #[test]
    fn acks_pass_through() {
        let mut a = rec(0, 0, 1, 0, 1, 11);
        a.mac_frame_type = MacFrameType::Ack;
        a.src_short = None;
        a.dst_short = None;
        a.nwk = None;
        let mut b = a.clone();
        b.index = 1;
        assert_eq!(dedup(&[a, b]).len(), 2);
    }

    #[test]
    fn filter_only_acks_is_empty() {
        let mut a = rec(0, 0, 1, 0, 1, 11);
        a.mac_frame_type = MacFrameType::Ack;
        a.nwk = None;
        assert!(filter_apl([&a], 1).is_empty());
    }

    #[test]
    fn filter_tags_direction_and_broadcast_source() {
        let to = rec(0, 0, 0, 0xab12, 1, 11);
        let from = rec(1, 10, 0xab12, 0, 2, 13);
        let bc = rec(2, 20, 0xab12, 0xffff, 3, 12);
        let other_bc = rec(3, 30, 0x0000, 0xfffd, 4, 12);
        let mut cmd = rec(4, 40, 0xab12, 0, 5, 2);
        cmd.nwk.as_mut().unwrap().nwk_frame_type = NwkFrameType::NwkCommand;
        cmd.nwk.as_mut().unwrap().apl_payload_len = None;
        let got = filter_apl([&to, &from, &bc, &other_bc, &cmd], 0xab12);
        let dirs: Vec<_> = got.iter().map(|f| (f.index, f.dir)).collect();
        assert_eq!(
            dirs,
            vec![(0, Direction::ToNode), (1, Direction::FromNode), (2, Direction::FromNode)]
        );
    }

    #[test]
    fn partition_matches_filter() {
        let frames = vec![
            rec(0, 0, 0, 0xab12, 1, 11),
            rec(1, 10, 0xab12, 0, 2, 13),
            rec(2, 20, 0x0000, 0xfffd, 4, 12),
            rec(3, 30, 0x4444, 0, 4, 17),
        ];
        let parts = partition_by_node(&frames);
        for (node, list) in &parts {
            assert_eq!(list, &filter_apl(&frames, *node));
        }
        assert_eq!(parts.len(), 3);
    }

    #[test]
    fn two_bursts_at_one_second_gap() {
        let frames: Vec<_> = [0, 100, 200, 5000, 5100].into_iter().map(bf).collect();
        let b = segment_bursts(&frames, 1, 1_000_000);
        assert_eq!(b.iter().map(Burst::len).collect::<Vec<_>>(), vec![3, 2]);
        assert_eq!(b[1].start_us, 5_000_000);
    }

    #[test]
    fn empty_segments_to_nothing() {
        assert!(segment_bursts(&[], 1, 1_000_000).is_empty());
    }

    #[test]
    fn gap_equal_to_threshold_splits() {
        let frames: Vec<_> = [0, 500].into_iter().map(bf).collect();
        assert_eq!(segment_bursts(&frames, 1, 500_000).len(), 2);
    }
}
