//! Capture I/O and per-frame metadata extraction.
//!
//! Only header fields that travel in the clear are decoded. NWK payloads stay
//! opaque; the only thing taken from them is their length.

pub mod commands;
pub mod mac;
pub mod nwk;
pub mod pcap;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

pub use commands::{NwkCommandKind, NwkCommandTable};
pub use mac::{MacAddress, MacCommand, MacFrameType};
pub use nwk::{compute_apl_payload_len, is_broadcast, NwkFrameType, PayloadLenError};
pub use pcap::{read_capture, write_capture, PcapReader, PcapWriter};

/// Largest PSDU the 2.4 GHz PHY can carry.
pub const MAX_PHY_PACKET: usize = 127;
const FCS_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkType {
    /// DLT 195, frames carry a trailing 2-byte FCS.
    Ieee802154WithFcs,
    /// DLT 230, FCS absent.
    Ieee802154NoFcs,
}

impl LinkType {
    pub fn code(self) -> u32 {
        match self {
            LinkType::Ieee802154WithFcs => 195,
            LinkType::Ieee802154NoFcs => 230,
        }
    }

    pub fn from_code(code: u32) -> Result<Self, CaptureError> {
        match code {
            195 => Ok(LinkType::Ieee802154WithFcs),
            230 => Ok(LinkType::Ieee802154NoFcs),
            other => Err(CaptureError::UnsupportedLinkType(other)),
        }
    }

    fn fcs_len(self) -> usize {
        match self {
            LinkType::Ieee802154WithFcs => FCS_LEN,
            LinkType::Ieee802154NoFcs => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub index: usize,
    pub timestamp_us: u64,
    pub bytes: Vec<u8>,
    pub link_type: LinkType,
}

impl RawFrame {
    /// Frame bytes with any FCS removed.
    pub fn psdu(&self) -> &[u8] {
        let fcs = self.link_type.fcs_len().min(self.bytes.len());
        &self.bytes[..self.bytes.len() - fcs]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a microsecond pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("link-layer type {0} is not IEEE 802.15.4 (195 or 230)")]
    UnsupportedLinkType(u32),
    #[error("capture truncated inside the record starting at byte {offset}")]
    TruncatedFile { offset: u64 },
    #[error("corrupt record header at byte {offset}")]
    CorruptRecord { offset: u64 },
    #[error("frame {index} is older than its predecessor")]
    OutOfOrder { index: usize },
    #[error("frame {index} timestamp does not fit a 32-bit pcap second field")]
    TimestampOverflow { index: usize },
}

/// Why a single frame could not be turned into a [`FrameRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("empty frame")]
    Empty,
    #[error("frame of {0} bytes exceeds the 127-byte PHY limit")]
    Oversized(usize),
    #[error("MAC header needs {needed} bytes, frame has {available}")]
    MalformedMacHeader { needed: usize, available: usize },
    #[error("NWK header needs {needed} bytes, payload has {available}")]
    MalformedNwkHeader { needed: usize, available: usize },
    #[error("reserved MAC addressing mode")]
    ReservedAddressMode,
    #[error("unsupported MAC frame type {0}")]
    UnsupportedMacFrameType(u8),
}

/// Cleartext NWK metadata of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NwkMeta {
    pub nwk_frame_type: NwkFrameType,
    pub nwk_src: u16,
    pub nwk_dst: u16,
    pub radius: u8,
    pub nwk_seq: u8,
    pub security_enabled: bool,
    pub has_source_route: bool,
    /// Source IEEE address from the NWK header.
    pub extended_src: Option<u64>,
    pub extended_dst: Option<u64>,
    /// Extended address of the device that secured this hop.
    pub aux_source: Option<u64>,
    pub frame_counter: Option<u32>,
    /// Bytes after the NWK routing header (aux header + ciphertext + MIC).
    pub nwk_payload_len: u16,
    /// Plaintext-equivalent APS length; `None` for unsecured, command or too-short frames.
    pub apl_payload_len: Option<u16>,
    pub nwk_command: Option<NwkCommandKind>,
    pub is_broadcast: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_us: u64,
    pub frame_len: u16,
    pub mac_frame_type: MacFrameType,
    pub mac_seq: u8,
    pub mac_command: Option<MacCommand>,
    pub src_pan: Option<u16>,
    pub dst_pan: Option<u16>,
    pub src_short: Option<u16>,
    pub dst_short: Option<u16>,
    pub src_extended: Option<u64>,
    pub dst_extended: Option<u64>,
    /// Hash of the frame bytes; equal digests mark byte-identical retransmissions.
    pub digest: u64,
    pub nwk: Option<NwkMeta>,
}

impl FrameRecord {
    pub fn seconds(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    /// The APL payload length, when this is a secured NWK data frame with a valid length.
    pub fn apl_len(&self) -> Option<u16> {
        self.nwk.as_ref().and_then(|n| n.apl_payload_len)
    }
}

/// Frame decoder holding the tunables that affect derived lengths.
#[derive(Debug, Clone, Default)]
pub struct FrameParser {
    pub len_offset: i32,
    pub commands: NwkCommandTable,
}

impl FrameParser {
    pub fn new(len_offset: i32, commands: NwkCommandTable) -> Self {
        FrameParser { len_offset, commands }
    }

    pub fn parse(&self, raw: &RawFrame) -> Result<FrameRecord, FrameError> {
        let psdu = raw.psdu();
        if psdu.is_empty() {
            return Err(FrameError::Empty);
        }
        if psdu.len() > MAX_PHY_PACKET {
            return Err(FrameError::Oversized(psdu.len()));
        }
        let mac = mac::parse_mac_header(psdu)?;
        let mac_command = mac.command(psdu);
        if mac.frame_type == MacFrameType::MacCommand && mac_command.is_none() {
            return Err(FrameError::MalformedMacHeader {
                needed: mac.header_len + 1,
                available: psdu.len(),
            });
        }
        let mut hasher = DefaultHasher::new();
        psdu.hash(&mut hasher);

        let nwk = if mac.frame_type == MacFrameType::Data && !mac.security {
            // Deeper layers degrade gracefully: a broken NWK header keeps the MAC record.
            self.parse_nwk(&psdu[mac.header_len..]).unwrap_or(None)
        } else {
            None
        };

        Ok(FrameRecord {
            index: raw.index,
            timestamp_us: raw.timestamp_us,
            frame_len: psdu.len() as u16,
            mac_frame_type: mac.frame_type,
            mac_seq: mac.seq,
            mac_command,
            src_pan: mac.src_pan,
            dst_pan: mac.dst_pan,
            src_short: mac.src.and_then(MacAddress::short),
            dst_short: mac.dst.and_then(MacAddress::short),
            src_extended: mac.src.and_then(MacAddress::extended),
            dst_extended: mac.dst.and_then(MacAddress::extended),
            digest: hasher.finish(),
            nwk,
        })
    }

    fn parse_nwk(&self, payload: &[u8]) -> Result<Option<NwkMeta>, FrameError> {
        let Some(h) = nwk::parse_nwk_header(payload)? else {
            return Ok(None);
        };
        let payload_len = payload.len() - h.header_len;
        let apl_payload_len = compute_apl_payload_len(&h, payload_len, self.len_offset).ok();
        let nwk_command = match (&h.frame_type, &h.aux) {
            (NwkFrameType::NwkCommand, Some(aux)) => nwk::plaintext_len(payload_len, aux.len, 0)
                .ok()
                .and_then(|len| self.commands.infer(len, h.dst, h.radius)),
            _ => None,
        };
        Ok(Some(NwkMeta {
            nwk_frame_type: h.frame_type,
            nwk_src: h.src,
            nwk_dst: h.dst,
            radius: h.radius,
            nwk_seq: h.seq,
            security_enabled: h.security,
            has_source_route: h.source_route.is_some(),
            extended_src: h.src_ieee,
            extended_dst: h.dst_ieee,
            aux_source: h.aux.and_then(|a| a.source),
            frame_counter: h.aux.map(|a| a.frame_counter),
            nwk_payload_len: payload_len as u16,
            apl_payload_len,
            nwk_command,
            is_broadcast: h.is_broadcast(),
        }))
    }
}

/// Parses with default settings.
pub fn parse_frame(raw: &RawFrame) -> Result<FrameRecord, FrameError> {
    FrameParser::default().parse(raw)
}

/// One frame that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFrame {
    pub index: usize,
    pub reason: String,
}

/// Parse outcome for a whole capture: `frames_in == records.len() + skipped.len()`.
#[derive(Debug, Clone, Default)]
pub struct ParsedCapture {
    pub frames_in: usize,
    pub records: Vec<FrameRecord>,
    pub skipped: Vec<SkippedFrame>,
}

impl FrameParser {
    pub fn parse_all<'a>(&self, raws: impl IntoIterator<Item = &'a RawFrame>) -> ParsedCapture {
        let mut out = ParsedCapture::default();
        for raw in raws {
            out.frames_in += 1;
            match self.parse(raw) {
                Ok(r) => out.records.push(r),
                Err(e) => {
                    log::debug!("frame {} skipped: {e}", raw.index);
                    out.skipped.push(SkippedFrame {
                        index: raw.index,
                        reason: e.to_string(),
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(bytes: Vec<u8>, link_type: LinkType) -> RawFrame {
        RawFrame {
            index: 0,
            timestamp_us: 1,
            bytes,
            link_type,
        }
    }

    #[test]
    fn ack_record_has_no_addresses() {
        let r = parse_frame(&raw(vec![0x02, 0x00, 0x33, 0xab, 0xcd], LinkType::Ieee802154WithFcs)).unwrap();
        assert_eq!(r.mac_frame_type, MacFrameType::Ack);
        assert_eq!(r.mac_seq, 0x33);
        assert_eq!(r.frame_len, 3);
        assert!(r.src_short.is_none() && r.dst_short.is_none() && r.src_extended.is_none());
        assert!(r.src_pan.is_none() && r.dst_pan.is_none());
        assert!(r.nwk.is_none());
    }

    #[test]
    fn data_request_record() {
        let bytes = vec![0x63, 0x88, 0x07, 0x62, 0x1a, 0x77, 0x5e, 0x12, 0xab, 0x04];
        let r = parse_frame(&raw(bytes, LinkType::Ieee802154NoFcs)).unwrap();
        assert_eq!(r.mac_command, Some(MacCommand::DataRequest));
        assert_eq!(r.src_short, Some(0xab12));
        assert_eq!(r.dst_short, Some(0x5e77));
    }

    #[test]
    fn secured_source_routed_data_frame() {
        let mut b = vec![0x61, 0x88, 0x10, 0x62, 0x1a, 0x01, 0x7a, 0x00, 0x00];
        b.extend_from_slice(&[0x48, 0x06, 0x34, 0x12, 0x00, 0x00, 0x1e, 0x05, 1, 0, 0x01, 0x7a]);
        b.push(0x28);
        b.extend_from_slice(&9u32.to_le_bytes());
        b.extend_from_slice(&0x000d_6f00_0000_0001u64.to_le_bytes());
        b.push(0);
        b.extend_from_slice(&[0x55; 11 + 4]);
        let r = parse_frame(&raw(b, LinkType::Ieee802154NoFcs)).unwrap();
        let n = r.nwk.unwrap();
        assert!(n.has_source_route);
        assert!(n.security_enabled);
        assert_eq!(n.nwk_dst, 0x1234);
        assert_eq!(n.apl_payload_len, Some(11));
        assert_eq!(n.frame_counter, Some(9));
        assert_eq!(n.aux_source, Some(0x000d_6f00_0000_0001));
    }

    #[test]
    fn truncated_nwk_keeps_mac_record() {
        let b = vec![0x61, 0x88, 0x10, 0x62, 0x1a, 0x01, 0x7a, 0x00, 0x00, 0x48, 0x02, 0x34];
        let r = parse_frame(&raw(b, LinkType::Ieee802154NoFcs)).unwrap();
        assert_eq!(r.mac_frame_type, MacFrameType::Data);
        assert!(r.nwk.is_none());
    }

    #[test]
    fn parse_all_reconciles_counts() {
        let frames = vec![
            raw(vec![0x02, 0x00, 0x01], LinkType::Ieee802154NoFcs),
            raw(vec![0x61, 0x88], LinkType::Ieee802154NoFcs),
            raw(vec![], LinkType::Ieee802154NoFcs),
            raw(vec![0u8; 140], LinkType::Ieee802154NoFcs),
        ];
        let parsed = FrameParser::default().parse_all(&frames);
        assert_eq!(parsed.frames_in, 4);
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.skipped.len(), 3);
    }
}
