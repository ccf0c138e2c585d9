//! Zigbee NWK header and NWK security auxiliary header.

use serde::{Deserialize, Serialize};

use super::FrameError;

/// Length of the 32-bit message integrity code trailing every secured NWK frame.
pub const MIC_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NwkFrameType {
    NwkData,
    NwkCommand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRoute {
    pub relay_index: u8,
    pub relays: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxHeader {
    pub security_control: u8,
    pub frame_counter: u32,
    pub source: Option<u64>,
    pub key_seq: Option<u8>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NwkHeader {
    pub frame_type: NwkFrameType,
    pub protocol_version: u8,
    pub discover_route: u8,
    pub multicast: bool,
    pub security: bool,
    pub end_device_initiator: bool,
    pub dst: u16,
    pub src: u16,
    pub radius: u8,
    pub seq: u8,
    pub dst_ieee: Option<u64>,
    pub src_ieee: Option<u64>,
    pub source_route: Option<SourceRoute>,
    /// Routing header length, excluding the auxiliary security header.
    pub header_len: usize,
    pub aux: Option<AuxHeader>,
}

impl NwkHeader {
    pub fn is_broadcast(&self) -> bool {
        is_broadcast(self.dst)
    }
}

/// 0xFFF8..=0xFFFF are broadcast (or reserved) destinations and never name a node.
pub fn is_broadcast(addr: u16) -> bool {
    addr >= 0xFFF8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PayloadLenError {
    #[error("frame is not secured; no auxiliary header to account for")]
    NotSecured,
    #[error("frame is a NWK command, not an APL-bearing data frame")]
    NotData,
    #[error("NWK payload of {payload} bytes cannot hold a {aux}-byte auxiliary header")]
    NegativeLength { payload: usize, aux: usize },
}

/// Plaintext-equivalent length of the secured NWK payload.
///
/// `nwk_payload_len` counts everything after the NWK routing header (auxiliary
/// header, ciphertext and MIC). Payloads too short for the auxiliary header are
/// rejected; a payload that holds the header but not the MIC saturates at 0.
pub fn plaintext_len(nwk_payload_len: usize, aux_len: usize, offset: i32) -> Result<u16, PayloadLenError> {
    if nwk_payload_len < aux_len {
        return Err(PayloadLenError::NegativeLength {
            payload: nwk_payload_len,
            aux: aux_len,
        });
    }
    let len = nwk_payload_len as i64 - aux_len as i64 - MIC_LEN as i64 + offset as i64;
    Ok(len.clamp(0, u16::MAX as i64) as u16)
}

/// APS frame length carried by an encrypted NWK data frame; the quantity the
/// inference rules compare against.
pub fn compute_apl_payload_len(
    header: &NwkHeader,
    nwk_payload_len: usize,
    len_offset: i32,
) -> Result<u16, PayloadLenError> {
    let aux = header.aux.as_ref().ok_or(PayloadLenError::NotSecured)?;
    if header.frame_type != NwkFrameType::NwkData {
        return Err(PayloadLenError::NotData);
    }
    plaintext_len(nwk_payload_len, aux.len, len_offset)
}

/// Parses a NWK header from the MAC payload. Returns `Ok(None)` when the payload
/// is not a Zigbee NWK frame (inter-PAN, reserved type, unknown protocol version).
pub fn parse_nwk_header(payload: &[u8]) -> Result<Option<NwkHeader>, FrameError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], FrameError> {
        if *pos + n > payload.len() {
            return Err(FrameError::MalformedNwkHeader {
                needed: *pos + n,
                available: payload.len(),
            });
        }
        let s = &payload[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if payload.len() < 2 {
        return Ok(None);
    }
    let fc = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    let frame_type = match fc & 0x3 {
        0 => NwkFrameType::NwkData,
        1 => NwkFrameType::NwkCommand,
        _ => return Ok(None),
    };
    let protocol_version = ((fc >> 2) & 0xf) as u8;
    if !(1..=3).contains(&protocol_version) {
        return Ok(None);
    }
    let discover_route = ((fc >> 6) & 0x3) as u8;
    let multicast = fc & (1 << 8) != 0;
    let security = fc & (1 << 9) != 0;
    let has_source_route = fc & (1 << 10) != 0;
    let has_dst_ieee = fc & (1 << 11) != 0;
    let has_src_ieee = fc & (1 << 12) != 0;
    let end_device_initiator = fc & (1 << 13) != 0;

    let le16 = |b: &[u8]| u16::from_le_bytes([b[0], b[1]]);
    let le64 = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());

    let dst = le16(take(&mut pos, 2)?);
    let src = le16(take(&mut pos, 2)?);
    let radius = take(&mut pos, 1)?[0];
    let seq = take(&mut pos, 1)?[0];
    let dst_ieee = if has_dst_ieee { Some(le64(take(&mut pos, 8)?)) } else { None };
    let src_ieee = if has_src_ieee { Some(le64(take(&mut pos, 8)?)) } else { None };
    if multicast {
        take(&mut pos, 1)?;
    }
    let source_route = if has_source_route {
        let count = take(&mut pos, 1)?[0] as usize;
        let relay_index = take(&mut pos, 1)?[0];
        let list = take(&mut pos, 2 * count)?;
        Some(SourceRoute {
            relay_index,
            relays: list.chunks_exact(2).map(le16).collect(),
        })
    } else {
        None
    };
    let header_len = pos;

    let aux = if security {
        let start = pos;
        let security_control = take(&mut pos, 1)?[0];
        let frame_counter = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let key_id = (security_control >> 3) & 0x3;
        let extended_nonce = security_control & (1 << 5) != 0;
        let source = if extended_nonce { Some(le64(take(&mut pos, 8)?)) } else { None };
        let key_seq = if key_id == 1 { Some(take(&mut pos, 1)?[0]) } else { None };
        Some(AuxHeader {
            security_control,
            frame_counter,
            source,
            key_seq,
            len: pos - start,
        })
    } else {
        None
    };

    Ok(Some(NwkHeader {
        frame_type,
        protocol_version,
        discover_route,
        multicast,
        security,
        end_device_initiator,
        dst,
        src,
        radius,
        seq,
        dst_ieee,
        src_ieee,
        source_route,
        header_len,
        aux,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secured_data_header() -> NwkHeader {
        NwkHeader {
            frame_type: NwkFrameType::NwkData,
            protocol_version: 2,
            discover_route: 1,
            multicast: false,
            security: true,
            end_device_initiator: false,
            dst: 0x0000,
            src: 0x1234,
            radius: 30,
            seq: 1,
            dst_ieee: None,
            src_ieee: None,
            source_route: None,
            header_len: 8,
            aux: Some(AuxHeader {
                security_control: 0x28,
                frame_counter: 7,
                source: Some(1),
                key_seq: Some(0),
                len: 14,
            }),
        }
    }

    #[test]
    fn apl_len_subtracts_aux_and_mic() {
        let h = secured_data_header();
        assert_eq!(compute_apl_payload_len(&h, 29, 0), Ok(11));
        assert_eq!(compute_apl_payload_len(&h, 29, -1), Ok(10));
        assert_eq!(compute_apl_payload_len(&h, 29, 2), Ok(13));
    }

    #[test]
    fn short_payload_saturates_to_zero() {
        let h = secured_data_header();
        assert_eq!(compute_apl_payload_len(&h, 17, 0), Ok(0));
        assert_eq!(compute_apl_payload_len(&h, 18, 0), Ok(0));
        assert_eq!(
            compute_apl_payload_len(&h, 13, 0),
            Err(PayloadLenError::NegativeLength { payload: 13, aux: 14 })
        );
    }

    #[test]
    fn unsecured_frames_have_no_apl_len() {
        let mut h = secured_data_header();
        h.aux = None;
        h.security = false;
        assert_eq!(compute_apl_payload_len(&h, 29, 0), Err(PayloadLenError::NotSecured));
        let mut c = secured_data_header();
        c.frame_type = NwkFrameType::NwkCommand;
        assert_eq!(compute_apl_payload_len(&c, 29, 0), Err(PayloadLenError::NotData));
    }

    #[test]
    fn parses_source_route_and_aux_header() {
        // fc 0x0648: data, version 2, discover route 1, security, source route.
        let mut b = vec![0x48, 0x06, 0x34, 0x12, 0x00, 0x00, 0x1e, 0x05];
        b.extend_from_slice(&[2, 1, 0x01, 0x7a, 0x02, 0x7b]);
        b.push(0x28);
        b.extend_from_slice(&0x0102_0304u32.to_le_bytes());
        b.extend_from_slice(&0x000d_6f00_0011_2233u64.to_le_bytes());
        b.push(0);
        b.extend_from_slice(&[0xee; 15]);
        let h = parse_nwk_header(&b).unwrap().unwrap();
        assert_eq!(h.dst, 0x1234);
        assert_eq!(h.src, 0x0000);
        let sr = h.source_route.as_ref().unwrap();
        assert_eq!(sr.relays, vec![0x7a01, 0x7b02]);
        assert_eq!(sr.relay_index, 1);
        assert_eq!(h.header_len, 14);
        let aux = h.aux.unwrap();
        assert_eq!(aux.len, 14);
        assert_eq!(aux.frame_counter, 0x0102_0304);
        assert_eq!(aux.source, Some(0x000d_6f00_0011_2233));
        assert_eq!(compute_apl_payload_len(&h, b.len() - h.header_len, 0), Ok(11));
    }

    #[test]
    fn interpan_is_not_nwk() {
        assert_eq!(parse_nwk_header(&[0x0b, 0x00, 0, 0]).unwrap(), None);
    }
}
