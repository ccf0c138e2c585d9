//! IEEE 802.15.4 MAC header decoding (2003/2006 addressing rules).

use serde::{Deserialize, Serialize};

use super::FrameError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacFrameType {
    Beacon,
    Data,
    Ack,
    MacCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacCommand {
    DataRequest,
    Other(u8),
}

const CMD_DATA_REQUEST: u8 = 0x04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacAddress {
    Short(u16),
    Extended(u64),
}

impl MacAddress {
    pub fn short(self) -> Option<u16> {
        match self {
            MacAddress::Short(s) => Some(s),
            MacAddress::Extended(_) => None,
        }
    }

    pub fn extended(self) -> Option<u64> {
        match self {
            MacAddress::Extended(e) => Some(e),
            MacAddress::Short(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacHeader {
    pub frame_type: MacFrameType,
    pub security: bool,
    pub frame_pending: bool,
    pub ack_request: bool,
    pub pan_id_compression: bool,
    pub version: u8,
    pub seq: u8,
    pub dst_pan: Option<u16>,
    pub dst: Option<MacAddress>,
    pub src_pan: Option<u16>,
    pub src: Option<MacAddress>,
    /// Bytes consumed by the header, i.e. offset of the MAC payload.
    pub header_len: usize,
}

impl MacHeader {
    /// MAC command identifier, for command frames whose payload is non-empty.
    pub fn command(&self, frame: &[u8]) -> Option<MacCommand> {
        if self.frame_type != MacFrameType::MacCommand {
            return None;
        }
        frame.get(self.header_len).map(|&id| match id {
            CMD_DATA_REQUEST => MacCommand::DataRequest,
            other => MacCommand::Other(other),
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.pos + n > self.buf.len() {
            return Err(FrameError::MalformedMacHeader {
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn address(&mut self, mode: u16) -> Result<Option<MacAddress>, FrameError> {
        match mode {
            0 => Ok(None),
            2 => Ok(Some(MacAddress::Short(self.u16()?))),
            3 => Ok(Some(MacAddress::Extended(self.u64()?))),
            _ => Err(FrameError::ReservedAddressMode),
        }
    }
}

/// Parses the MAC header of `frame` (FCS already removed).
pub fn parse_mac_header(frame: &[u8]) -> Result<MacHeader, FrameError> {
    let mut c = Cursor { buf: frame, pos: 0 };
    let fc = c.u16()?;
    let frame_type = match fc & 0x7 {
        0 => MacFrameType::Beacon,
        1 => MacFrameType::Data,
        2 => MacFrameType::Ack,
        3 => MacFrameType::MacCommand,
        t => return Err(FrameError::UnsupportedMacFrameType(t as u8)),
    };
    let security = fc & (1 << 3) != 0;
    let frame_pending = fc & (1 << 4) != 0;
    let ack_request = fc & (1 << 5) != 0;
    let pan_id_compression = fc & (1 << 6) != 0;
    let dst_mode = (fc >> 10) & 0x3;
    let version = ((fc >> 12) & 0x3) as u8;
    let src_mode = (fc >> 14) & 0x3;
    let seq = c.take(1)?[0];

    let dst_pan = if dst_mode != 0 { Some(c.u16()?) } else { None };
    let dst = c.address(dst_mode)?;
    let src_pan = if src_mode != 0 {
        if pan_id_compression && dst_pan.is_some() {
            dst_pan
        } else {
            Some(c.u16()?)
        }
    } else {
        None
    };
    let src = c.address(src_mode)?;

    Ok(MacHeader {
        frame_type,
        security,
        frame_pending,
        ack_request,
        pan_id_compression,
        version,
        seq,
        dst_pan,
        dst,
        src_pan,
        src,
        header_len: c.pos,
    })
}

/// CRC-16/KERMIT as used for the 802.15.4 FCS, little-endian on air.
pub fn fcs(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0;
    for &b in bytes {
        crc ^= b as u16;
        for _ in 0..8 {
            if crc & 1 != 0 {
                crc = (crc >> 1) ^ 0x8408;
            } else {
                crc >>= 1;
            }
        }
    }
    crc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_has_no_addressing() {
        let h = parse_mac_header(&[0x02, 0x00, 0x5a]).unwrap();
        assert_eq!(h.frame_type, MacFrameType::Ack);
        assert_eq!(h.seq, 0x5a);
        assert!(h.dst.is_none() && h.src.is_none());
        assert!(h.dst_pan.is_none() && h.src_pan.is_none());
        assert_eq!(h.header_len, 3);
    }

    #[test]
    fn data_request_with_compressed_pan() {
        // fc 0x8863: command, ack request, PAN compression, short dst, short src.
        let bytes = [0x63, 0x88, 0x07, 0x62, 0x1a, 0x77, 0x5e, 0x12, 0xab, 0x04];
        let h = parse_mac_header(&bytes).unwrap();
        assert_eq!(h.frame_type, MacFrameType::MacCommand);
        assert_eq!(h.dst, Some(MacAddress::Short(0x5e77)));
        assert_eq!(h.src, Some(MacAddress::Short(0xab12)));
        assert_eq!(h.src_pan, Some(0x1a62));
        assert_eq!(h.command(&bytes), Some(MacCommand::DataRequest));
    }

    #[test]
    fn extended_source_without_compression() {
        // data, dst short, src extended, no PAN compression -> both PAN ids present
        let mut bytes = vec![0x01, 0xc8, 0x01, 0x62, 0x1a, 0x00, 0x00, 0x62, 0x1a];
        bytes.extend_from_slice(&0x0017_8801_0203_0405u64.to_le_bytes());
        let h = parse_mac_header(&bytes).unwrap();
        assert_eq!(h.src, Some(MacAddress::Extended(0x0017_8801_0203_0405)));
        assert_eq!(h.header_len, bytes.len());
    }

    #[test]
    fn short_frame_is_malformed() {
        let err = parse_mac_header(&[0x61, 0x88, 0x01, 0x62]).unwrap_err();
        assert!(matches!(err, FrameError::MalformedMacHeader { .. }));
    }

    #[test]
    fn fcs_check_value() {
        // CRC-16/KERMIT check value for "123456789".
        assert_eq!(fcs(b"123456789"), 0x2189);
    }
}
