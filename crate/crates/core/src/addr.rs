//! Address newtypes shared across modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// 64-bit IEEE (MAC) address, most significant byte first when printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtAddr(pub u64);

impl ExtAddr {
    /// The 24-bit organizationally unique identifier.
    pub fn oui(self) -> Oui {
        Oui((self.0 >> 40) as u32)
    }

    pub fn with_oui(self, oui: Oui) -> ExtAddr {
        ExtAddr(((oui.0 as u64) << 40) | (self.0 & 0xff_ffff_ffff))
    }
}

impl fmt::Display for ExtAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl FromStr for ExtAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex: String = s.chars().filter(|c| !matches!(c, ':' | '-')).collect();
        let hex = hex.trim_start_matches("0x");
        if hex.len() != 16 {
            return Err(format!("`{s}` is not a 64-bit address"));
        }
        u64::from_str_radix(hex, 16)
            .map(ExtAddr)
            .map_err(|_| format!("`{s}` is not a 64-bit address"))
    }
}

impl Serialize for ExtAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 24-bit OUI prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Oui(pub u32);

impl fmt::Display for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02x}:{:02x}:{:02x}",
            (self.0 >> 16) & 0xff,
            (self.0 >> 8) & 0xff,
            self.0 & 0xff
        )
    }
}

impl FromStr for Oui {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex: String = s.chars().filter(|c| !matches!(c, ':' | '-')).collect();
        let hex = hex.trim_start_matches("0x");
        if hex.len() != 6 {
            return Err(format!("`{s}` is not a 24-bit OUI"));
        }
        u32::from_str_radix(hex, 16)
            .map(Oui)
            .map_err(|_| format!("`{s}` is not a 24-bit OUI"))
    }
}

impl Serialize for Oui {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Oui {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Formats a logical address as `0xabcd`.
pub fn fmt_short(addr: u16) -> String {
    format!("{addr:#06x}")
}

pub fn parse_short(s: &str) -> Result<u16, String> {
    let t = s.trim();
    let hex = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X"));
    match hex {
        Some(h) => u16::from_str_radix(h, 16),
        None => t.parse(),
    }
    .map_err(|_| format!("`{s}` is not a 16-bit address"))
}

/// Serde helpers for 16-bit logical addresses written as hex strings.
pub mod short_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u16, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::fmt_short(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u16, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_short(&s).map_err(serde::de::Error::custom)
    }
}

/// Like [`short_hex`] for optional fields; pair with `skip_serializing_if = "Option::is_none"`.
pub mod opt_short_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u16>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => s.serialize_str(&super::fmt_short(*a)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u16>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| super::parse_short(&s).map_err(serde::de::Error::custom)).transpose()
    }
}
