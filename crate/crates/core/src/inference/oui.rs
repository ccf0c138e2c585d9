//! OUI prefix table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::{ExtAddr, Oui};

pub const DEFAULT_OUI_TABLE: &str = include_str!("../../data/oui.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuiClass {
    /// Prefix registered to the device vendor.
    Real,
    /// Prefix registered to the radio chipset vendor.
    Soc,
    Private,
}

impl fmt::Display for OuiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OuiClass::Real => "real",
            OuiClass::Soc => "soc",
            OuiClass::Private => "private",
        })
    }
}

impl FromStr for OuiClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(OuiClass::Real),
            "soc" => Ok(OuiClass::Soc),
            "private" => Ok(OuiClass::Private),
            _ => Err(format!("unknown OUI class `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuiRecord {
    pub prefix: Oui,
    pub name: String,
    pub klass: OuiClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manufacturer {
    pub name: String,
    pub klass: OuiClass,
    pub oui: Oui,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("OUI table line {line}: {message}")]
pub struct OuiParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuiTable {
    entries: BTreeMap<Oui, OuiRecord>,
}

impl OuiTable {
    pub fn load(path: impl AsRef<Path>) -> Result<OuiTable, OuiParseError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| OuiParseError {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        text.parse()
    }

    pub fn get(&self, oui: Oui) -> Option<&OuiRecord> {
        self.entries.get(&oui)
    }

    pub fn records(&self) -> impl Iterator<Item = &OuiRecord> {
        self.entries.values()
    }

    pub fn insert(&mut self, rec: OuiRecord) -> Option<OuiRecord> {
        self.entries.insert(rec.prefix, rec)
    }

    /// First prefix carrying `name` (case-insensitive).
    pub fn by_name(&self, name: &str) -> Option<&OuiRecord> {
        self.entries.values().find(|r| r.name.eq_ignore_ascii_case(name))
    }

    pub fn lookup(&self, addr: ExtAddr) -> Manufacturer {
        let oui = addr.oui();
        match self.entries.get(&oui) {
            Some(r) => Manufacturer {
                name: r.name.clone(),
                klass: r.klass,
                oui,
            },
            None => Manufacturer {
                name: "unknown".into(),
                klass: OuiClass::Private,
                oui,
            },
        }
    }
}

impl Default for OuiTable {
    fn default() -> Self {
        DEFAULT_OUI_TABLE.parse().expect("bundled OUI table is valid")
    }
}

impl FromStr for OuiTable {
    type Err = OuiParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |message: String| OuiParseError { line, message };
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            let [prefix, name, klass] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            let prefix: Oui = prefix.parse().map_err(err)?;
            if name.is_empty() {
                return Err(err("empty name".into()));
            }
            let rec = OuiRecord {
                prefix,
                name: name.to_string(),
                klass: klass.parse().map_err(err)?,
            };
            if entries.insert(prefix, rec).is_some() {
                return Err(err(format!("duplicate prefix {prefix}")));
            }
        }
        Ok(OuiTable { entries })
    }
}

/// Manufacturer for a node's extended address; `None` when the address was never seen.
pub fn lookup_manufacturer(addr: Option<ExtAddr>, table: &OuiTable) -> Option<Manufacturer> {
    addr.map(|a| table.lookup(a))
}
