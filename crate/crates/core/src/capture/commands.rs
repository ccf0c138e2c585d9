//! Length-based recognition of encrypted NWK commands.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::nwk::is_broadcast;

pub const DEFAULT_NWK_COMMANDS: &str = include_str!("../../data/nwk_commands.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NwkCommandKind {
    RouteRequest,
    RouteReply,
    NetworkStatus,
    Leave,
    RouteRecord,
    RejoinRequest,
    RejoinResponse,
    LinkStatus,
    NetworkReport,
    NetworkUpdate,
}

impl NwkCommandKind {
    /// Commands that mark their source as a router.
    pub fn marks_router(self) -> bool {
        matches!(
            self,
            NwkCommandKind::LinkStatus | NwkCommandKind::RejoinResponse | NwkCommandKind::NetworkReport
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            NwkCommandKind::RouteRequest => "route_request",
            NwkCommandKind::RouteReply => "route_reply",
            NwkCommandKind::NetworkStatus => "network_status",
            NwkCommandKind::Leave => "leave",
            NwkCommandKind::RouteRecord => "route_record",
            NwkCommandKind::RejoinRequest => "rejoin_request",
            NwkCommandKind::RejoinResponse => "rejoin_response",
            NwkCommandKind::LinkStatus => "link_status",
            NwkCommandKind::NetworkReport => "network_report",
            NwkCommandKind::NetworkUpdate => "network_update",
        }
    }
}

impl fmt::Display for NwkCommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NwkCommandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use NwkCommandKind::*;
        Ok(match s {
            "route_request" => RouteRequest,
            "route_reply" => RouteReply,
            "network_status" => NetworkStatus,
            "leave" => Leave,
            "route_record" => RouteRecord,
            "rejoin_request" => RejoinRequest,
            "rejoin_response" => RejoinResponse,
            "link_status" => LinkStatus,
            "network_report" => NetworkReport,
            "network_update" => NetworkUpdate,
            other => return Err(format!("unknown NWK command `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Lengths {
    List(Vec<u16>),
    Series { base: u16, step: u16 },
}

impl Lengths {
    fn contains(&self, len: u16) -> bool {
        match self {
            Lengths::List(v) => v.contains(&len),
            Lengths::Series { base, step } => {
                len >= *base && (*step == 0 && len == *base || *step != 0 && (len - base).is_multiple_of(*step))
            }
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(series) = s.strip_suffix('n') {
            let (base, step) = series
                .split_once('+')
                .ok_or_else(|| format!("bad length series `{s}`"))?;
            let base = base.trim().parse().map_err(|_| format!("bad length `{base}`"))?;
            let step = step.trim().parse().map_err(|_| format!("bad step `{step}`"))?;
            return Ok(Lengths::Series { base, step });
        }
        s.split('|')
            .map(|p| p.trim().parse::<u16>().map_err(|_| format!("bad length `{p}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(Lengths::List)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Destination {
    Unicast,
    Broadcast,
    Exact(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CommandRow {
    kind: NwkCommandKind,
    lengths: Lengths,
    destination: Destination,
    radius: Option<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandTableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Table mapping (length, destination, radius) of an encrypted NWK command frame to its command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NwkCommandTable {
    rows: Vec<CommandRow>,
}

impl Default for NwkCommandTable {
    fn default() -> Self {
        Self::parse(DEFAULT_NWK_COMMANDS).expect("bundled NWK command table is valid")
    }
}

impl NwkCommandTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CommandTableError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CommandTableError> {
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            if !seen_header && l.starts_with("name,") {
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            let err = |message: String| CommandTableError::Parse { line, message };
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let kind = fields[0].parse().map_err(err)?;
            let lengths = Lengths::parse(fields[1]).map_err(err)?;
            let destination = match fields[2] {
                "unicast" => Destination::Unicast,
                "broadcast" => Destination::Broadcast,
                d => {
                    let hex = d.trim_start_matches("0x").trim_start_matches("0X");
                    Destination::Exact(
                        u16::from_str_radix(hex, 16).map_err(|_| err(format!("bad destination `{d}`")))?,
                    )
                }
            };
            let radius = match fields[3] {
                "*" => None,
                r => Some(r.parse().map_err(|_| err(format!("bad radius `{r}`")))?),
            };
            rows.push(CommandRow {
                kind,
                lengths,
                destination,
                radius,
            });
        }
        Ok(NwkCommandTable { rows })
    }

    pub fn infer(&self, plaintext_len: u16, dst: u16, radius: u8) -> Option<NwkCommandKind> {
        self.rows
            .iter()
            .find(|row| {
                row.lengths.contains(plaintext_len)
                    && match row.destination {
                        Destination::Unicast => !is_broadcast(dst),
                        Destination::Broadcast => is_broadcast(dst),
                        Destination::Exact(a) => a == dst,
                    }
                    && row.radius.is_none_or(|r| r == radius)
            })
            .map(|row| row.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_recognises_router_commands() {
        let t = NwkCommandTable::default();
        assert_eq!(t.infer(2 + 3 * 4, 0xfffc, 1), Some(NwkCommandKind::LinkStatus));
        assert_eq!(t.infer(14, 0xfffc, 30), Some(NwkCommandKind::RouteRequest));
        assert_eq!(t.infer(6, 0xfffd, 10), Some(NwkCommandKind::RouteRequest));
        assert_eq!(t.infer(4, 0x1234, 5), Some(NwkCommandKind::RejoinResponse));
        assert_eq!(t.infer(12, 0x0000, 5), Some(NwkCommandKind::NetworkReport));
        assert_eq!(t.infer(7, 0x0000, 5), None);
    }

    #[test]
    fn bad_row_reports_line() {
        let err = NwkCommandTable::parse("name,lengths,destination,radius\nlink_status,2+3n,0xfffc\n")
            .unwrap_err();
        assert!(matches!(err, CommandTableError::Parse { line: 2, .. }));
        let err = NwkCommandTable::parse("bogus,4,unicast,*").unwrap_err();
        assert!(matches!(err, CommandTableError::Parse { line: 1, .. }));
    }
}
