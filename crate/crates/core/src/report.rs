//! Analysis results as a serializable report with a plain-text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::addr::fmt_short;
use crate::analysis::{Analysis, AnalyzedBurst, BurstVerdict, DeviceSummary};
use crate::inference::{Diagnostic, Identification, OuiTable};
use crate::signature::{fmt_interval, Correlation, SignatureCollision, SignatureMatch};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptureStats {
    pub frames: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub bursts: usize,
    pub span_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstRow {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub start: f64,
    pub end: f64,
    pub verdict: BurstVerdict,
    pub network_discovery: bool,
    pub shape: String,
}

impl From<&AnalyzedBurst> for BurstRow {
    fn from(b: &AnalyzedBurst) -> Self {
        let text = b.burst.to_string();
        let shape = text.find('[').map_or(String::new(), |i| text[i..].to_string());
        BurstRow {
            node: b.burst.node,
            start: b.burst.start(),
            end: b.burst.end(),
            verdict: b.verdict,
            network_discovery: b.network_discovery,
            shape,
        }
    }
}

/// Parses as [`crate::synth::Predictions`] too: the extra fields are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub capture_id: String,
    pub stats: CaptureStats,
    pub nodes: Vec<DeviceSummary>,
    pub identifications: Vec<Identification>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub signature_matches: Vec<SignatureMatch>,
    #[serde(default)]
    pub signature_collisions: Vec<SignatureCollision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bursts: Option<Vec<BurstRow>>,
}

impl AnalysisReport {
    pub fn new(
        capture_id: impl Into<String>,
        analysis: &Analysis,
        oui: &OuiTable,
        correlation: Option<Correlation>,
        dump_bursts: bool,
    ) -> Self {
        let corr = correlation.unwrap_or_default();
        AnalysisReport {
            capture_id: capture_id.into(),
            stats: CaptureStats {
                frames: analysis.frames_in,
                parsed: analysis.parsed,
                skipped: analysis.skipped.len(),
                duplicates: analysis.duplicates,
                bursts: analysis.bursts.len(),
                span_secs: analysis.span_secs(),
            },
            nodes: analysis.devices(oui),
            identifications: analysis.identifications.clone(),
            diagnostics: analysis.diagnostics.clone(),
            signature_matches: corr.matches,
            signature_collisions: corr.collisions,
            bursts: dump_bursts.then(|| analysis.bursts.iter().map(BurstRow::from).collect()),
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} nodes, {} identifications",
            self.nodes.len(),
            self.identifications.len()
        );
        let s = &self.stats;
        let _ = writeln!(
            out,
            "frames {} parsed {} skipped {} duplicates {} bursts {} span {:.1}s",
            s.frames, s.parsed, s.skipped, s.duplicates, s.bursts, s.span_secs
        );
        if !self.nodes.is_empty() {
            out.push_str("\nnodes:\n");
        }
        for n in &self.nodes {
            let ext = n.extended.map_or_else(|| "-".to_string(), |e| e.to_string());
            let man = n
                .manufacturer
                .as_ref()
                .map_or_else(|| "-".to_string(), |m| format!("{} ({})", m.name, m.klass));
            let dt = n.device_type.map_or_else(|| "-".to_string(), |d| d.to_string());
            let _ = writeln!(
                out,
                "  {} {:<3} {ext} {man} type={dt} events={}",
                fmt_short(n.node),
                n.ltype.to_string(),
                n.events
            );
        }
        if !self.identifications.is_empty() {
            out.push_str("\nidentifications:\n");
        }
        for i in &self.identifications {
            let man = i.manufacturer.as_ref().map_or("-", |m| m.name.as_str());
            let _ = writeln!(
                out,
                "  {:.6} {} {} {} {} [{}] {man} {}",
                i.timestamp,
                fmt_short(i.node),
                i.command,
                i.device_type,
                i.event,
                i.rule_id,
                i.score
            );
        }
        if !self.diagnostics.is_empty() {
            out.push_str("\ndiagnostics:\n");
        }
        for d in &self.diagnostics {
            let _ = match d {
                Diagnostic::AmbiguousMatch {
                    node, timestamp, rules, ..
                } => writeln!(
                    out,
                    "  {timestamp:.6} {} ambiguous match: {}",
                    fmt_short(*node),
                    rules.join(", ")
                ),
                Diagnostic::UnknownSensor {
                    node, timestamp, count, ..
                } => writeln!(
                    out,
                    "  {timestamp:.6} {} unknown sensor: {count} zone status frames",
                    fmt_short(*node)
                ),
            };
        }
        if !self.signature_matches.is_empty() || !self.signature_collisions.is_empty() {
            out.push_str("\nsignature matches:\n");
        }
        for m in &self.signature_matches {
            let ris: Vec<String> = m
                .patterns
                .iter()
                .map(|p| format!("{} (observed {:.1}s)", fmt_interval(p.ri), p.observed_interval))
                .collect();
            let _ = writeln!(
                out,
                "  {} {} [{:?}] {}",
                fmt_short(m.node),
                m.device_label,
                m.basis,
                ris.join(", ")
            );
        }
        for c in &self.signature_collisions {
            let _ = writeln!(out, "  {} collision: {}", fmt_short(c.node), c.labels.join(" / "));
        }
        if let Some(bursts) = &self.bursts {
            out.push_str("\nbursts:\n");
            for b in bursts {
                let _ = writeln!(
                    out,
                    "  {} {:.6}-{:.6} {:?}{} {}",
                    fmt_short(b.node),
                    b.start,
                    b.end,
                    b.verdict,
                    if b.network_discovery { " nd" } else { "" },
                    b.shape
                );
            }
        }
        out
    }
}
