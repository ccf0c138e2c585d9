//! Periodic reporting signatures: extraction from idle traffic, storage and correlation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::fmt_short;
use crate::analysis::{Analysis, AnalyzedBurst};
use crate::burst::Burst;
use crate::inference::{lookup_manufacturer, OuiTable};
use crate::mapper::{LogicalType, NodeMap, COORDINATOR};

/// Minimum number of concordant bursts a pattern needs before it is extracted.
pub const MIN_EXTRACT_BURSTS: usize = 3;
/// Number of bursts that must reproduce a stored pattern during correlation.
pub const MIN_MATCH_BURSTS: usize = 2;

/// Acceptance band around a reporting interval: `max(floor, fraction * ri)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub floor: f64,
    pub fraction: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            floor: 2.0,
            fraction: 0.10,
        }
    }
}

impl Tolerance {
    pub fn band(&self, ri: f64) -> f64 {
        self.floor.max(self.fraction * ri)
    }

    pub fn accepts(&self, ri: f64, observed: f64) -> bool {
        (observed - ri).abs() <= self.band(ri)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureFrame {
    pub src: LogicalType,
    pub dst: LogicalType,
    pub pl: u16,
    /// Reporting interval of the pattern this frame belongs to, seconds.
    pub ri: f64,
}

/// One periodic pattern; every frame carries the same interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub frames: Vec<SignatureFrame>,
}

pub type PatternKey = Vec<(LogicalType, LogicalType, u16)>;

impl Pattern {
    pub fn new(key: &PatternKey, ri: f64) -> Pattern {
        Pattern {
            frames: key
                .iter()
                .map(|&(src, dst, pl)| SignatureFrame { src, dst, pl, ri })
                .collect(),
        }
    }

    pub fn ri(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.ri)
    }

    pub fn key(&self) -> PatternKey {
        self.frames.iter().map(|f| (f.src, f.dst, f.pl)).collect()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RI {} [", fmt_interval(self.ri()))?;
        for (i, fr) in self.frames.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}->{} {}", fr.src, fr.dst, fr.pl)?;
        }
        f.write_str("]")
    }
}

/// Short human form: `1s`, `2m`, `1h`, or seconds with one decimal.
pub fn fmt_interval(secs: f64) -> String {
    let r = secs.round();
    if (secs - r).abs() > 0.05 {
        return format!("{secs:.1}s");
    }
    let s = r as u64;
    if s >= 3600 && s.is_multiple_of(3600) {
        format!("{}h", s / 3600)
    } else if s >= 60 && s.is_multiple_of(60) {
        format!("{}m", s / 60)
    } else {
        format!("{s}s")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingSignature {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oui_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub_hint: Option<String>,
    #[serde(rename = "pattern")]
    pub patterns: Vec<Pattern>,
}

impl ReportingSignature {
    pub fn intervals(&self) -> Vec<f64> {
        self.patterns.iter().map(Pattern::ri).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignatureError {
    #[error("node {} is not idle: burst at {start:.3}s (frame {index}) matches a command rule", fmt_short(*node))]
    RejectedNotIdle { node: u16, start: f64, index: usize },
    #[error("node {}: no pattern with {MIN_EXTRACT_BURSTS} concordant bursts", fmt_short(*node))]
    InsufficientData { node: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("signature store record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("signature store: duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("signature store i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignatureStore {
    #[serde(default, rename = "signature")]
    pub signatures: Vec<ReportingSignature>,
}

impl SignatureStore {
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&ReportingSignature> {
        self.signatures.iter().find(|s| s.label == label)
    }

    pub fn add(&mut self, sig: ReportingSignature) -> Result<(), StoreError> {
        if self.get(&sig.label).is_some() {
            return Err(StoreError::DuplicateLabel(sig.label));
        }
        self.signatures.push(sig);
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("store serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path.as_ref(), self.to_toml())
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    /// A missing file loads as an empty store.
    pub fn load(path: impl AsRef<Path>) -> Result<SignatureStore, StoreError> {
        match std::fs::read_to_string(path.as_ref()) {
            Ok(text) => text.parse(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(SignatureStore::default()),
            Err(e) => Err(StoreError::Io(format!("{}: {e}", path.as_ref().display()))),
        }
    }
}

/// 1-based number of the `[[signature]]` record containing byte `offset`.
fn record_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .lines()
        .filter(|l| l.trim_start().starts_with("[[signature]]"))
        .count()
        .max(1)
}

impl FromStr for SignatureStore {
    type Err = StoreError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let store: SignatureStore = toml::from_str(text).map_err(|e| StoreError::Parse {
            record: e.span().map_or(0, |s| record_at(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut seen = std::collections::HashSet::new();
        for (i, s) in store.signatures.iter().enumerate() {
            let err = |message: String| StoreError::Parse { record: i + 1, message };
            if !seen.insert(s.label.as_str()) {
                return Err(err(format!("duplicate label `{}`", s.label)));
            }
            if s.patterns.is_empty() || s.patterns.iter().any(|p| p.frames.is_empty()) {
                return Err(err("signature needs at least one non-empty pattern".into()));
            }
            if s.patterns.iter().flat_map(|p| &p.frames).any(|f| f.ri <= 0.0 || !f.ri.is_finite()) {
                return Err(err("reporting interval must be positive".into()));
            }
        }
        Ok(store)
    }
}

pub fn burst_key(burst: &Burst, map: &NodeMap) -> PatternKey {
    burst
        .frames
        .iter()
        .map(|f| (map.ltype_of(f.src), map.ltype_of(f.dst), f.apl_len))
        .collect()
}

/// Idle bursts of `node` grouped by pattern key, start times in order.
fn idle_groups<'a>(
    bursts: impl Iterator<Item = &'a AnalyzedBurst>,
    map: &NodeMap,
) -> BTreeMap<PatternKey, Vec<f64>> {
    let mut groups: BTreeMap<PatternKey, Vec<f64>> = BTreeMap::new();
    for b in bursts.filter(|b| !b.verdict.is_functional()) {
        groups.entry(burst_key(&b.burst, map)).or_default().push(b.burst.start());
    }
    groups
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Periodic interval of a burst group, if at least [`MIN_EXTRACT_BURSTS`]
/// bursts are spaced consistently.
fn periodic_interval(starts: &[f64], tol: &Tolerance) -> Option<f64> {
    if starts.len() < MIN_EXTRACT_BURSTS {
        return None;
    }
    let mut gaps: Vec<f64> = starts.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(&mut gaps);
    let mut concordant: Vec<f64> = gaps.into_iter().filter(|&g| tol.accepts(m, g)).collect();
    if concordant.len() + 1 < MIN_EXTRACT_BURSTS {
        return None;
    }
    Some(median(&mut concordant))
}

pub fn extract_signature(
    analysis: &Analysis,
    node: u16,
    label: &str,
    hub_hint: Option<&str>,
    oui: &OuiTable,
    tol: &Tolerance,
) -> Result<ReportingSignature, SignatureError> {
    if let Some(b) = analysis.bursts_of(node).find(|b| b.verdict.is_functional()) {
        return Err(SignatureError::RejectedNotIdle {
            node,
            start: b.burst.start(),
            index: b.burst.frames[0].index,
        });
    }
    let mut patterns: Vec<Pattern> = idle_groups(analysis.bursts_of(node), &analysis.map)
        .into_iter()
        .filter_map(|(key, starts)| periodic_interval(&starts, tol).map(|ri| Pattern::new(&key, ri)))
        .collect();
    if patterns.is_empty() {
        return Err(SignatureError::InsufficientData { node });
    }
    patterns.sort_by(|a, b| a.ri().total_cmp(&b.ri()).then_with(|| a.key().cmp(&b.key())));
    let oui_hint = lookup_manufacturer(analysis.map.extended_of(node), oui)
        .filter(|m| m.klass != crate::inference::OuiClass::Private)
        .map(|m| m.name);
    Ok(ReportingSignature {
        label: label.to_string(),
        oui_hint,
        hub_hint: hub_hint.map(str::to_string),
        patterns,
    })
}

/// Nodes that carry APL traffic, excluding the coordinator.
pub fn candidate_nodes(analysis: &Analysis) -> Vec<u16> {
    let mut nodes: Vec<u16> = analysis.bursts.iter().map(|b| b.burst.node).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes.retain(|&n| n != COORDINATOR);
    nodes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchBasis {
    PatternAndInterval,
    PatternIntervalPlusOui,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEvidence {
    pub ri: f64,
    pub observed_interval: f64,
    /// Start times of the two bursts that reproduced the pattern.
    pub bursts: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMatch {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub device_label: String,
    pub basis: MatchBasis,
    pub patterns: Vec<PatternEvidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureCollision {
    #[serde(with = "crate::addr::short_hex")]
    pub node: u16,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub matches: Vec<SignatureMatch>,
    pub collisions: Vec<SignatureCollision>,
}

/// First consecutive pair of bursts whose spacing fits `ri`.
fn reproduce(starts: &[f64], ri: f64, tol: &Tolerance) -> Option<PatternEvidence> {
    starts.windows(MIN_MATCH_BURSTS).find_map(|w| {
        let gap = w[MIN_MATCH_BURSTS - 1] - w[0];
        tol.accepts(ri, gap).then_some(PatternEvidence {
            ri,
            observed_interval: gap,
            bursts: [w[0], w[MIN_MATCH_BURSTS - 1]],
        })
    })
}

/// Matches every node's idle bursts against the store.
///
/// A signature is a candidate for a node when at least one of its patterns is
/// reproduced and none of its patterns that the capture was long enough to
/// show (two intervals plus tolerance) is missing. The candidates with the most
/// reproduced patterns win; a tie is broken by the node's OUI, otherwise it is
/// reported as a collision.
pub fn correlate(analysis: &Analysis, store: &SignatureStore, oui: &OuiTable, tol: &Tolerance) -> Correlation {
    let mut out = Correlation::default();
    let span = analysis.span_secs();
    for node in candidate_nodes(analysis) {
        let groups = idle_groups(analysis.bursts_of(node), &analysis.map);
        if groups.is_empty() {
            continue;
        }
        let mut best: Vec<(&ReportingSignature, Vec<PatternEvidence>)> = Vec::new();
        let mut best_n = 0;
        'sig: for sig in &store.signatures {
            let mut evidence = Vec::new();
            for p in &sig.patterns {
                let found = groups.get(&p.key()).and_then(|s| reproduce(s, p.ri(), tol));
                match found {
                    Some(e) => evidence.push(e),
                    None if span >= 2.0 * p.ri() + tol.band(p.ri()) => continue 'sig,
                    None => {}
                }
            }
            if evidence.is_empty() || evidence.len() < best_n {
                continue;
            }
            if evidence.len() > best_n {
                best.clear();
                best_n = evidence.len();
            }
            best.push((sig, evidence));
        }
        let (sig, patterns, basis) = match best.len() {
            0 => continue,
            1 => {
                let (s, e) = best.pop().expect("one candidate");
                (s, e, MatchBasis::PatternAndInterval)
            }
            _ => {
                let name = lookup_manufacturer(analysis.map.extended_of(node), oui).map(|m| m.name);
                let mut by_oui: Vec<_> = best
                    .iter()
                    .filter(|(s, _)| name.is_some() && s.oui_hint.as_deref() == name.as_deref())
                    .collect();
                if by_oui.len() == 1 {
                    let (s, e) = by_oui.pop().expect("one candidate");
                    (*s, e.clone(), MatchBasis::PatternIntervalPlusOui)
                } else {
                    out.collisions.push(SignatureCollision {
                        node,
                        labels: best.iter().map(|(s, _)| s.label.clone()).collect(),
                    });
                    continue;
                }
            }
        };
        out.matches.push(SignatureMatch {
            node,
            device_label: sig.label.clone(),
            basis,
            patterns,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(label: &str, ri: f64) -> ReportingSignature {
        ReportingSignature {
            label: label.into(),
            oui_hint: Some("ember".into()),
            hub_hint: None,
            patterns: vec![Pattern::new(&vec![(LogicalType::ZED, LogicalType::ZC, 20)], ri)],
        }
    }

    #[test]
    fn tolerance_floor_and_fraction() {
        let t = Tolerance::default();
        assert_eq!(t.band(1.0), 2.0);
        assert_eq!(t.band(600.0), 60.0);
        assert!(t.accepts(600.0, 655.0));
        assert!(!t.accepts(600.0, 661.0));
    }

    #[test]
    fn interval_needs_three_bursts() {
        let t = Tolerance::default();
        assert_eq!(periodic_interval(&[0.0, 60.0], &t), None);
        assert_eq!(periodic_interval(&[0.0, 60.0, 121.0], &t), Some(60.5));
    }

    #[test]
    fn interval_survives_one_missed_report() {
        let t = Tolerance::default();
        let ri = periodic_interval(&[0.0, 300.0, 900.0, 1200.0, 1500.0], &t).unwrap();
        assert_eq!(ri, 300.0);
    }

    #[test]
    fn store_round_trip() {
        let mut st = SignatureStore::default();
        st.add(sig("Yale Door Lock @ Echo", 600.0)).unwrap();
        st.add(sig("Philips Hue @ SMT", 1.0)).unwrap();
        let back: SignatureStore = st.to_toml().parse().unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn duplicate_label_names_record() {
        let mut st = SignatureStore::default();
        st.signatures.push(sig("a", 1.0));
        st.signatures.push(sig("b", 1.0));
        st.signatures.push(sig("a", 2.0));
        let err = st.to_toml().parse::<SignatureStore>().unwrap_err();
        assert_eq!(
            err,
            StoreError::Parse {
                record: 3,
                message: "duplicate label `a`".into()
            }
        );
    }

    #[test]
    fn parse_error_names_record() {
        let text = "[[signature]]\nlabel = \"a\"\n[[signature.pattern]]\nframes = []\n\
                    [[signature]]\nlabel = 5\n";
        match text.parse::<SignatureStore>().unwrap_err() {
            StoreError::Parse { record, .. } => assert_eq!(record, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn intervals_format_compactly() {
        assert_eq!(fmt_interval(1.0), "1s");
        assert_eq!(fmt_interval(120.0), "2m");
        assert_eq!(fmt_interval(3600.0), "1h");
        assert_eq!(fmt_interval(90.0), "90s");
        assert_eq!(fmt_interval(1.26), "1.3s");
    }
}
