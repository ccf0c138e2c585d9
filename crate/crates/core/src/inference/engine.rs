//! Evaluation of rules against one burst.

use crate::burst::{Burst, BurstFrame, Direction};
use crate::mapper::{LogicalType, NodeMap};

use super::rules::{Condition, InferenceRule, RuleDirection, RuleSet};

pub const CANDIDATE_MIN_LEN: u16 = 11;
pub const CANDIDATE_MAX_LEN: u16 = 17;

/// Facts about a burst that come from outside its own frames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BurstContext {
    /// A broadcast Route Request was seen in the burst window.
    pub network_discovery: bool,
    /// Broadcast APL frames from any node in the burst window, in capture order.
    pub broadcasts: Vec<BurstFrame>,
    /// An identically shaped burst of the same node follows within the repeat window.
    pub repeats: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMatch {
    /// Position of the rule in its [`RuleSet`].
    pub rule: usize,
    pub rule_id: String,
    /// Position of the candidate inside the burst.
    pub position: usize,
    /// Capture index of the candidate.
    pub candidate: usize,
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("frame {candidate}: rules {rules:?} all match")]
pub struct AmbiguousMatch {
    pub candidate: usize,
    pub rules: Vec<String>,
}

/// Position of the first frame with a length in 11..=17 inside the first half
/// (rounded up) of the burst.
pub fn candidate_frame(burst: &Burst) -> Option<usize> {
    let half = burst.frames.len().div_ceil(2);
    burst.frames[..half]
        .iter()
        .position(|f| (CANDIDATE_MIN_LEN..=CANDIDATE_MAX_LEN).contains(&f.apl_len))
}

fn direction_matches(dir: RuleDirection, f: &BurstFrame, map: &NodeMap) -> bool {
    if f.broadcast {
        return false;
    }
    let (s, d) = (map.ltype_of(f.src), map.ltype_of(f.dst));
    match dir {
        RuleDirection::ZcToZed => s == LogicalType::ZC && d == LogicalType::ZED,
        RuleDirection::ZcToDevice => {
            s == LogicalType::ZC && matches!(d, LogicalType::ZED | LogicalType::ZR)
        }
        RuleDirection::ZedToZc => s == LogicalType::ZED && d == LogicalType::ZC,
    }
}

fn preceding<'a>(burst: &'a Burst, ctx: &'a BurstContext, pos: usize) -> Option<&'a BurstFrame> {
    let cand = &burst.frames[pos];
    let inner = pos.checked_sub(1).map(|p| &burst.frames[p]);
    let outer = ctx
        .broadcasts
        .iter()
        .filter(|b| b.index < cand.index)
        .max_by_key(|b| b.index);
    match (inner, outer) {
        (Some(a), Some(b)) => Some(if b.index > a.index { b } else { a }),
        (a, b) => a.or(b),
    }
}

fn holds(c: &Condition, burst: &Burst, ctx: &BurstContext, pos: usize) -> bool {
    let cand = &burst.frames[pos];
    let mut responses = burst.frames[pos + 1..].iter().filter(|f| f.dir != cand.dir);
    match c {
        Condition::ResponseIn(set) => responses.next().is_some_and(|r| set.contains(&r.apl_len)),
        Condition::ResponseNotIn(set) => !responses.any(|r| set.contains(&r.apl_len)),
        Condition::PrecedingNot { len, broadcast_only } => match preceding(burst, ctx, pos) {
            Some(p) => !(p.apl_len == *len && (p.broadcast || !broadcast_only)),
            None => true,
        },
        Condition::RequiresNetworkDiscovery => ctx.network_discovery,
        Condition::ExcludesBroadcastLen(v) => !ctx.broadcasts.iter().any(|b| b.apl_len == *v),
        Condition::ZoneStatusCount(n) => {
            burst
                .frames
                .iter()
                .filter(|f| f.dir == cand.dir && f.apl_len == cand.apl_len)
                .count()
                == *n
        }
        Condition::BurstRepeats(r) => ctx.repeats == *r,
    }
}

fn rule_fires(rule: &InferenceRule, burst: &Burst, ctx: &BurstContext, pos: usize, map: &NodeMap) -> bool {
    let cand = &burst.frames[pos];
    cand.apl_len == rule.target_len
        && direction_matches(rule.direction, cand, map)
        && rule.conditions.iter().all(|c| holds(c, burst, ctx, pos))
}

/// Tests the burst's candidate frame against every rule.
///
/// Only the first candidate is considered; a burst whose candidate matches no
/// rule yields `Ok(None)` even if a later frame would.
pub fn infer_command(
    burst: &Burst,
    ctx: &BurstContext,
    map: &NodeMap,
    rules: &RuleSet,
) -> Result<Option<RuleMatch>, AmbiguousMatch> {
    let Some(pos) = candidate_frame(burst) else {
        return Ok(None);
    };
    let fired: Vec<usize> = rules
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| rule_fires(r, burst, ctx, pos, map))
        .map(|(i, _)| i)
        .collect();
    let candidate = burst.frames[pos].index;
    match fired[..] {
        [] => Ok(None),
        [i] => Ok(Some(RuleMatch {
            rule: i,
            rule_id: rules.rules[i].id.clone(),
            position: pos,
            candidate,
            frames: burst.indices(),
        })),
        _ => Err(AmbiguousMatch {
            candidate,
            rules: fired.iter().map(|&i| rules.rules[i].id.clone()).collect(),
        }),
    }
}

/// Zone Status frame count when the candidate is a ZED-to-ZC 17-byte frame.
pub(crate) fn zone_status_count(burst: &Burst, pos: usize, map: &NodeMap) -> Option<usize> {
    let cand = &burst.frames[pos];
    if cand.apl_len != CANDIDATE_MAX_LEN
        || cand.dir != Direction::FromNode
        || !direction_matches(RuleDirection::ZedToZc, cand, map)
    {
        return None;
    }
    Some(
        burst
            .frames
            .iter()
            .filter(|f| f.dir == cand.dir && f.apl_len == cand.apl_len)
            .count(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burst::Direction::{FromNode, ToNode};

    fn burst(frames: &[(Direction, u16)]) -> Burst {
        let node = 0x1234;
        let frames: Vec<BurstFrame> = frames
            .iter()
            .enumerate()
            .map(|(i, &(dir, apl_len))| BurstFrame {
                index: i + 10,
                timestamp_us: 1_000_000 + i as u64 * 50_000,
                dir,
                src: if dir == ToNode { 0 } else { node },
                dst: if dir == ToNode { node } else { 0 },
                apl_len,
                broadcast: false,
            })
            .collect();
        Burst {
            node,
            start_us: frames[0].timestamp_us,
            end_us: frames.last().unwrap().timestamp_us,
            frames,
        }
    }

    fn map_with(ltype: LogicalType) -> NodeMap {
        let text = format!("0x0000,-,ZC,zc_address=ZC\n0x1234,-,{ltype},\n");
        NodeMap::import(text.as_bytes()).unwrap()
    }

    #[test]
    fn lock_row() {
        let b = burst(&[(ToNode, 11), (FromNode, 12), (FromNode, 20), (ToNode, 8)]);
        let m = infer_command(&b, &BurstContext::default(), &map_with(LogicalType::ZED), &RuleSet::default())
            .unwrap()
            .unwrap();
        assert_eq!(m.rule_id, "lock_unlock");
        assert_eq!(m.candidate, 10);
    }

    #[test]
    fn color_needs_discovery() {
        let b = burst(&[(ToNode, 15), (FromNode, 13), (FromNode, 20), (ToNode, 8)]);
        let map = map_with(LogicalType::ZR);
        let rules = RuleSet::default();
        assert_eq!(infer_command(&b, &BurstContext::default(), &map, &rules).unwrap(), None);
        let ctx = BurstContext {
            network_discovery: true,
            ..Default::default()
        };
        let m = infer_command(&b, &ctx, &map, &rules).unwrap().unwrap();
        assert_eq!(m.rule_id, "color_control");
    }

    #[test]
    fn candidate_in_final_quarter_is_ignored() {
        let b = burst(&[(ToNode, 8), (FromNode, 20), (FromNode, 9), (ToNode, 11)]);
        assert_eq!(candidate_frame(&b), None);
        let r = infer_command(&b, &BurstContext::default(), &map_with(LogicalType::ZED), &RuleSet::default());
        assert_eq!(r.unwrap(), None);
    }

    #[test]
    fn odd_length_first_half_rounds_up() {
        let b = burst(&[(ToNode, 8), (FromNode, 20), (FromNode, 17), (ToNode, 8), (ToNode, 8)]);
        assert_eq!(candidate_frame(&b), Some(2));
    }

    #[test]
    fn preceding_broadcast_blocks_level() {
        let b = burst(&[(ToNode, 14), (FromNode, 13), (ToNode, 8)]);
        let bc = BurstFrame {
            index: 5,
            timestamp_us: 900_000,
            dir: FromNode,
            src: 0x0000,
            dst: 0xffff,
            apl_len: 17,
            broadcast: true,
        };
        let ctx = BurstContext {
            network_discovery: true,
            broadcasts: vec![bc],
            repeats: false,
        };
        let map = map_with(LogicalType::ZR);
        assert_eq!(infer_command(&b, &ctx, &map, &RuleSet::default()).unwrap(), None);
    }

    #[test]
    fn two_rules_is_ambiguous() {
        let mut rules = RuleSet::default();
        let mut dup = rules.get("lock_unlock").unwrap().clone();
        dup.id = "lock_copy".into();
        rules.rules.push(dup);
        let b = burst(&[(ToNode, 11), (FromNode, 12)]);
        let err = infer_command(&b, &BurstContext::default(), &map_with(LogicalType::ZED), &rules).unwrap_err();
        assert_eq!(err.rules, vec!["lock_unlock".to_string(), "lock_copy".to_string()]);
    }

    #[test]
    fn unknown_role_never_fires() {
        let b = burst(&[(ToNode, 11), (FromNode, 12)]);
        let r = infer_command(&b, &BurstContext::default(), &map_with(LogicalType::Unknown), &RuleSet::default());
        assert_eq!(r.unwrap(), None);
    }
}
