//! Scoring predictions against generator ground truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::inference::Identification;
use crate::signature::SignatureMatch;

use super::truth::GroundTruth;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("predictions are for capture {predictions} but truth is for capture {truth}")]
    MismatchedInputs { predictions: String, truth: String },
    #[error("metric undefined: no positive cases (TP + FN = 0)")]
    UndefinedMetric,
}

/// Confusion counts. `fn_` is the false-negative count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl Metrics {
    pub fn from_counts(correct: u64, total: u64) -> Metrics {
        Metrics {
            tp: correct,
            fn_: total.saturating_sub(correct),
            fp: 0,
            tn: 0,
        }
    }

    pub fn tpr(&self) -> Result<f64, EvalError> {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            return Err(EvalError::UndefinedMetric);
        }
        Ok(self.tp as f64 / pos as f64)
    }

    pub fn fnr(&self) -> Result<f64, EvalError> {
        Ok(1.0 - self.tpr()?)
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        if self.tp + self.fn_ == 0 {
            return Err(EvalError::UndefinedMetric);
        }
        let all = self.tp + self.tn + self.fp + self.fn_;
        Ok((self.tp + self.tn) as f64 / all as f64)
    }
}

/// Analyzer output in the form `evaluate` consumes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub capture_id: String,
    #[serde(default)]
    pub identifications: Vec<Identification>,
    #[serde(default)]
    pub signature_matches: Vec<SignatureMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub event: usize,
    pub correct: bool,
    /// Identification attributed to the event, if any.
    pub identification: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub capture_id: String,
    pub events: Metrics,
    pub outcomes: Vec<EventOutcome>,
    /// Mean score over correct identifications.
    pub average_score: Option<f64>,
    /// Present when the predictions carry signature matches.
    pub signatures: Option<Metrics>,
}

fn event_matches(id: &Identification, truth: &super::truth::EventTruth) -> bool {
    id.device_type.covers(truth.device_type)
        && id.event.split('|').any(|w| w.trim() == truth.event.word())
}

pub fn evaluate(pred: &Predictions, truth: &GroundTruth) -> Result<EvalReport, EvalError> {
    if pred.capture_id != truth.capture_id {
        return Err(EvalError::MismatchedInputs {
            predictions: pred.capture_id.clone(),
            truth: truth.capture_id.clone(),
        });
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for e in &truth.events {
        for &f in &e.frames {
            owner.insert(f, e.id);
        }
    }
    let mut by_event: HashMap<usize, usize> = HashMap::new();
    let mut events = Metrics::default();
    for (i, id) in pred.identifications.iter().enumerate() {
        match owner.get(&id.candidate) {
            Some(&e) => {
                by_event.entry(e).or_insert(i);
            }
            None => events.fp += 1,
        }
    }
    let mut outcomes = Vec::with_capacity(truth.events.len());
    let mut scores = Vec::new();
    for e in &truth.events {
        let ident = by_event.get(&e.id).copied();
        let correct = ident.is_some_and(|i| {
            let id = &pred.identifications[i];
            id.node == e.node && event_matches(id, e)
        });
        if correct {
            events.tp += 1;
            scores.push(pred.identifications[ident.unwrap()].score.total);
        } else {
            events.fn_ += 1;
        }
        outcomes.push(EventOutcome {
            event: e.id,
            correct,
            identification: ident,
        });
    }
    let average_score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    Ok(EvalReport {
        capture_id: truth.capture_id.clone(),
        events,
        outcomes,
        average_score,
        signatures: (!pred.signature_matches.is_empty()).then(|| evaluate_signatures(&pred.signature_matches, truth)),
    })
}

/// TP: nodes carrying a signature label matched to it. FN: such nodes unmatched
/// or matched to another label. FP: matches on nodes with no expected label.
pub fn evaluate_signatures(matches: &[SignatureMatch], truth: &GroundTruth) -> Metrics {
    let got: HashMap<u16, &str> = matches.iter().map(|m| (m.node, m.device_label.as_str())).collect();
    let mut m = Metrics::default();
    for n in &truth.nodes {
        match (&n.signature_label, got.get(&n.addr)) {
            (Some(want), Some(&have)) if want == have => m.tp += 1,
            (Some(_), _) => m.fn_ += 1,
            (None, Some(_)) => m.fp += 1,
            (None, None) => {}
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bulk_accuracy_rows() {
        for (tp, total, acc) in [(2712, 2916, 93.0), (2175, 2423, 89.8), (596, 676, 88.1), (370, 403, 91.8)] {
            let m = Metrics::from_counts(tp, total);
            assert!((m.accuracy().unwrap() * 100.0 - acc).abs() <= 0.1);
        }
    }

    #[test]
    fn identities_and_undefined() {
        let m = Metrics::from_counts(78, 80);
        assert!((m.tpr().unwrap() - 0.975).abs() < 1e-12);
        assert!((m.tpr().unwrap() + m.fnr().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.tpr(), m.accuracy());
        assert_eq!(Metrics::default().tpr(), Err(EvalError::UndefinedMetric));
    }
}
