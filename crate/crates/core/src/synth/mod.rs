//! Labeled synthetic captures and evaluation against their ground truth.

mod evaluate;
mod generate;
pub mod model;
mod scenario;
mod truth;

pub use evaluate::{evaluate, evaluate_signatures, EvalError, EvalReport, EventOutcome, Metrics, Predictions};
pub use generate::{capture_id_of_frames, generate, inject_out_of_order, Generated};
pub use model::{catalog, model, model_for, Archetype, DeviceModel, Dir, EventKind, FrameSpec, HubKind, NoiseKind};
pub use scenario::{ConfigError, Countermeasures, DeviceSpec, ScenarioConfig, ScheduledEvent};
pub use truth::{
    capture_id_of, capture_id_of_file, EventTruth, FrameKind, FrameLabel, GroundTruth, NodeTruth, NoiseTruth,
};
