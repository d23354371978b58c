//! Time evolution: RK4 Schrödinger and Lindblad integrators, closed-form
//! gates, and pulse-schedule execution.

mod engine;
mod gates;
mod integrate;
pub(crate) mod sparse;

pub use engine::{run_schedule, Engine, QState, RunOutcome, StepControl};
pub use gates::{ideal_generators, idle_gate, jc_gate, rotation_matrix, selective_rotation_gate, Mode};
pub use integrate::{
    default_dt, evolve_lindblad, evolve_lindblad_with, evolve_schrodinger, evolve_schrodinger_with,
};

use crate::model::{ModelError, SystemParams};
use crate::ops::OpsError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("duration must be non-negative and finite, got {0}")]
    InvalidDuration(f64),
    #[error("decay rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("norm drift {drift:.3e} exceeds 1e-6; use a smaller time step")]
    NormDrift { drift: f64 },
    #[error("trace drift {drift:.3e} exceeds 1e-6; use a smaller time step")]
    TraceDrift { drift: f64 },
    #[error("engine/parameter mismatch: {0}")]
    EngineMismatch(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    ResonantMode1,
    ResonantMode2,
    /// Rotation on the class `n₁ − n₂ = delta_n` with the 2×2 map
    /// `[[e^{−iα}cosθ, −ie^{−iβ}sinθ], [−ie^{iβ}sinθ, e^{iα}cosθ]]` on `(e, g)`.
    SelectiveRotation { delta_n: i64, theta: f64, alpha: f64, beta: f64 },
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSegment {
    pub kind: SegmentKind,
    pub duration: f64,
}

impl PulseSegment {
    pub fn resonant(mode: Mode, duration: f64) -> Self {
        let kind = match mode {
            Mode::One => SegmentKind::ResonantMode1,
            Mode::Two => SegmentKind::ResonantMode2,
        };
        Self { kind, duration }
    }

    pub fn idle(duration: f64) -> Self {
        Self { kind: SegmentKind::Idle, duration }
    }

    /// Rotation of area `theta` driven at Rabi amplitude `omega_s`. A negative
    /// angle is folded into `β` so the duration stays non-negative.
    pub fn rotation(delta_n: i64, theta: f64, alpha: f64, beta: f64, omega_s: f64) -> Self {
        let (theta, beta) = if theta < 0.0 { (-theta, beta + std::f64::consts::PI) } else { (theta, beta) };
        let duration = if theta == 0.0 { 0.0 } else { theta / omega_s };
        Self { kind: SegmentKind::SelectiveRotation { delta_n, theta, alpha, beta }, duration }
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self.kind, SegmentKind::SelectiveRotation { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(DynamicsError::InvalidDuration(self.duration));
        }
        if let SegmentKind::SelectiveRotation { theta, alpha, beta, .. } = self.kind {
            if !(theta.is_finite() && alpha.is_finite() && beta.is_finite()) {
                return Err(DynamicsError::InvalidSegment("non-finite rotation angle".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseSchedule {
    segments: Vec<PulseSegment>,
}

impl PulseSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: Vec<PulseSegment>) -> Result<Self> {
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { segments })
    }

    pub fn push(&mut self, segment: PulseSegment) -> Result<()> {
        segment.validate()?;
        self.segments.push(segment);
        Ok(())
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Sum of all segment durations.
    pub fn predicted_total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Total duration excluding idle pauses.
    pub fn active_time(&self) -> f64 {
        self.segments.iter().filter(|s| s.kind != SegmentKind::Idle).map(|s| s.duration).sum()
    }

    pub fn count(&self, pred: impl Fn(&SegmentKind) -> bool) -> usize {
        self.segments.iter().filter(|s| pred(&s.kind)).count()
    }

    pub fn truncated(&self, len: usize) -> Self {
        Self { segments: self.segments[..len.min(self.segments.len())].to_vec() }
    }

    /// Checks rotation classes against the mode truncations and that each
    /// rotation lasts `θ/Ω_s`.
    pub fn check_against(&self, params: &SystemParams, dims: (usize, usize)) -> Result<()> {
        let max_class = (dims.0 + dims.1).saturating_sub(2) as i64;
        for s in &self.segments {
            if let SegmentKind::SelectiveRotation { delta_n, theta, .. } = s.kind {
                if delta_n.abs() > max_class {
                    return Err(DynamicsError::InvalidSegment(format!(
                        "rotation class {delta_n} exceeds |n1 - n2| <= {max_class}"
                    )));
                }
                let area = params.omega_s * s.duration;
                if (area - theta).abs() > 1e-9 * theta.abs().max(1.0) {
                    return Err(DynamicsError::EngineMismatch(format!(
                        "rotation area Omega_s*t = {area} does not match theta = {theta}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn new() -> Self {
        Self { times: Vec::new(), states: Vec::new() }
    }

    pub fn push(&mut self, t: f64, state: S) {
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Self::new()
    }
}
