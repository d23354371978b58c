//! Inverse-evolution synthesis of arbitrary two-mode states, the worst-case
//! time formula, and the trigonometric timing solver.
//!
//! The inverse pass disassembles the target row by row (mode 2), right to
//! left, then empties mode 1. Each resonant step moves the frontier Fock
//! amplitude into the qubit, and each selective rotation clears the qubit
//! again. A rotation's free phase is spent on making the next resonant step
//! exact, so no pauses are needed.

use crate::dynamics::{
    jc_gate, run_schedule, selective_rotation_gate, DynamicsError, Engine, Mode, PulseSchedule, PulseSegment,
    SegmentKind,
};
use crate::model::SystemParams;
use crate::ops::{CVector, HilbertSpace, OpsError, StateVector, C64, E, G};
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

const ZERO_TOL: f64 = 1e-13;
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("target grid must be non-empty and rectangular")]
    BadGrid,
    #[error("target is not normalized (sum |c|^2 = {0})")]
    NotNormalized(f64),
    #[error("rotation at step {step} on class {class} would disturb an already emptied layer ({n1}, {n2})")]
    Collision { step: usize, class: i64, n1: usize, n2: usize },
    #[error("selective regime requires 0 < Omega_s < lambda")]
    NotSelective,
    #[error("coupling g{0} must be positive")]
    ZeroCoupling(u8),
    #[error("search window must be positive, got {0}")]
    EmptyWindow(f64),
    #[error("no timing conditions given")]
    NoConditions,
    #[error("condition coefficients must be positive")]
    BadCoefficient,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Ops(#[from] OpsError),
}

pub type Result<T> = std::result::Result<T, SynthesisError>;

/// Coefficients `c[n1][n2]` of `Σ c |n1, n2⟩` with the qubit in `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    coefficients: Vec<Vec<C64>>,
}

impl TargetState {
    pub fn new(coefficients: Vec<Vec<C64>>) -> Result<Self> {
        let t = Self::shape_checked(coefficients)?;
        let norm = t.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SynthesisError::NotNormalized(norm));
        }
        Ok(t)
    }

    pub fn normalized(coefficients: Vec<Vec<C64>>) -> Result<Self> {
        let mut t = Self::shape_checked(coefficients)?;
        let norm = t.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(SynthesisError::NotNormalized(0.0));
        }
        for row in &mut t.coefficients {
            for c in row.iter_mut() {
                *c /= norm;
            }
        }
        Ok(t)
    }

    fn shape_checked(coefficients: Vec<Vec<C64>>) -> Result<Self> {
        let cols = coefficients.first().map(Vec::len).unwrap_or(0);
        if cols == 0 || coefficients.iter().any(|r| r.len() != cols) {
            return Err(SynthesisError::BadGrid);
        }
        Ok(Self { coefficients })
    }

    /// Complex entries drawn uniformly from the unit square, then normalized.
    pub fn random<R: Rng>(n1: usize, n2: usize, rng: &mut R) -> Self {
        let grid = (0..=n1)
            .map(|_| (0..=n2).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        Self::normalized(grid).expect("random grid is non-zero")
    }

    /// Equal moduli with independent uniformly random phases.
    pub fn uniform_random_phases<R: Rng>(n1: usize, n2: usize, rng: &mut R) -> Self {
        let grid = (0..=n1)
            .map(|_| (0..=n2).map(|_| C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))).collect())
            .collect();
        Self::normalized(grid).expect("uniform grid is non-zero")
    }

    pub fn n1(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn n2(&self) -> usize {
        self.coefficients[0].len() - 1
    }

    pub fn coefficient(&self, n1: usize, n2: usize) -> C64 {
        self.coefficients.get(n1).and_then(|r| r.get(n2)).copied().unwrap_or_default()
    }

    pub fn coefficients(&self) -> &[Vec<C64>] {
        &self.coefficients
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    /// `qubit ⊗ mode1 ⊗ mode2` with two spare levels per mode.
    pub fn system_space(&self) -> HilbertSpace {
        HilbertSpace::qubit_with(&[self.n1() + 2, self.n2() + 2]).expect("valid dims")
    }

    /// The target embedded in `space` with the qubit in `g`.
    pub fn to_state(&self, space: &HilbertSpace) -> Result<StateVector> {
        let mut v = CVector::zeros(space.total());
        for (n1, row) in self.coefficients.iter().enumerate() {
            for (n2, c) in row.iter().enumerate() {
                if *c != C64::default() {
                    v[space.index_of(&[G, n1, n2])?] = *c;
                }
            }
        }
        Ok(StateVector::new(space.clone(), v)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub schedule: PulseSchedule,
    /// Worst-case total time for the target's Fock extent.
    pub predicted_time: f64,
    pub achieved_fidelity: f64,
    /// Amplitude left behind by each zeroing step of the inverse pass.
    pub step_residuals: Vec<f64>,
    /// Population outside `|g,0,0⟩` after the inverse pass.
    pub inverse_residual: f64,
}

/// `(N₁+1)(N₂+1)π/Ω_s + Σ_{j≤N₁} π/(2√j g₁) + (N₁+1) Σ_{j≤N₂} π/(2√j g₂)`.
pub fn predicted_total_time(n1: usize, n2: usize, params: &SystemParams) -> f64 {
    let rotations = ((n1 + 1) * (n2 + 1)) as f64 * PI / params.omega_s;
    let sum = |n: usize, g: f64| (1..=n).map(|j| PI / (2.0 * (j as f64).sqrt() * g)).sum::<f64>();
    rotations + sum(n1, params.g1) + (n1 + 1) as f64 * sum(n2, params.g2)
}

/// The schedule skeleton with the maximal segment counts, every rotation of
/// area π and every resonant segment a full transfer. Its duration is
/// [`predicted_total_time`].
pub fn worst_case_schedule(n1: usize, n2: usize, params: &SystemParams) -> PulseSchedule {
    let rot = |class: i64| PulseSegment::rotation(class, PI, 0.0, 0.0, params.omega_s);
    let mut segs = vec![rot(0)];
    for k in 1..=n1 {
        segs.push(rot(k as i64 - 1));
        segs.push(PulseSegment::resonant(Mode::One, PI / (2.0 * (k as f64).sqrt() * params.g1)));
    }
    for j in 1..=n2 {
        for k in 0..=n1 {
            segs.push(rot(k as i64 - j as i64 + 1));
            segs.push(PulseSegment::resonant(Mode::Two, PI / (2.0 * (j as f64).sqrt() * params.g2)));
        }
    }
    PulseSchedule::from_segments(segs).expect("durations are non-negative")
}

/// `(θ, α, β)` of the rotation equal to the SU(2) matrix `[[a, b], [−b*, a*]]`.
pub fn su2_angles(a: C64, b: C64) -> (f64, f64, f64) {
    let theta = a.norm().min(1.0).acos();
    let alpha = if a.norm() > 0.0 { -a.arg() } else { 0.0 };
    let beta = if b.norm() > 0.0 { -(C64::i() * b).arg() } else { 0.0 };
    (theta, alpha, beta)
}

struct Inverse<'a> {
    params: &'a SystemParams,
    psi: StateVector,
    space: HilbertSpace,
    /// Forward segments in reverse order.
    forward_rev: Vec<PulseSegment>,
    residuals: Vec<f64>,
    /// Layers already emptied (both qubit states).
    cleared: Vec<(usize, usize)>,
}

impl<'a> Inverse<'a> {
    fn amp(&self, q: usize, n1: usize, n2: usize) -> C64 {
        self.psi.amplitude(&[q, n1, n2]).expect("label inside space")
    }

    /// Undoes a resonant segment so that `g` at `(n1g, n2g)` is moved into
    /// the partner `e` one quantum lower. `level` is the partner's `n+1`.
    fn resonant_step(&mut self, mode: Mode, g_label: (usize, usize), level: usize) -> Result<()> {
        let (n1g, n2g) = g_label;
        let (n1e, n2e) = match mode {
            Mode::One => (n1g - 1, n2g),
            Mode::Two => (n1g, n2g - 1),
        };
        let g = self.amp(G, n1g, n2g);
        if g.norm() <= ZERO_TOL {
            return Ok(());
        }
        let e = self.amp(E, n1e, n2e);
        let rate = match mode {
            Mode::One => self.params.g1,
            Mode::Two => self.params.g2,
        } * (level as f64).sqrt();
        // U†(t) maps g → cos φ g + i sin φ e (times a common phase), φ = rate·t.
        let phi = if e.norm() <= ZERO_TOL {
            PI / 2.0
        } else {
            let r = C64::i() * g / e;
            let ang = r.re.atan();
            if ang < 0.0 {
                ang + PI
            } else {
                ang
            }
        };
        let t = phi / rate;
        self.psi = jc_gate(&self.psi, mode, -t, self.params)?;
        self.residuals.push(self.amp(G, n1g, n2g).norm());
        self.forward_rev.push(PulseSegment::resonant(mode, t));
        Ok(())
    }

    /// Undoes a rotation on the class of `layer`, clearing its `e` amplitude
    /// and giving its `g` amplitude the phase wanted by the next resonant
    /// step, whose partner `e` sits at `partner`.
    fn rotation_step(&mut self, layer: (usize, usize), partner: Option<(usize, usize)>) -> Result<()> {
        let (n1, n2) = layer;
        let e = self.amp(E, n1, n2);
        let g = self.amp(G, n1, n2);
        let l = (e.norm_sqr() + g.norm_sqr()).sqrt();
        if l <= ZERO_TOL {
            return Ok(());
        }
        let ep = partner.map(|(a, b)| self.amp(E, a, b)).filter(|x| x.norm() > ZERO_TOL);
        // Target phase of the cleared g amplitude.
        let phase = match ep {
            Some(ep) => ep.arg() - PI / 2.0,
            None if g.norm() > ZERO_TOL => g.arg(),
            None => e.arg(),
        };
        let u = C64::from_polar(1.0, -phase);
        let (a, b) = (u * g / l, -u * e / l);
        // W = [[a, b], [−b*, a*]] is applied here; the forward schedule gets W†.
        let (wt, wa, wb) = su2_angles(a, b);
        let class = n1 as i64 - n2 as i64;
        let identity = wt.abs() < 1e-15 && wa.rem_euclid(2.0 * PI).min(2.0 * PI - wa.rem_euclid(2.0 * PI)) < 1e-15;
        if identity {
            self.residuals.push(e.norm());
            return Ok(());
        }
        let before = self.psi.clone();
        self.psi = selective_rotation_gate(&self.psi, class, wt, wa, wb)?;
        for &(c1, c2) in &self.cleared {
            if c1 as i64 - c2 as i64 == class {
                let moved = (self.amp(E, c1, c2) - before.amplitude(&[E, c1, c2])?).norm()
                    + (self.amp(G, c1, c2) - before.amplitude(&[G, c1, c2])?).norm();
                if moved > 1e-9 {
                    return Err(SynthesisError::Collision { step: self.forward_rev.len(), class, n1: c1, n2: c2 });
                }
            }
        }
        self.residuals.push(self.amp(E, n1, n2).norm());
        let (ra, rb) = (a.conj(), -b);
        let (theta, alpha, beta) = su2_angles(ra, rb);
        self.forward_rev.push(PulseSegment::rotation(class, theta, alpha, beta, self.params.omega_s));
        Ok(())
    }
}

fn check_params(params: &SystemParams) -> Result<()> {
    params.validate().map_err(DynamicsError::from)?;
    if !(params.omega_s > 0.0 && params.omega_s < params.lambda) {
        return Err(SynthesisError::NotSelective);
    }
    if !(params.g1 > 0.0) {
        return Err(SynthesisError::ZeroCoupling(1));
    }
    if !(params.g2 > 0.0) {
        return Err(SynthesisError::ZeroCoupling(2));
    }
    Ok(())
}

pub fn synthesize(target: &TargetState, params: &SystemParams) -> Result<SynthesisReport> {
    check_params(params)?;
    let norm = target.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(SynthesisError::NotNormalized(norm));
    }
    let (n1, n2) = (target.n1(), target.n2());
    let space = target.system_space();
    let psi_target = target.to_state(&space)?;
    let mut inv = Inverse {
        params,
        psi: psi_target.clone(),
        space: space.clone(),
        forward_rev: Vec::new(),
        residuals: Vec::new(),
        cleared: Vec::new(),
    };

    for j in (1..=n2).rev() {
        for k in (0..=n1).rev() {
            inv.resonant_step(Mode::Two, (k, j), j)?;
            let partner = if j >= 2 { Some((k, j - 2)) } else { None };
            inv.rotation_step((k, j - 1), partner)?;
            inv.cleared.push((k, j));
        }
    }
    for k in (1..=n1).rev() {
        inv.resonant_step(Mode::One, (k, 0), k)?;
        let partner = if k >= 2 { Some((k - 2, 0)) } else { None };
        inv.rotation_step((k - 1, 0), partner)?;
        inv.cleared.push((k, 0));
    }
    // A lone |g,0,0⟩ phase is global; a lone |e,0,0⟩ remnant cannot occur.
    let ground = inv.amp(G, 0, 0);
    let inverse_residual = (1.0 - ground.norm_sqr()).max(0.0);
    debug_assert!(inv.space == space);

    let mut forward = inv.forward_rev;
    forward.reverse();
    let schedule = PulseSchedule::from_segments(forward)?;
    let start = StateVector::basis(&space, &[G, 0, 0])?;
    let out = run_schedule(&schedule, &start, &Engine::Analytic, params)?;
    let achieved_fidelity = out.final_state.fidelity(&psi_target)?.min(1.0);
    Ok(SynthesisReport {
        schedule,
        predicted_time: predicted_total_time(n1, n2, params),
        achieved_fidelity,
        step_residuals: inv.residuals,
        inverse_residual,
    })
}

/// Inverse of a schedule: adjoint segments in reverse order, as explicit
/// gate applications (resonant segments with negative time).
pub fn apply_inverse(schedule: &PulseSchedule, state: &StateVector, params: &SystemParams) -> Result<StateVector> {
    let mut psi = state.clone();
    for seg in schedule.segments().iter().rev() {
        psi = match seg.kind {
            SegmentKind::ResonantMode1 => jc_gate(&psi, Mode::One, -seg.duration, params)?,
            SegmentKind::ResonantMode2 => jc_gate(&psi, Mode::Two, -seg.duration, params)?,
            SegmentKind::SelectiveRotation { delta_n, theta, alpha, beta } => {
                // R† = [[e^{iα}c, ie^{−iβ}s], [ie^{iβ}s, e^{−iα}c]] = R(θ, −α, β+π)
                selective_rotation_gate(&psi, delta_n, theta, -alpha, beta + PI)?
            }
            SegmentKind::Idle => crate::dynamics::idle_gate(&psi, -seg.duration, params)?,
        };
    }
    Ok(psi)
}

/// A trigonometric condition on a duration `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimingCondition {
    /// `sin(c t) = 0`
    SinZero(f64),
    /// `cos(c t) = 0`
    CosZero(f64),
    /// `cos(c t) = v`
    CosEquals(f64, f64),
    /// `sin(c₁ t) = cos(c₂ t)`
    SinEqualsCos(f64, f64),
    /// `a cos(c t) + b sin(c t) = 0`, normalized by `√(a² + b²)`
    Balance { a: f64, b: f64, c: f64 },
}

impl TimingCondition {
    fn violation(&self, t: f64) -> f64 {
        match *self {
            TimingCondition::SinZero(c) => (c * t).sin(),
            TimingCondition::CosZero(c) => (c * t).cos(),
            TimingCondition::CosEquals(c, v) => (c * t).cos() - v,
            TimingCondition::SinEqualsCos(a, b) => (a * t).sin() - (b * t).cos(),
            TimingCondition::Balance { a, b, c } => (a * (c * t).cos() + b * (c * t).sin()) / a.hypot(b),
        }
    }

    fn coefficients_positive(&self) -> bool {
        match *self {
            TimingCondition::SinZero(c) | TimingCondition::CosZero(c) | TimingCondition::CosEquals(c, _) => c > 0.0,
            TimingCondition::SinEqualsCos(a, b) => a > 0.0 && b > 0.0,
            TimingCondition::Balance { a, b, c } => c > 0.0 && a.is_finite() && b.is_finite() && a.hypot(b) > 0.0,
        }
    }
}

/// Sum of squared violations at `t`.
pub fn timing_residual(conditions: &[TimingCondition], t: f64) -> f64 {
    conditions.iter().map(|c| c.violation(t).powi(2)).sum()
}

/// Minimizes the summed squared violations over `t ∈ (0, window_pi·π]` by a
/// grid scan with 10⁴ points per π followed by golden-section refinement.
/// Among equal residuals the shortest duration wins.
pub fn solve_timing(conditions: &[TimingCondition], window_pi: f64) -> Result<(f64, f64)> {
    if conditions.is_empty() {
        return Err(SynthesisError::NoConditions);
    }
    if !(window_pi > 0.0 && window_pi.is_finite()) {
        return Err(SynthesisError::EmptyWindow(window_pi));
    }
    if !conditions.iter().all(TimingCondition::coefficients_positive) {
        return Err(SynthesisError::BadCoefficient);
    }
    let points = (window_pi * 1e4).ceil() as usize;
    let h = window_pi * PI / points as f64;
    let f = |t: f64| timing_residual(conditions, t);
    let mut best = (h, f(h));
    for i in 2..=points {
        let t = i as f64 * h;
        let r = f(t);
        if r < best.1 - 1e-15 {
            best = (t, r);
        }
    }
    // Golden-section search on the bracketing interval.
    let (mut a, mut b) = ((best.0 - h).max(0.0), best.0 + h);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let r = f(t);
    Ok(if r <= best.1 && t > 0.0 { (t, r) } else { best })
}
