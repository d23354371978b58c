//! Schedule execution on the analytic, effective, full and Lindblad engines.

use super::gates::{apply_segment, check_system_space, classes, idle_energies, resonant_generator, Mode};
use super::integrate::{step_for, warn_positivity, LindbladGenerator, PureGenerator};
use super::{DynamicsError, PulseSchedule, PulseSegment, Result, SegmentKind, Trajectory};
use crate::model::{derive, SystemParams};
use crate::ops::{
    annihilation, embed, partial_trace, proj_e, s_z, sigma_eg, sigma_ge, CMatrix, CVector, DensityMatrix,
    Expectation, HilbertSpace, Operator, StateVector, C64, E,
};

/// Integration resolution: steps per period of the fastest frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub points_per_period: f64,
}

/// Engines default to 240 points per period of the fastest frequency. The
/// strongly detuned rotation segments need it: at 40 the norm drifts by
/// ~1e-6, at 120 the state still moves by 1.5e-6 when the step is halved.
impl Default for StepControl {
    fn default() -> Self {
        Self { points_per_period: 240.0 }
    }
}

impl StepControl {
    pub fn refined(self, factor: f64) -> Self {
        Self { points_per_period: self.points_per_period * factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    /// Closed-form gates.
    Analytic,
    /// RK4 on the effective two-mode generators, with dispersive rotations.
    Effective(StepControl),
    /// Resonant segments from the full single-ensemble Hamiltonian per mode
    /// (cavity truncated at `cavity_dim`); rotations and pauses are ideal.
    Full { cavity_dim: usize, steps: StepControl },
    /// Effective generators plus qubit, ensemble and cavity-mediated decay.
    Lindblad(StepControl),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QState {
    pub fn space(&self) -> &HilbertSpace {
        match self {
            QState::Pure(s) => s.space(),
            QState::Mixed(r) => r.space(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QState::Pure(s) => s.to_density(),
            QState::Mixed(r) => r.clone(),
        }
    }

    /// State on `qubit ⊗ mode1 ⊗ mode2`, tracing out any further factors.
    pub fn system_density(&self) -> Result<DensityMatrix> {
        if self.space().factors() <= 3 {
            return Ok(self.to_density());
        }
        Ok(partial_trace(&self.to_density(), &[0, 1, 2])?)
    }

    /// `⟨t|ρ|t⟩` for a target on the system space.
    pub fn fidelity(&self, target: &StateVector) -> Result<f64> {
        match self {
            QState::Pure(s) if s.space() == target.space() => Ok(target.inner(s)?.norm_sqr()),
            _ => {
                let rho = self.system_density()?;
                let op = Operator::new(target.space().clone(), rho.into_matrix())?;
                Ok(target.expectation(&op)?.re)
            }
        }
    }

    pub fn norm_or_trace(&self) -> f64 {
        match self {
            QState::Pure(s) => s.norm(),
            QState::Mixed(r) => r.trace(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: QState,
    /// States at every segment boundary, starting with the initial state.
    pub trajectory: Trajectory<QState>,
}

pub fn run_schedule(
    schedule: &PulseSchedule,
    psi0: &StateVector,
    engine: &Engine,
    params: &SystemParams,
) -> Result<RunOutcome> {
    params.validate()?;
    let space = psi0.space().clone();
    check_system_space(&space)?;
    schedule.check_against(params, (space.dims()[1], space.dims()[2]))?;
    match engine {
        Engine::Analytic => run_analytic(schedule, psi0, params),
        Engine::Effective(steps) => {
            require_three(&space)?;
            run_effective(schedule, psi0, params, *steps)
        }
        Engine::Full { cavity_dim, steps } => {
            require_three(&space)?;
            if *cavity_dim < 2 {
                return Err(DynamicsError::EngineMismatch("full engine needs cavity_dim >= 2".into()));
            }
            run_full(schedule, psi0, params, *cavity_dim, *steps)
        }
        Engine::Lindblad(steps) => {
            require_three(&space)?;
            run_lindblad(schedule, psi0, params, *steps)
        }
    }
}

fn require_three(space: &HilbertSpace) -> Result<()> {
    if space.factors() != 3 {
        return Err(DynamicsError::EngineMismatch(format!(
            "integrated engines take qubit x mode1 x mode2, found {:?}",
            space.dims()
        )));
    }
    Ok(())
}

fn run_analytic(schedule: &PulseSchedule, psi0: &StateVector, params: &SystemParams) -> Result<RunOutcome> {
    let mut traj = Trajectory::new();
    let mut psi = psi0.clone();
    let mut t = 0.0;
    traj.push(t, QState::Pure(psi.clone()));
    for seg in schedule.segments() {
        psi = apply_segment(&psi, seg, params)?;
        t += seg.duration;
        traj.push(t, QState::Pure(psi.clone()));
    }
    Ok(RunOutcome { final_state: QState::Pure(psi), trajectory: traj })
}

/// Hamiltonian of one segment for the integrated engines, plus the diagonal
/// frame correction applied afterwards (rotations only).
struct SegmentPlan {
    h: CMatrix,
    correction: Option<CVector>,
}

fn plan_segment(space: &HilbertSpace, seg: &PulseSegment, params: &SystemParams) -> Result<SegmentPlan> {
    let n = space.total();
    Ok(match seg.kind {
        SegmentKind::ResonantMode1 => {
            SegmentPlan { h: resonant_generator(space, Mode::One, params)?.into_matrix(), correction: None }
        }
        SegmentKind::ResonantMode2 => {
            SegmentPlan { h: resonant_generator(space, Mode::Two, params)?.into_matrix(), correction: None }
        }
        SegmentKind::Idle => {
            let e = idle_energies(space, params);
            let h = CMatrix::from_diagonal(&CVector::from_iterator(n, e.iter().map(|&x| C64::from(x))));
            SegmentPlan { h, correction: None }
        }
        SegmentKind::SelectiveRotation { delta_n, alpha, beta, .. } => {
            if params.omega_s >= params.lambda {
                log::warn!("Omega_s = {} is not below lambda = {}; rotations lose selectivity", params.omega_s, params.lambda);
            }
            // Drive frame at the class-delta_n frequency: other classes are
            // detuned by 2λ(c − Δn) on the qubit transition.
            let cl = classes(space);
            let sz = |i: usize| if space.label_of(i)[0] == E { 0.5 } else { -0.5 };
            let det: Vec<f64> =
                (0..n).map(|i| 2.0 * params.lambda * (cl[i] - delta_n) as f64 * sz(i)).collect();
            let s_eg = embed(&sigma_eg(), 0, space)?;
            let phi = beta - alpha;
            let drive = s_eg.matrix() * C64::from_polar(params.omega_s, -phi);
            let mut h = &drive + drive.adjoint();
            for (i, d) in det.iter().enumerate() {
                h[(i, i)] += C64::from(*d);
            }
            let tau = seg.duration;
            let corr = CVector::from_fn(n, |i, _| {
                if cl[i] == delta_n {
                    C64::from_polar(1.0, -2.0 * alpha * sz(i))
                } else {
                    C64::from_polar(1.0, det[i] * tau)
                }
            });
            SegmentPlan { h, correction: Some(corr) }
        }
    })
}

fn run_effective(schedule: &PulseSchedule, psi0: &StateVector, params: &SystemParams, steps: StepControl) -> Result<RunOutcome> {
    let space = psi0.space().clone();
    let mut traj = Trajectory::new();
    let mut y = psi0.amplitudes().clone();
    let mut t = 0.0;
    traj.push(t, QState::Pure(psi0.clone()));
    for seg in schedule.segments() {
        let plan = plan_segment(&space, seg, params)?;
        let gen = PureGenerator::constant(&plan.h);
        let dt = step_for(gen.omega_max(), steps.points_per_period);
        y = gen.evolve(y, 0.0, seg.duration, dt, 0, |_, _| {})?;
        if let Some(c) = plan.correction {
            y.component_mul_assign(&c);
        }
        t += seg.duration;
        traj.push(t, QState::Pure(StateVector::from_raw(space.clone(), y.clone())?));
    }
    let fin = StateVector::from_raw(space, y)?;
    Ok(RunOutcome { final_state: QState::Pure(fin), trajectory: traj })
}

/// Collapse operators on `qubit ⊗ mode1 ⊗ mode2`: qubit and collective ensemble
/// relaxation at `γ`, and cavity loss at `κ` seen through the eliminated
/// cavity, `L = (g_c σ_ge + g_m√N (b₁ + b₂))/Δ`.
pub(crate) fn collapse_operators(space: &HilbertSpace, params: &SystemParams) -> Result<Vec<(CMatrix, f64)>> {
    let s_ge = embed(&sigma_ge(), 0, space)?.into_matrix();
    let b1 = embed(&annihilation(space.dims()[1])?, 1, space)?.into_matrix();
    let b2 = embed(&annihilation(space.dims()[2])?, 2, space)?.into_matrix();
    let g = params.g_m * params.n_spins.sqrt();
    let l_kappa = (&s_ge * C64::from(params.g_c) + (&b1 + &b2) * C64::from(g)) / C64::from(params.delta);
    Ok(vec![(s_ge, params.gamma), (b1, params.gamma), (b2, params.gamma), (l_kappa, params.kappa)])
}

fn run_lindblad(schedule: &PulseSchedule, psi0: &StateVector, params: &SystemParams, steps: StepControl) -> Result<RunOutcome> {
    let space = psi0.space().clone();
    let collapse = collapse_operators(&space, params)?;
    let mut traj = Trajectory::new();
    let mut rho = psi0.to_density().into_matrix();
    let mut t = 0.0;
    traj.push(t, QState::Pure(psi0.clone()));
    for seg in schedule.segments() {
        let plan = plan_segment(&space, seg, params)?;
        let gen = LindbladGenerator::new(&plan.h, &collapse)?;
        let dt = step_for(gen.omega_max(), steps.points_per_period);
        rho = gen.evolve(rho, seg.duration, dt, 0, |_, _| {})?;
        if let Some(c) = plan.correction {
            let n = c.len();
            for col in 0..n {
                for row in 0..n {
                    rho[(row, col)] *= c[row] * c[col].conj();
                }
            }
        }
        t += seg.duration;
        traj.push(t, QState::Mixed(DensityMatrix::from_raw(space.clone(), rho.clone())?));
    }
    let fin = DensityMatrix::from_raw(space, rho)?;
    warn_positivity(&fin);
    Ok(RunOutcome { final_state: QState::Mixed(fin), trajectory: traj })
}

fn run_full(
    schedule: &PulseSchedule,
    psi0: &StateVector,
    params: &SystemParams,
    cavity_dim: usize,
    steps: StepControl,
) -> Result<RunOutcome> {
    let sys = psi0.space().clone();
    let mut dims = sys.dims().to_vec();
    dims.push(cavity_dim);
    let space = HilbertSpace::new(dims)?;
    let vac = CVector::from_fn(cavity_dim, |i, _| if i == 0 { C64::from(1.0) } else { C64::from(0.0) });
    let mut psi = StateVector::from_raw(space.clone(), psi0.amplitudes().kronecker(&vac))?;

    let derived = derive(params)?;
    let s_eg = embed(&sigma_eg(), 0, &space)?.into_matrix();
    let a = embed(&annihilation(cavity_dim)?, 3, &space)?.into_matrix();
    let sz = embed(&s_z(), 0, &space)?.into_matrix();
    let pe = embed(&proj_e(), 0, &space)?.into_matrix();
    let coupling = |k: usize| -> Result<CMatrix> {
        let b_dag = embed(&annihilation(space.dims()[k])?.adjoint(), k, &space)?.into_matrix();
        Ok(&s_eg * &a * C64::from(params.g_c)
            + &s_eg * C64::from(params.omega)
            + b_dag * &a * C64::from(params.g_m * params.n_spins.sqrt()))
    };
    // Shift pulse tuning the Stark-shifted qubit onto the ensemble frequency.
    let tuning = &sz * C64::from(derived.omega_b - derived.omega_z);

    let mut traj = Trajectory::new();
    let mut t = 0.0;
    traj.push(t, QState::Pure(psi.clone()));
    for seg in schedule.segments() {
        psi = match seg.kind {
            SegmentKind::ResonantMode1 | SegmentKind::ResonantMode2 => {
                let (k, mode) =
                    if seg.kind == SegmentKind::ResonantMode1 { (1, Mode::One) } else { (2, Mode::Two) };
                let gen = PureGenerator::constant(&tuning).with_harmonic(&coupling(k)?, params.delta);
                let dt = step_for(gen.omega_max(), steps.points_per_period);
                let mut y = gen.evolve(psi.into_amplitudes(), 0.0, seg.duration, dt, 0, |_, _| {})?;
                // Move from the ensemble frequency to the schedule's frame for this mode.
                let (omega_bk, _) = mode.rates(params);
                let nk = embed(&crate::ops::number(space.dims()[k])?, k, &space)?.into_matrix();
                let shift = omega_bk - derived.omega_b;
                for i in 0..y.len() {
                    let exc = (pe[(i, i)] + nk[(i, i)]).re;
                    y[i] *= C64::from_polar(1.0, -shift * exc * seg.duration);
                }
                StateVector::from_raw(space.clone(), y)?
            }
            _ => apply_segment(&psi, seg, params)?,
        };
        t += seg.duration;
        traj.push(t, QState::Pure(psi.clone()));
    }
    Ok(RunOutcome { final_state: QState::Pure(psi), trajectory: traj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::G;
    use std::f64::consts::PI;

    fn basic_schedule(p: &SystemParams) -> PulseSchedule {
        PulseSchedule::from_segments(vec![
            PulseSegment::rotation(0, PI / 2.0, 0.0, 0.0, p.omega_s),
            PulseSegment::resonant(Mode::One, PI / (2.0 * p.g1)),
        ])
        .unwrap()
    }

    #[test]
    fn empty_schedule_is_identity() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi = StateVector::basis(&sp, &[E, 1, 0]).unwrap();
        for engine in [Engine::Analytic, Engine::Effective(StepControl::default())] {
            let out = run_schedule(&PulseSchedule::new(), &psi, &engine, &p).unwrap();
            assert_eq!(out.final_state, QState::Pure(psi.clone()));
        }
    }

    #[test]
    fn excite_and_transfer() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi = StateVector::basis(&sp, &[G, 0, 0]).unwrap();
        let target = StateVector::basis(&sp, &[G, 1, 0]).unwrap();
        let out = run_schedule(&basic_schedule(&p), &psi, &Engine::Analytic, &p).unwrap();
        assert!((out.final_state.fidelity(&target).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(out.trajectory.len(), 3);
    }

    #[test]
    fn effective_engine_tracks_analytic() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi = StateVector::basis(&sp, &[G, 0, 0]).unwrap();
        let target = StateVector::basis(&sp, &[G, 1, 0]).unwrap();
        let out = run_schedule(&basic_schedule(&p), &psi, &Engine::Effective(StepControl::default()), &p).unwrap();
        assert!(out.final_state.fidelity(&target).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn lindblad_with_decay() {
        let p = SystemParams { gamma: 0.01, ..Default::default() };
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi = StateVector::basis(&sp, &[G, 0, 0]).unwrap();
        let target = StateVector::basis(&sp, &[G, 1, 0]).unwrap();
        let out = run_schedule(&basic_schedule(&p), &psi, &Engine::Lindblad(StepControl::default()), &p).unwrap();
        let f = out.final_state.fidelity(&target).unwrap();
        assert!((0.95..1.0).contains(&f), "{f}");
        assert!((out.final_state.norm_or_trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lindblad_closed_matches_effective() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let s = 0.5f64.sqrt();
        let mut v = CVector::zeros(sp.total());
        v[sp.index_of(&[G, 0, 0]).unwrap()] = C64::from(s);
        v[sp.index_of(&[G, 1, 0]).unwrap()] = C64::new(0.0, s);
        let psi = StateVector::new(sp, v).unwrap();
        let sched = basic_schedule(&p);
        let a = run_schedule(&sched, &psi, &Engine::Effective(StepControl::default()), &p).unwrap();
        let b = run_schedule(&sched, &psi, &Engine::Lindblad(StepControl::default()), &p).unwrap();
        let QState::Pure(pa) = &a.final_state else { unreachable!() };
        let fid = b.final_state.fidelity(&StateVector::normalized(pa.space().clone(), pa.amplitudes().clone()).unwrap()).unwrap();
        assert!(fid > 1.0 - 1e-6, "{fid}");
    }

    #[test]
    fn full_engine_transfers() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi = StateVector::basis(&sp, &[E, 0, 0]).unwrap();
        let sched = PulseSchedule::from_segments(vec![PulseSegment::resonant(Mode::One, PI / 2.0)]).unwrap();
        let out = run_schedule(&sched, &psi, &Engine::Full { cavity_dim: 3, steps: StepControl::default() }, &p).unwrap();
        let f = out.final_state.fidelity(&StateVector::basis(&sp, &[G, 1, 0]).unwrap()).unwrap();
        assert!(f > 0.9, "{f}");
    }

    #[test]
    fn engine_mismatch_errors() {
        let p = SystemParams::default();
        let sp = HilbertSpace::new(vec![2, 3, 3, 2]).unwrap();
        let psi = StateVector::basis(&sp, &[G, 0, 0, 0]).unwrap();
        assert!(run_schedule(&PulseSchedule::new(), &psi, &Engine::Effective(StepControl::default()), &p).is_err());
        let sp3 = HilbertSpace::qubit_with(&[3, 3]).unwrap();
        let psi3 = StateVector::basis(&sp3, &[G, 0, 0]).unwrap();
        let e = Engine::Full { cavity_dim: 1, steps: StepControl::default() };
        assert!(run_schedule(&PulseSchedule::new(), &psi3, &e, &p).is_err());
        let bad = PulseSchedule::from_segments(vec![PulseSegment {
            kind: SegmentKind::SelectiveRotation { delta_n: 0, theta: 1.0, alpha: 0.0, beta: 0.0 },
            duration: 1.0,
        }])
        .unwrap();
        assert!(run_schedule(&bad, &psi3, &Engine::Analytic, &p).is_err());
    }
}
