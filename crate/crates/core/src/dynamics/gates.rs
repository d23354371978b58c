//! Closed-form ideal gates on `qubit ⊗ mode1 ⊗ mode2 (⊗ spectators)`.
//!
//! A resonant gate on mode k is `exp(−i(ω_bk N_k + g_k C_k)t)` with
//! `N_k = |e⟩⟨e| + n̂_k` and `C_k = σ_ge b_k† + σ_eg b_k`; the other mode is
//! left untouched.

use super::{DynamicsError, PulseSegment, Result, SegmentKind};
use crate::model::SystemParams;
use crate::ops::{
    embed, number, proj_e, sigma_eg, CMatrix, HilbertSpace, Operator, StateVector, C64, E,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
}

impl Mode {
    pub fn factor(self) -> usize {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
        }
    }

    /// `(ω_b, g)` for this mode.
    pub fn rates(self, params: &SystemParams) -> (f64, f64) {
        match self {
            Mode::One => (params.omega_b1, params.g1),
            Mode::Two => (params.omega_b2, params.g2),
        }
    }
}

pub(crate) fn check_system_space(space: &HilbertSpace) -> Result<()> {
    let d = space.dims();
    if d.len() < 3 || d[0] != 2 {
        return Err(DynamicsError::EngineMismatch(format!(
            "expected qubit x mode1 x mode2 layout, found {d:?}"
        )));
    }
    Ok(())
}

/// Flat index stride of one factor.
fn stride(space: &HilbertSpace, factor: usize) -> usize {
    space.dims()[factor + 1..].iter().product()
}

/// Indices of all basis states with qubit `e`.
fn excited_indices(space: &HilbertSpace) -> std::ops::Range<usize> {
    0..space.total() / 2
}

pub fn jc_gate(state: &StateVector, mode: Mode, duration: f64, params: &SystemParams) -> Result<StateVector> {
    let space = state.space().clone();
    check_system_space(&space)?;
    let (omega_b, g) = mode.rates(params);
    let k = mode.factor();
    let dim_k = space.dims()[k];
    let sk = stride(&space, k);
    let g_offset = space.total() / 2;
    let mut amps = state.amplitudes().clone();
    for ie in excited_indices(&space) {
        let n = (ie / sk) % dim_k;
        let phase = C64::from_polar(1.0, -omega_b * (n + 1) as f64 * duration);
        if n + 1 == dim_k {
            // top of the ladder: no partner inside the truncation
            amps[ie] *= phase;
            continue;
        }
        let ig = g_offset + ie + sk;
        let (c, s) = ((g * ((n + 1) as f64).sqrt() * duration).cos(), (g * ((n + 1) as f64).sqrt() * duration).sin());
        let mis = C64::new(0.0, -s);
        let (e, gg) = (amps[ie], amps[ig]);
        amps[ie] = phase * (e * c + mis * gg);
        amps[ig] = phase * (mis * e + gg * c);
    }
    Ok(StateVector::from_raw(space, amps)?)
}

/// The 2×2 rotation acting on `(e, g)`.
pub fn rotation_matrix(theta: f64, alpha: f64, beta: f64) -> [[C64; 2]; 2] {
    let (c, s) = (theta.cos(), theta.sin());
    let mi = C64::new(0.0, -1.0);
    [
        [C64::from_polar(c, -alpha), mi * C64::from_polar(s, -beta)],
        [mi * C64::from_polar(s, beta), C64::from_polar(c, alpha)],
    ]
}

fn class_of(space: &HilbertSpace, index: usize) -> i64 {
    let d = space.dims();
    let n1 = (index / stride(space, 1)) % d[1];
    let n2 = (index / stride(space, 2)) % d[2];
    n1 as i64 - n2 as i64
}

pub fn selective_rotation_gate(
    state: &StateVector,
    delta_n: i64,
    theta: f64,
    alpha: f64,
    beta: f64,
) -> Result<StateVector> {
    let space = state.space().clone();
    check_system_space(&space)?;
    let m = rotation_matrix(theta, alpha, beta);
    let g_offset = space.total() / 2;
    let mut amps = state.amplitudes().clone();
    for ie in excited_indices(&space) {
        if class_of(&space, ie) != delta_n {
            continue;
        }
        let ig = ie + g_offset;
        let (e, g) = (amps[ie], amps[ig]);
        amps[ie] = m[0][0] * e + m[0][1] * g;
        amps[ig] = m[1][0] * e + m[1][1] * g;
    }
    Ok(StateVector::from_raw(space, amps)?)
}

/// Free precession `exp(−i(ω_park|e⟩⟨e| + ω_b1 n̂₁ + ω_b2 n̂₂)τ)`.
pub fn idle_gate(state: &StateVector, duration: f64, params: &SystemParams) -> Result<StateVector> {
    let space = state.space().clone();
    check_system_space(&space)?;
    let diag = idle_energies(&space, params);
    let mut amps = state.amplitudes().clone();
    for (a, e) in amps.iter_mut().zip(diag) {
        *a *= C64::from_polar(1.0, -e * duration);
    }
    Ok(StateVector::from_raw(space, amps)?)
}

pub(crate) fn idle_energies(space: &HilbertSpace, params: &SystemParams) -> Vec<f64> {
    (0..space.total())
        .map(|i| {
            let l = space.label_of(i);
            let qe = if l[0] == E { params.omega_park() } else { 0.0 };
            qe + params.omega_b1 * l[1] as f64 + params.omega_b2 * l[2] as f64
        })
        .collect()
}

pub(crate) fn classes(space: &HilbertSpace) -> Vec<i64> {
    (0..space.total()).map(|i| class_of(space, i)).collect()
}

pub(crate) fn apply_segment(state: &StateVector, seg: &PulseSegment, params: &SystemParams) -> Result<StateVector> {
    match seg.kind {
        SegmentKind::ResonantMode1 => jc_gate(state, Mode::One, seg.duration, params),
        SegmentKind::ResonantMode2 => jc_gate(state, Mode::Two, seg.duration, params),
        SegmentKind::SelectiveRotation { delta_n, theta, alpha, beta } => {
            selective_rotation_gate(state, delta_n, theta, alpha, beta)
        }
        SegmentKind::Idle => idle_gate(state, seg.duration, params),
    }
}

/// `ω_bk N_k + g_k C_k` on the given space.
pub(crate) fn resonant_generator(space: &HilbertSpace, mode: Mode, params: &SystemParams) -> Result<Operator> {
    let (omega_b, g) = mode.rates(params);
    let k = mode.factor();
    let pe = embed(&proj_e(), 0, space)?;
    let n = embed(&number(space.dims()[k])?, k, space)?;
    let x = crate::model::exchange(space, k)?;
    let m = (pe.matrix() + n.matrix()) * C64::from(omega_b) + x.matrix() * C64::from(g);
    Ok(Operator::new(space.clone(), m)?)
}

/// Projector onto the class `n₁ − n₂ = delta_n`.
pub(crate) fn class_projector(space: &HilbertSpace, delta_n: i64) -> Operator {
    let n = space.total();
    let cl = classes(space);
    let m = CMatrix::from_fn(n, n, |r, c| {
        if r == c && cl[r] == delta_n {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Operator::new(space.clone(), m).expect("square by construction")
}

/// Time-independent generators `(H, t)` whose exponentials, applied in order,
/// reproduce the ideal gate of `seg`. Used as a brute-force oracle.
pub fn ideal_generators(space: &HilbertSpace, seg: &PulseSegment, params: &SystemParams) -> Result<Vec<(Operator, f64)>> {
    check_system_space(space)?;
    Ok(match seg.kind {
        SegmentKind::ResonantMode1 => vec![(resonant_generator(space, Mode::One, params)?, seg.duration)],
        SegmentKind::ResonantMode2 => vec![(resonant_generator(space, Mode::Two, params)?, seg.duration)],
        SegmentKind::Idle => {
            let diag = idle_energies(space, params);
            let m = CMatrix::from_diagonal(&crate::ops::CVector::from_iterator(
                diag.len(),
                diag.iter().map(|&e| C64::new(e, 0.0)),
            ));
            vec![(Operator::new(space.clone(), m)?, seg.duration)]
        }
        SegmentKind::SelectiveRotation { delta_n, theta, alpha, beta } => {
            let p = class_projector(space, delta_n);
            let s_eg = embed(&sigma_eg(), 0, space)?;
            let phi = beta - alpha;
            let drive = s_eg.matrix() * C64::from_polar(1.0, -phi);
            let drive = p.matrix() * (&drive + drive.adjoint());
            let pe = embed(&proj_e(), 0, space)?;
            let sz = p.matrix() * (pe.matrix() * C64::from(2.0) - CMatrix::identity(space.total(), space.total()));
            vec![(Operator::new(space.clone(), drive)?, theta), (Operator::new(space.clone(), sz)?, alpha)]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{propagator_exact, G};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn space() -> HilbertSpace {
        HilbertSpace::qubit_with(&[4, 3]).unwrap()
    }

    fn random_state(space: &HilbertSpace, seed: u64) -> StateVector {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = crate::ops::CVector::from_fn(space.total(), |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        StateVector::normalized(space.clone(), v).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = SystemParams::default();
        let psi = random_state(&space(), 3);
        let out = jc_gate(&psi, Mode::One, 0.0, &p).unwrap();
        assert!((out.amplitudes() - psi.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn full_transfer_mode1() {
        let p = SystemParams { g1: 1.3, ..Default::default() };
        let t = PI / (2.0 * p.g1);
        let psi = StateVector::basis(&space(), &[E, 0, 0]).unwrap();
        let out = jc_gate(&psi, Mode::One, t, &p).unwrap();
        let expected = C64::new(0.0, -1.0) * C64::from_polar(1.0, -p.omega_b1 * t);
        let got = out.amplitude(&[G, 1, 0]).unwrap();
        assert!((got - expected).norm() < 1e-14);
    }

    #[test]
    fn ground_vacuum_invariant() {
        let p = SystemParams::default();
        let psi = StateVector::basis(&space(), &[G, 0, 0]).unwrap();
        for mode in [Mode::One, Mode::Two] {
            let out = jc_gate(&psi, mode, 2.7, &p).unwrap();
            assert!((out.amplitudes() - psi.amplitudes()).norm() < 1e-15);
        }
    }

    #[test]
    fn jc_gate_matches_propagator() {
        let p = SystemParams::default();
        let sp = space();
        let psi = random_state(&sp, 9);
        for (mode, seg) in [
            (Mode::One, PulseSegment::resonant(Mode::One, 0.83)),
            (Mode::Two, PulseSegment::resonant(Mode::Two, 2.1)),
        ] {
            let out = jc_gate(&psi, mode, seg.duration, &p).unwrap();
            let gens = ideal_generators(&sp, &seg, &p).unwrap();
            let u = propagator_exact(&gens[0].0, gens[0].1).unwrap();
            let want = u.apply(&psi).unwrap();
            assert!((out.amplitudes() - want).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_cases() {
        let sp = space();
        let psi = StateVector::basis(&sp, &[G, 1, 1]).unwrap();
        let out = selective_rotation_gate(&psi, 0, PI / 2.0, 0.0, 0.0).unwrap();
        assert!((out.amplitude(&[E, 1, 1]).unwrap() - C64::new(0.0, -1.0)).norm() < 1e-15);

        let s = 0.5f64.sqrt();
        let mut v = crate::ops::CVector::zeros(sp.total());
        v[sp.index_of(&[G, 1, 0]).unwrap()] = C64::new(s, 0.0);
        v[sp.index_of(&[G, 0, 1]).unwrap()] = C64::new(s, 0.0);
        let psi = StateVector::new(sp.clone(), v).unwrap();
        let out = selective_rotation_gate(&psi, 1, PI / 2.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(out.amplitude(&[G, 1, 0]).unwrap().norm(), 0.0, epsilon = 1e-15);
        assert_eq!(out.amplitude(&[G, 0, 1]).unwrap(), C64::new(s, 0.0));
    }

    #[test]
    fn rotation_zero_theta_is_phase_only() {
        let m = rotation_matrix(0.0, 0.4, 1.0);
        assert_eq!(m[0][1].norm(), 0.0);
        assert!((m[0][0] - C64::from_polar(1.0, -0.4)).norm() < 1e-15);
    }

    #[test]
    fn rotation_matches_propagator() {
        let p = SystemParams::default();
        let sp = space();
        let psi = random_state(&sp, 4);
        let seg = PulseSegment::rotation(-1, 0.9, 0.3, -1.2, p.omega_s);
        let out = super::apply_segment(&psi, &seg, &p).unwrap();
        let mut want = psi.clone();
        for (h, t) in ideal_generators(&sp, &seg, &p).unwrap() {
            let u = propagator_exact(&h, t).unwrap();
            want = StateVector::from_raw(sp.clone(), u.apply(&want).unwrap()).unwrap();
        }
        assert!((out.amplitudes() - want.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn idle_matches_propagator() {
        let p = SystemParams::default();
        let sp = space();
        let psi = random_state(&sp, 5);
        let seg = PulseSegment::idle(1.7);
        let out = super::apply_segment(&psi, &seg, &p).unwrap();
        let (h, t) = ideal_generators(&sp, &seg, &p).unwrap().remove(0);
        let want = propagator_exact(&h, t).unwrap().apply(&psi).unwrap();
        assert!((out.amplitudes() - want).norm() < 1e-12);
    }

    #[test]
    fn gates_accept_spectator_factor() {
        let p = SystemParams::default();
        let sp = HilbertSpace::new(vec![2, 3, 3, 2]).unwrap();
        let psi = StateVector::basis(&sp, &[E, 0, 1, 1]).unwrap();
        let out = jc_gate(&psi, Mode::Two, PI / (2.0 * p.g2 * 2f64.sqrt()), &p).unwrap();
        assert_abs_diff_eq!(out.amplitude(&[G, 0, 2, 1]).unwrap().norm(), 1.0, epsilon = 1e-14);
    }
}
