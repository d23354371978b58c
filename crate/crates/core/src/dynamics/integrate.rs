//! Fixed-step RK4 integrators.
//!
//! States are never renormalized; the final norm (or trace) drift is the
//! accuracy diagnostic.

use super::sparse::Sparse;
use super::{DynamicsError, Result, Trajectory};
use crate::ops::{CMatrix, CVector, DensityMatrix, Operator, StateVector, C64};

const DRIFT_LIMIT: f64 = 1e-6;
const POSITIVITY_WARN: f64 = 1e-7;

/// `(2π/ω_max)/40`, the default step for a generator of scale `omega_max`.
pub fn default_dt(omega_max: f64) -> f64 {
    step_for(omega_max, 40.0)
}

pub(crate) fn step_for(omega_max: f64, points_per_period: f64) -> f64 {
    if omega_max > 0.0 {
        2.0 * std::f64::consts::PI / omega_max / points_per_period
    } else {
        f64::INFINITY
    }
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || dt.is_nan() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(DynamicsError::InvalidDuration(t_final));
    }
    if t_final == 0.0 {
        return Ok(0);
    }
    Ok(((t_final / dt).ceil() as usize).max(1))
}

/// `H(t) = H₀ + Σ (M e^{iωt} + M† e^{−iωt})`.
#[derive(Debug, Clone)]
pub(crate) struct PureGenerator {
    h0: Sparse,
    harmonics: Vec<(Sparse, Sparse, f64)>,
}

impl PureGenerator {
    pub fn constant(h: &CMatrix) -> Self {
        Self { h0: Sparse::from_dense(h), harmonics: Vec::new() }
    }

    pub fn with_harmonic(mut self, m: &CMatrix, freq: f64) -> Self {
        let s = Sparse::from_dense(m);
        let adj = s.adjoint();
        self.harmonics.push((s, adj, freq));
        self
    }

    pub fn omega_max(&self) -> f64 {
        let mut w = self.h0.inf_norm();
        let mut fmax: f64 = 0.0;
        for (m, _, f) in &self.harmonics {
            w += 2.0 * m.inf_norm();
            fmax = fmax.max(f.abs());
        }
        w.max(fmax)
    }

    fn deriv(&self, t: f64, psi: &CVector, out: &mut CVector) {
        out.fill(C64::new(0.0, 0.0));
        let mi = C64::new(0.0, -1.0);
        self.h0.apply_add(mi, psi, out);
        for (m, adj, f) in &self.harmonics {
            let ph = C64::from_polar(1.0, f * t);
            m.apply_add(mi * ph, psi, out);
            adj.apply_add(mi * ph.conj(), psi, out);
        }
    }

    /// Integrates from `t0` to `t0 + duration`, calling `record` every
    /// `record_every` steps (0 disables intermediate records).
    pub fn evolve(
        &self,
        psi: CVector,
        t0: f64,
        duration: f64,
        dt: f64,
        record_every: usize,
        mut record: impl FnMut(f64, &CVector),
    ) -> Result<CVector> {
        let steps = step_count(duration, dt)?;
        if steps == 0 {
            return Ok(psi);
        }
        let h = duration / steps as f64;
        let n = psi.len();
        let norm0 = psi.norm();
        let mut y = psi;
        let (mut k1, mut k2, mut k3, mut k4) =
            (CVector::zeros(n), CVector::zeros(n), CVector::zeros(n), CVector::zeros(n));
        let mut tmp = CVector::zeros(n);
        let half = C64::from(0.5 * h);
        let full = C64::from(h);
        for step in 0..steps {
            let t = t0 + step as f64 * h;
            self.deriv(t, &y, &mut k1);
            tmp.copy_from(&y);
            tmp.axpy(half, &k1, C64::from(1.0));
            self.deriv(t + 0.5 * h, &tmp, &mut k2);
            tmp.copy_from(&y);
            tmp.axpy(half, &k2, C64::from(1.0));
            self.deriv(t + 0.5 * h, &tmp, &mut k3);
            tmp.copy_from(&y);
            tmp.axpy(full, &k3, C64::from(1.0));
            self.deriv(t + h, &tmp, &mut k4);
            let sixth = C64::from(h / 6.0);
            y.axpy(sixth, &k1, C64::from(1.0));
            y.axpy(sixth * 2.0, &k2, C64::from(1.0));
            y.axpy(sixth * 2.0, &k3, C64::from(1.0));
            y.axpy(sixth, &k4, C64::from(1.0));
            if record_every > 0 && (step + 1) % record_every == 0 && step + 1 < steps {
                record(t + h, &y);
            }
        }
        let drift = (y.norm() - norm0).abs();
        if drift > DRIFT_LIMIT {
            return Err(DynamicsError::NormDrift { drift });
        }
        Ok(y)
    }
}

/// `dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ r LρL†` with `H_eff = H − (i/2)Σ r L†L`.
#[derive(Debug, Clone)]
pub(crate) struct LindbladGenerator {
    h_eff: Sparse,
    h_eff_adj: Sparse,
    jumps: Vec<(Sparse, Sparse, f64)>,
    omega: f64,
}

impl LindbladGenerator {
    pub fn new(h: &CMatrix, collapse: &[(CMatrix, f64)]) -> Result<Self> {
        let mut h_eff = h.clone();
        let mut jumps = Vec::new();
        for (l, rate) in collapse {
            if !(*rate >= 0.0) {
                return Err(DynamicsError::NegativeRate(*rate));
            }
            if *rate == 0.0 {
                continue;
            }
            h_eff -= l.adjoint() * l * C64::new(0.0, 0.5 * rate);
            let s = Sparse::from_dense(l);
            let adj = s.adjoint();
            jumps.push((s, adj, *rate));
        }
        // rho evolves under a commutator, whose frequencies are energy differences
        let h_eff = Sparse::from_dense(&h_eff);
        let omega = 2.0 * h_eff.inf_norm();
        let h_eff_adj = h_eff.adjoint();
        Ok(Self { h_eff, h_eff_adj, jumps, omega })
    }

    pub fn omega_max(&self) -> f64 {
        self.omega
    }

    fn deriv(&self, rho: &CMatrix, out: &mut CMatrix, scratch: &mut CMatrix) {
        out.fill(C64::new(0.0, 0.0));
        self.h_eff.left_mul_add(C64::new(0.0, -1.0), rho, out);
        self.h_eff_adj.right_mul_add(C64::new(0.0, 1.0), rho, out);
        for (l, adj, rate) in &self.jumps {
            scratch.fill(C64::new(0.0, 0.0));
            l.left_mul_add(C64::from(1.0), rho, scratch);
            adj.right_mul_add(C64::from(*rate), scratch, out);
        }
    }

    pub fn evolve(
        &self,
        rho: CMatrix,
        duration: f64,
        dt: f64,
        record_every: usize,
        mut record: impl FnMut(f64, &CMatrix),
    ) -> Result<CMatrix> {
        let steps = step_count(duration, dt)?;
        if steps == 0 {
            return Ok(rho);
        }
        let h = duration / steps as f64;
        let n = rho.nrows();
        let tr0 = rho.trace().re;
        let mut y = rho;
        let z = || CMatrix::zeros(n, n);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp, mut scratch) = (z(), z(), z(), z(), z(), z());
        for step in 0..steps {
            self.deriv(&y, &mut k1, &mut scratch);
            tmp.copy_from(&y);
            tmp += &k1 * C64::from(0.5 * h);
            self.deriv(&tmp, &mut k2, &mut scratch);
            tmp.copy_from(&y);
            tmp += &k2 * C64::from(0.5 * h);
            self.deriv(&tmp, &mut k3, &mut scratch);
            tmp.copy_from(&y);
            tmp += &k3 * C64::from(h);
            self.deriv(&tmp, &mut k4, &mut scratch);
            k2 += &k3;
            k1 += &k4;
            k1 += &k2 * C64::from(2.0);
            y += &k1 * C64::from(h / 6.0);
            if record_every > 0 && (step + 1) % record_every == 0 && step + 1 < steps {
                record((step + 1) as f64 * h, &y);
            }
        }
        let drift = (y.trace().re - tr0).abs();
        if drift > DRIFT_LIMIT {
            return Err(DynamicsError::TraceDrift { drift });
        }
        Ok(y)
    }
}

pub(crate) fn warn_positivity(rho: &DensityMatrix) {
    let min = rho.min_eigenvalue();
    if min < -POSITIVITY_WARN {
        log::warn!("density matrix positivity violated by {min:.3e}");
    }
}

/// RK4 integration of `dψ/dt = −iH(t)ψ`, recording every step.
pub fn evolve_schrodinger<F: Fn(f64) -> Operator>(
    h: F,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory<StateVector>> {
    evolve_schrodinger_with(h, psi0, t_final, dt, 1)
}

/// As [`evolve_schrodinger`] but records only every `record_every` steps
/// (the endpoints are always kept; 0 keeps only the endpoints).
pub fn evolve_schrodinger_with<F: Fn(f64) -> Operator>(
    h: F,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory<StateVector>> {
    let steps = step_count(t_final, dt)?;
    let space = psi0.space().clone();
    let mut traj = Trajectory::new();
    traj.push(0.0, psi0.clone());
    if steps == 0 {
        return Ok(traj);
    }
    let step = t_final / steps as f64;
    let eval = |t: f64, y: &CVector| -> Result<CVector> {
        let op = h(t);
        op.check_hermitian()?;
        Ok(op.matrix() * y * C64::new(0.0, -1.0))
    };
    let mut y = psi0.amplitudes().clone();
    let norm0 = y.norm();
    for i in 0..steps {
        let t = i as f64 * step;
        let k1 = eval(t, &y)?;
        let k2 = eval(t + 0.5 * step, &(&y + &k1 * C64::from(0.5 * step)))?;
        let k3 = eval(t + 0.5 * step, &(&y + &k2 * C64::from(0.5 * step)))?;
        let k4 = eval(t + step, &(&y + &k3 * C64::from(step)))?;
        y += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(step / 6.0);
        let last = i + 1 == steps;
        if last || (record_every > 0 && (i + 1) % record_every == 0) {
            traj.push(if last { t_final } else { t + step }, StateVector::from_raw(space.clone(), y.clone())?);
        }
    }
    let drift = (y.norm() - norm0).abs();
    if drift > DRIFT_LIMIT {
        return Err(DynamicsError::NormDrift { drift });
    }
    Ok(traj)
}

/// RK4 integration of the Lindblad equation with a constant Hamiltonian,
/// recording every step. Each dissipator is `(r/2)(2LρL† − L†Lρ − ρL†L)`.
pub fn evolve_lindblad(
    h: &Operator,
    collapse_ops: &[(Operator, f64)],
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory<DensityMatrix>> {
    evolve_lindblad_with(h, collapse_ops, rho0, t_final, dt, 1)
}

pub fn evolve_lindblad_with(
    h: &Operator,
    collapse_ops: &[(Operator, f64)],
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory<DensityMatrix>> {
    h.check_hermitian()?;
    let space = rho0.space().clone();
    if h.space() != &space || collapse_ops.iter().any(|(l, _)| l.space() != &space) {
        return Err(crate::ops::OpsError::SpaceMismatch {
            left: space.dims().to_vec(),
            right: h.space().dims().to_vec(),
        }
        .into());
    }
    let collapse: Vec<(CMatrix, f64)> = collapse_ops.iter().map(|(l, r)| (l.matrix().clone(), *r)).collect();
    let gen = LindbladGenerator::new(h.matrix(), &collapse)?;
    let mut traj = Trajectory::new();
    traj.push(0.0, rho0.clone());
    let mut records = Vec::new();
    let out = gen.evolve(rho0.matrix().clone(), t_final, dt, record_every, |t, m| records.push((t, m.clone())))?;
    for (t, m) in records {
        traj.push(t, DensityMatrix::from_raw(space.clone(), m)?);
    }
    if t_final > 0.0 {
        let fin = DensityMatrix::from_raw(space, out)?;
        warn_positivity(&fin);
        traj.push(t_final, fin);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{jc_operator, SystemParams};
    use crate::ops::{annihilation, embed, propagator_exact, sigma_ge, HilbertSpace, E, G};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let sp = HilbertSpace::qubit_with(&[3]).unwrap();
        let psi = StateVector::basis(&sp, &[E, 1]).unwrap();
        let traj = evolve_schrodinger(|_| Operator::zeros(&sp), &psi, 2.0, 0.1).unwrap();
        assert_eq!(traj.last().unwrap(), &psi);
        assert_eq!(traj.len(), 21);
        assert!((traj.times[20] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rk4_matches_propagator() {
        let sp = HilbertSpace::qubit_with(&[4]).unwrap();
        let h = jc_operator(&sp, 1.1, 0.9, 0.7).unwrap();
        let psi = StateVector::basis(&sp, &[E, 1]).unwrap();
        let dt = default_dt(Sparse::from_dense(h.matrix()).inf_norm()) / 8.0;
        let traj = evolve_schrodinger(|_| h.clone(), &psi, 5.0, dt).unwrap();
        let want = propagator_exact(&h, 5.0).unwrap().apply(&psi).unwrap();
        assert!((traj.last().unwrap().amplitudes() - want).norm() < 1e-8);
    }

    #[test]
    fn fast_path_matches_generic() {
        let p = SystemParams::default();
        let sp = HilbertSpace::qubit_with(&[3, 2]).unwrap();
        let full = crate::model::FullHamiltonian::new(&p, &sp).unwrap();
        let psi = StateVector::basis(&sp, &[E, 0, 0]).unwrap();
        let gen = PureGenerator::constant(&CMatrix::zeros(12, 12)).with_harmonic(full.coupling(), p.delta);
        let dt = default_dt(gen.omega_max());
        let fast = gen.evolve(psi.amplitudes().clone(), 0.0, 1.0, dt, 0, |_, _| {}).unwrap();
        let slow = evolve_schrodinger_with(|t| full.at(t), &psi, 1.0, dt, 0).unwrap();
        assert!((fast - slow.last().unwrap().amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn step_validation() {
        let sp = HilbertSpace::qubit_with(&[2]).unwrap();
        let psi = StateVector::basis(&sp, &[G, 0]).unwrap();
        assert!(matches!(
            evolve_schrodinger(|_| Operator::zeros(&sp), &psi, 1.0, 0.0),
            Err(DynamicsError::InvalidStep(_))
        ));
    }

    #[test]
    fn large_step_reports_drift() {
        let sp = HilbertSpace::qubit_with(&[2]).unwrap();
        let h = jc_operator(&sp, 0.0, 0.0, 10.0).unwrap();
        let psi = StateVector::basis(&sp, &[E, 0]).unwrap();
        assert!(matches!(
            evolve_schrodinger(|_| h.clone(), &psi, 10.0, 0.05),
            Err(DynamicsError::NormDrift { .. })
        ));
    }

    #[test]
    fn lindblad_closed_limit_matches_schrodinger() {
        let sp = HilbertSpace::qubit_with(&[3]).unwrap();
        let h = jc_operator(&sp, 1.0, 1.0, 0.8).unwrap();
        let psi = StateVector::basis(&sp, &[E, 0]).unwrap();
        let dt = 0.005;
        let pure = evolve_schrodinger_with(|_| h.clone(), &psi, 3.0, dt, 0).unwrap();
        let l = embed(&sigma_ge(), 0, &sp).unwrap();
        let mixed = evolve_lindblad_with(&h, &[(l, 0.0)], &psi.to_density(), 3.0, dt, 0).unwrap();
        let diff = mixed.last().unwrap().matrix() - pure.last().unwrap().to_density().matrix();
        assert!(diff.norm() < 1e-7);
    }

    #[test]
    fn amplitude_damping_analytic() {
        let sp = HilbertSpace::single(2).unwrap();
        let gamma = 0.3;
        let rho0 = StateVector::basis(&sp, &[E]).unwrap().to_density();
        let traj = evolve_lindblad(&Operator::zeros(&sp), &[(sigma_ge(), gamma)], &rho0, 4.0, 0.01).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(rho.population(&[E]).unwrap(), (-gamma * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn photon_decay_analytic() {
        let sp = HilbertSpace::single(3).unwrap();
        let kappa = 0.5;
        let rho0 = StateVector::basis(&sp, &[1]).unwrap().to_density();
        let n = crate::ops::number(3).unwrap();
        let traj = evolve_lindblad(&Operator::zeros(&sp), &[(annihilation(3).unwrap(), kappa)], &rho0, 3.0, 0.01).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            let mean = crate::ops::expectation(rho, &n).unwrap().re;
            assert_abs_diff_eq!(mean, (-kappa * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let sp = HilbertSpace::single(2).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(&sp);
        assert!(matches!(
            evolve_lindblad(&Operator::zeros(&sp), &[(sigma_ge(), -1.0)], &rho0, 1.0, 0.1),
            Err(DynamicsError::NegativeRate(_))
        ));
    }
}
