//! Physical parameters and Hamiltonian builders.
//!
//! All frequencies are in units of the effective coupling `g`.

use crate::ops::{
    annihilation, embed, number, proj_e, s_z, sigma_eg, sigma_ge, sigma_x, CMatrix, HilbertSpace,
    Operator, OpsError, C64,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("detuning Delta must be nonzero")]
    ZeroDetuning,
    #[error("rate or amplitude {0} must be non-negative")]
    NegativeRate(&'static str),
    #[error("{name} must be finite")]
    NonFinite { name: &'static str },
    #[error("expected a space with layout {expected}, found {found:?}")]
    WrongSpace { expected: &'static str, found: Vec<usize> },
    #[error("lambda mismatch: lambda = {lambda}, g1^2/delta1 = {ratio1}, -g2^2/delta2 = {ratio2}")]
    LambdaMismatch { lambda: f64, ratio1: f64, ratio2: f64 },
    #[error(transparent)]
    Ops(#[from] OpsError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Every rate and detuning of the setup. Unspecified fields keep the defaults
/// of the reference parameter set (`g_m = 0.1`, `g_c = 10`, `Ω = 1`, `N = 1e4`,
/// `Δ = 100`, `λ = 50`, `Ω_s = 5`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub g_c: f64,
    pub g_m: f64,
    pub n_spins: f64,
    pub omega: f64,
    pub delta: f64,
    pub omega_b1: f64,
    pub omega_b2: f64,
    pub g1: f64,
    pub g2: f64,
    pub omega_s: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let lambda = 50.0;
        let (g1, g2) = (1.0, 1.0);
        let delta1 = g1 * g1 / lambda;
        let delta2 = -g2 * g2 / lambda;
        let omega_b1 = 1.0;
        // The qubit parks at omega_b1 + delta1 during rotations, and
        // delta2 = omega_park - omega_b2 fixes the second mode.
        let omega_b2 = omega_b1 + delta1 - delta2;
        Self {
            g_c: 10.0,
            g_m: 0.1,
            n_spins: 1e4,
            omega: 1.0,
            delta: 100.0,
            omega_b1,
            omega_b2,
            g1,
            g2,
            omega_s: 5.0,
            delta1,
            delta2,
            lambda,
            kappa: 0.0,
            gamma: 0.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_c", self.g_c),
            ("g_m", self.g_m),
            ("n_spins", self.n_spins),
            ("omega", self.omega),
            ("delta", self.delta),
            ("omega_b1", self.omega_b1),
            ("omega_b2", self.omega_b2),
            ("g1", self.g1),
            ("g2", self.g2),
            ("omega_s", self.omega_s),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("lambda", self.lambda),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { name });
            }
        }
        let rates = [
            ("g_c", self.g_c),
            ("g_m", self.g_m),
            ("n_spins", self.n_spins),
            ("omega", self.omega),
            ("g1", self.g1),
            ("g2", self.g2),
            ("omega_s", self.omega_s),
            ("lambda", self.lambda),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ];
        for (name, v) in rates {
            if v < 0.0 {
                return Err(ModelError::NegativeRate(name));
            }
        }
        if self.delta == 0.0 {
            return Err(ModelError::ZeroDetuning);
        }
        Ok(())
    }

    /// Human-readable warnings for regimes where the approximations weaken.
    pub fn validity_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.delta.abs();
        let mut ratio = |name: &str, value: f64| {
            if value > 0.0 && d / value < 10.0 {
                out.push(format!("dispersive ratio |Delta|/{name} = {:.2} is below 10", d / value));
            }
        };
        ratio("g_c", self.g_c);
        ratio("Omega", self.omega);
        ratio("g_m*sqrt(N)", self.g_m * self.n_spins.sqrt());
        if self.omega_s >= self.lambda {
            out.push(format!(
                "selective regime violated: Omega_s = {} is not below lambda = {}",
                self.omega_s, self.lambda
            ));
        }
        out
    }

    /// Warnings for the strong-driving regime `Ω_s ≫ δ, g`.
    pub fn strong_driving_warnings(&self) -> Vec<String> {
        let scale = [self.delta1.abs(), self.delta2.abs(), self.g1, self.g2]
            .into_iter()
            .fold(0.0, f64::max);
        if scale > 0.0 && self.omega_s / scale < 10.0 {
            vec![format!("strong-driving ratio Omega_s/max(delta, g) = {:.2} is below 10", self.omega_s / scale)]
        } else {
            Vec::new()
        }
    }

    /// Frequency at which the qubit idles during selective rotations.
    pub fn omega_park(&self) -> f64 {
        self.omega_b1 + self.delta1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub omega_z: f64,
    pub omega_b: f64,
    pub g_eff: f64,
}

pub fn derive(params: &SystemParams) -> Result<DerivedParams> {
    let d = params.delta;
    if d == 0.0 {
        return Err(ModelError::ZeroDetuning);
    }
    Ok(DerivedParams {
        omega_z: 2.0 * params.omega * params.omega / d + params.g_c * params.g_c / d,
        omega_b: params.n_spins * params.g_m * params.g_m / d,
        g_eff: params.n_spins.sqrt() * params.g_m * params.g_c / d,
    })
}

fn expect_layout(space: &HilbertSpace, factors: usize, expected: &'static str) -> Result<()> {
    if space.factors() != factors || space.dims()[0] != 2 {
        return Err(ModelError::WrongSpace { expected, found: space.dims().to_vec() });
    }
    Ok(())
}

/// Single-ensemble full Hamiltonian `H(t) = A e^{iΔt} + A† e^{−iΔt}` on
/// qubit ⊗ mode ⊗ cavity, with `A = g_c σ_eg a + Ω σ_eg + g_m√N b† a`.
#[derive(Debug, Clone)]
pub struct FullHamiltonian {
    space: HilbertSpace,
    a: CMatrix,
    delta: f64,
}

impl FullHamiltonian {
    pub fn new(params: &SystemParams, space: &HilbertSpace) -> Result<Self> {
        expect_layout(space, 3, "qubit x mode x cavity")?;
        if params.delta == 0.0 {
            return Err(ModelError::ZeroDetuning);
        }
        let nb = space.dims()[1];
        let nc = space.dims()[2];
        let s_eg = embed(&sigma_eg(), 0, space)?;
        let a = embed(&annihilation(nc)?, 2, space)?;
        let b_dag = embed(&annihilation(nb)?.adjoint(), 1, space)?;
        let m = s_eg.matrix() * a.matrix() * C64::from(params.g_c)
            + s_eg.matrix() * C64::from(params.omega)
            + b_dag.matrix() * a.matrix() * C64::from(params.g_m * params.n_spins.sqrt());
        Ok(Self { space: space.clone(), a: m, delta: params.delta })
    }

    /// The operator multiplying `e^{iΔt}`.
    pub fn coupling(&self) -> &CMatrix {
        &self.a
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn at(&self, t: f64) -> Operator {
        let ph = C64::from_polar(1.0, self.delta * t);
        let m = &self.a * ph + self.a.adjoint() * ph.conj();
        Operator::new(self.space.clone(), m).expect("layout checked at construction")
    }
}

pub fn full_hamiltonian(params: &SystemParams, space: &HilbertSpace, t: f64) -> Result<Operator> {
    Ok(FullHamiltonian::new(params, space)?.at(t))
}

/// `ω_z S_z + ω_b b†b + g(σ_ge b† + σ_eg b)` on qubit ⊗ mode.
pub fn effective_jc(params: &SystemParams, space: &HilbertSpace) -> Result<Operator> {
    expect_layout(space, 2, "qubit x mode")?;
    let d = derive(params)?;
    jc_operator(space, d.omega_z, d.omega_b, d.g_eff)
}

/// JC operator with explicit parameters on qubit ⊗ mode.
pub fn jc_operator(space: &HilbertSpace, omega_z: f64, omega_b: f64, g: f64) -> Result<Operator> {
    expect_layout(space, 2, "qubit x mode")?;
    let nb = space.dims()[1];
    let sz = embed(&s_z(), 0, space)?;
    let n = embed(&number(nb)?, 1, space)?;
    let x = exchange(space, 1)?;
    let m = sz.matrix() * C64::from(omega_z) + n.matrix() * C64::from(omega_b) + x.matrix() * C64::from(g);
    Ok(Operator::new(space.clone(), m)?)
}

/// `σ_ge b_k† + σ_eg b_k` for the mode at `factor`.
pub fn exchange(space: &HilbertSpace, factor: usize) -> Result<Operator> {
    let nb = space.dims().get(factor).copied().ok_or(OpsError::FactorIndex {
        index: factor,
        factors: space.factors(),
    })?;
    let b = embed(&annihilation(nb)?, factor, space)?;
    let s_ge = embed(&sigma_ge(), 0, space)?;
    let m = s_ge.matrix() * b.matrix().adjoint();
    let herm = &m + m.adjoint();
    Ok(Operator::new(space.clone(), herm)?)
}

/// `ω_z S_z + ω_b1 n̂₁ + ω_b2 n̂₂ + g₁(σ_ge b₁† + h.c.) + g₂(σ_ge b₂† + h.c.)`.
pub fn two_mode_effective(params: &SystemParams, omega_z: f64, space: &HilbertSpace) -> Result<Operator> {
    expect_layout(space, 3, "qubit x mode1 x mode2")?;
    let sz = embed(&s_z(), 0, space)?;
    let n1 = embed(&number(space.dims()[1])?, 1, space)?;
    let n2 = embed(&number(space.dims()[2])?, 2, space)?;
    let x1 = exchange(space, 1)?;
    let x2 = exchange(space, 2)?;
    let m = sz.matrix() * C64::from(omega_z)
        + n1.matrix() * C64::from(params.omega_b1)
        + n2.matrix() * C64::from(params.omega_b2)
        + x1.matrix() * C64::from(params.g1)
        + x2.matrix() * C64::from(params.g2);
    Ok(Operator::new(space.clone(), m)?)
}

/// Checks `λ = g₁²/δ₁ = −g₂²/δ₂` to 1e-9 relative.
pub fn check_lambda_matching(params: &SystemParams) -> Result<()> {
    let ratio1 = params.g1 * params.g1 / params.delta1;
    let ratio2 = -params.g2 * params.g2 / params.delta2;
    let tol = 1e-9 * params.lambda.abs().max(f64::MIN_POSITIVE);
    if !((ratio1 - params.lambda).abs() <= tol && (ratio2 - params.lambda).abs() <= tol) {
        return Err(ModelError::LambdaMismatch { lambda: params.lambda, ratio1, ratio2 });
    }
    Ok(())
}

/// Drive frequency that rotates the qubit only in the class `n₁ − n₂ = Δn`.
pub fn selective_drive_frequency(params: &SystemParams, delta_n: i64) -> Result<f64> {
    check_lambda_matching(params)?;
    let omega_z = derive(params)?.omega_z;
    Ok(omega_z + 2.0 * params.lambda * delta_n as f64)
}

/// `(σ_x/2)(g₁ b₁ e^{−iδ₁t} + g₂ b₂ e^{−iδ₂t}) + h.c.` on qubit ⊗ mode1 ⊗ mode2.
pub fn strong_driving_effective(params: &SystemParams, space: &HilbertSpace, t: f64) -> Result<Operator> {
    expect_layout(space, 3, "qubit x mode1 x mode2")?;
    for w in params.strong_driving_warnings() {
        log::warn!("{w}");
    }
    let sx = embed(&sigma_x(), 0, space)?;
    let b1 = embed(&annihilation(space.dims()[1])?, 1, space)?;
    let b2 = embed(&annihilation(space.dims()[2])?, 2, space)?;
    let modes = b1.matrix() * (C64::from_polar(1.0, -params.delta1 * t) * params.g1)
        + b2.matrix() * (C64::from_polar(1.0, -params.delta2 * t) * params.g2);
    let m = sx.matrix() * C64::from(0.5) * modes;
    let herm = &m + m.adjoint();
    Ok(Operator::new(space.clone(), herm)?)
}

/// `|e⟩⟨e|` embedded on the qubit factor.
pub fn excited_projector(space: &HilbertSpace) -> Result<Operator> {
    Ok(embed(&proj_e(), 0, space)?)
}
