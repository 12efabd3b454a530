//! Physical parameters, total-spin bookkeeping and the critical curve.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates of one open Dicke model instance, in units of the cavity loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_c: f64,
    pub omega_0: f64,
    pub g: f64,
    pub kappa: f64,
    pub n_atoms: u32,
}

impl ModelParams {
    /// Checked constructor.
    pub fn new(omega_c: f64, omega_0: f64, g: f64, kappa: f64, n_atoms: u32) -> Result<Self> {
        let p = ModelParams { omega_c, omega_0, g, kappa, n_atoms };
        p.validate()?;
        Ok(p)
    }

    /// The rates used throughout the examples: ω_c = 1, ω_0 = 0.5, κ = 1.
    pub fn reference(g: f64, n_atoms: u32) -> Self {
        ModelParams { omega_c: 1.0, omega_0: 0.5, g, kappa: 1.0, n_atoms }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_c, self.omega_0, self.g, self.kappa].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite rate".into()));
        }
        if self.omega_c <= 0.0 || self.omega_0 <= 0.0 || self.kappa <= 0.0 {
            return Err(Error::InvalidParams("omega_c, omega_0 and kappa must be positive".into()));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParams("g must be nonnegative".into()));
        }
        if self.n_atoms == 0 {
            return Err(Error::NoAtoms);
        }
        Ok(())
    }

    /// Right-hand side of the critical curve, (g² S̃)_c.
    pub fn critical_product(&self) -> f64 {
        self.omega_0 * (self.omega_c * self.omega_c + 0.25 * self.kappa * self.kappa)
            / (2.0 * self.omega_c)
    }

    /// Rescaled coupling g/√N.
    pub fn g_prime(&self) -> f64 {
        self.g / (self.n_atoms as f64).sqrt()
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_atoms(mut self, n_atoms: u32) -> Self {
        self.n_atoms = n_atoms;
        self
    }
}

/// Local perturbation: total rate Γ split into dephasing fΓ and decay (1−f)Γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub gamma: f64,
    pub f: f64,
}

impl PerturbationSpec {
    pub fn new(gamma: f64, f: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma = {gamma} must be >= 0")));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidParams(format!("f = {f} must lie in [0, 1]")));
        }
        Ok(PerturbationSpec { gamma, f })
    }

    pub const NONE: PerturbationSpec = PerturbationSpec { gamma: 0.0, f: 0.0 };

    pub fn gamma_phi(&self) -> f64 {
        self.f * self.gamma
    }

    pub fn gamma_down(&self) -> f64 {
        (1.0 - self.f) * self.gamma
    }

    /// Transverse relaxation rate (Γ_φ + Γ_↓)/2.
    pub fn gamma_tilde(&self) -> f64 {
        0.5 * self.gamma
    }
}

/// The invariant sector of fixed total spin S, stored as 2S.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinSubspace {
    pub two_s: u32,
    pub n_atoms: u32,
}

impl SpinSubspace {
    pub fn new(two_s: u32, n_atoms: u32) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::NoAtoms);
        }
        if two_s > n_atoms || (n_atoms - two_s) % 2 != 0 {
            return Err(Error::InvalidSubspace(format!("2S = {two_s} with N = {n_atoms}")));
        }
        Ok(SpinSubspace { two_s, n_atoms })
    }

    /// The fully symmetric subspace S = N/2.
    pub fn top(n_atoms: u32) -> Self {
        SpinSubspace { two_s: n_atoms, n_atoms }
    }

    pub fn spin(&self) -> f64 {
        0.5 * self.two_s as f64
    }

    /// S/(N/2).
    pub fn s_tilde(&self) -> f64 {
        self.two_s as f64 / self.n_atoms as f64
    }

    pub fn dim(&self) -> usize {
        self.two_s as usize + 1
    }

    /// Casimir eigenvalue S(S+1).
    pub fn casimir(&self) -> f64 {
        let s = self.spin();
        s * (s + 1.0)
    }

    /// Magnetic quantum numbers −S, −S+1, …, S.
    pub fn m_values(&self) -> impl Iterator<Item = f64> {
        let s = self.spin();
        (0..=self.two_s).map(move |k| k as f64 - s)
    }
}

/// S = S_min, …, N/2 in increasing order.
pub fn enumerate_subspaces(n_atoms: u32) -> Result<Vec<SpinSubspace>> {
    if n_atoms == 0 {
        return Err(Error::NoAtoms);
    }
    let start = n_atoms % 2;
    Ok((start..=n_atoms).step_by(2).map(|two_s| SpinSubspace { two_s, n_atoms }).collect())
}

/// Number of S-subspaces, ⌊N/2⌋ + 1.
pub fn subspace_count(n_atoms: u32) -> usize {
    n_atoms as usize / 2 + 1
}

fn binomial(n: u32, k: u32) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Multiplicity D_S of the spin-S irrep in N spin-1/2 particles.
///
/// Uses D_S = (2S+1)/(N/2+S+1) · C(N, N/2−S), exact in integers.
pub fn degeneracy(sub: SpinSubspace) -> BigUint {
    let n = sub.n_atoms;
    let k = (n - sub.two_s) / 2;
    let top = binomial(n, k) * (sub.two_s + 1);
    top / (n - k + 1)
}

/// D_S as a float (may be infinite for huge N).
pub fn degeneracy_f64(sub: SpinSubspace) -> f64 {
    degeneracy(sub).to_f64().unwrap_or(f64::INFINITY)
}

/// Normalized critical spin S̃_c; `None` when no subspace is superradiant.
pub fn critical_spin(params: &ModelParams) -> Result<Option<f64>> {
    params.validate()?;
    if params.g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let s = params.critical_product() / (params.g * params.g);
    // round-trip through critical_coupling lands within a few ulps of 1
    if (s - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(Some(1.0));
    }
    Ok((s <= 1.0).then_some(s))
}

/// Critical coupling g_c(S̃); the `g` field of `params` is ignored.
pub fn critical_coupling(params: &ModelParams, s_tilde: f64) -> Result<f64> {
    if !(s_tilde > 0.0 && s_tilde <= 1.0) {
        return Err(Error::InvalidParams(format!("s_tilde = {s_tilde} must lie in (0, 1]")));
    }
    params.with_g(1.0).validate()?;
    Ok((params.critical_product() / s_tilde).sqrt())
}
