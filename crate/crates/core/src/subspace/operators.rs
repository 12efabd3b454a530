use crate::error::{Error, Result};
use crate::linalg::{Csr, C64};
use crate::model::{ModelParams, SpinSubspace};

/// Default cap on the product-basis dimension (2S+1)(n_max+1).
pub const DEFAULT_DIM_CAP: usize = 20_000;

/// Index bookkeeping for |S,M⟩⊗|n⟩, M-major then n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProductBasis {
    pub sub: SpinSubspace,
    pub n_max: usize,
}

impl ProductBasis {
    pub fn new(sub: SpinSubspace, n_max: usize, cap: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParams("n_max must be at least 1".into()));
        }
        let b = ProductBasis { sub, n_max };
        if b.dim() > cap {
            return Err(Error::DimensionCap { dim: b.dim(), cap });
        }
        Ok(b)
    }

    pub fn fock(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.sub.dim() * self.fock()
    }

    /// `m_idx` = M + S.
    pub fn index(&self, m_idx: usize, n: usize) -> usize {
        m_idx * self.fock() + n
    }

    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.fock(), i % self.fock())
    }

    pub fn m(&self, i: usize) -> f64 {
        self.split(i).0 as f64 - self.sub.spin()
    }

    pub fn n(&self, i: usize) -> usize {
        self.split(i).1
    }

    /// Photon-spin parity (M+S)+n mod 2; conserved by the Hamiltonian.
    pub fn parity(&self, i: usize) -> usize {
        let (m, n) = self.split(i);
        (m + n) % 2
    }

    /// Global indices of the even and odd parity sectors.
    pub fn parity_sectors(&self) -> [Vec<usize>; 2] {
        let mut s = [Vec::new(), Vec::new()];
        for i in 0..self.dim() {
            s[self.parity(i)].push(i);
        }
        s
    }
}

/// Spin and photon operators on the product basis.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub basis: ProductBasis,
    pub a: Csr<f64>,
    pub adag: Csr<f64>,
    pub sx: Csr<C64>,
    pub sy: Csr<C64>,
    pub sz: Csr<f64>,
    pub sp: Csr<f64>,
    pub sm: Csr<f64>,
    pub s2: Csr<f64>,
}

impl OperatorSet {
    pub fn new(basis: ProductBasis) -> Self {
        let d = basis.dim();
        let s = basis.sub.spin();
        let two_s = basis.sub.two_s as usize;
        let mut a = Vec::new();
        let mut sz = Vec::new();
        let mut sp = Vec::new();
        let mut s2 = Vec::new();
        for mi in 0..=two_s {
            let m = mi as f64 - s;
            for n in 0..=basis.n_max {
                let i = basis.index(mi, n);
                if n >= 1 {
                    a.push((basis.index(mi, n - 1), i, (n as f64).sqrt()));
                }
                sz.push((i, i, m));
                s2.push((i, i, s * (s + 1.0)));
                if mi < two_s {
                    let c = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
                    sp.push((basis.index(mi + 1, n), i, c));
                }
            }
        }
        let a = Csr::from_triplets(d, d, a);
        let sp = Csr::from_triplets(d, d, sp);
        let sm = sp.transpose();
        let half = C64::new(0.5, 0.0);
        let sx = sp.to_complex().add(&sm.to_complex()).scale(half);
        let sy = sp.to_complex().add(&sm.to_complex().scale(C64::new(-1.0, 0.0))).scale(C64::new(0.0, -0.5));
        OperatorSet {
            basis,
            adag: a.transpose(),
            a,
            sx,
            sy,
            sz: Csr::from_triplets(d, d, sz),
            sp,
            sm,
            s2: Csr::from_triplets(d, d, s2),
        }
    }

    pub fn number(&self) -> Csr<f64> {
        self.adag.matmul(&self.a)
    }
}

/// H = ω_c a†a + 2ω_0 S_z + (g/√N)(S⁺+S⁻)(a+a†), real symmetric.
pub fn build_hamiltonian(
    params: &ModelParams,
    sub: SpinSubspace,
    n_max: usize,
    dim_cap: usize,
) -> Result<(OperatorSet, Csr<f64>)> {
    params.validate()?;
    if sub.n_atoms != params.n_atoms {
        return Err(Error::InvalidSubspace("subspace N differs from params N".into()));
    }
    let ops = OperatorSet::new(ProductBasis::new(sub, n_max, dim_cap)?);
    let h = hamiltonian_from(&ops, params);
    Ok((ops, h))
}

pub(crate) fn hamiltonian_from(ops: &OperatorSet, params: &ModelParams) -> Csr<f64> {
    let n = ops.number().scale(params.omega_c);
    let z = ops.sz.scale(2.0 * params.omega_0);
    let coupling = ops.sp.add(&ops.sm).matmul(&ops.a.add(&ops.adag)).scale(params.g_prime());
    n.add(&z).add(&coupling)
}
