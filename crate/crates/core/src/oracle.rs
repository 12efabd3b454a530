//! Brute-force Lindblad oracle on the full 2^N ⊗ Fock space, N ≤ 4.
//!
//! Conventions: the full-space index of |bits⟩⊗|n⟩ is bits·(n_max+1) + n, bit
//! k set means atom k is excited, σ_z|1⟩ = +|1⟩. Density matrices are
//! vectorized by stacking columns, vec(ρ)[r + d·c] = ρ[r][c], so that
//! vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
//!
//! Eigenproblems are solved inside the permutation-symmetric operator sector
//! (P ρ P† = ρ for every atom swap), which the Liouvillian leaves invariant and
//! which contains every physically relevant state. Outside it the Γ = 0
//! generator has extra zero modes, coherences between degenerate copies of the
//! same S, that never couple to symmetric states.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, FactorizeInto, Solve, UPLO};

use crate::dpt::{LiouvillianSpectrum, SpectrumSource, SpinDistribution};
use crate::error::{Error, Result};
use crate::linalg::{argsort_desc_re, hermitize, Csr, C64};
use crate::model::{enumerate_subspaces, ModelParams, PerturbationSpec};

pub const MAX_ATOMS: u32 = 4;
/// Cap on the Hilbert-space dimension d = 2^N (n_max+1).
pub const DIM_CAP: usize = 2000;

/// Per-atom and collective operators on the spin space, photon operators on
/// the Fock space.
#[derive(Clone, Debug)]
pub struct FullSpaceOperators {
    pub n_atoms: u32,
    pub n_max: usize,
    pub sigma_plus: Vec<Csr<f64>>,
    pub sigma_minus: Vec<Csr<f64>>,
    pub sigma_z: Vec<Csr<f64>>,
    pub sx: Csr<f64>,
    pub sz: Csr<f64>,
    pub s2: Csr<f64>,
    pub a: Csr<f64>,
    pub adag: Csr<f64>,
}

impl FullSpaceOperators {
    pub fn new(n_atoms: u32, n_max: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::NoAtoms);
        }
        if n_atoms > MAX_ATOMS {
            return Err(Error::ResourceCap(format!("the exact oracle is limited to N <= {MAX_ATOMS}, got {n_atoms}")));
        }
        if n_max < 1 {
            return Err(Error::InvalidParams("n_max must be at least 1".into()));
        }
        let ns = 1usize << n_atoms;
        let dim = ns * (n_max + 1);
        if dim > DIM_CAP {
            return Err(Error::DimensionCap { dim, cap: DIM_CAP });
        }
        let mut sigma_plus = Vec::new();
        let mut sigma_minus = Vec::new();
        let mut sigma_z = Vec::new();
        for k in 0..n_atoms as usize {
            let bit = 1usize << k;
            let up: Vec<_> = (0..ns).filter(|b| b & bit == 0).map(|b| (b | bit, b, 1.0)).collect();
            let p = Csr::from_triplets(ns, ns, up);
            sigma_minus.push(p.transpose());
            sigma_plus.push(p);
            let z = (0..ns).map(|b| (b, b, if b & bit != 0 { 1.0 } else { -1.0 })).collect();
            sigma_z.push(Csr::from_triplets(ns, ns, z));
        }
        let sum = |ops: &[Csr<f64>]| ops.iter().skip(1).fold(ops[0].clone(), |acc, o| acc.add(o));
        let sp = sum(&sigma_plus);
        let sm = sum(&sigma_minus);
        let sz = sum(&sigma_z).scale(0.5);
        let sx = sp.add(&sm).scale(0.5);
        // S² = S⁺S⁻ + S_z² − S_z
        let s2 = sp.matmul(&sm).add(&sz.matmul(&sz)).add(&sz.scale(-1.0));
        let f = n_max + 1;
        let a = Csr::from_triplets(f, f, (1..f).map(|n| (n - 1, n, (n as f64).sqrt())).collect());
        let adag = a.transpose();
        Ok(FullSpaceOperators { n_atoms, n_max, sigma_plus, sigma_minus, sigma_z, sx, sz, s2, a, adag })
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn fock(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.fock()
    }

    /// Spin operator lifted to the full space.
    pub fn spin(&self, op: &Csr<f64>) -> Csr<f64> {
        Csr::kron(op, &Csr::identity(self.fock(), 1.0))
    }

    /// Photon operator lifted to the full space.
    pub fn photon(&self, op: &Csr<f64>) -> Csr<f64> {
        Csr::kron(&Csr::identity(self.spin_dim(), 1.0), op)
    }

    /// Swap of atoms i and j on the spin space.
    pub fn permutation(&self, i: usize, j: usize) -> Csr<f64> {
        let ns = self.spin_dim();
        let trip = (0..ns)
            .map(|b| {
                let (bi, bj) = ((b >> i) & 1, (b >> j) & 1);
                let swapped = (b & !(1 << i) & !(1 << j)) | (bj << i) | (bi << j);
                (swapped, b, 1.0)
            })
            .collect();
        Csr::from_triplets(ns, ns, trip)
    }

    /// H = ω_c a†a + 2ω_0 S_z + (2g/√N) S_x (a + a†) on the full space.
    pub fn hamiltonian(&self, params: &ModelParams) -> Csr<f64> {
        let num = self.adag.matmul(&self.a);
        let quad = self.a.add(&self.adag);
        let gp = params.g / (self.n_atoms as f64).sqrt();
        self.photon(&num)
            .scale(params.omega_c)
            .add(&self.spin(&self.sz).scale(2.0 * params.omega_0))
            .add(&Csr::kron(&self.sx, &quad).scale(2.0 * gp))
    }
}

/// 𝓛 acting on column-stacked density matrices of dimension d.
#[derive(Clone, Debug)]
pub struct VectorizedLiouvillian {
    pub ops: FullSpaceOperators,
    pub d: usize,
    pub matrix: Csr<C64>,
}

impl VectorizedLiouvillian {
    /// max over columns of |Σ_i 𝓛[(i,i), col]|, zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.d;
        let mut sums = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + d * i) {
                sums[c] += v;
            }
        }
        sums.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Every eigenvalue by dense diagonalization; only for tiny spaces.
    pub fn full_spectrum(&self) -> Result<Vec<C64>> {
        let n = self.d * self.d;
        if n > 2500 {
            return Err(Error::DimensionCap { dim: n, cap: 2500 });
        }
        let (vals, _) = self.matrix.to_dense().eig().map_err(|e| Error::SpectrumFailure(e.to_string()))?;
        let order = argsort_desc_re(&vals);
        Ok(order.into_iter().map(|i| vals[i]).collect())
    }
}

fn lindblad_terms(l: &Csr<C64>, d: usize) -> Csr<C64> {
    let eye = Csr::identity(d, C64::new(1.0, 0.0));
    let ldl = l.adjoint().matmul(l);
    let half = C64::new(-0.5, 0.0);
    Csr::kron(&l.conj(), l)
        .add(&Csr::kron(&eye, &ldl).scale(half))
        .add(&Csr::kron(&ldl.transpose(), &eye).scale(half))
}

/// 𝓛 = −i(1⊗H − Hᵀ⊗1) + κ D[a] + Σ_n (Γ_φ/4) D[σ_z^n] + Σ_n Γ_↓ D[σ_n^−].
pub fn build_liouvillian(params: &ModelParams, pert: &PerturbationSpec, n_max: usize) -> Result<VectorizedLiouvillian> {
    params.validate()?;
    let ops = FullSpaceOperators::new(params.n_atoms, n_max)?;
    let d = ops.dim();
    let eye = Csr::identity(d, C64::new(1.0, 0.0));
    let h = ops.hamiltonian(params).to_complex();
    let mi = C64::new(0.0, -1.0);
    let mut l = Csr::kron(&eye, &h).scale(mi).add(&Csr::kron(&h.transpose(), &eye).scale(-mi));
    let a = ops.photon(&ops.a).to_complex();
    l = l.add(&lindblad_terms(&a, d).scale(C64::new(params.kappa, 0.0)));
    let (gphi, gdown) = (pert.gamma_phi(), pert.gamma_down());
    for k in 0..params.n_atoms as usize {
        if gphi > 0.0 {
            let z = ops.spin(&ops.sigma_z[k]).to_complex();
            l = l.add(&lindblad_terms(&z, d).scale(C64::new(0.25 * gphi, 0.0)));
        }
        if gdown > 0.0 {
            let m = ops.spin(&ops.sigma_minus[k]).to_complex();
            l = l.add(&lindblad_terms(&m, d).scale(C64::new(gdown, 0.0)));
        }
    }
    Ok(VectorizedLiouvillian { ops, d, matrix: l })
}

/// Orthonormal basis of the permutation-symmetric operators, split by the
/// parity (−1)^{|i|+n+|j|+m} that the Dicke Liouvillian conserves.
///
/// A basis element is the normalized orbit sum of |i,n⟩⟨j,m| over
/// simultaneous permutations of the atoms in i and j; the orbit of a pair of
/// bitstrings is fixed by how many atoms sit in each of the four (bit_i, bit_j)
/// combinations.
#[derive(Clone, Debug)]
pub struct SymmetricSector {
    n_atoms: u32,
    fock: usize,
    /// counts (c00, c01, c10, c11) per spin orbit
    labels: Vec<[usize; 4]>,
    sizes: Vec<f64>,
    reps: Vec<(usize, usize)>,
    label_of: Vec<usize>,
    /// per parity: reduced index → (spin orbit, n, m)
    pub members: [Vec<(usize, usize, usize)>; 2],
    position: HashMap<(usize, usize, usize), (usize, usize)>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl SymmetricSector {
    pub fn new(n_atoms: u32, fock: usize) -> Self {
        let n = n_atoms as usize;
        let ns = 1usize << n;
        let mut labels = Vec::new();
        for c00 in 0..=n {
            for c01 in 0..=n - c00 {
                for c10 in 0..=n - c00 - c01 {
                    labels.push([c00, c01, c10, n - c00 - c01 - c10]);
                }
            }
        }
        let index: HashMap<[usize; 4], usize> = labels.iter().enumerate().map(|(k, l)| (*l, k)).collect();
        let mut label_of = vec![0; ns * ns];
        for i in 0..ns {
            for j in 0..ns {
                let mut c = [0usize; 4];
                for k in 0..n {
                    c[2 * ((i >> k) & 1) + ((j >> k) & 1)] += 1;
                }
                label_of[i * ns + j] = index[&c];
            }
        }
        let sizes = labels
            .iter()
            .map(|c| factorial(n) / c.iter().map(|&x| factorial(x)).product::<f64>())
            .collect();
        let reps = labels
            .iter()
            .map(|c| {
                // atoms filled in the order 00, 01, 10, 11
                let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
                for (kind, &cnt) in c.iter().enumerate() {
                    for _ in 0..cnt {
                        i |= (kind >> 1) << k;
                        j |= (kind & 1) << k;
                        k += 1;
                    }
                }
                (i, j)
            })
            .collect::<Vec<_>>();
        let mut members: [Vec<(usize, usize, usize)>; 2] = [Vec::new(), Vec::new()];
        let mut position = HashMap::new();
        for (o, c) in labels.iter().enumerate() {
            let exc = c[1] + c[2] + 2 * c[3];
            for nn in 0..fock {
                for mm in 0..fock {
                    let par = (exc + nn + mm) % 2;
                    position.insert((o, nn, mm), (par, members[par].len()));
                    members[par].push((o, nn, mm));
                }
            }
        }
        SymmetricSector { n_atoms, fock, labels, sizes, reps, label_of, members, position }
    }

    pub fn orbit_count(&self) -> usize {
        self.labels.len()
    }

    pub fn block_dim(&self, parity: usize) -> usize {
        self.members[parity].len()
    }

    fn spin_dim(&self) -> usize {
        1 << self.n_atoms
    }

    fn decode(&self, p: usize) -> (usize, usize, usize) {
        let d = self.spin_dim() * self.fock;
        let (r, c) = (p % d, p / d);
        let (i, n) = (r / self.fock, r % self.fock);
        let (j, m) = (c / self.fock, c % self.fock);
        (self.label_of[i * self.spin_dim() + j], n, m)
    }

    /// Matrix of 𝓛 restricted to one parity block in the orthonormal orbit basis.
    ///
    /// R[k′][k] = √(|O_k′|/|O_k|) Σ_{p∈O_k} 𝓛[rep(k′), p], using that 𝓛 maps
    /// symmetric operators to symmetric operators.
    pub fn reduce(&self, l: &VectorizedLiouvillian, parity: usize) -> Csr<C64> {
        let d = l.d;
        let f = self.fock;
        let mut trip = Vec::new();
        for (row, &(o, n, m)) in self.members[parity].iter().enumerate() {
            let (i, j) = self.reps[o];
            let p = (i * f + n) + d * (j * f + m);
            for (c, v) in l.matrix.row(p) {
                let key = self.decode(c);
                let (par, col) = self.position[&key];
                debug_assert_eq!(par, parity);
                let w = (self.sizes[o] / self.sizes[key.0]).sqrt();
                trip.push((row, col, v * w));
            }
        }
        let n = self.members[parity].len();
        Csr::from_triplets(n, n, trip)
    }

    /// Full d×d density matrix from reduced coordinates of one parity block.
    pub fn expand(&self, parity: usize, x: &[C64]) -> Array2<C64> {
        let ns = self.spin_dim();
        let f = self.fock;
        let d = ns * f;
        let mut rho = Array2::zeros((d, d));
        for i in 0..ns {
            for j in 0..ns {
                let o = self.label_of[i * ns + j];
                let norm = self.sizes[o].sqrt();
                for n in 0..f {
                    for m in 0..f {
                        let (par, k) = self.position[&(o, n, m)];
                        if par == parity {
                            rho[[i * f + n, j * f + m]] = x[k] / norm;
                        }
                    }
                }
            }
        }
        rho
    }
}

/// Eigenpairs of a sparse matrix closest to a real shift.
#[derive(Clone, Debug)]
pub struct ShiftInvertResult {
    pub values: Vec<C64>,
    pub vectors: Array2<C64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn orthonormalize(q: &mut Array2<C64>) {
    let (n, m) = q.dim();
    for j in 0..m {
        for _ in 0..2 {
            for k in 0..j {
                let dot: C64 = (0..n).map(|i| q[[i, k]].conj() * q[[i, j]]).sum();
                for i in 0..n {
                    let v = q[[i, k]];
                    q[[i, j]] -= dot * v;
                }
            }
        }
        let nrm = (0..n).map(|i| q[[i, j]].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            q[[i, j]] /= nrm;
        }
    }
}

fn spmm(r: &Csr<C64>, q: &Array2<C64>) -> Array2<C64> {
    let (n, m) = q.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for (c, v) in r.row(i) {
            for j in 0..m {
                out[[i, j]] += v * q[[c, j]];
            }
        }
    }
    out
}

/// Subspace iteration with (R − σ)⁻¹ and Rayleigh–Ritz on R.
///
/// Returns the `k` Ritz pairs nearest σ, ordered by descending real part.
pub fn shift_invert(r: &Csr<C64>, sigma: f64, k: usize, tol: f64, max_iter: usize) -> Result<ShiftInvertResult> {
    let n = r.rows;
    let m = (k + 6).min(n);
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!("k = {k} for a block of size {n}")));
    }
    let mut dense = r.to_dense();
    for i in 0..n {
        dense[[i, i]] -= C64::new(sigma, 0.0);
    }
    let lu = dense.factorize_into().map_err(|e| Error::SpectrumFailure(format!("LU of (R - sigma): {e}")))?;
    let scale = (0..n).flat_map(|i| r.row(i).map(|(_, v)| v.norm())).fold(0.0, f64::max);
    let mut q = Array2::from_shape_fn((n, m), |(i, j)| {
        let x = ((i + 1) as f64 * 0.618_033_988_75 + (j + 1) as f64 * 0.414_213_562_37).fract();
        C64::new(x - 0.5, ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5)
    });
    orthonormalize(&mut q);
    for it in 1..=max_iter {
        let mut z = Array2::zeros((n, m));
        for j in 0..m {
            let col = lu.solve(&q.column(j).to_owned()).map_err(|e| Error::SpectrumFailure(e.to_string()))?;
            z.column_mut(j).assign(&col);
        }
        orthonormalize(&mut z);
        q = z;
        let rq = spmm(r, &q);
        let b = q.t().mapv(|v| v.conj()).dot(&rq);
        let (theta, y) = b.eig().map_err(|e| Error::SpectrumFailure(e.to_string()))?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &c| {
            let da = (theta[a] - sigma).norm();
            let dc = (theta[c] - sigma).norm();
            da.partial_cmp(&dc).unwrap()
        });
        order.truncate(k);
        let x = q.dot(&y.select(ndarray::Axis(1), &order));
        let rx = spmm(r, &x);
        let residuals: Vec<f64> = (0..k)
            .map(|j| {
                let lam = theta[order[j]];
                let xn = x.column(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                (0..n).map(|i| (rx[[i, j]] - lam * x[[i, j]]).norm_sqr()).sum::<f64>().sqrt() / xn
            })
            .collect();
        let vals: Vec<C64> = order.iter().map(|&i| theta[i]).collect();
        let done = residuals.iter().all(|&res| res <= tol * scale);
        if done || it == max_iter {
            if !done {
                let worst = residuals.iter().cloned().fold(0.0, f64::max);
                return Err(Error::NoConvergence { residual: worst / scale, tol });
            }
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &c| vals[c].re.partial_cmp(&vals[a].re).unwrap());
            let mut vectors = Array2::zeros((n, k));
            for (out, &j) in idx.iter().enumerate() {
                let xn = x.column(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                for i in 0..n {
                    vectors[[i, out]] = x[[i, j]] / xn;
                }
            }
            return Ok(ShiftInvertResult {
                values: idx.iter().map(|&j| vals[j]).collect(),
                vectors,
                residuals: idx.iter().map(|&j| residuals[j]).collect(),
                iterations: it,
            });
        }
    }
    unreachable!("the final iteration always returns")
}

/// Options of the oracle eigen-solver.
#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Real shift; must sit to the right of the slow cluster.
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { sigma: 0.01, tol: 1e-9, max_iter: 400 }
    }
}

/// Slow eigenvalues of 𝓛 in the symmetric sector, both parities merged,
/// sorted by descending real part.
pub fn slow_cluster(l: &VectorizedLiouvillian, k: usize, opts: &OracleOptions) -> Result<LiouvillianSpectrum> {
    let sector = SymmetricSector::new(l.ops.n_atoms, l.ops.fock());
    let mut all = Vec::new();
    for parity in 0..2 {
        if sector.block_dim(parity) == 0 {
            continue;
        }
        let r = sector.reduce(l, parity);
        let kk = k.min(r.rows);
        let res = shift_invert(&r, opts.sigma, kk, opts.tol, opts.max_iter)?;
        all.extend(res.values);
    }
    all.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    all.truncate(k);
    Ok(LiouvillianSpectrum { eigenvalues: all, right: None, left: None, source: SpectrumSource::Oracle })
}

/// Unique steady state: the even-parity symmetric eigenvector nearest zero,
/// unit trace, Hermitized.
pub fn steady_state(l: &VectorizedLiouvillian, opts: &OracleOptions) -> Result<(Array2<C64>, C64)> {
    let sector = SymmetricSector::new(l.ops.n_atoms, l.ops.fock());
    let r = sector.reduce(l, 0);
    let res = shift_invert(&r, opts.sigma, 2.min(r.rows), opts.tol, opts.max_iter)?;
    let j = (0..res.values.len())
        .min_by(|&a, &b| res.values[a].norm().partial_cmp(&res.values[b].norm()).unwrap())
        .unwrap();
    if res.values.len() > 1 {
        let other = res.values[1 - j];
        if other.norm() <= 1e-10 * opts.sigma.abs().max(1.0) {
            return Err(Error::DegenerateSteadyState(format!(
                "second eigenvalue {other} of the symmetric even block is also zero"
            )));
        }
    }
    let x: Vec<C64> = res.vectors.column(j).to_vec();
    let mut rho = sector.expand(0, &x);
    let tr: C64 = (0..l.d).map(|i| rho[[i, i]]).sum();
    rho.mapv_inplace(|v| v / tr);
    hermitize(&mut rho);
    Ok((rho, res.values[j]))
}

/// Spin density matrix Tr_ph ρ.
pub fn spin_reduced(rho: &Array2<C64>, ops: &FullSpaceOperators) -> Array2<C64> {
    let (ns, f) = (ops.spin_dim(), ops.fock());
    Array2::from_shape_fn((ns, ns), |(i, j)| (0..f).map(|n| rho[[i * f + n, j * f + n]]).sum())
}

/// p(S) = Tr(P_S ρ) with P_S the spectral projectors of S².
pub fn spin_resolved_population(rho: &Array2<C64>, ops: &FullSpaceOperators) -> Result<SpinDistribution> {
    let rs = spin_reduced(rho, ops);
    let s2 = ops.s2.to_dense();
    let (vals, vecs) = s2.eigh(UPLO::Upper).map_err(|e| Error::SpectrumFailure(e.to_string()))?;
    let subs = enumerate_subspaces(ops.n_atoms)?;
    let mut p = vec![0.0; subs.len()];
    for (k, &lam) in vals.iter().enumerate() {
        // S(S+1) = λ  ⇒  2S = √(1+4λ) − 1
        let two_s = ((1.0 + 4.0 * lam).sqrt() - 1.0).round() as u32;
        let idx = subs
            .iter()
            .position(|s| s.two_s == two_s)
            .ok_or_else(|| Error::SpectrumFailure(format!("S^2 eigenvalue {lam} matches no subspace")))?;
        let v: Array1<C64> = vecs.column(k).mapv(|x| C64::new(x, 0.0));
        let rv = rs.dot(&v);
        p[idx] += v.iter().zip(rv.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re;
    }
    SpinDistribution::from_weights(ops.n_atoms, p)
}

/// max over atom pairs of ‖P ρ P† − ρ‖_F on the full space.
pub fn permutation_defect(rho: &Array2<C64>, ops: &FullSpaceOperators) -> f64 {
    let n = ops.n_atoms as usize;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let perm = ops.spin(&ops.permutation(i, j));
            // P is a permutation matrix: column a holds a single 1 at row π(a)
            let pi: Vec<usize> = (0..perm.cols).map(|a| perm.transpose().row(a).next().unwrap().0).collect();
            let prp = Array2::from_shape_fn(rho.dim(), |(a, b)| rho[[pi[a], pi[b]]]);
            let diff = (&prp - rho).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(diff);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close_to_any(vals: &[C64], target: C64, tol: f64) -> bool {
        vals.iter().any(|v| (v - target).norm() < tol)
    }

    #[test]
    fn single_spin_dephasing_coherence() {
        let p = ModelParams::new(1.0, 0.5, 0.0, 1.0, 1).unwrap();
        let pert = PerturbationSpec::new(0.3, 1.0).unwrap();
        let l = build_liouvillian(&p, &pert, 2).unwrap();
        let vals = l.full_spectrum().unwrap();
        assert!(close_to_any(&vals, C64::new(-0.15, -1.0), 1e-10));
        assert!(close_to_any(&vals, C64::new(-0.15, 1.0), 1e-10));
    }

    #[test]
    fn empty_cavity_ladder() {
        let p = ModelParams::new(1.0, 0.5, 0.0, 1.0, 1).unwrap();
        let l = build_liouvillian(&p, &PerturbationSpec::NONE, 3).unwrap();
        let vals = l.full_spectrum().unwrap();
        for n in 0..=3 {
            assert!(close_to_any(&vals, C64::new(-(n as f64), 0.0), 1e-10), "missing -{n}");
        }
    }

    #[test]
    fn trace_preserving_and_permutation_symmetric() {
        let p = ModelParams::new(1.3, 0.4, 0.7, 0.9, 3).unwrap();
        let pert = PerturbationSpec::new(0.2, 0.4).unwrap();
        let l = build_liouvillian(&p, &pert, 3).unwrap();
        assert!(l.trace_defect() < 1e-12);
        let h = l.ops.hamiltonian(&p).to_dense();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let pm = l.ops.spin(&l.ops.permutation(i, j)).to_dense();
            let rot = pm.dot(&h).dot(&pm.t());
            assert!((&rot - &h).iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn local_operators_commute() {
        let ops = FullSpaceOperators::new(3, 1).unwrap();
        let a = ops.sigma_plus[0].to_dense();
        let b = ops.sigma_minus[2].to_dense();
        assert!((a.dot(&b) - b.dot(&a)).iter().all(|v| v.abs() < 1e-15));
        let z = ops.sigma_z[1].to_dense();
        assert!((z.dot(&z) - Array2::<f64>::eye(8)).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn reduced_spectrum_is_a_subset_of_full() {
        let p = ModelParams::new(1.0, 0.5, 0.8, 1.0, 2).unwrap();
        let pert = PerturbationSpec::new(0.05, 0.5).unwrap();
        let l = build_liouvillian(&p, &pert, 2).unwrap();
        let full = l.full_spectrum().unwrap();
        let sector = SymmetricSector::new(2, 3);
        assert_eq!(sector.orbit_count(), 10);
        for parity in 0..2 {
            let (vals, _) = sector.reduce(&l, parity).to_dense().eig().unwrap();
            for v in vals.iter() {
                assert!(close_to_any(&full, *v, 1e-9), "{v} not in the full spectrum");
            }
        }
    }

    #[test]
    fn population_of_simple_states() {
        let ops = FullSpaceOperators::new(2, 1).unwrap();
        let d = ops.dim();
        // singlet (|01⟩ − |10⟩)/√2 ⊗ |0⟩
        let mut psi = vec![C64::new(0.0, 0.0); d];
        psi[2] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[4] = C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        let p = spin_resolved_population(&rho, &ops).unwrap();
        assert!((p.p[0] - 1.0).abs() < 1e-14);
        let mut up = Array2::zeros((d, d));
        up[[3 * 2, 3 * 2]] = C64::new(1.0, 0.0);
        let p = spin_resolved_population(&up, &ops).unwrap();
        assert!((p.p[1] - 1.0).abs() < 1e-14);
    }
}
