use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eig, EigValsh, Inverse, Solve, UPLO};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::operators::{build_hamiltonian, OperatorSet, ProductBasis, DEFAULT_DIM_CAP};
use crate::error::{Error, Result};
use crate::linalg::{
    frob_dot, frob_norm, gmres, hermiticity_defect, hermitize, trace, Csr, KrylovVector, C64,
};
use crate::model::{ModelParams, SpinSubspace};
use crate::ode::{Dopri5, OdeSystem, StepOutcome};

/// Density matrix on the product basis of one S-subspace.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub basis: ProductBasis,
    pub rho: Array2<C64>,
}

impl DensityMatrix {
    /// |S,−S⟩⟨S,−S| ⊗ |0⟩⟨0|.
    pub fn lowest_weight(basis: ProductBasis) -> Self {
        let d = basis.dim();
        let mut rho = Array2::zeros((d, d));
        rho[[0, 0]] = C64::new(1.0, 0.0);
        DensityMatrix { basis, rho }
    }

    pub fn trace(&self) -> C64 {
        trace(&self.rho)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = self.rho.eigvalsh(UPLO::Lower)?;
        Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// Tr(O ρ) for a sparse operator.
    pub fn expect(&self, op: &Csr<C64>) -> C64 {
        let mut acc = C64::zero();
        for r in 0..op.rows {
            for (c, v) in op.row(r) {
                acc += v * self.rho[[c, r]];
            }
        }
        acc
    }

    pub fn expect_real(&self, op: &Csr<f64>) -> f64 {
        self.expect(&op.to_complex()).re
    }

    /// Photon density matrix Tr_spin ρ.
    pub fn photon_reduced(&self) -> Array2<C64> {
        let f = self.basis.fock();
        let mut out = Array2::zeros((f, f));
        for m in 0..self.basis.sub.dim() {
            let blk = self.rho.slice(s![m * f..(m + 1) * f, m * f..(m + 1) * f]);
            out += &blk;
        }
        out
    }

    /// Fock-state populations.
    pub fn photon_populations(&self) -> Vec<f64> {
        self.photon_reduced().diag().iter().map(|z| z.re).collect()
    }

    /// Copy into a basis with a different photon cutoff (truncating or padding).
    pub fn recut(&self, n_max: usize) -> DensityMatrix {
        let nb = ProductBasis { sub: self.basis.sub, n_max };
        let d = nb.dim();
        let mut rho = Array2::zeros((d, d));
        let keep = n_max.min(self.basis.n_max) + 1;
        let fo = self.basis.fock();
        let fn_ = nb.fock();
        let sd = self.basis.sub.dim();
        for m1 in 0..sd {
            for m2 in 0..sd {
                for n1 in 0..keep {
                    for n2 in 0..keep {
                        rho[[m1 * fn_ + n1, m2 * fn_ + n2]] = self.rho[[m1 * fo + n1, m2 * fo + n2]];
                    }
                }
            }
        }
        DensityMatrix { basis: nb, rho }
    }
}

/// Steady-state moments of one subspace; the only input the perturbation theory needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceMoments {
    pub two_s: u32,
    pub sz_mean: f64,
    pub sz2_mean: f64,
    pub photon_mean: f64,
    pub fock_cutoff_used: usize,
    pub converged: bool,
    pub residual: f64,
}

impl SubspaceMoments {
    pub fn spin(&self) -> f64 {
        0.5 * self.two_s as f64
    }

    /// ⟨S_z⟩² ≤ ⟨S_z²⟩ ≤ S², with slack `tol`.
    pub fn in_cone(&self, tol: f64) -> bool {
        let s = self.spin();
        self.sz_mean.abs() <= s + tol
            && self.sz_mean * self.sz_mean <= self.sz2_mean + tol
            && self.sz2_mean <= s * s + tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyMethod {
    /// Preconditioned GMRES on the trace-bordered generator.
    Krylov,
    /// Adaptive Runge–Kutta until the generator residual drops below tolerance.
    Integrate,
    /// Dense LU on the vectorized generator; small blocks only.
    Direct,
}

/// Adaptive photon cutoff: start, then grow until the two highest Fock
/// populations are below `tail_tol`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockPolicy {
    pub start: Option<usize>,
    pub tail_tol: f64,
    pub growth: f64,
    pub cap: usize,
}

impl Default for FockPolicy {
    fn default() -> Self {
        FockPolicy { start: None, tail_tol: 1e-8, growth: 1.5, cap: 400 }
    }
}

impl FockPolicy {
    /// Initial cutoff from the classical photon number bound
    /// n̄ ≤ 4g²S²/(N(ω_c²+κ²/4)), padded by several Poisson widths.
    pub fn initial(&self, params: &ModelParams, sub: SpinSubspace) -> usize {
        if let Some(n) = self.start {
            return n.max(1);
        }
        let s = sub.spin();
        let nbar = 4.0 * params.g * params.g * s * s
            / (params.n_atoms as f64 * (params.omega_c.powi(2) + 0.25 * params.kappa.powi(2)));
        8usize.max((nbar + 5.0 * nbar.sqrt() + 6.0).ceil() as usize)
    }

    fn next(&self, n: usize) -> usize {
        ((n as f64 * self.growth).ceil() as usize).max(n + 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    pub fock: FockPolicy,
    /// Bound on ‖dρ/dt‖_F per unit κ.
    pub tol_residual: f64,
    pub dim_cap: usize,
    pub max_iter: usize,
    /// Integration horizon for `Integrate`, in units of 1/κ.
    pub t_max: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            method: SteadyMethod::Krylov,
            fock: FockPolicy::default(),
            tol_residual: 1e-9,
            dim_cap: DEFAULT_DIM_CAP,
            max_iter: 600,
            t_max: 2e5,
        }
    }
}

/// Parity-block-diagonal matrix: index 0 even, 1 odd.
#[derive(Clone, Debug)]
pub(crate) struct Blocks(pub [Array2<C64>; 2]);

impl KrylovVector for Blocks {
    fn dot(&self, other: &Self) -> C64 {
        frob_dot(&self.0[0], &other.0[0]) + frob_dot(&self.0[1], &other.0[1])
    }
    fn axpy(&mut self, a: C64, x: &Self) {
        for p in 0..2 {
            self.0[p].scaled_add(a, &x.0[p]);
        }
    }
    fn scale(&mut self, a: C64) {
        for p in 0..2 {
            self.0[p].mapv_inplace(|v| v * a);
        }
    }
}

impl Blocks {
    fn trace(&self) -> C64 {
        trace(&self.0[0]) + trace(&self.0[1])
    }
}

struct Sector {
    idx: Vec<usize>,
    h: Csr<f64>,
    nphot: Vec<f64>,
    /// For each row: position in the other sector reached by a, and √(n+1).
    lift: Vec<Option<(usize, f64)>>,
}

/// Generator −i[H,·] + κ D[a] restricted to parity blocks.
pub(crate) struct BlockGenerator {
    basis: ProductBasis,
    sectors: [Sector; 2],
    kappa: f64,
}

impl BlockGenerator {
    pub(crate) fn new(params: &ModelParams, ops: &OperatorSet, h: &Csr<f64>) -> Self {
        let basis = ops.basis;
        let idx = basis.parity_sectors();
        let mut pos = vec![0usize; basis.dim()];
        for sec in &idx {
            for (k, &i) in sec.iter().enumerate() {
                pos[i] = k;
            }
        }
        let mk = |p: usize| {
            let ix = idx[p].clone();
            let nphot = ix.iter().map(|&i| basis.n(i) as f64).collect();
            let lift = ix
                .iter()
                .map(|&i| {
                    let (m, n) = basis.split(i);
                    (n < basis.n_max).then(|| (pos[basis.index(m, n + 1)], ((n + 1) as f64).sqrt()))
                })
                .collect();
            Sector { h: h.select(&ix, &ix), idx: ix, nphot, lift }
        };
        BlockGenerator { basis, sectors: [mk(0), mk(1)], kappa: params.kappa }
    }

    pub(crate) fn split(&self, rho: &Array2<C64>) -> Blocks {
        Blocks([0, 1].map(|p| {
            let ix = &self.sectors[p].idx;
            Array2::from_shape_fn((ix.len(), ix.len()), |(a, b)| rho[[ix[a], ix[b]]])
        }))
    }

    pub(crate) fn join(&self, b: &Blocks) -> Array2<C64> {
        let d = self.basis.dim();
        let mut rho = Array2::zeros((d, d));
        for p in 0..2 {
            let ix = &self.sectors[p].idx;
            for (a, &ia) in ix.iter().enumerate() {
                for (c, &ic) in ix.iter().enumerate() {
                    rho[[ia, ic]] = b.0[p][[a, c]];
                }
            }
        }
        rho
    }

    pub(crate) fn apply(&self, x: &Blocks) -> Blocks {
        Blocks([0, 1].map(|p| {
            let sec = &self.sectors[p];
            let src = &x.0[p];
            let other = &x.0[1 - p];
            let hx = sec.h.mul_dense(&src.view());
            let xh = sec.h.dense_mul(&src.view());
            let d = sec.idx.len();
            let mi = C64::new(0.0, -1.0);
            let k = self.kappa;
            let mut out = Array2::zeros((d, d));
            for r in 0..d {
                let nr = sec.nphot[r];
                for c in 0..d {
                    let mut v = mi * (hx[[r, c]] - xh[[r, c]]) - 0.5 * k * (nr + sec.nphot[c]) * src[[r, c]];
                    if let (Some((sr, ar)), Some((sc, ac))) = (sec.lift[r], sec.lift[c]) {
                        v += k * ar * ac * other[[sr, sc]];
                    }
                    out[[r, c]] = v;
                }
            }
            out
        }))
    }
}

/// Inverse of X ↦ K X + X K† with K = −iH − (κ/2)a†a, per parity block.
struct LyapunovPreconditioner {
    v: [Array2<C64>; 2],
    vinv: [Array2<C64>; 2],
    lam: [Array1<C64>; 2],
    floor: f64,
}

impl LyapunovPreconditioner {
    fn new(gen: &BlockGenerator) -> Result<Self> {
        let mut v: [Array2<C64>; 2] = [Array2::zeros((0, 0)), Array2::zeros((0, 0))];
        let mut vinv = v.clone();
        let mut lam = [Array1::zeros(0), Array1::zeros(0)];
        for p in 0..2 {
            let sec = &gen.sectors[p];
            let d = sec.idx.len();
            if d == 0 {
                continue;
            }
            let mut k = sec.h.to_complex().to_dense().mapv(|x| x * C64::new(0.0, -1.0));
            for i in 0..d {
                k[[i, i]] -= 0.5 * gen.kappa * sec.nphot[i];
            }
            let (l, vec) = k.eig()?;
            vinv[p] = vec.inv()?;
            v[p] = vec;
            lam[p] = l;
        }
        Ok(LyapunovPreconditioner { v, vinv, lam, floor: 1e-10 * gen.kappa })
    }

    fn apply(&self, c: &Blocks) -> Blocks {
        Blocks([0, 1].map(|p| {
            if self.lam[p].is_empty() {
                return c.0[p].clone();
            }
            let vi = &self.vinv[p];
            let mut y = vi.dot(&c.0[p]).dot(&vi.t().mapv(|z| z.conj()));
            let lam = &self.lam[p];
            for ((i, j), val) in y.indexed_iter_mut() {
                let mut den = lam[i] + lam[j].conj();
                if den.norm() < self.floor {
                    den = C64::new(-self.floor, 0.0);
                }
                *val /= den;
            }
            let v = &self.v[p];
            v.dot(&y).dot(&v.t().mapv(|z| z.conj()))
        }))
    }
}

/// ‖−i[H,ρ] + κ D[a]ρ‖_F / κ evaluated with full sparse operators.
pub fn generator_residual(params: &ModelParams, dm: &DensityMatrix) -> Result<f64> {
    let (ops, h) = build_hamiltonian(params, dm.basis.sub, dm.basis.n_max, usize::MAX)?;
    let rho = dm.rho.view();
    let comm = h.mul_dense(&rho) - h.dense_mul(&rho);
    let num = ops.number();
    let anti = num.mul_dense(&rho) + num.dense_mul(&rho);
    let ar = ops.a.mul_dense(&rho);
    let jump = ops.adag.dense_mul(&ar.view());
    let k = params.kappa;
    let l = comm.mapv(|z| z * C64::new(0.0, -1.0)) + jump.mapv(|z| z * k) - anti.mapv(|z| z * 0.5 * k);
    Ok(frob_norm(&l) / k)
}

/// Steady state at a fixed photon cutoff, optionally warm-started.
pub fn steady_state_at_cutoff(
    params: &ModelParams,
    sub: SpinSubspace,
    n_max: usize,
    opts: &SteadyOptions,
    warm: Option<&DensityMatrix>,
) -> Result<(DensityMatrix, f64)> {
    check_nondegenerate(params, sub)?;
    let (ops, h) = build_hamiltonian(params, sub, n_max, opts.dim_cap)?;
    let gen = BlockGenerator::new(params, &ops, &h);
    let start = match warm {
        Some(w) => w.recut(n_max),
        None => DensityMatrix::lowest_weight(ops.basis),
    };
    let x0 = gen.split(&start.rho);
    let blocks = match opts.method {
        SteadyMethod::Krylov => solve_krylov(&gen, x0, opts)?,
        SteadyMethod::Integrate => solve_integrate(&gen, x0, opts)?,
        SteadyMethod::Direct => solve_direct(&gen, x0, opts)?,
    };
    let mut b = blocks;
    let tr = b.trace();
    b.scale(C64::new(1.0, 0.0) / tr);
    for p in 0..2 {
        hermitize(&mut b.0[p]);
    }
    let res = gen.apply(&b).norm() / params.kappa;
    Ok((DensityMatrix { basis: ops.basis, rho: gen.join(&b) }, res))
}

fn check_nondegenerate(params: &ModelParams, sub: SpinSubspace) -> Result<()> {
    params.validate()?;
    if params.g == 0.0 && sub.dim() > 1 {
        return Err(Error::DegenerateSteadyState(
            "g = 0: the spin sector has no dynamics and every |S,M> is stationary".into(),
        ));
    }
    Ok(())
}

fn solve_krylov(gen: &BlockGenerator, x0: Blocks, opts: &SteadyOptions) -> Result<Blocks> {
    let prec = LyapunovPreconditioner::new(gen)?;
    let border = x0.clone();
    let op = |v: &Blocks| {
        let mut out = gen.apply(v);
        out.axpy(v.trace(), &border);
        out
    };
    let bytes = 16 * (x0.0[0].len() + x0.0[1].len());
    // Krylov basis capped near 1.2 GB
    let restart = (1_200_000_000 / bytes.max(1)).clamp(8, 60);
    let tol = 0.05 * opts.tol_residual * gen.kappa / border.norm();
    let (x, _) = gmres(op, |v: &Blocks| prec.apply(v), &border, x0, restart, opts.max_iter, tol);
    Ok(x)
}

struct FlatGenerator<'a> {
    gen: &'a BlockGenerator,
    dims: [usize; 2],
}

impl FlatGenerator<'_> {
    fn unpack(&self, y: &[f64]) -> Blocks {
        let mut off = 0;
        Blocks([0, 1].map(|p| {
            let d = self.dims[p];
            let m = Array2::from_shape_fn((d, d), |(r, c)| {
                let k = off + 2 * (r * d + c);
                C64::new(y[k], y[k + 1])
            });
            off += 2 * d * d;
            m
        }))
    }

    fn pack(&self, b: &Blocks, y: &mut [f64]) {
        let mut off = 0;
        for p in 0..2 {
            for v in b.0[p].iter() {
                y[off] = v.re;
                y[off + 1] = v.im;
                off += 2;
            }
        }
    }
}

impl OdeSystem for FlatGenerator<'_> {
    fn dim(&self) -> usize {
        2 * (self.dims[0].pow(2) + self.dims[1].pow(2))
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let b = self.unpack(y);
        self.pack(&self.gen.apply(&b), dy);
    }
    fn project(&self, y: &mut [f64]) {
        let mut b = self.unpack(y);
        for p in 0..2 {
            hermitize(&mut b.0[p]);
        }
        self.pack(&b, y);
    }
}

fn solve_integrate(gen: &BlockGenerator, x0: Blocks, opts: &SteadyOptions) -> Result<Blocks> {
    let flat = FlatGenerator { gen, dims: [x0.0[0].nrows(), x0.0[1].nrows()] };
    let mut y = vec![0.0; flat.dim()];
    flat.pack(&x0, &mut y);
    let mut ode = Dopri5::new(y.len(), 1e-10, 1e-13);
    let window = 10.0 / gen.kappa;
    let mut t = 0.0;
    let mut res = f64::INFINITY;
    while t < opts.t_max {
        let target = t + window;
        let out = ode.integrate(&flat, &mut t, &mut y, target);
        if out != StepOutcome::Reached {
            return Err(Error::NoConvergence { residual: res, tol: opts.tol_residual });
        }
        let b = flat.unpack(&y);
        res = gen.apply(&b).norm() / gen.kappa;
        if res <= opts.tol_residual {
            return Ok(b);
        }
    }
    Err(Error::NoConvergence { residual: res, tol: opts.tol_residual })
}

/// Vectorized dimension above which `Direct` refuses to run.
pub const DIRECT_CAP: usize = 4000;

fn solve_direct(gen: &BlockGenerator, x0: Blocks, _opts: &SteadyOptions) -> Result<Blocks> {
    let dims = [x0.0[0].nrows(), x0.0[1].nrows()];
    let n = dims[0].pow(2) + dims[1].pow(2);
    if n > DIRECT_CAP {
        return Err(Error::DimensionCap { dim: n, cap: DIRECT_CAP });
    }
    let to_vec = |b: &Blocks| -> Vec<C64> { b.0[0].iter().chain(b.0[1].iter()).copied().collect() };
    let from_vec = |v: &[C64]| -> Blocks {
        let e = Array2::from_shape_vec((dims[0], dims[0]), v[..dims[0].pow(2)].to_vec()).unwrap();
        let o = Array2::from_shape_vec((dims[1], dims[1]), v[dims[0].pow(2)..].to_vec()).unwrap();
        Blocks([e, o])
    };
    let border = to_vec(&x0);
    let mut l = Array2::<C64>::zeros((n, n));
    let mut unit = vec![C64::zero(); n];
    for j in 0..n {
        unit[j] = C64::new(1.0, 0.0);
        let col = to_vec(&gen.apply(&from_vec(&unit)));
        unit[j] = C64::zero();
        let tr = from_vec(&{
            let mut u = vec![C64::zero(); n];
            u[j] = C64::new(1.0, 0.0);
            u
        })
        .trace();
        for i in 0..n {
            l[[i, j]] = col[i] + border[i] * tr;
        }
    }
    let sol = l.solve_into(Array1::from(border))?;
    Ok(from_vec(sol.as_slice().unwrap()))
}

/// Steady state of one subspace with the adaptive Fock cutoff.
pub fn steady_state(
    params: &ModelParams,
    sub: SpinSubspace,
    opts: &SteadyOptions,
) -> Result<(DensityMatrix, SubspaceMoments)> {
    check_nondegenerate(params, sub)?;
    let mut n_max = opts.fock.initial(params, sub);
    let mut warm: Option<DensityMatrix> = None;
    loop {
        if n_max > opts.fock.cap {
            return Err(Error::CutoffExceeded { cutoff: n_max, cap: opts.fock.cap });
        }
        let (dm, res) = steady_state_at_cutoff(params, sub, n_max, opts, warm.as_ref())?;
        let pops = dm.photon_populations();
        let tail = pops[n_max].abs().max(pops[n_max - 1].abs());
        if tail <= opts.fock.tail_tol {
            if res > opts.tol_residual {
                return Err(Error::NoConvergence { residual: res, tol: opts.tol_residual });
            }
            let m = moments_of(&dm, res);
            return Ok((dm, m));
        }
        warm = Some(dm);
        n_max = opts.fock.next(n_max);
    }
}

/// Moments of a subspace density matrix.
pub fn moments_of(dm: &DensityMatrix, residual: f64) -> SubspaceMoments {
    let b = dm.basis;
    let (mut sz, mut sz2, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..b.dim() {
        let w = dm.rho[[i, i]].re;
        let m = b.m(i);
        sz += m * w;
        sz2 += m * m * w;
        nb += b.n(i) as f64 * w;
    }
    SubspaceMoments {
        two_s: b.sub.two_s,
        sz_mean: sz,
        sz2_mean: sz2,
        photon_mean: nb,
        fock_cutoff_used: b.n_max,
        converged: residual.is_finite(),
        residual,
    }
}

/// ρ(t) sampled at increasing `times`, from |S,−S⟩⊗|0⟩.
pub fn evolve(
    params: &ModelParams,
    sub: SpinSubspace,
    n_max: usize,
    times: &[f64],
    rtol: f64,
) -> Result<Vec<DensityMatrix>> {
    params.validate()?;
    let (ops, h) = build_hamiltonian(params, sub, n_max, DEFAULT_DIM_CAP)?;
    let gen = BlockGenerator::new(params, &ops, &h);
    let x0 = gen.split(&DensityMatrix::lowest_weight(ops.basis).rho);
    let flat = FlatGenerator { gen: &gen, dims: [x0.0[0].nrows(), x0.0[1].nrows()] };
    let mut y = vec![0.0; flat.dim()];
    flat.pack(&x0, &mut y);
    let mut ode = Dopri5::new(y.len(), rtol, rtol * 1e-3);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &te in times {
        ode.integrate(&flat, &mut t, &mut y, te);
        out.push(DensityMatrix { basis: ops.basis, rho: gen.join(&flat.unpack(&y)) });
    }
    Ok(out)
}
