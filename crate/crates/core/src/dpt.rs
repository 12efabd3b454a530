//! First-order degenerate perturbation theory over the manifold of fixed-S
//! steady states.
//!
//! Local dephasing and local decay move probability only between adjacent
//! total spins, so the generator on p(S) is tridiagonal. Row S, column S′
//! holds the rate S′ → S, and every column sums to zero.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::Eig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argsort_desc_re, tridiag_eigh_top, C64};
use crate::model::{enumerate_subspaces, PerturbationSpec, SpinSubspace};
use crate::subspace::{SubspaceMoments, WignerGrid};

/// Tridiagonal matrix; `upper[i]` = A[i][i+1], `lower[i]` = A[i+1][i].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let m = n.saturating_sub(1);
        Tridiagonal { diag: vec![0.0; n], upper: vec![0.0; m], lower: vec![0.0; m] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        Array2::from_shape_fn((n, n), |(i, j)| self.get(i, j))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s += self.upper[j - 1];
                }
                if j + 1 < n {
                    s += self.lower[j];
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.diag.iter().chain(&self.upper).chain(&self.lower).fold(0.0, |m, v| m.max(v.abs()))
    }

    fn combine(a: &Tridiagonal, wa: f64, b: &Tridiagonal, wb: f64) -> Tridiagonal {
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect();
        Tridiagonal { diag: lin(&a.diag, &b.diag), upper: lin(&a.upper, &b.upper), lower: lin(&a.lower, &b.lower) }
    }

    /// Replace each diagonal entry by minus the off-diagonal column sum.
    pub fn enforce_conservation(&mut self) {
        let n = self.len();
        for j in 0..n {
            let mut s = 0.0;
            if j > 0 {
                s += self.upper[j - 1];
            }
            if j + 1 < n {
                s += self.lower[j];
            }
            self.diag[j] = -s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Generator C = Γ(f Ô_φ + (1−f) Ô_↓) on p(S).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub n_atoms: u32,
    pub subspaces: Vec<SpinSubspace>,
    pub c: Tridiagonal,
    pub gamma: f64,
    pub f: f64,
}

/// Weights p(S) over the subspace order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinDistribution {
    pub n_atoms: u32,
    pub subspaces: Vec<SpinSubspace>,
    pub p: Vec<f64>,
    /// Largest negative entry removed by clamping, relative to the total weight.
    pub max_clamp: f64,
}

impl SpinDistribution {
    /// Clamp negatives, normalize to unit sum.
    pub fn from_weights(n_atoms: u32, weights: Vec<f64>) -> Result<Self> {
        let subspaces = enumerate_subspaces(n_atoms)?;
        if weights.len() != subspaces.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} subspaces",
                weights.len(),
                subspaces.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NonUniqueNull);
        }
        let mut max_clamp: f64 = 0.0;
        let mut p: Vec<f64> = weights
            .iter()
            .map(|&w| {
                if w < 0.0 {
                    max_clamp = max_clamp.max(-w / total);
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(SpinDistribution { n_atoms, subspaces, p, max_clamp })
    }

    pub fn s_tilde(&self) -> Vec<f64> {
        self.subspaces.iter().map(|s| s.s_tilde()).collect()
    }

    /// N_S · p(S), the normalization used for comparing different N.
    pub fn scaled(&self) -> Vec<f64> {
        let ns = self.p.len() as f64;
        self.p.iter().map(|v| v * ns).collect()
    }

    /// Index of the largest weight.
    pub fn peak(&self) -> usize {
        self.p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }

    /// Σ p(S) S̃.
    pub fn mean_normalized_spin(&self) -> f64 {
        mean_normalized_spin(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Dpt,
    Oracle,
}

impl SpectrumSource {
    pub fn tag(&self) -> &'static str {
        match self {
            SpectrumSource::Dpt => "dpt",
            SpectrumSource::Oracle => "oracle",
        }
    }
}

/// Slow eigenvalues, sorted by descending real part, with optional eigenvectors
/// stored as unit-norm columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvillianSpectrum {
    pub eigenvalues: Vec<C64>,
    pub right: Option<Array2<C64>>,
    pub left: Option<Array2<C64>>,
    pub source: SpectrumSource,
}

impl LiouvillianSpectrum {
    /// Largest |Im λ| among the retained eigenvalues.
    pub fn max_imag(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// Real parts of right eigenvector `n`, sign fixed so its largest entry is positive.
    pub fn right_real(&self, n: usize) -> Option<Vec<f64>> {
        let r = self.right.as_ref()?;
        let col = r.column(n);
        let big = col.iter().fold(C64::new(0.0, 0.0), |b, z| if z.norm() > b.norm() { *z } else { b });
        let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { C64::new(1.0, 0.0) };
        Some(col.iter().map(|z| (z * phase).re).collect())
    }
}

/// Number of sign changes, skipping entries below `rel_tol` times the largest magnitude.
pub fn sign_changes(v: &[f64], rel_tol: f64) -> usize {
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0.0f64;
    let mut count = 0;
    for &x in v {
        if x.abs() <= rel_tol * big {
            continue;
        }
        if last != 0.0 && x.signum() != last.signum() {
            count += 1;
        }
        last = x;
    }
    count
}

fn moments_by_spin(moments: &[SubspaceMoments], n_atoms: u32) -> Result<Vec<SubspaceMoments>> {
    let subs = enumerate_subspaces(n_atoms)?;
    let map: HashMap<u32, &SubspaceMoments> = moments.iter().map(|m| (m.two_s, m)).collect();
    subs.iter()
        .map(|s| {
            let m = map.get(&s.two_s).ok_or(Error::MissingSubspace { two_s: s.two_s })?;
            let scale = 1e-9 * s.spin().powi(2).max(1.0);
            if !m.in_cone(scale) {
                return Err(Error::MomentCone { two_s: s.two_s });
            }
            let mut m = (*m).clone();
            // S_z² = 1/4 as an operator at S = 1/2; the cone alone would let
            // probability leak out of the bottom column
            if s.two_s == 1 {
                m.sz2_mean = 0.25;
            }
            Ok(m)
        })
        .collect()
}

/// Dephasing generator Ô_φ from ⟨S_z²⟩_S of every subspace.
pub fn coupling_dephasing(moments: &[SubspaceMoments], n_atoms: u32) -> Result<Tridiagonal> {
    let ms = moments_by_spin(moments, n_atoms)?;
    let n = ms.len();
    let h = 0.5 * n_atoms as f64;
    let mut o = Tridiagonal::zeros(n);
    for i in 0..n {
        let s = ms[i].spin();
        let q = ms[i].sz2_mean;
        // (N/2+1)⟨S_z²⟩/(2S(S+1)) is 0/0 at S = 0, where ⟨S_z²⟩ vanishes identically
        o.diag[i] = if s == 0.0 { 0.0 } else { (h + 1.0) * q / (2.0 * s * (s + 1.0)) } - 0.5 * h;
        if i + 1 < n {
            let qn = ms[i + 1].sz2_mean;
            o.upper[i] = (h + s + 2.0) / (2.0 * (s + 1.0) * (2.0 * s + 3.0)) * ((s + 1.0).powi(2) - qn);
            // row S+1, column S
            let sp = s + 1.0;
            o.lower[i] = (h - sp + 1.0) / (2.0 * sp * (2.0 * sp - 1.0)) * (sp * sp - q);
        }
    }
    Ok(o)
}

/// Decay generator Ô_↓ from ⟨S_z⟩_S and ⟨S_z²⟩_S of every subspace.
pub fn coupling_decay(moments: &[SubspaceMoments], n_atoms: u32) -> Result<Tridiagonal> {
    let ms = moments_by_spin(moments, n_atoms)?;
    let n = ms.len();
    let h = 0.5 * n_atoms as f64;
    let mut o = Tridiagonal::zeros(n);
    for i in 0..n {
        let s = ms[i].spin();
        let (z, q) = (ms[i].sz_mean, ms[i].sz2_mean);
        let c = s * (s + 1.0);
        let bracket = if s == 0.0 { 0.0 } else { (h + 1.0) / (2.0 * c) * (c - q + z) };
        o.diag[i] = bracket - z - h;
        if i + 1 < n {
            let (zn, qn) = (ms[i + 1].sz_mean, ms[i + 1].sz2_mean);
            o.upper[i] = (h + s + 2.0) / (2.0 * (s + 1.0) * (2.0 * s + 3.0))
                * (c + qn + (2.0 * s + 1.0) * zn);
            let sp = s + 1.0;
            o.lower[i] = (h - sp + 1.0) / (2.0 * sp * (2.0 * sp - 1.0))
                * (sp * (sp + 1.0) + q - (2.0 * sp + 1.0) * z);
        }
    }
    Ok(o)
}

/// C = Γ(f Ô_φ + (1−f) Ô_↓).
pub fn mix(
    o_phi: &Tridiagonal,
    o_down: &Tridiagonal,
    pert: &PerturbationSpec,
    n_atoms: u32,
) -> Result<CouplingMatrix> {
    let subspaces = enumerate_subspaces(n_atoms)?;
    if o_phi.len() != o_down.len() || o_phi.len() != subspaces.len() {
        return Err(Error::DimensionMismatch(format!(
            "O_phi {} vs O_down {} vs N_S {}",
            o_phi.len(),
            o_down.len(),
            subspaces.len()
        )));
    }
    let c = Tridiagonal::combine(o_phi, pert.gamma * pert.f, o_down, pert.gamma * (1.0 - pert.f));
    Ok(CouplingMatrix { n_atoms, subspaces, c, gamma: pert.gamma, f: pert.f })
}

/// Assemble C directly from moments.
pub fn coupling_matrix(
    moments: &[SubspaceMoments],
    n_atoms: u32,
    pert: &PerturbationSpec,
    enforce_conservation: bool,
) -> Result<CouplingMatrix> {
    let mut o_phi = coupling_dephasing(moments, n_atoms)?;
    let mut o_down = coupling_decay(moments, n_atoms)?;
    if enforce_conservation {
        o_phi.enforce_conservation();
        o_down.enforce_conservation();
    }
    mix(&o_phi, &o_down, pert, n_atoms)
}

/// Right null vector of C, normalized to a probability distribution.
///
/// Rows 0..n−2 of C p = 0 are solved directly through the probability flux
/// J_i = C[i+1][i] p_i − C[i][i+1] p_{i+1}, which obeys J_i = J_{i−1} + s_i p_i
/// with s_i the (ideally zero) column sum; the last row is replaced by Σp = 1.
pub fn null_distribution(c: &CouplingMatrix) -> Result<SpinDistribution> {
    let t = &c.c;
    let n = t.len();
    if n == 1 {
        return SpinDistribution::from_weights(c.n_atoms, vec![1.0]);
    }
    let scale = t.max_abs();
    if scale == 0.0 {
        return Err(Error::NonUniqueNull);
    }
    let eps = 1e-14 * scale;
    let defect = t.column_sums();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    let mut flux = 0.0;
    for i in 0..n - 1 {
        flux += defect[i] * p[i];
        let down = t.upper[i];
        let up = t.lower[i];
        if down.abs() <= eps {
            if up.abs() <= eps {
                return Err(Error::NonUniqueNull);
            }
            // nothing returns from i+1: everything at or below i is transient
            p[..=i].iter_mut().for_each(|v| *v = 0.0);
            p[i + 1] = 1.0;
            flux = 0.0;
            continue;
        }
        p[i + 1] = (up * p[i] - flux) / down;
        if p[i + 1].abs() > 1e100 {
            p[..=i + 1].iter_mut().for_each(|v| *v *= 1e-100);
            flux *= 1e-100;
        }
    }
    SpinDistribution::from_weights(c.n_atoms, p)
}

/// Σ p(S) S̃.
pub fn mean_normalized_spin(p: &SpinDistribution) -> f64 {
    p.p.iter().zip(&p.subspaces).map(|(w, s)| w * s.s_tilde()).sum()
}

/// Dense nonsymmetric fallback limit.
pub const DENSE_SPECTRUM_CAP: usize = 4000;

/// The `k` eigenvalues of C with the largest real parts and their eigenvectors.
///
/// When every product C[i][i+1]·C[i+1][i] is positive, C = D T D⁻¹ with T
/// symmetric tridiagonal, so the spectrum is real and computed by a
/// tridiagonal solver; otherwise a dense nonsymmetric solver is used.
pub fn slow_spectrum(c: &CouplingMatrix, k: usize) -> Result<LiouvillianSpectrum> {
    let t = &c.c;
    let n = t.len();
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!("k = {k} with N_S = {n}")));
    }
    let symmetrizable = t.upper.iter().zip(&t.lower).all(|(u, l)| u * l > 0.0);
    if symmetrizable {
        let off: Vec<f64> = t.upper.iter().zip(&t.lower).map(|(u, l)| (u * l).sqrt()).collect();
        let (vals, vecs) = tridiag_eigh_top(&t.diag, &off, k)
            .map_err(|e| Error::SpectrumFailure(format!("tridiagonal solver: {e}")))?;
        // ln d_{i+1} − ln d_i = ½ ln(C[i+1][i] / C[i][i+1])
        let mut lnd = vec![0.0; n];
        for i in 0..n - 1 {
            lnd[i + 1] = lnd[i] + 0.5 * (t.lower[i].abs().ln() - t.upper[i].abs().ln());
        }
        let right = scaled_columns(&vecs, &lnd, 1.0);
        let left = scaled_columns(&vecs, &lnd, -1.0);
        return Ok(LiouvillianSpectrum {
            eigenvalues: vals.into_iter().map(|v| C64::new(v, 0.0)).collect(),
            right: Some(right),
            left: Some(left),
            source: SpectrumSource::Dpt,
        });
    }
    if n > DENSE_SPECTRUM_CAP {
        return Err(Error::SpectrumFailure(format!(
            "C is not symmetrizable and N_S = {n} exceeds the dense limit {DENSE_SPECTRUM_CAP}"
        )));
    }
    let dense = t.to_dense();
    let (vals, vecs) = dense
        .eig()
        .map_err(|e| Error::SpectrumFailure(format!("dense eig failed: {e}; max|C| = {:e}", t.max_abs())))?;
    let order = argsort_desc_re(&vals);
    let mut right = Array2::zeros((n, k));
    let mut ev = Vec::with_capacity(k);
    for (out, &j) in order.iter().take(k).enumerate() {
        ev.push(vals[j]);
        let col = vecs.column(j);
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            right[[i, out]] = col[i] / nrm;
        }
    }
    Ok(LiouvillianSpectrum { eigenvalues: ev, right: Some(right), left: None, source: SpectrumSource::Dpt })
}

fn scaled_columns(u: &Array2<f64>, lnd: &[f64], sign: f64) -> Array2<C64> {
    let (n, k) = u.dim();
    let shift = lnd.iter().map(|v| sign * v).fold(f64::NEG_INFINITY, f64::max);
    let w: Array1<f64> = lnd.iter().map(|v| (sign * v - shift).exp()).collect();
    let mut out = Array2::zeros((n, k));
    for j in 0..k {
        let col: Vec<f64> = (0..n).map(|i| w[i] * u[[i, j]]).collect();
        let nrm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            out[[i, j]] = C64::new(col[i] / nrm, 0.0);
        }
    }
    out
}

/// W = Σ_S p(S) W_S on a shared grid.
pub fn mixture_wigner(p: &SpinDistribution, per_s: &[WignerGrid]) -> Result<WignerGrid> {
    if per_s.len() != p.p.len() {
        return Err(Error::DimensionMismatch(format!("{} grids for {} weights", per_s.len(), p.p.len())));
    }
    let first = per_s.first().ok_or(Error::GridMismatch)?;
    if per_s.iter().any(|g| !g.same_axes(first)) {
        return Err(Error::GridMismatch);
    }
    let mut w = first.w.mapv(|_| 0.0);
    for (g, &pw) in per_s.iter().zip(&p.p) {
        w.scaled_add(pw, &g.w);
    }
    Ok(WignerGrid { spec: first.spec, w })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mom(two_s: u32, z: f64, q: f64) -> SubspaceMoments {
        SubspaceMoments {
            two_s,
            sz_mean: z,
            sz2_mean: q,
            photon_mean: 0.0,
            fock_cutoff_used: 0,
            converged: true,
            residual: 0.0,
        }
    }

    #[test]
    fn two_atom_dephasing_entries() {
        let ms = [mom(0, 0.0, 0.0), mom(2, -1.0, 1.0)];
        let o = coupling_dephasing(&ms, 2).unwrap();
        assert_eq!(o.get(1, 1), 0.0);
        assert_eq!(o.get(0, 1), 0.0);
        assert_eq!(o.get(1, 0), 0.5);
        assert_eq!(o.get(0, 0), -0.5);
    }

    #[test]
    fn two_atom_decay_entries() {
        let ms = [mom(0, 0.0, 0.0), mom(2, -1.0, 1.0)];
        let o = coupling_decay(&ms, 2).unwrap();
        assert_eq!(o.get(1, 0), 1.0);
        assert_eq!(o.get(0, 0), -1.0);
        // decay out of the lowest-weight triplet cannot reach the singlet
        assert_eq!(o.get(0, 1), 0.0);
        assert!(o.column_sums().iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn detailed_balance_pair() {
        let (a, b) = (0.3, 1.7);
        let t = Tridiagonal { diag: vec![-a, -b], upper: vec![b], lower: vec![a] };
        let c = CouplingMatrix { n_atoms: 2, subspaces: enumerate_subspaces(2).unwrap(), c: t, gamma: 1.0, f: 0.5 };
        let p = null_distribution(&c).unwrap();
        assert!((p.p[0] - b / (a + b)).abs() < 1e-15);
        assert!((p.p[1] - a / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_is_not_unique() {
        let ms = [mom(0, 0.0, 0.0), mom(2, -0.5, 0.6)];
        let c = coupling_matrix(&ms, 2, &PerturbationSpec::NONE, false).unwrap();
        assert!(matches!(null_distribution(&c), Err(Error::NonUniqueNull)));
    }

    #[test]
    fn missing_and_cone_errors() {
        let ms = [mom(2, -1.0, 1.0)];
        assert!(matches!(coupling_dephasing(&ms, 2), Err(Error::MissingSubspace { two_s: 0 })));
        let bad = [mom(0, 0.0, 0.0), mom(2, -1.0, 0.5)];
        assert!(matches!(coupling_decay(&bad, 2), Err(Error::MomentCone { two_s: 2 })));
    }

    #[test]
    fn sign_change_counter() {
        assert_eq!(sign_changes(&[1.0, 2.0, -1.0, -3.0, 0.0, 2.0], 1e-9), 2);
        assert_eq!(sign_changes(&[1e-20, -1.0, -2.0], 1e-9), 0);
    }
}
