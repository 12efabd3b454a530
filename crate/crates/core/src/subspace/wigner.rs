use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::solver::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Rectangular phase-space grid in quadratures x, p with α = (x + ip)/√2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl WignerSpec {
    pub fn square(half_width: f64, points: usize) -> Self {
        WignerSpec { x_min: -half_width, x_max: half_width, nx: points, p_min: -half_width, p_max: half_width, np: points }
    }

    /// Extent covering a photon state supported on Fock levels up to `n_max`.
    pub fn for_cutoff(n_max: usize) -> Self {
        Self::square((2.0 * n_max as f64 + 1.0).sqrt() + 3.0, 121)
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn ps(&self) -> Vec<f64> {
        linspace(self.p_min, self.p_max, self.np)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// W(x, p) sampled on a grid; `w[[i, j]]` is at (xs[i], ps[j]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub spec: WignerSpec,
    pub w: Array2<f64>,
}

impl WignerGrid {
    /// ∫∫ W dx dp by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        let xs = self.spec.xs();
        let ps = self.spec.ps();
        let wx = trapezoid_weights(&xs);
        let wp = trapezoid_weights(&ps);
        let mut s = 0.0;
        for (i, a) in wx.iter().enumerate() {
            for (j, b) in wp.iter().enumerate() {
                s += a * b * self.w[[i, j]];
            }
        }
        s
    }

    pub fn max(&self) -> f64 {
        self.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.w.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Strict local maxima (8-neighbourhood) above `frac` of the global maximum.
    pub fn local_maxima(&self, frac: f64) -> Vec<(f64, f64)> {
        let thr = frac * self.max();
        let (nx, np) = self.w.dim();
        let xs = self.spec.xs();
        let ps = self.spec.ps();
        let mut out = Vec::new();
        for i in 0..nx {
            for j in 0..np {
                let v = self.w[[i, j]];
                if v <= thr {
                    continue;
                }
                let mut peak = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= nx as i64 || b >= np as i64 {
                            continue;
                        }
                        if self.w[[a as usize, b as usize]] >= v {
                            peak = false;
                        }
                    }
                }
                if peak {
                    out.push((xs[i], ps[j]));
                }
            }
        }
        out
    }

    /// Connected components (4-neighbourhood) of {W > frac · max W}.
    pub fn lobe_count(&self, frac: f64) -> usize {
        let thr = frac * self.max();
        let (nx, np) = self.w.dim();
        let mut seen = Array2::from_elem((nx, np), false);
        let mut count = 0;
        for i in 0..nx {
            for j in 0..np {
                if seen[[i, j]] || self.w[[i, j]] <= thr {
                    continue;
                }
                count += 1;
                let mut stack = vec![(i, j)];
                seen[[i, j]] = true;
                while let Some((a, b)) = stack.pop() {
                    let nb = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
                    for (c, d) in nb {
                        if c < nx && d < np && !seen[[c, d]] && self.w[[c, d]] > thr {
                            seen[[c, d]] = true;
                            stack.push((c, d));
                        }
                    }
                }
            }
        }
        count
    }

    pub fn same_axes(&self, other: &WignerGrid) -> bool {
        self.spec == other.spec
    }
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = xs[k + 1] - xs[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// W(x,p) = (1/π) Tr[ρ D(α) Π D(α)†] of a photon density matrix.
///
/// ⟨n+k|DΠD†|n⟩ = (−1)^n e^{ikθ} y^{k/2} e^{−y/2} ℓ_n^{(k)}(y) / √k!, with
/// y = 4|α|² and ℓ the Laguerre polynomial scaled by √(n! k!/(n+k)!).
pub fn wigner_of_photon(rho_ph: &Array2<C64>, spec: &WignerSpec) -> WignerGrid {
    let f = rho_ph.nrows();
    let xs = spec.xs();
    let ps = spec.ps();
    let lnfact: Vec<f64> = (0..f).map(ln_factorial).collect();
    let mut w = Array2::zeros((spec.nx, spec.np));
    let mut ell = vec![0.0; f];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let a = C64::new(x, p) / std::f64::consts::SQRT_2;
            let y = 4.0 * a.norm_sqr();
            let theta = a.arg();
            let mut acc = 0.0;
            for k in 0..f {
                let pref = if k == 0 {
                    (-0.5 * y).exp()
                } else if y == 0.0 {
                    0.0
                } else {
                    (0.5 * k as f64 * y.ln() - 0.5 * y - 0.5 * lnfact[k]).exp()
                };
                if pref == 0.0 {
                    continue;
                }
                let len = f - k;
                ell[0] = 1.0;
                if len > 1 {
                    ell[1] = (1.0 + k as f64 - y) / ((1 + k) as f64).sqrt();
                }
                for n in 1..len.saturating_sub(1) {
                    let nf = n as f64;
                    let kf = k as f64;
                    ell[n + 1] = ((2.0 * nf + 1.0 + kf - y) * ell[n]
                        - (nf * (nf + kf)).sqrt() * ell[n - 1])
                        / ((nf + 1.0) * (nf + 1.0 + kf)).sqrt();
                }
                let phase = C64::from_polar(1.0, k as f64 * theta);
                let mut s = C64::new(0.0, 0.0);
                for n in 0..len {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    // ρ_{n, n+k} X_{n+k, n}
                    s += rho_ph[[n, n + k]] * sign * ell[n];
                }
                let term = (s * phase).re * pref;
                acc += if k == 0 { term } else { 2.0 * term };
            }
            w[[i, j]] = acc / std::f64::consts::PI;
        }
    }
    WignerGrid { spec: *spec, w }
}

/// Photon Wigner function of a subspace state; errors if the grid misses
/// more than 1% of the normalization.
pub fn wigner_photon(dm: &DensityMatrix, spec: Option<WignerSpec>) -> Result<WignerGrid> {
    let spec = spec.unwrap_or_else(|| WignerSpec::for_cutoff(dm.basis.n_max));
    let grid = wigner_of_photon(&dm.photon_reduced(), &spec);
    let integral = grid.integral();
    if (integral - 1.0).abs() > 0.01 {
        return Err(Error::GridTruncation { integral });
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coherent(alpha: C64, f: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); f];
        let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for (n, slot) in v.iter_mut().enumerate() {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            *slot = c;
        }
        v
    }

    fn proj(v: &[C64]) -> Array2<C64> {
        Array2::from_shape_fn((v.len(), v.len()), |(i, j)| v[i] * v[j].conj())
    }

    #[test]
    fn vacuum_peak() {
        let mut rho = Array2::zeros((6, 6));
        rho[[0, 0]] = C64::new(1.0, 0.0);
        let g = wigner_of_photon(&rho, &WignerSpec::square(5.0, 101));
        assert!((g.w[[50, 50]] - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        assert!((g.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coherent_state_is_displaced_gaussian() {
        let alpha = C64::new(1.2, -0.7);
        let rho = proj(&coherent(alpha, 30));
        let spec = WignerSpec::square(5.0, 11);
        let g = wigner_of_photon(&rho, &spec);
        let (x0, p0) = (alpha.re * 2f64.sqrt(), alpha.im * 2f64.sqrt());
        for (i, x) in spec.xs().iter().enumerate() {
            for (j, p) in spec.ps().iter().enumerate() {
                let exact = (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / std::f64::consts::PI;
                assert!((g.w[[i, j]] - exact).abs() < 1e-9, "{x} {p}");
            }
        }
    }

    #[test]
    fn fock_one_is_negative_at_origin() {
        let mut rho = Array2::zeros((4, 4));
        rho[[1, 1]] = C64::new(1.0, 0.0);
        let g = wigner_of_photon(&rho, &WignerSpec::square(4.0, 41));
        assert!((g.w[[20, 20]] + 1.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn cat_mixture_has_two_lobes() {
        let a = C64::new(2.5, 0.0);
        let rho = (proj(&coherent(a, 40)) + proj(&coherent(-a, 40))).mapv(|z| z * 0.5);
        let g = wigner_of_photon(&rho, &WignerSpec::square(7.0, 71));
        assert_eq!(g.local_maxima(0.1).len(), 2);
        assert_eq!(g.lobe_count(0.1), 2);
    }
}
