use serde::{Deserialize, Serialize};

use crate::dpt::SpinDistribution;
use crate::error::{Error, Result};

/// p_G(x) = A/(σ√(2π)) exp(−(x−x̄)²/(2σ²)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub rms: f64,
    pub iterations: usize,
}

impl GaussianFit {
    pub fn eval(&self, x: f64) -> f64 {
        gauss(self.amplitude, self.center, self.width, x)
    }
}

fn gauss(a: f64, mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    a / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * z * z).exp()
}

/// Mean and standard deviation of the weights `ys` over `xs`.
pub fn weighted_moments(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let total: f64 = ys.iter().sum();
    let mean = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / total;
    let var = xs.iter().zip(ys).map(|(x, y)| y * (x - mean).powi(2)).sum::<f64>() / total;
    (mean, var.max(0.0).sqrt())
}

/// Moment-based width of p over S̃.
pub fn moment_width(p: &SpinDistribution) -> f64 {
    weighted_moments(&p.s_tilde(), &p.p).1
}

/// One rising run followed by one falling run, ignoring steps below
/// `rel_tol` of the maximum.
pub fn is_unimodal(ys: &[f64], rel_tol: f64) -> bool {
    let top = ys.iter().cloned().fold(0.0, f64::max);
    let mut signs = ys
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > rel_tol * top)
        .map(|d| d > 0.0)
        .collect::<Vec<_>>();
    signs.dedup();
    signs == [true, false]
}

/// Damped least squares fit of a Gaussian to (xs, ys).
pub fn fit_gaussian_points(xs: &[f64], ys: &[f64]) -> Result<GaussianFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::TooFewPoints(xs.len()));
    }
    if !is_unimodal(ys, 1e-9) {
        return Err(Error::Multimodal);
    }
    let spacing = xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let (mu0, sd0) = weighted_moments(xs, ys);
    if sd0 < spacing {
        return Err(Error::DegenerateWidth { width: sd0, spacing });
    }
    let area: f64 = ys.iter().sum::<f64>() * spacing;
    let mut th = [area, mu0, sd0];
    let cost = |t: &[f64; 3]| xs.iter().zip(ys).map(|(x, y)| (gauss(t[0], t[1], t[2], *x) - y).powi(2)).sum::<f64>();
    let mut c = cost(&th);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 1..=500 {
        iterations = it;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (x, y) in xs.iter().zip(ys) {
            let g = gauss(th[0], th[1], th[2], *x);
            let z = (x - th[1]) / th[2];
            let j = [g / th[0], g * z / th[2], g * (z * z - 1.0) / th[2]];
            let r = g - y;
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(delta) = solve3(m, jtr.map(|v| -v)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [th[0] + delta[0], th[1] + delta[1], th[2] + delta[2]];
            if trial[2] > 0.0 && trial[0] > 0.0 {
                let ct = cost(&trial);
                if ct <= c {
                    let step = (0..3).map(|a| (delta[a] / th[a].abs().max(1e-300)).abs()).fold(0.0, f64::max);
                    th = trial;
                    let done = step < 1e-13 || (c - ct) <= 1e-15 * c;
                    c = ct;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if done {
                        return Ok(finish(th, c, xs.len(), it));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(finish(th, c, xs.len(), iterations))
}

fn finish(th: [f64; 3], cost: f64, n: usize, iterations: usize) -> GaussianFit {
    GaussianFit { amplitude: th[0], center: th[1], width: th[2], rms: (cost / n as f64).sqrt(), iterations }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = b[r];
        }
        *slot = det(&mk) / d;
    }
    Some(out)
}

/// Gaussian fit of N_S·p(S) over S̃.
pub fn fit_gaussian(p: &SpinDistribution) -> Result<GaussianFit> {
    fit_gaussian_points(&p.s_tilde(), &p.scaled())
}

/// σ ∝ N^β from a log-log least-squares line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub beta: f64,
    pub prefactor: f64,
    pub n_min: f64,
    pub n_max: f64,
    /// ln σ_i − (ln c + β ln N_i)
    pub residuals: Vec<f64>,
    /// Standard error of β.
    pub beta_stderr: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(n, s)| *n > 0.0 && *s > 0.0).map(|(n, s)| (n.ln(), s.ln())).collect();
    if pts.len() < 3 || pts.len() != points.len() {
        return Err(Error::TooFewPoints(pts.len()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let ln_c = my - beta * mx;
    let residuals: Vec<f64> = pts.iter().map(|p| p.1 - (ln_c + beta * p.0)).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let beta_stderr = if pts.len() > 2 { (ssr / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    let ns = points.iter().map(|p| p.0);
    Ok(PowerLawFit {
        beta,
        prefactor: ln_c.exp(),
        n_min: ns.clone().fold(f64::INFINITY, f64::min),
        n_max: ns.fold(0.0, f64::max),
        residuals,
        beta_stderr,
    })
}
