use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{content_hash, MomentCache, MomentSource};
use super::fit::{fit_gaussian, fit_power_law, moment_width, PowerLawFit};
use super::io::fmt_f64;
use crate::dpt::{coupling_matrix, null_distribution, slow_spectrum, LiouvillianSpectrum, SpinDistribution};
use crate::error::{Error, Result};
use crate::meanfield::{
    global_steady_mf1, global_steady_mf2, subspace_moments_mf2, subspace_steady_mf1, total_spin_mf1,
    total_spin_mf2, MfTolerances,
};
use crate::model::{critical_spin, enumerate_subspaces, ModelParams, PerturbationSpec, SpinSubspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "MF1")]
    Mf1,
    #[serde(rename = "MF2")]
    Mf2,
    #[serde(rename = "DPT-DM")]
    DptDm,
    #[serde(rename = "DPT-MF2")]
    DptMf2,
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Dm => "DM",
            Method::Mf1 => "MF1",
            Method::Mf2 => "MF2",
            Method::DptDm => "DPT-DM",
            Method::DptMf2 => "DPT-MF2",
            Method::Oracle => "ORACLE",
        }
    }

    pub fn dpt_of(source: &MomentSource) -> Method {
        match source {
            MomentSource::Dm(_) => Method::DptDm,
            MomentSource::Mf2(_) => Method::DptMf2,
        }
    }
}

/// One grid cell. Every value in the row comes from `method`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axes: Vec<f64>,
    pub values: Vec<f64>,
    pub method: Method,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub axis_names: Vec<String>,
    pub value_names: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub param_hash: String,
}

impl SweepResult {
    fn new(name: &str, axes: &[&str], values: Vec<String>, param_hash: String) -> Self {
        SweepResult {
            name: name.into(),
            axis_names: axes.iter().map(|s| s.to_string()).collect(),
            value_names: values,
            rows: Vec::new(),
            param_hash,
        }
    }

    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.value_names.iter().position(|n| n == name)
    }

    /// (axes, value) of every row produced by `method`.
    pub fn series(&self, method: Method, value: &str) -> Vec<(Vec<f64>, f64)> {
        let Some(k) = self.value_index(value) else { return Vec::new() };
        self.rows.iter().filter(|r| r.method == method).map(|r| (r.axes.clone(), r.values[k])).collect()
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !m.contains(&r.method) {
                m.push(r.method);
            }
        }
        m
    }

    /// Axis columns, value columns, then `method,converged`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.axis_names.iter().map(String::as_str).collect();
        header.extend(self.value_names.iter().map(String::as_str));
        header.extend(["method", "converged"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.axes.iter().chain(&r.values).map(|v| fmt_f64(*v)).collect();
            rec.push(r.method.tag().into());
            rec.push(r.converged.to_string());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
    }
}

/// ⟨a†a⟩/N above which a cell counts as superradiant.
pub const PHOTON_THRESHOLD: f64 = 1e-6;

/// Every `stride`-th subspace from the top down, so S̃ = 1 is always present.
pub fn strided_subspaces(n_atoms: u32, stride: u32) -> Result<Vec<SpinSubspace>> {
    let stride = stride.max(1) as usize;
    let all = enumerate_subspaces(n_atoms)?;
    let top = all.len() - 1;
    Ok(all.into_iter().enumerate().filter(|(i, _)| (top - i) % stride == 0).map(|(_, s)| s).collect())
}

fn photon_per_atom(params: &ModelParams, sub: SpinSubspace, method: Method, tol: &MfTolerances) -> Result<f64> {
    let n = params.n_atoms as f64;
    match method {
        Method::Mf1 => subspace_steady_mf1(params, sub, tol).map(|s| s.state.a_mean.norm_sqr() / n),
        Method::Mf2 => subspace_moments_mf2(params, sub, tol).map(|m| m.photon_mean / n),
        other => Err(Error::InvalidParams(format!("phase diagram needs MF1 or MF2, got {}", other.tag()))),
    }
}

/// ⟨a†a⟩/N on the (g, S̃) grid with the critical-curve classification of each cell.
///
/// Columns: `photon_per_atom`, `superradiant` (photon above threshold),
/// `predicted` (S̃ above the critical spin), `mismatch`.
pub fn sweep_phase_diagram(
    params: &ModelParams,
    g_grid: &[f64],
    stride: u32,
    method: Method,
    tol: &MfTolerances,
) -> Result<SweepResult> {
    if !matches!(method, Method::Mf1 | Method::Mf2) {
        return Err(Error::InvalidParams(format!("phase diagram needs MF1 or MF2, got {}", method.tag())));
    }
    let subs = strided_subspaces(params.n_atoms, stride)?;
    let hash = content_hash(&(params, g_grid, stride, method, tol))?;
    let mut out = SweepResult::new(
        "phase-diagram",
        &["g", "s_tilde"],
        ["photon_per_atom", "superradiant", "predicted", "mismatch"].map(String::from).to_vec(),
        hash,
    );
    let cells: Vec<(f64, SpinSubspace)> = g_grid.iter().flat_map(|&g| subs.iter().map(move |&s| (g, s))).collect();
    out.rows = cells
        .par_iter()
        .map(|&(g, sub)| -> Result<SweepRow> {
            let p = params.with_g(g);
            let sc = critical_spin(&p)?;
            let predicted = sc.is_some_and(|c| sub.s_tilde() > c);
            let (photon, converged) = match photon_per_atom(&p, sub, method, tol) {
                Ok(v) => (v, true),
                Err(Error::LimitCycle { .. } | Error::Diverged { .. }) => (f64::NAN, false),
                Err(e) => return Err(e),
            };
            let sr = photon > PHOTON_THRESHOLD;
            Ok(SweepRow {
                axes: vec![g, sub.s_tilde()],
                values: vec![photon, sr as u8 as f64, predicted as u8 as f64, (converged && sr != predicted) as u8 as f64],
                method,
                converged,
            })
        })
        .collect::<Result<_>>()?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub g: f64,
    /// Smallest S̃ classified superradiant.
    pub empirical: Option<f64>,
    /// S̃_c(g) from the closed form.
    pub predicted: Option<f64>,
    /// S̃ spacing of the grid column.
    pub step: f64,
}

impl BoundaryPoint {
    /// Both absent, or both present and within one grid step.
    pub fn agrees(&self) -> bool {
        match (self.empirical, self.predicted) {
            (None, None) => true,
            (Some(e), Some(p)) => (e - p).abs() <= self.step + 1e-12,
            // S̃_c just below 1 with the top cell still normal, or vice versa
            (None, Some(p)) => 1.0 - p <= self.step + 1e-12,
            (Some(e), None) => e >= 1.0 - self.step - 1e-12,
        }
    }
}

/// Empirical normal/superradiant boundary of each g column.
pub fn phase_boundary(result: &SweepResult, params: &ModelParams) -> Result<Vec<BoundaryPoint>> {
    let k = result.value_index("superradiant").ok_or_else(|| Error::InvalidParams("not a phase diagram".into()))?;
    let mut gs: Vec<f64> = result.rows.iter().map(|r| r.axes[0]).collect();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    gs.into_iter()
        .map(|g| {
            let mut col: Vec<(f64, bool)> =
                result.rows.iter().filter(|r| r.axes[0] == g).map(|r| (r.axes[1], r.values[k] > 0.5)).collect();
            col.sort_by(|a, b| a.0.total_cmp(&b.0));
            let step = col.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max);
            let empirical = col.iter().find(|c| c.1).map(|c| c.0);
            Ok(BoundaryPoint { g, empirical, predicted: critical_spin(&params.with_g(g))?, step })
        })
        .collect()
}

/// f = 0, 0.05, …, 0.95, then 0.951, …, 1.
pub fn default_f_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).chain((951..=1000).map(|i| i as f64 / 1000.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFOptions {
    pub gamma: f64,
    /// Slow eigenvalues kept per f; 0 skips the spectrum.
    pub k_spectrum: usize,
    pub mf1_reference: bool,
    pub mf2_reference: bool,
    pub tol: MfTolerances,
}

impl Default for SweepFOptions {
    fn default() -> Self {
        SweepFOptions { gamma: 1e-4, k_spectrum: 6, mf1_reference: false, mf2_reference: false, tol: MfTolerances::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SweepFResult {
    pub sweep: SweepResult,
    pub distributions: Vec<(f64, SpinDistribution)>,
    pub spectra: Vec<(f64, LiouvillianSpectrum)>,
}

fn nan_row(len: usize) -> Vec<f64> {
    vec![f64::NAN; len]
}

/// p(S), ⟨S̃⟩ and the slow spectrum over an f grid, optionally against the
/// perturbed mean-field steady states at the same Γ.
///
/// Columns: `mean_s_tilde`, `peak_s_tilde`, `sigma`, `lambda_0..`, `e_r`.
/// `e_r` sits on MF2 rows: |⟨S̃⟩_DPT − ⟨S̃⟩_MF2| / ⟨S̃⟩_MF2.
pub fn sweep_f(
    params: &ModelParams,
    f_grid: &[f64],
    source: &MomentSource,
    cache: &MomentCache,
    opts: &SweepFOptions,
) -> Result<SweepFResult> {
    let moments = cache.moments_all(params, source)?;
    let n_s = moments.len();
    let k = opts.k_spectrum.min(n_s);
    let mut names: Vec<String> = ["mean_s_tilde", "peak_s_tilde", "sigma"].map(String::from).to_vec();
    names.extend((0..k).map(|i| format!("lambda_{i}")));
    names.push("e_r".into());
    let width = names.len();
    let hash = content_hash(&(params, f_grid, source, opts))?;
    let mut out = SweepResult::new("sweep-f", &["f"], names, hash);
    let dpt = Method::dpt_of(source);

    let per_f = f_grid
        .par_iter()
        .map(|&f| -> Result<(f64, SpinDistribution, Option<LiouvillianSpectrum>, Vec<SweepRow>)> {
            let pert = PerturbationSpec::new(opts.gamma, f)?;
            let c = coupling_matrix(&moments, params.n_atoms, &pert, true)?;
            let p = null_distribution(&c)?;
            let spec = if k > 0 { Some(slow_spectrum(&c, k)?) } else { None };
            let mean = p.mean_normalized_spin();
            let mut v = nan_row(width);
            v[0] = mean;
            v[1] = p.subspaces[p.peak()].s_tilde();
            v[2] = moment_width(&p);
            if let Some(s) = &spec {
                for (i, z) in s.eigenvalues.iter().enumerate() {
                    v[3 + i] = z.re;
                }
            }
            let mut rows = vec![SweepRow { axes: vec![f], values: v, method: dpt, converged: p.max_clamp < 1e-8 }];
            if opts.mf1_reference {
                let mut v = nan_row(width);
                let conv = match global_steady_mf1(params, &pert, &opts.tol) {
                    Ok(s) => {
                        v[0] = total_spin_mf1(&s.state, params.n_atoms);
                        true
                    }
                    Err(Error::LimitCycle { .. } | Error::Diverged { .. }) => false,
                    Err(e) => return Err(e),
                };
                rows.push(SweepRow { axes: vec![f], values: v, method: Method::Mf1, converged: conv });
            }
            if opts.mf2_reference {
                let mut v = nan_row(width);
                let conv = match global_steady_mf2(params, &pert, &opts.tol) {
                    Ok(s) => {
                        v[0] = total_spin_mf2(&s.state, params.n_atoms);
                        v[width - 1] = (mean - v[0]).abs() / v[0];
                        true
                    }
                    Err(Error::LimitCycle { .. } | Error::Diverged { .. }) => false,
                    Err(e) => return Err(e),
                };
                rows.push(SweepRow { axes: vec![f], values: v, method: Method::Mf2, converged: conv });
            }
            Ok((f, p, spec, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut distributions = Vec::with_capacity(per_f.len());
    let mut spectra = Vec::new();
    for (f, p, s, rows) in per_f {
        out.rows.extend(rows);
        distributions.push((f, p));
        if let Some(s) = s {
            spectra.push((f, s));
        }
    }
    Ok(SweepFResult { sweep: out, distributions, spectra })
}

#[derive(Clone, Debug)]
pub struct ScalingResult {
    pub sweep: SweepResult,
    pub distributions: Vec<(u32, SpinDistribution)>,
    /// β from the moment-based widths.
    pub moment_fit: PowerLawFit,
    /// β from the Gaussian widths, when every N admitted a fit.
    pub gaussian_fit: Option<PowerLawFit>,
}

/// Width and position of p(S) across system sizes at fixed f.
///
/// Columns: `mean_s_tilde`, `peak_s_tilde`, `sigma_moment`, `sigma_gauss`,
/// `gauss_center`, `gauss_amplitude`, `gauss_rms`; Gaussian columns are NaN
/// where the fit is refused.
pub fn scaling(
    params: &ModelParams,
    n_list: &[u32],
    f: f64,
    gamma: f64,
    source: &MomentSource,
    cache: &MomentCache,
) -> Result<ScalingResult> {
    let pert = PerturbationSpec::new(gamma, f)?;
    let hash = content_hash(&(params, n_list, f, gamma, source))?;
    let names = ["mean_s_tilde", "peak_s_tilde", "sigma_moment", "sigma_gauss", "gauss_center", "gauss_amplitude", "gauss_rms"];
    let mut out = SweepResult::new("scaling", &["n_atoms"], names.map(String::from).to_vec(), hash);
    let method = Method::dpt_of(source);
    let mut distributions = Vec::new();
    let mut moment_pts = Vec::new();
    let mut gauss_pts = Vec::new();
    // subspaces inside one N already run in parallel
    for &n in n_list {
        let p_n = params.with_atoms(n);
        let moments = cache.moments_all(&p_n, source)?;
        let p = null_distribution(&coupling_matrix(&moments, n, &pert, true)?)?;
        let sm = moment_width(&p);
        let gf = fit_gaussian(&p).ok();
        moment_pts.push((n as f64, sm));
        if let Some(g) = gf {
            gauss_pts.push((n as f64, g.width));
        }
        let g = gf.map_or([f64::NAN; 4], |g| [g.width, g.center, g.amplitude, g.rms]);
        out.rows.push(SweepRow {
            axes: vec![n as f64],
            values: vec![p.mean_normalized_spin(), p.subspaces[p.peak()].s_tilde(), sm, g[0], g[1], g[2], g[3]],
            method,
            converged: p.max_clamp < 1e-8,
        });
        distributions.push((n, p));
    }
    let moment_fit = fit_power_law(&moment_pts)?;
    let gaussian_fit = if gauss_pts.len() == n_list.len() { fit_power_law(&gauss_pts).ok() } else { None };
    Ok(ScalingResult { sweep: out, distributions, moment_fit, gaussian_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_grid_is_refined_near_one() {
        let g = default_f_grid();
        assert_eq!(g.len(), 70);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.windows(2).filter(|w| w[0] >= 0.95).all(|w| (w[1] - w[0] - 1e-3).abs() < 1e-12));
    }

    #[test]
    fn strides_keep_the_top() {
        let s = strided_subspaces(10, 2).unwrap();
        assert_eq!(s.iter().map(|s| s.two_s).collect::<Vec<_>>(), vec![2, 6, 10]);
        assert_eq!(strided_subspaces(9, 1).unwrap().len(), 5);
    }

    #[test]
    fn csv_has_axes_first_and_tags() {
        let mut r = SweepResult::new("t", &["g"], vec!["x".into()], "h".into());
        r.rows.push(SweepRow { axes: vec![0.5], values: vec![f64::NAN], method: Method::DptMf2, converged: true });
        let csv = r.to_csv().unwrap();
        assert_eq!(csv, "g,x,method,converged\n5.0000000000000000e-1,NaN,DPT-MF2,true\n");
    }

    #[test]
    fn phase_columns_match_closed_form_small() {
        let p = ModelParams::reference(0.9, 100);
        let r = sweep_phase_diagram(&p, &[0.3, 0.9], 1, Method::Mf1, &MfTolerances::default()).unwrap();
        for b in phase_boundary(&r, &p).unwrap() {
            assert!(b.agrees(), "{b:?}");
        }
        assert!(sweep_phase_diagram(&p, &[0.9], 1, Method::Oracle, &MfTolerances::default()).is_err());
    }
}
