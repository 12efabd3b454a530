//! Figure pipelines: each id runs one sweep with its default parameter set and
//! writes `<id>.csv`, `<id>.json`, `<id>.svg` and `<id>.provenance.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::{content_hash, MomentCache, MomentSource, DM_ATOM_CAP};
use super::fit::PowerLawFit;
use super::io::{wigner_csv, write_atomic, write_json};
use super::svg::{heatmap, Plot, Series};
use super::sweep::{
    default_f_grid, phase_boundary, scaling, sweep_f, sweep_phase_diagram, Method, SweepFOptions, SweepResult,
    SweepRow,
};
use crate::dpt::{coupling_matrix, mixture_wigner, null_distribution, sign_changes, slow_spectrum};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::meanfield::{global_steady_mf1, total_spin_mf1, MfTolerances};
use crate::model::{critical_spin, enumerate_subspaces, ModelParams, PerturbationSpec, SpinSubspace};
use crate::oracle::{build_liouvillian, slow_cluster, OracleOptions};
use crate::subspace::{steady_state, wigner_photon, SteadyOptions, WignerSpec};

pub const FIGURE_IDS: [&str; 11] = [
    "eig-vs-gamma",
    "pS-vs-f",
    "meanS-vs-f",
    "pS-scaling",
    "beta-fit",
    "phase-diagram",
    "wigner-grid",
    "f0.999-scaling",
    "dm-scaling",
    "spectrum-vs-f",
    "eigvecs",
];

/// Largest N used where the reference calculation needs DM moments of
/// every subspace (the published panels use N = 40 to 400).
pub const DM_FALLBACK_ATOMS: u32 = 12;

/// Per-run replacements for a figure's default parameter set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FigureOverrides {
    pub n_atoms: Option<u32>,
    pub n_list: Option<Vec<u32>>,
    pub f_grid: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub gammas: Option<Vec<f64>>,
    pub g_grid: Option<Vec<f64>>,
    pub stride: Option<u32>,
    pub n_max: Option<usize>,
}

pub struct FigureContext {
    /// Rates; `n_atoms` is replaced by each figure's default unless overridden.
    pub params: ModelParams,
    pub out_dir: PathBuf,
    pub cache: MomentCache,
    pub overrides: FigureOverrides,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub figure: String,
    pub param_hash: String,
    pub methods: Vec<String>,
    pub params: ModelParams,
    pub inputs: Value,
    pub tolerances: Value,
    pub notes: Vec<String>,
    pub version: String,
}

struct Artifact {
    sweep: SweepResult,
    extra_csv: Vec<(String, String)>,
    json: Value,
    svg: String,
    inputs: Value,
    tolerances: Value,
    notes: Vec<String>,
}

pub fn reproduce_figure(id: &str, ctx: &FigureContext) -> Result<Vec<PathBuf>> {
    let art = match id {
        "eig-vs-gamma" => eig_vs_gamma(ctx)?,
        "pS-vs-f" => ps_vs_f(ctx)?,
        "meanS-vs-f" => means_vs_f(ctx)?,
        "pS-scaling" => ps_scaling(ctx, "pS-scaling", &[0.0, 1.0], &[50, 100, 200, 1000], MomentSource::mf2())?,
        "beta-fit" => beta_fit(ctx)?,
        "phase-diagram" => phase_diagram(ctx)?,
        "wigner-grid" => wigner_grid(ctx)?,
        "f0.999-scaling" => ps_scaling(ctx, "f0.999-scaling", &[0.999], &[500, 1000, 2000], MomentSource::mf2())?,
        "dm-scaling" => ps_scaling(ctx, "dm-scaling", &[1.0], &[4, 6, 8, 10, DM_FALLBACK_ATOMS], MomentSource::dm())?,
        "spectrum-vs-f" => spectrum_vs_f(ctx)?,
        "eigvecs" => eigvecs(ctx)?,
        other => return Err(Error::UnknownFigure(other.to_string())),
    };
    emit(id, ctx, art)
}

fn emit(id: &str, ctx: &FigureContext, mut art: Artifact) -> Result<Vec<PathBuf>> {
    let dir = &ctx.out_dir;
    let hash = content_hash(&(id, &ctx.params, &art.inputs))?;
    art.sweep.param_hash = hash.clone();
    let file = |ext: &str| dir.join(format!("{id}.{ext}"));
    let mut files = Vec::new();
    let mut put = |p: PathBuf, bytes: &[u8]| -> Result<()> {
        write_atomic(&p, bytes)?;
        files.push(p);
        Ok(())
    };
    put(file("csv"), art.sweep.to_csv()?.as_bytes())?;
    for (suffix, text) in &art.extra_csv {
        put(file(&format!("{suffix}.csv")), text.as_bytes())?;
    }
    put(file("svg"), art.svg.as_bytes())?;
    let json_path = file("json");
    write_json(&json_path, &art.json)?;
    files.push(json_path);
    let prov = Provenance {
        figure: id.into(),
        param_hash: hash,
        methods: art.sweep.methods().iter().map(|m| m.tag().to_string()).collect(),
        params: ctx.params,
        inputs: art.inputs,
        tolerances: art.tolerances,
        notes: art.notes,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let prov_path = file("provenance.json");
    write_json(&prov_path, &prov)?;
    files.push(prov_path);
    Ok(files)
}

fn with_n(ctx: &FigureContext, default: u32) -> ModelParams {
    ctx.params.with_atoms(ctx.overrides.n_atoms.unwrap_or(default))
}

fn critical_lines(p: &ModelParams) -> Vec<f64> {
    critical_spin(p).ok().flatten().into_iter().collect()
}

fn blank(name: &str, axes: &[&str], values: &[&str]) -> SweepResult {
    SweepResult {
        name: name.into(),
        axis_names: axes.iter().map(|s| s.to_string()).collect(),
        value_names: values.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        param_hash: String::new(),
    }
}

fn eig_vs_gamma(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, 4);
    let gammas = ctx.overrides.gammas.clone().unwrap_or_else(|| vec![0.0, 1e-5, 1e-4, 5e-4, 1e-3]);
    let n_max = ctx.overrides.n_max.unwrap_or(12);
    let dm_opts = SteadyOptions::default();
    let oracle_opts = OracleOptions::default();
    let moments = ctx.cache.moments_all(&p, &MomentSource::Dm(dm_opts))?;
    let n_s = moments.len();
    let mut sweep = blank("eig-vs-gamma", &["gamma", "index"], &["re_lambda", "im_lambda"]);
    let mut dpt_rates = Vec::new();
    let mut oracle: Vec<(f64, Vec<C64>)> = Vec::new();
    for &g in &gammas {
        let pert = PerturbationSpec::new(g, 1.0)?;
        let spec = slow_spectrum(&coupling_matrix(&moments, p.n_atoms, &pert, true)?, n_s)?;
        for (i, z) in spec.eigenvalues.iter().enumerate() {
            sweep.rows.push(SweepRow { axes: vec![g, i as f64], values: vec![z.re, z.im], method: Method::DptDm, converged: true });
        }
        if g > 0.0 {
            dpt_rates = spec.eigenvalues.iter().map(|z| z.re / g).collect();
        }
        let l = build_liouvillian(&p, &pert, n_max)?;
        let o = slow_cluster(&l, n_s + 1, &oracle_opts)?;
        for (i, z) in o.eigenvalues.iter().enumerate() {
            sweep.rows.push(SweepRow { axes: vec![g, i as f64], values: vec![z.re, z.im], method: Method::Oracle, converged: true });
        }
        oracle.push((g, o.eigenvalues));
    }
    let base = oracle.iter().find(|(g, _)| *g == 0.0).map(|(_, v)| v.clone());
    let slopes: Vec<Value> = match &base {
        Some(b) => oracle
            .iter()
            .filter(|(g, _)| *g > 0.0)
            .map(|(g, v)| json!({"gamma": g, "slopes": (0..n_s).map(|i| (v[i].re - b[i].re) / g).collect::<Vec<_>>()}))
            .collect(),
        None => Vec::new(),
    };
    let mut plot = Plot { title: format!("slow eigenvalues, N = {}", p.n_atoms), x_label: "Γ_φ".into(), y_label: "Re λ".into(), ..Default::default() };
    for (method, name) in [(Method::DptDm, "DPT"), (Method::Oracle, "exact")] {
        for i in 0..=n_s {
            let pts: Vec<(f64, f64)> =
                sweep.rows.iter().filter(|r| r.method == method && r.axes[1] == i as f64).map(|r| (r.axes[0], r.values[0])).collect();
            if pts.is_empty() {
                continue;
            }
            let (xs, ys) = pts.into_iter().unzip();
            plot.series.push(if method == Method::Oracle { Series::points(format!("{name} {i}"), xs, ys) } else { Series::line(format!("{name} {i}"), xs, ys) });
        }
    }
    Ok(Artifact {
        json: json!({"dpt_rates_per_gamma": dpt_rates, "oracle_slopes": slopes, "oracle_at_zero": base.map(|b| b.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())}),
        svg: plot.render(),
        sweep,
        extra_csv: Vec::new(),
        inputs: json!({"n_atoms": p.n_atoms, "gammas": gammas, "f": 1.0, "n_max": n_max}),
        tolerances: json!({"dm": dm_opts, "oracle": {"sigma": oracle_opts.sigma, "tol": oracle_opts.tol}}),
        notes: vec![],
    })
}

fn distribution_rows(sweep: &mut SweepResult, lead: &[f64], p: &crate::dpt::SpinDistribution, method: Method) {
    for ((s, w), ws) in p.subspaces.iter().zip(&p.p).zip(p.scaled()) {
        let mut axes = lead.to_vec();
        axes.push(s.s_tilde());
        sweep.rows.push(SweepRow { axes, values: vec![*w, ws], method, converged: p.max_clamp < 1e-8 });
    }
}

fn ps_vs_f(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, DM_FALLBACK_ATOMS);
    let fs = ctx.overrides.f_grid.clone().unwrap_or_else(|| vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    let gamma = ctx.overrides.gamma.unwrap_or(0.01);
    let src = MomentSource::dm();
    let opts = SweepFOptions { gamma, k_spectrum: 0, ..Default::default() };
    let r = sweep_f(&p, &fs, &src, &ctx.cache, &opts)?;
    let mut sweep = blank("pS-vs-f", &["f", "s_tilde"], &["p", "p_scaled"]);
    let mut plot = Plot { title: format!("p(S), DPT-DM, N = {}", p.n_atoms), x_label: "S̃".into(), y_label: "p(S)".into(), vlines: critical_lines(&p), ..Default::default() };
    for (f, d) in &r.distributions {
        distribution_rows(&mut sweep, &[*f], d, Method::DptDm);
        plot.series.push(Series::line(format!("f = {f}"), d.s_tilde(), d.p.clone()));
    }
    let means: Vec<Value> = r.distributions.iter().map(|(f, d)| json!({"f": f, "mean_s_tilde": d.mean_normalized_spin()})).collect();
    Ok(Artifact {
        json: json!({"mean_s_tilde": means, "critical_s_tilde": critical_spin(&p)?}),
        svg: plot.render(),
        sweep,
        extra_csv: vec![],
        inputs: json!({"n_atoms": p.n_atoms, "f_grid": fs, "gamma": gamma}),
        tolerances: json!({"dm": SteadyOptions::default()}),
        notes: fallback_note(p.n_atoms, 40),
    })
}

fn fallback_note(n: u32, published: u32) -> Vec<String> {
    if n < published {
        vec![format!("DM moments at N = {n}; the published panel uses N = {published}, beyond the DM resource cap")]
    } else {
        vec![]
    }
}

fn means_vs_f(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, 1000);
    let fs = ctx.overrides.f_grid.clone().unwrap_or_else(default_f_grid);
    let gamma = ctx.overrides.gamma.unwrap_or(1e-4);
    let tol = MfTolerances::default();
    let opts = SweepFOptions { gamma, k_spectrum: 0, mf1_reference: true, mf2_reference: true, tol };
    let r = sweep_f(&p, &fs, &MomentSource::mf2(), &ctx.cache, &opts)?;
    // the DM version at desk-sized N
    let small = ctx.params.with_atoms(DM_FALLBACK_ATOMS);
    let dm = sweep_f(&small, &fs, &MomentSource::dm(), &ctx.cache, &SweepFOptions { gamma, k_spectrum: 0, ..Default::default() })?;
    let mut sweep = r.sweep.clone();
    sweep.axis_names = vec!["f".into(), "n_atoms".into()];
    for row in &mut sweep.rows {
        row.axes.push(p.n_atoms as f64);
    }
    for mut row in dm.sweep.rows {
        row.axes.push(small.n_atoms as f64);
        sweep.rows.push(row);
    }
    let mut plot = Plot { title: "⟨S̃⟩ vs f".into(), x_label: "f".into(), y_label: "⟨S̃⟩".into(), ..Default::default() };
    for (m, n) in [(Method::DptMf2, p.n_atoms), (Method::Mf2, p.n_atoms), (Method::Mf1, p.n_atoms), (Method::DptDm, small.n_atoms)] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = sweep.series(m, "mean_s_tilde").into_iter().map(|(a, v)| (a[0], v)).unzip();
        if !xs.is_empty() {
            plot.series.push(Series::line(format!("{} N={n}", m.tag()), xs, ys));
        }
    }
    let e_r: Vec<Value> = sweep.series(Method::Mf2, "e_r").into_iter().map(|(a, v)| json!({"f": a[0], "e_r": v})).collect();
    Ok(Artifact {
        json: json!({"e_r": e_r, "critical_s_tilde": critical_spin(&p)?}),
        svg: plot.render(),
        sweep,
        extra_csv: vec![],
        inputs: json!({"n_atoms": p.n_atoms, "dm_atoms": small.n_atoms, "f_grid": fs, "gamma": gamma}),
        tolerances: json!({"mf": tol, "dm": SteadyOptions::default()}),
        notes: fallback_note(small.n_atoms, 40),
    })
}

fn ps_scaling(ctx: &FigureContext, id: &str, fs: &[f64], default_ns: &[u32], src: MomentSource) -> Result<Artifact> {
    let fs = ctx.overrides.f_grid.clone().unwrap_or_else(|| fs.to_vec());
    let ns = ctx.overrides.n_list.clone().unwrap_or_else(|| default_ns.to_vec());
    let gamma = ctx.overrides.gamma.unwrap_or(1e-4);
    let method = Method::dpt_of(&src);
    let mut sweep = blank(id, &["f", "n_atoms", "s_tilde"], &["p", "p_scaled"]);
    let mut plot = Plot {
        title: format!("N_S p(S), {}", method.tag()),
        x_label: "S̃".into(),
        y_label: "N_S p(S)".into(),
        vlines: critical_lines(&ctx.params.with_atoms(ns[0].max(1))),
        ..Default::default()
    };
    let mut summary = Vec::new();
    for &f in &fs {
        let r = scaling(&ctx.params, &ns, f, gamma, &src, &ctx.cache)?;
        for (n, d) in &r.distributions {
            distribution_rows(&mut sweep, &[f, *n as f64], d, method);
            plot.series.push(Series::line(format!("f={f} N={n}"), d.s_tilde(), d.scaled()));
        }
        summary.push(json!({"f": f, "rows": r.sweep.rows, "columns": r.sweep.value_names, "moment_fit": r.moment_fit, "gaussian_fit": r.gaussian_fit}));
    }
    let mut reference = Value::Null;
    if id == "f0.999-scaling" {
        let p = ctx.params.with_atoms(1000);
        let st = global_steady_mf1(&p, &PerturbationSpec::new(gamma, fs[0])?, &MfTolerances::default())?;
        reference = json!({"method": "MF1", "n_atoms": 1000, "mean_s_tilde": total_spin_mf1(&st.state, 1000)});
        if let Some(v) = reference["mean_s_tilde"].as_f64() {
            plot.vlines.push(v);
        }
    }
    let notes = if let MomentSource::Dm(_) = src { fallback_note(*ns.iter().max().unwrap_or(&0), 400) } else { vec![] };
    Ok(Artifact {
        json: json!({"per_f": summary, "reference": reference}),
        svg: plot.render(),
        sweep,
        extra_csv: vec![],
        inputs: json!({"f": fs, "n_list": ns, "gamma": gamma, "source": src}),
        tolerances: json!({"source": src}),
        notes,
    })
}

fn beta_fit(ctx: &FigureContext) -> Result<Artifact> {
    let ns = ctx.overrides.n_list.clone().unwrap_or_else(|| (1..=10).map(|k| 100 * k).chain([1500, 2000]).collect());
    let f = ctx.overrides.f_grid.as_ref().and_then(|v| v.first().copied()).unwrap_or(0.0);
    let gamma = ctx.overrides.gamma.unwrap_or(1e-4);
    let src = MomentSource::mf2();
    let r = scaling(&ctx.params, &ns, f, gamma, &src, &ctx.cache)?;
    let line = |fit: &PowerLawFit, label: &str| {
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let ys = xs.iter().map(|n| fit.prefactor * n.powf(fit.beta)).collect();
        Series::line(format!("{label} β={:.4}", fit.beta), xs, ys)
    };
    let pts = |k: &str| -> (Vec<f64>, Vec<f64>) { r.sweep.series(Method::DptMf2, k).into_iter().map(|(a, v)| (a[0], v)).unzip() };
    let (xm, ym) = pts("sigma_moment");
    let (xg, yg) = pts("sigma_gauss");
    let mut series = vec![Series::points("moment σ", xm, ym), line(&r.moment_fit, "moment fit")];
    if let Some(g) = &r.gaussian_fit {
        series.push(Series::points("Gaussian σ", xg, yg));
        series.push(line(g, "Gaussian fit"));
    }
    let plot = Plot { title: format!("σ vs N, f = {f}"), x_label: "N".into(), y_label: "σ".into(), series, log_x: true, log_y: true, ..Default::default() };
    Ok(Artifact {
        json: json!({"moment_fit": r.moment_fit, "gaussian_fit": r.gaussian_fit}),
        svg: plot.render(),
        sweep: r.sweep,
        extra_csv: vec![],
        inputs: json!({"n_list": ns, "f": f, "gamma": gamma, "source": src}),
        tolerances: json!({"source": src}),
        notes: vec!["fit range N = 100 to 2000; the published fit extends to N = 100000".into()],
    })
}

fn phase_diagram(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, 1000);
    let gs = ctx.overrides.g_grid.clone().unwrap_or_else(|| (1..=36).map(|k| 0.05 * k as f64).collect());
    let stride = ctx.overrides.stride.unwrap_or(1);
    let tol = MfTolerances::default();
    let sweep = sweep_phase_diagram(&p, &gs, stride, Method::Mf1, &tol)?;
    let boundary = phase_boundary(&sweep, &p)?;
    let k = sweep.value_index("photon_per_atom").unwrap_or(0);
    let mut ss: Vec<f64> = sweep.rows.iter().map(|r| r.axes[1]).collect();
    ss.sort_by(f64::total_cmp);
    ss.dedup();
    let z: Vec<Vec<f64>> = ss
        .iter()
        .map(|s| gs.iter().map(|g| sweep.rows.iter().find(|r| r.axes[0] == *g && r.axes[1] == *s).map_or(f64::NAN, |r| r.values[k])).collect())
        .collect();
    let overlay: Vec<Value> = boundary.iter().filter_map(|b| b.predicted.map(|s| json!({"g": b.g, "s_tilde_c": s}))).collect();
    Ok(Artifact {
        json: json!({"boundary": boundary, "all_agree": boundary.iter().all(|b| b.agrees()), "critical_overlay": overlay}),
        svg: heatmap("⟨a†a⟩/N, MF1", "S̃", "g", &ss, &gs, &z),
        sweep,
        extra_csv: vec![],
        inputs: json!({"n_atoms": p.n_atoms, "g_grid": gs, "stride": stride}),
        tolerances: json!({"mf": tol}),
        notes: vec![],
    })
}

/// Subspace of `n` with S̃ closest to `target`.
pub fn nearest_subspace(n: u32, target: f64) -> Result<SpinSubspace> {
    let subs = enumerate_subspaces(n)?;
    Ok(*subs
        .iter()
        .min_by(|a, b| (a.s_tilde() - target).abs().total_cmp(&(b.s_tilde() - target).abs()).then(b.two_s.cmp(&a.two_s)))
        .expect("at least one subspace"))
}

/// Relative height above which Wigner lobes and maxima are counted.
pub const LOBE_FRACTION: f64 = 0.1;

fn wigner_grid(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, DM_FALLBACK_ATOMS);
    if p.n_atoms > DM_ATOM_CAP {
        return Err(Error::ResourceCap(format!("wigner-grid needs DM at every S; N <= {DM_ATOM_CAP}")));
    }
    let fs = ctx.overrides.f_grid.clone().unwrap_or_else(|| vec![1.0, 0.6, 0.3, 0.0]);
    let gamma = ctx.overrides.gamma.unwrap_or(0.01);
    let opts = SteadyOptions::default();
    let subs = enumerate_subspaces(p.n_atoms)?;
    let dms = subs.iter().map(|&s| steady_state(&p, s, &opts)).collect::<Result<Vec<_>>>()?;
    let cutoff = dms.iter().map(|(d, _)| d.basis.n_max).max().unwrap_or(8);
    let spec = WignerSpec::for_cutoff(cutoff);
    let grids = dms.iter().map(|(d, _)| wigner_photon(d, Some(spec))).collect::<Result<Vec<_>>>()?;
    let moments: Vec<_> = dms.iter().map(|(_, m)| m.clone()).collect();
    let mut sweep = blank("wigner-grid", &["s_tilde", "f"], &["local_maxima", "lobes", "w_max", "integral"]);
    let mut extra = Vec::new();
    let mut panels = Vec::new();
    let mut picks: Vec<SpinSubspace> = [0.1, 0.35, 0.5, 1.0].iter().map(|&t| nearest_subspace(p.n_atoms, t)).collect::<Result<_>>()?;
    picks.dedup();
    for sub in picks {
        let i = subs.iter().position(|s| *s == sub).expect("enumerated");
        let g = &grids[i];
        let maxima = g.local_maxima(LOBE_FRACTION).len();
        sweep.rows.push(SweepRow {
            axes: vec![sub.s_tilde(), f64::NAN],
            values: vec![maxima as f64, g.lobe_count(LOBE_FRACTION) as f64, g.max(), g.integral()],
            method: Method::Dm,
            converged: moments[i].converged,
        });
        extra.push((format!("S{}", sub.two_s), wigner_csv(g)?));
        panels.push((format!("S̃ = {:.3}", sub.s_tilde()), g.clone()));
    }
    let mut mixtures = Vec::new();
    for &f in &fs {
        let c = coupling_matrix(&moments, p.n_atoms, &PerturbationSpec::new(gamma, f)?, true)?;
        let d = null_distribution(&c)?;
        let w = mixture_wigner(&d, &grids)?;
        let maxima = w.local_maxima(LOBE_FRACTION).len();
        sweep.rows.push(SweepRow {
            axes: vec![f64::NAN, f],
            values: vec![maxima as f64, w.lobe_count(LOBE_FRACTION) as f64, w.max(), w.integral()],
            method: Method::DptDm,
            converged: d.max_clamp < 1e-8,
        });
        extra.push((format!("f{f}"), wigner_csv(&w)?));
        mixtures.push(json!({"f": f, "p": d.p, "mean_s_tilde": d.mean_normalized_spin()}));
        panels.push((format!("f = {f}"), w));
    }
    // the SVG shows the S̃ = 1 panel; every panel has its own CSV
    let top = panels.iter().find(|(l, _)| l.starts_with("S̃ = 1.000")).unwrap_or(&panels[0]);
    let xs = top.1.spec.xs();
    let ps = top.1.spec.ps();
    let z: Vec<Vec<f64>> = (0..xs.len()).map(|i| (0..ps.len()).map(|j| top.1.w[[i, j]]).collect()).collect();
    Ok(Artifact {
        json: json!({"mixtures": mixtures, "grid": spec, "lobe_fraction": LOBE_FRACTION}),
        svg: heatmap(&format!("W(x, p), {}", top.0), "x", "p", &xs, &ps, &z),
        sweep,
        extra_csv: extra,
        inputs: json!({"n_atoms": p.n_atoms, "f_grid": fs, "gamma": gamma}),
        tolerances: json!({"dm": opts}),
        notes: fallback_note(p.n_atoms, 40),
    })
}

fn spectrum_vs_f(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, 1000);
    let fs = ctx.overrides.f_grid.clone().unwrap_or_else(|| {
        (0..10).map(|k| 0.1 * k as f64).chain([0.95, 0.99, 0.999, 1.0]).collect()
    });
    let gamma = ctx.overrides.gamma.unwrap_or(1e-4);
    let k = 11;
    let r = sweep_f(&p, &fs, &MomentSource::mf2(), &ctx.cache, &SweepFOptions { gamma, k_spectrum: k, ..Default::default() })?;
    let mut sweep = blank("spectrum-vs-f", &["f", "index"], &["re_lambda", "im_lambda", "re_lambda_over_gamma"]);
    for (f, s) in &r.spectra {
        for (i, z) in s.eigenvalues.iter().enumerate() {
            sweep.rows.push(SweepRow { axes: vec![*f, i as f64], values: vec![z.re, z.im, z.re / gamma], method: Method::DptMf2, converged: true });
        }
    }
    let mut plot = Plot { title: format!("slow spectrum, N = {}", p.n_atoms), x_label: "f".into(), y_label: "Re λ / Γ".into(), ..Default::default() };
    for i in 0..k {
        let (xs, ys): (Vec<f64>, Vec<f64>) = sweep.rows.iter().filter(|r| r.axes[1] == i as f64).map(|r| (r.axes[0], r.values[2])).unzip();
        plot.series.push(Series::line(format!("λ_{i}"), xs, ys));
    }
    Ok(Artifact {
        json: json!({"gamma": gamma, "max_imag": r.spectra.iter().map(|(_, s)| s.max_imag()).fold(0.0, f64::max)}),
        svg: plot.render(),
        sweep,
        extra_csv: vec![],
        inputs: json!({"n_atoms": p.n_atoms, "f_grid": fs, "gamma": gamma, "k": k}),
        tolerances: json!({"mf": MfTolerances::default()}),
        notes: vec![],
    })
}

fn eigvecs(ctx: &FigureContext) -> Result<Artifact> {
    let p = with_n(ctx, 1000);
    let f = ctx.overrides.f_grid.as_ref().and_then(|v| v.first().copied()).unwrap_or(0.0);
    let gamma = ctx.overrides.gamma.unwrap_or(1e-4);
    let k = 5;
    let moments = ctx.cache.moments_all(&p, &MomentSource::mf2())?;
    let c = coupling_matrix(&moments, p.n_atoms, &PerturbationSpec::new(gamma, f)?, true)?;
    let spec = slow_spectrum(&c, k)?;
    let mut sweep = blank("eigvecs", &["index", "s_tilde"], &["p_n", "lambda"]);
    let mut plot = Plot { title: format!("eigenvectors, f = {f}"), x_label: "S̃".into(), y_label: "p_n(S)".into(), ..Default::default() };
    let mut nodes = Vec::new();
    for n in 0..k {
        let v = spec.right_real(n).ok_or_else(|| Error::SpectrumFailure("no eigenvectors".into()))?;
        for (s, x) in c.subspaces.iter().zip(&v) {
            sweep.rows.push(SweepRow { axes: vec![n as f64, s.s_tilde()], values: vec![*x, spec.eigenvalues[n].re], method: Method::DptMf2, converged: true });
        }
        nodes.push(json!({"n": n, "lambda_over_gamma": spec.eigenvalues[n].re / gamma, "sign_changes": sign_changes(&v, 1e-6)}));
        if n < 4 {
            plot.series.push(Series::line(format!("p_{n}"), c.subspaces.iter().map(|s| s.s_tilde()).collect(), v));
        }
    }
    Ok(Artifact {
        json: json!({"nodes": nodes}),
        svg: plot.render(),
        sweep,
        extra_csv: vec![],
        inputs: json!({"n_atoms": p.n_atoms, "f": f, "gamma": gamma, "k": k}),
        tolerances: json!({"mf": MfTolerances::default()}),
        notes: vec![],
    })
}

/// Files a figure run would produce, without running it.
pub fn figure_files(id: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    if !FIGURE_IDS.contains(&id) {
        return Err(Error::UnknownFigure(id.into()));
    }
    Ok(["csv", "svg", "json", "provenance.json"].iter().map(|e| dir.join(format!("{id}.{e}"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_figure_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = FigureContext {
            params: ModelParams::reference(0.9, 4),
            out_dir: dir.path().into(),
            cache: MomentCache::disabled(),
            overrides: FigureOverrides::default(),
        };
        assert!(matches!(reproduce_figure("fig-99", &ctx), Err(Error::UnknownFigure(_))));
        assert!(figure_files("nope", dir.path()).is_err());
        assert_eq!(figure_files("beta-fit", dir.path()).unwrap().len(), 4);
    }

    #[test]
    fn nearest_subspace_picks_closest() {
        assert_eq!(nearest_subspace(40, 0.1).unwrap().two_s, 4);
        assert_eq!(nearest_subspace(12, 1.0).unwrap().two_s, 12);
        assert_eq!(nearest_subspace(12, 0.35).unwrap().two_s, 4);
    }

    #[test]
    fn small_phase_diagram_figure() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = FigureContext {
            params: ModelParams::reference(0.9, 1000),
            out_dir: dir.path().into(),
            cache: MomentCache::disabled(),
            overrides: FigureOverrides { n_atoms: Some(100), g_grid: Some(vec![0.5, 1.0]), ..Default::default() },
        };
        let files = reproduce_figure("phase-diagram", &ctx).unwrap();
        assert_eq!(files.len(), 4);
        let csv = std::fs::read_to_string(dir.path().join("phase-diagram.csv")).unwrap();
        assert!(csv.starts_with("g,s_tilde,photon_per_atom,superradiant,predicted,mismatch,method,converged\n"));
        let prov: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("phase-diagram.provenance.json")).unwrap()).unwrap();
        assert_eq!(prov["methods"][0], "MF1");
        assert_eq!(prov["param_hash"].as_str().unwrap().len(), 64);
    }
}
