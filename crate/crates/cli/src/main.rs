use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use open_dicke::analysis::io::{
    distribution_csv, moments_csv, parse_config, spectrum_csv, to_json, wigner_csv, write_atomic,
};
use open_dicke::analysis::{
    default_f_grid, phase_boundary, reproduce_figure, scaling, sweep_f, sweep_phase_diagram, FigureContext,
    FigureOverrides, Method, MomentCache, MomentSource, SweepFOptions, FIGURE_IDS,
};
use open_dicke::dpt::{coupling_matrix, mixture_wigner, null_distribution, slow_spectrum};
use open_dicke::meanfield::MfTolerances;
use open_dicke::oracle::{build_liouvillian, slow_cluster, spin_resolved_population, steady_state, OracleOptions};
use open_dicke::subspace::{self, wigner_photon, SteadyOptions, WignerSpec};
use open_dicke::{critical_coupling, critical_spin, enumerate_subspaces, ModelParams, PerturbationSpec, SpinSubspace};

#[derive(Parser, Debug)]
#[command(name = "open-dicke", version, about = "Open Dicke model: fixed-S steady states, spin mixing under local perturbations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct Global {
    #[arg(long, global = true)]
    omega_c: Option<f64>,
    #[arg(long, global = true)]
    omega_0: Option<f64>,
    #[arg(long, global = true)]
    g: Option<f64>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    n_atoms: Option<u32>,
    /// Directory for output files; without it the main table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Moment cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// key = value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Moments {
    Dm,
    Mf2,
}

impl Moments {
    fn source(self) -> MomentSource {
        match self {
            Moments::Dm => MomentSource::dm(),
            Moments::Mf2 => MomentSource::mf2(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PhaseMethod {
    Mf1,
    Mf2,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// g_c(S̃) on a grid, and S̃_c at the current g.
    CriticalCurve {
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Unperturbed steady-state moments of one or all subspaces.
    Subspace {
        #[arg(long, value_enum, default_value = "dm")]
        method: Moments,
        /// 2S of a single subspace; all subspaces when absent.
        #[arg(long)]
        two_s: Option<u32>,
    },
    /// Spin distribution and slow spectrum from degenerate perturbation theory.
    Dpt {
        #[arg(long, default_value_t = 0.0)]
        f: f64,
        #[arg(long, default_value_t = 1e-4)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "mf2")]
        moments: Moments,
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Exact Liouvillian on the full space (N ≤ 4).
    Oracle {
        #[arg(long, default_value_t = 1.0)]
        f: f64,
        #[arg(long, default_value_t = 1e-4)]
        gamma: f64,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// ⟨S̃⟩, p(S) and the slow spectrum over f.
    SweepF {
        /// Comma-separated; defaults to 0..0.95 step 0.05 then step 0.001 to 1.
        #[arg(long, value_delimiter = ',')]
        f_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-4)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "mf2")]
        moments: Moments,
        #[arg(long, default_value_t = 6)]
        k: usize,
        /// Add perturbed MF1 and MF2 steady states at the same Γ.
        #[arg(long)]
        references: bool,
    },
    /// ⟨a†a⟩/N on the (S̃, g) plane.
    SweepPhase {
        #[arg(long, default_value_t = 0.05)]
        g_min: f64,
        #[arg(long, default_value_t = 1.8)]
        g_max: f64,
        #[arg(long, default_value_t = 0.05)]
        g_step: f64,
        #[arg(long, value_enum, default_value = "mf1")]
        method: PhaseMethod,
        /// Use every stride-th subspace.
        #[arg(long, default_value_t = 1)]
        stride: u32,
    },
    /// Width of p(S) against N and the fitted exponent.
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800,900,1000,1500,2000")]
        n_list: Vec<u32>,
        #[arg(long, default_value_t = 0.0)]
        f: f64,
        #[arg(long, default_value_t = 1e-4)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "mf2")]
        moments: Moments,
    },
    /// Photon Wigner function of one subspace, or of the DPT-DM mixture at f.
    Wigner {
        #[arg(long, conflicts_with = "f")]
        two_s: Option<u32>,
        #[arg(long)]
        f: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long, default_value_t = 121)]
        points: usize,
    },
    /// Run a figure pipeline.
    Figure {
        id: String,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        f_grid: Option<Vec<f64>>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        g_grid: Option<Vec<f64>>,
        #[arg(long)]
        stride: Option<u32>,
        #[arg(long)]
        n_max: Option<usize>,
    },
}

/// Settings after merging the config file under the command line.
struct Settings {
    params: ModelParams,
    n_atoms_given: bool,
    out: Option<PathBuf>,
    cache: MomentCache,
}

fn pick<T: FromStr>(flag: Option<T>, file: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    let from_file = file.remove(key);
    if flag.is_some() {
        return Ok(flag);
    }
    from_file.map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key {key}: {e}"))).transpose()
}

fn settings(g: Global) -> Result<Settings> {
    let mut file = match &g.config {
        Some(p) => parse_config(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => BTreeMap::new(),
    };
    let omega_c = pick(g.omega_c, &mut file, "omega-c")?.unwrap_or(1.0);
    let omega_0 = pick(g.omega_0, &mut file, "omega-0")?.unwrap_or(0.5);
    let coupling = pick(g.g, &mut file, "g")?.unwrap_or(0.9);
    let kappa = pick(g.kappa, &mut file, "kappa")?.unwrap_or(1.0);
    let n_atoms = pick(g.n_atoms, &mut file, "n-atoms")?;
    let out = pick(g.out, &mut file, "out")?;
    let cache = pick(g.cache, &mut file, "cache")?;
    let workers = pick(g.workers, &mut file, "workers")?;
    if let Some(k) = file.keys().next() {
        bail!("unknown config key `{k}`");
    }
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global().context("starting worker pool")?;
    }
    Ok(Settings {
        params: ModelParams::new(omega_c, omega_0, coupling, kappa, n_atoms.unwrap_or(40))?,
        n_atoms_given: n_atoms.is_some(),
        out,
        cache: cache.map_or_else(MomentCache::disabled, MomentCache::new),
    })
}

/// Named outputs of one command; the first is the main table.
struct Outputs(Vec<(String, String)>);

impl Outputs {
    fn finish(self, out: Option<&Path>) -> Result<()> {
        match out {
            Some(dir) => {
                for (name, text) in &self.0 {
                    let p = dir.join(name);
                    write_atomic(&p, text.as_bytes())?;
                    println!("{}", p.display());
                }
            }
            None => {
                if let Some((_, text)) = self.0.first() {
                    print!("{text}");
                }
            }
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(cli.global)?;
    let p = s.params;
    let outputs = match cli.command {
        Command::CriticalCurve { points } => {
            let mut csv = String::from("s_tilde,g_c\n");
            for i in 1..=points.max(1) {
                let st = i as f64 / points.max(1) as f64;
                csv.push_str(&format!("{},{}\n", fmt(st), fmt(critical_coupling(&p, st)?)));
            }
            let summary = json!({"g": p.g, "s_tilde_c": critical_spin(&p)?, "g_c_top": critical_coupling(&p, 1.0)?});
            Outputs(vec![("critical_curve.csv".into(), csv), ("critical.json".into(), to_json(&summary)?)])
        }
        Command::Subspace { method, two_s } => {
            let src = method.source();
            let ms = match two_s {
                Some(t) => vec![s.cache.get_or_compute(&p, SpinSubspace::new(t, p.n_atoms)?, &src)?],
                None => s.cache.moments_all(&p, &src)?,
            };
            let tag = if matches!(method, Moments::Dm) { Method::Dm } else { Method::Mf2 };
            Outputs(vec![("moments.csv".into(), moments_csv(p.n_atoms, &ms, tag)?)])
        }
        Command::Dpt { f, gamma, moments, k } => {
            let ms = s.cache.moments_all(&p, &moments.source())?;
            let c = coupling_matrix(&ms, p.n_atoms, &PerturbationSpec::new(gamma, f)?, true)?;
            let d = null_distribution(&c)?;
            let spec = slow_spectrum(&c, k.clamp(1, ms.len()))?;
            let summary = json!({
                "method": Method::dpt_of(&moments.source()).tag(),
                "f": f, "gamma": gamma,
                "mean_s_tilde": d.mean_normalized_spin(),
                "peak_s_tilde": d.subspaces[d.peak()].s_tilde(),
                "max_clamp": d.max_clamp,
            });
            Outputs(vec![
                ("distribution.csv".into(), distribution_csv(&d)?),
                ("spectrum.csv".into(), spectrum_csv(&spec)?),
                ("dpt.json".into(), to_json(&summary)?),
            ])
        }
        Command::Oracle { f, gamma, n_max, k } => {
            let p = if s.n_atoms_given { p } else { p.with_atoms(4) };
            let l = build_liouvillian(&p, &PerturbationSpec::new(gamma, f)?, n_max)?;
            let opts = OracleOptions::default();
            let spec = slow_cluster(&l, k, &opts)?;
            let mut outs = vec![("spectrum.csv".into(), spectrum_csv(&spec)?)];
            if gamma > 0.0 {
                let (rho, _) = steady_state(&l, &opts)?;
                outs.push(("distribution.csv".into(), distribution_csv(&spin_resolved_population(&rho, &l.ops)?)?));
            }
            Outputs(outs)
        }
        Command::SweepF { f_grid, gamma, moments, k, references } => {
            let fs = f_grid.unwrap_or_else(default_f_grid);
            let opts = SweepFOptions { gamma, k_spectrum: k, mf1_reference: references, mf2_reference: references, tol: MfTolerances::default() };
            let r = sweep_f(&p, &fs, &moments.source(), &s.cache, &opts)?;
            let mut outs = vec![("sweep_f.csv".into(), r.sweep.to_csv()?)];
            for (f, d) in &r.distributions {
                outs.push((format!("distribution_f{f}.csv"), distribution_csv(d)?));
            }
            Outputs(outs)
        }
        Command::SweepPhase { g_min, g_max, g_step, method, stride } => {
            if !(g_step > 0.0 && g_max >= g_min) {
                bail!("need g_step > 0 and g_max >= g_min");
            }
            let count = ((g_max - g_min) / g_step + 1e-9).floor() as usize + 1;
            let gs: Vec<f64> = (0..count).map(|i| g_min + i as f64 * g_step).collect();
            let m = match method {
                PhaseMethod::Mf1 => Method::Mf1,
                PhaseMethod::Mf2 => Method::Mf2,
            };
            let r = sweep_phase_diagram(&p, &gs, stride, m, &MfTolerances::default())?;
            let b = phase_boundary(&r, &p)?;
            Outputs(vec![("phase_diagram.csv".into(), r.to_csv()?), ("boundary.json".into(), to_json(&b)?)])
        }
        Command::Scaling { n_list, f, gamma, moments } => {
            let r = scaling(&p, &n_list, f, gamma, &moments.source(), &s.cache)?;
            let fits = json!({"moment_fit": r.moment_fit, "gaussian_fit": r.gaussian_fit});
            Outputs(vec![("scaling.csv".into(), r.sweep.to_csv()?), ("fits.json".into(), to_json(&fits)?)])
        }
        Command::Wigner { two_s, f, gamma, half_width, points } => {
            let opts = SteadyOptions::default();
            let subs: Vec<SpinSubspace> = match two_s {
                Some(t) => vec![SpinSubspace::new(t, p.n_atoms)?],
                None => enumerate_subspaces(p.n_atoms)?,
            };
            if two_s.is_none() && f.is_none() {
                bail!("give --two-s for one subspace or --f for the mixture");
            }
            let dms = subs.iter().map(|&sub| subspace::steady_state(&p, sub, &opts)).collect::<open_dicke::Result<Vec<_>>>()?;
            let cutoff = dms.iter().map(|(d, _)| d.basis.n_max).max().unwrap_or(8);
            let spec = match half_width {
                Some(h) => WignerSpec::square(h, points),
                None => WignerSpec { nx: points, np: points, ..WignerSpec::for_cutoff(cutoff) },
            };
            let grids = dms.iter().map(|(d, _)| wigner_photon(d, Some(spec))).collect::<open_dicke::Result<Vec<_>>>()?;
            let grid = match f {
                None => grids.into_iter().next().expect("one subspace"),
                Some(f) => {
                    let ms: Vec<_> = dms.into_iter().map(|(_, m)| m).collect();
                    let d = null_distribution(&coupling_matrix(&ms, p.n_atoms, &PerturbationSpec::new(gamma, f)?, true)?)?;
                    mixture_wigner(&d, &grids)?
                }
            };
            Outputs(vec![("wigner.csv".into(), wigner_csv(&grid)?)])
        }
        Command::Figure { id, n_list, f_grid, gamma, gammas, g_grid, stride, n_max } => {
            if !FIGURE_IDS.contains(&id.as_str()) {
                bail!("unknown figure id `{id}`; known: {}", FIGURE_IDS.join(", "));
            }
            let ctx = FigureContext {
                params: p,
                out_dir: s.out.clone().unwrap_or_else(|| PathBuf::from("figures")),
                cache: s.cache.clone(),
                overrides: FigureOverrides {
                    n_atoms: s.n_atoms_given.then_some(p.n_atoms),
                    n_list,
                    f_grid,
                    gamma,
                    gammas,
                    g_grid,
                    stride,
                    n_max,
                },
            };
            for f in reproduce_figure(&id, &ctx)? {
                println!("{}", f.display());
            }
            return Ok(());
        }
    };
    outputs.finish(s.out.as_deref())
}

fn fmt(x: f64) -> String {
    open_dicke::analysis::io::fmt_f64(x)
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
