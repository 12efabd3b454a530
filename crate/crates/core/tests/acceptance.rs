//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any criterion fails.

use std::time::Instant;

use open_dicke::analysis::figures::{nearest_subspace, LOBE_FRACTION};
use open_dicke::analysis::{
    fit_gaussian, moment_width, phase_boundary, scaling, sweep_phase_diagram, Method, MomentCache, MomentSource,
};
use open_dicke::dpt::{
    coupling_decay, coupling_dephasing, coupling_matrix, mixture_wigner, null_distribution, sign_changes,
    slow_spectrum,
};
use open_dicke::meanfield::{global_steady_mf1, subspace_steady_mf1, total_spin_mf1, MfTolerances};
use open_dicke::oracle::{build_liouvillian, slow_cluster, spin_resolved_population, steady_state, OracleOptions};
use open_dicke::subspace::{self, wigner_photon, SteadyOptions, SubspaceMoments, WignerSpec};
use open_dicke::{critical_coupling, critical_spin, enumerate_subspaces, ModelParams, PerturbationSpec};
use rand::{rngs::StdRng, Rng, SeedableRng};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

const G: f64 = 0.9;
/// Oracle photon cutoff; the fourth eigenvalue moves by 2e-7 between 12 and 15.
const ORACLE_CUTOFF: usize = 12;

fn c1_critical_values() -> Outcome {
    let p = ModelParams::reference(G, 1);
    // (g² S̃)_c = ω_0 (ω_c² + κ²/4) / (2 ω_c) = 0.5 · 1.25 / 2
    let product = 0.3125_f64;
    let gc = critical_coupling(&p, 1.0).map_err(e)?;
    let sc = critical_spin(&p).map_err(e)?.ok_or("no critical spin at g = 0.9")?;
    let (dg, ds) = ((gc - product.sqrt()).abs(), (sc - product / (G * G)).abs());
    check(
        dg < 1e-12 && ds < 1e-12 && (gc - 0.559016).abs() < 1e-6 && (sc - 0.385802).abs() < 1e-6,
        format!("g_c(1) = {gc:.15}, S̃_c(0.9) = {sc:.15}, deviations {dg:.1e}, {ds:.1e}"),
    )
}

fn random_cone_moments(rng: &mut StdRng, n: u32) -> Vec<SubspaceMoments> {
    enumerate_subspaces(n)
        .unwrap()
        .into_iter()
        .map(|s| {
            let sp = s.spin();
            let sz = if sp > 0.0 { rng.random_range(-sp..=sp) } else { 0.0 };
            let lo = sz * sz;
            let sz2 = if sp * sp > lo { rng.random_range(lo..=sp * sp) } else { lo };
            SubspaceMoments {
                two_s: s.two_s,
                sz_mean: sz,
                sz2_mean: sz2,
                photon_mean: 0.0,
                fock_cutoff_used: 0,
                converged: true,
                residual: 0.0,
            }
        })
        .collect()
}

fn c2_conservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for n in [2u32, 5, 40, 500] {
        for _ in 0..1000 {
            let ms = random_cone_moments(&mut rng, n);
            for o in [coupling_dephasing(&ms, n).map_err(e)?, coupling_decay(&ms, n).map_err(e)?] {
                worst = o.column_sums().iter().fold(worst, |w, s| w.max(s.abs()));
            }
        }
    }
    check(worst <= 1e-10, format!("max |column sum| = {worst:.2e} over 4000 random moment sets, raw matrices"))
}

fn dm_moments(p: &ModelParams, cache: &MomentCache) -> Result<Vec<SubspaceMoments>, String> {
    cache.moments_all(p, &MomentSource::dm()).map_err(e)
}

fn c3_oracle_slopes(cache: &MomentCache) -> Outcome {
    let p = ModelParams::reference(G, 4);
    let ms = dm_moments(&p, cache)?;
    let rates = slow_spectrum(&coupling_matrix(&ms, 4, &PerturbationSpec::new(1.0, 1.0).map_err(e)?, true).map_err(e)?, 3)
        .map_err(e)?
        .eigenvalues;
    let opts = OracleOptions::default();
    let at = |gamma: f64| -> Result<Vec<f64>, String> {
        let l = build_liouvillian(&p, &PerturbationSpec::new(gamma, 1.0).map_err(e)?, ORACLE_CUTOFF).map_err(e)?;
        Ok(slow_cluster(&l, 5, &opts).map_err(e)?.eigenvalues.iter().map(|z| z.re).collect())
    };
    let zero = at(0.0)?;
    let cluster = zero.iter().filter(|v| v.abs() < 1e-8).count();
    let fourth = zero[3];
    let scale = rates.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for gamma in [1e-5, 2e-5] {
        let l = at(gamma)?;
        for i in 0..3 {
            let slope = (l[i] - zero[i]) / gamma;
            let rel = (slope - rates[i].re).abs() / scale;
            worst = worst.max(rel);
            detail.push(format!("{slope:.5}"));
        }
    }
    check(
        worst <= 0.02 && cluster == 3 && (fourth + 0.017).abs() <= 0.1 * 0.017,
        format!(
            "DPT rates {:.5}/{:.5}/{:.5}, oracle slopes [{}], worst rel {worst:.1e}; cluster {cluster} at Γ=0, fourth {fourth:.6}",
            rates[0].re,
            rates[1].re,
            rates[2].re,
            detail.join(", ")
        ),
    )
}

fn c4_oracle_populations(cache: &MomentCache) -> Outcome {
    let p = ModelParams::reference(G, 4);
    let ms = dm_moments(&p, cache)?;
    let opts = OracleOptions::default();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for f in [0.0, 0.5, 1.0] {
        let pert = PerturbationSpec::new(1e-4, f).map_err(e)?;
        let dpt = null_distribution(&coupling_matrix(&ms, 4, &pert, true).map_err(e)?).map_err(e)?;
        let l = build_liouvillian(&p, &pert, ORACLE_CUTOFF).map_err(e)?;
        let (rho, _) = steady_state(&l, &opts).map_err(e)?;
        let exact = spin_resolved_population(&rho, &l.ops).map_err(e)?;
        let rel = dpt.p.iter().zip(&exact.p).map(|(a, b)| (a - b).abs() / b.abs().max(1e-300)).fold(0.0, f64::max);
        worst = worst.max(rel);
        detail.push(format!("f={f}: {rel:.1e}"));
    }
    check(worst <= 0.05, format!("max componentwise relative deviation [{}]", detail.join(", ")))
}

fn c5_mf1_transition() -> Outcome {
    let p = ModelParams::reference(G, 2000);
    let tol = MfTolerances::default();
    let mut first = None;
    // 2S step 10 gives S̃ step 0.005
    for two_s in (0..=2000u32).step_by(10) {
        let sub = open_dicke::SpinSubspace::new(two_s, 2000).map_err(e)?;
        let st = subspace_steady_mf1(&p, sub, &tol).map_err(e)?;
        if st.state.a_mean.norm_sqr() / 2000.0 > open_dicke::analysis::sweep::PHOTON_THRESHOLD {
            first = Some(sub.s_tilde());
            break;
        }
    }
    let s = first.ok_or("no superradiant subspace")?;
    check((s - 0.3858).abs() <= 0.005, format!("first superradiant S̃ = {s:.4} (grid 0.005)"))
}

fn c6_phase_diagram() -> Outcome {
    let p = ModelParams::reference(G, 1000);
    let gs: Vec<f64> = (1..=36).map(|k| 0.05 * k as f64).collect();
    let r = sweep_phase_diagram(&p, &gs, 1, Method::Mf1, &MfTolerances::default()).map_err(e)?;
    let unconverged = r.rows.iter().filter(|r| !r.converged).count();
    let b = phase_boundary(&r, &p).map_err(e)?;
    let bad: Vec<String> = b.iter().filter(|x| !x.agrees()).map(|x| format!("g={:.2}: {:?} vs {:?}", x.g, x.empirical, x.predicted)).collect();
    let worst = b
        .iter()
        .filter_map(|x| Some((x.empirical? - x.predicted?).abs() / x.step))
        .fold(0.0, f64::max);
    check(
        bad.is_empty() && unconverged == 0,
        format!("{} g columns, {} cells, worst offset {worst:.2} cells, {unconverged} unconverged {}", b.len(), r.rows.len(), bad.join("; ")),
    )
}

fn c7_endpoints(cache: &MomentCache) -> Outcome {
    let p = ModelParams::reference(G, 1000);
    let ms = cache.moments_all(&p, &MomentSource::mf2()).map_err(e)?;
    let dist = |f: f64| -> Result<open_dicke::dpt::SpinDistribution, String> {
        null_distribution(&coupling_matrix(&ms, 1000, &PerturbationSpec::new(1e-4, f).map_err(e)?, true).map_err(e)?).map_err(e)
    };
    let d0 = dist(0.0)?;
    let peak0 = d0.subspaces[d0.peak()].s_tilde();
    let mean1 = dist(1.0)?.mean_normalized_spin();
    let st = global_steady_mf1(&p, &PerturbationSpec::new(1e-4, 0.999).map_err(e)?, &MfTolerances::default()).map_err(e)?;
    let mf1 = total_spin_mf1(&st.state, 1000);
    check(
        (peak0 - 0.789).abs() <= 0.01 && (mean1 - 0.3311).abs() <= 0.005 && (mf1 - 0.3864).abs() <= 0.005,
        format!("f=0 peak S̃ {peak0:.4}; f=1 ⟨S̃⟩ {mean1:.4}; f=0.999 MF1-at-Γ ⟨S̃⟩ {mf1:.4}"),
    )
}

fn c8_beta(cache: &MomentCache) -> Outcome {
    let ns: Vec<u32> = (1..=10).map(|k| 100 * k).chain([1500, 2000]).collect();
    let r = scaling(&ModelParams::reference(G, 100), &ns, 0.0, 1e-4, &MomentSource::mf2(), cache).map_err(e)?;
    let bm = r.moment_fit.beta;
    let bg = r.gaussian_fit.as_ref().map(|f| f.beta);
    // cross-check one width against a fit run outside the scaling pipeline
    let d1000 = &r.distributions.iter().find(|(n, _)| *n == 1000).ok_or("N = 1000 missing")?.1;
    let sg = fit_gaussian(d1000).map_err(e)?.width;
    let sm = moment_width(d1000);
    check(
        (bm + 0.5).abs() <= 0.02,
        format!(
            "β (moment width) = {bm:.5} ± {:.5}, β (Gaussian width) = {}, σ(N=1000) moment {sm:.5} / Gaussian {sg:.5}",
            r.moment_fit.beta_stderr,
            bg.map_or("n/a".into(), |b| format!("{b:.5}"))
        ),
    )
}

fn c9_spectrum_structure(cache: &MomentCache) -> Outcome {
    let p = ModelParams::reference(G, 1000);
    let gamma = 1e-4;
    let ms = cache.moments_all(&p, &MomentSource::mf2()).map_err(e)?;
    let c = coupling_matrix(&ms, 1000, &PerturbationSpec::new(gamma, 0.0).map_err(e)?, true).map_err(e)?;
    let s = slow_spectrum(&c, 7).map_err(e)?;
    let ratios: Vec<f64> = s.eigenvalues.iter().map(|z| z.re / gamma).collect();
    let eig_ok = (1..=6).all(|n| (ratios[n] + n as f64).abs() <= 0.05 * n as f64);
    let nodes: Vec<usize> = (0..5).map(|n| sign_changes(&s.right_real(n).unwrap(), 1e-6)).collect();
    let nodes_ok = nodes.iter().enumerate().all(|(n, &k)| n == k);
    check(
        eig_ok && nodes_ok,
        format!(
            "λ_n/Γ = [{}]; sign changes n=0..4: {nodes:?}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c10_wigner() -> Outcome {
    let n = 12u32;
    let p = ModelParams::reference(G, n);
    let subs = enumerate_subspaces(n).map_err(e)?;
    let dms = subs.iter().map(|&s| subspace::steady_state(&p, s, &SteadyOptions::default())).collect::<Result<Vec<_>, _>>().map_err(e)?;
    let spec = WignerSpec::for_cutoff(dms.iter().map(|(d, _)| d.basis.n_max).max().unwrap());
    let grids = dms.iter().map(|(d, _)| wigner_photon(d, Some(spec))).collect::<Result<Vec<_>, _>>().map_err(e)?;
    let ms: Vec<SubspaceMoments> = dms.iter().map(|(_, m)| m.clone()).collect();
    let idx = |t: f64| -> Result<usize, String> {
        let s = nearest_subspace(n, t).map_err(e)?;
        Ok(subs.iter().position(|x| *x == s).unwrap())
    };
    let (lo, hi) = (idx(0.1)?, idx(1.0)?);
    let maxima = |g: &open_dicke::subspace::WignerGrid| g.local_maxima(LOBE_FRACTION).len();
    let (m_lo, m_hi) = (maxima(&grids[lo]), maxima(&grids[hi]));
    let mix = |f: f64| -> Result<usize, String> {
        let d = null_distribution(&coupling_matrix(&ms, n, &PerturbationSpec::new(0.01, f).map_err(e)?, true).map_err(e)?).map_err(e)?;
        Ok(maxima(&mixture_wigner(&d, &grids).map_err(e)?))
    };
    let (m0, m1) = (mix(0.0)?, mix(1.0)?);
    check(
        m_lo == 1 && m_hi == 2 && m0 == 2 && m1 == 1,
        format!(
            "N = {n} (N = 40 DM is beyond desk resources): maxima S̃={:.3}: {m_lo}, S̃=1: {m_hi}; mixture f=0: {m0}, f=1: {m1}",
            subs[lo].s_tilde()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let cache = MomentCache::new(dir.path());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("critical curve closed form", Box::new(c1_critical_values)),
        ("conservation identity", Box::new(c2_conservation)),
        ("oracle slopes and slow cluster", Box::new(|| c3_oracle_slopes(&cache))),
        ("DPT vs exact populations", Box::new(|| c4_oracle_populations(&cache))),
        ("MF1 transition at g = 0.9", Box::new(c5_mf1_transition)),
        ("phase diagram boundary", Box::new(c6_phase_diagram)),
        ("spin-mixing endpoints", Box::new(|| c7_endpoints(&cache))),
        ("width scaling exponent", Box::new(|| c8_beta(&cache))),
        ("slow spectrum structure", Box::new(|| c9_spectrum_structure(&cache))),
        ("Wigner morphology", Box::new(c10_wigner)),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {k:>2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {k:>2} FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
