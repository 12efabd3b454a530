use approx::assert_relative_eq;
use num_bigint::BigUint;
use open_dicke::analysis::fit_gaussian_points;
use open_dicke::dpt::{coupling_decay, coupling_dephasing, coupling_matrix, mixture_wigner, null_distribution, slow_spectrum, SpinDistribution};
use open_dicke::meanfield::realizable_sz2_floor;
use open_dicke::subspace::{wigner_of_photon, SubspaceMoments, WignerSpec};
use open_dicke::{critical_coupling, critical_spin, degeneracy, enumerate_subspaces, ModelParams, PerturbationSpec};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

fn moments_from(n: u32, fracs: &[(f64, f64)]) -> Vec<SubspaceMoments> {
    enumerate_subspaces(n)
        .unwrap()
        .iter()
        .zip(fracs)
        .map(|(s, &(u, v))| {
            let spin = s.spin();
            let z = spin * (2.0 * u - 1.0);
            let lo = realizable_sz2_floor(spin, z);
            SubspaceMoments {
                two_s: s.two_s,
                sz_mean: z,
                sz2_mean: lo + v * (spin * spin - lo),
                photon_mean: 0.0,
                fock_cutoff_used: 0,
                converged: true,
                residual: 0.0,
            }
        })
        .collect()
}

fn fracs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 151)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn columns_conserve_probability(n in 1u32..=300, fr in fracs()) {
        let ms = moments_from(n, &fr);
        for o in [coupling_dephasing(&ms, n).unwrap(), coupling_decay(&ms, n).unwrap()] {
            let scale = o.max_abs().max(1.0);
            for s in o.column_sums() {
                prop_assert!(s.abs() <= 1e-10 * scale, "column sum {s} at N={n}");
            }
        }
    }

    #[test]
    fn transition_rates_nonnegative_on_realizable_moments(n in 1u32..=300, fr in fracs()) {
        let ms = moments_from(n, &fr);
        for o in [coupling_dephasing(&ms, n).unwrap(), coupling_decay(&ms, n).unwrap()] {
            let tol = 1e-12 * o.max_abs().max(1.0);
            prop_assert!(o.upper.iter().chain(&o.lower).all(|&r| r >= -tol));
        }
    }

    #[test]
    fn spectrum_linear_in_gamma(n in 2u32..=120, fr in fracs(), f in 0.0..=1.0f64, gamma in 1e-6..1.0f64) {
        let ms = moments_from(n, &fr);
        let k = 3.min(n as usize / 2 + 1);
        let unit = slow_spectrum(&coupling_matrix(&ms, n, &PerturbationSpec::new(1.0, f).unwrap(), true).unwrap(), k).unwrap();
        let scaled = slow_spectrum(&coupling_matrix(&ms, n, &PerturbationSpec::new(gamma, f).unwrap(), true).unwrap(), k).unwrap();
        let big = unit.eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for (a, b) in unit.eigenvalues.iter().zip(&scaled.eigenvalues) {
            prop_assert!((a * gamma - b).norm() <= 1e-9 * big * gamma + 1e-300);
        }
    }

    #[test]
    fn null_vector_is_a_distribution(n in 2u32..=300, fr in fracs(), f in 0.0..=1.0f64) {
        let ms = moments_from(n, &fr);
        let c = coupling_matrix(&ms, n, &PerturbationSpec::new(1e-3, f).unwrap(), true).unwrap();
        let Ok(d) = null_distribution(&c) else {
            // a vanishing rate can cut the chain; the solver reports that
            return Ok(());
        };
        prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.p.iter().all(|&v| v >= 0.0));
        let r = c.c.matvec(&d.p);
        let scale = c.c.max_abs();
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-9 * scale));
    }

    #[test]
    fn critical_curve_round_trip(wc in 0.1..5.0f64, w0 in 0.1..5.0f64, kappa in 0.01..5.0f64, s in 0.01..=1.0f64) {
        let p = ModelParams::new(wc, w0, 1.0, kappa, 100).unwrap();
        let g = critical_coupling(&p, s).unwrap();
        let back = critical_spin(&p.with_g(g)).unwrap().unwrap();
        prop_assert!((back - s).abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn gaussian_fit_is_a_fixed_point(mu in 0.2..0.8f64, sigma in 0.02..0.1f64, amp in 0.5..5.0f64) {
        let xs: Vec<f64> = (0..201).map(|i| i as f64 / 200.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| amp * (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let first = fit_gaussian_points(&xs, &ys).unwrap();
        let resampled: Vec<f64> = xs.iter().map(|&x| first.eval(x)).collect();
        let second = fit_gaussian_points(&xs, &resampled).unwrap();
        prop_assert!((first.center - second.center).abs() <= 1e-6);
        prop_assert!((first.width - second.width).abs() <= 1e-6 * first.width);
        prop_assert!((first.amplitude - second.amplitude).abs() <= 1e-6 * first.amplitude);
    }

    #[test]
    fn wigner_mixture_is_linear(w in prop::collection::vec(0.0..1.0f64, 3), alpha in 0.5..2.0f64) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let spec = WignerSpec::square(5.0, 41);
        let coherent = |x: f64| {
            // |α⟩⟨α| on 20 Fock states
            let n = 20;
            let mut c = vec![Complex64::new((-0.5 * x * x).exp(), 0.0)];
            for k in 1..n {
                let prev = c[k - 1];
                c.push(prev * x / (k as f64).sqrt());
            }
            let rho = Array2::from_shape_fn((n, n), |(i, j)| c[i] * c[j].conj());
            wigner_of_photon(&rho, &spec)
        };
        let grids = vec![coherent(0.0), coherent(alpha), coherent(-alpha)];
        let d = SpinDistribution::from_weights(4, w.clone()).unwrap();
        let mix = mixture_wigner(&d, &grids).unwrap();
        let total: f64 = w.iter().sum();
        for ((i, j), v) in mix.w.indexed_iter() {
            let direct: f64 = grids.iter().zip(&w).map(|(g, wi)| wi / total * g.w[[i, j]]).sum();
            prop_assert!((v - direct).abs() <= 1e-12);
        }
    }
}

#[test]
fn subspace_multiplicities_fill_the_hilbert_space() {
    for n in 1..=64u32 {
        let total: BigUint = enumerate_subspaces(n).unwrap().into_iter().map(|s| degeneracy(s) * (s.two_s + 1)).sum();
        assert_eq!(total, BigUint::from(2u8).pow(n), "N = {n}");
    }
}

#[test]
fn decay_from_lowest_weight_moments_has_no_downward_rate() {
    // ⟨S_z⟩ = −S, ⟨S_z²⟩ = S² in every subspace: S(S+1) + S² − (2S+1)S = 0
    let n = 12;
    let ms: Vec<_> = enumerate_subspaces(n)
        .unwrap()
        .iter()
        .map(|s| SubspaceMoments {
            two_s: s.two_s,
            sz_mean: -s.spin(),
            sz2_mean: s.spin().powi(2),
            photon_mean: 0.0,
            fock_cutoff_used: 0,
            converged: true,
            residual: 0.0,
        })
        .collect();
    let o = coupling_decay(&ms, n).unwrap();
    for &u in &o.upper {
        assert!(u.abs() < 1e-12);
    }
    assert!(o.lower.iter().all(|&l| l > 0.0));
}

#[test]
fn dephasing_alone_keeps_the_top_subspace_connected() {
    let n = 8;
    let ms = moments_from(n, &[(0.3, 0.5); 5]);
    let c = coupling_matrix(&ms, n, &PerturbationSpec::new(1.0, 1.0).unwrap(), false).unwrap();
    let d = null_distribution(&c).unwrap();
    assert!(d.p.iter().all(|&v| v > 0.0));
    assert_relative_eq!(d.p.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
}
