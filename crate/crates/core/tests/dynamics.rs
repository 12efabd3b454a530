use open_dicke::meanfield::{
    casimir_mf2, init_dicke_state, integrate_to_steady, mf1_rhs, mf2_rhs, subspace_moments_mf2, subspace_steady_mf1,
    MF1State, MF2State, MfTolerances,
};
use open_dicke::ode::{Dopri5, OdeSystem};
use open_dicke::subspace::{evolve, steady_state, steady_state_at_cutoff, OperatorSet, ProductBasis, SteadyOptions, DEFAULT_DIM_CAP};
use open_dicke::{ModelParams, PerturbationSpec, SpinSubspace};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

#[test]
fn density_matrix_invariants_along_the_flow() {
    let p = ModelParams::reference(0.9, 6);
    let sub = SpinSubspace::new(6, 6).unwrap();
    let times = [0.5, 2.0, 5.0, 12.0];
    let states = evolve(&p, sub, 12, &times, 1e-10).unwrap();
    let ops = OperatorSet::new(ProductBasis::new(sub, 12, DEFAULT_DIM_CAP).unwrap());
    for dm in &states {
        assert!((dm.trace() - C64::new(1.0, 0.0)).norm() <= 1e-8);
        assert!(dm.hermiticity_defect() <= 1e-10);
        assert!((dm.expect_real(&ops.s2) - sub.casimir()).abs() <= 1e-8);
    }
}

#[test]
fn cutoff_insensitivity_of_the_steady_state() {
    let p = ModelParams::reference(0.9, 6);
    let sub = SpinSubspace::new(6, 6).unwrap();
    let opts = SteadyOptions::default();
    let (dm, m) = steady_state(&p, sub, &opts).unwrap();
    let (bigger, _) = steady_state_at_cutoff(&p, sub, dm.basis.n_max + 6, &opts, None).unwrap();
    let photons: f64 = bigger.photon_populations().iter().enumerate().map(|(n, v)| n as f64 * v).sum();
    assert!((photons - m.photon_mean).abs() <= 1e-6 * m.photon_mean);
}

struct Mf2Flow<'a>(&'a ModelParams);

impl OdeSystem for Mf2Flow<'_> {
    fn dim(&self) -> usize {
        17
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        use open_dicke::meanfield::MfState;
        mf2_rhs(&MF2State::from_vec(y), self.0, &PerturbationSpec::NONE).to_vec(dy);
    }
}

#[test]
fn mf2_conserves_total_spin_without_perturbation() {
    use open_dicke::meanfield::MfState;
    let p = ModelParams::reference(0.9, 40);
    for two_s in [2, 14, 28, 40] {
        let sub = SpinSubspace::new(two_s, 40).unwrap();
        let start = init_dicke_state(sub);
        let c0 = casimir_mf2(&start);
        let mut y = vec![0.0; 17];
        start.to_vec(&mut y);
        let mut ode = Dopri5::new(17, 1e-10, 1e-12);
        let mut t = 0.0;
        for k in 1..=20 {
            ode.integrate(&Mf2Flow(&p), &mut t, &mut y, 10.0 * k as f64);
            let s = MF2State::from_vec(&y);
            assert!((casimir_mf2(&s) - c0).abs() <= 1e-6 * c0, "2S = {two_s}, t = {t}");
            assert!((s.sxsy.im - 0.5 * s.sz).abs() <= 1e-8 * c0);
        }
    }
}

#[test]
fn mf2_with_zero_spin_moments_under_pure_dephasing() {
    let p = ModelParams::reference(0.9, 10);
    let q = PerturbationSpec::new(0.2, 1.0).unwrap();
    let zero = MF2State {
        a_mean: C64::new(0.0, 0.0),
        sx: 0.0,
        sy: 0.0,
        sz: 0.0,
        ada: 0.0,
        aa: C64::new(0.0, 0.0),
        a_sx: C64::new(0.0, 0.0),
        a_sy: C64::new(0.0, 0.0),
        sx2: 0.0,
        sy2: 0.0,
        sz2: 0.0,
        sxsy: C64::new(0.0, 0.0),
    };
    let d = mf2_rhs(&zero, &p, &q);
    // only the transverse second moments relax, toward N/4
    assert!((d.sx2 - 0.1 * 5.0).abs() < 1e-15 && (d.sy2 - 0.1 * 5.0).abs() < 1e-15);
    let rest = [d.a_mean.norm(), d.sx, d.sy, d.sz, d.ada, d.aa.norm(), d.a_sx.norm(), d.a_sy.norm(), d.sz2, d.sxsy.norm()];
    assert!(rest.iter().all(|v| v.abs() == 0.0));
}

fn factorized(s: &MF1State) -> MF2State {
    let a = s.a_mean;
    MF2State {
        a_mean: a,
        sx: s.sx,
        sy: s.sy,
        sz: s.sz,
        ada: a.norm_sqr(),
        aa: a * a,
        a_sx: a * s.sx,
        a_sy: a * s.sy,
        sx2: s.sx * s.sx,
        sy2: s.sy * s.sy,
        sz2: s.sz * s.sz,
        sxsy: C64::new(s.sx * s.sy, 0.5 * s.sz),
    }
}

proptest! {
    #[test]
    fn mf2_first_moments_reduce_to_mf1(
        re in -10.0..10.0f64, im in -10.0..10.0f64,
        sx in -20.0..20.0f64, sy in -20.0..20.0f64, sz in -20.0..20.0f64,
        g in 0.0..2.0f64, gamma in 0.0..0.5f64, f in 0.0..=1.0f64,
    ) {
        let p = ModelParams::reference(g, 40);
        let q = PerturbationSpec::new(gamma, f).unwrap();
        let s = MF1State { a_mean: C64::new(re, im), sx, sy, sz };
        let one = mf1_rhs(&s, &p, &q);
        let two = mf2_rhs(&factorized(&s), &p, &q);
        prop_assert!((one.a_mean - two.a_mean).norm() <= 1e-12 * (1.0 + one.a_mean.norm()));
        for (a, b) in [(one.sx, two.sx), (one.sy, two.sy), (one.sz, two.sz)] {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn mf2_perturbation_enters_linearly(
        re in -3.0..3.0f64, sx in -5.0..5.0f64, sz in -5.0..5.0f64, q2 in 0.0..25.0f64,
        gamma in 1e-4..0.5f64, f in 0.0..=1.0f64,
    ) {
        let p = ModelParams::reference(0.9, 10);
        let mut s = init_dicke_state(SpinSubspace::new(10, 10).unwrap());
        s.a_mean = C64::new(re, 0.3);
        s.sx = sx;
        s.sz = sz;
        s.sz2 = q2;
        let base = mf2_rhs(&s, &p, &PerturbationSpec::NONE);
        let one = mf2_rhs(&s, &p, &PerturbationSpec::new(gamma, f).unwrap());
        let two = mf2_rhs(&s, &p, &PerturbationSpec::new(2.0 * gamma, f).unwrap());
        use open_dicke::meanfield::MfState;
        let (mut b, mut o, mut t) = (vec![0.0; 17], vec![0.0; 17], vec![0.0; 17]);
        base.to_vec(&mut b);
        one.to_vec(&mut o);
        two.to_vec(&mut t);
        for i in 0..17 {
            let d1 = o[i] - b[i];
            let d2 = t[i] - b[i];
            prop_assert!((d2 - 2.0 * d1).abs() <= 1e-10 * (1.0 + d2.abs() + b[i].abs()));
        }
    }
}

#[test]
fn mf2_approaches_density_matrix_moments_with_size() {
    let tol = MfTolerances::default();
    let gap = |n: u32| {
        let p = ModelParams::reference(0.9, n);
        let sub = SpinSubspace::top(n);
        let (_, dm) = steady_state(&p, sub, &SteadyOptions::default()).unwrap();
        let mf = subspace_moments_mf2(&p, sub, &tol).unwrap();
        (mf.sz2_mean - dm.sz2_mean).abs() / dm.sz2_mean
    };
    // the closure error falls off slowly; only the trend is a property
    let gaps = [gap(4), gap(8), gap(12)];
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "⟨S_z²⟩ gaps {gaps:?} at N = 4, 8, 12");
}

#[test]
fn mf2_reproduces_mf1_photon_number_at_large_n() {
    let n = 10_000;
    let p = ModelParams::reference(0.9, n);
    let tol = MfTolerances::default();
    for target in [0.2, 0.6, 1.0] {
        let two_s = (target * n as f64).round() as u32;
        let sub = SpinSubspace::new(two_s, n).unwrap();
        let one = subspace_steady_mf1(&p, sub, &tol).unwrap().state.a_mean.norm_sqr();
        let two = subspace_moments_mf2(&p, sub, &tol).unwrap().photon_mean;
        if one > 1.0 {
            assert!((one - two).abs() <= 1e-2 * one, "S̃ = {target}: MF1 {one}, MF2 {two}");
        } else {
            // normal phase: both stay at the vacuum-fluctuation level
            assert!(two < 1.0, "S̃ = {target}: MF2 {two}");
        }
    }
}

#[test]
fn unperturbed_mf1_steady_test_matches_the_window_criterion() {
    // the polished fixed point must not move when integrated further
    let p = ModelParams::reference(1.8, 400);
    let sub = SpinSubspace::top(400);
    let tol = MfTolerances::default();
    let st = subspace_steady_mf1(&p, sub, &tol).unwrap();
    let again = integrate_to_steady(st.state, &p, &PerturbationSpec::NONE, &tol).unwrap();
    let scale = 200.0;
    assert!((again.state.sz - st.state.sz).abs() <= 1e-7 * scale);
    assert!((again.state.sx - st.state.sx).abs() <= 1e-7 * scale);
    let s_c = 0.3125 / (1.8 * 1.8);
    assert!((st.state.sz + scale * s_c).abs() <= 1e-6 * scale);
}
