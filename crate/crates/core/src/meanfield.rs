//! First- and second-order cumulant mean-field dynamics.
//!
//! With g′ = g/√N, Γ̃ = (Γ_φ+Γ_↓)/2 and c = (N−1)/N the second-order closure
//! used here is
//!
//! ```text
//! d⟨S_z²⟩ = 8g′c⟨S_z⟩Re⟨aS_y⟩ − Γ_↓[2⟨S_z²⟩ − N/2 + (N−1)⟨S_z⟩]
//! d⟨S_xS_y⟩ = 2ω_0(⟨S_x²⟩−⟨S_y²⟩) − 4g′c⟨S_z⟩Re⟨aS_x⟩ + 2ig′Re⟨aS_y⟩
//!             − Γ̃(2⟨S_xS_y⟩ − i⟨S_z⟩) − i(Γ_↓/2)(⟨S_z⟩ + N/2)
//! ```
//!
//! which keeps Im⟨S_xS_y⟩ = ⟨S_z⟩/2 and conserves ⟨S²⟩ at Γ = 0.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Solve};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{ModelParams, PerturbationSpec, SpinSubspace};
use crate::ode::{Dopri5, OdeSystem, StepOutcome};
use crate::subspace::SubspaceMoments;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MF1State {
    pub a_mean: C64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MF2State {
    pub a_mean: C64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub ada: f64,
    pub aa: C64,
    pub a_sx: C64,
    pub a_sy: C64,
    pub sx2: f64,
    pub sy2: f64,
    pub sz2: f64,
    pub sxsy: C64,
}

struct Rates {
    wc: f64,
    w0: f64,
    k: f64,
    gp: f64,
    gt: f64,
    gd: f64,
    n: f64,
}

impl Rates {
    fn new(p: &ModelParams, q: &PerturbationSpec) -> Self {
        Rates {
            wc: p.omega_c,
            w0: p.omega_0,
            k: p.kappa,
            gp: p.g_prime(),
            gt: q.gamma_tilde(),
            gd: q.gamma_down(),
            n: p.n_atoms as f64,
        }
    }
}

const I: C64 = C64::new(0.0, 1.0);

/// First-order equations with ⟨aS_α⟩ → ⟨a⟩⟨S_α⟩.
pub fn mf1_rhs(s: &MF1State, params: &ModelParams, pert: &PerturbationSpec) -> MF1State {
    let r = Rates::new(params, pert);
    let a = s.a_mean;
    MF1State {
        a_mean: -(I * r.wc + 0.5 * r.k) * a - 2.0 * I * r.gp * s.sx,
        sx: -2.0 * r.w0 * s.sy - r.gt * s.sx,
        sy: 2.0 * r.w0 * s.sx - 4.0 * r.gp * a.re * s.sz - r.gt * s.sy,
        sz: 4.0 * r.gp * a.re * s.sy - r.gd * (s.sz + 0.5 * r.n),
    }
}

/// Second-order cumulant equations.
pub fn mf2_rhs(s: &MF2State, params: &ModelParams, pert: &PerturbationSpec) -> MF2State {
    let r = Rates::new(params, pert);
    let c = (r.n - 1.0) / r.n;
    let a = s.a_mean;
    let damp = I * r.wc + 0.5 * r.k + r.gt;
    // 2⟨S_xS_y⟩ − i⟨S_z⟩ = ⟨S_xS_y + S_yS_x⟩, real for a physical state
    let sym = 2.0 * s.sxsy - I * s.sz;
    MF2State {
        a_mean: -(I * r.wc + 0.5 * r.k) * a - 2.0 * I * r.gp * s.sx,
        sx: -2.0 * r.w0 * s.sy - r.gt * s.sx,
        sy: 2.0 * r.w0 * s.sx - 4.0 * r.gp * (a * s.sz).re - r.gt * s.sy,
        sz: 4.0 * r.gp * s.a_sy.re - r.gd * (s.sz + 0.5 * r.n),
        ada: -r.k * s.ada - 4.0 * r.gp * s.a_sx.im,
        aa: -(2.0 * I * r.wc + r.k) * s.aa - 4.0 * I * r.gp * s.a_sx,
        a_sx: -damp * s.a_sx - 2.0 * r.w0 * s.a_sy - 2.0 * I * r.gp * s.sx2,
        a_sy: -damp * s.a_sy - 2.0 * r.gp * s.sz * (s.aa + s.ada) + 2.0 * r.w0 * s.a_sx
            - 2.0 * I * r.gp * (s.sxsy - I * s.sz),
        sx2: -2.0 * r.w0 * sym.re - r.gt * (2.0 * s.sx2 - 0.5 * r.n),
        sy2: 2.0 * r.w0 * sym.re - 8.0 * r.gp * c * s.sz * s.a_sy.re
            - r.gt * (2.0 * s.sy2 - 0.5 * r.n),
        sz2: 8.0 * r.gp * c * s.sz * s.a_sy.re
            - r.gd * (2.0 * s.sz2 - 0.5 * r.n + (r.n - 1.0) * s.sz),
        sxsy: 2.0 * r.w0 * (s.sx2 - s.sy2) - 4.0 * r.gp * c * s.sz * s.a_sx.re
            + 2.0 * I * r.gp * s.a_sy.re
            - r.gt * sym
            - I * (0.5 * r.gd) * (s.sz + 0.5 * r.n),
    }
}

/// MF2 moments of |S, M=−S⟩ ⊗ |0⟩.
pub fn init_dicke_state(sub: SpinSubspace) -> MF2State {
    let s = sub.spin();
    MF2State {
        a_mean: C64::new(0.0, 0.0),
        sx: 0.0,
        sy: 0.0,
        sz: -s,
        ada: 0.0,
        aa: C64::new(0.0, 0.0),
        a_sx: C64::new(0.0, 0.0),
        a_sy: C64::new(0.0, 0.0),
        sx2: 0.5 * s,
        sy2: 0.5 * s,
        sz2: s * s,
        sxsy: C64::new(0.0, -0.5 * s),
    }
}

/// Relative tilt of the MF1 seed away from the Z₂-symmetric point.
pub const MF1_SEED: f64 = 1e-3;

/// MF1 start: spin of length S tilted by the seed, photon at its adiabatic amplitude.
pub fn init_mf1(sub: SpinSubspace, params: &ModelParams) -> MF1State {
    let s = sub.spin();
    let sx = MF1_SEED * s;
    let a = -2.0 * I * params.g_prime() * sx / (I * params.omega_c + 0.5 * params.kappa);
    MF1State { a_mean: a, sx, sy: 0.0, sz: -(s * s - sx * sx).max(0.0).sqrt() }
}

/// State layout shared by both closures.
pub trait MfState: Copy {
    const LEN: usize;
    fn to_vec(&self, out: &mut [f64]);
    fn from_vec(v: &[f64]) -> Self;
    fn rhs(&self, params: &ModelParams, pert: &PerturbationSpec) -> Self;
    /// Natural magnitude of each component, used as the absolute floor of
    /// the steady-state test.
    fn scales(n_atoms: f64) -> Vec<f64>;
    /// Quantity conserved by the unperturbed flow, if the state supports a
    /// fixed-point polish.
    fn invariant(&self) -> Option<f64> {
        None
    }
}

impl MfState for MF1State {
    const LEN: usize = 5;
    fn to_vec(&self, o: &mut [f64]) {
        o.copy_from_slice(&[self.a_mean.re, self.a_mean.im, self.sx, self.sy, self.sz]);
    }
    fn from_vec(v: &[f64]) -> Self {
        MF1State { a_mean: C64::new(v[0], v[1]), sx: v[2], sy: v[3], sz: v[4] }
    }
    fn rhs(&self, p: &ModelParams, q: &PerturbationSpec) -> Self {
        mf1_rhs(self, p, q)
    }
    fn scales(n: f64) -> Vec<f64> {
        let a = n.sqrt();
        vec![a, a, 0.5 * n, 0.5 * n, 0.5 * n]
    }
    fn invariant(&self) -> Option<f64> {
        Some(self.sx * self.sx + self.sy * self.sy + self.sz * self.sz)
    }
}

impl MfState for MF2State {
    const LEN: usize = 17;
    fn to_vec(&self, o: &mut [f64]) {
        o.copy_from_slice(&[
            self.a_mean.re, self.a_mean.im, self.sx, self.sy, self.sz, self.ada, self.aa.re,
            self.aa.im, self.a_sx.re, self.a_sx.im, self.a_sy.re, self.a_sy.im, self.sx2,
            self.sy2, self.sz2, self.sxsy.re, self.sxsy.im,
        ]);
    }
    fn from_vec(v: &[f64]) -> Self {
        MF2State {
            a_mean: C64::new(v[0], v[1]),
            sx: v[2],
            sy: v[3],
            sz: v[4],
            ada: v[5],
            aa: C64::new(v[6], v[7]),
            a_sx: C64::new(v[8], v[9]),
            a_sy: C64::new(v[10], v[11]),
            sx2: v[12],
            sy2: v[13],
            sz2: v[14],
            sxsy: C64::new(v[15], v[16]),
        }
    }
    fn rhs(&self, p: &ModelParams, q: &PerturbationSpec) -> Self {
        mf2_rhs(self, p, q)
    }
    fn scales(n: f64) -> Vec<f64> {
        let a = n.sqrt();
        let h = 0.5 * n;
        let q = 0.25 * n * n;
        vec![a, a, h, h, h, n, n, n, a * h, a * h, a * h, a * h, q, q, q, q, q]
    }
}

struct MfSystem<'a, S> {
    params: &'a ModelParams,
    pert: &'a PerturbationSpec,
    _s: std::marker::PhantomData<S>,
}

impl<S: MfState> OdeSystem for MfSystem<'_, S> {
    fn dim(&self) -> usize {
        S::LEN
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        S::from_vec(y).rhs(self.params, self.pert).to_vec(dy);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfTolerances {
    /// Per-step relative tolerance of the integrator.
    pub rtol: f64,
    /// Steady-state window, in units of 1/κ.
    pub window: f64,
    /// Maximum relative change over one window at steady state.
    pub tol_ss: f64,
    /// Integration horizon, in units of 1/κ.
    pub t_max: f64,
}

impl Default for MfTolerances {
    fn default() -> Self {
        MfTolerances { rtol: 1e-10, window: 50.0, tol_ss: 1e-8, t_max: 1e8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfSteady<S> {
    pub state: S,
    /// Model time at which the window test passed.
    pub time: f64,
    /// Relative change over the last window.
    pub change: f64,
}

/// Components whose steady value is zero carry integrator noise; their
/// change is measured against this fraction of the component's natural size.
const STEADY_FLOOR: f64 = 1e-3;

/// Largest polish step, in natural units; the mirror and inverted fixed
/// points sit O(1) away.
const POLISH_REACH: f64 = 0.5;
const POLISH_EVERY: usize = 8;

fn relative_change(y: &[f64], prev: &[f64], scales: &[f64]) -> f64 {
    y.iter()
        .zip(prev)
        .zip(scales)
        .map(|((a, b), s)| (a - b).abs() / (a.abs() + STEADY_FLOOR * s))
        .fold(0.0, f64::max)
}

fn rhs_scaled<S: MfState>(sys: &MfSystem<S>, x: &[f64], scales: &[f64]) -> Vec<f64> {
    let y: Vec<f64> = x.iter().zip(scales).map(|(a, s)| a * s).collect();
    let mut dy = vec![0.0; S::LEN];
    sys.rhs(0.0, &y, &mut dy);
    dy.iter().zip(scales).map(|(d, s)| d / s).collect()
}

fn jacobian<S: MfState>(sys: &MfSystem<S>, x: &[f64], scales: &[f64]) -> Array2<f64> {
    let n = S::LEN;
    let mut j = Array2::zeros((n, n));
    let h = 1e-7;
    for c in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let (fp, fm) = (rhs_scaled(sys, &xp, scales), rhs_scaled(sys, &xm, scales));
        for r in 0..n {
            j[[r, c]] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Levenberg–Marquardt on the stationarity equations in scaled variables,
/// started from the trajectory. The unperturbed flow conserves an invariant,
/// so its fixed points come in a family; the invariant is pinned to the
/// trajectory's value to select the member the flow actually approaches.
/// Returns the fixed point and its scaled distance from `y`, or `None`
/// unless it is within reach and no direction grows.
fn polish<S: MfState>(sys: &MfSystem<S>, y: &[f64], scales: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = S::LEN;
    let conserved = sys.pert.gamma_down() == 0.0 && sys.pert.gamma_tilde() == 0.0;
    let inv = |x: &[f64]| -> Option<f64> {
        let y: Vec<f64> = x.iter().zip(scales).map(|(a, s)| a * s).collect();
        S::from_vec(&y).invariant()
    };
    let x0: Vec<f64> = y.iter().zip(scales).map(|(a, s)| a / s).collect();
    let target = inv(&x0)?;
    // the invariant is quadratic in spin moments; the last component is one
    let inv_scale = scales[n - 1] * scales[n - 1];
    let mut x = x0.clone();
    let residual = |x: &[f64]| -> Vec<f64> {
        let mut f = rhs_scaled(sys, x, scales);
        if conserved {
            f.push((inv(x).unwrap_or(target) - target) / inv_scale);
        }
        f
    };
    let mut f = residual(&x);
    let norm = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>();
    let mut mu = 1e-6;
    for _ in 0..50 {
        let mut jac = jacobian(sys, &x, scales);
        if conserved {
            let mut row = Array2::zeros((1, n));
            for c in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += 1e-7;
                xm[c] -= 1e-7;
                row[[0, c]] = (inv(&xp)? - inv(&xm)?) / (2e-7 * inv_scale);
            }
            jac = ndarray::concatenate![ndarray::Axis(0), jac, row];
        }
        let jt = jac.t();
        let mut a = jt.dot(&jac);
        let b = -jt.dot(&Array1::from(f.clone()));
        for d in 0..n {
            a[[d, d]] += mu * (1.0 + a[[d, d]]);
        }
        let step = a.solve_into(b).ok()?;
        let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        let fn_ = residual(&xn);
        if norm(&fn_) < norm(&f) {
            x = xn;
            f = fn_;
            mu = (mu * 0.1).max(1e-12);
            if norm(&f).sqrt() < 1e-14 {
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e6 {
                break;
            }
        }
    }
    let dist = x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if norm(&f).sqrt() > 1e-10 || dist > POLISH_REACH {
        return None;
    }
    // the conserved direction is neutral; anything clearly above it grows
    let lam = jacobian(sys, &x, scales).eig().ok()?.0;
    let rate_scale = sys.params.kappa.max(sys.params.omega_c).max(sys.params.omega_0);
    if lam.iter().any(|l| l.re > 1e-6 * rate_scale) {
        return None;
    }
    Some((x.iter().zip(scales).map(|(a, s)| a * s).collect(), dist))
}

/// Integrate until the relative change of every moment over one window
/// falls below `tol.tol_ss`.
///
/// A trajectory that is still moving at `t_max` is reported as a limit cycle
/// when its last windows neither grow nor settle.
pub fn integrate_to_steady<S: MfState>(
    init: S,
    params: &ModelParams,
    pert: &PerturbationSpec,
    tol: &MfTolerances,
) -> Result<MfSteady<S>> {
    params.validate()?;
    let sys = MfSystem::<S> { params, pert, _s: std::marker::PhantomData };
    let scales = S::scales(params.n_atoms as f64);
    let mut y = vec![0.0; S::LEN];
    init.to_vec(&mut y);
    let mut prev = y.clone();
    let mut ode = Dopri5::new(S::LEN, tol.rtol, 0.0);
    // an absolute floor far below each moment's natural size; a uniform
    // tiny floor stalls the step size on components that sit at zero
    ode.atol = scales.iter().map(|s| 1e-3 * tol.rtol * s).collect();
    let window = tol.window / params.kappa;
    let t_max = tol.t_max / params.kappa;
    let mut t = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let mut next_polish = 0;
    let mut last_fixed: Option<(Vec<f64>, f64)> = None;
    let bound = 1e6 * params.n_atoms as f64;
    while t < t_max {
        let target = t + window;
        let out = ode.integrate(&sys, &mut t, &mut y, target);
        if out == StepOutcome::NonFinite || y.iter().any(|v| !v.is_finite() || v.abs() > bound) {
            return Err(Error::Diverged { time: t });
        }
        if out != StepOutcome::Reached {
            return Err(Error::Diverged { time: t });
        }
        let change = relative_change(&y, &prev, &scales);
        if change <= tol.tol_ss {
            return Ok(MfSteady { state: S::from_vec(&y), time: t, change });
        }
        // a slowly spiralling trajectory is handed to Newton now and then;
        // two successive polishes must land on the same stable point while
        // the trajectory closes in, and the point must pass the window test
        if history.len() >= next_polish {
            next_polish = history.len() + POLISH_EVERY;
            let found = polish(&sys, &y, &scales);
            let agreed = match (&found, &last_fixed) {
                (Some((x, d)), Some((xl, dl))) => d < dl && relative_change(x, xl, &scales) <= tol.tol_ss,
                _ => false,
            };
            if agreed {
                let fixed = found.as_ref().unwrap().0.clone();
                let mut tp = t;
                let mut yp = fixed.clone();
                // fresh integrator: the running one caches f(y) of the trajectory
                let mut check = Dopri5::new(S::LEN, tol.rtol, 0.0);
                check.atol = ode.atol.clone();
                let out = check.integrate(&sys, &mut tp, &mut yp, t + window);
                let c = relative_change(&yp, &fixed, &scales);
                if out == StepOutcome::Reached && c <= tol.tol_ss {
                    return Ok(MfSteady { state: S::from_vec(&yp), time: tp, change: c });
                }
            }
            last_fixed = found;
        }
        history.push(change);
        prev.copy_from_slice(&y);
    }
    let tail = &history[history.len().saturating_sub(20)..];
    let amplitude = tail.iter().cloned().fold(0.0, f64::max);
    Err(Error::LimitCycle { amplitude })
}

/// |⟨S⃗⟩| / (N/2) of an MF1 state.
pub fn total_spin_mf1(s: &MF1State, n_atoms: u32) -> f64 {
    (s.sx * s.sx + s.sy * s.sy + s.sz * s.sz).sqrt() / (0.5 * n_atoms as f64)
}

/// S̃ from the Casimir: S(S+1) = ⟨S_x²⟩+⟨S_y²⟩+⟨S_z²⟩.
pub fn total_spin_mf2(s: &MF2State, n_atoms: u32) -> f64 {
    let c = (s.sx2 + s.sy2 + s.sz2).max(0.0);
    0.5 * ((1.0 + 4.0 * c).sqrt() - 1.0) / (0.5 * n_atoms as f64)
}

/// ⟨S²⟩ of an MF2 state.
pub fn casimir_mf2(s: &MF2State) -> f64 {
    s.sx2 + s.sy2 + s.sz2
}

/// Unperturbed MF2 steady moments of one subspace, projected onto moments a
/// spin-S state can have.
///
/// Besides ⟨S_z⟩² ≤ ⟨S_z²⟩ ≤ S², integer spacing of M gives
/// ⟨(S ± S_z)(S ± S_z − 1)⟩ ≥ 0, i.e. ⟨S_z²⟩ ≥ (2S−1)|⟨S_z⟩| − S(S−1). The
/// closure can undershoot this near the lowest-weight state, which would turn
/// decay rates negative. S = 0 and S = 1/2 come out exact (⟨S_z²⟩ = 0, 1/4).
pub fn subspace_moments_mf2(
    params: &ModelParams,
    sub: SpinSubspace,
    tol: &MfTolerances,
) -> Result<SubspaceMoments> {
    let s = sub.spin();
    if sub.two_s == 0 {
        return Ok(SubspaceMoments {
            two_s: 0,
            sz_mean: 0.0,
            sz2_mean: 0.0,
            photon_mean: 0.0,
            fock_cutoff_used: 0,
            converged: true,
            residual: 0.0,
        });
    }
    let st = integrate_to_steady(init_dicke_state(sub), params, &PerturbationSpec::NONE, tol)?;
    let m = st.state;
    let sz = m.sz.clamp(-s, s);
    let sz2 = m.sz2.clamp(realizable_sz2_floor(s, sz), s * s);
    Ok(SubspaceMoments {
        two_s: sub.two_s,
        sz_mean: sz,
        sz2_mean: sz2,
        photon_mean: m.ada.max(0.0),
        fock_cutoff_used: 0,
        converged: true,
        residual: st.change,
    })
}

/// Smallest ⟨S_z²⟩ compatible with ⟨S_z⟩ = `sz` in a spin-`s` multiplet.
pub fn realizable_sz2_floor(s: f64, sz: f64) -> f64 {
    (sz * sz).max((2.0 * s - 1.0) * sz.abs() - s * (s - 1.0))
}

/// Unperturbed MF1 steady state of one subspace.
pub fn subspace_steady_mf1(
    params: &ModelParams,
    sub: SpinSubspace,
    tol: &MfTolerances,
) -> Result<MfSteady<MF1State>> {
    integrate_to_steady(init_mf1(sub, params), params, &PerturbationSpec::NONE, tol)
}

/// Perturbed MF1 steady state from the fully symmetric lowest-weight state.
pub fn global_steady_mf1(
    params: &ModelParams,
    pert: &PerturbationSpec,
    tol: &MfTolerances,
) -> Result<MfSteady<MF1State>> {
    integrate_to_steady(init_mf1(SpinSubspace::top(params.n_atoms), params), params, pert, tol)
}

/// Perturbed MF2 steady state from the fully symmetric lowest-weight state.
pub fn global_steady_mf2(
    params: &ModelParams,
    pert: &PerturbationSpec,
    tol: &MfTolerances,
) -> Result<MfSteady<MF2State>> {
    integrate_to_steady(init_dicke_state(SpinSubspace::top(params.n_atoms)), params, pert, tol)
}
