//! Adaptive Dormand–Prince 5(4) integrator over flat `f64` state vectors.

/// Right-hand side dy/dt = f(t, y).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Hook run on every accepted step (e.g. re-Hermitization).
    fn project(&self, _y: &mut [f64]) {}
}

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    /// Absolute tolerance, one entry per component.
    pub atol: Vec<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    h: f64,
    k: Vec<Vec<f64>>,
    fsal_valid: bool,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Reached,
    StepLimit,
    NonFinite,
    StepUnderflow,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol: vec![atol; dim],
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
            h: 0.0,
            k: vec![vec![0.0; dim]; 7],
            fsal_valid: false,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Current step size suggestion.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Advance `y` from `t` to `t_end`; the step size persists between calls.
    pub fn integrate<S: OdeSystem>(
        &mut self,
        sys: &S,
        t: &mut f64,
        y: &mut [f64],
        t_end: f64,
    ) -> StepOutcome {
        let n = y.len();
        debug_assert_eq!(n, sys.dim());
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        if !self.fsal_valid {
            sys.rhs(*t, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        if self.h == 0.0 {
            self.h = self.initial_step(y);
        }
        let mut steps = 0usize;
        let mut err_prev: f64 = 1e-4;
        while *t < t_end {
            if steps >= self.max_steps {
                return StepOutcome::StepLimit;
            }
            steps += 1;
            let last = *t + self.h >= t_end;
            let h = if last { t_end - *t } else { self.h.min(self.h_max) };
            if h <= 1e-14 * t.abs().max(1.0) {
                return StepOutcome::StepUnderflow;
            }
            self.stages(sys, *t, h, y, &mut ytmp, &mut ynew);
            let mut err: f64 = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * self.k[0][i] + E3 * self.k[2][i] + E4 * self.k[3][i]
                        + E5 * self.k[4][i] + E6 * self.k[5][i] + E7 * self.k[6][i]);
                let sc = self.atol[i] + self.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                self.h *= 0.1;
                self.rejected += 1;
                if self.h < 1e-300 {
                    return StepOutcome::NonFinite;
                }
                continue;
            }
            if err <= 1.0 {
                *t = if last { t_end } else { *t + h };
                y.copy_from_slice(&ynew);
                sys.project(y);
                sys.rhs(*t, y, &mut self.k[0]);
                self.accepted += 1;
                // PI controller
                let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
                let fac = fac.clamp(0.2, 5.0);
                err_prev = err.max(1e-4);
                if !last {
                    self.h = h * fac;
                }
            } else {
                self.rejected += 1;
                self.h = h * (0.9 * err.powf(-0.2)).max(0.2);
            }
        }
        StepOutcome::Reached
    }

    fn initial_step(&self, y: &[f64]) -> f64 {
        let d0 = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-5);
        let d1 = self.k[0].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-5);
        (0.01 * d0 / d1).clamp(1e-6, 1e-1)
    }

    fn stages<S: OdeSystem>(
        &mut self,
        sys: &S,
        t: f64,
        h: f64,
        y: &[f64],
        ytmp: &mut [f64],
        ynew: &mut [f64],
    ) {
        let n = y.len();
        let (k0, rest) = self.k.split_at_mut(1);
        let k1 = &k0[0];
        let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, ytmp, k6);
        for i in 0..n {
            ynew[i] = y[i]
                + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        sys.rhs(t + h, ynew, k7);
        // k7 becomes k1 of the next step only if accepted; the caller recomputes
        // k1 after projection, so k7 is used for the error estimate alone
    }
}
