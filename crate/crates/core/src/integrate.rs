//! Explicit Runge–Kutta drivers shared by the density-matrix and hierarchy
//! solvers, plus steady-state detection.
//!
//! Every state type exposes its degrees of freedom as one flat complex slice
//! through [`OdeState`], so the same stepping code serves both solver
//! families.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// A state vector the integrators can advance.
pub trait OdeState: Clone {
    fn values(&self) -> &[C64];
    fn values_mut(&mut self) -> &mut [C64];
    /// Quantities watched by the steady-state detector.
    fn tracked(&self) -> Vec<C64>;
}

impl OdeState for Vec<C64> {
    fn values(&self) -> &[C64] {
        self
    }
    fn values_mut(&mut self) -> &mut [C64] {
        self
    }
    fn tracked(&self) -> Vec<C64> {
        self.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    FixedRk4 { dt: f64 },
    /// Dormand–Prince 5(4) with per-component error control.
    AdaptiveRk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub method: Method,
    /// Hard limit on the integration time.
    pub t_max: f64,
}

impl StepControl {
    pub fn rk4(dt: f64, t_max: f64) -> Self {
        StepControl {
            method: Method::FixedRk4 { dt },
            t_max,
        }
    }

    pub fn rk45(rtol: f64, atol: f64, t_max: f64) -> Self {
        StepControl {
            method: Method::AdaptiveRk45 { rtol, atol },
            t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::FixedRk4 { dt } => dt > 0.0 && dt.is_finite(),
            Method::AdaptiveRk45 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if !ok || !(self.t_max > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid step control {self:?}")));
        }
        Ok(())
    }
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::rk4(1e-3, 200.0)
    }
}

/// Steady state is declared once the largest change of any tracked quantity
/// over one `window`, relative to the largest tracked magnitude, falls below
/// `rel_tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyCriterion {
    pub window: f64,
    pub rel_tol: f64,
}

impl Default for SteadyCriterion {
    fn default() -> Self {
        SteadyCriterion {
            window: 1.0,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState<S> {
    pub state: S,
    pub t_steady: f64,
    /// Relative change measured over the final window.
    pub residual: f64,
}

// Dormand–Prince tableau.
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
// b − b̂ (fifth minus fourth order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// out = y + h Σ cᵢ kᵢ
fn combine<S: OdeState>(out: &mut S, y: &S, h: f64, terms: &[(f64, &S)]) {
    let o = out.values_mut();
    o.copy_from_slice(y.values());
    for &(c, k) in terms {
        if c == 0.0 {
            continue;
        }
        let hc = h * c;
        for (oi, ki) in o.iter_mut().zip(k.values()) {
            *oi += ki * hc;
        }
    }
}

fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Stateful stepper holding scratch buffers and, for the adaptive method,
/// the current step-size estimate.
pub struct Integrator<S: OdeState> {
    control: StepControl,
    k: [S; 7],
    tmp: S,
    fsal_valid: bool,
    h: Option<f64>,
    /// Total accepted steps.
    pub steps: usize,
    /// Total right-hand-side evaluations.
    pub evaluations: usize,
}

impl<S: OdeState> Integrator<S> {
    pub fn new(template: &S, control: StepControl) -> Result<Self> {
        control.validate()?;
        let z = template.clone();
        Ok(Integrator {
            control,
            k: [
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
                z.clone(),
            ],
            tmp: z,
            fsal_valid: false,
            h: None,
            steps: 0,
            evaluations: 0,
        })
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    /// Advances `state` from `*t` to exactly `t_target`.
    pub fn advance<F>(&mut self, state: &mut S, t: &mut f64, t_target: f64, rhs: &mut F) -> Result<()>
    where
        F: FnMut(f64, &S, &mut S),
    {
        match self.control.method {
            Method::FixedRk4 { dt } => self.advance_rk4(state, t, t_target, dt, rhs),
            Method::AdaptiveRk45 { rtol, atol } => self.advance_rk45(state, t, t_target, rtol, atol, rhs),
        }
    }

    fn advance_rk4<F>(&mut self, y: &mut S, t: &mut f64, t_target: f64, dt: f64, rhs: &mut F) -> Result<()>
    where
        F: FnMut(f64, &S, &mut S),
    {
        while *t < t_target {
            let remaining = t_target - *t;
            // Absorb round-off sized remainders into the previous step.
            let h = if remaining < dt * (1.0 + 1e-9) { remaining } else { dt };
            let [k1, k2, k3, k4, ..] = &mut self.k;
            rhs(*t, y, k1);
            combine(&mut self.tmp, y, 0.5 * h, &[(1.0, k1)]);
            rhs(*t + 0.5 * h, &self.tmp, k2);
            combine(&mut self.tmp, y, 0.5 * h, &[(1.0, k2)]);
            rhs(*t + 0.5 * h, &self.tmp, k3);
            combine(&mut self.tmp, y, h, &[(1.0, k3)]);
            rhs(*t + h, &self.tmp, k4);
            let h6 = h / 6.0;
            {
                let yv = y.values_mut();
                let (k1, k2, k3, k4) = (k1.values(), k2.values(), k3.values(), k4.values());
                for i in 0..yv.len() {
                    yv[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * h6;
                }
            }
            self.evaluations += 4;
            self.steps += 1;
            if h == remaining {
                *t = t_target;
            } else {
                *t += h;
            }
            if !all_finite(y.values()) {
                return Err(Error::Integration {
                    t: *t,
                    reason: "non-finite value in state".into(),
                });
            }
        }
        Ok(())
    }

    fn advance_rk45<F>(
        &mut self,
        y: &mut S,
        t: &mut f64,
        t_target: f64,
        rtol: f64,
        atol: f64,
        rhs: &mut F,
    ) -> Result<()>
    where
        F: FnMut(f64, &S, &mut S),
    {
        if *t >= t_target {
            return Ok(());
        }
        if !self.fsal_valid {
            rhs(*t, y, &mut self.k[0]);
            self.evaluations += 1;
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => initial_step(y.values(), self.k[0].values(), rtol, atol),
        };
        loop {
            let remaining = t_target - *t;
            if remaining <= 0.0 {
                return Ok(());
            }
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t: *t,
                    reason: format!("step size underflow (h = {hs:.3e})"),
                });
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let tmp = &mut self.tmp;
            combine(tmp, y, hs, &[(A21, k1)]);
            rhs(*t + C2 * hs, tmp, k2);
            combine(tmp, y, hs, &[(A31, k1), (A32, k2)]);
            rhs(*t + C3 * hs, tmp, k3);
            combine(tmp, y, hs, &[(A41, k1), (A42, k2), (A43, k3)]);
            rhs(*t + C4 * hs, tmp, k4);
            combine(tmp, y, hs, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            rhs(*t + C5 * hs, tmp, k5);
            combine(tmp, y, hs, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
            rhs(*t + hs, tmp, k6);
            // tmp now holds the fifth-order solution.
            combine(tmp, y, hs, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
            rhs(*t + hs, tmp, k7);
            self.evaluations += 6;

            let mut acc = 0.0;
            let yv = y.values();
            let yn = tmp.values();
            let (e1, e3, e4, e5, e6, e7) = (
                k1.values(),
                k3.values(),
                k4.values(),
                k5.values(),
                k6.values(),
                k7.values(),
            );
            for i in 0..yv.len() {
                let err = (e1[i] * E1 + e3[i] * E3 + e4[i] * E4 + e5[i] * E5 + e6[i] * E6 + e7[i] * E7) * hs;
                let scale_re = atol + rtol * yv[i].re.abs().max(yn[i].re.abs());
                let scale_im = atol + rtol * yv[i].im.abs().max(yn[i].im.abs());
                acc += (err.re / scale_re).powi(2) + (err.im / scale_im).powi(2);
            }
            let err_norm = (acc / (2 * yv.len().max(1)) as f64).sqrt();
            if !err_norm.is_finite() {
                // Treat as a rejected step with aggressive shrink.
                h = hs * 0.1;
                continue;
            }
            if err_norm <= 1.0 {
                y.values_mut().copy_from_slice(tmp.values());
                std::mem::swap(k1, k7);
                if last {
                    *t = t_target;
                } else {
                    *t += hs;
                }
                self.steps += 1;
                if !all_finite(y.values()) {
                    return Err(Error::Integration {
                        t: *t,
                        reason: "non-finite value in state".into(),
                    });
                }
                let factor = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                // A truncated final step says nothing about the natural step.
                if !last || factor < 1.0 {
                    h = hs * factor;
                }
                self.h = Some(h);
                if last {
                    return Ok(());
                }
            } else {
                h = hs * (0.9 * err_norm.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
    }
}

fn initial_step(y: &[C64], f: &[C64], rtol: f64, atol: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(f) {
        let sc = atol + rtol * yi.norm();
        d0 = d0.max(yi.norm() / sc);
        d1 = d1.max(fi.norm() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(1e-8, 0.1)
}

/// Integrates from `t_start` and returns `observe(state)` at each of the
/// (non-decreasing) `times`, together with the state at the last time.
pub fn evolve_sampled<S, F, O, T>(
    initial: &S,
    t_start: f64,
    times: &[f64],
    mut rhs: F,
    control: &StepControl,
    mut observe: O,
) -> Result<(Vec<T>, S)>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
    O: FnMut(f64, &S) -> T,
{
    let mut integrator = Integrator::new(initial, *control)?;
    let mut state = initial.clone();
    let mut t = t_start;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::InvalidArgument(format!(
                "record times must be non-decreasing and >= {t_start}"
            )));
        }
        if target - t_start > control.t_max {
            return Err(Error::Integration {
                t,
                reason: format!("requested time {target} exceeds t_max"),
            });
        }
        integrator.advance(&mut state, &mut t, target, &mut rhs)?;
        out.push(observe(t, &state));
    }
    Ok((out, state))
}

/// Integrates from `t_start` to `t_end` and returns the final state.
pub fn evolve<S, F>(initial: &S, t_start: f64, t_end: f64, rhs: F, control: &StepControl) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let (_, state) = evolve_sampled(initial, t_start, &[t_end], rhs, control, |_, _| ())?;
    Ok(state)
}

fn relative_change(old: &[C64], new: &[C64]) -> f64 {
    let scale = new.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = old.iter().zip(new).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

/// Evolves an autonomous system until the [`SteadyCriterion`] holds.
pub fn evolve_to_steady<S, F>(
    initial: &S,
    mut rhs: F,
    criterion: &SteadyCriterion,
    control: &StepControl,
) -> Result<SteadyState<S>>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    if !(criterion.window > 0.0) || !(criterion.rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid steady criterion {criterion:?}"
        )));
    }
    let mut state = initial.clone();
    let mut deriv = initial.clone();
    rhs(0.0, &state, &mut deriv);
    if deriv.values().iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(SteadyState {
            state,
            t_steady: 0.0,
            residual: 0.0,
        });
    }
    let mut integrator = Integrator::new(initial, *control)?;
    let mut t = 0.0;
    let mut previous = state.tracked();
    let mut residual = f64::INFINITY;
    while t + criterion.window <= control.t_max * (1.0 + 1e-12) {
        let target = t + criterion.window;
        integrator.advance(&mut state, &mut t, target, &mut rhs)?;
        let current = state.tracked();
        residual = relative_change(&previous, &current);
        if residual < criterion.rel_tol {
            return Ok(SteadyState {
                state,
                t_steady: t,
                residual,
            });
        }
        previous = current;
    }
    Err(Error::SteadyState {
        t_max: control.t_max,
        residual,
    })
}
