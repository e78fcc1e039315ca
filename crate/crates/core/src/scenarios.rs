//! Runners for the four standard scenarios: Dicke decay from the fully
//! excited state, normal-mode excitation of a chain, g² of a weakly or
//! moderately driven chain, and the ensemble-averaged collective shift.
//!
//! Every runner takes a [`Solver`] so the same scenario can be repeated
//! with the exact density matrix and with each hierarchy order.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64 as C64;

use crate::cumulant::{Hierarchy, HierarchyState, Order};
use crate::error::{invalid, Error, Result};
use crate::exact::{self, DensityMatrix, Lindblad};
use crate::geometry::{
    build_line_array, eigenmode_drive, ensemble_rng, plane_wave_drive, AtomArray, DetectionDirection, DriveField,
    StandingWaveTrap, TransitionKind, Vec3,
};
use crate::integrate::{evolve_sampled, evolve_to_steady, OdeState, SteadyCriterion, SteadyState, StepControl};
use crate::kernel::CouplingSet;
use crate::observables::{
    delta_gamma_c, eigenmodes, lorentzian_fit, scattering_rates, Expectations, LorentzFit, ScatterRates,
};
use crate::twotime;

/// Largest array the density-matrix solver accepts.
pub const MAX_EXACT_ATOMS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Exact,
    Mf1,
    Mf2,
    Mf3,
    /// Order one with ⟨eₙ⟩ held at zero.
    Linear,
}

impl Solver {
    pub const ALL: [Solver; 5] = [Solver::Exact, Solver::Mf1, Solver::Mf2, Solver::Mf3, Solver::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::Mf1 => "mf1",
            Solver::Mf2 => "mf2",
            Solver::Mf3 => "mf3",
            Solver::Linear => "linear",
        }
    }

    /// Truncation order, `None` for the exact solver.
    pub fn order(self) -> Option<Order> {
        match self {
            Solver::Exact => None,
            Solver::Mf1 | Solver::Linear => Some(Order::One),
            Solver::Mf2 => Some(Order::Two),
            Solver::Mf3 => Some(Order::Three),
        }
    }

    pub fn check_atoms(self, n: usize) -> Result<()> {
        if self == Solver::Exact && n > MAX_EXACT_ATOMS {
            return invalid(format!(
                "the exact solver handles at most {MAX_EXACT_ATOMS} atoms, got {n}"
            ));
        }
        Ok(())
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown solver '{s}' (expected exact, mf1, mf2, mf3 or linear)"
            ))
        })
    }
}

/// A state from either solver family.
#[derive(Debug, Clone)]
pub enum Solution {
    Exact(DensityMatrix),
    Hierarchy(HierarchyState),
}

impl Expectations for Solution {
    fn n_atoms(&self) -> usize {
        match self {
            Solution::Exact(r) => r.n_atoms(),
            Solution::Hierarchy(s) => s.n_atoms(),
        }
    }

    fn one(&self, n: usize, j: i8) -> C64 {
        match self {
            Solution::Exact(r) => r.one(n, j),
            Solution::Hierarchy(s) => s.one(n, j),
        }
    }

    fn two(&self, a: usize, ja: i8, b: usize, jb: i8) -> C64 {
        match self {
            Solution::Exact(r) => r.two(a, ja, b, jb),
            Solution::Hierarchy(s) => s.two(a, ja, b, jb),
        }
    }
}

/// Equations of motion for one solver, array and drive.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Exact(Lindblad),
    Hierarchy(Hierarchy),
}

fn mismatch() -> Error {
    Error::InvalidArgument("state does not belong to this solver".into())
}

impl Model {
    pub fn new(solver: Solver, couplings: &CouplingSet, drive: &DriveField) -> Result<Self> {
        solver.check_atoms(couplings.n_atoms())?;
        Ok(match solver {
            Solver::Exact => Model::Exact(Lindblad::new(couplings, drive)?),
            Solver::Linear => Model::Hierarchy(Hierarchy::linear(couplings, drive)?),
            _ => Model::Hierarchy(Hierarchy::new(
                couplings,
                drive,
                solver.order().expect("hierarchy solver"),
            )?),
        })
    }

    pub fn n_atoms(&self) -> usize {
        match self {
            Model::Exact(l) => l.n_atoms(),
            Model::Hierarchy(h) => h.n_atoms(),
        }
    }

    pub fn ground(&self) -> Result<Solution> {
        Ok(match self {
            Model::Exact(l) => Solution::Exact(DensityMatrix::ground(l.n_atoms())?),
            Model::Hierarchy(h) => Solution::Hierarchy(h.ground_state()?),
        })
    }

    pub fn all_excited(&self) -> Result<Solution> {
        Ok(match self {
            Model::Exact(l) => Solution::Exact(DensityMatrix::all_excited(l.n_atoms())?),
            Model::Hierarchy(h) if h.is_linear() => return invalid("the linear model cannot hold excited populations"),
            Model::Hierarchy(h) => Solution::Hierarchy(HierarchyState::initial_all_excited(h.n_atoms(), h.order())?),
        })
    }

    /// Evolves `initial` until the criterion holds.
    pub fn steady(
        &mut self,
        initial: &Solution,
        criterion: &SteadyCriterion,
        control: &StepControl,
    ) -> Result<SteadyState<Solution>> {
        match (self, initial) {
            (Model::Exact(l), Solution::Exact(r)) => {
                let s = evolve_to_steady(r, |_, x, o| l.apply(x, o), criterion, control)?;
                Ok(SteadyState {
                    state: Solution::Exact(s.state),
                    t_steady: s.t_steady,
                    residual: s.residual,
                })
            }
            (Model::Hierarchy(h), Solution::Hierarchy(x0)) => {
                h.check_state(x0)?;
                let s = evolve_to_steady(x0, |_, x, o| h.apply(x, o), criterion, control)?;
                Ok(SteadyState {
                    state: Solution::Hierarchy(s.state),
                    t_steady: s.t_steady,
                    residual: s.residual,
                })
            }
            _ => Err(mismatch()),
        }
    }

    /// Evolves `initial` from t = 0 and applies `observe` at every time in
    /// `times` (non-decreasing).
    pub fn sample<T, O>(
        &mut self,
        initial: &Solution,
        times: &[f64],
        control: &StepControl,
        mut observe: O,
    ) -> Result<Vec<T>>
    where
        O: FnMut(f64, &dyn Expectations) -> Result<T>,
    {
        let vals = match (self, initial) {
            (Model::Exact(l), Solution::Exact(r)) => {
                evolve_sampled(r, 0.0, times, |_, x, o| l.apply(x, o), control, |t, x| observe(t, x))?.0
            }
            (Model::Hierarchy(h), Solution::Hierarchy(x0)) => {
                h.check_state(x0)?;
                evolve_sampled(x0, 0.0, times, |_, x, o| h.apply(x, o), control, |t, x| observe(t, x))?.0
            }
            _ => return Err(mismatch()),
        };
        vals.into_iter().collect()
    }
}

/// Runs `f(0..count)` on up to `workers` threads and returns the results in
/// index order.
pub fn par_map<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|v| v.expect("every index visited"))
        .collect()
}

// ---------------------------------------------------------------- Dicke

/// Undriven chain along ẑ starting with every atom excited.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeParams {
    pub n_atoms: usize,
    pub spacing: f64,
    pub transition: TransitionKind,
}

impl Default for DickeParams {
    fn default() -> Self {
        DickeParams {
            n_atoms: 8,
            spacing: 0.1,
            transition: TransitionKind::DeltaMpm1,
        }
    }
}

impl DickeParams {
    pub fn array(&self) -> Result<AtomArray> {
        build_line_array(self.n_atoms, self.spacing, Vec3::z(), self.transition)
    }
}

/// Total photon scattering rate γ(t) on `times`.
pub fn dicke_decay(params: &DickeParams, solver: Solver, times: &[f64], control: &StepControl) -> Result<Vec<f64>> {
    let array = params.array()?;
    let couplings = CouplingSet::new(&array)?;
    let mut model = Model::new(solver, &couplings, &DriveField::zero(array.n_atoms()))?;
    let start = model.all_excited()?;
    model.sample(&start, times, control, |_, s| {
        Ok(scattering_rates(s, &couplings)?.gamma_total)
    })
}

// ---------------------------------------------------------- normal mode

/// Chain along ẑ driven with the profile of one collective mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeParams {
    pub n_atoms: usize,
    pub spacing: f64,
    pub transition: TransitionKind,
    /// Index into the modes sorted by decreasing decay rate.
    pub mode: usize,
}

impl Default for NormalModeParams {
    fn default() -> Self {
        NormalModeParams {
            n_atoms: 7,
            spacing: 0.4,
            transition: TransitionKind::DeltaMpm1,
            mode: 6,
        }
    }
}

impl NormalModeParams {
    pub fn array(&self) -> Result<AtomArray> {
        build_line_array(self.n_atoms, self.spacing, Vec3::z(), self.transition)
    }
}

/// I_in/I_s = 2Ω²/Γ².
pub fn saturation_ratio(omega: f64) -> f64 {
    2.0 * omega * omega
}

/// Ω for a given I_in/I_s.
pub fn rabi_for_saturation(ratio: f64) -> Result<f64> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return invalid(format!("saturation ratio must be finite and non-negative, got {ratio}"));
    }
    Ok((ratio / 2.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalModePoint {
    /// I_in/I_s.
    pub intensity: f64,
    pub omega: f64,
    /// Decay rate of the driven mode.
    pub mode_decay: f64,
    pub rates: ScatterRates,
    /// (γ_C^lin − γ_C)/γ_C.
    pub delta_gamma_c: f64,
    /// γ_I/γ_C.
    pub incoherent_ratio: f64,
    pub t_steady: f64,
    pub steady_residual: f64,
}

/// Steady scattering rates at each I_in/I_s in `intensities`.
pub fn normal_mode_sweep(
    params: &NormalModeParams,
    solver: Solver,
    intensities: &[f64],
    criterion: &SteadyCriterion,
    control: &StepControl,
) -> Result<Vec<NormalModePoint>> {
    let array = params.array()?;
    let couplings = CouplingSet::new(&array)?;
    solver.check_atoms(array.n_atoms())?;
    let modes = eigenmodes(&couplings)?;
    if params.mode >= modes.len() {
        return invalid(format!(
            "mode index {} out of range for {} modes",
            params.mode,
            modes.len()
        ));
    }
    let profile = &modes.modes[params.mode];
    intensities
        .iter()
        .map(|&intensity| {
            let omega = rabi_for_saturation(intensity)?;
            let drive = eigenmode_drive(&array, profile, omega)?;
            let mut model = Model::new(solver, &couplings, &drive)?;
            let steady = model.steady(&model.ground()?, criterion, control)?;
            let mut lin = Model::new(Solver::Linear, &couplings, &drive)?;
            let lin_steady = lin.steady(&lin.ground()?, criterion, control)?;
            let rates = scattering_rates(&steady.state, &couplings)?;
            Ok(NormalModePoint {
                intensity,
                omega,
                mode_decay: modes.decay_rates[params.mode],
                rates,
                delta_gamma_c: delta_gamma_c(&steady.state, &lin_steady.state, &couplings)?,
                incoherent_ratio: rates.gamma_incoherent / rates.gamma_coherent,
                t_steady: steady.t_steady,
                steady_residual: steady.residual,
            })
        })
        .collect()
}

// -------------------------------------------------------------------- g²

/// Chain along ŷ with a ΔM = 0 transition, driven by a plane wave along x̂
/// and observed in the xy-plane at angle θ from x̂.
#[derive(Debug, Clone, PartialEq)]
pub struct G2ScanParams {
    pub n_atoms: usize,
    pub spacing: f64,
    pub omega: f64,
    /// Detection angles in units of π.
    pub thetas: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Default for G2ScanParams {
    fn default() -> Self {
        G2ScanParams {
            n_atoms: 7,
            spacing: 0.4,
            omega: 0.01,
            thetas: (0..6).map(|k| 0.1 * k as f64).collect(),
            tau: vec![0.0],
        }
    }
}

impl G2ScanParams {
    pub fn array(&self) -> Result<AtomArray> {
        build_line_array(self.n_atoms, self.spacing, Vec3::y(), TransitionKind::DeltaM0)
    }

    pub fn drive(&self, array: &AtomArray) -> Result<DriveField> {
        plane_wave_drive(array, self.omega, Vec3::x(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Point {
    /// Angle in units of π.
    pub theta: f64,
    /// Steady ⟨σ̂⁺σ̂⁻⟩ along the detector.
    pub intensity: f64,
    pub g2: Vec<f64>,
    /// Range of post-detection Re⟨eₙeₘ⟩ (hierarchy solvers only).
    pub pair_population: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Scan {
    pub tau: Vec<f64>,
    pub points: Vec<G2Point>,
    pub t_steady: f64,
    pub steady_residual: f64,
}

/// One steady state, then g²(τ) for every detection angle.
pub fn g2_scan(
    params: &G2ScanParams,
    solver: Solver,
    criterion: &SteadyCriterion,
    control: &StepControl,
) -> Result<G2Scan> {
    if matches!(solver, Solver::Mf1 | Solver::Linear) {
        return invalid(format!("g² needs the exact solver or order 2 or 3, got {solver}"));
    }
    if params.thetas.is_empty() || params.tau.is_empty() {
        return invalid("g² scan needs at least one angle and one delay");
    }
    let array = params.array()?;
    let couplings = CouplingSet::new(&array)?;
    let drive = params.drive(&array)?;
    let mut model = Model::new(solver, &couplings, &drive)?;
    let steady = model.steady(&model.ground()?, criterion, control)?;
    let mut points = Vec::with_capacity(params.thetas.len());
    for &theta in &params.thetas {
        let dir = DetectionDirection::in_plane(&array, theta * std::f64::consts::PI)?;
        let point = match (&mut model, &steady.state) {
            (Model::Exact(l), Solution::Exact(rho)) => G2Point {
                theta,
                intensity: exact::detector_expectation(rho, &dir)?,
                g2: exact::g2_from_state(rho, l, &dir, &params.tau, control)?,
                pair_population: None,
            },
            (Model::Hierarchy(h), Solution::Hierarchy(s)) => {
                let curve = twotime::g2_from_state(s, h, &dir, &params.tau, control)?;
                G2Point {
                    theta,
                    intensity: curve.intensity,
                    pair_population: Some((curve.min_pair_population, curve.max_pair_population)),
                    g2: curve.g2,
                }
            }
            _ => return Err(mismatch()),
        };
        points.push(point);
    }
    Ok(G2Scan {
        tau: params.tau.clone(),
        points,
        t_steady: steady.t_steady,
        steady_residual: steady.residual,
    })
}

// ----------------------------------------------------- collective shift

/// Random standing-wave ensemble driven by a plane wave along the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveShiftParams {
    pub trap: StandingWaveTrap,
    pub transition: TransitionKind,
    pub omega: f64,
    /// Propagation direction of the drive.
    pub khat: Vec3,
    /// Scanned in the order given; each point starts from the previous
    /// steady state.
    pub detunings: Vec<f64>,
    pub seed: u64,
    pub members: usize,
}

impl Default for CollectiveShiftParams {
    fn default() -> Self {
        CollectiveShiftParams {
            trap: StandingWaveTrap {
                n_sites: 200,
                fill_probability: 0.5,
                trap_wavelength_ratio: 940.0 / 780.0,
                waist: 3300.0 / 780.0,
                sigma_rho: 300.0 / 780.0,
            },
            transition: TransitionKind::DeltaMpm1,
            omega: 2.0,
            khat: Vec3::z(),
            detunings: (0..9).map(|k| -1.5 + 0.375 * k as f64).collect(),
            seed: 1,
            members: 200,
        }
    }
}

/// Detuning scan of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberScan {
    pub member: u64,
    pub n_atoms: usize,
    /// Mean ⟨eₙ⟩ over atoms at each detuning.
    pub excitation: Vec<f64>,
    pub t_steady: Vec<f64>,
}

/// Samples configuration `member` and scans the detunings.
pub fn collective_shift_member(
    params: &CollectiveShiftParams,
    member: u64,
    solver: Solver,
    criterion: &SteadyCriterion,
    control: &StepControl,
) -> Result<MemberScan> {
    if params.detunings.is_empty() {
        return invalid("detuning scan is empty");
    }
    let array = params
        .trap
        .sample(params.transition, &mut ensemble_rng(params.seed, member))?;
    let n = array.n_atoms();
    solver.check_atoms(n)?;
    let couplings = CouplingSet::new(&array)?;
    // Previous steady states with their detunings.
    let mut history: Vec<(f64, Solution)> = Vec::new();
    let mut excitation = Vec::with_capacity(params.detunings.len());
    let mut t_steady = Vec::with_capacity(params.detunings.len());
    for &delta in &params.detunings {
        let drive = plane_wave_drive(&array, params.omega, params.khat, delta)?;
        let mut model = Model::new(solver, &couplings, &drive)?;
        let start = match history.as_slice() {
            [] => model.ground()?,
            [(_, s)] => s.clone(),
            [.., (d0, s0), (d1, s1)] => extrapolate(s0, s1, (delta - d1) / (d1 - d0))?,
        };
        let steady = model.steady(&start, criterion, control)?;
        let total: f64 = (0..n).map(|a| steady.state.one(a, 0).re).sum();
        excitation.push(total / n as f64);
        t_steady.push(steady.t_steady);
        if history.len() == 2 {
            history.remove(0);
        }
        history.push((delta, steady.state));
    }
    Ok(MemberScan {
        member,
        n_atoms: n,
        excitation,
        t_steady,
    })
}

/// s1 + w (s1 − s0), the linear predictor for the next scan point.
fn extrapolate(s0: &Solution, s1: &Solution, w: f64) -> Result<Solution> {
    fn step<S: OdeState>(a: &S, b: &S, w: f64) -> S {
        let mut out = b.clone();
        for ((o, x), y) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
            *o = y + (y - x) * w;
        }
        out
    }
    match (s0, s1) {
        (Solution::Exact(a), Solution::Exact(b)) => Ok(Solution::Exact(step(a, b, w))),
        (Solution::Hierarchy(a), Solution::Hierarchy(b)) => Ok(Solution::Hierarchy(step(a, b, w))),
        _ => Err(mismatch()),
    }
}

/// Mean and standard error over the members that succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAverage {
    pub detunings: Vec<f64>,
    pub mean: Vec<f64>,
    /// Zero when fewer than two members succeeded.
    pub stderr: Vec<f64>,
    pub successes: usize,
    /// Member index and error message of each failure.
    pub failures: Vec<(u64, String)>,
}

pub fn aggregate(detunings: &[f64], runs: &[Result<MemberScan>]) -> Result<EnsembleAverage> {
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        match r {
            Ok(s) if s.excitation.len() == detunings.len() => ok.push(s),
            Ok(s) => failures.push((
                s.member,
                format!("expected {} points, got {}", detunings.len(), s.excitation.len()),
            )),
            Err(e) => failures.push((i as u64, e.to_string())),
        }
    }
    if ok.is_empty() {
        return Err(Error::Numerical(format!("all {} ensemble members failed", runs.len())));
    }
    let m = ok.len() as f64;
    let mut mean = vec![0.0; detunings.len()];
    let mut stderr = vec![0.0; detunings.len()];
    for (k, (mu, se)) in mean.iter_mut().zip(stderr.iter_mut()).enumerate() {
        *mu = ok.iter().map(|s| s.excitation[k]).sum::<f64>() / m;
        if ok.len() > 1 {
            let var = ok.iter().map(|s| (s.excitation[k] - *mu).powi(2)).sum::<f64>() / (m - 1.0);
            *se = (var / m).sqrt();
        }
    }
    Ok(EnsembleAverage {
        detunings: detunings.to_vec(),
        mean,
        stderr,
        successes: ok.len(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveShift {
    pub average: EnsembleAverage,
    pub fit: LorentzFit,
    pub members: Vec<Result<MemberScan>>,
}

/// Ensemble scan over `params.members` configurations and a Lorentzian fit
/// of the mean excitation.
pub fn collective_shift(
    params: &CollectiveShiftParams,
    solver: Solver,
    criterion: &SteadyCriterion,
    control: &StepControl,
    workers: usize,
) -> Result<CollectiveShift> {
    if params.members == 0 {
        return invalid("ensemble needs at least one member");
    }
    let members = par_map(params.members, workers, |i| {
        collective_shift_member(params, i as u64, solver, criterion, control)
    });
    let average = aggregate(&params.detunings, &members)?;
    let fit = lorentzian_fit(&average.detunings, &average.mean)?;
    Ok(CollectiveShift { average, fit, members })
}
