//! TOML run configuration.
//!
//! Every section is optional except the scenario selector; omitted values
//! fall back to the standard scenario parameters. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use dipolar::geometry::{StandingWaveTrap, TransitionKind, Vec3};
use dipolar::integrate::{SteadyCriterion, StepControl};
use dipolar::scenarios::{CollectiveShiftParams, DickeParams, G2ScanParams, NormalModeParams, Solver, MAX_EXACT_ATOMS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    CollectiveShift,
    NormalMode,
    DickeDecay,
    G2,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CollectiveShift => "collective-shift",
            ScenarioKind::NormalMode => "normal-mode",
            ScenarioKind::DickeDecay => "dicke-decay",
            ScenarioKind::G2 => "g2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverName {
    Exact,
    Mf1,
    Mf2,
    Mf3,
    Linear,
}

impl From<SolverName> for Solver {
    fn from(s: SolverName) -> Self {
        match s {
            SolverName::Exact => Solver::Exact,
            SolverName::Mf1 => Solver::Mf1,
            SolverName::Mf2 => Solver::Mf2,
            SolverName::Mf3 => Solver::Mf3,
            SolverName::Linear => Solver::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "dM0")]
    DeltaM0,
    #[serde(rename = "dMpm1")]
    DeltaMpm1,
}

impl From<Transition> for TransitionKind {
    fn from(t: Transition) -> Self {
        match t {
            Transition::DeltaM0 => TransitionKind::DeltaM0,
            Transition::DeltaMpm1 => TransitionKind::DeltaMpm1,
        }
    }
}

impl From<TransitionKind> for Transition {
    fn from(t: TransitionKind) -> Self {
        match t {
            TransitionKind::DeltaM0 => Transition::DeltaM0,
            TransitionKind::DeltaMpm1 => Transition::DeltaMpm1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Detuning,
    Intensity,
    Angle,
    ConfigurationEnsemble,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Detuning => "detuning",
            SweepAxis::Intensity => "intensity",
            SweepAxis::Angle => "angle",
            SweepAxis::ConfigurationEnsemble => "configuration-ensemble",
        }
    }

    fn scenario(self) -> ScenarioKind {
        match self {
            SweepAxis::Detuning | SweepAxis::ConfigurationEnsemble => ScenarioKind::CollectiveShift,
            SweepAxis::Intensity => ScenarioKind::NormalMode,
            SweepAxis::Angle => ScenarioKind::G2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub method: MethodName,
    pub rtol: f64,
    pub atol: f64,
    /// Fixed step for rk4.
    pub dt: f64,
    pub t_max: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            method: MethodName::Rk45,
            rtol: 1e-8,
            atol: 1e-12,
            dt: 1e-3,
            t_max: 2000.0,
        }
    }
}

impl IntegratorSection {
    pub fn control(&self) -> StepControl {
        match self.method {
            MethodName::Rk45 => StepControl::rk45(self.rtol, self.atol, self.t_max),
            MethodName::Rk4 => StepControl::rk4(self.dt, self.t_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadySection {
    pub window: f64,
    pub rel_tol: f64,
}

impl Default for SteadySection {
    fn default() -> Self {
        SteadySection {
            window: 1.0,
            rel_tol: 1e-9,
        }
    }
}

impl SteadySection {
    pub fn criterion(&self) -> SteadyCriterion {
        SteadyCriterion {
            window: self.window,
            rel_tol: self.rel_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DickeSection {
    pub n_atoms: usize,
    /// In wavelengths.
    pub spacing: f64,
    pub transition: Transition,
    pub t_end: f64,
    pub samples: usize,
}

impl Default for DickeSection {
    fn default() -> Self {
        let p = DickeParams::default();
        DickeSection {
            n_atoms: p.n_atoms,
            spacing: p.spacing,
            transition: p.transition.into(),
            t_end: 10.0,
            samples: 501,
        }
    }
}

impl DickeSection {
    pub fn params(&self) -> DickeParams {
        DickeParams {
            n_atoms: self.n_atoms,
            spacing: self.spacing,
            transition: self.transition.into(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples).map(|k| self.t_end * k as f64 / last).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalModeSection {
    pub n_atoms: usize,
    pub spacing: f64,
    pub transition: Transition,
    /// Index into the modes sorted by decreasing decay rate.
    pub mode: usize,
    /// I_in/I_s values.
    pub intensities: Vec<f64>,
}

impl Default for NormalModeSection {
    fn default() -> Self {
        let p = NormalModeParams::default();
        NormalModeSection {
            n_atoms: p.n_atoms,
            spacing: p.spacing,
            transition: p.transition.into(),
            mode: p.mode,
            intensities: vec![2.0],
        }
    }
}

impl NormalModeSection {
    pub fn params(&self) -> NormalModeParams {
        NormalModeParams {
            n_atoms: self.n_atoms,
            spacing: self.spacing,
            transition: self.transition.into(),
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Section {
    pub n_atoms: usize,
    pub spacing: f64,
    pub omega: f64,
    /// Detection angles in units of π.
    pub thetas: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Default for G2Section {
    fn default() -> Self {
        let p = G2ScanParams::default();
        G2Section {
            n_atoms: p.n_atoms,
            spacing: p.spacing,
            omega: p.omega,
            thetas: p.thetas,
            tau: p.tau,
        }
    }
}

impl G2Section {
    pub fn params(&self) -> G2ScanParams {
        G2ScanParams {
            n_atoms: self.n_atoms,
            spacing: self.spacing,
            omega: self.omega,
            thetas: self.thetas.clone(),
            tau: self.tau.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectiveShiftSection {
    pub n_sites: usize,
    pub fill_probability: f64,
    pub trap_wavelength_nm: f64,
    pub transition_wavelength_nm: f64,
    pub waist_nm: f64,
    pub sigma_rho_nm: f64,
    pub transition: Transition,
    pub omega: f64,
    /// Propagation direction of the drive.
    pub direction: Axis,
    pub detunings: Vec<f64>,
    pub members: usize,
}

impl Default for CollectiveShiftSection {
    fn default() -> Self {
        let p = CollectiveShiftParams::default();
        CollectiveShiftSection {
            n_sites: p.trap.n_sites,
            fill_probability: p.trap.fill_probability,
            trap_wavelength_nm: 940.0,
            transition_wavelength_nm: 780.0,
            waist_nm: 3300.0,
            sigma_rho_nm: 300.0,
            transition: p.transition.into(),
            omega: p.omega,
            direction: Axis::Z,
            detunings: p.detunings,
            members: p.members,
        }
    }
}

impl CollectiveShiftSection {
    pub fn params(&self, seed: u64) -> CollectiveShiftParams {
        let lambda = self.transition_wavelength_nm;
        CollectiveShiftParams {
            trap: StandingWaveTrap {
                n_sites: self.n_sites,
                fill_probability: self.fill_probability,
                trap_wavelength_ratio: self.trap_wavelength_nm / lambda,
                waist: self.waist_nm / lambda,
                sigma_rho: self.sigma_rho_nm / lambda,
            },
            transition: self.transition.into(),
            omega: self.omega,
            khat: match self.direction {
                Axis::X => Vec3::x(),
                Axis::Y => Vec3::y(),
                Axis::Z => Vec3::z(),
            },
            detunings: self.detunings.clone(),
            seed,
            members: self.members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioKind,
    pub solver: SolverName,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub steady: Option<SteadySection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dicke: Option<DickeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_mode: Option<NormalModeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<G2Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collective_shift: Option<CollectiveShiftSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn default_seed() -> u64 {
    1
}

/// Settings that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub solver: Option<SolverName>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn bad<T>(field: &str, reason: impl std::fmt::Display) -> CliResult<T> {
    Err(CliError::Config(format!("field `{field}`: {reason}")))
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(field, format!("must be positive and finite, got {v}"))
    }
}

fn finite_list(field: &str, v: &[f64]) -> CliResult<()> {
    if v.is_empty() {
        return bad(field, "must not be empty");
    }
    match v.iter().find(|x| !x.is_finite()) {
        Some(x) => bad(field, format!("contains non-finite value {x}")),
        None => Ok(()),
    }
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Config> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies overrides, fills the scenario defaults and checks every
    /// value. The result has every section of its scenario present.
    pub fn resolve(mut self, overrides: &Overrides) -> CliResult<Config> {
        if let Some(s) = overrides.solver {
            self.solver = s;
        }
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(o) = &overrides.out {
            self.output.dir = o.clone();
        }
        let present = [
            (ScenarioKind::DickeDecay, self.dicke.is_some(), "dicke"),
            (ScenarioKind::NormalMode, self.normal_mode.is_some(), "normal_mode"),
            (ScenarioKind::G2, self.g2.is_some(), "g2"),
            (
                ScenarioKind::CollectiveShift,
                self.collective_shift.is_some(),
                "collective_shift",
            ),
        ];
        for (kind, is_set, name) in present {
            if is_set && kind != self.scenario {
                return bad(
                    name,
                    format!("section does not apply to scenario {}", self.scenario.name()),
                );
            }
        }
        match self.scenario {
            ScenarioKind::DickeDecay => {
                self.dicke.get_or_insert_with(Default::default);
            }
            ScenarioKind::NormalMode => {
                self.normal_mode.get_or_insert_with(Default::default);
            }
            ScenarioKind::G2 => {
                self.g2.get_or_insert_with(Default::default);
            }
            ScenarioKind::CollectiveShift => {
                self.collective_shift.get_or_insert_with(Default::default);
            }
        }
        if self.integrator.is_none() {
            self.integrator = Some(default_integrator(self.scenario));
        }
        if self.steady.is_none() {
            self.steady = Some(default_steady(self.scenario));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn solver(&self) -> Solver {
        self.solver.into()
    }

    pub fn control(&self) -> StepControl {
        self.integrator
            .clone()
            .unwrap_or_else(|| default_integrator(self.scenario))
            .control()
    }

    pub fn criterion(&self) -> SteadyCriterion {
        self.steady
            .clone()
            .unwrap_or_else(|| default_steady(self.scenario))
            .criterion()
    }

    /// Axis to sweep: the command-line choice, else `[sweep]`, else the
    /// natural axis of the scenario.
    pub fn sweep_axis(&self, requested: Option<SweepAxis>) -> CliResult<SweepAxis> {
        let axis = match requested.or(self.sweep.as_ref().map(|s| s.axis)) {
            Some(a) => a,
            None => match self.scenario {
                ScenarioKind::CollectiveShift => SweepAxis::Detuning,
                ScenarioKind::NormalMode => SweepAxis::Intensity,
                ScenarioKind::G2 => SweepAxis::Angle,
                ScenarioKind::DickeDecay => return bad("sweep.axis", "dicke-decay has no sweep axis"),
            },
        };
        if axis.scenario() != self.scenario {
            return bad(
                "sweep.axis",
                format!("{} does not apply to scenario {}", axis.name(), self.scenario.name()),
            );
        }
        Ok(axis)
    }

    fn validate(&self) -> CliResult<()> {
        let integ = self.integrator.as_ref().expect("resolved");
        match integ.method {
            MethodName::Rk45 => {
                positive("integrator.rtol", integ.rtol)?;
                positive("integrator.atol", integ.atol)?;
            }
            MethodName::Rk4 => positive("integrator.dt", integ.dt)?,
        }
        positive("integrator.t_max", integ.t_max)?;
        let steady = self.steady.as_ref().expect("resolved");
        positive("steady.window", steady.window)?;
        positive("steady.rel_tol", steady.rel_tol)?;
        if self.output.dir.as_os_str().is_empty() {
            return bad("output.dir", "must not be empty");
        }
        if let Some(s) = &self.sweep {
            self.sweep_axis(Some(s.axis))?;
        }
        let solver = self.solver();
        match self.scenario {
            ScenarioKind::DickeDecay => {
                let d = self.dicke.as_ref().expect("resolved");
                self.atoms("dicke.n_atoms", d.n_atoms)?;
                positive("dicke.spacing", d.spacing)?;
                positive("dicke.t_end", d.t_end)?;
                if d.samples < 2 {
                    return bad("dicke.samples", "need at least 2 samples");
                }
                if d.t_end > integ.t_max {
                    return bad("dicke.t_end", format!("exceeds integrator.t_max = {}", integ.t_max));
                }
                if solver == Solver::Linear {
                    return Err(CliError::Capability(
                        "the linear model has no populations and cannot start fully excited".into(),
                    ));
                }
            }
            ScenarioKind::NormalMode => {
                let p = self.normal_mode.as_ref().expect("resolved");
                self.atoms("normal_mode.n_atoms", p.n_atoms)?;
                positive("normal_mode.spacing", p.spacing)?;
                if p.mode >= p.n_atoms {
                    return bad("normal_mode.mode", format!("must be below n_atoms = {}", p.n_atoms));
                }
                finite_list("normal_mode.intensities", &p.intensities)?;
                if let Some(x) = p.intensities.iter().find(|x| !(**x > 0.0)) {
                    return bad("normal_mode.intensities", format!("must be positive, got {x}"));
                }
            }
            ScenarioKind::G2 => {
                let p = self.g2.as_ref().expect("resolved");
                self.atoms("g2.n_atoms", p.n_atoms)?;
                positive("g2.spacing", p.spacing)?;
                positive("g2.omega", p.omega)?;
                finite_list("g2.thetas", &p.thetas)?;
                finite_list("g2.tau", &p.tau)?;
                if p.tau[0] < 0.0 || p.tau.windows(2).any(|w| w[1] < w[0]) {
                    return bad("g2.tau", "must be non-negative and non-decreasing");
                }
                if matches!(solver, Solver::Mf1 | Solver::Linear) {
                    return Err(CliError::Capability(format!(
                        "g2 needs solver exact, mf2 or mf3, got {solver}"
                    )));
                }
            }
            ScenarioKind::CollectiveShift => {
                let p = self.collective_shift.as_ref().expect("resolved");
                if p.n_sites == 0 {
                    return bad("collective_shift.n_sites", "must be at least 1");
                }
                if !(0.0..=1.0).contains(&p.fill_probability) {
                    return bad("collective_shift.fill_probability", "must lie in [0, 1]");
                }
                positive("collective_shift.trap_wavelength_nm", p.trap_wavelength_nm)?;
                positive("collective_shift.transition_wavelength_nm", p.transition_wavelength_nm)?;
                positive("collective_shift.waist_nm", p.waist_nm)?;
                if !(p.sigma_rho_nm >= 0.0) || !p.sigma_rho_nm.is_finite() {
                    return bad("collective_shift.sigma_rho_nm", "must be non-negative and finite");
                }
                positive("collective_shift.omega", p.omega)?;
                finite_list("collective_shift.detunings", &p.detunings)?;
                if p.members == 0 {
                    return bad("collective_shift.members", "must be at least 1");
                }
                if solver == Solver::Exact && p.n_sites > MAX_EXACT_ATOMS {
                    return Err(CliError::Capability(format!(
                        "exact solver allows at most {MAX_EXACT_ATOMS} atoms, but the trap has {} sites",
                        p.n_sites
                    )));
                }
            }
        }
        Ok(())
    }

    fn atoms(&self, field: &str, n: usize) -> CliResult<()> {
        if n == 0 {
            return bad(field, "must be at least 1");
        }
        self.solver()
            .check_atoms(n)
            .map_err(|e| CliError::Capability(format!("{field} = {n}: {e}")))
    }
}

fn default_integrator(scenario: ScenarioKind) -> IntegratorSection {
    match scenario {
        ScenarioKind::DickeDecay => IntegratorSection {
            rtol: 1e-10,
            atol: 1e-13,
            t_max: 10.0,
            ..Default::default()
        },
        ScenarioKind::NormalMode => IntegratorSection {
            rtol: 1e-11,
            atol: 1e-15,
            t_max: 5000.0,
            ..Default::default()
        },
        ScenarioKind::G2 => IntegratorSection {
            rtol: 1e-10,
            atol: 1e-14,
            t_max: 5000.0,
            ..Default::default()
        },
        ScenarioKind::CollectiveShift => IntegratorSection {
            rtol: 1e-4,
            atol: 1e-7,
            t_max: 300.0,
            ..Default::default()
        },
    }
}

fn default_steady(scenario: ScenarioKind) -> SteadySection {
    let rel_tol = match scenario {
        ScenarioKind::NormalMode => 1e-11,
        ScenarioKind::G2 => 1e-10,
        ScenarioKind::CollectiveShift => 1e-4,
        ScenarioKind::DickeDecay => 1e-9,
    };
    SteadySection { window: 1.0, rel_tol }
}
