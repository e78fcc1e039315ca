//! Atom arrays, drive fields and detection directions.
//!
//! Everything is expressed in natural units: the single-atom decay rate Γ is
//! the unit of frequency and the transition wavelength λ is the unit of
//! length, so the optical wave number is k = 2π.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;

/// The unit system shared by every solver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NaturalUnits;

impl NaturalUnits {
    /// Single-atom decay rate Γ.
    pub const GAMMA: f64 = 1.0;
    /// Transition wavelength λ.
    pub const WAVELENGTH: f64 = 1.0;
    /// Optical wave number k = 2π/λ.
    pub const WAVENUMBER: f64 = TAU;

    /// Converts a length given in nanometres to wavelengths of a transition
    /// with wavelength `transition_nm`.
    pub fn length_from_nm(length_nm: f64, transition_nm: f64) -> f64 {
        length_nm / transition_nm
    }
}

/// Angular character of the atomic transition, which fixes the coefficient
/// multiplying the ℓ = 2 Hankel function in the dipole kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    /// Linear dipole along ẑ.
    DeltaM0,
    /// Circular dipole (x̂ ± iŷ)/√2.
    DeltaMpm1,
}

impl TransitionKind {
    /// Coefficient of h₂ for a pair separated along a direction making angle θ
    /// with ẑ.
    pub fn angular_coefficient(self, cos_theta: f64) -> f64 {
        let p2 = 0.5 * (3.0 * cos_theta * cos_theta - 1.0);
        match self {
            TransitionKind::DeltaM0 => p2,
            TransitionKind::DeltaMpm1 => -0.5 * p2,
        }
    }
}

/// Atoms held at fixed positions (in wavelengths).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomArray {
    positions: Vec<Vec3>,
    transition: TransitionKind,
}

impl AtomArray {
    pub fn new(positions: Vec<Vec3>, transition: TransitionKind) -> Result<Self> {
        if positions.is_empty() {
            return invalid("an atom array needs at least one atom");
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|x| x.is_finite()) {
                return invalid(format!("position of atom {i} is not finite"));
            }
            for (j, q) in positions.iter().enumerate().skip(i + 1) {
                let d = (p - q).norm();
                if d == 0.0 {
                    return Err(Error::Singularity {
                        pair: Some((i, j)),
                        separation: d,
                    });
                }
            }
        }
        Ok(AtomArray { positions, transition })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn transition(&self) -> TransitionKind {
        self.transition
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }
}

fn unit_vector(v: Vec3, what: &str) -> Result<Vec3> {
    let norm = v.norm();
    if !norm.is_finite() || norm == 0.0 {
        return invalid(format!("{what} must be a nonzero finite vector"));
    }
    Ok(v / norm)
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > 1e-12 {
        return invalid(format!("{what} must have unit length, got |v| = {}", v.norm()));
    }
    Ok(())
}

/// `n` atoms at `j * spacing * axis`, `j = 0..n`.
pub fn build_line_array(n: usize, spacing: f64, axis: Vec3, transition: TransitionKind) -> Result<AtomArray> {
    if n == 0 {
        return invalid("line array needs n >= 1");
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return invalid(format!("line spacing must be positive, got {spacing}"));
    }
    let axis = unit_vector(axis, "line axis")?;
    let positions = (0..n).map(|j| axis * (j as f64 * spacing)).collect();
    AtomArray::new(positions, transition)
}

/// Trap geometry of a Gaussian standing-wave lattice along ẑ.
#[derive(Debug, Clone, PartialEq)]
pub struct StandingWaveTrap {
    pub n_sites: usize,
    pub fill_probability: f64,
    /// Trap wavelength over transition wavelength.
    pub trap_wavelength_ratio: f64,
    /// Beam waist, in transition wavelengths.
    pub waist: f64,
    /// Transverse Gaussian width, in transition wavelengths.
    pub sigma_rho: f64,
}

impl StandingWaveTrap {
    /// Rayleigh range π w² / λ_trap.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.trap_wavelength_ratio
    }

    fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return invalid("standing wave needs at least one site");
        }
        if !(0.0..=1.0).contains(&self.fill_probability) {
            return invalid("fill probability must lie in [0, 1]");
        }
        for (v, name) in [
            (self.trap_wavelength_ratio, "trap wavelength ratio"),
            (self.waist, "waist"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive"));
            }
        }
        if !(self.sigma_rho >= 0.0) {
            return invalid("sigma_rho must be non-negative");
        }
        Ok(())
    }

    /// Site index `j` is mapped to the root of sin(k z − arctan(z/Z_R)) with
    /// k z − arctan(z/Z_R) = jπ. Sites are centred on the beam focus.
    pub fn site_position(&self, j: i64) -> Result<f64> {
        let k = TAU / self.trap_wavelength_ratio;
        let zr = self.rayleigh_range();
        let target = j as f64 * PI;
        let f = |z: f64| k * z - (z / zr).atan() - target;
        let df = |z: f64| k - (1.0 / zr) / (1.0 + (z / zr).powi(2));
        // arctan is bounded by π/2, so the root lies strictly inside this
        // bracket and f is monotonically increasing.
        let mut lo = (target - FRAC_PI_2) / k;
        let mut hi = (target + FRAC_PI_2) / k;
        if f(lo) > 0.0 || f(hi) < 0.0 {
            return Err(Error::Numerical(format!(
                "standing-wave root for site {j} is not bracketed"
            )));
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fz = f(z);
            if fz > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let newton = z - fz / df(z);
            z = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (hi - lo) < 1e-12 || fz.abs() < 1e-15 {
                let residual = (k * z - (z / zr).atan()).sin();
                if residual.abs() < 1e-10 {
                    return Ok(z);
                }
            }
        }
        Err(Error::Numerical(format!(
            "standing-wave root for site {j} did not converge"
        )))
    }

    /// Draws one configuration using the given RNG. Each site is visited in
    /// order from the most negative index; a uniform draw decides occupation
    /// and two normal draws give the transverse position.
    pub fn sample<R: Rng + ?Sized>(&self, transition: TransitionKind, rng: &mut R) -> Result<AtomArray> {
        self.validate()?;
        let normal =
            Normal::new(0.0, self.sigma_rho).map_err(|e| Error::InvalidArgument(format!("transverse width: {e}")))?;
        let first = -(self.n_sites as i64) / 2;
        let mut positions = Vec::new();
        for j in first..first + self.n_sites as i64 {
            let occupied = rng.random::<f64>() < self.fill_probability;
            if !occupied {
                continue;
            }
            let z = self.site_position(j)?;
            let x = normal.sample(rng);
            let y = normal.sample(rng);
            positions.push(Vec3::new(x, y, z));
        }
        if positions.is_empty() {
            return Err(Error::Numerical("standing-wave sample produced no atoms".into()));
        }
        AtomArray::new(positions, transition)
    }
}

/// Deterministic generator for member `member` of a seeded ensemble.
///
/// Uses ChaCha8 seeded with `seed` (via `seed_from_u64`) and selects the
/// independent stream `member`, so each configuration is reproducible on
/// its own regardless of how the ensemble is scheduled.
pub fn ensemble_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

/// Convenience wrapper drawing configuration 0 of the ensemble `seed`.
pub fn build_standing_wave_array(seed: u64, trap: &StandingWaveTrap, transition: TransitionKind) -> Result<AtomArray> {
    trap.sample(transition, &mut ensemble_rng(seed, 0))
}

/// Per-atom complex Rabi frequency Ω⁺ₙ and detuning Δₙ, both in units of Γ.
/// Ω⁻ₙ is the complex conjugate and is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveField {
    pub rabi: Vec<C64>,
    pub detuning: Vec<f64>,
}

impl DriveField {
    pub fn zero(n: usize) -> Self {
        DriveField {
            rabi: vec![C64::new(0.0, 0.0); n],
            detuning: vec![0.0; n],
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.rabi.len()
    }

    pub fn rabi_minus(&self, n: usize) -> C64 {
        self.rabi[n].conj()
    }

    /// Same field with every detuning replaced by `delta`.
    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.detuning.iter_mut().for_each(|d| *d = delta);
        self
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.rabi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.rabi.len(),
            });
        }
        if self.detuning.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.detuning.len(),
            });
        }
        Ok(())
    }
}

/// Plane wave Ω⁺ₙ = Ω e^{i k·Rₙ}, uniform detuning.
pub fn plane_wave_drive(array: &AtomArray, omega: f64, khat: Vec3, delta: f64) -> Result<DriveField> {
    check_unit(&khat, "drive direction")?;
    if !omega.is_finite() || !delta.is_finite() {
        return invalid("drive amplitude and detuning must be finite");
    }
    let k = khat * NaturalUnits::WAVENUMBER;
    let rabi = array
        .positions()
        .iter()
        .map(|r| C64::from_polar(omega, k.dot(r)))
        .collect();
    Ok(DriveField {
        rabi,
        detuning: vec![delta; array.n_atoms()],
    })
}

/// Drive shaped like a collective mode: Ω⁺ₙ = Ω u(Rₙ), zero detuning.
pub fn eigenmode_drive(array: &AtomArray, mode: &[C64], omega: f64) -> Result<DriveField> {
    if mode.len() != array.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: array.n_atoms(),
            found: mode.len(),
        });
    }
    let norm: f64 = mode.iter().map(|u| u.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return invalid(format!("mode is not normalized: sum |u|^2 = {norm}"));
    }
    Ok(DriveField {
        rabi: mode.iter().map(|u| u * omega).collect(),
        detuning: vec![0.0; array.n_atoms()],
    })
}

/// Emission direction k̂ and the phase factors e^{iφ_ml}, φ_ml = k·(R_m − R_l).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDirection {
    khat: Vec3,
    n: usize,
    phases: Vec<C64>,
}

impl DetectionDirection {
    pub fn new(array: &AtomArray, khat: Vec3) -> Result<Self> {
        check_unit(&khat, "detection direction")?;
        let n = array.n_atoms();
        let k = khat * NaturalUnits::WAVENUMBER;
        let proj: Vec<f64> = array.positions().iter().map(|r| k.dot(r)).collect();
        let mut phases = vec![C64::new(1.0, 0.0); n * n];
        for m in 0..n {
            for l in (m + 1)..n {
                let p = C64::from_polar(1.0, proj[m] - proj[l]);
                phases[m * n + l] = p;
                phases[l * n + m] = p.conj();
            }
        }
        Ok(DetectionDirection { khat, n, phases })
    }

    /// Direction in the xy-plane at angle `theta` (radians) from x̂.
    pub fn in_plane(array: &AtomArray, theta: f64) -> Result<Self> {
        Self::new(array, Vec3::new(theta.cos(), theta.sin(), 0.0))
    }

    pub fn khat(&self) -> Vec3 {
        self.khat
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    /// e^{iφ_ml}.
    #[inline]
    pub fn phase(&self, m: usize, l: usize) -> C64 {
        self.phases[m * self.n + l]
    }
}
