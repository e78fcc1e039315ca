//! Scattering rates, detector signals, resonance fits and collective modes.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64 as C64;

use crate::cumulant::{HierarchyState, Ops};
use crate::error::{invalid, Error, Result};
use crate::exact::{expect_multi, expect_single, DensityMatrix};
use crate::geometry::DetectionDirection;
use crate::kernel::CouplingSet;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Imaginary parts of real observables above this (relative to the value
/// or one) are reported as errors.
pub const IMAG_TOLERANCE: f64 = 1e-9;

/// Single- and two-atom expectation values, from either solver.
///
/// For a first-order hierarchy two-atom values are the products of
/// single-atom values.
pub trait Expectations {
    fn n_atoms(&self) -> usize;
    /// ⟨Qₙʲ⟩.
    fn one(&self, n: usize, j: i8) -> C64;
    /// ⟨Qₐʲᵃ Q_bʲᵇ⟩ for a ≠ b.
    fn two(&self, a: usize, ja: i8, b: usize, jb: i8) -> C64;
}

impl Expectations for HierarchyState {
    fn n_atoms(&self) -> usize {
        HierarchyState::n_atoms(self)
    }

    fn one(&self, n: usize, j: i8) -> C64 {
        self.single(n, j)
    }

    fn two(&self, a: usize, ja: i8, b: usize, jb: i8) -> C64 {
        self.eval(&Ops::from_pairs(&[(a, ja), (b, jb)]))
    }
}

impl Expectations for DensityMatrix {
    fn n_atoms(&self) -> usize {
        DensityMatrix::n_atoms(self)
    }

    fn one(&self, n: usize, j: i8) -> C64 {
        expect_single(self, n, j).expect("atom index and j checked by caller")
    }

    fn two(&self, a: usize, ja: i8, b: usize, jb: i8) -> C64 {
        expect_multi(self, &[a, b], &[ja, jb]).expect("atom indices and j checked by caller")
    }
}

fn real(z: C64, what: &'static str) -> Result<f64> {
    if z.im.abs() > IMAG_TOLERANCE * z.re.abs().max(1.0) {
        return Err(Error::Consistency {
            what,
            residue: z.im.abs(),
        });
    }
    Ok(z.re)
}

fn check_atoms(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Photon scattering rates in units of Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRates {
    pub gamma_total: f64,
    pub gamma_coherent: f64,
    pub gamma_incoherent: f64,
}

/// γ = Σₙ[Γ⟨eₙ⟩ + Σ_{m≠n} Γ_mn⟨σ⁺ₘσ⁻ₙ⟩]; γ_C replaces each expectation
/// by ⟨σ⁺⟩⟨σ⁻⟩ products; γ_I = γ − γ_C.
pub fn scattering_rates<E: Expectations + ?Sized>(src: &E, couplings: &CouplingSet) -> Result<ScatterRates> {
    let n = src.n_atoms();
    check_atoms(couplings.n_atoms(), n)?;
    let mut total = ZERO;
    for a in 0..n {
        total += src.one(a, 0);
        for m in (0..n).filter(|m| *m != a) {
            total += couplings.gamma(m, a) * src.two(m, 1, a, -1);
        }
    }
    let gamma_total = real(total, "total scattering rate")?;
    let gamma_coherent = coherent_rate(src, couplings)?;
    if gamma_total < -1e-10 {
        return Err(Error::Numerical(format!(
            "negative total scattering rate {gamma_total:.3e}"
        )));
    }
    Ok(ScatterRates {
        gamma_total,
        gamma_coherent,
        gamma_incoherent: gamma_total - gamma_coherent,
    })
}

fn coherent_rate<E: Expectations + ?Sized>(src: &E, couplings: &CouplingSet) -> Result<f64> {
    let n = src.n_atoms();
    check_atoms(couplings.n_atoms(), n)?;
    let mut acc = ZERO;
    for a in 0..n {
        let lower = src.one(a, -1);
        acc += src.one(a, 1) * lower;
        for m in (0..n).filter(|m| *m != a) {
            acc += couplings.gamma(m, a) * src.one(m, 1) * lower;
        }
    }
    real(acc, "coherent scattering rate")
}

/// (γ_C^lin − γ_C) / γ_C.
pub fn delta_gamma_c<E, L>(steady: &E, steady_lin: &L, couplings: &CouplingSet) -> Result<f64>
where
    E: Expectations + ?Sized,
    L: Expectations + ?Sized,
{
    let gc = coherent_rate(steady, couplings)?;
    // The linear model has no populations, so only its coherent rate is meaningful.
    let lin = coherent_rate(steady_lin, couplings)?;
    if gc.abs() < 1e-14 {
        return Err(Error::Numerical(format!(
            "coherent rate {gc:.3e} too small for a relative difference"
        )));
    }
    Ok((lin - gc) / gc)
}

/// ⟨σ̂⁺σ̂⁻⟩ for light emitted along `dir`.
pub fn directional_intensity<E: Expectations + ?Sized>(src: &E, dir: &DetectionDirection) -> Result<f64> {
    let n = src.n_atoms();
    check_atoms(dir.n_atoms(), n)?;
    let mut acc = ZERO;
    for l in 0..n {
        acc += src.one(l, 0);
        for m in (0..n).filter(|m| *m != l) {
            acc += dir.phase(m, l) * src.two(m, 1, l, -1);
        }
    }
    real(acc, "directional intensity")
}

/// A/(1 + ((Δ − Δ₀)/w)²) + c fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzFit {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub iterations: usize,
}

impl LorentzFit {
    pub fn eval(&self, x: f64) -> f64 {
        lorentzian(x, self.center, self.width, self.amplitude, self.offset)
    }
}

fn lorentzian(x: f64, x0: f64, w: f64, a: f64, c: f64) -> f64 {
    let u = (x - x0) / w;
    a / (1.0 + u * u) + c
}

const FIT_MAX_ITER: usize = 500;

fn ssr(x: &[f64], y: &[f64], p: &Vector4<f64>) -> f64 {
    x.iter()
        .zip(y)
        .map(|(x, y)| (lorentzian(*x, p[0], p[1], p[2], p[3]) - y).powi(2))
        .sum()
}

/// Best (A, c) and residual for fixed centre and width.
fn linear_part(x: &[f64], y: &[f64], x0: f64, w: f64) -> (f64, f64, f64) {
    let (mut s11, mut s1, mut s1y, mut sy) = (0.0, 0.0, 0.0, 0.0);
    let n = x.len() as f64;
    for (x, y) in x.iter().zip(y) {
        let l = lorentzian(*x, x0, w, 1.0, 0.0);
        s11 += l * l;
        s1 += l;
        s1y += l * y;
        sy += y;
    }
    let det = s11 * n - s1 * s1;
    if det.abs() < 1e-300 {
        return (0.0, sy / n, f64::INFINITY);
    }
    let a = (s1y * n - s1 * sy) / det;
    let c = (s11 * sy - s1 * s1y) / det;
    let p = Vector4::new(x0, w, a, c);
    (a, c, ssr(x, y, &p))
}

/// Fewest samples [`lorentzian_fit`] accepts.
pub const FIT_MIN_POINTS: usize = 8;

/// Grid scan over centre and width, then damped Gauss–Newton.
pub fn lorentzian_fit(detunings: &[f64], signal: &[f64]) -> Result<LorentzFit> {
    if detunings.len() != signal.len() {
        return Err(Error::DimensionMismatch {
            expected: detunings.len(),
            found: signal.len(),
        });
    }
    if detunings.len() < FIT_MIN_POINTS {
        return invalid(format!(
            "Lorentzian fit needs at least {FIT_MIN_POINTS} points, got {}",
            detunings.len()
        ));
    }
    if detunings.iter().chain(signal).any(|v| !v.is_finite()) {
        return invalid("Lorentzian fit input contains non-finite values");
    }
    let (x, y) = (detunings, signal);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return invalid("Lorentzian fit needs distinct detunings");
    }

    let mut best = (f64::INFINITY, Vector4::zeros());
    let (w_min, w_max) = (span / (4.0 * x.len() as f64), 4.0 * span);
    for i in 0..=400 {
        let x0 = lo + span * i as f64 / 400.0;
        for k in 0..=60 {
            let w = w_min * (w_max / w_min).powf(k as f64 / 60.0);
            let (a, c, s) = linear_part(x, y, x0, w);
            if s < best.0 {
                best = (s, Vector4::new(x0, w, a, c));
            }
        }
    }

    let (mut s, mut p) = best;
    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let mut lambda = 1e-3;
    for it in 1..=FIT_MAX_ITER {
        let (jtj, jtr) = normal_equations(x, y, &p);
        if s <= 1e-30 * scale || jtr.amax() == 0.0 {
            return Ok(finish(x, y, p, it));
        }
        loop {
            let mut m = jtj;
            for k in 0..4 {
                m[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = m.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return Err(Error::FitFailure {
                        iterations: it,
                        residual: (s / x.len() as f64).sqrt(),
                    });
                }
                continue;
            };
            let trial = p + step;
            let st = if trial[1] != 0.0 {
                ssr(x, y, &trial)
            } else {
                f64::INFINITY
            };
            if st.is_finite() && st <= s {
                let small = (0..4).all(|k| step[k].abs() <= 1e-12 * (trial[k].abs() + 1e-12));
                p = trial;
                s = st;
                lambda = (lambda / 3.0).max(1e-12);
                if small {
                    return Ok(finish(x, y, p, it));
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                // No descent direction left: the current point is a minimum
                // to working precision.
                return Ok(finish(x, y, p, it));
            }
        }
    }
    Err(Error::FitFailure {
        iterations: FIT_MAX_ITER,
        residual: (s / x.len() as f64).sqrt(),
    })
}

fn normal_equations(x: &[f64], y: &[f64], p: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::<f64>::zeros();
    let mut jtr = Vector4::<f64>::zeros();
    for (xi, yi) in x.iter().zip(y) {
        let u = (xi - p[0]) / p[1];
        let d = 1.0 + u * u;
        let r = p[2] / d + p[3] - yi;
        let jac = Vector4::new(
            p[2] * 2.0 * u / (p[1] * d * d),
            p[2] * 2.0 * u * u / (p[1] * d * d),
            1.0 / d,
            1.0,
        );
        jtj += jac * jac.transpose();
        jtr += jac * r;
    }
    (jtj, jtr)
}

/// Undamped Gauss–Newton steps from the damped solution. Near the minimum
/// the sum of squares no longer resolves parameter changes, but the
/// gradient still does.
fn finish(x: &[f64], y: &[f64], mut p: Vector4<f64>, iterations: usize) -> LorentzFit {
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let (jtj, jtr) = normal_equations(x, y, &p);
        let Some(step) = jtj.lu().solve(&(-jtr)) else { break };
        let size = (0..4).map(|k| step[k].abs() / (p[k].abs() + 1e-12)).fold(0.0, f64::max);
        if !(size < 1e-6) || size >= last {
            break;
        }
        p += step;
        last = size;
        if size < 1e-15 {
            break;
        }
    }
    LorentzFit {
        center: p[0],
        width: p[1].abs(),
        amplitude: p[2],
        offset: p[3],
        residual: (ssr(x, y, &p) / x.len() as f64).sqrt(),
        iterations,
    }
}

/// Eigenmodes of g⁺ with Γ/2 on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub eigenvalues: Vec<C64>,
    /// Column vectors uₐ(Rₙ), normalized to Σₙ|uₐ|² = 1 with the largest
    /// component real and positive.
    pub modes: Vec<Vec<C64>>,
    /// 2 Re Gₐ, descending.
    pub decay_rates: Vec<f64>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Largest allowed ‖g⁺u − Gu‖∞.
pub const MODE_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Collective modes Σₙ g⁺ₘₙ uₐ(Rₙ) = Gₐ uₐ(Rₘ), with g⁺ₙₙ = Γ/2.
pub fn eigenmodes(couplings: &CouplingSet) -> Result<ModeSet> {
    let n = couplings.n_atoms();
    let g = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(0.5, 0.0)
        } else {
            couplings.g_plus(r, c)
        }
    });
    modes_of(&g)
}

pub(crate) fn modes_of(g: &DMatrix<C64>) -> Result<ModeSet> {
    let n = g.nrows();
    if n == 0 {
        return invalid("eigenmodes need at least one atom");
    }
    let schur = nalgebra::linalg::Schur::try_new(g.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let norm_t = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut found: Vec<(C64, Vec<C64>)> = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        // Back-substitution for the k-th eigenvector of the triangular factor.
        let mut y = DVector::<C64>::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in i + 1..=k {
                acc += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < f64::EPSILON * norm_t {
                d = C64::new(f64::EPSILON * norm_t, 0.0);
            }
            y[i] = -acc / d;
        }
        let x = &q * y;
        let scale = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // First component within rounding of the largest magnitude, so
        // mirror-symmetric modes pick a reproducible pivot.
        let big = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = x
            .iter()
            .copied()
            .find(|z| z.norm() >= big * (1.0 - 1e-8))
            .unwrap_or(ZERO);
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let u: Vec<C64> = x.iter().map(|z| z * phase / scale).collect();
        let uv = DVector::from_column_slice(&u);
        let resid = (g * &uv - uv.map(|z| z * lambda)).camax();
        if !(resid < MODE_RESIDUAL_TOLERANCE) {
            return Err(Error::Eigen(format!("mode {k} residual {resid:.3e}")));
        }
        found.push((lambda, u));
    }
    found.sort_by(|a, b| b.0.re.total_cmp(&a.0.re));
    Ok(ModeSet {
        decay_rates: found.iter().map(|(l, _)| 2.0 * l.re).collect(),
        eigenvalues: found.iter().map(|(l, _)| *l).collect(),
        modes: found.into_iter().map(|(_, u)| u).collect(),
    })
}
