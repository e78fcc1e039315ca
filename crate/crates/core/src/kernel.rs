//! Dipole-dipole propagator and the pairwise coupling constants derived from
//! it.
//!
//! For two atoms separated by **R** the complex coupling is
//!
//! ```text
//! g(R) = (Γ/2) [ h₀(kR) + c(θ) h₂(kR) ]
//! ```
//!
//! with c(θ) fixed by the [`TransitionKind`]. Its real part gives the
//! collective decay Γ_nm = 2 Re g and its imaginary part the coherent
//! exchange Ω_nm = Im g; the rates entering the operator equations are
//! g±_nm = ±iΩ_nm + Γ_nm/2.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::{AtomArray, NaturalUnits, TransitionKind, Vec3};

/// Separations with k R below this are treated as coincident atoms.
pub const MIN_SEPARATION_KR: f64 = 1e-6;

/// Below this argument j₂ is summed from its power series; the closed form
/// loses all digits to cancellation as s → 0.
const J2_SERIES_CUTOFF: f64 = 1.0;

/// Outgoing spherical Hankel function h₀⁽¹⁾(s) = e^{is}/(is).
pub fn spherical_hankel_h0(s: f64) -> Result<C64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(s));
    }
    let (sin, cos) = s.sin_cos();
    Ok(C64::new(sin / s, -cos / s))
}

fn bessel_j2(s: f64) -> f64 {
    if s < J2_SERIES_CUTOFF {
        // j₂(s) = s² Σ_k (−s²/2)^k / (k! (2k+5)!!)
        let x = -0.5 * s * s;
        let mut term = 1.0 / 15.0;
        let mut sum = term;
        for k in 1..20 {
            let kf = k as f64;
            term *= x / (kf * (2.0 * kf + 5.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        s * s * sum
    } else {
        let (sin, cos) = s.sin_cos();
        (3.0 / (s * s * s) - 1.0 / s) * sin - 3.0 * cos / (s * s)
    }
}

fn bessel_y2(s: f64) -> f64 {
    let (sin, cos) = s.sin_cos();
    -(3.0 / (s * s * s) - 1.0 / s) * cos - 3.0 * sin / (s * s)
}

/// Outgoing spherical Hankel function h₂⁽¹⁾(s) = (−3i/s³ − 3/s² + i/s) e^{is}.
pub fn spherical_hankel_h2(s: f64) -> Result<C64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(s));
    }
    Ok(C64::new(bessel_j2(s), bessel_y2(s)))
}

/// The pair coupling g(R) in units of Γ. The dipole axis is ẑ.
pub fn green_g(rvec: Vec3, transition: TransitionKind) -> Result<C64> {
    let r = rvec.norm();
    let s = NaturalUnits::WAVENUMBER * r;
    if !(s >= MIN_SEPARATION_KR) {
        return Err(Error::Singularity {
            pair: None,
            separation: r,
        });
    }
    let c = transition.angular_coefficient(rvec.z / r);
    let h = spherical_hankel_h0(s)? + spherical_hankel_h2(s)? * c;
    Ok(h * (0.5 * NaturalUnits::GAMMA))
}

/// Precomputed pair couplings for one array.
///
/// `gamma` and `omega` have zero diagonals. `g_plus`/`g_minus` carry Γ/2 on
/// the diagonal so that `g_plus` is directly the matrix whose eigenvectors
/// are the collective modes; the operator equations only read off-diagonal
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    n: usize,
    gamma: Vec<f64>,
    omega: Vec<f64>,
    g_plus: Vec<C64>,
    g_minus: Vec<C64>,
}

impl CouplingSet {
    pub fn new(array: &AtomArray) -> Result<Self> {
        let n = array.n_atoms();
        let pos = array.positions();
        let mut gamma = vec![0.0; n * n];
        let mut omega = vec![0.0; n * n];
        let half = C64::new(0.5 * NaturalUnits::GAMMA, 0.0);
        let mut g_plus = vec![C64::new(0.0, 0.0); n * n];
        for a in 0..n {
            g_plus[a * n + a] = half;
            for b in (a + 1)..n {
                let g = green_g(pos[a] - pos[b], array.transition()).map_err(|e| match e {
                    Error::Singularity { separation, .. } => Error::Singularity {
                        pair: Some((a, b)),
                        separation,
                    },
                    other => other,
                })?;
                let (gab, oab) = (2.0 * g.re, g.im);
                gamma[a * n + b] = gab;
                gamma[b * n + a] = gab;
                omega[a * n + b] = oab;
                omega[b * n + a] = oab;
                let gp = C64::new(0.5 * gab, oab);
                g_plus[a * n + b] = gp;
                g_plus[b * n + a] = gp;
            }
        }
        let g_minus = g_plus.iter().map(|g| g.conj()).collect();
        Ok(CouplingSet {
            n,
            gamma,
            omega,
            g_plus,
            g_minus,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    /// Γ_nm (zero on the diagonal).
    #[inline]
    pub fn gamma(&self, n: usize, m: usize) -> f64 {
        self.gamma[n * self.n + m]
    }

    /// Ω_nm (zero on the diagonal).
    #[inline]
    pub fn omega(&self, n: usize, m: usize) -> f64 {
        self.omega[n * self.n + m]
    }

    #[inline]
    pub fn g_plus(&self, n: usize, m: usize) -> C64 {
        self.g_plus[n * self.n + m]
    }

    #[inline]
    pub fn g_minus(&self, n: usize, m: usize) -> C64 {
        self.g_minus[n * self.n + m]
    }

    /// Row-major g⁺ including the Γ/2 diagonal.
    pub fn g_plus_matrix(&self) -> &[C64] {
        &self.g_plus
    }

    /// Row-major g⁻ including the Γ/2 diagonal.
    pub fn g_minus_matrix(&self) -> &[C64] {
        &self.g_minus
    }
}

/// Free-function form of [`CouplingSet::new`].
pub fn coupling_set(array: &AtomArray) -> Result<CouplingSet> {
    CouplingSet::new(array)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_line_array;
    use std::f64::consts::PI;

    /// (s, Re h₀, Im h₀, Re h₂, Im h₂) from 60-digit evaluation of the closed
    /// forms.
    pub(crate) const HANKEL_TABLE: &[(f64, f64, f64, f64, f64)] = &[
        (
            1e-3,
            0.99999983333334166667,
            -999.99950000004166667,
            6.6666661904762037037e-8,
            -3000000500.000125,
        ),
        (
            3e-3,
            0.99999850000067499986,
            -333.331833334458333,
            5.9999961428581071427e-7,
            -111111277.77815277722,
        ),
        (
            1e-2,
            0.99998333341666646825,
            -99.995000041666527778,
            6.6666190477513225509e-6,
            -3000050.0012499791668,
        ),
        (
            0.03,
            0.99985000674985535895,
            -33.318334458299583876,
            0.000059996142953570113648,
            -111127.78152721529887,
        ),
        (
            0.1,
            0.99833416646828152307,
            -9.950041652780257661,
            0.00066619060844556870586,
            -3005.0124791753454863,
        ),
        (
            0.25,
            0.98961583701809171839,
            -3.8756496868425791366,
            0.004148097739361125267,
            -194.03092532581832004,
        ),
        (
            0.5,
            0.95885107720840600055,
            -1.7551651237807454322,
            0.016371106607993412617,
            -25.059922824838635758,
        ),
        (
            0.8,
            0.89669511362440345203,
            -0.87088338668395677615,
            0.040750531425149818809,
            -6.5739891644886035572,
        ),
        (
            1.0,
            0.84147098480789650665,
            -0.5403023058681397174,
            0.062035052011373861102,
            -3.6050175661599689548,
        ),
        (
            1.5,
            0.66499665773603628729,
            -0.047158134445135273392,
            0.12734928368840821565,
            -1.3457126936204509991,
        ),
        (
            2.0,
            0.4546487134128408477,
            0.2080734182735711935,
            0.19844794905714657832,
            -0.73399142468765406992,
        ),
        (
            3.0,
            0.047040002686622407367,
            0.32999749886681515242,
            0.29863749707573354751,
            -0.26703833526449917565,
        ),
        (
            5.0,
            -0.19178485493262769378,
            -0.056732437092645252893,
            0.13473121008512521879,
            0.16499545760110443881,
        ),
        (
            7.5,
            0.12506666356996518106,
            -0.046218042378003441463,
            -0.13688365846410174799,
            -0.0062735853101428145057,
        ),
        (
            10.0,
            -0.05440211108893698134,
            0.083907152907645245226,
            0.077942193628562445468,
            -0.065069304993734793467,
        ),
        (
            20.0,
            0.045647262536381382719,
            -0.020404103090669599303,
            -0.048365523530958962244,
            0.013403982937032369901,
        ),
        (
            31.4,
            -0.0005071930764363177845,
            -0.031843094758216012479,
            -0.0025366840640696432371,
            0.031794663080993460953,
        ),
        (
            50.0,
            -0.0052474970740785757183,
            -0.019299320569842265481,
            0.0040832408433991454985,
            0.019591011209603169306,
        ),
        (
            77.7,
            0.0095819886875138591718,
            0.0085920151342192910415,
            -0.0092454892492147119851,
            -0.0089577066146114575102,
        ),
        (
            100.0,
            -0.0050636564110975879366,
            -0.008623188722876839341,
            0.00480344165248795348,
            0.0087725114585929039273,
        ),
    ];

    fn rel_close(got: C64, want: C64, tol: f64) -> bool {
        (got - want).norm() <= tol * want.norm()
    }

    #[test]
    fn hankel_matches_high_precision_table() {
        for &(s, h0r, h0i, h2r, h2i) in HANKEL_TABLE {
            let h0 = spherical_hankel_h0(s).unwrap();
            let h2 = spherical_hankel_h2(s).unwrap();
            assert!(rel_close(h0, C64::new(h0r, h0i), 1e-12), "h0({s}) = {h0}");
            assert!(rel_close(h2, C64::new(h2r, h2i), 1e-12), "h2({s}) = {h2}");
            // The real part of h₂ is small near the origin; hold it to its
            // own relative accuracy.
            assert!((h2.re - h2r).abs() <= 1e-12 * h2r.abs().max(1e-3), "j2({s})");
        }
    }

    #[test]
    fn hankel_simple_values() {
        let h = spherical_hankel_h0(PI).unwrap();
        assert!(h.re.abs() < 1e-16);
        assert!((h.im - 1.0 / PI).abs() < 1e-15);
        let h = spherical_hankel_h0(2.0 * PI).unwrap();
        assert!((h.im + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((spherical_hankel_h0(1e-9).unwrap().re - 1.0).abs() < 1e-15);
        // j₂(s) ≈ s²/15 for small s.
        let j2 = spherical_hankel_h2(1e-4).unwrap().re;
        assert!((j2 - 6.6666666619047619061e-10).abs() < 1e-22);
    }

    #[test]
    fn hankel_domain_errors() {
        assert_eq!(spherical_hankel_h0(0.0), Err(Error::Domain(0.0)));
        assert!(spherical_hankel_h2(-1.0).is_err());
        assert!(spherical_hankel_h2(f64::NAN).is_err());
    }

    #[test]
    fn green_function_reference_values() {
        // (R, cos θ, kind, Re g, Im g), 60-digit reference.
        let cases = [
            (
                0.4,
                0.0,
                TransitionKind::DeltaM0,
                0.051575983089608344773,
                0.272993594643829789,
            ),
            (
                0.4,
                0.0,
                TransitionKind::DeltaMpm1,
                0.14961624916556564634,
                0.10492642836581191722,
            ),
            (
                0.1,
                1.0,
                TransitionKind::DeltaMpm1,
                0.46134842419113792309,
                2.597093873725706128,
            ),
            (
                0.4,
                1.0,
                TransitionKind::DeltaMpm1,
                0.051575983089608344773,
                0.272993594643829789,
            ),
            (
                0.7,
                0.6,
                TransitionKind::DeltaM0,
                -0.10350560465001774581,
                0.036892297288073585224,
            ),
            (
                1.3,
                0.6,
                TransitionKind::DeltaMpm1,
                0.059190484947060377439,
                0.019704944612760525621,
            ),
        ];
        for (r, cth, kind, re, im) in cases {
            let sth = (1.0f64 - cth * cth).sqrt();
            let rvec = Vec3::new(0.0, r * sth, r * cth);
            let g = green_g(rvec, kind).unwrap();
            assert!(rel_close(g, C64::new(re, im), 1e-12), "{r} {cth} {kind:?}: {g}");
            // Parity.
            assert_eq!(g, green_g(-rvec, kind).unwrap());
        }
    }

    #[test]
    fn green_function_limits() {
        for kind in [TransitionKind::DeltaM0, TransitionKind::DeltaMpm1] {
            for dir in [Vec3::x(), Vec3::z(), Vec3::new(0.6, 0.0, 0.8)] {
                let g = green_g(dir * 1e-4, kind).unwrap();
                assert!((2.0 * g.re - 1.0).abs() < 1e-6);
            }
            let far = green_g(Vec3::x() * 1e4, kind).unwrap();
            assert!(far.norm() < 1e-4);
            assert!(matches!(
                green_g(Vec3::zeros(), kind),
                Err(Error::Singularity { pair: None, .. })
            ));
        }
    }

    #[test]
    fn coupling_set_structure() {
        let a = build_line_array(8, 0.1, Vec3::z(), TransitionKind::DeltaMpm1).unwrap();
        let c = CouplingSet::new(&a).unwrap();
        for n in 0..8 {
            assert_eq!(c.gamma(n, n), 0.0);
            assert_eq!(c.omega(n, n), 0.0);
            assert_eq!(c.g_plus(n, n), C64::new(0.5, 0.0));
            for m in 0..8 {
                assert_eq!(c.gamma(n, m), c.gamma(m, n));
                assert_eq!(c.omega(n, m), c.omega(m, n));
                assert_eq!(c.g_minus(n, m), c.g_plus(n, m).conj());
                if n != m {
                    // Elementwise check against an independent per-pair evaluation.
                    let g = green_g(a.positions()[n] - a.positions()[m], a.transition()).unwrap();
                    assert_eq!(c.gamma(n, m), 2.0 * g.re);
                    assert_eq!(c.omega(n, m), g.im);
                    let gp = C64::new(0.0, c.omega(n, m)) + 0.5 * c.gamma(n, m);
                    assert_eq!(c.g_plus(n, m), gp);
                }
            }
        }
    }

    #[test]
    fn contact_limit_of_collective_decay() {
        for kind in [TransitionKind::DeltaM0, TransitionKind::DeltaMpm1] {
            let a = build_line_array(2, 1e-4, Vec3::y(), kind).unwrap();
            let c = CouplingSet::new(&a).unwrap();
            assert!((c.gamma(0, 1) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn near_contact_pair_is_named() {
        let a = AtomArray::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * (1.0 + 1e-9)],
            TransitionKind::DeltaM0,
        )
        .unwrap();
        match CouplingSet::new(&a) {
            Err(Error::Singularity { pair, .. }) => assert_eq!(pair, Some((1, 2))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collective_decay_envelope() {
        let mut s = 1e-3;
        while s < 50.0 {
            for cth in [0.0, 0.3, 0.7, 1.0] {
                for kind in [TransitionKind::DeltaM0, TransitionKind::DeltaMpm1] {
                    let r = s / NaturalUnits::WAVENUMBER;
                    let sth = (1.0f64 - cth * cth).sqrt();
                    let g = green_g(Vec3::new(r * sth, 0.0, r * cth), kind).unwrap();
                    let bound = 1.0 + kind.angular_coefficient(cth).abs();
                    assert!(2.0 * g.re <= bound + 1e-12);
                }
            }
            s *= 1.3;
        }
    }
}
