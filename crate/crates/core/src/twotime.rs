//! Photon-detection reset of the hierarchy and the g²(τ) pipeline.
//!
//! A detection along k̂ maps ρ to σ̂⁻ρσ̂⁺ / ⟨σ̂⁺σ̂⁻⟩. Every stored expectation
//! after the map is a sum of pre-detection products with up to two more
//! operators, closed at the hierarchy order where needed.

use num_complex::Complex64 as C64;

use crate::cumulant::{Hierarchy, HierarchyState, Ops, Order};
use crate::error::{invalid, Error, Result};
use crate::exact::real_checked;
use crate::geometry::{AtomArray, DetectionDirection, DriveField};
use crate::integrate::{evolve_sampled, evolve_to_steady, SteadyCriterion, StepControl};
use crate::kernel::CouplingSet;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Detector signals at or below this are treated as no detection.
pub const DEGENERATE_NORM: f64 = 1e-14;

/// ⟨σ̂⁺σ̂⁻⟩ along `dir`: Σₗ[⟨eₗ⟩ + Σ_{m≠l} e^{iφ_ml}⟨σ⁺ₘσ⁻ₗ⟩].
pub fn detector_expectation(state: &HierarchyState, dir: &DetectionDirection) -> Result<f64> {
    let n = state.n_atoms();
    if dir.n_atoms() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dir.n_atoms(),
        });
    }
    if state.order() < Order::Two {
        return invalid("detector expectation needs pair correlations (order ≥ 2)");
    }
    let mut acc = ZERO;
    for l in 0..n {
        acc += state.single(l, 0);
        for m in (0..n).filter(|m| *m != l) {
            acc += dir.phase(m, l) * state.pair(m, 1, l, -1);
        }
    }
    real_checked(acc, "detector expectation")
}

/// Trace of σ̂⁻ρσ̂⁺, the normalization of the reset.
pub fn reset_norm(state: &HierarchyState, dir: &DetectionDirection) -> Result<f64> {
    let norm = detector_expectation(state, dir)?;
    if norm <= DEGENERATE_NORM {
        return Err(Error::ProjectionDegenerate { norm });
    }
    Ok(norm)
}

/// State just before and just after a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetSnapshot {
    pub pre_state: HierarchyState,
    pub norm: f64,
    pub post_state: HierarchyState,
}

impl ResetSnapshot {
    /// Smallest and largest Re⟨eₙeₘ⟩ after the reset. Values outside [0, 1]
    /// signal an unphysical closure.
    pub fn pair_population_range(&self) -> (f64, f64) {
        let s = &self.post_state;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in 1..s.n_atoms() {
            for a in 0..b {
                let v = s.pair(a, 0, b, 0).re;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Pre-detection values as seen by the reset formulas.
struct Pre<'a> {
    state: &'a HierarchyState,
    dir: &'a DetectionDirection,
}

impl Pre<'_> {
    fn m(&self, items: &[(usize, i8)]) -> C64 {
        self.state.eval(&Ops::from_pairs(items))
    }

    fn ph(&self, m: usize, l: usize) -> C64 {
        self.dir.phase(m, l)
    }

    /// Σ'ₗ[⟨A eₗ⟩ + extra(l) + Σ'ₘ e^{iφ_ml}⟨A σ⁺ₘ σ⁻ₗ⟩], with l and m outside
    /// the sites of A and m ≠ l.
    fn outer(&self, a: &[(usize, i8)], extra: impl Fn(usize) -> C64) -> C64 {
        let base = Ops::from_pairs(a);
        let n = self.state.n_atoms();
        let mut acc = ZERO;
        for l in (0..n).filter(|l| !base.contains(*l)) {
            acc += self.state.eval(&base.with_added(l, 0)) + extra(l);
            let with_l = base.with_added(l, -1);
            for m in (0..n).filter(|m| *m != l && !base.contains(*m)) {
                acc += self.ph(m, l) * self.state.eval(&with_l.with_added(m, 1));
            }
        }
        acc
    }

    fn minus(&self, n: usize) -> C64 {
        self.outer(&[(n, -1)], |l| self.ph(n, l) * self.m(&[(n, 0), (l, -1)]))
    }

    fn excited(&self, n: usize) -> C64 {
        self.outer(&[(n, 0)], |_| ZERO)
    }

    fn minus_minus(&self, n: usize, o: usize) -> C64 {
        self.outer(&[(n, -1), (o, -1)], |l| {
            self.ph(n, l) * self.m(&[(n, 0), (o, -1), (l, -1)]) + self.ph(o, l) * self.m(&[(n, -1), (o, 0), (l, -1)])
        })
    }

    fn minus_excited(&self, n: usize, o: usize) -> C64 {
        self.outer(&[(n, -1), (o, 0)], |l| {
            self.ph(n, l) * self.m(&[(n, 0), (o, 0), (l, -1)])
        })
    }

    fn excited_excited(&self, n: usize, o: usize) -> C64 {
        self.outer(&[(n, 0), (o, 0)], |_| ZERO)
    }

    fn minus_plus(&self, n: usize, o: usize) -> C64 {
        self.ph(n, o) * self.m(&[(n, 0), (o, 0)])
            + self.outer(&[(n, -1), (o, 1)], |l| {
                self.ph(n, l) * self.m(&[(n, 0), (o, 1), (l, -1)]) + self.ph(l, o) * self.m(&[(n, -1), (o, 0), (l, 1)])
            })
    }

    fn minus3(&self, n: usize, o: usize, p: usize) -> C64 {
        self.outer(&[(n, -1), (o, -1), (p, -1)], |l| {
            self.ph(n, l) * self.m(&[(n, 0), (o, -1), (p, -1), (l, -1)])
                + self.ph(o, l) * self.m(&[(n, -1), (o, 0), (p, -1), (l, -1)])
                + self.ph(p, l) * self.m(&[(n, -1), (o, -1), (p, 0), (l, -1)])
        })
    }

    fn minus2_excited(&self, n: usize, o: usize, p: usize) -> C64 {
        self.outer(&[(n, -1), (o, -1), (p, 0)], |l| {
            self.ph(n, l) * self.m(&[(n, 0), (o, -1), (p, 0), (l, -1)])
                + self.ph(o, l) * self.m(&[(n, -1), (o, 0), (p, 0), (l, -1)])
        })
    }

    fn minus_excited2(&self, n: usize, o: usize, p: usize) -> C64 {
        self.outer(&[(n, -1), (o, 0), (p, 0)], |l| {
            self.ph(n, l) * self.m(&[(n, 0), (o, 0), (p, 0), (l, -1)])
        })
    }

    fn excited3(&self, n: usize, o: usize, p: usize) -> C64 {
        self.outer(&[(n, 0), (o, 0), (p, 0)], |_| ZERO)
    }

    fn minus2_plus(&self, n: usize, o: usize, p: usize) -> C64 {
        self.ph(n, p) * self.m(&[(n, 0), (o, -1), (p, 0)])
            + self.ph(o, p) * self.m(&[(n, -1), (o, 0), (p, 0)])
            + self.outer(&[(n, -1), (o, -1), (p, 1)], |l| {
                self.ph(n, l) * self.m(&[(n, 0), (o, -1), (p, 1), (l, -1)])
                    + self.ph(o, l) * self.m(&[(n, -1), (o, 0), (p, 1), (l, -1)])
                    + self.ph(l, p) * self.m(&[(n, -1), (o, -1), (p, 0), (l, 1)])
            })
    }

    fn minus_excited_plus(&self, n: usize, o: usize, p: usize) -> C64 {
        self.ph(n, p) * self.m(&[(n, 0), (o, 0), (p, 0)])
            + self.outer(&[(n, -1), (o, 0), (p, 1)], |l| {
                self.ph(n, l) * self.m(&[(n, 0), (o, 0), (p, 1), (l, -1)])
                    + self.ph(l, p) * self.m(&[(n, -1), (o, 0), (p, 0), (l, 1)])
            })
    }

    /// Written family for slots already sorted by j, if there is one.
    fn written(&self, s: &[(usize, i8)]) -> Option<C64> {
        let v = match *s {
            [(n, -1)] => self.minus(n),
            [(n, 0)] => self.excited(n),
            [(n, -1), (o, -1)] => self.minus_minus(n, o),
            [(n, -1), (o, 0)] => self.minus_excited(n, o),
            [(n, 0), (o, 0)] => self.excited_excited(n, o),
            [(n, -1), (o, 1)] => self.minus_plus(n, o),
            [(n, -1), (o, -1), (p, -1)] => self.minus3(n, o, p),
            [(n, -1), (o, -1), (p, 0)] => self.minus2_excited(n, o, p),
            [(n, -1), (o, 0), (p, 0)] => self.minus_excited2(n, o, p),
            [(n, 0), (o, 0), (p, 0)] => self.excited3(n, o, p),
            [(n, -1), (o, -1), (p, 1)] => self.minus2_plus(n, o, p),
            [(n, -1), (o, 0), (p, 1)] => self.minus_excited_plus(n, o, p),
            _ => return None,
        };
        Some(v)
    }

    /// Unnormalized post-detection value of a stored product. Patterns not
    /// written out are the conjugates of written ones.
    fn post(&self, ops: &Ops) -> C64 {
        let mut s: Vec<(usize, i8)> = (0..ops.len()).map(|i| (ops.site(i), ops.j(i))).collect();
        s.sort_by_key(|&(_, j)| j);
        if let Some(v) = self.written(&s) {
            return v;
        }
        for x in s.iter_mut() {
            x.1 = -x.1;
        }
        s.sort_by_key(|&(_, j)| j);
        self.written(&s)
            .expect("every pattern or its conjugate is written")
            .conj()
    }
}

/// Expectations after a detection along `dir`, from a frozen copy of `state`.
pub fn reset_expectations(state: &HierarchyState, dir: &DetectionDirection) -> Result<ResetSnapshot> {
    if !matches!(state.order(), Order::Two | Order::Three) {
        return invalid("detection reset needs order 2 or 3");
    }
    let norm = reset_norm(state, dir)?;
    let pre_state = state.clone();
    let pre = Pre { state: &pre_state, dir };
    let mut post_state = pre_state.zeroed();
    let mut values = vec![ZERO; post_state.data().len()];
    pre_state.for_each_entry(|idx, ops| values[idx] = pre.post(ops) / norm);
    post_state.data_mut().copy_from_slice(&values);
    Ok(ResetSnapshot {
        pre_state,
        norm,
        post_state,
    })
}

/// Steady-state search and propagation settings for g².
#[derive(Debug, Clone, PartialEq)]
pub struct G2Params {
    pub criterion: SteadyCriterion,
    pub control: StepControl,
}

impl Default for G2Params {
    fn default() -> Self {
        G2Params {
            criterion: SteadyCriterion::default(),
            control: StepControl::rk45(1e-9, 1e-12, 400.0),
        }
    }
}

/// g²(τ) on a grid together with reset diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Curve {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    /// ⟨σ̂⁺σ̂⁻⟩ at detection.
    pub intensity: f64,
    /// Smallest and largest post-reset Re⟨eₙeₘ⟩.
    pub min_pair_population: f64,
    pub max_pair_population: f64,
    /// g² at the last grid point.
    pub asymptote: f64,
    /// Time and residual of the steady-state search, when one was run.
    pub t_steady: Option<f64>,
    pub steady_residual: Option<f64>,
}

/// Detection at `state`, then propagation with `hierarchy` over `tau_grid`.
pub fn g2_from_state(
    state: &HierarchyState,
    hierarchy: &mut Hierarchy,
    dir: &DetectionDirection,
    tau_grid: &[f64],
    control: &StepControl,
) -> Result<G2Curve> {
    hierarchy.check_state(state)?;
    let snap = reset_expectations(state, dir)?;
    let (lo, hi) = snap.pair_population_range();
    let (vals, _) = evolve_sampled(
        &snap.post_state,
        0.0,
        tau_grid,
        |_, s, o| hierarchy.apply(s, o),
        control,
        |_, s| detector_expectation(s, dir),
    )?;
    let g2 = vals
        .into_iter()
        .map(|v| v.map(|x| x / snap.norm))
        .collect::<Result<Vec<_>>>()?;
    Ok(G2Curve {
        tau: tau_grid.to_vec(),
        asymptote: g2.last().copied().unwrap_or(f64::NAN),
        g2,
        intensity: snap.norm,
        min_pair_population: lo,
        max_pair_population: hi,
        t_steady: None,
        steady_residual: None,
    })
}

/// Steady state from the ground state, detection, and g²(τ).
pub fn g2_hierarchy(
    array: &AtomArray,
    drive: &DriveField,
    dir: &DetectionDirection,
    order: Order,
    tau_grid: &[f64],
    params: &G2Params,
) -> Result<G2Curve> {
    if order == Order::One {
        return invalid("g² needs order 2 or 3");
    }
    let couplings = CouplingSet::new(array)?;
    let mut hierarchy = Hierarchy::new(&couplings, drive, order)?;
    let ground = HierarchyState::initial_ground(array.n_atoms(), order)?;
    let steady = evolve_to_steady(
        &ground,
        |_, s, o| hierarchy.apply(s, o),
        &params.criterion,
        &params.control,
    )?;
    let mut curve = g2_from_state(&steady.state, &mut hierarchy, dir, tau_grid, &params.control)?;
    curve.t_steady = Some(steady.t_steady);
    curve.steady_residual = Some(steady.residual);
    Ok(curve)
}
