use num_complex::Complex64 as C64;

use super::fast::{self, Scratch};
use super::state::{HierarchyState, Ops, Order};
use super::terms::{check_shapes, OneAtomTerms, TwoAtomTensors, U_ENTRIES, V_ENTRIES};
use crate::error::{invalid, Error, Result};
use crate::geometry::DriveField;
use crate::kernel::CouplingSet;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// How the right-hand side is put together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Assembly {
    /// Term by term over every stored entry, closures evaluated on demand.
    Generic,
    /// Orders 1 and 2 with external-atom sums factored into matrix
    /// products; order 3 falls back to `Generic`.
    #[default]
    Factored,
}

/// Derivative of one stored operator product.
fn entry_derivative(
    ev: &dyn Fn(&Ops) -> C64,
    one: &OneAtomTerms,
    two: &TwoAtomTensors,
    ops: &Ops,
    n_atoms: usize,
) -> C64 {
    let c = two.couplings();
    let len = ops.len();
    let mut acc = ZERO;

    // One-atom terms, slot by slot.
    for i in 0..len {
        let (x, j) = (ops.site(i), ops.j(i));
        let r = (j + 1) as usize;
        let s = one.s[x][r];
        if s != ZERO {
            acc += s * ev(&ops.remove(i));
        }
        for jp in -1..=1i8 {
            let w = one.w[x][r][(jp + 1) as usize];
            if w != ZERO {
                acc += w * ev(&ops.with_j(i, jp));
            }
        }
    }

    // Interactions inside the product, other operators as spectators.
    for i in 0..len {
        for k in (i + 1)..len {
            let (x, y) = (ops.site(i), ops.site(k));
            let (gp, gm) = (c.g_plus(x, y), c.g_minus(x, y));
            match (ops.j(i), ops.j(k)) {
                (-1, 1) | (1, -1) => {
                    let (to_y, to_x) = if ops.j(i) == -1 { (gp, gm) } else { (gm, gp) };
                    acc += 2.0 * c.gamma(x, y) * ev(&ops.with_j(i, 0).with_j(k, 0));
                    acc -= to_y * ev(&ops.with_j(k, 0).remove(i));
                    acc -= to_x * ev(&ops.with_j(i, 0).remove(k));
                }
                (0, jy) if jy != 0 => {
                    let g = if jy == 1 { gp } else { gm };
                    acc -= g * ev(&ops.with_j(i, jy).with_j(k, 0));
                }
                (jx, 0) if jx != 0 => {
                    let g = if jx == 1 { gp } else { gm };
                    acc -= g * ev(&ops.with_j(i, 0).with_j(k, jx));
                }
                _ => {}
            }
        }
    }

    // Couplings to atoms outside the product.
    for i in 0..len {
        let (x, j) = (ops.site(i), ops.j(i));
        for l in (0..n_atoms).filter(|l| !ops.contains(*l)) {
            for &(vj, vjp, kind) in &V_ENTRIES {
                if vj == j {
                    acc += two.coefficient(kind, x, l) * ev(&ops.remove(i).with_added(l, vjp));
                }
            }
            for &(uj, ujp, ujpp, kind) in &U_ENTRIES {
                if uj == j {
                    acc += two.coefficient(kind, x, l) * ev(&ops.with_j(i, ujp).with_added(l, ujpp));
                }
            }
        }
    }
    acc
}

fn generic_into(
    state: &HierarchyState,
    one: &OneAtomTerms,
    two: &TwoAtomTensors,
    linear: bool,
    out: &mut HierarchyState,
) {
    let n = state.n_atoms();
    let plain = |o: &Ops| state.eval(o);
    // With ⟨e⟩ pinned to zero every product containing e vanishes.
    let pinned = |o: &Ops| {
        if (0..o.len()).any(|i| o.j(i) == 0) {
            ZERO
        } else {
            state.eval(o)
        }
    };
    let ev: &dyn Fn(&Ops) -> C64 = if linear { &pinned } else { &plain };
    let data = out.data_mut();
    state.for_each_entry(|idx, ops| {
        data[idx] = if linear && ops.j(0) == 0 {
            ZERO
        } else {
            entry_derivative(ev, one, two, ops, n)
        };
    });
}

fn check_rhs_inputs(state: &HierarchyState, one: &OneAtomTerms, two: &TwoAtomTensors) -> Result<()> {
    check_shapes(one, two, state.n_atoms())
}

/// d/dt of every stored expectation value, assembled term by term.
pub fn rhs(state: &HierarchyState, one: &OneAtomTerms, two: &TwoAtomTensors) -> Result<HierarchyState> {
    check_rhs_inputs(state, one, two)?;
    let mut out = state.zeroed();
    generic_into(state, one, two, false, &mut out);
    Ok(out)
}

/// First-order right-hand side with every ⟨eₙ⟩ held at zero.
pub fn rhs_linear(state: &HierarchyState, one: &OneAtomTerms, two: &TwoAtomTensors) -> Result<HierarchyState> {
    if state.order() != Order::One {
        return invalid("the linear model is defined at order 1 only");
    }
    check_rhs_inputs(state, one, two)?;
    let mut out = state.zeroed();
    generic_into(state, one, two, true, &mut out);
    Ok(out)
}

/// Reusable right-hand side for one array, drive and truncation order.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    one: OneAtomTerms,
    two: TwoAtomTensors,
    order: Order,
    linear: bool,
    assembly: Assembly,
    scratch: Scratch,
}

impl Hierarchy {
    pub fn new(couplings: &CouplingSet, drive: &DriveField, order: Order) -> Result<Self> {
        drive.check(couplings.n_atoms())?;
        Ok(Hierarchy {
            one: OneAtomTerms::new(drive),
            two: TwoAtomTensors::new(couplings),
            order,
            linear: false,
            assembly: Assembly::default(),
            scratch: Scratch::new(couplings.n_atoms()),
        })
    }

    /// The order-1 model with ⟨eₙ⟩ = 0.
    pub fn linear(couplings: &CouplingSet, drive: &DriveField) -> Result<Self> {
        let mut h = Self::new(couplings, drive, Order::One)?;
        h.linear = true;
        Ok(h)
    }

    pub fn with_assembly(mut self, assembly: Assembly) -> Self {
        self.assembly = assembly;
        self
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn n_atoms(&self) -> usize {
        self.one.n_atoms()
    }

    pub fn one_atom(&self) -> &OneAtomTerms {
        &self.one
    }

    pub fn two_atom(&self) -> &TwoAtomTensors {
        &self.two
    }

    pub fn couplings(&self) -> &CouplingSet {
        self.two.couplings()
    }

    pub fn ground_state(&self) -> Result<HierarchyState> {
        HierarchyState::initial_ground(self.n_atoms(), self.order)
    }

    pub fn check_state(&self, state: &HierarchyState) -> Result<()> {
        if state.n_atoms() != self.n_atoms() {
            return Err(Error::DimensionMismatch {
                expected: self.n_atoms(),
                found: state.n_atoms(),
            });
        }
        if state.order() != self.order {
            return invalid(format!(
                "state has order {} but the equations have order {}",
                state.order().get(),
                self.order.get()
            ));
        }
        Ok(())
    }

    /// Writes the derivative of `state` into `out` (same shape).
    pub fn apply(&mut self, state: &HierarchyState, out: &mut HierarchyState) {
        debug_assert!(self.check_state(state).is_ok());
        match (self.assembly, self.order) {
            (Assembly::Factored, Order::One) => {
                fast::order_one(state, &self.one, &self.two, self.linear, &mut self.scratch, out)
            }
            (Assembly::Factored, Order::Two) => fast::order_two(state, &self.one, &self.two, &mut self.scratch, out),
            _ => generic_into(state, &self.one, &self.two, self.linear, out),
        }
    }

    /// Allocating form of [`Hierarchy::apply`].
    pub fn derivative(&mut self, state: &HierarchyState) -> Result<HierarchyState> {
        self.check_state(state)?;
        let mut out = state.zeroed();
        self.apply(state, &mut out);
        Ok(out)
    }
}
