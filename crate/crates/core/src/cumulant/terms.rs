use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::DriveField;
use crate::kernel::CouplingSet;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Per-atom linear terms d⟨Qʲ⟩/dt = Sʲ + Σ Wʲʲ'⟨Qʲ'⟩, rows and columns
/// ordered j = −1, 0, +1.
#[derive(Debug, Clone, PartialEq)]
pub struct OneAtomTerms {
    pub w: Vec<[[C64; 3]; 3]>,
    pub s: Vec<[C64; 3]>,
}

impl OneAtomTerms {
    pub fn new(drive: &DriveField) -> Self {
        let gamma = 1.0;
        let mut w = Vec::with_capacity(drive.n_atoms());
        let mut s = Vec::with_capacity(drive.n_atoms());
        for n in 0..drive.n_atoms() {
            let op = drive.rabi[n];
            let om = op.conj();
            let d = drive.detuning[n];
            w.push([
                [I * d - 0.5 * gamma, I * op, ZERO],
                [0.5 * I * om, C64::new(-gamma, 0.0), -0.5 * I * op],
                [ZERO, -I * om, -I * d - 0.5 * gamma],
            ]);
            s.push([-0.5 * I * op, ZERO, 0.5 * I * om]);
        }
        OneAtomTerms { w, s }
    }

    pub fn n_atoms(&self) -> usize {
        self.w.len()
    }
}

/// Which pair coupling multiplies a tensor entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    MinusGPlus,
    MinusGMinus,
    TwoGPlus,
    TwoGMinus,
}

/// Nonzero entries of V^{jj'}: (j, j', coefficient).
pub const V_ENTRIES: [(i8, i8, Coupling); 2] = [(-1, -1, Coupling::MinusGPlus), (1, 1, Coupling::MinusGMinus)];

/// Nonzero entries of U^{jj'j''}: (j, j', j'', coefficient).
pub const U_ENTRIES: [(i8, i8, i8, Coupling); 4] = [
    (0, 1, -1, Coupling::MinusGPlus),
    (0, -1, 1, Coupling::MinusGMinus),
    (-1, 0, -1, Coupling::TwoGPlus),
    (1, 0, 1, Coupling::TwoGMinus),
];

/// Pair tensors V_nm and U_nm, built from g±_nm.
///
/// d⟨Qₙʲ⟩/dt gains Σ_{m≠n} [V^{jj'}_nm ⟨Qₘʲ'⟩ + U^{jj'j''}_nm ⟨Qₙʲ' Qₘʲ''⟩].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAtomTensors {
    couplings: CouplingSet,
}

impl TwoAtomTensors {
    pub fn new(couplings: &CouplingSet) -> Self {
        TwoAtomTensors {
            couplings: couplings.clone(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.couplings.n_atoms()
    }

    pub fn couplings(&self) -> &CouplingSet {
        &self.couplings
    }

    #[inline]
    pub fn coefficient(&self, kind: Coupling, n: usize, m: usize) -> C64 {
        match kind {
            Coupling::MinusGPlus => -self.couplings.g_plus(n, m),
            Coupling::MinusGMinus => -self.couplings.g_minus(n, m),
            Coupling::TwoGPlus => 2.0 * self.couplings.g_plus(n, m),
            Coupling::TwoGMinus => 2.0 * self.couplings.g_minus(n, m),
        }
    }

    /// Dense V_nm (n ≠ m).
    pub fn v(&self, n: usize, m: usize) -> [[C64; 3]; 3] {
        let mut out = [[ZERO; 3]; 3];
        if n != m {
            for (j, jp, k) in V_ENTRIES {
                out[(j + 1) as usize][(jp + 1) as usize] = self.coefficient(k, n, m);
            }
        }
        out
    }

    /// Dense U_nm (n ≠ m).
    pub fn u(&self, n: usize, m: usize) -> [[[C64; 3]; 3]; 3] {
        let mut out = [[[ZERO; 3]; 3]; 3];
        if n != m {
            for (j, jp, jpp, k) in U_ENTRIES {
                out[(j + 1) as usize][(jp + 1) as usize][(jpp + 1) as usize] = self.coefficient(k, n, m);
            }
        }
        out
    }
}

pub(crate) fn check_shapes(one: &OneAtomTerms, two: &TwoAtomTensors, n: usize) -> Result<()> {
    for found in [one.n_atoms(), two.n_atoms()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    Ok(())
}
