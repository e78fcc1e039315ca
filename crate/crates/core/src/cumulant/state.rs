use num_complex::Complex64 as C64;

use super::closure;
use crate::error::{invalid, Error, Result};
use crate::exact::{check_j, expect_multi, DensityMatrix};
use crate::integrate::OdeState;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Number of operators kept per product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    One = 1,
    Two = 2,
    Three = 3,
}

impl Order {
    pub fn new(k: usize) -> Result<Order> {
        match k {
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            3 => Ok(Order::Three),
            _ => invalid(format!("hierarchy order must be 1, 2 or 3, got {k}")),
        }
    }

    pub fn get(self) -> usize {
        self as usize
    }
}

/// Up to five single-atom operators on distinct sites, kept sorted by site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Ops {
    len: usize,
    site: [usize; 5],
    j: [i8; 5],
}

impl Ops {
    pub(crate) const EMPTY: Ops = Ops {
        len: 0,
        site: [0; 5],
        j: [0; 5],
    };

    pub(crate) fn from_pairs(items: &[(usize, i8)]) -> Ops {
        let mut o = Ops::EMPTY;
        for &(s, j) in items {
            o.push(s, j);
        }
        o
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub(crate) fn site(&self, i: usize) -> usize {
        self.site[i]
    }

    #[inline]
    pub(crate) fn j(&self, i: usize) -> i8 {
        self.j[i]
    }

    #[inline]
    pub(crate) fn contains(&self, site: usize) -> bool {
        self.site[..self.len].contains(&site)
    }

    /// Inserts keeping site order. The caller guarantees `site` is new.
    #[inline]
    pub(crate) fn push(&mut self, site: usize, j: i8) {
        debug_assert!(self.len < 5 && !self.contains(site));
        let mut i = self.len;
        while i > 0 && self.site[i - 1] > site {
            self.site[i] = self.site[i - 1];
            self.j[i] = self.j[i - 1];
            i -= 1;
        }
        self.site[i] = site;
        self.j[i] = j;
        self.len += 1;
    }

    #[inline]
    pub(crate) fn remove(&self, i: usize) -> Ops {
        let mut o = *self;
        for k in i..self.len - 1 {
            o.site[k] = self.site[k + 1];
            o.j[k] = self.j[k + 1];
        }
        o.len -= 1;
        o
    }

    #[inline]
    pub(crate) fn with_j(&self, i: usize, j: i8) -> Ops {
        let mut o = *self;
        o.j[i] = j;
        o
    }

    #[inline]
    pub(crate) fn with_added(&self, site: usize, j: i8) -> Ops {
        let mut o = *self;
        o.push(site, j);
        o
    }

    /// Operators selected by the bits of `mask`.
    #[inline]
    pub(crate) fn sub(&self, mask: u32) -> Ops {
        let mut o = Ops::EMPTY;
        for i in 0..self.len {
            if mask >> i & 1 == 1 {
                o.site[o.len] = self.site[i];
                o.j[o.len] = self.j[i];
                o.len += 1;
            }
        }
        o
    }

    pub(crate) fn negated(&self) -> Ops {
        let mut o = *self;
        for k in 0..o.len {
            o.j[k] = -o.j[k];
        }
        o
    }
}

#[inline]
pub(crate) fn pair_slot(a: usize, b: usize) -> usize {
    debug_assert!(a < b);
    b * (b - 1) / 2 + a
}

#[inline]
pub(crate) fn triple_slot(a: usize, b: usize, c: usize) -> usize {
    debug_assert!(a < b && b < c);
    c * (c - 1) * (c - 2) / 6 + b * (b - 1) / 2 + a
}

#[inline]
fn jx(j: i8) -> usize {
    (j + 1) as usize
}

/// Singles, pairs and triples of ⟨Qʲ⟩ products in one flat vector.
///
/// Singles sit at `3n + j + 1`. Pairs `a < b` follow in colexicographic
/// order with 9 entries each (`3(jₐ+1) + j_b+1`), then triples with 27.
/// Any other index order is served by transposing on read.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    n: usize,
    order: Order,
    off2: usize,
    off3: usize,
    data: Vec<C64>,
}

impl HierarchyState {
    /// All expectation values zero: every atom in its ground state.
    pub fn initial_ground(n: usize, order: Order) -> Result<Self> {
        if n == 0 {
            return invalid("hierarchy needs at least one atom");
        }
        let n_pairs = if order >= Order::Two {
            n * n.saturating_sub(1) / 2
        } else {
            0
        };
        let n_triples = if order >= Order::Three && n >= 3 {
            n * (n - 1) * (n - 2) / 6
        } else {
            0
        };
        let off2 = 3 * n;
        let off3 = off2 + 9 * n_pairs;
        Ok(HierarchyState {
            n,
            order,
            off2,
            off3,
            data: vec![ZERO; off3 + 27 * n_triples],
        })
    }

    /// Product state with every atom excited.
    pub fn initial_all_excited(n: usize, order: Order) -> Result<Self> {
        let mut s = Self::initial_ground(n, order)?;
        for k in 0..n {
            s.data[3 * k + 1] = ONE;
        }
        for p in 0..s.n_pairs() {
            s.data[s.off2 + 9 * p + 4] = ONE;
        }
        for t in 0..s.n_triples() {
            s.data[s.off3 + 27 * t + 13] = ONE;
        }
        Ok(s)
    }

    /// Reads every stored expectation value from a density matrix.
    pub fn from_density_matrix(rho: &DensityMatrix, order: Order) -> Result<Self> {
        let n = rho.n_atoms();
        let mut s = Self::initial_ground(n, order)?;
        for k in 0..n {
            for j in -1..=1 {
                s.data[3 * k + jx(j)] = expect_multi(rho, &[k], &[j])?;
            }
        }
        if order >= Order::Two {
            for b in 1..n {
                for a in 0..b {
                    let base = s.off2 + 9 * pair_slot(a, b);
                    for ja in -1..=1 {
                        for jb in -1..=1 {
                            s.data[base + 3 * jx(ja) + jx(jb)] = expect_multi(rho, &[a, b], &[ja, jb])?;
                        }
                    }
                }
            }
        }
        if order >= Order::Three {
            for c in 2..n {
                for b in 1..c {
                    for a in 0..b {
                        let base = s.off3 + 27 * triple_slot(a, b, c);
                        for ja in -1..=1 {
                            for jb in -1..=1 {
                                for jc in -1..=1 {
                                    s.data[base + 9 * jx(ja) + 3 * jx(jb) + jx(jc)] =
                                        expect_multi(rho, &[a, b, c], &[ja, jb, jc])?;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn n_pairs(&self) -> usize {
        (self.off3 - self.off2) / 9
    }

    pub fn n_triples(&self) -> usize {
        (self.data.len() - self.off3) / 27
    }

    /// Flat storage, in the layout described on the type.
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub(crate) fn off2(&self) -> usize {
        self.off2
    }

    pub(crate) fn zeroed(&self) -> Self {
        HierarchyState {
            data: vec![ZERO; self.data.len()],
            ..*self
        }
    }

    /// ⟨Qₙʲ⟩.
    #[inline]
    pub fn single(&self, n: usize, j: i8) -> C64 {
        self.data[3 * n + jx(j)]
    }

    /// ⟨Qₐʲᵃ Q_bʲᵇ⟩ for a stored pair, either index order.
    #[inline]
    pub fn pair(&self, a: usize, ja: i8, b: usize, jb: i8) -> C64 {
        if a < b {
            self.data[self.off2 + 9 * pair_slot(a, b) + 3 * jx(ja) + jx(jb)]
        } else {
            self.data[self.off2 + 9 * pair_slot(b, a) + 3 * jx(jb) + jx(ja)]
        }
    }

    /// Flat index of a stored entry; `ops` must be sorted and within order.
    #[inline]
    pub(crate) fn index(&self, ops: &Ops) -> usize {
        match ops.len() {
            1 => 3 * ops.site(0) + jx(ops.j(0)),
            2 => self.off2 + 9 * pair_slot(ops.site(0), ops.site(1)) + 3 * jx(ops.j(0)) + jx(ops.j(1)),
            _ => {
                self.off3
                    + 27 * triple_slot(ops.site(0), ops.site(1), ops.site(2))
                    + 9 * jx(ops.j(0))
                    + 3 * jx(ops.j(1))
                    + jx(ops.j(2))
            }
        }
    }

    /// Expectation of a sorted operator product; products beyond the stored
    /// order are closed by setting the higher cumulants to zero.
    #[inline]
    pub(crate) fn eval(&self, ops: &Ops) -> C64 {
        let len = ops.len();
        if len == 0 {
            ONE
        } else if len <= self.order.get() {
            self.data[self.index(ops)]
        } else {
            closure::close(ops, &|sub: &Ops| self.eval(sub))
        }
    }

    /// ⟨Π Q⟩ for up to five operators on distinct atoms.
    pub fn get_expectation(&self, indices: &[usize], js: &[i8]) -> Result<C64> {
        if indices.len() != js.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                found: js.len(),
            });
        }
        if indices.is_empty() || indices.len() > 5 {
            return invalid(format!("expected 1..=5 operators, got {}", indices.len()));
        }
        let mut ops = Ops::EMPTY;
        for (&i, &j) in indices.iter().zip(js) {
            if i >= self.n {
                return invalid(format!("atom index {i} out of range for {} atoms", self.n));
            }
            check_j(j)?;
            if ops.contains(i) {
                return invalid(format!("atom index {i} repeated in operator product"));
            }
            ops.push(i, j);
        }
        Ok(self.eval(&ops))
    }

    /// Calls `f` with every stored operator product and its flat index.
    pub(crate) fn for_each_entry(&self, mut f: impl FnMut(usize, &Ops)) {
        for k in 0..self.n {
            for j in -1..=1i8 {
                let ops = Ops::from_pairs(&[(k, j)]);
                f(self.index(&ops), &ops);
            }
        }
        if self.order >= Order::Two {
            for b in 1..self.n {
                for a in 0..b {
                    for ja in -1..=1i8 {
                        for jb in -1..=1i8 {
                            let ops = Ops::from_pairs(&[(a, ja), (b, jb)]);
                            f(self.index(&ops), &ops);
                        }
                    }
                }
            }
        }
        if self.order >= Order::Three {
            for c in 2..self.n {
                for b in 1..c {
                    for a in 0..b {
                        for ja in -1..=1i8 {
                            for jb in -1..=1i8 {
                                for jc in -1..=1i8 {
                                    let ops = Ops::from_pairs(&[(a, ja), (b, jb), (c, jc)]);
                                    f(self.index(&ops), &ops);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Largest |⟨X⟩ − ⟨X†⟩*| over stored entries; zero for states that come
    /// from a Hermitian density matrix.
    pub fn hermitian_symmetry_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        self.for_each_entry(|idx, ops| {
            let partner = self.data[self.index(&ops.negated())];
            worst = worst.max((self.data[idx] - partner.conj()).norm());
        });
        worst
    }

    /// Largest deviation between two states of identical shape.
    pub fn max_abs_diff(&self, other: &HierarchyState) -> Result<f64> {
        if self.data.len() != other.data.len() || self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

impl OdeState for HierarchyState {
    fn values(&self) -> &[C64] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    fn tracked(&self) -> Vec<C64> {
        self.data[..3 * self.n].to_vec()
    }
}
