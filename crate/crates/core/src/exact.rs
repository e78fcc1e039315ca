//! Full N-atom density-matrix evolution.
//!
//! States are dense `2^N × 2^N` matrices in the product basis where bit `n`
//! of a basis index set means atom `n` is excited. Operators act through bit
//! strides; no superoperator is ever formed.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{AtomArray, DetectionDirection, DriveField};
use crate::integrate::{evolve_sampled, evolve_to_steady, OdeState, SteadyCriterion, SteadyState, StepControl};
use crate::kernel::CouplingSet;

/// Largest array the dense solver accepts.
pub const MAX_EXACT_ATOMS: usize = 12;

/// Imaginary residue tolerated on quantities that must be real.
pub const REAL_TOLERANCE: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Single-atom operator labels, `j ∈ {−1, 0, +1}` for σ⁻, e, σ⁺.
pub fn check_j(j: i8) -> Result<()> {
    if (-1..=1).contains(&j) {
        Ok(())
    } else {
        invalid(format!("operator label j = {j} is not in {{-1, 0, 1}}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    fn check_size(n: usize) -> Result<()> {
        if n == 0 || n > MAX_EXACT_ATOMS {
            return invalid(format!("exact solver supports 1..={MAX_EXACT_ATOMS} atoms, got {n}"));
        }
        Ok(())
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::check_size(n)?;
        let dim = 1usize << n;
        Ok(DensityMatrix {
            n,
            dim,
            data: vec![ZERO; dim * dim],
        })
    }

    /// |b⟩⟨b| for basis index `b`.
    pub fn basis_state(n: usize, b: usize) -> Result<Self> {
        let mut rho = Self::zeros(n)?;
        if b >= rho.dim {
            return invalid(format!("basis index {b} out of range"));
        }
        let dim = rho.dim;
        rho.data[b * dim + b] = C64::new(1.0, 0.0);
        Ok(rho)
    }

    pub fn ground(n: usize) -> Result<Self> {
        Self::basis_state(n, 0)
    }

    pub fn all_excited(n: usize) -> Result<Self> {
        Self::basis_state(n, (1usize << n) - 1)
    }

    /// Tensor product of single-atom 2×2 matrices, given in the
    /// (g, e) basis and ordered by atom index.
    pub fn product(single: &[[[C64; 2]; 2]]) -> Result<Self> {
        let n = single.len();
        let mut rho = Self::zeros(n)?;
        let dim = rho.dim;
        for a in 0..dim {
            for b in 0..dim {
                let mut v = C64::new(1.0, 0.0);
                for (k, m) in single.iter().enumerate() {
                    v *= m[(a >> k) & 1][(b >> k) & 1];
                }
                rho.data[a * dim + b] = v;
            }
        }
        Ok(rho)
    }

    /// Builds from a row-major `2^n × 2^n` array.
    pub fn from_data(n: usize, data: Vec<C64>) -> Result<Self> {
        Self::check_size(n)?;
        let dim = 1usize << n;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(DensityMatrix { n, dim, data })
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.data[a * self.dim + b]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }

    /// max |ρ_ab − ρ_ba*|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.dim {
            for b in a..self.dim {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }

    /// Replaces ρ by (ρ + ρ†)/2.
    pub fn hermitize(&mut self) {
        let d = self.dim;
        for a in 0..d {
            for b in a..d {
                let z = 0.5 * (self.data[a * d + b] + self.data[b * d + a].conj());
                self.data[a * d + b] = z;
                self.data[b * d + a] = z.conj();
            }
        }
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |a, b| {
            0.5 * (self.get(a, b) + self.get(b, a).conj())
        });
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Divides every entry by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        let inv = 1.0 / s;
        self.data.iter_mut().for_each(|z| *z *= inv);
        self
    }

    fn check_atom(&self, n: usize) -> Result<()> {
        if n >= self.n {
            return invalid(format!("atom index {n} out of range for {} atoms", self.n));
        }
        Ok(())
    }
}

impl OdeState for DensityMatrix {
    fn values(&self) -> &[C64] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    fn tracked(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(2 * self.n);
        for n in 0..self.n {
            out.push(single_unchecked(self, n, -1));
            out.push(single_unchecked(self, n, 0));
        }
        out
    }
}

/// Tr[Q̂ₙʲ ρ].
pub fn expect_single(rho: &DensityMatrix, n: usize, j: i8) -> Result<C64> {
    rho.check_atom(n)?;
    check_j(j)?;
    Ok(single_unchecked(rho, n, j))
}

fn single_unchecked(rho: &DensityMatrix, n: usize, j: i8) -> C64 {
    expect_unchecked(rho, &[n], &[j])
}

/// Tr[Π Q̂ ρ] for operators on pairwise distinct atoms.
pub fn expect_multi(rho: &DensityMatrix, indices: &[usize], js: &[i8]) -> Result<C64> {
    if indices.len() != js.len() {
        return Err(Error::DimensionMismatch {
            expected: indices.len(),
            found: js.len(),
        });
    }
    for (k, &n) in indices.iter().enumerate() {
        rho.check_atom(n)?;
        check_j(js[k])?;
        if indices[..k].contains(&n) {
            return invalid(format!("atom index {n} repeated in operator product"));
        }
    }
    Ok(expect_unchecked(rho, indices, js))
}

// Tr[X ρ] = Σ_ab X_ba ρ_ab. For a product of single-site operators, X_ba is
// 1 exactly when every listed site matches its pattern and all other bits
// agree.
fn expect_unchecked(rho: &DensityMatrix, indices: &[usize], js: &[i8]) -> C64 {
    let mut need_a = 0usize; // bits required set in the ket index a
    let mut mask = 0usize;
    let mut flip = 0usize;
    for (&n, &j) in indices.iter().zip(js) {
        let bit = 1usize << n;
        mask |= bit;
        match j {
            -1 => {
                need_a |= bit;
                flip |= bit;
            }
            0 => need_a |= bit,
            _ => flip |= bit,
        }
    }
    let mut acc = ZERO;
    for a in 0..rho.dim {
        if a & mask == need_a {
            acc += rho.get(a, a ^ flip);
        }
    }
    acc
}

pub(crate) fn real_checked(z: C64, what: &'static str) -> Result<f64> {
    if z.im.abs() > REAL_TOLERANCE * z.re.abs().max(1.0) {
        return Err(Error::Consistency {
            what,
            residue: z.im.abs(),
        });
    }
    Ok(z.re)
}

/// ⟨σ̂⁺σ̂⁻⟩ for the collective lowering operator along `dir`.
pub fn detector_expectation(rho: &DensityMatrix, dir: &DetectionDirection) -> Result<f64> {
    if dir.n_atoms() != rho.n {
        return Err(Error::DimensionMismatch {
            expected: rho.n,
            found: dir.n_atoms(),
        });
    }
    let mut acc = ZERO;
    for l in 0..rho.n {
        acc += single_unchecked(rho, l, 0);
        for m in 0..rho.n {
            if m != l {
                acc += dir.phase(m, l) * expect_unchecked(rho, &[m, l], &[1, -1]);
            }
        }
    }
    real_checked(acc, "detector expectation")
}

/// σ̂⁻ρσ̂⁺ (unnormalized) and its trace.
pub fn project_detection(rho: &DensityMatrix, dir: &DetectionDirection) -> Result<(DensityMatrix, f64)> {
    if dir.n_atoms() != rho.n {
        return Err(Error::DimensionMismatch {
            expected: rho.n,
            found: dir.n_atoms(),
        });
    }
    let (n, dim) = (rho.n, rho.dim);
    // e^{-ik·R_l} up to a global phase that cancels between σ̂⁻ and σ̂⁺.
    let c: Vec<C64> = (0..n).map(|l| dir.phase(0, l)).collect();
    let mut x = vec![ZERO; dim * dim];
    for (l, cl) in c.iter().enumerate() {
        let bit = 1usize << l;
        for a in (0..dim).filter(|a| a & bit == 0) {
            let row = (a | bit) * dim;
            let src = &rho.data[row..row + dim];
            let dst = &mut x[a * dim..a * dim + dim];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += cl * s;
            }
        }
    }
    let mut out = DensityMatrix::zeros(n)?;
    for (m, cm) in c.iter().enumerate() {
        let bit = 1usize << m;
        let cc = cm.conj();
        for a in 0..dim {
            let row = a * dim;
            for b in (0..dim).filter(|b| b & bit == 0) {
                out.data[row + b] += x[row + (b | bit)] * cc;
            }
        }
    }
    // Integration leaves an anti-Hermitian residue that the division by a
    // small norm would amplify.
    out.hermitize();
    let norm = real_checked(out.trace(), "projection norm")?;
    if norm <= 1e-14 {
        return Err(Error::ProjectionDegenerate { norm });
    }
    Ok((out, norm))
}

/// Right-hand side of the master equation for one array and drive.
///
/// Written as dρ/dt = −i(H ρ − ρ H†) + Σ_nm Γ_nm σ⁻ₙ ρ σ⁺ₘ with the
/// non-Hermitian H = Σₙ(Ω⁺ₙ/2 σ⁺ₙ + Ω⁻ₙ/2 σ⁻ₙ − (Δₙ + iΓ/2) eₙ)
/// − i Σ_{n≠m} g⁺_nm σ⁺ₙσ⁻ₘ and Γ_nn = Γ.
#[derive(Debug, Clone)]
pub struct Lindblad {
    n: usize,
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    gamma: Vec<f64>,
}

impl Lindblad {
    pub fn new(couplings: &CouplingSet, drive: &DriveField) -> Result<Self> {
        let n = couplings.n_atoms();
        DensityMatrix::check_size(n)?;
        drive.check(n)?;
        let dim = 1usize << n;
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for a in 0..dim {
            row_start.push(cols.len());
            let mut diag = ZERO;
            for k in 0..n {
                if a >> k & 1 == 1 {
                    diag += C64::new(-drive.detuning[k], -0.5);
                }
            }
            if diag != ZERO {
                cols.push(a);
                vals.push(diag);
            }
            for k in 0..n {
                let bit = 1usize << k;
                // σ⁺ₖ raises c = a − bit into a; σ⁻ₖ lowers c = a + bit.
                let (c, v) = if a & bit != 0 {
                    (a ^ bit, drive.rabi[k] * 0.5)
                } else {
                    (a | bit, drive.rabi_minus(k) * 0.5)
                };
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            for p in 0..n {
                if a >> p & 1 == 0 {
                    continue;
                }
                for q in 0..n {
                    if q == p || a >> q & 1 == 1 {
                        continue;
                    }
                    let v = -I * couplings.g_plus(p, q);
                    if v != ZERO {
                        cols.push(a ^ (1 << p) ^ (1 << q));
                        vals.push(v);
                    }
                }
            }
        }
        row_start.push(cols.len());
        let mut gamma = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                gamma[p * n + q] = if p == q { 1.0 } else { couplings.gamma(p, q) };
            }
        }
        Ok(Lindblad {
            n,
            dim,
            row_start,
            cols,
            vals,
            gamma,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    /// Writes dρ/dt into `out`.
    ///
    /// Each sum is accumulated so that entry (b, a) repeats the operations
    /// of entry (a, b) in conjugated form; a Hermitian ρ then yields an
    /// exactly Hermitian derivative.
    pub fn apply(&self, rho: &DensityMatrix, out: &mut DensityMatrix) {
        let dim = self.dim;
        let r = &rho.data;
        let o = &mut out.data;
        o.iter_mut().for_each(|z| *z = ZERO);
        // −i H ρ
        for a in 0..dim {
            let dst = a * dim;
            for k in self.row_start[a]..self.row_start[a + 1] {
                let h = -I * self.vals[k];
                let src = self.cols[k] * dim;
                for b in 0..dim {
                    o[dst + b] += h * r[src + b];
                }
            }
        }
        // + i ρ H†: (ρH†)_ab = Σ_c ρ_ac conj(H_bc), summed per entry
        for a in 0..dim {
            let row = &r[a * dim..(a + 1) * dim];
            for b in 0..dim {
                let mut acc = ZERO;
                for k in self.row_start[b]..self.row_start[b + 1] {
                    acc += I * self.vals[k].conj() * row[self.cols[k]];
                }
                o[a * dim + b] += acc;
            }
        }
        // Σ_pq Γ_pq σ⁻_p ρ σ⁺_q with the (p, q) and (q, p) terms added as one
        for p in 0..self.n {
            let bp = 1usize << p;
            for q in p..self.n {
                let g = self.gamma[p * self.n + q];
                if g == 0.0 {
                    continue;
                }
                let bq = 1usize << q;
                for a in 0..dim {
                    let (pa, qa) = (a & bp == 0, p != q && a & bq == 0);
                    if !pa && !qa {
                        continue;
                    }
                    let dst = a * dim;
                    for b in 0..dim {
                        let mut t = ZERO;
                        if pa && b & bq == 0 {
                            t += r[(a | bp) * dim + (b | bq)] * g;
                        }
                        if qa && b & bp == 0 {
                            t += r[(a | bq) * dim + (b | bp)] * g;
                        }
                        o[dst + b] += t;
                    }
                }
            }
        }
    }
}

/// dρ/dt for the given state, drive and couplings.
pub fn lindblad_rhs(rho: &DensityMatrix, drive: &DriveField, couplings: &CouplingSet) -> Result<DensityMatrix> {
    if couplings.n_atoms() != rho.n {
        return Err(Error::DimensionMismatch {
            expected: rho.n,
            found: couplings.n_atoms(),
        });
    }
    let l = Lindblad::new(couplings, drive)?;
    let mut out = DensityMatrix::zeros(rho.n)?;
    l.apply(rho, &mut out);
    Ok(out)
}

/// Evolves from the ground state until the steady criterion holds.
pub fn steady_state(
    lindblad: &Lindblad,
    criterion: &SteadyCriterion,
    control: &StepControl,
) -> Result<SteadyState<DensityMatrix>> {
    let rho0 = DensityMatrix::ground(lindblad.n)?;
    evolve_to_steady(&rho0, |_, r, o| lindblad.apply(r, o), criterion, control)
}

/// Normalized intensity correlation g²(τ) starting from a given state:
/// project, normalize, re-evolve and divide by the detector signal of `rho`.
pub fn g2_from_state(
    rho: &DensityMatrix,
    lindblad: &Lindblad,
    dir: &DetectionDirection,
    tau_grid: &[f64],
    control: &StepControl,
) -> Result<Vec<f64>> {
    let (projected, norm) = project_detection(rho, dir)?;
    let post = projected.scaled(norm);
    let (vals, _) = evolve_sampled(
        &post,
        0.0,
        tau_grid,
        |_, r, o| lindblad.apply(r, o),
        control,
        |_, r| detector_expectation(r, dir),
    )?;
    vals.into_iter().map(|v| v.map(|x| x / norm)).collect()
}

/// g²(τ) after evolving from the ground state for `t_steady`.
pub fn g2_exact(
    array: &AtomArray,
    drive: &DriveField,
    dir: &DetectionDirection,
    t_steady: f64,
    tau_grid: &[f64],
    control: &StepControl,
) -> Result<Vec<f64>> {
    let couplings = CouplingSet::new(array)?;
    let lindblad = Lindblad::new(&couplings, drive)?;
    let rho0 = DensityMatrix::ground(array.n_atoms())?;
    let (_, rho) = evolve_sampled(
        &rho0,
        0.0,
        &[t_steady],
        |_, r, o| lindblad.apply(r, o),
        control,
        |_, _| (),
    )?;
    g2_from_state(&rho, &lindblad, dir, tau_grid, control)
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::geometry::{build_line_array, plane_wave_drive, TransitionKind, Vec3};
    use crate::integrate::evolve;

    type M = DMatrix<C64>;

    // Dense reference operators, built with Kronecker products and the
    // master equation written term by term (no effective Hamiltonian).
    fn site_op(n_atoms: usize, site: usize, op: &M) -> M {
        let id = |d: usize| M::identity(d, d);
        id(1 << (n_atoms - 1 - site)).kronecker(op).kronecker(&id(1 << site))
    }

    fn sp() -> M {
        M::from_row_slice(2, 2, &[ZERO, ZERO, C64::new(1.0, 0.0), ZERO])
    }
    fn sm() -> M {
        sp().adjoint()
    }
    fn ee() -> M {
        M::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, C64::new(1.0, 0.0)])
    }

    fn to_dense(rho: &DensityMatrix) -> M {
        M::from_row_slice(rho.dim, rho.dim, &rho.data)
    }

    /// Column-stacking vec: vec(AXB) = (Bᵀ ⊗ A) vec(X).
    fn superoperator(c: &CouplingSet, drive: &DriveField) -> M {
        let n = c.n_atoms();
        let dim = 1usize << n;
        let id = M::identity(dim, dim);
        let left = |a: &M| id.kronecker(a);
        let right = |b: &M| b.transpose().kronecker(&id);
        let mut h = M::zeros(dim, dim);
        for k in 0..n {
            h += site_op(n, k, &sp()) * (drive.rabi[k] * 0.5) + site_op(n, k, &sm()) * (drive.rabi[k].conj() * 0.5)
                - site_op(n, k, &ee()) * C64::new(drive.detuning[k], 0.0);
        }
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    h += site_op(n, p, &sp()) * site_op(n, q, &sm()) * C64::new(c.omega(p, q), 0.0);
                }
            }
        }
        let mut s = (left(&h) - right(&h)) * (-I);
        for p in 0..n {
            for q in 0..n {
                let g = if p == q { 1.0 } else { c.gamma(p, q) };
                let a = site_op(n, p, &sm());
                let b = site_op(n, q, &sp());
                let ba = &b * &a;
                s += (left(&a) * right(&b) * C64::new(2.0, 0.0) - left(&ba) - right(&ba)) * C64::new(g / 2.0, 0.0);
            }
        }
        s
    }

    fn apply_super(s: &M, rho: &DensityMatrix) -> M {
        let dim = rho.dim;
        let dense = to_dense(rho);
        let v = M::from_iterator(dim * dim, 1, dense.iter().cloned());
        let out = s * v;
        M::from_iterator(dim, dim, out.iter().cloned())
    }

    fn max_diff(a: &M, b: &DensityMatrix) -> f64 {
        let mut w: f64 = 0.0;
        for i in 0..b.dim {
            for j in 0..b.dim {
                w = w.max((a[(i, j)] - b.get(i, j)).norm());
            }
        }
        w
    }

    fn line(n: usize, d: f64, t: TransitionKind) -> AtomArray {
        build_line_array(n, d, Vec3::z(), t).unwrap()
    }

    #[test]
    fn single_atom_decay() {
        let arr = line(1, 0.1, TransitionKind::DeltaM0);
        let c = CouplingSet::new(&arr).unwrap();
        let rho = DensityMatrix::all_excited(1).unwrap();
        let d = lindblad_rhs(&rho, &DriveField::zero(1), &c).unwrap();
        assert_eq!(d.get(0, 0), C64::new(1.0, 0.0));
        assert_eq!(d.get(1, 1), C64::new(-1.0, 0.0));
        assert_eq!(d.get(0, 1), ZERO);
    }

    #[test]
    fn derivative_is_traceless_and_hermitian() {
        let arr = build_line_array(3, 0.3, Vec3::new(0.6, 0.0, 0.8), TransitionKind::DeltaM0).unwrap();
        let c = CouplingSet::new(&arr).unwrap();
        let drive = plane_wave_drive(&arr, 0.8, Vec3::x(), 0.4).unwrap();
        for seed in 0..5 {
            let rho = random_density_matrix(3, seed);
            let d = lindblad_rhs(&rho, &drive, &c).unwrap();
            assert!(d.trace().norm() < 1e-13);
            assert!(d.hermiticity_error() < 1e-13);
        }
    }

    #[test]
    fn matches_superoperator_oracle() {
        for (n, t) in [
            (1, TransitionKind::DeltaM0),
            (2, TransitionKind::DeltaM0),
            (2, TransitionKind::DeltaMpm1),
            (3, TransitionKind::DeltaMpm1),
        ] {
            let arr = build_line_array(n, 0.4, Vec3::new(0.0, 0.6, 0.8), t).unwrap();
            let c = CouplingSet::new(&arr).unwrap();
            let drive = plane_wave_drive(&arr, 1.3, Vec3::x(), -0.7).unwrap();
            let s = superoperator(&c, &drive);
            for seed in 0..3 {
                let rho = random_density_matrix(n, 100 + seed);
                let got = lindblad_rhs(&rho, &drive, &c).unwrap();
                let want = apply_super(&s, &rho);
                assert!(max_diff(&want, &got) < 1e-12, "n={n}: {}", max_diff(&want, &got));
            }
        }
    }

    fn kron_expect(rho: &DensityMatrix, indices: &[usize], js: &[i8]) -> C64 {
        let n = rho.n;
        let mut op = M::identity(rho.dim, rho.dim);
        for (&k, &j) in indices.iter().zip(js) {
            let single = match j {
                -1 => sm(),
                0 => ee(),
                _ => sp(),
            };
            op *= site_op(n, k, &single);
        }
        (op * to_dense(rho)).trace()
    }

    #[test]
    fn multi_expectation_matches_kronecker_oracle() {
        let rho = random_density_matrix(3, 7);
        for j0 in -1..=1i8 {
            assert!((expect_single(&rho, 1, j0).unwrap() - kron_expect(&rho, &[1], &[j0])).norm() < 1e-14);
            for j1 in -1..=1i8 {
                for j2 in -1..=1i8 {
                    let js = [j0, j1, j2];
                    for idx in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
                        let got = expect_multi(&rho, &idx, &js).unwrap();
                        let want = kron_expect(&rho, &idx, &js);
                        assert!((got - want).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn expectation_basics() {
        let g = DensityMatrix::ground(3).unwrap();
        let e = DensityMatrix::all_excited(3).unwrap();
        assert_eq!(expect_single(&g, 2, 0).unwrap(), ZERO);
        assert_eq!(expect_single(&e, 2, 0).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(expect_multi(&e, &[0, 1, 2], &[0, 0, 0]).unwrap(), C64::new(1.0, 0.0));
        let rho = random_density_matrix(2, 3);
        let m = expect_single(&rho, 0, -1).unwrap();
        let p = expect_single(&rho, 0, 1).unwrap();
        assert!((m.conj() - p).norm() < 1e-15);
        assert!(expect_multi(&rho, &[0, 0], &[1, -1]).is_err());
        assert!(expect_single(&rho, 2, 0).is_err());
        assert!(expect_single(&rho, 0, 2).is_err());

        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let qa = random_qubit(&mut rng);
        let qb = random_qubit(&mut rng);
        let prod = DensityMatrix::product(&[qa, qb]).unwrap();
        for ja in -1..=1i8 {
            for jb in -1..=1i8 {
                let pair = expect_multi(&prod, &[0, 1], &[ja, jb]).unwrap();
                let a = expect_single(&prod, 0, ja).unwrap();
                let b = expect_single(&prod, 1, jb).unwrap();
                assert!((pair - a * b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn detector_and_projection() {
        let arr = line(2, 0.3, TransitionKind::DeltaM0);
        let dir = DetectionDirection::in_plane(&arr, 0.3).unwrap();
        let g = DensityMatrix::ground(2).unwrap();
        assert_eq!(detector_expectation(&g, &dir).unwrap(), 0.0);
        assert!(matches!(
            project_detection(&g, &dir),
            Err(Error::ProjectionDegenerate { .. })
        ));

        let one = line(1, 0.3, TransitionKind::DeltaM0);
        let dir1 = DetectionDirection::in_plane(&one, 0.0).unwrap();
        let r1 = random_density_matrix(1, 9);
        assert!((detector_expectation(&r1, &dir1).unwrap() - r1.get(1, 1).re).abs() < 1e-15);
        let (p, norm) = project_detection(&DensityMatrix::all_excited(1).unwrap(), &dir1).unwrap();
        assert_eq!(norm, 1.0);
        assert_eq!(p.get(0, 0), C64::new(1.0, 0.0));
        assert_eq!(p.get(1, 1), ZERO);

        // Trace of the projected matrix versus the expectation-value route.
        let arr3 = build_line_array(3, 0.45, Vec3::new(0.0, 0.6, 0.8), TransitionKind::DeltaM0).unwrap();
        for seed in 0..4 {
            let rho = random_density_matrix(2, 20 + seed);
            let (p, norm) = project_detection(&rho, &dir).unwrap();
            assert!((p.trace().re - detector_expectation(&rho, &dir).unwrap()).abs() < 1e-14);
            assert_eq!(p.trace().re, norm);
            assert!(p.hermiticity_error() < 1e-15);
            let rho3 = random_density_matrix(3, 40 + seed);
            let d3 = DetectionDirection::in_plane(&arr3, 1.1).unwrap();
            let (p3, n3) = project_detection(&rho3, &d3).unwrap();
            assert!((n3 - detector_expectation(&rho3, &d3).unwrap()).abs() < 1e-14);
            assert!(p3.min_eigenvalue() > -1e-14);
        }
    }

    #[test]
    fn evolution_preserves_trace_hermiticity_positivity() {
        let arr = line(4, 0.2, TransitionKind::DeltaMpm1);
        let c = CouplingSet::new(&arr).unwrap();
        let drive = plane_wave_drive(&arr, 1.5, Vec3::x(), 0.3).unwrap();
        let l = Lindblad::new(&c, &drive).unwrap();
        let rho0 = DensityMatrix::ground(4).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| 5.0 * k as f64).collect();
        let (checks, _) = evolve_sampled(
            &rho0,
            0.0,
            &times,
            |_, r, o| l.apply(r, o),
            &StepControl::rk4(5e-3, 60.0),
            |_, r| {
                (
                    (r.trace().re - 1.0).abs(),
                    r.trace().im.abs(),
                    r.hermiticity_error(),
                    r.min_eigenvalue(),
                )
            },
        )
        .unwrap();
        for (dt, im, herm, min_ev) in checks {
            assert!(dt < 1e-10 && im < 1e-12);
            assert!(herm < 1e-12);
            assert!(min_ev > -1e-8);
        }
    }

    fn bloch_excited_population(omega: f64, delta: f64, times: &[f64]) -> Vec<f64> {
        // Single-atom optical Bloch equations for (⟨σ⁻⟩, ⟨e⟩, ⟨σ⁺⟩).
        let o = C64::new(omega, 0.0);
        let rhs = move |_: f64, y: &Vec<C64>, d: &mut Vec<C64>| {
            let (sm, e, sp) = (y[0], y[1], y[2]);
            d[0] = (I * delta - 0.5) * sm + I * o * e - 0.5 * I * o;
            d[1] = 0.5 * I * o.conj() * sm - e - 0.5 * I * o * sp;
            d[2] = -I * o.conj() * e + (-I * delta - 0.5) * sp + 0.5 * I * o.conj();
        };
        let (vals, _) = evolve_sampled(
            &vec![ZERO; 3],
            0.0,
            times,
            rhs,
            &StepControl::rk45(1e-12, 1e-14, 1e3),
            |_, y| y[1].re,
        )
        .unwrap();
        vals
    }

    #[test]
    fn single_atom_g2_matches_bloch_equations() {
        let (omega, delta) = (1.7, 0.6);
        let arr = line(1, 0.1, TransitionKind::DeltaM0);
        let drive = plane_wave_drive(&arr, omega, Vec3::x(), delta).unwrap();
        let dir = DetectionDirection::in_plane(&arr, 0.0).unwrap();
        let taus: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
        let control = StepControl::rk45(1e-11, 1e-13, 1e3);
        let g2 = g2_exact(&arr, &drive, &dir, 60.0, &taus, &control).unwrap();
        let pe_ss = 0.25 * omega * omega / (delta * delta + 0.25 + 0.5 * omega * omega);
        let reference = bloch_excited_population(omega, delta, &taus);
        assert!(g2[0].abs() < 1e-12);
        for (g, p) in g2.iter().zip(&reference) {
            assert!((g - p / pe_ss).abs() < 1e-6, "{g} vs {}", p / pe_ss);
        }
        assert!((g2.last().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn steady_state_detection() {
        let arr = line(2, 0.3, TransitionKind::DeltaM0);
        let c = CouplingSet::new(&arr).unwrap();
        let none = Lindblad::new(&c, &DriveField::zero(2)).unwrap();
        let ss = steady_state(&none, &SteadyCriterion::default(), &StepControl::default()).unwrap();
        assert_eq!(ss.t_steady, 0.0);

        let drive = plane_wave_drive(&arr, 0.5, Vec3::x(), 0.0).unwrap();
        let l = Lindblad::new(&c, &drive).unwrap();
        let ss = steady_state(&l, &SteadyCriterion::default(), &StepControl::rk4(1e-2, 200.0)).unwrap();
        let mut d = DensityMatrix::zeros(2).unwrap();
        l.apply(&ss.state, &mut d);
        assert!(d.data.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-7);
        // Long-delay correlations decay to 1.
        let dir = DetectionDirection::in_plane(&arr, 0.7).unwrap();
        let g = g2_from_state(&ss.state, &l, &dir, &[0.0, 60.0], &StepControl::rk4(1e-2, 100.0)).unwrap();
        assert!((g[1] - 1.0).abs() < 1e-2);
        let _ = evolve(
            &ss.state,
            0.0,
            1.0,
            |_, r, o| l.apply(r, o),
            &StepControl::rk4(1e-2, 2.0),
        )
        .unwrap();
    }

    #[test]
    fn size_limits() {
        assert!(DensityMatrix::zeros(0).is_err());
        assert!(DensityMatrix::zeros(MAX_EXACT_ATOMS + 1).is_err());
    }
}
