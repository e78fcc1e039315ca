//! Orders 1 and 2 with the sums over external atoms factored.
//!
//! At order 2 every external sum reduces to three kinds of precomputed
//! quantities per coupling sign: Σₗ g_xl⟨Qₗ⟩, Σₗ g_xl⟨Qₓ Qₗ⟩ and the matrix
//! product Σₗ g_xl⟨Q_y Qₗ⟩. The last one carries the O(N³) cost.

use num_complex::Complex64 as C64;

use super::state::HierarchyState;
use super::terms::{OneAtomTerms, TwoAtomTensors};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    n: usize,
    /// Σ_{l≠x} g±_xl ⟨Qₗ^{∓1}⟩, indexed [sign][x].
    a: [Vec<C64>; 2],
    /// Σ_{l≠x} g±_xl ⟨Qₓᵃ Qₗ^{∓1}⟩, indexed [sign][3x + a + 1].
    b: [Vec<C64>; 2],
    /// Σ_{l∉{x,y}} g±_xl ⟨Q_yᵇ Qₗ^{∓1}⟩ as split real and imaginary parts,
    /// indexed [sign][x·3n + (b+1)·n + y].
    k_re: [Vec<f64>; 2],
    k_im: [Vec<f64>; 2],
    /// ⟨Q_yᵇ Qₗ^{-1}⟩ laid out like `k` with rows l, zero where l = y.
    m_re: Vec<f64>,
    m_im: Vec<f64>,
    /// ⟨Qₓᵃ Q_yᵇ⟩ for every ordered pair, at 9(xn + y) + 3(a+1) + b+1; zero
    /// blocks on the diagonal.
    p: Vec<C64>,
    /// g± with zero diagonal, split.
    g_re: [Vec<f64>; 2],
    g_im: [Vec<f64>; 2],
}

impl Scratch {
    pub(crate) fn new(n: usize) -> Self {
        let wide = || vec![0.0; 3 * n * n];
        Scratch {
            n,
            a: [vec![ZERO; n], vec![ZERO; n]],
            b: [vec![ZERO; 3 * n], vec![ZERO; 3 * n]],
            k_re: [wide(), wide()],
            k_im: [wide(), wide()],
            m_re: wide(),
            m_im: wide(),
            p: vec![ZERO; 9 * n * n],
            g_re: [Vec::new(), Vec::new()],
            g_im: [Vec::new(), Vec::new()],
        }
    }

    fn load_couplings(&mut self, two: &TwoAtomTensors) {
        if self.g_re[0].len() == self.n * self.n {
            return;
        }
        let c = two.couplings();
        for (sg, g) in [c.g_plus_matrix(), c.g_minus_matrix()].into_iter().enumerate() {
            self.g_re[sg] = g.iter().map(|z| z.re).collect();
            self.g_im[sg] = g.iter().map(|z| z.im).collect();
            for x in 0..self.n {
                self.g_re[sg][x * self.n + x] = 0.0;
                self.g_im[sg][x * self.n + x] = 0.0;
            }
        }
    }
}

#[inline(always)]
fn row(m: &[f64], w: usize, l: usize) -> &[f64] {
    &m[l * w..(l + 1) * w]
}

/// K[x, :] = Σₗ g[x, l] M[l, :] for an n×n `g` and n×w `M`, split storage.
struct Product<'a> {
    n: usize,
    w: usize,
    g_re: &'a [f64],
    g_im: &'a [f64],
    m_re: &'a [f64],
    m_im: &'a [f64],
}

impl Product<'_> {
    #[inline(always)]
    fn run(&self, k_re: &mut [f64], k_im: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        let (mr, mi) = (self.m_re, self.m_im);
        for x in 0..n {
            let kr = &mut k_re[x * w..(x + 1) * w];
            let ki = &mut k_im[x * w..(x + 1) * w];
            kr.fill(0.0);
            ki.fill(0.0);
            let gr = &self.g_re[x * n..(x + 1) * n];
            let gi = &self.g_im[x * n..(x + 1) * n];
            let mut l = 0;
            while l + 4 <= n {
                let (m0r, m1r, m2r, m3r) = (row(mr, w, l), row(mr, w, l + 1), row(mr, w, l + 2), row(mr, w, l + 3));
                let (m0i, m1i, m2i, m3i) = (row(mi, w, l), row(mi, w, l + 1), row(mi, w, l + 2), row(mi, w, l + 3));
                let (a0, a1, a2, a3) = (gr[l], gr[l + 1], gr[l + 2], gr[l + 3]);
                let (b0, b1, b2, b3) = (gi[l], gi[l + 1], gi[l + 2], gi[l + 3]);
                for y in 0..w {
                    kr[y] += (a0 * m0r[y] - b0 * m0i[y] + a1 * m1r[y] - b1 * m1i[y])
                        + (a2 * m2r[y] - b2 * m2i[y] + a3 * m3r[y] - b3 * m3i[y]);
                    ki[y] += (a0 * m0i[y] + b0 * m0r[y] + a1 * m1i[y] + b1 * m1r[y])
                        + (a2 * m2i[y] + b2 * m2r[y] + a3 * m3i[y] + b3 * m3r[y]);
                }
                l += 4;
            }
            for l in l..n {
                let (a, b) = (gr[l], gi[l]);
                let (rm, im) = (&mr[l * w..(l + 1) * w], &mi[l * w..(l + 1) * w]);
                for y in 0..w {
                    kr[y] += a * rm[y] - b * im[y];
                    ki[y] += a * im[y] + b * rm[y];
                }
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn run_avx2(&self, k_re: &mut [f64], k_im: &mut [f64]) {
        self.run(k_re, k_im)
    }

    fn dispatch(&self, k_re: &mut [f64], k_im: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
                // SAFETY: the required CPU features were detected at runtime.
                unsafe { self.run_avx2(k_re, k_im) };
                return;
            }
        }
        self.run(k_re, k_im)
    }
}

#[inline]
fn one_atom_single(one: &OneAtomTerms, s: &HierarchyState, x: usize, j: i8) -> C64 {
    let r = (j + 1) as usize;
    one.s[x][r] + one.w[x][r][0] * s.single(x, -1) + one.w[x][r][1] * s.single(x, 0) + one.w[x][r][2] * s.single(x, 1)
}

fn fill_a(state: &HierarchyState, two: &TwoAtomTensors, scratch: &mut Scratch) {
    let n = state.n_atoms();
    let c = two.couplings();
    for x in 0..n {
        let (mut ap, mut am) = (ZERO, ZERO);
        for l in (0..n).filter(|l| *l != x) {
            ap += c.g_plus(x, l) * state.single(l, -1);
            am += c.g_minus(x, l) * state.single(l, 1);
        }
        scratch.a[0][x] = ap;
        scratch.a[1][x] = am;
    }
}

pub(crate) fn order_one(
    state: &HierarchyState,
    one: &OneAtomTerms,
    two: &TwoAtomTensors,
    linear: bool,
    scratch: &mut Scratch,
    out: &mut HierarchyState,
) {
    let n = state.n_atoms();
    fill_a(state, two, scratch);
    let d = out.data_mut();
    for x in 0..n {
        let (ap, am) = (scratch.a[0][x], scratch.a[1][x]);
        if linear {
            // ⟨e⟩ = 0 everywhere, including inside W.
            let r0 = &one.w[x][0];
            let r2 = &one.w[x][2];
            d[3 * x] = one.s[x][0] + r0[0] * state.single(x, -1) + r0[2] * state.single(x, 1) - ap;
            d[3 * x + 1] = ZERO;
            d[3 * x + 2] = one.s[x][2] + r2[0] * state.single(x, -1) + r2[2] * state.single(x, 1) - am;
        } else {
            let e = state.single(x, 0);
            d[3 * x] = one_atom_single(one, state, x, -1) + ap * (2.0 * e - 1.0);
            d[3 * x + 1] = one_atom_single(one, state, x, 0) - state.single(x, 1) * ap - state.single(x, -1) * am;
            d[3 * x + 2] = one_atom_single(one, state, x, 1) + am * (2.0 * e - 1.0);
        }
    }
}

pub(crate) fn order_two(
    state: &HierarchyState,
    one: &OneAtomTerms,
    two: &TwoAtomTensors,
    scratch: &mut Scratch,
    out: &mut HierarchyState,
) {
    let n = state.n_atoms();
    debug_assert_eq!(scratch.n, n);
    let c = two.couplings();
    let gmat = [c.g_plus_matrix(), c.g_minus_matrix()];
    // Sign index 0 pairs g⁺ with Q^{-1}; index 1 pairs g⁻ with Q^{+1}.
    let lj = [0usize, 2];
    let off2 = state.off2();
    let data = state.data();

    scratch.load_couplings(two);
    let p = &mut scratch.p;
    for y in 1..n {
        for x in 0..y {
            let src = &data[off2 + 9 * super::state::pair_slot(x, y)..][..9];
            let (xy, yx) = (9 * (x * n + y), 9 * (y * n + x));
            p[xy..xy + 9].copy_from_slice(src);
            for a in 0..3 {
                for b in 0..3 {
                    p[yx + 3 * b + a] = src[3 * a + b];
                }
            }
        }
    }

    fill_a(state, two, scratch);
    let w = 3 * n;
    for sg in 0..2 {
        let g = gmat[sg];
        for x in 0..n {
            let mut acc = [ZERO; 3];
            for l in (0..n).filter(|l| *l != x) {
                let blk = &scratch.p[9 * (x * n + l)..][..9];
                for (a, v) in acc.iter_mut().enumerate() {
                    *v += g[x * n + l] * blk[3 * a + lj[sg]];
                }
            }
            scratch.b[sg][3 * x..3 * x + 3].copy_from_slice(&acc);
        }
    }

    // M[l][b][y] = ⟨Q_y^b Qₗ^{-1}⟩, read from the (l, y) block.
    for l in 0..n {
        for y in 0..n {
            let blk = &scratch.p[9 * (l * n + y)..][..3];
            for (b, v) in blk.iter().enumerate() {
                scratch.m_re[l * w + b * n + y] = v.re;
                scratch.m_im[l * w + b * n + y] = v.im;
            }
        }
    }
    let product = Product {
        n,
        w,
        g_re: &scratch.g_re[0],
        g_im: &scratch.g_im[0],
        m_re: &scratch.m_re,
        m_im: &scratch.m_im,
    };
    let [k_re, k_im] = [&mut scratch.k_re, &mut scratch.k_im];
    product.dispatch(&mut k_re[0], &mut k_im[0]);
    // g⁻ = (g⁺)* and ⟨Q_yᵇ Qₗ⁺⟩ = ⟨Q_y⁻ᵇ Qₗ⁻⟩*, so K⁻ is K⁺ conjugated with b
    // reversed.
    let (kr0, kr1) = k_re.split_at_mut(1);
    let (ki0, ki1) = k_im.split_at_mut(1);
    for x in 0..n {
        for b in 0..3 {
            let (dst, src) = (x * w + b * n, x * w + (2 - b) * n);
            kr1[0][dst..dst + n].copy_from_slice(&kr0[0][src..src + n]);
            for (d, s) in ki1[0][dst..dst + n].iter_mut().zip(&ki0[0][src..src + n]) {
                *d = -s;
            }
        }
    }

    let scratch = &*scratch;
    let d = out.data_mut();
    let single = |x: usize| -> [C64; 3] { [data[3 * x], data[3 * x + 1], data[3 * x + 2]] };

    // Singles.
    for x in 0..n {
        let b = &scratch.b;
        d[3 * x] = one_atom_single(one, state, x, -1) - scratch.a[0][x] + 2.0 * b[0][3 * x + 1];
        d[3 * x + 1] = one_atom_single(one, state, x, 0) - b[0][3 * x + 2] - b[1][3 * x];
        d[3 * x + 2] = one_atom_single(one, state, x, 1) - scratch.a[1][x] + 2.0 * b[1][3 * x + 1];
    }

    // Σ_{l∉{x,y}} of the V and U terms for slot x, partner y fixed, all
    // nine (jx, jy), added into `acc[3jx + jy]`.
    let external = |x: usize, y: usize, swap: bool, acc: &mut [C64; 9]| {
        let (sx, sy) = (single(x), single(y));
        let blk = &scratch.p[9 * (x * n + y)..][..9];
        // Reduced A and B: the l = y term removed.
        let mut ar = [ZERO; 2];
        let mut br = [[ZERO; 3]; 2];
        for sg in 0..2 {
            let g = gmat[sg][x * n + y];
            ar[sg] = scratch.a[sg][x] - g * sy[lj[sg]];
            for jp in 0..3 {
                br[sg][jp] = scratch.b[sg][3 * x + jp] - g * blk[3 * jp + lj[sg]];
            }
        }
        for jy in 0..3 {
            let i = x * w + jy * n + y;
            let k = |sg: usize| C64::new(scratch.k_re[sg][i], scratch.k_im[sg][i]);
            let (k0, k1) = (k(0), k(1));
            let r = [k0 - 2.0 * sy[jy] * ar[0], k1 - 2.0 * sy[jy] * ar[1]];
            let t = |sg: usize, jp: usize| -> C64 { blk[3 * jp + jy] * ar[sg] + br[sg][jp] * sy[jy] + sx[jp] * r[sg] };
            let v = [-k0 + 2.0 * t(0, 1), -t(0, 2) - t(1, 0), -k1 + 2.0 * t(1, 1)];
            for (jx, v) in v.into_iter().enumerate() {
                acc[if swap { 3 * jy + jx } else { 3 * jx + jy }] += v;
            }
        }
    };

    for y in 1..n {
        for x in 0..y {
            let base = off2 + 9 * super::state::pair_slot(x, y);
            let blk = &scratch.p[9 * (x * n + y)..][..9];
            let (sx, sy) = (single(x), single(y));
            let (gp, gm, gam) = (c.g_plus(x, y), c.g_minus(x, y), c.gamma(x, y));
            let (wx, wy) = (&one.w[x], &one.w[y]);
            let mut acc = [ZERO; 9];
            for rx in 0..3 {
                for ry in 0..3 {
                    let mut v = one.s[x][rx] * sy[ry] + one.s[y][ry] * sx[rx];
                    for jp in 0..3 {
                        v += wx[rx][jp] * blk[3 * jp + ry] + wy[ry][jp] * blk[3 * rx + jp];
                    }
                    acc[3 * rx + ry] = v;
                }
            }
            let ee = 2.0 * gam * blk[4];
            acc[2] += ee - gp * sy[1] - gm * sx[1];
            acc[6] += ee - gm * sy[1] - gp * sx[1];
            acc[5] += -gp * blk[7];
            acc[3] += -gm * blk[1];
            acc[7] += -gp * blk[5];
            acc[1] += -gm * blk[3];
            external(x, y, false, &mut acc);
            external(y, x, true, &mut acc);
            d[base..base + 9].copy_from_slice(&acc);
        }
    }
}
