//! Moment closures from vanishing cumulants.
//!
//! For a product of `L` operators on distinct atoms, setting the `L`-th
//! cumulant to zero expresses the `L`-operator moment through moments of
//! fewer operators. Those lower moments are supplied by the caller, which
//! may itself close them, so nested truncations compose naturally.

use num_complex::Complex64 as C64;

use super::state::Ops;

/// ⟨AB⟩ ← ⟨A⟩⟨B⟩.
#[inline]
pub fn pair_from_singles(a: C64, b: C64) -> C64 {
    a * b
}

/// ⟨ABC⟩ ← ⟨AB⟩⟨C⟩ + ⟨AC⟩⟨B⟩ + ⟨BC⟩⟨A⟩ − 2⟨A⟩⟨B⟩⟨C⟩.
#[inline]
pub fn triple_from_pairs(ab: C64, ac: C64, bc: C64, a: C64, b: C64, c: C64) -> C64 {
    ab * c + ac * b + bc * a - 2.0 * a * b * c
}

/// Four-operator moment with the fourth cumulant removed.
/// Arguments: the four triples (missing d, c, b, a), the six pairs, the four singles.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn quad_from_triples(
    abc: C64,
    abd: C64,
    acd: C64,
    bcd: C64,
    ab: C64,
    ac: C64,
    ad: C64,
    bc: C64,
    bd: C64,
    cd: C64,
    a: C64,
    b: C64,
    c: C64,
    d: C64,
) -> C64 {
    abc * d + abd * c + acd * b + bcd * a + ab * cd + ac * bd + ad * bc
        - 2.0 * (ab * c * d + ac * b * d + ad * b * c + bc * a * d + bd * a * c + cd * a * b)
        + 6.0 * a * b * c * d
}

/// Four-operator moment when only pairs are kept:
/// ⟨ABCD⟩ ← ⟨AB⟩⟨CD⟩ + ⟨AC⟩⟨BD⟩ + ⟨AD⟩⟨BC⟩ − 2⟨A⟩⟨B⟩⟨C⟩⟨D⟩.
#[inline]
pub fn quad_from_pairs(ab: C64, ac: C64, ad: C64, bc: C64, bd: C64, cd: C64, abcd: C64) -> C64 {
    ab * cd + ac * bd + ad * bc - 2.0 * abcd
}

fn bits(mask: u32) -> impl Iterator<Item = u32> {
    (0..5).map(|i| 1u32 << i).filter(move |b| mask & b != 0)
}

/// Moment of the full product in `ops` (2 ≤ len ≤ 5) with its top cumulant
/// set to zero; `m` supplies moments of proper sub-products.
pub(crate) fn close(ops: &Ops, m: &dyn Fn(&Ops) -> C64) -> C64 {
    let len = ops.len();
    let full: u32 = (1 << len) - 1;
    let mm = |mask: u32| m(&ops.sub(mask));
    let single: [C64; 5] = std::array::from_fn(|i| if i < len { mm(1 << i) } else { C64::new(1.0, 0.0) });
    let prod = |mask: u32| bits(mask).map(|b| single[b.trailing_zeros() as usize]).product::<C64>();
    let subsets = |size: u32| (1..full).filter(move |s| s.count_ones() == size);
    match len {
        2 => single[0] * single[1],
        3 => {
            let mut acc = -2.0 * prod(full);
            for s in subsets(2) {
                acc += mm(s) * prod(full ^ s);
            }
            acc
        }
        4 => {
            let mut acc = 6.0 * prod(full);
            for s in subsets(3) {
                acc += mm(s) * prod(full ^ s);
            }
            for s in subsets(2) {
                let p = mm(s);
                // Each pair-pair split once, anchored on operator 0.
                if s & 1 == 1 {
                    acc += p * mm(full ^ s);
                }
                acc -= 2.0 * p * prod(full ^ s);
            }
            acc
        }
        5 => {
            let mut acc = -24.0 * prod(full);
            for s in subsets(4) {
                acc += mm(s) * prod(full ^ s);
            }
            for s in subsets(3) {
                let t = mm(s);
                acc += t * mm(full ^ s) - 2.0 * t * prod(full ^ s);
            }
            for s in subsets(2) {
                let p = mm(s);
                acc += 6.0 * p * prod(full ^ s);
                // Pair-pair-single terms: the second pair lies in the
                // complement; count each unordered split once.
                let rest = full ^ s;
                for s2 in subsets(2).filter(|s2| s2 & rest == *s2 && *s2 > s) {
                    acc -= 2.0 * p * mm(s2) * prod(rest ^ s2);
                }
            }
            acc
        }
        _ => unreachable!("closure defined for 2..=5 operators"),
    }
}
