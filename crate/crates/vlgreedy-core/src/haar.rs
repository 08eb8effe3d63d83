//! Tensor-product Haar analysis on `[0,1)^n` at depth `J`.
//!
//! The system is nonhomogeneous: one scaling function (the indicator of the
//! whole cube) plus, for every dyadic cube of scale `0 <= j < J`, the
//! `2^n - 1` mother wavelets indexed by a nonzero axis pattern `l`. On a
//! child cube with offset pattern `t`, wavelet `l` takes the value
//! `|Q|^{-1/2} * (-1)^{popcount(l & t)}`. Transforms are exact cascades, one
//! fast Walsh-Hadamard pass per cube.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::{cell_count, DyadicCube, GridFunction};
use crate::norm::{luxemburg_norm, NormCache};

/// Coefficients of `f` against the Haar system: one scaling coefficient and
/// a sparse map of detail coefficients. Zero details are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    dim: u8,
    depth: u8,
    scaling: f64,
    detail: BTreeMap<(DyadicCube, u16), f64>,
}

fn sign(kind: u16, offset: u64) -> f64 {
    if (kind as u64 & offset).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Position of child `t` (axis `a` offset = bit `a` of `t`) one scale down.
fn child_pos(dim: u8, scale: u8, pos: u64, t: u64) -> u64 {
    let mut out = 0u64;
    for a in 0..dim as u32 {
        let k = (pos >> (scale as u32 * (dim as u32 - 1 - a))) & ((1u64 << scale) - 1);
        let kc = (k << 1) | ((t >> a) & 1);
        out |= kc << ((scale as u32 + 1) * (dim as u32 - 1 - a));
    }
    out
}

/// In-place Walsh-Hadamard: `v[l] <- sum_t (-1)^{popcount(l & t)} v[t]`.
fn fwht(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        let mut i = 0;
        while i < v.len() {
            for j in i..i + h {
                let (x, y) = (v[j], v[j + h]);
                v[j] = x + y;
                v[j + h] = x - y;
            }
            i += h * 2;
        }
        h *= 2;
    }
}

impl HaarCoefficients {
    pub fn new(dim: u8, depth: u8) -> Result<Self> {
        GridFunction::zeros(dim, depth)?;
        Ok(Self {
            dim,
            depth,
            scaling: 0.0,
            detail: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn set_scaling(&mut self, v: f64) {
        self.scaling = v;
    }

    /// Detail coefficient for `(cube, kind)`; absent entries read as zero.
    pub fn detail(&self, cube: &DyadicCube, kind: u16) -> f64 {
        self.detail.get(&(*cube, kind)).copied().unwrap_or(0.0)
    }

    pub fn set_detail(&mut self, cube: &DyadicCube, kind: u16, v: f64) -> Result<()> {
        if cube.dim() != self.dim {
            return Err(Error::InvalidInput("cube dimension mismatch".into()));
        }
        if cube.scale() >= self.depth {
            return Err(Error::Resolution {
                scale: cube.scale(),
                depth: self.depth,
            });
        }
        if kind == 0 || kind as u64 >= 1u64 << self.dim {
            return Err(Error::InvalidParameter(format!(
                "wavelet type {kind} outside 1..2^{}-1",
                self.dim
            )));
        }
        if v == 0.0 {
            self.detail.remove(&(*cube, kind));
        } else {
            self.detail.insert((*cube, kind), v);
        }
        Ok(())
    }

    /// Nonzero detail entries in canonical order (scale, position, type).
    pub fn details(&self) -> impl Iterator<Item = (DyadicCube, u16, f64)> + '_ {
        self.detail.iter().map(|(&(q, l), &v)| (q, l, v))
    }

    /// Count of nonzero coefficients, scaling included.
    pub fn support_size(&self) -> usize {
        self.detail.len() + usize::from(self.scaling != 0.0)
    }
}

/// Exact inner products of `f` against the whole system.
pub fn analyze(f: &GridFunction) -> HaarCoefficients {
    let dim = f.dim();
    let depth = f.depth();
    let fan = 1usize << dim;
    let mut detail = BTreeMap::new();
    let mut avg = f.values().to_vec();
    let mut buf = vec![0.0f64; fan];
    for scale in (0..depth).rev() {
        let parents = 1usize << (dim as u32 * scale as u32);
        let mut coarse = vec![0.0f64; parents];
        // <f, psi^l_Q> = |Q|^{1/2} 2^{-n} sum_t sign(l, t) avg_t
        let measure = 1.0 / (1u64 << (dim as u32 * scale as u32)) as f64;
        let factor = measure.sqrt() / fan as f64;
        for (pos, c) in coarse.iter_mut().enumerate() {
            for (t, b) in buf.iter_mut().enumerate() {
                *b = avg[child_pos(dim, scale, pos as u64, t as u64) as usize];
            }
            fwht(&mut buf);
            *c = buf[0] / fan as f64;
            let cube = DyadicCube::from_pos(dim, scale, pos as u64).expect("pos in range");
            for (l, &w) in buf.iter().enumerate().skip(1) {
                let coeff = factor * w;
                if coeff != 0.0 {
                    detail.insert((cube, l as u16), coeff);
                }
            }
        }
        avg = coarse;
    }
    HaarCoefficients {
        dim,
        depth,
        scaling: avg[0],
        detail,
    }
}

/// Exact reconstruction; linear in the coefficients.
pub fn synthesize(c: &HaarCoefficients) -> GridFunction {
    let dim = c.dim;
    let depth = c.depth;
    let fan = 1u64 << dim;
    let mut by_scale: Vec<Vec<(u64, u16, f64)>> = vec![Vec::new(); depth as usize];
    for (&(q, l), &v) in &c.detail {
        by_scale[q.scale() as usize].push((q.pos(), l, v));
    }
    let mut vals = vec![c.scaling];
    for scale in 0..depth {
        let child_count = 1usize << (dim as u32 * (scale as u32 + 1));
        let mut next = vec![0.0f64; child_count];
        for (pos, &v) in vals.iter().enumerate() {
            for t in 0..fan {
                next[child_pos(dim, scale, pos as u64, t) as usize] = v;
            }
        }
        let inv_sqrt = ((1u64 << (dim as u32 * scale as u32)) as f64).sqrt();
        for &(pos, l, v) in &by_scale[scale as usize] {
            let add = v * inv_sqrt;
            for t in 0..fan {
                next[child_pos(dim, scale, pos, t) as usize] += add * sign(l, t);
            }
        }
        vals = next;
    }
    let mut out = GridFunction::zeros(dim, depth).expect("shape already validated");
    out.values_mut().copy_from_slice(&vals);
    out
}

/// `(scaling^2 + sum |coeff|^2 |Q|^{-1} chi_Q)^{1/2}` cellwise; the scaling
/// term enters as a cube of measure one, which preserves the exponent-2
/// identity `‖Wf‖_2 = ‖f‖_2` on this nonhomogeneous system.
pub fn square_function(c: &HaarCoefficients) -> GridFunction {
    let mut s2 = vec![c.scaling * c.scaling; cell_count(c.dim, c.depth) as usize];
    for (&(q, _), &v) in &c.detail {
        let inv_measure = (1u64 << (c.dim as u32 * q.scale() as u32)) as f64;
        let add = v * v * inv_measure;
        q.for_each_cell(c.depth, |cell| s2[cell as usize] += add)
            .expect("detail scales < depth");
    }
    let mut out = GridFunction::zeros(c.dim, c.depth).expect("shape already validated");
    for (o, s) in out.values_mut().iter_mut().zip(&s2) {
        *o = s.sqrt();
    }
    out
}

/// `‖ψ^l_Q‖_{p(·)} = |Q|^{-1/2} ‖χ_Q‖_{p(·)}` (the wavelet has constant
/// modulus on its cube). Exactly 1 for `p ≡ 2`.
pub fn basis_norm(q: &DyadicCube, kind: u16, p: &ExponentField) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::InvalidInput("cube dimension mismatch".into()));
    }
    if q.scale() >= p.depth() {
        return Err(Error::Resolution {
            scale: q.scale(),
            depth: p.depth(),
        });
    }
    if kind == 0 || kind as u64 >= 1u64 << p.dim() {
        return Err(Error::InvalidParameter(format!(
            "wavelet type {kind} outside 1..2^{}-1",
            p.dim()
        )));
    }
    let mut cache = NormCache::new(p);
    Ok(cache.cube_norm(p, q)? / q.measure().powf(0.5))
}

/// `‖W f‖_{p(·)} / ‖f‖_{p(·)}`; errors on the zero function.
pub fn equivalence_ratio(f: &GridFunction, p: &ExponentField) -> Result<f64> {
    let norm_f = luxemburg_norm(f, p)?;
    if norm_f == 0.0 {
        return Err(Error::UndefinedRatio(
            "square-function ratio of the zero function".into(),
        ));
    }
    let w = square_function(&analyze(f));
    Ok(luxemburg_norm(&w, p)? / norm_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{ExponentRecipe, Piece};
    use crate::grid::integrate;

    fn two_four(depth: u8) -> ExponentField {
        ExponentField::build(
            1,
            depth,
            &ExponentRecipe::Piecewise {
                pieces: vec![
                    Piece {
                        lo: vec![0.0],
                        hi: vec![0.5],
                        p: 2.0,
                    },
                    Piece {
                        lo: vec![0.5],
                        hi: vec![1.0],
                        p: 4.0,
                    },
                ],
            },
        )
        .unwrap()
    }

    #[test]
    fn analyze_half_indicator() {
        let f = GridFunction::indicator(1, 2, &[0, 1]).unwrap();
        let c = analyze(&f);
        assert_eq!(c.scaling(), 0.5);
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        assert_eq!(c.detail(&root, 1), 0.5);
        assert_eq!(c.support_size(), 2); // finer details vanish and are not stored
    }

    #[test]
    fn analyze_constant() {
        let mut f = GridFunction::zeros(2, 2).unwrap();
        f.values_mut().fill(-3.25);
        let c = analyze(&f);
        assert_eq!(c.scaling(), -3.25);
        assert_eq!(c.details().count(), 0);
    }

    #[test]
    fn analyze_single_cell_spike() {
        let f = GridFunction::indicator(1, 2, &[0]).unwrap();
        let c = analyze(&f);
        assert_eq!(c.scaling(), 0.25);
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        let left = DyadicCube::new(1, 1, &[0]).unwrap();
        let right = DyadicCube::new(1, 1, &[1]).unwrap();
        assert_eq!(c.detail(&root, 1), 0.25);
        assert_eq!(c.detail(&left, 1), 0.3535533905932738); // sqrt(2)/4
        assert_eq!(c.detail(&right, 1), 0.0);
    }

    #[test]
    fn synthesize_scaling_only_and_single_wavelet() {
        let mut c = HaarCoefficients::new(1, 2).unwrap();
        c.set_scaling(1.0);
        assert!(synthesize(&c).values().iter().all(|&v| v == 1.0));

        let mut c = HaarCoefficients::new(1, 2).unwrap();
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        c.set_detail(&root, 1, 1.0).unwrap();
        assert_eq!(synthesize(&c).values(), &[1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn roundtrip_and_parseval() {
        let mut f = GridFunction::zeros(2, 3).unwrap();
        for (i, v) in f.values_mut().iter_mut().enumerate() {
            *v = ((i * 37 + 11) % 17) as f64 / 7.0 - 1.0;
        }
        let c = analyze(&f);
        let g = synthesize(&c);
        let max = f.max_abs();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-12 * max);
        }
        // Parseval at exponent 2
        let sq: f64 = c.scaling().powi(2) + c.details().map(|(_, _, v)| v * v).sum::<f64>();
        let mut f2 = f.clone();
        for v in f2.values_mut() {
            *v *= *v;
        }
        assert!((sq - integrate(&f2, None)).abs() < 1e-10);
        // coefficient-side roundtrip
        let c2 = analyze(&synthesize(&c));
        assert!((c.scaling() - c2.scaling()).abs() < 1e-12);
        for (q, l, v) in c.details() {
            assert!((v - c2.detail(&q, l)).abs() < 1e-12);
        }
    }

    #[test]
    fn set_detail_validates() {
        let mut c = HaarCoefficients::new(1, 2).unwrap();
        let fine = DyadicCube::new(1, 2, &[0]).unwrap();
        assert!(matches!(
            c.set_detail(&fine, 1, 1.0),
            Err(Error::Resolution { .. })
        ));
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        assert!(c.set_detail(&root, 0, 1.0).is_err());
        assert!(c.set_detail(&root, 2, 1.0).is_err());
        c.set_detail(&root, 1, 5.0).unwrap();
        c.set_detail(&root, 1, 0.0).unwrap();
        assert_eq!(c.support_size(), 0);
    }

    #[test]
    fn square_function_examples() {
        // a single unit wavelet and the scaling function both square to chi
        let mut c = HaarCoefficients::new(1, 2).unwrap();
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        c.set_detail(&root, 1, 1.0).unwrap();
        assert!(square_function(&c).values().iter().all(|&v| v == 1.0));

        let mut c = HaarCoefficients::new(1, 2).unwrap();
        c.set_scaling(1.0);
        assert!(square_function(&c).values().iter().all(|&v| v == 1.0));

        let f = GridFunction::indicator(1, 2, &[0, 1]).unwrap();
        let w = square_function(&analyze(&f));
        for &v in w.values() {
            assert_eq!(v, 0.5f64.sqrt());
        }
    }

    #[test]
    fn square_function_ignores_coefficient_signs() {
        let mut f = GridFunction::zeros(1, 4).unwrap();
        for (i, v) in f.values_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        let c = analyze(&f);
        let w = square_function(&c);
        let mut flipped = c.clone();
        let entries: Vec<_> = c.details().collect();
        for (i, (q, l, v)) in entries.iter().enumerate() {
            let s = if i % 3 == 0 { -1.0 } else { 1.0 };
            flipped.set_detail(q, *l, s * v).unwrap();
        }
        flipped.set_scaling(-c.scaling());
        assert_eq!(w.values(), square_function(&flipped).values());
    }

    #[test]
    fn basis_norm_examples() {
        let p2 = ExponentField::constant(1, 3, 2.0).unwrap();
        for scale in 0..3u8 {
            let q = DyadicCube::new(1, scale, &[0]).unwrap();
            assert_eq!(basis_norm(&q, 1, &p2).unwrap(), 1.0);
        }
        let p4 = ExponentField::constant(1, 3, 4.0).unwrap();
        let left = DyadicCube::new(1, 1, &[0]).unwrap();
        assert!((basis_norm(&left, 1, &p4).unwrap() - 1.189207115002721).abs() < 1e-12);
        let p = two_four(3);
        let right = DyadicCube::new(1, 1, &[1]).unwrap();
        assert!((basis_norm(&right, 1, &p).unwrap() - 1.189207115002721).abs() < 1e-12);
        // scale at the grid floor is rejected
        let cellq = DyadicCube::new(1, 3, &[0]).unwrap();
        assert!(matches!(
            basis_norm(&cellq, 1, &p),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn basis_norm_matches_synthesized_norm() {
        let p = two_four(4);
        for (scale, k) in [(0u8, 0u32), (1, 1), (2, 2), (3, 5)] {
            let q = DyadicCube::new(1, scale, &[k]).unwrap();
            let mut c = HaarCoefficients::new(1, 4).unwrap();
            c.set_detail(&q, 1, 1.0).unwrap();
            let direct = luxemburg_norm(&synthesize(&c), &p).unwrap();
            let formula = basis_norm(&q, 1, &p).unwrap();
            assert!((direct - formula).abs() < 1e-10, "{q}: {direct} vs {formula}");
        }
    }

    #[test]
    fn equivalence_ratio_constant_two_is_one() {
        let p2 = ExponentField::constant(1, 4, 2.0).unwrap();
        let mut f = GridFunction::zeros(1, 4).unwrap();
        for (i, v) in f.values_mut().iter_mut().enumerate() {
            *v = ((i * 13 + 5) % 9) as f64 - 4.0;
        }
        let r = equivalence_ratio(&f, &p2).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "ratio {r}");
        let z = GridFunction::zeros(1, 4).unwrap();
        assert!(matches!(
            equivalence_ratio(&z, &p2),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn equivalence_ratio_single_wavelet_cross_check() {
        let p = two_four(3);
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        let mut c = HaarCoefficients::new(1, 3).unwrap();
        c.set_detail(&root, 1, 1.0).unwrap();
        let f = synthesize(&c);
        let ratio = equivalence_ratio(&f, &p).unwrap();
        let expected = 1.0 / basis_norm(&root, 1, &p).unwrap();
        assert!((ratio - expected).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_types_are_orthonormal() {
        // dim 2: three types per cube; synthesized unit wavelets have L2 norm 1
        let p2 = ExponentField::constant(2, 2, 2.0).unwrap();
        let root = DyadicCube::new(2, 0, &[0, 0]).unwrap();
        for kind in 1..4u16 {
            let mut c = HaarCoefficients::new(2, 2).unwrap();
            c.set_detail(&root, kind, 1.0).unwrap();
            let f = synthesize(&c);
            assert!((luxemburg_norm(&f, &p2).unwrap() - 1.0).abs() < 1e-12);
            // distinct types are orthogonal: pairing integrates to zero
            for other in kind + 1..4u16 {
                let mut c2 = HaarCoefficients::new(2, 2).unwrap();
                c2.set_detail(&root, other, 1.0).unwrap();
                let g = synthesize(&c2);
                let mut prod = f.clone();
                for (a, b) in prod.values_mut().iter_mut().zip(g.values()) {
                    *a *= b;
                }
                assert!(integrate(&prod, None).abs() < 1e-15);
            }
        }
    }
}
