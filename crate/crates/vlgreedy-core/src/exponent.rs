//! Exponent fields `p : [0,1)^n -> (1, oo)`, piecewise constant at depth `J`.
//!
//! Fields are built from declarative recipes so experiment configs can name
//! them; all constructors validate that every cell value is finite and
//! strictly greater than 1. The log-smoothness diagnostic reports the largest
//! `|p(x)-p(y)| * (-log |x-y|)` over cell-center pairs closer than 1/2; it is
//! informational and never enforced.

use crate::error::{Error, Result};
use crate::grid::{cell_count, DyadicCube, GridFunction};
use serde::{Deserialize, Serialize};

/// Axis-aligned box `prod_i [lo_i, hi_i)` with depth-aligned boundaries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Piece {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub p: f64,
}

/// Declarative construction of an exponent field.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExponentRecipe {
    /// `p(x) = p` everywhere.
    Constant { p: f64 },
    /// Boxes applied in order (later pieces win on overlap); together they
    /// must cover every cell.
    Piecewise { pieces: Vec<Piece> },
    /// Polynomial ramp `3t^2 - 2t^3` from `p_left` to `p_right` along axis 0,
    /// transitioning over `[t0, t1)` and sampled at cell centers.
    Smoothstep {
        p_left: f64,
        p_right: f64,
        transition: (f64, f64),
    },
    /// Explicit per-cell values in linear cell order.
    Samples { values: Vec<f64> },
}

/// A validated exponent field at a fixed grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    dim: u8,
    depth: u8,
    values: Vec<f64>,
    p_min: f64,
    p_max: f64,
    fingerprint: u64,
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed ^ 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl ExponentField {
    pub fn build(dim: u8, depth: u8, recipe: &ExponentRecipe) -> Result<Self> {
        let cells = {
            // reuse the grid-shape validation
            GridFunction::zeros(dim, depth)?;
            cell_count(dim, depth) as usize
        };
        let values = match recipe {
            ExponentRecipe::Constant { p } => vec![*p; cells],
            ExponentRecipe::Piecewise { pieces } => piecewise_values(dim, depth, pieces)?,
            ExponentRecipe::Smoothstep {
                p_left,
                p_right,
                transition,
            } => smoothstep_values(dim, depth, *p_left, *p_right, *transition)?,
            ExponentRecipe::Samples { values } => {
                if values.len() != cells {
                    return Err(Error::InvalidInput(format!(
                        "expected {cells} sample values, got {}",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        Self::from_values(dim, depth, values)
    }

    pub fn from_values(dim: u8, depth: u8, values: Vec<f64>) -> Result<Self> {
        GridFunction::zeros(dim, depth)?;
        if values.len() != cell_count(dim, depth) as usize {
            return Err(Error::InvalidInput("value count mismatch".into()));
        }
        let mut p_min = f64::INFINITY;
        let mut p_max = f64::NEG_INFINITY;
        for &v in &values {
            if !v.is_finite() || v <= 1.0 {
                return Err(Error::InvalidExponent(format!(
                    "exponent value {v} outside (1, oo)"
                )));
            }
            p_min = p_min.min(v);
            p_max = p_max.max(v);
        }
        let mut h = fnv1a(0, &[dim, depth]);
        for &v in &values {
            h = fnv1a(h, &v.to_bits().to_le_bytes());
        }
        Ok(Self {
            dim,
            depth,
            values,
            p_min,
            p_max,
            fingerprint: h,
        })
    }

    pub fn constant(dim: u8, depth: u8, p: f64) -> Result<Self> {
        Self::build(dim, depth, &ExponentRecipe::Constant { p })
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: u32) -> f64 {
        self.values[cell as usize]
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn is_constant(&self) -> bool {
        self.p_min == self.p_max
    }

    /// Stable 64-bit digest of (dim, depth, values); cache key component.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn same_shape(&self, f: &GridFunction) -> bool {
        self.dim == f.dim() && self.depth == f.depth()
    }
}

fn piecewise_values(dim: u8, depth: u8, pieces: &[Piece]) -> Result<Vec<f64>> {
    let side = 1u32 << depth;
    let mut values = vec![f64::NAN; cell_count(dim, depth) as usize];
    for piece in pieces {
        if piece.lo.len() != dim as usize || piece.hi.len() != dim as usize {
            return Err(Error::Alignment {
                depth,
                detail: "piece bounds must have one entry per axis".into(),
            });
        }
        // Convert [lo, hi) to cell ranges, demanding dyadic alignment.
        let mut ranges = Vec::with_capacity(dim as usize);
        for a in 0..dim as usize {
            let lo = to_cell_coord(piece.lo[a], depth)?;
            let hi = to_cell_coord(piece.hi[a], depth)?;
            if lo >= hi || hi > side {
                return Err(Error::Alignment {
                    depth,
                    detail: format!("degenerate axis range [{}, {})", piece.lo[a], piece.hi[a]),
                });
            }
            ranges.push(lo..hi);
        }
        paint_box(dim, depth, &ranges, piece.p, &mut values);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Alignment {
            depth,
            detail: "pieces do not cover every cell".into(),
        });
    }
    Ok(values)
}

fn to_cell_coord(x: f64, depth: u8) -> Result<u32> {
    let scaled = x * (1u64 << depth) as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-6 || !(0.0..=(1u64 << depth) as f64).contains(&rounded) {
        return Err(Error::Alignment {
            depth,
            detail: format!("coordinate {x} is not on the depth-{depth} grid"),
        });
    }
    Ok(rounded as u32)
}

fn paint_box(dim: u8, depth: u8, ranges: &[std::ops::Range<u32>], p: f64, values: &mut [f64]) {
    let mut coord: Vec<u32> = ranges.iter().map(|r| r.start).collect();
    loop {
        let cell: u64 = coord.iter().fold(0, |acc, &c| (acc << depth) | c as u64);
        values[cell as usize] = p;
        // odometer over the box
        let mut axis = dim as usize;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            coord[axis] += 1;
            if coord[axis] < ranges[axis].end {
                break;
            }
            coord[axis] = ranges[axis].start;
        }
    }
}

fn smoothstep_values(
    dim: u8,
    depth: u8,
    p_left: f64,
    p_right: f64,
    (t0, t1): (f64, f64),
) -> Result<Vec<f64>> {
    if !(t0 < t1) {
        return Err(Error::InvalidParameter(format!(
            "transition window [{t0}, {t1}) is empty"
        )));
    }
    let side = 1u64 << depth;
    let n_cells = cell_count(dim, depth) as usize;
    let mut values = vec![0.0; n_cells];
    let axis0_shift = depth as u32 * (dim as u32 - 1);
    for (cell, v) in values.iter_mut().enumerate() {
        let k0 = (cell as u64) >> axis0_shift;
        let x = (k0 as f64 + 0.5) / side as f64;
        let t = ((x - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let s = t * t * (3.0 - 2.0 * t);
        *v = p_left + (p_right - p_left) * s;
    }
    Ok(values)
}

/// `(min, max)` of the exponent over a cell region (`None` = whole grid).
pub fn exponent_range(p: &ExponentField, region: Option<&[u32]>) -> Result<(f64, f64)> {
    match region {
        None => Ok((p.p_min, p.p_max)),
        Some(cells) => {
            if cells.is_empty() {
                return Err(Error::EmptyRegion);
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &c in cells {
                let v = p.value(c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            Ok((lo, hi))
        }
    }
}

/// Pointwise conjugate exponent `p' = p / (p - 1)`.
pub fn conjugate(p: &ExponentField) -> ExponentField {
    let values = p.values.iter().map(|&v| v / (v - 1.0)).collect();
    // p in (1, oo) finite implies p' in (1, oo) finite
    ExponentField::from_values(p.dim, p.depth, values).expect("conjugate stays in (1, oo)")
}

/// Harmonic-mean exponent of a cube: `1/p_Q = (1/|Q|) * int_Q 1/p`.
pub fn harmonic_mean_exponent(p: &ExponentField, cube: &DyadicCube) -> Result<f64> {
    if cube.dim() != p.dim {
        return Err(Error::InvalidInput("cube dimension mismatch".into()));
    }
    if cube.scale() > p.depth {
        return Err(Error::OutOfDomain(format!(
            "cube {cube} finer than depth {}",
            p.depth
        )));
    }
    let mut sum = 0.0;
    let mut count = 0u32;
    cube.for_each_cell(p.depth, |c| {
        sum += 1.0 / p.value(c);
        count += 1;
    })?;
    Ok(count as f64 / sum)
}

/// Cells near the extremes of the exponent's range.
#[derive(Debug, Clone)]
pub struct LevelSets {
    pub epsilon: f64,
    /// Cells with `p <= p_min + epsilon`.
    pub g_cells: Vec<u32>,
    /// Cells with `p >= p_max - epsilon`.
    pub h_cells: Vec<u32>,
}

pub fn level_sets(p: &ExponentField, epsilon: f64) -> Result<LevelSets> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "level-set margin must be positive, got {epsilon}"
        )));
    }
    let lo = p.p_min + epsilon;
    let hi = p.p_max - epsilon;
    let mut g_cells = Vec::new();
    let mut h_cells = Vec::new();
    for (c, &v) in p.values.iter().enumerate() {
        if v <= lo {
            g_cells.push(c as u32);
        }
        if v >= hi {
            h_cells.push(c as u32);
        }
    }
    Ok(LevelSets {
        epsilon,
        g_cells,
        h_cells,
    })
}

/// Largest `|p(x)-p(y)| * (-log |x-y|)` over cell-center pairs with
/// `|x-y| < 1/2` (Euclidean). Zero for constant fields. Exhaustive over cell
/// pairs, so intended for desk-scale grids.
pub fn log_holder_constant(p: &ExponentField) -> f64 {
    let n_cells = cell_count(p.dim, p.depth) as usize;
    let side = 1u64 << p.depth;
    let h = 1.0 / side as f64;
    let mask = side - 1;
    let dim = p.dim as u32;
    let coords: Vec<Vec<u64>> = (0..n_cells as u64)
        .map(|cell| {
            (0..dim)
                .map(|a| (cell >> (p.depth as u32 * (dim - 1 - a))) & mask)
                .collect()
        })
        .collect();
    let mut best: f64 = 0.0;
    for a in 0..n_cells {
        for b in a + 1..n_cells {
            let mut d2 = 0.0;
            for ax in 0..dim as usize {
                let d = (coords[a][ax] as f64 - coords[b][ax] as f64) * h;
                d2 += d * d;
            }
            if p.dim == 1 && d2 >= 0.25 {
                break; // 1-D cells are ordered by coordinate
            }
            if d2 >= 0.25 {
                continue;
            }
            let gap = (p.values[a] - p.values[b]).abs();
            if gap == 0.0 {
                continue;
            }
            let c = gap * (-0.5 * d2.ln());
            if c > best {
                best = c;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_four(depth: u8) -> ExponentField {
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
    fn piecewise_cells() {
        let p = two_four(2);
        assert_eq!(p.values(), &[2.0, 2.0, 4.0, 4.0]);
        assert_eq!((p.p_min(), p.p_max()), (2.0, 4.0));
    }

    #[test]
    fn rejects_exponent_at_one_or_below() {
        assert!(matches!(
            ExponentField::constant(1, 2, 1.0),
            Err(Error::InvalidExponent(_))
        ));
        assert!(ExponentField::constant(1, 2, 0.5).is_err());
        assert!(ExponentField::constant(1, 2, f64::INFINITY).is_err());
    }

    #[test]
    fn piecewise_must_align_and_cover() {
        let misaligned = ExponentRecipe::Piecewise {
            pieces: vec![Piece {
                lo: vec![0.0],
                hi: vec![0.3],
                p: 2.0,
            }],
        };
        assert!(matches!(
            ExponentField::build(1, 2, &misaligned),
            Err(Error::Alignment { .. })
        ));
        let gap = ExponentRecipe::Piecewise {
            pieces: vec![Piece {
                lo: vec![0.0],
                hi: vec![0.5],
                p: 2.0,
            }],
        };
        assert!(matches!(
            ExponentField::build(1, 2, &gap),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn conjugate_values_and_involution() {
        let p = ExponentField::constant(1, 3, 4.0).unwrap();
        let pc = conjugate(&p);
        for &v in pc.values() {
            assert!((v - 4.0 / 3.0).abs() < 1e-15);
        }
        let p = two_four(4);
        let back = conjugate(&conjugate(&p));
        for (a, b) in p.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn harmonic_mean_of_root_cube() {
        let p = two_four(3);
        let root = DyadicCube::new(1, 0, &[0]).unwrap();
        let p_q = harmonic_mean_exponent(&p, &root).unwrap();
        assert!((p_q - 8.0 / 3.0).abs() < 1e-12);
        // within [p_min, p_max] on a sub-cube
        let left = DyadicCube::new(1, 1, &[0]).unwrap();
        assert!((harmonic_mean_exponent(&p, &left).unwrap() - 2.0).abs() < 1e-12);
        // too fine for the grid
        let fine = DyadicCube::new(1, 4, &[0]).unwrap();
        assert!(matches!(
            harmonic_mean_exponent(&p, &fine),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn level_set_examples() {
        let p = two_four(2);
        let ls = level_sets(&p, 0.1).unwrap();
        assert_eq!(ls.g_cells, vec![0, 1]);
        assert_eq!(ls.h_cells, vec![2, 3]);
        assert!(level_sets(&p, 0.0).is_err());
        // margin spanning the whole range captures everything on both sides
        let wide = level_sets(&p, 2.0).unwrap();
        assert_eq!(wide.g_cells.len(), 4);
        assert_eq!(wide.h_cells.len(), 4);
    }

    #[test]
    fn log_holder_constant_field_is_zero() {
        let p = ExponentField::constant(1, 5, 3.0).unwrap();
        assert_eq!(log_holder_constant(&p), 0.0);
    }

    #[test]
    fn log_holder_piecewise_jump() {
        // Adjacent centers across the jump at distance 2^-4: gap 2, -log = log 16.
        let p = two_four(4);
        let c0 = log_holder_constant(&p);
        assert!((c0 - 2.0 * (16f64).ln()).abs() < 1e-12, "c0 = {c0}");
    }

    #[test]
    fn log_holder_smoothstep_stable_in_depth() {
        let recipe = ExponentRecipe::Smoothstep {
            p_left: 2.0,
            p_right: 4.0,
            transition: (0.25, 0.75),
        };
        let coarse = log_holder_constant(&ExponentField::build(1, 6, &recipe).unwrap());
        let fine = log_holder_constant(&ExponentField::build(1, 10, &recipe).unwrap());
        assert!((coarse - 1.914024689825006).abs() < 1e-12, "coarse {coarse}");
        assert!((fine - 1.9153291878784322).abs() < 1e-12, "fine {fine}");
        assert!(
            (fine - coarse).abs() <= 0.10 * coarse,
            "coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn samples_recipe_checks_length() {
        let r = ExponentRecipe::Samples {
            values: vec![2.0; 3],
        };
        assert!(ExponentField::build(1, 2, &r).is_err());
    }
}
