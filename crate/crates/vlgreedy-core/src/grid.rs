//! Dyadic geometry on `[0,1)^n` at a fixed depth `J`.
//!
//! The grid has `2^(n*J)` cells; a cell is addressed by the lexicographic
//! linear index of its coordinate tuple (axis 0 most significant). A dyadic
//! cube of scale `j <= J` is a product of half-open dyadic intervals and is
//! exactly a union of cells, so set operations reduce to integer index
//! arithmetic. Any two dyadic cubes are nested or disjoint; the light/shade
//! decomposition of a cube family is computed here by cell painting.

use crate::error::{Error, Result};
use std::fmt;

/// Hard cap on `dim * depth`: keeps cell counts at desk scale and all index
/// arithmetic comfortably inside `u32`/`u64`.
pub const MAX_DEPTH_BITS: u8 = 24;

fn check_shape(dim: u8, depth: u8) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if dim as u32 * depth as u32 > MAX_DEPTH_BITS as u32 {
        return Err(Error::InvalidInput(format!(
            "dim * depth = {} exceeds the {MAX_DEPTH_BITS}-bit grid cap",
            dim as u32 * depth as u32
        )));
    }
    Ok(())
}

/// Number of cells of a depth-`depth` grid in dimension `dim`.
pub fn cell_count(dim: u8, depth: u8) -> u32 {
    1u32 << (dim as u32 * depth as u32)
}

/// A dyadic cube `prod_i [k_i 2^-j, (k_i+1) 2^-j)` inside `[0,1)^n`.
///
/// Stored as the lexicographic linear index of `k` at scale `j`, so the
/// derived ordering (scale ascending, then `k` lexicographic) is the canonical
/// enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    scale: u8,
    pos: u64,
    dim: u8,
}

impl DyadicCube {
    pub fn new(dim: u8, scale: u8, index: &[u32]) -> Result<Self> {
        check_shape(dim, scale)?;
        if index.len() != dim as usize {
            return Err(Error::InvalidInput(format!(
                "index has {} axes, cube has {dim}",
                index.len()
            )));
        }
        let side = 1u64 << scale;
        let mut pos = 0u64;
        for &k in index {
            if (k as u64) >= side {
                return Err(Error::OutOfDomain(format!(
                    "axis index {k} outside [0, 2^{scale})"
                )));
            }
            pos = (pos << scale) | k as u64;
        }
        Ok(Self { scale, pos, dim })
    }

    /// Cube from its linear position in the scale-`scale` lattice.
    pub fn from_pos(dim: u8, scale: u8, pos: u64) -> Result<Self> {
        check_shape(dim, scale)?;
        if pos >= 1u64 << (dim as u32 * scale as u32) {
            return Err(Error::OutOfDomain(format!(
                "position {pos} outside the scale-{scale} lattice"
            )));
        }
        Ok(Self { scale, pos, dim })
    }

    /// The scale-`depth` cube holding one grid cell.
    pub fn cell_cube(dim: u8, depth: u8, cell: u32) -> Result<Self> {
        Self::from_pos(dim, depth, cell as u64)
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn pos(&self) -> u64 {
        self.pos
    }

    pub fn axis_index(&self, axis: u8) -> u32 {
        debug_assert!(axis < self.dim);
        let shift = self.scale as u32 * (self.dim - 1 - axis) as u32;
        ((self.pos >> shift) & ((1u64 << self.scale) - 1)) as u32
    }

    pub fn index(&self) -> Vec<u32> {
        (0..self.dim).map(|a| self.axis_index(a)).collect()
    }

    pub fn measure(&self) -> f64 {
        (2f64).powi(-(self.scale as i32 * self.dim as i32))
    }

    /// Ancestor at a coarser (or equal) scale.
    pub fn ancestor(&self, scale: u8) -> Result<Self> {
        if scale > self.scale {
            return Err(Error::InvalidRange(format!(
                "ancestor scale {scale} finer than cube scale {}",
                self.scale
            )));
        }
        let d = (self.scale - scale) as u32;
        let mut pos = 0u64;
        for a in 0..self.dim {
            pos = (pos << scale) | (self.axis_index(a) as u64 >> d);
        }
        Ok(Self {
            scale,
            pos,
            dim: self.dim,
        })
    }

    /// True when `other` is contained in `self` (dyadic cubes nest per axis).
    pub fn contains(&self, other: &DyadicCube) -> bool {
        debug_assert_eq!(self.dim, other.dim);
        if other.scale < self.scale {
            return false;
        }
        other.ancestor(self.scale).map(|a| a == *self).unwrap_or(false)
    }

    pub fn is_disjoint(&self, other: &DyadicCube) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    /// Number of depth-`depth` cells covered.
    pub fn cell_span(&self, depth: u8) -> Result<u32> {
        if self.scale > depth {
            return Err(Error::Resolution {
                scale: self.scale,
                depth,
            });
        }
        Ok(1u32 << ((depth - self.scale) as u32 * self.dim as u32))
    }

    /// Visits the linear indices of the covered depth-`depth` cells in
    /// ascending order.
    pub fn for_each_cell(&self, depth: u8, mut f: impl FnMut(u32)) -> Result<()> {
        let span = self.cell_span(depth)?; // validates scale <= depth
        let d = (depth - self.scale) as u32;
        let n = self.dim as u32;
        // Cell coords: c_i = (k_i << d) + t_i with t_i in [0, 2^d). Walk the
        // odometer over t keeping the linear index incrementally.
        let base: u64 = (0..self.dim).fold(0, |acc, a| {
            (acc << depth) | ((self.axis_index(a) as u64) << d)
        });
        if d == 0 {
            f(base as u32);
            return Ok(());
        }
        let mut t = vec![0u32; self.dim as usize];
        let strides: Vec<u64> = (0..n).map(|i| 1u64 << (depth as u32 * (n - 1 - i))).collect();
        let mut cur = base;
        for _ in 0..span {
            f(cur as u32);
            // increment odometer from the last axis
            for i in (0..self.dim as usize).rev() {
                t[i] += 1;
                cur += strides[i];
                if t[i] < (1u32 << d) {
                    break;
                }
                cur -= (t[i] as u64) * strides[i];
                t[i] = 0;
            }
        }
        Ok(())
    }

    pub fn cells(&self, depth: u8) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(self.cell_span(depth)? as usize);
        self.for_each_cell(depth, |c| out.push(c))?;
        Ok(out)
    }
}

impl fmt::Display for DyadicCube {
    /// `j:k0,k1,...` — scale, then axis indices.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.scale)?;
        for a in 0..self.dim {
            if a > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", self.axis_index(a))?;
        }
        Ok(())
    }
}

/// Ancestor position of a grid cell at a coarser scale, without building the
/// intermediate cube.
pub fn ancestor_pos(dim: u8, depth: u8, cell: u32, scale: u8) -> u64 {
    debug_assert!(scale <= depth);
    let d = (depth - scale) as u32;
    let mask = (1u64 << depth) - 1;
    let mut pos = 0u64;
    for a in 0..dim {
        let shift = depth as u32 * (dim - 1 - a) as u32;
        let c = (cell as u64 >> shift) & mask;
        pos = (pos << scale) | (c >> d);
    }
    pos
}

/// All cubes with scales in `[scale_lo, scale_hi]`, canonical order.
pub fn enumerate_cubes(dim: u8, depth: u8, scale_lo: u8, scale_hi: u8) -> Result<Vec<DyadicCube>> {
    check_shape(dim, depth)?;
    if scale_lo > scale_hi || scale_hi > depth {
        return Err(Error::InvalidRange(format!(
            "scale range [{scale_lo}, {scale_hi}] invalid at depth {depth}"
        )));
    }
    let mut out = Vec::new();
    for j in scale_lo..=scale_hi {
        for pos in 0..1u64 << (dim as u32 * j as u32) {
            out.push(DyadicCube { scale: j, pos, dim });
        }
    }
    Ok(out)
}

/// A function piecewise constant on the depth-`J` cells, one value per cell in
/// linear cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: u8,
    depth: u8,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(dim: u8, depth: u8, values: Vec<f64>) -> Result<Self> {
        check_shape(dim, depth)?;
        let want = cell_count(dim, depth) as usize;
        if values.len() != want {
            return Err(Error::InvalidInput(format!(
                "expected {want} cell values, got {}",
                values.len()
            )));
        }
        Ok(Self { dim, depth, values })
    }

    pub fn zeros(dim: u8, depth: u8) -> Result<Self> {
        Self::new(dim, depth, vec![0.0; cell_count(dim, depth) as usize])
    }

    pub fn indicator(dim: u8, depth: u8, cells: &[u32]) -> Result<Self> {
        let mut f = Self::zeros(dim, depth)?;
        for &c in cells {
            if c as usize >= f.values.len() {
                return Err(Error::OutOfDomain(format!("cell {c} outside the grid")));
            }
            f.values[c as usize] = 1.0;
        }
        Ok(f)
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell_count(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn cell_measure(&self) -> f64 {
        (2f64).powi(-(self.dim as i32 * self.depth as i32))
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.dim == other.dim && self.depth == other.depth
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact integral of `f` over the whole grid (`region = None`) or over a set
/// of cells.
pub fn integrate(f: &GridFunction, region: Option<&[u32]>) -> f64 {
    let sum: f64 = match region {
        None => f.values.iter().sum(),
        Some(cells) => cells.iter().map(|&c| f.values[c as usize]).sum(),
    };
    sum * f.cell_measure()
}

/// An ordered set of dyadic cubes on one grid (duplicates rejected, canonical
/// order maintained).
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily {
    dim: u8,
    depth: u8,
    cubes: Vec<DyadicCube>,
}

impl CubeFamily {
    pub fn new(dim: u8, depth: u8, mut cubes: Vec<DyadicCube>) -> Result<Self> {
        check_shape(dim, depth)?;
        for q in &cubes {
            if q.dim() != dim {
                return Err(Error::InvalidInput(format!(
                    "cube {q} has dimension {}, family has {dim}",
                    q.dim()
                )));
            }
            if q.scale() > depth {
                return Err(Error::Resolution {
                    scale: q.scale(),
                    depth,
                });
            }
        }
        cubes.sort();
        if cubes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate cube in family".into()));
        }
        Ok(Self { dim, depth, cubes })
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn is_pairwise_disjoint(&self) -> bool {
        // Sorted order puts an ancestor before its descendants, but nesting
        // can skip scales; quadratic scan is fine at family sizes used here.
        for (i, q) in self.cubes.iter().enumerate() {
            for r in &self.cubes[i + 1..] {
                if !q.is_disjoint(r) {
                    return false;
                }
            }
        }
        true
    }
}

/// For each grid cell, the index (into the family's canonical order) of the
/// smallest family cube containing it, if any. Uniqueness of the minimum
/// follows from the nested-or-disjoint dichotomy.
pub fn minimal_cube_map(family: &CubeFamily) -> Result<Vec<Option<u32>>> {
    let mut map = vec![None; cell_count(family.dim, family.depth) as usize];
    // Canonical order is scale-ascending, so painting in order leaves the
    // finest containing cube in each cell.
    for (idx, q) in family.cubes.iter().enumerate() {
        q.for_each_cell(family.depth, |c| map[c as usize] = Some(idx as u32))?;
    }
    Ok(map)
}

/// The light/shade decomposition of a cube family.
///
/// `shade(Q)` is the union of the strict sub-cubes of `Q` in the family;
/// `light(Q)` is the rest of `Q`. Cells are listed in ascending order. The
/// cubes with nonempty light are exactly those that arise as the minimal
/// family cube of some point, and their light sets partition the covered
/// region `omega`.
#[derive(Debug, Clone)]
pub struct LightShade {
    pub cubes: Vec<DyadicCube>,
    /// Per cube: cells of its light set.
    pub light: Vec<Vec<u32>>,
    /// Per cube: cells of its shade.
    pub shade: Vec<Vec<u32>>,
    /// Indices of cubes with nonempty light, ascending.
    pub gamma_min: Vec<u32>,
    /// Indices of cubes whose light fills at least `2^-n` of the cube.
    pub gamma_l: Vec<u32>,
    /// Cells covered by the family, ascending.
    pub omega: Vec<u32>,
    /// Minimal-cube index per cell.
    pub minimal: Vec<Option<u32>>,
}

pub fn light_shade(family: &CubeFamily) -> Result<LightShade> {
    let minimal = minimal_cube_map(family)?;
    let m = family.len();
    let mut light = vec![Vec::new(); m];
    let mut shade = vec![Vec::new(); m];
    for (idx, q) in family.cubes.iter().enumerate() {
        // A cell of Q whose minimal cube is finer than Q lies in some strict
        // sub-cube of Q from the family, i.e. in the shade.
        q.for_each_cell(family.depth, |c| {
            if minimal[c as usize] == Some(idx as u32) {
                light[idx].push(c);
            } else {
                shade[idx].push(c);
            }
        })?;
    }
    let gamma_min: Vec<u32> = (0..m)
        .filter(|&i| !light[i].is_empty())
        .map(|i| i as u32)
        .collect();
    let shift = family.dim as u32; // light >= |Q| / 2^n, in exact cell counts
    let gamma_l: Vec<u32> = (0..m)
        .filter(|&i| {
            let span = family.cubes[i].cell_span(family.depth).unwrap() as u64;
            (light[i].len() as u64) << shift >= span
        })
        .map(|i| i as u32)
        .collect();
    let omega: Vec<u32> = minimal
        .iter()
        .enumerate()
        .filter_map(|(c, m)| m.map(|_| c as u32))
        .collect();
    Ok(LightShade {
        cubes: family.cubes.clone(),
        light,
        shade,
        gamma_min,
        gamma_l,
        omega,
        minimal,
    })
}
