//! Modular, Luxemburg norm, Hölder pairing, dyadic maximal operator.
//!
//! The norm solver groups cells by (|value|, exponent) before bisecting, so
//! each modular evaluation costs one `powf` per distinct pair rather than per
//! cell. Grouping uses a `BTreeMap` keyed on bit patterns: iteration order is
//! then a pure function of the data, which keeps results bit-identical across
//! runs and thread counts.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::exponent::{conjugate, harmonic_mean_exponent, ExponentField};
use crate::grid::{ancestor_pos, cell_count, DyadicCube, GridFunction};

/// `(|value|, exponent, weight)` rows with weight = count * cell measure.
struct Grouped {
    terms: Vec<(f64, f64, f64)>,
    max_abs: f64,
}

fn grouped_from_values(values: &[f64], p: &ExponentField, measure: f64) -> Grouped {
    let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (c, &v) in values.iter().enumerate() {
        let a = v.abs();
        if a == 0.0 {
            continue;
        }
        *counts
            .entry((a.to_bits(), p.value(c as u32).to_bits()))
            .or_insert(0) += 1;
    }
    let mut max_abs: f64 = 0.0;
    let terms = counts
        .into_iter()
        .map(|((vb, pb), n)| {
            let v = f64::from_bits(vb);
            max_abs = max_abs.max(v);
            (v, f64::from_bits(pb), n as f64 * measure)
        })
        .collect();
    Grouped { terms, max_abs }
}

fn grouped_from_fn(f: &GridFunction, p: &ExponentField) -> Result<Grouped> {
    if !p.same_shape(f) {
        return Err(Error::Alignment {
            depth: f.depth(),
            detail: "function and exponent field shapes differ".into(),
        });
    }
    for (c, &v) in f.values().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {v} in cell {c}")));
        }
    }
    Ok(grouped_from_values(f.values(), p, f.cell_measure()))
}

/// Norm of a raw value slice already known to match `p`'s shape; the hot
/// path for subset searches, which re-evaluate residual norms thousands of
/// times per instance.
pub(crate) fn luxemburg_values(values: &[f64], p: &ExponentField) -> f64 {
    debug_assert_eq!(values.len(), cell_count(p.dim(), p.depth()) as usize);
    let measure = 1.0 / cell_count(p.dim(), p.depth()) as f64;
    solve_norm(&grouped_from_values(values, p, measure))
}

fn modular_of(g: &Grouped, lambda: f64) -> f64 {
    g.terms
        .iter()
        .map(|&(v, p, w)| w * (v / lambda).powf(p))
        .sum()
}

/// Unique positive root of `modular(lambda) = 1`, by bracketed bisection.
///
/// Invariant: on a measure-1 domain, `modular(max_abs) <= 1`, so `max_abs`
/// brackets from above. A single (value, exponent) group has the closed form
/// `lambda = v * w^{1/p}` and is returned exactly.
fn solve_norm(g: &Grouped) -> f64 {
    if g.terms.is_empty() {
        return 0.0;
    }
    if g.terms.len() == 1 {
        let (v, p, w) = g.terms[0];
        return v * w.powf(1.0 / p);
    }
    // one exponent across all groups: classical L^p closed form
    let p0 = g.terms[0].1;
    if g.terms.iter().all(|&(_, p, _)| p == p0) {
        let s: f64 = g.terms.iter().map(|&(v, p, w)| w * v.powf(p)).sum();
        return s.powf(1.0 / p0);
    }
    let mut hi = g.max_abs;
    if modular_of(g, hi) == 1.0 {
        return hi;
    }
    let mut lo = hi;
    for _ in 0..200 {
        lo *= 0.5;
        if modular_of(g, lo) >= 1.0 {
            break;
        }
    }
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if modular_of(g, mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `int (|f(x)| / lambda)^{p(x)} dx` as an exact cell sum.
pub fn modular(f: &GridFunction, p: &ExponentField, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "modular scale must be positive, got {lambda}"
        )));
    }
    let g = grouped_from_fn(f, p)?;
    Ok(modular_of(&g, lambda))
}

/// Norm `‖f‖_{p(·)}`: zero for the zero function, else the unique `lambda`
/// with `modular(f, p, lambda) = 1`, to relative tolerance 1e-12.
pub fn luxemburg_norm(f: &GridFunction, p: &ExponentField) -> Result<f64> {
    let g = grouped_from_fn(f, p)?;
    Ok(solve_norm(&g))
}

/// Norm of an indicator function given by its (sorted) cell set.
///
/// Callers guarantee `cells` lie on the grid; an out-of-range index panics.
pub fn char_norm(p: &ExponentField, cells: &[u32]) -> f64 {
    let measure = 1.0 / cell_count(p.dim(), p.depth()) as f64;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in cells {
        *counts.entry(p.value(c).to_bits()).or_insert(0) += 1;
    }
    let terms: Vec<(f64, f64, f64)> = counts
        .into_iter()
        .map(|(pb, n)| (1.0, f64::from_bits(pb), n as f64 * measure))
        .collect();
    let max_abs = if terms.is_empty() { 0.0 } else { 1.0 };
    solve_norm(&Grouped { terms, max_abs })
}

/// Memo table for indicator norms, fixed to one exponent field.
///
/// Keys are a digest of the sorted cell set; the field's fingerprint is
/// checked on every call so a cache cannot silently serve values for a
/// different field. Confine one cache per worker thread; lookups are not
/// synchronized.
pub struct NormCache {
    fingerprint: u64,
    map: HashMap<u64, f64>,
}

fn cell_set_digest(cells: impl IntoIterator<Item = u32>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for c in cells {
        for b in c.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl NormCache {
    pub fn new(p: &ExponentField) -> Self {
        Self {
            fingerprint: p.fingerprint(),
            map: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Cached `char_norm`; `cells` must be sorted ascending.
    pub fn char_norm(&mut self, p: &ExponentField, cells: &[u32]) -> f64 {
        assert_eq!(
            self.fingerprint,
            p.fingerprint(),
            "cache bound to a different exponent field"
        );
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        let key = cell_set_digest(cells.iter().copied());
        if let Some(&n) = self.map.get(&key) {
            return n;
        }
        let n = char_norm(p, cells);
        self.map.insert(key, n);
        n
    }

    /// Cached indicator norm of a whole cube, without materializing its cells.
    pub fn cube_norm(&mut self, p: &ExponentField, cube: &DyadicCube) -> Result<f64> {
        assert_eq!(
            self.fingerprint,
            p.fingerprint(),
            "cache bound to a different exponent field"
        );
        if cube.dim() != p.dim() {
            return Err(Error::InvalidInput("cube dimension mismatch".into()));
        }
        let mut hash = 0xcbf29ce484222325u64;
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        cube.for_each_cell(p.depth(), |c| {
            for b in c.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
            *counts.entry(p.value(c).to_bits()).or_insert(0) += 1;
        })?;
        if let Some(&n) = self.map.get(&hash) {
            return Ok(n);
        }
        let measure = 1.0 / cell_count(p.dim(), p.depth()) as f64;
        let terms: Vec<(f64, f64, f64)> = counts
            .into_iter()
            .map(|(pb, n)| (1.0, f64::from_bits(pb), n as f64 * measure))
            .collect();
        let n = solve_norm(&Grouped {
            terms,
            max_abs: 1.0,
        });
        self.map.insert(hash, n);
        Ok(n)
    }
}

/// Dyadic Hardy–Littlewood maximal function: per cell, the largest average of
/// `|f|` over the dyadic cubes (scales `0..=J`) containing that cell.
pub fn dyadic_maximal(f: &GridFunction) -> GridFunction {
    let dim = f.dim();
    let depth = f.depth();
    let n_cells = cell_count(dim, depth) as usize;
    // averages level by level, coarsening from the cells upward
    let mut result: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let mut level = result.clone();
    for scale in (0..depth).rev() {
        // coarsen: parent average = mean over 2^dim children
        let parent_cells = 1usize << (dim as u32 * scale as u32);
        let mut coarse = vec![0.0f64; parent_cells];
        let child_depth = scale + 1;
        for (pos, v) in level.iter().enumerate() {
            let parent = ancestor_pos(dim, child_depth, pos as u32, scale) as usize;
            coarse[parent] += v;
        }
        let inv = 1.0 / (1u64 << dim) as f64;
        for v in &mut coarse {
            *v *= inv;
        }
        for (cell, r) in result.iter_mut().enumerate().take(n_cells) {
            let anc = ancestor_pos(dim, depth, cell as u32, scale) as usize;
            if coarse[anc] > *r {
                *r = coarse[anc];
            }
        }
        level = coarse;
    }
    let mut out = GridFunction::zeros(dim, depth).expect("shape already validated");
    out.values_mut().copy_from_slice(&result);
    out
}

/// `2 ‖f‖_{p(·)} ‖g‖_{p'(·)} - int |f g|`; expected non-negative (>= -1e-9).
pub fn holder_defect(f: &GridFunction, g: &GridFunction, p: &ExponentField) -> Result<f64> {
    if !f.same_shape(g) || !p.same_shape(f) {
        return Err(Error::Alignment {
            depth: f.depth(),
            detail: "shape mismatch in pairing".into(),
        });
    }
    let nf = luxemburg_norm(f, p)?;
    let ng = luxemburg_norm(g, &conjugate(p))?;
    let pairing: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a * b).abs())
        .sum::<f64>()
        * f.cell_measure();
    Ok(2.0 * nf * ng - pairing)
}

/// Quantities relating a cell set `E` inside a cube `Q`: measure and norm
/// ratios, the two sides of the harmonic-mean bound `|Q|^{1/p_Q} <= 2‖χ_Q‖`,
/// and the maximal-function gain `‖M χ_E‖ / ‖χ_E‖`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EmbeddingReport {
    pub ratio_measure: f64,
    pub ratio_norm: f64,
    pub diening_lhs: f64,
    pub diening_rhs: f64,
    pub maximal_lower: f64,
}

pub fn embedding_checks(
    p: &ExponentField,
    e_cells: &[u32],
    q: &DyadicCube,
) -> Result<EmbeddingReport> {
    if e_cells.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if q.dim() != p.dim() || q.scale() > p.depth() {
        return Err(Error::InvalidInput("cube does not fit the grid".into()));
    }
    for &c in e_cells {
        if ancestor_pos(p.dim(), p.depth(), c, q.scale()) != q.pos() {
            return Err(Error::Containment);
        }
    }
    let span = q.cell_span(p.depth())? as f64;
    let norm_e = char_norm(p, e_cells);
    let mut cache = NormCache::new(p);
    let norm_q = cache.cube_norm(p, q)?;
    let p_q = harmonic_mean_exponent(p, q)?;
    let mut ind = GridFunction::zeros(p.dim(), p.depth())?;
    for &c in e_cells {
        ind.values_mut()[c as usize] = 1.0;
    }
    let m_ind = dyadic_maximal(&ind);
    let norm_m = luxemburg_norm(&m_ind, p)?;
    Ok(EmbeddingReport {
        ratio_measure: e_cells.len() as f64 / span,
        ratio_norm: norm_e / norm_q,
        diening_lhs: q.measure().powf(1.0 / p_q),
        diening_rhs: 2.0 * norm_q,
        maximal_lower: norm_m / norm_e,
    })
}
