//! Democracy sums over cube families, extremal family constructions, and
//! the scaling-law estimator.
//!
//! True democracy functions are a sup/inf over every N-element family, which
//! is intractable; the estimator evaluates structured candidates (the
//! extremal constructions plus disjoint and nested families) together with
//! seeded random families. The reported `h_r_est` is therefore a lower bound
//! for the true sup and `h_l_est` an upper bound for the true inf; slopes,
//! not levels, are the quantities of interest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{harmonic_mean_exponent, level_sets, ExponentField};
use crate::fit::{fit_exponent, PowerFit};
use crate::grid::{cell_count, light_shade, CubeFamily, DyadicCube};
use crate::haar::{synthesize, HaarCoefficients};
use crate::norm::{luxemburg_values, NormCache};

fn check_family_shape(gamma: &CubeFamily, p: &ExponentField) -> Result<()> {
    if gamma.dim() != p.dim() || gamma.depth() != p.depth() {
        return Err(Error::InvalidInput(
            "family and exponent field shapes differ".into(),
        ));
    }
    Ok(())
}

fn check_kind(kind: u16, dim: u8) -> Result<()> {
    if kind == 0 || kind as u64 >= 1u64 << dim {
        return Err(Error::InvalidParameter(format!(
            "wavelet type {kind} outside 1..2^{dim}-1"
        )));
    }
    Ok(())
}

/// `‖ sum_{Q in Γ} ψ^l_Q / ‖ψ^l_Q‖ ‖_{p(·)}` by direct synthesis of the sum
/// (no square-function shortcut). Requires every scale below the depth.
pub fn democracy_norm(gamma: &CubeFamily, kind: u16, p: &ExponentField) -> Result<f64> {
    check_family_shape(gamma, p)?;
    check_kind(kind, p.dim())?;
    for q in gamma.cubes() {
        if q.scale() >= p.depth() {
            return Err(Error::Resolution {
                scale: q.scale(),
                depth: p.depth(),
            });
        }
    }
    let mut cache = NormCache::new(p);
    let mut coeffs = HaarCoefficients::new(p.dim(), p.depth())?;
    for q in gamma.cubes() {
        let basis = cache.cube_norm(p, q)? / q.measure().powf(0.5);
        coeffs.set_detail(q, kind, 1.0 / basis)?;
    }
    Ok(luxemburg_values(synthesize(&coeffs).values(), p))
}

/// Norm of `S_Γ = (sum_Q χ_Q / ‖χ_Q‖²)^{1/2}`. Scale-J cubes are allowed:
/// no wavelet is involved.
pub fn square_sum_norm(gamma: &CubeFamily, p: &ExponentField) -> Result<f64> {
    check_family_shape(gamma, p)?;
    let mut cache = NormCache::new(p);
    let mut s2 = vec![0.0f64; cell_count(p.dim(), p.depth()) as usize];
    for q in gamma.cubes() {
        // square the rounded reciprocal: sqrt(inv*inv) == inv in IEEE, so a
        // disjoint family reproduces the linearized values bit for bit
        let inv = 1.0 / cache.cube_norm(p, q)?;
        let add = inv * inv;
        q.for_each_cell(p.depth(), |c| s2[c as usize] += add)?;
    }
    for v in &mut s2 {
        *v = v.sqrt();
    }
    Ok(luxemburg_values(&s2, p))
}

/// Norm of the linearization `sum_{Q minimal} χ_{light(Q)} / ‖χ_Q‖`: at most
/// one summand survives per cell. Equals `square_sum_norm` exactly on
/// pairwise disjoint families.
pub fn linearized_norm(gamma: &CubeFamily, p: &ExponentField) -> Result<f64> {
    check_family_shape(gamma, p)?;
    let ls = light_shade(gamma)?;
    let mut cache = NormCache::new(p);
    let mut vals = vec![0.0f64; cell_count(p.dim(), p.depth()) as usize];
    for &idx in &ls.gamma_min {
        let q = &ls.cubes[idx as usize];
        let inv = 1.0 / cache.cube_norm(p, q)?;
        for &c in &ls.light[idx as usize] {
            vals[c as usize] = inv;
        }
    }
    Ok(luxemburg_values(&vals, p))
}

/// Deterministic fine-to-coarse scan shared by the extremal constructions:
/// selects pairwise disjoint cubes, coarsest candidates last, accepting a
/// cube when `accept` approves its (cells-in-set, span) statistics.
fn scan_disjoint(
    p: &ExponentField,
    max_scale: u8,
    count: usize,
    mask: &[bool],
    mut accept: impl FnMut(&DyadicCube, u64, u64) -> Result<bool>,
) -> Result<Vec<DyadicCube>> {
    let n_cells = cell_count(p.dim(), p.depth()) as usize;
    let mut covered = vec![false; n_cells];
    let mut picked: Vec<DyadicCube> = Vec::new();
    for scale in (0..=max_scale).rev() {
        let cubes_at = 1u64 << (p.dim() as u32 * scale as u32);
        for pos in 0..cubes_at {
            if picked.len() == count {
                return Ok(picked);
            }
            let q = DyadicCube::from_pos(p.dim(), scale, pos).expect("position in range");
            let mut clash = false;
            let mut hits: u64 = 0;
            q.for_each_cell(p.depth(), |c| {
                clash |= covered[c as usize];
                hits += u64::from(mask[c as usize]);
            })?;
            let span = q.cell_span(p.depth())? as u64;
            if clash || !accept(&q, hits, span)? {
                continue;
            }
            q.for_each_cell(p.depth(), |c| covered[c as usize] = true)?;
            picked.push(q);
        }
    }
    if picked.len() < count {
        return Err(Error::Capacity {
            requested: count,
            max_feasible: picked.len(),
        });
    }
    Ok(picked)
}

fn cell_mask(p: &ExponentField, cells: &[u32]) -> Vec<bool> {
    let mut mask = vec![false; cell_count(p.dim(), p.depth()) as usize];
    for &c in cells {
        mask[c as usize] = true;
    }
    mask
}

/// `count` pairwise disjoint cubes, each with at least half its cells in the
/// low-exponent set `{p <= p_min + epsilon}`, scanning scales fine to coarse.
pub fn construct_gamma1_at(
    p: &ExponentField,
    epsilon: f64,
    count: usize,
    max_scale: u8,
) -> Result<CubeFamily> {
    if count == 0 {
        return Err(Error::InvalidParameter("empty construction".into()));
    }
    if max_scale > p.depth() {
        return Err(Error::InvalidParameter(format!(
            "scan scale {max_scale} beyond depth {}",
            p.depth()
        )));
    }
    let ls = level_sets(p, epsilon)?;
    let mask = cell_mask(p, &ls.g_cells);
    let picked = scan_disjoint(p, max_scale, count, &mask, |_, hits, span| {
        Ok(2 * hits >= span)
    })?;
    CubeFamily::new(p.dim(), p.depth(), picked)
}

pub fn construct_gamma1(p: &ExponentField, epsilon: f64, count: usize) -> Result<CubeFamily> {
    construct_gamma1_at(p, epsilon, count, p.depth())
}

/// `count` pairwise disjoint cubes `Q` with `|H_ε ∩ Q|/|Q| > 1 - 1/(2N)` and
/// harmonic-mean exponent strictly above `p_max - ε`.
pub fn construct_gamma2_at(
    p: &ExponentField,
    epsilon: f64,
    count: usize,
    max_scale: u8,
) -> Result<CubeFamily> {
    if count == 0 {
        return Err(Error::InvalidParameter("empty construction".into()));
    }
    if max_scale > p.depth() {
        return Err(Error::InvalidParameter(format!(
            "scan scale {max_scale} beyond depth {}",
            p.depth()
        )));
    }
    if !(epsilon > 0.0 && epsilon < p.p_max() - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "margin {epsilon} outside (0, p_max - 1)"
        )));
    }
    let ls = level_sets(p, epsilon)?;
    let mask = cell_mask(p, &ls.h_cells);
    let threshold = p.p_max() - epsilon;
    let n = count as u128;
    let picked = scan_disjoint(p, max_scale, count, &mask, |q, hits, span| {
        if 2 * n * hits as u128 <= (2 * n - 1) * span as u128 {
            return Ok(false);
        }
        Ok(harmonic_mean_exponent(p, q)? > threshold)
    })?;
    CubeFamily::new(p.dim(), p.depth(), picked)
}

pub fn construct_gamma2(p: &ExponentField, epsilon: f64, count: usize) -> Result<CubeFamily> {
    construct_gamma2_at(p, epsilon, count, p.depth())
}

/// `(value, bound)` for the low-exponent construction: the square-sum norm
/// against `r_min * N^{1/(p_min + ε)}`, where `r_min` is the worst measured
/// norm ratio `‖χ_{G ∩ Q}‖ / ‖χ_Q‖` over the family (standing in for the
/// unmeasurable maximal-operator constant).
pub fn gamma1_lower_bound(
    p: &ExponentField,
    gamma: &CubeFamily,
    epsilon: f64,
) -> Result<(f64, f64)> {
    check_family_shape(gamma, p)?;
    if gamma.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let ls = level_sets(p, epsilon)?;
    let mask = cell_mask(p, &ls.g_cells);
    let value = square_sum_norm(gamma, p)?;
    let mut cache = NormCache::new(p);
    let mut r_min = f64::INFINITY;
    for q in gamma.cubes() {
        let in_g: Vec<u32> = q
            .cells(p.depth())?
            .into_iter()
            .filter(|&c| mask[c as usize])
            .collect();
        let ratio = cache.char_norm(p, &in_g) / cache.cube_norm(p, q)?;
        r_min = r_min.min(ratio);
    }
    let bound = r_min * (gamma.len() as f64).powf(1.0 / (p.p_min() + epsilon));
    Ok((value, bound))
}

/// `(value, bound)` for the high-exponent construction: the square-sum norm
/// against `2^{p_max/p_min + 1/(p_max - ε)} * N^{1/(p_max - ε)}`, a fully
/// computable constant.
pub fn gamma2_upper_bound(
    p: &ExponentField,
    gamma: &CubeFamily,
    epsilon: f64,
) -> Result<(f64, f64)> {
    check_family_shape(gamma, p)?;
    if gamma.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if !(epsilon > 0.0 && epsilon < p.p_max() - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "margin {epsilon} outside (0, p_max - 1)"
        )));
    }
    let value = square_sum_norm(gamma, p)?;
    let e = 1.0 / (p.p_max() - epsilon);
    let bound = 2f64.powf(p.p_max() / p.p_min() + e) * (gamma.len() as f64).powf(e);
    Ok((value, bound))
}

/// Candidate-family generators for the democracy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Deterministic disjoint cubes lying entirely inside the low set.
    #[serde(rename = "disjoint-in-G")]
    DisjointInG,
    /// The half-fraction low-exponent construction.
    Gamma1,
    /// The high-fraction high-exponent construction.
    Gamma2,
    /// The corner chain `[0, 2^{-j})^n`, scales `0..N`.
    NestedTower,
    /// Distinct cubes drawn uniformly from the mid-to-fine scale band.
    UniformRandom,
    /// Disjoint cubes drawn inside one exponent stratum per family.
    StratifiedRandom,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::DisjointInG,
        Strategy::Gamma1,
        Strategy::Gamma2,
        Strategy::NestedTower,
        Strategy::UniformRandom,
        Strategy::StratifiedRandom,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Strategy::DisjointInG => "disjoint-in-G",
            Strategy::Gamma1 => "gamma1",
            Strategy::Gamma2 => "gamma2",
            Strategy::NestedTower => "nested-tower",
            Strategy::UniformRandom => "uniform-random",
            Strategy::StratifiedRandom => "stratified-random",
        }
    }

    fn rank(&self) -> u64 {
        Strategy::ALL.iter().position(|s| s == self).unwrap() as u64
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    /// Families generated per randomized strategy and N.
    pub random_families: usize,
    /// Level-set margin used by the set-based strategies.
    pub epsilon: f64,
    /// Wavelet type entering the democracy sums.
    pub kind: u16,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            random_families: 8,
            epsilon: 0.5,
            kind: 1,
        }
    }
}

/// One evaluated family. The generating triple (strategy, N, family index)
/// reproduces the family exactly under the same seed.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyValue {
    pub n: usize,
    pub strategy: Strategy,
    pub family: u32,
    pub value: f64,
    /// `(square_sum_norm, lower bound)` when the family came from gamma1.
    pub gamma1_check: Option<(f64, f64)>,
    /// `(square_sum_norm, upper bound)` when the family came from gamma2.
    pub gamma2_check: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NSummary {
    pub n: usize,
    pub h_r_est: f64,
    pub h_l_est: f64,
    pub argmax: (Strategy, u32),
    pub argmin: (Strategy, u32),
}

#[derive(Debug, Clone, Serialize)]
pub struct SkipNote {
    pub strategy: Strategy,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemocracyRecord {
    pub rows: Vec<FamilyValue>,
    pub per_n: Vec<NSummary>,
    pub fit_r: PowerFit,
    pub fit_l: PowerFit,
    pub skipped: Vec<SkipNote>,
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn stream_rng(seed: u64, strategy: Strategy, n: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(
        seed ^ splitmix(strategy.rank() ^ splitmix(n as u64)),
    ))
}

/// Cubes per scale in `[lo, hi]` and the total, for band-uniform sampling.
fn band_sizes(dim: u8, lo: u8, hi: u8) -> (Vec<u64>, u64) {
    let sizes: Vec<u64> = (lo..=hi)
        .map(|j| 1u64 << (dim as u32 * j as u32))
        .collect();
    let total = sizes.iter().sum();
    (sizes, total)
}

fn sample_band_cube(
    dim: u8,
    lo: u8,
    sizes: &[u64],
    total: u64,
    rng: &mut ChaCha8Rng,
) -> DyadicCube {
    let mut i = rng.gen_range(0..total);
    for (off, &s) in sizes.iter().enumerate() {
        if i < s {
            return DyadicCube::from_pos(dim, lo + off as u8, i).expect("index in range");
        }
        i -= s;
    }
    unreachable!("band sampling index within total")
}

/// Deterministic disjoint cubes fully inside `mask`, fine to coarse.
fn disjoint_inside(
    p: &ExponentField,
    mask: &[bool],
    count: usize,
    max_scale: u8,
) -> Result<Vec<DyadicCube>> {
    scan_disjoint(p, max_scale, count, mask, |_, hits, span| Ok(hits == span))
}

fn generate_families(
    strategy: Strategy,
    p: &ExponentField,
    n: usize,
    opts: &EstimatorOptions,
    seed: u64,
) -> Result<Vec<CubeFamily>> {
    let depth = p.depth();
    let max_scale = depth - 1;
    let dim = p.dim();
    match strategy {
        Strategy::DisjointInG => {
            let ls = level_sets(p, opts.epsilon)?;
            let mask = cell_mask(p, &ls.g_cells);
            let cubes = disjoint_inside(p, &mask, n, max_scale)?;
            Ok(vec![CubeFamily::new(dim, depth, cubes)?])
        }
        Strategy::Gamma1 => Ok(vec![construct_gamma1_at(p, opts.epsilon, n, max_scale)?]),
        Strategy::Gamma2 => Ok(vec![construct_gamma2_at(p, opts.epsilon, n, max_scale)?]),
        Strategy::NestedTower => {
            if n > max_scale as usize + 1 {
                return Err(Error::Capacity {
                    requested: n,
                    max_feasible: max_scale as usize + 1,
                });
            }
            let cubes = (0..n as u8)
                .map(|j| DyadicCube::new(dim, j, &vec![0u32; dim as usize]))
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![CubeFamily::new(dim, depth, cubes)?])
        }
        Strategy::UniformRandom => {
            let lo = (depth / 2).min(max_scale);
            let (sizes, total) = band_sizes(dim, lo, max_scale);
            if (n as u64) > total {
                return Err(Error::Capacity {
                    requested: n,
                    max_feasible: total as usize,
                });
            }
            let mut rng = stream_rng(seed, strategy, n);
            let mut out = Vec::with_capacity(opts.random_families);
            for _ in 0..opts.random_families {
                let mut set = std::collections::BTreeSet::new();
                while set.len() < n {
                    set.insert(sample_band_cube(dim, lo, &sizes, total, &mut rng));
                }
                out.push(CubeFamily::new(dim, depth, set.into_iter().collect())?);
            }
            Ok(out)
        }
        Strategy::StratifiedRandom => {
            let ls = level_sets(p, opts.epsilon)?;
            let masks = [cell_mask(p, &ls.g_cells), cell_mask(p, &ls.h_cells)];
            let lo = (depth / 2).min(max_scale);
            let (sizes, total) = band_sizes(dim, lo, max_scale);
            let mut rng = stream_rng(seed, strategy, n);
            let mut out = Vec::with_capacity(opts.random_families);
            for fam in 0..opts.random_families {
                let mask = &masks[fam % 2];
                let mut covered = vec![false; mask.len()];
                let mut chosen: Vec<DyadicCube> = Vec::with_capacity(n);
                let mut tries = 0usize;
                while chosen.len() < n && tries < 200 * n + 200 {
                    tries += 1;
                    let q = sample_band_cube(dim, lo, &sizes, total, &mut rng);
                    let mut ok = true;
                    q.for_each_cell(depth, |c| {
                        ok &= mask[c as usize] && !covered[c as usize];
                    })?;
                    if ok {
                        q.for_each_cell(depth, |c| covered[c as usize] = true)?;
                        chosen.push(q);
                    }
                }
                if chosen.len() < n {
                    // deterministic fill at the finest band scale
                    let fine = 1u64 << (dim as u32 * max_scale as u32);
                    for pos in 0..fine {
                        if chosen.len() == n {
                            break;
                        }
                        let q = DyadicCube::from_pos(dim, max_scale, pos)?;
                        let mut ok = true;
                        q.for_each_cell(depth, |c| {
                            ok &= mask[c as usize] && !covered[c as usize];
                        })?;
                        if ok {
                            q.for_each_cell(depth, |c| covered[c as usize] = true)?;
                            chosen.push(q);
                        }
                    }
                }
                if chosen.len() < n {
                    return Err(Error::Capacity {
                        requested: n,
                        max_feasible: chosen.len(),
                    });
                }
                chosen.sort();
                out.push(CubeFamily::new(dim, depth, chosen)?);
            }
            Ok(out)
        }
    }
}

/// Evaluates candidate families from each strategy at each N; per-strategy
/// capacity shortfalls are recorded and skipped, everything else evaluates.
/// Results are independent of thread count: generation is sequential and
/// evaluation order-preserving.
pub fn estimate_democracy(
    p: &ExponentField,
    ns: &[usize],
    strategies: &[Strategy],
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<DemocracyRecord> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidRange(
            "N values must be positive and strictly increasing".into(),
        ));
    }
    if strategies.is_empty() {
        return Err(Error::InvalidInput("no strategies selected".into()));
    }
    if p.depth() == 0 {
        return Err(Error::InvalidInput(
            "democracy sums need at least one wavelet scale".into(),
        ));
    }
    check_kind(opts.kind, p.dim())?;
    let mut unique: Vec<Strategy> = Vec::new();
    for &s in strategies {
        if !unique.contains(&s) {
            unique.push(s);
        }
    }
    let mut tasks: Vec<(Strategy, usize, u32, CubeFamily)> = Vec::new();
    let mut skipped = Vec::new();
    for &strategy in &unique {
        for &n in ns {
            match generate_families(strategy, p, n, opts, seed) {
                Ok(families) => {
                    for (i, fam) in families.into_iter().enumerate() {
                        tasks.push((strategy, n, i as u32, fam));
                    }
                }
                Err(Error::Capacity {
                    requested,
                    max_feasible,
                }) => skipped.push(SkipNote {
                    strategy,
                    n,
                    reason: format!("capacity: requested {requested}, feasible {max_feasible}"),
                }),
                Err(e) => return Err(e),
            }
        }
    }
    let rows: Vec<FamilyValue> = tasks
        .par_iter()
        .map(|(strategy, n, family, fam)| -> Result<FamilyValue> {
            let value = democracy_norm(fam, opts.kind, p)?;
            let gamma1_check = if *strategy == Strategy::Gamma1 {
                Some(gamma1_lower_bound(p, fam, opts.epsilon)?)
            } else {
                None
            };
            let gamma2_check = if *strategy == Strategy::Gamma2 {
                Some(gamma2_upper_bound(p, fam, opts.epsilon)?)
            } else {
                None
            };
            Ok(FamilyValue {
                n: *n,
                strategy: *strategy,
                family: *family,
                value,
                gamma1_check,
                gamma2_check,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_n = Vec::new();
    for &n in ns {
        let group: Vec<&FamilyValue> = rows.iter().filter(|r| r.n == n).collect();
        if group.is_empty() {
            continue; // every strategy hit capacity at this N
        }
        let mut hi = group[0];
        let mut lo = group[0];
        for r in &group[1..] {
            if r.value > hi.value {
                hi = r;
            }
            if r.value < lo.value {
                lo = r;
            }
        }
        per_n.push(NSummary {
            n,
            h_r_est: hi.value,
            h_l_est: lo.value,
            argmax: (hi.strategy, hi.family),
            argmin: (lo.strategy, lo.family),
        });
    }
    let pairs_r: Vec<(f64, f64)> = per_n.iter().map(|s| (s.n as f64, s.h_r_est)).collect();
    let pairs_l: Vec<(f64, f64)> = per_n.iter().map(|s| (s.n as f64, s.h_l_est)).collect();
    let fit_r = fit_exponent(&pairs_r)?;
    let fit_l = fit_exponent(&pairs_l)?;
    Ok(DemocracyRecord {
        rows,
        per_n,
        fit_r,
        fit_l,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{ExponentRecipe, Piece};

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

    fn family(dim: u8, depth: u8, cubes: &[(u8, u32)]) -> CubeFamily {
        let cubes = cubes
            .iter()
            .map(|&(j, k)| DyadicCube::new(dim, j, &[k]).unwrap())
            .collect();
        CubeFamily::new(dim, depth, cubes).unwrap()
    }

    #[test]
    fn democracy_norm_orthonormal_case() {
        let p = ExponentField::constant(1, 4, 2.0).unwrap();
        // five cubes, mixed scales and overlaps
        let fam = family(1, 4, &[(0, 0), (1, 1), (2, 1), (3, 5), (3, 0)]);
        let v = democracy_norm(&fam, 1, &p).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-12, "value {v}");
    }

    #[test]
    fn democracy_norm_disjoint_constant_exponent() {
        let p = ExponentField::constant(1, 4, 3.0).unwrap();
        let fam = family(1, 4, &(0..8).map(|k| (3u8, k as u32)).collect::<Vec<_>>());
        let v = democracy_norm(&fam, 1, &p).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "value {v}"); // 8^{1/3}
    }

    #[test]
    fn democracy_norm_rejects_cell_scale_cubes() {
        let p = two_four(3);
        let fam = family(1, 3, &[(3, 0)]);
        assert!(matches!(
            democracy_norm(&fam, 1, &p),
            Err(Error::Resolution { .. })
        ));
        assert!(democracy_norm(&family(1, 3, &[(1, 0)]), 0, &p).is_err());
    }

    #[test]
    fn democracy_vs_square_sum_same_ballpark() {
        let p = two_four(4);
        let cubes: Vec<(u8, u32)> = (0..8).map(|k| (3u8, k)).collect();
        let fam = family(1, 4, &cubes);
        let d = democracy_norm(&fam, 1, &p).unwrap();
        let s = square_sum_norm(&fam, &p).unwrap();
        let ratio = d / s;
        assert!((0.25..=4.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn square_sum_examples() {
        let p2 = ExponentField::constant(1, 2, 2.0).unwrap();
        let singleton = family(1, 2, &[(1, 1)]);
        assert!((square_sum_norm(&singleton, &p2).unwrap() - 1.0).abs() < 1e-9);

        let tower = family(1, 2, &[(0, 0), (1, 0), (2, 0)]);
        let v = square_sum_norm(&tower, &p2).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-12, "tower {v}");

        let p3 = ExponentField::constant(1, 3, 3.0).unwrap();
        let disjoint = family(1, 3, &[(3, 0), (3, 2), (3, 5), (3, 7)]);
        let v = square_sum_norm(&disjoint, &p3).unwrap();
        assert!((v - 4f64.powf(1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn linearized_examples() {
        let p2 = ExponentField::constant(1, 2, 2.0).unwrap();
        let tower = family(1, 2, &[(0, 0), (1, 0), (2, 0)]);
        let v = linearized_norm(&tower, &p2).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-12, "tower {v}");

        let singleton = family(1, 2, &[(1, 0)]);
        assert!((linearized_norm(&singleton, &p2).unwrap() - 1.0).abs() < 1e-9);

        // disjoint family: linearization and square sum agree exactly
        let p = two_four(3);
        let disjoint = family(1, 3, &[(2, 0), (2, 3), (3, 3), (3, 4)]);
        assert_eq!(
            linearized_norm(&disjoint, &p).unwrap(),
            square_sum_norm(&disjoint, &p).unwrap()
        );
    }

    #[test]
    fn gamma1_construction_examples() {
        let p = two_four(3);
        let fam = construct_gamma1(&p, 0.5, 4).unwrap();
        assert_eq!(fam.len(), 4);
        assert!(fam.is_pairwise_disjoint());
        // all cells in the low half
        for q in fam.cubes() {
            for c in q.cells(3).unwrap() {
                assert!(c < 4, "cube {q} leaves the low set");
            }
        }
        // constant field: level set is everything, capacity = cell count
        let pc = ExponentField::constant(1, 3, 2.5).unwrap();
        assert!(construct_gamma1(&pc, 0.1, 8).is_ok());
        match construct_gamma1(&pc, 0.1, 9) {
            Err(Error::Capacity {
                requested,
                max_feasible,
            }) => {
                assert_eq!((requested, max_feasible), (9, 8));
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn gamma2_construction_examples() {
        let p = two_four(3);
        let fam = construct_gamma2(&p, 0.5, 2).unwrap();
        assert_eq!(fam.len(), 2);
        for q in fam.cubes() {
            assert!(harmonic_mean_exponent(&p, q).unwrap() > 3.5);
            for c in q.cells(3).unwrap() {
                assert!(c >= 4, "cube {q} leaves the high set");
            }
        }
        let pc = ExponentField::constant(1, 3, 4.0).unwrap();
        assert!(construct_gamma2(&pc, 1.0, 8).is_ok());
        assert!(matches!(
            construct_gamma2(&pc, 1.0, 1000),
            Err(Error::Capacity { .. })
        ));
        assert!(matches!(
            construct_gamma2(&pc, 5.0, 2),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn gamma_bounds_hold_on_small_grid() {
        let p = two_four(6);
        for eps in [0.25, 0.5] {
            for n in [1usize, 2, 4, 8] {
                let g1 = construct_gamma1_at(&p, eps, n, 5).unwrap();
                let (v, b) = gamma1_lower_bound(&p, &g1, eps).unwrap();
                assert!(v >= b * (1.0 - 1e-9), "gamma1 eps={eps} n={n}: {v} < {b}");
                let g2 = construct_gamma2_at(&p, eps, n, 5).unwrap();
                let (v, b) = gamma2_upper_bound(&p, &g2, eps).unwrap();
                assert!(v <= b * (1.0 + 1e-9), "gamma2 eps={eps} n={n}: {v} > {b}");
            }
        }
    }

    #[test]
    fn estimator_constant_exponent_is_degenerate() {
        let p = ExponentField::constant(1, 6, 2.0).unwrap();
        let ns = [1, 2, 4, 8];
        let rec =
            estimate_democracy(&p, &ns, &Strategy::ALL, 7, &EstimatorOptions::default()).unwrap();
        for s in &rec.per_n {
            let root = (s.n as f64).sqrt();
            assert!((s.h_r_est - root).abs() < 1e-9, "N={}: {}", s.n, s.h_r_est);
            assert!((s.h_l_est - root).abs() < 1e-9);
        }
        assert!((rec.fit_r.slope - 0.5).abs() < 1e-9);
        assert!((rec.fit_l.slope - 0.5).abs() < 1e-9);
        assert!(rec.fit_r.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn estimator_two_exponent_slopes() {
        let p = two_four(8);
        let ns = [2, 4, 8, 16];
        let rec =
            estimate_democracy(&p, &ns, &Strategy::ALL, 1234, &EstimatorOptions::default())
                .unwrap();
        assert!(
            (0.45..=0.55).contains(&rec.fit_r.slope),
            "slope_r {}",
            rec.fit_r.slope
        );
        assert!(
            (0.20..=0.30).contains(&rec.fit_l.slope),
            "slope_l {}",
            rec.fit_l.slope
        );
        assert!(rec.fit_r.r_squared >= 0.98);
        assert!(rec.fit_l.r_squared >= 0.98);
        // singleton families all evaluate to 1? N=2 is the smallest here;
        // check the invariant h_l <= h_r instead, plus bound checks passed
        for s in &rec.per_n {
            assert!(s.h_l_est <= s.h_r_est + 1e-12);
        }
        for row in &rec.rows {
            if let Some((v, b)) = row.gamma1_check {
                assert!(v >= b * (1.0 - 1e-9));
            }
            if let Some((v, b)) = row.gamma2_check {
                assert!(v <= b * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn estimator_records_singletons_as_unit() {
        let p = two_four(6);
        let rec =
            estimate_democracy(&p, &[1, 2, 4], &Strategy::ALL, 5, &EstimatorOptions::default())
                .unwrap();
        for row in rec.rows.iter().filter(|r| r.n == 1) {
            assert!((row.value - 1.0).abs() < 1e-9, "{:?}", row);
        }
    }

    #[test]
    fn estimator_is_seed_deterministic_and_skips_infeasible() {
        let p = two_four(5);
        // nested tower cannot reach N = 16 at depth 5
        let ns = [4, 8, 16];
        let opts = EstimatorOptions::default();
        let a = estimate_democracy(&p, &ns, &Strategy::ALL, 99, &opts).unwrap();
        let b = estimate_democracy(&p, &ns, &Strategy::ALL, 99, &opts).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
        assert!(a
            .skipped
            .iter()
            .any(|s| s.strategy == Strategy::NestedTower && s.n == 16));
        let c = estimate_democracy(&p, &ns, &Strategy::ALL, 100, &opts).unwrap();
        let differs = a
            .rows
            .iter()
            .zip(&c.rows)
            .any(|(x, y)| x.value.to_bits() != y.value.to_bits());
        assert!(differs, "different seeds should move the random strategies");
    }

    #[test]
    fn estimator_validates_input() {
        let p = two_four(4);
        let opts = EstimatorOptions::default();
        assert!(estimate_democracy(&p, &[], &Strategy::ALL, 1, &opts).is_err());
        assert!(estimate_democracy(&p, &[2, 2], &Strategy::ALL, 1, &opts).is_err());
        assert!(estimate_democracy(&p, &[0, 1], &Strategy::ALL, 1, &opts).is_err());
        assert!(estimate_democracy(&p, &[1, 2, 4], &[], 1, &opts).is_err());
    }

    #[test]
    fn strategy_labels_round_trip() {
        for s in Strategy::ALL {
            let parsed: Strategy = s.label().parse().unwrap();
            assert_eq!(parsed, s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.label()));
            let back: Strategy = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
    }
}
