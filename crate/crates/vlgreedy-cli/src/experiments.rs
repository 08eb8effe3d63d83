//! The experiment drivers. Each computes its complete result in memory and
//! only then persists artifacts, so failed runs leave no files behind; the
//! one exception is the verify runner, which flushes every completed check
//! plus a failure marker when a later battery hits a capacity limit.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use vlgreedy_core::battery::{mixed_mass_function, seeded_rng};
use vlgreedy_core::{
    estimate_democracy, fit_exponent, harmonic_mean_exponent, lebesgue_profile, verify_stage,
    Check, DyadicCube, Error, GridFunction, NSummary, NormCache, PowerFit, ProfileRow,
    SkipNote, VERIFY_STAGES,
};

use crate::config::{DemocracySpec, Experiment, GreedySpec, Prepared, VerifySpec};
use crate::output::{csv_bytes, fmt_f64, write_atomic, write_summary};
use crate::{core_err, CliError};

/// Relative slack applied when a computed family value is compared with its
/// closed-form bound; matches the tolerance the test batteries use.
const BOUND_SLACK: f64 = 1e-9;

pub fn run(prep: &Prepared) -> Result<(), CliError> {
    let start = Instant::now();
    match &prep.config.experiment {
        Experiment::Norm(_) => run_norm(prep, start),
        Experiment::Greedy(spec) => run_greedy(prep, spec, start),
        Experiment::Democracy(spec) => run_democracy(prep, spec, start),
        Experiment::Verify(spec) => run_verify(prep, spec, start),
        Experiment::Report(_) => unreachable!("rejected during preparation"),
    }
}

#[derive(Serialize)]
struct NormResults {
    scales: usize,
    max_jensen_ratio: f64,
    min_char_norm: f64,
    max_char_norm: f64,
}

/// Per-scale characteristic-norm table: for every dyadic scale the range of
/// `‖χ_Q‖` and the worst ratio `|Q|^{1/p_Q} / ‖χ_Q‖` (at most 2 for any
/// exponent field).
fn run_norm(prep: &Prepared, start: Instant) -> Result<(), CliError> {
    let p = &prep.field;
    let mut cache = NormCache::new(p);
    let mut rows = Vec::new();
    let mut results = NormResults {
        scales: p.depth() as usize + 1,
        max_jensen_ratio: f64::NEG_INFINITY,
        min_char_norm: f64::INFINITY,
        max_char_norm: f64::NEG_INFINITY,
    };
    for scale in 0..=p.depth() {
        let count = 1u64 << (p.dim() as u32 * scale as u32);
        let mut min_norm = f64::INFINITY;
        let mut max_norm = f64::NEG_INFINITY;
        let mut max_ratio = f64::NEG_INFINITY;
        for pos in 0..count {
            let q = DyadicCube::from_pos(p.dim(), scale, pos).map_err(core_err)?;
            let norm = cache.cube_norm(p, &q).map_err(core_err)?;
            let p_q = harmonic_mean_exponent(p, &q).map_err(core_err)?;
            min_norm = min_norm.min(norm);
            max_norm = max_norm.max(norm);
            max_ratio = max_ratio.max(q.measure().powf(1.0 / p_q) / norm);
        }
        results.max_jensen_ratio = results.max_jensen_ratio.max(max_ratio);
        results.min_char_norm = results.min_char_norm.min(min_norm);
        results.max_char_norm = results.max_char_norm.max(max_norm);
        rows.push(vec![
            scale.to_string(),
            count.to_string(),
            fmt_f64(min_norm),
            fmt_f64(max_norm),
            fmt_f64(max_ratio),
            prep.hash.clone(),
        ]);
    }
    let body = csv_bytes(
        &["scale", "cubes", "min_norm", "max_norm", "max_jensen_ratio", "config_hash"],
        &rows,
    )?;
    write_atomic(&prep.out_dir, "norm.csv", &body)?;
    let wall = start.elapsed().as_secs_f64();
    write_summary(&prep.out_dir, &prep.config, &prep.hash, wall, results)?;
    println!(
        "wrote norm.csv ({} scales) and summary.json to {}",
        p.depth() as usize + 1,
        prep.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GreedyResults {
    functions: usize,
    min_ratio: f64,
    /// Fitted ratio-versus-N slope per function; empty when fewer than three
    /// N values were requested.
    ratio_slopes: Vec<f64>,
}

fn run_greedy(prep: &Prepared, spec: &GreedySpec, start: Instant) -> Result<(), CliError> {
    let seed = prep.seed.expect("seed validated for randomized runs");
    let mut rng = seeded_rng(seed, "cli-greedy");
    let functions: Vec<GridFunction> = (0..spec.functions)
        .map(|_| mixed_mass_function(prep.config.dimension, prep.config.depth, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(core_err)?;
    // generation above is sequential; evaluation order is fixed by position,
    // so the thread count cannot change any output byte
    let profiles: Vec<Vec<ProfileRow>> = functions
        .par_iter()
        .map(|f| lebesgue_profile(f, &prep.field, &spec.ns, &spec.budget))
        .collect::<Result<_, _>>()
        .map_err(core_err)?;
    let mut rows = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut slopes = Vec::new();
    for profile in &profiles {
        for r in profile {
            min_ratio = min_ratio.min(r.ratio);
            rows.push(vec![
                r.n.to_string(),
                fmt_f64(r.greedy_error),
                fmt_f64(r.oracle_error),
                fmt_f64(r.ratio),
                prep.hash.clone(),
            ]);
        }
        if profile.len() >= 3 {
            let pts: Vec<(f64, f64)> = profile.iter().map(|r| (r.n as f64, r.ratio)).collect();
            slopes.push(fit_exponent(&pts).map_err(core_err)?.slope);
        }
    }
    let body = csv_bytes(
        &["N", "greedy_error", "oracle_error", "ratio", "config_hash"],
        &rows,
    )?;
    write_atomic(&prep.out_dir, "greedy.csv", &body)?;
    let results = GreedyResults {
        functions: spec.functions,
        min_ratio,
        ratio_slopes: slopes,
    };
    let wall = start.elapsed().as_secs_f64();
    write_summary(&prep.out_dir, &prep.config, &prep.hash, wall, results)?;
    println!(
        "wrote greedy.csv ({} rows) and summary.json to {}",
        rows.len(),
        prep.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DemocracyResults<'a> {
    fit_r: PowerFit,
    fit_l: PowerFit,
    per_n: &'a [NSummary],
    skipped: &'a [SkipNote],
}

fn bound_cell(check: &Option<(f64, f64)>, upper: bool) -> String {
    match check {
        None => String::new(),
        Some((value, bound)) => {
            let ok = if upper {
                *value <= bound * (1.0 + BOUND_SLACK)
            } else {
                *value >= bound * (1.0 - BOUND_SLACK)
            };
            ok.to_string()
        }
    }
}

fn run_democracy(prep: &Prepared, spec: &DemocracySpec, start: Instant) -> Result<(), CliError> {
    let seed = prep.seed.expect("seed validated for randomized runs");
    let record = estimate_democracy(&prep.field, &spec.ns, &spec.strategies, seed, &spec.options)
        .map_err(core_err)?;
    let mut rows = Vec::with_capacity(record.rows.len());
    for r in &record.rows {
        rows.push(vec![
            r.n.to_string(),
            r.strategy.to_string(),
            r.family.to_string(),
            fmt_f64(r.value),
            bound_cell(&r.gamma1_check, false),
            bound_cell(&r.gamma2_check, true),
            prep.hash.clone(),
        ]);
    }
    let body = csv_bytes(
        &["N", "strategy", "family", "value", "gamma1_lower_ok", "gamma2_upper_ok", "config_hash"],
        &rows,
    )?;
    write_atomic(&prep.out_dir, "democracy.csv", &body)?;
    let results = DemocracyResults {
        fit_r: record.fit_r,
        fit_l: record.fit_l,
        per_n: &record.per_n,
        skipped: &record.skipped,
    };
    let wall = start.elapsed().as_secs_f64();
    write_summary(&prep.out_dir, &prep.config, &prep.hash, wall, results)?;
    println!(
        "wrote democracy.csv ({} rows, {} skips) and summary.json to {}",
        rows.len(),
        record.skipped.len(),
        prep.out_dir.display()
    );
    println!(
        "slope_r {:.4} (R2 {:.4}); slope_l {:.4} (R2 {:.4})",
        record.fit_r.slope,
        record.fit_r.r_squared,
        record.fit_l.slope,
        record.fit_l.r_squared
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifyResults<'a> {
    checks: usize,
    passed: usize,
    failed: &'a [String],
}

#[derive(Serialize)]
struct FailureMarker<'a> {
    config_hash: &'a str,
    failed_stage: &'a str,
    error: String,
    completed_checks: usize,
}

fn flush_checks(dir: &Path, checks: &[Check]) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(checks)
        .map_err(|e| CliError::Io(format!("verify serialization: {e}")))?;
    bytes.push(b'\n');
    write_atomic(dir, "verify.json", &bytes)?;
    Ok(())
}

fn run_verify(prep: &Prepared, spec: &VerifySpec, start: Instant) -> Result<(), CliError> {
    let mut params = spec.params.clone();
    // one seed source: the config/flag seed, not the battery sub-config
    params.seed = prep.seed.expect("seed validated for randomized runs");
    let mut checks: Vec<Check> = Vec::new();
    for stage in VERIFY_STAGES {
        match verify_stage(&prep.field, &params, stage) {
            Ok(batch) => checks.extend(batch),
            Err(e @ Error::Capacity { .. }) => {
                flush_checks(&prep.out_dir, &checks)?;
                let marker = FailureMarker {
                    config_hash: &prep.hash,
                    failed_stage: stage,
                    error: e.to_string(),
                    completed_checks: checks.len(),
                };
                let mut bytes = serde_json::to_vec_pretty(&marker)
                    .map_err(|err| CliError::Io(format!("failure marker: {err}")))?;
                bytes.push(b'\n');
                write_atomic(&prep.out_dir, "failure.json", &bytes)?;
                return Err(CliError::Capacity(format!("verify stage '{stage}': {e}")));
            }
            Err(e) => return Err(core_err(e)),
        }
    }
    for (name, tol) in &spec.tolerance_overrides {
        let mut hit = false;
        for c in checks.iter_mut().filter(|c| &c.check == name) {
            c.tolerance = *tol;
            c.pass = c.measured <= c.bound + *tol;
            hit = true;
        }
        if !hit {
            return Err(CliError::Config(format!(
                "tolerance override targets unknown check '{name}'"
            )));
        }
    }
    flush_checks(&prep.out_dir, &checks)?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.clone())
        .collect();
    let results = VerifyResults {
        checks: checks.len(),
        passed: checks.len() - failed.len(),
        failed: &failed,
    };
    let wall = start.elapsed().as_secs_f64();
    write_summary(&prep.out_dir, &prep.config, &prep.hash, wall, results)?;
    println!(
        "wrote verify.json ({} checks, {} passed) and summary.json to {}",
        checks.len(),
        checks.len() - failed.len(),
        prep.out_dir.display()
    );
    if !failed.is_empty() {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

fn read_summary(dir: &Path) -> Result<Value, CliError> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))
}

struct CsvTable {
    rows: Vec<Vec<String>>,
}

/// Loads a CSV artifact, checks its header, and confirms every row carries
/// the run's config hash in the last column.
fn read_table(dir: &Path, name: &str, expect_header: &[&str], hash: &str) -> Result<CsvTable, CliError> {
    let path = dir.join(name);
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{name}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expect_header {
        return Err(CliError::Config(format!(
            "{name} header {header:?} does not match the expected schema {expect_header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{name} row {i}: {e}")))?;
        let row: Vec<String> = record.iter().map(str::to_string).collect();
        match row.last() {
            Some(h) if h == hash => {}
            other => {
                return Err(CliError::Config(format!(
                    "{name} row {i} carries config hash {:?} but summary.json says {hash}",
                    other.map(String::as_str).unwrap_or("<missing>")
                )))
            }
        }
        rows.push(row);
    }
    Ok(CsvTable { rows })
}

fn cell_f64(row: &[String], idx: usize, name: &str) -> Result<f64, CliError> {
    row[idx]
        .parse()
        .map_err(|e| CliError::Config(format!("{name}: bad number {:?}: {e}", row[idx])))
}

fn cell_usize(row: &[String], idx: usize, name: &str) -> Result<usize, CliError> {
    row[idx]
        .parse()
        .map_err(|e| CliError::Config(format!("{name}: bad count {:?}: {e}", row[idx])))
}

fn report_democracy(dir: &Path, hash: &str) -> Result<(), CliError> {
    let table = read_table(
        dir,
        "democracy.csv",
        &["N", "strategy", "family", "value", "gamma1_lower_ok", "gamma2_upper_ok", "config_hash"],
        hash,
    )?;
    let mut per_n: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut flagged = 0usize;
    for row in &table.rows {
        let n = cell_usize(row, 0, "democracy.csv")?;
        let value = cell_f64(row, 3, "democracy.csv")?;
        let entry = per_n.entry(n).or_insert((f64::NEG_INFINITY, f64::INFINITY));
        entry.0 = entry.0.max(value);
        entry.1 = entry.1.min(value);
        if row[4] == "false" || row[5] == "false" {
            flagged += 1;
        }
    }
    println!("rows: {} across {} values of N", table.rows.len(), per_n.len());
    println!("{:>8}  {:>22}  {:>22}", "N", "h_r (max value)", "h_l (min value)");
    let mut pts_r = Vec::new();
    let mut pts_l = Vec::new();
    for (&n, &(hi, lo)) in &per_n {
        println!("{n:>8}  {hi:>22.12}  {lo:>22.12}");
        pts_r.push((n as f64, hi));
        pts_l.push((n as f64, lo));
    }
    if pts_r.len() >= 2 {
        let fit_r = fit_exponent(&pts_r).map_err(core_err)?;
        let fit_l = fit_exponent(&pts_l).map_err(core_err)?;
        println!(
            "refit from rows: slope_r {:.4} (R2 {:.4}); slope_l {:.4} (R2 {:.4})",
            fit_r.slope, fit_r.r_squared, fit_l.slope, fit_l.r_squared
        );
    }
    if flagged > 0 {
        println!("bound checks: {flagged} rows flagged false");
    } else {
        println!("bound checks: all recorded gamma bounds hold");
    }
    Ok(())
}

fn report_greedy(dir: &Path, hash: &str) -> Result<(), CliError> {
    let table = read_table(
        dir,
        "greedy.csv",
        &["N", "greedy_error", "oracle_error", "ratio", "config_hash"],
        hash,
    )?;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut blocks = 0usize;
    let mut prev_n = usize::MAX;
    let mut block: Vec<(f64, f64)> = Vec::new();
    let mut worst_slope = f64::NEG_INFINITY;
    let finish_block = |block: &mut Vec<(f64, f64)>, worst: &mut f64| -> Result<(), CliError> {
        if block.len() >= 3 {
            *worst = worst.max(fit_exponent(block).map_err(core_err)?.slope);
        }
        block.clear();
        Ok(())
    };
    for row in &table.rows {
        let n = cell_usize(row, 0, "greedy.csv")?;
        let ratio = cell_f64(row, 3, "greedy.csv")?;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        if n <= prev_n && !block.is_empty() {
            finish_block(&mut block, &mut worst_slope)?;
        }
        if n <= prev_n {
            blocks += 1;
        }
        block.push((n as f64, ratio));
        prev_n = n;
    }
    finish_block(&mut block, &mut worst_slope)?;
    println!(
        "rows: {} in {} function blocks; ratio range [{min_ratio:.12}, {max_ratio:.12}]",
        table.rows.len(),
        blocks
    );
    if worst_slope > f64::NEG_INFINITY {
        println!("worst per-function ratio slope: {worst_slope:.4}");
    }
    Ok(())
}

fn report_verify(dir: &Path) -> Result<(), CliError> {
    let path = dir.join("verify.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let checks: Vec<Check> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.as_str())
        .collect();
    println!("checks: {}, passed: {}", checks.len(), checks.len() - failed.len());
    if failed.is_empty() {
        println!("all checks passed");
    } else {
        println!("failing: {}", failed.join(", "));
    }
    let marker = dir.join("failure.json");
    if marker.exists() {
        println!("note: failure.json present; the run stopped before completing every stage");
    }
    Ok(())
}

fn report_norm(dir: &Path, hash: &str) -> Result<(), CliError> {
    let table = read_table(
        dir,
        "norm.csv",
        &["scale", "cubes", "min_norm", "max_norm", "max_jensen_ratio", "config_hash"],
        hash,
    )?;
    println!("{:>6}  {:>10}  {:>22}  {:>22}  {:>18}", "scale", "cubes", "min_norm", "max_norm", "max_jensen_ratio");
    let mut worst = f64::NEG_INFINITY;
    for row in &table.rows {
        let ratio = cell_f64(row, 4, "norm.csv")?;
        worst = worst.max(ratio);
        println!(
            "{:>6}  {:>10}  {:>22}  {:>22}  {:>18}",
            row[0], row[1], row[2], row[3], row[4]
        );
    }
    println!("max jensen ratio {worst:.6} (bound 2)");
    Ok(())
}

pub fn run_report(dir: &Path) -> Result<(), CliError> {
    let summary = read_summary(dir)?;
    let hash = summary["config_hash"]
        .as_str()
        .ok_or_else(|| CliError::Config("summary.json lacks config_hash".into()))?;
    let kind = summary["config"]["experiment"]["kind"]
        .as_str()
        .ok_or_else(|| CliError::Config("summary.json lacks config.experiment.kind".into()))?;
    let tool = summary["tool"].as_str().unwrap_or("?");
    let version = summary["version"].as_str().unwrap_or("?");
    println!("{tool} {version} artifacts in {}", dir.display());
    println!("experiment: {kind}; config hash {hash}");
    match kind {
        "democracy" => report_democracy(dir, hash),
        "greedy" => report_greedy(dir, hash),
        "verify" => report_verify(dir),
        "norm" => report_norm(dir, hash),
        other => Err(CliError::Config(format!(
            "summary.json names unknown experiment kind '{other}'"
        ))),
    }
}
