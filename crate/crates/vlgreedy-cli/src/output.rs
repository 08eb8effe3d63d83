//! Artifact persistence: atomic writes, CSV assembly, and the summary
//! envelope.
//!
//! Every file lands via temp-then-rename in its final directory. CSV bodies
//! carry no timestamps and use the shortest round-trip float rendering, so
//! identical effective configs reproduce identical bytes; wall-clock data
//! lives only in `summary.json`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{io_err, CliError};

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| io_err(&format!("creating {}", dir.display()), e))?;
    let tmp = dir.join(format!("{name}.tmp"));
    let target = dir.join(name);
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, &target)
        .map_err(|e| io_err(&format!("renaming into {}", target.display()), e))?;
    Ok(target)
}

/// Shortest representation that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| CliError::Io(format!("csv header: {e}")))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| CliError::Io(format!("csv row: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(format!("csv flush: {e}")))
}

#[derive(Serialize)]
pub struct Summary<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: &'a str,
    pub config: &'a ExperimentConfig,
    /// The only timestamped fields of any artifact.
    pub wall_clock_seconds: f64,
    pub completed_unix: u64,
    pub results: T,
}

pub fn write_summary<T: Serialize>(
    dir: &Path,
    config: &ExperimentConfig,
    hash: &str,
    wall_clock_seconds: f64,
    results: T,
) -> Result<(), CliError> {
    let summary = Summary {
        tool: "vlgreedy",
        version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        config,
        wall_clock_seconds,
        completed_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        results,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    bytes.push(b'\n');
    write_atomic(dir, "summary.json", &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_shortest_roundtrip() {
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(2.0), "2");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.3333333333333333");
        let v: f64 = fmt_f64(std::f64::consts::SQRT_2).parse().unwrap();
        assert_eq!(v, std::f64::consts::SQRT_2);
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let bytes = csv_bytes(
            &["a", "b"],
            &[vec!["plain".into(), "needs,quote".into()]],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "a,b\nplain,\"needs,quote\"\n"
        );
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "x.csv", b"one").unwrap();
        write_atomic(dir.path(), "x.csv", b"two").unwrap();
        assert_eq!(std::fs::read(dir.path().join("x.csv")).unwrap(), b"two");
        assert!(!dir.path().join("x.csv.tmp").exists());
    }
}
