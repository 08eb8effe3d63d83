//! A normalized pass/fail record shared by the verification batteries and
//! the CLI's verify report.

use serde::{Deserialize, Serialize};

/// One verification line: `pass` iff `measured <= bound + tolerance`.
/// Lower bounds are stored negated so the comparison direction is uniform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Upper-bound check: passes when `measured <= bound + tolerance`.
    /// A NaN measurement never passes.
    pub fn upper(check: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Check {
        Check {
            check: check.into(),
            measured,
            bound,
            tolerance,
            pass: measured <= bound + tolerance,
        }
    }

    /// Lower-bound check `measured >= bound - tolerance`, recorded in the
    /// uniform orientation by negating both sides.
    pub fn lower(check: impl Into<String>, measured: f64, bound: f64, tolerance: f64) -> Check {
        Check::upper(check, -measured, -bound, tolerance)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation() {
        assert!(Check::upper("a", 1.0, 1.0, 0.0).pass);
        assert!(Check::upper("a", 1.0 + 1e-12, 1.0, 1e-9).pass);
        assert!(!Check::upper("a", 1.1, 1.0, 1e-9).pass);
        assert!(Check::lower("b", 2.0, 1.5, 0.0).pass);
        assert!(!Check::lower("b", 1.0, 1.5, 1e-9).pass);
        assert!(!Check::upper("nan", f64::NAN, 1.0, 1.0).pass);
        assert!(!Check::lower("nan", f64::NAN, 1.0, 1.0).pass);
    }

    #[test]
    fn serde_shape_is_flat() {
        let c = Check::upper("jensen", 0.5, 1.0, 1e-9);
        let json = serde_json::to_string(&c).unwrap();
        // field order is part of the report format
        assert!(json.starts_with("{\"check\":\"jensen\",\"measured\":"), "{json}");
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["bound", "check", "measured", "pass", "tolerance"]);
        let back: Check = serde_json::from_str(&json).unwrap();
        assert_eq!(back.check, "jensen");
        assert!(back.pass);
    }

    #[test]
    fn aggregate() {
        let good = vec![Check::upper("x", 0.0, 1.0, 0.0)];
        let bad = vec![
            Check::upper("x", 0.0, 1.0, 0.0),
            Check::upper("y", 2.0, 1.0, 0.0),
        ];
        assert!(all_pass(&good));
        assert!(!all_pass(&bad));
        assert!(all_pass(&[]));
    }
}
