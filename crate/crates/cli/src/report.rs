//! Analysis reports.
//!
//! Results live in one flat map. Keys end in a unit suffix (`_hz`, `_s`,
//! `_rad`, `_f`, `_f_per_m`, `_h`, `_m`, `_dbm`, `_db`, `_s2`, `_s2_per_m`) or
//! name a dimensionless quantity from [`DIMENSIONLESS`]. Grouped results use a
//! dotted prefix such as `q5.ej_ec_ratio` or `p03.qi`. Flags are stored as
//! 0 or 1. Reports carry no timestamps, so identical inputs give identical
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::io::Input;

pub const UNIT_SUFFIXES: &[&str] = &[
    "_hz", "_s", "_rad", "_f", "_f_per_m", "_h", "_m", "_dbm", "_db", "_s2", "_s2_per_m",
];

/// Keys (after any dotted prefix, ignoring a trailing `_err`) that are
/// dimensionless.
pub const DIMENSIONLESS: &[&str] = &[
    "a",
    "amplitude",
    "bimodal_suspect",
    "bimodality_coefficient",
    "converged",
    "count",
    "ej_ec_ratio",
    "epsilon_r",
    "fin_fraction",
    "input_index",
    "iterations",
    "low_confidence",
    "n",
    "n_points",
    "offset",
    "photon_number",
    "qc_mag",
    "qi",
    "ql",
    "qubit_q",
    "rms_residual",
    "sigma",
];

/// True when `key` follows the report key schema.
pub fn key_is_documented(key: &str) -> bool {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    if UNIT_SUFFIXES.iter().any(|s| leaf.ends_with(s) && leaf.len() > s.len()) {
        return true;
    }
    let base = leaf.strip_suffix("_err").unwrap_or(leaf);
    DIMENSIONLESS.contains(&base)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub results: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub skips: Vec<Skip>,
}

impl AnalysisReport {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>) -> Self {
        AnalysisReport {
            tool: "qdev".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed,
            inputs: Vec::new(),
            results: BTreeMap::new(),
            warnings: Vec::new(),
            skips: Vec::new(),
        }
    }

    pub fn add_input(&mut self, input: &Input) {
        self.inputs.push(InputDigest {
            path: input.path.clone(),
            sha256: input.sha256(),
            size_bytes: input.bytes.len() as u64,
        });
    }

    /// Non-finite values are not representable in JSON and are dropped with
    /// a warning.
    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        let key = key.into();
        debug_assert!(key_is_documented(&key), "undocumented report key {key}");
        if value.is_finite() {
            self.results.insert(key, value);
        } else {
            self.warnings.push(format!("{key} is not finite ({value}) and was omitted"));
        }
    }

    pub fn set_opt(&mut self, key: impl Into<String>, value: Option<f64>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn set_flag(&mut self, key: impl Into<String>, flag: bool) {
        self.set(key, if flag { 1.0 } else { 0.0 });
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.results.get(key).copied()
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn skip(&mut self, item: impl Into<String>, reason: impl Into<String>) {
        self.skips.push(Skip { item: item.into(), reason: reason.into() });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Plain-text rendering. Numbers use shortest round-trip formatting, so
    /// they parse back to the same values as the JSON form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.tool, self.tool_version, self.command);
        let _ = writeln!(s, "args: {}", self.args.join(" "));
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "seed: {seed}");
            }
            None => s.push_str("seed: none\n"),
        }
        for input in &self.inputs {
            let _ = writeln!(s, "input: {} sha256={} size_bytes={}", input.path, input.sha256, input.size_bytes);
        }
        s.push_str("results:\n");
        for (k, v) in &self.results {
            let _ = writeln!(s, "  {k} = {v:e}");
        }
        if !self.warnings.is_empty() {
            s.push_str("warnings:\n");
            for w in &self.warnings {
                let _ = writeln!(s, "  - {w}");
            }
        }
        if !self.skips.is_empty() {
            s.push_str("skips:\n");
            for sk in &self.skips {
                let _ = writeln!(s, "  - {}: {}", sk.item, sk.reason);
            }
        }
        s
    }
}

/// Reads the `results:` block of a text report back into a map.
pub fn parse_text_results(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .skip_while(|l| *l != "results:")
        .skip(1)
        .take_while(|l| l.starts_with("  ") && !l.starts_with("  - "))
        .filter_map(|l| {
            let (k, v) = l.trim().split_once(" = ")?;
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_keys() {
        for k in ["f0_hz", "q5.t_purcell_s", "qi_err", "c0_f_per_m", "p01.photon_number", "phi_err_rad"] {
            assert!(key_is_documented(k), "{k}");
        }
        for k in ["f0", "q5.tpurcell", "_hz", "widget"] {
            assert!(!key_is_documented(k), "{k}");
        }
    }

    #[test]
    fn json_and_text_agree() {
        let mut r = AnalysisReport::new("fit-t1", vec!["fit-t1".into(), "x.csv".into()], Some(3));
        r.set("t1_s", 1.234_567_890_123_456_7e-5);
        r.set("amplitude", 0.1 + 0.2);
        r.set_flag("converged", true);
        r.warn("w");
        r.skip("a", "b");
        let back = AnalysisReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(parse_text_results(&r.to_text()), r.results);
    }

    #[test]
    fn non_finite_dropped() {
        let mut r = AnalysisReport::new("x", vec![], None);
        r.set("t1_s", f64::NAN);
        assert!(r.results.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }
}
