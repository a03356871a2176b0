//! Machine-readable run reports.
//!
//! Every command emits one JSON report on stdout with a fixed field order:
//! `schema_version`, `command`, `problem_fingerprint`, `params`, `results`,
//! `diagnostics`. Identical inputs and flags produce byte-identical reports
//! except for the `wall_ms` diagnostic, which is always the last field.

use hjcs_core::ProblemInstance;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub problem_fingerprint: String,
    pub params: serde_json::Value,
    pub results: serde_json::Value,
    pub diagnostics: serde_json::Value,
}

impl RunReport {
    pub fn new(
        command: &str,
        fingerprint: String,
        params: serde_json::Value,
        results: serde_json::Value,
        mut diagnostics: serde_json::Value,
        wall_ms: f64,
    ) -> Self {
        if let serde_json::Value::Object(map) = &mut diagnostics {
            // `wall_ms` sorts last among the diagnostic keys in use, which
            // keeps the nondeterministic field at the end of the report.
            map.insert("wall_ms".into(), serde_json::json!(wall_ms));
        }
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            problem_fingerprint: fingerprint,
            params,
            results,
            diagnostics,
        }
    }

    pub fn print(&self) {
        println!("{}", serde_json::to_string_pretty(self).expect("report serialization"));
    }
}

/// Content hash of the problem tables and shape metadata.
pub fn fingerprint(p: &ProblemInstance) -> String {
    let mut hasher = Sha256::new();
    for meta in [
        p.grid().dim() as u64,
        p.grid().points_per_axis() as u64,
        p.num_controls() as u64,
        p.modes() as u64,
    ] {
        hasher.update(meta.to_le_bytes());
    }
    for label in p.controls().labels() {
        hasher.update(label.to_le_bytes());
    }
    for table in [p.drift_table(), p.cost_table(), p.coupling_table()] {
        for v in table {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(2 * digest.len() + 7);
    hex.push_str("sha256:");
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Error object emitted on failures, also on stdout for machine consumption.
#[derive(Serialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub command: String,
    pub error: ErrorBody,
}

#[derive(Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

impl ErrorReport {
    pub fn new(command: &str, kind: &str, message: String) -> Self {
        ErrorReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            error: ErrorBody {
                kind: kind.to_string(),
                message,
            },
        }
    }

    pub fn print(&self) {
        println!("{}", serde_json::to_string_pretty(self).expect("error serialization"));
    }
}
