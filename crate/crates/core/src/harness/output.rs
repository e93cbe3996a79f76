use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{OasError, Result};

/// Stand-in written for an MSE of exactly zero (`-inf` dB).
pub const NEG_INF_DB: f64 = -400.0;

pub const CSV_HEADER: [&str; 7] = [
    "swept_param",
    "value",
    "method",
    "mse_db",
    "stderr_db",
    "trials",
    "seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = OasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(OasError::Config(format!("unknown output format `{other}`"))),
        }
    }
}

fn finite_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *v == f64::NEG_INFINITY {
        s.serialize_f64(NEG_INF_DB)
    } else {
        s.serialize_f64(*v)
    }
}

/// One `(swept value, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_param: String,
    pub value: f64,
    pub method: String,
    #[serde(serialize_with = "finite_db")]
    pub mse_db: f64,
    pub stderr_db: f64,
    /// Successful trials behind the row; zero for reference constants.
    pub trials: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub failed: usize,
    #[serde(skip, default = "default_valid")]
    pub valid: bool,
}

fn default_valid() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn any_invalid(&self) -> bool {
        self.rows.iter().any(|r| !r.valid)
    }

    pub fn row(&self, value: f64, method: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| OasError::Config(format!("CSV encoding failed: {e}"));
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER).map_err(to_err)?;
        }
        for row in &self.rows {
            w.serialize(row).map_err(to_err)?;
        }
        w.flush()
            .map_err(|e| OasError::Config(format!("CSV flush failed: {e}")))
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| OasError::Config(format!("JSON encoding failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OasError::Config(format!("bad sweep JSON: {e}")))
    }
}

/// Writes `result` to `path` in the requested format.
pub fn emit_results(result: &SweepResult, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| OasError::io(path, e))?;
    let written = match format {
        OutputFormat::Csv => result.write_csv(file),
        OutputFormat::Json => result.write_json(file),
    };
    written.map_err(|e| match e {
        OasError::Config(msg) => OasError::io(path, std::io::Error::other(msg)),
        other => other,
    })
}
