//! Evaluation reports and their JSON/CSV file forms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::RpmBin;
use super::PipelineError;

/// Outcome of one evaluation run. Field order is the stable JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Echo of the experiment spec that produced the model.
    pub spec: serde_json::Value,
    pub overall_accuracy: f64,
    pub balanced_accuracy: f64,
    /// Accuracy per unbalance strength ("0".."4").
    pub per_class: BTreeMap<String, f64>,
    pub rpm_bins: Vec<RpmBin>,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (json|csv)")),
        }
    }
}

/// Write a report with stable field ordering; identical reports produce
/// identical bytes. The CSV variant is one row per rpm bin, plottable as
/// (center, acc), with the scalar metrics in `#` comment lines.
pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        ReportFormat::Csv => {
            writeln!(w, "# version: {}", report.version)?;
            writeln!(w, "# seed: {}", report.seed)?;
            writeln!(w, "# overall_accuracy: {}", report.overall_accuracy)?;
            writeln!(w, "# balanced_accuracy: {}", report.balanced_accuracy)?;
            for (class, acc) in &report.per_class {
                writeln!(w, "# per_class_{class}: {acc}")?;
            }
            writeln!(w, "center,acc,n")?;
            for bin in &report.rpm_bins {
                writeln!(w, "{},{},{}", bin.center, bin.acc, bin.n)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
