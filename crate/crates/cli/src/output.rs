use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

/// One CSV file. Header cells read `name (unit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &'static str, header: &[&str]) -> Self {
        Table {
            file,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation in exponent form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// A row of a sweep that could not be computed.
#[derive(Debug, Clone)]
pub struct RowFailure {
    pub value: String,
    pub error: CliError,
}

/// Everything a subcommand produces before anything touches the disk.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub diagnostics: Map<String, Value>,
    pub failures: Vec<RowFailure>,
    /// Failure that still leaves usable tables; written out, then reported
    /// through the exit status.
    pub deferred: Option<CliError>,
}

pub fn write_csv(path: &Path, table: &Table) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes every table and `metadata.json` into `dir`.
pub fn write_report(dir: &Path, report: &Report, mut metadata: Map<String, Value>) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for t in &report.tables {
        write_csv(&dir.join(t.file), t)?;
    }
    metadata.insert(
        "outputs".into(),
        json!(report.tables.iter().map(|t| t.file).collect::<Vec<_>>()),
    );
    metadata.insert("diagnostics".into(), Value::Object(report.diagnostics.clone()));
    metadata.insert(
        "failures".into(),
        json!({
            "count": report.failures.len(),
            "rows": report.failures.iter().map(|f| json!({
                "value": f.value,
                "message": f.error.to_string(),
                "exit_code": f.error.exit_code(),
            })).collect::<Vec<_>>(),
        }),
    );
    if let Some(e) = &report.deferred {
        metadata.insert(
            "error".into(),
            json!({ "message": e.to_string(), "exit_code": e.exit_code() }),
        );
    }
    let path = dir.join("metadata.json");
    let text =
        serde_json::to_string_pretty(&Value::Object(metadata)).map_err(|e| CliError::Io(format!("metadata: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
