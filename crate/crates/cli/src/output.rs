//! Output plumbing: CSV/JSON emission and the summary sidecar.

use anyhow::Context;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Write tabular data that already exists as CSV text, converting to a
/// columns/rows JSON object when requested. Numbers survive the round trip
/// because both encodings use shortest-round-trip decimal.
pub fn write_table(out_dir: &Path, name: &str, csv: &str, format: Format) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match format {
        Format::Csv => {
            let path = out_dir.join(format!("{name}.csv"));
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        Format::Json => {
            let mut lines = csv.lines();
            let columns: Vec<&str> =
                lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
            let mut rows = Vec::new();
            for line in lines {
                let row: Vec<serde_json::Value> = line
                    .split(',')
                    .map(|cell| {
                        cell.parse::<f64>()
                            .ok()
                            .and_then(serde_json::Number::from_f64)
                            .map(serde_json::Value::Number)
                            .unwrap_or_else(|| serde_json::Value::String(cell.to_string()))
                    })
                    .collect();
                rows.push(serde_json::Value::Array(row));
            }
            let obj = serde_json::json!({ "columns": columns, "rows": rows });
            let path = out_dir.join(format!("{name}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&obj)?)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

pub fn write_summary(out_dir: &Path, name: &str, summary: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{name}_summary.json"));
    std::fs::write(&path, serde_json::to_string_pretty(summary)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
