use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Result, StatsError};

/// A rectangular methods x datasets matrix of ROC-AUC scores in percent.
///
/// Every cell must be present and lie in `[0, 100]`. Method and dataset
/// names must be unique.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    methods: Vec<String>,
    datasets: Vec<String>,
    /// Row-major: `values[method][dataset]`.
    values: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(
        methods: Vec<String>,
        datasets: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if methods.is_empty() || datasets.is_empty() {
            return Err(StatsError::Table(
                "score table needs at least one method and one dataset".into(),
            ));
        }
        if values.len() != methods.len() {
            return Err(StatsError::Table(format!(
                "expected {} rows, got {}",
                methods.len(),
                values.len()
            )));
        }
        for (m, row) in values.iter().enumerate() {
            if row.len() != datasets.len() {
                return Err(StatsError::Table(format!(
                    "method '{}': expected {} values, got {}",
                    methods[m],
                    datasets.len(),
                    row.len()
                )));
            }
            for (d, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 || *v > 100.0 {
                    return Err(StatsError::Table(format!(
                        "method '{}', dataset '{}': value {} outside [0, 100]",
                        methods[m], datasets[d], v
                    )));
                }
            }
        }
        check_unique(&methods, "method")?;
        check_unique(&datasets, "dataset")?;
        Ok(Self {
            methods,
            datasets,
            values,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn value(&self, method: usize, dataset: usize) -> f64 {
        self.values[method][dataset]
    }

    /// Scores of one dataset column across all methods, in method order.
    pub fn dataset_column(&self, dataset: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[dataset]).collect()
    }

    /// Scores of one method across all datasets, in dataset order.
    pub fn method_row(&self, method: usize) -> &[f64] {
        &self.values[method]
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    /// Parse from CSV: header `method,<dataset>,...`, one row per method,
    /// values in percent. Errors cite the offending line and column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(&e, 1))?
            .clone();
        if headers.len() < 2 {
            return Err(StatsError::Csv {
                line: 1,
                message: "header must be 'method' followed by at least one dataset column".into(),
            });
        }
        if headers[0].to_lowercase() != "method" {
            return Err(StatsError::Csv {
                line: 1,
                message: format!("first header column must be 'method', got '{}'", &headers[0]),
            });
        }
        let datasets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

        let mut methods = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or(0);
                csv_error(&e, line)
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != headers.len() {
                return Err(StatsError::Csv {
                    line,
                    message: format!(
                        "expected {} fields, found {}",
                        headers.len(),
                        record.len()
                    ),
                });
            }
            let method = record[0].to_string();
            let mut row = Vec::with_capacity(datasets.len());
            for (d, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field.parse().map_err(|_| StatsError::Csv {
                    line,
                    message: format!(
                        "column '{}': cannot parse '{}' as a number",
                        datasets[d], field
                    ),
                })?;
                if !v.is_finite() || !(0.0..=100.0).contains(&v) {
                    return Err(StatsError::Csv {
                        line,
                        message: format!("column '{}': value {} outside [0, 100]", datasets[d], v),
                    });
                }
                row.push(v);
            }
            methods.push(method);
            values.push(row);
        }
        Self::new(methods, datasets, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (m, name) in self.methods.iter().enumerate() {
            out.push_str(name);
            for d in 0..self.datasets.len() {
                out.push_str(&format!(",{}", self.values[m][d]));
            }
            out.push('\n');
        }
        out
    }
}

fn check_unique(names: &[String], kind: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(StatsError::Table(format!("duplicate {kind} name '{n}'")));
        }
    }
    Ok(())
}

fn csv_error(e: &csv::Error, line: u64) -> StatsError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => StatsError::Csv {
            line: pos.as_ref().map(|p| p.line()).unwrap_or(line),
            message: format!("expected {expected_len} fields, found {len}"),
        },
        _ => StatsError::Csv {
            line,
            message: e.to_string(),
        },
    }
}
