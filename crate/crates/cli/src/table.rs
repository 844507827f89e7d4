//! Versioned CSV tables: `# schema=N`, `# key=value` metadata, a header
//! row, then data rows.

use std::fmt::Write;

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip text for `v`, in exponent form outside
/// `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self {
            meta: Vec::new(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| num(v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema={SCHEMA_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`Table::to_csv`].
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut meta = Vec::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    if k == "schema" {
                        if v != SCHEMA_VERSION.to_string() {
                            return Err(format!("unsupported schema version {v}"));
                        }
                        continue;
                    }
                    meta.push((k.to_string(), v.to_string()));
                }
            } else {
                header = Some(line.split(',').map(|h| h.trim().to_string()).collect::<Vec<_>>());
                break;
            }
        }
        let header = header.ok_or("missing header row")?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { meta, header, rows })
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `idx` parsed as numbers.
    pub fn numeric(&self, idx: usize) -> Result<Vec<f64>, String> {
        self.rows
            .iter()
            .map(|r| {
                r[idx]
                    .parse::<f64>()
                    .map_err(|_| format!("column `{}` holds non-numeric `{}`", self.header[idx], r[idx]))
            })
            .collect()
    }
}
