//! Text and key=value rendering of command results.
//!
//! Both renderings print the same preformatted strings, so the numbers in
//! the table and in the machine-readable form always agree.

use std::fmt::Display;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    /// Aligned, human-readable.
    #[default]
    Text,
    /// One `key=value` per line.
    Kv,
}

/// Scientific notation with `digits` digits after the point.
pub fn sci(x: f64, digits: usize) -> String {
    format!("{x:.digits$e}")
}

/// Ordered key/value results under a title.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub fields: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            fields: Vec::new(),
        }
    }

    pub fn add(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    #[cfg(test)]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|f| f.0 == key).map(|f| f.1.as_str())
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Text => {
                out.push_str(&self.title);
                out.push('\n');
                let w = self.fields.iter().map(|f| f.0.len()).max().unwrap_or(0);
                for (k, v) in &self.fields {
                    out.push_str(&format!("  {k:<w$}  {v}\n"));
                }
            }
            Format::Kv => {
                for (k, v) in &self.fields {
                    out.push_str(&format!("{k}={v}\n"));
                }
            }
        }
        out
    }
}

/// Rows of equally keyed values; the first column labels the row.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Text => {
                let widths: Vec<usize> = (0..self.columns.len())
                    .map(|i| {
                        self.rows
                            .iter()
                            .map(|r| r[i].len())
                            .chain([self.columns[i].len()])
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |cells: &[String]| {
                    let mut s = String::new();
                    for (i, c) in cells.iter().enumerate() {
                        if i == 0 {
                            s.push_str(&format!("{c:<w$}", w = widths[i]));
                        } else {
                            s.push_str(&format!("  {c:>w$}", w = widths[i]));
                        }
                    }
                    s.push('\n');
                    s
                };
                out.push_str(&line(&self.columns));
                for r in &self.rows {
                    out.push_str(&line(r));
                }
            }
            Format::Kv => {
                for r in &self.rows {
                    for (c, v) in self.columns.iter().zip(r).skip(1) {
                        out.push_str(&format!("{}.{c}={v}\n", r[0]));
                    }
                }
            }
        }
        out
    }
}
