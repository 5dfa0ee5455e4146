//! A report is one table plus its JSON form; every subcommand produces one
//! and the renderer turns it into `table`, `csv` or `json` text.

use serde_json::Value;

use crate::args::Format;

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// Lines printed above the table in `table` format only.
    pub preamble: Vec<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Replacement rows for `table` format, when its cells read differently.
    pub table_rows: Option<Vec<Vec<String>>>,
    pub json: Value,
}

impl Report {
    pub fn new(headers: &[&str], json: Value) -> Self {
        Report {
            preamble: Vec::new(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            table_rows: None,
            json,
        }
    }

    pub fn render(&self, format: Format) -> Result<String, csv::Error> {
        match format {
            Format::Table => Ok(self.render_table()),
            Format::Csv => self.render_csv(),
            Format::Json => Ok(format!(
                "{}\n",
                serde_json::to_string_pretty(&self.json).expect("JSON values serialize")
            )),
        }
    }

    fn render_table(&self) -> String {
        let rows = self.table_rows.as_ref().unwrap_or(&self.rows);
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            format!("{}\n", padded.join("  ").trim_end())
        };
        let mut out = String::new();
        for p in &self.preamble {
            out.push_str(p);
            out.push('\n');
        }
        out.push_str(&line(&self.headers));
        for row in rows {
            out.push_str(&line(row));
        }
        out
    }

    fn render_csv(&self) -> Result<String, csv::Error> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.headers)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells is UTF-8"))
    }
}

/// Shortest decimal that round-trips, the same on every platform.
pub fn num(x: f64) -> String {
    x.to_string()
}

/// Scientific notation with four significant digits, for defects.
pub fn sci(x: f64) -> String {
    format!("{x:.3e}")
}
