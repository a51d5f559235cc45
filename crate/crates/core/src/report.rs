//! Table emission as CSV, markdown or JSON.
//!
//! Markdown renders estimates the way result tables are usually typeset:
//! `.21 [.15, .27]`, bold when the interval excludes zero (if the table asks
//! for it) and `---` for suppressed cells. CSV and JSON keep full precision
//! and split each interval into point, lower and upper values.

use std::fmt::Write as _;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::model::IntervalEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Markdown,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Percentage, one decimal in markdown.
    Pct(f64),
    /// Plain number, two decimals in markdown.
    Num(f64),
    /// Tiny magnitudes such as identity residuals.
    Sci(f64),
    Interval(IntervalEstimate),
    Missing,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<Option<IntervalEstimate>> for Cell {
    fn from(e: Option<IntervalEstimate>) -> Self {
        e.map_or(Cell::Missing, Cell::Interval)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Bold intervals that exclude zero in markdown.
    pub bold_nonzero: bool,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(title: impl Into<String>, columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            title: title.into(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            bold_nonzero: false,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Markdown => self.to_markdown(),
            Format::Json => self.to_json(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(s, "### {}\n", self.title);
        }
        let _ = writeln!(s, "| {} |", self.columns.join(" | "));
        let _ = writeln!(s, "|{}", self.columns.iter().map(|_| "---|").collect::<String>());
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| self.markdown_cell(c)).collect();
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        if !self.notes.is_empty() {
            s.push('\n');
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        s
    }

    fn markdown_cell(&self, c: &Cell) -> String {
        match c {
            Cell::Text(t) => t.replace('|', "\\|"),
            Cell::Int(n) => n.to_string(),
            Cell::Pct(p) => format!("{:.1}", round_half_away(*p, 1)),
            Cell::Num(x) => short(*x),
            Cell::Sci(x) => format!("{x:.1e}"),
            Cell::Interval(e) => {
                let body = format!("{} [{}, {}]", short(e.point), short(e.lo), short(e.hi));
                if self.bold_nonzero && e.excludes_zero() {
                    format!("**{body}**")
                } else {
                    body
                }
            }
            Cell::Missing => "---".to_string(),
        }
    }

    /// Header expands each interval column into `col, col_lo, col_hi`.
    fn flat_header(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (j, name) in self.columns.iter().enumerate() {
            out.push(name.clone());
            if self.interval_column(j) {
                out.push(format!("{name}_lo"));
                out.push(format!("{name}_hi"));
            }
        }
        out
    }

    fn interval_column(&self, j: usize) -> bool {
        self.rows.iter().any(|r| matches!(r[j], Cell::Interval(_)))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.flat_header()).expect("in-memory write");
        let widths: Vec<bool> = (0..self.columns.len()).map(|j| self.interval_column(j)).collect();
        for row in &self.rows {
            let mut rec: Vec<String> = Vec::new();
            for (c, &wide) in row.iter().zip(&widths) {
                match c {
                    Cell::Interval(e) => rec.extend([e.point, e.lo, e.hi].map(|v| v.to_string())),
                    Cell::Missing if wide => rec.extend([String::new(), String::new(), String::new()]),
                    Cell::Missing => rec.push(String::new()),
                    other => {
                        rec.push(plain(other));
                        if wide {
                            rec.extend([String::new(), String::new()]);
                        }
                    }
                }
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&JsonTable(self)).expect("table serializes");
        s.push('\n');
        s
    }
}

fn plain(c: &Cell) -> String {
    match c {
        Cell::Text(t) => t.clone(),
        Cell::Int(n) => n.to_string(),
        Cell::Pct(x) | Cell::Num(x) | Cell::Sci(x) => x.to_string(),
        Cell::Interval(e) => e.point.to_string(),
        Cell::Missing => String::new(),
    }
}

/// Rounds half away from zero, so .125 becomes .13 as in hand-made tables.
pub fn round_half_away(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    let r = (x * f).round() / f;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Two decimals without a leading zero: `.21`, `-.03`, `1.00`.
pub fn short(x: f64) -> String {
    let s = format!("{:.2}", round_half_away(x, 2));
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

struct JsonTable<'a>(&'a Table);
struct JsonRow<'a>(&'a [String], &'a [Cell]);
struct JsonCell<'a>(&'a Cell);

impl Serialize for JsonTable<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let t = self.0;
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("title", &t.title)?;
        m.serialize_entry("rows", &JsonRows(t))?;
        m.serialize_entry("notes", &t.notes)?;
        m.end()
    }
}

struct JsonRows<'a>(&'a Table);

impl Serialize for JsonRows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let t = self.0;
        let mut seq = s.serialize_seq(Some(t.rows.len()))?;
        for r in &t.rows {
            seq.serialize_element(&JsonRow(&t.columns, r))?;
        }
        seq.end()
    }
}

impl Serialize for JsonRow<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, c) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, &JsonCell(c))?;
        }
        m.end()
    }
}

impl Serialize for JsonCell<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Cell::Text(t) => s.serialize_str(t),
            Cell::Int(n) => s.serialize_u64(*n),
            Cell::Pct(x) | Cell::Num(x) | Cell::Sci(x) => s.serialize_f64(*x),
            Cell::Interval(e) => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("point", &e.point)?;
                m.serialize_entry("lo", &e.lo)?;
                m.serialize_entry("hi", &e.hi)?;
                m.end()
            }
            Cell::Missing => s.serialize_none(),
        }
    }
}

/// Renders several tables into one document.
pub fn render_all(tables: &[Table], format: Format) -> String {
    match format {
        Format::Markdown => tables.iter().map(Table::to_markdown).collect::<Vec<_>>().join("\n"),
        Format::Csv => tables.iter().map(Table::to_csv).collect::<Vec<_>>().join("\n"),
        Format::Json if tables.len() == 1 => tables[0].to_json(),
        Format::Json => {
            let docs: Vec<JsonTable<'_>> = tables.iter().map(JsonTable).collect();
            let mut s = serde_json::to_string_pretty(&docs).expect("tables serialize");
            s.push('\n');
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntervalMethod;

    fn est(point: f64, lo: f64, hi: f64) -> IntervalEstimate {
        IntervalEstimate {
            point,
            lo,
            hi,
            method: IntervalMethod::ClusteredBootstrap,
            trials: Some(10),
            seed: Some(42),
        }
    }

    #[test]
    fn short_numbers() {
        assert_eq!(short(0.2134), ".21");
        assert_eq!(short(-0.034), "-.03");
        assert_eq!(short(1.0), "1.00");
        assert_eq!(short(0.125), ".13");
        assert_eq!(short(-0.001), ".00");
        assert_eq!(short(0.0), ".00");
    }

    fn table() -> Table {
        let mut t = Table::new("Effects", ["arm", "delta", "n"]);
        t.bold_nonzero = true;
        t.push(vec![
            "lib-202".into(),
            Cell::Interval(est(0.21, 0.15, 0.27)),
            38usize.into(),
        ]);
        t.push(vec![
            "lib-52".into(),
            Cell::Interval(est(0.06, -0.11, 0.22)),
            38usize.into(),
        ]);
        t.push(vec!["lib-9".into(), Cell::Missing, 0usize.into()]);
        t
    }

    #[test]
    fn markdown_cells() {
        let md = table().to_markdown();
        assert!(md.contains("| lib-202 | **.21 [.15, .27]** | 38 |"), "{md}");
        assert!(md.contains("| lib-52 | .06 [-.11, .22] | 38 |"));
        assert!(md.contains("| lib-9 | --- | 0 |"));
    }

    #[test]
    fn csv_expands_intervals() {
        let csv = table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "arm,delta,delta_lo,delta_hi,n");
        assert_eq!(lines[1], "lib-202,0.21,0.15,0.27,38");
        assert_eq!(lines[3], "lib-9,,,,0");
    }

    #[test]
    fn json_keeps_column_order() {
        let js = table().to_json();
        let a = js.find("\"arm\"").unwrap();
        let d = js.find("\"delta\"").unwrap();
        assert!(a < d);
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["rows"][2]["delta"], serde_json::Value::Null);
        assert_eq!(v["rows"][0]["delta"]["hi"], 0.27);
    }
}
