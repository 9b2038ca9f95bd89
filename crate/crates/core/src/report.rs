//! Self-describing CSV output: one `# {json}` header line carrying the full
//! configuration, then an ordinary CSV table.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            // shortest representation that parses back to the same bits
            Cell::Num(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn parse(s: &str) -> Cell {
        if s.is_empty() {
            Cell::Missing
        } else if let Ok(v) = s.parse::<f64>() {
            Cell::Num(v)
        } else {
            Cell::Text(s.to_string())
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Value, columns: Vec<String>) -> Self {
        Self {
            header,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv");
        format!("# {}\n{}", self.header, body)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let json = first
            .strip_prefix("# ")
            .ok_or_else(|| invalid("csv", "missing `# {json}` header line"))?;
        let header: Value =
            serde_json::from_str(json).map_err(|e| invalid("csv", format!("bad JSON header: {e}")))?;
        let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| invalid("csv", e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| invalid("csv", e.to_string()))?;
            rows.push(rec.iter().map(Cell::parse).collect());
        }
        Ok(Self { header, columns, rows })
    }
}

/// One grid point of a sweep: the axis value, one optional number per column
/// and the `column:reason` tags of the cells that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub values: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub header: Value,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn new(axis_name: &str, header: Value, columns: Vec<String>) -> Self {
        Self {
            axis_name: axis_name.to_string(),
            header,
            columns,
            rows: Vec::new(),
        }
    }

    /// Insert keeping rows sorted by the axis value.
    pub fn push(&mut self, row: SweepRow) {
        let at = self.rows.partition_point(|r| r.value <= row.value);
        self.rows.insert(at, row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    /// Number of rows with at least one value.
    pub fn successful_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.values.iter().any(Option::is_some)).count()
    }

    pub fn to_table(&self) -> Table {
        let mut cols = vec![self.axis_name.clone()];
        cols.extend(self.columns.iter().cloned());
        cols.push("failures".into());
        let mut t = Table::new(self.header.clone(), cols);
        for r in &self.rows {
            let mut row = vec![Cell::Num(r.value)];
            row.extend(r.values.iter().map(|&v| Cell::from(v)));
            row.push(if r.failures.is_empty() {
                Cell::Missing
            } else {
                Cell::Text(r.failures.join(";"))
            });
            t.push(row);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        if t.columns.len() < 2 || t.columns.last().map(String::as_str) != Some("failures") {
            return Err(invalid("csv", "not a sweep table"));
        }
        let k = t.columns.len();
        let mut out = SweepResult::new(&t.columns[0], t.header.clone(), t.columns[1..k - 1].to_vec());
        for row in &t.rows {
            let value = row[0]
                .num()
                .ok_or_else(|| invalid("csv", "axis value is not a number"))?;
            let values = row[1..k - 1].iter().map(Cell::num).collect();
            let failures = match &row[k - 1] {
                Cell::Text(s) => s.split(';').map(str::to_string).collect(),
                _ => Vec::new(),
            };
            out.rows.push(SweepRow { value, values, failures });
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        self.to_table().to_csv()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::from_table(&Table::from_csv(text)?)
    }
}
