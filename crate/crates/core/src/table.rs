//! Small in-memory CSV table shared by experiments and plotting.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Formats a float for CSV output; NaN is written as `NaN`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Schema(format!(
                "row has {} fields, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}` (have: {})", self.header.join(", "))))
    }

    /// Values of a column parsed as floats (`NaN` and empty cells give NaN).
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                let s = r[c].trim();
                if s.is_empty() || s.eq_ignore_ascii_case("nan") {
                    Ok(f64::NAN)
                } else {
                    s.parse()
                        .map_err(|_| Error::Schema(format!("column `{name}`: `{s}` is not a number")))
                }
            })
            .collect()
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV of UTF-8 strings")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        self.write_to(std::fs::File::create(&tmp)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(format!("CSV: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_nan() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(f64::NAN)]).unwrap();
        t.push(vec!["x,y".into(), fmt_f64(0.5)]).unwrap();
        let s = t.to_csv_string();
        assert!(s.ends_with('\n') && !s.contains('\r'));
        let back = Table::parse(&s).unwrap();
        assert_eq!(back, t);
        assert!(back.f64_column("b").unwrap()[0].is_nan());
        assert!(back.f64_column("a").is_err());
        assert!(matches!(back.column("c"), Err(Error::Schema(_))));
        assert!(t.push(vec!["1".into()]).is_err());
    }
}
