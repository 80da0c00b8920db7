use std::path::Path;

use crate::domain::{Dataset, Outcome, RawTable};
use crate::error::{Error, Result};
use crate::graph::{parse_adjacency, RegionGraph};

/// Reads a comma-separated file with a header row.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, path)
}

/// Parses comma-separated text with a header row; errors name `origin`.
pub fn parse_table(text: &str, origin: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(origin, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    // The reader's own line count ignores blank lines; count newlines instead.
    let (mut seen, mut line) = (0usize, 1usize);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        // Positions can point at blank lines skipped before the record.
        let mut byte = record.position().map_or(seen, |p| p.byte() as usize);
        while matches!(text.as_bytes().get(byte), Some(b'\r' | b'\n')) {
            byte += 1;
        }
        line += text.as_bytes()[seen..byte].iter().filter(|&&b| b == b'\n').count();
        seen = byte;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(RawTable { header, rows, lines })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

pub fn read_graph(path: &Path) -> Result<RegionGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_adjacency(&text).map_err(|e| e.in_file(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Builds CSV text from a header and rows of already formatted fields.
pub struct CsvText {
    text: String,
}

impl CsvText {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Dataset as CSV: `region`, the covariates, then `y` or `time,event`.
/// Times are written on the original scale.
pub fn dataset_csv(data: &Dataset) -> String {
    let mut header: Vec<&str> = vec!["region"];
    header.extend(data.covariate_names.iter().map(String::as_str));
    match &data.outcome {
        Outcome::Binary(_) => header.push("y"),
        Outcome::Survival { .. } => header.extend(["time", "event"]),
    }
    let mut out = CsvText::new(&header);
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        fields.clear();
        fields.push(data.region_ids[data.region[i]].clone());
        fields.extend(data.covariate_row(i).iter().map(|&v| num(v)));
        match &data.outcome {
            Outcome::Binary(y) => fields.push(y[i].to_string()),
            Outcome::Survival { time, event } => {
                fields.push(num(time[i] * data.time_scale));
                fields.push(event[i].to_string());
            }
        }
        out.row(&fields);
    }
    out.finish()
}
