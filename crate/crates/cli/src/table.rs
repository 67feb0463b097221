//! CSV input and output.
//!
//! Input files carry a header row naming their columns. Lines starting with
//! `#` and blank lines are ignored anywhere in the file. Rows are reported by
//! their line number in the file.
//!
//! Output files start with a `#`-prefixed metadata block followed by a plain
//! CSV table. Numbers are written with the shortest representation that
//! parses back to the same `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{Resolved, RunConfig};
use crate::CliError;

/// Expected columns of an input file. Optional columns may follow the
/// required ones, in the listed order.
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

impl Schema {
    pub const fn new(required: &'static [&'static str], optional: &'static [&'static str]) -> Self {
        Self { required, optional }
    }
}

/// Numeric table read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text, schema).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str, schema: &Schema) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("malformed CSV: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let Some(cols) = &columns else {
            let names: Vec<String> = record.iter().map(str::to_string).collect();
            check_header(&names, schema, line)?;
            columns = Some(names);
            continue;
        };
        if record.len() != cols.len() {
            return Err(CliError::Input(format!(
                "row {line}: expected {} columns, found {}",
                cols.len(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Input(format!(
                    "row {line}, column {} (`{}`): `{cell}` is not a finite number",
                    k + 1,
                    cols[k]
                ))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    let columns = columns.ok_or_else(|| CliError::Input("no header row".into()))?;
    Ok(Table { columns, rows })
}

fn check_header(names: &[String], schema: &Schema, line: u64) -> Result<(), CliError> {
    let expected = || {
        let mut s = schema.required.join(",");
        for o in schema.optional {
            s.push_str(&format!("[,{o}]"));
        }
        s
    };
    let extra = names.len().checked_sub(schema.required.len());
    let ok = match extra {
        Some(n) if n <= schema.optional.len() => {
            names[..schema.required.len()]
                .iter()
                .zip(schema.required)
                .all(|(a, b)| a == b)
                && names[schema.required.len()..]
                    .iter()
                    .zip(schema.optional)
                    .all(|(a, b)| a == b)
        }
        _ => false,
    };
    if !ok {
        return Err(CliError::Input(format!(
            "row {line}: header `{}` does not match the expected columns `{}`",
            names.join(","),
            expected()
        )));
    }
    Ok(())
}

/// Shortest decimal form that parses back to the same value, switching to
/// exponent notation for very large or small magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Metadata lines shared by every output file.
pub fn metadata(config: &RunConfig, resolved: &Resolved, command: &str, stamp: bool) -> Vec<String> {
    let g = &resolved.grid;
    let mut lines = vec![
        format!(
            "generated-by ramanmem {} config-sha256={}",
            env!("CARGO_PKG_VERSION"),
            config.hash()
        ),
        format!("command {command}"),
        format!("convention {}", resolved.convention),
        format!(
            "grid nz={} ntau={} tau_min_ns={} tau_max_ns={}",
            g.nz,
            g.ntau,
            num(g.tau_span.0),
            num(g.tau_span.1)
        ),
    ];
    if stamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        lines.push(format!("timestamp-unix {secs}"));
    }
    lines
}

/// Writes a metadata block and a CSV table to `path`.
pub fn write_table(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for line in meta {
        writeln!(buf, "# {line}").expect("write to memory");
    }
    {
        let mut w = csv::WriterBuilder::new().from_writer(&mut buf);
        w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, buf).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: Schema = Schema::new(&["t_ns", "efficiency"], &["sigma"]);

    #[test]
    fn two_column_file() {
        let t = parse_csv("t_ns,efficiency\n0,0.3\n1000,0.2\n", &TWO).unwrap();
        assert_eq!(t.columns, ["t_ns", "efficiency"]);
        assert_eq!(t.rows, vec![vec![0.0, 0.3], vec![1000.0, 0.2]]);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let plain = parse_csv("t_ns,efficiency\n0,0.3\n1000,0.2\n", &TWO).unwrap();
        let noisy = parse_csv(
            "# measured 2014\n\nt_ns,efficiency\n# first point\n0,0.3\n\n  \n1000, 0.2\n",
            &TWO,
        )
        .unwrap();
        assert_eq!(plain, noisy);
    }

    #[test]
    fn column_count_mismatch_cites_row() {
        let text = "t_ns,efficiency\n0,0.3\n1,0.3\n2,0.3\n3,0.3\n4,0.3\n5,0.3,9\n";
        let err = parse_csv(text, &TWO).unwrap_err().to_string();
        assert!(err.contains("row 7"), "{err}");
    }

    #[test]
    fn non_numeric_cell_cites_row_and_column() {
        let err = parse_csv("t_ns,efficiency\n0,0,3\n", &Schema::new(&["t_ns", "efficiency"], &[]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = parse_csv("t_ns,efficiency\n0,0;3\n", &TWO).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
    }

    #[test]
    fn header_mismatch() {
        let err = parse_csv("time,eff\n0,1\n", &TWO).unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
        let ok = parse_csv("t_ns,efficiency,sigma\n0,1,0.1\n", &TWO).unwrap();
        assert_eq!(ok.column("sigma"), Some(vec![0.1]));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 84.0, 1e300, 6.2e-14] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
