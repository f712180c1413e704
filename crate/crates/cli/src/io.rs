use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use gshrink::Observation;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Reads a file, or stdin for `-`.
pub fn read_input(path: &Path) -> CliResult<String> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

/// Writes to `path`, or stdout when absent.
pub fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Pretty JSON with keys in lexicographic order at every level.
pub fn to_sorted_json(value: &impl Serialize) -> CliResult<String> {
    // `serde_json::Value` maps are BTreeMaps, so the round trip sorts keys.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

fn require_column(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    column(headers, name).ok_or_else(|| CliError::Data(format!("missing required column '{name}'")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_field(rec: &csv::StringRecord, idx: usize, name: &str) -> CliResult<f64> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse::<f64>()
        .map_err(|_| CliError::Data(format!("line {}: column '{name}': cannot parse '{raw}' as a number", line_of(rec))))
}

/// Parses `y, delta[, eta]` rows; other columns are ignored.
pub fn read_observations(text: &str) -> CliResult<Vec<Observation>> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let iy = require_column(&headers, "y")?;
    let id = require_column(&headers, "delta")?;
    let ie = column(&headers, "eta");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let y = parse_field(&rec, iy, "y")?;
        let delta = parse_field(&rec, id, "delta")?;
        let eta = ie.map(|i| parse_field(&rec, i, "eta")).transpose()?.unwrap_or(1.0);
        let obs = Observation::with_offset(y, delta, eta).map_err(|e| CliError::Data(format!("line {}: {e}", line_of(&rec))))?;
        out.push(obs);
    }
    if out.is_empty() {
        return Err(CliError::Data("input contains no observations".into()));
    }
    Ok(out)
}

/// One raw record for `group`: the key tuple and the positive value.
pub struct Record {
    pub key: Vec<String>,
    pub value: f64,
}

/// Reads `group_id, value` plus the extra key columns.
pub fn read_records(text: &str, keys: &[String]) -> CliResult<(Vec<String>, Vec<Record>)> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let mut key_names = vec!["group_id".to_owned()];
    key_names.extend(keys.iter().cloned());
    let key_idx = key_names.iter().map(|k| require_column(&headers, k)).collect::<CliResult<Vec<_>>>()?;
    let iv = require_column(&headers, "value")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let value = parse_field(&rec, iv, "value")?;
        if !(value.is_finite() && value > 0.0) {
            return Err(CliError::Data(format!("line {}: value must be positive and finite, got {value}", line_of(&rec))));
        }
        let key = key_idx.iter().map(|&i| rec.get(i).unwrap_or("").to_owned()).collect();
        out.push(Record { key, value });
    }
    if out.is_empty() {
        return Err(CliError::Data("input contains no records".into()));
    }
    Ok((key_names, out))
}

/// Serializes rows under a header into CSV text.
pub fn csv_text<I, R>(header: &[&str], rows: I) -> CliResult<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}

/// Shortest round-trip representation; empty for missing values.
pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_default_eta_and_ignore_extra_columns() {
        let obs = read_observations("group_id,y,delta\nA,3,2\nB,1e-1,1\n").unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!((obs[0].y, obs[0].delta, obs[0].eta), (3.0, 2.0, 1.0));
        assert_eq!(obs[1].y, 0.1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let Err(CliError::Data(msg)) = read_observations("y,delta\n1,1\nx,2\n") else {
            panic!("expected data error")
        };
        assert!(msg.contains("line 3"), "{msg}");
        let Err(CliError::Data(msg)) = read_records("group_id,value\nA,1\nA,-2\n", &[]) else {
            panic!("expected data error")
        };
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(read_observations("y,delta\n"), Err(CliError::Data(_))));
        assert!(matches!(read_observations(""), Err(CliError::Data(_))));
        assert!(matches!(read_records("group_id,value\n", &[]), Err(CliError::Data(_))));
    }

    #[test]
    fn sorted_json_orders_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        let s = to_sorted_json(&S { zeta: 1, alpha: 2 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }
}
