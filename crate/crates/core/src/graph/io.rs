//! Text formats: edge lists (`N E` header, then `i j w` per line) and
//! signal CSV (one row per node).

use std::fmt::Write as _;

use ndarray::Array2;

use super::{GraphSignal, SupportMatrix};
use crate::error::{Error, Result};

pub fn write_edge_list(s: &SupportMatrix) -> String {
    let triplets = s.triplets();
    let mut out = format!("{} {}\n", s.n_nodes(), triplets.len());
    for (i, j, w) in triplets {
        let _ = writeln!(out, "{i} {j} {w:?}");
    }
    out
}

pub fn read_edge_list(text: &str) -> Result<SupportMatrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("edge list", "missing header"))?;
    let mut h = header.split_whitespace();
    let n: usize = parse_field(h.next(), "edge list header N")?;
    let e: usize = parse_field(h.next(), "edge list header E")?;
    let mut triplets = Vec::with_capacity(e);
    for (lineno, line) in lines.enumerate() {
        let mut f = line.split_whitespace();
        let what = format!("edge list line {}", lineno + 2);
        let i: usize = parse_field(f.next(), &what)?;
        let j: usize = parse_field(f.next(), &what)?;
        let w: f64 = parse_field(f.next(), &what)?;
        if f.next().is_some() {
            return Err(Error::parse(what, "trailing fields"));
        }
        triplets.push((i, j, w));
    }
    if triplets.len() != e {
        return Err(Error::parse(
            "edge list",
            format!("header declares {e} entries, found {}", triplets.len()),
        ));
    }
    SupportMatrix::from_triplets(n, &triplets)
}

pub fn write_signal_csv(x: &GraphSignal) -> String {
    let mut out = String::new();
    for row in x.as_array().rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn read_signal_csv(text: &str) -> Result<GraphSignal> {
    let mut values = Vec::new();
    let mut n_features = None;
    let mut n_rows = 0;
    for (lineno, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
        let what = format!("signal csv line {}", lineno + 1);
        let row: Vec<f64> = line
            .split(',')
            .map(|f| parse_field(Some(f.trim()), &what))
            .collect::<Result<_>>()?;
        match n_features {
            None => n_features = Some(row.len()),
            Some(f) if f != row.len() => {
                return Err(Error::parse(what, format!("expected {f} columns, found {}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        n_rows += 1;
    }
    let f = n_features.ok_or_else(|| Error::parse("signal csv", "no rows"))?;
    let arr = Array2::from_shape_vec((n_rows, f), values).map_err(|e| Error::parse("signal csv", e.to_string()))?;
    GraphSignal::new(arr)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let field = field.ok_or_else(|| Error::parse(what, "missing field"))?;
    field
        .parse()
        .map_err(|e: T::Err| Error::parse(what, format!("{field:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn edge_list_round_trip() {
        let s = SupportMatrix::from_triplets(4, &[(0, 1, 0.1), (1, 0, 1.0 / 3.0), (3, 3, -2.5)]).unwrap();
        let text = write_edge_list(&s);
        assert!(text.starts_with("4 3\n"));
        assert_eq!(read_edge_list(&text).unwrap(), s);
    }

    #[test]
    fn edge_list_errors() {
        assert!(read_edge_list("").is_err());
        assert!(read_edge_list("2 2\n0 1 1.0\n").is_err());
        assert!(read_edge_list("2 1\n0 x 1.0\n").is_err());
        assert!(read_edge_list("2 2\n0 1 1.0\n0 1 1.0\n").is_err());
    }

    #[test]
    fn signal_csv_round_trip() {
        let x = GraphSignal::new(array![[0.1, -2.0], [1e-300, 7.0 / 3.0]]).unwrap();
        assert_eq!(read_signal_csv(&write_signal_csv(&x)).unwrap(), x);
        assert!(read_signal_csv("1,2\n3\n").is_err());
    }
}
