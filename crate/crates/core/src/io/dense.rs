use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reads a dense matrix.
///
/// Files ending in `.bin` hold little-endian `u64` rows, `u64` columns and
/// the `f64` entries in row-major order. Anything else is parsed as CSV with
/// one matrix row per line; a non-numeric first line is taken as a header.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "bin") {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        return parse_binary(&bytes);
    }
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_binary(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let word = |i: usize| -> Result<u64> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| Error::Format("binary matrix header truncated".into()))
    };
    let (rows, cols) = (word(0)? as usize, word(1)? as usize);
    let len = rows.checked_mul(cols).ok_or_else(|| Error::Format("binary matrix too large".into()))?;
    if bytes.len() != 16 + 8 * len {
        return Err(Error::Format(format!(
            "binary matrix {rows}x{cols} needs {} bytes, file has {}",
            16 + 8 * len,
            bytes.len()
        )));
    }
    let vals: Vec<f64> = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

fn parse_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Format(format!("line {}: {e}", line + 1))),
        }
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Format("no numeric rows".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Format(format!("row {} has {} columns, expected {ncols}", i + 1, rows[i].len())));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

/// Writes `m` as headerless CSV with full round-trip precision.
pub fn write_dense_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `vertex_index, class_index` pairs (0-based vertices, 1-based
/// classes). An optional header line is skipped.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let m = read_dense(path)?;
    if m.ncols() != 2 {
        return Err(Error::Format(format!("labels need 2 columns, got {}", m.ncols())));
    }
    (0..m.nrows())
        .map(|i| {
            let (v, k) = (m[(i, 0)], m[(i, 1)]);
            if v < 0.0 || k < 1.0 || v.fract() != 0.0 || k.fract() != 0.0 {
                return Err(Error::Format(format!("bad label row {}: {v}, {k}", i + 1)));
            }
            Ok((v as usize, k as usize))
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[(usize, usize)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "vertex,class")?;
    for (v, k) in labels {
        writeln!(f, "{v},{k}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-300, 3.0, std::f64::consts::PI, 0.0]);
        write_dense_csv(&p, &m).unwrap();
        assert_eq!(read_dense(&p).unwrap(), m);
    }

    #[test]
    fn csv_header_skipped_and_ragged_rejected() {
        assert_eq!(parse_csv("x,y\n1,2\n3,4\n").unwrap().shape(), (2, 2));
        assert!(matches!(parse_csv("1,2\n3\n"), Err(Error::Format(_))));
        assert!(matches!(parse_csv(""), Err(Error::Format(_))));
    }

    #[test]
    fn binary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let mut bytes = Vec::new();
        bytes.extend(2u64.to_le_bytes());
        bytes.extend(1u64.to_le_bytes());
        bytes.extend(1.5f64.to_le_bytes());
        bytes.extend((-0.5f64).to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert_eq!(read_dense(&p).unwrap(), DMatrix::from_row_slice(2, 1, &[1.5, -0.5]));
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_dense(&p), Err(Error::Format(_))));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        write_labels(&p, &[(0, 1), (7, 3)]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![(0, 1), (7, 3)]);
        std::fs::write(&p, "0,0\n").unwrap();
        assert!(read_labels(&p).is_err());
    }
}
