use std::path::Path;

use nalgebra_sparse::io::{load_coo_from_matrix_market_str, save_to_matrix_market_file, MatrixMarketErrorKind};
use nalgebra_sparse::CooMatrix;

use crate::error::{Error, Result};
use crate::linalg::SparseSymOperator;

/// Reads a square symmetric Matrix Market file (`real` or `integer`,
/// `general` or `symmetric`).
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseSymOperator<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_matrix_market(text: &str) -> Result<SparseSymOperator<f64>> {
    let coo: CooMatrix<f64> = match load_coo_from_matrix_market_str::<f64>(text) {
        Ok(m) => m,
        Err(e) if e.kind() == MatrixMarketErrorKind::TypeMismatch => {
            let ints = load_coo_from_matrix_market_str::<i64>(text).map_err(|e| Error::Format(e.to_string()))?;
            let (rows, cols, vals) = ints.triplet_iter().fold((vec![], vec![], vec![]), |mut acc, (i, j, &v)| {
                acc.0.push(i);
                acc.1.push(j);
                acc.2.push(v as f64);
                acc
            });
            CooMatrix::try_from_triplets(ints.nrows(), ints.ncols(), rows, cols, vals)
                .map_err(|e| Error::Format(e.to_string()))?
        }
        Err(e) => return Err(Error::Format(e.to_string())),
    };
    if coo.nrows() != coo.ncols() {
        return Err(Error::Dimension(format!("operator must be square, got {}x{}", coo.nrows(), coo.ncols())));
    }
    let trip: Vec<_> = coo.triplet_iter().map(|(i, j, &v)| (i, j, v)).collect();
    SparseSymOperator::from_triplets(coo.nrows(), trip)
}

/// Writes the sparse part of `op` in `coordinate real general` form.
pub fn write_matrix_market(path: impl AsRef<Path>, op: &SparseSymOperator<f64>) -> Result<()> {
    if !op.corrections().is_empty() {
        return Err(Error::Invalid("low-rank corrections cannot be written as Matrix Market".into()));
    }
    let sp = op.sparse_part();
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for (i, j, v) in sp.triplets() {
        rows.push(i);
        cols.push(j);
        vals.push(v);
    }
    let coo = CooMatrix::try_from_triplets(sp.dim(), sp.dim(), rows, cols, vals).map_err(|e| Error::Invalid(e.to_string()))?;
    save_to_matrix_market_file(&coo, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_real_file() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 3 1.5\n";
        let op = parse_matrix_market(text).unwrap().to_dense();
        assert_eq!(op[(0, 1)], -1.0);
        assert_eq!(op[(1, 0)], -1.0);
        assert_eq!(op[(2, 2)], 1.5);
    }

    #[test]
    fn integer_file_is_converted() {
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 3\n2 2 4\n";
        let op = parse_matrix_market(text).unwrap().to_dense();
        assert_eq!(op[(1, 1)], 4.0);
    }

    #[test]
    fn rejects_rectangular_and_garbage() {
        let rect = "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n";
        assert!(matches!(parse_matrix_market(rect), Err(Error::Dimension(_))));
        assert!(matches!(parse_matrix_market("not a matrix"), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let op = SparseSymOperator::from_triplets(3, vec![(0, 0, 1.0), (0, 2, 0.25), (1, 1, 2.0)]).unwrap();
        write_matrix_market(&path, &op).unwrap();
        assert_eq!(read_matrix_market(&path).unwrap().to_dense(), op.to_dense());
    }
}
