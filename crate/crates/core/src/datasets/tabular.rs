use super::{DataError, Dataset, Targets};
use ndarray::Array2;
use std::io::Read;
use std::path::Path;

/// Loads a comma-delimited regression table with a header row. All columns other
/// than `target_column` become features, in header order.
pub fn load_csv_regression(path: &Path, target_column: &str) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_regression(file, target_column).map_err(|e| match e {
        DataError::Csv { source, .. } => DataError::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_csv_regression<R: Read>(reader: R, target_column: &str) -> Result<Dataset, DataError> {
    let csv_err = |source| DataError::Csv {
        path: "<reader>".into(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::EmptyFile);
    }
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DataError::MissingColumn(target_column.to_string()))?;
    let n_cols = header.len();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (col, cell) in record.iter().enumerate() {
            let value =
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::NonNumericCell {
                        row,
                        col,
                        value: cell.to_string(),
                    })?;
            if col == target_idx {
                targets.push(value);
            } else {
                features.push(value);
            }
        }
    }
    if targets.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let features = Array2::from_shape_vec((targets.len(), n_cols - 1), features)
        .expect("csv reader enforces equal record lengths");
    let names = header
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h)
        .collect();
    Dataset::new(features, Targets::Real(targets), Some(names))
}
