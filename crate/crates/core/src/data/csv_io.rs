use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Column holding probe-category tags; the only non-numeric column accepted.
pub const CATEGORY_COLUMN: &str = "category";

/// Reads a headed numeric CSV. `label_column` holds integer class indices;
/// an optional `category` column holds text tags; every other column is a
/// feature. Errors name the file row (the header is row 1) and column.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_at = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Data(format!("missing label column {label_column:?}")))?;
    let category_at = header.iter().position(|h| h == CATEGORY_COLUMN);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_at && Some(c) != category_at)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Data("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut categories = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 2;
        let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row_no}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let cell = |c: usize| -> Result<f64> {
            let raw = record[c].trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("row {row_no}, column {:?}: non-numeric value {raw:?}", header[c])))
        };
        for &c in &feature_cols {
            features.push(cell(c)?);
        }
        let label = cell(label_at)?;
        if label < 0.0 || label.fract() != 0.0 {
            return Err(Error::Data(format!(
                "row {row_no}, column {label_column:?}: label {label} is not a class index"
            )));
        }
        labels.push(label as usize);
        if let Some(c) = category_at {
            categories.push(record[c].trim().to_string());
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let ds = Dataset::new(features, feature_cols.len(), labels, names)?;
    if category_at.is_some() {
        ds.with_categories(categories)
    } else {
        Ok(ds)
    }
}

/// Writes features, then the label column, then `category` when present.
pub fn write_csv(data: &Dataset, path: &Path, label_column: &str) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push(label_column.to_string());
    if data.categories.is_some() {
        header.push(CATEGORY_COLUMN.to_string());
    }
    w.write_record(&header).map_err(to_err)?;
    for i in 0..data.len() {
        // `{:?}` on f64 prints the shortest representation that round-trips.
        let mut rec: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(data.labels()[i].to_string());
        if let Some(c) = &data.categories {
            rec.push(c[i].clone());
        }
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_three_rows() {
        let text = "age,income,label\n30,1.5,0\n41,2.0,1\n25,0.7,0\n";
        let d = read_csv(text.as_bytes(), "label").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.feature_names(), &["age".to_string(), "income".to_string()]);
        assert_eq!(d.row(1), &[41.0, 2.0]);
        assert_eq!(d.labels(), &[0, 1, 0]);
    }

    #[test]
    fn na_cell_names_row_and_column() {
        let text = "age,income,label\nNA,1.5,0\n41,2.0,1\n";
        let msg = read_csv(text.as_bytes(), "label").unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("\"age\""), "{msg}");
    }

    #[test]
    fn ragged_and_missing_label() {
        let ragged = "a,b,label\n1,2,0\n1,0\n";
        let msg = read_csv(ragged.as_bytes(), "label").unwrap_err().to_string();
        assert!(msg.contains("row 3"), "{msg}");
        let msg = read_csv("a,b\n1,2\n".as_bytes(), "label").unwrap_err().to_string();
        assert!(msg.contains("missing label column"), "{msg}");
    }

    #[test]
    fn category_column_is_kept() {
        let text = "a,label,category\n1,0,skill_a\n2,1,skill_b\n";
        let d = read_csv(text.as_bytes(), "label").unwrap();
        assert_eq!(d.num_features(), 1);
        assert_eq!(d.categories.unwrap(), vec!["skill_a", "skill_b"]);
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = Dataset::new(
            vec![0.1, -2.5e-7, 1.0 / 3.0, 4.0],
            2,
            vec![1, 0],
            vec!["p".into(), "q".into()],
        )
        .unwrap();
        write_csv(&d, &path, "label").unwrap();
        assert_eq!(load_csv(&path, "label").unwrap(), d);
    }
}
