//! CSV ingestion with lexicographic one-hot encoding.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// Which columns play which role, and how categorical columns are encoded.
#[derive(Clone, Debug, Default)]
pub struct SchemaOptions {
    pub target_col: Option<String>,
    pub pred_col: Option<String>,
    pub weight_col: Option<String>,
    pub drop: Vec<String>,
    /// Columns one-hot encoded even if their values parse as numbers.
    pub categorical: Vec<String>,
}

/// One categorical source column and the indicator columns it expanded to.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingGroup {
    pub source: String,
    /// Sorted category labels; column k is `source=categories[k]`.
    pub categories: Vec<String>,
    /// Indices of the indicator columns in the feature matrix.
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub encoding: Vec<EncodingGroup>,
    pub target: Option<Vec<f64>>,
    pub prediction: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by index, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Option<Vec<f64>>| v.as_ref().map(|v| rows.iter().map(|&a| v[a]).collect());
        Dataset {
            feature_names: self.feature_names.clone(),
            x: DMatrix::from_fn(rows.len(), self.x.ncols(), |a, j| self.x[(rows[a], j)]),
            encoding: self.encoding.clone(),
            target: pick(&self.target),
            prediction: pick(&self.prediction),
            weights: pick(&self.weights),
        }
    }

    /// Feature matrix with columns reordered to `names`.
    ///
    /// Indicator columns for a category absent from this data are zero;
    /// any other mismatch is a schema error.
    pub fn aligned(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let index: BTreeMap<&str, usize> = self.feature_names.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let wanted: HashSet<&str> = names.iter().map(String::as_str).collect();
        if let Some(extra) = self.feature_names.iter().find(|s| !wanted.contains(s.as_str())) {
            return Err(CliError::Data(format!("schema error: column `{extra}` is not a model feature")));
        }
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            match index.get(name.as_str()) {
                Some(&j) => cols.push(Some(j)),
                None => {
                    let is_encoded = name
                        .split_once('=')
                        .is_some_and(|(src, _)| self.encoding.iter().any(|g| g.source == src));
                    if !is_encoded {
                        return Err(CliError::Data(format!("schema error: model feature `{name}` missing from data")));
                    }
                    cols.push(None);
                }
            }
        }
        Ok(DMatrix::from_fn(self.n_rows(), names.len(), |a, k| cols[k].map_or(0.0, |j| self.x[(a, j)])))
    }
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

fn numeric_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Err(CliError::Data(format!("missing value at row {row}, column `{col}`")));
    }
    match parse_real(t) {
        Some(v) if v.is_finite() => Ok(v),
        Some(_) => Err(CliError::Data(format!("non-finite value `{t}` at row {row}, column `{col}`"))),
        None => Err(CliError::Data(format!("unparseable value `{t}` at row {row}, column `{col}`"))),
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &SchemaOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::io(path, e))?;
    parse_csv(&text, options)
}

/// Parse CSV text; rows are numbered from 1 after the header.
pub fn parse_csv(text: &str, options: &SchemaOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(CliError::Data("CSV has no header".into()));
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(CliError::Data("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(CliError::Data(format!("duplicate column `{h}` in header")));
        }
    }
    for name in options.target_col.iter().chain(&options.pred_col).chain(&options.weight_col).chain(&options.drop).chain(&options.categorical) {
        if !seen.contains(name.as_str()) {
            return Err(CliError::Usage(format!("column `{name}` not found in CSV header")));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", k + 1)))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(CliError::Data("CSV has no data rows".into()));
    }
    let n = rows.len();

    let role_col = |name: &Option<String>| -> Result<Option<Vec<f64>>> {
        let Some(name) = name else { return Ok(None) };
        let j = headers.iter().position(|h| h == name).expect("checked above");
        rows.iter().enumerate().map(|(a, r)| numeric_cell(&r[j], a + 1, name)).collect::<Result<Vec<_>>>().map(Some)
    };
    let target = role_col(&options.target_col)?;
    let prediction = role_col(&options.pred_col)?;
    let weights = role_col(&options.weight_col)?;
    if let Some(w) = &weights {
        if let Some(a) = w.iter().position(|&v| v < 0.0) {
            return Err(CliError::Data(format!("negative weight at row {}", a + 1)));
        }
    }

    let reserved: HashSet<&str> = options
        .target_col
        .iter()
        .chain(&options.pred_col)
        .chain(&options.weight_col)
        .chain(&options.drop)
        .map(String::as_str)
        .collect();
    let forced: HashSet<&str> = options.categorical.iter().map(String::as_str).collect();

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut encoding = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if reserved.contains(h.as_str()) {
            continue;
        }
        let cells: Vec<&str> = rows.iter().map(|r| r[j].trim()).collect();
        let any_numeric = cells.iter().any(|c| parse_real(c).is_some());
        if forced.contains(h.as_str()) || !any_numeric {
            if let Some(a) = cells.iter().position(|c| c.is_empty()) {
                return Err(CliError::Data(format!("missing value at row {}, column `{h}`", a + 1)));
            }
            let categories: Vec<String> = cells.iter().map(|c| c.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
            let start = columns.len();
            for cat in &categories {
                names.push(format!("{h}={cat}"));
                columns.push(cells.iter().map(|c| if *c == cat { 1.0 } else { 0.0 }).collect());
            }
            encoding.push(EncodingGroup { source: h.clone(), categories, columns: (start..columns.len()).collect() });
        } else {
            let col = cells.iter().enumerate().map(|(a, c)| numeric_cell(c, a + 1, h)).collect::<Result<Vec<_>>>()?;
            names.push(h.clone());
            columns.push(col);
        }
    }
    let mut unique = HashSet::new();
    if let Some(dup) = names.iter().find(|s| !unique.insert(s.as_str())) {
        return Err(CliError::Data(format!("encoded column name `{dup}` collides with another column")));
    }
    let x = DMatrix::from_fn(n, columns.len(), |a, j| columns[j][a]);
    Ok(Dataset { feature_names: names, x, encoding, target, prediction, weights })
}

/// Read a prediction column from its own CSV (named column, or the only column).
pub fn load_predictions(path: impl AsRef<Path>, column: Option<&str>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad CSV header in {}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let j = match column {
        Some(c) => headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| CliError::Usage(format!("column `{c}` not found in {}", path.display())))?,
        None if headers.len() == 1 => 0,
        None => return Err(CliError::Usage(format!("{} has several columns; name one with --pred-col", path.display()))),
    };
    let name = headers[j].clone();
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", k + 1)))?;
        out.push(numeric_cell(rec.get(j).unwrap_or(""), k + 1, &name)?);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} has no data rows", path.display())));
    }
    Ok(out)
}
