//! Two-class CSV datasets and the gene-expression preprocessing steps:
//! variance-quantile filtering, two-sample t-test screening and stratified
//! train/validation/test splits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDataset {
    pub x: DMatrix<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
}

impl RealDataset {
    pub fn new(x: DMatrix<f64>, labels: Vec<u8>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidInput(format!("label {bad} is not 0 or 1")));
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::InvalidInput(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        Ok(Self {
            x,
            labels,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Row indices of one class, ascending.
    pub fn class_rows(&self, label: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == label).collect()
    }

    /// `(X⁽⁰⁾, X⁽¹⁾)` in row order.
    pub fn class_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.x.select_rows(&self.class_rows(0)), self.x.select_rows(&self.class_rows(1)))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Self {
        Self {
            x: self.x.select_columns(cols),
            labels: self.labels.clone(),
            feature_names: self
                .feature_names
                .as_ref()
                .map(|names| cols.iter().map(|&j| names[j].clone()).collect()),
        }
    }

    /// Names of the columns, `x0, x1, …` when none were loaded.
    pub fn names(&self) -> Vec<String> {
        match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.p()).map(|j| format!("x{j}")).collect(),
        }
    }
}

fn parse_label(raw: &str, row: usize, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("unknown label value '{other}' (expected 0 or 1)"),
        }),
    }
}

struct Table {
    x: DMatrix<f64>,
    labels: Vec<String>,
    label_header: String,
    names: Vec<String>,
}

fn read_table(path: &Path, label_column: &str, delimiter: u8) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers.iter().position(|h| h == label_column).ok_or_else(|| {
        Error::InvalidInput(format!("label column '{label_column}' not found in {}", path.display()))
    })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(field.trim().to_string());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].clone(),
                message: format!("'{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("non-finite value '{field}'"),
                });
            }
            values.push(value);
        }
    }
    Ok(Table {
        x: DMatrix::from_row_slice(labels.len(), p, &values),
        labels,
        label_header: headers[label_idx].clone(),
        names,
    })
}

/// Reads a headed CSV. Every column other than `label_column` must be
/// numeric and finite; row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, label_column: &str, delimiter: u8) -> Result<RealDataset> {
    let table = read_table(path, label_column, delimiter)?;
    let labels = table
        .labels
        .iter()
        .enumerate()
        .map(|(k, raw)| parse_label(raw, k + 1, &table.label_header))
        .collect::<Result<Vec<u8>>>()?;
    RealDataset::new(table.x, labels, Some(table.names))
}

/// Feature matrix with any number of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiClassData {
    pub x: DMatrix<f64>,
    /// Class index of each row into `classes`.
    pub labels: Vec<usize>,
    /// Distinct label values, numerically sorted when all are numbers.
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
}

impl MultiClassData {
    /// Rows of each class, in class order.
    pub fn class_matrices(&self) -> Vec<DMatrix<f64>> {
        (0..self.classes.len())
            .map(|k| {
                let rows: Vec<usize> = (0..self.labels.len()).filter(|&i| self.labels[i] == k).collect();
                self.x.select_rows(&rows)
            })
            .collect()
    }
}

/// Like [`load_csv`] but the label column may hold any labels.
pub fn load_multiclass_csv(path: &Path, label_column: &str, delimiter: u8) -> Result<MultiClassData> {
    let table = read_table(path, label_column, delimiter)?;
    let mut classes: Vec<String> = table.labels.clone();
    classes.sort();
    classes.dedup();
    let numeric: Option<Vec<f64>> = classes.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(keys) = numeric {
        let mut pairs: Vec<(f64, String)> = keys.into_iter().zip(classes).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        classes = pairs.into_iter().map(|(_, c)| c).collect();
    }
    let labels = table
        .labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).unwrap_or(0))
        .collect();
    Ok(MultiClassData {
        x: table.x,
        labels,
        classes,
        feature_names: table.names,
    })
}

/// Writes a headed CSV with the label in the first column. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(data: &RealDataset, path: &Path, label_column: &str, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_path(path)?;
    let mut header = vec![label_column.to_string()];
    header.extend(data.names());
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut record = vec![data.labels[i].to_string()];
        record.extend(data.x.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Sample variance (divisor `n − 1`) of each column.
pub fn column_variances(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows();
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|col| {
            if n < 2 {
                return 0.0;
            }
            let mean = col.mean();
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        }),
    )
}

/// Features whose pooled sample variance lies strictly between the
/// nearest-rank `fraction`-quantile from below and from above; with `k =
/// ⌈fraction·p⌉` these are the `k`-th smallest and `k`-th largest variances.
/// Returns the reduced dataset and the kept column indices.
pub fn variance_quantile_filter(data: &RealDataset, fraction: f64) -> Result<(RealDataset, Vec<usize>)> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("fraction must lie in [0, 0.5), got {fraction}")));
    }
    let p = data.p();
    let k = (fraction * p as f64 - 1e-9).ceil().max(0.0) as usize;
    if k == 0 || p == 0 {
        let all: Vec<usize> = (0..p).collect();
        return Ok((data.clone(), all));
    }
    let var = column_variances(&data.x);
    let mut sorted: Vec<f64> = var.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let low = sorted[k - 1];
    let high = sorted[p - k];
    let kept: Vec<usize> = (0..p).filter(|&j| var[j] > low && var[j] < high).collect();
    Ok((data.select_features(&kept), kept))
}

/// Pooled-variance two-sample t statistic of each feature (class 1 minus
/// class 0). A zero-variance feature has `t = 0` with no mean gap and
/// `±∞` otherwise.
pub fn t_statistics(data: &RealDataset) -> Result<Vec<f64>> {
    let (x0, x1) = data.class_matrices();
    let (n0, n1) = (x0.nrows(), x1.nrows());
    for (label, n) in [("0", n0), ("1", n1)] {
        if n == 0 {
            return Err(Error::InvalidInput(format!("class {label} is absent")));
        }
    }
    if n0 + n1 < 3 {
        return Err(Error::InsufficientData {
            class: "0+1".into(),
            needed: 3,
            got: n0 + n1,
        });
    }
    let v0 = column_variances(&x0);
    let v1 = column_variances(&x1);
    let scale = (1.0 / n0 as f64 + 1.0 / n1 as f64).sqrt();
    Ok((0..data.p())
        .map(|j| {
            let gap = x1.column(j).mean() - x0.column(j).mean();
            let pooled = ((n0 - 1) as f64 * v0[j] + (n1 - 1) as f64 * v1[j]) / (n0 + n1 - 2) as f64;
            let se = pooled.max(0.0).sqrt() * scale;
            if se > 0.0 {
                gap / se
            } else if gap == 0.0 {
                0.0
            } else {
                gap.signum() * f64::INFINITY
            }
        })
        .collect())
}

/// Indices of the `m` largest `|t|`, in decreasing order; ties go to the
/// lower index.
pub fn t_test_select(train: &RealDataset, m: usize) -> Result<Vec<usize>> {
    if m > train.p() {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds p = {}", train.p())));
    }
    let t = t_statistics(train)?;
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    order.truncate(m);
    Ok(order)
}

/// Per-class sample counts of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train0: usize,
    pub train1: usize,
    pub val0: usize,
    pub val1: usize,
    pub test0: usize,
    pub test1: usize,
}

impl SplitCounts {
    /// Leukemia-sized split: 29/15 train, 9/5 validation, 9/5 test.
    pub const LEUKEMIA: SplitCounts = SplitCounts {
        train0: 29,
        train1: 15,
        val0: 9,
        val1: 5,
        test0: 9,
        test1: 5,
    };
}

/// Original row indices of each split, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    /// One JSON object per line: `{"split": "train", "rows": [...]}`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            split: &'a str,
            rows: &'a [usize],
        }
        let mut out = BufWriter::new(File::create(path)?);
        for (split, rows) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            serde_json::to_writer(&mut out, &Line { split, rows })?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            split: String,
            rows: Vec<usize>,
        }
        let text = std::fs::read_to_string(path)?;
        let mut parts: HashMap<String, Vec<usize>> = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: Line = serde_json::from_str(line)?;
            parts.insert(parsed.split, parsed.rows);
        }
        let mut take = |name: &str| {
            parts
                .remove(name)
                .ok_or_else(|| Error::InvalidInput(format!("split manifest lacks '{name}'")))
        };
        Ok(Self {
            train: take("train")?,
            val: take("val")?,
            test: take("test")?,
        })
    }
}

/// Shuffles each class with a seeded ChaCha8 stream and deals rows into
/// train, validation and test.
pub fn stratified_split(
    data: &RealDataset,
    counts: SplitCounts,
    seed: u64,
) -> Result<(RealDataset, RealDataset, RealDataset, SplitManifest)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (label, sizes) in [
        (0u8, [counts.train0, counts.val0, counts.test0]),
        (1u8, [counts.train1, counts.val1, counts.test1]),
    ] {
        let mut rows = data.class_rows(label);
        let needed: usize = sizes.iter().sum();
        if needed > rows.len() {
            return Err(Error::InsufficientData {
                class: label.to_string(),
                needed,
                got: rows.len(),
            });
        }
        rows.shuffle(&mut rng);
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&rows[start..start + size]);
            start += size;
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok((
        data.select_rows(&train),
        data.select_rows(&val),
        data.select_rows(&test),
        SplitManifest { train, val, test },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn synthetic(n0: usize, n1: usize, p: usize, seed: u64) -> RealDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n0 + n1;
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = (0..n).map(|i| u8::from(i >= n0)).collect();
        RealDataset::new(x, labels, None).unwrap()
    }

    #[test]
    fn load_exact_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "g1,label,g2\n1.5,0,-2\n0,1,3.25\n1e-3,1,4\n").unwrap();
        let d = load_csv(&path, "label", b',').unwrap();
        assert_eq!(d.x, DMatrix::from_row_slice(3, 2, &[1.5, -2.0, 0.0, 3.25, 1e-3, 4.0]));
        assert_eq!(d.labels, vec![0, 1, 1]);
        assert_eq!(d.feature_names.unwrap(), vec!["g1", "g2"]);
    }

    #[test]
    fn load_rejects_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "label,a,b\n0,1,2\n1,NaN,2\n").unwrap();
        match load_csv(&path, "label", b',') {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "a")),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "label,a\n2,1\n").unwrap();
        assert!(matches!(load_csv(&path, "label", b','), Err(Error::Parse { row: 1, .. })));
        std::fs::write(&path, "label,a\n0,abc\n").unwrap();
        assert!(matches!(load_csv(&path, "label", b','), Err(Error::Parse { .. })));
        assert!(matches!(load_csv(&path, "class", b','), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn multiclass_labels_sorted_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "y,a\n10,1\n2,2\n10,3\n9,4\n").unwrap();
        let d = load_multiclass_csv(&path, "y", b',').unwrap();
        assert_eq!(d.classes, vec!["2", "9", "10"]);
        assert_eq!(d.labels, vec![2, 0, 2, 1]);
        let parts = d.class_matrices();
        assert_eq!(parts[2], DMatrix::from_row_slice(2, 1, &[1.0, 3.0]));
        std::fs::write(&path, "y,a\nb,1\na,2\n").unwrap();
        assert_eq!(load_multiclass_csv(&path, "y", b',').unwrap().classes, vec!["a", "b"]);
    }

    #[test]
    fn write_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.tsv");
        let mut d = synthetic(5, 4, 6, 1);
        d.x[(0, 0)] = 1.0 / 3.0;
        d.x[(1, 1)] = -1e-300;
        d.x[(2, 2)] = 123456789.123456789;
        write_csv(&d, &path, "y", b'\t').unwrap();
        let back = load_csv(&path, "y", b'\t').unwrap();
        assert_eq!(back.labels, d.labels);
        for (a, b) in back.x.iter().zip(d.x.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.feature_names.unwrap(), d.names());
    }

    #[test]
    fn variance_filter_cases() {
        let d = synthetic(10, 10, 5, 2);
        assert_eq!(variance_quantile_filter(&d, 0.0).unwrap().1, vec![0, 1, 2, 3, 4]);

        // columns scaled so that the variances are 1..6 times a common value
        let mut d = synthetic(20, 20, 6, 3);
        let base = column_variances(&d.x);
        let order = [3usize, 0, 5, 1, 4, 2];
        for (j, rank) in order.iter().enumerate() {
            let scale = ((*rank as f64 + 1.0) / base[j]).sqrt();
            d.x.column_mut(j).scale_mut(scale);
        }
        let (_, kept) = variance_quantile_filter(&d, 1.0 / 6.0).unwrap();
        // min variance is column 1 (rank 0), max is column 2 (rank 5)
        assert_eq!(kept, vec![0, 3, 4, 5]);
        assert!(variance_quantile_filter(&d, 0.5).is_err());
    }

    #[test]
    fn variance_filter_matches_sort_oracle() {
        let mut d = synthetic(15, 15, 600, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for j in 0..600 {
            let s: f64 = rng.random_range(0.1..10.0);
            d.x.column_mut(j).scale_mut(s);
        }
        let (filtered, kept) = variance_quantile_filter(&d, 1.0 / 6.0).unwrap();
        let var = column_variances(&d.x);
        let mut sorted: Vec<f64> = var.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank 1/6 quantile of 600 values is the 100th smallest
        let expected = var.iter().filter(|v| **v > sorted[99] && **v < sorted[500]).count();
        assert_eq!(kept.len(), expected);
        assert_eq!(kept.len(), 400);
        assert_eq!(filtered.p(), 400);
    }

    #[test]
    fn t_selection_cases() {
        let mut d = synthetic(20, 20, 30, 6);
        for i in 20..40 {
            d.x[(i, 17)] += 10.0;
        }
        let top = t_test_select(&d, 3).unwrap();
        assert_eq!(top[0], 17);
        let mut all = t_test_select(&d, 30).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        assert!(t_test_select(&d, 31).is_err());

        d.x.column_mut(4).fill(2.0);
        assert_eq!(t_statistics(&d).unwrap()[4], 0.0);
        // ties go to the lower index
        let flat = RealDataset::new(DMatrix::from_element(6, 4, 1.0), vec![0, 0, 0, 1, 1, 1], None).unwrap();
        assert_eq!(t_test_select(&flat, 2).unwrap(), vec![0, 1]);

        let one_class = RealDataset::new(DMatrix::zeros(3, 2), vec![1, 1, 1], None).unwrap();
        assert!(matches!(t_test_select(&one_class, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn t_statistic_oracle() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 5.0, 9.0]);
        let d = RealDataset::new(x, vec![0, 0, 0, 1, 1], None).unwrap();
        // means 2 and 7, variances 1 and 8, pooled (2·1 + 1·8)/3 = 10/3
        let expected = 5.0 / ((10.0_f64 / 3.0).sqrt() * (1.0_f64 / 3.0 + 0.5).sqrt());
        assert!((t_statistics(&d).unwrap()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn split_cases() {
        let d = synthetic(47, 25, 3, 7);
        let (train, val, test, manifest) = stratified_split(&d, SplitCounts::LEUKEMIA, 11).unwrap();
        assert_eq!((train.class_count(0), train.class_count(1)), (29, 15));
        assert_eq!((val.class_count(0), val.class_count(1)), (9, 5));
        assert_eq!((test.class_count(0), test.class_count(1)), (9, 5));
        let mut union: Vec<usize> = manifest
            .train
            .iter()
            .chain(&manifest.val)
            .chain(&manifest.test)
            .copied()
            .collect();
        union.sort_unstable();
        let len = union.len();
        union.dedup();
        assert_eq!(union.len(), len);
        assert_eq!(len, 72);
        assert_eq!(train.x, d.x.select_rows(&manifest.train));

        let (_, _, _, again) = stratified_split(&d, SplitCounts::LEUKEMIA, 11).unwrap();
        assert_eq!(again, manifest);
        let (_, _, _, other) = stratified_split(&d, SplitCounts::LEUKEMIA, 12).unwrap();
        assert_ne!(other, manifest);

        let mut too_many = SplitCounts::LEUKEMIA;
        too_many.test1 = 6;
        match stratified_split(&d, too_many, 1) {
            Err(Error::InsufficientData { class, .. }) => assert_eq!(class, "1"),
            other => panic!("expected insufficient data, got {other:?}"),
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.jsonl");
        manifest.write_jsonl(&path).unwrap();
        assert_eq!(SplitManifest::read_jsonl(&path).unwrap(), manifest);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }
}
