//! The cross-shot accuracy matrix: five models, each trained at one
//! support-shot level, each evaluated at every level.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EvalError, Result};
use crate::report::EvalReport;

/// Support-shot levels used for both training and testing.
pub const SHOT_LEVELS: [usize; 5] = [1, 3, 5, 7, 9];

/// Index of a shot level within [`SHOT_LEVELS`].
pub fn shot_index(shots: usize) -> Result<usize> {
    SHOT_LEVELS
        .iter()
        .position(|&s| s == shots)
        .ok_or_else(|| EvalError::Config(format!("{shots} is not one of the shot levels {SHOT_LEVELS:?}")))
}

/// `a[k][j]`: mean accuracy, in percentage points, of the model trained
/// at `SHOT_LEVELS[k]` shots when tested at `SHOT_LEVELS[j]` shots.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    pub a: [[f64; 5]; 5],
}

impl AccuracyMatrix {
    pub fn new(a: [[f64; 5]; 5]) -> Result<AccuracyMatrix> {
        for row in &a {
            for &v in row {
                if !(0.0..=100.0).contains(&v) {
                    return Err(EvalError::Config(format!(
                        "accuracy {v} outside [0,100] percentage points"
                    )));
                }
            }
        }
        Ok(AccuracyMatrix { a })
    }

    /// Accuracy of the `train_shots`-trained model at `test_shots`.
    pub fn entry(&self, train_shots: usize, test_shots: usize) -> Result<f64> {
        Ok(self.a[shot_index(train_shots)?][shot_index(test_shots)?])
    }

    /// The five accuracies at one test-shot level, ordered by training
    /// level — the vectors the task-distribution metric consumes.
    pub fn test_vector(&self, test_shots: usize) -> Result<[f64; 5]> {
        let j = shot_index(test_shots)?;
        Ok([self.a[0][j], self.a[1][j], self.a[2][j], self.a[3][j], self.a[4][j]])
    }

    /// Serializes as CSV: header `train_shots,test_1,...,test_9`, one row
    /// per training level, percentages with two decimals.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["train_shots".to_string()];
        header.extend(SHOT_LEVELS.iter().map(|s| format!("test_{s}")));
        w.write_record(&header).map_err(|e| EvalError::Format(e.to_string()))?;
        for (k, row) in self.a.iter().enumerate() {
            let mut record = vec![SHOT_LEVELS[k].to_string()];
            record.extend(row.iter().map(|v| format!("{v:.2}")));
            w.write_record(&record).map_err(|e| EvalError::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EvalError::Format(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_csv()?;
        let mut f = File::create(path)
            .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        f.write_all(text.as_bytes())
            .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
    }

    pub fn from_csv(text: &str) -> Result<AccuracyMatrix> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| EvalError::Format(e.to_string()))?.clone();
        let mut expected = vec!["train_shots".to_string()];
        expected.extend(SHOT_LEVELS.iter().map(|s| format!("test_{s}")));
        let got: Vec<String> = headers.iter().map(str::to_string).collect();
        if got != expected {
            return Err(EvalError::Format(format!(
                "expected header {expected:?}, got {got:?}"
            )));
        }
        let mut a = [[0.0f64; 5]; 5];
        let mut rows = 0usize;
        for (k, record) in r.records().enumerate() {
            let record = record.map_err(|e| EvalError::Format(e.to_string()))?;
            if k >= 5 {
                return Err(EvalError::Format("more than five data rows".into()));
            }
            let key: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| EvalError::Format(format!("bad train_shots key in row {k}")))?;
            if key != SHOT_LEVELS[k] {
                return Err(EvalError::Format(format!(
                    "row {k} keyed {key}, expected {}",
                    SHOT_LEVELS[k]
                )));
            }
            for j in 0..5 {
                let cell = record
                    .get(j + 1)
                    .ok_or_else(|| EvalError::Format(format!("row {k} missing column {}", j + 1)))?;
                a[k][j] = cell
                    .parse()
                    .map_err(|_| EvalError::Format(format!("row {k}: `{cell}` is not a number")))?;
            }
            rows += 1;
        }
        if rows != 5 {
            return Err(EvalError::Format(format!("expected five data rows, got {rows}")));
        }
        AccuracyMatrix::new(a)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<AccuracyMatrix> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        AccuracyMatrix::from_csv(&text)
    }
}

/// Runs the full 5x5 protocol. `evaluate(train_shots, test_shots)` scores
/// one cell as a fraction; cells are filled in fixed row-major shot order
/// and stored in percentage points.
pub fn cross_test<F>(mut evaluate: F) -> Result<AccuracyMatrix>
where
    F: FnMut(usize, usize) -> Result<EvalReport>,
{
    let mut a = [[0.0f64; 5]; 5];
    for (k, &train) in SHOT_LEVELS.iter().enumerate() {
        for (j, &test) in SHOT_LEVELS.iter().enumerate() {
            let report = evaluate(train, test)?;
            a[k][j] = report.mean * 100.0;
        }
    }
    AccuracyMatrix::new(a)
}
