//! Task-averaged accuracy with a 95% confidence half-width.

use crate::error::{EvalError, Result};

/// Per-task accuracies plus their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// 1.96 * sample standard deviation / sqrt(task count); zero when all
    /// tasks agree or fewer than two tasks were run.
    pub ci95: f64,
}

impl EvalReport {
    /// Summarizes per-task accuracies in their given (index) order.
    pub fn from_accuracies(accuracies: Vec<f64>) -> Result<EvalReport> {
        if accuracies.is_empty() {
            return Err(EvalError::Config("a report needs at least one task".into()));
        }
        for (i, &a) in accuracies.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(EvalError::Config(format!(
                    "task {i} accuracy {a} outside [0,1]"
                )));
            }
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let ci95 = if accuracies.len() < 2 {
            0.0
        } else {
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * var.sqrt() / n.sqrt()
        };
        Ok(EvalReport { accuracies, mean, ci95 })
    }
}
