//! The cross-entropy task-overfitting score.
//!
//! Each test-shot level yields five accuracies (one per trained model);
//! a softmax turns them into a distribution over the trained models, and
//! the score sums the cross-entropies between every ordered pair of the
//! five distributions. A meta-learner whose models behave alike across
//! shot levels gives near-identical distributions and a score near
//! 20 ln 5; peaked, mismatched distributions push the score far higher.
//!
//! Accuracies enter in percentage points and the default temperature is
//! 1.0 point. Normalizing by the row maximum instead is selectable for
//! comparison; it compresses every row onto a sub-point scale, which
//! flattens the distributions to near-uniform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::matrix::{AccuracyMatrix, SHOT_LEVELS};

/// Softmax temperature for turning accuracies into a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    /// Fixed temperature in percentage points.
    Fixed(f64),
    /// Divide each row by its own maximum before the softmax.
    RowMax,
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::Fixed(1.0)
    }
}

/// A probability vector over the five trained models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDistribution {
    pub d: [f64; 5],
}

/// Softmax of `a / tau`, computed stably; every output is strictly
/// positive and the vector sums to one.
pub fn task_distribution(a: &[f64; 5], temperature: Temperature) -> Result<TaskDistribution> {
    for &v in a {
        if !(0.0..=100.0).contains(&v) {
            return Err(EvalError::Config(format!("accuracy {v} outside [0,100]")));
        }
    }
    let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tau = match temperature {
        Temperature::Fixed(t) => t,
        Temperature::RowMax => max,
    };
    if !(tau > 0.0) {
        return Err(EvalError::Config(format!("temperature must be positive, got {tau}")));
    }
    let mut d = [0.0f64; 5];
    let mut sum = 0.0;
    for (out, &v) in d.iter_mut().zip(a) {
        *out = ((v - max) / tau).exp();
        sum += *out;
    }
    for out in &mut d {
        *out /= sum;
    }
    Ok(TaskDistribution { d })
}

/// `-sum_k p[k] ln q[k]` (natural log). Errors if any `q[k]` is zero
/// while the corresponding `p[k]` is positive — impossible for softmax
/// outputs but reachable with hand-built distributions.
pub fn cross_entropy(p: &TaskDistribution, q: &TaskDistribution) -> Result<f64> {
    let mut total = 0.0;
    for (k, (&pk, &qk)) in p.d.iter().zip(&q.d).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk <= 0.0 {
            return Err(EvalError::Config(format!(
                "cross-entropy undefined: component {k} of the second distribution is {qk}"
            )));
        }
        total -= pk * qk.ln();
    }
    Ok(total)
}

/// Shannon entropy, the self cross-entropy.
pub fn entropy(p: &TaskDistribution) -> f64 {
    cross_entropy(p, p).expect("a distribution is positive wherever it has mass")
}

/// The full score: distributions per test-shot level and the 20 ordered
/// pairwise cross-entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct CetReport {
    pub temperature: Temperature,
    /// One distribution per test-shot level, in `SHOT_LEVELS` order.
    pub d: [TaskDistribution; 5],
    /// `l[i][j]` = cross_entropy(d_i, d_j) for i != j; diagonal zero.
    pub l: [[f64; 5]; 5],
    /// Sum of the 20 off-diagonal entries.
    pub total: f64,
}

/// Scores a complete accuracy matrix.
pub fn cet(matrix: &AccuracyMatrix, temperature: Temperature) -> Result<CetReport> {
    let mut d = [TaskDistribution { d: [0.2; 5] }; 5];
    for (i, &shots) in SHOT_LEVELS.iter().enumerate() {
        d[i] = task_distribution(&matrix.test_vector(shots)?, temperature)?;
    }
    let mut l = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            if i == j {
                continue;
            }
            l[i][j] = cross_entropy(&d[i], &d[j])?;
            total += l[i][j];
        }
    }
    Ok(CetReport { temperature, d, l, total })
}

/// Stable on-disk form of a [`CetReport`].
#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CetJson {
    /// Temperature in points, or the string `"max"` for row-max mode.
    tau: serde_json::Value,
    /// Distributions keyed by test-shot level.
    d: BTreeMap<String, [f64; 5]>,
    /// Ordered-pair cross-entropies keyed `"{i}_{j}"` by shot levels.
    l: BTreeMap<String, f64>,
    #[serde(rename = "L")]
    total: f64,
}

impl CetReport {
    pub fn to_json(&self) -> Result<String> {
        let tau = match self.temperature {
            Temperature::Fixed(t) => serde_json::json!(t),
            Temperature::RowMax => serde_json::json!("max"),
        };
        let mut d = BTreeMap::new();
        for (i, &shots) in SHOT_LEVELS.iter().enumerate() {
            d.insert(shots.to_string(), self.d[i].d);
        }
        let mut l = BTreeMap::new();
        for (i, &si) in SHOT_LEVELS.iter().enumerate() {
            for (j, &sj) in SHOT_LEVELS.iter().enumerate() {
                if i != j {
                    l.insert(format!("{si}_{sj}"), self.l[i][j]);
                }
            }
        }
        Ok(serde_json::to_string_pretty(&CetJson { tau, d, l, total: self.total })?)
    }

    pub fn from_json(text: &str) -> Result<CetReport> {
        let raw: CetJson = serde_json::from_str(text)?;
        let temperature = if raw.tau == serde_json::json!("max") {
            Temperature::RowMax
        } else {
            Temperature::Fixed(
                raw.tau
                    .as_f64()
                    .ok_or_else(|| EvalError::Format("tau must be a number or \"max\"".into()))?,
            )
        };
        let mut d = [TaskDistribution { d: [0.2; 5] }; 5];
        for (i, &shots) in SHOT_LEVELS.iter().enumerate() {
            let v = raw
                .d
                .get(&shots.to_string())
                .ok_or_else(|| EvalError::Format(format!("missing distribution for {shots}")))?;
            d[i] = TaskDistribution { d: *v };
        }
        let mut l = [[0.0f64; 5]; 5];
        for (i, &si) in SHOT_LEVELS.iter().enumerate() {
            for (j, &sj) in SHOT_LEVELS.iter().enumerate() {
                if i != j {
                    l[i][j] = *raw
                        .l
                        .get(&format!("{si}_{sj}"))
                        .ok_or_else(|| EvalError::Format(format!("missing pair {si}_{sj}")))?;
                }
            }
        }
        Ok(CetReport { temperature, d, l, total: raw.total })
    }
}
