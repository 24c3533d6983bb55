//! CSV emission. One trace schema serves every experiment:
//! `iter, objective, elapsed_s, active_set_size, method, extra` with `extra`
//! a JSON object; summaries are `method, final_nll, accuracy, elapsed_s, meta`.

use smem_core::engine::RunTrace;
use smem_core::synth::Dataset;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: String,
    pub final_nll: f64,
    pub accuracy: Option<f64>,
    pub elapsed_s: f64,
    /// JSON object with method metadata (learning rate, gain, …).
    pub meta: serde_json::Value,
}

/// Fraction of sign-correct predictions at probability threshold 0.5
/// (equivalently, xᵀβ ≥ 0 against y).
pub fn classification_accuracy(data: &Dataset, beta: &[f64]) -> f64 {
    let n = data.n();
    let mut correct = 0usize;
    for i in 0..n {
        let z: f64 = data.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        let pred = z >= 0.0;
        let label = data.y[i] >= 0.5;
        if pred == label {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

fn extra_json(pairs: &[(String, f64)]) -> String {
    // serde_json maps are sorted, so the byte output is deterministic
    let mut map = serde_json::Map::new();
    for (k, v) in pairs {
        map.insert(k.clone(), serde_json::json!(v));
    }
    serde_json::Value::Object(map).to_string()
}

pub fn write_trace(path: &Path, method: &str, trace: &RunTrace) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "objective", "elapsed_s", "active_set_size", "method", "extra"])?;
    for rec in &trace.records {
        w.write_record([
            rec.iter.to_string(),
            rec.objective.to_string(),
            rec.elapsed_s.to_string(),
            rec.active_set_size.to_string(),
            method.to_string(),
            extra_json(&rec.extra),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// As [`write_trace`] but from already-flattened rows (used by the path
/// experiment, where each "iteration" is one penalty value).
pub fn write_rows(
    path: &Path,
    method: &str,
    rows: &[(usize, f64, f64, usize, Vec<(String, f64)>)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "objective", "elapsed_s", "active_set_size", "method", "extra"])?;
    for (iter, objective, elapsed_s, active, extra) in rows {
        w.write_record([
            iter.to_string(),
            objective.to_string(),
            elapsed_s.to_string(),
            active.to_string(),
            method.to_string(),
            extra_json(extra),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "final_nll", "accuracy", "elapsed_s", "meta"])?;
    for row in rows {
        w.write_record([
            row.method.clone(),
            row.final_nll.to_string(),
            row.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            row.elapsed_s.to_string(),
            row.meta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
