//! Best / mean / standard deviation summaries over trial batches.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best: u32,
    pub avg: f64,
    /// Population standard deviation.
    pub std: f64,
    pub trials: usize,
}

impl Summary {
    /// Returns `None` for an empty batch.
    pub fn of(values: &[u32]) -> Option<Summary> {
        let best = *values.iter().min()?;
        let n = values.len() as f64;
        let avg = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = values.iter().map(|&v| (v as f64 - avg).powi(2)).sum::<f64>() / n;
        Some(Summary { best, avg, std: var.sqrt(), trials: values.len() })
    }
}
