use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::config::GridConfig;
use crate::error::{Error, Result};
use crate::eval::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub learning_rate: f64,
    pub reg: f64,
}

/// Cartesian product of the configured lists, learning-rate major.
pub fn enumerate_grid(grid: &GridConfig) -> Result<Vec<HyperPoint>> {
    if grid.learning_rates.is_empty() || grid.regs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(grid
        .learning_rates
        .iter()
        .flat_map(|&learning_rate| grid.regs.iter().map(move |&reg| HyperPoint { learning_rate, reg }))
        .collect())
}

/// One trained configuration and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub point: HyperPoint,
    pub seed: u64,
    pub validation: MetricReport,
    /// Filled in for the selected configuration only.
    pub test: Option<MetricReport>,
    pub seconds: f64,
}

impl RunRecord {
    pub fn model_name(&self) -> &str {
        &self.validation.model_name
    }

    pub fn extractor_tag(&self) -> &str {
        &self.validation.extractor_tag
    }
}

/// Position of the record with the highest validation recall.
/// Ties go to the lower reg, then the lower learning rate, then the earlier record.
pub fn select_best_index(records: &[RunRecord]) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut best = 0;
    for (idx, r) in records.iter().enumerate().skip(1) {
        let b = &records[best];
        let better = r
            .validation
            .recall
            .partial_cmp(&b.validation.recall)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.point.reg.partial_cmp(&r.point.reg).unwrap_or(Ordering::Equal))
            .then_with(|| b.point.learning_rate.partial_cmp(&r.point.learning_rate).unwrap_or(Ordering::Equal));
        if better == Ordering::Greater {
            best = idx;
        }
    }
    Ok(best)
}

pub fn select_best(records: &[RunRecord]) -> Result<&RunRecord> {
    Ok(&records[select_best_index(records)?])
}
