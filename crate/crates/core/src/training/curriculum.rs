use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Length-curriculum settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumConfig {
    pub enabled: bool,
    /// Maximum sequence length at the start of training.
    pub start_len: usize,
    /// Number of evaluations the improvement is measured over.
    pub window: usize,
    /// Relative improvement below which the metric counts as plateaued.
    pub threshold: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            start_len: 5,
            window: 5,
            threshold: 0.01,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled && (self.start_len == 0 || self.window == 0) {
            return Err(invalid("curriculum start length and window must be positive"));
        }
        if !(self.threshold >= 0.0) {
            return Err(invalid("curriculum threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Current maximum training length and the metric history used to detect a
/// plateau.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub max_len: usize,
    /// Longest sequence in the corpus; `max_len` never exceeds it.
    pub corpus_max: usize,
    pub window: usize,
    pub threshold: f64,
    /// Metric values recorded since the last increment.
    pub history: Vec<f64>,
    /// Number of increments so far.
    pub advances: usize,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig, corpus_max: usize) -> Self {
        Self {
            max_len: if cfg.enabled { cfg.start_len.min(corpus_max) } else { corpus_max },
            corpus_max,
            window: cfg.window.max(1),
            threshold: cfg.threshold,
            history: Vec::new(),
            advances: 0,
        }
    }

    /// True when the metric improved by less than `threshold` (relative)
    /// over the last `window` evaluations.
    pub fn plateaued(&self) -> bool {
        let n = self.history.len();
        if n <= self.window {
            return false;
        }
        let old = self.history[n - 1 - self.window];
        let new = self.history[n - 1];
        let scale = old.abs();
        let rel = if scale > 0.0 { (old - new) / scale } else { 0.0 };
        rel < self.threshold
    }
}

/// Records a lower-is-better metric (in-fill validation loss). On a plateau
/// the maximum length grows by one, clamped to the corpus maximum, and the
/// history restarts.
pub fn curriculum_advance(mut state: CurriculumState, metric: f64) -> CurriculumState {
    state.history.push(metric);
    if state.plateaued() && state.max_len < state.corpus_max {
        state.max_len += 1;
        state.advances += 1;
        state.history.clear();
    }
    state
}
