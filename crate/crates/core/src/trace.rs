//! Per-iteration records of greedy and utility-based selection runs.

use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

/// Phase a trace record was produced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Candidate-set-relative noise-power bound.
    Local,
    /// Full-network noise-power bound.
    Global,
    /// Utility-based sensor addition.
    Utility,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Local => "local",
            Phase::Global => "global",
            Phase::Utility => "utility",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub s1_size: usize,
    pub s2_size: usize,
    /// Transmission cost of the selected set (normalized units).
    pub cost: f64,
    /// Output noise power of the selected set (linear).
    pub noise_power: f64,
    /// Work counter for the iteration (scalar solve operations).
    pub solve_ops: u64,
}

/// Ordered per-iteration records of a selection run.
#[derive(Debug, Clone, Default)]
pub struct SelectionTrace {
    pub records: Vec<TraceRecord>,
}

impl SelectionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(
            self.records
                .last()
                .map_or(true, |r| record.iteration > r.iteration),
            "iterations must strictly increase"
        );
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns (iter, phase, s1_size, s2_size, cost, noise_power_db).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,phase,s1_size,s2_size,cost,noise_power_db\n");
        for r in &self.records {
            let db = 10.0 * r.noise_power.log10();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                r.phase.as_str(),
                r.s1_size,
                r.s2_size,
                crate::harness::fmt_float(r.cost),
                crate::harness::fmt_float(db),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
