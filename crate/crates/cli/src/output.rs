//! CSV and JSON emission. Every CSV has a header, a fixed column order and
//! LF line endings; floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::path::Path;

use bdp_core::analysis::{BoundSpace, TrajectoryRecord};
use bdp_core::bilevel::{ClassCountRow, PruneLog};
use bdp_core::pruning::Criterion;
use serde::{Deserialize, Serialize};

use crate::{io_err, CliError};

pub const TRAJECTORY_HEADER: &str =
    "epoch,train_loss,val_loss,train_acc,val_acc,test_acc,remaining_train,remaining_val,balance_train,balance_val,eig_max";

pub fn trajectory_csv(rows: &[TrajectoryRecord]) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for r in rows {
        let eig = r.eig_max.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.train_acc,
            r.val_acc,
            r.test_acc,
            r.remaining_train,
            r.remaining_val,
            r.balance_train,
            r.balance_val,
            eig
        )
        .unwrap();
    }
    s
}

pub fn class_counts_csv(rows: &[ClassCountRow]) -> String {
    let mut s = String::from("epoch,set,class,count\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.epoch, r.set.name(), r.class, r.count).unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigPoint {
    pub epoch: usize,
    pub eig_max: f64,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub seed: u64,
    pub epochs: usize,
    pub genotype: Vec<String>,
    pub linearact_edges: usize,
    pub final_train_acc: f64,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    /// Test accuracy of the discrete genotype retrained from scratch.
    pub genotype_test_acc: f64,
    pub initial_train: usize,
    pub initial_val: usize,
    pub remaining_train: usize,
    pub remaining_val: usize,
    pub remaining_train_fraction: f64,
    pub remaining_val_fraction: f64,
    pub eig_trajectory: Vec<EigPoint>,
    /// Discretization bound from the last computed eigenvalue.
    pub taylor_bound: Option<f64>,
    pub bound_space: BoundSpace,
    pub prune_log: Vec<PruneLog>,
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub genotype: Vec<String>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// One line of `grid.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub criterion_t: Criterion,
    pub criterion_v: Criterion,
    pub p_t: f64,
    pub p_v: f64,
    pub test_acc: f64,
    pub search_test_acc: f64,
    pub remaining_train_fraction: f64,
    pub remaining_val_fraction: f64,
    pub seed: u64,
}

pub const GRID_HEADER: &str =
    "criterion_t,criterion_v,p_t,p_v,test_acc,search_test_acc,remaining_train_fraction,remaining_val_fraction,seed";

fn crit(c: Criterion) -> &'static str {
    match c {
        Criterion::Low => "low",
        Criterion::High => "high",
    }
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = format!("{GRID_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            crit(r.criterion_t),
            crit(r.criterion_v),
            r.p_t,
            r.p_v,
            r.test_acc,
            r.search_test_acc,
            r.remaining_train_fraction,
            r.remaining_val_fraction,
            r.seed
        )
        .unwrap();
    }
    s
}

/// One line of `split_sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub train_fraction: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub val_acc: f64,
    pub search_test_acc: f64,
    pub test_acc: f64,
    pub seed: u64,
}

pub fn split_csv(rows: &[SplitRow]) -> String {
    let mut s = String::from("train_fraction,train_size,val_size,val_acc,search_test_acc,test_acc,seed\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.train_fraction, r.train_size, r.val_size, r.val_acc, r.search_test_acc, r.test_acc, r.seed
        )
        .unwrap();
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_eig_is_blank() {
        let r = TrajectoryRecord {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
            train_acc: 1.0,
            val_acc: 0.75,
            test_acc: 0.5,
            remaining_train: 10,
            remaining_val: 9,
            balance_train: 1.0,
            balance_val: 0.9,
            eig_max: None,
        };
        let csv = trajectory_csv(&[r]);
        assert_eq!(csv, format!("{TRAJECTORY_HEADER}\n1,0.5,0.25,1,0.75,0.5,10,9,1,0.9,\n"));
    }
}
