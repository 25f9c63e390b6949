//! Balanced partitioning of each crossbar stage into horizontal (row) and
//! vertical (column) blocks.
//!
//! Long rows and columns accumulate wire resistance, so a stage mapping
//! `L_j` inputs to `L_{j+1}` outputs can be split into `h × v` partitions
//! whose row/column lines are shorter and rejoin at the neuron inputs.
//! Rows of a stage count the bias line too: row 0 is the bias row, rows
//! `1..=L_j` carry the inputs. Splits are contiguous and balanced: with
//! `total = q·k + r`, the first `r` partitions get `q+1` lines and the rest
//! get `q`, which also places the bias row in the first horizontal partition.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(
        "stage {stage}: {requested} {axis} partitions over {total} lines leaves empty partitions"
    )]
    TooFine {
        stage: usize,
        axis: &'static str,
        requested: usize,
        total: usize,
    },
    #[error("partition lists cover {lists} stages but the topology has {stages}")]
    StageCountMismatch { lists: usize, stages: usize },
}

/// Partition layout of one crossbar stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionGrid {
    /// Number of horizontal (row) partitions.
    pub horizontal: usize,
    /// Number of vertical (column) partitions.
    pub vertical: usize,
    /// Rows owned by each horizontal partition; sums to `L_j + 1` (bias row
    /// included).
    pub row_counts: Vec<usize>,
    /// Columns owned by each vertical partition; sums to `L_{j+1}`.
    pub col_counts: Vec<usize>,
}

impl PartitionGrid {
    /// Total rows including the bias row.
    pub fn rows(&self) -> usize {
        self.row_counts.iter().sum()
    }

    /// Total logical output columns.
    pub fn cols(&self) -> usize {
        self.col_counts.iter().sum()
    }

    /// Contiguous row index range of each horizontal partition
    /// (row 0 = bias).
    pub fn row_ranges(&self) -> Vec<Range<usize>> {
        ranges_of(&self.row_counts)
    }

    /// Contiguous column index range of each vertical partition.
    pub fn col_ranges(&self) -> Vec<Range<usize>> {
        ranges_of(&self.col_counts)
    }
}

/// Partition layout for every stage of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionPlan {
    pub grids: Vec<PartitionGrid>,
}

impl PartitionPlan {
    /// The trivial plan: one partition per stage.
    pub fn unpartitioned(topology: &[usize]) -> Self {
        let ones = vec![1; topology.len().saturating_sub(1)];
        plan_partitions(topology, &ones, &ones).expect("1x1 plan is always valid")
    }
}

fn ranges_of(counts: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    counts
        .iter()
        .map(|&n| {
            let range = start..start + n;
            start += n;
            range
        })
        .collect()
}

/// Split `total` lines over `k` partitions as evenly as possible: the first
/// `total mod k` partitions receive `⌈total/k⌉` lines, the rest `⌊total/k⌋`.
pub fn balanced_split(total: usize, k: usize) -> Vec<usize> {
    debug_assert!(k >= 1);
    let q = total / k;
    let r = total % k;
    (0..k).map(|i| if i < r { q + 1 } else { q }).collect()
}

/// Build the partition layout for every stage from explicit partition counts.
pub fn plan_partitions(
    topology: &[usize],
    horizontal: &[usize],
    vertical: &[usize],
) -> Result<PartitionPlan, PartitionError> {
    let stages = topology.len().saturating_sub(1);
    if horizontal.len() != stages || vertical.len() != stages {
        return Err(PartitionError::StageCountMismatch {
            lists: horizontal.len().max(vertical.len()),
            stages,
        });
    }
    let mut grids = Vec::with_capacity(stages);
    for stage in 0..stages {
        let rows = topology[stage] + 1; // bias row
        let cols = topology[stage + 1];
        let h = horizontal[stage];
        let v = vertical[stage];
        if h == 0 || h > rows {
            return Err(PartitionError::TooFine {
                stage,
                axis: "horizontal",
                requested: h,
                total: rows,
            });
        }
        if v == 0 || v > cols {
            return Err(PartitionError::TooFine {
                stage,
                axis: "vertical",
                requested: v,
                total: cols,
            });
        }
        grids.push(PartitionGrid {
            horizontal: h,
            vertical: v,
            row_counts: balanced_split(rows, h),
            col_counts: balanced_split(cols, v),
        });
    }
    Ok(PartitionPlan { grids })
}

/// Smallest partition counts such that every partition fits within a
/// physical subarray of `max_rows × max_cols` bitcells.
pub fn plan_for_subarray(
    topology: &[usize],
    max_rows: usize,
    max_cols: usize,
) -> (Vec<usize>, Vec<usize>) {
    let stages = topology.len().saturating_sub(1);
    let mut horizontal = Vec::with_capacity(stages);
    let mut vertical = Vec::with_capacity(stages);
    for stage in 0..stages {
        let rows = topology[stage] + 1; // bias row
        let cols = topology[stage + 1];
        horizontal.push(rows.div_ceil(max_rows));
        vertical.push(cols.div_ceil(max_cols));
    }
    (horizontal, vertical)
}
