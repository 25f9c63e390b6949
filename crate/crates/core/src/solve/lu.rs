//! Sparse direct LU factorization with a reusable symbolic analysis.
//!
//! The matrix is factored as `P_pre`-row-permuted, then symmetrically
//! permuted by a minimum-degree elimination order, with pivots taken on the
//! (permuted) diagonal. Callers supply the row pre-permutation that
//! guarantees a structurally nonzero diagonal (nodal analysis pairs each
//! voltage-source branch row with one of its terminal nodes).
//!
//! `analyze` runs once per matrix structure: it computes the ordering and the
//! exact fill pattern of both triangular factors. `factor` then reuses that
//! pattern for every numeric refactorization — the dominant cost of Newton
//! iteration and transient stepping is this routine, so it performs no
//! allocation and no graph traversal, just a left-to-right column sweep.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

/// LU factors of a sparse matrix with cached symbolic structure.
#[derive(Debug, Clone)]
pub(super) struct SparseLu {
    n: usize,
    /// Elimination order: `order[k]` = matrix position eliminated k-th.
    order: Vec<u32>,
    /// Original row stored at each position (the branch-row pairing).
    row_pre: Vec<u32>,
    /// For each input nonzero, grouped by elimination column: the target
    /// elimination row and the index into the caller's value array.
    acol_ptr: Vec<usize>,
    a_elim_row: Vec<u32>,
    a_val_idx: Vec<u32>,
    /// Unit lower factor, by column, rows sorted ascending (diag implicit).
    l_colptr: Vec<usize>,
    l_rows: Vec<u32>,
    l_vals: Vec<f64>,
    /// Strict upper factor, by column, rows sorted ascending.
    u_colptr: Vec<usize>,
    u_rows: Vec<u32>,
    u_vals: Vec<f64>,
    diag: Vec<f64>,
    work: Vec<f64>,
    factored: bool,
}

/// Structural or numeric failure, reported in original matrix coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum LuError {
    /// Column with no structural diagonal entry after row pre-permutation.
    MissingDiagonal { col: usize },
    /// Pivot numerically zero; `row` is the original row, `col` the column.
    ZeroPivot { row: usize, col: usize },
}

impl SparseLu {
    /// Computes the elimination order and fill pattern for a matrix given in
    /// compressed-sparse-column form (pattern only). `row_pre[i]` names the
    /// original row placed at position `i`; it must be a permutation.
    pub fn analyze(
        n: usize,
        col_ptr: &[usize],
        row_idx: &[usize],
        row_pre: &[usize],
    ) -> Result<Self, LuError> {
        assert_eq!(col_ptr.len(), n + 1);
        assert_eq!(row_pre.len(), n);
        let mut pos_of_row = vec![0u32; n];
        for (pos, &orig) in row_pre.iter().enumerate() {
            pos_of_row[orig] = pos as u32;
        }

        // Symmetrized adjacency of the pre-permuted pattern, self-loops
        // excluded; track which columns have a structural diagonal.
        let mut adj: Vec<HashSet<u32>> = vec![HashSet::new(); n];
        let mut has_diag = vec![false; n];
        for col in 0..n {
            for &orig_row in &row_idx[col_ptr[col]..col_ptr[col + 1]] {
                let pos = pos_of_row[orig_row] as usize;
                if pos == col {
                    has_diag[col] = true;
                } else {
                    adj[pos].insert(col as u32);
                    adj[col].insert(pos as u32);
                }
            }
        }
        if let Some(col) = has_diag.iter().position(|&d| !d) {
            return Err(LuError::MissingDiagonal { col });
        }

        // Minimum-degree elimination with explicit fill, lowest index on
        // ties. The neighbor set at elimination time is exactly the column
        // pattern of L (and, by pattern symmetry, the row pattern of U).
        let mut heap: BinaryHeap<Reverse<(usize, u32)>> = (0..n as u32)
            .map(|v| Reverse((adj[v as usize].len(), v)))
            .collect();
        let mut eliminated = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut fill_sets: Vec<Vec<u32>> = Vec::with_capacity(n);
        while let Some(Reverse((deg, v))) = heap.pop() {
            let vu = v as usize;
            if eliminated[vu] || deg != adj[vu].len() {
                continue;
            }
            eliminated[vu] = true;
            order.push(v);
            let mut neighbors: Vec<u32> = adj[vu].drain().collect();
            neighbors.sort_unstable();
            for (i, &a) in neighbors.iter().enumerate() {
                adj[a as usize].remove(&v);
                for &b in &neighbors[i + 1..] {
                    if adj[a as usize].insert(b) {
                        adj[b as usize].insert(a);
                    }
                }
            }
            for &a in &neighbors {
                heap.push(Reverse((adj[a as usize].len(), a)));
            }
            fill_sets.push(neighbors);
        }
        debug_assert_eq!(order.len(), n);
        let mut inv_order = vec![0u32; n];
        for (k, &pos) in order.iter().enumerate() {
            inv_order[pos as usize] = k as u32;
        }

        // Translate fill sets to elimination coordinates: column k of L
        // holds the later-eliminated members; the earlier ones were already
        // captured as k's membership in their sets (pattern symmetry).
        let mut l_cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (k, set) in fill_sets.iter().enumerate() {
            let mut rows: Vec<u32> = set.iter().map(|&p| inv_order[p as usize]).collect();
            rows.sort_unstable();
            debug_assert!(rows.iter().all(|&r| r as usize > k));
            l_cols[k] = rows;
        }
        // U columns: k appears in column j of U iff j is in k's fill set.
        let mut u_cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (k, rows) in l_cols.iter().enumerate() {
            for &j in rows {
                u_cols[j as usize].push(k as u32);
            }
        }

        let mut l_colptr = Vec::with_capacity(n + 1);
        let mut l_rows = Vec::new();
        l_colptr.push(0);
        for col in &l_cols {
            l_rows.extend_from_slice(col);
            l_colptr.push(l_rows.len());
        }
        let mut u_colptr = Vec::with_capacity(n + 1);
        let mut u_rows = Vec::new();
        u_colptr.push(0);
        for col in &u_cols {
            u_rows.extend_from_slice(col);
            u_colptr.push(u_rows.len());
        }

        // Input scatter map, grouped by elimination column.
        let mut acol_ptr = Vec::with_capacity(n + 1);
        let mut a_elim_row = Vec::new();
        let mut a_val_idx = Vec::new();
        acol_ptr.push(0);
        for &pos in &order {
            let col = pos as usize;
            for t in col_ptr[col]..col_ptr[col + 1] {
                a_elim_row.push(inv_order[pos_of_row[row_idx[t]] as usize]);
                a_val_idx.push(t as u32);
            }
            acol_ptr.push(a_elim_row.len());
        }

        let l_nnz = l_rows.len();
        let u_nnz = u_rows.len();
        Ok(Self {
            n,
            order,
            row_pre: row_pre.iter().map(|&r| r as u32).collect(),
            acol_ptr,
            a_elim_row,
            a_val_idx,
            l_colptr,
            l_rows,
            l_vals: vec![0.0; l_nnz],
            u_colptr,
            u_rows,
            u_vals: vec![0.0; u_nnz],
            diag: vec![0.0; n],
            work: vec![0.0; n],
            factored: false,
        })
    }

    /// Numeric factorization of the matrix whose values (in the original
    /// CSC nonzero order given to `analyze`) are `values`.
    pub fn factor(&mut self, values: &[f64]) -> Result<(), LuError> {
        self.factored = false;
        let x = &mut self.work;
        for j in 0..self.n {
            // Scatter column j (elimination coordinates) of the matrix.
            for t in self.acol_ptr[j]..self.acol_ptr[j + 1] {
                x[self.a_elim_row[t] as usize] += values[self.a_val_idx[t] as usize];
            }
            // Apply updates from every column k < j that reaches row j.
            for t in self.u_colptr[j]..self.u_colptr[j + 1] {
                let k = self.u_rows[t] as usize;
                let ukj = x[k];
                self.u_vals[t] = ukj;
                if ukj != 0.0 {
                    for s in self.l_colptr[k]..self.l_colptr[k + 1] {
                        x[self.l_rows[s] as usize] -= self.l_vals[s] * ukj;
                    }
                }
                x[k] = 0.0;
            }
            let pivot = x[j];
            x[j] = 0.0;
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                // Clear remaining scatter entries before reporting.
                for s in self.l_colptr[j]..self.l_colptr[j + 1] {
                    x[self.l_rows[s] as usize] = 0.0;
                }
                return Err(LuError::ZeroPivot {
                    row: self.row_pre[self.order[j] as usize] as usize,
                    col: self.order[j] as usize,
                });
            }
            self.diag[j] = pivot;
            for s in self.l_colptr[j]..self.l_colptr[j + 1] {
                let i = self.l_rows[s] as usize;
                self.l_vals[s] = x[i] / pivot;
                x[i] = 0.0;
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = rhs` using the current factorization.
    pub fn solve(&mut self, rhs: &[f64], x: &mut [f64]) {
        assert!(self.factored, "solve before successful factor");
        assert_eq!(rhs.len(), self.n);
        assert_eq!(x.len(), self.n);
        let w = &mut self.work;
        // Gather the permuted right-hand side: row at position `order[k]`
        // holds original row `row_pre[order[k]]`.
        for k in 0..self.n {
            w[k] = rhs[self.row_pre[self.order[k] as usize] as usize];
        }
        for j in 0..self.n {
            let yj = w[j];
            if yj != 0.0 {
                for s in self.l_colptr[j]..self.l_colptr[j + 1] {
                    w[self.l_rows[s] as usize] -= self.l_vals[s] * yj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let zj = w[j] / self.diag[j];
            w[j] = zj;
            for t in self.u_colptr[j]..self.u_colptr[j + 1] {
                w[self.u_rows[t] as usize] -= self.u_vals[t] * zj;
            }
        }
        // Unknown at elimination index j is original column order[j].
        for j in 0..self.n {
            x[self.order[j] as usize] = w[j];
        }
        // Leave the workspace zeroed for the next factorization.
        for v in w.iter_mut() {
            *v = 0.0;
        }
    }

    /// Nonzero count of both factors (diagnostics).
    pub fn fill_nnz(&self) -> usize {
        self.l_vals.len() + self.u_vals.len() + self.n
    }
}
