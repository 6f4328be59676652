//! Bounded history stacks for concurrent-learning estimators.
//!
//! A stack stores row blocks `(Rᵢ, Tᵢ)` of a linear system `Σ W ≈ T` and keeps
//! `λ_min(ΣᵀΣ)` of the stacked regressor up to date. Once the stack is full a
//! candidate only gets in by replacing the entry whose removal maximizes the
//! new `λ_min`, so the informativity metric never decreases between purges.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{check_finite, Error, Result};
use crate::linalg::min_eigenvalue;

/// Relative margin a replacement must beat the current `λ_min` by.
const REPLACEMENT_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StackEntry<T> {
    /// Regressor rows, `r × d`.
    pub rows: DMatrix<f64>,
    /// Target (offset) rows, `r × c`.
    pub targets: DMatrix<f64>,
    pub t: f64,
    /// Snapshot tag of the estimates the entry was built from.
    pub tag: T,
}

#[derive(Clone, Debug)]
pub struct HistoryStack<T> {
    capacity: usize,
    regressor_dim: usize,
    target_dim: usize,
    entries: Vec<StackEntry<T>>,
    normal: DMatrix<f64>,
    rank_metric: f64,
}

impl<T: Clone> HistoryStack<T> {
    pub fn new(capacity: usize, regressor_dim: usize, target_dim: usize) -> Self {
        assert!(capacity > 0, "history stack capacity must be positive");
        Self {
            capacity,
            regressor_dim,
            target_dim,
            entries: Vec::with_capacity(capacity),
            normal: DMatrix::zeros(regressor_dim, regressor_dim),
            rank_metric: 0.0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn regressor_dim(&self) -> usize {
        self.regressor_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> &[StackEntry<T>] {
        &self.entries
    }

    /// Cached `λ_min(ΣᵀΣ)`.
    pub fn rank_metric(&self) -> f64 {
        self.rank_metric
    }

    /// `ΣᵀΣ` of the stacked regressor.
    pub fn normal_matrix(&self) -> &DMatrix<f64> {
        &self.normal
    }

    /// Recomputes `λ_min(ΣᵀΣ)` from the stored rows.
    pub fn recompute_rank_metric(&self) -> f64 {
        let s = self.regressor();
        min_eigenvalue(&s.tr_mul(&s))
    }

    /// Stacked regressor Σ.
    pub fn regressor(&self) -> DMatrix<f64> {
        self.stack_with(|e| &e.rows, self.regressor_dim)
    }

    /// Stacked targets.
    pub fn targets(&self) -> DMatrix<f64> {
        self.stack_with(|e| &e.targets, self.target_dim)
    }

    /// `Σᵀ T` accumulated block by block.
    pub fn cross_product(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.regressor_dim, self.target_dim);
        for e in &self.entries {
            acc += e.rows.tr_mul(&e.targets);
        }
        acc
    }

    fn stack_with<F>(&self, pick: F, cols: usize) -> DMatrix<f64>
    where
        F: Fn(&StackEntry<T>) -> &DMatrix<f64>,
    {
        let total: usize = self.entries.iter().map(|e| pick(e).nrows()).sum();
        let mut out = DMatrix::zeros(total, cols);
        let mut at = 0;
        for e in &self.entries {
            let block = pick(e);
            out.view_mut((at, 0), block.shape()).copy_from(block);
            at += block.nrows();
        }
        out
    }

    fn refresh(&mut self) {
        let mut normal = DMatrix::zeros(self.regressor_dim, self.regressor_dim);
        for e in &self.entries {
            normal += e.rows.tr_mul(&e.rows);
        }
        self.rank_metric = min_eigenvalue(&normal);
        self.normal = normal;
    }

    /// Offers a row block to the stack. Returns whether the stack changed.
    pub fn try_insert(
        &mut self,
        rows: DMatrix<f64>,
        targets: DMatrix<f64>,
        t: f64,
        tag: T,
    ) -> Result<bool> {
        if rows.ncols() != self.regressor_dim
            || targets.ncols() != self.target_dim
            || rows.nrows() != targets.nrows()
            || rows.nrows() == 0
        {
            return Err(Error::Dimension(format!(
                "stack expects r×{} rows with r×{} targets, got {}×{} and {}×{}",
                self.regressor_dim,
                self.target_dim,
                rows.nrows(),
                rows.ncols(),
                targets.nrows(),
                targets.ncols()
            )));
        }
        check_finite("history rows", rows.as_slice())?;
        check_finite("history targets", targets.as_slice())?;
        if let Some(last) = self.entries.last() {
            if t < last.t {
                return Err(Error::InvalidInput(format!(
                    "stack timestamps must be non-decreasing ({t} after {})",
                    last.t
                )));
            }
        }
        // An all-zero block carries no information.
        if rows.iter().all(|&v| v == 0.0) {
            return Ok(false);
        }

        let entry = StackEntry {
            rows,
            targets,
            t,
            tag,
        };
        if !self.is_full() {
            self.entries.push(entry);
            self.refresh();
            return Ok(true);
        }

        let candidate_gram = entry.rows.tr_mul(&entry.rows);
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let trial = &self.normal - e.rows.tr_mul(&e.rows) + &candidate_gram;
            let lambda = min_eigenvalue(&trial);
            if best.is_none_or(|(_, b)| lambda > b) {
                best = Some((i, lambda));
            }
        }
        let (idx, lambda) = best.expect("full stack has entries");
        let slack = REPLACEMENT_MARGIN * self.rank_metric.abs()
            + f64::EPSILON * self.normal.trace().abs();
        if lambda > self.rank_metric + slack {
            self.entries.remove(idx);
            self.entries.push(entry);
            self.refresh();
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn is_full_rank(&self, threshold: f64) -> bool {
        !self.entries.is_empty() && self.rank_metric > threshold
    }

    /// Clears the stack if at least `dwell` seconds passed since `last_purge`.
    pub fn purge(&mut self, t_now: f64, dwell: f64, last_purge: f64) -> bool {
        debug_assert!(dwell > 0.0, "dwell time must be positive");
        if t_now - last_purge >= dwell {
            self.entries.clear();
            self.normal.fill(0.0);
            self.rank_metric = 0.0;
            true
        } else {
            false
        }
    }

    /// One CSV line per stored row: `entry,t,row,regressor...,target...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["entry".to_string(), "t".to_string(), "row".to_string()];
        header.extend((0..self.regressor_dim).map(|j| format!("phi{j}")));
        header.extend((0..self.target_dim).map(|j| format!("target{j}")));
        writeln!(out, "{}", header.join(","))?;
        for (i, e) in self.entries.iter().enumerate() {
            for r in 0..e.rows.nrows() {
                let mut fields = vec![i.to_string(), format!("{:.16e}", e.t), r.to_string()];
                fields.extend(e.rows.row(r).iter().map(|v| format!("{v:.16e}")));
                fields.extend(e.targets.row(r).iter().map(|v| format!("{v:.16e}")));
                writeln!(out, "{}", fields.join(","))?;
            }
        }
        Ok(())
    }
}
