//! Non-parametric transition between adjacent levels: weighted contribution
//! tables for downsampling/upsampling, plus the None and Graph-Conv ablation
//! modes.
//!
//! The contribution table is column-stochastic: column j records each fine
//! sender's share of pooled receiver j. Downsampling is C^T V, upsampling is
//! C V'. Both are linear, so their adjoints (needed for backprop) are the
//! opposite product.

use crate::bistride::PoolingPlan;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionMode {
    Weighted,
    None,
    GraphConv,
}

/// Sparse real matrix of |V_l| senders x |V_{l+1}| pooled receivers with
/// entries in (0, 1]; every non-empty column sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTable {
    pub rows: usize,
    pub cols: usize,
    /// (sender row, receiver column, share), sorted by (row, col).
    pub triplets: Vec<(usize, usize, f64)>,
    /// Fine-level node index of each receiver column.
    pub receivers: Vec<usize>,
}

/// Build the contribution table and the coarse node weights.
///
/// With T = A + I row-normalized to Â, the per-edge weight is
/// ŵ_ij = w_i Â_ij restricted to pooled columns j; C_ij = ŵ_ij / Σ_i ŵ_ij
/// and w_{l+1,j} = Σ_i ŵ_ij.
pub fn contribution_table(
    adj: &Adjacency,
    plan: &PoolingPlan,
    weights: &[f64],
) -> Result<(ContributionTable, Vec<f64>)> {
    let n = adj.n();
    if weights.len() != n {
        return Err(Error::dim(format!(
            "weights length {} != node count {n}",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("node weights must be positive"));
    }
    let mut triplets = Vec::new();
    let mut coarse_weights = Vec::with_capacity(plan.pooled.len());
    for (col, &receiver) in plan.pooled.iter().enumerate() {
        // Senders of a pooled receiver: its neighbors plus itself, so the
        // column is never empty.
        let mut senders: Vec<usize> = adj.neighbors(receiver).to_vec();
        let insert_at = senders.partition_point(|&s| s < receiver);
        senders.insert(insert_at, receiver);
        let shares: Vec<f64> = senders
            .iter()
            .map(|&i| weights[i] / (adj.degree(i) + 1) as f64)
            .collect();
        let total: f64 = shares.iter().sum();
        assert!(total > 0.0, "pooled receiver with zero sender mass");
        for (&i, &share) in senders.iter().zip(&shares) {
            triplets.push((i, col, share / total));
        }
        coarse_weights.push(total);
    }
    triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok((
        ContributionTable {
            rows: n,
            cols: plan.pooled.len(),
            triplets,
            receivers: plan.pooled.clone(),
        },
        coarse_weights,
    ))
}

impl ContributionTable {
    /// C^T V: rows x d fine features to cols x d coarse features.
    pub fn apply_transpose(&self, v: &Matrix) -> Result<Matrix> {
        if v.rows != self.rows {
            return Err(Error::dim(format!(
                "downsample: {} feature rows vs {} table rows",
                v.rows, self.rows
            )));
        }
        let mut out = Matrix::zeros(self.cols, v.cols);
        for &(i, j, c) in &self.triplets {
            let src = i * v.cols;
            let dst = j * out.cols;
            for k in 0..v.cols {
                out.data[dst + k] += c * v.data[src + k];
            }
        }
        Ok(out)
    }

    /// C V': cols x d coarse features to rows x d fine features.
    pub fn apply(&self, v_coarse: &Matrix) -> Result<Matrix> {
        if v_coarse.rows != self.cols {
            return Err(Error::dim(format!(
                "upsample: {} feature rows vs {} table cols",
                v_coarse.rows, self.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, v_coarse.cols);
        for &(i, j, c) in &self.triplets {
            let src = j * v_coarse.cols;
            let dst = i * out.cols;
            for k in 0..v_coarse.cols {
                out.data[dst + k] += c * v_coarse.data[src + k];
            }
        }
        Ok(out)
    }
}

/// One row-normalized graph convolution with self-loops:
/// out_i = (v_i + sum_{j in N(i)} v_j) / (deg_i + 1).
fn graph_conv(adj: &Adjacency, v: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(v.rows, v.cols);
    for i in 0..v.rows {
        let row = out.row_mut(i);
        row.copy_from_slice(v.row(i));
        for &j in adj.neighbors(i) {
            for (o, &x) in row.iter_mut().zip(v.row(j)) {
                *o += x;
            }
        }
        let scale = 1.0 / (adj.degree(i) + 1) as f64;
        for o in row {
            *o *= scale;
        }
    }
    out
}

/// Adjoint of [`graph_conv`]: out_j = sum_i M_ij v_i with
/// M_ij = T_ij / (deg_i + 1).
fn graph_conv_adjoint(adj: &Adjacency, v: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(v.rows, v.cols);
    for i in 0..v.rows {
        let scale = 1.0 / (adj.degree(i) + 1) as f64;
        for (o, &x) in out.row_mut(i).iter_mut().zip(v.row(i)) {
            *o += scale * x;
        }
        for &j in adj.neighbors(i) {
            let src = i * v.cols;
            let dst = j * v.cols;
            for k in 0..v.cols {
                out.data[dst + k] += scale * v.data[src + k];
            }
        }
    }
    out
}

fn stride_rows(v: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), v.cols);
    for (new, &old) in rows.iter().enumerate() {
        out.row_mut(new).copy_from_slice(v.row(old));
    }
    out
}

fn scatter_rows(v_coarse: &Matrix, rows: &[usize], n_fine: usize) -> Matrix {
    let mut out = Matrix::zeros(n_fine, v_coarse.cols);
    for (coarse, &fine) in rows.iter().enumerate() {
        out.row_mut(fine).copy_from_slice(v_coarse.row(coarse));
    }
    out
}

/// Pool per-node features to the coarser level.
///
/// `adj` is the fine-level adjacency; it is only consulted in GraphConv mode.
pub fn downsample(
    v: &Matrix,
    table: &ContributionTable,
    mode: TransitionMode,
    adj: Option<&Adjacency>,
) -> Result<Matrix> {
    if v.rows != table.rows {
        return Err(Error::dim(format!(
            "downsample: {} feature rows vs {} fine nodes",
            v.rows, table.rows
        )));
    }
    match mode {
        TransitionMode::Weighted => table.apply_transpose(v),
        TransitionMode::None => Ok(stride_rows(v, &table.receivers)),
        TransitionMode::GraphConv => {
            let adj = adj.ok_or_else(|| Error::invalid("graphconv needs the fine adjacency"))?;
            Ok(stride_rows(&graph_conv(adj, v), &table.receivers))
        }
    }
}

/// Return coarse features to the finer level.
pub fn upsample(
    v_coarse: &Matrix,
    table: &ContributionTable,
    mode: TransitionMode,
    adj: Option<&Adjacency>,
) -> Result<Matrix> {
    if v_coarse.rows != table.cols {
        return Err(Error::dim(format!(
            "upsample: {} feature rows vs {} coarse nodes",
            v_coarse.rows, table.cols
        )));
    }
    match mode {
        TransitionMode::Weighted => table.apply(v_coarse),
        TransitionMode::None => Ok(scatter_rows(v_coarse, &table.receivers, table.rows)),
        TransitionMode::GraphConv => {
            let adj = adj.ok_or_else(|| Error::invalid("graphconv needs the fine adjacency"))?;
            Ok(graph_conv(
                adj,
                &scatter_rows(v_coarse, &table.receivers, table.rows),
            ))
        }
    }
}

/// Adjoint of [`downsample`] (coarse cotangent to fine cotangent).
pub fn downsample_adjoint(
    d_coarse: &Matrix,
    table: &ContributionTable,
    mode: TransitionMode,
    adj: Option<&Adjacency>,
) -> Result<Matrix> {
    match mode {
        TransitionMode::Weighted => table.apply(d_coarse),
        TransitionMode::None => Ok(scatter_rows(d_coarse, &table.receivers, table.rows)),
        TransitionMode::GraphConv => {
            let adj = adj.ok_or_else(|| Error::invalid("graphconv needs the fine adjacency"))?;
            Ok(graph_conv_adjoint(
                adj,
                &scatter_rows(d_coarse, &table.receivers, table.rows),
            ))
        }
    }
}

/// Adjoint of [`upsample`] (fine cotangent to coarse cotangent).
pub fn upsample_adjoint(
    d_fine: &Matrix,
    table: &ContributionTable,
    mode: TransitionMode,
    adj: Option<&Adjacency>,
) -> Result<Matrix> {
    match mode {
        TransitionMode::Weighted => table.apply_transpose(d_fine),
        TransitionMode::None => Ok(stride_rows(d_fine, &table.receivers)),
        TransitionMode::GraphConv => {
            let adj = adj.ok_or_else(|| Error::invalid("graphconv needs the fine adjacency"))?;
            Ok(stride_rows(&graph_conv_adjoint(adj, d_fine), &table.receivers))
        }
    }
}
