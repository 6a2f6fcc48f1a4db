//! Dense neural kernels with exact reverse-mode gradients: ReLU-activated
//! two-hidden-layer MLPs with an optional residual connection and LayerNorm.
//!
//! 64-bit floats throughout, fixed reduction order, ReLU'(0) = 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Weights of one MLP: y = LN(res(x) + W3 relu(W2 relu(W1 x + b1) + b2) + b3).
///
/// The residual path is the identity when input and output widths match and
/// a linear projection otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proj: Option<Matrix>,
    pub use_residual: bool,
    pub use_layernorm: bool,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Cached forward activations used by [`mlp_grad`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Matrix,
    z1: Matrix,
    h1: Matrix,
    z2: Matrix,
    h2: Matrix,
    /// Pre-LayerNorm output (residual already added).
    r: Matrix,
    /// Per-row (inv_std, normalized row) when LayerNorm is enabled.
    ln: Option<(Vec<f64>, Matrix)>,
}

impl MlpParams {
    pub fn in_dim(&self) -> usize {
        self.w1.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w3.cols
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            w1: Matrix::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows, self.w2.cols),
            b2: vec![0.0; self.b2.len()],
            w3: Matrix::zeros(self.w3.rows, self.w3.cols),
            b3: vec![0.0; self.b3.len()],
            proj: self.proj.as_ref().map(|p| Matrix::zeros(p.rows, p.cols)),
            use_residual: self.use_residual,
            use_layernorm: self.use_layernorm,
            gamma: vec![0.0; self.gamma.len()],
            beta: vec![0.0; self.beta.len()],
        }
    }

    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        f(&self.w1.data);
        f(&self.b1);
        f(&self.w2.data);
        f(&self.b2);
        f(&self.w3.data);
        f(&self.b3);
        if let Some(p) = &self.proj {
            f(&p.data);
        }
        f(&self.gamma);
        f(&self.beta);
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(&mut self.w1.data);
        f(&mut self.b1);
        f(&mut self.w2.data);
        f(&mut self.b2);
        f(&mut self.w3.data);
        f(&mut self.b3);
        if let Some(p) = &mut self.proj {
            f(&mut p.data);
        }
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| n += t.len());
        n
    }
}

/// Glorot-uniform initialization, deterministic given the RNG state.
pub fn init_params(
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    use_residual: bool,
    use_layernorm: bool,
    rng: &mut impl Rng,
) -> Result<MlpParams> {
    if in_dim == 0 || hidden == 0 || out_dim == 0 {
        return Err(Error::invalid("mlp dims must be positive"));
    }
    let mut glorot = |rows: usize, cols: usize| {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect();
        Matrix::from_vec(rows, cols, data).expect("sized data")
    };
    let w1 = glorot(in_dim, hidden);
    let w2 = glorot(hidden, hidden);
    let w3 = glorot(hidden, out_dim);
    let proj = if use_residual && in_dim != out_dim {
        Some(glorot(in_dim, out_dim))
    } else {
        None
    };
    Ok(MlpParams {
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; hidden],
        w3,
        b3: vec![0.0; out_dim],
        proj,
        use_residual,
        use_layernorm,
        gamma: if use_layernorm { vec![1.0; out_dim] } else { Vec::new() },
        beta: if use_layernorm { vec![0.0; out_dim] } else { Vec::new() },
    })
}

fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut z = x.matmul(w)?;
    for i in 0..z.rows {
        for (v, &bias) in z.row_mut(i).iter_mut().zip(b) {
            *v += bias;
        }
    }
    Ok(z)
}

fn relu(z: &Matrix) -> Matrix {
    let mut h = z.clone();
    for v in &mut h.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    h
}

/// Batched forward pass returning the output and the activation cache.
pub fn mlp_apply(p: &MlpParams, x: &Matrix) -> Result<(Matrix, MlpCache)> {
    if x.cols != p.in_dim() {
        return Err(Error::dim(format!(
            "mlp input width {} != {}",
            x.cols,
            p.in_dim()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numerical("non-finite mlp input".into()));
    }
    let z1 = affine(x, &p.w1, &p.b1)?;
    let h1 = relu(&z1);
    let z2 = affine(&h1, &p.w2, &p.b2)?;
    let h2 = relu(&z2);
    let mut r = affine(&h2, &p.w3, &p.b3)?;
    if p.use_residual {
        match &p.proj {
            Some(proj) => r.add_assign(&x.matmul(proj)?),
            None => {
                if x.cols != r.cols {
                    return Err(Error::dim(
                        "identity residual requires input dim = output dim",
                    ));
                }
                r.add_assign(x);
            }
        }
    }
    let (y, ln) = if p.use_layernorm {
        let d = r.cols as f64;
        let mut inv_std = Vec::with_capacity(r.rows);
        let mut xhat = Matrix::zeros(r.rows, r.cols);
        let mut y = Matrix::zeros(r.rows, r.cols);
        for i in 0..r.rows {
            let row = r.row(i);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..r.cols {
                let n = (row[j] - mean) * is;
                xhat.set(i, j, n);
                y.set(i, j, p.gamma[j] * n + p.beta[j]);
            }
        }
        (y, Some((inv_std, xhat)))
    } else {
        (r.clone(), None)
    };
    Ok((
        y,
        MlpCache {
            x: x.clone(),
            z1,
            h1,
            z2,
            h2,
            r,
            ln,
        },
    ))
}

fn relu_backward(dz: &mut Matrix, z: &Matrix) {
    for (d, &pre) in dz.data.iter_mut().zip(&z.data) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
}

fn colsum(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (o, &v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

/// Exact reverse-mode gradients for one cached forward pass.
/// Returns (parameter gradients, input gradient).
pub fn mlp_grad(p: &MlpParams, cache: &MlpCache, upstream: &Matrix) -> Result<(MlpParams, Matrix)> {
    if upstream.rows != cache.r.rows || upstream.cols != cache.r.cols {
        return Err(Error::dim("upstream shape differs from cached output"));
    }
    let mut grads = p.zeros_like();
    let dr = match (&cache.ln, p.use_layernorm) {
        (Some((inv_std, xhat)), true) => {
            let d = cache.r.cols as f64;
            let mut dr = Matrix::zeros(cache.r.rows, cache.r.cols);
            for i in 0..cache.r.rows {
                let dy = upstream.row(i);
                let xh = xhat.row(i);
                for j in 0..cache.r.cols {
                    grads.gamma[j] += dy[j] * xh[j];
                    grads.beta[j] += dy[j];
                }
                let dxh: Vec<f64> = (0..cache.r.cols).map(|j| dy[j] * p.gamma[j]).collect();
                let mean_dxh = dxh.iter().sum::<f64>() / d;
                let mean_dxh_xh = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<f64>() / d;
                for j in 0..cache.r.cols {
                    dr.set(i, j, inv_std[i] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh));
                }
            }
            dr
        }
        _ => upstream.clone(),
    };
    grads.w3 = cache.h2.matmul_at_b(&dr)?;
    grads.b3 = colsum(&dr);
    let mut dz2 = dr.matmul_a_bt(&p.w3)?;
    relu_backward(&mut dz2, &cache.z2);
    grads.w2 = cache.h1.matmul_at_b(&dz2)?;
    grads.b2 = colsum(&dz2);
    let mut dz1 = dz2.matmul_a_bt(&p.w2)?;
    relu_backward(&mut dz1, &cache.z1);
    grads.w1 = cache.x.matmul_at_b(&dz1)?;
    grads.b1 = colsum(&dz1);
    let mut dx = dz1.matmul_a_bt(&p.w1)?;
    if p.use_residual {
        match &p.proj {
            Some(proj) => {
                grads.proj = Some(cache.x.matmul_at_b(&dr)?);
                dx.add_assign(&dr.matmul_a_bt(proj)?);
            }
            None => dx.add_assign(&dr),
        }
    }
    Ok((grads, dx))
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite-difference oracle for gradient checks, independent of
    //! the reverse-mode path.

    /// Largest per-component deviation relative to the gradient magnitude.
    /// The denominator is the vector infinity norm, not the component, so
    /// components whose finite difference is pure roundoff (tiny gradient
    /// against a large loss) do not dominate.
    pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let norm = analytic
            .iter()
            .chain(numeric)
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / norm)
            .fold(0.0, f64::max)
    }
}
