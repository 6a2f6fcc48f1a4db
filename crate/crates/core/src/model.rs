//! Encode-process-decode assembly over a hierarchy: per-node encoder, one
//! message-passing block per level visit in a V-shaped traversal with
//! non-parametric transitions, and a per-node decoder.
//!
//! Latent fields descend with one MP per level, cross to the next level via
//! the contribution table, run one MP at the bottom, and ascend with one MP
//! per level, adding skip connections from the pre-pooling latents
//! (2d - 1 MP blocks in total). Forward passes record a trace so the exact
//! reverse-mode gradient can be replayed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bistride::Hierarchy;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::nn::{init_params, mlp_apply, mlp_grad, MlpCache, MlpParams};
use crate::transition::{downsample, downsample_adjoint, upsample, upsample_adjoint, TransitionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    Weighted,
    None,
    GraphConv,
}

impl From<Transition> for TransitionMode {
    fn from(t: Transition) -> TransitionMode {
        match t {
            Transition::Weighted => TransitionMode::Weighted,
            Transition::None => TransitionMode::None,
            Transition::GraphConv => TransitionMode::GraphConv,
        }
    }
}

/// Architecture and field-binding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    /// Number of edge sets: 1 for mesh edges only, 2 to add contact edges.
    pub edge_sets: usize,
    /// Spatial dimension of node positions (offset feature width).
    pub position_dim: usize,
    /// Include |dx| next to the offset components in edge features.
    pub offset_norm: bool,
    pub num_node_types: usize,
    /// Input fields concatenated (after the node-type one-hot) in this order.
    pub input_fields: Vec<String>,
    /// Per-field component counts, same order as `input_fields`.
    pub input_components: Vec<usize>,
    /// Output fields predicted by the decoder, in this order.
    pub output_fields: Vec<String>,
    pub output_components: Vec<usize>,
    pub transition: Transition,
    pub skip_connections: bool,
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.num_node_types + self.input_components.iter().sum::<usize>()
    }

    pub fn output_dim(&self) -> usize {
        self.output_components.iter().sum::<usize>()
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.position_dim + usize::from(self.offset_norm) + 2 * self.latent_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.edge_sets == 0 {
            return Err(Error::invalid("edge_sets must be >= 1"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth must be >= 1"));
        }
        if self.input_fields.len() != self.input_components.len()
            || self.output_fields.len() != self.output_components.len()
        {
            return Err(Error::invalid("field name/component lists differ in length"));
        }
        Ok(())
    }
}

/// One message-passing block: S edge MLPs and one node MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpBlock {
    pub edge: Vec<MlpParams>,
    pub node: MlpParams,
}

/// All model weights. Blocks are ordered down_1..down_{d-1}, bottom,
/// up_{d-1}..up_1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsmsParams {
    pub encoder: MlpParams,
    pub blocks: Vec<MpBlock>,
    pub decoder: MlpParams,
}

impl BsmsParams {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<BsmsParams> {
        cfg.validate()?;
        let encoder = init_params(cfg.input_dim(), cfg.hidden_dim, cfg.latent_dim, true, true, rng)?;
        let mut blocks = Vec::with_capacity(2 * cfg.depth - 1);
        for _ in 0..2 * cfg.depth - 1 {
            let edge = (0..cfg.edge_sets)
                .map(|_| init_params(cfg.edge_feature_dim(), cfg.hidden_dim, cfg.latent_dim, true, true, rng))
                .collect::<Result<Vec<_>>>()?;
            let node = init_params(
                (1 + cfg.edge_sets) * cfg.latent_dim,
                cfg.hidden_dim,
                cfg.latent_dim,
                true,
                true,
                rng,
            )?;
            blocks.push(MpBlock { edge, node });
        }
        // No LayerNorm on the nodal decoder.
        let decoder = init_params(cfg.latent_dim, cfg.hidden_dim, cfg.output_dim(), true, false, rng)?;
        Ok(BsmsParams { encoder, blocks, decoder })
    }

    pub fn zeros_like(&self) -> BsmsParams {
        BsmsParams {
            encoder: self.encoder.zeros_like(),
            blocks: self
                .blocks
                .iter()
                .map(|b| MpBlock {
                    edge: b.edge.iter().map(|e| e.zeros_like()).collect(),
                    node: b.node.zeros_like(),
                })
                .collect(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn for_each_mlp(&self, mut f: impl FnMut(&MlpParams)) {
        f(&self.encoder);
        for b in &self.blocks {
            for e in &b.edge {
                f(e);
            }
            f(&b.node);
        }
        f(&self.decoder);
    }

    pub fn for_each_mlp_mut(&mut self, mut f: impl FnMut(&mut MlpParams)) {
        f(&mut self.encoder);
        for b in &mut self.blocks {
            for e in &mut b.edge {
                f(e);
            }
            f(&mut b.node);
        }
        f(&mut self.decoder);
    }

    /// All tensors concatenated in a fixed order, for the optimizer and
    /// finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_mlp(|m| m.for_each_tensor(|t| out.extend_from_slice(t)));
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.for_each_mlp_mut(|m| {
            m.for_each_tensor_mut(|t| {
                t.copy_from_slice(&flat[offset..offset + t.len()]);
                offset += t.len();
            })
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn accumulate(&mut self, other: &BsmsParams) {
        let flat = other.flatten();
        let mut offset = 0;
        self.for_each_mlp_mut(|m| {
            m.for_each_tensor_mut(|t| {
                for v in t.iter_mut() {
                    *v += flat[offset];
                    offset += 1;
                }
            })
        });
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mlp_mut(|m| m.for_each_tensor_mut(|t| t.iter_mut().for_each(|v| *v *= s)));
    }
}

/// Per-node input sample: node types plus named field matrices (normalized
/// by the caller).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInputs {
    pub node_type: Vec<u8>,
    pub fields: BTreeMap<String, Matrix>,
}

/// Assemble the encoder input rows: node-type one-hot followed by the bound
/// fields in config order.
pub fn assemble_inputs(sample: &NodeInputs, cfg: &ModelConfig) -> Result<Matrix> {
    let n = sample.node_type.len();
    let mut x = Matrix::zeros(n, cfg.input_dim());
    for (i, &t) in sample.node_type.iter().enumerate() {
        let t = t as usize;
        if t >= cfg.num_node_types {
            return Err(Error::invalid(format!(
                "node {i} has type {t} >= {}",
                cfg.num_node_types
            )));
        }
        x.set(i, t, 1.0);
    }
    let mut col = cfg.num_node_types;
    for (name, &comps) in cfg.input_fields.iter().zip(&cfg.input_components) {
        let field = sample
            .fields
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing input field '{name}'")))?;
        if field.rows != n || field.cols != comps {
            return Err(Error::dim(format!(
                "field '{name}' is {}x{}; expected {n}x{comps}",
                field.rows, field.cols
            )));
        }
        for i in 0..n {
            x.row_mut(i)[col..col + comps].copy_from_slice(field.row(i));
        }
        col += comps;
    }
    if !x.is_finite() {
        return Err(Error::Numerical("non-finite encoder input".into()));
    }
    Ok(x)
}

/// Per-node encoder application.
pub fn encode(sample: &NodeInputs, params: &BsmsParams, cfg: &ModelConfig) -> Result<Matrix> {
    let x = assemble_inputs(sample, cfg)?;
    Ok(mlp_apply(&params.encoder, &x)?.0)
}

/// Per-node decoder application (no LayerNorm).
pub fn decode(latent: &Matrix, params: &BsmsParams, cfg: &ModelConfig) -> Result<Matrix> {
    let (out, _) = mlp_apply(&params.decoder, latent)?;
    if out.cols != cfg.output_dim() {
        return Err(Error::dim(format!(
            "decoder width {} != bound output width {}",
            out.cols,
            cfg.output_dim()
        )));
    }
    Ok(out)
}

/// Directed edges of one edge set grouped by receiver, ascending sender
/// order within each receiver.
struct EdgeSet<'a> {
    adj: &'a Adjacency,
}

impl EdgeSet<'_> {
    fn count(&self) -> usize {
        self.adj.nnz()
    }
}

struct MpTrace {
    edge_caches: Vec<MlpCache>,
    node_cache: MlpCache,
    /// Edge counts per set, to rebuild the receiver grouping on backward.
    edge_counts: Vec<usize>,
}

/// One message-passing pass over the given edge sets.
///
/// e^s_ij = f^s(dx_ij, v_i, v_j) per directed edge (receiver i, sender j);
/// v'_i = v_i + f^V(v_i, sum_j e^1_ij, ..., sum_j e^S_ij) with sums over
/// incoming edges in ascending sender order.
fn message_pass(
    block: &MpBlock,
    edge_sets: &[EdgeSet],
    positions: &Matrix,
    latent: &Matrix,
    cfg: &ModelConfig,
) -> Result<(Matrix, MpTrace)> {
    if edge_sets.len() != block.edge.len() {
        return Err(Error::invalid(format!(
            "{} edge sets but {} edge MLPs",
            edge_sets.len(),
            block.edge.len()
        )));
    }
    let n = latent.rows;
    let latent_dim = cfg.latent_dim;
    let off_dim = cfg.position_dim + usize::from(cfg.offset_norm);
    let mut edge_caches = Vec::with_capacity(edge_sets.len());
    let mut node_input = Matrix::zeros(n, (1 + edge_sets.len()) * latent_dim);
    for i in 0..n {
        node_input.row_mut(i)[..latent_dim].copy_from_slice(latent.row(i));
    }
    let mut edge_counts = Vec::with_capacity(edge_sets.len());
    for (s, set) in edge_sets.iter().enumerate() {
        let m = set.count();
        edge_counts.push(m);
        let mut x = Matrix::zeros(m, cfg.edge_feature_dim());
        let mut e = 0;
        for i in 0..n {
            for &j in set.adj.neighbors(i) {
                let row = x.row_mut(e);
                let mut norm2 = 0.0;
                for k in 0..cfg.position_dim {
                    let d = positions.get(i, k) - positions.get(j, k);
                    row[k] = d;
                    norm2 += d * d;
                }
                if cfg.offset_norm {
                    row[cfg.position_dim] = norm2.sqrt();
                }
                row[off_dim..off_dim + latent_dim].copy_from_slice(latent.row(i));
                row[off_dim + latent_dim..].copy_from_slice(latent.row(j));
                e += 1;
            }
        }
        let (flows, cache) = mlp_apply(&block.edge[s], &x)?;
        // Aggregate incoming flows per receiver, fixed ascending order.
        let agg_col = (1 + s) * latent_dim;
        let mut e = 0;
        for i in 0..n {
            let deg = set.adj.degree(i);
            let dst = &mut node_input.row_mut(i)[agg_col..agg_col + latent_dim];
            for _ in 0..deg {
                for (d, &v) in dst.iter_mut().zip(flows.row(e)) {
                    *d += v;
                }
                e += 1;
            }
        }
        edge_caches.push(cache);
    }
    let (update, node_cache) = mlp_apply(&block.node, &node_input)?;
    let mut out = latent.clone();
    out.add_assign(&update);
    Ok((
        out,
        MpTrace {
            edge_caches,
            node_cache,
            edge_counts,
        },
    ))
}

/// Backward through one message pass. Returns gradient w.r.t. the incoming
/// latent; accumulates block parameter gradients into `grads`.
fn message_pass_backward(
    block: &MpBlock,
    grads: &mut MpBlock,
    trace: &MpTrace,
    edge_sets: &[EdgeSet],
    d_out: &Matrix,
    cfg: &ModelConfig,
) -> Result<Matrix> {
    let latent_dim = cfg.latent_dim;
    let off_dim = cfg.position_dim + usize::from(cfg.offset_norm);
    let (node_grads, d_node_input) = mlp_grad(&block.node, &trace.node_cache, d_out)?;
    accumulate_mlp(&mut grads.node, &node_grads);
    let n = d_out.rows;
    // v' = v + f^V(...): passthrough plus the f^V input slot for v_i.
    let mut d_latent = d_out.clone();
    for i in 0..n {
        for (d, &v) in d_latent.row_mut(i).iter_mut().zip(&d_node_input.row(i)[..latent_dim]) {
            *d += v;
        }
    }
    for (s, set) in edge_sets.iter().enumerate() {
        let m = trace.edge_counts[s];
        let agg_col = (1 + s) * latent_dim;
        // Upstream for each edge flow is the receiver's aggregate gradient.
        let mut d_flows = Matrix::zeros(m, latent_dim);
        let mut e = 0;
        for i in 0..n {
            let src = &d_node_input.row(i)[agg_col..agg_col + latent_dim];
            for _ in 0..set.adj.degree(i) {
                d_flows.row_mut(e).copy_from_slice(src);
                e += 1;
            }
        }
        let (edge_grads, d_edge_in) = mlp_grad(&block.edge[s], &trace.edge_caches[s], &d_flows)?;
        accumulate_mlp(&mut grads.edge[s], &edge_grads);
        // Scatter edge-input gradients back to sender/receiver latents.
        let mut e = 0;
        for i in 0..n {
            for &j in set.adj.neighbors(i) {
                let row = d_edge_in.row(e);
                for (d, &v) in d_latent
                    .row_mut(i)
                    .iter_mut()
                    .zip(&row[off_dim..off_dim + latent_dim])
                {
                    *d += v;
                }
                for (d, &v) in d_latent.row_mut(j).iter_mut().zip(&row[off_dim + latent_dim..]) {
                    *d += v;
                }
                e += 1;
            }
        }
    }
    Ok(d_latent)
}

fn accumulate_mlp(into: &mut MlpParams, from: &MlpParams) {
    let mut flat = Vec::new();
    from.for_each_tensor(|t| flat.extend_from_slice(t));
    let mut offset = 0;
    into.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            *v += flat[offset];
            offset += 1;
        }
    });
}

/// Everything recorded during one forward pass.
pub struct ForwardTrace {
    encoder_cache: MlpCache,
    mp_traces: Vec<(usize, MpTrace)>,
    decoder_cache: MlpCache,
    pub mp_blocks_executed: usize,
    pub output: Matrix,
}

fn level_edge_sets<'a>(hier: &'a Hierarchy, level: usize, cfg: &ModelConfig) -> Result<Vec<EdgeSet<'a>>> {
    let lv = &hier.levels[level];
    let mut sets = vec![EdgeSet { adj: &lv.adj }];
    if cfg.edge_sets == 2 {
        match &lv.contact {
            Some(c) => sets.push(EdgeSet { adj: c }),
            None => {
                return Err(Error::invalid(format!(
                    "config binds a contact edge set but level {level} has none"
                )))
            }
        }
    } else if cfg.edge_sets > 2 {
        return Err(Error::invalid("at most 2 edge sets supported"));
    }
    Ok(sets)
}

/// Full V-cycle forward pass over normalized inputs; returns the normalized
/// per-node output and the trace for the backward pass.
pub fn model_forward(
    params: &BsmsParams,
    hier: &Hierarchy,
    sample: &NodeInputs,
    cfg: &ModelConfig,
) -> Result<ForwardTrace> {
    cfg.validate()?;
    let d = cfg.depth;
    if hier.depth() != d {
        return Err(Error::dim(format!(
            "hierarchy depth {} != config depth {d}",
            hier.depth()
        )));
    }
    let x = assemble_inputs(sample, cfg)?;
    let (mut latent, encoder_cache) = mlp_apply(&params.encoder, &x)?;
    let mut mp_traces = Vec::with_capacity(2 * d - 1);
    let mut skip_latents: Vec<Matrix> = Vec::with_capacity(d - 1);
    let mode: TransitionMode = cfg.transition.into();
    // Descent: one MP per level, then pool.
    for l in 0..d - 1 {
        let sets = level_edge_sets(hier, l, cfg)
            .map_err(|e| Error::invalid(format!("level {l} (down): {e}")))?;
        let (next, trace) =
            message_pass(&params.blocks[l], &sets, &hier.levels[l].positions, &latent, cfg)?;
        mp_traces.push((l, trace));
        skip_latents.push(next.clone());
        let table = hier.levels[l].table.as_ref().ok_or_else(|| {
            Error::invalid(format!("level {l} has no transition table"))
        })?;
        latent = downsample(&next, table, mode, Some(&hier.levels[l].adj))?;
    }
    // Bottom pass.
    {
        let l = d - 1;
        let sets = level_edge_sets(hier, l, cfg)
            .map_err(|e| Error::invalid(format!("level {l} (bottom): {e}")))?;
        let (next, trace) =
            message_pass(&params.blocks[l], &sets, &hier.levels[l].positions, &latent, cfg)?;
        mp_traces.push((l, trace));
        latent = next;
    }
    // Ascent: unpool, add skip, one MP per level.
    for l in (0..d - 1).rev() {
        let table = hier.levels[l].table.as_ref().expect("descent visited level");
        let mut fine = upsample(&latent, table, mode, Some(&hier.levels[l].adj))?;
        if cfg.skip_connections {
            fine.add_assign(&skip_latents[l]);
        }
        let block_idx = 2 * d - 2 - l;
        let sets = level_edge_sets(hier, l, cfg)
            .map_err(|e| Error::invalid(format!("level {l} (up): {e}")))?;
        let (next, trace) =
            message_pass(&params.blocks[block_idx], &sets, &hier.levels[l].positions, &fine, cfg)?;
        mp_traces.push((l, trace));
        latent = next;
    }
    let (output, decoder_cache) = mlp_apply(&params.decoder, &latent)?;
    if output.cols != cfg.output_dim() {
        return Err(Error::dim(format!(
            "decoder width {} != bound output width {}",
            output.cols,
            cfg.output_dim()
        )));
    }
    let mp_blocks_executed = mp_traces.len();
    Ok(ForwardTrace {
        encoder_cache,
        mp_traces,
        decoder_cache,
        mp_blocks_executed,
        output,
    })
}

/// Reverse-mode pass mirroring [`model_forward`]. Returns gradients for all
/// parameters given the cotangent of the normalized output.
pub fn model_backward(
    params: &BsmsParams,
    hier: &Hierarchy,
    trace: &ForwardTrace,
    d_output: &Matrix,
    cfg: &ModelConfig,
) -> Result<BsmsParams> {
    let d = cfg.depth;
    let mode: TransitionMode = cfg.transition.into();
    let mut grads = params.zeros_like();
    let (dec_grads, mut d_latent) = mlp_grad(&params.decoder, &trace.decoder_cache, d_output)?;
    accumulate_mlp(&mut grads.decoder, &dec_grads);
    let mut trace_idx = trace.mp_traces.len();
    let mut d_skip: Vec<Option<Matrix>> = vec![None; d.saturating_sub(1)];
    // Ascent blocks, in reverse (levels 0..d-1 ascending order of execution
    // was (d-2)..0, so backward walks 0..d-2).
    for l in 0..d - 1 {
        trace_idx -= 1;
        let (level, mp_trace) = &trace.mp_traces[trace_idx];
        debug_assert_eq!(*level, l);
        let block_idx = 2 * d - 2 - l;
        let sets = level_edge_sets(hier, l, cfg)?;
        let d_fine = message_pass_backward(
            &params.blocks[block_idx],
            &mut grads.blocks[block_idx],
            mp_trace,
            &sets,
            &d_latent,
            cfg,
        )?;
        if cfg.skip_connections {
            d_skip[l] = Some(d_fine.clone());
        }
        let table = hier.levels[l].table.as_ref().expect("built level");
        d_latent = upsample_adjoint(&d_fine, table, mode, Some(&hier.levels[l].adj))?;
    }
    // Bottom block.
    {
        trace_idx -= 1;
        let (level, mp_trace) = &trace.mp_traces[trace_idx];
        let l = d - 1;
        debug_assert_eq!(*level, l);
        let sets = level_edge_sets(hier, l, cfg)?;
        d_latent = message_pass_backward(
            &params.blocks[l],
            &mut grads.blocks[l],
            mp_trace,
            &sets,
            &d_latent,
            cfg,
        )?;
    }
    // Descent blocks, in reverse.
    for l in (0..d - 1).rev() {
        trace_idx -= 1;
        let (level, mp_trace) = &trace.mp_traces[trace_idx];
        debug_assert_eq!(*level, l);
        let table = hier.levels[l].table.as_ref().expect("built level");
        let mut d_next = downsample_adjoint(&d_latent, table, mode, Some(&hier.levels[l].adj))?;
        if let Some(ds) = &d_skip[l] {
            d_next.add_assign(ds);
        }
        let sets = level_edge_sets(hier, l, cfg)?;
        d_latent = message_pass_backward(
            &params.blocks[l],
            &mut grads.blocks[l],
            mp_trace,
            &sets,
            &d_next,
            cfg,
        )?;
    }
    let (enc_grads, _) = mlp_grad(&params.encoder, &trace.encoder_cache, &d_latent)?;
    accumulate_mlp(&mut grads.encoder, &enc_grads);
    Ok(grads)
}
