//! Steady-state 1-D heat transfer on thin sticks: analytic ground truth,
//! dataset generation, a spatial-proximity coarsening contrast, and the
//! end-to-end demo experiment.
//!
//! Each stick has one end held at a fixed temperature and a fixed heat flux
//! at the other, giving a linear steady profile with unit conductivity. The
//! test layout places two sticks head to tail with a tiny gap so no heat
//! crosses between them; topology-based coarsening keeps the sticks
//! separate at every level while proximity-based coarsening bridges the gap
//! and lets information leak across.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bistride::{
    build_hierarchy, Hierarchy, Level, Parity, PoolingPlan, Seeding,
};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, Adjacency};
use crate::mesh::Trajectory;
use crate::model::{BsmsParams, ModelConfig, Transition};
use crate::train::{
    eval_metrics, fit_normalizer, rollout, train_step, training_pairs, Adam, Normalizer, TrainPair,
};
use crate::transition::contribution_table;

pub const NODE_INTERIOR: u8 = 0;
pub const NODE_FIXED_TEMP: u8 = 1;
pub const NODE_FLUX: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Fixed-temperature end at the low-coordinate end.
    LeftFixed,
    /// Fixed-temperature end at the high-coordinate end.
    RightFixed,
}

/// Geometry and boundary conditions for one stick, plus the test-layout gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickConfig {
    pub nodes: usize,
    pub length: f64,
    /// Temperature of the fixed end.
    pub t0: f64,
    /// Heat flux at the free end, in temperature per length at unit
    /// conductivity.
    pub q: f64,
    pub orientation: Orientation,
    /// Space between sticks in the head-to-tail test layout.
    pub gap: f64,
}

impl StickConfig {
    pub fn spacing(&self) -> f64 {
        self.length / (self.nodes - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::invalid("stick needs at least 2 nodes"));
        }
        if !(self.length > 0.0) {
            return Err(Error::invalid("stick length must be positive"));
        }
        if !(self.gap > 0.0) || self.gap >= self.spacing() {
            return Err(Error::invalid(
                "gap must be positive and smaller than the element spacing",
            ));
        }
        Ok(())
    }
}

impl Default for StickConfig {
    fn default() -> StickConfig {
        StickConfig {
            nodes: 17,
            length: 1.0,
            t0: 0.0,
            q: 1.0,
            orientation: Orientation::LeftFixed,
            gap: 0.3 / 16.0,
        }
    }
}

/// Per-node steady temperatures: T(x) = T0 + q*x measured from the fixed
/// end, at unit conductivity.
pub fn analytic_steady_state(cfg: &StickConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let h = cfg.spacing();
    Ok((0..cfg.nodes)
        .map(|i| {
            let from_fixed = match cfg.orientation {
                Orientation::LeftFixed => i as f64 * h,
                Orientation::RightFixed => (cfg.nodes - 1 - i) as f64 * h,
            };
            cfg.t0 + cfg.q * from_fixed
        })
        .collect())
}

/// One benchmark sample: geometry, per-node boundary roles, and a
/// two-frame trajectory (initial state, steady state).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSample {
    pub positions: Matrix,
    pub edges: Vec<(usize, usize)>,
    pub node_type: Vec<u8>,
    pub trajectory: Trajectory,
    /// Stick index of each node in multi-stick layouts.
    pub stick_of: Vec<usize>,
}

impl HeatSample {
    pub fn adjacency(&self) -> Result<Adjacency> {
        build_adjacency(self.positions.rows, &self.edges)
    }
}

fn stick_sample(cfg: &StickConfig, x_offset: f64, stick_id: usize) -> Result<HeatSample> {
    cfg.validate()?;
    let n = cfg.nodes;
    let h = cfg.spacing();
    let positions =
        Matrix::from_rows(&(0..n).map(|i| vec![x_offset + i as f64 * h]).collect::<Vec<_>>())?;
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let (fixed, flux) = match cfg.orientation {
        Orientation::LeftFixed => (0, n - 1),
        Orientation::RightFixed => (n - 1, 0),
    };
    let mut node_type = vec![NODE_INTERIOR; n];
    node_type[fixed] = NODE_FIXED_TEMP;
    node_type[flux] = NODE_FLUX;
    let mut bc = vec![0.0; n];
    bc[fixed] = cfg.t0;
    bc[flux] = cfg.q;
    let steady = analytic_steady_state(cfg)?;
    let column = |v: &[f64]| Matrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>());
    let mut fields = BTreeMap::new();
    fields.insert("bc".to_string(), vec![column(&bc)?, column(&bc)?]);
    fields.insert("temp".to_string(), vec![Matrix::zeros(n, 1), column(&steady)?]);
    Ok(HeatSample {
        positions,
        edges,
        node_type,
        trajectory: Trajectory { dt: 1.0, fields },
        stick_of: vec![stick_id; n],
    })
}

fn concat_sticks(a: &HeatSample, b: &HeatSample) -> Result<HeatSample> {
    let na = a.positions.rows;
    let nb = b.positions.rows;
    let mut rows: Vec<Vec<f64>> = (0..na).map(|i| a.positions.row(i).to_vec()).collect();
    rows.extend((0..nb).map(|i| b.positions.row(i).to_vec()));
    let mut edges = a.edges.clone();
    edges.extend(b.edges.iter().map(|&(u, v)| (u + na, v + na)));
    let mut node_type = a.node_type.clone();
    node_type.extend(&b.node_type);
    let mut stick_of = a.stick_of.clone();
    stick_of.extend(b.stick_of.iter().map(|&s| s + 1));
    let mut fields = BTreeMap::new();
    for (name, fa) in &a.trajectory.fields {
        let fb = &b.trajectory.fields[name];
        let frames = fa
            .iter()
            .zip(fb)
            .map(|(ma, mb)| {
                let mut rows: Vec<Vec<f64>> = (0..na).map(|i| ma.row(i).to_vec()).collect();
                rows.extend((0..nb).map(|i| mb.row(i).to_vec()));
                Matrix::from_rows(&rows)
            })
            .collect::<Result<Vec<_>>>()?;
        fields.insert(name.clone(), frames);
    }
    Ok(HeatSample {
        positions: Matrix::from_rows(&rows)?,
        edges,
        node_type,
        trajectory: Trajectory { dt: 1.0, fields },
        stick_of,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// The two training sticks: the configured stick and its mirror image
/// (fixed end on the opposite side), on identical geometry.
pub fn train_sticks(cfg: &StickConfig) -> (StickConfig, StickConfig) {
    let mirrored = StickConfig {
        orientation: match cfg.orientation {
            Orientation::LeftFixed => Orientation::RightFixed,
            Orientation::RightFixed => Orientation::LeftFixed,
        },
        ..*cfg
    };
    (*cfg, mirrored)
}

/// Train: the two mirrored single sticks. Test: the four head-to-tail
/// pairings of those sticks, separated by the configured gap. Two pairings
/// are mirror-symmetric about the gap and two are not.
pub fn gen_heat1d(split: Split, cfg: &StickConfig) -> Result<Vec<HeatSample>> {
    cfg.validate()?;
    let (a, b) = train_sticks(cfg);
    match split {
        Split::Train => Ok(vec![stick_sample(&a, 0.0, 0)?, stick_sample(&b, 0.0, 0)?]),
        Split::Test => {
            let offset = cfg.length + cfg.gap;
            let pairings = [(a, a), (b, b), (a, b), (b, a)];
            pairings
                .iter()
                .map(|(left, right)| {
                    concat_sticks(
                        &stick_sample(left, 0.0, 0)?,
                        &stick_sample(right, offset, 0)?,
                    )
                })
                .collect()
        }
    }
}

/// Whether a two-stick pairing has mirror-symmetric steady profiles about
/// the gap (pairing index into the `gen_heat1d(Test, _)` order).
pub fn test_pairing_is_symmetric(index: usize) -> bool {
    // Order: (a,a), (b,b), (a,b), (b,a); the mixed pairings mirror.
    index >= 2
}

/// All node pairs within Euclidean distance r, minus excluded edges and
/// self-pairs.
pub fn proximity_edges(positions: &Matrix, r: f64, exclude: &Adjacency) -> Result<Adjacency> {
    if !(r > 0.0) {
        return Err(Error::invalid("proximity radius must be positive"));
    }
    let n = positions.rows;
    if exclude.n() != n {
        return Err(Error::dim(format!(
            "exclusion graph has {} nodes, positions {n}",
            exclude.n()
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = positions
                .row(i)
                .iter()
                .zip(positions.row(j))
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            if d2 <= r * r && !exclude.has_edge(i, j) {
                edges.push((i, j));
            }
        }
    }
    build_adjacency(n, &edges)
}

/// Spatial-proximity coarsening contrast: pooled nodes are the distinct
/// nearest neighbors of a uniform coordinate grid (half as many points as
/// nodes), and coarse edges connect pooled nodes within 1.5 grid spacings.
/// Uses the first coordinate only; the benchmark geometry is 1-D.
pub fn build_proximity_hierarchy(
    graph: &Adjacency,
    positions: &Matrix,
    depth: usize,
) -> Result<Hierarchy> {
    if depth < 1 {
        return Err(Error::invalid("hierarchy depth must be >= 1"));
    }
    if positions.rows != graph.n() {
        return Err(Error::dim(format!(
            "positions rows {} != node count {}",
            positions.rows,
            graph.n()
        )));
    }
    let mut levels: Vec<Level> = Vec::with_capacity(depth);
    let mut adj = graph.clone();
    let mut level_positions = positions.clone();
    let mut weights = vec![1.0; graph.n()];
    for _ in 0..depth - 1 {
        let n = adj.n();
        let xs: Vec<f64> = (0..n).map(|i| level_positions.get(i, 0)).collect();
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let m = n.div_ceil(2).max(1);
        let spacing = if m > 1 { (hi - lo) / (m - 1) as f64 } else { (hi - lo).max(1.0) };
        let mut pooled: Vec<usize> = (0..m)
            .map(|g| {
                let target = lo + g as f64 * spacing;
                (0..n)
                    .min_by(|&a, &b| {
                        let da = (xs[a] - target).abs();
                        let db = (xs[b] - target).abs();
                        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                    })
                    .unwrap()
            })
            .collect();
        pooled.sort_unstable();
        pooled.dedup();
        let plan = PoolingPlan {
            seeds: Vec::new(),
            pooled,
            parity: Parity::Even,
        };
        let (table, next_weights) = contribution_table(&adj, &plan, &weights)?;
        let next_positions = Matrix::from_rows(
            &plan
                .pooled
                .iter()
                .map(|&i| level_positions.row(i).to_vec())
                .collect::<Vec<_>>(),
        )?;
        let none = build_adjacency(plan.pooled.len(), &[])?;
        let next_adj = proximity_edges(&next_positions, 1.5 * spacing, &none)?;
        levels.push(Level {
            adj,
            contact: None,
            positions: level_positions,
            weights,
            plan: Some(plan),
            table: Some(table),
        });
        adj = next_adj;
        level_positions = next_positions;
        weights = next_weights;
    }
    levels.push(Level {
        adj,
        contact: None,
        positions: level_positions,
        weights,
        plan: None,
        table: None,
    });
    Ok(Hierarchy { levels })
}

/// Edges per level whose endpoints map back to different finest-level
/// clusters.
pub fn cross_cluster_edges(hier: &Hierarchy, cluster_of: &[usize]) -> Vec<usize> {
    (0..hier.depth())
        .map(|l| {
            let idx = hier.finest_indices(l);
            hier.levels[l]
                .adj
                .edge_list()
                .iter()
                .filter(|&&(u, v)| cluster_of[idx[u]] != cluster_of[idx[v]])
                .count()
        })
        .collect()
}

/// Experiment settings for the end-to-end demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub stick: StickConfig,
    pub depth: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> DemoConfig {
        DemoConfig {
            stick: StickConfig::default(),
            depth: 3,
            latent_dim: 16,
            hidden_dim: 64,
            epochs: 400,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

pub fn demo_model_config(demo: &DemoConfig) -> ModelConfig {
    ModelConfig {
        latent_dim: demo.latent_dim,
        hidden_dim: demo.hidden_dim,
        depth: demo.depth,
        edge_sets: 1,
        position_dim: 1,
        offset_norm: true,
        num_node_types: 3,
        input_fields: vec!["bc".into()],
        input_components: vec![1],
        output_fields: vec!["temp".into()],
        output_components: vec![1],
        transition: Transition::Weighted,
        skip_connections: true,
    }
}

/// Per-variant results on one test pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub symmetric: bool,
    pub rmse_all_nodes: f64,
    /// Mean absolute error at the four gap-adjacent nodes, as a fraction of
    /// the temperature range.
    pub boundary_error: f64,
    pub cross_cluster_edges_per_level: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub train_rmse: f64,
    pub pairings: Vec<PairingReport>,
}

/// Full demo output: both coarsening variants on the same data, model
/// architecture, and training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub temperature_range: f64,
    pub bistride: VariantReport,
    pub proximity: VariantReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coarsening {
    Bistride,
    Proximity,
}

fn hierarchy_for(
    variant: Coarsening,
    adj: &Adjacency,
    positions: &Matrix,
    depth: usize,
) -> Result<Hierarchy> {
    match variant {
        Coarsening::Bistride => {
            build_hierarchy(adj, positions, None, depth, Seeding::MinAve, Parity::Even)
        }
        Coarsening::Proximity => build_proximity_hierarchy(adj, positions, depth),
    }
}

fn sample_pairs(sample: &HeatSample, cfg: &ModelConfig) -> Result<Vec<TrainPair>> {
    training_pairs(&[&sample.trajectory], cfg)
}

fn train_variant(
    variant: Coarsening,
    train: &[HeatSample],
    demo: &DemoConfig,
    cfg: &ModelConfig,
    norm: &Normalizer,
) -> Result<(BsmsParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(demo.seed);
    let mut params = BsmsParams::init(cfg, &mut rng)?;
    let prepared: Vec<(Hierarchy, &HeatSample, Vec<TrainPair>)> = train
        .iter()
        .map(|s| {
            let hier = hierarchy_for(variant, &s.adjacency()?, &s.positions, demo.depth)?;
            let pairs = sample_pairs(s, cfg)?;
            Ok((hier, s, pairs))
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = demo.epochs * prepared.len();
    let mut opt = Adam::new(params.flatten().len(), demo.learning_rate, steps);
    for _ in 0..demo.epochs {
        for (hier, s, pairs) in &prepared {
            let refs: Vec<&TrainPair> = pairs.iter().collect();
            train_step(&mut params, &mut opt, hier, &s.node_type, &refs, cfg, norm)?;
        }
    }
    // Training error: one-shot prediction RMSE over all training nodes.
    let mut sq = 0.0;
    let mut count = 0usize;
    for (hier, s, _) in &prepared {
        let pred = rollout(&params, hier, &s.node_type, &s.trajectory, cfg, norm)?;
        let m = eval_metrics(&pred, &s.trajectory, &cfg.output_fields)?;
        let n = s.positions.rows;
        sq += m.rmse_all * m.rmse_all * n as f64;
        count += n;
    }
    Ok((params, (sq / count as f64).sqrt()))
}

fn eval_variant(
    variant: Coarsening,
    params: &BsmsParams,
    test: &[HeatSample],
    demo: &DemoConfig,
    cfg: &ModelConfig,
    norm: &Normalizer,
    range: f64,
) -> Result<Vec<PairingReport>> {
    let mut out = Vec::new();
    for (idx, s) in test.iter().enumerate() {
        let adj = s.adjacency()?;
        let hier = hierarchy_for(variant, &adj, &s.positions, demo.depth)?;
        let cross = cross_cluster_edges(&hier, &s.stick_of);
        let pred = rollout(params, &hier, &s.node_type, &s.trajectory, cfg, norm)?;
        let metrics = eval_metrics(&pred, &s.trajectory, &cfg.output_fields)?;
        let n_left = s.stick_of.iter().filter(|&&c| c == 0).count();
        let boundary = [n_left - 2, n_left - 1, n_left, n_left + 1];
        let final_pred = pred["temp"].last().expect("rollout frame");
        let final_truth = s.trajectory.fields["temp"].last().expect("truth frame");
        let boundary_error = boundary
            .iter()
            .map(|&i| (final_pred.get(i, 0) - final_truth.get(i, 0)).abs())
            .sum::<f64>()
            / (boundary.len() as f64 * range);
        out.push(PairingReport {
            symmetric: test_pairing_is_symmetric(idx),
            rmse_all_nodes: metrics.rmse_all,
            boundary_error,
            cross_cluster_edges_per_level: cross,
        });
    }
    Ok(out)
}

/// Train and evaluate both coarsening variants on the sticks benchmark.
pub fn run_demo(demo: &DemoConfig) -> Result<DemoReport> {
    let cfg = demo_model_config(demo);
    cfg.validate()?;
    let train = gen_heat1d(Split::Train, &demo.stick)?;
    let test = gen_heat1d(Split::Test, &demo.stick)?;
    let trajs: Vec<&Trajectory> = train.iter().map(|s| &s.trajectory).collect();
    let norm = fit_normalizer(&trajs, &cfg)?;
    let mut range = f64::NEG_INFINITY;
    let mut range_lo = f64::INFINITY;
    for s in &train {
        for frame in &s.trajectory.fields["temp"] {
            for &v in &frame.data {
                range = range.max(v);
                range_lo = range_lo.min(v);
            }
        }
    }
    let range = (range - range_lo).max(1e-12);
    let variant_report = |variant| -> Result<VariantReport> {
        let (params, train_rmse) = train_variant(variant, &train, demo, &cfg, &norm)?;
        let pairings = eval_variant(variant, &params, &test, demo, &cfg, &norm, range)?;
        Ok(VariantReport { train_rmse, pairings })
    };
    Ok(DemoReport {
        config: demo.clone(),
        temperature_range: range,
        bistride: variant_report(Coarsening::Bistride)?,
        proximity: variant_report(Coarsening::Proximity)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bistride::determine_clusters;

    #[test]
    fn steady_state_two_nodes() {
        let cfg = StickConfig {
            nodes: 2,
            gap: 0.3,
            ..StickConfig::default()
        };
        assert_eq!(analytic_steady_state(&cfg).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn steady_state_zero_flux_is_constant() {
        let cfg = StickConfig {
            q: 0.0,
            t0: 2.5,
            ..StickConfig::default()
        };
        assert!(analytic_steady_state(&cfg)
            .unwrap()
            .iter()
            .all(|&t| t == 2.5));
    }

    #[test]
    fn steady_state_mirrors() {
        let cfg = StickConfig::default();
        let (a, b) = train_sticks(&cfg);
        let fa = analytic_steady_state(&a).unwrap();
        let mut fb = analytic_steady_state(&b).unwrap();
        fb.reverse();
        assert_eq!(fa, fb);
    }

    #[test]
    fn steady_state_satisfies_discrete_equation() {
        for s in gen_heat1d(Split::Test, &StickConfig::default()).unwrap() {
            let t = s.trajectory.fields["temp"].last().unwrap();
            let adj = s.adjacency().unwrap();
            for i in 0..adj.n() {
                let nb = adj.neighbors(i);
                if nb.len() == 2 {
                    let avg = (t.get(nb[0], 0) + t.get(nb[1], 0)) / 2.0;
                    assert!((t.get(i, 0) - avg).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn train_split_has_two_mirrored_samples() {
        let train = gen_heat1d(Split::Train, &StickConfig::default()).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].positions, train[1].positions);
        let ta = train[0].trajectory.fields["temp"][1].clone();
        let tb = train[1].trajectory.fields["temp"][1].clone();
        let rev: Vec<f64> = tb.data.iter().rev().copied().collect();
        assert_eq!(ta.data, rev);
    }

    #[test]
    fn test_split_has_two_clusters_and_no_gap_edge() {
        for s in gen_heat1d(Split::Test, &StickConfig::default()).unwrap() {
            let adj = s.adjacency().unwrap();
            let clusters = determine_clusters(&adj);
            assert_eq!(clusters.len(), 2);
            let n_left = clusters[0].len();
            assert!(!adj.has_edge(n_left - 1, n_left));
        }
    }

    #[test]
    fn proximity_pair_within_radius() {
        let pos = Matrix::from_rows(&[vec![0.0], vec![0.5]]).unwrap();
        let none = build_adjacency(2, &[]).unwrap();
        let adj = proximity_edges(&pos, 1.0, &none).unwrap();
        assert_eq!(adj.edge_list(), vec![(0, 1)]);
    }

    #[test]
    fn proximity_radius_below_min_distance_is_empty() {
        let pos = Matrix::from_rows(&[vec![0.0], vec![0.5]]).unwrap();
        let none = build_adjacency(2, &[]).unwrap();
        assert_eq!(proximity_edges(&pos, 0.4, &none).unwrap().nnz(), 0);
    }

    #[test]
    fn proximity_excludes_mesh_edges() {
        let pos = Matrix::from_rows(&[vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let mesh = build_adjacency(3, &[(0, 1), (1, 2)]).unwrap();
        let adj = proximity_edges(&pos, 1.0, &mesh).unwrap();
        assert_eq!(adj.edge_list(), vec![(0, 2)]);
    }

    #[test]
    fn fine_proximity_bridges_gap_with_exactly_one_pair() {
        // Radius above the gap but below the element spacing: the only
        // non-mesh pair within reach is the gap-adjacent pair.
        let cfg = StickConfig::default();
        let s = &gen_heat1d(Split::Test, &cfg).unwrap()[0];
        let mesh = s.adjacency().unwrap();
        let r = 0.5 * cfg.spacing();
        let extra = proximity_edges(&s.positions, r, &mesh).unwrap();
        let n_left = cfg.nodes;
        assert_eq!(extra.edge_list(), vec![(n_left - 1, n_left)]);
    }

    #[test]
    fn bistride_test_hierarchy_never_crosses_the_gap() {
        let cfg = StickConfig::default();
        for s in gen_heat1d(Split::Test, &cfg).unwrap() {
            let adj = s.adjacency().unwrap();
            let hier =
                build_hierarchy(&adj, &s.positions, None, 3, Seeding::MinAve, Parity::Even)
                    .unwrap();
            let cross = cross_cluster_edges(&hier, &s.stick_of);
            assert!(cross.iter().all(|&c| c == 0), "cross edges {cross:?}");
        }
    }

    #[test]
    fn proximity_test_hierarchy_crosses_the_gap() {
        let cfg = StickConfig::default();
        for s in gen_heat1d(Split::Test, &cfg).unwrap() {
            let adj = s.adjacency().unwrap();
            let hier = build_proximity_hierarchy(&adj, &s.positions, 3).unwrap();
            let cross = cross_cluster_edges(&hier, &s.stick_of);
            assert!(
                cross.iter().skip(1).sum::<usize>() >= 1,
                "no spurious coarse edge: {cross:?}"
            );
        }
    }

    #[test]
    fn proximity_hierarchy_roughly_halves() {
        let cfg = StickConfig::default();
        let s = &gen_heat1d(Split::Train, &cfg).unwrap()[0];
        let hier = build_proximity_hierarchy(&s.adjacency().unwrap(), &s.positions, 3).unwrap();
        let sizes: Vec<usize> = hier.levels.iter().map(|l| l.adj.n()).collect();
        assert_eq!(sizes[0], 17);
        assert!(sizes[1] <= 9 && sizes[1] >= 7, "sizes {sizes:?}");
        assert!(sizes[2] < sizes[1]);
    }

    #[test]
    fn invalid_gap_is_rejected() {
        let cfg = StickConfig {
            gap: 1.0,
            ..StickConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = StickConfig {
            gap: 0.0,
            ..StickConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
