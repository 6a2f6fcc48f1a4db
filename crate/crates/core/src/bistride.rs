//! Bi-stride pooling: cluster detection, seeding heuristics, parity-striding
//! on BFS frontiers, and level-wise adjacency/contact enhancement.
//!
//! Pooling every other BFS frontier guarantees that every unpooled node keeps
//! a pooled direct neighbor, so the squared-adjacency enhancement conserves
//! connectivity at the coarser level. The whole build is deterministic: ties
//! break toward the smallest node index everywhere.

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{
    bfs_distances, bfs_distances_counting, bool_product, stride_submatrix, Adjacency,
    UNREACHABLE,
};
use crate::transition::{contribution_table, ContributionTable};

/// Which BFS-frontier parity gets pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn matches(self, dist: u32) -> bool {
        match self {
            Parity::Even => dist % 2 == 0,
            Parity::Odd => dist % 2 == 1,
        }
    }
}

/// Seeding heuristic applied per connected cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeding {
    /// Node with the minimum average geodesic distance to its cluster.
    MinAve,
    /// Node closest to the cluster's coordinate centroid.
    CloseCenter,
}

/// One pooling step: per-cluster seeds and the sorted pooled index set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolingPlan {
    pub seeds: Vec<usize>,
    pub pooled: Vec<usize>,
    pub parity: Parity,
}

/// One level of the multi-scale hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub adj: Adjacency,
    pub contact: Option<Adjacency>,
    pub positions: Matrix,
    pub weights: Vec<f64>,
    /// Pooling into the next level; absent on the coarsest level.
    pub plan: Option<PoolingPlan>,
    /// Contribution table into the next level; absent on the coarsest level.
    pub table: Option<ContributionTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Map the nodes of `level` back to finest-level indices by composing
    /// the pooled index lists.
    pub fn finest_indices(&self, level: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.levels[0].adj.n()).collect();
        for l in 0..level {
            let plan = self.levels[l].plan.as_ref().expect("level below depth");
            idx = plan.pooled.iter().map(|&p| idx[p]).collect();
        }
        idx
    }
}

/// Partition nodes into connected components, each sorted, ordered by
/// smallest member.
pub fn determine_clusters(adj: &Adjacency) -> Vec<Vec<usize>> {
    let n = adj.n();
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters = Vec::new();
    for start in 0..n {
        if cluster_of[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![start];
        cluster_of[start] = id;
        let mut head = 0;
        while head < members.len() {
            let u = members[head];
            head += 1;
            for &v in adj.neighbors(u) {
                if cluster_of[v] == usize::MAX {
                    cluster_of[v] = id;
                    members.push(v);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

/// MinAve seeding: per cluster, the node minimizing the average BFS distance
/// to all cluster members (self-distance 0 included). Ties break to the
/// smallest index. O(n^2) in edges traversed: one BFS per candidate node.
pub fn seed_min_ave(adj: &Adjacency) -> Vec<usize> {
    #[cfg(feature = "parallel")]
    {
        seed_min_ave_par(adj)
    }
    #[cfg(not(feature = "parallel"))]
    {
        seed_min_ave_seq(adj)
    }
}

pub fn seed_min_ave_seq(adj: &Adjacency) -> Vec<usize> {
    seed_min_ave_impl(adj, |cands, f| cands.iter().map(|&c| f(c)).collect())
}

#[cfg(feature = "parallel")]
pub fn seed_min_ave_par(adj: &Adjacency) -> Vec<usize> {
    use rayon::prelude::*;
    seed_min_ave_impl(adj, |cands, f| cands.par_iter().map(|&c| f(c)).collect())
}

fn seed_min_ave_impl<M>(adj: &Adjacency, map_candidates: M) -> Vec<usize>
where
    M: Fn(&[usize], &(dyn Fn(usize) -> u64 + Sync)) -> Vec<u64>,
{
    let mut seeds = Vec::new();
    for cluster in determine_clusters(adj) {
        // Distance sums are exact integers, so the minimum-average argmin
        // reduces to an integer argmin over distance sums.
        let sums = map_candidates(&cluster, &|cand: usize| {
            let (dist, _) = bfs_distances_counting(adj, cand);
            cluster.iter().map(|&m| dist[m] as u64).sum()
        });
        let best = cluster
            .iter()
            .zip(&sums)
            .min_by_key(|&(&node, &sum)| (sum, node))
            .map(|(&node, _)| node)
            .expect("non-empty cluster");
        seeds.push(best);
    }
    seeds
}

/// Sequential MinAve that also reports total BFS edge traversals, for the
/// cost-scaling check.
pub fn seed_min_ave_with_cost(adj: &Adjacency) -> (Vec<usize>, u64) {
    let mut seeds = Vec::new();
    let mut traversed = 0u64;
    for cluster in determine_clusters(adj) {
        let mut best: Option<(u64, usize)> = None;
        for &cand in &cluster {
            let (dist, edges) = bfs_distances_counting(adj, cand);
            traversed += edges;
            let sum: u64 = cluster.iter().map(|&m| dist[m] as u64).sum();
            if best.map_or(true, |(bs, bn)| (sum, cand) < (bs, bn)) {
                best = Some((sum, cand));
            }
        }
        seeds.push(best.unwrap().1);
    }
    (seeds, traversed)
}

/// CloseCenter seeding: per cluster, the node with minimum Euclidean distance
/// to the cluster's coordinate centroid. Ties break to the smallest index.
pub fn seed_close_center(adj: &Adjacency, positions: &Matrix) -> Result<Vec<usize>> {
    if positions.rows != adj.n() {
        return Err(Error::dim(format!(
            "positions rows {} != node count {}",
            positions.rows,
            adj.n()
        )));
    }
    let dim = positions.cols;
    let mut seeds = Vec::new();
    for cluster in determine_clusters(adj) {
        let mut centroid = vec![0.0; dim];
        for &m in &cluster {
            for (c, &x) in centroid.iter_mut().zip(positions.row(m)) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= cluster.len() as f64;
        }
        let mut best = cluster[0];
        let mut best_d2 = f64::INFINITY;
        for &m in &cluster {
            let d2: f64 = positions
                .row(m)
                .iter()
                .zip(&centroid)
                .map(|(&x, &c)| (x - c) * (x - c))
                .sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = m;
            }
        }
        seeds.push(best);
    }
    Ok(seeds)
}

/// Pool all nodes whose per-cluster BFS distance from its seed has the given
/// parity.
pub fn bistride_pool(adj: &Adjacency, seeds: &[usize], parity: Parity) -> Result<PoolingPlan> {
    let clusters = determine_clusters(adj);
    let mut cluster_of = vec![usize::MAX; adj.n()];
    for (id, cluster) in clusters.iter().enumerate() {
        for &m in cluster {
            cluster_of[m] = id;
        }
    }
    let mut seed_of_cluster = vec![usize::MAX; clusters.len()];
    for &s in seeds {
        if s >= adj.n() {
            return Err(Error::invalid(format!("seed {s} out of range")));
        }
        let c = cluster_of[s];
        if seed_of_cluster[c] != usize::MAX {
            return Err(Error::invalid(format!(
                "cluster {c} has more than one seed"
            )));
        }
        seed_of_cluster[c] = s;
    }
    if let Some(c) = seed_of_cluster.iter().position(|&s| s == usize::MAX) {
        return Err(Error::invalid(format!("cluster {c} has no seed")));
    }
    // Clusters are disjoint, so one multi-source BFS yields every node's
    // distance to its own cluster's seed.
    let dist = bfs_distances(adj, seeds)?;
    debug_assert!(dist.dist.iter().all(|&d| d != UNREACHABLE));
    let pooled: Vec<usize> = (0..adj.n())
        .filter(|&i| parity.matches(dist.dist[i]))
        .collect();
    for (id, cluster) in clusters.iter().enumerate() {
        if !cluster.iter().any(|&m| parity.matches(dist.dist[m])) {
            return Err(Error::invalid(format!(
                "cluster {id} contributes no pooled node at the requested parity"
            )));
        }
    }
    Ok(PoolingPlan {
        seeds: seeds.to_vec(),
        pooled,
        parity,
    })
}

/// Enhance one level: square the adjacency with transient self-loops, stride
/// to the pooled indices, and propagate contact edges via
/// (A + I) A^C (A + I) before the same striding. Result diagonals dropped.
pub fn enhance_level(
    adj: &Adjacency,
    contact: Option<&Adjacency>,
    plan: &PoolingPlan,
) -> Result<(Adjacency, Option<Adjacency>)> {
    let pooled = &plan.pooled;
    let squared = bool_product(adj.as_sparse(), adj.as_sparse(), true, true)?;
    let coarse = Adjacency::from_sparse(&stride_submatrix(&squared, pooled, pooled)?)?;
    let coarse_contact = match contact {
        Some(c) if c.nnz() > 0 => {
            let loops = adj.as_sparse().with_self_loops()?;
            let prod = loops.product(&c.as_sparse().product(&loops)?)?.drop_diagonal();
            Some(Adjacency::from_sparse(&stride_submatrix(
                &prod, pooled, pooled,
            )?)?)
        }
        Some(_) | None => None,
    };
    Ok((coarse, coarse_contact))
}

/// Heuristic depth suggestion: floor(log2 n) - 3, clamped to >= 1.
pub fn suggest_depth(n: usize) -> usize {
    let log2 = (usize::BITS - 1 - n.max(1).leading_zeros()) as isize;
    (log2 - 3).max(1) as usize
}

/// Iteratively seed, pool, enhance, and build transition tables for
/// `depth - 1` coarsening steps.
pub fn build_hierarchy(
    graph: &Adjacency,
    positions: &Matrix,
    contact: Option<&Adjacency>,
    depth: usize,
    heuristic: Seeding,
    parity: Parity,
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
    let mut level_contact = contact.cloned();
    let mut level_positions = positions.clone();
    let mut weights = vec![1.0; graph.n()];
    for _ in 0..depth - 1 {
        let seeds = match heuristic {
            Seeding::MinAve => seed_min_ave(&adj),
            Seeding::CloseCenter => seed_close_center(&adj, &level_positions)?,
        };
        let plan = bistride_pool(&adj, &seeds, parity)?;
        let (table, next_weights) = contribution_table(&adj, &plan, &weights)?;
        let (next_adj, next_contact) = enhance_level(&adj, level_contact.as_ref(), &plan)?;
        let next_positions = Matrix::from_rows(
            &plan
                .pooled
                .iter()
                .map(|&i| level_positions.row(i).to_vec())
                .collect::<Vec<_>>(),
        )?;
        levels.push(Level {
            adj,
            contact: level_contact,
            positions: level_positions,
            weights,
            plan: Some(plan),
            table: Some(table),
        });
        adj = next_adj;
        level_contact = next_contact;
        level_positions = next_positions;
        weights = next_weights;
    }
    levels.push(Level {
        adj,
        contact: level_contact,
        positions: level_positions,
        weights,
        plan: None,
        table: None,
    });
    Ok(Hierarchy { levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_adjacency;

    fn p4() -> Adjacency {
        build_adjacency(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    fn line_positions(n: usize) -> Matrix {
        Matrix::from_rows(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn clusters_of_disjoint_edges() {
        let adj = build_adjacency(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(determine_clusters(&adj), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn clusters_of_connected_path() {
        assert_eq!(determine_clusters(&p4()), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn clusters_with_isolated_node() {
        let adj = build_adjacency(4, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(determine_clusters(&adj), vec![vec![0], vec![1, 2, 3]]);
    }

    #[test]
    fn min_ave_seed_on_path_breaks_tie_low() {
        // Averages over P4: [1.5, 1.0, 1.0, 1.5]; tie between 1 and 2.
        assert_eq!(seed_min_ave_seq(&p4()), vec![1]);
    }

    #[test]
    fn min_ave_seed_singleton() {
        let adj = build_adjacency(3, &[(1, 2)]).unwrap();
        assert_eq!(seed_min_ave_seq(&adj), vec![0, 1]);
    }

    #[test]
    fn min_ave_seed_star_center() {
        let adj = build_adjacency(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        // Center average 0.8 beats leaf average 1.6.
        assert_eq!(seed_min_ave_seq(&adj), vec![0]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn min_ave_parallel_matches_sequential() {
        let mut edges = Vec::new();
        for i in 0..40usize {
            edges.push((i, (i + 1) % 41));
            if i % 3 == 0 {
                edges.push((i, (i + 7) % 41));
            }
        }
        let adj = build_adjacency(41, &edges).unwrap();
        assert_eq!(seed_min_ave_seq(&adj), seed_min_ave_par(&adj));
    }

    #[test]
    fn close_center_seed_on_line() {
        // Centroid 1.5 is equidistant from nodes 1 and 2; tie goes low.
        assert_eq!(
            seed_close_center(&p4(), &line_positions(4)).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn close_center_singleton() {
        let adj = build_adjacency(1, &[]).unwrap();
        let pos = Matrix::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(seed_close_center(&adj, &pos).unwrap(), vec![0]);
    }

    #[test]
    fn close_center_square_symmetry_tie() {
        let adj = build_adjacency(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let pos = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(seed_close_center(&adj, &pos).unwrap(), vec![0]);
    }

    #[test]
    fn pool_path_even_and_odd() {
        let even = bistride_pool(&p4(), &[0], Parity::Even).unwrap();
        assert_eq!(even.pooled, vec![0, 2]);
        let odd = bistride_pool(&p4(), &[0], Parity::Odd).unwrap();
        assert_eq!(odd.pooled, vec![1, 3]);
    }

    #[test]
    fn pool_single_node_even() {
        let adj = build_adjacency(1, &[]).unwrap();
        let plan = bistride_pool(&adj, &[0], Parity::Even).unwrap();
        assert_eq!(plan.pooled, vec![0]);
    }

    #[test]
    fn pool_rejects_missing_or_doubled_seeds() {
        let adj = build_adjacency(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(bistride_pool(&adj, &[0], Parity::Even).is_err());
        assert!(bistride_pool(&adj, &[0, 1, 2], Parity::Even).is_err());
    }

    #[test]
    fn pool_rejects_parity_emptying_a_cluster() {
        let adj = build_adjacency(1, &[]).unwrap();
        assert!(bistride_pool(&adj, &[0], Parity::Odd).is_err());
    }

    #[test]
    fn enhance_path_keeps_original_stride_edge() {
        let plan = bistride_pool(&p4(), &[0], Parity::Even).unwrap();
        let (coarse, contact) = enhance_level(&p4(), None, &plan).unwrap();
        assert_eq!(coarse.edge_list(), vec![(0, 1)]);
        assert!(contact.is_none());
    }

    #[test]
    fn enhance_propagates_contact_edge() {
        let adj = p4();
        let contact = build_adjacency(4, &[(0, 3)]).unwrap();
        let plan = bistride_pool(&adj, &[0], Parity::Even).unwrap();
        let (_, coarse_contact) = enhance_level(&adj, Some(&contact), &plan).unwrap();
        // Images of 0 and 2 in the coarse indexing are 0 and 1.
        assert!(coarse_contact.unwrap().has_edge(0, 1));
    }

    #[test]
    fn enhance_empty_contact_stays_empty() {
        let adj = p4();
        let contact = build_adjacency(4, &[]).unwrap();
        let plan = bistride_pool(&adj, &[0], Parity::Even).unwrap();
        let (_, coarse_contact) = enhance_level(&adj, Some(&contact), &plan).unwrap();
        assert!(coarse_contact.is_none());
    }

    #[test]
    fn hierarchy_of_path_depth_two() {
        let h = build_hierarchy(
            &p4(),
            &line_positions(4),
            None,
            2,
            Seeding::MinAve,
            Parity::Even,
        )
        .unwrap();
        assert_eq!(h.depth(), 2);
        assert_eq!(h.levels[1].adj.n(), 2);
        assert_eq!(h.levels[1].adj.edge_list().len(), 1);
    }

    #[test]
    fn hierarchy_depth_one_has_no_plans() {
        let h = build_hierarchy(
            &p4(),
            &line_positions(4),
            None,
            1,
            Seeding::MinAve,
            Parity::Even,
        )
        .unwrap();
        assert_eq!(h.depth(), 1);
        assert!(h.levels[0].plan.is_none());
        assert!(h.levels[0].table.is_none());
        assert_eq!(h.levels[0].weights, vec![1.0; 4]);
    }

    #[test]
    fn sixteen_node_path_halves_to_one() {
        let edges: Vec<(usize, usize)> = (0..15).map(|i| (i, i + 1)).collect();
        let adj = build_adjacency(16, &edges).unwrap();
        let h = build_hierarchy(
            &adj,
            &line_positions(16),
            None,
            5,
            Seeding::MinAve,
            Parity::Even,
        )
        .unwrap();
        let sizes: Vec<usize> = h.levels.iter().map(|l| l.adj.n()).collect();
        assert_eq!(sizes, vec![16, 8, 4, 2, 1]);
    }

    #[test]
    fn build_is_deterministic() {
        let edges: Vec<(usize, usize)> = (0..15).map(|i| (i, i + 1)).collect();
        let adj = build_adjacency(16, &edges).unwrap();
        let a = build_hierarchy(
            &adj,
            &line_positions(16),
            None,
            4,
            Seeding::MinAve,
            Parity::Even,
        )
        .unwrap();
        let b = build_hierarchy(
            &adj,
            &line_positions(16),
            None,
            4,
            Seeding::MinAve,
            Parity::Even,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_suggestion_clamps() {
        assert_eq!(suggest_depth(8), 1);
        assert_eq!(suggest_depth(2000), 7);
    }

    #[test]
    fn min_ave_cost_scales_quadratically_on_paths() {
        let cost = |n: usize| {
            let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            let adj = build_adjacency(n, &edges).unwrap();
            seed_min_ave_with_cost(&adj).1 as f64
        };
        let ratio = cost(400) / cost(200);
        // Doubling n should land between linear (2x) and cubic (8x).
        assert!(ratio > 2.5 && ratio < 7.0, "cost ratio {ratio}");
    }
}
