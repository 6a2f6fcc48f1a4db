//! Fuzzed structural guarantees of bi-stride pooling: the 2-CC property
//! (every unpooled node keeps a pooled direct neighbor), per-cluster coarse
//! connectivity, and conservation of contact edges under enhancement, all
//! against brute-force oracles.

mod common;

use bistride::bistride::{
    bistride_pool, build_hierarchy, determine_clusters, enhance_level, seed_min_ave, Parity,
    Seeding,
};
use bistride::graph::{build_adjacency, Adjacency};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

fn check_two_cc(adj: &Adjacency, pooled: &[usize]) {
    let is_pooled: Vec<bool> = {
        let mut v = vec![false; adj.n()];
        for &p in pooled {
            v[p] = true;
        }
        v
    };
    for i in 0..adj.n() {
        if !is_pooled[i] {
            assert!(
                adj.neighbors(i).iter().any(|&j| is_pooled[j]),
                "unpooled node {i} has no pooled neighbor"
            );
        }
    }
}

/// Coarse nodes originating from one fine cluster must stay connected among
/// themselves in the coarse graph.
fn check_coarse_cluster_connectivity(fine: &Adjacency, coarse: &Adjacency, pooled: &[usize]) {
    let fine_clusters = determine_clusters(fine);
    let mut cluster_of = vec![0usize; fine.n()];
    for (id, c) in fine_clusters.iter().enumerate() {
        for &m in c {
            cluster_of[m] = id;
        }
    }
    for id in 0..fine_clusters.len() {
        let members: Vec<usize> = (0..pooled.len())
            .filter(|&k| cluster_of[pooled[k]] == id)
            .collect();
        if members.len() <= 1 {
            continue;
        }
        // Brute-force flood fill restricted to this cluster's image.
        let mut seen = vec![false; coarse.n()];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        while let Some(u) = stack.pop() {
            for &v in coarse.neighbors(u) {
                if !seen[v] && cluster_of[pooled[v]] == id {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        for &m in &members {
            assert!(seen[m], "coarse image of cluster {id} is disconnected");
        }
    }
}

#[test]
fn two_cc_and_coarse_connectivity_over_random_meshes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked_levels = 0usize;
    for trial in 0..220 {
        let mesh = common::trial_mesh(trial, &mut rng);
        let heuristic = if trial % 2 == 0 { Seeding::MinAve } else { Seeding::CloseCenter };
        let parity = if trial % 5 == 0 { Parity::Odd } else { Parity::Even };
        let depth = 2 + trial % 3;
        let hier = match build_hierarchy(&mesh.adj, &mesh.positions, None, depth, heuristic, parity)
        {
            Ok(h) => h,
            // Odd parity can empty a cluster (for example a singleton);
            // rejecting that is the contract, not a violation.
            Err(_) => continue,
        };
        for level in &hier.levels {
            if let Some(plan) = &level.plan {
                check_two_cc(&level.adj, &plan.pooled);
                checked_levels += 1;
            }
        }
        for w in hier.levels.windows(2) {
            let plan = w[0].plan.as_ref().unwrap();
            check_coarse_cluster_connectivity(&w[0].adj, &w[1].adj, &plan.pooled);
        }
    }
    assert!(checked_levels >= 200, "only {checked_levels} levels checked");
}

/// Dense boolean oracle for one enhancement step, diagonal kept: with
/// B = A + I, coarse mesh = (B*B)[pooled,pooled], coarse contact =
/// (B*C*B)[pooled,pooled].
fn dense_enhance(
    adj: &Adjacency,
    contact: &Adjacency,
    pooled: &[usize],
) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let n = adj.n();
    let mut b = vec![vec![false; n]; n];
    let mut c = vec![vec![false; n]; n];
    for i in 0..n {
        b[i][i] = true;
        for &j in adj.neighbors(i) {
            b[i][j] = true;
        }
        for &j in contact.neighbors(i) {
            c[i][j] = true;
        }
    }
    let mul = |x: &Vec<Vec<bool>>, y: &Vec<Vec<bool>>| {
        let mut out = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if x[i][k] {
                    for j in 0..n {
                        out[i][j] |= y[k][j];
                    }
                }
            }
        }
        out
    };
    let stride = |m: &Vec<Vec<bool>>| {
        pooled
            .iter()
            .map(|&i| pooled.iter().map(|&j| m[i][j]).collect())
            .collect::<Vec<Vec<bool>>>()
    };
    (stride(&mul(&b, &b)), stride(&mul(&b, &mul(&c, &b))))
}

#[test]
fn contact_edges_survive_enhancement_over_fuzz_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trials_with_contact = 0usize;
    for trial in 0..340 {
        let mesh = common::trial_mesh(trial * 31 + 5, &mut rng);
        let n = mesh.adj.n();
        if n > 120 || n < 3 {
            continue;
        }
        let mut contact_edges = Vec::new();
        for _ in 0..rng.gen_range(1..=8) {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j && !mesh.adj.has_edge(i, j) {
                contact_edges.push((i, j));
            }
        }
        let contact = build_adjacency(n, &contact_edges).unwrap();
        if contact.nnz() == 0 {
            continue;
        }
        trials_with_contact += 1;
        let seeds = seed_min_ave(&mesh.adj);
        let plan = bistride_pool(&mesh.adj, &seeds, Parity::Even).unwrap();
        let (_, coarse_contact) = enhance_level(&mesh.adj, Some(&contact), &plan).unwrap();
        let (_, oracle) = dense_enhance(&mesh.adj, &contact, &plan.pooled);
        let mut col_of = vec![usize::MAX; n];
        for (k, &p) in plan.pooled.iter().enumerate() {
            col_of[p] = k;
        }
        // Conservation: every fine contact edge has pooled witnesses
        // i' in N+(i), j' in N+(j) adjacent in the pre-diagonal-drop
        // oracle (the witness pair may coincide; striding then drops it
        // from the exported coarse contact as a self-loop).
        for (i, j) in contact.edge_list() {
            let mut witnesses_i: Vec<usize> = vec![i];
            witnesses_i.extend(mesh.adj.neighbors(i));
            let mut witnesses_j: Vec<usize> = vec![j];
            witnesses_j.extend(mesh.adj.neighbors(j));
            let found = witnesses_i.iter().any(|&a| {
                witnesses_j.iter().any(|&b| {
                    col_of[a] != usize::MAX
                        && col_of[b] != usize::MAX
                        && oracle[col_of[a]][col_of[b]]
                })
            });
            assert!(found, "contact edge ({i},{j}) lost its coarse witness");
        }
        // Exported coarse contact equals the oracle minus its diagonal.
        let m = plan.pooled.len();
        for a in 0..m {
            for b in 0..m {
                let expected = a != b && oracle[a][b];
                let got = coarse_contact
                    .as_ref()
                    .map(|cc| cc.has_edge(a, b))
                    .unwrap_or(false);
                assert_eq!(got, expected, "coarse contact mismatch at ({a},{b})");
            }
        }
    }
    assert!(trials_with_contact >= 200, "only {trials_with_contact} contact trials");
}
