//! Shared random mesh generators for the fuzz suites: labeled paths, grid
//! meshes, and triangulated strips, all connected by construction.

use bistride::dense::Matrix;
use bistride::graph::{build_adjacency, Adjacency};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct RandomMesh {
    pub adj: Adjacency,
    // Not every suite that shares this module consumes positions.
    #[allow(dead_code)]
    pub positions: Matrix,
}

pub fn random_path(n: usize, rng: &mut ChaCha8Rng) -> RandomMesh {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    let mut positions = Matrix::zeros(n, 2);
    for (rank, &node) in order.iter().enumerate() {
        positions.set(node, 0, rank as f64);
        positions.set(node, 1, rng.gen_range(-0.1..0.1));
    }
    RandomMesh {
        adj: build_adjacency(n, &edges).unwrap(),
        positions,
    }
}

pub fn grid_mesh(rows: usize, cols: usize) -> RandomMesh {
    let n = rows * cols;
    let at = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    let mut positions = Matrix::zeros(n, 2);
    for r in 0..rows {
        for c in 0..cols {
            positions.set(at(r, c), 0, c as f64);
            positions.set(at(r, c), 1, r as f64);
            if c + 1 < cols {
                edges.push((at(r, c), at(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((at(r, c), at(r + 1, c)));
            }
        }
    }
    RandomMesh {
        adj: build_adjacency(n, &edges).unwrap(),
        positions,
    }
}

/// Triangulated strip: two jittered rows of points, each quad split into two
/// triangles, like a structured boundary-layer mesh.
pub fn strip_triangulation(half: usize, rng: &mut ChaCha8Rng) -> RandomMesh {
    let n = 2 * half;
    let mut edges = Vec::new();
    let mut positions = Matrix::zeros(n, 2);
    for i in 0..half {
        positions.set(i, 0, i as f64 + rng.gen_range(-0.2..0.2));
        positions.set(i, 1, 0.0);
        positions.set(half + i, 0, i as f64 + rng.gen_range(-0.2..0.2));
        positions.set(half + i, 1, 1.0);
    }
    for i in 0..half {
        edges.push((i, half + i));
        if i + 1 < half {
            edges.push((i, i + 1));
            edges.push((half + i, half + i + 1));
            // Quad diagonal, randomly oriented.
            if rng.gen::<bool>() {
                edges.push((i, half + i + 1));
            } else {
                edges.push((i + 1, half + i));
            }
        }
    }
    RandomMesh {
        adj: build_adjacency(n, &edges).unwrap(),
        positions,
    }
}

/// Deterministic trial mesh: mostly small, every 20th trial large (paths up
/// to 2,000 nodes).
pub fn trial_mesh(trial: usize, rng: &mut ChaCha8Rng) -> RandomMesh {
    match trial % 3 {
        0 => {
            let n = if trial % 20 == 0 {
                rng.gen_range(1000..=2000)
            } else {
                rng.gen_range(2..=200)
            };
            random_path(n, rng)
        }
        1 => grid_mesh(rng.gen_range(1..=14), rng.gen_range(2..=14)),
        _ => strip_triangulation(rng.gen_range(2..=80), rng),
    }
}
