//! Sparse boolean graph kernels: CSR adjacency, multi-source BFS, boolean
//! matrix products, and submatrix striding.
//!
//! All operations are pure functions over immutable inputs.

use crate::error::{Error, Result};

/// Sentinel hop count for nodes not reachable from any seed.
pub const UNREACHABLE: u32 = u32::MAX;

/// General sparse boolean matrix in compressed-row form with sorted,
/// deduplicated column indices per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBool {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
}

impl SparseBool {
    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseBool {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
        }
    }

    /// Build from entry pairs; duplicates collapse, rows end up sorted.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut per_row: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for &(i, j) in entries {
            if i >= rows || j >= cols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) out of range for {rows}x{cols} matrix"
                )));
            }
            per_row[i].push(j);
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut per_row {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        Ok(SparseBool {
            rows,
            cols,
            indptr,
            indices,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for &j in self.row(i) {
                out.push((i, j));
            }
        }
        out
    }

    /// Square matrix with the identity added.
    pub fn with_self_loops(&self) -> Result<SparseBool> {
        if self.rows != self.cols {
            return Err(Error::dim("self loops require a square matrix"));
        }
        let mut entries = self.entries();
        entries.extend((0..self.rows).map(|i| (i, i)));
        SparseBool::from_entries(self.rows, self.cols, &entries)
    }

    pub fn drop_diagonal(&self) -> SparseBool {
        let entries: Vec<(usize, usize)> = self
            .entries()
            .into_iter()
            .filter(|&(i, j)| i != j)
            .collect();
        SparseBool::from_entries(self.rows, self.cols, &entries).expect("entries in range")
    }

    /// Boolean product self * other, row-wise with a dense scratch per row.
    pub fn product(&self, other: &SparseBool) -> Result<SparseBool> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "boolean product: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        let mut mark = vec![false; other.cols];
        let mut touched = Vec::new();
        for i in 0..self.rows {
            for &k in self.row(i) {
                for &j in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                }
            }
            touched.sort_unstable();
            indices.extend_from_slice(&touched);
            indptr.push(indices.len());
            for &j in &touched {
                mark[j] = false;
            }
            touched.clear();
        }
        Ok(SparseBool {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
        })
    }
}

/// Symmetric, diagonal-free boolean adjacency over `n` mesh nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    mat: SparseBool,
}

impl Adjacency {
    pub fn n(&self) -> usize {
        self.mat.rows
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.mat.row(i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    /// Number of stored directed entries (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.mat.contains(i, j)
    }

    pub fn as_sparse(&self) -> &SparseBool {
        &self.mat
    }

    /// Undirected edge list with i < j, sorted.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.mat
            .entries()
            .into_iter()
            .filter(|&(i, j)| i < j)
            .collect()
    }

    /// Wrap a sparse matrix already known to be square; symmetrizes and
    /// drops the diagonal.
    pub fn from_sparse(mat: &SparseBool) -> Result<Adjacency> {
        if mat.rows != mat.cols {
            return Err(Error::dim("adjacency must be square"));
        }
        let mut entries = Vec::with_capacity(mat.nnz() * 2);
        for (i, j) in mat.entries() {
            if i != j {
                entries.push((i, j));
                entries.push((j, i));
            }
        }
        Ok(Adjacency {
            mat: SparseBool::from_entries(mat.rows, mat.cols, &entries)?,
        })
    }
}

/// Per-node BFS hop counts from a seed set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    pub dist: Vec<u32>,
}

impl DistanceField {
    pub fn reachable(&self, i: usize) -> bool {
        self.dist[i] != UNREACHABLE
    }
}

/// Build a symmetric adjacency from an undirected edge list. Duplicates and
/// self-loops are dropped.
pub fn build_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<Adjacency> {
    if n == 0 {
        return Err(Error::invalid("adjacency over zero nodes"));
    }
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
    }
    let mat = SparseBool::from_entries(n, n, edges)?;
    Adjacency::from_sparse(&mat)
}

/// Multi-source BFS hop counts. Nodes in components that contain no seed get
/// [`UNREACHABLE`].
pub fn bfs_distances(adj: &Adjacency, seeds: &[usize]) -> Result<DistanceField> {
    let n = adj.n();
    if seeds.is_empty() {
        return Err(Error::invalid("bfs requires at least one seed"));
    }
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = std::collections::VecDeque::new();
    for &s in seeds {
        if s >= n {
            return Err(Error::invalid(format!("seed {s} out of range")));
        }
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        for &v in adj.neighbors(u) {
            if dist[v] == UNREACHABLE {
                dist[v] = du + 1;
                queue.push_back(v);
            }
        }
    }
    Ok(DistanceField { dist })
}

/// BFS variant that also reports the number of edge traversals, used by the
/// seeding cost checks.
pub(crate) fn bfs_distances_counting(adj: &Adjacency, seed: usize) -> (Vec<u32>, u64) {
    let n = adj.n();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = std::collections::VecDeque::new();
    let mut traversed = 0u64;
    dist[seed] = 0;
    queue.push_back(seed);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        for &v in adj.neighbors(u) {
            traversed += 1;
            if dist[v] == UNREACHABLE {
                dist[v] = du + 1;
                queue.push_back(v);
            }
        }
    }
    (dist, traversed)
}

/// Boolean matrix product. When `with_self_loops` is set, the identity is
/// added to both factors first, giving "reachable in at most K hops"
/// semantics; when `drop_diagonal` is set, diagonal entries are removed from
/// the result.
pub fn bool_product(
    a: &SparseBool,
    b: &SparseBool,
    with_self_loops: bool,
    drop_diagonal: bool,
) -> Result<SparseBool> {
    let product = if with_self_loops {
        a.with_self_loops()?.product(&b.with_self_loops()?)?
    } else {
        a.product(b)?
    };
    Ok(if drop_diagonal {
        product.drop_diagonal()
    } else {
        product
    })
}

/// Restrict a sparse matrix to the given rows/cols, reindexed densely in
/// list order. Index lists must be strictly increasing.
pub fn stride_submatrix(m: &SparseBool, rows: &[usize], cols: &[usize]) -> Result<SparseBool> {
    check_strictly_increasing(rows, m.rows, "rows")?;
    check_strictly_increasing(cols, m.cols, "cols")?;
    let mut col_map = vec![usize::MAX; m.cols];
    for (new, &old) in cols.iter().enumerate() {
        col_map[old] = new;
    }
    let mut indptr = Vec::with_capacity(rows.len() + 1);
    let mut indices = Vec::new();
    indptr.push(0);
    for &old_row in rows {
        for &j in m.row(old_row) {
            if col_map[j] != usize::MAX {
                indices.push(col_map[j]);
            }
        }
        indptr.push(indices.len());
    }
    Ok(SparseBool {
        rows: rows.len(),
        cols: cols.len(),
        indptr,
        indices,
    })
}

fn check_strictly_increasing(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    for w in idx.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::invalid(format!(
                "{what} index list must be strictly increasing"
            )));
        }
    }
    if let Some(&last) = idx.last() {
        if last >= bound {
            return Err(Error::invalid(format!("{what} index {last} out of range")));
        }
    }
    Ok(())
}
