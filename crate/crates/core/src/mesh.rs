//! Mesh and trajectory file formats, plus hierarchy (de)serialization.
//!
//! Everything on disk is JSON: human-inspectable and trivially generated by
//! test fixtures. Floats use 64-bit shortest round-trip decimals, so
//! re-exporting an imported file is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bistride::{Hierarchy, Level, Parity, PoolingPlan};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, Adjacency};
use crate::transition::ContributionTable;

/// Simulation mesh: node positions, element connectivity, and a small-integer
/// node category (interior / boundary kinds).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    /// n x dim coordinates.
    pub positions: Matrix,
    /// Element index tuples: segments (2), triangles (3), or tetrahedra (4).
    pub cells: Vec<Vec<usize>>,
    pub node_type: Vec<u8>,
}

impl Mesh {
    pub fn n(&self) -> usize {
        self.positions.rows
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::invalid(format!("mesh dim {} not in 1..=3", self.dim)));
        }
        if self.positions.cols != self.dim {
            return Err(Error::invalid("positions width != dim"));
        }
        if !self.positions.is_finite() {
            return Err(Error::invalid("non-finite node position"));
        }
        if self.node_type.len() != self.n() {
            return Err(Error::invalid("node_type length != node count"));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if !(2..=4).contains(&cell.len()) {
                return Err(Error::invalid(format!(
                    "cell {c} has {} nodes; expected 2..=4",
                    cell.len()
                )));
            }
            for &i in cell {
                if i >= self.n() {
                    return Err(Error::invalid(format!(
                        "cell {c} references node {i} out of range"
                    )));
                }
            }
            let mut sorted = cell.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() < 2 {
                return Err(Error::invalid(format!(
                    "cell {c} has fewer than 2 distinct nodes"
                )));
            }
        }
        Ok(())
    }
}

/// One trajectory: a mesh, a time step, and named per-step nodal field
/// arrays of shape [steps][nodes][components].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub fields: BTreeMap<String, Vec<Matrix>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.fields.values().map(|f| f.len()).next().unwrap_or(0)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let steps = self.steps();
        for (name, field) in &self.fields {
            if field.len() != steps {
                return Err(Error::invalid(format!(
                    "field '{name}' has {} steps; expected {steps}",
                    field.len()
                )));
            }
            let comps = field.first().map(|m| m.cols);
            for (t, step) in field.iter().enumerate() {
                if step.rows != n {
                    return Err(Error::invalid(format!(
                        "field '{name}' step {t} has {} rows; expected {n}",
                        step.rows
                    )));
                }
                if Some(step.cols) != comps {
                    return Err(Error::invalid(format!(
                        "field '{name}' has inconsistent component count"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    dim: usize,
    positions: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    node_type: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    dt: f64,
    fields: BTreeMap<String, Vec<Vec<Vec<f64>>>>,
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: MeshFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mesh = Mesh {
        dim: file.dim,
        positions: Matrix::from_rows(&file.positions)?,
        cells: file.cells,
        node_type: file.node_type,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    mesh.validate()?;
    let file = MeshFile {
        dim: mesh.dim,
        positions: (0..mesh.n()).map(|i| mesh.positions.row(i).to_vec()).collect(),
        cells: mesh.cells.clone(),
        node_type: mesh.node_type.clone(),
    };
    write_json(&file, path)
}

pub fn load_trajectory(path: impl AsRef<Path>, n: usize) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: TrajectoryFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut fields = BTreeMap::new();
    for (name, steps) in file.fields {
        let mut mats = Vec::with_capacity(steps.len());
        for step in steps {
            mats.push(Matrix::from_rows(&step)?);
        }
        fields.insert(name, mats);
    }
    let traj = Trajectory { dt: file.dt, fields };
    traj.validate(n)?;
    Ok(traj)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let mut fields = BTreeMap::new();
    for (name, steps) in &traj.fields {
        let as_vecs: Vec<Vec<Vec<f64>>> = steps
            .iter()
            .map(|m| (0..m.rows).map(|i| m.row(i).to_vec()).collect())
            .collect();
        fields.insert(name.clone(), as_vecs);
    }
    write_json(&TrajectoryFile { dt: traj.dt, fields }, path)
}

/// Derive the finest-level graph from element connectivity: each cell
/// contributes all of its node pairs, deduplicated across cells.
pub fn mesh_to_graph(mesh: &Mesh) -> Result<Adjacency> {
    mesh.validate()?;
    let mut edges = Vec::new();
    for cell in &mesh.cells {
        for a in 0..cell.len() {
            for b in (a + 1)..cell.len() {
                if cell[a] != cell[b] {
                    edges.push((cell[a], cell[b]));
                }
            }
        }
    }
    build_adjacency(mesh.n(), &edges)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    edges: Vec<[usize; 2]>,
    contact_edges: Vec<[usize; 2]>,
    positions: Vec<Vec<f64>>,
    weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pooled: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition: Option<TransitionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HierarchyFile {
    levels: Vec<LevelFile>,
}

pub fn export_hierarchy(h: &Hierarchy, path: impl AsRef<Path>) -> Result<()> {
    let mut levels = Vec::with_capacity(h.levels.len());
    for level in &h.levels {
        let transition = level.table.as_ref().map(|t| {
            let mut rows = Vec::with_capacity(t.triplets.len());
            let mut cols = Vec::with_capacity(t.triplets.len());
            let mut vals = Vec::with_capacity(t.triplets.len());
            for &(r, c, v) in &t.triplets {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
            TransitionFile { rows, cols, vals }
        });
        levels.push(LevelFile {
            edges: level.adj.edge_list().iter().map(|&(i, j)| [i, j]).collect(),
            contact_edges: level
                .contact
                .as_ref()
                .map(|c| c.edge_list().iter().map(|&(i, j)| [i, j]).collect())
                .unwrap_or_default(),
            positions: (0..level.positions.rows)
                .map(|i| level.positions.row(i).to_vec())
                .collect(),
            weights: level.weights.clone(),
            pooled: level.plan.as_ref().map(|p| p.pooled.clone()),
            seeds: level.plan.as_ref().map(|p| p.seeds.clone()),
            parity: level.plan.as_ref().map(|p| {
                match p.parity {
                    Parity::Even => "even",
                    Parity::Odd => "odd",
                }
                .to_string()
            }),
            transition,
        });
    }
    write_json(&HierarchyFile { levels }, path)
}

pub fn import_hierarchy(path: impl AsRef<Path>) -> Result<Hierarchy> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: HierarchyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut levels = Vec::with_capacity(file.levels.len());
    for (idx, lf) in file.levels.iter().enumerate() {
        let n = lf.positions.len();
        let adj = build_adjacency(n, &lf.edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>())?;
        let contact = if lf.contact_edges.is_empty() {
            None
        } else {
            Some(build_adjacency(
                n,
                &lf.contact_edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>(),
            )?)
        };
        let plan = match (&lf.pooled, &lf.seeds, &lf.parity) {
            (Some(pooled), Some(seeds), Some(parity)) => Some(PoolingPlan {
                seeds: seeds.clone(),
                pooled: pooled.clone(),
                parity: match parity.as_str() {
                    "even" => Parity::Even,
                    "odd" => Parity::Odd,
                    other => {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            message: format!("level {idx}: unknown parity '{other}'"),
                        })
                    }
                },
            }),
            (None, None, None) => None,
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("level {idx}: partial pooling block"),
                })
            }
        };
        let table = match (&lf.transition, &plan) {
            (Some(t), Some(p)) => {
                let triplets = t
                    .rows
                    .iter()
                    .zip(&t.cols)
                    .zip(&t.vals)
                    .map(|((&r, &c), &v)| (r, c, v))
                    .collect();
                Some(ContributionTable {
                    rows: n,
                    cols: p.pooled.len(),
                    triplets,
                    receivers: p.pooled.clone(),
                })
            }
            (None, _) => None,
            (Some(_), None) => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("level {idx}: transition block without pooling block"),
                })
            }
        };
        levels.push(Level {
            adj,
            contact,
            positions: Matrix::from_rows(&lf.positions)?,
            weights: lf.weights.clone(),
            plan,
            table,
        });
    }
    Ok(Hierarchy { levels })
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn segment_mesh() -> Mesh {
        Mesh {
            dim: 1,
            positions: Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            cells: vec![vec![0, 1]],
            node_type: vec![1, 2],
        }
    }

    #[test]
    fn minimal_segment_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.json");
        save_mesh(&segment_mesh(), &path).unwrap();
        let loaded = load_mesh(&path).unwrap();
        assert_eq!(loaded, segment_mesh());
        assert_eq!(loaded.n(), 2);
        assert_eq!(loaded.cells.len(), 1);
    }

    #[test]
    fn out_of_range_cell_names_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"dim":1,"positions":[[0.0],[1.0]],"cells":[[0,2]],"node_type":[0,0]}"#,
        )
        .unwrap();
        let err = load_mesh(&path).unwrap_err();
        assert!(err.to_string().contains("cell 0"), "{err}");
    }

    #[test]
    fn triangle_mesh_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.json");
        std::fs::write(
            &path,
            r#"{"dim":2,"positions":[[0.0,0.0],[1.0,0.0],[0.0,1.0]],"cells":[[0,1,2]],"node_type":[0,0,0]}"#,
        )
        .unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.n(), 3);
    }

    #[test]
    fn triangle_graph_edges() {
        let mesh = Mesh {
            dim: 2,
            positions: Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])
                .unwrap(),
            cells: vec![vec![0, 1, 2]],
            node_type: vec![0; 3],
        };
        let g = mesh_to_graph(&mesh).unwrap();
        assert_eq!(g.edge_list(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn tetrahedron_has_six_edges() {
        let mesh = Mesh {
            dim: 3,
            positions: Matrix::from_rows(&[
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ])
            .unwrap(),
            cells: vec![vec![0, 1, 2, 3]],
            node_type: vec![0; 4],
        };
        assert_eq!(mesh_to_graph(&mesh).unwrap().edge_list().len(), 6);
    }

    #[test]
    fn shared_edge_triangles_deduplicate() {
        let mesh = Mesh {
            dim: 2,
            positions: Matrix::from_rows(&[
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ])
            .unwrap(),
            cells: vec![vec![0, 1, 2], vec![1, 2, 3]],
            node_type: vec![0; 4],
        };
        let g = mesh_to_graph(&mesh).unwrap();
        // (0,1),(0,2),(1,2),(1,3),(2,3): the shared (1,2) appears once.
        assert_eq!(g.edge_list().len(), 5);
    }

    #[test]
    fn trajectory_round_trip() {
        let mut fields = BTreeMap::new();
        fields.insert(
            "temp".to_string(),
            vec![
                Matrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap(),
                Matrix::from_rows(&[vec![0.5], vec![1.0]]).unwrap(),
            ],
        );
        let traj = Trajectory { dt: 1.0, fields };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.json");
        save_trajectory(&traj, &path).unwrap();
        assert_eq!(load_trajectory(&path, 2).unwrap(), traj);
    }
}
