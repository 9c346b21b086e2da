//! Friedrichs–Keller triangulation of the unit square.
//!
//! Node `(i, j)` sits at `(i/n, j/n)` and has index `i + j (n + 1)`. Every
//! grid square is split along its lower-left to upper-right diagonal into
//! a lower triangle `(a, b, c)` and an upper triangle `(a, c, d)`, both
//! counter-clockwise.

use std::collections::BTreeMap;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorEdge {
    /// triangle on the side the normal points away from
    pub left: usize,
    pub right: usize,
    pub length: f64,
    /// unit normal pointing from `left` into `right`
    pub normal: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_edge_count: usize,
    pub boundary_node_mask: Vec<bool>,
    pub cell_areas: Vec<f64>,
    /// gradients of the three barycentric coordinates, constant per cell
    pub basis_gradients: Vec<[[f64; 2]; 3]>,
}

impl Mesh {
    pub fn friedrichs_keller(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("mesh needs at least one subdivision per side"));
        }
        let np = n + 1;
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| i + j * np;

        let mut nodes = Vec::with_capacity(np * np);
        let mut boundary_node_mask = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 * h, j as f64 * h]);
                boundary_node_mask.push(i == 0 || j == 0 || i == n || j == n);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = idx(i, j);
                let b = idx(i + 1, j);
                let c = idx(i + 1, j + 1);
                let d = idx(i, j + 1);
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }

        let mut cell_areas = Vec::with_capacity(triangles.len());
        let mut basis_gradients = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let (area, grads) = triangle_geometry(&nodes, t);
            cell_areas.push(area);
            basis_gradients.push(grads);
        }

        let mut edge_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edge_cells.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        let mut interior_edges = Vec::new();
        let mut boundary_edge_count = 0;
        for ((a, b), cells) in &edge_cells {
            match cells.as_slice() {
                [_] => boundary_edge_count += 1,
                &[left, right] => {
                    let pa = nodes[*a];
                    let pb = nodes[*b];
                    let t = [pb[0] - pa[0], pb[1] - pa[1]];
                    let length = t[0].hypot(t[1]);
                    let mut normal = [t[1] / length, -t[0] / length];
                    // orient from left to right using the cell centroids
                    let cl = centroid(&nodes, &triangles[left]);
                    let cr = centroid(&nodes, &triangles[right]);
                    if normal[0] * (cr[0] - cl[0]) + normal[1] * (cr[1] - cl[1]) < 0.0 {
                        normal = [-normal[0], -normal[1]];
                    }
                    interior_edges.push(InteriorEdge {
                        left,
                        right,
                        length,
                        normal,
                    });
                }
                _ => unreachable!("edge shared by more than two triangles"),
            }
        }

        Ok(Self {
            n,
            nodes,
            triangles,
            interior_edges,
            boundary_edge_count,
            boundary_node_mask,
            cell_areas,
            basis_gradients,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.triangles.len()
    }

    /// Length of the diagonal edges, the usual mesh size `h = sqrt(2)/n`.
    pub fn mesh_size(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n as f64
    }

    /// Indices of the nodes off the boundary, increasing.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| !self.boundary_node_mask[i])
            .collect()
    }

    pub fn centroid(&self, cell: usize) -> [f64; 2] {
        centroid(&self.nodes, &self.triangles[cell])
    }

    pub fn signed_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.triangles[cell].map(|k| self.nodes[k]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn perimeter(&self, cell: usize) -> f64 {
        let p = self.triangles[cell].map(|k| self.nodes[k]);
        (0..3)
            .map(|k| {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }
}

fn centroid(nodes: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    let [a, b, c] = t.map(|k| nodes[k]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

fn triangle_geometry(nodes: &[[f64; 2]], t: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    let [a, b, c] = t.map(|k| nodes[k]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * det;
    // grad lambda_k = rot(opposite edge) / det
    let grads = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (area, grads)
}
