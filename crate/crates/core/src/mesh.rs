//! Fixed uniform tetrahedral triangulation of the bulk box.
//!
//! The box is split into a regular grid of cells, each cell into six
//! tetrahedra sharing the main diagonal (Kuhn split). The split is conforming
//! across cell faces without extra vertices and fully deterministic. The mesh
//! never moves; refinement rebuilds the grid with every cell count doubled.

use crate::la::{self, Vec3};
use crate::{Error, Result};

/// Axis-aligned bulk box containing the surface for all times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl BoxDomain {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self> {
        for i in 0..3 {
            if !(hi[i] > lo[i]) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate box: hi[{i}] = {} <= lo[{i}] = {}",
                    hi[i], lo[i]
                )));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// Bulk box of the moving-sphere benchmark: [-4/3, 10/3] x [-4/3, 4/3]^2.
    pub fn benchmark() -> Self {
        BoxDomain {
            lo: [-4.0 / 3.0, -4.0 / 3.0, -4.0 / 3.0],
            hi: [10.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0],
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }
}

/// Local vertex indices (into the 8 cell corners, binary xyz order) of the
/// six Kuhn tetrahedra. All six share the main diagonal 0-7; each follows a
/// monotone edge path, which makes the split conforming between cells.
const KUHN_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

/// Default cap on the number of grid cells (6x as many tets).
pub const DEFAULT_CELL_CAP: usize = 40_000_000;

/// Conforming tetrahedral triangulation of a [`BoxDomain`].
#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    domain: BoxDomain,
    /// Declared mesh size (the refinement-ladder value, h = 0.5 / 2^k).
    h: f64,
    /// Grid cell counts per axis.
    n_cells: [usize; 3],
    /// Grid cell edge lengths per axis (extent / n_cells, each <= h).
    cell_edge: [f64; 3],
    vertices: Vec<Vec3>,
    tets: Vec<[u32; 4]>,
    vertex_to_tets: Vec<Vec<u32>>,
    /// Face neighbor per tet (4 faces, opposite each local vertex);
    /// `u32::MAX` marks a boundary face.
    tet_neighbors: Vec<[u32; 4]>,
    /// Sorted vertex pairs for every edge, plus a lookup from pair to index.
    edges: Vec<(u32, u32)>,
    edge_lookup: std::collections::HashMap<(u32, u32), u32>,
}

impl BackgroundMesh {
    /// Builds the uniform mesh. `target_h` is the declared mesh size; each
    /// axis is divided into `ceil(extent / target_h)` cells so cells never
    /// exceed `target_h` per edge and tets never exceed `target_h * sqrt(3)`
    /// in diameter.
    pub fn build_uniform(domain: BoxDomain, target_h: f64) -> Result<Self> {
        Self::build_with_cap(domain, target_h, DEFAULT_CELL_CAP)
    }

    pub fn build_with_cap(domain: BoxDomain, target_h: f64, cell_cap: usize) -> Result<Self> {
        if !(target_h > 0.0) || !target_h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mesh size must be positive, got {target_h}"
            )));
        }
        let mut n_cells = [0usize; 3];
        for i in 0..3 {
            let extent = domain.hi[i] - domain.lo[i];
            n_cells[i] = (extent / target_h).ceil().max(1.0) as usize;
        }
        Self::from_grid(domain, target_h, n_cells, cell_cap)
    }

    fn from_grid(
        domain: BoxDomain,
        declared_h: f64,
        n_cells: [usize; 3],
        cell_cap: usize,
    ) -> Result<Self> {
        let total_cells: usize = n_cells.iter().product();
        if total_cells > cell_cap {
            return Err(Error::MemoryCap {
                requested: total_cells,
                cap: cell_cap,
            });
        }
        let mut cell_edge = [0.0; 3];
        for i in 0..3 {
            cell_edge[i] = (domain.hi[i] - domain.lo[i]) / n_cells[i] as f64;
        }
        let nv = [n_cells[0] + 1, n_cells[1] + 1, n_cells[2] + 1];
        let vid = |i: usize, j: usize, k: usize| -> u32 {
            ((i * nv[1] + j) * nv[2] + k) as u32
        };
        let mut vertices = Vec::with_capacity(nv[0] * nv[1] * nv[2]);
        for i in 0..nv[0] {
            for j in 0..nv[1] {
                for k in 0..nv[2] {
                    vertices.push([
                        domain.lo[0] + i as f64 * cell_edge[0],
                        domain.lo[1] + j as f64 * cell_edge[1],
                        domain.lo[2] + k as f64 * cell_edge[2],
                    ]);
                }
            }
        }

        let mut tets = Vec::with_capacity(6 * total_cells);
        for i in 0..n_cells[0] {
            for j in 0..n_cells[1] {
                for k in 0..n_cells[2] {
                    // cell corners in binary xyz order: bit0 = x, bit1 = y, bit2 = z
                    let corners = [
                        vid(i, j, k),
                        vid(i + 1, j, k),
                        vid(i, j + 1, k),
                        vid(i + 1, j + 1, k),
                        vid(i, j, k + 1),
                        vid(i + 1, j, k + 1),
                        vid(i, j + 1, k + 1),
                        vid(i + 1, j + 1, k + 1),
                    ];
                    for t in &KUHN_TETS {
                        let mut tet = [
                            corners[t[0]],
                            corners[t[1]],
                            corners[t[2]],
                            corners[t[3]],
                        ];
                        if signed_volume(&vertices, &tet) < 0.0 {
                            tet.swap(2, 3);
                        }
                        tets.push(tet);
                    }
                }
            }
        }

        let mut vertex_to_tets = vec![Vec::new(); vertices.len()];
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                vertex_to_tets[v as usize].push(t as u32);
            }
        }

        // Face -> tets map for neighbor links and conformity checks.
        let mut face_map: std::collections::HashMap<[u32; 3], (u32, u8, Option<(u32, u8)>)> =
            std::collections::HashMap::with_capacity(2 * tets.len());
        for (t, tet) in tets.iter().enumerate() {
            for local in 0..4u8 {
                let mut face = [0u32; 3];
                let mut w = 0;
                for (l, &v) in tet.iter().enumerate() {
                    if l != local as usize {
                        face[w] = v;
                        w += 1;
                    }
                }
                face.sort_unstable();
                match face_map.get_mut(&face) {
                    None => {
                        face_map.insert(face, (t as u32, local, None));
                    }
                    Some(entry) => {
                        entry.2 = Some((t as u32, local));
                    }
                }
            }
        }
        let mut tet_neighbors = vec![[u32::MAX; 4]; tets.len()];
        for (_, (t0, l0, other)) in face_map.iter() {
            if let Some((t1, l1)) = other {
                tet_neighbors[*t0 as usize][*l0 as usize] = *t1;
                tet_neighbors[*t1 as usize][*l1 as usize] = *t0;
            }
        }

        let mut edge_set: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
        for tet in &tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    let (x, y) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                    edge_set.insert((x, y));
                }
            }
        }
        let mut edges: Vec<(u32, u32)> = edge_set.into_iter().collect();
        edges.sort_unstable();
        let edge_lookup = edges
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i as u32))
            .collect();

        Ok(BackgroundMesh {
            domain,
            h: declared_h,
            n_cells,
            cell_edge,
            vertices,
            tets,
            vertex_to_tets,
            tet_neighbors,
            edges,
            edge_lookup,
        })
    }

    /// Test-support constructor from raw arrays; fixes orientations and
    /// builds adjacency, but performs no grid bookkeeping.
    pub fn from_raw(vertices: Vec<Vec3>, tets_in: Vec<[u32; 4]>, declared_h: f64) -> Self {
        let mut tets = tets_in;
        for tet in &mut tets {
            if signed_volume(&vertices, tet) < 0.0 {
                tet.swap(2, 3);
            }
        }
        let mut vertex_to_tets = vec![Vec::new(); vertices.len()];
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                vertex_to_tets[v as usize].push(t as u32);
            }
        }
        let mut edge_set: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
        for tet in &tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    let (x, y) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                    edge_set.insert((x, y));
                }
            }
        }
        let mut edges: Vec<(u32, u32)> = edge_set.into_iter().collect();
        edges.sort_unstable();
        let edge_lookup = edges
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, i as u32))
            .collect();
        let n = tets.len();
        BackgroundMesh {
            domain: BoxDomain::benchmark(),
            h: declared_h,
            n_cells: [0; 3],
            cell_edge: [0.0; 3],
            vertices,
            tets,
            vertex_to_tets,
            tet_neighbors: vec![[u32::MAX; 4]; n],
            edges,
            edge_lookup,
        }
    }

    /// Uniform refinement: rebuilds the grid with twice the cells per axis
    /// and half the declared mesh size.
    pub fn refine(&self) -> Result<Self> {
        self.refine_with_cap(DEFAULT_CELL_CAP)
    }

    pub fn refine_with_cap(&self, cell_cap: usize) -> Result<Self> {
        let n = [
            self.n_cells[0] * 2,
            self.n_cells[1] * 2,
            self.n_cells[2] * 2,
        ];
        Self::from_grid(self.domain, self.h / 2.0, n, cell_cap)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_cells(&self) -> [usize; 3] {
        self.n_cells
    }

    pub fn cell_edges(&self) -> [f64; 3] {
        self.cell_edge
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: u32) -> Vec3 {
        self.vertices[v as usize]
    }

    pub fn tet(&self, t: usize) -> [u32; 4] {
        self.tets[t]
    }

    pub fn tet_vertices(&self, t: usize) -> [Vec3; 4] {
        let tet = self.tets[t];
        [
            self.vertices[tet[0] as usize],
            self.vertices[tet[1] as usize],
            self.vertices[tet[2] as usize],
            self.vertices[tet[3] as usize],
        ]
    }

    pub fn tets_of_vertex(&self, v: u32) -> &[u32] {
        &self.vertex_to_tets[v as usize]
    }

    pub fn tet_face_neighbors(&self, t: usize) -> [u32; 4] {
        self.tet_neighbors[t]
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_index(&self, a: u32, b: u32) -> u32 {
        self.edge_lookup[&(a.min(b), a.max(b))]
    }

    pub fn edge_midpoint(&self, e: u32) -> Vec3 {
        let (a, b) = self.edges[e as usize];
        la::scale(0.5, la::add(self.vertex(a), self.vertex(b)))
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    pub fn tet_diameter(&self, t: usize) -> f64 {
        let vs = self.tet_vertices(t);
        let mut d: f64 = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                d = d.max(la::norm(la::sub(vs[a], vs[b])));
            }
        }
        d
    }

    /// Barycentric coordinates of `x` in tet `t`.
    pub fn barycentric(&self, t: usize, x: Vec3) -> [f64; 4] {
        let vs = self.tet_vertices(t);
        let m = [
            [
                vs[1][0] - vs[0][0],
                vs[2][0] - vs[0][0],
                vs[3][0] - vs[0][0],
            ],
            [
                vs[1][1] - vs[0][1],
                vs[2][1] - vs[0][1],
                vs[3][1] - vs[0][1],
            ],
            [
                vs[1][2] - vs[0][2],
                vs[2][2] - vs[0][2],
                vs[3][2] - vs[0][2],
            ],
        ];
        let rhs = la::sub(x, vs[0]);
        let lam = la::solve3(&m, rhs).expect("non-degenerate tet");
        [1.0 - lam[0] - lam[1] - lam[2], lam[0], lam[1], lam[2]]
    }

    /// Gradients of the four barycentric coordinates (constant per tet).
    pub fn barycentric_gradients(&self, t: usize) -> [Vec3; 4] {
        let vs = self.tet_vertices(t);
        let mut grads = [[0.0; 3]; 4];
        // grad lambda_i is the inward-scaled normal of the face opposite i
        for i in 0..4 {
            let (a, b, c) = match i {
                0 => (1, 2, 3),
                1 => (0, 3, 2),
                2 => (0, 1, 3),
                _ => (0, 2, 1),
            };
            let n = la::cross(la::sub(vs[b], vs[a]), la::sub(vs[c], vs[a]));
            let denom = la::dot(n, la::sub(vs[i], vs[a]));
            grads[i] = la::scale(1.0 / denom, n);
        }
        grads
    }
}

fn signed_volume(vertices: &[Vec3], tet: &[u32; 4]) -> f64 {
    let a = vertices[tet[0] as usize];
    let b = vertices[tet[1] as usize];
    let c = vertices[tet[2] as usize];
    let d = vertices[tet[3] as usize];
    la::dot(la::cross(la::sub(b, a), la::sub(c, a)), la::sub(d, a)) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_kuhn_split() {
        let domain = BoxDomain::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        let mesh = BackgroundMesh::build_uniform(domain, 1.0).unwrap();
        assert_eq!(mesh.n_tets(), 6);
        assert_eq!(mesh.n_vertices(), 8);
        let vol: f64 = (0..6).map(|t| mesh.tet_volume(t)).sum();
        assert!((vol - 1.0).abs() < 1e-14);
        for t in 0..6 {
            assert!(mesh.tet_volume(t) > 0.0);
            assert!((mesh.tet_volume(t) - 1.0 / 6.0).abs() < 1e-14);
            assert!((mesh.tet_diameter(t) - 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn benchmark_domain_grid_counts() {
        let mesh = BackgroundMesh::build_uniform(BoxDomain::benchmark(), 0.5).unwrap();
        let nx = (14.0 / 3.0 / 0.5f64).ceil() as usize;
        let ny = (8.0 / 3.0 / 0.5f64).ceil() as usize;
        assert_eq!(mesh.n_cells(), [nx, ny, ny]);
        assert_eq!(mesh.n_tets(), 6 * nx * ny * ny);
        let vol: f64 = (0..mesh.n_tets()).map(|t| mesh.tet_volume(t)).sum();
        let exact = mesh.domain().volume();
        assert!((vol - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn refine_halves_h_and_octuples_cells() {
        let mesh = BackgroundMesh::build_uniform(BoxDomain::benchmark(), 0.5).unwrap();
        let fine = mesh.refine().unwrap();
        assert!((fine.h() - 0.25).abs() < 1e-15);
        assert_eq!(fine.n_tets(), 8 * mesh.n_tets());
        let finer = fine.refine().unwrap();
        assert!((finer.h() - 0.125).abs() < 1e-15);
        let vol: f64 = (0..fine.n_tets()).map(|t| fine.tet_volume(t)).sum();
        let exact = mesh.domain().volume();
        assert!((vol - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn face_conformity() {
        let mesh =
            BackgroundMesh::build_uniform(BoxDomain::new([0.0; 3], [1.0, 1.0, 1.0]).unwrap(), 0.5)
                .unwrap();
        let mut faces: std::collections::HashMap<[u32; 3], usize> = std::collections::HashMap::new();
        for t in 0..mesh.n_tets() {
            let tet = mesh.tet(t);
            for skip in 0..4 {
                let mut f: Vec<u32> = (0..4).filter(|&l| l != skip).map(|l| tet[l]).collect();
                f.sort_unstable();
                *faces.entry([f[0], f[1], f[2]]).or_insert(0) += 1;
            }
        }
        let boundary = faces.values().filter(|&&c| c == 1).count();
        let interior = faces.values().filter(|&&c| c == 2).count();
        assert_eq!(boundary + interior, faces.len());
        // 2 triangles per boundary cell face, 6 box sides of 2x2 cells each
        assert_eq!(boundary, 2 * 6 * 4);
    }

    #[test]
    fn shape_regularity_constant_across_refinement() {
        // circumradius/inradius ratio of every Kuhn tet of a cubic cell is
        // identical and preserved under uniform refinement
        let domain = BoxDomain::new([0.0; 3], [1.0, 1.0, 1.0]).unwrap();
        let coarse = BackgroundMesh::build_uniform(domain, 1.0).unwrap();
        let fine = coarse.refine().unwrap();
        let ratio = |mesh: &BackgroundMesh, t: usize| {
            let vs = mesh.tet_vertices(t);
            let vol = mesh.tet_volume(t);
            // inradius = 3 vol / total face area
            let mut area = 0.0;
            for skip in 0..4 {
                let f: Vec<Vec3> = (0..4).filter(|&l| l != skip).map(|l| vs[l]).collect();
                area += 0.5 * la::norm(la::cross(la::sub(f[1], f[0]), la::sub(f[2], f[0])));
            }
            let inr = 3.0 * vol / area;
            // circumradius via distance from circumcenter (solve linear system)
            let m = [
                la::sub(vs[1], vs[0]),
                la::sub(vs[2], vs[0]),
                la::sub(vs[3], vs[0]),
            ];
            let rhs = [
                0.5 * la::dot(la::add(vs[1], vs[0]), la::sub(vs[1], vs[0])),
                0.5 * la::dot(la::add(vs[2], vs[0]), la::sub(vs[2], vs[0])),
                0.5 * la::dot(la::add(vs[3], vs[0]), la::sub(vs[3], vs[0])),
            ];
            let c = la::solve3(&m, rhs).unwrap();
            la::norm(la::sub(c, vs[0])) / inr
        };
        let r0 = ratio(&coarse, 0);
        for t in 0..coarse.n_tets() {
            assert!((ratio(&coarse, t) - r0).abs() < 1e-12);
        }
        for t in 0..fine.n_tets() {
            assert!((ratio(&fine, t) - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(BackgroundMesh::build_uniform(BoxDomain::benchmark(), -1.0).is_err());
        assert!(BackgroundMesh::build_uniform(BoxDomain::benchmark(), 0.0).is_err());
        assert!(matches!(
            BackgroundMesh::build_with_cap(BoxDomain::benchmark(), 0.01, 1000),
            Err(Error::MemoryCap { .. })
        ));
        assert!(BoxDomain::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn barycentric_roundtrip() {
        let mesh = BackgroundMesh::build_uniform(BoxDomain::benchmark(), 0.5).unwrap();
        let t = 1234 % mesh.n_tets();
        let vs = mesh.tet_vertices(t);
        let lam = [0.1, 0.2, 0.3, 0.4];
        let mut x = [0.0; 3];
        for i in 0..4 {
            x = la::add(x, la::scale(lam[i], vs[i]));
        }
        let back = mesh.barycentric(t, x);
        for i in 0..4 {
            assert!((back[i] - lam[i]).abs() < 1e-12);
        }
        // gradient consistency: sum of gradients is zero
        let grads = mesh.barycentric_gradients(t);
        let mut s = [0.0; 3];
        for g in grads {
            s = la::add(s, g);
        }
        assert!(la::norm(s) < 1e-12);
    }
}
