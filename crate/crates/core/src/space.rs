//! Narrow-band Taylor-Hood spaces and degree-of-freedom maps.
//!
//! Velocity is componentwise continuous P_{m+1} on the band elements,
//! pressure continuous P_m on the cut elements; both are restrictions of the
//! time-independent bulk spaces, so nodal values are attached to global mesh
//! entities (vertices, edges, faces) and numbering is reproducible: scalar
//! nodes sorted by entity key, velocity dofs interleaved by component.

use crate::la::{self, Mat3, Vec3};
use crate::levelset::BandClassification;
use crate::mesh::BackgroundMesh;
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangeDegree {
    P1,
    P2,
    P3,
}

impl LagrangeDegree {
    pub fn of_order(k: usize) -> Result<Self> {
        match k {
            1 => Ok(LagrangeDegree::P1),
            2 => Ok(LagrangeDegree::P2),
            3 => Ok(LagrangeDegree::P3),
            _ => Err(Error::UnsupportedConfiguration(format!(
                "Lagrange degree {k} not implemented"
            ))),
        }
    }

    pub fn nodes_per_tet(self) -> usize {
        match self {
            LagrangeDegree::P1 => 4,
            LagrangeDegree::P2 => 10,
            LagrangeDegree::P3 => 20,
        }
    }
}

pub const MAX_NODES: usize = 20;

const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const LOCAL_FACES: [(usize, usize, usize); 4] = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)];

/// Values and barycentric-derivative rows of all shape functions at a point.
/// Physical gradients follow by chaining with the barycentric gradients.
pub fn shape_functions(
    degree: LagrangeDegree,
    bary: [f64; 4],
) -> ([f64; MAX_NODES], [[f64; 4]; MAX_NODES], usize) {
    let mut vals = [0.0; MAX_NODES];
    let mut ders = [[0.0; 4]; MAX_NODES];
    let l = bary;
    match degree {
        LagrangeDegree::P1 => {
            for i in 0..4 {
                vals[i] = l[i];
                ders[i][i] = 1.0;
            }
            (vals, ders, 4)
        }
        LagrangeDegree::P2 => {
            for i in 0..4 {
                vals[i] = l[i] * (2.0 * l[i] - 1.0);
                ders[i][i] = 4.0 * l[i] - 1.0;
            }
            for (k, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
                vals[4 + k] = 4.0 * l[i] * l[j];
                ders[4 + k][i] = 4.0 * l[j];
                ders[4 + k][j] = 4.0 * l[i];
            }
            (vals, ders, 10)
        }
        LagrangeDegree::P3 => {
            for i in 0..4 {
                vals[i] = 0.5 * l[i] * (3.0 * l[i] - 1.0) * (3.0 * l[i] - 2.0);
                ders[i][i] = 0.5 * (27.0 * l[i] * l[i] - 18.0 * l[i] + 2.0);
            }
            // two nodes per edge: first weighted toward vertex i (l_i = 2/3)
            for (k, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
                let a = 4 + 2 * k;
                vals[a] = 4.5 * l[i] * l[j] * (3.0 * l[i] - 1.0);
                ders[a][i] = 4.5 * l[j] * (6.0 * l[i] - 1.0);
                ders[a][j] = 4.5 * l[i] * (3.0 * l[i] - 1.0);
                vals[a + 1] = 4.5 * l[i] * l[j] * (3.0 * l[j] - 1.0);
                ders[a + 1][j] = 4.5 * l[i] * (6.0 * l[j] - 1.0);
                ders[a + 1][i] = 4.5 * l[j] * (3.0 * l[j] - 1.0);
            }
            for (k, &(i, j, m)) in LOCAL_FACES.iter().enumerate() {
                let a = 16 + k;
                vals[a] = 27.0 * l[i] * l[j] * l[m];
                ders[a][i] = 27.0 * l[j] * l[m];
                ders[a][j] = 27.0 * l[i] * l[m];
                ders[a][m] = 27.0 * l[i] * l[j];
            }
            (vals, ders, 20)
        }
    }
}

/// Global scalar-node key: vertices, then edge nodes, then face nodes.
/// Ordering the keys gives the deterministic global numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum NodeKey {
    Vertex(u32),
    /// Edge index plus slot (0 for P2; 0/1 for the two P3 nodes, slot 0 being
    /// nearer the smaller global vertex).
    Edge(u32, u8),
    /// Sorted vertex triple of the face (P3 only).
    Face([u32; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// Finite element coefficients on one band space.
#[derive(Debug, Clone)]
pub struct FEField {
    pub kind: FieldKind,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ScalarSpace {
    degree: LagrangeDegree,
    elements: Vec<u32>,
    node_coords: Vec<Vec3>,
    /// element -> scalar node indices (nodes_per_tet entries each).
    elem_nodes: HashMap<u32, Vec<u32>>,
}

impl ScalarSpace {
    fn build(mesh: &BackgroundMesh, elements: &[u32], degree: LagrangeDegree) -> Self {
        // enumerate node keys per element in the local shape-function order
        let keys_of = |tet: u32| -> Vec<NodeKey> {
            let vs = mesh.tet(tet as usize);
            let mut keys = Vec::with_capacity(degree.nodes_per_tet());
            for &v in &vs {
                keys.push(NodeKey::Vertex(v));
            }
            match degree {
                LagrangeDegree::P1 => {}
                LagrangeDegree::P2 => {
                    for &(i, j) in &LOCAL_EDGES {
                        keys.push(NodeKey::Edge(mesh.edge_index(vs[i], vs[j]), 0));
                    }
                }
                LagrangeDegree::P3 => {
                    for &(i, j) in &LOCAL_EDGES {
                        let e = mesh.edge_index(vs[i], vs[j]);
                        // local slot order: first node nearer vertex i
                        let (s0, s1) = if vs[i] < vs[j] { (0, 1) } else { (1, 0) };
                        keys.push(NodeKey::Edge(e, s0));
                        keys.push(NodeKey::Edge(e, s1));
                    }
                    for &(i, j, m) in &LOCAL_FACES {
                        let mut f = [vs[i], vs[j], vs[m]];
                        f.sort_unstable();
                        keys.push(NodeKey::Face(f));
                    }
                }
            }
            keys
        };

        let mut all_keys: Vec<NodeKey> = elements.iter().flat_map(|&t| keys_of(t)).collect();
        all_keys.sort_unstable();
        all_keys.dedup();
        let index: HashMap<NodeKey, u32> = all_keys
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i as u32))
            .collect();

        let node_coords = all_keys
            .iter()
            .map(|k| match *k {
                NodeKey::Vertex(v) => mesh.vertex(v),
                NodeKey::Edge(e, slot) => {
                    if degree == LagrangeDegree::P2 {
                        mesh.edge_midpoint(e)
                    } else {
                        let (a, b) = mesh.edges()[e as usize];
                        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
                        let s = if slot == 0 { 1.0 / 3.0 } else { 2.0 / 3.0 };
                        la::add(pa, la::scale(s, la::sub(pb, pa)))
                    }
                }
                NodeKey::Face(f) => la::scale(
                    1.0 / 3.0,
                    la::add(
                        la::add(mesh.vertex(f[0]), mesh.vertex(f[1])),
                        mesh.vertex(f[2]),
                    ),
                ),
            })
            .collect();

        let elem_nodes = elements
            .iter()
            .map(|&t| (t, keys_of(t).iter().map(|k| index[k]).collect()))
            .collect();

        ScalarSpace {
            degree,
            elements: elements.to_vec(),
            node_coords,
            elem_nodes,
        }
    }
}

/// Velocity/pressure numbering restricted to the narrow bands of one step.
#[derive(Debug, Clone)]
pub struct BandDofMap {
    pub m: usize,
    velocity: ScalarSpace,
    pressure: ScalarSpace,
}

/// Builds the Taylor-Hood pair P_{m+1} (velocity, band elements) / P_m
/// (pressure, cut elements).
pub fn build_spaces(
    mesh: &BackgroundMesh,
    band: &BandClassification,
    m: usize,
) -> Result<BandDofMap> {
    if band.band_elements.is_empty() || band.cut_elements.is_empty() {
        return Err(Error::EmptyBand);
    }
    let vel_degree = LagrangeDegree::of_order(m + 1)?;
    let press_degree = LagrangeDegree::of_order(m)?;
    Ok(BandDofMap {
        m,
        velocity: ScalarSpace::build(mesh, &band.band_elements, vel_degree),
        pressure: ScalarSpace::build(mesh, &band.cut_elements, press_degree),
    })
}

impl BandDofMap {
    pub fn n_velocity_scalar_nodes(&self) -> usize {
        self.velocity.node_coords.len()
    }

    pub fn n_velocity_dofs(&self) -> usize {
        3 * self.velocity.node_coords.len()
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.pressure.node_coords.len()
    }

    pub fn velocity_degree(&self) -> LagrangeDegree {
        self.velocity.degree
    }

    pub fn pressure_degree(&self) -> LagrangeDegree {
        self.pressure.degree
    }

    pub fn band_elements(&self) -> &[u32] {
        &self.velocity.elements
    }

    pub fn cut_elements(&self) -> &[u32] {
        &self.pressure.elements
    }

    pub fn velocity_nodes(&self, elem: u32) -> Result<&[u32]> {
        self.velocity
            .elem_nodes
            .get(&elem)
            .map(|v| v.as_slice())
            .ok_or(Error::InactiveElement(elem as usize))
    }

    pub fn pressure_nodes(&self, elem: u32) -> Result<&[u32]> {
        self.pressure
            .elem_nodes
            .get(&elem)
            .map(|v| v.as_slice())
            .ok_or(Error::InactiveElement(elem as usize))
    }

    pub fn velocity_node_coord(&self, node: u32) -> Vec3 {
        self.velocity.node_coords[node as usize]
    }

    pub fn pressure_node_coord(&self, node: u32) -> Vec3 {
        self.pressure.node_coords[node as usize]
    }

    /// Nodal interpolation of an analytic vector field.
    pub fn interpolate_velocity(&self, mut f: impl FnMut(Vec3) -> Vec3) -> FEField {
        let mut coeffs = vec![0.0; self.n_velocity_dofs()];
        for (s, &x) in self.velocity.node_coords.iter().enumerate() {
            let v = f(x);
            for c in 0..3 {
                coeffs[3 * s + c] = v[c];
            }
        }
        FEField {
            kind: FieldKind::Velocity,
            coeffs,
        }
    }

    /// Nodal interpolation of an analytic scalar field.
    pub fn interpolate_pressure(&self, mut f: impl FnMut(Vec3) -> f64) -> FEField {
        let coeffs = self.pressure.node_coords.iter().map(|&x| f(x)).collect();
        FEField {
            kind: FieldKind::Pressure,
            coeffs,
        }
    }

    /// Velocity value and Jacobian at barycentric coordinates of an active
    /// band element.
    pub fn eval_velocity(
        &self,
        mesh: &BackgroundMesh,
        field: &FEField,
        elem: u32,
        bary: [f64; 4],
    ) -> Result<(Vec3, Mat3)> {
        debug_assert_eq!(field.kind, FieldKind::Velocity);
        let nodes = self.velocity_nodes(elem)?;
        let (vals, ders, count) = shape_functions(self.velocity.degree, bary);
        let grads = mesh.barycentric_gradients(elem as usize);
        let mut value = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        for a in 0..count {
            let base = 3 * nodes[a] as usize;
            let mut grad_a = [0.0; 3];
            for l in 0..4 {
                grad_a = la::add(grad_a, la::scale(ders[a][l], grads[l]));
            }
            for c in 0..3 {
                let coeff = field.coeffs[base + c];
                value[c] += vals[a] * coeff;
                for j in 0..3 {
                    jac[c][j] += grad_a[j] * coeff;
                }
            }
        }
        Ok((value, jac))
    }

    /// Pressure value and gradient at barycentric coordinates of an active
    /// cut element.
    pub fn eval_pressure(
        &self,
        mesh: &BackgroundMesh,
        field: &FEField,
        elem: u32,
        bary: [f64; 4],
    ) -> Result<(f64, Vec3)> {
        debug_assert_eq!(field.kind, FieldKind::Pressure);
        let nodes = self.pressure_nodes(elem)?;
        let (vals, ders, count) = shape_functions(self.pressure.degree, bary);
        let grads = mesh.barycentric_gradients(elem as usize);
        let mut value = 0.0;
        let mut grad = [0.0; 3];
        for a in 0..count {
            let coeff = field.coeffs[nodes[a] as usize];
            value += vals[a] * coeff;
            for l in 0..4 {
                grad = la::add(grad, la::scale(ders[a][l] * coeff, grads[l]));
            }
        }
        Ok((value, grad))
    }
}
