//! Zero-level triangulation of the P1 level set inside cut tets and
//! quadrature on the resulting discrete surface.
//!
//! With a per-tet linear level set the zero level is a plane section: a
//! triangle (one vertex separated) or a planar quad (two vertices separated),
//! split along its shorter diagonal. Triangle normals are oriented along
//! grad(phi_h).

use crate::la::{self, Vec3};
use crate::levelset::{sign_positive, BandClassification, DiscreteLevelSet};
use crate::mesh::BackgroundMesh;
use crate::quadrature::{self, TriangleRule};
use crate::Result;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct CutTriangle {
    pub vertices: [Vec3; 3],
    pub parent: u32,
    pub area: f64,
}

/// One mapped quadrature point on the discrete surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfQuadPoint {
    pub x: Vec3,
    /// Physical weight (already scaled by triangle area).
    pub w: f64,
    pub tet: u32,
}

/// Triangulated discrete surface of one time step with mapped quadrature.
#[derive(Debug, Clone)]
pub struct CutSurface {
    pub triangles: Vec<CutTriangle>,
    pub quad_points: Vec<SurfQuadPoint>,
    /// Contiguous range of `quad_points` per cut element.
    element_ranges: HashMap<u32, (u32, u32)>,
    pub total_area: f64,
    pub quad_degree: usize,
}

impl CutSurface {
    /// Triangulates the zero level over the cut elements of `band` and maps a
    /// triangle rule of the requested exactness onto every triangle.
    pub fn extract(
        mesh: &BackgroundMesh,
        dls: &DiscreteLevelSet,
        band: &BandClassification,
        quad_degree: usize,
    ) -> Result<Self> {
        let rule = quadrature::triangle_rule(quad_degree)?;
        let mut triangles = Vec::with_capacity(band.cut_elements.len() * 2);
        let mut quad_points = Vec::new();
        let mut element_ranges = HashMap::with_capacity(band.cut_elements.len());
        let mut total_area = 0.0;
        for &t in &band.cut_elements {
            let tris = triangulate_zero_level(mesh, dls, t as usize);
            let start = quad_points.len() as u32;
            for tri in tris {
                total_area += tri.area;
                for (pt, w) in rule.points.iter().zip(&rule.weights) {
                    let mut x = [0.0; 3];
                    for i in 0..3 {
                        x = la::add(x, la::scale(pt[i], tri.vertices[i]));
                    }
                    quad_points.push(SurfQuadPoint {
                        x,
                        w: w * tri.area,
                        tet: t,
                    });
                }
                triangles.push(tri);
            }
            element_ranges.insert(t, (start, quad_points.len() as u32));
        }
        Ok(CutSurface {
            triangles,
            quad_points,
            element_ranges,
            total_area,
            quad_degree,
        })
    }

    pub fn points_of(&self, tet: u32) -> &[SurfQuadPoint] {
        match self.element_ranges.get(&tet) {
            Some(&(a, b)) => &self.quad_points[a as usize..b as usize],
            None => &[],
        }
    }

    /// Integrates a function over the discrete surface.
    pub fn integrate(&self, mut f: impl FnMut(&SurfQuadPoint) -> f64) -> f64 {
        self.quad_points.iter().map(|q| q.w * f(q)).sum()
    }
}

/// Reference rule lookup for surface triangles (errors on unsupported degree).
pub fn surface_rule(degree: usize) -> Result<&'static TriangleRule> {
    quadrature::triangle_rule(degree)
}

/// Marching-tetrahedra case table for one cut tet: 0-2 oriented triangles.
pub fn triangulate_zero_level(
    mesh: &BackgroundMesh,
    dls: &DiscreteLevelSet,
    tet: usize,
) -> Vec<CutTriangle> {
    let vs = mesh.tet(tet);
    let pos = mesh.tet_vertices(tet);
    let vals = [
        dls.vertex_value(vs[0]),
        dls.vertex_value(vs[1]),
        dls.vertex_value(vs[2]),
        dls.vertex_value(vs[3]),
    ];
    let max_abs = dls.max_abs();
    let grad = dls.gradient(mesh, tet);
    triangulate_values(&pos, &vals, max_abs, grad, tet as u32, mesh.h())
}

fn triangulate_values(
    pos: &[Vec3; 4],
    vals: &[f64; 4],
    max_abs: f64,
    grad: Vec3,
    parent: u32,
    h: f64,
) -> Vec<CutTriangle> {
    let neg: Vec<usize> = (0..4)
        .filter(|&i| !sign_positive(vals[i], max_abs))
        .collect();
    let cut_point = |i: usize, j: usize| -> Vec3 {
        let s = vals[i] / (vals[i] - vals[j]);
        la::add(pos[i], la::scale(s, la::sub(pos[j], pos[i])))
    };
    let min_area = 1e-14 * h * h;
    let mut out = Vec::with_capacity(2);
    let mut push = |a: Vec3, b: Vec3, c: Vec3| {
        let normal = la::cross(la::sub(b, a), la::sub(c, a));
        let area = 0.5 * la::norm(normal);
        if area < min_area {
            return;
        }
        let tri = if la::dot(normal, grad) >= 0.0 {
            [a, b, c]
        } else {
            [a, c, b]
        };
        out.push(CutTriangle {
            vertices: tri,
            parent,
            area,
        });
    };
    match neg.len() {
        1 | 3 => {
            // one vertex separated from the other three
            let apex = if neg.len() == 1 {
                neg[0]
            } else {
                (0..4).find(|i| !neg.contains(i)).unwrap()
            };
            let others: Vec<usize> = (0..4).filter(|&i| i != apex).collect();
            let p: Vec<Vec3> = others.iter().map(|&j| cut_point(apex, j)).collect();
            push(p[0], p[1], p[2]);
        }
        2 => {
            let (a, b) = (neg[0], neg[1]);
            let cd: Vec<usize> = (0..4).filter(|i| !neg.contains(i)).collect();
            let (c, d) = (cd[0], cd[1]);
            // planar quad in cyclic order ac - ad - bd - bc
            let pac = cut_point(a, c);
            let pad = cut_point(a, d);
            let pbd = cut_point(b, d);
            let pbc = cut_point(b, c);
            let diag1 = la::norm(la::sub(pbd, pac));
            let diag2 = la::norm(la::sub(pbc, pad));
            if diag1 <= diag2 {
                push(pac, pad, pbd);
                push(pac, pbd, pbc);
            } else {
                push(pad, pbd, pbc);
                push(pad, pbc, pac);
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{classify_elements, LevelSet};
    use crate::mesh::BoxDomain;

    fn reference_tet() -> [Vec3; 4] {
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn one_negative_vertex_gives_midpoint_triangle() {
        let pos = reference_tet();
        let vals = [-1.0, 1.0, 1.0, 1.0];
        let tris = triangulate_values(&pos, &vals, 1.0, [1.0, 1.0, 1.0], 0, 1.0);
        assert_eq!(tris.len(), 1);
        let mut got: Vec<Vec3> = tris[0].vertices.to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [[0.0, 0.0, 0.5], [0.0, 0.5, 0.0], [0.5, 0.0, 0.0]];
        for (g, w) in got.iter().zip(&want) {
            assert!(la::norm(la::sub(*g, *w)) < 1e-14);
        }
        // orientation: normal along grad
        let t = &tris[0].vertices;
        let n = la::cross(la::sub(t[1], t[0]), la::sub(t[2], t[0]));
        assert!(la::dot(n, [1.0, 1.0, 1.0]) > 0.0);
    }

    #[test]
    fn two_negative_vertices_give_quad() {
        let pos = reference_tet();
        let vals = [-1.0, -1.0, 1.0, 1.0];
        let tris = triangulate_values(&pos, &vals, 1.0, [0.0, 1.0, 1.0], 0, 1.0);
        assert_eq!(tris.len(), 2);
        // quad corners: midpoints of edges 02, 03, 12, 13
        let quad = [
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 0.5],
            [0.5, 0.5, 0.0],
            [0.5, 0.0, 0.5],
        ];
        let total: f64 = tris.iter().map(|t| t.area).sum();
        // area of the planar quad via its two diagonal triangles
        let qa = 0.5
            * la::norm(la::cross(
                la::sub(quad[2], quad[0]),
                la::sub(quad[1], quad[0]),
            ))
            + 0.5
                * la::norm(la::cross(
                    la::sub(quad[2], quad[3]),
                    la::sub(quad[1], quad[3]),
                ));
        assert!((total - qa).abs() < 1e-14);
        for t in &tris {
            let n = la::cross(
                la::sub(t.vertices[1], t.vertices[0]),
                la::sub(t.vertices[2], t.vertices[0]),
            );
            assert!(la::dot(n, [0.0, 1.0, 1.0]) > 0.0);
        }
    }

    #[test]
    fn uncut_tet_is_empty() {
        let pos = reference_tet();
        let tris = triangulate_values(&pos, &[1.0, 1.0, 1.0, 1.0], 1.0, [1.0, 0.0, 0.0], 0, 1.0);
        assert!(tris.is_empty());
        let tris = triangulate_values(&pos, &[-1.0, -1.0, -1.0, -1.0], 1.0, [1.0, 0.0, 0.0], 0, 1.0);
        assert!(tris.is_empty());
    }

    fn sphere_cut(h: f64) -> (BackgroundMesh, DiscreteLevelSet, CutSurface) {
        let domain = BoxDomain::new([-1.4, -1.4, -1.4], [1.4, 1.4, 1.4]).unwrap();
        let mesh = BackgroundMesh::build_uniform(domain, h).unwrap();
        let ls = LevelSet::benchmark();
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.0, 1).unwrap();
        let band = classify_elements(&mesh, &dls, 0.0).unwrap();
        let cut = CutSurface::extract(&mesh, &dls, &band, 6).unwrap();
        (mesh, dls, cut)
    }

    #[test]
    fn quad_points_lie_on_discrete_surface() {
        let (mesh, dls, cut) = sphere_cut(0.25);
        let scale = 1.0 + dls.max_abs();
        for q in cut.quad_points.iter().step_by(5) {
            let val = dls.value_at(&mesh, q.tet as usize, q.x);
            assert!(val.abs() <= 1e-10 * scale, "phi_h = {val:e} off surface");
            assert!(q.w > 0.0);
        }
        for tri in cut.triangles.iter().step_by(7) {
            for v in tri.vertices {
                let val = dls.value_at(&mesh, tri.parent as usize, v);
                assert!(val.abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn sphere_area_and_moment_converge() {
        // discrete area -> 4 pi at second order; integral of x^2 -> 4 pi / 3
        let exact_area = 4.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        let mut moment_errs = Vec::new();
        for k in 0..3 {
            let (_, _, cut) = sphere_cut(0.5 / 2f64.powi(k));
            errs.push((cut.total_area - exact_area).abs());
            let m = cut.integrate(|q| q.x[0] * q.x[0]);
            moment_errs.push((m - exact_area / 3.0).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "monotone: {errs:?}");
        for k in 0..2 {
            let order = (errs[k] / errs[k + 1]).log2();
            assert!((1.7..=2.3).contains(&order), "area order {order}");
            let morder = (moment_errs[k] / moment_errs[k + 1]).log2();
            assert!((1.5..=2.5).contains(&morder), "moment order {morder}");
        }
    }

    #[test]
    fn cut_count_scales_quadratically() {
        let mut counts = Vec::new();
        for k in 0..3 {
            let (_, _, cut) = sphere_cut(0.5 / 2f64.powi(k));
            let mut parents: Vec<u32> = cut.triangles.iter().map(|t| t.parent).collect();
            parents.dedup();
            counts.push(parents.len() as f64);
        }
        for k in 0..2 {
            let ratio = counts[k + 1] / counts[k];
            assert!((3.2..=5.0).contains(&ratio), "cut-count ratio {ratio}");
        }
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(surface_rule(9).is_err());
        assert!(surface_rule(6).is_ok());
    }
}
