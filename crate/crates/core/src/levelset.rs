//! Discrete level-set geometry: interpolation, derived normal fields,
//! curvature approximation and narrow-band element classification.
//!
//! The surface at time t is the zero level of a P1 interpolant `phi_h` of the
//! analytic level-set function. A P2 companion interpolant supplies the
//! improved normal used by the tangentiality penalty. The curvature proxy is
//! the tangential Jacobian of an Oswald-averaged (vertex-averaged) normal
//! field.

use crate::dual::{Scalar, D4};
use crate::la::{self, Mat3, Vec3};
use crate::mesh::BackgroundMesh;
use crate::quadrature;
use crate::{Error, Result};
use std::collections::HashMap;

/// Analytic level-set functions known in closed form. All derived quantities
/// (gradient, time derivative, normal speed) come from one generic expression
/// evaluated with dual numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSet {
    /// phi = |x - g(t)|^2 - 1 with center path g(t) = (speed * t, 0, 0).
    MovingSphere { speed: f64 },
    /// phi = n . x - offset, a stationary plane (unit normal assumed).
    Plane { normal: Vec3, offset: f64 },
    /// phi = |x|^4 - 1; same zero set as the unit sphere but a quartic
    /// profile, so the P2 companion interpolant is not exact.
    QuarticSphere,
}

impl LevelSet {
    pub fn benchmark() -> Self {
        LevelSet::MovingSphere { speed: 0.2 }
    }

    /// Sphere center at time t (zero for non-sphere level sets).
    pub fn center(&self, t: f64) -> Vec3 {
        match self {
            LevelSet::MovingSphere { speed } => [speed * t, 0.0, 0.0],
            _ => [0.0; 3],
        }
    }

    fn eval<T: Scalar>(&self, t: T, x: [T; 3]) -> T {
        match self {
            LevelSet::MovingSphere { speed } => {
                let g = [T::from_f64(*speed) * t, T::zero(), T::zero()];
                let r = la::gsub(x, g);
                la::gdot(r, r) - T::one()
            }
            LevelSet::Plane { normal, offset } => {
                la::gdot(
                    [
                        T::from_f64(normal[0]),
                        T::from_f64(normal[1]),
                        T::from_f64(normal[2]),
                    ],
                    x,
                ) - T::from_f64(*offset)
            }
            LevelSet::QuarticSphere => {
                let r2 = la::gdot(x, x);
                r2 * r2 - T::one()
            }
        }
    }

    pub fn value(&self, t: f64, x: Vec3) -> f64 {
        self.eval(t, x)
    }

    pub fn gradient(&self, t: f64, x: Vec3) -> Vec3 {
        let xt = [
            D4::variable(x[0], 1),
            D4::variable(x[1], 2),
            D4::variable(x[2], 3),
        ];
        let v = self.eval(D4::variable(t, 0), xt);
        [v.d[1], v.d[2], v.d[3]]
    }

    pub fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        let xt = [
            D4::variable(x[0], 1),
            D4::variable(x[1], 2),
            D4::variable(x[2], 3),
        ];
        self.eval(D4::variable(t, 0), xt).d[0]
    }

    /// Outward unit normal of the level sets, grad(phi)/|grad(phi)|.
    pub fn unit_normal(&self, t: f64, x: Vec3) -> Result<Vec3> {
        let g = self.gradient(t, x);
        let n = la::norm(g);
        if n < 1e-12 {
            return Err(Error::DegenerateGradient(n));
        }
        Ok(la::scale(1.0 / n, g))
    }

    /// Normal velocity of the level sets, -phi_t / |grad(phi)|.
    pub fn normal_speed(&self, t: f64, x: Vec3) -> Result<f64> {
        let xt = [
            D4::variable(x[0], 1),
            D4::variable(x[1], 2),
            D4::variable(x[2], 3),
        ];
        let v = self.eval(D4::variable(t, 0), xt);
        let grad_norm = la::norm([v.d[1], v.d[2], v.d[3]]);
        if grad_norm < 1e-12 {
            return Err(Error::DegenerateGradient(grad_norm));
        }
        Ok(-v.d[0] / grad_norm)
    }
}

/// Continuous piecewise-polynomial level-set approximation at one time node:
/// P1 nodal values plus the P2 companion for the improved normal.
#[derive(Debug, Clone)]
pub struct DiscreteLevelSet {
    pub q: usize,
    pub time: f64,
    /// phi_h values at mesh vertices.
    vertex_values: Vec<f64>,
    /// Companion P2 interpolant: vertex values reused, edge-midpoint values
    /// stored per mesh edge.
    edge_values: Vec<f64>,
    max_abs: f64,
}

impl DiscreteLevelSet {
    /// Nodal interpolation of the analytic level set at time `t`. Only q = 1
    /// is supported; the companion interpolant always has degree q + 1.
    pub fn interpolate(mesh: &BackgroundMesh, ls: &LevelSet, t: f64, q: usize) -> Result<Self> {
        if q != 1 {
            return Err(Error::UnsupportedConfiguration(format!(
                "geometry degree q = {q}; only q = 1 (planar cuts) is implemented"
            )));
        }
        let mut vertex_values = Vec::with_capacity(mesh.n_vertices());
        let mut max_abs = 0f64;
        for v in 0..mesh.n_vertices() as u32 {
            let val = ls.value(t, mesh.vertex(v));
            max_abs = max_abs.max(val.abs());
            vertex_values.push(val);
        }
        let mut edge_values = Vec::with_capacity(mesh.n_edges());
        for e in 0..mesh.n_edges() as u32 {
            edge_values.push(ls.value(t, mesh.edge_midpoint(e)));
        }
        Ok(DiscreteLevelSet {
            q,
            time: t,
            vertex_values,
            edge_values,
            max_abs,
        })
    }

    pub fn vertex_value(&self, v: u32) -> f64 {
        self.vertex_values[v as usize]
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// P1 value at barycentric coordinates of tet `t`.
    pub fn value(&self, mesh: &BackgroundMesh, tet: usize, bary: [f64; 4]) -> f64 {
        let vs = mesh.tet(tet);
        (0..4)
            .map(|i| bary[i] * self.vertex_values[vs[i] as usize])
            .sum()
    }

    pub fn value_at(&self, mesh: &BackgroundMesh, tet: usize, x: Vec3) -> f64 {
        self.value(mesh, tet, mesh.barycentric(tet, x))
    }

    /// P1 gradient on tet `t` (constant).
    pub fn gradient(&self, mesh: &BackgroundMesh, tet: usize) -> Vec3 {
        let vs = mesh.tet(tet);
        let grads = mesh.barycentric_gradients(tet);
        let mut g = [0.0; 3];
        for i in 0..4 {
            g = la::add(g, la::scale(self.vertex_values[vs[i] as usize], grads[i]));
        }
        g
    }

    /// Gradient of the P2 companion interpolant at a physical point.
    pub fn companion_gradient_at(&self, mesh: &BackgroundMesh, tet: usize, x: Vec3) -> Vec3 {
        let vs = mesh.tet(tet);
        let bary = mesh.barycentric(tet, x);
        let grads = mesh.barycentric_gradients(tet);
        let mut g = [0.0; 3];
        // vertex basis: lambda (2 lambda - 1)
        for i in 0..4 {
            let coeff = self.vertex_values[vs[i] as usize];
            g = la::add(g, la::scale(coeff * (4.0 * bary[i] - 1.0), grads[i]));
        }
        // edge basis: 4 lambda_i lambda_j
        const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for &(i, j) in &EDGES {
            let e = mesh.edge_index(vs[i], vs[j]);
            let coeff = self.edge_values[e as usize];
            let part = la::add(
                la::scale(4.0 * bary[j], grads[i]),
                la::scale(4.0 * bary[i], grads[j]),
            );
            g = la::add(g, la::scale(coeff, part));
        }
        g
    }
}

/// Active element sets of one time step: the cut set carries pressure, the
/// band carries velocity.
#[derive(Debug, Clone)]
pub struct BandClassification {
    /// Sorted tet indices intersected by the discrete surface.
    pub cut_elements: Vec<u32>,
    /// Sorted tet indices within band distance `delta` (superset of the cut set).
    pub band_elements: Vec<u32>,
    pub delta: f64,
}

impl BandClassification {
    pub fn contains_band(&self, tet: u32) -> bool {
        self.band_elements.binary_search(&tet).is_ok()
    }

    pub fn contains_cut(&self, tet: u32) -> bool {
        self.cut_elements.binary_search(&tet).is_ok()
    }

    /// True if every cut element of `self` lies in the band of `other`.
    pub fn cut_contained_in_band_of(&self, other: &BandClassification) -> bool {
        self.missing_from_band_of(other) == 0
    }

    pub fn missing_from_band_of(&self, other: &BandClassification) -> usize {
        self.cut_elements
            .iter()
            .filter(|&&t| !other.contains_band(t))
            .count()
    }
}

/// Sign convention: values within the roundoff threshold count as positive,
/// making cut topology deterministic.
pub fn sign_positive(value: f64, max_abs: f64) -> bool {
    value >= -1e-14 * (1.0 + max_abs)
}

/// Classifies elements into the cut set and the distance-`delta` narrow band.
/// The band test uses the proxy |phi_h| / |grad phi_h| evaluated at the four
/// vertices and a degree-2 interior sample; for a P1 level set the vertex
/// minimum is exact on uncut tets.
pub fn classify_elements(
    mesh: &BackgroundMesh,
    dls: &DiscreteLevelSet,
    delta: f64,
) -> Result<BandClassification> {
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "band width must be nonnegative, got {delta}"
        )));
    }
    let max_abs = dls.max_abs();
    let interior = quadrature::tet_rule(2).expect("degree 2 table");
    let mut cut = Vec::new();
    let mut band = Vec::new();
    for t in 0..mesh.n_tets() {
        let vs = mesh.tet(t);
        let vals = [
            dls.vertex_value(vs[0]),
            dls.vertex_value(vs[1]),
            dls.vertex_value(vs[2]),
            dls.vertex_value(vs[3]),
        ];
        let n_pos = vals.iter().filter(|&&v| sign_positive(v, max_abs)).count();
        let is_cut = n_pos > 0 && n_pos < 4;
        if is_cut {
            cut.push(t as u32);
            band.push(t as u32);
            continue;
        }
        let grad = dls.gradient(mesh, t);
        let gnorm = la::norm(grad);
        if gnorm < 1e-12 {
            continue; // flat interior element far from the surface
        }
        let mut min_proxy = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        for pt in &interior.points {
            let mut val = 0.0;
            for i in 0..4 {
                val += pt[i] * vals[i];
            }
            min_proxy = min_proxy.min(val.abs());
        }
        if min_proxy / gnorm <= delta {
            band.push(t as u32);
        }
    }
    if cut.is_empty() {
        return Err(Error::SurfaceLeftDomain);
    }
    for &t in &band {
        let gnorm = la::norm(dls.gradient(mesh, t as usize));
        if gnorm < 1e-10 {
            return Err(Error::DegenerateGradient(gnorm));
        }
    }
    Ok(BandClassification {
        cut_elements: cut,
        band_elements: band,
        delta,
    })
}

/// Oswald averaging of elementwise scalar data into vertex values: each
/// requested vertex receives the arithmetic mean over adjacent elements;
/// `None` samples are skipped.
pub fn oswald_average_scalar(
    mesh: &BackgroundMesh,
    vertices: &[u32],
    sample: impl Fn(u32, u32) -> Option<f64>,
) -> Result<HashMap<u32, f64>> {
    let mut out = HashMap::with_capacity(vertices.len());
    for &v in vertices {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &t in mesh.tets_of_vertex(v) {
            if let Some(val) = sample(t, v) {
                sum += val;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DegenerateGradient(0.0));
        }
        out.insert(v, sum / count as f64);
    }
    Ok(out)
}

fn oswald_average_vec3(
    mesh: &BackgroundMesh,
    vertices: &[u32],
    sample: impl Fn(u32, u32) -> Option<Vec3>,
) -> Result<HashMap<u32, Vec3>> {
    let mut out = HashMap::with_capacity(vertices.len());
    for &v in vertices {
        let mut sum = [0.0; 3];
        let mut count = 0usize;
        for &t in mesh.tets_of_vertex(v) {
            if let Some(val) = sample(t, v) {
                sum = la::add(sum, val);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DegenerateGradient(0.0));
        }
        out.insert(v, la::scale(1.0 / count as f64, sum));
    }
    Ok(out)
}

/// Pointwise geometric data at a quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct GeometricSample {
    /// Unit normal of the discrete surface, grad(phi_h)/|grad(phi_h)|.
    pub n: Vec3,
    /// Improved normal from the P2 companion interpolant.
    pub n_tilde: Vec3,
    /// Tangential projector I - n n^T.
    pub p: Mat3,
    /// Curvature proxy P (grad nbar) P.
    pub h: Mat3,
}

/// Per-step geometric fields on the active elements.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    /// Per band element: (grad phi, unit normal, projector).
    per_band: HashMap<u32, (Vec3, Vec3, Mat3)>,
    /// Per cut element: curvature matrix H = P (grad nbar) P (constant for q = 1).
    per_cut_h: HashMap<u32, Mat3>,
    /// Oswald-averaged normal at vertices of cut elements.
    nbar_vertex: HashMap<u32, Vec3>,
    /// When true (default), the improved normal is normalized to unit length;
    /// otherwise grad(phi~) is scaled by 1/|grad(phi_h)| of the element.
    pub unit_improved_normal: bool,
}

impl GeometryCache {
    pub fn build(
        mesh: &BackgroundMesh,
        dls: &DiscreteLevelSet,
        band: &BandClassification,
    ) -> Result<Self> {
        let mut per_band = HashMap::with_capacity(band.band_elements.len());
        for &t in &band.band_elements {
            let g = dls.gradient(mesh, t as usize);
            let gnorm = la::norm(g);
            if gnorm < 1e-12 {
                return Err(Error::DegenerateGradient(gnorm));
            }
            let n = la::scale(1.0 / gnorm, g);
            per_band.insert(t, (g, n, la::projector(n)));
        }

        // Oswald-averaged normal at vertices of cut elements, skipping
        // degenerate contributions from elements far inside the surface.
        let mut cut_vertices: Vec<u32> = band
            .cut_elements
            .iter()
            .flat_map(|&t| mesh.tet(t as usize))
            .collect();
        cut_vertices.sort_unstable();
        cut_vertices.dedup();
        let nbar = oswald_average_vec3(mesh, &cut_vertices, |t, _| {
            let g = dls.gradient(mesh, t as usize);
            let gnorm = la::norm(g);
            (gnorm >= 1e-12).then(|| la::scale(1.0 / gnorm, g))
        })?;

        let mut per_cut_h = HashMap::with_capacity(band.cut_elements.len());
        for &t in &band.cut_elements {
            let vs = mesh.tet(t as usize);
            let grads = mesh.barycentric_gradients(t as usize);
            // Jacobian of the P1 nbar field: J_ij = d nbar_i / d x_j
            let mut jac = [[0.0; 3]; 3];
            for l in 0..4 {
                let val = nbar[&vs[l]];
                for i in 0..3 {
                    for j in 0..3 {
                        jac[i][j] += val[i] * grads[l][j];
                    }
                }
            }
            let p = per_band[&t].2;
            per_cut_h.insert(t, la::mat_mul(&la::mat_mul(&p, &jac), &p));
        }

        Ok(GeometryCache {
            per_band,
            per_cut_h,
            nbar_vertex: nbar,
            unit_improved_normal: true,
        })
    }

    /// Averaged normal field (continuous P1) evaluated on a cut element.
    pub fn averaged_normal(&self, mesh: &BackgroundMesh, tet: u32, x: Vec3) -> Vec3 {
        let vs = mesh.tet(tet as usize);
        let bary = mesh.barycentric(tet as usize, x);
        let mut n = [0.0; 3];
        for l in 0..4 {
            n = la::add(n, la::scale(bary[l], self.nbar_vertex[&vs[l]]));
        }
        n
    }

    pub fn grad_phi(&self, tet: u32) -> Vec3 {
        self.per_band[&tet].0
    }

    pub fn normal(&self, tet: u32) -> Vec3 {
        self.per_band[&tet].1
    }

    pub fn projector(&self, tet: u32) -> Mat3 {
        self.per_band[&tet].2
    }

    pub fn curvature(&self, tet: u32) -> Mat3 {
        self.per_cut_h[&tet]
    }

    /// Improved normal at a point of a cut element.
    pub fn improved_normal(
        &self,
        mesh: &BackgroundMesh,
        dls: &DiscreteLevelSet,
        tet: u32,
        x: Vec3,
    ) -> Vec3 {
        let g = dls.companion_gradient_at(mesh, tet as usize, x);
        if self.unit_improved_normal {
            la::scale(1.0 / la::norm(g), g)
        } else {
            la::scale(1.0 / la::norm(self.grad_phi(tet)), g)
        }
    }

    /// Full pointwise sample on a cut element.
    pub fn sample(
        &self,
        mesh: &BackgroundMesh,
        dls: &DiscreteLevelSet,
        tet: u32,
        x: Vec3,
    ) -> GeometricSample {
        let (_, n, p) = self.per_band[&tet];
        GeometricSample {
            n,
            n_tilde: self.improved_normal(mesh, dls, tet, x),
            p,
            h: self.per_cut_h[&tet],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxDomain;

    #[test]
    fn analytic_levelset_values() {
        let ls = LevelSet::benchmark();
        assert!((ls.value(0.0, [2.0, 0.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!(ls.value(0.0, [1.0, 0.0, 0.0]).abs() < 1e-15);
        assert!((ls.value(5.0, [1.0, 0.0, 0.0]) - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn normal_speed_moving_sphere() {
        let ls = LevelSet::benchmark();
        assert!((ls.normal_speed(0.0, [1.0, 0.0, 0.0]).unwrap() - 0.2).abs() < 1e-14);
        assert!(ls.normal_speed(0.0, [0.0, 1.0, 0.0]).unwrap().abs() < 1e-14);
        // |w_N| <= speed on the surface
        for k in 0..100 {
            let a = 0.37 + k as f64;
            let dir = la::normalize([a.sin(), (2.0 * a).cos(), (3.0 * a).sin()]);
            let t = 0.02 * k as f64;
            let x = la::add(ls.center(t), dir);
            assert!(ls.normal_speed(t, x).unwrap().abs() <= 0.2 + 1e-13);
        }
        assert!(matches!(
            ls.normal_speed(0.0, [0.0; 3]),
            Err(Error::DegenerateGradient(_))
        ));
    }

    fn sphere_mesh(h: f64) -> BackgroundMesh {
        let domain = BoxDomain::new([-1.4, -1.4, -1.4], [1.4, 1.4, 1.4]).unwrap();
        BackgroundMesh::build_uniform(domain, h).unwrap()
    }

    #[test]
    fn interpolation_is_nodal_and_rejects_high_q() {
        let mesh = sphere_mesh(0.5);
        let ls = LevelSet::benchmark();
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.3, 1).unwrap();
        for v in (0..mesh.n_vertices() as u32).step_by(17) {
            assert!((dls.vertex_value(v) - ls.value(0.3, mesh.vertex(v))).abs() < 1e-14);
        }
        assert!(matches!(
            DiscreteLevelSet::interpolate(&mesh, &ls, 0.0, 2),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn interpolation_error_orders() {
        // max |phi - phi_h| = O(h^2), max |grad phi - grad phi_h| = O(h) on band elements
        let ls = LevelSet::benchmark();
        let mut val_errs = Vec::new();
        let mut grad_errs = Vec::new();
        for k in 0..3 {
            let mesh = sphere_mesh(0.4 / 2f64.powi(k));
            let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.0, 1).unwrap();
            let band = classify_elements(&mesh, &dls, 0.1).unwrap();
            let mut ve = 0f64;
            let mut ge = 0f64;
            let rule = quadrature::tet_rule(4).unwrap();
            for &t in &band.band_elements {
                let vs = mesh.tet_vertices(t as usize);
                let grad = dls.gradient(&mesh, t as usize);
                for pt in &rule.points {
                    let mut x = [0.0; 3];
                    for i in 0..4 {
                        x = la::add(x, la::scale(pt[i], vs[i]));
                    }
                    ve = ve.max((ls.value(0.0, x) - dls.value_at(&mesh, t as usize, x)).abs());
                    ge = ge.max(la::norm(la::sub(ls.gradient(0.0, x), grad)));
                }
            }
            val_errs.push(ve);
            grad_errs.push(ge);
        }
        for k in 0..2 {
            let order_v = (val_errs[k] / val_errs[k + 1]).log2();
            let order_g = (grad_errs[k] / grad_errs[k + 1]).log2();
            assert!(order_v > 1.6, "value order {order_v}");
            assert!(order_g > 0.7, "gradient order {order_g}");
        }
    }

    #[test]
    fn classification_basics() {
        let mesh = sphere_mesh(0.5);
        let ls = LevelSet::benchmark();
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.0, 1).unwrap();
        let zero_band = classify_elements(&mesh, &dls, 0.0).unwrap();
        assert_eq!(zero_band.cut_elements, zero_band.band_elements);
        let band = classify_elements(&mesh, &dls, 0.25).unwrap();
        assert!(band.band_elements.len() > band.cut_elements.len());
        for &t in &band.cut_elements {
            assert!(band.contains_band(t));
            // sign change among vertices
            let vs = mesh.tet(t as usize);
            let signs: Vec<bool> = vs
                .iter()
                .map(|&v| sign_positive(dls.vertex_value(v), dls.max_abs()))
                .collect();
            assert!(signs.iter().any(|&s| s) && signs.iter().any(|&s| !s));
        }
        // monotonicity in delta
        let wide = classify_elements(&mesh, &dls, 0.4).unwrap();
        for &t in &band.band_elements {
            assert!(wide.contains_band(t));
        }
        // band elements within distance proxy of the analytic sphere
        for &t in &band.band_elements {
            let vs = mesh.tet_vertices(t as usize);
            let min_dist = vs
                .iter()
                .map(|&v| (la::norm(v) - 1.0).abs())
                .fold(f64::INFINITY, f64::min);
            let slack = mesh.tet_diameter(t as usize);
            assert!(min_dist <= 0.25 + slack);
        }
    }

    #[test]
    fn surface_outside_domain_detected() {
        let mesh = sphere_mesh(0.5);
        let ls = LevelSet::benchmark();
        // at t = 30 the sphere center is at x = 6, far outside [-1.4, 1.4]
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 30.0, 1).unwrap();
        assert!(matches!(
            classify_elements(&mesh, &dls, 0.1),
            Err(Error::SurfaceLeftDomain)
        ));
    }

    #[test]
    fn oswald_mean_and_reproduction() {
        // two tets sharing a face; values 1 and 3 -> averaged node value 2
        let verts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
        ];
        let mesh = BackgroundMesh::from_raw(verts, vec![[0, 1, 2, 3], [1, 2, 3, 4]], 1.0);
        let vals = [1.0, 3.0];
        let avg =
            oswald_average_scalar(&mesh, &[0, 1, 4], |t, _| Some(vals[t as usize])).unwrap();
        assert_eq!(avg[&0], 1.0); // only tet 0 adjacent
        assert_eq!(avg[&1], 2.0); // shared
        assert_eq!(avg[&4], 3.0); // only tet 1
        // continuous input reproduced: sample the limit of a continuous field
        let f = |x: Vec3| 2.0 * x[0] - x[1] + 0.5 * x[2];
        let avg = oswald_average_scalar(&mesh, &[0, 1, 2, 3, 4], |_, v| Some(f(mesh.vertex(v))))
            .unwrap();
        for v in 0..5u32 {
            assert!((avg[&v] - f(mesh.vertex(v))).abs() < 1e-15);
        }
    }

    #[test]
    fn plane_geometry_is_exact() {
        let domain = BoxDomain::new([0.0; 3], [1.0, 1.0, 1.0]).unwrap();
        let mesh = BackgroundMesh::build_uniform(domain, 0.5).unwrap();
        let ls = LevelSet::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 0.3,
        };
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.0, 1).unwrap();
        let band = classify_elements(&mesh, &dls, 0.1).unwrap();
        let geo = GeometryCache::build(&mesh, &dls, &band).unwrap();
        for &t in &band.cut_elements {
            let n = geo.normal(t);
            assert!(la::norm(la::sub(n, [0.0, 0.0, 1.0])) < 1e-14);
            let h = geo.curvature(t);
            for row in h {
                for entry in row {
                    assert!(entry.abs() < 1e-13);
                }
            }
            let s = geo.sample(&mesh, &dls, t, mesh.tet_vertices(t as usize)[0]);
            assert!(la::norm(la::sub(s.n_tilde, [0.0, 0.0, 1.0])) < 1e-13);
        }
    }

    #[test]
    fn projector_and_curvature_identities() {
        let mesh = sphere_mesh(0.25);
        let ls = LevelSet::benchmark();
        let dls = DiscreteLevelSet::interpolate(&mesh, &ls, 0.4, 1).unwrap();
        let band = classify_elements(&mesh, &dls, 0.1).unwrap();
        let geo = GeometryCache::build(&mesh, &dls, &band).unwrap();
        for &t in band.cut_elements.iter().step_by(7) {
            let p = geo.projector(t);
            let pp = la::mat_mul(&p, &p);
            let h = geo.curvature(t);
            let php = la::mat_mul(&la::mat_mul(&p, &h), &p);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((pp[i][j] - p[i][j]).abs() < 1e-12);
                    assert!((php[i][j] - h[i][j]).abs() < 1e-12);
                    assert!((p[i][j] - p[j][i]).abs() < 1e-15);
                }
            }
            assert!((la::norm(geo.normal(t)) - 1.0).abs() < 1e-14);
        }
    }
}
