//! Refinement studies of the discrete geometry: surface distance, normal
//! accuracy and area convergence on a sequence of halved meshes.

use crate::cut::CutSurface;
use crate::la;
use crate::levelset::{classify_elements, DiscreteLevelSet, GeometryCache, LevelSet};
use crate::mesh::{BackgroundMesh, BoxDomain};
use crate::Result;
use serde::Serialize;

/// Measurements on one refinement level, taken at the surface quadrature
/// points of the cut triangulation.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryLevel {
    pub h: f64,
    /// max |phi(x)| over quadrature points (distance proxy to the exact surface)
    pub max_dist: f64,
    /// max |n_h - n|
    pub max_normal_err: f64,
    /// max |n~ - n| (improved normal from the P2 companion)
    pub max_improved_normal_err: f64,
    /// max |nbar - n| (Oswald-averaged normal)
    pub max_avg_normal_err: f64,
    pub area: f64,
    pub area_err: f64,
    pub n_cut_elements: usize,
}

/// Observed order between two levels, or `Exact` when both errors sit at the
/// roundoff floor (polynomial level sets reproduce some quantities exactly).
#[derive(Debug, Clone, Copy, Serialize)]
pub enum OrderEntry {
    Order(f64),
    Exact,
}

impl OrderEntry {
    pub fn from_errors(coarse: f64, fine: f64) -> Self {
        if coarse < 1e-12 && fine < 1e-12 {
            OrderEntry::Exact
        } else {
            OrderEntry::Order((coarse / fine).log2())
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        match self {
            OrderEntry::Exact => true,
            OrderEntry::Order(o) => (lo..=hi).contains(o),
        }
    }
}

impl std::fmt::Display for OrderEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderEntry::Exact => write!(f, "exact"),
            OrderEntry::Order(o) => write!(f, "{o:.3}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryStudy {
    pub levels: Vec<GeometryLevel>,
    pub dist_orders: Vec<OrderEntry>,
    pub normal_orders: Vec<OrderEntry>,
    pub improved_normal_orders: Vec<OrderEntry>,
    pub avg_normal_orders: Vec<OrderEntry>,
    pub area_orders: Vec<OrderEntry>,
}

/// Reference area of the exact surface, when known (sphere level sets).
pub fn exact_area(ls: &LevelSet) -> Option<f64> {
    match ls {
        LevelSet::MovingSphere { .. } | LevelSet::QuarticSphere => {
            Some(4.0 * std::f64::consts::PI)
        }
        LevelSet::Plane { .. } => None,
    }
}

/// Measures one level.
pub fn measure_level(
    mesh: &BackgroundMesh,
    ls: &LevelSet,
    t: f64,
    surface_degree: usize,
) -> Result<GeometryLevel> {
    let dls = DiscreteLevelSet::interpolate(mesh, ls, t, 1)?;
    let band = classify_elements(mesh, &dls, 0.0)?;
    let cut = CutSurface::extract(mesh, &dls, &band, surface_degree)?;
    let geo = GeometryCache::build(mesh, &dls, &band)?;
    let mut max_dist = 0f64;
    let mut max_n = 0f64;
    let mut max_nt = 0f64;
    let mut max_nb = 0f64;
    for q in &cut.quad_points {
        max_dist = max_dist.max(ls.value(t, q.x).abs());
        let n_exact = ls.unit_normal(t, q.x)?;
        max_n = max_n.max(la::norm(la::sub(geo.normal(q.tet), n_exact)));
        let nt = geo.improved_normal(mesh, &dls, q.tet, q.x);
        max_nt = max_nt.max(la::norm(la::sub(nt, n_exact)));
        let nb = geo.averaged_normal(mesh, q.tet, q.x);
        max_nb = max_nb.max(la::norm(la::sub(nb, n_exact)));
    }
    let area_err = exact_area(ls).map_or(0.0, |a| (cut.total_area - a).abs());
    Ok(GeometryLevel {
        h: mesh.h(),
        max_dist,
        max_normal_err: max_n,
        max_improved_normal_err: max_nt,
        max_avg_normal_err: max_nb,
        area: cut.total_area,
        area_err,
        n_cut_elements: band.cut_elements.len(),
    })
}

/// Runs the refinement ladder h0, h0/2, ... for `n_levels` levels.
pub fn run_study(
    domain: BoxDomain,
    h0: f64,
    n_levels: usize,
    ls: &LevelSet,
    t: f64,
    surface_degree: usize,
    cell_cap: usize,
) -> Result<GeometryStudy> {
    let mut levels = Vec::with_capacity(n_levels);
    let mut mesh = BackgroundMesh::build_with_cap(domain, h0, cell_cap)?;
    for k in 0..n_levels {
        levels.push(measure_level(&mesh, ls, t, surface_degree)?);
        if k + 1 < n_levels {
            mesh = mesh.refine_with_cap(cell_cap)?;
        }
    }
    let orders = |f: &dyn Fn(&GeometryLevel) -> f64| -> Vec<OrderEntry> {
        levels
            .windows(2)
            .map(|w| OrderEntry::from_errors(f(&w[0]), f(&w[1])))
            .collect()
    };
    Ok(GeometryStudy {
        dist_orders: orders(&|l| l.max_dist),
        normal_orders: orders(&|l| l.max_normal_err),
        improved_normal_orders: orders(&|l| l.max_improved_normal_err),
        avg_normal_orders: orders(&|l| l.max_avg_normal_err),
        area_orders: orders(&|l| l.area_err),
        levels,
    })
}
