//! Assembly of the per-step saddle-point system.
//!
//! Surface integrals run over the triangulated zero level, volume integrals
//! over whole band/cut tets. Covariant derivatives of projected fields use
//! the substitution grad_G(P v) = grad_G(v) - (n . v) H, which avoids
//! differentiating the (elementwise) projector. The convection form is
//! skew-symmetrized; the tangentiality penalty uses the improved normal from
//! the P2 companion level set. A single Lagrange multiplier pins the mean of
//! the pressure on the discrete surface.

use crate::cut::CutSurface;
use crate::la::{self, Mat3, Vec3};
use crate::levelset::{BandClassification, DiscreteLevelSet, GeometryCache};
use crate::mesh::BackgroundMesh;
use crate::quadrature;
use crate::space::{shape_functions, BandDofMap, MAX_NODES};
use crate::Result;
use rayon::prelude::*;

/// Discretization parameters of the bilinear forms. The defaults follow the
/// scaling laws tau = h^-2, rho_u = h^-1, rho_p = h.
#[derive(Debug, Clone, Copy)]
pub struct FormParams {
    pub tau: f64,
    pub rho_u: f64,
    pub rho_p: f64,
    pub mu: f64,
    pub dt: f64,
    /// Extra advection term along the normal motion, needed because the
    /// level set is not a distance function. On by default.
    pub include_advective_correction: bool,
    /// Skew-correction mass term -1/2 f (u . P v) for nonzero divergence data.
    pub include_scalar_f_term: bool,
    pub surface_degree: usize,
    pub volume_degree: usize,
}

impl FormParams {
    pub fn from_mesh_size(h: f64, mu: f64, dt: f64) -> Self {
        FormParams {
            tau: 1.0 / (h * h),
            rho_u: 1.0 / h,
            rho_p: h,
            mu,
            dt,
            include_advective_correction: true,
            include_scalar_f_term: true,
            surface_degree: 6,
            volume_degree: 4,
        }
    }
}

/// Everything fixed about one time step that assembly needs.
pub struct StepContext<'a> {
    pub mesh: &'a BackgroundMesh,
    pub dls: &'a DiscreteLevelSet,
    pub band: &'a BandClassification,
    pub cut: &'a CutSurface,
    pub geo: &'a GeometryCache,
    pub dofmap: &'a BandDofMap,
}

/// Assembled sparse block in triplet form (duplicates sum).
#[derive(Debug, Clone)]
pub struct SparseBlock {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(u32, u32, f64)>,
}

impl SparseBlock {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseBlock {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.triplets {
            d[r as usize][c as usize] += v;
        }
        d
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for &(r, c, v) in &self.triplets {
            y[r as usize] += v * x[c as usize];
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.triplets
            .iter()
            .map(|&(r, c, v)| x[r as usize] * v * x[c as usize])
            .sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let mut m = 0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                m = m.max((d[r][c] - d[c][r]).abs());
            }
        }
        m
    }

    fn extend(&mut self, other: SparseBlock) {
        self.triplets.extend(other.triplets);
    }
}

/// Per-quad-point basis data of the velocity space on one element.
struct SurfPointBasis {
    x: Vec3,
    w: f64,
    n_vals: [f64; MAX_NODES],
    n_grads: [Vec3; MAX_NODES],
    count: usize,
}

fn velocity_basis_at_points(ctx: &StepContext, elem: u32) -> Vec<SurfPointBasis> {
    let degree = ctx.dofmap.velocity_degree();
    let grads = ctx.mesh.barycentric_gradients(elem as usize);
    ctx.cut
        .points_of(elem)
        .iter()
        .map(|q| {
            let bary = ctx.mesh.barycentric(elem as usize, q.x);
            let (vals, ders, count) = shape_functions(degree, bary);
            let mut n_grads = [[0.0; 3]; MAX_NODES];
            for a in 0..count {
                for l in 0..4 {
                    n_grads[a] = la::add(n_grads[a], la::scale(ders[a][l], grads[l]));
                }
            }
            SurfPointBasis {
                x: q.x,
                w: q.w,
                n_vals: vals,
                n_grads,
                count,
            }
        })
        .collect()
}

type LocalMat = Vec<f64>; // count*3 x count*3 row-major (or rectangular)

fn scatter_velocity_block(
    block: &mut SparseBlock,
    nodes: &[u32],
    count: usize,
    local: &LocalMat,
) {
    let n = 3 * count;
    for a in 0..count {
        for c in 0..3 {
            let row = (3 * nodes[a] + c as u32) as u32;
            for b in 0..count {
                for d in 0..3 {
                    let v = local[(3 * a + c) * n + 3 * b + d];
                    if v != 0.0 {
                        block.triplets.push((row, 3 * nodes[b] + d as u32, v));
                    }
                }
            }
        }
    }
}

/// Runs `f` over the cut elements in parallel, scattering the returned local
/// matrices in deterministic element order.
fn assemble_over_cut<F>(ctx: &StepContext, rows: usize, cols: usize, f: F) -> SparseBlock
where
    F: Fn(u32) -> SparseBlock + Sync,
{
    let locals: Vec<SparseBlock> = ctx
        .band
        .cut_elements
        .par_iter()
        .map(|&elem| f(elem))
        .collect();
    let mut block = SparseBlock::new(rows, cols);
    for l in locals {
        block.extend(l);
    }
    block
}

/// Surface mass form: integral of (u . P v) (or (u . v) when `projected` is
/// false, used by the energy norm).
pub fn assemble_mass(ctx: &StepContext, projected: bool) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    assemble_over_cut(ctx, nu, nu, |elem| {
        let mut out = SparseBlock::new(nu, nu);
        let nodes = ctx.dofmap.velocity_nodes(elem).expect("cut elem active");
        let p = if projected {
            ctx.geo.projector(elem)
        } else {
            la::identity()
        };
        let pts = velocity_basis_at_points(ctx, elem);
        let count = match pts.first() {
            Some(pt) => pt.count,
            None => return out,
        };
        let n = 3 * count;
        let mut local = vec![0.0; n * n];
        for pt in &pts {
            for a in 0..count {
                for b in 0..count {
                    let s = pt.w * pt.n_vals[a] * pt.n_vals[b];
                    for c in 0..3 {
                        for d in 0..3 {
                            local[(3 * a + c) * n + 3 * b + d] += s * p[c][d];
                        }
                    }
                }
            }
        }
        scatter_velocity_block(&mut out, nodes, count, &local);
        out
    })
}

/// Covariant-gradient matrix of basis (a, c) at one point:
/// G = (P e_c) (P grad N_a)^T - N_a n_c H.
#[inline]
fn covariant_basis_matrix(
    p: &Mat3,
    h: &Mat3,
    n: Vec3,
    n_val: f64,
    n_grad: Vec3,
    c: usize,
) -> Mat3 {
    let pg = la::mat_vec(p, n_grad);
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = p[i][c] * pg[j] - n_val * n[c] * h[i][j];
        }
    }
    g
}

/// Viscous form 2 mu E(P u) : E(P v) with the projector-free substitution.
pub fn assemble_viscous(ctx: &StepContext, mu: f64) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    assemble_over_cut(ctx, nu, nu, |elem| {
        let mut out = SparseBlock::new(nu, nu);
        let nodes = ctx.dofmap.velocity_nodes(elem).expect("cut elem active");
        let p = ctx.geo.projector(elem);
        let h = ctx.geo.curvature(elem);
        let n = ctx.geo.normal(elem);
        let pts = velocity_basis_at_points(ctx, elem);
        let count = match pts.first() {
            Some(pt) => pt.count,
            None => return out,
        };
        let nd = 3 * count;
        let mut local = vec![0.0; nd * nd];
        let mut strains: Vec<Mat3> = vec![[[0.0; 3]; 3]; nd];
        for pt in &pts {
            for a in 0..count {
                for c in 0..3 {
                    let g = covariant_basis_matrix(&p, &h, n, pt.n_vals[a], pt.n_grads[a], c);
                    strains[3 * a + c] = la::sym_part(&g);
                }
            }
            for i in 0..nd {
                for j in i..nd {
                    let v = 2.0 * mu * pt.w * la::frob(&strains[i], &strains[j]);
                    local[i * nd + j] += v;
                    if i != j {
                        local[j * nd + i] += v;
                    }
                }
            }
        }
        scatter_velocity_block(&mut out, nodes, count, &local);
        out
    })
}

/// Skew-symmetrized convection with frozen transport field `z`, plus the
/// -1/2 f (u . P v) correction when scalar divergence data is present.
pub fn assemble_convection(
    ctx: &StepContext,
    z: &(dyn Fn(u32, Vec3) -> Vec3 + Sync),
    f_scalar: &(dyn Fn(Vec3) -> f64 + Sync),
    include_f_term: bool,
) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    assemble_over_cut(ctx, nu, nu, |elem| {
        let mut out = SparseBlock::new(nu, nu);
        let nodes = ctx.dofmap.velocity_nodes(elem).expect("cut elem active");
        let p = ctx.geo.projector(elem);
        let h = ctx.geo.curvature(elem);
        let n = ctx.geo.normal(elem);
        let pts = velocity_basis_at_points(ctx, elem);
        let count = match pts.first() {
            Some(pt) => pt.count,
            None => return out,
        };
        let nd = 3 * count;
        let mut local = vec![0.0; nd * nd];
        let mut gz: Vec<Vec3> = vec![[0.0; 3]; nd];
        for pt in &pts {
            let zv = z(elem, pt.x);
            let fv = if include_f_term { f_scalar(pt.x) } else { 0.0 };
            for a in 0..count {
                for c in 0..3 {
                    let g = covariant_basis_matrix(&p, &h, n, pt.n_vals[a], pt.n_grads[a], c);
                    gz[3 * a + c] = la::mat_vec(&g, zv);
                }
            }
            for a in 0..count {
                for c in 0..3 {
                    let i = 3 * a + c;
                    for b in 0..count {
                        for d in 0..3 {
                            let j = 3 * b + d;
                            // 1/2 [(grad_G P u) z . v - (grad_G P v) z . u]
                            let mut v = 0.5
                                * pt.w
                                * (pt.n_vals[a] * gz[j][c] - pt.n_vals[b] * gz[i][d]);
                            if fv != 0.0 {
                                v -= 0.5 * pt.w * fv * pt.n_vals[a] * pt.n_vals[b] * p[c][d];
                            }
                            local[i * nd + j] += v;
                        }
                    }
                }
            }
        }
        scatter_velocity_block(&mut out, nodes, count, &local);
        out
    })
}

/// Curvature transport w_N (H u . P v) plus, optionally, the advective
/// correction w_N ((grad u) n . P v) for non-distance level sets.
pub fn assemble_curvature_and_advection(
    ctx: &StepContext,
    normal_speed: &(dyn Fn(Vec3) -> f64 + Sync),
    include_advective_correction: bool,
) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    assemble_over_cut(ctx, nu, nu, |elem| {
        let mut out = SparseBlock::new(nu, nu);
        let nodes = ctx.dofmap.velocity_nodes(elem).expect("cut elem active");
        let p = ctx.geo.projector(elem);
        let h = ctx.geo.curvature(elem);
        let n = ctx.geo.normal(elem);
        let pts = velocity_basis_at_points(ctx, elem);
        let count = match pts.first() {
            Some(pt) => pt.count,
            None => return out,
        };
        let nd = 3 * count;
        let mut local = vec![0.0; nd * nd];
        for pt in &pts {
            let wn = normal_speed(pt.x);
            if wn == 0.0 {
                continue;
            }
            for a in 0..count {
                for b in 0..count {
                    let s = pt.w * wn * pt.n_vals[a] * pt.n_vals[b];
                    // (H e_d) . (P e_c) = (P H)_cd = H_cd since H = P H P
                    for c in 0..3 {
                        for d in 0..3 {
                            local[(3 * a + c) * nd + 3 * b + d] += s * h[c][d];
                        }
                    }
                    if include_advective_correction {
                        // ((grad u) n . P v) = (grad N_b . n) N_a P_dc per component
                        let dn = la::dot(pt.n_grads[b], n);
                        let s2 = pt.w * wn * pt.n_vals[a] * dn;
                        for c in 0..3 {
                            for d in 0..3 {
                                local[(3 * a + c) * nd + 3 * b + d] += s2 * p[c][d];
                            }
                        }
                    }
                }
            }
        }
        scatter_velocity_block(&mut out, nodes, count, &local);
        out
    })
}

/// Tangentiality penalty tau (n~ . u)(n~ . v) with the improved normal.
pub fn assemble_penalty(ctx: &StepContext, tau: f64) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    assemble_over_cut(ctx, nu, nu, |elem| {
        let mut out = SparseBlock::new(nu, nu);
        let nodes = ctx.dofmap.velocity_nodes(elem).expect("cut elem active");
        let pts = velocity_basis_at_points(ctx, elem);
        let count = match pts.first() {
            Some(pt) => pt.count,
            None => return out,
        };
        let nd = 3 * count;
        let mut local = vec![0.0; nd * nd];
        for pt in &pts {
            let nt = ctx.geo.improved_normal(ctx.mesh, ctx.dls, elem, pt.x);
            for a in 0..count {
                for b in 0..count {
                    let s = tau * pt.w * pt.n_vals[a] * pt.n_vals[b];
                    for c in 0..3 {
                        for d in 0..3 {
                            local[(3 * a + c) * nd + 3 * b + d] += s * nt[c] * nt[d];
                        }
                    }
                }
            }
        }
        scatter_velocity_block(&mut out, nodes, count, &local);
        out
    })
}

/// Normal-derivative volume stabilization rho_u (n . grad u)(n . grad v) over
/// whole band elements, componentwise.
pub fn assemble_velocity_stabilization(
    ctx: &StepContext,
    rho_u: f64,
    volume_degree: usize,
) -> Result<SparseBlock> {
    let nu = ctx.dofmap.n_velocity_dofs();
    let rule = quadrature::tet_rule(volume_degree)?;
    let degree = ctx.dofmap.velocity_degree();
    let locals: Vec<SparseBlock> = ctx
        .band
        .band_elements
        .par_iter()
        .map(|&elem| {
            let mut out = SparseBlock::new(nu, nu);
            let nodes = ctx.dofmap.velocity_nodes(elem).expect("band elem active");
            let n = ctx.geo.normal(elem);
            let grads = ctx.mesh.barycentric_gradients(elem as usize);
            let vol = ctx.mesh.tet_volume(elem as usize);
            let count = degree.nodes_per_tet();
            let nd = 3 * count;
            let mut local = vec![0.0; nd * nd];
            for (bary, wq) in rule.points.iter().zip(&rule.weights) {
                let (_, ders, _) = shape_functions(degree, *bary);
                let mut dn = [0.0; MAX_NODES];
                for a in 0..count {
                    let mut g = [0.0; 3];
                    for l in 0..4 {
                        g = la::add(g, la::scale(ders[a][l], grads[l]));
                    }
                    dn[a] = la::dot(g, n);
                }
                let w = rho_u * wq * vol;
                for a in 0..count {
                    for b in 0..count {
                        let s = w * dn[a] * dn[b];
                        for c in 0..3 {
                            local[(3 * a + c) * nd + 3 * b + c] += s;
                        }
                    }
                }
            }
            scatter_velocity_block(&mut out, nodes, count, &local);
            out
        })
        .collect();
    let mut block = SparseBlock::new(nu, nu);
    for l in locals {
        block.extend(l);
    }
    Ok(block)
}

/// Pressure-velocity coupling B with rows = pressure dofs, columns =
/// velocity dofs, entries integral of (grad_G q) . v.
pub fn assemble_pressure_coupling(ctx: &StepContext) -> SparseBlock {
    let nu = ctx.dofmap.n_velocity_dofs();
    let np = ctx.dofmap.n_pressure_dofs();
    let press_degree = ctx.dofmap.pressure_degree();
    assemble_over_cut(ctx, np, nu, |elem| {
        let mut out = SparseBlock::new(np, nu);
        let vel_nodes = ctx.dofmap.velocity_nodes(elem).expect("active");
        let press_nodes = ctx.dofmap.pressure_nodes(elem).expect("active");
        let p = ctx.geo.projector(elem);
        let grads = ctx.mesh.barycentric_gradients(elem as usize);
        let pts = velocity_basis_at_points(ctx, elem);
        for pt in &pts {
            let bary = ctx.mesh.barycentric(elem as usize, pt.x);
            let (_, pders, pcount) = shape_functions(press_degree, bary);
            for (j, &pj) in press_nodes.iter().enumerate().take(pcount) {
                let mut gq = [0.0; 3];
                for l in 0..4 {
                    gq = la::add(gq, la::scale(pders[j][l], grads[l]));
                }
                let surf_grad = la::mat_vec(&p, gq);
                for a in 0..pt.count {
                    for c in 0..3 {
                        let v = pt.w * pt.n_vals[a] * surf_grad[c];
                        if v != 0.0 {
                            out.triplets
                                .push((pj, 3 * vel_nodes[a] + c as u32, v));
                        }
                    }
                }
            }
        }
        out
    })
}

/// Pressure stabilization rho_p (n . grad p)(n . grad q) over whole cut tets.
pub fn assemble_pressure_stabilization(
    ctx: &StepContext,
    rho_p: f64,
    volume_degree: usize,
) -> Result<SparseBlock> {
    let np = ctx.dofmap.n_pressure_dofs();
    let rule = quadrature::tet_rule(volume_degree)?;
    let degree = ctx.dofmap.pressure_degree();
    Ok(assemble_over_cut(ctx, np, np, |elem| {
        let mut out = SparseBlock::new(np, np);
        let nodes = ctx.dofmap.pressure_nodes(elem).expect("active");
        let n = ctx.geo.normal(elem);
        let grads = ctx.mesh.barycentric_gradients(elem as usize);
        let vol = ctx.mesh.tet_volume(elem as usize);
        let count = degree.nodes_per_tet();
        for (bary, wq) in rule.points.iter().zip(&rule.weights) {
            let (_, ders, _) = shape_functions(degree, *bary);
            let mut dn = [0.0; MAX_NODES];
            for a in 0..count {
                let mut g = [0.0; 3];
                for l in 0..4 {
                    g = la::add(g, la::scale(ders[a][l], grads[l]));
                }
                dn[a] = la::dot(g, n);
            }
            let w = rho_p * wq * vol;
            for a in 0..count {
                for b in 0..count {
                    let v = w * dn[a] * dn[b];
                    if v != 0.0 {
                        out.triplets.push((nodes[a], nodes[b], v));
                    }
                }
            }
        }
        out
    }))
}

/// Surface mass matrix of the pressure basis (preconditioner building block).
pub fn assemble_pressure_surface_mass(ctx: &StepContext) -> SparseBlock {
    let np = ctx.dofmap.n_pressure_dofs();
    let press_degree = ctx.dofmap.pressure_degree();
    assemble_over_cut(ctx, np, np, |elem| {
        let mut out = SparseBlock::new(np, np);
        let nodes = ctx.dofmap.pressure_nodes(elem).expect("active");
        for q in ctx.cut.points_of(elem) {
            let bary = ctx.mesh.barycentric(elem as usize, q.x);
            let (vals, _, count) = shape_functions(press_degree, bary);
            for a in 0..count {
                for b in 0..count {
                    let v = q.w * vals[a] * vals[b];
                    if v != 0.0 {
                        out.triplets.push((nodes[a], nodes[b], v));
                    }
                }
            }
        }
        out
    })
}

/// Vector of surface integrals of the pressure basis (the mean constraint).
pub fn assemble_pressure_mean(ctx: &StepContext) -> Vec<f64> {
    let np = ctx.dofmap.n_pressure_dofs();
    let press_degree = ctx.dofmap.pressure_degree();
    let mut m = vec![0.0; np];
    for &elem in &ctx.band.cut_elements {
        let nodes = ctx.dofmap.pressure_nodes(elem).expect("active");
        for q in ctx.cut.points_of(elem) {
            let bary = ctx.mesh.barycentric(elem as usize, q.x);
            let (vals, _, count) = shape_functions(press_degree, bary);
            for a in 0..count {
                m[nodes[a] as usize] += q.w * vals[a];
            }
        }
    }
    m
}

/// Right-hand side: momentum gets dt * (f . P v) plus the mass pairing with
/// the BDF history combination; continuity gets the scalar data integral.
pub fn assemble_rhs(
    ctx: &StepContext,
    dt: f64,
    forcing: &(dyn Fn(Vec3) -> Vec3 + Sync),
    f_scalar: &(dyn Fn(Vec3) -> f64 + Sync),
    history: &(dyn Fn(u32, Vec3) -> Vec3 + Sync),
) -> (Vec<f64>, Vec<f64>) {
    let nu = ctx.dofmap.n_velocity_dofs();
    let np = ctx.dofmap.n_pressure_dofs();
    let press_degree = ctx.dofmap.pressure_degree();
    let parts: Vec<(Vec<(u32, f64)>, Vec<(u32, f64)>)> = ctx
        .band
        .cut_elements
        .par_iter()
        .map(|&elem| {
            let mut mom = Vec::new();
            let mut cont = Vec::new();
            let vel_nodes = ctx.dofmap.velocity_nodes(elem).expect("active");
            let press_nodes = ctx.dofmap.pressure_nodes(elem).expect("active");
            let p = ctx.geo.projector(elem);
            let pts = velocity_basis_at_points(ctx, elem);
            for pt in &pts {
                let data = la::add(la::scale(dt, forcing(pt.x)), history(elem, pt.x));
                let pdata = la::mat_vec(&p, data);
                for a in 0..pt.count {
                    for c in 0..3 {
                        mom.push((3 * vel_nodes[a] + c as u32, pt.w * pt.n_vals[a] * pdata[c]));
                    }
                }
                let fs = f_scalar(pt.x);
                if fs != 0.0 {
                    let bary = ctx.mesh.barycentric(elem as usize, pt.x);
                    let (pvals, _, pcount) = shape_functions(press_degree, bary);
                    for (j, &pj) in press_nodes.iter().enumerate().take(pcount) {
                        cont.push((pj, pt.w * fs * pvals[j]));
                    }
                }
            }
            (mom, cont)
        })
        .collect();
    let mut momentum = vec![0.0; nu];
    let mut continuity = vec![0.0; np];
    for (mom, cont) in parts {
        for (i, v) in mom {
            momentum[i as usize] += v;
        }
        for (i, v) in cont {
            continuity[i as usize] += v;
        }
    }
    (momentum, continuity)
}

/// Full bordered saddle-point system of one time step:
///
/// ```text
/// [ c0 M + dt (A + K)   dt B^T   0 ] [u]   [rhs_m]
/// [ -B                  C        m ] [p] = [rhs_c]
/// [ 0                   m^T      0 ] [l]   [0    ]
/// ```
///
/// with M the projected surface mass, A the symmetric forms (viscous,
/// curvature/advection, penalty, velocity stabilization), K the skew
/// convection, B the pressure coupling, C the pressure stabilization and m
/// the surface mean of the pressure basis.
pub struct SparseSystem {
    pub nu: usize,
    pub np: usize,
    pub triplets: Vec<(u32, u32, f64)>,
    pub rhs: Vec<f64>,
    /// Surface integrals of pressure basis functions (mean constraint row).
    pub pressure_mean: Vec<f64>,
    /// Pressure surface mass in triplet form (used by the Krylov preconditioner).
    pub pressure_surface_mass: Vec<(u32, u32, f64)>,
    /// Discrete surface area (for mean shifts).
    pub surface_area: f64,
}

impl SparseSystem {
    pub fn n(&self) -> usize {
        self.nu + self.np + 1
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.triplets {
            y[r as usize] += v * x[c as usize];
        }
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n()];
        self.apply(x, &mut ax);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n() {
            num += (ax[i] - self.rhs[i]) * (ax[i] - self.rhs[i]);
            den += self.rhs[i] * self.rhs[i];
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Data closures of one step (all extensions constant along normals).
pub struct StepData<'a> {
    pub forcing: &'a (dyn Fn(Vec3) -> Vec3 + Sync),
    pub f_scalar: &'a (dyn Fn(Vec3) -> f64 + Sync),
    pub normal_speed: &'a (dyn Fn(Vec3) -> f64 + Sync),
    /// Linearized transport field (BDF extrapolation of old velocities).
    pub transport: &'a (dyn Fn(u32, Vec3) -> Vec3 + Sync),
    /// BDF history combination paired with the projected test function.
    pub history: &'a (dyn Fn(u32, Vec3) -> Vec3 + Sync),
}

pub fn assemble_system(
    ctx: &StepContext,
    params: &FormParams,
    mass_coeff: f64,
    data: &StepData,
) -> Result<SparseSystem> {
    let nu = ctx.dofmap.n_velocity_dofs();
    let np = ctx.dofmap.n_pressure_dofs();
    let n = nu + np + 1;

    let mut triplets: Vec<(u32, u32, f64)> = Vec::new();
    let scaled = |block: &SparseBlock, s: f64, ro: u32, co: u32, out: &mut Vec<(u32, u32, f64)>| {
        out.extend(
            block
                .triplets
                .iter()
                .map(|&(r, c, v)| (r + ro, c + co, s * v)),
        );
    };

    let mass = assemble_mass(ctx, true);
    scaled(&mass, mass_coeff, 0, 0, &mut triplets);
    let visc = assemble_viscous(ctx, params.mu);
    scaled(&visc, params.dt, 0, 0, &mut triplets);
    let conv = assemble_convection(
        ctx,
        data.transport,
        data.f_scalar,
        params.include_scalar_f_term,
    );
    scaled(&conv, params.dt, 0, 0, &mut triplets);
    let curv = assemble_curvature_and_advection(
        ctx,
        data.normal_speed,
        params.include_advective_correction,
    );
    scaled(&curv, params.dt, 0, 0, &mut triplets);
    let pen = assemble_penalty(ctx, params.tau);
    scaled(&pen, params.dt, 0, 0, &mut triplets);
    let stab = assemble_velocity_stabilization(ctx, params.rho_u, params.volume_degree)?;
    scaled(&stab, params.dt, 0, 0, &mut triplets);

    let b = assemble_pressure_coupling(ctx);
    // momentum: + dt B^T, continuity: -B
    for &(r, c, v) in &b.triplets {
        triplets.push((c, nu as u32 + r, params.dt * v));
        triplets.push((nu as u32 + r, c, -v));
    }
    let c_stab = assemble_pressure_stabilization(ctx, params.rho_p, params.volume_degree)?;
    scaled(&c_stab, 1.0, nu as u32, nu as u32, &mut triplets);

    let mean = assemble_pressure_mean(ctx);
    let border = (nu + np) as u32;
    for (j, &v) in mean.iter().enumerate() {
        if v != 0.0 {
            triplets.push((nu as u32 + j as u32, border, v));
            triplets.push((border, nu as u32 + j as u32, v));
        }
    }

    let (rhs_m, rhs_c) = assemble_rhs(ctx, params.dt, data.forcing, data.f_scalar, data.history);
    let mut rhs = vec![0.0; n];
    rhs[..nu].copy_from_slice(&rhs_m);
    rhs[nu..nu + np].copy_from_slice(&rhs_c);

    Ok(SparseSystem {
        nu,
        np,
        triplets,
        rhs,
        pressure_mean: mean,
        pressure_surface_mass: assemble_pressure_surface_mass(ctx).triplets,
        surface_area: ctx.cut.total_area,
    })
}
