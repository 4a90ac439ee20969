//! Discrete norms and accumulated error quantities of the convergence study.
//!
//! The velocity energy norm combines the surface L2 norm, the projected
//! rate-of-strain energy, the tangentiality penalty and the volume
//! normal-derivative term on the band. The pressure norm is the scaled
//! volumetric H1 seminorm over the cut elements. Error quantities are
//! dt-weighted sums over the steps of a run.

use crate::assemble::StepContext;
use crate::exact::ManufacturedProblem;
use crate::la::{self, Mat3, Vec3};
use crate::quadrature;
use crate::space::FEField;
use crate::{Error, Result};
use serde::Serialize;

/// Parameters entering the energy norm.
#[derive(Debug, Clone, Copy)]
pub struct NormParams {
    pub tau: f64,
    pub rho_u: f64,
    pub mu: f64,
    pub volume_degree: usize,
}

/// Squared energy norm of a pointwise-sampled band field:
/// 1/2 |v|^2_G + 2 mu |E(Pv)|^2_G + tau/2 |n~ . v|^2_G + rho_u |n . grad v|^2_band.
pub fn energy_norm_sq(
    ctx: &StepContext,
    params: &NormParams,
    field: &dyn Fn(u32, Vec3) -> (Vec3, Mat3),
) -> Result<f64> {
    let mut surf = 0.0;
    for &elem in &ctx.band.cut_elements {
        let p = ctx.geo.projector(elem);
        let h = ctx.geo.curvature(elem);
        let n = ctx.geo.normal(elem);
        for q in ctx.cut.points_of(elem) {
            let (v, jac) = field(elem, q.x);
            let nt = ctx.geo.improved_normal(ctx.mesh, ctx.dls, elem, q.x);
            let cov = la::mat_mul(&la::mat_mul(&p, &jac), &p);
            let nv = la::dot(n, v);
            let g = la::mat_add(&cov, &la::mat_scale(-nv, &h));
            let e = la::sym_part(&g);
            let ntv = la::dot(nt, v);
            surf += q.w
                * (0.5 * la::dot(v, v)
                    + 2.0 * params.mu * la::frob(&e, &e)
                    + 0.5 * params.tau * ntv * ntv);
        }
    }
    let rule = quadrature::tet_rule(params.volume_degree)?;
    let mut vol_term = 0.0;
    for &elem in &ctx.band.band_elements {
        let n = ctx.geo.normal(elem);
        let vs = ctx.mesh.tet_vertices(elem as usize);
        let vol = ctx.mesh.tet_volume(elem as usize);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for i in 0..4 {
                x = la::add(x, la::scale(bary[i], vs[i]));
            }
            let (_, jac) = field(elem, x);
            let dn = la::mat_vec(&jac, n);
            vol_term += w * vol * la::dot(dn, dn);
        }
    }
    Ok(surf + params.rho_u * vol_term)
}

/// Surface L2 norm (squared) of a sampled vector field.
pub fn surface_l2_sq(ctx: &StepContext, field: &dyn Fn(u32, Vec3) -> Vec3) -> f64 {
    let mut s = 0.0;
    for &elem in &ctx.band.cut_elements {
        for q in ctx.cut.points_of(elem) {
            let v = field(elem, q.x);
            s += q.w * la::dot(v, v);
        }
    }
    s
}

/// Surface L2 norm (squared) of a sampled scalar field.
pub fn surface_l2_scalar_sq(ctx: &StepContext, field: &dyn Fn(u32, Vec3) -> f64) -> f64 {
    let mut s = 0.0;
    for &elem in &ctx.band.cut_elements {
        for q in ctx.cut.points_of(elem) {
            let v = field(elem, q.x);
            s += q.w * v * v;
        }
    }
    s
}

/// Scaled pressure norm h^{1/2} | grad q |_{L2(cut volume)} of a sampled
/// gradient field.
pub fn pressure_norm_1h(
    ctx: &StepContext,
    h: f64,
    volume_degree: usize,
    grad: &dyn Fn(u32, Vec3) -> Vec3,
) -> Result<f64> {
    let rule = quadrature::tet_rule(volume_degree)?;
    let mut s = 0.0;
    for &elem in &ctx.band.cut_elements {
        let vs = ctx.mesh.tet_vertices(elem as usize);
        let vol = ctx.mesh.tet_volume(elem as usize);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for i in 0..4 {
                x = la::add(x, la::scale(bary[i], vs[i]));
            }
            let g = grad(elem, x);
            s += w * vol * la::dot(g, g);
        }
    }
    Ok((h * s).sqrt())
}

/// Per-step error contributions and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepErrors {
    pub step: usize,
    pub t: f64,
    /// |u_h - u|_{L2(Gamma_h)}
    pub err_u_l2: f64,
    /// Energy norm of the velocity error.
    pub err_u_energy: f64,
    /// |p_h - p|_{L2(Gamma_h)} (mean-shifted discrete pressure).
    pub err_p_l2: f64,
    /// Scaled H1 pressure error over the cut volume.
    pub err_p_1h: f64,
    /// |u_h|_{L2(Gamma_h)} (stability monitor).
    pub u_l2: f64,
    /// |u(t)|_{L2(Gamma_h)} of the exact solution.
    pub exact_u_l2: f64,
}

/// Computes all per-step error quantities of the manufactured problem.
pub fn step_errors(
    ctx: &StepContext,
    norm_params: &NormParams,
    prob: &ManufacturedProblem,
    t: f64,
    step: usize,
    velocity: &FEField,
    pressure: &FEField,
) -> Result<StepErrors> {
    let mesh = ctx.mesh;
    let dof = ctx.dofmap;
    let err_field = |elem: u32, x: Vec3| -> (Vec3, Mat3) {
        let bary = mesh.barycentric(elem as usize, x);
        let (vh, jh) = dof
            .eval_velocity(mesh, velocity, elem, bary)
            .expect("active band element");
        let (ve, je, _) = prob.velocity_jacobian(t, x).expect("off-center point");
        let mut jac = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] = jh[i][j] - je[i][j];
            }
        }
        (la::sub(vh, ve), jac)
    };
    let err_u_l2 = surface_l2_sq(ctx, &|elem, x| err_field(elem, x).0).sqrt();
    let err_u_energy = energy_norm_sq(ctx, norm_params, &err_field)?.sqrt();

    let perr_val = |elem: u32, x: Vec3| -> f64 {
        let bary = mesh.barycentric(elem as usize, x);
        let (ph, _) = dof
            .eval_pressure(mesh, pressure, elem, bary)
            .expect("active cut element");
        ph - prob.pressure(t, x)
    };
    let perr_grad = |elem: u32, x: Vec3| -> Vec3 {
        let bary = mesh.barycentric(elem as usize, x);
        let (_, gh) = dof
            .eval_pressure(mesh, pressure, elem, bary)
            .expect("active cut element");
        la::sub(gh, prob.pressure_gradient(t, x))
    };
    let err_p_l2 = surface_l2_scalar_sq(ctx, &perr_val).sqrt();
    let err_p_1h = pressure_norm_1h(ctx, mesh.h(), norm_params.volume_degree, &perr_grad)?;

    let u_l2 = surface_l2_sq(ctx, &|elem, x| {
        let bary = mesh.barycentric(elem as usize, x);
        dof.eval_velocity(mesh, velocity, elem, bary).unwrap().0
    })
    .sqrt();
    let exact_u_l2 =
        surface_l2_sq(ctx, &|_, x| prob.velocity(t, x).expect("off-center")).sqrt();

    Ok(StepErrors {
        step,
        t,
        err_u_l2,
        err_u_energy,
        err_p_l2,
        err_p_1h,
        u_l2,
        exact_u_l2,
    })
}

/// Accumulated error quantities of one run.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub mesh_size: f64,
    pub dt: f64,
    pub bdf_order: usize,
    pub m: usize,
    pub q: usize,
    /// sqrt(dt * sum |u_h - u|^2_{L2})
    pub e_u_l2l2: f64,
    /// sqrt(dt * sum energy-norm^2)
    pub e_u_l2u: f64,
    /// sqrt(dt * sum |p_h - p|^2_{L2})
    pub e_p_l2l2: f64,
    /// dt * sum of scaled H1 pressure errors
    pub e_p_l1h1: f64,
    /// max over steps of |u_h^n|_{L2}
    pub max_velocity_l2: f64,
    pub max_exact_velocity_l2: f64,
    pub per_step: Vec<StepErrors>,
}

/// dt-weighted accumulation of per-step contributions (steps 1..N).
pub fn accumulate(
    mesh_size: f64,
    dt: f64,
    bdf_order: usize,
    m: usize,
    q: usize,
    per_step: Vec<StepErrors>,
) -> ErrorReport {
    let mut l2l2 = 0.0;
    let mut l2u = 0.0;
    let mut pl2l2 = 0.0;
    let mut pl1h1 = 0.0;
    let mut max_u = 0f64;
    let mut max_exact = 0f64;
    for s in &per_step {
        max_u = max_u.max(s.u_l2);
        max_exact = max_exact.max(s.exact_u_l2);
        if s.step == 0 {
            continue; // sums run over n = 1..N
        }
        l2l2 += s.err_u_l2 * s.err_u_l2;
        l2u += s.err_u_energy * s.err_u_energy;
        pl2l2 += s.err_p_l2 * s.err_p_l2;
        pl1h1 += s.err_p_1h;
    }
    ErrorReport {
        mesh_size,
        dt,
        bdf_order,
        m,
        q,
        e_u_l2l2: (dt * l2l2).sqrt(),
        e_u_l2u: (dt * l2u).sqrt(),
        e_p_l2l2: (dt * pl2l2).sqrt(),
        e_p_l1h1: dt * pl1h1,
        max_velocity_l2: max_u,
        max_exact_velocity_l2: max_exact,
        per_step,
    }
}

/// Observed convergence order between two refinement levels.
pub fn estimated_order(coarse: f64, fine: f64) -> Result<f64> {
    if !(coarse > 0.0) || !(fine > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "order estimate needs positive errors, got {coarse} and {fine}"
        )));
    }
    Ok((coarse / fine).log2())
}

/// CSV table with the column layout of the reference data files.
pub fn reports_to_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("MeshSize,L2Energyu,L2L2u,L1Energyp,L2L2p\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.mesh_size, r.e_u_l2u, r.e_u_l2l2, r.e_p_l1h1, r.e_p_l2l2
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_estimates() {
        assert!((estimated_order(4.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((estimated_order(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(estimated_order(1.0, 1.0).unwrap().abs() < 1e-15);
        assert!(estimated_order(0.0, 1.0).is_err());
        assert!(estimated_order(1.0, -1.0).is_err());
    }

    #[test]
    fn accumulate_single_step() {
        let s = StepErrors {
            step: 1,
            t: 0.2,
            err_u_l2: 3.0,
            err_u_energy: 4.0,
            err_p_l2: 5.0,
            err_p_1h: 6.0,
            u_l2: 7.0,
            exact_u_l2: 8.0,
        };
        let r = accumulate(0.5, 0.2, 1, 1, 1, vec![s]);
        assert!((r.e_u_l2l2 - (0.2f64 * 9.0).sqrt()).abs() < 1e-15);
        assert!((r.e_u_l2u - (0.2f64 * 16.0).sqrt()).abs() < 1e-15);
        assert!((r.e_p_l2l2 - (0.2f64 * 25.0).sqrt()).abs() < 1e-15);
        assert!((r.e_p_l1h1 - 0.2 * 6.0).abs() < 1e-15);
        assert_eq!(r.max_velocity_l2, 7.0);
    }

    #[test]
    fn csv_schema() {
        let r = accumulate(0.5, 0.2, 1, 1, 1, vec![]);
        let csv = reports_to_csv(&[r]);
        assert!(csv.starts_with("MeshSize,L2Energyu,L2L2u,L1Energyp,L2L2p\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
