//! Implicit BDF time loop: rebuild geometry, bands and spaces per step,
//! linearize convection with extrapolated history, assemble, solve.
//!
//! Narrow-band widths follow delta = c R dt sup|w_N| with the sup sampled on
//! the current discrete surface (1.1 safety factor). Every step verifies that
//! the cut set is contained in the bands of the previous R steps, which makes
//! old velocities evaluable where the mass and convection terms need them.

use crate::assemble::{assemble_system, FormParams, SparseSystem, StepContext, StepData};
use crate::cut::CutSurface;
use crate::exact::ManufacturedProblem;
use crate::la::{self, Vec3};
use crate::levelset::{classify_elements, BandClassification, DiscreteLevelSet, GeometryCache, LevelSet};
use crate::mesh::{BackgroundMesh, BoxDomain};
use crate::metrics::{self, ErrorReport, NormParams, StepErrors};
use crate::solve::{self, SolveReport, SolverKind};
use crate::space::{build_spaces, BandDofMap, FEField};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::VecDeque;

/// Backward differentiation formulas up to order 3. `lead` scales the new
/// mass term; `history_weights` combine old fields on the right-hand side;
/// `linearization_weights` extrapolate the transport field.
#[derive(Debug, Clone, Copy)]
pub struct Bdf {
    pub order: usize,
}

impl Bdf {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "BDF order must be 1, 2 or 3, got {order}"
            )));
        }
        Ok(Bdf { order })
    }

    pub fn lead(&self) -> f64 {
        match self.order {
            1 => 1.0,
            2 => 1.5,
            _ => 11.0 / 6.0,
        }
    }

    pub fn history_weights(&self) -> &'static [f64] {
        match self.order {
            1 => &[1.0],
            2 => &[2.0, -0.5],
            _ => &[3.0, -1.5, 1.0 / 3.0],
        }
    }

    pub fn linearization_weights(&self) -> &'static [f64] {
        match self.order {
            1 => &[1.0],
            2 => &[2.0, -1.0],
            _ => &[3.0, -3.0, 1.0],
        }
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub bdf_order: usize,
    pub m: usize,
    pub q: usize,
    pub c_delta: f64,
    pub mu: f64,
    pub speed: f64,
    pub domain: BoxDomain,
    pub solver: SolverKind,
    pub solver_tol: f64,
    pub surface_degree: usize,
    pub volume_degree: usize,
    pub include_advective_correction: bool,
    /// Normalize the improved penalty normal to unit length (the literal
    /// reference scaling divides by |grad phi_h| instead).
    pub unit_improved_normal: bool,
    /// Validation mode: zero forcing and zero initial data.
    pub zero_data: bool,
    /// Memory cap for mesh construction.
    pub cell_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            h: 0.5,
            dt: 0.2,
            t_end: 2.0,
            bdf_order: 1,
            m: 1,
            q: 1,
            c_delta: 2.5,
            mu: 1.0,
            speed: 0.2,
            domain: BoxDomain::benchmark(),
            solver: SolverKind::DirectLu,
            solver_tol: 1e-10,
            surface_degree: 6,
            volume_degree: 4,
            include_advective_correction: true,
            unit_improved_normal: true,
            zero_data: false,
            cell_cap: crate::mesh::DEFAULT_CELL_CAP,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidArgument(
                "h, dt and t_end must be positive".into(),
            ));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end / dt = {steps} is not an integer step count"
            )));
        }
        Bdf::new(self.bdf_order)?;
        if !(1..=2).contains(&self.m) {
            return Err(Error::InvalidArgument(format!(
                "Taylor-Hood order m must be 1 or 2, got {}",
                self.m
            )));
        }
        if self.q != 1 {
            return Err(Error::UnsupportedConfiguration(format!(
                "geometry degree q = {}; only q = 1 is implemented",
                self.q
            )));
        }
        if !(self.c_delta > 0.0) || !(self.mu >= 0.0) || !(self.solver_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "c_delta, mu and solver tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn form_params(&self) -> FormParams {
        let mut p = FormParams::from_mesh_size(self.h, self.mu, self.dt);
        p.include_advective_correction = self.include_advective_correction;
        p.surface_degree = self.surface_degree;
        p.volume_degree = self.volume_degree;
        p
    }

    pub fn norm_params(&self) -> NormParams {
        let p = self.form_params();
        NormParams {
            tau: p.tau,
            rho_u: p.rho_u,
            mu: p.mu,
            volume_degree: p.volume_degree,
        }
    }

    pub fn problem(&self) -> ManufacturedProblem {
        ManufacturedProblem {
            speed: self.speed,
            mu: self.mu,
        }
    }

    /// Warnings about analysis parameter conditions the schedule violates
    /// (logged, never enforced).
    pub fn parameter_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let tau = 1.0 / (self.h * self.h);
        if self.dt < 2.0 / tau {
            w.push(format!(
                "dt = {} violates dt >= 2/tau = {} (stability-proof condition; the reference schedule violates it too)",
                self.dt,
                2.0 / tau
            ));
        }
        w
    }
}

/// Narrow-band width delta_n = c R dt sup|w_N|.
pub fn band_width(c_delta: f64, bdf_order: usize, dt: f64, wn_sup: f64) -> f64 {
    c_delta * bdf_order as f64 * dt * wn_sup
}

/// Sup of |w_N| sampled over the current surface quadrature points, with a
/// 1.1 safety factor standing in for the sup over the time slab.
pub fn estimate_wn_sup(ls: &LevelSet, t: f64, cut: &CutSurface) -> Result<f64> {
    let mut sup = 0f64;
    for q in &cut.quad_points {
        sup = sup.max(ls.normal_speed(t, q.x)?.abs());
    }
    Ok(1.1 * sup)
}

/// Geometry, bands, cut surface and spaces of one time node.
pub struct StepGeometry {
    pub t: f64,
    pub dls: DiscreteLevelSet,
    pub band: BandClassification,
    pub cut: CutSurface,
    pub geo: GeometryCache,
    pub dofmap: BandDofMap,
    pub wn_sup: f64,
}

impl StepGeometry {
    /// Builds geometry at time `t` with the configured band-width rule, or a
    /// fixed width when `delta_override` is given.
    pub fn build(
        mesh: &BackgroundMesh,
        config: &RunConfig,
        t: f64,
        delta_override: Option<f64>,
    ) -> Result<Self> {
        let ls = config.problem().levelset();
        let dls = DiscreteLevelSet::interpolate(mesh, &ls, t, config.q)?;
        let cut_only = classify_elements(mesh, &dls, 0.0)?;
        let cut0 = CutSurface::extract(mesh, &dls, &cut_only, config.surface_degree)?;
        let wn_sup = estimate_wn_sup(&ls, t, &cut0)?;
        let delta = delta_override
            .unwrap_or_else(|| band_width(config.c_delta, config.bdf_order, config.dt, wn_sup));
        let band = classify_elements(mesh, &dls, delta)?;
        let cut = CutSurface::extract(mesh, &dls, &band, config.surface_degree)?;
        let mut geo = GeometryCache::build(mesh, &dls, &band)?;
        geo.unit_improved_normal = config.unit_improved_normal;
        let dofmap = build_spaces(mesh, &band, config.m)?;
        Ok(StepGeometry {
            t,
            dls,
            band,
            cut,
            geo,
            dofmap,
            wn_sup,
        })
    }

    pub fn context<'a>(&'a self, mesh: &'a BackgroundMesh) -> StepContext<'a> {
        StepContext {
            mesh,
            dls: &self.dls,
            band: &self.band,
            cut: &self.cut,
            geo: &self.geo,
            dofmap: &self.dofmap,
        }
    }
}

/// Result of the containment test of the current cut set against older bands.
#[derive(Debug, Clone, Serialize)]
pub struct ContainmentStatus {
    /// (history depth i, number of cut elements outside that band)
    pub violations: Vec<(usize, usize)>,
}

impl ContainmentStatus {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks cut(t_n) against the bands of the previous `R` steps.
pub fn check_containment(
    current: &BandClassification,
    history_bands: &[&BandClassification],
) -> ContainmentStatus {
    let violations = history_bands
        .iter()
        .enumerate()
        .filter_map(|(i, old)| {
            let missing = current.missing_from_band_of(old);
            (missing > 0).then_some((i + 1, missing))
        })
        .collect();
    ContainmentStatus { violations }
}

/// Per-step diagnostics written to the JSON-lines log.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub t: f64,
    pub n_velocity_dofs: usize,
    pub n_pressure_dofs: usize,
    pub n_cut_elements: usize,
    pub n_band_elements: usize,
    pub delta: f64,
    pub wn_sup: f64,
    pub surface_area: f64,
    pub energy_norm_u: f64,
    pub containment_ok: bool,
    pub solve_residual: f64,
    pub solve_iterations: usize,
    pub solve_seconds: f64,
    #[serde(flatten)]
    pub errors: StepErrors,
}

/// Trajectory summary of one run.
pub struct RunResult {
    pub report: ErrorReport,
    pub diagnostics: Vec<StepDiagnostic>,
    pub warnings: Vec<String>,
    pub containment_ok: bool,
}

struct HistoryEntry {
    geom: StepGeometry,
    velocity: FEField,
}

/// Runs the full time loop of the manufactured benchmark.
pub fn run(mesh: &BackgroundMesh, config: &RunConfig) -> Result<RunResult> {
    run_with_observer(mesh, config, |_| {})
}

/// Like [`run`], invoking `observe` after every completed step (for logging).
pub fn run_with_observer(
    mesh: &BackgroundMesh,
    config: &RunConfig,
    mut observe: impl FnMut(&StepDiagnostic),
) -> Result<RunResult> {
    config.validate()?;
    if (mesh.h() - config.h).abs() > 1e-12 * config.h {
        return Err(Error::InvalidArgument(format!(
            "mesh size {} does not match configured h = {}",
            mesh.h(),
            config.h
        )));
    }
    let prob = config.problem();
    let bdf = Bdf::new(config.bdf_order)?;
    let n_steps = config.n_steps();
    let warnings = config.parameter_warnings();
    let norm_params = config.norm_params();

    let mut per_step: Vec<StepErrors> = Vec::with_capacity(n_steps + 1);
    let mut diagnostics: Vec<StepDiagnostic> = Vec::with_capacity(n_steps + 1);
    let mut history: VecDeque<HistoryEntry> = VecDeque::with_capacity(bdf.order + 1);

    // bootstrap steps 0 .. R-1 carry nodal interpolants of the exact solution
    let bootstrap_steps = bdf.order.min(n_steps + 1);
    for step in 0..bootstrap_steps {
        let t = step as f64 * config.dt;
        let geom = StepGeometry::build(mesh, config, t, None)
            .map_err(|e| abort(step, e))?;
        let velocity = if config.zero_data {
            FEField {
                kind: crate::space::FieldKind::Velocity,
                coeffs: vec![0.0; geom.dofmap.n_velocity_dofs()],
            }
        } else {
            geom.dofmap
                .interpolate_velocity(|x| prob.velocity(t, x).expect("node off center"))
        };
        let pressure = if config.zero_data {
            FEField {
                kind: crate::space::FieldKind::Pressure,
                coeffs: vec![0.0; geom.dofmap.n_pressure_dofs()],
            }
        } else {
            geom.dofmap.interpolate_pressure(|x| prob.pressure(t, x))
        };
        let (errors, diag) = record_step(
            mesh,
            &norm_params,
            &prob,
            &geom,
            &velocity,
            &pressure,
            step,
            true,
            None,
        )
        .map_err(|e| abort(step, e))?;
        observe(&diag);
        per_step.push(errors);
        diagnostics.push(diag);
        history.push_front(HistoryEntry { geom, velocity });
    }

    for step in bootstrap_steps..=n_steps {
        let t = step as f64 * config.dt;
        let (geom, status) = prepare_step_geometry(mesh, config, t, &history)
            .map_err(|e| abort(step, e))?;
        if !status.ok() {
            let &(depth, missing) = &status.violations[0];
            return Err(abort(
                step,
                Error::ContainmentViolation {
                    step,
                    history_step: step - depth,
                    missing,
                },
            ));
        }

        let (velocity, pressure, solve_report) =
            advance(mesh, config, &prob, &bdf, &geom, &history).map_err(|e| abort(step, e))?;

        let (errors, diag) = record_step(
            mesh,
            &norm_params,
            &prob,
            &geom,
            &velocity,
            &pressure,
            step,
            status.ok(),
            Some(&solve_report),
        )
        .map_err(|e| abort(step, e))?;
        observe(&diag);
        per_step.push(errors);
        diagnostics.push(diag);

        history.push_front(HistoryEntry { geom, velocity });
        while history.len() > bdf.order {
            history.pop_back();
        }
    }

    let report = metrics::accumulate(
        config.h,
        config.dt,
        config.bdf_order,
        config.m,
        config.q,
        per_step,
    );
    // a violation aborts the run, so a completed trajectory satisfied the
    // containment condition at every step
    Ok(RunResult {
        report,
        diagnostics,
        warnings,
        containment_ok: true,
    })
}

fn abort(step: usize, source: Error) -> Error {
    match source {
        e @ Error::StepAborted { .. } => e,
        e => Error::StepAborted {
            step,
            source: Box::new(e),
        },
    }
}

/// Builds the geometry at `t`, retrying once with a 1.5x wider band when the
/// containment check fails.
fn prepare_step_geometry(
    mesh: &BackgroundMesh,
    config: &RunConfig,
    t: f64,
    history: &VecDeque<HistoryEntry>,
) -> Result<(StepGeometry, ContainmentStatus)> {
    let geom = StepGeometry::build(mesh, config, t, None)?;
    let bands: Vec<&BandClassification> = history.iter().map(|h| &h.geom.band).collect();
    let status = check_containment(&geom.band, &bands);
    if status.ok() {
        return Ok((geom, status));
    }
    let wider = 1.5 * geom.band.delta;
    let geom = StepGeometry::build(mesh, config, t, Some(wider))?;
    let status = check_containment(&geom.band, &bands);
    Ok((geom, status))
}

/// Assembles and solves one implicit step.
fn advance(
    mesh: &BackgroundMesh,
    config: &RunConfig,
    prob: &ManufacturedProblem,
    bdf: &Bdf,
    geom: &StepGeometry,
    history: &VecDeque<HistoryEntry>,
) -> Result<(FEField, FEField, SolveReport)> {
    let t = geom.t;
    let params = config.form_params();
    let ctx = geom.context(mesh);
    let ls = prob.levelset();

    let zero_data = config.zero_data;
    let forcing = move |x: Vec3| -> Vec3 {
        if zero_data {
            [0.0; 3]
        } else {
            prob.momentum_forcing(t, x)
                .expect("surface quadrature point inside analytic strip")
                .f_vec
        }
    };
    let f_scalar = |_x: Vec3| 0.0;
    let normal_speed = move |x: Vec3| -> f64 {
        ls.normal_speed(t, x)
            .expect("nondegenerate gradient near surface")
    };

    let lin = bdf.linearization_weights();
    let transport = |elem: u32, x: Vec3| -> Vec3 {
        let bary = mesh.barycentric(elem as usize, x);
        let mut z = [0.0; 3];
        for (k, &w) in lin.iter().enumerate() {
            let entry = &history[k];
            let (v, _) = entry
                .geom
                .dofmap
                .eval_velocity(mesh, &entry.velocity, elem, bary)
                .expect("containment guarantees active element");
            z = la::add(z, la::scale(w, v));
        }
        z
    };
    let hist_weights = bdf.history_weights();
    let history_comb = |elem: u32, x: Vec3| -> Vec3 {
        let bary = mesh.barycentric(elem as usize, x);
        let mut z = [0.0; 3];
        for (k, &w) in hist_weights.iter().enumerate() {
            let entry = &history[k];
            let (v, _) = entry
                .geom
                .dofmap
                .eval_velocity(mesh, &entry.velocity, elem, bary)
                .expect("containment guarantees active element");
            z = la::add(z, la::scale(w, v));
        }
        z
    };

    let data = StepData {
        forcing: &forcing,
        f_scalar: &f_scalar,
        normal_speed: &normal_speed,
        transport: &transport,
        history: &history_comb,
    };
    let system: SparseSystem = assemble_system(&ctx, &params, bdf.lead(), &data)?;
    let (u, p, report) = solve::solve(&system, config.solver_tol, config.solver)?;
    Ok((
        FEField {
            kind: crate::space::FieldKind::Velocity,
            coeffs: u,
        },
        FEField {
            kind: crate::space::FieldKind::Pressure,
            coeffs: p,
        },
        report,
    ))
}

#[allow(clippy::too_many_arguments)]
fn record_step(
    mesh: &BackgroundMesh,
    norm_params: &NormParams,
    prob: &ManufacturedProblem,
    geom: &StepGeometry,
    velocity: &FEField,
    pressure: &FEField,
    step: usize,
    containment_ok: bool,
    solve_report: Option<&SolveReport>,
) -> Result<(StepErrors, StepDiagnostic)> {
    let ctx = geom.context(mesh);
    let errors = metrics::step_errors(&ctx, norm_params, prob, geom.t, step, velocity, pressure)?;
    let energy_u = metrics::energy_norm_sq(&ctx, norm_params, &|elem, x| {
        let bary = mesh.barycentric(elem as usize, x);
        geom.dofmap
            .eval_velocity(mesh, velocity, elem, bary)
            .expect("active element")
    })?
    .sqrt();
    let diag = StepDiagnostic {
        step,
        t: geom.t,
        n_velocity_dofs: geom.dofmap.n_velocity_dofs(),
        n_pressure_dofs: geom.dofmap.n_pressure_dofs(),
        n_cut_elements: geom.band.cut_elements.len(),
        n_band_elements: geom.band.band_elements.len(),
        delta: geom.band.delta,
        wn_sup: geom.wn_sup,
        surface_area: geom.cut.total_area,
        energy_norm_u: energy_u,
        containment_ok,
        solve_residual: solve_report.map_or(0.0, |r| r.relative_residual),
        solve_iterations: solve_report.map_or(0, |r| r.iterations),
        solve_seconds: solve_report.map_or(0.0, |r| r.wall_time_s),
        errors: errors.clone(),
    };
    Ok((errors, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bdf_weights_sum_to_lead() {
        for order in 1..=3 {
            let bdf = Bdf::new(order).unwrap();
            let s: f64 = bdf.history_weights().iter().sum();
            assert!((bdf.lead() - s).abs() < 1e-14, "BDF{order} weights");
            let l: f64 = bdf.linearization_weights().iter().sum();
            assert!((l - 1.0).abs() < 1e-14);
        }
        assert!(Bdf::new(0).is_err());
        assert!(Bdf::new(4).is_err());
    }

    #[test]
    fn band_width_formula() {
        assert!((band_width(2.5, 1, 0.2, 0.2) - 0.1).abs() < 1e-15);
        assert!((band_width(2.5, 2, 0.2, 0.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_steps(), 10);
        c.dt = 0.3;
        assert!(c.validate().is_err());
        c.dt = 0.2;
        c.q = 2;
        assert!(matches!(
            c.validate(),
            Err(Error::UnsupportedConfiguration(_))
        ));
        c.q = 1;
        c.h = -0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_condition_warning_emitted() {
        // the reference schedule dt = 0.2, h = 0.5 violates dt >= 2 h^2
        let c = RunConfig::default();
        assert!(!c.parameter_warnings().is_empty());
        let ok = RunConfig {
            dt: 0.5,
            t_end: 2.0,
            ..RunConfig::default()
        };
        assert!(ok.parameter_warnings().is_empty());
    }

    #[test]
    fn containment_status_reporting() {
        let a = BandClassification {
            cut_elements: vec![1, 2, 3],
            band_elements: vec![1, 2, 3, 4],
            delta: 0.1,
        };
        let b = BandClassification {
            cut_elements: vec![2, 3],
            band_elements: vec![2, 3],
            delta: 0.1,
        };
        let ok = check_containment(&b, &[&a]);
        assert!(ok.ok());
        let bad = check_containment(&a, &[&b]);
        assert!(!bad.ok());
        assert_eq!(bad.violations, vec![(1, 1)]);
    }
}
