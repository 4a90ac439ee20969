//! Manufactured moving-sphere problem: exact velocity, pressure and the
//! consistent forcing terms.
//!
//! The exact fields are global closed-form expressions; every derivative in
//! the forcing is taken by forward-mode dual numbers (nested for the viscous
//! term, which needs second derivatives). Data is evaluated at the closest
//! surface point and extended constantly along normals.

use crate::dual::{Dual, Scalar, D4};
use crate::la::{self, Mat3, Vec3};
use crate::levelset::LevelSet;
use crate::{Error, Result};

/// A time-dependent vector field with a single generic closed-form
/// expression, differentiable by dual-number instantiation.
pub trait VectorField {
    fn eval<T: Scalar>(&self, t: T, x: [T; 3]) -> [T; 3];

    fn value(&self, t: f64, x: Vec3) -> Vec3 {
        self.eval(t, x)
    }

    /// Value, spatial Jacobian (J_ij = d f_i / d x_j) and time derivative.
    fn jacobian(&self, t: f64, x: Vec3) -> (Vec3, Mat3, Vec3) {
        let td = D4::variable(t, 0);
        let xd = [
            D4::variable(x[0], 1),
            D4::variable(x[1], 2),
            D4::variable(x[2], 3),
        ];
        let f = self.eval(td, xd);
        let mut jac = [[0.0; 3]; 3];
        let mut ft = [0.0; 3];
        let mut val = [0.0; 3];
        for i in 0..3 {
            val[i] = f[i].v;
            ft[i] = f[i].d[0];
            for j in 0..3 {
                jac[i][j] = f[i].d[1 + j];
            }
        }
        (val, jac, ft)
    }
}

/// Surface divergence tr(P (grad f) P) of a vector field at a point with unit
/// normal `n`.
pub fn surface_divergence(field: &impl VectorField, t: f64, x: Vec3, n: Vec3) -> f64 {
    let (_, jac, _) = field.jacobian(t, x);
    let p = la::projector(n);
    la::trace(&la::mat_mul(&la::mat_mul(&p, &jac), &p))
}

/// The identity field x -> x (its surface divergence on any surface is tr P = 2).
pub struct IdentityField;

impl VectorField for IdentityField {
    fn eval<T: Scalar>(&self, _t: T, x: [T; 3]) -> [T; 3] {
        x
    }
}

/// Exact tangential velocity of the moving-sphere benchmark:
/// u = n x grad(psi) with psi = x y - 2 t and n = (x - g(t)) / |x - g(t)|.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedVelocity {
    pub speed: f64,
}

impl VectorField for ManufacturedVelocity {
    fn eval<T: Scalar>(&self, t: T, x: [T; 3]) -> [T; 3] {
        let g = [T::from_f64(self.speed) * t, T::zero(), T::zero()];
        let r = la::gsub(x, g);
        let n = la::gscale(T::one() / la::gnorm(r), r);
        let grad_psi = [x[1], x[0], T::zero()];
        la::gcross(n, grad_psi)
    }
}

/// Momentum forcing and scalar divergence data at one point.
#[derive(Debug, Clone, Copy)]
pub struct ForcingSample {
    pub f_vec: Vec3,
    pub f_scalar: f64,
}

/// Forcing split by physical origin (inertia, viscous stress, pressure).
#[derive(Debug, Clone, Copy)]
pub struct ForcingTerms {
    pub inertial: Vec3,
    pub viscous: Vec3,
    pub pressure_grad: Vec3,
}

impl ForcingTerms {
    pub fn total(&self) -> Vec3 {
        la::add(la::add(self.inertial, self.viscous), self.pressure_grad)
    }
}

/// Moving-sphere manufactured problem of the convergence benchmark.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedProblem {
    /// Center speed along x (0.2 in the benchmark).
    pub speed: f64,
    /// Viscosity; not reported with the reference data, defaults to 1.
    pub mu: f64,
}

impl Default for ManufacturedProblem {
    fn default() -> Self {
        ManufacturedProblem { speed: 0.2, mu: 1.0 }
    }
}

const STRIP: (f64, f64) = (0.5, 1.5);

impl ManufacturedProblem {
    pub fn levelset(&self) -> LevelSet {
        LevelSet::MovingSphere { speed: self.speed }
    }

    pub fn center(&self, t: f64) -> Vec3 {
        [self.speed * t, 0.0, 0.0]
    }

    pub fn velocity_field(&self) -> ManufacturedVelocity {
        ManufacturedVelocity { speed: self.speed }
    }

    /// Exact tangential velocity (globally extended off the surface).
    pub fn velocity(&self, t: f64, x: Vec3) -> Result<Vec3> {
        let r = la::sub(x, self.center(t));
        if la::norm(r) < 1e-12 {
            return Err(Error::CenterSingularity);
        }
        Ok(self.velocity_field().value(t, x))
    }

    /// Velocity together with its spatial Jacobian and time derivative.
    pub fn velocity_jacobian(&self, t: f64, x: Vec3) -> Result<(Vec3, Mat3, Vec3)> {
        let r = la::sub(x, self.center(t));
        if la::norm(r) < 1e-12 {
            return Err(Error::CenterSingularity);
        }
        Ok(self.velocity_field().jacobian(t, x))
    }

    /// Exact pressure p = (x1 - speed t) x2 + x3 (zero mean on the sphere).
    pub fn pressure(&self, t: f64, x: Vec3) -> f64 {
        (x[0] - self.speed * t) * x[1] + x[2]
    }

    pub fn pressure_gradient(&self, t: f64, x: Vec3) -> Vec3 {
        [x[1], x[0] - self.speed * t, 1.0]
    }

    /// Normal velocity of the surface, constant along radial rays.
    pub fn normal_speed(&self, t: f64, x: Vec3) -> Result<f64> {
        let r = la::sub(x, self.center(t));
        let rn = la::norm(r);
        if rn < 1e-12 {
            return Err(Error::CenterSingularity);
        }
        Ok(self.speed * r[0] / rn)
    }

    /// Closest point on the exact sphere; rejects points outside the analytic
    /// strip |x - g| in [0.5, 1.5].
    pub fn closest_point(&self, t: f64, x: Vec3) -> Result<Vec3> {
        let g = self.center(t);
        let r = la::sub(x, g);
        let rn = la::norm(r);
        if !(STRIP.0..=STRIP.1).contains(&rn) {
            return Err(Error::StripViolation(rn));
        }
        Ok(la::add(g, la::scale(1.0 / rn, r)))
    }

    /// Scalar divergence data div_Gamma(u) at the closest surface point;
    /// identically zero for the stream-function velocity but computed, so
    /// configurations with nonzero data stay supported.
    pub fn divergence_data(&self, t: f64, x: Vec3) -> Result<f64> {
        let y = self.closest_point(t, x)?;
        let n = la::normalize(la::sub(y, self.center(t)));
        Ok(surface_divergence(&self.velocity_field(), t, y, n))
    }

    /// Momentum forcing, split into terms; evaluated at the closest surface
    /// point, hence constant in normal direction.
    pub fn forcing_terms(&self, t: f64, x: Vec3) -> Result<ForcingTerms> {
        let y = self.closest_point(t, x)?;
        let g = self.center(t);
        // exact sphere geometry at y: unit radius, H = P, kappa = 2
        let n = la::sub(y, g);
        let p = la::projector(n);
        let h = p;
        let w_n = self.speed * n[0];

        let (u, jac, u_t) = self.velocity_field().jacobian(t, y);
        // normal time derivative of the extension: du/dt + w_N (n . grad) u
        let dcirc = la::add(u_t, la::scale(w_n, la::mat_vec(&jac, n)));
        let covariant = la::mat_mul(&la::mat_mul(&p, &jac), &p);
        let inertial = la::add(
            la::add(la::mat_vec(&p, dcirc), la::scale(w_n, la::mat_vec(&h, u))),
            la::mat_vec(&covariant, u),
        );

        let div_e = self.divergence_of_strain(t, y, &p);
        let viscous = la::scale(-2.0 * self.mu, la::mat_vec(&p, div_e));

        let pressure_grad = la::mat_vec(&p, self.pressure_gradient(t, y));

        Ok(ForcingTerms {
            inertial,
            viscous,
            pressure_grad,
        })
    }

    pub fn momentum_forcing(&self, t: f64, x: Vec3) -> Result<ForcingSample> {
        let terms = self.forcing_terms(t, x)?;
        Ok(ForcingSample {
            f_vec: terms.total(),
            f_scalar: 0.0,
        })
    }

    /// Surface divergence of the rate-of-strain tensor E(u) = P sym(grad u) P,
    /// row-wise: (div_G E)_i = tr(P grad(E_i.) P). The strain rows are
    /// differentiated with nested duals (second derivatives of u).
    fn divergence_of_strain(&self, t: f64, y: Vec3, p_exact: &Mat3) -> Vec3 {
        type T1 = Dual<f64, 3>;
        let td = T1::constant(t);
        let xd = [
            T1::variable(y[0], 0),
            T1::variable(y[1], 1),
            T1::variable(y[2], 2),
        ];
        let e = strain_tensor(self.speed, td, xd);
        let mut out = [0.0; 3];
        for i in 0..3 {
            // Jacobian of the i-th strain row
            let mut row_jac = [[0.0; 3]; 3];
            for j in 0..3 {
                for k in 0..3 {
                    row_jac[j][k] = e[i][j].d[k];
                }
            }
            let m = la::mat_mul(&la::mat_mul(p_exact, &row_jac), p_exact);
            out[i] = la::trace(&m);
        }
        out
    }
}

/// E(u)(x) = P(x) sym(grad u)(x) P(x) as a generic expression; the inner
/// Jacobian of u is produced by a second dual level.
fn strain_tensor<T: Scalar>(speed: f64, t: T, x: [T; 3]) -> [[T; 3]; 3] {
    let field = ManufacturedVelocity { speed };
    let xd = [
        Dual::<T, 3>::variable(x[0], 0),
        Dual::<T, 3>::variable(x[1], 1),
        Dual::<T, 3>::variable(x[2], 2),
    ];
    let u = field.eval(Dual::constant(t), xd);
    let mut jac = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            jac[i][j] = u[i].d[j];
        }
    }
    // projector from the closed-form normal
    let g = [T::from_f64(speed) * t, T::zero(), T::zero()];
    let r = la::gsub(x, g);
    let n = la::gscale(T::one() / la::gnorm(r), r);
    let mut p = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] = if i == j { T::one() } else { T::zero() };
            p[i][j] = p[i][j] - n[i] * n[j];
        }
    }
    let mut sym = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sym[i][j] = (jac[i][j] + jac[j][i]) * T::from_f64(0.5);
        }
    }
    gmat_mul(&gmat_mul(&p, &sym), &p)
}

fn gmat_mul<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                c[i][j] = c[i][j] + a[i][k] * bk[j];
            }
        }
    }
    c
}

/// Integrates a function over the exact sphere at time `t` with a product
/// Gauss-Legendre (polar) x trapezoid (azimuthal) rule; exact for low-degree
/// trigonometric polynomials, so symmetry-based identities hold to roundoff.
pub fn integrate_exact_sphere(
    prob: &ManufacturedProblem,
    t: f64,
    mut f: impl FnMut(Vec3) -> f64,
) -> f64 {
    let n_gl = 16;
    let n_phi = 32;
    let (nodes, weights) = crate::quadrature::gauss_legendre_01(n_gl);
    let mut total = 0.0;
    for (c01, w) in nodes.iter().zip(&weights) {
        let cos_t = 2.0 * c01 - 1.0;
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        for k in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
            let x = la::add(
                prob.center(t),
                [sin_t * phi.cos(), sin_t * phi.sin(), cos_t],
            );
            total += 2.0 * w * (2.0 * std::f64::consts::PI / n_phi as f64) * f(x);
        }
    }
    total
}

/// Deterministic pseudo-random unit directions for sampling checks.
pub fn sample_directions(count: usize, seed: u64) -> Vec<Vec3> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec3 = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = la::norm(v);
        if n > 1e-3 && n <= 1.0 {
            out.push(la::scale(1.0 / n, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_closed_form_points() {
        let prob = ManufacturedProblem::default();
        // t=0, x=(0,0,1): grad psi = 0 -> u = 0
        let u = prob.velocity(0.0, [0.0, 0.0, 1.0]).unwrap();
        assert!(la::norm(u) < 1e-15);
        // north pole of the moved sphere: u = (-0.2 t, 0, 0)
        let t = 1.7;
        let x = la::add(prob.center(t), [0.0, 0.0, 1.0]);
        let u = prob.velocity(t, x).unwrap();
        assert!(la::norm(la::sub(u, [-0.2 * t, 0.0, 0.0])) < 1e-14);
        assert!(matches!(
            prob.velocity(0.0, [0.0; 3]),
            Err(Error::CenterSingularity)
        ));
    }

    #[test]
    fn velocity_is_tangential() {
        let prob = ManufacturedProblem::default();
        for (k, dir) in sample_directions(1000, 7).into_iter().enumerate() {
            let t = 2.0 * (k as f64) / 1000.0;
            let x = la::add(prob.center(t), dir);
            let u = prob.velocity(t, x).unwrap();
            assert!(la::dot(dir, u).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_values_and_gradient() {
        let prob = ManufacturedProblem::default();
        assert!((prob.pressure(0.0, [0.0, 0.0, 1.0]) - 1.0).abs() < 1e-15);
        let s = 1.0 / 2f64.sqrt();
        assert!((prob.pressure(0.0, [s, s, 0.0]) - 0.5).abs() < 1e-15);
        let g = prob.pressure_gradient(1.0, [0.3, -0.2, 0.9]);
        assert!(la::norm(la::sub(g, [-0.2, 0.3 - 0.2, 1.0])) < 1e-15);
    }

    #[test]
    fn pressure_zero_mean_on_exact_sphere() {
        // product Gauss x trapezoid rule on the exact sphere; p has zero mean
        let prob = ManufacturedProblem::default();
        for &t in &[0.0, 1.0, 2.0] {
            let integral = integrate_exact_sphere(&prob, t, |x| prob.pressure(t, x));
            let area = integrate_exact_sphere(&prob, t, |_| 1.0);
            assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-10);
            assert!(integral.abs() <= 1e-10 * area, "mean pressure {integral:e}");
        }
    }

    #[test]
    fn divergence_identities() {
        let prob = ManufacturedProblem::default();
        // manufactured velocity is surface-divergence free
        for (k, dir) in sample_directions(100, 3).into_iter().enumerate() {
            let t = k as f64 / 50.0;
            let x = la::add(prob.center(t), la::scale(1.13, dir));
            let d = prob.divergence_data(t, x).unwrap();
            assert!(d.abs() < 1e-10, "div = {d:e}");
        }
        // identity field: div_Gamma x = tr P = 2 on the unit sphere
        for dir in sample_directions(20, 11) {
            let d = surface_divergence(&IdentityField, 0.0, dir, dir);
            assert!((d - 2.0).abs() < 1e-12);
        }
        // plane with normal e3, u = (y, 0, 0): tangential divergence vanishes
        struct Shear;
        impl VectorField for Shear {
            fn eval<T: Scalar>(&self, _t: T, x: [T; 3]) -> [T; 3] {
                [x[1], T::zero(), T::zero()]
            }
        }
        let d = surface_divergence(&Shear, 0.0, [0.2, 0.4, 0.0], [0.0, 0.0, 1.0]);
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn forcing_constant_normal_extension() {
        let prob = ManufacturedProblem::default();
        for (k, dir) in sample_directions(50, 5).into_iter().enumerate() {
            let t = k as f64 / 25.0;
            let y = la::add(prob.center(t), dir);
            let x = la::add(prob.center(t), la::scale(1.37, dir));
            let fy = prob.momentum_forcing(t, y).unwrap();
            let fx = prob.momentum_forcing(t, x).unwrap();
            assert!(la::norm(la::sub(fx.f_vec, fy.f_vec)) < 1e-12);
            assert_eq!(fx.f_scalar, 0.0);
        }
        assert!(matches!(
            prob.momentum_forcing(0.0, [3.0, 0.0, 0.0]),
            Err(Error::StripViolation(_))
        ));
    }

    #[test]
    fn term_isolation_switch() {
        let prob = ManufacturedProblem { speed: 0.2, mu: 0.0 };
        for dir in sample_directions(10, 9) {
            let t = 0.8;
            let x = la::add(prob.center(t), dir);
            let terms = prob.forcing_terms(t, x).unwrap();
            // mu = 0 kills the viscous part entirely
            assert!(la::norm(terms.viscous) < 1e-15);
            let f = prob.momentum_forcing(t, x).unwrap().f_vec;
            let inertial_only = la::sub(f, terms.pressure_grad);
            assert!(la::norm(la::sub(inertial_only, terms.inertial)) < 1e-14);
        }
    }

    #[test]
    fn forcing_is_tangential() {
        let prob = ManufacturedProblem::default();
        for dir in sample_directions(50, 13) {
            let t = 1.1;
            let x = la::add(prob.center(t), dir);
            let f = prob.momentum_forcing(t, x).unwrap().f_vec;
            assert!(la::dot(f, dir).abs() < 1e-12);
        }
    }
}
