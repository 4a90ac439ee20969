//! Sparse saddle-point solves for the per-step systems.
//!
//! The default path is a sparse direct LU factorization (fill-reducing
//! ordering inside `faer`). A restarted GMRES with a block upper-triangular
//! preconditioner is kept as an independent cross-check and as an option for
//! finer meshes. Returned pressures are shifted to exact zero surface mean.

use crate::assemble::SparseSystem;
use crate::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    DirectLu,
    Gmres { restart: usize, max_iter: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::DirectLu
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub relative_residual: f64,
    /// Krylov iterations; 0 for the direct path.
    pub iterations: usize,
    pub factorization_reused: bool,
    pub wall_time_s: f64,
}

fn to_csc(n_rows: usize, n_cols: usize, triplets: &[(u32, u32, f64)]) -> Result<SparseColMat<usize, f64>> {
    let trips: Vec<Triplet<usize, usize, f64>> = triplets
        .iter()
        .map(|&(r, c, v)| Triplet::new(r as usize, c as usize, v))
        .collect();
    SparseColMat::try_new_from_triplets(n_rows, n_cols, &trips)
        .map_err(|e| Error::SolverFailure(format!("matrix build failed: {e:?}")))
}

fn lu_solve_vec(lu: &faer::sparse::linalg::solvers::Lu<usize, f64>, rhs: &[f64]) -> Vec<f64> {
    let b = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

/// Solves the bordered system and mean-shifts the pressure. Returns velocity
/// coefficients, pressure coefficients and a report.
pub fn solve(
    system: &SparseSystem,
    tol: f64,
    kind: SolverKind,
) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let start = Instant::now();
    let n = system.n();
    let (x, iterations) = match kind {
        SolverKind::DirectLu => {
            let a = to_csc(n, n, &system.triplets)?;
            let lu = a
                .sp_lu()
                .map_err(|e| Error::SolverFailure(format!("sparse LU failed: {e:?}")))?;
            (lu_solve_vec(&lu, &system.rhs), 0)
        }
        SolverKind::Gmres { restart, max_iter } => gmres(system, tol, restart, max_iter)?,
    };
    let relative_residual = system.residual_norm(&x);
    if relative_residual > tol {
        return Err(Error::SolverFailure(format!(
            "relative residual {relative_residual:.3e} above tolerance {tol:.1e}"
        )));
    }
    let mut velocity = x[..system.nu].to_vec();
    let mut pressure = x[system.nu..system.nu + system.np].to_vec();
    shift_pressure_mean(system, &mut pressure);
    velocity.shrink_to_fit();
    let report = SolveReport {
        relative_residual,
        iterations,
        factorization_reused: false,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((velocity, pressure, report))
}

/// Enforces an exactly zero discrete surface mean on the pressure.
pub fn shift_pressure_mean(system: &SparseSystem, pressure: &mut [f64]) {
    let mean: f64 = system
        .pressure_mean
        .iter()
        .zip(pressure.iter())
        .map(|(m, p)| m * p)
        .sum();
    let shift = mean / system.surface_area;
    for p in pressure.iter_mut() {
        *p -= shift;
    }
}

/// Restarted GMRES with a block upper-triangular right preconditioner:
/// velocity block solved by LU, pressure block preconditioned by the
/// stabilization plus surface mass (bordered by the mean constraint).
fn gmres(
    system: &SparseSystem,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = system.n();
    let nu = system.nu;
    let np = system.np;

    // velocity sub-block
    let a_trips: Vec<(u32, u32, f64)> = system
        .triplets
        .iter()
        .filter(|&&(r, c, _)| (r as usize) < nu && (c as usize) < nu)
        .copied()
        .collect();
    let a_lu = to_csc(nu, nu, &a_trips)?
        .sp_lu()
        .map_err(|e| Error::SolverFailure(format!("preconditioner LU (velocity): {e:?}")))?;

    // pressure sub-block: C (+ surface mass) with the mean-constraint border
    let mut s_trips: Vec<(u32, u32, f64)> = system
        .triplets
        .iter()
        .filter(|&&(r, c, _)| {
            (nu..nu + np).contains(&(r as usize)) && (nu..nu + np).contains(&(c as usize))
        })
        .map(|&(r, c, v)| (r - nu as u32, c - nu as u32, v))
        .collect();
    for &(r, c, v) in &system.pressure_surface_mass {
        s_trips.push((r, c, v));
    }
    for (j, &m) in system.pressure_mean.iter().enumerate() {
        s_trips.push((j as u32, np as u32, m));
        s_trips.push((np as u32, j as u32, m));
    }
    let s_lu = to_csc(np + 1, np + 1, &s_trips)?
        .sp_lu()
        .map_err(|e| Error::SolverFailure(format!("preconditioner LU (pressure): {e:?}")))?;

    // coupling block for the triangular application
    let bt_trips: Vec<(u32, u32, f64)> = system
        .triplets
        .iter()
        .filter(|&&(r, c, _)| (r as usize) < nu && (c as usize) >= nu)
        .copied()
        .collect();

    let precond = |r: &[f64]| -> Vec<f64> {
        // solve [S] (p, l) = r_p first, then velocity with corrected rhs
        let rp: Vec<f64> = r[nu..].to_vec();
        let pl = lu_solve_vec(&s_lu, &rp);
        let mut ru = r[..nu].to_vec();
        for &(row, col, v) in &bt_trips {
            ru[row as usize] -= v * pl[col as usize - nu];
        }
        let u = lu_solve_vec(&a_lu, &ru);
        let mut out = vec![0.0; n];
        out[..nu].copy_from_slice(&u);
        out[nu..].copy_from_slice(&pl);
        out
    };

    let matvec = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        system.apply(x, &mut y);
        y
    };

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let b_norm = norm(&system.rhs).max(1e-300);
    let mut x = vec![0.0; n];
    let mut total_iters = 0usize;

    'outer: while total_iters < max_iter {
        let ax = matvec(&x);
        let r0: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r0);
        if beta / b_norm <= 0.1 * tol {
            break;
        }
        let m = restart.min(max_iter - total_iters);
        let mut v_basis: Vec<Vec<f64>> = vec![r0.iter().map(|a| a / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            k_used = k + 1;
            let z = precond(&v_basis[k]);
            let mut w = matvec(&z);
            for (i, vi) in v_basis.iter().enumerate() {
                let hik: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                hess[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hk1 = norm(&w);
            hess[k + 1][k] = hk1;
            // Givens rotations
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hk1 * hk1).sqrt();
            if denom < 1e-300 {
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hk1 / denom;
            hess[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            if hk1 > 1e-300 {
                v_basis.push(w.iter().map(|a| a / hk1).collect());
            }
            if g[k + 1].abs() / b_norm <= 0.1 * tol || hk1 <= 1e-300 {
                break;
            }
            if total_iters >= max_iter {
                break;
            }
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut dz = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (d, v) in dz.iter_mut().zip(&v_basis[j]) {
                *d += yj * v;
            }
        }
        let update = precond(&dz);
        for (xi, ui) in x.iter_mut().zip(&update) {
            *xi += ui;
        }
        let res = {
            let ax = matvec(&x);
            let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            norm(&r) / b_norm
        };
        if res <= tol {
            break 'outer;
        }
    }
    let res = {
        let ax = matvec(&x);
        let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        norm(&r) / b_norm
    };
    if res > tol {
        return Err(Error::SolverFailure(format!(
            "GMRES stalled at relative residual {res:.3e} after {total_iters} iterations"
        )));
    }
    Ok((x, total_iters))
}

/// Condition-number estimate: power iteration on A^T A for the largest
/// singular value and on the factorized inverse for the smallest.
pub fn condition_probe(system: &SparseSystem, size_cap: usize) -> Result<f64> {
    let n = system.n();
    if n > size_cap {
        return Err(Error::MemoryCap {
            requested: n,
            cap: size_cap,
        });
    }
    let a = to_csc(n, n, &system.triplets)?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::SolverFailure(format!("sparse LU failed: {e:?}")))?;
    let at_trips: Vec<(u32, u32, f64)> = system
        .triplets
        .iter()
        .map(|&(r, c, v)| (c, r, v))
        .collect();
    let at = to_csc(n, n, &at_trips)?;
    let at_lu = at
        .sp_lu()
        .map_err(|e| Error::SolverFailure(format!("sparse LU (transpose) failed: {e:?}")))?;

    let matvec = |trips: &[(u32, u32, f64)], x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for &(r, c, v) in trips {
            y[r as usize] += v * x[c as usize];
        }
        y
    };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();

    // deterministic pseudo-random start
    let mut x: Vec<f64> = (0..n)
        .map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5)
        .collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut sigma_max = 0.0;
    for _ in 0..60 {
        let y = matvec(&system.triplets, &x);
        let z = matvec(&at_trips, &y);
        let nz = norm(&z);
        sigma_max = nz.sqrt();
        x = z.into_iter().map(|v| v / nz).collect();
    }

    let mut y: Vec<f64> = (0..n)
        .map(|i| ((i as f64 * 78.233).cos() * 9631.17).fract() - 0.5)
        .collect();
    let ny = norm(&y);
    y.iter_mut().for_each(|v| *v /= ny);
    let mut inv_sigma_min = 0.0;
    for _ in 0..60 {
        let z1 = lu_solve_vec(&at_lu, &y);
        let z = lu_solve_vec(&lu, &z1);
        let nz = norm(&z);
        inv_sigma_min = nz.sqrt();
        y = z.into_iter().map(|v| v / nz).collect();
    }
    Ok(sigma_max * inv_sigma_min)
}

/// Writes a triplet matrix in Matrix Market coordinate format.
pub fn write_matrix_market(
    path: &std::path::Path,
    rows: usize,
    cols: usize,
    triplets: &[(u32, u32, f64)],
    rhs: Option<&[f64]>,
) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(f, "{} {} {}", rows, cols, triplets.len())?;
    for &(r, c, v) in triplets {
        writeln!(f, "{} {} {:.17e}", r + 1, c + 1, v)?;
    }
    if let Some(rhs) = rhs {
        let mut g = std::io::BufWriter::new(std::fs::File::create(
            path.with_extension("rhs.mtx"),
        )?);
        writeln!(g, "%%MatrixMarket matrix array real general")?;
        writeln!(g, "{} 1", rhs.len())?;
        for v in rhs {
            writeln!(g, "{:.17e}", v)?;
        }
    }
    Ok(())
}

/// Reads a Matrix Market coordinate file back into triplets.
pub fn read_matrix_market(path: &std::path::Path) -> Result<(usize, usize, Vec<(u32, u32, f64)>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty matrix market file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().unwrap_or(0))
        .collect();
    if dims.len() != 3 {
        return Err(Error::InvalidArgument(
            "malformed matrix market size line".into(),
        ));
    }
    let mut triplets = Vec::with_capacity(dims[2]);
    for line in lines {
        let mut it = line.split_whitespace();
        let r: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("bad matrix market entry".into()))?;
        let c: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("bad matrix market entry".into()))?;
        let v: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("bad matrix market entry".into()))?;
        triplets.push(((r - 1) as u32, (c - 1) as u32, v));
    }
    Ok((dims[0], dims[1], triplets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_system(triplets: Vec<(u32, u32, f64)>, rhs: Vec<f64>, nu: usize, np: usize) -> SparseSystem {
        SparseSystem {
            nu,
            np,
            triplets,
            rhs,
            pressure_mean: vec![1.0; np],
            pressure_surface_mass: (0..np as u32).map(|j| (j, j, 1.0)).collect(),
            surface_area: np.max(1) as f64,
        }
    }

    #[test]
    fn identity_solve() {
        let n = 4; // nu=2, np=1, border=1
        let triplets: Vec<(u32, u32, f64)> = (0..n as u32).map(|i| (i, i, 1.0)).collect();
        let mut rhs = vec![0.0; n];
        rhs[0] = 1.0;
        let sys = tiny_system(triplets, rhs, 2, 1);
        let (u, p, rep) = solve(&sys, 1e-12, SolverKind::DirectLu).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-14);
        assert!(u[1].abs() < 1e-14);
        // pressure mean-shift moves the (zero) solution by its mean: stays 0
        assert!(p[0].abs() < 1e-14);
        assert!(rep.relative_residual < 1e-12);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        // 2x2 system written with split entries
        let triplets = vec![
            (0, 0, 1.0),
            (0, 0, 1.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
        ];
        let a = to_csc(2, 2, &triplets).unwrap();
        let lu = a.sp_lu().unwrap();
        let x = lu_solve_vec(&lu, &[3.0, 4.0]);
        // [[2,1],[1,3]] x = (3,4) -> x = (1,1)
        assert!((x[0] - 1.0).abs() < 1e-13);
        assert!((x[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn condition_estimates() {
        let sys = tiny_system(vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)], vec![0.0; 4], 2, 1);
        let k = condition_probe(&sys, 100).unwrap();
        assert!((k - 1.0).abs() < 1e-8);
        let sys = tiny_system(
            vec![(0, 0, 1.0), (1, 1, 10.0), (2, 2, 1.0), (3, 3, 1.0)],
            vec![0.0; 4],
            2,
            1,
        );
        let k = condition_probe(&sys, 100).unwrap();
        assert!((k - 10.0).abs() < 1e-6, "kappa = {k}");
        assert!(matches!(
            condition_probe(&sys, 2),
            Err(Error::MemoryCap { .. })
        ));
    }

    #[test]
    fn matrix_market_roundtrip() {
        let dir = std::env::temp_dir().join("surfns_mm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sys.mtx");
        let trips = vec![(0u32, 0u32, 2.5), (1, 0, -1.0), (1, 1, 4.0)];
        write_matrix_market(&path, 2, 2, &trips, Some(&[1.0, 2.0])).unwrap();
        let (r, c, back) = read_matrix_market(&path).unwrap();
        assert_eq!((r, c), (2, 2));
        assert_eq!(back.len(), 3);
        assert_eq!(back[0], (0, 0, 2.5));
        assert_eq!(back[1], (1, 0, -1.0));
    }

    #[test]
    fn gmres_matches_direct_on_random_spd_system() {
        // small nonsymmetric system with saddle structure
        let nu = 6;
        let np = 3;
        let n = nu + np + 1;
        let mut triplets = Vec::new();
        for i in 0..nu as u32 {
            triplets.push((i, i, 4.0 + i as f64));
            if i + 1 < nu as u32 {
                triplets.push((i, i + 1, 1.0));
                triplets.push((i + 1, i, -0.5));
            }
        }
        for j in 0..np as u32 {
            let r = nu as u32 + j;
            triplets.push((r, r, 2.0));
            triplets.push((j % nu as u32, r, 0.7)); // B^T
            triplets.push((r, j % nu as u32, -0.7)); // -B
        }
        let border = (nu + np) as u32;
        for j in 0..np as u32 {
            triplets.push((nu as u32 + j, border, 1.0));
            triplets.push((border, nu as u32 + j, 1.0));
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let sys = tiny_system(triplets, rhs, nu, np);
        let (ud, pd, _) = solve(&sys, 1e-11, SolverKind::DirectLu).unwrap();
        let (ug, pg, rep) = solve(
            &sys,
            1e-11,
            SolverKind::Gmres {
                restart: 30,
                max_iter: 300,
            },
        )
        .unwrap();
        assert!(rep.iterations > 0);
        for (a, b) in ud.iter().zip(&ug) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in pd.iter().zip(&pg) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
