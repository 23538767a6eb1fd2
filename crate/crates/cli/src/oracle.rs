//! Closed-form verification cases for the homogenization solver.

use vrnet_core::homsolve::{solve_effective, ConductionProblem, SolverSettings};
use vrnet_core::microgen::{make_checkerboard, make_laminate, VoxelGrid};
use vrnet_core::spd::{frob_dist, SymMat};
use vrnet_core::Result;

pub const LAMINATE_TOL: f64 = 1e-6;
pub const HOMOGENEOUS_TOL: f64 = 1e-10;

pub struct OracleCase {
    pub name: String,
    pub rel_error: f64,
    pub tol: f64,
    pub seconds: f64,
}

impl OracleCase {
    pub fn passed(&self) -> bool {
        self.rel_error <= self.tol
    }
}

/// Checkerboard tolerance: 1% below 256 voxels per side, 0.5% from there on.
pub fn checkerboard_tol(res: usize) -> f64 {
    if res >= 256 {
        5e-3
    } else {
        1e-2
    }
}

fn run(name: String, grid: VoxelGrid, k0: f64, k1: f64, want: SymMat, tol: f64) -> Result<OracleCase> {
    let t = std::time::Instant::now();
    let p = ConductionProblem::new(grid, k0, k1)?;
    let got = solve_effective(&p, &SolverSettings::default())?.kappa_eff;
    let rel_error = frob_dist(&got, &want)? / want.frob_norm();
    log::info!("{name}: got {got:?}, want {want:?}");
    Ok(OracleCase {
        name,
        rel_error,
        tol,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Laminates normal to every axis, the homogeneous cell and, in 2D, the
/// checkerboard, all with conductivities 1 and 100.
pub fn oracle_suite(dim: usize, res: usize) -> Result<Vec<OracleCase>> {
    let shape = vec![res; dim];
    let (k0, k1) = (1.0, 100.0);
    let parallel = 0.5 * (k0 + k1);
    let series = 2.0 / (1.0 / k0 + 1.0 / k1);
    let mut cases = Vec::new();
    for axis in 0..dim {
        let diag: Vec<f64> = (0..dim).map(|a| if a == axis { series } else { parallel }).collect();
        cases.push(run(
            format!("laminate normal to axis {axis}"),
            make_laminate(&shape, axis, 0.5)?,
            k0,
            k1,
            SymMat::from_diag(&diag),
            LAMINATE_TOL,
        )?);
    }
    if dim == 2 {
        cases.push(run(
            format!("checkerboard {res}x{res}"),
            make_checkerboard(&shape)?,
            k0,
            k1,
            SymMat::scaled_identity(2, (k0 * k1).sqrt()),
            checkerboard_tol(res),
        )?);
    }
    cases.push(run(
        "homogeneous".into(),
        make_laminate(&shape, 0, 0.5)?,
        3.0,
        3.0,
        SymMat::scaled_identity(dim, 3.0),
        HOMOGENEOUS_TOL,
    )?);
    Ok(cases)
}
