//! Uniform time grids and the explicit-stepping stability rule.

use crate::error::{Error, Result};
use crate::mesh::{min_diameter, TetMesh};

/// Uniform partition of `[0, t_final]` into `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::config(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::config(format!(
                "need at least 2 time steps, got {n_steps}"
            )));
        }
        Ok(TimeGrid {
            t_final,
            n_steps,
            dt: t_final / n_steps as f64,
        })
    }

    /// Node time `t_n = n * dt`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Trapezoidal weight of node `n` (1/2 at the ends, 1 inside).
    pub fn trapezoid_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.n_steps {
            0.5
        } else {
            1.0
        }
    }
}

/// Largest stable step for the lumped explicit scheme:
/// `dt <= 0.5 * h_min / sqrt(3 * eps_max)`, where `h_min` is the smallest tet
/// diameter and `eps_max` the admissible coefficient bound. Deliberately
/// conservative so one rule covers every admissible coefficient field.
pub fn cfl_max_dt(mesh: &TetMesh, eps_max: f64) -> f64 {
    0.5 * min_diameter(mesh) / (3.0 * eps_max).sqrt()
}

/// Builds the coarsest grid for `[0, t_final]` that satisfies the stability
/// rule on `mesh` (the step is reduced, never the final time).
pub fn stable_grid(mesh: &TetMesh, t_final: f64, eps_max: f64) -> Result<TimeGrid> {
    let dt_max = cfl_max_dt(mesh, eps_max);
    let n = (t_final / dt_max).ceil() as usize;
    TimeGrid::new(t_final, n.max(2))
}

/// Fails when `grid` violates the stability rule on `mesh`. Solvers call this
/// before stepping; harness code builds grids through [`stable_grid`] instead.
pub fn check_cfl(mesh: &TetMesh, grid: &TimeGrid, eps_max: f64) -> Result<()> {
    let dt_max = cfl_max_dt(mesh, eps_max);
    if grid.dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::stability(format!(
            "dt = {} exceeds the stable bound {} (h_min = {}, eps_max = {})",
            grid.dt,
            dt_max,
            min_diameter(mesh),
            eps_max
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxBounds};

    fn mesh() -> TetMesh {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        build_uniform_mesh(b, b, 0.5).unwrap()
    }

    #[test]
    fn grid_nodes_cover_final_time() {
        let g = TimeGrid::new(3.0, 500).unwrap();
        assert_eq!(g.n_nodes(), 501);
        assert!((g.dt * g.n_steps as f64 - g.t_final).abs() <= f64::EPSILON * g.t_final);
        assert!((g.time(g.n_steps) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn stable_grid_satisfies_the_rule() {
        let m = mesh();
        let g = stable_grid(&m, 3.0, 5.0).unwrap();
        check_cfl(&m, &g, 5.0).unwrap();
        // One step fewer would violate the bound: the grid is the coarsest.
        if g.n_steps > 2 {
            let coarser = TimeGrid::new(3.0, g.n_steps - 1).unwrap();
            assert!(check_cfl(&m, &coarser, 5.0).is_err());
        }
    }

    #[test]
    fn cfl_bound_shrinks_with_eps_max() {
        let m = mesh();
        assert!(cfl_max_dt(&m, 5.0) < cfl_max_dt(&m, 1.0));
        let expect = 0.5 * 0.5 * 3.0f64.sqrt() / (15.0f64).sqrt();
        assert!((cfl_max_dt(&m, 5.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_weights() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let w: Vec<f64> = (0..g.n_nodes()).map(|n| g.trapezoid_weight(n)).collect();
        assert_eq!(w, vec![0.5, 1.0, 1.0, 1.0, 0.5]);
    }
}
