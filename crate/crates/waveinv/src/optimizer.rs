//! Conjugate gradient minimization of the Tikhonov functional on a fixed
//! mesh.
//!
//! The update is `eps <- project(eps + gamma d)` with Fletcher–Reeves
//! directions `d^n = -R^n + beta^n d^{n-1}`, `beta^n = ||R^n||^2 /
//! ||R^{n-1}||^2`, and the closed-form step size `gamma = -<R, d> /
//! (alpha ||d||^2)` (all inner products lumped). The closed-form step can
//! overshoot, so each step is safeguarded: if the objective does not
//! decrease, gamma is halved a bounded number of times and the step is only
//! accepted when the value is non-increasing. Accepted iterates therefore
//! produce a monotone objective history.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::objective::{lumped_inner, lumped_norm, InverseProblem};

/// Stopping and safeguard settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CgSettings {
    /// Stop when the lumped gradient norm drops to `theta` or below.
    pub theta: f64,
    pub max_iter: usize,
    /// Stop when the relative change of the coefficient norm stays below
    /// `stagnation_rtol` for `stagnation_window` consecutive iterations.
    pub stagnation_window: usize,
    pub stagnation_rtol: f64,
    /// Maximum number of step halvings before the iteration gives up.
    pub safeguard: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            theta: 1e-6,
            max_iter: 20,
            stagnation_window: 3,
            stagnation_rtol: 1e-4,
            safeguard: 25,
        }
    }
}

impl CgSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(Error::config(format!(
                "gradient tolerance must be non-negative, got {}",
                self.theta
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1".to_string()));
        }
        if self.stagnation_window == 0 {
            return Err(Error::config("stagnation window must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStop {
    GradientTol,
    Stagnation,
    MaxIter,
    /// No halved step decreased the objective.
    LineSearchFailed,
}

impl CgStop {
    pub fn as_str(&self) -> &'static str {
        match self {
            CgStop::GradientTol => "gradient_tol",
            CgStop::Stagnation => "stagnation",
            CgStop::MaxIter => "max_iter",
            CgStop::LineSearchFailed => "line_search_failed",
        }
    }
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy)]
pub struct CgRecord {
    pub iter: usize,
    pub f: f64,
    pub misfit: f64,
    pub regularization: f64,
    pub grad_norm: f64,
    /// Accepted step size (zero on the final record).
    pub gamma: f64,
    pub beta: f64,
    pub halvings: usize,
    pub wall_secs: f64,
}

/// Final state of a CG run.
pub struct CgOutcome {
    pub eps: Vec<f64>,
    pub history: Vec<CgRecord>,
    pub stop: CgStop,
    /// Gradient field at the final iterate.
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
    /// Forward/adjoint trajectories of the final gradient evaluation,
    /// consumed by the error indicators.
    pub trajectories: Vec<(crate::wave::FieldTrajectory, crate::wave::FieldTrajectory)>,
}

/// Fletcher–Reeves coefficient `||R^n||^2 / ||R^{n-1}||^2`; returns zero
/// (restart) when the previous norm vanishes.
pub fn fletcher_reeves_beta(grad_norm: f64, prev_grad_norm: f64) -> f64 {
    if prev_grad_norm == 0.0 {
        0.0
    } else {
        (grad_norm * grad_norm) / (prev_grad_norm * prev_grad_norm)
    }
}

/// Closed-form step size `-<R, d> / (alpha ||d||^2)`.
pub fn closed_form_step(grad_dot_dir: f64, dir_norm_sq: f64, alpha: f64) -> f64 {
    -grad_dot_dir / (alpha * dir_norm_sq)
}

/// Runs projected conjugate gradients from `eps_init`. The initial iterate
/// is projected onto the admissible set before the first evaluation; every
/// accepted iterate is admissible.
pub fn run_cg(problem: &InverseProblem, eps_init: &[f64], settings: &CgSettings) -> Result<CgOutcome> {
    settings.validate()?;
    problem.ops.check_field(eps_init)?;
    let started = Instant::now();

    let mut eps = eps_init.to_vec();
    problem.admissible.project(&mut eps);

    let mut eval = problem.value_and_gradient(&eps)?;
    let mut grad_norm = lumped_norm(problem.ops, &eval.gradient);
    let mut dir: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
    let mut eps_norm = lumped_norm(problem.ops, &eps);
    let mut stagnant = 0usize;
    let mut history: Vec<CgRecord> = Vec::new();
    let mut beta = 0.0;

    for iter in 0..=settings.max_iter {
        if grad_norm <= settings.theta {
            history.push(CgRecord {
                iter,
                f: eval.value.total,
                misfit: eval.value.misfit,
                regularization: eval.value.regularization,
                grad_norm,
                gamma: 0.0,
                beta,
                halvings: 0,
                wall_secs: started.elapsed().as_secs_f64(),
            });
            return Ok(finish(eps, history, CgStop::GradientTol, eval, grad_norm));
        }
        if stagnant >= settings.stagnation_window {
            return Ok(finish(eps, history, CgStop::Stagnation, eval, grad_norm));
        }
        if iter == settings.max_iter {
            history.push(CgRecord {
                iter,
                f: eval.value.total,
                misfit: eval.value.misfit,
                regularization: eval.value.regularization,
                grad_norm,
                gamma: 0.0,
                beta,
                halvings: 0,
                wall_secs: started.elapsed().as_secs_f64(),
            });
            return Ok(finish(eps, history, CgStop::MaxIter, eval, grad_norm));
        }

        let grad_dot_dir = lumped_inner(problem.ops, &eval.gradient, &dir);
        let dir_norm_sq = lumped_inner(problem.ops, &dir, &dir);
        if dir_norm_sq == 0.0 {
            return Ok(finish(eps, history, CgStop::GradientTol, eval, grad_norm));
        }
        let mut gamma = closed_form_step(grad_dot_dir, dir_norm_sq, problem.params.alpha);
        // A non-descent direction (possible after projections) falls back
        // to steepest descent for this step.
        if grad_dot_dir >= 0.0 {
            dir = eval.gradient.iter().map(|g| -g).collect();
            gamma = 1.0 / problem.params.alpha;
        }

        let mut accepted: Option<(Vec<f64>, usize)> = None;
        let mut halvings = 0;
        while halvings <= settings.safeguard {
            let mut trial = eps.clone();
            for i in 0..trial.len() {
                trial[i] += gamma * dir[i];
            }
            problem.admissible.project(&mut trial);
            let trial_value = problem.value(&trial)?;
            if trial_value.total <= eval.value.total {
                accepted = Some((trial, halvings));
                break;
            }
            gamma *= 0.5;
            halvings += 1;
        }
        let Some((next_eps, used_halvings)) = accepted else {
            history.push(CgRecord {
                iter,
                f: eval.value.total,
                misfit: eval.value.misfit,
                regularization: eval.value.regularization,
                grad_norm,
                gamma: 0.0,
                beta,
                halvings,
                wall_secs: started.elapsed().as_secs_f64(),
            });
            return Ok(finish(eps, history, CgStop::LineSearchFailed, eval, grad_norm));
        };

        history.push(CgRecord {
            iter,
            f: eval.value.total,
            misfit: eval.value.misfit,
            regularization: eval.value.regularization,
            grad_norm,
            gamma,
            beta,
            halvings: used_halvings,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        eps = next_eps;
        eval = problem.value_and_gradient(&eps)?;
        let prev_grad_norm = grad_norm;
        grad_norm = lumped_norm(problem.ops, &eval.gradient);
        beta = fletcher_reeves_beta(grad_norm, prev_grad_norm);
        dir = eval
            .gradient
            .iter()
            .zip(&dir)
            .map(|(g, d)| -g + beta * d)
            .collect();

        let new_norm = lumped_norm(problem.ops, &eps);
        let rel = (new_norm - eps_norm).abs() / eps_norm.max(1e-300);
        if rel < settings.stagnation_rtol {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        eps_norm = new_norm;
    }
    unreachable!("loop always returns via a stopping rule");
}

fn finish(
    eps: Vec<f64>,
    history: Vec<CgRecord>,
    stop: CgStop,
    eval: crate::objective::GradientEval,
    grad_norm: f64,
) -> CgOutcome {
    CgOutcome { eps, history, stop, gradient: eval.gradient, grad_norm, trajectories: eval.trajectories }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cfl_max_dt;
    use crate::grid::TimeGrid;
    use crate::mesh::{build_uniform_mesh, BoundaryTag, BoxBounds, TetMesh};
    use crate::objective::{AdmissibleSet, SourceChannel, TikhonovParams};
    use crate::operators::DiscreteOperators;
    use crate::wave::{solve_direct, BcMode, SourceSpec};

    fn unit_mesh(h0: f64) -> TetMesh {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        build_uniform_mesh(b, b, h0).unwrap()
    }

    fn make_problem<'a>(
        ops: &'a DiscreteOperators,
        mesh: &TetMesh,
        eps_star: &[f64],
        n_steps: usize,
    ) -> InverseProblem<'a> {
        let eps_max = 2.0;
        let grid = TimeGrid::new(n_steps as f64 * cfl_max_dt(mesh, eps_max), n_steps).unwrap();
        let source = SourceSpec::new(BoundaryTag::Front, 4.0, 1.0, 1).unwrap();
        let observe = vec![BoundaryTag::Front, BoundaryTag::Back];
        let data = solve_direct(ops, eps_star, &grid, &source, BcMode::Neumann, &observe, false)
            .unwrap()
            .observation;
        InverseProblem::new(
            ops,
            grid,
            BcMode::Neumann,
            vec![SourceChannel { source, observe, data }],
            TikhonovParams::new(0.01, 0.1 * grid.t_final, grid.t_final).unwrap(),
            vec![1.0; mesh.n_vertices()],
            AdmissibleSet::new(mesh, eps_max).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn beta_and_gamma_formulas() {
        assert!((fletcher_reeves_beta(2.0, 4.0) - 0.25).abs() < 1e-15);
        assert_eq!(fletcher_reeves_beta(1.0, 0.0), 0.0);
        assert!((closed_form_step(-1.0, 100.0, 0.01) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_scaling_is_consistent() {
        // gamma * d is invariant under d -> c d: gamma scales by 1/c.
        let g1 = closed_form_step(-3.0, 9.0, 0.01);
        let g2 = closed_form_step(-6.0, 36.0, 0.01);
        assert!((g1 - 2.0 * g2).abs() < 1e-15);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let mesh = unit_mesh(0.5);
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let eps0 = vec![1.0; mesh.n_vertices()];
        let problem = make_problem(&ops, &mesh, &eps0, 8);
        let out = run_cg(&problem, &eps0, &CgSettings::default()).unwrap();
        assert_eq!(out.stop, CgStop::GradientTol);
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].iter, 0);
        assert_eq!(out.grad_norm, 0.0);
    }

    #[test]
    fn infinite_tolerance_stops_after_first_gradient() {
        let mesh = unit_mesh(0.5);
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let mut eps_star = vec![1.0; mesh.n_vertices()];
        let adm = AdmissibleSet::new(&mesh, 2.0).unwrap();
        let free = (0..mesh.n_vertices()).find(|&i| !adm.frozen[i]).unwrap();
        eps_star[free] = 1.7;
        let problem = make_problem(&ops, &mesh, &eps_star, 8);
        let settings = CgSettings { theta: f64::INFINITY, ..CgSettings::default() };
        let out = run_cg(&problem, &vec![1.0; mesh.n_vertices()], &settings).unwrap();
        assert_eq!(out.stop, CgStop::GradientTol);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn objective_decreases_along_accepted_iterations() {
        let mesh = unit_mesh(0.5);
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let mut eps_star = vec![1.0; mesh.n_vertices()];
        let adm = AdmissibleSet::new(&mesh, 2.0).unwrap();
        let free = (0..mesh.n_vertices()).find(|&i| !adm.frozen[i]).unwrap();
        eps_star[free] = 1.7;
        let problem = make_problem(&ops, &mesh, &eps_star, 16);
        let settings = CgSettings { theta: 0.0, max_iter: 6, ..CgSettings::default() };
        let out = run_cg(&problem, &vec![1.0; mesh.n_vertices()], &settings).unwrap();
        assert!(out.history.len() >= 2, "no iterations ran");
        for pair in out.history.windows(2) {
            assert!(
                pair[1].f <= pair[0].f + 1e-15,
                "objective increased: {} -> {}",
                pair[0].f,
                pair[1].f
            );
        }
        // The reconstruction moves toward the phantom at the free vertex.
        assert!(out.eps[free] > 1.0);
        assert!(problem.admissible.contains(&out.eps));
    }

    #[test]
    fn history_records_are_consistent() {
        let mesh = unit_mesh(0.5);
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let mut eps_star = vec![1.0; mesh.n_vertices()];
        let adm = AdmissibleSet::new(&mesh, 2.0).unwrap();
        let free = (0..mesh.n_vertices()).find(|&i| !adm.frozen[i]).unwrap();
        eps_star[free] = 1.5;
        let problem = make_problem(&ops, &mesh, &eps_star, 8);
        let settings = CgSettings { theta: 0.0, max_iter: 3, ..CgSettings::default() };
        let out = run_cg(&problem, &vec![1.0; mesh.n_vertices()], &settings).unwrap();
        for (k, rec) in out.history.iter().enumerate() {
            assert_eq!(rec.iter, k);
            assert!((rec.f - rec.misfit - rec.regularization).abs() <= 1e-15 * rec.f.max(1.0));
            assert!(rec.grad_norm.is_finite());
            assert!(rec.wall_secs >= 0.0);
        }
    }
}
