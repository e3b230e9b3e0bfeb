//! Adaptive reconstruction: the outer loop over mesh levels.
//!
//! Each level runs the conjugate-gradient minimizer on the current mesh,
//! evaluates an element indicator from the final iterate's forward/adjoint
//! trajectories, marks the elements near the indicator maximum, refines,
//! rebuilds a CFL-compliant time grid, and transfers the reconstruction to
//! the new mesh as the next initial guess. Two marking variants exist:
//!
//! * `First` marks on the coefficient residual (the gradient expression with
//!   its divergence face-jump surrogate);
//! * `Second` marks on the magnitude of the reconstructed coefficient
//!   itself, optionally shifted by the background.
//!
//! The loop stops as soon as one of these holds, checked in this order after
//! every level: some CG iterate reached gradient norm below `theta2`; the
//! level's reconstruction moved less than `theta1` from the (interpolated)
//! previous one; `max_levels` levels were refined. An identically zero
//! indicator leaves nothing to refine; the run then stops with the
//! `eps_change` reason and a warning on the level record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    coefficient_indicator, eta_indicator, mark_elements, residual_indicator, ElementIndicator,
};
use crate::grid::{stable_grid, TimeGrid};
use crate::mesh::{interpolate_nodal, refine, BoundaryTag, TetMesh};
use crate::objective::{
    lumped_norm, AdmissibleSet, InverseProblem, SourceChannel, TikhonovParams,
};
use crate::operators::DiscreteOperators;
use crate::optimizer::{run_cg, CgSettings, CgStop};
use crate::wave::{BcMode, BoundaryRecord, FieldTrajectory, SourceSpec};

/// Which indicator drives the marking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveVariant {
    /// Mark on the coefficient residual indicator.
    First,
    /// Mark on the coefficient magnitude indicator.
    Second,
}

impl AdaptiveVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdaptiveVariant::First => "first",
            AdaptiveVariant::Second => "second",
        }
    }
}

impl std::str::FromStr for AdaptiveVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(AdaptiveVariant::First),
            "second" => Ok(AdaptiveVariant::Second),
            other => Err(Error::config(format!(
                "unknown adaptive variant '{other}' (expected 'first' or 'second')"
            ))),
        }
    }
}

/// Outer-loop controls. `theta1` may be infinite (stop after the first
/// level); zero disables the corresponding stop entirely, as does
/// `theta2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveSettings {
    pub variant: AdaptiveVariant,
    /// Marking tolerance: elements within this factor of the indicator
    /// maximum are refined.
    pub beta: f64,
    /// Stop when the level-to-level coefficient change drops below this.
    pub theta1: f64,
    /// Stop when any CG iterate's gradient norm drops below this.
    pub theta2: f64,
    /// Maximum number of refinements (levels run = max_levels + 1 at most).
    pub max_levels: usize,
    /// For the `Second` variant: mark on `|eps - 1|` instead of `|eps|`.
    pub shift_background: bool,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        AdaptiveSettings {
            variant: AdaptiveVariant::First,
            beta: 0.7,
            theta1: 1e-4,
            theta2: 1e-7,
            max_levels: 5,
            shift_background: false,
        }
    }
}

impl AdaptiveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!(
                "marking tolerance must lie strictly between 0 and 1, got {}",
                self.beta
            )));
        }
        if self.theta1 < 0.0 || self.theta1.is_nan() {
            return Err(Error::config("theta1 must be nonnegative (may be inf)".to_string()));
        }
        if !(self.theta2 >= 0.0) {
            return Err(Error::config("theta2 must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveStop {
    /// A CG iterate reached gradient norm below `theta2`.
    GradientTol,
    /// The reconstruction changed less than `theta1` between levels (also
    /// used when the indicator left nothing to refine).
    EpsChangeTol,
    /// `max_levels` refinements were performed.
    MaxLevels,
}

impl AdaptiveStop {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdaptiveStop::GradientTol => "gradient_tol",
            AdaptiveStop::EpsChangeTol => "eps_change_tol",
            AdaptiveStop::MaxLevels => "max_levels",
        }
    }
}

/// Per-level bookkeeping for reports and stopping diagnostics.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub n_tets: usize,
    pub n_vertices: usize,
    pub n_steps: usize,
    /// CG iterations actually performed on this level (M_k).
    pub cg_iterations: usize,
    pub cg_stop: CgStop,
    /// Final objective value on this level.
    pub objective: f64,
    /// Gradient norm at the accepted final iterate.
    pub grad_norm: f64,
    /// Smallest gradient norm seen over the level's iterates.
    pub best_grad_norm: f64,
    /// `|| eps_k - I(eps_{k-1}) ||` (against the initial guess at level 0).
    pub eps_change: f64,
    /// Largest nodal coefficient value on this level.
    pub eps_tilde: f64,
    /// Elements marked for refinement (zero on the final level).
    pub marked: usize,
    pub warning: Option<String>,
}

/// Everything the outer loop produced, level by level.
#[derive(Debug)]
pub struct AdaptiveRun {
    pub meshes: Vec<TetMesh>,
    pub grids: Vec<TimeGrid>,
    pub eps_per_level: Vec<Vec<f64>>,
    /// The marking indicator evaluated on each level (also on the final
    /// one, for inspection and export).
    pub indicators: Vec<ElementIndicator>,
    /// The solution-approximation indicator per level, exported alongside.
    pub etas: Vec<ElementIndicator>,
    /// Full CG iteration history per level.
    pub histories: Vec<Vec<crate::optimizer::CgRecord>>,
    pub records: Vec<LevelRecord>,
    /// Index of the level whose reconstruction is the final answer.
    pub k_rec: usize,
    pub stop_reason: AdaptiveStop,
}

impl AdaptiveRun {
    /// The reconstructed coefficient (on `meshes[k_rec]`).
    pub fn eps_rec(&self) -> &[f64] {
        &self.eps_per_level[self.k_rec]
    }

    pub fn final_mesh(&self) -> &TetMesh {
        &self.meshes[self.k_rec]
    }
}

/// Supplies the observed boundary data for any (mesh, grid) the outer loop
/// lands on. Implementations resample stored records onto the requested
/// observation vertices and time nodes.
pub trait ObservationSource {
    fn boundary_record(
        &self,
        source_idx: usize,
        tags: &[BoundaryTag],
        mesh: &TetMesh,
        grid: TimeGrid,
    ) -> Result<BoundaryRecord>;
}

/// Fixed problem description threaded through all levels.
pub struct AdaptiveInputs<'a> {
    pub mesh0: &'a TetMesh,
    pub t_final: f64,
    /// Divergence-penalty weight.
    pub s: f64,
    pub bc: BcMode,
    /// One entry per illumination: the pulse and the observed faces.
    pub sources: Vec<(SourceSpec, Vec<BoundaryTag>)>,
    pub params: TikhonovParams,
    pub eps_max: f64,
    pub data: &'a dyn ObservationSource,
    pub cg: CgSettings,
    pub adaptive: AdaptiveSettings,
}

/// Runs the adaptive outer loop; see the module docs for the exact order of
/// operations and stopping rules.
pub fn run_adaptive(inputs: &AdaptiveInputs) -> Result<AdaptiveRun> {
    inputs.adaptive.validate()?;
    inputs.cg.validate()?;
    if inputs.sources.is_empty() {
        return Err(Error::config("at least one source is required".to_string()));
    }

    let set = &inputs.adaptive;
    let mut meshes: Vec<TetMesh> = vec![inputs.mesh0.clone()];
    let mut grids: Vec<TimeGrid> = Vec::new();
    let mut eps_per_level: Vec<Vec<f64>> = Vec::new();
    let mut indicators: Vec<ElementIndicator> = Vec::new();
    let mut etas: Vec<ElementIndicator> = Vec::new();
    let mut histories: Vec<Vec<crate::optimizer::CgRecord>> = Vec::new();
    let mut records: Vec<LevelRecord> = Vec::new();

    for k in 0..=set.max_levels {
        let mesh = &meshes[k];
        let nv = mesh.n_vertices();
        let ops = DiscreteOperators::assemble(mesh, inputs.s)?;
        let grid = stable_grid(mesh, inputs.t_final, inputs.eps_max)?;
        let admissible = AdmissibleSet::new(mesh, inputs.eps_max)?;
        let eps0 = vec![1.0; nv];

        let mut channels = Vec::with_capacity(inputs.sources.len());
        for (i, (source, observe)) in inputs.sources.iter().enumerate() {
            let data = inputs.data.boundary_record(i, observe, mesh, grid)?;
            channels.push(SourceChannel { source: *source, observe: observe.clone(), data });
        }
        let problem = InverseProblem::new(
            &ops,
            grid,
            inputs.bc,
            channels,
            inputs.params,
            eps0.clone(),
            admissible,
        )?;

        // Initial guess: background at level 0, otherwise the previous
        // reconstruction carried over; projected either way (run_cg projects
        // again, idempotently).
        let mut eps_init = if k == 0 {
            eps0.clone()
        } else {
            interpolate_nodal(&meshes[k - 1], &eps_per_level[k - 1], mesh)?
        };
        problem.admissible.project(&mut eps_init);

        let outcome = run_cg(&problem, &eps_init, &inputs.cg)?;
        let m_k = outcome.history.last().map_or(0, |r| r.iter);
        let best_grad_norm = outcome
            .history
            .iter()
            .map(|r| r.grad_norm)
            .fold(f64::INFINITY, f64::min);
        let diff: Vec<f64> = outcome.eps.iter().zip(&eps_init).map(|(a, b)| a - b).collect();
        let eps_change = lumped_norm(&ops, &diff);
        let eps_tilde = outcome.eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let pairs: Vec<(&FieldTrajectory, &FieldTrajectory)> =
            outcome.trajectories.iter().map(|(e, l)| (e, l)).collect();
        let indicator = match set.variant {
            AdaptiveVariant::First => residual_indicator(
                mesh,
                &ops,
                inputs.params.alpha,
                &outcome.eps,
                &eps0,
                &pairs,
            )?,
            AdaptiveVariant::Second => {
                let shift = if set.shift_background { 1.0 } else { 0.0 };
                coefficient_indicator(&ops, &outcome.eps, shift, &problem.admissible.frozen)?
            }
        };
        let mut eta = eta_indicator(mesh, &ops, pairs[0].0, pairs[0].1)?;
        for (e, l) in pairs.iter().skip(1) {
            let extra = eta_indicator(mesh, &ops, e, l)?;
            for (a, b) in eta.values.iter_mut().zip(&extra.values) {
                *a += b;
            }
        }

        let mut record = LevelRecord {
            level: k,
            n_tets: mesh.n_tets(),
            n_vertices: nv,
            n_steps: grid.n_steps,
            cg_iterations: m_k,
            cg_stop: outcome.stop,
            objective: outcome.history.last().map_or(f64::NAN, |r| r.f),
            grad_norm: outcome.grad_norm,
            best_grad_norm,
            eps_change,
            eps_tilde,
            marked: 0,
            warning: None,
        };

        grids.push(grid);
        eps_per_level.push(outcome.eps);
        indicators.push(indicator);
        etas.push(eta);
        histories.push(outcome.history);

        // Stopping rules, in order.
        if best_grad_norm < set.theta2 {
            records.push(record);
            return Ok(finish(meshes, grids, eps_per_level, indicators, etas, histories, records, k, AdaptiveStop::GradientTol));
        }
        if eps_change < set.theta1 {
            records.push(record);
            return Ok(finish(meshes, grids, eps_per_level, indicators, etas, histories, records, k, AdaptiveStop::EpsChangeTol));
        }
        if k == set.max_levels {
            records.push(record);
            return Ok(finish(meshes, grids, eps_per_level, indicators, etas, histories, records, k, AdaptiveStop::MaxLevels));
        }

        let marked = mark_elements(&indicators[k], set.beta)?;
        if marked.is_empty() {
            record.warning =
                Some("indicator vanished everywhere; nothing to refine".to_string());
            records.push(record);
            return Ok(finish(meshes, grids, eps_per_level, indicators, etas, histories, records, k, AdaptiveStop::EpsChangeTol));
        }
        record.marked = marked.len();
        records.push(record);
        let next = refine(&meshes[k], &marked)?;
        meshes.push(next);
    }
    unreachable!("the loop always returns at k == max_levels");
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mut meshes: Vec<TetMesh>,
    grids: Vec<TimeGrid>,
    eps_per_level: Vec<Vec<f64>>,
    indicators: Vec<ElementIndicator>,
    etas: Vec<ElementIndicator>,
    histories: Vec<Vec<crate::optimizer::CgRecord>>,
    records: Vec<LevelRecord>,
    k_rec: usize,
    stop_reason: AdaptiveStop,
) -> AdaptiveRun {
    meshes.truncate(k_rec + 1);
    AdaptiveRun {
        meshes,
        grids,
        eps_per_level,
        indicators,
        etas,
        histories,
        records,
        k_rec,
        stop_reason,
    }
}
