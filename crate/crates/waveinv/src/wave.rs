//! Explicit time stepping for the dielectric wave model and its adjoint.
//!
//! Both solvers run the same three-level kernel
//!
//! ```text
//! (M/dt^2 + B/2dt) u^{j+1} = (2M/dt^2 - K) u^j - (M/dt^2 - B/2dt) u^{j-1} + b^j
//! ```
//!
//! with diagonal lumped mass `M = M(eps)`, diagonal boundary damping `B`
//! (zero in pure-Neumann mode), the stiffness action `K` from
//! [`crate::operators`], and zero initial levels. Because `K` is symmetric
//! and `M`, `B` are diagonal and constant in time, the adjoint problem is
//! solved by feeding the dual loads in reverse time order through the very
//! same kernel and flipping the resulting levels — the discrete adjoint is
//! the exact transpose of the discrete forward map, which is what allows
//! the misfit gradient to match finite differences at round-off level.
//!
//! The incident excitation is a single-period sine pulse applied as a
//! Neumann load on one axis-aligned boundary face of the domain; in hybrid
//! mode all remaining boundary faces carry the first-order absorbing term.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::grid::TimeGrid;
use crate::mesh::BoundaryTag;
use crate::operators::{DiscreteOperators, StiffnessScratch};
use crate::par;

/// Boundary condition mode for the non-illuminated part of the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Homogeneous Neumann conditions everywhere except the source face.
    Neumann,
    /// First-order absorbing conditions on every non-source boundary face.
    Hybrid,
}

/// Incident-pulse description: which face radiates, the angular frequency,
/// the amplitude, and the polarised component (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub face: BoundaryTag,
    pub omega: f64,
    pub amplitude: f64,
    pub component: usize,
}

impl SourceSpec {
    pub fn new(face: BoundaryTag, omega: f64, amplitude: f64, component: usize) -> Result<Self> {
        if face == BoundaryTag::Lateral {
            return Err(Error::config(
                "source face must be the front or back face, not the lateral boundary".to_string(),
            ));
        }
        if !(omega > 0.0) {
            return Err(Error::config(format!("source frequency must be positive, got {omega}")));
        }
        if !amplitude.is_finite() || amplitude == 0.0 {
            return Err(Error::config(format!(
                "source amplitude must be finite and non-zero, got {amplitude}"
            )));
        }
        if component >= 3 {
            return Err(Error::config(format!(
                "source component must be 0, 1 or 2, got {component}"
            )));
        }
        Ok(SourceSpec { face, omega, amplitude, component })
    }

    /// Pulse value at time `t`: one full sine period, zero afterwards.
    pub fn pulse(&self, t: f64) -> f64 {
        self.amplitude * plane_wave_pulse(self.omega, t)
    }

    /// End of the pulse support.
    pub fn switch_off_time(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// `sin(omega t)` on `(0, 2 pi / omega)`, zero outside.
pub fn plane_wave_pulse(omega: f64, t: f64) -> f64 {
    if t <= 0.0 || t >= 2.0 * PI / omega {
        0.0
    } else {
        (omega * t).sin()
    }
}

/// Temporal observation cutoff: equals one up to `t_final - delta`, zero
/// from `t_final - delta/2` on, joined by a quintic ramp with two vanishing
/// derivatives at both ends (so the weight is twice continuously
/// differentiable).
pub fn cutoff_weight(t: f64, t_final: f64, delta: f64) -> f64 {
    let start = t_final - delta;
    let end = t_final - 0.5 * delta;
    if t <= start {
        1.0
    } else if t >= end {
        0.0
    } else {
        let x = (t - start) / (end - start);
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// Full nodal history of a solve: `levels[n]` is the field at time node `n`.
#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    pub grid: TimeGrid,
    pub levels: Vec<Vec<Vec3>>,
}

impl FieldTrajectory {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Time series of field values on a fixed set of boundary vertices.
/// `values[n][k]` is the field at time node `n` on vertex `vertices[k]`.
#[derive(Debug, Clone)]
pub struct BoundaryRecord {
    pub grid: TimeGrid,
    pub vertices: Vec<usize>,
    pub values: Vec<Vec<Vec3>>,
}

impl BoundaryRecord {
    pub fn zeros(grid: TimeGrid, vertices: Vec<usize>) -> Self {
        let values = vec![vec![[0.0; 3]; vertices.len()]; grid.n_nodes()];
        BoundaryRecord { grid, vertices, values }
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.values.len() != self.grid.n_nodes() {
            return Err(Error::mismatch(format!(
                "record has {} time rows, grid has {} nodes",
                self.values.len(),
                self.grid.n_nodes()
            )));
        }
        for row in &self.values {
            if row.len() != self.vertices.len() {
                return Err(Error::mismatch(format!(
                    "record row has {} entries, expected {}",
                    row.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute component over all nodes and vertices.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in &self.values {
            for v in row {
                for c in v {
                    m = m.max(c.abs());
                }
            }
        }
        m
    }
}

/// Result of a direct solve.
#[derive(Debug)]
pub struct DirectSolve {
    pub trajectory: Option<FieldTrajectory>,
    pub observation: BoundaryRecord,
}

/// Damping weights for the chosen boundary mode: zero everywhere for
/// Neumann, lumped face quadrature on all non-source faces for hybrid.
pub fn absorbing_weights(ops: &DiscreteOperators, source_face: BoundaryTag, bc: BcMode) -> Vec<f64> {
    match bc {
        BcMode::Neumann => vec![0.0; ops.n_vertices()],
        BcMode::Hybrid => {
            let tags: Vec<BoundaryTag> = [BoundaryTag::Front, BoundaryTag::Back, BoundaryTag::Lateral]
                .into_iter()
                .filter(|&t| t != source_face)
                .collect();
            ops.boundary_vertex_weights(&tags)
        }
    }
}

/// Sorted vertex indices lying on faces with any of the given tags.
pub fn tagged_vertices(ops: &DiscreteOperators, tags: &[BoundaryTag]) -> Vec<usize> {
    let w = ops.boundary_vertex_weights(tags);
    (0..w.len()).filter(|&i| w[i] > 0.0).collect()
}

/// Fails when the time step exceeds the stability rule
/// `dt <= 0.5 h_min / sqrt(3 max eps)` evaluated with the actual
/// coefficient field (never smaller than the configured upper bound).
pub fn check_stable_step(ops: &DiscreteOperators, eps: &[f64], grid: &TimeGrid) -> Result<()> {
    let eps_max = eps.iter().cloned().fold(1.0f64, f64::max);
    let bound = 0.5 * ops.min_diameter / (3.0 * eps_max).sqrt();
    if grid.dt > bound * (1.0 + 1e-9) {
        return Err(Error::stability(format!(
            "time step {} exceeds the stability bound {bound} (h_min = {}, max eps = {eps_max})",
            grid.dt, ops.min_diameter
        )));
    }
    Ok(())
}

/// Shared three-level stepper. Calls `fill_load(j, entries)` for the load of
/// step `j` (sparse vertex/value pairs, applied after the dense update) and
/// `sink(n, level)` for every computed level `n = 0..=N`.
pub(crate) fn leapfrog_kernel(
    ops: &DiscreteOperators,
    eps: &[f64],
    grid: &TimeGrid,
    absorb: &[f64],
    mut fill_load: impl FnMut(usize, &mut Vec<(usize, Vec3)>),
    mut sink: impl FnMut(usize, &[Vec3]),
) -> Result<()> {
    ops.check_field(eps)?;
    let nv = ops.n_vertices();
    if absorb.len() != nv {
        return Err(Error::mismatch(format!(
            "damping weights have {} entries, mesh has {nv} vertices",
            absorb.len()
        )));
    }
    let dt = grid.dt;
    let mass = ops.lumped_mass(eps)?;
    let mut denom = vec![0.0; nv];
    let mut coef_prev = vec![0.0; nv];
    let mut coef_curr = vec![0.0; nv];
    for i in 0..nv {
        let m = mass[i] / (dt * dt);
        let b = absorb[i] / (2.0 * dt);
        denom[i] = m + b;
        coef_prev[i] = m - b;
        coef_curr[i] = 2.0 * m;
    }

    let mut u_prev = vec![[0.0f64; 3]; nv];
    let mut u_curr = vec![[0.0f64; 3]; nv];
    let mut ku = vec![[0.0f64; 3]; nv];
    let mut scratch = StiffnessScratch::new(ops);
    let mut loads: Vec<(usize, Vec3)> = Vec::new();
    sink(0, &u_curr);

    for j in 0..grid.n_steps {
        ops.apply_stiffness(eps, &u_curr, &mut ku, &mut scratch);
        // The rotation writes u^{j+1} over the u^{j-1} storage; each slot is
        // read (old value) and written by the same entry of the same pass.
        {
            let u_curr = &u_curr;
            let ku = &ku;
            let denom = &denom;
            let coef_prev = &coef_prev;
            let coef_curr = &coef_curr;
            par::fill_chunks(&mut u_prev, |start, chunk| {
                for (off, slot) in chunk.iter_mut().enumerate() {
                    let i = start + off;
                    let old = *slot;
                    let inv = 1.0 / denom[i];
                    for c in 0..3 {
                        slot[c] =
                            (coef_curr[i] * u_curr[i][c] - coef_prev[i] * old[c] - ku[i][c]) * inv;
                    }
                }
            });
        }
        loads.clear();
        fill_load(j, &mut loads);
        for &(i, v) in &loads {
            let inv = 1.0 / denom[i];
            u_prev[i][0] += v[0] * inv;
            u_prev[i][1] += v[1] * inv;
            u_prev[i][2] += v[2] * inv;
        }
        std::mem::swap(&mut u_prev, &mut u_curr);
        sink(j + 1, &u_curr);

        if (j + 1) % 16 == 0 || j + 1 == grid.n_steps {
            let mut sumsq = 0.0f64;
            for v in &u_curr {
                sumsq += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            }
            if !(sumsq.is_finite() && sumsq < 1e200) {
                return Err(Error::Divergence {
                    step: j + 1,
                    what: format!("field norm squared reached {sumsq:e}"),
                });
            }
        }
    }
    Ok(())
}

/// Runs the direct problem for one source and records the field on the
/// observation faces at every time node. Set `keep_trajectory` when the full
/// history is needed (gradient evaluation); leave it off for misfit-only
/// evaluations such as line-search trials.
pub fn solve_direct(
    ops: &DiscreteOperators,
    eps: &[f64],
    grid: &TimeGrid,
    source: &SourceSpec,
    bc: BcMode,
    observe: &[BoundaryTag],
    keep_trajectory: bool,
) -> Result<DirectSolve> {
    check_stable_step(ops, eps, grid)?;
    let absorb = absorbing_weights(ops, source.face, bc);
    let src_weights: Vec<(usize, f64)> = {
        let w = ops.boundary_vertex_weights(&[source.face]);
        (0..w.len()).filter(|&i| w[i] > 0.0).map(|i| (i, w[i])).collect()
    };
    if src_weights.is_empty() {
        return Err(Error::geometry("source face has no boundary vertices".to_string()));
    }
    let obs_vertices = tagged_vertices(ops, observe);
    if obs_vertices.is_empty() {
        return Err(Error::geometry("observation boundary has no vertices".to_string()));
    }
    let mut obs_values: Vec<Vec<Vec3>> = Vec::with_capacity(grid.n_nodes());
    let mut levels: Vec<Vec<Vec3>> = if keep_trajectory {
        Vec::with_capacity(grid.n_nodes())
    } else {
        Vec::new()
    };
    let comp = source.component;
    leapfrog_kernel(
        ops,
        eps,
        grid,
        &absorb,
        |j, entries| {
            let p = source.pulse(grid.time(j));
            if p != 0.0 {
                for &(i, w) in &src_weights {
                    let mut v = [0.0; 3];
                    v[comp] = p * w;
                    entries.push((i, v));
                }
            }
        },
        |_, level| {
            obs_values.push(obs_vertices.iter().map(|&i| level[i]).collect());
            if keep_trajectory {
                levels.push(level.to_vec());
            }
        },
    )?;
    let observation = BoundaryRecord { grid: *grid, vertices: obs_vertices, values: obs_values };
    let trajectory = keep_trajectory.then(|| FieldTrajectory { grid: *grid, levels });
    Ok(DirectSolve { trajectory, observation })
}

/// Solves the adjoint problem for a fully weighted dual load.
///
/// `dual_load.values[m][k]` must already contain the complete derivative of
/// the observation functional with respect to the field at node `m` and
/// vertex `vertices[k]` — cutoff, quadrature and trapezoid weights included
/// (see [`crate::objective::weighted_dual_load`]). The kernel is run on the
/// time-reversed, sign-flipped load series and the computed levels are
/// flipped back, which realises the exact transpose of the forward map; the
/// damping weights must therefore match the direct solve (`source_face`,
/// `bc`). The final level of the returned trajectory is identically zero.
pub fn solve_adjoint(
    ops: &DiscreteOperators,
    eps: &[f64],
    grid: &TimeGrid,
    dual_load: &BoundaryRecord,
    source_face: BoundaryTag,
    bc: BcMode,
) -> Result<FieldTrajectory> {
    check_stable_step(ops, eps, grid)?;
    dual_load.check_shape()?;
    if dual_load.grid != *grid {
        return Err(Error::mismatch("dual load lives on a different time grid".to_string()));
    }
    // Zero terminal conditions require the load to vanish at the final time,
    // which the observation cutoff guarantees for misfit-driven loads.
    if dual_load.values[grid.n_steps].iter().any(|v| *v != [0.0; 3]) {
        return Err(Error::mismatch(
            "dual load must vanish at the final time node".to_string(),
        ));
    }
    let absorb = absorbing_weights(ops, source_face, bc);
    let n = grid.n_steps;
    let mut levels: Vec<Vec<Vec3>> = Vec::with_capacity(grid.n_nodes());
    leapfrog_kernel(
        ops,
        eps,
        grid,
        &absorb,
        |j, entries| {
            // Load of step j is the (negated) dual load at node N - j.
            let row = &dual_load.values[n - j];
            for (k, &i) in dual_load.vertices.iter().enumerate() {
                let g = row[k];
                if g != [0.0; 3] {
                    entries.push((i, [-g[0], -g[1], -g[2]]));
                }
            }
        },
        |_, level| levels.push(level.to_vec()),
    )?;
    levels.reverse();
    Ok(FieldTrajectory { grid: *grid, levels })
}

/// Discrete energy of interval `n`:
/// `1/2 ||(u^{n+1} - u^n)/dt||_M^2 + 1/2 <K u^n, u^{n+1}>`. Exactly
/// conserved once the load is switched off in pure-Neumann mode, and
/// non-increasing under absorbing boundary conditions.
pub fn discrete_energy(
    ops: &DiscreteOperators,
    eps: &[f64],
    traj: &FieldTrajectory,
    n: usize,
) -> Result<f64> {
    if n + 1 >= traj.levels.len() {
        return Err(Error::mismatch(format!(
            "energy interval {n} out of range for {} levels",
            traj.levels.len()
        )));
    }
    let mass = ops.lumped_mass(eps)?;
    let dt = traj.grid.dt;
    let u0 = &traj.levels[n];
    let u1 = &traj.levels[n + 1];
    let mut kinetic = 0.0;
    for i in 0..ops.n_vertices() {
        let d = geo::sub(u1[i], u0[i]);
        kinetic += mass[i] * geo::dot(d, d) / (dt * dt);
    }
    let mut ku = vec![[0.0; 3]; ops.n_vertices()];
    let mut scratch = StiffnessScratch::new(ops);
    ops.apply_stiffness(eps, u0, &mut ku, &mut scratch);
    let mut potential = 0.0;
    for i in 0..ops.n_vertices() {
        potential += geo::dot(ku[i], u1[i]);
    }
    Ok(0.5 * kinetic + 0.5 * potential)
}
