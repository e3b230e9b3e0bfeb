//! Tikhonov functional, its exact discrete gradient, and the admissible set.
//!
//! The objective combines a boundary data misfit with a coefficient
//! regularizer:
//!
//! ```text
//! F(eps) = 1/2 ||(E_eps - G) z||^2_{Gamma x (0,T)} + alpha/2 ||eps - eps0||^2
//! ```
//!
//! where `z` is the temporal cutoff of [`crate::wave::cutoff_weight`]. Both
//! norms are evaluated with the quadrature the solver itself induces —
//! vertex-lumped face quadrature and the trapezoid rule in time for the
//! misfit, lumped vertex quadrature in space for the regularizer — so the
//! gradient assembled from one forward and one adjoint solve is the exact
//! derivative of the computed value, not an approximation of a continuum
//! formula. That exactness is checked against central finite differences in
//! the acceptance suite.
//!
//! The gradient field at a free vertex `l` reads
//!
//! ```text
//! R_l = alpha (eps_l - eps0_l)
//!     - sum_j (lam^{j+1}_l - lam^j_l) . (E^{j+1}_l - E^j_l) / dt^2
//!     + s / m_l * sum_{K incident to l} vol_K/4 * sum_j div E^j|_K div lam^j|_K
//! ```
//!
//! and is zeroed at frozen vertices (outer boundary and the exterior of the
//! inner box), matching the admissible set which pins `eps = 1` there.

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::grid::TimeGrid;
use crate::mesh::{BoundaryTag, TetMesh};
use crate::operators::DiscreteOperators;
use crate::par;
use crate::wave::{
    cutoff_weight, solve_adjoint, solve_direct, tagged_vertices, BcMode, BoundaryRecord,
    FieldTrajectory, SourceSpec,
};

/// Weights of the Tikhonov functional. The gauge parameter `s` of the
/// divergence penalty lives on [`DiscreteOperators`]; the background field
/// `eps0` is passed alongside the coefficient wherever needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovParams {
    pub alpha: f64,
    /// Width of the observation cutoff (the weight vanishes on
    /// `[t_final - delta/2, t_final]`).
    pub delta: f64,
}

impl TikhonovParams {
    pub fn new(alpha: f64, delta: f64, t_final: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::config(format!(
                "regularization weight must be positive, got {alpha}"
            )));
        }
        if !(delta > 0.0 && delta < t_final) {
            return Err(Error::config(format!(
                "cutoff width must lie in (0, {t_final}), got {delta}"
            )));
        }
        Ok(TikhonovParams { alpha, delta })
    }
}

/// Box constraints plus the frozen-vertex mask: admissible coefficients
/// satisfy `1 <= eps <= eps_max` everywhere and `eps = 1` at frozen
/// vertices (outer boundary and outside the inner box).
#[derive(Debug, Clone)]
pub struct AdmissibleSet {
    pub eps_max: f64,
    pub frozen: Vec<bool>,
}

impl AdmissibleSet {
    pub fn new(mesh: &TetMesh, eps_max: f64) -> Result<Self> {
        if !(eps_max >= 1.0) {
            return Err(Error::config(format!(
                "coefficient upper bound must be at least 1, got {eps_max}"
            )));
        }
        Ok(AdmissibleSet { eps_max, frozen: mesh.frozen_mask() })
    }

    /// Pointwise clamp to `[1, eps_max]` with frozen vertices forced to 1.
    /// Idempotent and non-expansive in the max norm.
    pub fn project(&self, values: &mut [f64]) {
        for (v, &frozen) in values.iter_mut().zip(&self.frozen) {
            *v = if frozen { 1.0 } else { v.clamp(1.0, self.eps_max) };
        }
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.frozen.len()
            && values.iter().zip(&self.frozen).all(|(&v, &frozen)| {
                if frozen {
                    v == 1.0
                } else {
                    (1.0..=self.eps_max).contains(&v)
                }
            })
    }

    pub fn n_free(&self) -> usize {
        self.frozen.iter().filter(|f| !**f).count()
    }
}

/// A validated coefficient field bound to the mesh it lives on.
#[derive(Debug, Clone)]
pub struct PermittivityField {
    pub mesh_id: u64,
    pub values: Vec<f64>,
}

impl PermittivityField {
    pub fn new(mesh: &TetMesh, admissible: &AdmissibleSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::mismatch(format!(
                "field has {} values, mesh has {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::config("coefficient field contains non-finite values".to_string()));
        }
        if !admissible.contains(&values) {
            return Err(Error::config(
                "coefficient field violates the admissible bounds".to_string(),
            ));
        }
        Ok(PermittivityField { mesh_id: mesh.id(), values })
    }
}

/// Lumped inner product `sum_i m_i a_i b_i` (the vertex-quadrature L2
/// product used throughout the optimizer).
pub fn lumped_inner(ops: &DiscreteOperators, a: &[f64], b: &[f64]) -> f64 {
    ops.vertex_mass
        .iter()
        .zip(a.iter().zip(b))
        .map(|(&m, (&x, &y))| m * x * y)
        .sum()
}

pub fn lumped_norm(ops: &DiscreteOperators, a: &[f64]) -> f64 {
    lumped_inner(ops, a, a).sqrt()
}

/// Misfit part of the objective for one observation channel:
/// `1/2 sum_m w_m dt z(t_m)^2 sum_k q_k |obs^m_k - data^m_k|^2`.
pub fn misfit_value(
    grid: &TimeGrid,
    delta: f64,
    face_weights: &[f64],
    obs: &BoundaryRecord,
    data: &BoundaryRecord,
) -> Result<f64> {
    check_records(grid, face_weights, obs, data)?;
    let mut total = 0.0;
    for m in 0..grid.n_nodes() {
        let z = cutoff_weight(grid.time(m), grid.t_final, delta);
        if z == 0.0 {
            continue;
        }
        let w = grid.trapezoid_weight(m) * grid.dt * z * z;
        let mut node = 0.0;
        for (k, &q) in face_weights.iter().enumerate() {
            let d = geo::sub(obs.values[m][k], data.values[m][k]);
            node += q * geo::dot(d, d);
        }
        total += w * node;
    }
    Ok(0.5 * total)
}

/// Regularization part: `alpha/2 ||eps - eps0||^2` in the lumped norm.
pub fn regularization_value(
    ops: &DiscreteOperators,
    alpha: f64,
    eps: &[f64],
    eps0: &[f64],
) -> Result<f64> {
    ops.check_field(eps)?;
    ops.check_field(eps0)?;
    let mut total = 0.0;
    for i in 0..eps.len() {
        let d = eps[i] - eps0[i];
        total += ops.vertex_mass[i] * d * d;
    }
    Ok(0.5 * alpha * total)
}

/// Derivative of the misfit with respect to the observed field, with all
/// quadrature weights folded in: row `m`, entry `k` holds
/// `w_m dt z(t_m)^2 q_k (obs - data)`. Feeding this to
/// [`crate::wave::solve_adjoint`] yields the multiplier trajectory whose
/// pairing with the forward trajectory is the exact misfit gradient.
pub fn weighted_dual_load(
    grid: &TimeGrid,
    delta: f64,
    face_weights: &[f64],
    obs: &BoundaryRecord,
    data: &BoundaryRecord,
) -> Result<BoundaryRecord> {
    check_records(grid, face_weights, obs, data)?;
    let mut values = Vec::with_capacity(grid.n_nodes());
    for m in 0..grid.n_nodes() {
        let z = cutoff_weight(grid.time(m), grid.t_final, delta);
        let w = grid.trapezoid_weight(m) * grid.dt * z * z;
        let row: Vec<Vec3> = (0..face_weights.len())
            .map(|k| {
                if w == 0.0 {
                    [0.0; 3]
                } else {
                    geo::scale(geo::sub(obs.values[m][k], data.values[m][k]), w * face_weights[k])
                }
            })
            .collect();
        values.push(row);
    }
    Ok(BoundaryRecord { grid: *grid, vertices: obs.vertices.clone(), values })
}

/// Assembles the nodal gradient field from a forward trajectory and the
/// corresponding adjoint trajectory (see the module docs for the formula).
/// Pass `alpha = 0` to obtain only the dynamic part. Frozen vertices are
/// zeroed: they are not degrees of freedom of the admissible set.
pub fn gradient_field(
    ops: &DiscreteOperators,
    alpha: f64,
    eps: &[f64],
    eps0: &[f64],
    e_traj: &FieldTrajectory,
    l_traj: &FieldTrajectory,
    frozen: &[bool],
) -> Result<Vec<f64>> {
    ops.check_field(eps)?;
    ops.check_field(eps0)?;
    if e_traj.grid != l_traj.grid {
        return Err(Error::mismatch("trajectories live on different time grids".to_string()));
    }
    let nv = ops.n_vertices();
    if e_traj.levels.len() != e_traj.grid.n_nodes()
        || l_traj.levels.len() != l_traj.grid.n_nodes()
        || frozen.len() != nv
    {
        return Err(Error::mismatch("trajectory or mask size mismatch".to_string()));
    }
    let dt = e_traj.grid.dt;
    let n = e_traj.grid.n_steps;
    let nt = ops.n_tets();

    // Velocity pairing, accumulated level pair by level pair (streaming,
    // cache-friendly, deterministic for any thread count).
    let mut vel = vec![0.0f64; nv];
    for j in 0..n {
        let (e0, e1) = (&e_traj.levels[j], &e_traj.levels[j + 1]);
        let (l0, l1) = (&l_traj.levels[j], &l_traj.levels[j + 1]);
        par::fill_chunks(&mut vel, |start, chunk| {
            for (off, slot) in chunk.iter_mut().enumerate() {
                let i = start + off;
                *slot += geo::dot(geo::sub(e1[i], e0[i]), geo::sub(l1[i], l0[i]));
            }
        });
    }

    // Divergence pairing per element; level 0 is zero for direct
    // trajectories but is included for generality.
    let mut div = vec![0.0f64; nt];
    for j in 0..n {
        let e = &e_traj.levels[j];
        let l = &l_traj.levels[j];
        par::fill_chunks(&mut div, |start, chunk| {
            for (off, slot) in chunk.iter_mut().enumerate() {
                let t = start + off;
                *slot += ops.element_div(e, t) * ops.element_div(l, t);
            }
        });
    }
    // Scatter vol/4 element shares to vertices.
    let mut div_nodal = vec![0.0f64; nv];
    for (t, tet) in ops.tets.iter().enumerate() {
        let share = 0.25 * ops.vols[t] * div[t];
        for &v in tet {
            div_nodal[v] += share;
        }
    }

    let s = ops.s;
    let grad = (0..nv)
        .map(|l| {
            if frozen[l] {
                0.0
            } else {
                alpha * (eps[l] - eps0[l]) - vel[l] / (dt * dt) + s * div_nodal[l] / ops.vertex_mass[l]
            }
        })
        .collect();
    Ok(grad)
}

fn check_records(
    grid: &TimeGrid,
    face_weights: &[f64],
    obs: &BoundaryRecord,
    data: &BoundaryRecord,
) -> Result<()> {
    obs.check_shape()?;
    data.check_shape()?;
    if obs.grid != *grid || data.grid != *grid {
        return Err(Error::mismatch("records live on a different time grid".to_string()));
    }
    if obs.vertices != data.vertices {
        return Err(Error::mismatch(
            "observation and data records cover different vertex sets".to_string(),
        ));
    }
    if face_weights.len() != obs.vertices.len() {
        return Err(Error::mismatch(format!(
            "face weights have {} entries, record covers {} vertices",
            face_weights.len(),
            obs.vertices.len()
        )));
    }
    Ok(())
}

/// One illumination: a source, the faces observed for it, and the measured
/// data on those faces.
#[derive(Debug, Clone)]
pub struct SourceChannel {
    pub source: SourceSpec,
    pub observe: Vec<BoundaryTag>,
    pub data: BoundaryRecord,
}

/// Everything needed to evaluate the objective and its gradient for a fixed
/// mesh and time grid. Multi-source setups sum misfits and dynamic gradient
/// parts with equal weights; the regularizer enters once.
pub struct InverseProblem<'a> {
    pub ops: &'a DiscreteOperators,
    pub grid: TimeGrid,
    pub bc: BcMode,
    pub channels: Vec<SourceChannel>,
    pub params: TikhonovParams,
    pub eps0: Vec<f64>,
    pub admissible: AdmissibleSet,
    face_weights: Vec<Vec<f64>>,
}

/// Value split into total, misfit and regularization parts.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveValue {
    pub total: f64,
    pub misfit: f64,
    pub regularization: f64,
}

/// Gradient evaluation bundle: the value parts plus the gradient field and
/// the trajectories of the last channel (reused by the error indicators).
pub struct GradientEval {
    pub value: ObjectiveValue,
    pub gradient: Vec<f64>,
    pub trajectories: Vec<(FieldTrajectory, FieldTrajectory)>,
}

impl<'a> InverseProblem<'a> {
    pub fn new(
        ops: &'a DiscreteOperators,
        grid: TimeGrid,
        bc: BcMode,
        channels: Vec<SourceChannel>,
        params: TikhonovParams,
        eps0: Vec<f64>,
        admissible: AdmissibleSet,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::config("at least one source channel is required".to_string()));
        }
        ops.check_field(&eps0)?;
        if admissible.frozen.len() != ops.n_vertices() {
            return Err(Error::mismatch(
                "admissible set built for a different mesh".to_string(),
            ));
        }
        if !admissible.contains(&eps0) {
            return Err(Error::config("background coefficient is not admissible".to_string()));
        }
        let mut face_weights = Vec::with_capacity(channels.len());
        for ch in &channels {
            ch.data.check_shape()?;
            if ch.data.grid != grid {
                return Err(Error::mismatch(
                    "channel data lives on a different time grid".to_string(),
                ));
            }
            let expected = tagged_vertices(ops, &ch.observe);
            if ch.data.vertices != expected {
                return Err(Error::mismatch(
                    "channel data does not cover the observation vertices of its faces"
                        .to_string(),
                ));
            }
            let all = ops.boundary_vertex_weights(&ch.observe);
            face_weights.push(ch.data.vertices.iter().map(|&i| all[i]).collect());
        }
        Ok(InverseProblem { ops, grid, bc, channels, params, eps0, admissible, face_weights })
    }

    /// Objective value only (misfit solves keep no trajectory).
    pub fn value(&self, eps: &[f64]) -> Result<ObjectiveValue> {
        let mut misfit = 0.0;
        for (ch, q) in self.channels.iter().zip(&self.face_weights) {
            let solved = solve_direct(
                self.ops, eps, &self.grid, &ch.source, self.bc, &ch.observe, false,
            )?;
            misfit += misfit_value(&self.grid, self.params.delta, q, &solved.observation, &ch.data)?;
        }
        let regularization = regularization_value(self.ops, self.params.alpha, eps, &self.eps0)?;
        Ok(ObjectiveValue { total: misfit + regularization, misfit, regularization })
    }

    /// Objective value and exact gradient via one forward and one adjoint
    /// solve per channel.
    pub fn value_and_gradient(&self, eps: &[f64]) -> Result<GradientEval> {
        let mut misfit = 0.0;
        let mut dynamic = vec![0.0f64; self.ops.n_vertices()];
        let mut trajectories = Vec::with_capacity(self.channels.len());
        for (ch, q) in self.channels.iter().zip(&self.face_weights) {
            let solved =
                solve_direct(self.ops, eps, &self.grid, &ch.source, self.bc, &ch.observe, true)?;
            let e_traj = solved.trajectory.expect("trajectory requested");
            misfit +=
                misfit_value(&self.grid, self.params.delta, q, &solved.observation, &ch.data)?;
            let load =
                weighted_dual_load(&self.grid, self.params.delta, q, &solved.observation, &ch.data)?;
            let l_traj =
                solve_adjoint(self.ops, eps, &self.grid, &load, ch.source.face, self.bc)?;
            let part = gradient_field(
                self.ops,
                0.0,
                eps,
                &self.eps0,
                &e_traj,
                &l_traj,
                &self.admissible.frozen,
            )?;
            for (d, p) in dynamic.iter_mut().zip(&part) {
                *d += p;
            }
            trajectories.push((e_traj, l_traj));
        }
        let regularization = regularization_value(self.ops, self.params.alpha, eps, &self.eps0)?;
        let gradient: Vec<f64> = (0..self.ops.n_vertices())
            .map(|l| {
                if self.admissible.frozen[l] {
                    0.0
                } else {
                    self.params.alpha * (eps[l] - self.eps0[l]) + dynamic[l]
                }
            })
            .collect();
        Ok(GradientEval {
            value: ObjectiveValue { total: misfit + regularization, misfit, regularization },
            gradient,
            trajectories,
        })
    }

    /// Central finite difference of the objective along `dir`:
    /// `(F(eps + h dir) - F(eps - h dir)) / 2h`.
    pub fn directional_fd(&self, eps: &[f64], dir: &[f64], h: f64) -> Result<f64> {
        let mut plus = eps.to_vec();
        let mut minus = eps.to_vec();
        for i in 0..eps.len() {
            plus[i] += h * dir[i];
            minus[i] -= h * dir[i];
        }
        let fp = self.value(&plus)?.total;
        let fm = self.value(&minus)?.total;
        Ok((fp - fm) / (2.0 * h))
    }

    /// Analytic directional derivative `<R, dir>` in the lumped product.
    pub fn directional_gradient(&self, gradient: &[f64], dir: &[f64]) -> f64 {
        lumped_inner(self.ops, gradient, dir)
    }
}
