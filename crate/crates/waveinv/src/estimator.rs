//! A posteriori error indicators and element marking.
//!
//! Two per-element indicators drive the adaptive loop:
//!
//! * the solution-approximation indicator `eta`, built from inter-element
//!   jumps of the discrete gradients and divergences and from time jumps of
//!   the difference quotients of both the forward field `E` and the
//!   multiplier `lambda`;
//! * the coefficient residual `R_eps`, the pointwise gradient expression
//!   with its divergence term replaced by the face-jump surrogate
//!   `(s / 2h) [[ (div lambda)(n . E) ]]`.
//!
//! A third indicator, the plain coefficient magnitude, supports marking on
//! where the reconstructed coefficient itself is large.
//!
//! Quadrature conventions (shared with the acceptance oracle): nodal
//! quantities are averaged over an element's four vertices; per-node element
//! values are combined over a time interval by the trapezoid average of the
//! two node values; time jumps use the per-interval maximum of the two
//! bounding node jumps and vanish at the first and last node; spatial jumps
//! take the maximum magnitude over an element's faces, with boundary faces
//! contributing zero. Interval contributions are weighted by `dt` and the
//! element volume.

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::mesh::TetMesh;
use crate::operators::DiscreteOperators;
use crate::wave::FieldTrajectory;

/// What an indicator measures; kept on the values for labelling exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorKind {
    Eta,
    Residual,
    CoefficientMagnitude,
}

impl IndicatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndicatorKind::Eta => "eta",
            IndicatorKind::Residual => "residual",
            IndicatorKind::CoefficientMagnitude => "coefficient_magnitude",
        }
    }
}

/// Nonnegative per-element indicator values.
#[derive(Debug, Clone)]
pub struct ElementIndicator {
    pub kind: IndicatorKind,
    pub values: Vec<f64>,
}

impl ElementIndicator {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Global indicator value (sum of the element shares).
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Elements whose indicator is within factor `beta` of the maximum:
/// `{K : values[K] >= beta * max}`. Empty exactly when the indicator is
/// identically zero; monotone in `beta` (larger `beta` marks fewer).
pub fn mark_elements(indicator: &ElementIndicator, beta: f64) -> Result<Vec<usize>> {
    if indicator.values.is_empty() {
        return Err(Error::mismatch("indicator has no elements".to_string()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config(format!(
            "marking tolerance must lie strictly between 0 and 1, got {beta}"
        )));
    }
    let max = indicator.max();
    if !max.is_finite() {
        return Err(Error::mismatch("indicator contains non-finite values".to_string()));
    }
    if max == 0.0 {
        return Ok(Vec::new());
    }
    let threshold = beta * max;
    Ok((0..indicator.values.len())
        .filter(|&k| indicator.values[k] >= threshold)
        .collect())
}

/// Per-element max of `|eps - shift|` over the element's vertices, zeroed on
/// elements whose vertices are all frozen (the exterior background would
/// otherwise dominate the argmax). `shift = 0` is the literal magnitude;
/// `shift = 1` measures contrast against the background.
pub fn coefficient_indicator(
    ops: &DiscreteOperators,
    eps: &[f64],
    shift: f64,
    frozen: &[bool],
) -> Result<ElementIndicator> {
    ops.check_field(eps)?;
    if frozen.len() != eps.len() {
        return Err(Error::mismatch("frozen mask size mismatch".to_string()));
    }
    let values = ops
        .tets
        .iter()
        .map(|tet| {
            if tet.iter().all(|&v| frozen[v]) {
                0.0
            } else {
                tet.iter().map(|&v| (eps[v] - shift).abs()).fold(0.0, f64::max)
            }
        })
        .collect();
    Ok(ElementIndicator { kind: IndicatorKind::CoefficientMagnitude, values })
}

/// Rolling per-node derived data for the streaming accumulation: element
/// divergences, element face-max gradient jumps, vertex time jumps, and
/// vertex magnitude means are needed only for the two nodes bounding the
/// current interval (divergence time jumps reach one node further).
struct NodeData {
    div_e: Vec<f64>,
    div_l: Vec<f64>,
    grad_jump_e: Vec<f64>,
    grad_jump_l: Vec<f64>,
    /// Per-vertex time jump of the difference quotients at this node.
    tjump_e: Vec<f64>,
    tjump_l: Vec<f64>,
    /// Per-vertex field magnitude at this node.
    abs_e: Vec<f64>,
}

fn check_pair(e_traj: &FieldTrajectory, l_traj: &FieldTrajectory, nv: usize) -> Result<()> {
    if e_traj.grid != l_traj.grid {
        return Err(Error::mismatch("trajectories live on different time grids".to_string()));
    }
    if e_traj.levels.len() != e_traj.grid.n_nodes() || l_traj.levels.len() != l_traj.grid.n_nodes()
    {
        return Err(Error::mismatch("trajectory level count mismatch".to_string()));
    }
    for lv in e_traj.levels.iter().chain(l_traj.levels.iter()) {
        if lv.len() != nv {
            return Err(Error::mismatch("trajectory level size mismatch".to_string()));
        }
    }
    Ok(())
}

/// Per-element gradient-jump magnitudes of one level (max over faces of the
/// normal jump of the componentwise gradients; boundary faces contribute
/// nothing).
fn grad_jump_of_level(mesh: &TetMesh, ops: &DiscreteOperators, level: &[Vec3]) -> Vec<f64> {
    let grads: Vec<[Vec3; 3]> = (0..ops.n_tets()).map(|t| ops.element_grad(level, t)).collect();
    let mut out = vec![0.0; ops.n_tets()];
    for face in &mesh.faces {
        let Some(nb) = face.neighbor else { continue };
        let mut sq = 0.0;
        for c in 0..3 {
            let d = geo::dot(geo::sub(grads[face.owner][c], grads[nb][c]), face.normal);
            sq += d * d;
        }
        let j = sq.sqrt();
        if j > out[face.owner] {
            out[face.owner] = j;
        }
        if j > out[nb] {
            out[nb] = j;
        }
    }
    out
}

/// Per-vertex jump of difference quotients at node `m` (zero at endpoints).
fn time_jump_at_node(levels: &[Vec<Vec3>], m: usize, dt: f64) -> Vec<f64> {
    let n = levels.len() - 1;
    let nv = levels[0].len();
    if m == 0 || m == n {
        return vec![0.0; nv];
    }
    (0..nv)
        .map(|i| {
            let fwd = geo::scale(geo::sub(levels[m + 1][i], levels[m][i]), 1.0 / dt);
            let bwd = geo::scale(geo::sub(levels[m][i], levels[m - 1][i]), 1.0 / dt);
            geo::norm(geo::sub(fwd, bwd))
        })
        .collect()
}

fn node_data(
    mesh: &TetMesh,
    ops: &DiscreteOperators,
    e_traj: &FieldTrajectory,
    l_traj: &FieldTrajectory,
    m: usize,
) -> NodeData {
    let dt = e_traj.grid.dt;
    let e = &e_traj.levels[m];
    let l = &l_traj.levels[m];
    NodeData {
        div_e: (0..ops.n_tets()).map(|t| ops.element_div(e, t)).collect(),
        div_l: (0..ops.n_tets()).map(|t| ops.element_div(l, t)).collect(),
        grad_jump_e: grad_jump_of_level(mesh, ops, e),
        grad_jump_l: grad_jump_of_level(mesh, ops, l),
        tjump_e: time_jump_at_node(&e_traj.levels, m, dt),
        tjump_l: time_jump_at_node(&l_traj.levels, m, dt),
        abs_e: e.iter().map(|v| geo::norm(*v)).collect(),
    }
}

/// Per-element divergence time jump at node `m`, from the three divergence
/// arrays of nodes `m-1, m, m+1` (zero at endpoints, where `prev`/`next`
/// are absent).
fn div_time_jump(prev: Option<&[f64]>, curr: &[f64], next: Option<&[f64]>, dt: f64) -> Vec<f64> {
    match (prev, next) {
        (Some(p), Some(nx)) => (0..curr.len())
            .map(|t| ((nx[t] - curr[t]) / dt - (curr[t] - p[t]) / dt).abs())
            .collect(),
        _ => vec![0.0; curr.len()],
    }
}

/// The solution-approximation indicator: per element, the time-accumulated
/// four products described in the module docs; `total()` of the result is
/// the global value.
pub fn eta_indicator(
    mesh: &TetMesh,
    ops: &DiscreteOperators,
    e_traj: &FieldTrajectory,
    l_traj: &FieldTrajectory,
) -> Result<ElementIndicator> {
    check_pair(e_traj, l_traj, ops.n_vertices())?;
    let grid = &e_traj.grid;
    let dt = grid.dt;
    let n = grid.n_steps;
    let nt = ops.n_tets();
    let s = ops.s;
    let mut values = vec![0.0f64; nt];

    // Rolling node data for nodes j and j+1, plus the divergence arrays one
    // node ahead for the divergence time jumps.
    let mut nd_curr = node_data(mesh, ops, e_traj, l_traj, 0);
    let mut nd_next = node_data(mesh, ops, e_traj, l_traj, 1);
    let mut div_e_ahead: Option<(Vec<f64>, Vec<f64>)> = if n >= 2 {
        let e = &e_traj.levels[2];
        let l = &l_traj.levels[2];
        Some((
            (0..nt).map(|t| ops.element_div(e, t)).collect(),
            (0..nt).map(|t| ops.element_div(l, t)).collect(),
        ))
    } else {
        None
    };
    // Divergence arrays of node j-1 (none at the start).
    let mut div_e_behind: Option<(Vec<f64>, Vec<f64>)> = None;

    for j in 0..n {
        // Divergence time jumps at the interval's two nodes.
        let tdj_e_lo = div_time_jump(
            div_e_behind.as_ref().map(|p| p.0.as_slice()),
            &nd_curr.div_e,
            if j == 0 { None } else { Some(&nd_next.div_e) },
            dt,
        );
        let tdj_l_lo = div_time_jump(
            div_e_behind.as_ref().map(|p| p.1.as_slice()),
            &nd_curr.div_l,
            if j == 0 { None } else { Some(&nd_next.div_l) },
            dt,
        );
        let tdj_e_hi = div_time_jump(
            Some(&nd_curr.div_e),
            &nd_next.div_e,
            div_e_ahead.as_ref().map(|a| a.0.as_slice()),
            dt,
        );
        let tdj_l_hi = div_time_jump(
            Some(&nd_curr.div_l),
            &nd_next.div_l,
            div_e_ahead.as_ref().map(|a| a.1.as_slice()),
            dt,
        );

        for (t, tet) in ops.tets.iter().enumerate() {
            let h = ops.diameters[t];
            let mean4 = |a: &[f64]| 0.25 * (a[tet[0]] + a[tet[1]] + a[tet[2]] + a[tet[3]]);
            // Per-interval node-max time jumps, vertex-averaged.
            let jt_e = 0.25
                * tet
                    .iter()
                    .map(|&v| nd_curr.tjump_e[v].max(nd_next.tjump_e[v]))
                    .sum::<f64>();
            let jt_l = 0.25
                * tet
                    .iter()
                    .map(|&v| nd_curr.tjump_l[v].max(nd_next.tjump_l[v]))
                    .sum::<f64>();
            // Trapezoid averages of per-node element values.
            let de = 0.5 * (nd_curr.div_e[t].abs() + nd_next.div_e[t].abs());
            let dl = 0.5 * (nd_curr.div_l[t].abs() + nd_next.div_l[t].abs());
            let gj_e = 0.5 * (nd_curr.grad_jump_e[t] + nd_next.grad_jump_e[t]);
            let gj_l = 0.5 * (nd_curr.grad_jump_l[t] + nd_next.grad_jump_l[t]);
            let abs_e = 0.5 * (mean4(&nd_curr.abs_e) + mean4(&nd_next.abs_e));
            // Per-interval node-max divergence time jumps.
            let tdj_e = tdj_e_lo[t].max(tdj_e_hi[t]);
            let tdj_l = tdj_l_lo[t].max(tdj_l_hi[t]);

            let p1 = (jt_l / dt + s * dl) * (h * gj_e + dt * jt_e);
            let p2 = (jt_e / dt) * (h * gj_l + dt * jt_l);
            let p3 = s * dl * (gj_e + dt * tdj_e);
            let p4 = s * (de + abs_e) * (gj_l + dt * tdj_l);
            values[t] += dt * ops.vols[t] * (p1 + p2 + p3 + p4);
        }

        if j + 1 < n {
            div_e_behind = Some((std::mem::take(&mut nd_curr.div_e), std::mem::take(&mut nd_curr.div_l)));
            nd_curr = nd_next;
            nd_next = node_data(mesh, ops, e_traj, l_traj, j + 2);
            div_e_ahead = if j + 3 <= n {
                let e = &e_traj.levels[j + 3];
                let l = &l_traj.levels[j + 3];
                Some((
                    (0..nt).map(|t| ops.element_div(e, t)).collect(),
                    (0..nt).map(|t| ops.element_div(l, t)).collect(),
                ))
            } else {
                None
            };
        }
    }
    Ok(ElementIndicator { kind: IndicatorKind::Eta, values })
}

/// The coefficient residual indicator: per element,
/// `vol_K * | alpha (mean eps - mean eps0)
///           - sum_j dt mean_K(E_t . lambda_t)
///           + s/(2 h_K) sum_m w_m dt max_faces |[[div lambda]]| max_{v in f} |n . E(v)| |`.
///
/// Multiple sources pass one trajectory pair per channel; the dynamic terms
/// are summed before the magnitude is taken, mirroring how the gradient
/// itself accumulates channels.
pub fn residual_indicator(
    mesh: &TetMesh,
    ops: &DiscreteOperators,
    alpha: f64,
    eps: &[f64],
    eps0: &[f64],
    pairs: &[(&FieldTrajectory, &FieldTrajectory)],
) -> Result<ElementIndicator> {
    ops.check_field(eps)?;
    ops.check_field(eps0)?;
    if pairs.is_empty() {
        return Err(Error::mismatch("residual indicator needs at least one trajectory pair".to_string()));
    }
    for (e_traj, l_traj) in pairs {
        check_pair(e_traj, l_traj, ops.n_vertices())?;
        if e_traj.grid != pairs[0].0.grid {
            return Err(Error::mismatch("trajectory pairs live on different time grids".to_string()));
        }
    }
    let grid = &pairs[0].0.grid;
    let dt = grid.dt;
    let n = grid.n_steps;
    let nt = ops.n_tets();
    let s = ops.s;

    let mut vel = vec![0.0f64; nt];
    let mut jump = vec![0.0f64; nt];
    for (e_traj, l_traj) in pairs {
        // Velocity pairing term, elementwise vertex means per interval.
        for j in 0..n {
            let (e0, e1) = (&e_traj.levels[j], &e_traj.levels[j + 1]);
            let (l0, l1) = (&l_traj.levels[j], &l_traj.levels[j + 1]);
            for (t, tet) in ops.tets.iter().enumerate() {
                let mut mean = 0.0;
                for &v in tet {
                    let eq = geo::scale(geo::sub(e1[v], e0[v]), 1.0 / dt);
                    let lq = geo::scale(geo::sub(l1[v], l0[v]), 1.0 / dt);
                    mean += geo::dot(eq, lq);
                }
                vel[t] += dt * 0.25 * mean;
            }
        }

        // Face-jump term, trapezoid in time over nodes.
        for m in 0..=n {
            let e = &e_traj.levels[m];
            let l = &l_traj.levels[m];
            let div_l: Vec<f64> = (0..nt).map(|t| ops.element_div(l, t)).collect();
            let w = grid.trapezoid_weight(m) * dt;
            for t in 0..nt {
                let mut best = 0.0f64;
                for &f in &mesh.tet_faces[t] {
                    let face = &mesh.faces[f];
                    let Some(nb) = face.neighbor else { continue };
                    let dj = (div_l[face.owner] - div_l[nb]).abs();
                    if dj == 0.0 {
                        continue;
                    }
                    let ne = face
                        .verts
                        .iter()
                        .map(|&v| geo::dot(face.normal, e[v]).abs())
                        .fold(0.0, f64::max);
                    best = best.max(dj * ne);
                }
                jump[t] += w * best;
            }
        }
    }

    let values = (0..nt)
        .map(|t| {
            let tet = ops.tets[t];
            let me = 0.25 * tet.iter().map(|&v| eps[v]).sum::<f64>();
            let me0 = 0.25 * tet.iter().map(|&v| eps0[v]).sum::<f64>();
            let r = alpha * (me - me0) - vel[t] + s / (2.0 * ops.diameters[t]) * jump[t];
            ops.vols[t] * r.abs()
        })
        .collect();
    Ok(ElementIndicator { kind: IndicatorKind::Residual, values })
}
