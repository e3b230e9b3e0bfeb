//! Jump quantities across interior faces and time-step interfaces.
//!
//! Piecewise-constant element data (divergences, gradients of the linear
//! field) is discontinuous across faces; its inter-element jumps drive the
//! residual indicators. Boundary faces carry no jump. All routines return
//! one value per tet — the maximum magnitude over that tet's faces — or one
//! row per time interval for the temporal variants.

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::mesh::TetMesh;

/// Per-tet max over faces of `|(q_own - q_neigh) . n|` for per-tet vector
/// data `q` (e.g. an elementwise gradient of a scalar).
pub fn face_jump_normal(mesh: &TetMesh, q: &[Vec3]) -> Result<Vec<f64>> {
    check_len(mesh, q.len())?;
    let mut out = vec![0.0; mesh.n_tets()];
    for face in &mesh.faces {
        let Some(nb) = face.neighbor else { continue };
        let jump = geo::dot(geo::sub(q[face.owner], q[nb]), face.normal).abs();
        if jump > out[face.owner] {
            out[face.owner] = jump;
        }
        if jump > out[nb] {
            out[nb] = jump;
        }
    }
    Ok(out)
}

/// Per-tet max over faces of `|q_own - q_neigh|` for per-tet scalar data
/// (the jump of `q n` across a face has magnitude `|q1 - q2|`).
pub fn face_jump_scalar(mesh: &TetMesh, q: &[f64]) -> Result<Vec<f64>> {
    check_len(mesh, q.len())?;
    let mut out = vec![0.0; mesh.n_tets()];
    for face in &mesh.faces {
        let Some(nb) = face.neighbor else { continue };
        let jump = (q[face.owner] - q[nb]).abs();
        if jump > out[face.owner] {
            out[face.owner] = jump;
        }
        if jump > out[nb] {
            out[nb] = jump;
        }
    }
    Ok(out)
}

/// Per-tet max over faces of the Euclidean norm of the normal-derivative
/// jump `[(G_own - G_neigh) n]` for per-tet 3x3 gradient data (rows are
/// component gradients).
pub fn face_jump_grad(mesh: &TetMesh, g: &[[Vec3; 3]]) -> Result<Vec<f64>> {
    check_len(mesh, g.len())?;
    let mut out = vec![0.0; mesh.n_tets()];
    for face in &mesh.faces {
        let Some(nb) = face.neighbor else { continue };
        let mut sq = 0.0;
        for c in 0..3 {
            let d = geo::dot(geo::sub(g[face.owner][c], g[nb][c]), face.normal);
            sq += d * d;
        }
        let jump = sq.sqrt();
        if jump > out[face.owner] {
            out[face.owner] = jump;
        }
        if jump > out[nb] {
            out[nb] = jump;
        }
    }
    Ok(out)
}

/// Jumps of the backward difference quotients of a nodal trajectory.
///
/// For levels `u^0..u^N` the quotient on interval `j` is
/// `(u^{j+1} - u^j) / dt`; the jump at an interior node is the difference of
/// adjacent quotients and is zero at the two endpoints. Returns, per
/// interval, the per-vertex maximum of the jump norms at its two ends —
/// a trajectory with a single interval therefore has all-zero jumps.
pub fn time_max_jump_vec(levels: &[Vec<Vec3>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = levels.len().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| {
        Error::mismatch("time jump needs at least two levels".to_string())
    })?;
    let nv = levels[0].len();
    // Node jumps: index m = 0..=n, zero at m = 0 and m = n.
    let node_jump = |m: usize, i: usize| -> f64 {
        if m == 0 || m == n {
            return 0.0;
        }
        let a = geo::scale(geo::sub(levels[m + 1][i], levels[m][i]), 1.0 / dt);
        let b = geo::scale(geo::sub(levels[m][i], levels[m - 1][i]), 1.0 / dt);
        geo::norm(geo::sub(a, b))
    };
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = Vec::with_capacity(nv);
        for i in 0..nv {
            row.push(node_jump(j, i).max(node_jump(j + 1, i)));
        }
        out.push(row);
    }
    Ok(out)
}

/// Scalar counterpart of [`time_max_jump_vec`] for per-element series such
/// as elementwise divergences: `series[m][k]` is the value on element `k`
/// at time node `m`.
pub fn time_max_jump_scalar(series: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = series.len().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| {
        Error::mismatch("time jump needs at least two levels".to_string())
    })?;
    let nk = series[0].len();
    let node_jump = |m: usize, k: usize| -> f64 {
        if m == 0 || m == n {
            return 0.0;
        }
        ((series[m + 1][k] - series[m][k]) / dt - (series[m][k] - series[m - 1][k]) / dt).abs()
    };
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = Vec::with_capacity(nk);
        for k in 0..nk {
            row.push(node_jump(j, k).max(node_jump(j + 1, k)));
        }
        out.push(row);
    }
    Ok(out)
}

fn check_len(mesh: &TetMesh, len: usize) -> Result<()> {
    if len != mesh.n_tets() {
        return Err(Error::mismatch(format!(
            "per-element data has {len} entries, mesh has {} tets",
            mesh.n_tets()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxBounds};
    use crate::operators::DiscreteOperators;

    fn unit_mesh(h0: f64) -> TetMesh {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        build_uniform_mesh(b, b, h0).unwrap()
    }

    #[test]
    fn normal_jump_of_piecewise_constants() {
        // Data +1/-1 split by tet index parity would be mesh-dependent;
        // instead give every tet its own value and check against a direct
        // face scan with q . n = q_own - q_neigh magnitudes.
        let mesh = unit_mesh(1.0);
        let q: Vec<[f64; 3]> = (0..mesh.n_tets())
            .map(|t| {
                let c = mesh.tet_centroid(t);
                [c[0] + c[1], c[1] - c[2], c[2]]
            })
            .collect();
        let jumps = face_jump_normal(&mesh, &q).unwrap();
        for face in &mesh.faces {
            let Some(nb) = face.neighbor else { continue };
            let j = crate::geo::dot(crate::geo::sub(q[face.owner], q[nb]), face.normal).abs();
            assert!(jumps[face.owner] >= j - 1e-15);
            assert!(jumps[nb] >= j - 1e-15);
        }
    }

    #[test]
    fn scalar_jump_between_two_values_is_their_difference() {
        let mesh = unit_mesh(1.0);
        // Tets whose centroid sits left of x = 0.4 get -1, the rest +1. The
        // six tets of the cube ring around its main diagonal, so the two
        // groups share interior faces and the jump there is 2.
        let q: Vec<f64> = (0..mesh.n_tets())
            .map(|t| if mesh.tet_centroid(t)[0] < 0.4 { -1.0 } else { 1.0 })
            .collect();
        let jumps = face_jump_scalar(&mesh, &q).unwrap();
        let max = jumps.iter().cloned().fold(0.0, f64::max);
        assert!((max - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_global_linear_field_has_no_jump() {
        let mesh = unit_mesh(0.5);
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let v: Vec<[f64; 3]> = mesh
            .vertices
            .iter()
            .map(|&p| {
                [
                    2.0 * p[0] - p[1],
                    p[0] + p[1] + p[2],
                    -3.0 * p[2] + 0.5 * p[0],
                ]
            })
            .collect();
        let grads: Vec<[[f64; 3]; 3]> =
            (0..mesh.n_tets()).map(|t| ops.element_grad(&v, t)).collect();
        for j in face_jump_grad(&mesh, &grads).unwrap() {
            assert!(j.abs() < 1e-12);
        }
        let divs: Vec<f64> = (0..mesh.n_tets()).map(|t| ops.element_div(&v, t)).collect();
        for j in face_jump_scalar(&mesh, &divs).unwrap() {
            assert!(j.abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_faces_do_not_contribute() {
        // On the single-cube mesh every tet touches the boundary; constant
        // data has zero interior jumps, so the totals must be zero.
        let mesh = unit_mesh(1.0);
        let q = vec![7.0; mesh.n_tets()];
        for j in face_jump_scalar(&mesh, &q).unwrap() {
            assert_eq!(j, 0.0);
        }
    }

    #[test]
    fn single_interval_trajectory_has_zero_time_jumps() {
        let levels = vec![vec![[0.0; 3]; 4], vec![[1.0, 2.0, 3.0]; 4]];
        let jumps = time_max_jump_vec(&levels, 0.5).unwrap();
        assert_eq!(jumps.len(), 1);
        for row in jumps {
            for v in row {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn kink_in_time_is_detected_on_both_intervals() {
        // Scalar series 0, 0, 1 with dt = 1: quotients 0 then 1, node jump 1
        // at the middle node, so both intervals report 1.
        let series = vec![vec![0.0], vec![0.0], vec![1.0]];
        let jumps = time_max_jump_scalar(&series, 1.0).unwrap();
        assert_eq!(jumps.len(), 2);
        assert!((jumps[0][0] - 1.0).abs() < 1e-15);
        assert!((jumps[1][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_short_series_is_an_error() {
        assert!(time_max_jump_scalar(&[vec![1.0]], 1.0).is_err());
        let one: Vec<Vec<[f64; 3]>> = vec![vec![[0.0; 3]]];
        assert!(time_max_jump_vec(&one, 1.0).is_err());
    }
}
