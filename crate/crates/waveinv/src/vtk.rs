//! Minimal legacy-VTK (ASCII) writer for tetrahedral meshes with optional
//! scalar fields per cell and per point. The legacy text format is enough
//! for ParaView/VisIt inspection of reconstructions and indicators, and
//! writing it by hand keeps the output byte-deterministic.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::TetMesh;

/// VTK cell type id for a linear tetrahedron.
const VTK_TETRA: u8 = 10;

/// Writes `mesh` with the given named scalar fields. Field lengths must
/// match the mesh (`cell_data` per tet, `point_data` per vertex).
pub fn write_vtk(
    path: &Path,
    title: &str,
    mesh: &TetMesh,
    cell_data: &[(&str, &[f64])],
    point_data: &[(&str, &[f64])],
) -> Result<()> {
    for (name, values) in cell_data {
        if values.len() != mesh.n_tets() {
            return Err(Error::mismatch(format!(
                "cell field '{name}' has {} values, mesh has {} tets",
                values.len(),
                mesh.n_tets()
            )));
        }
    }
    for (name, values) in point_data {
        if values.len() != mesh.n_vertices() {
            return Err(Error::mismatch(format!(
                "point field '{name}' has {} values, mesh has {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
    }

    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or("mesh"))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in &mesh.vertices {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }

    writeln!(w, "CELLS {} {}", mesh.n_tets(), 5 * mesh.n_tets())?;
    for tet in &mesh.tets {
        writeln!(w, "4 {} {} {} {}", tet[0], tet[1], tet[2], tet[3])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.n_tets())?;
    for _ in 0..mesh.n_tets() {
        writeln!(w, "{VTK_TETRA}")?;
    }

    if !cell_data.is_empty() {
        writeln!(w, "CELL_DATA {}", mesh.n_tets())?;
        for (name, values) in cell_data {
            write_scalars(&mut w, name, values)?;
        }
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, values) in point_data {
            write_scalars(&mut w, name, values)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_scalars(w: &mut impl Write, name: &str, values: &[f64]) -> Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxBounds};

    #[test]
    fn writes_a_parseable_legacy_file() {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        let mesh = build_uniform_mesh(b, b, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.vtk");
        let cells: Vec<f64> = (0..mesh.n_tets()).map(|t| t as f64).collect();
        let points: Vec<f64> = (0..mesh.n_vertices()).map(|v| 1.0 + v as f64).collect();
        write_vtk(&path, "unit cube", &mesh, &[("indicator", &cells)], &[("eps", &points)])
            .unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(lines.contains(&"POINTS 8 double"));
        assert!(lines.contains(&"CELLS 6 30"));
        assert!(lines.contains(&"CELL_TYPES 6"));
        assert!(lines.contains(&"CELL_DATA 6"));
        assert!(lines.contains(&"POINT_DATA 8"));
        assert!(lines.contains(&"SCALARS indicator double 1"));
        assert!(lines.contains(&"SCALARS eps double 1"));
        // Every tet row names four distinct vertices in range.
        let cells_at = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        for row in &lines[cells_at + 1..cells_at + 7] {
            let ids: Vec<usize> = row.split_whitespace().map(|t| t.parse().unwrap()).collect();
            assert_eq!(ids[0], 4);
            assert_eq!(ids.len(), 5);
            assert!(ids[1..].iter().all(|&v| v < 8));
        }
    }

    #[test]
    fn rejects_mismatched_fields() {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        let mesh = build_uniform_mesh(b, b, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.vtk");
        let short = vec![1.0; 2];
        assert!(write_vtk(&path, "bad", &mesh, &[("x", &short)], &[]).is_err());
        assert!(write_vtk(&path, "bad", &mesh, &[], &[("y", &short)]).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let b = BoxBounds::new([0.0; 3], [1.0; 3]).unwrap();
        let mesh = build_uniform_mesh(b, b, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.vtk");
        let bpath = dir.path().join("b.vtk");
        let vals: Vec<f64> = (0..mesh.n_tets()).map(|t| (t as f64).sin()).collect();
        write_vtk(&a, "t", &mesh, &[("v", &vals)], &[]).unwrap();
        write_vtk(&bpath, "t", &mesh, &[("v", &vals)], &[]).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&bpath).unwrap());
    }
}
