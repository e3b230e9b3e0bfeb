//! Synthetic experiments end to end: manufacture boundary observations from
//! an analytic phantom, pollute them with noise, feed them to the adaptive
//! reconstruction, measure the result, and write every artifact to disk.
//!
//! To avoid the inverse crime, observations are generated on a mesh one
//! global refinement finer than the inversion mesh, with half the time step;
//! a config toggle generates on the inversion mesh itself for consistency
//! tests. Generated traces cover all boundary vertices, so the adaptive
//! loop can request any observation face on any refinement level: values
//! are transferred by barycentric interpolation within the source boundary
//! triangles and linear interpolation in time.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptivity::{run_adaptive, AdaptiveInputs, AdaptiveRun, ObservationSource};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::grid::{check_cfl, stable_grid, TimeGrid};
use crate::mesh::{build_uniform_mesh, refine, BoundaryTag, TetMesh};
use crate::objective::{lumped_norm, AdmissibleSet, PermittivityField, TikhonovParams};
use crate::operators::DiscreteOperators;
use crate::phantom::synthesize_phantom;
use crate::report;
use crate::vtk::write_vtk;
use crate::wave::{solve_direct, BoundaryRecord};

/// All three boundary tags, for generation-time observation everywhere.
const ALL_TAGS: [BoundaryTag; 3] =
    [BoundaryTag::Front, BoundaryTag::Back, BoundaryTag::Lateral];

/// Name recorded in the manifest for the noise model in use.
pub const NOISE_MODEL: &str = "additive_uniform_record_max";

/// Synthetic observations: per-source traces at every boundary vertex of
/// the generation mesh, plus the phantom they came from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// The inversion base mesh the experiment will run on.
    pub inversion_mesh: TetMesh,
    pub inversion_grid: TimeGrid,
    /// The (possibly finer) mesh the data was generated on.
    pub mesh: TetMesh,
    pub grid: TimeGrid,
    pub truth: PermittivityField,
    /// One record per source, all on the generation mesh boundary.
    pub records: Vec<BoundaryRecord>,
    /// Generation-mesh vertex index -> row in the records.
    row_of_vertex: Vec<Option<usize>>,
}

/// The inversion time grid for a mesh under this config: pinned step count
/// if given (validated against the stability rule), else derived from it.
pub fn inversion_grid(config: &ExperimentConfig, mesh: &TetMesh) -> Result<TimeGrid> {
    match config.time.n_steps {
        Some(n) => {
            let grid = TimeGrid::new(config.time.t_final, n)?;
            check_cfl(mesh, &grid, config.model.eps_max)?;
            Ok(grid)
        }
        None => stable_grid(mesh, config.time.t_final, config.model.eps_max),
    }
}

/// Solves the direct problem with the true phantom and records the clean
/// traces on every boundary vertex.
pub fn generate_data(config: &ExperimentConfig) -> Result<SyntheticData> {
    config.validate()?;
    let outer = config.geometry.outer()?;
    let inner = config.geometry.inner()?;
    let inversion_mesh = build_uniform_mesh(outer, inner, config.geometry.h0)?;
    let inversion_grid_ = inversion_grid(config, &inversion_mesh)?;

    let (mesh, grid) = if config.data.same_mesh {
        (inversion_mesh.clone(), inversion_grid_)
    } else {
        let all: Vec<usize> = (0..inversion_mesh.n_tets()).collect();
        let fine = refine(&inversion_mesh, &all)?;
        let grid = TimeGrid::new(config.time.t_final, 2 * inversion_grid_.n_steps)?;
        (fine, grid)
    };

    let ops = DiscreteOperators::assemble(&mesh, config.model.s)?;
    let admissible = AdmissibleSet::new(&mesh, config.model.eps_max)?;
    let truth = synthesize_phantom(&config.phantom, &mesh, &admissible)?;

    let mut records = Vec::with_capacity(config.sources.len());
    for source in &config.sources {
        let solve = solve_direct(
            &ops,
            &truth.values,
            &grid,
            &source.spec()?,
            config.model.bc,
            &ALL_TAGS,
            false,
        )?;
        records.push(solve.observation);
    }

    let mut row_of_vertex = vec![None; mesh.n_vertices()];
    for (row, &v) in records[0].vertices.iter().enumerate() {
        row_of_vertex[v] = Some(row);
    }
    Ok(SyntheticData {
        inversion_mesh,
        inversion_grid: inversion_grid_,
        mesh,
        grid,
        truth,
        records,
        row_of_vertex,
    })
}

/// Additive uniform noise scaled by the record maximum:
/// `value += sigma * max_abs(record) * u`, `u ~ U[-1, 1]` from a seeded
/// generator, drawn in fixed iteration order (time-major, then vertex, then
/// component). `sigma = 0` returns the record unchanged.
pub fn add_noise(record: &BoundaryRecord, sigma: f64, seed: u64) -> BoundaryRecord {
    if sigma == 0.0 {
        return record.clone();
    }
    let amplitude = sigma * record.max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = record.clone();
    for row in &mut out.values {
        for v in row {
            for c in v {
                let u = 2.0 * rng.gen::<f64>() - 1.0;
                *c += amplitude * u;
            }
        }
    }
    out
}

impl SyntheticData {
    /// Applies the noise model to every source record, with per-source
    /// seeds derived from the base seed.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> SyntheticData {
        let mut out = self.clone();
        out.records = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| add_noise(r, sigma, seed.wrapping_add(i as u64)))
            .collect();
        out
    }

    /// Barycentric weights of `p` within the boundary triangle `verts`, or
    /// `None` when `p` is off the triangle's plane or outside it.
    fn face_weights(&self, verts: [usize; 3], p: Vec3) -> Option<[f64; 3]> {
        let a = self.mesh.vertices[verts[0]];
        let v0 = geo::sub(self.mesh.vertices[verts[1]], a);
        let v1 = geo::sub(self.mesh.vertices[verts[2]], a);
        let v2 = geo::sub(p, a);
        let normal = geo::cross(v0, v1);
        let nn = geo::norm(normal);
        let plane_tol = 1e-9 * self.mesh.outer_box.diameter();
        if nn == 0.0 || geo::dot(v2, normal).abs() > plane_tol * nn {
            return None;
        }
        let d00 = geo::dot(v0, v0);
        let d01 = geo::dot(v0, v1);
        let d11 = geo::dot(v1, v1);
        let d20 = geo::dot(v2, v0);
        let d21 = geo::dot(v2, v1);
        let denom = d00 * d11 - d01 * d01;
        let wb = (d11 * d20 - d01 * d21) / denom;
        let wc = (d00 * d21 - d01 * d20) / denom;
        let wa = 1.0 - wb - wc;
        let tol = -1e-9;
        if wa >= tol && wb >= tol && wc >= tol {
            Some([wa.max(0.0), wb.max(0.0), wc.max(0.0)])
        } else {
            None
        }
    }

    /// For each target point, the source rows and barycentric weights of a
    /// containing boundary triangle with one of the requested tags.
    fn locate_on_boundary(
        &self,
        tags: &[BoundaryTag],
        points: &[Vec3],
    ) -> Result<Vec<([usize; 3], [f64; 3])>> {
        let faces: Vec<&crate::mesh::Face> = self
            .mesh
            .faces
            .iter()
            .filter(|f| f.tag.is_some_and(|t| tags.contains(&t)))
            .collect();
        points
            .iter()
            .map(|&p| {
                for face in &faces {
                    if let Some(w) = self.face_weights(face.verts, p) {
                        let rows = face.verts.map(|v| {
                            self.row_of_vertex[v].expect("boundary vertex has a record row")
                        });
                        return Ok((rows, w));
                    }
                }
                Err(Error::geometry(format!(
                    "observation point ({}, {}, {}) lies on no generated boundary face",
                    p[0], p[1], p[2]
                )))
            })
            .collect()
    }
}

impl ObservationSource for SyntheticData {
    /// Resamples the stored traces onto the observation vertices of `mesh`
    /// and the nodes of `grid`.
    fn boundary_record(
        &self,
        source_idx: usize,
        tags: &[BoundaryTag],
        mesh: &TetMesh,
        grid: TimeGrid,
    ) -> Result<BoundaryRecord> {
        let record = self.records.get(source_idx).ok_or_else(|| {
            Error::mismatch(format!("no generated data for source {source_idx}"))
        })?;
        if (grid.t_final - self.grid.t_final).abs() > 1e-9 * self.grid.t_final {
            return Err(Error::mismatch(format!(
                "requested time window {} differs from the generated one {}",
                grid.t_final, self.grid.t_final
            )));
        }

        let mut vertices: Vec<usize> =
            tags.iter().flat_map(|&t| mesh.boundary_vertices(t)).collect();
        vertices.sort_unstable();
        vertices.dedup();
        let points: Vec<Vec3> = vertices.iter().map(|&v| mesh.vertices[v]).collect();
        let located = self.locate_on_boundary(tags, &points)?;

        let mut out = BoundaryRecord::zeros(grid, vertices);
        let n_src = self.grid.n_steps;
        for (m, row) in out.values.iter_mut().enumerate() {
            let t = grid.time(m);
            let pos = t / self.grid.dt;
            let j = (pos.floor() as usize).min(n_src);
            let frac = if j == n_src { 0.0 } else { pos - j as f64 };
            let lo = &record.values[j];
            let hi = &record.values[(j + 1).min(n_src)];
            for (k, (rows, w)) in located.iter().enumerate() {
                let mut value = [0.0; 3];
                for (i, &r) in rows.iter().enumerate() {
                    let blend = geo::add(
                        geo::scale(lo[r], 1.0 - frac),
                        geo::scale(hi[r], frac),
                    );
                    value = geo::add(value, geo::scale(blend, w[i]));
                }
                row[k] = value;
            }
        }
        Ok(out)
    }
}

/// `||eps_true - eps_rec|| / ||eps_rec||` in the lumped product, both fields
/// on the mesh behind `ops`.
pub fn relative_error(
    ops: &DiscreteOperators,
    eps_true: &[f64],
    eps_rec: &[f64],
) -> Result<f64> {
    ops.check_field(eps_true)?;
    ops.check_field(eps_rec)?;
    let diff: Vec<f64> = eps_true.iter().zip(eps_rec).map(|(a, b)| a - b).collect();
    let denom = lumped_norm(ops, eps_rec);
    if denom == 0.0 {
        return Err(Error::mismatch("reconstruction has zero norm".to_string()));
    }
    Ok(lumped_norm(ops, &diff) / denom)
}

/// What `run_experiment` leaves on disk and in memory.
pub struct ExperimentArtifacts {
    pub out_dir: PathBuf,
    pub run: AdaptiveRun,
    /// Relative reconstruction error per level (phantom vs. reconstruction).
    pub errors: Vec<f64>,
    pub summary_path: PathBuf,
}

/// Runs the full pipeline described by `config`: generate, pollute, invert
/// adaptively, measure, and write phantom/data/reconstruction/indicator
/// artifacts plus a hashed manifest into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentArtifacts> {
    config.validate()?;
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut files: Vec<(String, String)> = Vec::new();

    let data = generate_data(config)?;
    let noisy = data.with_noise(config.noise.sigma, config.noise.seed);

    // Input-side artifacts.
    let config_path = out_dir.join("config.toml");
    config.save(&config_path)?;
    files.push(manifest_entry(&out_dir, &config_path)?);

    let phantom_path = out_dir.join("phantom.vtk");
    write_vtk(
        &phantom_path,
        "true coefficient on the generation mesh",
        &data.mesh,
        &[],
        &[("eps_true", &data.truth.values)],
    )?;
    files.push(manifest_entry(&out_dir, &phantom_path)?);

    for (i, (clean, polluted)) in data.records.iter().zip(&noisy.records).enumerate() {
        let clean_path = out_dir.join(format!("observations_clean_{i}.csv"));
        report::write_observations_csv(&clean_path, clean)?;
        files.push(manifest_entry(&out_dir, &clean_path)?);
        let noisy_path = out_dir.join(format!("observations_noisy_{i}.csv"));
        report::write_observations_csv(&noisy_path, polluted)?;
        files.push(manifest_entry(&out_dir, &noisy_path)?);
    }

    // The reconstruction itself.
    let params = TikhonovParams::new(
        config.model.alpha,
        config.model.delta_fraction * config.time.t_final,
        config.time.t_final,
    )?;
    let inputs = AdaptiveInputs {
        mesh0: &data.inversion_mesh,
        t_final: config.time.t_final,
        s: config.model.s,
        bc: config.model.bc,
        sources: config.source_channels()?,
        params,
        eps_max: config.model.eps_max,
        data: &noisy,
        cg: config.cg,
        adaptive: config.adaptive,
    };
    let run = run_adaptive(&inputs)?;

    // Per-level measurements against the analytic phantom, and exports.
    let mut errors = Vec::with_capacity(run.records.len());
    for k in 0..run.records.len() {
        let mesh = &run.meshes[k];
        let ops = DiscreteOperators::assemble(mesh, config.model.s)?;
        let admissible = AdmissibleSet::new(mesh, config.model.eps_max)?;
        let truth_k = synthesize_phantom(&config.phantom, mesh, &admissible)?;
        errors.push(relative_error(&ops, &truth_k.values, &run.eps_per_level[k])?);

        let level_path = out_dir.join(format!("level_{k}.vtk"));
        write_vtk(
            &level_path,
            "reconstruction and indicators",
            mesh,
            &[
                (run.indicators[k].kind.as_str(), &run.indicators[k].values),
                ("eta", &run.etas[k].values),
            ],
            &[("eps", &run.eps_per_level[k]), ("eps_true", &truth_k.values)],
        )?;
        files.push(manifest_entry(&out_dir, &level_path)?);
    }

    let history_path = out_dir.join("history.csv");
    let histories: Vec<(usize, &[crate::optimizer::CgRecord])> = run
        .histories
        .iter()
        .enumerate()
        .map(|(k, h)| (k, h.as_slice()))
        .collect();
    report::write_history_csv(&history_path, &histories)?;
    files.push(manifest_entry(&out_dir, &history_path)?);

    let summary_path = out_dir.join("summary.csv");
    report::write_summary_csv(&summary_path, &run, Some(&errors))?;
    files.push(manifest_entry(&out_dir, &summary_path)?);

    let meta = vec![
        ("config_hash".to_string(), config.hash()?),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("noise_model".to_string(), NOISE_MODEL.to_string()),
        ("noise_sigma".to_string(), format!("{}", config.noise.sigma)),
        ("noise_seed".to_string(), format!("{}", config.noise.seed)),
        ("data_same_mesh".to_string(), format!("{}", config.data.same_mesh)),
    ];
    report::write_manifest(&out_dir.join("manifest.txt"), &meta, &files)?;

    Ok(ExperimentArtifacts { out_dir, run, errors, summary_path })
}

fn manifest_entry(out_dir: &Path, path: &Path) -> Result<(String, String)> {
    let rel = path
        .strip_prefix(out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned();
    Ok((rel, report::sha256_file(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GeometryConfig, SourceConfig, TimeConfig};
    use crate::phantom::{PhantomKind, PhantomSpec};

    /// A configuration small enough for unit tests: 4^3 cubes, a short time
    /// window, and a coarse pulse.
    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.geometry = GeometryConfig {
            outer_min: [-0.5; 3],
            outer_max: [0.5; 3],
            inner_min: [-0.25; 3],
            inner_max: [0.25; 3],
            h0: 0.25,
        };
        config.time = TimeConfig { t_final: 1.0, n_steps: None };
        config.model.eps_max = 3.0;
        config.sources = vec![SourceConfig {
            omega: 6.0,
            observe: vec![BoundaryTag::Front, BoundaryTag::Back],
            ..SourceConfig::default()
        }];
        config
    }

    #[test]
    fn relative_error_examples() {
        let config = tiny_config();
        let mesh = build_uniform_mesh(
            config.geometry.outer().unwrap(),
            config.geometry.inner().unwrap(),
            0.25,
        )
        .unwrap();
        let ops = DiscreteOperators::assemble(&mesh, 1.0).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        let twos = vec![2.0; mesh.n_vertices()];
        assert_eq!(relative_error(&ops, &ones, &ones).unwrap(), 0.0);
        assert!((relative_error(&ops, &twos, &ones).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noise_is_bounded_seeded_and_off_at_zero() {
        let config = tiny_config();
        let data = generate_data(&config).unwrap();
        let record = &data.records[0];
        let clean = add_noise(record, 0.0, 11);
        assert_eq!(clean.values, record.values);

        let a = add_noise(record, 0.1, 11);
        let b = add_noise(record, 0.1, 11);
        assert_eq!(a.values, b.values);
        let c = add_noise(record, 0.1, 12);
        assert_ne!(a.values, c.values);

        let bound = 0.1 * record.max_abs();
        assert!(bound > 0.0);
        let mut moved = false;
        for (row_a, row_r) in a.values.iter().zip(&record.values) {
            for (va, vr) in row_a.iter().zip(row_r) {
                for c in 0..3 {
                    let d = (va[c] - vr[c]).abs();
                    assert!(d <= bound * (1.0 + 1e-12));
                    moved |= d > 0.0;
                }
            }
        }
        assert!(moved);
    }

    #[test]
    fn noise_perturbation_mean_is_small() {
        let config = tiny_config();
        let data = generate_data(&config).unwrap();
        let record = &data.records[0];
        let noisy = add_noise(record, 0.1, 42);
        let mut sum = 0.0;
        let mut n = 0usize;
        for (row_a, row_r) in noisy.values.iter().zip(&record.values) {
            for (va, vr) in row_a.iter().zip(row_r) {
                for c in 0..3 {
                    sum += va[c] - vr[c];
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let amp = 0.1 * record.max_abs();
        // Standard error of a U[-amp, amp] mean is amp / sqrt(3 n).
        let se = amp / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} exceeds 3 se {se}");
    }

    #[test]
    fn same_mesh_resampling_is_exact() {
        let mut config = tiny_config();
        config.data.same_mesh = true;
        config.phantom = PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![crate::phantom::Gaussian {
                center: [0.0; 3],
                amplitude: 0.8,
            }],
            spheres: Vec::new(),
        };
        let data = generate_data(&config).unwrap();
        assert_eq!(data.mesh.n_tets(), data.inversion_mesh.n_tets());

        let record = data
            .boundary_record(
                0,
                &[BoundaryTag::Front, BoundaryTag::Back],
                &data.inversion_mesh,
                data.inversion_grid,
            )
            .unwrap();
        // Every resampled value must equal the stored trace at the same
        // vertex and node.
        for (m, row) in record.values.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let row_src = data.row_of_vertex[record.vertices[k]].unwrap();
                let expected = data.records[0].values[m][row_src];
                for c in 0..3 {
                    assert!(
                        (v[c] - expected[c]).abs() <= 1e-12 * expected[c].abs().max(1.0),
                        "node {m} vertex {k} component {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn refined_generation_differs_from_same_mesh() {
        let mut config = tiny_config();
        config.phantom = PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![crate::phantom::Gaussian {
                center: [0.0; 3],
                amplitude: 1.0,
            }],
            spheres: Vec::new(),
        };
        let fine = generate_data(&config).unwrap();
        config.data.same_mesh = true;
        let same = generate_data(&config).unwrap();
        assert_eq!(2 * same.grid.n_steps, fine.grid.n_steps);

        let tags = [BoundaryTag::Back];
        let grid = same.inversion_grid;
        let from_fine = fine
            .boundary_record(0, &tags, &same.inversion_mesh, grid)
            .unwrap();
        let from_same = same
            .boundary_record(0, &tags, &same.inversion_mesh, grid)
            .unwrap();
        let mut gap = 0.0f64;
        for (ra, rb) in from_fine.values.iter().zip(&from_same.values) {
            for (va, vb) in ra.iter().zip(rb) {
                for c in 0..3 {
                    gap = gap.max((va[c] - vb[c]).abs());
                }
            }
        }
        assert!(gap > 1e-8, "inverse-crime gap should be measurable, got {gap}");
    }

    #[test]
    fn trivial_experiment_writes_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.data.same_mesh = true;
        config.adaptive.theta1 = f64::INFINITY;
        config.cg.max_iter = 1;
        config.output_dir = dir.path().join("run").to_string_lossy().into_owned();

        let artifacts = run_experiment(&config).unwrap();
        assert_eq!(artifacts.run.k_rec, 0);
        // Stationary data: the reconstruction stays at the background and
        // matches the phantom exactly.
        assert!(artifacts.errors[0] < 1e-12);

        let summary = std::fs::read_to_string(&artifacts.summary_path).unwrap();
        assert!(summary.lines().count() >= 2);
        assert!(summary.starts_with("level,"));

        // Manifest covers every artifact and the hashes match the files.
        let manifest =
            std::fs::read_to_string(artifacts.out_dir.join("manifest.txt")).unwrap();
        let mut listed = 0;
        for line in manifest.lines() {
            if let Some(rest) = line.strip_prefix("file = ") {
                let (hash, rel) = rest.split_once("  ").unwrap();
                let recomputed =
                    report::sha256_file(&artifacts.out_dir.join(rel)).unwrap();
                assert_eq!(hash, recomputed, "{rel}");
                listed += 1;
            }
        }
        assert!(listed >= 6, "expected several artifacts, found {listed}");
        assert!(manifest.contains(&format!("config_hash = {}", config.hash().unwrap())));
    }
}
