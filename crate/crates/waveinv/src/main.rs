//! Command-line harness: generate synthetic data, run the adaptive
//! reconstruction, check the adjoint gradient against finite differences,
//! or pretty-print a finished run's summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use waveinv::adaptivity::AdaptiveVariant;
use waveinv::config::ExperimentConfig;
use waveinv::error::Result;
use waveinv::experiment::{self, generate_data, run_experiment};
use waveinv::grid::TimeGrid;
use waveinv::mesh::build_uniform_mesh;
use waveinv::objective::{AdmissibleSet, InverseProblem, SourceChannel, TikhonovParams};
use waveinv::operators::DiscreteOperators;
use waveinv::report::{sha256_file, write_manifest, write_observations_csv};
use waveinv::vtk::write_vtk;
use waveinv::wave::solve_direct;

#[derive(Parser)]
#[command(
    name = "waveinv",
    version,
    about = "Reconstructs a spatially varying dielectric permittivity from \
             time-domain boundary observations of electric-field waves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the phantom and synthetic boundary observations
    Generate(RunArgs),
    /// Run the adaptive reconstruction end to end
    Invert(RunArgs),
    /// Compare the adjoint gradient against central finite differences
    Gradcheck(GradcheckArgs),
    /// Print the per-level summary of a finished run
    Report {
        /// Directory holding a run's artifacts
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured noise seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the marking variant (first | second)
    #[arg(long)]
    variant: Option<AdaptiveVariant>,
    /// Use the reference mesh size h0 = 0.05
    #[arg(long)]
    fine_scale: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.output_dir = out.to_string_lossy().into_owned();
        }
        if let Some(seed) = self.seed {
            config.noise.seed = seed;
        }
        if let Some(variant) = self.variant {
            config.adaptive.variant = variant;
        }
        if self.fine_scale {
            config.apply_fine_scale();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random interior directions to test
    #[arg(long, default_value_t = 5)]
    directions: usize,
    /// Seed for the random coefficient and directions
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative-error threshold per direction
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Invert(args) => invert(&args),
        Command::Gradcheck(args) => gradcheck(&args),
        Command::Report { out } => report(&out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn generate(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;

    let data = generate_data(&config)?;
    let noisy = data.with_noise(config.noise.sigma, config.noise.seed);
    let mut files = Vec::new();

    let config_path = out_dir.join("config.toml");
    config.save(&config_path)?;
    files.push(("config.toml".to_string(), sha256_file(&config_path)?));

    let phantom_path = out_dir.join("phantom.vtk");
    write_vtk(
        &phantom_path,
        "true coefficient on the generation mesh",
        &data.mesh,
        &[],
        &[("eps_true", &data.truth.values)],
    )?;
    files.push(("phantom.vtk".to_string(), sha256_file(&phantom_path)?));

    for (i, (clean, polluted)) in data.records.iter().zip(&noisy.records).enumerate() {
        for (record, name) in [
            (clean, format!("observations_clean_{i}.csv")),
            (polluted, format!("observations_noisy_{i}.csv")),
        ] {
            let path = out_dir.join(&name);
            write_observations_csv(&path, record)?;
            files.push((name, sha256_file(&path)?));
        }
    }

    let meta = vec![
        ("config_hash".to_string(), config.hash()?),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("noise_model".to_string(), experiment::NOISE_MODEL.to_string()),
        ("noise_sigma".to_string(), format!("{}", config.noise.sigma)),
        ("noise_seed".to_string(), format!("{}", config.noise.seed)),
    ];
    write_manifest(&out_dir.join("manifest.txt"), &meta, &files)?;

    println!(
        "generated {} source record(s) on a {}-tet mesh, {} time steps -> {}",
        data.records.len(),
        data.mesh.n_tets(),
        data.grid.n_steps,
        out_dir.display()
    );
    Ok(())
}

fn invert(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let artifacts = run_experiment(&config)?;
    println!(
        "finished after {} level(s), stop reason: {}",
        artifacts.run.records.len(),
        artifacts.run.stop_reason.as_str()
    );
    print_summary(&artifacts.summary_path)
}

fn report(out: &PathBuf) -> Result<()> {
    print_summary(&out.join("summary.csv"))
}

fn print_summary(path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split(',').map(|c| c.to_string()).collect())
        .collect();
    if rows.is_empty() {
        println!("(empty summary)");
        return Ok(());
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.len())).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>width$}", width = widths[c]))
            .collect();
        println!("{}", line.join("  "));
    }
    Ok(())
}

/// Builds a small random-admissible instance on the configured geometry at
/// its coarsest useful size and compares the adjoint gradient with central
/// finite differences along random interior directions.
fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut config = ExperimentConfig::default();
    // A one-cube-per-axis-scaled desk box keeps this instant.
    config.geometry.outer_min = [-0.5; 3];
    config.geometry.outer_max = [0.5; 3];
    config.geometry.inner_min = [-0.25; 3];
    config.geometry.inner_max = [0.25; 3];
    config.geometry.h0 = 0.5;
    config.model.eps_max = 2.0;

    let mesh = build_uniform_mesh(
        config.geometry.outer()?,
        config.geometry.inner()?,
        config.geometry.h0,
    )?;
    let ops = DiscreteOperators::assemble(&mesh, config.model.s)?;
    let admissible = AdmissibleSet::new(&mesh, config.model.eps_max)?;
    let n_steps = 8;
    let dt = waveinv::grid::cfl_max_dt(&mesh, config.model.eps_max);
    let grid = TimeGrid::new(n_steps as f64 * dt, n_steps)?;
    let t_final = grid.t_final;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut eps = vec![1.0; mesh.n_vertices()];
    for (i, value) in eps.iter_mut().enumerate() {
        if !admissible.frozen[i] {
            *value = 1.0 + (config.model.eps_max - 1.0) * rng.gen::<f64>();
        }
    }

    let source = waveinv::wave::SourceSpec::new(
        waveinv::mesh::BoundaryTag::Front,
        4.0,
        1.0,
        1,
    )?;
    let observe = vec![waveinv::mesh::BoundaryTag::Front, waveinv::mesh::BoundaryTag::Back];
    let eps_star: Vec<f64> = eps.iter().map(|&v| (v * 1.1).min(config.model.eps_max)).collect();
    let truth = solve_direct(
        &ops,
        &eps_star,
        &grid,
        &source,
        waveinv::wave::BcMode::Neumann,
        &observe,
        false,
    )?;
    let channel = SourceChannel { source, observe, data: truth.observation };
    let problem = InverseProblem::new(
        &ops,
        grid,
        waveinv::wave::BcMode::Neumann,
        vec![channel],
        TikhonovParams::new(config.model.alpha, 0.1 * t_final, t_final)?,
        vec![1.0; mesh.n_vertices()],
        admissible,
    )?;

    let eval = problem.value_and_gradient(&eps)?;
    let mut worst: f64 = 0.0;
    for k in 0..args.directions {
        let mut dir = vec![0.0; mesh.n_vertices()];
        for (i, d) in dir.iter_mut().enumerate() {
            if !problem.admissible.frozen[i] {
                *d = 2.0 * rng.gen::<f64>() - 1.0;
            }
        }
        let fd = problem.directional_fd(&eps, &dir, 1e-5)?;
        let adjoint = problem.directional_gradient(&eval.gradient, &dir);
        let rel = (fd - adjoint).abs() / fd.abs().max(adjoint.abs()).max(1e-300);
        worst = worst.max(rel);
        println!(
            "direction {k}: finite-difference {fd:+.9e}  adjoint {adjoint:+.9e}  rel {rel:.3e}"
        );
    }
    if worst <= args.tol {
        println!("gradcheck PASS (worst relative error {worst:.3e} <= {:.1e})", args.tol);
        Ok(())
    } else {
        Err(waveinv::error::Error::mismatch(format!(
            "gradcheck FAIL: worst relative error {worst:.3e} exceeds {:.1e}",
            args.tol
        )))
    }
}
