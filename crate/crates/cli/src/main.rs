//! `navem`: command-line driver for mesh generation, dataset building,
//! training, solving, convergence studies, and report emission.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use navem_core::geometry::families::{
    generate_mesh, HtmParams, MeshFamily, RdqmParams, VmParams,
};
use navem_core::io::{
    hash_file, load_basis, load_dataset, load_mesh, load_model, save_dataset, save_mesh,
    save_model, ModelMetadata,
};
use navem_core::network::{Mlp, PredictorPair};
use navem_core::problems::{test1, test2, test3, ProblemSpec};
use navem_core::solver::{
    interface_jump, navem_errors, solve_navem, solve_navem_newton, BasisMode, ModelSet,
    SolverContext,
};
use navem_core::study::{emit_report, run_convergence_study, study_csv, SolveMode};
use navem_core::training::{
    build_htm_datasets, build_rdqm_dataset, build_vm_datasets, train_phi_net, train_q_net,
    AdamConfig, Dataset, LbfgsConfig, TrainConfig, TrainingVariant,
};
use navem_core::vem::{solve_vem, solve_vem_newton, vem_errors};
use navem_core::{Error, Result};

#[derive(Parser)]
#[command(name = "navem", version, about = "Lowest-order NAVEM and VEM on polygonal meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh file from one of the three families.
    GenMesh(GenMeshArgs),
    /// Print element statistics of a mesh file.
    Stats {
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Build training dataset files, one per polygon class.
    BuildDataset(BuildDatasetArgs),
    /// Train the trace and gradient networks of one class.
    Train(TrainArgs),
    /// Solve one problem on one mesh and print error norms.
    Solve(SolveArgs),
    /// Run a convergence study described by a config file.
    Study {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate study CSVs into a summary table and SVG plots.
    Report {
        #[arg(long)]
        outdir: PathBuf,
        /// Study CSV files written by `study`.
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct GenMeshArgs {
    /// rdqm, vm or htm.
    #[arg(long)]
    family: String,
    /// Grid resolution (rdqm, htm).
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Vertex offset fraction (rdqm).
    #[arg(long, default_value_t = 0.1)]
    distortion: f64,
    /// Seed count (vm).
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    /// Lloyd smoothing iterations (vm).
    #[arg(long, default_value_t = 0)]
    lloyd: usize,
    /// Probability that an edge receives hanging nodes (htm).
    #[arg(long, default_value_t = 0.5)]
    edge_probability: f64,
    /// Max hanging nodes per selected edge (htm).
    #[arg(long, default_value_t = 3)]
    max_hanging: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// rdqm, vm or htm.
    #[arg(long)]
    family: String,
    /// Quadrilaterals (rdqm), minimum samples per class (vm), or samples
    /// per configuration (htm).
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Voronoi seed counts to pool, comma separated (vm).
    #[arg(long, default_value = "25,100,400")]
    levels: String,
    #[arg(long, default_value_t = 0)]
    lloyd: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Basis artifact; defaults to rebuilding the standard basis.
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "40,40,40,40")]
    hidden: String,
    #[arg(long, default_value_t = 2000)]
    adam_epochs: usize,
    /// Minibatch size; omit for full batch.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    lbfgs_iters: usize,
    #[arg(long, default_value_t = 20)]
    lbfgs_memory: usize,
    #[arg(long, default_value_t = 1e-8)]
    regularization: f64,
    #[arg(long)]
    basis: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// test1, test2 or test3.
    #[arg(long)]
    problem: String,
    /// Nonlinear diffusion parameter (test3).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// vem, navem or navem-oracle.
    #[arg(long)]
    mode: String,
    /// Model files (navem mode); repeat per class.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Also report inter-element trace jumps (NAVEM modes).
    #[arg(long, default_value_t = false)]
    jumps: bool,
    /// Write the solution values, one per line.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    basis: Option<PathBuf>,
}

fn named<T>(what: &str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Format(format!("{what} {}: {e}", path.display())))
}

fn context_from(basis: &Option<PathBuf>) -> Result<SolverContext> {
    match basis {
        Some(p) => named("basis file", p, load_basis(p)),
        None => SolverContext::with_defaults(),
    }
}

fn family_from(args: &GenMeshArgs) -> Result<MeshFamily> {
    Ok(match args.family.as_str() {
        "rdqm" => MeshFamily::Rdqm(RdqmParams {
            n: args.n,
            distortion: args.distortion,
        }),
        "vm" => MeshFamily::Vm(VmParams {
            seeds: args.seeds,
            lloyd_iterations: args.lloyd,
        }),
        "htm" => MeshFamily::Htm(HtmParams {
            n: args.n,
            edge_probability: args.edge_probability,
            max_hanging: args.max_hanging,
        }),
        other => {
            return Err(Error::Format(format!(
                "unknown family {other:?}; expected rdqm, vm or htm"
            )))
        }
    })
}

fn gen_mesh(args: &GenMeshArgs) -> Result<()> {
    let mesh = generate_mesh(&family_from(args)?, args.seed)?;
    save_mesh(&args.out, &mesh)?;
    println!(
        "{}: {} vertices, {} elements, h = {:.4e}",
        args.out.display(),
        mesh.n_vertices(),
        mesh.n_elements(),
        mesh.h()
    );
    Ok(())
}

fn stats(path: &Path) -> Result<()> {
    let mesh = named("mesh file", path, load_mesh(path))?;
    let s = mesh.statistics()?;
    println!("elements          {}", s.elements);
    println!("vertices per cell {}..{}", s.nv.0, s.nv.1);
    for (name, m) in [("raw", &s.raw), ("inertially mapped", &s.mapped)] {
        println!("{name}:");
        println!("  area              {:.3e} .. {:.3e}", m.area.min, m.area.max);
        println!("  diameter          {:.3e} .. {:.3e}", m.diameter.min, m.diameter.max);
        println!(
            "  anisotropic ratio {:.3e} .. {:.3e}",
            m.anisotropic_ratio.min, m.anisotropic_ratio.max
        );
        println!(
            "  edge ratio        {:.3e} .. {:.3e}",
            m.edge_ratio.min, m.edge_ratio.max
        );
    }
    Ok(())
}

fn build_dataset(args: &BuildDatasetArgs) -> Result<()> {
    let ctx = context_from(&args.basis)?;
    let datasets: Vec<Dataset> = match args.family.as_str() {
        "rdqm" => vec![build_rdqm_dataset(
            args.count,
            args.seed,
            &ctx.shared,
            &ctx.base_phi,
        )?],
        "vm" => {
            let levels: Vec<usize> = args
                .levels
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("bad --levels list {:?}", args.levels)))?;
            build_vm_datasets(
                &levels,
                args.lloyd,
                args.count,
                args.seed,
                &ctx.shared,
                &ctx.base_phi,
            )?
        }
        "htm" => build_htm_datasets(args.count, args.seed, &ctx.shared, &ctx.base_phi)?,
        other => {
            return Err(Error::Format(format!(
                "unknown family {other:?}; expected rdqm, vm or htm"
            )))
        }
    };
    std::fs::create_dir_all(&args.outdir)?;
    for ds in &datasets {
        let path = args.outdir.join(format!("{}.txt", ds.class.label()));
        save_dataset(&path, ds)?;
        println!("{}: {} samples", path.display(), ds.samples.len());
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let ctx = context_from(&args.basis)?;
    let data = named("dataset file", &args.dataset, load_dataset(&args.dataset, &ctx))?;
    let input_dim = data.class.input_dim().ok_or_else(|| {
        Error::Format(format!(
            "class {} has a closed-form basis and takes no training",
            data.class.label()
        ))
    })?;
    let out_dim = ctx.shared.dim() + 3;
    let mut sizes = vec![input_dim];
    for w in args.hidden.split(',') {
        sizes.push(
            w.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad --hidden list {:?}", args.hidden)))?,
        );
    }
    sizes.push(out_dim);
    let cfg = TrainConfig {
        variant: TrainingVariant::TwoNetworks,
        adam: AdamConfig {
            learning_rate: args.learning_rate,
            epochs: args.adam_epochs,
            batch: args.batch,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            max_iters: args.lbfgs_iters,
            memory: args.lbfgs_memory,
            ..LbfgsConfig::default()
        },
        regularization: args.regularization,
        seed: args.seed,
    };
    let mut phi_net = Mlp::glorot(&sizes, args.seed)?;
    let phi_report = train_phi_net(&mut phi_net, &data, &cfg)?;
    println!(
        "phi net: final loss {:.4e} (sqrt {:.4e})",
        phi_report.final_loss,
        phi_report.final_loss.sqrt()
    );
    let (q_net, q_report) = train_q_net(&phi_net, &data, &cfg)?;
    println!(
        "q net:   final loss {:.4e} (sqrt {:.4e})",
        q_report.final_loss,
        q_report.final_loss.sqrt()
    );
    let meta = ModelMetadata {
        seed: args.seed,
        dataset_hash: hash_file(&args.dataset)?,
        phi_loss: phi_report.final_loss,
        q_loss: q_report.final_loss,
    };
    let pair = PredictorPair {
        class: data.class,
        phi_net,
        q_net,
    };
    save_model(&args.out, &pair, &meta)?;
    println!("{}: {} model written", args.out.display(), pair.class.label());
    Ok(())
}

fn problem_from(name: &str, lambda: f64) -> Result<ProblemSpec> {
    match name {
        "test1" => Ok(test1()),
        "test2" => Ok(test2()),
        "test3" => Ok(test3(lambda)),
        other => Err(Error::Format(format!(
            "unknown problem {other:?}; expected test1, test2 or test3"
        ))),
    }
}

fn solve(args: &SolveArgs) -> Result<()> {
    let mesh = named("mesh file", &args.mesh, load_mesh(&args.mesh))?;
    let problem = problem_from(&args.problem, args.lambda)?;
    let mode = SolveMode::parse(&args.mode)?;
    let nonlinear = problem.nonlinear.is_some();
    println!(
        "{}: {} vertices, {} elements, h = {:.4e}",
        args.mesh.display(),
        mesh.n_vertices(),
        mesh.n_elements(),
        mesh.h()
    );

    let mut models = ModelSet::new();
    let ctx;
    let (dofs, iters, basis_mode) = match mode {
        SolveMode::Vem => {
            if nonlinear {
                let sol = solve_vem_newton(&mesh, &problem)?;
                (sol.dofs, Some(sol.iterations), None)
            } else {
                (solve_vem(&mesh, &problem)?, None, None)
            }
        }
        SolveMode::NavemOracle | SolveMode::Navem => {
            ctx = context_from(&args.basis)?;
            let basis_mode = if mode == SolveMode::Navem {
                for p in &args.model {
                    let (pair, _) = named("model file", p, load_model(p))?;
                    models.insert(pair);
                }
                BasisMode::Network(&models)
            } else {
                BasisMode::Oracle
            };
            if nonlinear {
                let sol = solve_navem_newton(&mesh, &problem, basis_mode, &ctx, 100)?;
                (sol.dofs, Some(sol.iterations), Some((basis_mode, &ctx)))
            } else {
                (
                    solve_navem(&mesh, &problem, basis_mode, &ctx)?,
                    None,
                    Some((basis_mode, &ctx)),
                )
            }
        }
    };
    if let Some(n) = iters {
        println!("newton iterations {n}");
    }
    if problem.exact.is_some() {
        let (e0, e1) = match &basis_mode {
            Some((bm, ctx)) => navem_errors(&mesh, &dofs, &problem, *bm, ctx)?,
            None => vem_errors(&mesh, &dofs, &problem)?,
        };
        println!("L2 error {e0:.6e}");
        println!("H1 error {e1:.6e}");
    }
    if args.jumps {
        match &basis_mode {
            Some((bm, ctx)) => {
                let report = interface_jump(&mesh, &dofs, *bm, ctx)?;
                println!(
                    "trace jumps: {} interior edges, aggregate {:.4e}",
                    report.edges.len(),
                    report.aggregate
                );
            }
            None => println!("trace jumps: not defined for the conforming VEM baseline"),
        }
    }
    if let Some(out) = &args.out {
        let mut text = String::new();
        for v in dofs.iter() {
            text.push_str(&format!("{v:e}\n"));
        }
        std::fs::write(out, text)?;
        println!("{}: solution written", out.display());
    }
    Ok(())
}

fn study(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("config file {}: {e}", path.display())))?;
    let file = config::parse_study_file(&text)?;
    let ctx = match file.experiment.mode {
        SolveMode::Vem => None,
        _ => Some(context_from(&file.basis)?),
    };
    let result = run_convergence_study(&file.experiment, ctx.as_ref())?;
    std::fs::create_dir_all(&file.outdir)?;
    let csv = file.outdir.join(format!("{}.csv", result.label));
    std::fs::write(&csv, study_csv(&result))?;
    for r in &result.rows {
        println!(
            "h {:.4e}  L2 {:.4e}  H1 {:.4e}  dofs {}{}",
            r.h,
            r.err0,
            r.err1,
            r.dofs,
            match r.newton_iters {
                Some(n) => format!("  newton {n}"),
                None => String::new(),
            }
        );
    }
    println!("slopes: L2 {:.3}, H1 {:.3}", result.slope0, result.slope1);
    println!("{}: study written", csv.display());
    Ok(())
}

fn report(outdir: &Path, csvs: &[PathBuf]) -> Result<()> {
    let paths = emit_report(csvs, outdir)?;
    println!("{}: summary written", paths.summary.display());
    for p in &paths.plots {
        println!("{}: plot written", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenMesh(args) => gen_mesh(args),
        Command::Stats { mesh } => stats(mesh),
        Command::BuildDataset(args) => build_dataset(args),
        Command::Train(args) => train(args),
        Command::Solve(args) => solve(args),
        Command::Study { config } => study(config),
        Command::Report { outdir, csvs } => report(outdir, csvs),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
