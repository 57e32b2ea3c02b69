use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nnlrs::config::{split_overrides, Settings};
use nnlrs::embedding::solve_ef;
use nnlrs::experiment::{beta_sweep, build_graph, run_experiment, ResultTable};
use nnlrs::graph::{normalize_samples, postprocess_coefficients, symmetrize};
use nnlrs::io::{
    load_matrix, matrix_header, save_graph, save_matrix, save_projection, Orientation,
};
use nnlrs::selftest::operator_examples;
use nnlrs::synth::make_subspaces;
use nnlrs::{Matrix, Result};

const OVERRIDE_HELP: &str = "\
Every setting can also be given as --<section>.<key> <value>, for example
--solver.beta 0.5, --embedding.reduced_dim=20 or --experiment.trials 10.
Without --data the synthetic generator configured under [synth] is used.";

#[derive(Parser)]
#[command(name = "nnlrs", version, about = "NNLRS affinity graphs and label propagation", after_help = OVERRIDE_HELP)]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data matrix (comma separated).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// One class label per line.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Data file lines are samples rather than features.
    #[arg(long, global = true)]
    rows_are_samples: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Affinity graph construction.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Semi-supervised classification experiments.
    #[command(subcommand)]
    Ssl(SslCommand),
    /// Joint embedding and graph learning.
    #[command(subcommand)]
    Ef(EfCommand),
    /// Parameter sweeps.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Built-in checks.
    #[command(subcommand)]
    Selftest(SelftestCommand),
    /// Synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build a graph with the configured method and write it.
    Build {
        #[arg(long)]
        out: PathBuf,
        /// nnlrs, nnlrs-ef, pca+nnlrs or knn.
        #[arg(long)]
        method: Option<String>,
    },
}

#[derive(Subcommand)]
enum SslCommand {
    /// Run random trials and write results.csv and results.txt.
    Run {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        method: Option<String>,
        /// ghf or lgc.
        #[arg(long)]
        propagation: Option<String>,
    },
}

#[derive(Subcommand)]
enum EfCommand {
    /// Learn the projection and write it; optionally write the graph too.
    Run {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        graph_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Repeat the experiment for each sparsity weight.
    Beta {
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,100")]
        betas: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SelftestCommand {
    /// Check the thresholding operators against worked examples.
    Ops,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write data.csv and labels.csv for the configured union of subspaces.
    Make {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, mut overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            overrides.push((key.to_string(), v));
        }
    };
    flag(
        "data.matrix",
        cli.data.as_ref().map(|p| p.display().to_string()),
    );
    flag(
        "data.labels",
        cli.labels.as_ref().map(|p| p.display().to_string()),
    );
    if cli.rows_are_samples {
        flag("data.rows_are_samples", Some("true".into()));
    }
    match &cli.command {
        Command::Graph(GraphCommand::Build { method, .. }) => {
            flag("experiment.method", method.clone())
        }
        Command::Ssl(SslCommand::Run {
            method,
            propagation,
            ..
        }) => {
            flag("experiment.method", method.clone());
            flag("experiment.propagation", propagation.clone());
        }
        _ => {}
    }

    match run(&cli, &overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<ExitCode> {
    let settings = Settings::load(cli.config.as_deref(), overrides)?;
    match &cli.command {
        Command::Selftest(SelftestCommand::Ops) => {
            let checks = operator_examples();
            for c in &checks {
                println!(
                    "{}  {}  ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!(
                "{} of {} examples passed",
                checks.len() - failed,
                checks.len()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Synth(SynthCommand::Make { out_dir }) => {
            let set = make_subspaces(&settings.synth)?;
            fs::create_dir_all(out_dir)?;
            let s = &settings.synth;
            let x = &set.dataset.x;
            let info = format!(
                "synthetic seed={} ambient_dim={} subspace_dim={} subspaces={} per_class={} noise={} corruption={} rng=chacha8",
                s.seed, s.ambient_dim, s.subspace_dim, s.subspaces, s.per_class, s.noise, s.corruption
            );
            save_matrix(
                &out_dir.join("data.csv"),
                x,
                &[matrix_header(x.nrows(), x.ncols()), info.clone()],
            )?;
            write_column(&out_dir.join("labels.csv"), &info, &set.dataset.labels)?;
            write_column(&out_dir.join("corrupted.csv"), &info, &set.corrupted)?;
            println!("wrote {} samples to {}", x.ncols(), out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Graph(GraphCommand::Build { out, .. }) => {
            let x = data_matrix(&settings)?;
            let spec = settings.experiment_spec();
            let graph = build_graph(&x, &spec)?;
            let mut extra = source_headers(&settings);
            extra.push(format!(
                "method={} converged={}",
                spec.method, graph.converged
            ));
            save_graph(out, &graph, &extra)?;
            println!(
                "{} graph: {} nodes, {} edges{}",
                spec.method,
                graph.node_count(),
                graph.edge_count(),
                if graph.converged {
                    ""
                } else {
                    " (solver hit its iteration cap)"
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Ef(EfCommand::Run { out, graph_out }) => {
            let x = normalize_samples(&data_matrix(&settings)?).x;
            let spec = settings.experiment_spec();
            let ef = solve_ef(&x, &spec.ef_config())?;
            let mut extra = source_headers(&settings);
            extra.push(format!(
                "nnlrs-ef reduced_dim={} gamma={} outer_iterations={} converged={}",
                spec.embedding.reduced_dim, spec.embedding.gamma, ef.outer_iterations, ef.converged
            ));
            save_projection(out, &ef.p_star, &extra)?;
            if let Some(path) = graph_out {
                let graph = symmetrize(&postprocess_coefficients(&ef.z_star, spec.theta))?;
                save_graph(path, &graph, &extra)?;
            }
            println!(
                "outer iterations {}, converged {}, objective {}",
                ef.outer_iterations,
                ef.converged,
                ef.objective_history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Ssl(SslCommand::Run { out_dir, .. }) => {
            let ds = settings.dataset()?;
            let table = run_experiment(&ds, &settings.experiment_spec())?;
            write_results(&table, out_dir)
        }
        Command::Sweep(SweepCommand::Beta { betas, out_dir }) => {
            let ds = settings.dataset()?;
            let table = beta_sweep(&ds, &settings.experiment_spec(), betas)?;
            write_results(&table, out_dir)
        }
    }
}

fn write_column(path: &Path, header: &str, values: &[usize]) -> Result<()> {
    let mut text = format!("# {header}\n");
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn data_matrix(settings: &Settings) -> Result<Matrix> {
    match &settings.data.matrix {
        Some(path) => {
            let orientation = if settings.data.rows_are_samples {
                Orientation::RowsAreSamples
            } else {
                Orientation::RowsAreFeatures
            };
            load_matrix(path, orientation)
        }
        None => Ok(make_subspaces(&settings.synth)?.dataset.x),
    }
}

fn source_headers(settings: &Settings) -> Vec<String> {
    let source = match &settings.data.matrix {
        Some(p) => format!("source={}", p.display()),
        None => format!("source=synthetic synth_seed={}", settings.synth.seed),
    };
    vec![format!(
        "{source} seed={} rng=chacha8",
        settings.experiment.seed
    )]
}

fn write_results(table: &ResultTable, out_dir: &Path) -> Result<ExitCode> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), table.to_csv())?;
    let text = table.to_text();
    fs::write(out_dir.join("results.txt"), &text)?;
    print!("{text}");
    if table.excessive_failures() {
        eprintln!(
            "error: {} of {} trial runs failed",
            table.failure_count(),
            table.run_count()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
