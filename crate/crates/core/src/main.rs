use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfl_core::diffusion::{DiffusionSystem, InfectionState};
use dfl_core::sim::{
    assign_roles, benchmark, build_graph, correlation_experiment, default_policies, run_experiment, write_benchmark,
    write_correlation, write_csv, write_run, ExperimentConfig, DEFAULT_RATIOS, DEFAULT_SWEEP, DEFAULT_TOPOLOGIES,
    SCHEMA,
};
use dfl_core::topology::{
    build_mixing_matrix, gen_grid, gen_random_regular, gen_scale_free, place_defense_random_regular,
    place_defense_scale_free, Graph, GraphKind,
};
use dfl_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dfl", version, about = "Decentralized federated learning backdoor and defense lab")]
struct Cli {
    /// Print the annotated configuration schema and exit.
    #[arg(long)]
    print_schema: bool,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV/JSONL outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print per-round means.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare aggregation policies across topologies and malicious ratios.
    Benchmark {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Inspect a graph file or generator spec (`scale_free:N:M`,
    /// `random_regular:N:D`, `grid:R:C`).
    Topology {
        graph: String,
        /// Run defense placement and print the defense set and coverage.
        #[arg(long)]
        place: bool,
        /// Defense budget for `--place`.
        #[arg(long, default_value_t = 4)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Per-node diffusion bound and simulated intensity at round `t`.
    DiffusionBound {
        config: PathBuf,
        #[arg(long)]
        t: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Correlate the diffusion bound with per-node ASR across a b_f sweep.
    Correlate {
        config: PathBuf,
        /// Comma-separated b_f values.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
}

/// Failures that are the caller's fault exit with 2.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path, common: &Common) -> Result<ExperimentConfig, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", path.display())));
    }
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_graph(spec: &str, seed: u64) -> Result<Graph, Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(e.to_string()))?;
        return Ok(text.parse::<Graph>()?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Vec<usize> = parts[1..].iter().filter_map(|p| p.parse().ok()).collect();
    let bad = || Failure::Usage(format!("unknown graph `{spec}`; use a file or scale_free:N:M, random_regular:N:D, grid:R:C"));
    if nums.len() != 2 || parts.len() != 3 {
        return Err(bad());
    }
    Ok(match parts[0] {
        "scale_free" => gen_scale_free(nums[0], nums[1], seed)?,
        "random_regular" => gen_random_regular(nums[0], nums[1], seed)?,
        "grid" => gen_grid(nums[0], nums[1])?,
        _ => return Err(bad()),
    })
}

#[derive(Serialize)]
struct BoundRow {
    node_id: usize,
    distance_to_nearest_source: Option<usize>,
    bound_t: Option<f64>,
    simulated_s_t: f64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.print_schema {
        print!("{SCHEMA}");
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage(
            "missing subcommand; expected one of simulate, benchmark, topology, diffusion-bound, correlate".into(),
        ));
    };
    match command {
        Command::Simulate { config, common } => {
            let cfg = load_config(&config, &common)?;
            let result = run_experiment(&cfg)?;
            println!("{:>5}  {:>8}  {:>8}  {:>8}", "round", "acc", "asr", "rho_err");
            for r in &result.records {
                let rho = r.error_radius.map_or("-".to_string(), |e| format!("{:.4}", e.rho_err));
                println!("{:>5}  {:>8.4}  {:>8.4}  {:>8}", r.round, r.mean_acc, r.mean_asr, rho);
            }
            println!("final acc {:.4} asr {:.4}", result.summary.final_acc, result.summary.final_asr);
            if let Some(dir) = common.out {
                write_run(&dir, &result)?;
            }
        }
        Command::Benchmark { config, common } => {
            let cfg = load_config(&config, &common)?;
            let report = benchmark(&cfg, &default_policies(), &DEFAULT_TOPOLOGIES, &DEFAULT_RATIOS, cfg.trials)?;
            print!("{}", report.to_table());
            if let Some(dir) = common.out {
                write_benchmark(&dir, &report)?;
            }
        }
        Command::Topology { graph, place, budget, seed } => {
            let g = parse_graph(&graph, seed)?;
            let degrees: Vec<usize> = (0..g.n()).map(|v| g.degree(v)).collect();
            println!("nodes {} edges {} connected {}", g.n(), g.edge_count(), g.is_connected());
            println!("degree min {} max {}", degrees.iter().min().unwrap_or(&0), degrees.iter().max().unwrap_or(&0));
            if place {
                if budget > g.n() {
                    return Err(Failure::Usage(format!("budget {budget} exceeds {} nodes", g.n())));
                }
                let p = match g.kind() {
                    GraphKind::ScaleFree => place_defense_scale_free(&g, budget, budget.max(8), 2, 0.5),
                    _ => place_defense_random_regular(&g, budget),
                };
                let ids: Vec<String> = p.defense_set.iter().map(|v| v.to_string()).collect();
                println!("defense set {}", ids.join(" "));
                println!("coverage {:.4}", p.coverage_fraction(g.n()));
                if p.under_budget {
                    println!("placement stopped under budget");
                }
            }
        }
        Command::DiffusionBound { config, t, common } => {
            let cfg = load_config(&config, &common)?;
            let g = build_graph(&cfg, cfg.seed)?;
            let roles = assign_roles(&g, &cfg, cfg.seed)?;
            let system = DiffusionSystem::from_roles(
                &build_mixing_matrix(&g),
                &roles.malicious,
                cfg.diffusion.lambda,
                cfg.diffusion.injection,
            )?;
            let bound = system.bound_profile(t)?;
            let mut state = InfectionState::zero(g.n());
            for _ in 0..t {
                state = system.step(&state)?;
            }
            let dists: Vec<Vec<Option<usize>>> = roles.malicious.iter().map(|&s| g.bfs_distances(s)).collect();
            let rows: Vec<BoundRow> = (0..g.n())
                .map(|i| BoundRow {
                    node_id: i,
                    distance_to_nearest_source: dists.iter().filter_map(|d| d[i]).min(),
                    bound_t: bound[i],
                    simulated_s_t: state.s[i],
                })
                .collect();
            match common.out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                    write_csv(&dir.join("diffusion_bound.csv"), &rows)?;
                }
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r).map_err(|e| Failure::Runtime(e.to_string()))?;
                    }
                    w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
                }
            }
        }
        Command::Correlate { config, sweep, common } => {
            let cfg = load_config(&config, &common)?;
            let sweep = sweep.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
            let report = correlation_experiment(&cfg, &sweep, cfg.trials)?;
            println!("{:>6}  {:>5}  {:>8}  {:>8}", "b_f", "trial", "tau", "asr");
            for r in &report.runs {
                println!("{:>6}  {:>5}  {:>8.4}  {:>8.4}", r.b_f, r.trial, r.tau, r.mean_asr);
            }
            println!("mean kendall tau {:.4}", report.mean_tau);
            if let Some(dir) = common.out {
                write_correlation(&dir, &report)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
