use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oxyevo::harness::{
    finish, load_data, load_search, prepare, render_gene_map, run_ablation, run_experiment, search, sparsity_sweep,
    ExperimentConfig, RenderFormat, Report, Variant,
};
use oxyevo::simlake::gen_synthetic;
use oxyevo::{Error, Result};

#[derive(Parser)]
#[command(name = "oxyevo", version, about = "Evolved feature-interaction models for lake dissolved oxygen")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark to the output directory.
    Generate(Common),
    /// Assign lake types and write `types.csv`.
    Cluster(Common),
    /// Evolve populations and checkpoint the best model of each.
    Search(Common),
    /// Refine checkpointed models and write the report.
    Refine(Common),
    /// Search, refine and evaluate.
    Run(Common),
    /// Run every variant on the same data.
    Ablate(Common),
    /// Pruning-strength sweep against random selection.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated gRDA `c` values for the interaction gates.
        #[arg(long, value_delimiter = ',', default_value = "0.5,5,8,10,12,15,100")]
        c: Vec<f64>,
    },
    /// Re-emit a gene-map snapshot as CSV or as a PPM image.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "image")]
        format: String,
        #[arg(long)]
        output: PathBuf,
        /// Pixels per gene.
        #[arg(long, default_value_t = 16)]
        cell: usize,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.generator.seed = seed;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(v) = &c.variant {
        cfg.variant = Variant::parse(v)?;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &Report) {
    print!("{}", report.summary_csv());
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(c) => {
            let cfg = load_config(&c)?;
            gen_synthetic(&cfg.generator)?.write(&cfg.out)?;
            println!("wrote benchmark to {}", cfg.out.display());
        }
        Command::Cluster(c) => {
            let cfg = load_config(&c)?;
            let (_, lakes) = load_data(&cfg)?;
            let types = oxyevo::harness::cluster_lakes(&lakes, cfg.seed, cfg.cluster.max_iters)?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
            types.write_csv(&cfg.out.join("types.csv"))?;
            for (id, t) in &types.types {
                println!("{id}\t{t}");
            }
        }
        Command::Search(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            for run in 0..cfg.runs {
                let out = search(&prep, &cfg, run)?;
                println!("run {run}: {} iterations, events in {}", out.iterations, out.event_log.display());
            }
        }
        Command::Refine(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            let mut report = Report::new(cfg.variant);
            for run in 0..cfg.runs {
                let best = load_search(&prep, &cfg, run)?;
                report.cells.extend(finish(&prep, &cfg, run, best)?);
            }
            report.write(&cfg.out)?;
            print_report(&report);
        }
        Command::Run(c) => print_report(&run_experiment(&load_config(&c)?)?),
        Command::Ablate(c) => {
            for r in run_ablation(&load_config(&c)?)? {
                print_report(&r);
            }
        }
        Command::Sweep { common, c } => {
            let cfg = load_config(&common)?;
            let prep = prepare(&cfg)?;
            let points = sparsity_sweep(&prep, &cfg, &c)?;
            println!("wrote {} points to {}", points.len(), cfg.out.join("sweep.csv").display());
        }
        Command::Render {
            map,
            format,
            output,
            cell,
        } => render_gene_map(&map, &output, RenderFormat::parse(&format)?, cell)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
