use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fedshade::attack::write_traces;
use fedshade::harness::{
    cell_records, format_summary, read_csv, run_comparison, summarize, write_csv, ExperimentConfig,
};
use fedshade::privacy::Scheme;
use fedshade::synthdata::{generate_dataset, write_dataset_file, MapSpec};

#[derive(Parser)]
#[command(
    name = "fedshade",
    version,
    about = "Federated radio map learning with upload privacy defenses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData(GenData),
    /// Run the scheme comparison described by a config file.
    Run(Run),
    /// Print the per-scheme summary of a results file.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 56)]
    maps: usize,
    #[arg(long, default_value_t = 5)]
    tx_per_map: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    meters_per_cell: Option<f64>,
    #[arg(long)]
    n_buildings: Option<usize>,
    #[arg(long)]
    building_min: Option<usize>,
    #[arg(long)]
    building_max: Option<usize>,
    #[arg(long)]
    pl0_db: Option<f64>,
    #[arg(long)]
    path_exponent: Option<f64>,
    #[arg(long)]
    wall_loss_db: Option<f64>,
    #[arg(long)]
    max_pl_db: Option<f64>,
    #[arg(long)]
    reference_distance: Option<f64>,
}

#[derive(Args)]
struct Run {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_traces: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn gen_data(a: GenData) -> Result<()> {
    let mut spec = MapSpec::default();
    macro_rules! apply {
        ($($f:ident => $t:expr),*) => {
            $(if let Some(v) = a.$f { $t = v; })*
        };
    }
    apply!(
        height => spec.height,
        width => spec.width,
        meters_per_cell => spec.meters_per_cell,
        n_buildings => spec.n_buildings,
        building_min => spec.building_size_range.0,
        building_max => spec.building_size_range.1,
        pl0_db => spec.pl0_db,
        path_exponent => spec.path_exponent,
        wall_loss_db => spec.wall_loss_db,
        max_pl_db => spec.max_pl_db,
        reference_distance => spec.reference_distance
    );
    let samples = generate_dataset(a.seed, &spec, a.maps, a.tx_per_map)?;
    write_dataset_file(&a.out, &samples).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn trace_path(base: &Path, scheme: Scheme, seed: u64, single: bool) -> PathBuf {
    if single {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map_or_else(|| "traces".into(), |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{scheme}_{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{scheme}_{seed}"),
    };
    base.with_file_name(name)
}

/// Exit code 1 for configuration problems, 2 when some cells failed.
fn run(a: Run) -> Result<ExitCode> {
    let mut cfg = match ExperimentConfig::load(&a.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    if let Some(s) = a.schemes {
        cfg.run.schemes = s;
    }
    if let Some(s) = a.seeds {
        cfg.run.seeds = s;
    }
    if let Some(j) = a.jobs {
        cfg.run.jobs = j;
    }
    if let Some(o) = a.out {
        cfg.output.csv = o;
    }
    if a.dump_traces.is_some() {
        cfg.output.traces = a.dump_traces;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return Ok(ExitCode::from(1));
    }

    let cells = run_comparison(&cfg, cfg.output.traces.is_some())?;
    let records = cell_records(&cells);
    std::fs::write(&cfg.output.csv, write_csv(&records))
        .with_context(|| format!("writing {}", cfg.output.csv.display()))?;

    let mut failed = 0;
    let single = cells.len() == 1;
    for c in &cells {
        match &c.result {
            Ok(run) => {
                if let Some(base) = &cfg.output.traces {
                    let p = trace_path(base, c.scheme, c.seed, single);
                    let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                    write_traces(BufWriter::new(f), &run.traces)?;
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {e}");
            }
        }
    }
    print!("{}", format_summary(&summarize(&records)));
    println!("results written to {}", cfg.output.csv.display());
    Ok(if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a).map(|_| ExitCode::SUCCESS),
        Command::Run(a) => run(a),
        Command::Summarize { input } => std::fs::read_to_string(&input)
            .with_context(|| format!("reading {}", input.display()))
            .and_then(|text| Ok(read_csv(&text)?))
            .map(|recs| {
                print!("{}", format_summary(&summarize(&recs)));
                ExitCode::SUCCESS
            }),
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_text());
            Ok(ExitCode::SUCCESS)
        }
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
