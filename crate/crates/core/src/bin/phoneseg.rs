use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phoneseg::pipeline::{self, Manifest, RunConfig};
use phoneseg::{Error, Result};

/// Unsupervised phone segmentation over a corpus manifest.
#[derive(Parser, Debug)]
#[command(name = "phoneseg", version)]
struct Cli {
    /// `key = value` run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    mel_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    ssl_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Move a seeded fraction of train utterances to the validation split.
    Split {
        manifest: PathBuf,
        /// Where to write the updated manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized log-Mel features for every utterance.
    ExtractMel {
        manifest: PathBuf,
        /// Defaults to `mel_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Import precomputed frame features onto the 10 ms grid.
    ImportFeatures {
        manifest: PathBuf,
        /// Defaults to `ssl_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral-variation peak picking.
    Peaks {
        manifest: PathBuf,
        /// Tune the prominence threshold on the validation split first.
        #[arg(long)]
        sweep: bool,
    },
    /// Offline k-means on train-split features.
    Kmeans { manifest: PathBuf },
    /// Segmental k-means HMM training.
    Train { manifest: PathBuf },
    /// Segment with a trained HMM or k-means centroids.
    Decode {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Grid search scored on the validation split.
    Sweep {
        manifest: PathBuf,
        /// `key=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "grid", value_name = "KEY=V1,V2", required = true)]
        grid: Vec<String>,
    },
    /// Score a boundary file.
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        boundaries: PathBuf,
    },
    /// Cluster/phone purity of a frame-assignment file.
    Purity {
        manifest: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        frame_period: f64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    for (key, value) in [
        ("output_dir", &cli.output_dir),
        ("mel_dir", &cli.mel_dir),
        ("ssl_dir", &cli.ssl_dir),
    ] {
        if let Some(v) = value {
            overrides.push((key.to_string(), v.display().to_string()));
        }
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    for s in &cli.set {
        overrides.push(pipeline::parse_override(s)?);
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn out_dir(explicit: &Option<PathBuf>, configured: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::Config(format!("pass --out or set `{key}`")))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    pipeline::run_with_workers(&config, || match &cli.command {
        Command::Split { manifest, out } => {
            let m = pipeline::cmd_split(&Manifest::read(manifest)?, &config)?;
            m.write(out)
        }
        Command::ExtractMel { manifest, out } => {
            let dir = out_dir(out, &config.mel_dir, "mel_dir")?;
            pipeline::cmd_extract_mel(&Manifest::read(manifest)?, &dir, &config)
        }
        Command::ImportFeatures { manifest, out } => {
            let dir = out_dir(out, &config.ssl_dir, "ssl_dir")?;
            pipeline::cmd_import_features(&Manifest::read(manifest)?, &dir, &config)
        }
        Command::Peaks { manifest, sweep } => {
            let grid = pipeline::threshold_grid();
            let out = pipeline::cmd_peaks(&Manifest::read(manifest)?, &config, sweep.then_some(&grid[..]))?;
            print_summary(out.report.as_ref().map(|r| r.summary()));
            Ok(())
        }
        Command::Kmeans { manifest } => pipeline::cmd_kmeans(&Manifest::read(manifest)?, &config).map(|_| ()),
        Command::Train { manifest } => {
            let out = pipeline::cmd_train(&Manifest::read(manifest)?, &config)?;
            println!("wrote {}", out.model_path.display());
            Ok(())
        }
        Command::Decode { manifest, model } => {
            let out = pipeline::cmd_decode(&Manifest::read(manifest)?, &config, model)?;
            print_summary(out.report.as_ref().map(|r| r.summary()));
            if let Some(p) = out.purity {
                println!("  phone purity {:.3}  cluster purity {:.3}", p.phone_purity, p.cluster_purity);
            }
            Ok(())
        }
        Command::Sweep { manifest, grid } => {
            let grid = grid.iter().map(|g| parse_grid(g)).collect::<Result<Vec<_>>>()?;
            let table = pipeline::cmd_sweep(&Manifest::read(manifest)?, &config, &grid)?;
            print!("{}", table.best_csv());
            Ok(())
        }
        Command::Evaluate { manifest, boundaries } => {
            let report = pipeline::cmd_evaluate(&Manifest::read(manifest)?, &config, boundaries)?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::Purity {
            manifest,
            assignments,
            frame_period,
        } => {
            let p = pipeline::cmd_purity(&Manifest::read(manifest)?, &config, assignments, *frame_period)?;
            print!("{}", p.to_csv());
            Ok(())
        }
    })
}

fn print_summary(summary: Option<String>) {
    match summary {
        Some(s) => print!("{s}"),
        None => println!("no reference alignments; evaluation skipped"),
    }
}

fn parse_grid(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = pipeline::parse_override(spec)?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    Ok((key, values))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
