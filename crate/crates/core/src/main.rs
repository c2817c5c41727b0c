use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anonreach::harness::{
    self, emit_records, load_config, ExperimentConfig, OutputFormat, RunRecord,
};

#[derive(Parser)]
#[command(
    name = "anonreach",
    version,
    about = "Reach measurement and bid optimization simulator for group-anonymous ad delivery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trials per sweep point.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory (defaults to the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format for the primary output file.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Export reach curves (expected reach, sigma, bounds) over a stream.
    Measure(CommonArgs),
    /// Run one traced bid->auction->measure campaign.
    Simulate(CommonArgs),
    /// Sweep group size k and report relative ROAS per privacy level.
    SweepK(CommonArgs),
    /// Sweep targeted-user placement and report ROAS per coverage level.
    Coverage(CommonArgs),
    /// Compare measurement/bidding approaches A-D on skewed streams.
    Abcd(CommonArgs),
    /// Monte Carlo reach distributions with analytic overlays.
    Mc(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load(common: &CommonArgs) -> anonreach::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = Some(trials);
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output));
    Ok((cfg, out))
}

fn run(cli: Cli) -> anonreach::Result<()> {
    match cli.command {
        Command::Measure(common) => {
            let (cfg, out) = load(&common)?;
            let rows = harness::run_measure(&cfg)?;
            let written = emit_records(&out, "reach_curve", &rows, &cfg, common.format)?;
            report_written(&written);
        }
        Command::Simulate(common) => {
            let (cfg, out) = load(&common)?;
            let (trace, summary) = harness::run_simulate(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let trace_path = match common.format {
                OutputFormat::Csv => {
                    let p = out.join("trace.csv");
                    harness::write_csv(&p, &trace)?;
                    p
                }
                OutputFormat::Json => {
                    let p = out.join("trace.jsonl");
                    harness::write_jsonl(&p, &trace)?;
                    p
                }
            };
            let summary_path = out.join("simulation.json");
            harness::write_json(&summary_path, &summary)?;
            println!(
                "wins {} | spend {:.3} of budget {:.3} | measured reach {:.3} | realized reach {}",
                summary.wins, summary.spend, summary.budget, summary.measured_reach,
                summary.true_reach
            );
            report_written(&[trace_path, summary_path]);
        }
        Command::SweepK(common) => {
            let (cfg, out) = load(&common)?;
            let records = harness::run_k_sweep(&cfg)?;
            print_records(&records);
            let written = emit_records(&out, "k_sweep", &records, &cfg, common.format)?;
            report_written(&written);
        }
        Command::Coverage(common) => {
            let (cfg, out) = load(&common)?;
            let records = harness::run_coverage(&cfg)?;
            print_records(&records);
            let written = emit_records(&out, "coverage", &records, &cfg, common.format)?;
            report_written(&written);
        }
        Command::Abcd(common) => {
            let (cfg, out) = load(&common)?;
            let records = harness::run_approaches(&cfg)?;
            print_records(&records);
            let written = emit_records(&out, "approaches", &records, &cfg, common.format)?;
            report_written(&written);
        }
        Command::Mc(common) => {
            let (cfg, out) = load(&common)?;
            let output = harness::run_distribution(&cfg)?;
            for p in &output.points {
                println!(
                    "{} | analytic {:.4} | mc mean {:.4} (se {:.4}) | mc variance {:.4}",
                    p.label, p.analytic_reach, p.mc_mean, p.mc_std_error, p.mc_variance
                );
            }
            let mut written =
                emit_records(&out, "distribution", &output.points, &cfg, common.format)?;
            let hist_path = out.join("histogram.csv");
            harness::write_csv(&hist_path, &output.histogram)?;
            written.push(hist_path);
            report_written(&written);
        }
    }
    Ok(())
}

fn print_records(records: &[RunRecord]) {
    for r in records {
        println!(
            "{:<16} | roas {:.4} | relative {:.4} | reach {:.2} | spend {:.2} | rel err {:.4}",
            r.label, r.mean_roas, r.relative_roas, r.mean_reach, r.mean_spend,
            r.mean_relative_error
        );
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
