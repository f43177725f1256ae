use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpbis::config::{load_config, RunConfig};
use cpbis::eval;
use cpbis::screen::{self, CpbisReport};
use cpbis::sweep;
use cpbis::types::SUPERIMPOSED_LABEL;

#[derive(Parser)]
#[command(
    name = "cpbis",
    about = "BLE neighbor-discovery sweeps, two-interval screening and schedule evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; also used as the sweep cache.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-mode (A, L) distributions and the superimposed mixture.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full screening pipeline and write the report.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// Additionally write troughs/pruned/pairs stage CSVs.
        #[arg(long)]
        emit_stages: bool,
    },
    /// Run trial-based evaluation of the configured schedules.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep { common } => with_config(&common, cmd_sweep),
        Command::Optimize {
            common,
            emit_stages,
        } => with_config(&common, |cfg, out| cmd_optimize(cfg, out, emit_stages)),
        Command::Evaluate { common } => with_config(&common, cmd_evaluate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn with_config(common: &CommonArgs, run: impl FnOnce(&RunConfig, &Path) -> CmdResult) -> CmdResult {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    run(&cfg, &common.out)
}

fn build_all_series(
    cfg: &RunConfig,
    out: &Path,
) -> Result<Vec<cpbis::types::DistributionSeries>, sweep::SweepError> {
    cfg.catalog
        .modes()
        .iter()
        .map(|mode| {
            sweep::load_or_build(out, mode, &cfg.grid, &cfg.advertiser, cfg.horizon, cfg.seed)
        })
        .collect()
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CmdResult {
    let series = build_all_series(cfg, out)?;
    let mixed = sweep::superimpose(&series, &cfg.catalog.shares())?;
    let mixed_path = out.join(sweep::cache_file_name(
        SUPERIMPOSED_LABEL,
        cfg.grid.quantile_p,
        cfg.seed,
    ));
    sweep::write_series_csv(&mixed_path, &mixed)?;
    for s in &series {
        println!(
            "{}: {} points -> {}",
            s.label,
            s.len(),
            out.join(sweep::cache_file_name(&s.label, cfg.grid.quantile_p, cfg.seed))
                .display()
        );
    }
    println!("{}: {} points -> {}", mixed.label, mixed.len(), mixed_path.display());
    Ok(())
}

fn cmd_optimize(cfg: &RunConfig, out: &Path, emit_stages: bool) -> CmdResult {
    let report = screen::run_cpbis(
        &cfg.catalog,
        &cfg.grid,
        &cfg.advertiser,
        cfg.horizon,
        &cfg.constraint,
        cfg.seed,
        Some(out),
        cfg.reference.clone(),
    )?;
    let json_path = out.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    print_summary(&report);
    if emit_stages {
        write_stage_csvs(&report, out)?;
    }
    println!("report -> {}", json_path.display());
    Ok(())
}

fn print_summary(report: &CpbisReport) {
    match &report.optimal_pair {
        Some(p) => {
            println!(
                "optimal pair: A_left = {} ms, A_right = {} ms, delta = {:.4}",
                p.a_left_ms, p.a_right_ms, p.delta
            );
            println!("  schedule: {}", p.schedule);
            println!(
                "  weighted latency at constraint: {:.1} ms (slope {:.6}, intercept {:.1} ms)",
                p.weighted_latency_ms, p.slope, p.intercept
            );
        }
        None => println!("no two-interval result"),
    }
    if let Some(s) = &report.single_fallback {
        println!(
            "single-interval fallback: A = {} ms, latency {:.1} ms",
            s.interval_ms, s.latency_ms
        );
    }
    if let Some(s) = &report.single_interval_at_constraint {
        println!(
            "single-interval alternative at the constraint: A = {} ms, latency {:.1} ms",
            s.interval_ms, s.latency_ms
        );
    }
    if let Some(w) = &report.warning {
        println!("warning: {w}");
    }
    if let Some(r) = &report.reference_pair {
        println!(
            "reference pair for comparison: ({} ms, {} ms) at delta {}",
            r.a_left_ms, r.a_right_ms, r.delta
        );
    }
}

fn write_stage_csvs(report: &CpbisReport, out: &Path) -> CmdResult {
    let points_csv = |pts: &[screen::PointSummary]| {
        let mut s = String::from("interval_ms,latency_ms\n");
        for p in pts {
            s.push_str(&format!("{},{}\n", p.interval_ms, p.latency_ms));
        }
        s
    };
    fs::write(out.join("troughs.csv"), points_csv(&report.stages.troughs))?;
    fs::write(out.join("pruned.csv"), points_csv(&report.stages.pruned))?;
    let mut pairs = String::from("a_left_ms,a_right_ms,slope,intercept_ms,delta,weighted_latency_ms\n");
    for p in &report.stages.local_optimum_pairs {
        pairs.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.a_left_ms, p.a_right_ms, p.slope, p.intercept, p.delta, p.weighted_latency_ms
        ));
    }
    fs::write(out.join("local_optimum_pairs.csv"), pairs)?;
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> CmdResult {
    if cfg.schedules.is_empty() {
        return Err("config has no [[schedules]] to evaluate".into());
    }
    let report = eval::compare_modes(
        &cfg.schedules,
        &cfg.catalog,
        &cfg.advertiser,
        cfg.limit,
        cfg.n_trials,
        cfg.seed,
    )?;
    fs::write(out.join("evaluation.csv"), report.to_csv())?;
    fs::write(
        out.join("evaluation.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    for w in &report.weighted {
        match w.mean_latency_s {
            Some(m) => println!(
                "schedule {}: weighted success {:.3}, weighted mean latency {:.3} s",
                w.schedule, w.success_rate, m
            ),
            None => println!(
                "schedule {}: weighted success {:.3}, no successful trials",
                w.schedule, w.success_rate
            ),
        }
    }
    println!("evaluation -> {}", out.join("evaluation.csv").display());
    Ok(())
}
