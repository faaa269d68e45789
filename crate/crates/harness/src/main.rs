//! `sbl-sim`: reproducible simulation experiments for three-ray semi-blind
//! localization.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sbl_harness::config::Config;
use sbl_harness::experiment::{Estimator, Experiment};
use sbl_harness::report::{write_manifest, Manifest};
use sbl_harness::selftest;

#[derive(Parser)]
#[command(
    name = "sbl-sim",
    version,
    about = "Semi-blind underwater acoustic localization: simulation harness",
    long_about = "Monte-Carlo experiments for the three-ray shallow-water model: SNR, model-mismatch \
and LOS-occlusion sweeps comparing SBL with MFP3 and steered GCC-PHAT, CRLB validation with \
confidence-ellipsoid coverage, and objective heatmaps.\n\nNoise can be ingested from a recorded \
sample file (noise.file in the config): interleaved re/im float64, flat little-endian binary or \
CSV with one `re,im` pair per line; the file is normalized to unit variance and successive trials \
consume successive non-overlapping blocks of N*L samples."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Estimator to map: sbl | mfp3 | mfp3-imperfect | gcc-phat.
    #[arg(long, default_value = "sbl")]
    estimator: String,
    /// Depth of the slice (default: the true source depth).
    #[arg(long)]
    z: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// RMS miss distance vs. SNR for the enabled estimators.
    SnrSweep(RunArgs),
    /// RMS miss distance vs. the physical-model deviation parameter.
    MismatchSweep(RunArgs),
    /// RMS miss distance vs. the LOS attenuation of the occluded receivers.
    OcclusionSweep(RunArgs),
    /// SBL estimates against the CRLB confidence ellipsoid.
    CrlbValidate(RunArgs),
    /// Objective values of one estimator on a fixed-depth slice.
    Heatmap(HeatmapArgs),
    /// Built-in numerical self checks (reduction equality, derivative oracle).
    Selftest,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn prepare(args: &RunArgs, command: &str) -> Result<(Experiment, PathBuf)> {
    install_threads(args.threads)?;
    let cfg = Config::from_path(&args.config)?;
    let exp = Experiment::new(cfg, args.seed, args.trials)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        master_seed: exp.master_seed(),
        trials: exp.config().run.trials,
        config: exp.config(),
    };
    write_manifest(&args.out.join("manifest.json"), &manifest)?;
    Ok((exp, args.out.clone()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SnrSweep(args) => {
            let (exp, out) = prepare(&args, "snr-sweep")?;
            let report = exp.run_snr_sweep()?;
            report.write_sweep_csv(&out.join("snr_sweep.csv"))?;
            report.write_trials_json(&out.join("trials.json"))?;
            print_sweep(&report);
        }
        Command::MismatchSweep(args) => {
            let (exp, out) = prepare(&args, "mismatch-sweep")?;
            let report = exp.run_mismatch_sweep()?;
            report.write_sweep_csv(&out.join("mismatch_sweep.csv"))?;
            report.write_trials_json(&out.join("trials.json"))?;
            print_sweep(&report);
        }
        Command::OcclusionSweep(args) => {
            let (exp, out) = prepare(&args, "occlusion-sweep")?;
            let report = exp.run_occlusion_sweep()?;
            report.write_sweep_csv(&out.join("occlusion_sweep.csv"))?;
            report.write_trials_json(&out.join("trials.json"))?;
            print_sweep(&report);
        }
        Command::CrlbValidate(args) => {
            let (exp, out) = prepare(&args, "crlb-validate")?;
            let report = exp.run_crlb_validation()?;
            report.write_json(&out.join("crlb.json"))?;
            report.write_estimates_csv(&out.join("estimates.csv"))?;
            println!(
                "crlb-validate: trials_ok={} coverage={:.4} rmse={} bound_rms={}",
                report.trials_ok,
                report.coverage,
                report.rmse.map_or_else(|| "NaN".into(), |v| format!("{v:.4}")),
                format_args!("{:.4}", report.mse_bound_trace.sqrt()),
            );
        }
        Command::Heatmap(args) => {
            let estimator = Estimator::parse(&args.estimator)
                .with_context(|| format!("unknown estimator {:?}", args.estimator))?;
            let (exp, out) = prepare(&args.run, "heatmap")?;
            let report = exp.render_heatmap(estimator, args.z)?;
            let stem = format!("heatmap_{}", report.estimator);
            report.write_csv(&out.join(format!("{stem}.csv")))?;
            report.write_meta_json(&out.join(format!("{stem}_meta.json")))?;
            println!("heatmap: estimator={} z={} points={}", report.estimator, report.z, report.map.grid.num_points());
        }
        Command::Selftest => {
            let outcome = selftest::run(0x5E1F, true);
            if !outcome.passed() {
                bail!(
                    "selftest failed: reduction {:.3e}, derivatives {:.3e}",
                    outcome.reduction_worst_rel_err,
                    outcome.derivative_worst_rel_err
                );
            }
            println!("selftest: all checks passed");
        }
    }
    Ok(())
}

fn print_sweep(report: &sbl_harness::report::ExperimentReport) {
    for point in &report.points {
        for est in &point.estimators {
            println!(
                "{} {}={} estimator={} rms={} ok={} failed={}",
                report.kind,
                report.sweep_variable,
                point.value,
                est.estimator,
                est.rms_miss.map_or_else(|| "NaN".into(), |v| format!("{v:.4}")),
                est.trials_ok,
                est.trials_failed
            );
        }
    }
}
