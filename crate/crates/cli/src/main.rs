use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ttd_core::array::{linspace, pattern_heatmap};
use ttd_core::config::RunConfig;
use ttd_core::designs::{digital_genie_design, genie_stepped, BeamDesign, BeamKind};
use ttd_core::harness::{build_design, capacity_cdf, cdf_csv, run_sweep, trial_rng, RunManifest, TrialSetup};
use ttd_core::mobility::{sample_scenario, SubbandAssignment};

#[derive(Parser)]
#[command(name = "ttdsim", version, about = "Slanted TTD beam design and mobility sweeps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set array.num_antennas=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    /// Use the full reference scale instead of the quick desk scale.
    #[arg(long, global = true)]
    full: bool,
    /// Comma-separated beam kinds.
    #[arg(long, global = true, value_delimiter = ',')]
    beams: Vec<String>,
    /// Worker threads for trials (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the beam weights of one sampled scenario as JSON.
    Design {
        /// Trial whose scenario is designed for.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Write the gain over AoD and subcarrier as CSV.
    Pattern {
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Number of AoD samples over [-90°, 90°].
        #[arg(long, default_value_t = 181)]
        theta_points: usize,
        /// Evaluate every n-th subcarrier.
        #[arg(long, default_value_t = 1)]
        subcarrier_stride: usize,
    },
    /// Minimum-capacity statistics along a sweep axis.
    Sweep(SweepArgs),
    /// Empirical CDFs of per-trial minimum capacity.
    Cdf(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// offset_range, num_antennas, num_users or mean_velocity.
    #[arg(long)]
    axis: Option<String>,
    /// Axis values; each axis has its own default list.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

fn load_config(g: &Global, extra: Vec<String>) -> Result<RunConfig> {
    let base = if g.full { RunConfig::default() } else { RunConfig::desk() };
    let text = match &g.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut overrides = g.set.clone();
    if !g.beams.is_empty() {
        let kinds = g
            .beams
            .iter()
            .map(|b| b.trim().parse::<BeamKind>().map(|k| format!("\"{}\"", k.name())))
            .collect::<Result<Vec<_>, _>>()?;
        overrides.push(format!("sweep.beams=[{}]", kinds.join(",")));
    }
    overrides.extend(extra);
    Ok(RunConfig::parse_with(&base, &text, &overrides)?)
}

fn write(out: &Path, name: &str, contents: &str, manifest: &mut RunManifest) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.add(name, contents.as_bytes());
    Ok(())
}

fn finish(out: &Path, manifest: &RunManifest) -> Result<()> {
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Every requested beam for the scenario of `trial`. Genie kinds are designed
/// at the users' true initial AoDs.
fn scenario_designs(cfg: &RunConfig, seed: u64, trial: u64) -> Result<Vec<BeamDesign>> {
    let setup = TrialSetup::from_config(cfg, None)?;
    let mut rng = trial_rng(seed, trial);
    let users = sample_scenario(&mut rng, &setup.scenario)?;
    let assignment = SubbandAssignment::random(users.len(), &mut rng);
    let truth: Vec<f64> = users.iter().map(|u| u.truth.aod).collect();
    setup
        .beams
        .iter()
        .map(|&kind| {
            Ok(match kind {
                BeamKind::SteppedGenie => genie_stepped(&truth, assignment.clone(), &setup.array, &setup.solver)?,
                BeamKind::DigitalGenie => digital_genie_design(&truth, assignment.clone()),
                _ => build_design(kind, &setup, &users, &assignment)?,
            })
        })
        .collect()
}

fn sweep_overrides(args: &SweepArgs) -> Vec<String> {
    let mut o = Vec::new();
    if let Some(a) = &args.axis {
        o.push(format!("sweep.axis=\"{a}\""));
    }
    let values: &[f64] = match (args.values.is_empty(), args.axis.as_deref()) {
        (false, _) => &args.values,
        (true, Some("offset_range")) => &[0.0, 5.0, 10.0, 15.0, 20.0],
        (true, Some("num_antennas")) => &[8.0, 16.0, 32.0, 64.0, 128.0],
        (true, Some("num_users")) => &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        (true, Some("mean_velocity")) => &[0.0, 20.0, 40.0, 60.0, 80.0],
        _ => &[],
    };
    if !values.is_empty() {
        let v: Vec<String> = values.iter().map(|x| format!("{x:?}")).collect();
        o.push(format!("sweep.values=[{}]", v.join(",")));
    }
    o
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    match &cli.command {
        Command::Design { trial } => {
            let cfg = load_config(g, Vec::new())?;
            let seed = g.seed.unwrap_or(0);
            let mut manifest = RunManifest::new("design", &cfg, Some(seed));
            for d in scenario_designs(&cfg, seed, *trial)? {
                let run = serde_json::json!({ "seed": seed, "trial": trial, "config_hash": manifest.config_hash });
                write(&g.out, &format!("design_{}.json", d.kind.name()), &d.to_json(run)?, &mut manifest)?;
            }
            finish(&g.out, &manifest)
        }
        Command::Pattern {
            trial,
            theta_points,
            subcarrier_stride,
        } => {
            if *theta_points < 1 || *subcarrier_stride < 1 {
                bail!("--theta-points and --subcarrier-stride must be at least 1");
            }
            let cfg = load_config(g, Vec::new())?;
            let seed = g.seed.unwrap_or(0);
            let array = cfg.array_config()?;
            let thetas = linspace(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, *theta_points);
            let ks: Vec<usize> = (0..array.num_subcarriers).step_by(*subcarrier_stride).collect();
            let mut manifest = RunManifest::new("pattern", &cfg, Some(seed));
            for d in scenario_designs(&cfg, seed, *trial)? {
                let h = pattern_heatmap(&d, &thetas, &ks, &array)?;
                write(&g.out, &format!("pattern_{}.csv", d.kind.name()), &h.to_csv(), &mut manifest)?;
            }
            finish(&g.out, &manifest)
        }
        Command::Sweep(args) | Command::Cdf(args) => {
            let Some(seed) = g.seed else {
                bail!("--seed is required for sweep and cdf");
            };
            let cfg = load_config(g, sweep_overrides(args))?;
            let result = run_sweep(&cfg, seed, g.workers)?;
            let (name, file, csv) = match cli.command {
                Command::Sweep(_) => ("sweep", "sweep.csv", result.to_csv()),
                _ => ("cdf", "cdf.csv", cdf_csv(&capacity_cdf(&result, &cfg.sweep.beams)?)),
            };
            let mut manifest = RunManifest::new(name, &cfg, Some(seed));
            write(&g.out, file, &csv, &mut manifest)?;
            finish(&g.out, &manifest)
        }
    }
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
