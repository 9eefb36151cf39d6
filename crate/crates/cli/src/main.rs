use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dragtrack::certify::{certify, envelope_violations, estimate_delta_bound};
use dragtrack::config::ScenarioConfig;
use dragtrack::io;
use dragtrack::montecarlo::{pooled_delta_samples, run_batch};
use dragtrack::reference::{generate_reference, ReferenceProfile};
use dragtrack::sim::{run_closed_loop, GuidanceMode};

#[derive(Parser)]
#[command(name = "dragtrack", version, about = "Drag-tracking entry guidance toolkit")]
struct Cli {
    /// Scenario file; the built-in Mars scenario when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the reference drag profile
    Refgen {
        #[arg(long, default_value = "profile.csv")]
        out: PathBuf,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Fly one trajectory and write its log and summary
    Simulate {
        /// open-loop-nominal, state-feedback or output-feedback
        #[arg(long, default_value = "state-feedback")]
        mode: GuidanceMode,
        #[command(flatten)]
        profile: ProfileArgs,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Evaluate the stability certificate for the configured gains
    Certify {
        /// Delta-sample CSV from a dispersed batch; fits (l, d) when given
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Certify the batch gains instead of the nominal ones
        #[arg(long)]
        batch_gains: bool,
        /// Report path; printed to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a dispersed Monte Carlo batch
    Mc {
        /// Number of runs; the scenario value when omitted
        #[arg(long)]
        n: Option<usize>,
        /// Master seed; the scenario value when omitted
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; rayon's default when omitted
        #[arg(long)]
        threads: Option<usize>,
        /// Also write the pooled delta samples for `certify --samples`
        #[arg(long)]
        samples: bool,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        step: StepArgs,
    },
}

#[derive(Args)]
struct ProfileArgs {
    /// Reference profile CSV; falls back to the scenario's file, then to
    /// generating one
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct StepArgs {
    /// Integration step override [s]
    #[arg(long)]
    dt: Option<f64>,
}

/// Failure split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(path: Option<&Path>, step: Option<&StepArgs>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p)
            .with_context(|| format!("loading {}", p.display()))
            .map_err(usage)?,
        None => ScenarioConfig::default(),
    };
    if let Some(dt) = step.and_then(|s| s.dt) {
        cfg.integrator.dt_s = dt;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn load_profile(cfg: &ScenarioConfig, args: &ProfileArgs) -> Result<Arc<ReferenceProfile>, Failure> {
    let path = args.profile.as_ref().or(cfg.files.profile.as_ref());
    let profile = match path {
        Some(p) => io::read_profile(p)
            .with_context(|| format!("reading profile {}", p.display()))
            .map_err(usage)?,
        None => generate_reference(&cfg.reference_spec().map_err(usage)?).context("generating the reference")?,
    };
    Ok(Arc::new(profile))
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    io::write_file(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn refgen(cfg: &ScenarioConfig, out: &Path) -> Result<(), Failure> {
    let spec = cfg.reference_spec().map_err(usage)?;
    let profile = generate_reference(&spec).context("generating the reference")?;
    write(out, &io::profile_to_csv(&profile).map_err(anyhow::Error::from)?)?;
    println!("s_target_km = {:.4}", profile.s_target / 1000.0);
    println!("terminal_velocity_mps = {:.3}", profile.terminal_velocity);
    println!("terminal_altitude_km = {:.4}", profile.terminal_altitude / 1000.0);
    println!("duration_s = {:.2}", profile.t_end() - profile.t_start());
    println!("wrote {}", out.display());
    Ok(())
}

fn simulate(cfg: &ScenarioConfig, mode: GuidanceMode, profile: &ProfileArgs, out: &Path) -> Result<(), Failure> {
    let profile = load_profile(cfg, profile)?;
    let run = cfg.run_config(mode, profile).map_err(usage)?;
    let (log, summary) = run_closed_loop(&run).context("simulation failed")?;
    let log_path = out.join("trajectory.csv");
    let summary_path = out.join("summary.json");
    write(&log_path, &io::log_to_csv(&log).map_err(anyhow::Error::from)?)?;
    let report = json!({
        "mode": mode.as_str(),
        "downrange_error_km": summary.downrange_error / 1000.0,
        "altitude_error_km": summary.altitude_error / 1000.0,
        "summary": summary,
    });
    write(
        &summary_path,
        &io::to_json_pretty(&report).map_err(anyhow::Error::from)?,
    )?;
    println!("mode = {mode}");
    println!("terminated = {}", summary.terminated);
    println!("downrange_error_km = {:.5}", summary.downrange_error / 1000.0);
    println!("altitude_error_km = {:.5}", summary.altitude_error / 1000.0);
    println!("wrote {} and {}", log_path.display(), summary_path.display());
    if !summary.terminated {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "terminal velocity not reached within {} s",
            run.max_time
        )));
    }
    Ok(())
}

fn run_certify(
    cfg: &ScenarioConfig,
    samples: Option<&Path>,
    batch_gains: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let gains = if batch_gains { cfg.mc_guidance() } else { cfg.guidance() };
    let samples_path = samples.or(cfg.files.delta_samples.as_deref());
    let (l, d, extra) = match samples_path {
        Some(p) => {
            let text = io::read_text(p).map_err(usage)?;
            let samples = io::delta_samples_from_csv(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .map_err(usage)?;
            let (l, d) = estimate_delta_bound(&samples).context("fitting the delta envelope")?;
            let bad = envelope_violations(&samples, l, d);
            (
                l,
                d,
                format!("fitted from {} samples, {bad} outside the envelope", samples.len()),
            )
        }
        None => (0.0, 0.0, "no delta samples: l = d = 0".to_string()),
    };
    let mut report = certify(&gains, l, d).context("certification failed")?;
    report.notes.push(extra);
    let bytes = io::to_json_pretty(&report).map_err(anyhow::Error::from)?;
    match out {
        Some(p) => {
            write(p, &bytes)?;
            println!("certified = {}", report.certified);
            println!("wrote {}", p.display());
        }
        None => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(&bytes).and_then(|()| stdout.write_all(b"\n"));
        }
    }
    Ok(())
}

struct McArgs<'a> {
    n: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    samples: bool,
    profile: &'a ProfileArgs,
    out: &'a Path,
}

fn mc(cfg: &ScenarioConfig, args: McArgs) -> Result<(), Failure> {
    let mut opts = cfg.batch_options(args.samples);
    if let Some(n) = args.n {
        opts.n_runs = n;
    }
    if let Some(seed) = args.seed {
        opts.master_seed = seed;
    }
    if opts.n_runs == 0 {
        return Err(usage(anyhow::anyhow!("the batch needs at least one run")));
    }
    if args.threads == Some(0) {
        return Err(usage(anyhow::anyhow!("--threads must be positive")));
    }
    let profile = load_profile(cfg, args.profile)?;
    let base = cfg.mc_run_config(profile).map_err(usage)?;
    let spec = cfg.dispersion_spec();
    let batch = || run_batch(&base, &spec, &opts);
    let (stats, outcomes) = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building the thread pool")?
            .install(batch),
        None => batch(),
    }
    .context("batch failed")?;

    let stats_path = args.out.join("mc_stats.json");
    let scatter_path = args.out.join("mc_scatter.csv");
    write(&stats_path, &io::to_json_pretty(&stats).map_err(anyhow::Error::from)?)?;
    write(
        &scatter_path,
        &io::scatter_to_csv(&outcomes).map_err(anyhow::Error::from)?,
    )?;
    if args.samples {
        let path = args.out.join("delta_samples.csv");
        let pooled = pooled_delta_samples(&outcomes);
        write(&path, &io::delta_samples_to_csv(&pooled).map_err(anyhow::Error::from)?)?;
        println!("wrote {} ({} samples)", path.display(), pooled.len());
    }
    println!(
        "runs = {}, completed = {}, failures = {}",
        stats.runs, stats.completed, stats.failures
    );
    for (name, m) in [
        ("downrange_error_km", stats.downrange_error_km),
        ("altitude_error_km", stats.altitude_error_km),
    ] {
        if let Some(m) = m {
            println!(
                "{name}: min {:.4} max {:.4} mean {:.4} std {:.4}",
                m.minimum, m.maximum, m.average, m.standard_deviation
            );
        }
    }
    println!("wrote {} and {}", stats_path.display(), scatter_path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Refgen { out, step } => refgen(&load_config(config, Some(step))?, out),
        Command::Simulate {
            mode,
            profile,
            out,
            step,
        } => simulate(&load_config(config, Some(step))?, *mode, profile, out),
        Command::Certify {
            samples,
            batch_gains,
            out,
        } => run_certify(
            &load_config(config, None)?,
            samples.as_deref(),
            *batch_gains,
            out.as_deref(),
        ),
        Command::Mc {
            n,
            seed,
            threads,
            samples,
            profile,
            out,
            step,
        } => mc(
            &load_config(config, Some(step))?,
            McArgs {
                n: *n,
                seed: *seed,
                threads: *threads,
                samples: *samples,
                profile,
                out,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
