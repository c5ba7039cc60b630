use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use teleop_core::config::AppConfig;
use teleop_core::harness::{
    parse_mode, run_matrix, run_mode, summary_rows, write_summary_csv, write_trace_csv, Mode, RunConfig, RunOptions,
    Scenario,
};
use teleop_core::network::write_delay_trace;
use teleop_core::plot::{plot_dir, write_steer_rate_csv};
use teleop_core::station::{tune_all, GainTable};
use teleop_core::{kmh_to_ms, SimError};

const EXIT_CONFIG: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(name = "teleop-sim", version, about = "Vehicle teleoperation simulator")]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `harness.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config file and TELEOP_SIM_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for tuning and the matrix.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tune both driver models at every configured speed; writes tuning.csv.
    Tune,
    /// Run one mode at one speed; writes its report rows and trace.
    Run {
        #[arg(long, value_parser = mode_arg)]
        mode: Mode,
        /// Reference speed, km/h.
        #[arg(long)]
        speed: u32,
    },
    /// Run every mode, speed and seed; writes matrix_summary.csv.
    Matrix {
        /// Restrict to these modes (repeatable).
        #[arg(long, value_parser = mode_arg)]
        mode: Vec<Mode>,
        /// Restrict to these speeds (repeatable).
        #[arg(long)]
        speed: Vec<u32>,
    },
    /// Render SVG diagnostics from the CSVs in a directory.
    Plot {
        /// Directory holding the CSVs; defaults to the output directory.
        csv_dir: Option<PathBuf>,
    },
    /// Write the sampled track as track.csv.
    TrackExport,
}

fn mode_arg(s: &str) -> Result<Mode, String> {
    parse_mode(s).map_err(|e| match e {
        SimError::Config(m) => m,
        other => other.to_string(),
    })
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Config(_) | SimError::Schema(_) => EXIT_CONFIG,
            SimError::MissingGain { .. } => EXIT_PRECONDITION,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e).into()
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("teleop-sim: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.harness.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.harness.output_dir = o.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| fail(EXIT_RUNTIME, format!("cannot write {}: {e}", path.display())))
}

fn load_gains(out: &Path) -> Result<GainTable, Failure> {
    let p = out.join("tuning.csv");
    let f = File::open(&p).map_err(|_| {
        fail(
            EXIT_PRECONDITION,
            format!("{} not found; run `teleop-sim tune` first", p.display()),
        )
    })?;
    Ok(GainTable::read_csv(f)?)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| fail(EXIT_RUNTIME, format!("thread pool: {e}"))),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    let out = PathBuf::from(&cfg.harness.output_dir);
    if let Cmd::Plot { csv_dir } = &cli.cmd {
        let dir = csv_dir.clone().unwrap_or_else(|| out.clone());
        let files = plot_dir(&dir, &out.join("plots"), cfg.vehicle.steer_rate_max)?;
        for f in files {
            println!("{}", f.display());
        }
        return Ok(());
    }
    let sc = cfg.scenario()?;
    std::fs::create_dir_all(&out)?;
    match cli.cmd {
        Cmd::Tune => tune(&sc, &out, cli.jobs),
        Cmd::Run { mode, speed } => run(&sc, &out, mode, speed),
        Cmd::Matrix { mode, speed } => matrix(&sc, &out, mode, speed, cli.jobs),
        Cmd::TrackExport => {
            let p = out.join("track.csv");
            sc.track.write_csv(create(&p)?)?;
            println!("{}", p.display());
            Ok(())
        }
        Cmd::Plot { .. } => unreachable!(),
    }
}

fn tune(sc: &Scenario, out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    let (table, errors) = with_jobs(jobs, || tune_all(sc, &sc.harness.speeds_kmh))?;
    let p = out.join("tuning.csv");
    table.write_csv(create(&p)?)?;
    for e in table.entries() {
        println!(
            "{:<9} {:>2} km/h  gain {:<5}  rms {:.4} m",
            e.driver.name(),
            e.speed_kmh,
            e.gain,
            e.rms_error_m
        );
    }
    println!("{}", p.display());
    if errors.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        Err(fail(EXIT_RUNTIME, msgs.join("; ")))
    }
}

fn run(sc: &Scenario, out: &Path, mode: Mode, speed: u32) -> Result<(), Failure> {
    let gains = if mode.driver().is_some() {
        load_gains(out)?
    } else {
        GainTable::new()
    };
    let cfg = RunConfig {
        mode,
        v_ref_kmh: speed,
        seed: sc.harness.seed,
    };
    let opts = RunOptions {
        record_trace: true,
        ..RunOptions::default()
    };
    let outcome = run_mode(sc, cfg, &gains, opts)?;
    let tag = format!("{mode}_{speed}kmh_seed{}", cfg.seed);
    let rep = &outcome.report;
    write_summary_csv(
        &summary_rows(std::slice::from_ref(rep)),
        create(&out.join(format!("report_{tag}.csv")))?,
    )?;
    write_trace_csv(&outcome.trace, create(&out.join(format!("trace_{tag}.csv")))?)?;
    if mode.is_delayed() {
        write_delay_trace(
            &outcome.downlink_delays,
            create(&out.join(format!("delays_{tag}.csv")))?,
        )?;
    }
    for m in &rep.regions {
        println!(
            "{}  rms {:.4} m  time {:.2} s  resets {}",
            m.region.letter(),
            m.rms_cross_track,
            m.completion_time,
            m.reset_count
        );
    }
    println!(
        "{mode} {speed} km/h seed {}: rms {:.4} m, {:.2} s, {} resets",
        cfg.seed, rep.rms_cross_track, rep.total_time, rep.reset_count
    );
    match &rep.failure {
        Some(why) => Err(fail(EXIT_RUNTIME, format!("run failed: {why}"))),
        None => Ok(()),
    }
}

fn matrix(sc: &Scenario, out: &Path, modes: Vec<Mode>, speeds: Vec<u32>, jobs: Option<usize>) -> Result<(), Failure> {
    let modes = if modes.is_empty() { Mode::ALL.to_vec() } else { modes };
    let speeds = if speeds.is_empty() {
        sc.harness.speeds_kmh.clone()
    } else {
        speeds
    };
    let gains = if modes.iter().any(|m| m.driver().is_some()) {
        load_gains(out)?
    } else {
        GainTable::new()
    };
    let res = run_matrix(sc, &gains, &modes, &speeds, jobs)?;
    let p = out.join("matrix_summary.csv");
    write_summary_csv(&summary_rows(&res.reports), create(&p)?)?;
    println!("{}", p.display());
    for &v in &speeds {
        let profile: Vec<_> = sc
            .track
            .steer_rate_requirement(kmh_to_ms(v as f64), sc.vehicle.wheelbase)
            .into_iter()
            .map(|(s, rate)| (s, sc.track.region_at(s), rate))
            .collect();
        write_steer_rate_csv(&profile, create(&out.join(format!("steer_rate_{v}kmh.csv")))?)?;
    }
    for r in res.reports.iter().filter(|r| r.failed()) {
        eprintln!(
            "warning: {} {} km/h seed {}: {}",
            r.mode,
            r.speed_kmh,
            r.seed,
            r.failure.as_deref().unwrap_or("")
        );
    }
    if res.errors.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = res
            .errors
            .iter()
            .map(|(k, e)| format!("{} {} km/h: {e}", k.mode, k.speed_kmh))
            .collect();
        Err(fail(EXIT_PRECONDITION, msgs.join("; ")))
    }
}
