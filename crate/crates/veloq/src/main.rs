use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use veloq::config::{Preset, RunConfig};
use veloq::report::{num, Table};
use veloq::runners::{self, Context, IDS};
use veloq_core::circuit::CircuitIR;
use veloq_core::compiler::{self, ArrayGeometry, Limits, RabiTable, ZoneOptions};
use veloq_core::kinematics::zone_transfer_cost;
use veloq_core::pulsephysics::spectator_pi_pulse_infidelity;

#[derive(Parser)]
#[command(name = "veloq", version, about = "Velocity-selective neutral-atom control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regenerate the data behind one figure (or `all`) and check it.
    Reproduce {
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the noise preset from the config file.
        #[arg(long, value_enum)]
        noise: Option<Preset>,
    },
    /// Compile a circuit IR onto an array geometry into a timed schedule.
    Compile {
        #[arg(long)]
        ir: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Velocity of the reset zone, m/s.
        #[arg(long)]
        reset_velocity: Option<f64>,
    },
    /// Write a closed-form curve as CSV.
    Curve {
        #[command(subcommand)]
        which: Curve,
    },
    /// Time and distance of a jerk-limited velocity-zone transfer.
    Zones {
        #[arg(long)]
        dv: f64,
        #[arg(long, default_value_t = 1.5e8)]
        jerk: f64,
    },
}

#[derive(Subcommand)]
enum Curve {
    /// Stationary-spectator infidelity against target displacement.
    Spectator {
        /// Wavelength of the selective transition, m.
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        max_ratio: f64,
        #[arg(long, default_value_t = 301)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reproduce { id, config, seed, shots, out, noise } => reproduce(&id, config, seed, shots, out, noise),
        Command::Compile { ir, geometry, out, reset_velocity } => compile(&ir, &geometry, &out, reset_velocity).map(|_| ExitCode::SUCCESS),
        Command::Curve { which: Curve::Spectator { lambda, out, max_ratio, points } } => spectator(lambda, &out, max_ratio, points).map(|_| ExitCode::SUCCESS),
        Command::Zones { dv, jerk } => zones(dv, jerk).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn reproduce(id: &str, config: Option<PathBuf>, seed: Option<u64>, shots: Option<usize>, out: Option<PathBuf>, noise: Option<Preset>) -> Result<ExitCode> {
    if id != "all" && !IDS.contains(&id) {
        eprintln!("error: unknown figure id '{id}'; expected one of: all, {}", IDS.join(", "));
        return Ok(ExitCode::from(2));
    }
    let mut cfg = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(n) = shots {
        cfg.run.shots = n;
    }
    if let Some(p) = noise {
        cfg.noise.preset = p;
    }
    if let Some(o) = out {
        cfg.run.out = o;
    }
    let dir = cfg.run.out.clone();
    let ctx = Context::new(cfg)?;
    let ids: Vec<&str> = if id == "all" { IDS.to_vec() } else { vec![id] };
    let mut failed = false;
    for id in ids {
        let start = Instant::now();
        let output = runners::run(id, &ctx).with_context(|| format!("running {id}"))?;
        output.write(&dir)?;
        let status = if output.passed() { "PASS" } else { "FAIL" };
        println!("{id:6} {status} ({} checks, {:.1} s)", output.checks.len(), start.elapsed().as_secs_f64());
        if !output.passed() {
            failed = true;
            print!("{}", output.diff_report());
        }
    }
    println!("outputs in {}", dir.display());
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn compile(ir: &PathBuf, geometry: &PathBuf, out: &PathBuf, reset_velocity: Option<f64>) -> Result<()> {
    let ir_text = std::fs::read_to_string(ir).with_context(|| format!("reading {}", ir.display()))?;
    let circuit = CircuitIR::from_json(&ir_text)?;
    let geo_text = std::fs::read_to_string(geometry).with_context(|| format!("reading {}", geometry.display()))?;
    let geo: ArrayGeometry = serde_json::from_str(&geo_text).with_context(|| format!("parsing {}", geometry.display()))?;
    let table = RabiTable::default();
    let zones = compiler::assign_velocity_zones(&circuit, &table, &ZoneOptions { reset_velocity, ..ZoneOptions::default() })?;
    let schedule = compiler::compile(&circuit, &geo, &zones, &table, &Limits::default())?;
    let violations = compiler::validate(&schedule);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        anyhow::bail!("schedule violates hardware limits:\n{}", list.join("\n"));
    }
    std::fs::write(out, schedule.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
    println!("{} events over {:.3e} s, {} zones -> {}", schedule.events.len(), schedule.duration_s, zones.len(), out.display());
    Ok(())
}

fn spectator(lambda: f64, out: &PathBuf, max_ratio: f64, points: usize) -> Result<()> {
    anyhow::ensure!(lambda > 0.0 && lambda.is_finite(), "--lambda must be a positive wavelength in meters");
    anyhow::ensure!(points >= 2 && max_ratio > 0.0, "need at least two points over a positive range");
    let mut t = Table::new(&["d_m", "d_over_lambda", "infidelity"])?;
    for i in 0..points {
        let x = max_ratio * i as f64 / (points - 1) as f64;
        t.row([num(x * lambda), num(x), num(spectator_pi_pulse_infidelity(x)?)])?;
    }
    std::fs::write(out, t.finish()?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn zones(dv: f64, jerk: f64) -> Result<()> {
    let (time, distance) = zone_transfer_cost(dv, jerk)?;
    println!("transfer_time_s,transfer_distance_m");
    println!("{},{}", num(time), num(distance));
    Ok(())
}
