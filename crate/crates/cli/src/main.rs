//! `rrhinf` — synthesize, sweep, simulate and certify Round-Robin H∞
//! consensus observers from a JSON problem description.
//!
//! Exit codes: 0 success, 1 certification failed, 2 infeasible program,
//! 3 solver/numerical failure, 4 configuration or input error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use nalgebra::DVector;

use rrhinf::sim::{disagreement_cost, disagreement_gain, disturbance_dim, write_events_csv, write_trajectory_csv};
use rrhinf::synthesis::{build_program, write_sweep_csv, SweepStatus};
use rrhinf::verify::standard_scenarios;
use rrhinf::{
    certify, load_problem, simulate, sweep_delta, synthesize, verify_theorem2, CertifyOptions, ClarabelSolver,
    DisturbanceSignal, GainsFile, GammaMode, ProblemConfig, ProblemF64, SignalShape, SynthesisError,
};

#[derive(Parser)]
#[command(name = "rrhinf", version, about = "Round-Robin H-infinity consensus observer design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis program and write the gains.
    Synth {
        config: PathBuf,
        /// Override the sampling period.
        #[arg(long)]
        delta: Option<f64>,
        /// Override every node's descriptor scaling.
        #[arg(long)]
        eps: Option<f64>,
        /// Required attenuation level: fail unless the optimum certifies at least this gamma.
        #[arg(long)]
        gamma: Option<f64>,
        /// Gains file to write.
        #[arg(long, default_value = "gains.json")]
        out: PathBuf,
        /// Also write the conic program in SDPA sparse format.
        #[arg(long)]
        dump_sdpa: Option<PathBuf>,
        /// Solver log on stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Solve over a grid of sampling periods and scalings; writes a CSV table.
    Sweep {
        config: PathBuf,
        /// Sampling periods, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Descriptor scalings, comma separated; one row per (period, scaling).
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate plant and observers with stored gains.
    Simulate {
        config: PathBuf,
        gains: PathBuf,
        /// `zero`, `pulse:START:WIDTH`, `sine:FREQ:DECAY[:PHASE]`,
        /// `random:SEED[:HOLD[:DECAY[:SUPPORT]]]` or a JSON file.
        #[arg(long, default_value = "zero")]
        disturbance: String,
        /// Per-component amplitudes (default all ones).
        #[arg(long, value_delimiter = ',')]
        amplitude: Option<Vec<f64>>,
        /// Initial plant state (default zero).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Horizon in seconds.
        #[arg(long = "T", default_value_t = 50.0)]
        horizon: f64,
        /// Integration step; must divide the sampling period (default period/50).
        #[arg(long)]
        h: Option<f64>,
        /// Trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Buffer poll log CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Re-check a design: analysis LMIs plus a simulation battery.
    Certify {
        config: PathBuf,
        gains: PathBuf,
        /// Horizon of every battery run, in seconds.
        #[arg(long = "T", default_value_t = 50.0)]
        horizon: f64,
        /// Integration steps per sampling period.
        #[arg(long, default_value_t = 50)]
        steps_per_period: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    CertificationFailed,
    Infeasible(String),
    Numerical(String),
    Input(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::CertificationFailed => 1,
            Failure::Infeasible(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Input(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::InfeasibleProgram(m) => Failure::Infeasible(m),
            SynthesisError::NumericalFailure(m) => Failure::Numerical(m),
            e @ (SynthesisError::SingularMultiplier { .. } | SynthesisError::IndefiniteCertificate) => {
                Failure::Numerical(e.to_string())
            }
            other => Failure::Input(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rrhinf::init_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    let result = match cli.command {
        Command::Synth {
            config,
            delta,
            eps,
            gamma,
            out,
            dump_sdpa,
            verbose,
        } => cmd_synth(&config, delta, eps, gamma, &out, dump_sdpa.as_deref(), verbose),
        Command::Sweep {
            config,
            deltas,
            eps,
            out,
        } => cmd_sweep(&config, &deltas, eps, out.as_deref()),
        Command::Simulate {
            config,
            gains,
            disturbance,
            amplitude,
            x0,
            horizon,
            h,
            out,
            events,
        } => cmd_simulate(SimArgs {
            config: &config,
            gains: &gains,
            disturbance: &disturbance,
            amplitude,
            x0,
            horizon,
            h,
            out: out.as_deref(),
            events: events.as_deref(),
        }),
        Command::Certify {
            config,
            gains,
            horizon,
            steps_per_period,
            report,
        } => cmd_certify(&config, &gains, horizon, steps_per_period, report.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::CertificationFailed => eprintln!("certification FAILED"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
                Failure::Input(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn read_problem(path: &Path) -> anyhow::Result<(ProblemConfig, ProblemF64)> {
    let cfg = ProblemConfig::from_path(path)?;
    let problem = load_problem::<f64>(&cfg).with_context(|| format!("validating {}", path.display()))?;
    Ok((cfg, problem))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_synth(
    config: &Path,
    delta: Option<f64>,
    eps: Option<f64>,
    gamma: Option<f64>,
    out: &Path,
    dump_sdpa: Option<&Path>,
    verbose: bool,
) -> Result<(), Failure> {
    let (_, mut problem) = read_problem(config)?;
    if let Some(d) = delta {
        problem = problem.with_period(d).context("--delta")?;
    }
    if let Some(e) = eps {
        problem = problem.with_eps(e);
    }
    if let Some(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(anyhow!("--gamma must be positive, got {g}").into());
        }
        problem.options.gamma_mode = GammaMode::Fixed(g);
    }
    problem.options.validate(&problem.graph).context("synthesis options")?;
    if let Some(path) = dump_sdpa {
        let sp = build_program(&problem)?;
        let mut w = create(path)?;
        sp.program.write_sdpa(&mut w).context("writing SDPA file")?;
        w.flush().context("writing SDPA file")?;
    }
    let solver = ClarabelSolver {
        verbose,
        ..ClarabelSolver::default()
    };
    let sol = synthesize(&problem, &solver)?;
    let t2 = verify_theorem2(&problem, &sol)?;
    let file = GainsFile::from_solution(&problem, &sol);
    let mut w = create(out)?;
    w.write_all(file.to_json().as_bytes()).context("writing gains")?;
    w.flush().context("writing gains")?;

    let accuracy = if sol.report.inaccurate {
        ", reduced accuracy"
    } else {
        ""
    };
    println!("status        : optimal ({}{accuracy})", sol.report.backend_status);
    println!("gamma^2       : {:.4}", sol.gains.gamma_sq);
    if let Some(g) = gamma {
        println!("requested     : {:.4} (certified level is the best one found)", g * g);
    }
    println!("period        : {:.4}", problem.schedule.period());
    println!("iterations    : {}", sol.report.iterations);
    println!("solve time    : {:.4} s", sol.report.solve_seconds);
    println!("worst slack   : {:.4e}", sol.report.worst_slack());
    println!("recovery res. : {:.4e}", sol.recovery_residual);
    for n in &t2.nodes {
        println!("node {} lambda_max(Xi) = {:.4e}", n.node, n.max_eigenvalue);
    }
    println!("analysis check: {}", if t2.passed { "PASS" } else { "FAIL" });
    println!("gains written to {}", out.display());
    if !t2.passed {
        let how = if sol.report.inaccurate {
            "inaccurate solve; "
        } else {
            ""
        };
        return Err(Failure::Numerical(format!(
            "{how}the recovered design fails the analysis post-check"
        )));
    }
    Ok(())
}

fn cmd_sweep(config: &Path, deltas: &[f64], eps: Option<Vec<f64>>, out: Option<&Path>) -> Result<(), Failure> {
    let (_, problem) = read_problem(config)?;
    let eps = eps.unwrap_or_else(|| vec![problem.options.eps[0]]);
    let rows = sweep_delta(&problem, deltas, &eps, &ClarabelSolver::default())?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            write_sweep_csv(&rows, &mut w).context("writing sweep table")?;
            w.flush().context("writing sweep table")?;
        }
        None => write_sweep_csv(&rows, std::io::stdout().lock()).context("writing sweep table")?,
    }
    for r in &rows {
        let shown = match (r.status, r.gamma_sq) {
            (SweepStatus::Optimal, Some(g)) => format!("gamma^2 = {g:.4}"),
            (s, _) => format!("{s:?}"),
        };
        eprintln!("delta = {:.4e}  eps = {:.4e}  {shown}", r.delta, r.eps);
    }
    Ok(())
}

struct SimArgs<'a> {
    config: &'a Path,
    gains: &'a Path,
    disturbance: &'a str,
    amplitude: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
    horizon: f64,
    h: Option<f64>,
    out: Option<&'a Path>,
    events: Option<&'a Path>,
}

fn parse_disturbance(
    spec: &str,
    amplitude: Option<Vec<f64>>,
    dim: usize,
    period: f64,
) -> anyhow::Result<DisturbanceSignal> {
    if spec.ends_with(".json") {
        let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
        let sig = DisturbanceSignal::from_json(&text).with_context(|| format!("parsing {spec}"))?;
        if sig.dim() != dim {
            bail!("disturbance file has {} components, expected {dim}", sig.dim());
        }
        return Ok(sig);
    }
    let amplitude = amplitude.unwrap_or_else(|| vec![1.0; dim]);
    if amplitude.len() != dim {
        bail!("--amplitude has {} entries, expected {dim}", amplitude.len());
    }
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|p| {
            p.parse::<f64>()
                .with_context(|| format!("bad number '{p}' in disturbance '{spec}'"))
        })
        .collect::<anyhow::Result<_>>()?;
    let arg = |k: usize, default: Option<f64>| -> anyhow::Result<f64> {
        nums.get(k)
            .copied()
            .or(default)
            .ok_or_else(|| anyhow!("disturbance '{spec}' is missing parameter {}", k + 1))
    };
    let shape = match kind {
        "zero" => SignalShape::Zero,
        "pulse" => SignalShape::Pulse {
            start: arg(0, None)?,
            width: arg(1, None)?,
        },
        "sine" => SignalShape::DecayingSine {
            frequency: arg(0, None)?,
            decay: arg(1, None)?,
            phase: arg(2, Some(0.0))?,
        },
        "random" => {
            let seed = arg(0, None)?;
            if seed < 0.0 || seed.fract() != 0.0 {
                bail!("random seed must be a non-negative integer");
            }
            SignalShape::RandomPiecewise {
                seed: seed as u64,
                hold: arg(1, Some(period))?,
                decay: arg(2, Some(0.1))?,
                support: arg(3, Some(30.0))?,
            }
        }
        other => bail!("unknown disturbance kind '{other}'"),
    };
    Ok(DisturbanceSignal::new(shape, amplitude))
}

fn cmd_simulate(a: SimArgs<'_>) -> Result<(), Failure> {
    let (_, problem) = read_problem(a.config)?;
    let file = GainsFile::from_path(a.gains)?;
    let gains = file.to_gains(&problem)?;
    let n = problem.state_dim();
    let period = problem.schedule.period();
    let dim = disturbance_dim(&problem);
    let xi = parse_disturbance(a.disturbance, a.amplitude, dim, period)?;
    let x0 = a.x0.unwrap_or_else(|| vec![0.0; n]);
    if x0.len() != n {
        return Err(anyhow!("--x0 has {} entries, expected {n}", x0.len()).into());
    }
    let h = a.h.unwrap_or(period / 50.0);
    let x0v = DVector::from_vec(x0.clone());
    let traj = simulate(&problem, &gains, &xi, &x0v, a.horizon, h).context("simulation")?;
    if let Some(path) = a.out {
        let mut w = create(path)?;
        write_trajectory_csv(&traj, &mut w).context("writing trajectory")?;
        w.flush().context("writing trajectory")?;
    }
    if let Some(path) = a.events {
        let mut w = create(path)?;
        write_events_csv(&traj.events, &mut w).context("writing events")?;
        w.flush().context("writing events")?;
    }
    let cost = disagreement_cost(&traj, &problem.graph);
    println!("J             : {:.4e}", cost.pairwise);
    println!("J (degree)    : {:.4e}", cost.degree_form);
    match disagreement_gain(&traj, &gains.p) {
        Ok(r) => println!(
            "ratio         : {:.4e}  (gamma^2 = {:.4}, {})",
            r,
            gains.gamma_sq,
            if r <= gains.gamma_sq {
                "within bound"
            } else {
                "ABOVE bound"
            }
        ),
        Err(_) => println!("ratio         : n/a (zero initial state and disturbance)"),
    }
    let last = traj.steps;
    let final_err = traj.e.iter().map(|e| e[last].norm()).fold(0.0, f64::max);
    let x0n = x0v.norm();
    if x0n > 0.0 {
        println!("decay         : {:.4e}  (max_i |e_i(T)| / |x0|)", final_err / x0n);
    } else {
        println!("final error   : {final_err:.4e}");
    }
    println!("buffer events : {}", traj.events.len());
    Ok(())
}

fn cmd_certify(
    config: &Path,
    gains: &Path,
    horizon: f64,
    steps_per_period: usize,
    report: Option<&Path>,
) -> Result<(), Failure> {
    let (_, problem) = read_problem(config)?;
    let file = GainsFile::from_path(gains)?;
    let sol = file.to_solution(&problem)?;
    let opts = CertifyOptions {
        horizon,
        steps_per_period,
        ..CertifyOptions::default()
    };
    let h = problem.schedule.period() / steps_per_period as f64;
    let scenarios = standard_scenarios(&problem, h);
    let rep = certify(&problem, &sol, &scenarios, &opts).context("certification")?;
    match report {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(rep.to_json().as_bytes()).context("writing report")?;
            w.flush().context("writing report")?;
        }
        None => println!("{}", rep.to_json()),
    }
    eprint!("{}", rep.summary_table());
    if rep.all_passed {
        Ok(())
    } else {
        Err(Failure::CertificationFailed)
    }
}
