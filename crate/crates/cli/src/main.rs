//! Command-line front end: validate → solve → rank-reduce → synthesize →
//! simulate → report, plus reachable-set sweeps, the rank probe, and the
//! built-in reproduction table.
//!
//! Exit codes are a contract: 0 success, 1 validation failure, 2 solver
//! non-optimal, 3 I/O or malformed input, 4 numeric failure.

mod fixtures;
mod report;

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use xfermax::lowrank::{conjecture_probe, numerical_rank, rank_bound, rank_reduce, RANK_REL_TOL};
use xfermax::problem::{p_to_r, ProblemSpec};
use xfermax::sdp::{certify, solve, SdpProblem, SdpSolution, SolveStatus, SolverConfig};
use xfermax::simulate::{
    simulate_p, simulate_r, simulate_xy, IntegratorConfig, StopReason, Trajectory,
};
use xfermax::synthesis::{
    aligned_xy_state, choose_repetitions, epsilon_kick, schedule_from_solution, ControlSchedule,
    FeedbackLaw, RepetitionChoice,
};

#[derive(Parser)]
#[command(
    name = "xfermax",
    about = "Optimal transfer, reachable sets, and control synthesis for dissipative bilinear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative duality-gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Per-iteration diagnostics on standard error.
    #[arg(long)]
    verbose: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            gap_tol: self.gap_tol,
            feas_tol: self.feas_tol,
            max_iter: self.max_iter,
            verbose: self.verbose,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural hypotheses of a problem file.
    Validate {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Solve the transfer program and write a run report.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Report file (JSON). Summary always goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Cap for the repetition search.
        #[arg(long, default_value_t = 4096)]
        reps_cap: usize,
    },
    /// Solve and emit the direction schedule and feedback laws.
    Synthesize {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 4096)]
        reps_cap: usize,
    },
    /// Solve, synthesize, and integrate the closed loops; write trajectory CSVs.
    Simulate {
        #[arg(long)]
        problem: PathBuf,
        /// Full run report (JSON) including the simulation endpoints.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Radial trajectory CSV.
        #[arg(long)]
        out_r: Option<PathBuf>,
        /// Bilinear trajectory CSV.
        #[arg(long)]
        out_xy: Option<PathBuf>,
        /// Exact squared-amplitude walk CSV.
        #[arg(long)]
        out_p: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Replacement for vanishing amplitudes the law depends on
        /// (default: 1e-3 times the largest starting amplitude).
        #[arg(long)]
        eps_kick: Option<f64>,
        /// Physical-time horizon.
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long, default_value_t = 4096)]
        reps_cap: usize,
    },
    /// Sweep the reachable set and write one slice per grid point.
    Reach {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Points per axis: one count for all axes or a comma-separated list.
        #[arg(long, default_value = "21")]
        grid: String,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Random-instance rank survey.
    ProbeRank {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the built-in worked instances against their published values.
    Repro {
        /// One of 2x2 | 3x3 | 3chain | all.
        #[arg(long, default_value = "all")]
        case: String,
    },
}

enum CliError {
    Validation(String),
    NonOptimal(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonOptimal(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m)
            | CliError::NonOptimal(m)
            | CliError::Io(m)
            | CliError::Numeric(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { problem } => cmd_validate(&problem),
        Command::Solve {
            problem,
            out,
            solver,
            reps_cap,
        } => cmd_solve(&problem, out.as_deref(), &solver.config(), reps_cap),
        Command::Synthesize {
            problem,
            out,
            solver,
            reps_cap,
        } => cmd_synthesize(&problem, out.as_deref(), &solver.config(), reps_cap),
        Command::Simulate {
            problem,
            out,
            out_r,
            out_xy,
            out_p,
            solver,
            eps_kick,
            horizon,
            reps_cap,
        } => cmd_simulate(
            &problem,
            out.as_deref(),
            out_r.as_deref(),
            out_xy.as_deref(),
            out_p.as_deref(),
            &solver.config(),
            eps_kick,
            horizon,
            reps_cap,
        ),
        Command::Reach {
            problem,
            out,
            grid,
            workers,
            solver,
        } => cmd_reach(&problem, out.as_deref(), &grid, workers, &solver.config()),
        Command::ProbeRank {
            count,
            n_min,
            n_max,
            seed,
            workers,
            out,
        } => cmd_probe_rank(count, n_min, n_max, seed, workers, out.as_deref()),
        Command::Repro { case } => cmd_repro(&case),
    }
}

fn load_spec(path: &Path) -> Result<ProblemSpec, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ProblemSpec::from_json(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn validated_spec(path: &Path) -> Result<ProblemSpec, CliError> {
    let spec = load_spec(path)?;
    let report = spec.validate();
    if !report.pass() {
        return Err(CliError::Validation(report.failures().join("; ")));
    }
    Ok(spec)
}

fn write_out(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Everything the pipeline produces up to (not including) simulation.
struct Pipeline {
    spec: ProblemSpec,
    sdp: SdpProblem,
    sol: SdpSolution,
    rank_before: usize,
    rank_after: usize,
    choice: RepetitionChoice,
    schedule: ControlSchedule,
}

fn run_pipeline(
    spec: ProblemSpec,
    cfg: &SolverConfig,
    reps_cap: usize,
) -> Result<Pipeline, CliError> {
    let sdp = spec.build_constraints().sdp_problem();
    let sol = solve(&sdp, cfg);
    if sol.status != SolveStatus::Optimal {
        return Err(CliError::NonOptimal(format!(
            "solver stopped with status {} after {} iterations (gap {:.3e})",
            sol.status, sol.iterations, sol.gap
        )));
    }
    let rank_before = numerical_rank(&sol.m, RANK_REL_TOL);
    let reduced =
        rank_reduce(&sdp, &sol.m).map_err(|e| CliError::Numeric(format!("rank reduction: {e}")))?;
    let rank_after = numerical_rank(&reduced, RANK_REL_TOL);
    let choice = choose_repetitions(spec.coupling(), &reduced, spec.p0(), reps_cap);
    let schedule = schedule_from_solution(&reduced, choice.n_reps)
        .map_err(|e| CliError::Numeric(format!("schedule synthesis: {e}")))?;
    Ok(Pipeline {
        spec,
        sdp,
        sol,
        rank_before,
        rank_after,
        choice,
        schedule,
    })
}

fn build_report(p: &Pipeline, cfg: &SolverConfig) -> report::RunReport {
    let n = p.spec.n();
    let cert = certify(&p.sdp, &p.sol, cfg);
    report::RunReport {
        problem: report::problem_echo(&p.spec),
        validation: report::validation_echo(&p.spec.validate()),
        solver: report::solver_echo(&p.sol),
        transfer: report::transfer_echo(p.spec.p0()[n - 1], p.sol.objective_value),
        rank: report::rank_echo(p.rank_before, p.rank_after, &rank_bound(&p.spec)),
        schedule: Some(report::schedule_echo(&p.schedule, &p.choice)),
        certificate: Some(report::cert_echo(&cert)),
        simulation: None,
    }
}

fn summarize(p: &Pipeline, started: Instant) {
    let n = p.spec.n();
    let peak = (p.spec.p0()[n - 1] + p.sol.objective_value).max(0.0);
    println!(
        "solved: gain {:.9}  peak amplitude {:.9}  rank {}->{}  segments {}x{}  [{} iters, gap {:.2e}, {:.1} ms]",
        p.sol.objective_value,
        peak.sqrt(),
        p.rank_before,
        p.rank_after,
        p.schedule.segments.len(),
        p.schedule.repetitions,
        p.sol.iterations,
        p.sol.gap,
        started.elapsed().as_secs_f64() * 1e3,
    );
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let spec = load_spec(path)?;
    let report = spec.validate();
    println!("negative definite symmetric part: {}", report.neg_definite);
    println!("irreducible coupling pattern:     {}", report.irreducible);
    println!(
        "nonnegative starting point:       {}",
        report.p0_nonnegative
    );
    if report.pass() {
        println!("pass");
        Ok(())
    } else {
        Err(CliError::Validation(report.failures().join("; ")))
    }
}

fn cmd_solve(
    path: &Path,
    out: Option<&Path>,
    cfg: &SolverConfig,
    reps_cap: usize,
) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = validated_spec(path)?;
    let pipeline = run_pipeline(spec, cfg, reps_cap)?;
    let report = build_report(&pipeline, cfg);
    if let Some(out) = out {
        write_out(out, report::to_json(&report).as_bytes())?;
    }
    summarize(&pipeline, started);
    Ok(())
}

fn cmd_synthesize(
    path: &Path,
    out: Option<&Path>,
    cfg: &SolverConfig,
    reps_cap: usize,
) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = validated_spec(path)?;
    let pipeline = run_pipeline(spec, cfg, reps_cap)?;

    #[derive(serde::Serialize)]
    struct LawOut {
        pivot: usize,
        ratios: Vec<f64>,
    }
    #[derive(serde::Serialize)]
    struct SegmentOut {
        duration: f64,
        direction: Vec<f64>,
        law: LawOut,
    }
    #[derive(serde::Serialize)]
    struct ScheduleOut {
        repetitions: usize,
        total_duration: f64,
        segments: Vec<SegmentOut>,
    }

    let segments = pipeline
        .schedule
        .segments
        .iter()
        .map(|seg| {
            let law = FeedbackLaw::from_direction(&seg.direction)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            Ok(SegmentOut {
                duration: xfermax::simulate::sig12(seg.duration),
                direction: seg
                    .direction
                    .iter()
                    .map(|&v| xfermax::simulate::sig12(v))
                    .collect(),
                law: LawOut {
                    pivot: law.pivot + 1,
                    ratios: law
                        .ratios
                        .iter()
                        .map(|&v| xfermax::simulate::sig12(v))
                        .collect(),
                },
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out_doc = ScheduleOut {
        repetitions: pipeline.schedule.repetitions,
        total_duration: xfermax::simulate::sig12(pipeline.schedule.total_duration),
        segments,
    };
    let mut text = serde_json::to_string_pretty(&out_doc).expect("serializable schedule");
    text.push('\n');
    match out {
        Some(path) => write_out(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    summarize(&pipeline, started);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    out: Option<&Path>,
    out_r: Option<&Path>,
    out_xy: Option<&Path>,
    out_p: Option<&Path>,
    cfg: &SolverConfig,
    eps_kick_abs: Option<f64>,
    horizon: f64,
    reps_cap: usize,
) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = validated_spec(path)?;
    let pipeline = run_pipeline(spec, cfg, reps_cap)?;
    let spec = &pipeline.spec;
    let n = spec.n();

    let r0_raw = p_to_r(spec.p0()).expect("validated nonnegative start");
    let first_law = match pipeline.schedule.segments.first() {
        Some(seg) => FeedbackLaw::from_direction(&seg.direction)
            .map_err(|e| CliError::Numeric(e.to_string()))?,
        None => {
            println!("nothing to do: the optimal schedule is empty (no attainable gain)");
            return Ok(());
        }
    };
    let eps = eps_kick_abs
        .unwrap_or_else(|| 1e-3 * r0_raw.r.iter().cloned().fold(0.0f64, f64::max).max(1e-300));
    let r0 = epsilon_kick(&r0_raw, &first_law, eps);

    let sim_cfg = IntegratorConfig {
        tprime_target: Some((1.0 - 1e-4) * pipeline.schedule.total_duration),
        ..IntegratorConfig::default()
    };

    let r_traj = simulate_r(spec.coupling(), &pipeline.schedule, &r0, horizon, &sim_cfg)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let s0 = aligned_xy_state(&first_law, &r0);
    let xy_traj = simulate_xy(spec.coupling(), &pipeline.schedule, &s0, horizon, &sim_cfg)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    for (name, traj) in [("radial", &r_traj), ("bilinear", &xy_traj)] {
        if traj.stop == StopReason::StepBudget {
            return Err(CliError::Numeric(format!(
                "{name} integration exhausted its step budget at t = {:.6}",
                traj.times.last().unwrap()
            )));
        }
    }

    if let Some(path) = out_r {
        write_csv_file(&r_traj, path)?;
    }
    if let Some(path) = out_xy {
        write_csv_file(&xy_traj, path)?;
    }
    if let Some(path) = out_p {
        let p_traj = simulate_p(spec.coupling(), &pipeline.schedule, spec.p0());
        write_csv_file(&p_traj, path)?;
    }

    let stop_name = |s: StopReason| match s {
        StopReason::Horizon => "horizon",
        StopReason::TargetReached => "clock-target",
        StopReason::Stalled => "stalled",
        StopReason::StepBudget => "step-budget",
        StopReason::ScheduleEnd => "schedule-end",
    };
    let r_end = r_traj.endpoint();
    let xy_end = xy_traj.endpoint();
    let xy_r_final: Vec<f64> = (0..n).map(|i| xy_end[i].hypot(xy_end[n + i])).collect();

    if let Some(path) = out {
        let mut full = build_report(&pipeline, cfg);
        full.simulation = Some(report::simulation_echo(
            r_end,
            r_traj.final_tprime().unwrap_or(0.0),
            stop_name(r_traj.stop),
            Some(xy_r_final.clone()),
        ));
        write_out(path, report::to_json(&full).as_bytes())?;
    }

    summarize(&pipeline, started);
    println!(
        "radial loop:   final amplitude {:.9}  t' {:.9}  stop {}",
        r_end[n - 1],
        r_traj.final_tprime().unwrap_or(0.0),
        stop_name(r_traj.stop),
    );
    println!(
        "bilinear loop: final amplitude {:.9}  t' {:.9}  stop {}",
        xy_r_final[n - 1],
        xy_traj.final_tprime().unwrap_or(0.0),
        stop_name(xy_traj.stop),
    );
    Ok(())
}

fn write_csv_file(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_out(path, &buf)
}

fn cmd_reach(
    path: &Path,
    out: Option<&Path>,
    grid: &str,
    workers: usize,
    cfg: &SolverConfig,
) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = validated_spec(path)?;
    let n = spec.n();
    let counts: Vec<usize> = grid
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Io(format!("bad grid count {part:?}")))
        })
        .collect::<Result<_, _>>()?;
    let counts = match counts.len() {
        1 => vec![counts[0]; n - 1],
        k if k == n - 1 => counts,
        k => {
            return Err(CliError::Io(format!(
                "grid needs 1 or {} counts, found {k}",
                n - 1
            )))
        }
    };
    let grids: Vec<Vec<f64>> = counts
        .iter()
        .zip(spec.p0()[..n - 1].iter())
        .map(|(&c, &hi)| xfermax::reachable::uniform_grid(hi, c))
        .collect();
    let slices = xfermax::reachable::reach_set(&spec, &grids, cfg, workers.max(1))
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let feasible = slices.iter().filter(|s| s.feasible()).count();

    let mut buf = Vec::new();
    xfermax::reachable::write_csv(&slices, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    match out {
        Some(path) => write_out(path, &buf)?,
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    // every reachable peak extends down to zero: holding the pure target
    // direction drains only the target coordinate
    let rates = xfermax::reachable::down_segment_rates(&spec);
    println!(
        "down-segment rates under the pure target direction: {:?} (target rate {:.6} < 0)",
        rates,
        rates[n - 1]
    );
    println!(
        "swept {} slices ({} reachable) in {:.1} ms",
        slices.len(),
        feasible,
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_probe_rank(
    count: usize,
    n_min: usize,
    n_max: usize,
    seed: u64,
    workers: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if n_min < 2 || n_max < n_min {
        return Err(CliError::Io(format!(
            "bad dimension range {n_min}..{n_max}"
        )));
    }
    let report = conjecture_probe(count, n_min..=n_max, seed, workers.max(1));
    let mut text = report.to_json();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => {
            write_out(path, text.as_bytes())?;
            for entry in &report.entries {
                println!(
                    "n={}: rank<=1 in {:.1}% of {} instances ({} failures, worst drift {:.2e})",
                    entry.n,
                    100.0 * entry.fraction_rank_le_1,
                    entry.count,
                    entry.failures,
                    entry.max_objective_drift,
                );
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_repro(case: &str) -> Result<(), CliError> {
    let rows = fixtures::repro_rows(case).map_err(CliError::Numeric)?;
    if fixtures::print_table(&rows) {
        Ok(())
    } else {
        Err(CliError::Numeric("reproduction table has failures".into()))
    }
}
