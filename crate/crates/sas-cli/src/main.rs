//! `sas` — command-line front-end for the stochastic-action-set MDP toolkit.
//!
//! Subcommands: `solve` (exact solvers with optional brute-force oracle
//! cross-check), `learn` (tabular Q-learning on simulated trajectories),
//! `curve` (two-state availability sweep), `routing` (synthetic bridge
//! network comparison). Exit codes: 0 success, 2 parse/validation error,
//! 3 convergence failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sas_mdp::backup::greedy_dl;
use sas_mdp::embedded::{build_embedded, compress_value, solve_embedded_vi};
use sas_mdp::experiments::{
    example_curve, oblivious_dl, routing_comparison, ExperimentError, RoutingParams,
};
use sas_mdp::io::{fmt_sig9, read_instance_file, write_trajectory_log};
use sas_mdp::lp::{solve_lp, LpError, LpOptions};
use sas_mdp::rl::{
    compressed_value_from_q, sas_q_learning_logged, LearningConfig, RlError, StartState,
};
use sas_mdp::solve::{policy_evaluation, value_iteration, SolveError, ViOptions};
use sas_mdp::{DecisionListPolicy, Instance};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "sas",
    version,
    about = "Solvers and learning for MDPs with stochastic action sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and print values and the decision-list policy.
    Solve(SolveArgs),
    /// Run tabular Q-learning on an instance and emit a return-trace CSV.
    Learn(LearnArgs),
    /// Sweep the two-state example's availability probability to CSV.
    Curve(CurveArgs),
    /// Compare availability-aware and oblivious routing on a bridge graph.
    Routing(RoutingArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Vi,
    Pi,
    Lp,
    Embedded,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "vi")]
    solver: Solver,
    /// Target optimality gap for value iteration.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Constraint-violation tolerance for the LP solver.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Sweep budget for value iteration.
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Master seed (sampler-model sweeps).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws per state per sweep when the availability model is a sampler.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Cross-check against the brute-force embedded solver.
    #[arg(long)]
    oracle: bool,
    /// Also write a JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Total environment steps (episodes * horizon, rounded up).
    #[arg(long, default_value_t = 200_000)]
    steps: usize,
    /// Steps per episode.
    #[arg(long, default_value_t = 200)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed start state; omitted = uniform restarts.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    eps_start: f64,
    #[arg(long, default_value_t = 0.05)]
    eps_end: f64,
    #[arg(long, default_value_t = 0.0)]
    q_init: f64,
    /// Write the return-trace CSV here (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the full trajectory as JSON lines.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    /// Availability grid as start:end:count (inclusive) or a comma list.
    #[arg(long, default_value = "0.05:1.0:20")]
    p_grid: String,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RoutingArgs {
    /// Total nodes in the generated graph (two chains sharing endpoints).
    #[arg(long, default_value_t = 7)]
    nodes: usize,
    /// Bridge availability grid.
    #[arg(long, default_value = "0.1,0.2,0.4,0.8,1.0")]
    p_grid: String,
    #[arg(long, default_value_t = 0.5)]
    edge_avail: f64,
    #[arg(long, default_value_t = 1.0)]
    noop_cost: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Remove the bridge edge from the graph entirely (single comparison).
    #[arg(long)]
    no_bridge: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code mandated for its class.
struct CliError {
    code: u8,
    kind: String,
    message: String,
    details: Vec<String>,
}

impl CliError {
    fn new(code: u8, kind: &str, message: impl ToString) -> Self {
        CliError {
            code,
            kind: kind.to_string(),
            message: message.to_string(),
            details: Vec::new(),
        }
    }

    fn emit(&self) -> ExitCode {
        let block = json!({
            "error": {
                "kind": self.kind,
                "message": self.message,
                "details": self.details,
            }
        });
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&block).expect("error block serializes")
        );
        ExitCode::from(self.code)
    }
}

fn variant_name<E: std::fmt::Debug>(err: &E) -> String {
    let debug = format!("{err:?}");
    debug
        .split(['(', '{', ' '])
        .next()
        .unwrap_or("Error")
        .to_string()
}

impl From<sas_mdp::io::IoError> for CliError {
    fn from(err: sas_mdp::io::IoError) -> Self {
        match err {
            sas_mdp::io::IoError::Validation(errors) => {
                let mut e =
                    CliError::new(2, &variant_name(&errors[0]), "instance failed validation");
                e.details = errors.iter().map(|v| v.to_string()).collect();
                e
            }
            sas_mdp::io::IoError::Parse(p) => CliError::new(2, "Parse", p),
            other => CliError::new(1, "Io", other),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(err: SolveError) -> Self {
        let code = match &err {
            SolveError::NotConverged(_) | SolveError::PolicyCycle(_) => 3,
            _ => 2,
        };
        CliError::new(code, &variant_name(&err), err)
    }
}

impl From<LpError> for CliError {
    fn from(err: LpError) -> Self {
        let code = match &err {
            LpError::MaxRoundsExceeded { .. } | LpError::Stalled => 3,
            _ => 2,
        };
        CliError::new(code, &variant_name(&err), err)
    }
}

impl From<RlError> for CliError {
    fn from(err: RlError) -> Self {
        CliError::new(2, &variant_name(&err), err)
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::Solve(e) => e.into(),
            other => CliError::new(2, &variant_name(&other), other),
        }
    }
}

impl From<sas_mdp::embedded::EmbeddedError> for CliError {
    fn from(err: sas_mdp::embedded::EmbeddedError) -> Self {
        CliError::new(2, &variant_name(&err), err)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Learn(args) => cmd_learn(args),
        Command::Curve(args) => cmd_curve(args),
        Command::Routing(args) => cmd_routing(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => err.emit(),
    }
}

fn format_dl(policy: &DecisionListPolicy, s: usize) -> String {
    let order: Vec<String> = policy.order(s).iter().map(|k| k.to_string()).collect();
    format!("[{}]", order.join(", "))
}

fn write_output(path: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, contents)
            .map_err(|e| CliError::new(1, "Io", format!("writing {}: {e}", p.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let inst = read_instance_file(&args.instance)?;
    let started = Instant::now();

    let (label, values, policy, work) = match args.solver {
        Solver::Vi => {
            let sol = value_iteration(
                &inst,
                &ViOptions {
                    eps: args.eps,
                    max_iters: args.max_iters,
                    ads_samples: args.samples,
                    seed: args.seed,
                },
            )?;
            let work = format!(
                "converged in {} iterations (final residual {})",
                sol.iterations,
                fmt_sig9(sol.residuals.last().copied().unwrap_or(0.0))
            );
            ("vi", sol.values, sol.policy, work)
        }
        Solver::Pi => {
            let sol = sas_mdp::solve::policy_iteration(&inst, None)?;
            let work = format!(
                "stabilized after {} evaluate-improve rounds",
                sol.iterations
            );
            ("pi", sol.values, sol.policy, work)
        }
        Solver::Lp => {
            let sol = solve_lp(
                &inst,
                &LpOptions {
                    tol: args.tol,
                    ..Default::default()
                },
            )?;
            let work = format!(
                "{} constraint-generation rounds, {} active constraints",
                sol.rounds, sol.constraints
            );
            ("lp", sol.values, sol.policy, work)
        }
        Solver::Embedded => {
            let emb = build_embedded(&inst)?;
            let sol = solve_embedded_vi(&emb, args.eps);
            let values = compress_value(&emb, &sol.values);
            let policy = greedy_dl(&sas_mdp::solve::one_step_q(&inst, &values));
            let work = format!(
                "embedded space: {} states, {} iterations",
                emb.n_embedded_states(),
                sol.iterations
            );
            ("embedded", values, policy, work)
        }
    };
    let elapsed = started.elapsed();

    println!(
        "instance: {} ({} states, {} actions, discount {})",
        args.instance.display(),
        inst.n_states(),
        inst.n_actions(),
        inst.discount()
    );
    println!("solver: {label}");
    println!("{work}");
    for s in 0..inst.n_states() {
        println!(
            "state {s}: V = {}  DL = {}",
            fmt_sig9(values.get(s)),
            format_dl(&policy, s)
        );
    }

    let oracle_gap = if args.oracle {
        let emb = build_embedded(&inst)?;
        let oracle = compress_value(&emb, &solve_embedded_vi(&emb, args.eps).values);
        let gap = values.max_abs_diff(&oracle);
        println!("oracle: max |dV| = {}", fmt_sig9(gap));
        Some(gap)
    } else {
        None
    };
    println!("wall time: {:.3} ms", elapsed.as_secs_f64() * 1e3);

    if let Some(out) = &args.out {
        let report = json!({
            "instance": args.instance.display().to_string(),
            "solver": label,
            "values": values.as_slice(),
            "policy": policy.orders(),
            "work": work,
            "oracle_max_dv": oracle_gap,
            "wall_time_ms": elapsed.as_secs_f64() * 1e3,
        });
        std::fs::write(
            out,
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .map_err(|e| CliError::new(1, "Io", format!("writing {}: {e}", out.display())))?;
    }
    Ok(())
}

fn cmd_learn(args: LearnArgs) -> Result<(), CliError> {
    let inst = read_instance_file(&args.instance)?;
    if args.horizon == 0 || args.steps == 0 {
        return Err(RlError::BadEpisodeCount.into());
    }
    let episodes = args.steps.div_ceil(args.horizon);
    let config = LearningConfig {
        episodes,
        horizon: args.horizon,
        seed: args.seed,
        q_init: args.q_init,
        start: match args.start {
            Some(s) => StartState::Fixed(s),
            None => StartState::Uniform,
        },
        exploration: sas_mdp::rl::ExplorationSchedule {
            eps_start: args.eps_start,
            eps_end: args.eps_end,
            decay_fraction: 0.5,
        },
        ..Default::default()
    };

    let mut trajectory = Vec::new();
    let keep_trajectory = args.trajectories.is_some();
    let result = sas_q_learning_logged(&inst, &config, |record| {
        if keep_trajectory {
            trajectory.push(record);
        }
    })?;

    if let Some(path) = &args.trajectories {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::new(1, "Io", format!("creating {}: {e}", path.display())))?;
        write_trajectory_log(std::io::BufWriter::new(file), &trajectory)
            .map_err(|e| CliError::new(1, "Io", e))?;
    }

    // Return trace: trailing-100-episode mean and the epsilon in force at
    // each episode's first step.
    let total_steps = (config.episodes * config.horizon) as u64;
    let mut csv = String::from("episode,mean_return,epsilon\n");
    for episode in 0..result.episode_returns.len() {
        let window_start = episode.saturating_sub(99);
        let window = &result.episode_returns[window_start..=episode];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let eps = epsilon_at(&config, (episode * config.horizon) as u64, total_steps);
        csv.push_str(&format!("{episode},{},{}\n", fmt_sig9(mean), fmt_sig9(eps)));
    }
    write_output(&args.out, &csv)?;

    let policy = greedy_dl(&result.q);
    eprintln!("steps: {}", result.steps);
    for s in 0..inst.n_states() {
        eprintln!("state {s}: greedy DL = {}", format_dl(&policy, s));
    }
    match compressed_value_from_q(&inst, &result.q) {
        Ok(v) => {
            for s in 0..inst.n_states() {
                eprintln!("state {s}: V(Q) = {}", fmt_sig9(v.get(s)));
            }
        }
        Err(_) => eprintln!("state values: unavailable (sampler availability model)"),
    }
    Ok(())
}

fn epsilon_at(config: &LearningConfig, step: u64, total_steps: u64) -> f64 {
    let expl = &config.exploration;
    let cut = (expl.decay_fraction * total_steps as f64).max(1.0);
    if (step as f64) >= cut {
        expl.eps_end
    } else {
        expl.eps_start + (expl.eps_end - expl.eps_start) * step as f64 / cut
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::new(2, "BadGrid", msg);
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected start:end:count, got {spec}")));
        }
        let start: f64 = parts[0]
            .parse()
            .map_err(|_| bad(format!("bad start in {spec}")))?;
        let end: f64 = parts[1]
            .parse()
            .map_err(|_| bad(format!("bad end in {spec}")))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| bad(format!("bad count in {spec}")))?;
        if count < 2 {
            return Err(bad("grid needs at least 2 points".into()));
        }
        Ok((0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect())
    } else {
        spec.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad value {tok}")))
            })
            .collect()
    }
}

fn cmd_curve(args: CurveArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.p_grid)?;
    let points = example_curve(&grid, args.gamma)?;
    let mut csv = String::from("p,v_sas,v_naive,fraction_lost\n");
    for point in points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig9(point.p),
            fmt_sig9(point.v_sas),
            fmt_sig9(point.v_naive),
            fmt_sig9(point.fraction_lost)
        ));
    }
    write_output(&args.out, &csv)
}

fn cmd_routing(args: RoutingArgs) -> Result<(), CliError> {
    let params = RoutingParams {
        nodes: args.nodes,
        bridge_prob: None,
        edge_avail: args.edge_avail,
        noop_cost: args.noop_cost,
        seed: args.seed,
        ..Default::default()
    };

    let mut csv = String::from("p,sas_expected_cost,oblivious_expected_cost\n");
    if args.no_bridge {
        let routing = sas_mdp::experiments::routing_instance(&params)?;
        let (sas_cost, oblivious_cost) = evaluate_routing(&routing.inst, routing.source)?;
        csv.push_str(&format!(
            "none,{},{}\n",
            fmt_sig9(sas_cost),
            fmt_sig9(oblivious_cost)
        ));
    } else {
        let grid = parse_grid(&args.p_grid)?;
        for point in routing_comparison(&params, &grid)? {
            csv.push_str(&format!(
                "{},{},{}\n",
                fmt_sig9(point.p),
                fmt_sig9(point.sas_cost),
                fmt_sig9(point.oblivious_cost)
            ));
        }
    }
    write_output(&args.out, &csv)
}

fn evaluate_routing(inst: &Instance, source: usize) -> Result<(f64, f64), CliError> {
    let sas = value_iteration(inst, &ViOptions::default())?.policy;
    let sas_cost = -policy_evaluation(inst, &sas)?.get(source);
    let oblivious = oblivious_dl(inst)?;
    let oblivious_cost = -policy_evaluation(inst, &oblivious)?.get(source);
    Ok((sas_cost, oblivious_cost))
}
