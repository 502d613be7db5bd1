//! Command-line front end for the invariant geodesic flows: run
//! simulations, audit integral families, probe brackets, and slice
//! trajectory files for plotting.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numerical failure.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use heisenflow::dynamics::{
    conservation_report, helix_solution, integrate, trajectory_csv, HelixParams, Trajectory,
};
use heisenflow::families::family_for;
use heisenflow::poisson::audit;
use heisenflow::systems::{SystemId, SystemKind};

use config::{load_config_file, PartialConfig, ResolvedConfig};

#[derive(Parser)]
#[command(
    name = "heisenflow",
    about = "Geodesic flows of invariant metrics on the Heisenberg group",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a flow and write a trajectory CSV plus a summary JSON.
    Simulate(SimulateArgs),
    /// Estimate ddim/dind of a system's integral family.
    Audit(AuditArgs),
    /// Statistics of |{f, g}| over random chart points.
    Bracket(BracketArgs),
    /// Re-emit selected trajectory columns for external plotting.
    Plotdata(PlotdataArgs),
}

#[derive(Args, Clone)]
struct SystemFlags {
    /// ll-full | ll-reduced | lr-full | lr-reduced | lr-hyperspherical
    #[arg(long)]
    system: Option<String>,
    /// Number of symplectic planes (dimension 2n+1).
    #[arg(long)]
    n: Option<usize>,
    /// Metric diagonal, comma separated, non-increasing with last entry 1.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sigma: Option<Vec<f64>>,
    /// Center weight of the metric (τ > 0).
    #[arg(long)]
    tau: Option<f64>,
    /// Level constant of the central momentum (reduced systems).
    #[arg(long)]
    c: Option<f64>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 64-bit seed for anything random.
    #[arg(long)]
    seed: Option<u64>,
}

impl SystemFlags {
    fn as_partial(&self) -> PartialConfig {
        PartialConfig {
            system: self.system.clone(),
            n: self.n,
            sigma: self.sigma.clone(),
            tau: self.tau,
            c: self.c,
            seed: self.seed,
            ..PartialConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sys: SystemFlags,
    /// Initial state: "random", "state:v1,v2,…", or "helix:a…,b…,c…,d…,c0".
    #[arg(long)]
    init: Option<String>,
    /// λ_{2n+1} used by helix initial data.
    #[arg(long)]
    lambda_z: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// dopri | rk4 | implicit-midpoint
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Fixed step for rk4 / implicit-midpoint.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Parallel workers for batch config files.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    sys: SystemFlags,
    /// Sample points (at least 30).
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BracketArgs {
    #[command(flatten)]
    sys: SystemFlags,
    /// First field name (a family member or "H").
    #[arg(long)]
    f: String,
    /// Second field name.
    #[arg(long)]
    g: String,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotdataArgs {
    /// Trajectory CSV produced by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// "x1:y1", "x1:y1:z", "angles", or any colon-separated column list.
    #[arg(long)]
    projection: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Bracket(args) => cmd_bracket(args),
        Command::Plotdata(args) => cmd_plotdata(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, msg) = match &e {
                CliError::Config(m) => (e.code(), m),
                CliError::Numerical(m) => (e.code(), m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn resolve(flags: &SystemFlags, extra: PartialConfig) -> Result<Vec<ResolvedConfig>, CliError> {
    let from_file = match &flags.config {
        Some(path) => load_config_file(path).map_err(CliError::Config)?,
        None => vec![PartialConfig::default()],
    };
    from_file
        .into_iter()
        .map(|file_part| {
            let merged = file_part
                .overridden_by(flags.as_partial())
                .overridden_by(extra.clone());
            ResolvedConfig::from_partial(&merged).map_err(CliError::Config)
        })
        .collect()
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

// --- simulate -----------------------------------------------------------------

#[derive(Serialize)]
struct Drift {
    name: String,
    drift: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    config: ResolvedConfig,
    chart_dim: usize,
    state_names: Vec<String>,
    nodes: usize,
    t_end: f64,
    energy_drift: f64,
    integral_drifts: Vec<Drift>,
    #[serde(skip_serializing_if = "Option::is_none")]
    helix_sup_deviation: Option<f64>,
    initial_state: Vec<f64>,
    final_state: Vec<f64>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let extra = PartialConfig {
        init: args.init.clone(),
        lambda_z: args.lambda_z,
        t_end: args.t_end,
        method: args.method.clone(),
        rel_tol: args.rel_tol,
        abs_tol: args.abs_tol,
        step: args.step,
        out_csv: args.out_csv.clone(),
        out_json: args.out_json.clone(),
        ..PartialConfig::default()
    };
    let configs = resolve(&args.sys, extra)?;
    if configs.len() == 1 {
        return run_one_simulation(&configs[0], true);
    }
    // batch sweep: every entry must name its outputs
    for (i, c) in configs.iter().enumerate() {
        if c.out_json.is_none() && c.out_csv.is_none() {
            return Err(CliError::Config(format!(
                "batch entry {i} names no out_csv/out_json"
            )));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<(), CliError>> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|c| run_one_simulation(c, false))
            .collect()
    });
    let mut numerical = None;
    for r in results {
        match r {
            Ok(()) => {}
            Err(e @ CliError::Config(_)) => return Err(e),
            Err(e) => numerical = Some(e),
        }
    }
    numerical.map_or(Ok(()), Err)
}

fn run_one_simulation(cfg: &ResolvedConfig, echo: bool) -> Result<(), CliError> {
    let sys = cfg.system_id().map_err(CliError::Config)?;
    let method = cfg.integration_method().map_err(CliError::Config)?;
    let (x0, helix) = initial_state(cfg, &sys)?;
    let traj = integrate(&sys, x0.as_slice(), cfg.t_end, method)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let family = family_for(&sys);
    let report = conservation_report(&traj, &family)
        .map_err(|e| CliError::Numerical(format!("integral evaluation failed: {e}")))?;
    let csv = trajectory_csv(&traj, Some(&family))
        .map_err(|e| CliError::Numerical(format!("integral evaluation failed: {e}")))?;

    let helix_sup_deviation = helix.map(|h| helix_deviation(&traj, &h));

    let summary = SimulateSummary {
        chart_dim: sys.chart_dim(),
        state_names: sys.state_names(),
        nodes: traj.times.len(),
        t_end: traj.t_end(),
        energy_drift: traj.energy_drift(),
        integral_drifts: report
            .into_iter()
            .map(|(name, drift)| Drift { name, drift })
            .collect(),
        helix_sup_deviation,
        initial_state: x0.as_slice().to_vec(),
        final_state: traj.final_state().as_slice().to_vec(),
        config: cfg.clone(),
    };
    let json =
        serde_json::to_string_pretty(&summary).expect("summary serialization cannot fail");

    if let Some(path) = &cfg.out_csv {
        std::fs::write(path, &csv)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    match &cfg.out_json {
        Some(path) => std::fs::write(path, &json)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?,
        None if echo => println!("{json}"),
        None => {}
    }
    Ok(())
}

fn initial_state(
    cfg: &ResolvedConfig,
    sys: &SystemId,
) -> Result<(DVector<f64>, Option<HelixParams>), CliError> {
    let init = cfg.init.trim();
    if init == "random" {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        return Ok((sys.sample_state(&mut rng), None));
    }
    if let Some(rest) = init.strip_prefix("state:") {
        let vals = parse_floats(rest).map_err(CliError::Config)?;
        sys.check_state(&vals)
            .map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((DVector::from_vec(vals), None));
    }
    if let Some(rest) = init.strip_prefix("helix:") {
        if sys.kind() != SystemKind::LlFull {
            return Err(CliError::Config(
                "helix initial data applies to --system ll-full".into(),
            ));
        }
        let vals = parse_floats(rest).map_err(CliError::Config)?;
        let n = sys.n();
        if vals.len() != 4 * n + 1 {
            return Err(CliError::Config(format!(
                "helix:… needs 4n+1 = {} numbers (a…, b…, c…, d…, c0), got {}",
                4 * n + 1,
                vals.len()
            )));
        }
        let helix = HelixParams::new(
            sys.spec(),
            cfg.lambda_z,
            vals[0..n].to_vec(),
            vals[n..2 * n].to_vec(),
            vals[2 * n..3 * n].to_vec(),
            vals[3 * n..4 * n].to_vec(),
            vals[4 * n],
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((helix.full_state(0.0), Some(helix)));
    }
    Err(CliError::Config(format!(
        "unknown --init '{init}' (expected random, state:…, helix:…)"
    )))
}

fn parse_floats(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number '{tok}': {e}"))
        })
        .collect()
}

fn helix_deviation(traj: &Trajectory, helix: &HelixParams) -> f64 {
    let n = helix.n();
    let t_end = traj.t_end();
    let mut sup = 0.0_f64;
    for i in 0..=1000 {
        let t = t_end * i as f64 / 1000.0;
        let numeric = traj.sample(t);
        let exact = helix_solution(helix, t);
        for j in 0..2 * n + 1 {
            sup = sup.max((numeric[j] - exact[j]).abs());
        }
    }
    sup
}

// --- audit ----------------------------------------------------------------------

fn cmd_audit(args: AuditArgs) -> Result<(), CliError> {
    let configs = resolve(&args.sys, PartialConfig::default())?;
    let cfg = &configs[0];
    let sys = cfg.system_id().map_err(CliError::Config)?;
    let family = family_for(&sys);
    let report = audit(&family, args.points, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;

    println!(
        "system {}\nmembers {}\nddim {}  dind {}  chart {}  complete {}  gram-rank {}  max|{{f,g}}| {:.3e}",
        report.system,
        report.members.join(" "),
        report.ddim,
        report.dind,
        report.chart_dim,
        report.complete,
        report.gram_rank,
        report.gram_max_abs,
    );
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serialization");
        std::fs::write(path, json)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

// --- bracket ---------------------------------------------------------------------

#[derive(Serialize)]
struct BracketStats {
    system: String,
    f: String,
    g: String,
    points: usize,
    seed: u64,
    min_abs: f64,
    max_abs: f64,
    mean_abs: f64,
}

fn cmd_bracket(args: BracketArgs) -> Result<(), CliError> {
    let configs = resolve(&args.sys, PartialConfig::default())?;
    let cfg = &configs[0];
    let sys = cfg.system_id().map_err(CliError::Config)?;
    let family = family_for(&sys);
    let chart = family.chart.clone();

    let lookup = |name: &str| {
        if name == "H" {
            return Ok(chart.hamiltonian());
        }
        family.member(name).cloned().ok_or_else(|| {
            CliError::Config(format!(
                "unknown field '{name}'; available: H {}",
                family.names().join(" ")
            ))
        })
    };
    let f = lookup(&args.f)?;
    let g = lookup(&args.g)?;

    let tensor = chart.poisson_tensor();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_abs = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    let mut sum = 0.0;
    for _ in 0..args.points {
        let s = chart.sample_state(&mut rng);
        let v = tensor.bracket(&f, &g, s.as_slice()).abs();
        min_abs = min_abs.min(v);
        max_abs = max_abs.max(v);
        sum += v;
    }
    let stats = BracketStats {
        system: chart.to_string(),
        f: args.f,
        g: args.g,
        points: args.points,
        seed: cfg.seed,
        min_abs,
        max_abs,
        mean_abs: sum / args.points as f64,
    };
    let json = serde_json::to_string_pretty(&stats).expect("stats serialization");
    write_or_print(&args.out, &json)
}

// --- plotdata ---------------------------------------------------------------------

fn cmd_plotdata(args: PlotdataArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.input.display())))?;
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) if !h.trim().is_empty() => h,
        _ => return write_or_print(&args.out, ""), // empty file → empty output
    };
    let columns: Vec<&str> = header.split(',').collect();

    let wanted: Vec<String> = if args.projection == "angles" {
        let angles: Vec<String> = columns
            .iter()
            .filter(|c| c.starts_with("th"))
            .map(|c| c.to_string())
            .collect();
        if angles.is_empty() {
            return Err(CliError::Config(
                "no angle columns in this file; available: ".to_string() + &columns.join(" "),
            ));
        }
        angles
    } else {
        args.projection.split(':').map(str::to_string).collect()
    };

    let mut indices = Vec::with_capacity(wanted.len());
    for name in &wanted {
        match columns.iter().position(|c| c == name) {
            Some(i) => indices.push(i),
            None => {
                return Err(CliError::Config(format!(
                    "unknown column '{name}'; available: {}",
                    columns.join(" ")
                )))
            }
        }
    }

    let mut out = String::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let row: Vec<&str> = indices.iter().map(|&i| fields[i]).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    match &args.out {
        Some(p) => std::fs::write(p, out)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(out.as_bytes()).ok();
            Ok(())
        }
    }
}
