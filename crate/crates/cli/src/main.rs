use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use bilayer_client::{Client, ClientError};
use bilayer_core::api::{
    ErrorKind, JobOutput, JobStatus, RunRequest, RunSummary, ScenarioSpec, SweepRequest, VerifyRequest,
};
use bilayer_core::sweep::{SweepOptions, SweepReport};
use bilayer_core::verify::VerifyReport;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bilayer",
    version,
    about = "Simulate thermally actuated bilayer plates"
)]
struct Cli {
    /// Service to talk to; without it an in-process service is started.
    #[arg(long, global = true, env = "BILAYER_SERVER")]
    server: Option<String>,

    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write snapshots and diagnostics.
    Run(RunArgs),
    /// Repeat a scenario for ε = 4·10^-j and print stationary cut heights.
    SweepEpsilon(SweepArgs),
    /// Run the manufactured heat solution and the clamped cylinder checks.
    Verify,
    /// List the builtin scenarios.
    Scenarios,
    /// Print the configuration document of a builtin scenario.
    ShowConfig {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Builtin scenario name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the refinement of the published runs for a builtin scenario.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    refine: Option<u32>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory for snapshots and diagnostics.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the plate solve.
    #[arg(long)]
    heat_only: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Inclusive range like `4..9`.
    #[arg(long, default_value = "5..8", value_parser = parse_range)]
    j_range: (i32, i32),
    /// Height of the cut line.
    #[arg(long, default_value_t = 0.0)]
    x2: f64,
}

fn parse_range(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = match e.kind() {
            ErrorKind::Config | ErrorKind::NotFound => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        };
        let mut message = e.to_string();
        if let ClientError::Api(api) = &e {
            if !api.config_errors.is_empty() {
                message = format!("{} configuration error(s)", api.config_errors.len());
                for c in &api.config_errors {
                    message.push_str(&format!("\n  {c}"));
                }
            }
        }
        Failure { code, message }
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

async fn resolve_spec(client: &Client, args: &ScenarioArgs) -> Result<ScenarioSpec, Failure> {
    let mut spec = match (&args.scenario, &args.config) {
        (Some(name), _) => ScenarioSpec::builtin(name),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
            let config = client.parse_config(&text).await.map_err(|e| {
                let mut f = Failure::from(e);
                f.message = format!("{}: {}", path.display(), f.message);
                f
            })?;
            ScenarioSpec::from_config(config)
        }
        (None, None) => return Err(config_failure("give --scenario or --config".into())),
    };
    spec.paper_scale = args.paper_scale;
    spec.refine = args.refine;
    spec.tau = args.tau;
    spec.epsilon = args.epsilon;
    spec.t_max = args.tmax;
    Ok(spec)
}

fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))
}

/// Progress reporter printing at most every two seconds.
fn reporter(quiet: bool) -> impl FnMut(&JobStatus) {
    let mut last = Instant::now();
    move |s: &JobStatus| {
        if quiet || last.elapsed() < Duration::from_secs(2) {
            return;
        }
        last = Instant::now();
        if let Some(p) = &s.progress {
            let prefix = s.sweep_j.map(|j| format!("j={j} ")).unwrap_or_default();
            eprintln!(
                "{prefix}step {}/{} t={:.4} energy={:.6e} stationarity={:.3e}",
                p.step, p.total_steps, p.time, p.energy, p.stationarity
            );
        }
    }
}

const POLL: Duration = Duration::from_millis(200);

async fn cmd_run(client: &Client, args: &RunArgs, quiet: bool) -> Result<(), Failure> {
    let spec = resolve_spec(client, &args.scenario).await?;
    let out = absolute(&args.out)?;
    let job = client
        .start_run(&RunRequest {
            spec,
            out_dir: Some(out.to_string_lossy().into_owned()),
            heat_only: args.heat_only,
        })
        .await?;
    for w in &job.warnings {
        eprintln!("warning: {w}");
    }
    let JobOutput::Run(summary) = client.wait(job.id, POLL, reporter(quiet)).await? else {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "service returned a result of the wrong kind".into(),
        });
    };
    print_run(&summary);
    Ok(())
}

fn print_run(s: &RunSummary) {
    println!("scenario        {}", s.scenario);
    println!("steps           {}", s.steps);
    println!("final time      {}", s.time);
    match s.stationary_at {
        Some(k) => println!("stationary at   step {k}"),
        None => println!("stationary at   not reached"),
    }
    if let Some(e) = s.final_energy {
        println!("final energy    {e:.6e}");
    }
    println!("max defect      {:.3e}", s.max_defect);
    println!("max penetration {:.3e}", s.max_penetration);
    println!(
        "step checks     {} descent / {} constraint failures",
        s.descent_failures, s.constraint_failures
    );
    if let Some(dir) = &s.out_dir {
        println!("output          {dir}");
    }
    for w in &s.warnings {
        println!("warning         {w}");
    }
}

async fn cmd_sweep(client: &Client, args: &SweepArgs, quiet: bool) -> Result<(), Failure> {
    let mut spec = resolve_spec(client, &args.scenario).await?;
    // τ is shared by every run of the sweep.
    let tau = spec.tau.take();
    let job = client
        .start_sweep(&SweepRequest {
            spec,
            options: SweepOptions {
                j_min: args.j_range.0,
                j_max: args.j_range.1,
                tau,
                x2: args.x2,
            },
        })
        .await?;
    let JobOutput::Sweep(report) = client.wait(job.id, POLL, reporter(quiet)).await? else {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "service returned a result of the wrong kind".into(),
        });
    };
    print_sweep(&report);
    Ok(())
}

fn print_sweep(r: &SweepReport) {
    println!("# {} sweep, mesh width {}", r.scenario, r.mesh_width);
    println!("j,epsilon,tau,steps,stationary_step,max_penetration,tip_height");
    for e in &r.entries {
        println!(
            "{},{:e},{:e},{},{},{:.6e},{:.6e}",
            e.j,
            e.epsilon,
            e.tau,
            e.steps,
            e.stationary_at.map_or("-".to_string(), |k| k.to_string()),
            e.max_penetration,
            e.tip_height
        );
    }
    println!("# cut heights y3 at x1");
    if let Some(first) = r.entries.first() {
        let header: Vec<String> = r.entries.iter().map(|e| format!("j{}", e.j)).collect();
        println!("x1,{}", header.join(","));
        for (i, p) in first.cut.iter().enumerate() {
            let row: Vec<String> = r
                .entries
                .iter()
                .map(|e| e.cut.get(i).map_or(String::new(), |q| format!("{:.6e}", q[1])))
                .collect();
            println!("{:.6},{}", p[0], row.join(","));
        }
    }
    println!(
        "# tip heights monotone in epsilon: {}",
        if r.tips_monotone() { "yes" } else { "no" }
    );
}

async fn cmd_verify(client: &Client, quiet: bool) -> Result<(), Failure> {
    let job = client.start_verify(&VerifyRequest::default()).await?;
    let JobOutput::Verify(report) = client.wait(job.id, POLL, reporter(quiet)).await? else {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: "service returned a result of the wrong kind".into(),
        });
    };
    print_verify(&report);
    if report.heat_ok() && report.cylinder_ok() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_SOLVER,
            message: "verification failed".into(),
        })
    }
}

fn print_verify(r: &VerifyReport) {
    let h = &r.heat;
    println!("heat: h, L2 error, order");
    for (i, (hh, e)) in h.spatial_h.iter().zip(&h.spatial_errors).enumerate() {
        let order = if i == 0 {
            String::from("-")
        } else {
            format!("{:.3}", h.spatial_orders[i - 1])
        };
        println!("  {hh:.5}  {e:.4e}  {order}");
    }
    println!("heat: tau, error, order");
    for (i, (t, e)) in h.temporal_tau.iter().zip(&h.temporal_errors).enumerate() {
        let order = if i == 0 {
            String::from("-")
        } else {
            format!("{:.3}", h.temporal_orders[i - 1])
        };
        println!("  {t:.5}  {e:.4e}  {order}");
    }
    let c = &r.cylinder;
    println!(
        "cylinder: target {:.4} fitted {:.4} relative error {:.2}% ({} steps)",
        c.kappa_target,
        c.kappa_fit,
        100.0 * c.relative_error,
        c.steps
    );
    println!(
        "heat order {}  cylinder {}",
        if r.heat_ok() { "ok" } else { "FAILED" },
        if r.cylinder_ok() { "ok" } else { "FAILED" }
    );
}

async fn dispatch(client: &Client, cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(args) => cmd_run(client, args, cli.quiet).await,
        Command::SweepEpsilon(args) => cmd_sweep(client, args, cli.quiet).await,
        Command::Verify => cmd_verify(client, cli.quiet).await,
        Command::Scenarios => {
            for s in client.scenarios().await? {
                println!("{s}");
            }
            Ok(())
        }
        Command::ShowConfig {
            scenario,
            paper_scale,
        } => {
            print!("{}", client.scenario_document(scenario, *paper_scale).await?);
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let client = match &cli.server {
        Some(url) => Client::new(url.clone()),
        None => match bilayer_service::spawn_local().await {
            Ok((addr, _handle)) => Client::new(format!("http://{addr}")),
            Err(e) => {
                eprintln!("error: cannot start the embedded service: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
        },
    };
    match dispatch(&client, &cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
