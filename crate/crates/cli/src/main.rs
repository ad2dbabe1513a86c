//! Command-line driver: analyze one program, or run the benchmark suite.

mod bench;
mod levelsets;

use clap::{Args, Parser, Subcommand};
use quadtempl::engine::{self, EngineConfig, InitialPolicy, Method, RunStatus};
use quadtempl::frontend::{self, TemplateSet};
use quadtempl::ir::{validate, EquationSystem};
use quadtempl::report::{ConfigEcho, Report};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "quadtempl", about = "Quadratic template invariant analyzer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a single program.
    Analyze(AnalyzeArgs),
    /// Run every program of a benchmark suite directory and print a
    /// comparison table.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Program source file.
    program: PathBuf,
    /// Template basis (JSON).
    #[arg(long)]
    templates: PathBuf,
    /// Fixpoint method.
    #[arg(long, value_parser = ["kleene", "policy"], default_value = "policy")]
    method: String,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Kleene acceleration window on/off.
    #[arg(long, value_parser = ["on", "off"], default_value = "on")]
    accel: String,
    /// Initial policy: a JSON file path, `guards`, or `warmup:K`.
    #[arg(long, default_value = "guards")]
    initial_policy: String,
    /// Constraint margin of the least-fixpoint programs.
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    /// Direct bounds for constant coordinates (JSON), overriding derived
    /// values.
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Write the report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sample the final sub-level sets onto a CSV grid for plotting.
    #[arg(long)]
    emit_levelsets: Option<PathBuf>,
    /// SDP feasibility tolerance.
    #[arg(long, default_value_t = 1e-7)]
    feas_tol: f64,
    /// SDP duality-gap tolerance.
    #[arg(long, default_value_t = 1e-7)]
    gap_tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze(args) => match analyze(&args) {
            Ok(code) => code,
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        },
        Command::Bench(args) => match bench::run(&args) {
            Ok(code) => code,
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        },
    }
}

/// Everything `analyze` and the bench harness share: parse, lower, apply
/// bounds overrides, validate.
pub(crate) fn load_system(
    program: &Path,
    templates: &Path,
    bounds: Option<&Path>,
    cfg: &EngineConfig,
) -> Result<(EquationSystem, TemplateSet, f64), String> {
    let t0 = Instant::now();
    let source = std::fs::read_to_string(program)
        .map_err(|e| format!("cannot read {}: {e}", program.display()))?;
    let template_text = std::fs::read_to_string(templates)
        .map_err(|e| format!("cannot read {}: {e}", templates.display()))?;
    let set = frontend::parse_templates(&template_text).map_err(|e| e.to_string())?;
    let ast = frontend::parse(&source).map_err(|e| e.to_string())?;
    let lowered = frontend::lower(&ast, &set, &cfg.sdp).map_err(|e| e.to_string())?;
    let mut sys = lowered.system;
    for note in &lowered.notes {
        eprintln!("note: {note}");
    }
    if let Some(bpath) = bounds {
        let btext = std::fs::read_to_string(bpath)
            .map_err(|e| format!("cannot read {}: {e}", bpath.display()))?;
        for (coord, row) in frontend::parse_bounds(&btext, &sys).map_err(|e| e.to_string())? {
            sys.override_const(coord, row)?;
        }
    }
    let diags = validate(&sys);
    if !diags.is_empty() {
        let msgs: Vec<String> =
            diags.iter().map(|d| format!("coordinate {}: {}", d.coord + 1, d.message)).collect();
        return Err(format!("ill-formed system:\n{}", msgs.join("\n")));
    }
    Ok((sys, set, t0.elapsed().as_secs_f64()))
}

pub(crate) fn parse_initial_policy(
    spec: &str,
    sys: &EquationSystem,
) -> Result<InitialPolicy, String> {
    if spec == "guards" {
        return Ok(InitialPolicy::FromGuards);
    }
    if let Some(k) = spec.strip_prefix("warmup:") {
        let k: usize = k.parse().map_err(|_| format!("bad warmup count {k:?}"))?;
        return Ok(InitialPolicy::FromKleeneWarmup(k));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| format!("cannot read {spec}: {e}"))?;
    let policy = frontend::parse_policy(&text, sys).map_err(|e| e.to_string())?;
    Ok(InitialPolicy::Given(policy))
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode, String> {
    let mut cfg = EngineConfig::default();
    cfg.method = if args.method == "kleene" { Method::Kleene } else { Method::Policy };
    cfg.max_iters = args.max_iters;
    cfg.accel.enabled = args.accel == "on";
    cfg.eps_margin = args.eps;
    cfg.sdp.feas_tol = args.feas_tol;
    cfg.sdp.gap_tol = args.gap_tol;

    let (sys, _set, parse_s) =
        load_system(&args.program, &args.templates, args.bounds.as_deref(), &cfg)?;
    cfg.initial_policy = parse_initial_policy(&args.initial_policy, &sys)?;

    let trace = engine::run(&sys, &cfg).map_err(|e| e.to_string())?;

    let program_name = args
        .program
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.program.display().to_string());
    let report = Report::from_trace(
        &program_name,
        cfg.method,
        &sys,
        &trace,
        parse_s,
        ConfigEcho {
            max_iters: cfg.max_iters,
            accel: cfg.accel.enabled,
            feas_tol: cfg.sdp.feas_tol,
            gap_tol: cfg.sdp.gap_tol,
            eps_margin: cfg.eps_margin,
            initial_policy: args.initial_policy.clone(),
        },
    );

    println!(
        "{}: {} after {} iterations ({} improvements)",
        program_name, report.status, report.iterations, report.improvements
    );
    for (coord, row) in &report.bounds {
        println!("  [{coord}]");
        for (name, bound) in row {
            println!("    {name}(x) <= {bound}");
        }
    }

    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        std::fs::write(path, json).map_err(|e| format!("cannot write report: {e}"))?;
    }
    if let Some(path) = &args.emit_levelsets {
        levelsets::emit(path, &sys, &trace.value).map_err(|e| e.to_string())?;
    }

    Ok(match trace.status {
        RunStatus::Fixpoint | RunStatus::Postfixpoint(_) => ExitCode::SUCCESS,
        RunStatus::NotConverged => ExitCode::from(2),
    })
}
