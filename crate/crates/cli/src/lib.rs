//! Command-line front end for the simulator core: loads scenario files,
//! runs them deterministically, writes metrics and trace files, and
//! renders metrics as tables.
//!
//! Everything lives in the library so tests can drive the exact code
//! path the binary uses; `main` only forwards `std::env::args_os`.

#![forbid(unsafe_code)]

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use aiotsim_core::core_network::{AfRequest, ArchOption, ServiceType, TaskStatus};
use aiotsim_core::scenario::{ScenarioConfig, TaskDecl};
use aiotsim_core::sim::{
    request_from_decl, MetricsReport, NullSink, RunError, Simulation, TraceEvent, TraceSink,
};

/// Exit code for rejected input: an unparseable or invalid scenario, a
/// bad task-stream line, or a malformed metrics file.
pub const EXIT_INVALID: u8 = 1;
/// Exit code for an environment failure: an unreadable file on
/// `validate`, or an output path that cannot be written on `run`.
pub const EXIT_IO: u8 = 2;

/// Environment variable consulted for the output directory when `--out`
/// is not given.
pub const OUT_ENV: &str = "AIOTSIM_OUT";

#[derive(Parser, Debug)]
#[command(
    name = "aiotsim",
    version,
    about = "Deterministic ambient-IoT inventory and command simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario and write metrics.json (plus trace.jsonl with --trace).
    Run(RunArgs),
    /// Check a scenario file and report what it declares.
    Validate {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Render a metrics.json file as a per-task table.
    Summarize {
        /// Metrics file written by `run`.
        metrics: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $AIOTSIM_OUT, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write trace.jsonl, one event per line in time order.
    #[arg(long)]
    pub trace: bool,
    /// Extra task declarations to submit after the scenario's own
    /// tasks: a JSONL file, one task object per line. Lines are
    /// submitted as-is, so requests the scenario's cross-checks would
    /// refuse (say, an unregistered AF) still reach the core and fail
    /// there, which is the point.
    #[arg(long, value_name = "FILE")]
    pub af_commands: Option<PathBuf>,
}

/// Parses `args` and runs the selected subcommand. The binary's whole
/// behaviour, factored out of `main` for tests.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version surface as errors; they are not.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_IO,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Summarize { metrics } => cmd_summarize(&metrics),
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

/// Reads, parses and cross-validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| format!("{} is not a scenario: {e}", path.display()))?;
    config.validate().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(config)
}

/// Parses a JSONL task stream into ready-to-submit requests. Blank
/// lines and `#` comments are skipped; errors carry the line number.
pub fn load_task_stream(path: &Path) -> Result<Vec<AfRequest>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut requests = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let context = |message: String| format!("{}:{}: {message}", path.display(), index + 1);
        let decl: TaskDecl = serde_json::from_str(line)
            .map_err(|e| context(format!("not a task declaration: {e}")))?;
        requests.push(request_from_decl(&decl).map_err(|e| context(e.to_string()))?);
    }
    Ok(requests)
}

/// Runs the scenario's declared tasks, then any injected requests, on
/// a single simulation.
pub fn execute(
    config: &ScenarioConfig,
    injected: &[AfRequest],
    sink: &mut dyn TraceSink,
) -> Result<MetricsReport, RunError> {
    let mut sim = Simulation::new(config, sink)?;
    for decl in &config.tasks {
        let request =
            request_from_decl(decl).expect("validation already checked every declared task");
        sim.submit(&request, sink);
    }
    for request in injected {
        sim.submit(request, sink);
    }
    Ok(sim.finish())
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut config = match load_scenario(&args.scenario) {
        Ok(config) => config,
        Err(message) => return fail(EXIT_INVALID, &message),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let injected = match args.af_commands.as_deref().map(load_task_stream).transpose() {
        Ok(requests) => requests.unwrap_or_default(),
        Err(message) => return fail(EXIT_INVALID, &message),
    };

    let mut events: Vec<TraceEvent> = Vec::new();
    let mut null = NullSink;
    let sink: &mut dyn TraceSink = if args.trace { &mut events } else { &mut null };
    let report = match execute(&config, &injected, sink) {
        Ok(report) => report,
        Err(err) => return fail(EXIT_INVALID, &err.to_string()),
    };

    let out_dir = args
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = fs::create_dir_all(&out_dir) {
        return fail(EXIT_IO, &format!("cannot create {}: {e}", out_dir.display()));
    }

    let metrics_path = out_dir.join("metrics.json");
    let mut json = serde_json::to_string_pretty(&report).expect("metrics always serialize");
    json.push('\n');
    if let Err(e) = fs::write(&metrics_path, json) {
        return fail(EXIT_IO, &format!("cannot write {}: {e}", metrics_path.display()));
    }

    let trace_path = out_dir.join("trace.jsonl");
    if args.trace {
        let mut lines = String::new();
        for event in &events {
            lines.push_str(&serde_json::to_string(event).expect("trace events always serialize"));
            lines.push('\n');
        }
        if let Err(e) = fs::write(&trace_path, lines) {
            return fail(EXIT_IO, &format!("cannot write {}: {e}", trace_path.display()));
        }
    }

    print!("{}", render_table(&report));
    println!("wrote {}", metrics_path.display());
    if args.trace {
        println!("wrote {}", trace_path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_validate(path: &Path) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => return fail(EXIT_IO, &format!("cannot read {}: {e}", path.display())),
    };
    let config: ScenarioConfig = match serde_json::from_str(&text) {
        Ok(config) => config,
        Err(e) => return fail(EXIT_INVALID, &format!("{} is not a scenario: {e}", path.display())),
    };
    if let Err(e) = config.validate() {
        return fail(EXIT_INVALID, &format!("{}: {e}", path.display()));
    }
    println!(
        "valid: {} over {}, {} device(s), {} reader(s), {} task(s)",
        path.display(),
        arch_label(config.arch_option),
        config.devices.len(),
        config.readers.len(),
        config.tasks.len(),
    );
    ExitCode::SUCCESS
}

fn cmd_summarize(path: &Path) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => return fail(EXIT_INVALID, &format!("cannot read {}: {e}", path.display())),
    };
    let report: MetricsReport = match serde_json::from_str(&text) {
        Ok(report) => report,
        Err(e) => {
            return fail(EXIT_INVALID, &format!("{} is not a metrics file: {e}", path.display()))
        }
    };
    print!("{}", render_table(&report));
    ExitCode::SUCCESS
}

fn arch_label(option: ArchOption) -> &'static str {
    match option {
        ArchOption::Top1Direct => "top1Direct",
        ArchOption::Top1Indirect => "top1Indirect",
        ArchOption::Top2ControlPlane => "top2ControlPlane",
        ArchOption::Top2UserPlane => "top2UserPlane",
    }
}

fn service_label(service: ServiceType) -> &'static str {
    match service {
        ServiceType::Inventory => "inventory",
        ServiceType::Command => "command",
    }
}

fn status_label(status: TaskStatus) -> &'static str {
    match status {
        TaskStatus::Pending => "pending",
        TaskStatus::Dispatched => "dispatched",
        TaskStatus::Collecting => "collecting",
        TaskStatus::Done => "done",
        TaskStatus::Failed => "failed",
    }
}

/// The fixed-width per-task table `run` and `summarize` print.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "seed {}, {}, slot {} us, capture p={}",
        report.seed,
        arch_label(report.arch_option),
        report.slot_micros,
        report.capture_probability,
    );
    let _ = writeln!(
        out,
        "{:>4}  {:>6}  {:<9}  {:<10}  {:>7}  {:>8}  {:>6}  {:>7}  {:>6}  {:>12}",
        "task", "taskId", "service", "status", "matched", "reported", "missed", "rejects",
        "frames", "duration(us)",
    );
    for task in &report.tasks {
        let task_id = task.task_id.map_or_else(|| "-".to_string(), |id| id.to_string());
        let _ = writeln!(
            out,
            "{:>4}  {:>6}  {:<9}  {:<10}  {:>7}  {:>8}  {:>6}  {:>7}  {:>6}  {:>12}",
            task.task_index,
            task_id,
            service_label(task.service),
            status_label(task.status),
            task.devices_matched,
            task.devices_reported,
            task.devices_missed,
            task.security_rejects,
            task.frames,
            task.duration_micros,
        );
    }
    for task in report.tasks.iter().filter(|t| t.failure.is_some()) {
        let _ = writeln!(
            out,
            "task {} failed: {}",
            task.task_index,
            task.failure.as_deref().unwrap_or_default(),
        );
    }
    let t = &report.totals;
    let _ = writeln!(
        out,
        "totals: {} done, {} failed; devices {}/{} reported, {} missed; \
         {} duplicate(s) collapsed, {} security reject(s); {} us simulated",
        t.tasks_done,
        t.tasks_failed,
        t.devices_reported,
        t.devices_matched,
        t.devices_missed,
        t.duplicates_collapsed,
        t.security_rejects,
        t.sim_duration_micros,
    );
    out
}
