use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use questprobe::harness::{
    load_metadata, load_rules, load_scenario, reachable, render_suite_markdown, run_suite, scenario_files,
    SuiteReport,
};
use questprobe::oracles::{parse_report, render_markdown};
use questprobe::sim::DEFAULT_STATE_CAP;
use questprobe::{BackendKind, BackendParams, RunConfig, SuiteConfig};

const EXIT_BUGS: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "questprobe", version, about = "Automated quest testing against simulated game worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent over a scenario suite and write the suite report.
    Run(RunArgs),
    /// Dump the exhaustive reachability graph of each scenario.
    OracleGraph(GraphArgs),
    /// Check scenario, metadata and rules files without running anything.
    Validate(ValidateArgs),
    /// Render JSON issue or suite reports as markdown.
    Report(ReportArgs),
}

#[derive(Args)]
struct Inputs {
    /// Scenario files or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    scenarios: Vec<PathBuf>,
    /// Game metadata (abstraction units).
    #[arg(long)]
    metadata: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Feasibility and relevance rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// mock-greedy, mock-scripted or remote.
    #[arg(long, default_value = "mock-greedy", value_parser = parse_backend)]
    backend: BackendKind,
    /// Chat-completion endpoint for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Reply script for the scripted mock.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Actions without progress before reflecting.
    #[arg(long)]
    reflect_threshold: Option<usize>,
    /// Bug suspicions in a row before a run is abandoned.
    #[arg(long)]
    escalations: Option<usize>,
    /// Per-task limit in simulator ticks.
    #[arg(long)]
    time_limit: Option<u64>,
    /// Timing oracle multiplier.
    #[arg(long)]
    sensitivity: Option<f64>,
    /// Report issues without matching them to injected faults.
    #[arg(long)]
    no_ground_truth: bool,
    /// Directory for the suite report, issue reports and persisted memory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    state_cap: usize,
    /// Write one `<id>.graph.tsv` per scenario here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON reports, or directories containing them.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Write one `<name>.md` per report here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

/// A failure that maps to the configuration exit code.
struct ConfigError(String);

impl<E: std::fmt::Display> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::OracleGraph(a) => oracle_graph(a),
        Command::Validate(a) => validate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn run(a: RunArgs) -> Result<u8, ConfigError> {
    let mut backend = BackendParams::new(a.backend);
    backend.endpoint = a.endpoint;
    backend.script = a.script;
    if let Some(m) = a.model {
        backend.model = m;
    }
    let defaults = RunConfig::default();
    let run = RunConfig {
        reflect_threshold: a.reflect_threshold.unwrap_or(defaults.reflect_threshold),
        escalation_limit: a.escalations.unwrap_or(defaults.escalation_limit),
        time_limit: a.time_limit.unwrap_or(defaults.time_limit),
        sensitivity: a.sensitivity.unwrap_or(defaults.sensitivity),
        ..defaults
    };
    let mut config = SuiteConfig::new(a.inputs.scenarios, a.inputs.metadata, backend);
    config.rules = a.rules;
    config.runs = a.runs;
    config.seed = a.seed;
    config.run = run;
    config.out = a.out;
    config.ground_truth = !a.no_ground_truth;
    let suite = run_suite(&config)?;
    print!("{}", render_suite_markdown(&suite.report));
    let failed: Vec<_> = suite.report.tasks.iter().filter(|t| t.error.is_some()).collect();
    if !failed.is_empty() {
        let ids: Vec<&str> = failed.iter().map(|t| t.task_id.as_str()).collect();
        return Err(ConfigError(format!("scenarios failed to run: {}", ids.join(", "))));
    }
    let issues: usize = suite.results.iter().flatten().map(|r| r.findings.len()).sum();
    Ok(if issues > 0 { EXIT_BUGS } else { 0 })
}

fn oracle_graph(a: GraphArgs) -> Result<u8, ConfigError> {
    let meta = load_metadata(&a.inputs.metadata)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    for path in scenario_files(&a.inputs.scenarios)? {
        let spec = load_scenario(&path)?;
        let g = reachable(&spec, &meta, a.state_cap).map_err(|e| format!("{}: {e}", spec.id))?;
        let summary = format!(
            "{}: {} states, {} effective actions, {} edges, completable {}",
            spec.id,
            g.nodes.len(),
            g.effective_actions().len(),
            g.edges.len(),
            g.completable
        );
        match &a.out {
            Some(dir) => {
                let file = dir.join(format!("{}.graph.tsv", spec.id));
                fs::write(&file, g.to_edge_list()).map_err(|e| format!("{}: {e}", file.display()))?;
                println!("{summary}");
            }
            None => print!("{}", g.to_edge_list()),
        }
    }
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<u8, ConfigError> {
    let meta = load_metadata(&a.inputs.metadata).map_err(|e| format!("{}: {e}", a.inputs.metadata.display()))?;
    println!("ok  {}", a.inputs.metadata.display());
    if let Some(rules) = &a.rules {
        load_rules(rules, &meta).map_err(|e| format!("{}: {e}", rules.display()))?;
        println!("ok  {}", rules.display());
    }
    let files = scenario_files(&a.inputs.scenarios)?;
    if files.is_empty() {
        return Err(ConfigError("no scenario files found".into()));
    }
    for path in files {
        load_scenario(&path)?;
        println!("ok  {}", path.display());
    }
    Ok(0)
}

fn report_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, ConfigError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| format!("{}: {e}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn render_file(path: &Path) -> Result<String, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(finding) = parse_report(&text) {
        return Ok(render_markdown(&finding));
    }
    let suite: SuiteReport = serde_json::from_str(&text)
        .map_err(|e| format!("{}: neither an issue report nor a suite report ({e})", path.display()))?;
    Ok(render_suite_markdown(&suite))
}

fn report(a: ReportArgs) -> Result<u8, ConfigError> {
    let files = report_files(&a.files)?;
    if files.is_empty() {
        return Err(ConfigError("no JSON reports found".into()));
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    for (i, path) in files.iter().enumerate() {
        let md = render_file(path)?;
        match &a.out {
            Some(dir) => {
                let name = path.file_stem().unwrap_or_default().to_string_lossy();
                let target = dir.join(format!("{name}.md"));
                fs::write(&target, md).map_err(|e| format!("{}: {e}", target.display()))?;
            }
            None => {
                if i > 0 {
                    println!();
                }
                print!("{md}");
            }
        }
    }
    Ok(0)
}
