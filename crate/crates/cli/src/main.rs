use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leakaudit::agents::{AgentKind, Prediction, TaskInstance};
use leakaudit::harness::{
    faithfulness_check, predict_cached, report_from_dir, run_audit, write_json_atomic, Pipeline, RunConfig,
    RunDir, RunManifest,
};
use leakaudit::Error;

/// Stdout line that tolerates a closed pipe.
macro_rules! emit {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "leakaudit", version, about = "Audit prediction rationales for temporal knowledge leakage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose agent rationales into categorized claims.
    Extract(RunArgs),
    /// Shapley attribution of each prediction to its claims.
    Attribute(RunArgs),
    /// Claim-level leakage verdicts against each instance cutoff.
    Detect(RunArgs),
    /// Full audit: agent runs, claims, attribution, leakage, metrics and report.
    Evaluate(RunArgs),
    /// Run agents and store their predictions.
    AgentRun(RunArgs),
    /// Re-predict from cleaned rationales and compare with the originals.
    Faithfulness(RunArgs),
    /// Rebuild tables and CSV from a previous run directory.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON-lines dataset; repeat for several tasks.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Agents to run; repeat for several. Defaults to all three.
    #[arg(long, value_parser = parse_agent)]
    agent: Vec<AgentKind>,
    /// Use the scripted model and fixture corpus found next to the dataset.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo permutations per instance.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// TOML file with endpoint, sampler and concurrency settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse::<AgentKind>().map_err(|e| e.to_string())
}

/// Failure classes mapped onto exit codes.
enum Failed {
    Instances(usize),
    Config(String),
}

impl From<Error> for Failed {
    fn from(e: Error) -> Self {
        Failed::Config(e.to_string())
    }
}

fn manifest(args: &RunArgs) -> Result<RunManifest, Failed> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let mut m = RunManifest::new(args.dataset.clone(), &args.out);
    if !args.agent.is_empty() {
        m.agents = args.agent.clone();
    }
    m.mock = args.mock;
    m.provider = cfg.provider();
    m.sampler = cfg.sampler;
    if let Some(n) = args.samples {
        m.sampler.max_samples = n;
    }
    m.seed = args.seed.unwrap_or(cfg.sampler.random_seed);
    m.instance_concurrency = cfg.instance_concurrency;
    m.sampler().validate()?;
    Ok(m)
}

struct Session {
    manifest: RunManifest,
    instances: Vec<TaskInstance>,
    pipeline: Pipeline,
    dir: RunDir,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self, Failed> {
        let manifest = manifest(args)?;
        let instances = manifest.load_instances()?;
        let pipeline = Pipeline::new(manifest.backends()?, manifest.sampler());
        let dir = RunDir::new(&manifest.out_dir);
        Ok(Session { manifest, instances, pipeline, dir })
    }

    /// Calls `f` for every agent and instance, reporting failures as they occur.
    fn each<F>(&self, mut f: F) -> usize
    where
        F: FnMut(&TaskInstance, AgentKind, Prediction) -> leakaudit::Result<String>,
    {
        let mut failures = 0;
        for agent in &self.manifest.agents {
            for inst in &self.instances {
                let outcome = predict_cached(&self.pipeline, &self.dir, inst, *agent).and_then(|p| f(inst, *agent, p));
                match outcome {
                    Ok(line) => emit!("{agent}\t{}\t{line}", inst.instance_id),
                    Err(e) => {
                        failures += 1;
                        eprintln!("{agent}\t{}\tFAILED: {e}", inst.instance_id);
                    }
                }
            }
        }
        failures
    }

    fn phase_path(&self, phase: &str, agent: AgentKind, id: &str) -> PathBuf {
        let name = self.dir.audit(agent, id);
        self.manifest.out_dir.join(phase).join(name.file_name().expect("audit path has a file name"))
    }
}

fn finish(failures: usize) -> Result<(), Failed> {
    if failures == 0 {
        Ok(())
    } else {
        Err(Failed::Instances(failures))
    }
}

fn agent_run(args: &RunArgs) -> Result<(), Failed> {
    let s = Session::open(args)?;
    finish(s.each(|_, _, p| Ok(format!("prediction {}", p.value.to_json()))))
}

fn extract(args: &RunArgs) -> Result<(), Failed> {
    let s = Session::open(args)?;
    finish(s.each(|inst, agent, p| {
        let claims = s.pipeline.extract(inst, &p)?;
        write_json_atomic(&s.phase_path("claims", agent, &inst.instance_id), &claims)?;
        Ok(format!("{} claims", claims.len()))
    }))
}

fn attribute(args: &RunArgs) -> Result<(), Failed> {
    let s = Session::open(args)?;
    finish(s.each(|inst, agent, p| {
        let claims = s.pipeline.extract(inst, &p)?;
        let est = s.pipeline.attribute(inst, &p, &claims)?;
        write_json_atomic(&s.phase_path("shapley", agent, &inst.instance_id), &est)?;
        let total: f64 = est.iter().map(|e| e.phi).sum();
        Ok(format!("{} estimates, sum phi {total:.4}", est.len()))
    }))
}

fn detect(args: &RunArgs) -> Result<(), Failed> {
    let s = Session::open(args)?;
    finish(s.each(|inst, agent, p| {
        let claims = s.pipeline.extract(inst, &p)?;
        let verdicts = s.pipeline.detect(inst, &claims)?;
        write_json_atomic(&s.phase_path("verdicts", agent, &inst.instance_id), &verdicts)?;
        let leaked = verdicts.iter().filter(|v| v.leaked).count();
        Ok(format!("{leaked}/{} claims leaked", verdicts.len()))
    }))
}

fn faithfulness(args: &RunArgs) -> Result<(), Failed> {
    let s = Session::open(args)?;
    let mut failures = 0;
    for agent in &s.manifest.agents {
        let mut cases = Vec::new();
        for inst in &s.instances {
            match predict_cached(&s.pipeline, &s.dir, inst, *agent) {
                Ok(p) => cases.push((inst.clone(), p)),
                Err(e) => {
                    failures += 1;
                    eprintln!("{agent}\t{}\tFAILED: {e}", inst.instance_id);
                }
            }
        }
        if cases.is_empty() {
            continue;
        }
        match faithfulness_check(&cases, s.pipeline.llm()) {
            Ok(result) => {
                let path = s.manifest.out_dir.join("faithfulness").join(format!("{agent}.json"));
                write_json_atomic(&path, &result)?;
                for (task, value) in &result.per_task {
                    emit!("{agent}\t{task}\t{value:.4}");
                }
            }
            Err(e) => {
                failures += cases.len();
                eprintln!("{agent}\tFAILED: {e}");
            }
        }
    }
    finish(failures)
}

fn evaluate(args: &RunArgs) -> Result<(), Failed> {
    let m = manifest(args)?;
    let outcome = run_audit(&m)?;
    emit!("{}", outcome.report.to_text().trim_end());
    emit!(
        "{} audits ({} resumed), {} failed; outputs in {}",
        outcome.audits.len(),
        outcome.resumed,
        outcome.failures.len(),
        m.out_dir.display()
    );
    for f in &outcome.failures {
        eprintln!("{}\t{}\tFAILED: {}", f.agent, f.instance_id, f.error);
    }
    finish(outcome.failures.len())
}

fn report(out: &Path) -> Result<(), Failed> {
    let report = report_from_dir(out)?;
    emit!("{}", report.to_text().trim_end());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Extract(a) => extract(a),
        Command::Attribute(a) => attribute(a),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::AgentRun(a) => agent_run(a),
        Command::Faithfulness(a) => faithfulness(a),
        Command::Report(a) => report(&a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failed::Instances(n)) => {
            eprintln!("{n} instance(s) failed");
            ExitCode::from(1)
        }
        Err(Failed::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
