//! Run orchestration: agent predictions, the four audit phases, persisted
//! per-instance state and the dataset report.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dataset::load_dataset;
use super::mock::MockWorldLm;
use crate::agents::{
    instantiation, run_superforecasting, run_temporal_hint, run_timespec, AgentKind, Prediction, TaskInstance,
    TaskKind, TimeSpecConfig, TimeSpecSearch, TimeSpecTrace,
};
use crate::backends::http::{ChatCompletionsLm, EndpointConfig, HttpSearch, ProviderConfig};
use crate::backends::{
    AuditLog, AuditedLm, AuditedSearch, CacheRole, FixtureCorpus, LanguageModel, Limited, SearchBackend,
    SearchClient,
};
use crate::claims::{extract_claims, ExtractedClaim, ExtractionConfig};
use crate::error::{Error, Result};
use crate::leakage::{detect_leakage, LeakageVerdict, VerifierConfig};
use crate::metrics::{build_report, DatasetReport, InstanceAudit};
use crate::shapley::{make_characteristic, shapley_values, LlmCoalitionBackend, SamplerConfig, ShapleyEstimate};
use crate::util::bounded_map;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const MOCK_WORLD_FILE: &str = "mock_world.json";
pub const PROMPT_LOG_FILE: &str = "prompt_log.jsonl";

/// Settings read from a `--config` TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lm: EndpointConfig,
    pub search: EndpointConfig,
    pub sampler: SamplerConfig,
    /// Agent/instance jobs processed at once.
    pub instance_concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lm: EndpointConfig::default(),
            search: EndpointConfig::default(),
            sampler: SamplerConfig::default(),
            instance_concurrency: 4,
        }
    }
}

impl RunConfig {
    /// Reads `path` when given and applies `LEAKAUDIT_*` endpoint overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let mut provider = cfg.provider();
        provider.apply_env(|k| std::env::var(k).ok());
        cfg.lm = provider.lm;
        cfg.search = provider.search;
        Ok(cfg)
    }

    pub fn provider(&self) -> ProviderConfig {
        ProviderConfig {
            lm: self.lm.clone(),
            search: self.search.clone(),
        }
    }
}

/// Everything an offline run depends on.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub datasets: Vec<PathBuf>,
    pub agents: Vec<AgentKind>,
    pub mock: bool,
    pub provider: ProviderConfig,
    pub sampler: SamplerConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub instance_concurrency: usize,
}

impl RunManifest {
    pub fn new(datasets: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let sampler = SamplerConfig::default();
        RunManifest {
            datasets,
            agents: AgentKind::ALL.to_vec(),
            mock: false,
            provider: ProviderConfig::default(),
            seed: sampler.random_seed,
            sampler,
            out_dir: out_dir.into(),
            instance_concurrency: 4,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            random_seed: self.seed,
            ..self.sampler
        }
    }

    pub fn load_instances(&self) -> Result<Vec<TaskInstance>> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no dataset given".into()));
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for path in &self.datasets {
            for inst in load_dataset(path)? {
                if !seen.insert(inst.instance_id.clone()) {
                    return Err(Error::Config(format!(
                        "instance_id {:?} appears in more than one dataset",
                        inst.instance_id
                    )));
                }
                out.push(inst);
            }
        }
        Ok(out)
    }

    /// Backends for this run, logging every external call to the prompt log.
    pub fn backends(&self) -> Result<Backends> {
        std::fs::create_dir_all(&self.out_dir)?;
        let log = Arc::new(AuditLog::open(&self.out_dir.join(PROMPT_LOG_FILE))?);
        if self.mock {
            let first = self.datasets.first().ok_or_else(|| Error::Config("no dataset given".into()))?;
            let dir = first.parent().unwrap_or(Path::new("."));
            Backends::mock(dir, log)
        } else {
            Backends::live(&self.provider, log)
        }
    }
}

/// The model and search backends shared by every job of a run.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn LanguageModel>,
    pub search: Arc<dyn SearchBackend>,
    pub log: Arc<AuditLog>,
}

impl Backends {
    pub fn new(llm: Arc<dyn LanguageModel>, search: Arc<dyn SearchBackend>, log: Arc<AuditLog>) -> Self {
        Backends {
            llm: Arc::new(AuditedLm::new(llm, log.clone())),
            search: Arc::new(AuditedSearch::new(search, log.clone())),
            log,
        }
    }

    /// Scripted model and fixture corpus read from `dir`.
    pub fn mock(dir: &Path, log: Arc<AuditLog>) -> Result<Self> {
        let corpus_path = dir.join(CORPUS_FILE);
        let world_path = dir.join(MOCK_WORLD_FILE);
        for p in [&corpus_path, &world_path] {
            if !p.is_file() {
                return Err(Error::Config(format!("mock asset {} not found", p.display())));
            }
        }
        let corpus = FixtureCorpus::from_jsonl_str(&std::fs::read_to_string(&corpus_path)?)?;
        let lm = MockWorldLm::load(&world_path)?;
        Ok(Self::new(Arc::new(lm), Arc::new(corpus), log))
    }

    pub fn live(cfg: &ProviderConfig, log: Arc<AuditLog>) -> Result<Self> {
        for (name, ep) in [("lm", &cfg.lm), ("search", &cfg.search)] {
            if ep.endpoint.is_empty() {
                return Err(Error::Config(format!("no {name} endpoint configured (use --mock for offline runs)")));
            }
        }
        let lm = Limited::new(ChatCompletionsLm::new(cfg.lm.clone())?, cfg.lm.max_concurrency);
        let search = Limited::new(HttpSearch::new(cfg.search.clone())?, cfg.search.max_concurrency);
        Ok(Self::new(Arc::new(lm), Arc::new(search), log))
    }
}

/// Agent runs and audit phases over one set of backends.
///
/// Search caches live here and are shared by every instance of the run.
pub struct Pipeline {
    backends: Backends,
    timespec_search: TimeSpecSearch,
    verifier_search: SearchClient,
    pub sampler: SamplerConfig,
    pub timespec: TimeSpecConfig,
    pub extraction: ExtractionConfig,
    pub verifier: VerifierConfig,
}

impl Pipeline {
    pub fn new(backends: Backends, sampler: SamplerConfig) -> Self {
        Pipeline {
            timespec_search: TimeSpecSearch::new(backends.search.clone()),
            verifier_search: SearchClient::new(backends.search.clone(), CacheRole::Verifier),
            backends,
            sampler,
            timespec: TimeSpecConfig::default(),
            extraction: ExtractionConfig::default(),
            verifier: VerifierConfig::default(),
        }
    }

    pub fn llm(&self) -> &dyn LanguageModel {
        self.backends.llm.as_ref()
    }

    pub fn predict(&self, instance: &TaskInstance, agent: AgentKind) -> Result<(Prediction, Option<TimeSpecTrace>)> {
        match agent {
            AgentKind::Superforecast => Ok((run_superforecasting(instance, self.llm())?, None)),
            AgentKind::TemporalHint => Ok((run_temporal_hint(instance, self.llm())?, None)),
            AgentKind::Timespec => {
                let (p, trace) = run_timespec(instance, self.llm(), &self.timespec_search, &self.timespec)?;
                Ok((p, Some(trace)))
            }
        }
    }

    /// Phase 1.
    pub fn extract(&self, instance: &TaskInstance, prediction: &Prediction) -> Result<Vec<ExtractedClaim>> {
        extract_claims(&prediction.rationale, &instance.context(), self.llm(), &self.extraction)
    }

    /// Phase 2.
    pub fn attribute(
        &self,
        instance: &TaskInstance,
        prediction: &Prediction,
        claims: &[ExtractedClaim],
    ) -> Result<Vec<ShapleyEstimate>> {
        if claims.is_empty() {
            return Ok(Vec::new());
        }
        let backend = LlmCoalitionBackend::new(
            self.backends.llm.clone(),
            claims,
            shapley_context(instance),
            instance.task_type(),
            instance.tickers().to_vec(),
            &self.sampler,
        );
        let game = make_characteristic(
            instance.task_type(),
            &prediction.value.to_coalition(),
            &instance.defaults(),
            Box::new(backend),
        )?;
        let ids: Vec<_> = claims.iter().map(|c| c.claim_id).collect();
        shapley_values(&game, &ids, &self.sampler)
    }

    /// Phase 3.
    pub fn detect(&self, instance: &TaskInstance, claims: &[ExtractedClaim]) -> Result<Vec<LeakageVerdict>> {
        detect_leakage(claims, &instance.context(), &self.verifier_search, self.llm(), &self.verifier)
    }

    /// Phases 1 to 4 for one prediction; attribution and leakage run side by side.
    pub fn audit(&self, instance: &TaskInstance, agent: AgentKind, prediction: &Prediction) -> Result<InstanceAudit> {
        let claims = self.extract(instance, prediction)?;
        let (estimates, verdicts) = std::thread::scope(|s| {
            let shapley = s.spawn(|| self.attribute(instance, prediction, &claims));
            let verdicts = self.detect(instance, &claims);
            (shapley.join().expect("attribution thread panicked"), verdicts)
        });
        let mut audit = InstanceAudit::new(
            agent.as_str(),
            instance.kind().as_str(),
            instance.task_type(),
            instance.instance_id.clone(),
            claims,
            estimates?,
            verdicts?,
        )?;
        audit.cutoff_date = Some(instance.cutoff_date);
        audit.rationale = prediction.rationale.clone();
        audit.prediction = prediction.value.to_json();
        audit.performance = instance.score(&prediction.value).ok();
        Ok(audit)
    }
}

/// Task framing for coalition re-prediction: instruction, input and the
/// fallback used when a set holds no claims.
pub fn shapley_context(instance: &TaskInstance) -> String {
    let fallback = match instance.kind() {
        TaskKind::Legal => "probability 0.5".to_string(),
        TaskKind::Salary => match instance.baseline {
            Some(m) => format!("the position median of {m:.0} USD"),
            None => "the position median".to_string(),
        },
        TaskKind::Stock => "the tickers in input order".to_string(),
    };
    format!(
        "TASK: {}\n{}\nWithout claims, predict {fallback}.",
        instantiation(instance.kind()).task_instruction,
        instance.input_json()
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub agent: String,
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub audits: Vec<InstanceAudit>,
    pub report: DatasetReport,
    pub failures: Vec<Failure>,
    /// Jobs satisfied from persisted state.
    pub resumed: usize,
}

/// Output locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    fn key(agent: AgentKind, instance_id: &str) -> String {
        let safe: String = instance_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{}__{safe}.json", agent.as_str())
    }

    pub fn audit(&self, agent: AgentKind, instance_id: &str) -> PathBuf {
        self.root.join("audits").join(Self::key(agent, instance_id))
    }

    pub fn prediction(&self, agent: AgentKind, instance_id: &str) -> PathBuf {
        self.root.join("predictions").join(Self::key(agent, instance_id))
    }

    pub fn trace(&self, agent: AgentKind, instance_id: &str) -> PathBuf {
        self.root.join("traces").join(Self::key(agent, instance_id))
    }
}

/// Writes JSON through a temporary sibling so readers never see partial files.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_string_pretty(value)?)
}

pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring unreadable state file {}: {e}", path.display());
            None
        }
    }
}

/// A persisted prediction, or a fresh agent run that is persisted before returning.
pub fn predict_cached(
    pipeline: &Pipeline,
    dir: &RunDir,
    instance: &TaskInstance,
    agent: AgentKind,
) -> Result<Prediction> {
    let path = dir.prediction(agent, &instance.instance_id);
    if let Some(p) = read_json::<Prediction>(&path) {
        return Ok(p);
    }
    let (prediction, trace) = pipeline.predict(instance, agent)?;
    if let Some(t) = trace {
        write_json_atomic(&dir.trace(agent, &instance.instance_id), &t)?;
    }
    write_json_atomic(&path, &prediction)?;
    Ok(prediction)
}

enum JobResult {
    Done(Box<InstanceAudit>, bool),
    Failed(Failure),
}

/// Runs every agent over every instance, auditing each prediction.
///
/// Completed jobs found under `out_dir/audits` are reused without any
/// external call. Failures are recorded in the report metadata.
pub fn run_audit(manifest: &RunManifest) -> Result<RunOutcome> {
    if manifest.agents.is_empty() {
        return Err(Error::Config("no agent selected".into()));
    }
    let sampler = manifest.sampler();
    sampler.validate()?;
    let instances = manifest.load_instances()?;
    let pipeline = Pipeline::new(manifest.backends()?, sampler);
    let dir = RunDir::new(&manifest.out_dir);

    let jobs: Vec<(&TaskInstance, AgentKind)> = instances
        .iter()
        .flat_map(|i| manifest.agents.iter().map(move |a| (i, *a)))
        .collect();
    let results = bounded_map(&jobs, manifest.instance_concurrency, |_, &(instance, agent)| {
        let path = dir.audit(agent, &instance.instance_id);
        if let Some(done) = read_json::<InstanceAudit>(&path) {
            return JobResult::Done(Box::new(done), true);
        }
        let run = || -> Result<InstanceAudit> {
            let prediction = predict_cached(&pipeline, &dir, instance, agent)?;
            let audit = pipeline.audit(instance, agent, &prediction)?;
            write_json_atomic(&path, &audit)?;
            Ok(audit)
        };
        match run() {
            Ok(a) => JobResult::Done(Box::new(a), false),
            Err(e) => {
                log::error!("{} / {}: {e}", agent, instance.instance_id);
                JobResult::Failed(Failure {
                    agent: agent.as_str().to_string(),
                    instance_id: instance.instance_id.clone(),
                    error: e.to_string(),
                })
            }
        }
    });

    let mut audits = Vec::new();
    let mut failures = Vec::new();
    let mut resumed = 0;
    for r in results {
        match r {
            JobResult::Done(a, reused) => {
                resumed += usize::from(reused);
                audits.push(*a);
            }
            JobResult::Failed(f) => failures.push(f),
        }
    }

    let mut report = report_or_empty(&audits)?;
    report.metadata.insert("failed".into(), serde_json::to_value(&failures)?);
    report.metadata.insert(
        "agents".into(),
        json!(manifest.agents.iter().map(|a| a.as_str()).collect::<Vec<_>>()),
    );
    report.metadata.insert(
        "datasets".into(),
        json!(manifest.datasets.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()),
    );
    report.metadata.insert("mock".into(), json!(manifest.mock));
    report.metadata.insert("seed".into(), json!(manifest.seed));
    report.metadata.insert("samples".into(), json!(sampler.max_samples));
    report.metadata.insert("instances".into(), json!(instances.len()));
    write_report(&manifest.out_dir, &report)?;
    Ok(RunOutcome {
        audits,
        report,
        failures,
        resumed,
    })
}

fn report_or_empty(audits: &[InstanceAudit]) -> Result<DatasetReport> {
    if audits.is_empty() {
        Ok(DatasetReport {
            rows: Vec::new(),
            tradeoff: Vec::new(),
            metadata: Default::default(),
        })
    } else {
        build_report(audits)
    }
}

/// Writes `report.json`, `report.txt` and `tradeoff.csv`.
pub fn write_report(out_dir: &Path, report: &DatasetReport) -> Result<()> {
    write_json_atomic(&out_dir.join("report.json"), report)?;
    write_atomic(&out_dir.join("report.txt"), &report.to_text())?;
    write_atomic(&out_dir.join("tradeoff.csv"), &report.to_csv())?;
    Ok(())
}

/// Every persisted audit of a run directory, in file-name order.
pub fn load_audits(out_dir: &Path) -> Result<Vec<InstanceAudit>> {
    let dir = out_dir.join("audits");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(Error::from)
        })
        .collect()
}

/// Rebuilds the report of a previous run, keeping its recorded metadata.
pub fn report_from_dir(out_dir: &Path) -> Result<DatasetReport> {
    let audits = load_audits(out_dir)?;
    let mut report = report_or_empty(&audits)?;
    if let Some(prev) = read_json::<Value>(&out_dir.join("report.json")) {
        if let Some(meta) = prev.get("metadata").and_then(Value::as_object) {
            report.metadata.extend(meta.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
    }
    write_report(out_dir, &report)?;
    Ok(report)
}
