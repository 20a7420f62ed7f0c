//! The `forge` command surface.
//!
//! Exit codes: 0 success, 1 validation failure (or a failed check), 2 usage
//! error. Every written output gets a `<out>.manifest.json` next to it.

mod manifest;
mod stats;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cleaning::{self, CleaningConfig, HttpClient, HttpSettings, MockCorrector, MockSynth, Status};
use crate::corpus::{parse_corpus, serialize_dialogue, validate_corpus, Dialogue, ParsedCorpus};
use crate::generator::{generate_corpus, GeneratorConfig};
use crate::loss::gradient_suite;
use crate::metrics::{corpus_rate, only_yes_accuracy, Normalization, RateKind};
use crate::schedule::{budget_check, build_default_plan, directive_at, BudgetStatus, Plan, Quantity, StageId};
use crate::seed::config_hash;
use crate::talker::{assemble_batch, CorpusIndex, Mode, RatioSpec, SpecialTokenRegistry, REGISTRY_VERSION};
use crate::templates::{build_only_yes_set, expand_templates, Registry, MAX_EXPANSION};
use crate::thinker::{compile_batch, CompileItem, InterleavePolicy, OutputHeader, UserDraw};
use crate::{Error, Result};

pub use manifest::{sibling, RunManifest};
pub use stats::{stats, StatsReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Compile and verify interleaved audio-language training data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a corpus against the data-model invariants.
    Validate(ValidateArgs),
    /// Compile thinker training sequences.
    BuildThinker(ThinkerArgs),
    /// Assemble talker token sequences.
    BuildTalker(TalkerArgs),
    /// Route and clean flagged dialogues.
    Clean(CleanArgs),
    /// Inspect the training schedule.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Verify loss gradients against finite differences.
    LossCheck(LossCheckArgs),
    /// Score recognition output or probe responses.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Corpus totals for budget checks.
    Stats(StatsArgs),
    /// Expand instruction templates.
    #[command(subcommand)]
    Templates(TemplatesCommand),
    /// Write a synthetic corpus.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct JobsArg {
    /// Worker threads (default: all cores).
    #[arg(long, env = "FORGE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write the per-dialogue report here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct ThinkerArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// JSON policy file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p_user_speech: Option<f64>,
    #[arg(long)]
    p_assistant_speech: Option<f64>,
    /// per_turn or per_dialogue.
    #[arg(long)]
    user_draw: Option<String>,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct TalkerArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// dialogue, long_text, standard_sentence or auto (by source).
    #[arg(long)]
    mode: Option<String>,
    /// N:M, or A-B:C-D for per-sample ranges.
    #[arg(long)]
    ratio: Option<String>,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// mock or http.
    #[arg(long)]
    client: Option<String>,
    #[arg(long)]
    corrector_url: Option<String>,
    #[arg(long)]
    synth_url: Option<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    retries: Option<u32>,
    /// Leave backfilled turns without audio.
    #[arg(long)]
    no_synth_backfill: bool,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Subcommand)]
enum PlanCommand {
    /// Print the default plan as JSON.
    Show {
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Directive for one step.
    Directive {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        stage: String,
        #[arg(long)]
        step: u64,
        /// Total steps for the stage, if the plan leaves it unset.
        #[arg(long)]
        total: Option<u64>,
    },
    /// Compare declared budgets with corpus statistics.
    Budget {
        #[arg(long)]
        plan: Option<PathBuf>,
        /// `forge stats` output, or a plain class-to-quantity map.
        #[arg(long)]
        stats: PathBuf,
    },
}

#[derive(Debug, Args)]
struct LossCheckArgs {
    /// Random problems per objective.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Maximum relative gradient error for exit code 0.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct RateArgs {
    /// Reference transcripts, one per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypotheses, one per line, paired with references by line.
    #[arg(long)]
    hyp: PathBuf,
    /// Score without normalization.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Pooled character error rate.
    Cer(RateArgs),
    /// Pooled word error rate.
    Wer(RateArgs),
    /// Strict accuracy of only-yes probe responses.
    OnlyYes {
        /// Model responses, one per line.
        #[arg(long)]
        responses: PathBuf,
    },
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Also write the report here, with a manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum TemplatesCommand {
    /// List every variant of a task.
    Expand {
        #[arg(long)]
        task: String,
        /// Task registry JSON (default: the bundled registry).
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Pair each audio id with the only-yes instruction.
    OnlyYes {
        /// Audio ids, one per line.
        #[arg(long)]
        audio_ids: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    dialogues: usize,
    /// Only clean dialogues.
    #[arg(long)]
    clean: bool,
}

/// Runs `forge` with `argv` (program name first), writing to the process
/// stdout/stderr. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let command_line = argv.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut ctx = Ctx { command_line, out, err };
    match dispatch(cli.command, &mut ctx) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            match e {
                Error::Usage(_) => EXIT_USAGE,
                _ => EXIT_INVALID,
            }
        }
    }
}

struct Ctx<'a> {
    command_line: String,
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn print_json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(value)?;
        writeln!(self.out, "{s}").map_err(|e| Error::io("<stdout>", e))
    }

    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

fn dispatch(command: Command, ctx: &mut Ctx<'_>) -> Result<i32> {
    match command {
        Command::Validate(a) => with_jobs(a.jobs.jobs, || cmd_validate(&a, ctx)),
        Command::BuildThinker(a) => with_jobs(a.jobs.jobs, || cmd_thinker(&a, ctx)),
        Command::BuildTalker(a) => with_jobs(a.jobs.jobs, || cmd_talker(&a, ctx)),
        Command::Clean(a) => with_jobs(a.jobs.jobs, || cmd_clean(&a, ctx)),
        Command::Plan(p) => cmd_plan(p, ctx),
        Command::LossCheck(a) => cmd_loss_check(&a, ctx),
        Command::Eval(e) => cmd_eval(e, ctx),
        Command::Stats(a) => cmd_stats(&a, ctx),
        Command::Templates(t) => cmd_templates(t, ctx),
        Command::Generate(a) => cmd_generate(&a, ctx),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&s).map_err(|e| Error::Usage(format!("config {}: {e}", p.display())))
        }
    }
}

/// Parses and validates; any reject or invalid dialogue is reported on
/// stderr and turns into `Err(exit code 1)` via the returned flag.
fn load_valid(path: &Path, ctx: &mut Ctx<'_>) -> Result<(Vec<Dialogue>, bool)> {
    let ParsedCorpus { dialogues, rejects } = parse_corpus(path)?;
    let mut ok = rejects.is_empty();
    for r in &rejects {
        let _ = writeln!(ctx.err, "{}:{}: {}", path.display(), r.line, r.reason);
    }
    for (id, report) in validate_corpus(&dialogues) {
        ok = false;
        let _ = writeln!(ctx.err, "{id}:\n{report}");
    }
    Ok((dialogues, ok))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    dialogues: usize,
    rejected_lines: usize,
    invalid_dialogues: usize,
    valid: bool,
}

fn cmd_validate(a: &ValidateArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let ParsedCorpus { dialogues, rejects } = parse_corpus(&a.corpus)?;
    let invalid = validate_corpus(&dialogues);
    for r in &rejects {
        let _ = writeln!(ctx.err, "{}:{}: {}", a.corpus.display(), r.line, r.reason);
    }
    for (id, report) in &invalid {
        let _ = writeln!(ctx.err, "{id}:\n{report}");
    }
    let summary = ValidateSummary {
        dialogues: dialogues.len(),
        rejected_lines: rejects.len(),
        invalid_dialogues: invalid.len(),
        valid: rejects.is_empty() && invalid.is_empty(),
    };
    if let Some(path) = &a.report {
        let body = serde_json::json!({ "summary": &summary, "rejects": rejects, "invalid": invalid });
        write_lines(path, [serde_json::to_string_pretty(&body)?])?;
        let mut m = RunManifest::new(&ctx.command_line, "validate", 0, config_hash(&()));
        m.add_input(&a.corpus)?;
        m.add_output(path)?;
        m.count("dialogues", summary.dialogues as u64);
        m.count("rejected_lines", summary.rejected_lines as u64);
        m.count("invalid_dialogues", summary.invalid_dialogues as u64);
        m.write(path)?;
    }
    ctx.print_json(&summary)?;
    Ok(if summary.valid { EXIT_OK } else { EXIT_INVALID })
}

fn cmd_thinker(a: &ThinkerArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let mut policy: InterleavePolicy = read_config(a.config.as_deref())?;
    if let Some(p) = a.p_user_speech {
        policy.p_user_speech = p;
    }
    if let Some(p) = a.p_assistant_speech {
        policy.p_assistant_segment_speech = p;
    }
    if let Some(d) = &a.user_draw {
        policy.user_draw = match d.replace('-', "_").as_str() {
            "per_turn" => UserDraw::PerTurn,
            "per_dialogue" => UserDraw::PerDialogue,
            other => return Err(Error::Usage(format!("unknown --user-draw {other:?}"))),
        };
    }
    policy.validate().map_err(|e| Error::Usage(e.to_string()))?;

    let (dialogues, ok) = load_valid(&a.corpus, ctx)?;
    if !ok {
        return Ok(EXIT_INVALID);
    }
    let masks: Vec<_> = dialogues.iter().map(cleaning::masks_for).collect();
    let items: Vec<CompileItem<'_>> = dialogues
        .iter()
        .zip(&masks)
        .map(|(d, m)| CompileItem { dialogue: d, masked: m })
        .collect();
    let results = compile_batch(&items, &policy, a.seed);

    let mut lines = Vec::with_capacity(results.len());
    let mut counts = BTreeMap::from([
        ("sequences".to_string(), 0u64),
        ("elements".to_string(), 0),
        ("loss_targets".to_string(), 0),
        ("failed".to_string(), 0),
    ]);
    for r in results {
        match r {
            Ok(seq) => {
                *counts.get_mut("sequences").unwrap() += 1;
                *counts.get_mut("elements").unwrap() += seq.elements.len() as u64;
                *counts.get_mut("loss_targets").unwrap() +=
                    seq.elements.iter().filter(|e| e.loss_target).count() as u64;
                lines.push(serde_json::to_string(&seq)?);
            }
            Err(e) => {
                *counts.get_mut("failed").unwrap() += 1;
                ctx.warn(e);
            }
        }
    }
    let hash = config_hash(&policy);
    let header = OutputHeader {
        kind: "thinker".into(),
        master_seed: a.seed,
        policy,
        config_hash: hash.clone(),
        counts: counts.clone(),
    };
    write_lines(&a.out, std::iter::once(serde_json::to_string(&header)?).chain(lines))?;

    let mut m = RunManifest::new(&ctx.command_line, "build-thinker", a.seed, hash);
    m.add_input(&a.corpus)?;
    m.add_output(&a.out)?;
    m.counts = counts;
    m.write(&a.out)?;
    ctx.print_json(&m.counts)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct TalkerConfig {
    /// `None` selects by source.
    mode: Option<Mode>,
    ratio: RatioSpec,
}

#[derive(Debug, Serialize)]
struct TalkerHeader<'a> {
    kind: &'static str,
    master_seed: u64,
    registry_version: &'static str,
    config: &'a TalkerConfig,
    config_hash: &'a str,
    counts: &'a BTreeMap<String, u64>,
}

fn cmd_talker(a: &TalkerArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let mut config: TalkerConfig = read_config(a.config.as_deref())?;
    if let Some(m) = &a.mode {
        config.mode = match m.as_str() {
            "auto" => None,
            other => Some(
                other
                    .parse()
                    .map_err(|e: crate::talker::TalkerError| Error::Usage(e.to_string()))?,
            ),
        };
    }
    if let Some(r) = &a.ratio {
        config.ratio = r
            .parse()
            .map_err(|e: crate::talker::TalkerError| Error::Usage(e.to_string()))?;
    }

    let (dialogues, ok) = load_valid(&a.corpus, ctx)?;
    if !ok {
        return Ok(EXIT_INVALID);
    }
    let index = CorpusIndex::build(&dialogues);
    let results = assemble_batch(&dialogues, config.mode, &config.ratio, &index, a.seed);
    let mut lines = Vec::with_capacity(results.len());
    let mut counts = BTreeMap::from([
        ("sequences".to_string(), 0u64),
        ("tokens".to_string(), 0),
        ("skipped".to_string(), 0),
    ]);
    for (d, r) in dialogues.iter().zip(results) {
        match r {
            Ok(seq) => {
                *counts.get_mut("sequences").unwrap() += 1;
                *counts.get_mut("tokens").unwrap() += seq.tokens.len() as u64;
                lines.push(serde_json::to_string(&seq)?);
            }
            Err(e) => {
                *counts.get_mut("skipped").unwrap() += 1;
                ctx.warn(format_args!("{}: {e}", d.id));
            }
        }
    }
    let hash = config_hash(&config);
    let header = TalkerHeader {
        kind: "talker",
        master_seed: a.seed,
        registry_version: REGISTRY_VERSION,
        config: &config,
        config_hash: &hash,
        counts: &counts,
    };
    write_lines(&a.out, std::iter::once(serde_json::to_string(&header)?).chain(lines))?;
    let registry_path = sibling(&a.out, "registry.json");
    write_lines(&registry_path, [SpecialTokenRegistry::current().to_json()])?;

    let mut m = RunManifest::new(&ctx.command_line, "build-talker", a.seed, hash);
    m.add_input(&a.corpus)?;
    m.add_output(&a.out)?;
    m.add_output(&registry_path)?;
    m.counts = counts;
    m.write(&a.out)?;
    ctx.print_json(&m.counts)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct CleanConfig {
    cleaning: CleaningConfig,
    client: String,
    http: HttpSettings,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            cleaning: CleaningConfig::default(),
            client: "mock".into(),
            http: HttpSettings::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct OutcomeLine<'a> {
    id: &'a str,
    branch: cleaning::Branch,
    status: &'a Status,
    masked_spans: &'a [(usize, crate::corpus::Span)],
    provenance: &'a [cleaning::ProvenanceEntry],
}

fn cmd_clean(a: &CleanArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let mut config: CleanConfig = read_config(a.config.as_deref())?;
    if let Some(c) = &a.client {
        config.client = c.clone();
    }
    if let Some(u) = &a.corrector_url {
        config.http.corrector_url = u.clone();
    }
    if let Some(u) = &a.synth_url {
        config.http.synth_url = u.clone();
    }
    if let Some(t) = a.timeout_ms {
        config.http.timeout_ms = t;
    }
    if let Some(r) = a.retries {
        config.cleaning.retries = r;
    }
    if a.no_synth_backfill {
        config.cleaning.synthesize_backfill = false;
    }

    let (dialogues, ok) = load_valid(&a.corpus, ctx)?;
    if !ok {
        return Ok(EXIT_INVALID);
    }
    let results = match config.client.as_str() {
        "mock" => cleaning::clean_batch(
            &dialogues,
            &MockCorrector::identity(),
            &MockSynth::new(),
            &config.cleaning,
            a.seed,
        ),
        "http" => {
            let client = HttpClient::new(config.http.clone());
            cleaning::clean_batch(&dialogues, &client, &client, &config.cleaning, a.seed)
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown --client {other:?}; expected mock or http"
            )))
        }
    };

    let mut cleaned = Vec::new();
    let mut held = Vec::new();
    let mut outcomes = Vec::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in results {
        let o = r?;
        let key = match &o.status {
            Status::Completed => "completed",
            Status::Deferred { .. } => "deferred",
            Status::Rejected { .. } => "rejected",
        };
        *counts.entry(key.to_string()).or_default() += 1;
        *counts
            .entry(format!(
                "branch.{}",
                serde_json::to_value(o.branch)?.as_str().unwrap_or("?")
            ))
            .or_default() += 1;
        outcomes.push(serde_json::to_string(&OutcomeLine {
            id: &o.dialogue.id,
            branch: o.branch,
            status: &o.status,
            masked_spans: &o.masked_spans,
            provenance: &o.provenance,
        })?);
        if o.is_completed() {
            cleaned.push(serialize_dialogue(&o.dialogue));
        } else {
            held.push(serialize_dialogue(&o.dialogue));
        }
    }
    let outcomes_path = sibling(&a.out, "outcomes.jsonl");
    let held_path = sibling(&a.out, "deferred.jsonl");
    write_lines(&a.out, cleaned)?;
    write_lines(&outcomes_path, outcomes)?;
    write_lines(&held_path, held)?;

    let mut m = RunManifest::new(&ctx.command_line, "clean", a.seed, config_hash(&config));
    m.add_input(&a.corpus)?;
    for p in [&a.out, &outcomes_path, &held_path] {
        m.add_output(p)?;
    }
    m.counts = counts;
    m.write(&a.out)?;
    ctx.print_json(&m.counts)?;
    Ok(EXIT_OK)
}

fn load_plan(path: Option<&Path>) -> Result<Plan> {
    match path {
        None => Ok(build_default_plan()),
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(Plan::from_json(&s)?)
        }
    }
}

fn cmd_plan(p: PlanCommand, ctx: &mut Ctx<'_>) -> Result<i32> {
    match p {
        PlanCommand::Show { plan } => {
            let plan = load_plan(plan.as_deref())?;
            writeln!(ctx.out, "{}", plan.to_json()).map_err(|e| Error::io("<stdout>", e))?;
            Ok(EXIT_OK)
        }
        PlanCommand::Directive {
            plan,
            stage,
            step,
            total,
        } => {
            let mut plan = load_plan(plan.as_deref())?;
            let id: StageId = stage
                .parse()
                .map_err(|e: crate::schedule::ScheduleError| Error::Usage(e.to_string()))?;
            if let Some(t) = total {
                if t == 0 {
                    return Err(Error::Usage("--total must be at least 1".into()));
                }
                plan.stage_mut(id)?.total_steps = Some(t);
            }
            let d = directive_at(&plan, id, step).map_err(|e| Error::Usage(e.to_string()))?;
            ctx.print_json(&d)?;
            Ok(EXIT_OK)
        }
        PlanCommand::Budget { plan, stats } => {
            let plan = load_plan(plan.as_deref())?;
            let s = fs::read_to_string(&stats).map_err(|e| Error::io(&stats, e))?;
            let v: serde_json::Value = serde_json::from_str(&s)?;
            let classes = v.get("classes").cloned().unwrap_or(v);
            let classes: BTreeMap<String, Quantity> = serde_json::from_value(classes)?;
            let report = budget_check(&plan, &classes);
            ctx.print_json(&report)?;
            let failed = report.entries.iter().any(|e| e.status == BudgetStatus::Fail);
            Ok(if failed { EXIT_INVALID } else { EXIT_OK })
        }
    }
}

fn cmd_loss_check(a: &LossCheckArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    if a.cases == 0 {
        return Err(Error::Usage("--cases must be at least 1".into()));
    }
    let report = gradient_suite(a.cases, a.seed, a.epsilon).map_err(|e| Error::Usage(e.to_string()))?;
    ctx.print_json(&report)?;
    Ok(if report.worst() < a.tolerance {
        EXIT_OK
    } else {
        EXIT_INVALID
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(s.lines().map(str::to_string).collect())
}

#[derive(Debug, Serialize)]
struct RateReport {
    metric: RateKind,
    normalization: Normalization,
    utterances: usize,
    substitutions: usize,
    insertions: usize,
    deletions: usize,
    reference_length: usize,
    rate: f64,
}

fn cmd_eval(e: EvalCommand, ctx: &mut Ctx<'_>) -> Result<i32> {
    let (kind, args) = match e {
        EvalCommand::Cer(a) => (RateKind::Cer, a),
        EvalCommand::Wer(a) => (RateKind::Wer, a),
        EvalCommand::OnlyYes { responses } => {
            let lines = read_lines(&responses)?;
            let acc = only_yes_accuracy(&lines)?;
            let passed = lines.iter().filter(|l| crate::metrics::is_strict_yes(l)).count();
            ctx.print_json(&serde_json::json!({ "responses": lines.len(), "passed": passed, "accuracy": acc }))?;
            return Ok(EXIT_OK);
        }
    };
    let refs = read_lines(&args.reference)?;
    let hyps = read_lines(&args.hyp)?;
    if refs.len() != hyps.len() {
        return Err(crate::metrics::MetricError::Argument(format!(
            "{} reference lines but {} hypothesis lines",
            refs.len(),
            hyps.len()
        ))
        .into());
    }
    let norm = if args.raw {
        Normalization::Raw
    } else {
        Normalization::Standard
    };
    let pairs: Vec<(String, String)> = refs.into_iter().zip(hyps).collect();
    let ops = corpus_rate(&pairs, kind, norm);
    ctx.print_json(&RateReport {
        metric: kind,
        normalization: norm,
        utterances: pairs.len(),
        substitutions: ops.substitutions,
        insertions: ops.insertions,
        deletions: ops.deletions,
        reference_length: ops.reference_length,
        rate: ops.rate(),
    })?;
    Ok(EXIT_OK)
}

fn cmd_stats(a: &StatsArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let (dialogues, ok) = load_valid(&a.corpus, ctx)?;
    if !ok {
        return Ok(EXIT_INVALID);
    }
    let report = stats(&dialogues);
    if let Some(path) = &a.out {
        write_lines(path, [serde_json::to_string_pretty(&report)?])?;
        let mut m = RunManifest::new(&ctx.command_line, "stats", 0, config_hash(&()));
        m.add_input(&a.corpus)?;
        m.add_output(path)?;
        m.count("dialogues", report.dialogues);
        m.write(path)?;
    }
    ctx.print_json(&report)?;
    Ok(EXIT_OK)
}

fn cmd_templates(t: TemplatesCommand, ctx: &mut Ctx<'_>) -> Result<i32> {
    match t {
        TemplatesCommand::Expand { task, registry, limit } => {
            let registry = match registry {
                None => Registry::bundled(),
                Some(p) => Registry::from_json(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?,
            };
            let spec = registry.get(&task).map_err(|e| Error::Usage(e.to_string()))?;
            let variants = expand_templates(spec, limit.unwrap_or(MAX_EXPANSION as usize))?;
            for v in variants {
                writeln!(ctx.out, "{}", serde_json::to_string(&v)?).map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(EXIT_OK)
        }
        TemplatesCommand::OnlyYes { audio_ids } => {
            let ids = read_lines(&audio_ids)?;
            for (id, prompt) in build_only_yes_set(&ids)? {
                writeln!(ctx.out, "{}", serde_json::json!({ "audio_id": id, "prompt": prompt }))
                    .map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn cmd_generate(a: &GenerateArgs, ctx: &mut Ctx<'_>) -> Result<i32> {
    let config = if a.clean {
        GeneratorConfig::clean(a.seed, a.dialogues)
    } else {
        GeneratorConfig {
            seed: a.seed,
            dialogues: a.dialogues,
            ..GeneratorConfig::default()
        }
    };
    let corpus = generate_corpus(&config);
    write_lines(&a.out, corpus.iter().map(serialize_dialogue))?;
    let mut m = RunManifest::new(&ctx.command_line, "generate", a.seed, config_hash(&config));
    m.add_output(&a.out)?;
    m.count("dialogues", corpus.len() as u64);
    m.write(&a.out)?;
    ctx.print_json(&m.counts)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, _, err) = run_capture(&["forge", "nonsense"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("nonsense"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["forge", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("build-thinker"));
    }

    #[test]
    fn plan_directive() {
        let (code, out, _) = run_capture(&[
            "forge",
            "plan",
            "directive",
            "--stage",
            "s1",
            "--step",
            "301",
            "--total",
            "1000",
        ]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["trainable"], serde_json::json!(["audio_encoder"]));
        let (code, _, _) = run_capture(&[
            "forge",
            "plan",
            "directive",
            "--stage",
            "s1",
            "--step",
            "0",
            "--total",
            "10",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn stats_arithmetic() {
        use crate::corpus::{AudioTokenSpan, Turn};
        let mut corpus = vec![
            crate::generator::tiny_dialogue("a"),
            crate::generator::tiny_dialogue("b"),
        ];
        for d in &mut corpus {
            d.turns.truncate(1);
            let t: &mut Turn = &mut d.turns[0];
            t.audio = Some(AudioTokenSpan {
                token_ids: vec![1; 125],
                frame_rate_hz: 12.5,
                duration_s: 10.0,
            });
            t.alignment.clear();
        }
        let r = stats(&corpus);
        assert_eq!(r.audio_seconds, 20.0);
        assert_eq!(r.audio_tokens, 250);
        let empty = stats(&[]);
        assert_eq!(empty.dialogues, 0);
        assert!(empty.hours_by_source.values().all(|&h| h == 0.0));
        assert!(empty.languages.values().all(|&n| n == 0));
    }
}
