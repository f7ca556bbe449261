//! Command-line surface: ingest → induce → synthesize → simulate → evolve → eval,
//! plus bank inspection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use skillbank_core::agreement::{cohen_kappa_quadratic, fleiss_kappa};
use skillbank_core::backend::{Backends, ChatBackend, NoBackend};
use skillbank_core::bank::GenerationTag;
use skillbank_core::evolution::{evolve, EvolveConfig};
use skillbank_core::iu::{classify_key, corpus_stats, IngestMode, KeyClass};
use skillbank_core::metrics::{evaluate, BleuMode};
use skillbank_core::prototype::{
    cluster_prototypes, flag_risk, group_prototypes, summary_table, InductionConfig, PrototypeCluster,
    SemanticClusterer, SnippetConfig, StateClusterer,
};
use skillbank_core::reply::ReplyMode;
use skillbank_core::simulation::{batch_simulate, SimConfig};
use skillbank_core::skill::serialize_skill;
use skillbank_core::synthesis::{cot_self_generate, synthesize_bank};
use skillbank_core::taxonomy::Taxonomy;

use crate::bankdir::{load_bank, store_bank, validate_bank, BankDirError, LoadMode};
use crate::config::{BackendMode, Config, ConfigError, Layer};
use crate::io::{atomic_write, read_corpus, read_ndjson, read_pairs, read_profiles, write_json, write_ndjson, IoError};
use crate::manifest::{run_dir, Manifest};
use crate::parallel::ThreadExecutor;
use crate::remote::{AuditedBackend, RemoteBackend, RemoteConfig};
use crate::scripted::ScriptedBackend;

#[derive(Debug, Parser)]
#[command(name = "skillbank", version, about = "Skill-bank lifecycle engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Exact output directory for this run.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parent of per-run output directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out_root: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendMode>,
    /// Scripted fixture file or directory.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Fail on any invalid record or reply instead of skipping it.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ClustererKind {
    #[default]
    State,
    Semantic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus into an intervention-unit store and report counts.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Group key units into prototypes, flag risky ones, cluster them.
    Induce {
        /// Unit store (or raw corpus) to induce from.
        #[arg(long)]
        ius: PathBuf,
        #[arg(long)]
        min_support: Option<u64>,
        #[arg(long)]
        effectiveness_threshold: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        clusterer: ClustererKind,
    },
    /// Generate one SKILL.md per cluster into a new bank.
    Synthesize {
        #[arg(long, required_unless_present = "cot")]
        clusters: Option<PathBuf>,
        /// Single-pass chain-of-thought baseline instead of clusters.
        #[arg(long)]
        cot: bool,
    },
    /// Simulate every profile against a bank.
    Simulate {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value = "sim")]
        run: String,
        #[arg(long)]
        max_turns: Option<u32>,
    },
    /// Evolve a bank with the generate–verify loop.
    Evolve {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        n_verify: Option<usize>,
        #[arg(long)]
        max_attempts: Option<u32>,
    },
    /// Score response pairs and/or rating agreement.
    Eval {
        #[arg(long, required_unless_present = "ratings")]
        pairs: Option<PathBuf>,
        /// Likert ratings, one `{"ratings": [..]}` record per item.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BleuArg::Sentence)]
        bleu: BleuArg,
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Inspect a bank directory.
    Bank {
        #[command(subcommand)]
        action: BankCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BleuArg {
    Sentence,
    Corpus,
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    List {
        #[arg(long)]
        bank: PathBuf,
    },
    Show {
        #[arg(long)]
        bank: PathBuf,
        name: String,
    },
    Validate {
        #[arg(long)]
        bank: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bank(#[from] BankDirError),
    #[error("{0}")]
    Pipeline(String),
    /// Strict-mode validation failure.
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}

fn pipeline(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

/// Parse arguments; usage errors exit 1, help and version exit 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_config(global: &GlobalArgs, extra: Layer) -> Result<Config, CliError> {
    let env = Layer::from_env(|k| std::env::var(k).ok());
    let file = global.config.as_deref().map(Layer::from_file).transpose()?;
    let flags = Layer {
        backend: global.backend,
        script: global.script.clone(),
        url: global.url.clone(),
        model: global.model.clone(),
        parallelism: global.parallelism,
        strict: global.strict.then_some(true),
        temperature: global.temperature,
        seed: global.seed,
        ..extra
    };
    Ok(Config::resolve(env, file, flags)?)
}

enum AnyBackend {
    None(NoBackend),
    Scripted(ScriptedBackend),
    Remote(AuditedBackend<RemoteBackend>),
}

impl AnyBackend {
    fn get(&self) -> &dyn ChatBackend {
        match self {
            AnyBackend::None(b) => b,
            AnyBackend::Scripted(b) => b,
            AnyBackend::Remote(b) => b,
        }
    }

    fn available(&self) -> bool {
        !matches!(self, AnyBackend::None(_))
    }
}

const BACKEND_HELP: &str = "no model backend configured: pass --script <fixtures> for the scripted backend, or set BACKEND_URL (or --backend remote --url ...) for a remote one";

fn build_backend(cfg: &Config, run_dir: Option<&Path>) -> Result<AnyBackend, CliError> {
    match cfg.backend {
        BackendMode::Scripted => match &cfg.script {
            Some(p) => Ok(AnyBackend::Scripted(ScriptedBackend::load(p).map_err(pipeline)?)),
            None => Ok(AnyBackend::None(NoBackend)),
        },
        BackendMode::Remote => {
            let url = cfg.url.clone().ok_or_else(|| CliError::Usage(BACKEND_HELP.into()))?;
            let remote = RemoteBackend::new(RemoteConfig {
                api_key: cfg.api_key.clone(),
                timeout_secs: cfg.timeout_secs,
                max_retries: cfg.max_retries,
                ..RemoteConfig::new(url, cfg.model.clone().unwrap_or_default())
            });
            let log = run_dir
                .map(|d| d.join("requests.ndjson"))
                .unwrap_or_else(|| PathBuf::from("requests.ndjson"));
            Ok(AnyBackend::Remote(AuditedBackend::create(
                remote,
                &log,
                cfg.api_key.clone(),
            )?))
        }
    }
}

fn require_backend(b: &AnyBackend) -> Result<(), CliError> {
    if b.available() {
        Ok(())
    } else {
        Err(CliError::Usage(BACKEND_HELP.into()))
    }
}

fn sim_config(cfg: &Config) -> SimConfig {
    SimConfig {
        max_turns: cfg.max_turns,
        thresholds: cfg.thresholds(),
        top_k: cfg.top_k,
        reply_mode: if cfg.strict {
            ReplyMode::Strict
        } else {
            ReplyMode::Lenient
        },
        temperature: cfg.temperature,
    }
}

struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

fn start_run(global: &GlobalArgs, cfg: &Config, command: &str, inputs: &[&Path]) -> Result<Run, CliError> {
    let mut manifest = Manifest::new(command, serde_json::to_value(cfg).expect("config serializes"));
    for p in inputs {
        manifest.add_input(p)?;
    }
    let dir = run_dir(
        &global.out_root,
        global.out.as_deref(),
        command,
        &manifest.input_digest(),
    )?;
    Ok(Run { dir, manifest })
}

impl Run {
    fn finish(self) -> Result<PathBuf, CliError> {
        let dir = self.dir.clone();
        self.manifest.finish(&dir)?;
        println!("outputs: {}", dir.display());
        Ok(dir)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { ref corpus } => cmd_ingest(g, corpus),
        Command::Induce {
            ref ius,
            min_support,
            ref effectiveness_threshold,
            clusterer,
        } => cmd_induce(g, ius, min_support, effectiveness_threshold.clone(), clusterer),
        Command::Synthesize { ref clusters, cot } => cmd_synthesize(g, clusters.as_deref(), cot),
        Command::Simulate {
            ref bank,
            ref profiles,
            ref run,
            max_turns,
        } => cmd_simulate(g, bank, profiles, run, max_turns),
        Command::Evolve {
            ref bank,
            ref profiles,
            n_verify,
            max_attempts,
        } => cmd_evolve(g, bank, profiles, n_verify, max_attempts),
        Command::Eval {
            ref pairs,
            ref ratings,
            bleu,
            ref label,
        } => cmd_eval(g, pairs.as_deref(), ratings.as_deref(), bleu, label),
        Command::Bank { ref action } => cmd_bank(g, action),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatsReport {
    pub total: u64,
    pub key: u64,
    pub positive: u64,
    pub negative: u64,
    pub non_key: u64,
    pub skipped: usize,
    pub direction_overrides: usize,
}

fn cmd_ingest(g: &GlobalArgs, corpus: &Path) -> Result<(), CliError> {
    let cfg = resolve_config(g, Layer::default())?;
    let mode = if cfg.strict {
        IngestMode::Strict
    } else {
        IngestMode::Lenient
    };
    let ingested = match read_corpus(corpus, &Taxonomy::default(), mode) {
        Err(IoError::Ingest { source, .. }) => return Err(CliError::Validation(source.to_string())),
        other => other?,
    };
    let stats = corpus_stats(&ingested.units, InductionConfig::default().expansion);
    let report = StatsReport {
        total: stats.total,
        key: stats.key_total,
        positive: stats.key_positive,
        negative: stats.key_negative,
        non_key: stats.non_key(),
        skipped: ingested.report.skipped.len(),
        direction_overrides: ingested.report.direction_overrides,
    };
    let run = start_run(g, &cfg, "ingest", &[corpus])?;
    let lines: Vec<String> = ingested.units.iter().map(|u| u.to_line()).collect();
    atomic_write(
        &run.dir.join("ius.ndjson"),
        format!("{}\n", lines.join("\n")).as_bytes(),
    )?;
    write_json(&run.dir.join("stats.json"), &report)?;
    write_json(&run.dir.join("ingest_report.json"), &ingested.report)?;
    println!(
        "total IUs: {}\nkey IUs: {}\n  positive: {}\n  negative: {}\nnon-key IUs: {}\nskipped lines: {}",
        report.total, report.key, report.positive, report.negative, report.non_key, report.skipped
    );
    run.finish()?;
    Ok(())
}

fn cmd_induce(
    g: &GlobalArgs,
    ius: &Path,
    min_support: Option<u64>,
    threshold: Option<String>,
    clusterer: ClustererKind,
) -> Result<(), CliError> {
    let cfg = resolve_config(
        g,
        Layer {
            min_support,
            effectiveness_threshold: threshold,
            ..Layer::default()
        },
    )?;
    let backend = build_backend(&cfg, None)?;
    if clusterer == ClustererKind::Semantic {
        require_backend(&backend)?;
    }
    let taxonomy = Taxonomy::default();
    let units = read_corpus(ius, &taxonomy, IngestMode::Lenient)?.units;
    let key: Vec<_> = units
        .into_iter()
        .filter(|u| classify_key(u) != KeyClass::NonKey)
        .collect();
    let induction = InductionConfig {
        min_support: cfg.min_support,
        effectiveness_threshold: cfg.effectiveness_ratio()?,
        ..InductionConfig::default()
    };
    let prototypes = group_prototypes(&key, &induction, taxonomy.directions());
    let partition = flag_risk(prototypes.clone(), induction.effectiveness_threshold);
    let flagged: Vec<_> = prototypes
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.flagged_risk = p.effectiveness < induction.effectiveness_threshold;
            p
        })
        .collect();
    let snippets = SnippetConfig {
        per_cluster: cfg.snippets_per_cluster,
        seed: cfg.seed,
    };
    let clusters = match clusterer {
        ClustererKind::State => cluster_prototypes(&flagged, &key, &StateClusterer, snippets),
        ClustererKind::Semantic => {
            let sem = SemanticClusterer {
                backend: backend.get(),
                temperature: cfg.temperature,
            };
            cluster_prototypes(&flagged, &key, &sem, snippets)
        }
    }
    .map_err(pipeline)?;

    let run = start_run(g, &cfg, "induce", &[ius])?;
    write_ndjson(&run.dir.join("prototypes.ndjson"), &flagged)?;
    write_json(&run.dir.join("clusters.json"), &clusters)?;
    let mut summary = format!(
        "min_support = {}  effectiveness_threshold = {}\nprototypes: {} ({} recommended, {} risk)  clusters: {}\n\nRecommended\n",
        cfg.min_support,
        cfg.effectiveness_threshold,
        flagged.len(),
        partition.recommended.len(),
        partition.risk.len(),
        clusters.len()
    );
    summary.push_str(&summary_table(&partition.recommended));
    summary.push_str("\nRisk\n");
    summary.push_str(&summary_table(&partition.risk));
    atomic_write(&run.dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    run.finish()?;
    Ok(())
}

fn cmd_synthesize(g: &GlobalArgs, clusters: Option<&Path>, cot: bool) -> Result<(), CliError> {
    let cfg = resolve_config(g, Layer::default())?;
    let inputs: Vec<&Path> = clusters.into_iter().collect();
    let mut run = start_run(g, &cfg, "synthesize", &inputs)?;
    let backend = build_backend(&cfg, Some(&run.dir))?;
    require_backend(&backend)?;
    let bank_dir = run.dir.join("bank");
    if cot {
        let skill = cot_self_generate(backend.get(), cfg.temperature).map_err(pipeline)?;
        atomic_write(
            &bank_dir.join(format!("{}.md", skill.name)),
            serialize_skill(&skill).as_bytes(),
        )?;
        println!("wrote 1 skill: {}", skill.name);
        run.finish()?;
        return Ok(());
    }
    let clusters: Vec<PrototypeCluster> =
        crate::io::read_json(clusters.expect("clap requires --clusters without --cot"))?;
    let outcome = synthesize_bank(&clusters, backend.get(), cfg.temperature);
    let bank = skillbank_core::bank::SkillBank::from_skills(outcome.skills.iter().map(|(_, s)| s.clone()))
        .map_err(pipeline)?
        .with_generation(GenerationTag::B0);
    store_bank(&bank_dir, &bank, &[])?;
    write_ndjson(&run.dir.join("synthesis_errors.ndjson"), &outcome.failures)?;
    for f in &outcome.failures {
        eprintln!("cluster {}: {}", f.cluster_id, f.error);
        run.manifest
            .warnings
            .push(format!("cluster {}: {}", f.cluster_id, f.error));
    }
    run.manifest.partial = !outcome.failures.is_empty();
    println!("wrote {} skills, {} failures", bank.len(), outcome.failures.len());
    let failed = !outcome.failures.is_empty();
    run.finish()?;
    if failed && cfg.strict {
        return Err(CliError::Validation("some clusters failed to synthesize".into()));
    }
    Ok(())
}

fn load(bank: &Path, cfg: &Config) -> Result<crate::bankdir::LoadedBank, CliError> {
    let mode = if cfg.strict {
        LoadMode::Strict
    } else {
        LoadMode::Lenient
    };
    let loaded = match load_bank(bank, mode) {
        Err(e @ BankDirError::BadFile { .. }) => return Err(CliError::Validation(e.to_string())),
        other => other?,
    };
    for s in &loaded.skipped {
        eprintln!("skipped {}: {}", s.file.display(), s.message);
    }
    Ok(loaded)
}

fn cmd_simulate(
    g: &GlobalArgs,
    bank: &Path,
    profiles: &Path,
    run_name: &str,
    max_turns: Option<u32>,
) -> Result<(), CliError> {
    let cfg = resolve_config(
        g,
        Layer {
            max_turns,
            ..Layer::default()
        },
    )?;
    let loaded = load(bank, &cfg)?;
    let profiles_v = read_profiles(profiles)?;
    let mut run = start_run(g, &cfg, "simulate", &[bank, profiles])?;
    let backend = build_backend(&cfg, Some(&run.dir))?;
    require_backend(&backend)?;
    let exec = ThreadExecutor::new(cfg.parallelism);
    let result = batch_simulate(
        &profiles_v,
        &loaded.bank,
        Backends::uniform(backend.get()),
        &sim_config(&cfg),
        run_name,
        &exec,
    )
    .map_err(pipeline)?;
    write_ndjson(&run.dir.join("transcripts.ndjson"), &result.transcripts)?;
    write_json(&run.dir.join("report.json"), &result.report)?;
    let label = if loaded.bank.is_empty() {
        "No-Skill".to_string()
    } else {
        loaded.bank.generation().to_string()
    };
    let table = result.report.table(&label);
    atomic_write(&run.dir.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    run.manifest.partial = result.report.aborted_count > 0;
    if run.manifest.partial {
        run.manifest
            .warnings
            .push(format!("{} conversation(s) aborted", result.report.aborted_count));
    }
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    initial_skills: usize,
    final_skills: usize,
    planned_updates: usize,
    planned_additions: usize,
    accepted_updates: usize,
    accepted_additions: usize,
    entries: &'a [skillbank_core::evolution::EntryOutcome],
    warnings: &'a [String],
}

fn cmd_evolve(
    g: &GlobalArgs,
    bank: &Path,
    profiles: &Path,
    n_verify: Option<usize>,
    max_attempts: Option<u32>,
) -> Result<(), CliError> {
    let cfg = resolve_config(
        g,
        Layer {
            n_verify,
            max_attempts,
            ..Layer::default()
        },
    )?;
    let loaded = load(bank, &cfg)?;
    let profiles_v = read_profiles(profiles)?;
    let mut run = start_run(g, &cfg, "evolve", &[bank, profiles])?;
    let backend = build_backend(&cfg, Some(&run.dir))?;
    require_backend(&backend)?;
    let exec = ThreadExecutor::new(cfg.parallelism);
    let config = EvolveConfig {
        n_verify: cfg.n_verify,
        max_attempts: cfg.max_attempts,
        max_evidence: cfg.max_evidence,
        consolidator: cfg.consolidator,
        sim: sim_config(&cfg),
        temperature: cfg.temperature,
    };
    let outcome = evolve(
        &loaded.bank,
        &profiles_v,
        Backends::uniform(backend.get()),
        &config,
        &exec,
    )
    .map_err(pipeline)?;

    let mut log = loaded.log.clone();
    log.extend(outcome.bank.log().iter().cloned());
    store_bank(&run.dir.join("bank"), &outcome.bank, &log)?;
    write_ndjson(&run.dir.join("audit.ndjson"), &outcome.audit)?;
    write_json(&run.dir.join("plan.json"), &outcome.plan)?;
    write_ndjson(&run.dir.join("analysis_reports.ndjson"), &outcome.reports)?;
    write_ndjson(&run.dir.join("stage1_transcripts.ndjson"), &outcome.stage.transcripts)?;
    let summary = EvolveSummary {
        initial_skills: loaded.bank.len(),
        final_skills: outcome.bank.len(),
        planned_updates: outcome.plan.updates.len(),
        planned_additions: outcome.plan.additions.len(),
        accepted_updates: outcome.accepted_updates(),
        accepted_additions: outcome.accepted_additions(),
        entries: &outcome.entries,
        warnings: &outcome.warnings,
    };
    write_json(&run.dir.join("summary.json"), &summary)?;
    println!(
        "skills: {} -> {}\nplan: {} updates, {} additions\naccepted: {} updates, {} additions",
        summary.initial_skills,
        summary.final_skills,
        summary.planned_updates,
        summary.planned_additions,
        summary.accepted_updates,
        summary.accepted_additions
    );
    run.manifest.warnings.extend(outcome.warnings.iter().cloned());
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct RatingRow {
    ratings: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct AgreementReport {
    items: usize,
    raters: usize,
    fleiss_kappa: f64,
    cohen_kappa_quadratic: Option<f64>,
}

fn cmd_eval(
    g: &GlobalArgs,
    pairs: Option<&Path>,
    ratings: Option<&Path>,
    bleu: BleuArg,
    label: &str,
) -> Result<(), CliError> {
    let cfg = resolve_config(g, Layer::default())?;
    let inputs: Vec<&Path> = pairs.into_iter().chain(ratings).collect();
    let run = start_run(g, &cfg, "eval", &inputs)?;
    if let Some(p) = pairs {
        let pairs = read_pairs(p)?;
        let mode = match bleu {
            BleuArg::Sentence => BleuMode::Sentence,
            BleuArg::Corpus => BleuMode::Corpus,
        };
        let report = evaluate(&pairs, mode).map_err(pipeline)?;
        let table = report.table(label);
        write_json(&run.dir.join("metrics.json"), &report)?;
        atomic_write(&run.dir.join("metrics.txt"), table.as_bytes())?;
        print!("{table}");
    }
    if let Some(r) = ratings {
        let rows: Vec<RatingRow> = read_ndjson(r)?;
        let matrix: Vec<Vec<usize>> = rows.into_iter().map(|r| r.ratings).collect();
        let fleiss = fleiss_kappa(&matrix, 5).map_err(pipeline)?;
        let raters = matrix.first().map_or(0, Vec::len);
        let cohen = if raters == 2 {
            let a: Vec<usize> = matrix.iter().map(|r| r[0]).collect();
            let b: Vec<usize> = matrix.iter().map(|r| r[1]).collect();
            Some(cohen_kappa_quadratic(&a, &b).map_err(pipeline)?)
        } else {
            None
        };
        let report = AgreementReport {
            items: matrix.len(),
            raters,
            fleiss_kappa: fleiss,
            cohen_kappa_quadratic: cohen,
        };
        write_json(&run.dir.join("agreement.json"), &report)?;
        println!("Fleiss kappa: {:.4}", report.fleiss_kappa);
        if let Some(c) = report.cohen_kappa_quadratic {
            println!("Quadratic-weighted Cohen kappa: {c:.4}");
        }
    }
    run.finish()?;
    Ok(())
}

fn cmd_bank(g: &GlobalArgs, action: &BankCommand) -> Result<(), CliError> {
    let cfg = resolve_config(g, Layer::default())?;
    match action {
        BankCommand::List { bank } => {
            let loaded = load(bank, &cfg)?;
            println!("{} skills ({})", loaded.bank.len(), loaded.bank.generation());
            for e in loaded.bank.entries() {
                println!(
                    "{:<44} {:<10} {:>6}  {:?}",
                    e.skill.name,
                    e.skill.metadata.category.as_str(),
                    e.skill.version().to_string(),
                    e.origin
                );
            }
            let counts: BTreeMap<_, _> = loaded.bank.category_counts().into_iter().collect();
            let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{} {}", c.as_str(), n)).collect();
            println!("categories: {}", parts.join(", "));
        }
        BankCommand::Show { bank, name } => {
            let loaded = load(bank, &cfg)?;
            let entry = loaded
                .bank
                .get(name)
                .ok_or_else(|| CliError::Usage(format!("no skill named {name:?} in {}", bank.display())))?;
            print!("{}", entry.text);
        }
        BankCommand::Validate { bank } => {
            let report = validate_bank(bank)?;
            for i in &report.issues {
                println!("{}: {}", i.file.display(), i.message);
            }
            println!("{} skills, {} issues", report.skills, report.issues.len());
            if !report.ok() {
                return Err(CliError::Validation(format!("{} issue(s)", report.issues.len())));
            }
        }
    }
    Ok(())
}
