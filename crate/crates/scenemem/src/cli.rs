//! The `scenemem` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 internal invariant violation.
//! Every report is JSON and embeds the full run configuration.

use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use scenemem_core::retrieval::{self, query, Channel, RetrievalError};
use scenemem_core::{ActionError, UpdateError, VerbLexicon};
use serde_json::{json, Value};

use crate::config::{ProviderKind, RunConfig};
use crate::episode::{self, Episode, EpisodeError};
use crate::eval::{self, Task};
use crate::pipeline::{self, PipelineError};
use crate::provider::{serve_connection, EndpointProvider, Provider, SyntheticProvider};
use crate::snapshot::MemorySnapshot;
use crate::synth::{self, presets, WorldSpec};

#[derive(Debug, Parser)]
#[command(name = "scenemem", version, about = "Persistent 3D object memory over RGB-D episodes")]
pub struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the provider kind from the configuration.
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Writes the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub report_out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryOp {
    /// Objects by appearance (clip channel).
    Appearance,
    /// Objects by environment context.
    Environment,
    /// Frames by environment context.
    Temporal,
    /// World positions by clustered context similarity.
    Spatial,
    /// Structured query over the object and visibility tables.
    Structured,
    /// Appearance and structured hits together.
    Db,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generates a synthetic episode with its answer key.
    Simulate {
        /// Output episode directory.
        #[arg(long)]
        episode: PathBuf,
        /// Built-in world (cube, static-room, move, kitchen).
        #[arg(long, conflicts_with = "world")]
        preset: Option<String>,
        /// World spec JSON file.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Checks an episode and lists every violation.
    Validate {
        #[arg(long)]
        episode: PathBuf,
    },
    /// Replays an episode into memory and writes a snapshot.
    Ingest {
        #[arg(long)]
        episode: PathBuf,
        /// Snapshot output path.
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Runs a retrieval operation against a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum)]
        op: QueryOp,
        /// Text embedded through the provider.
        #[arg(long)]
        text: Option<String>,
        /// JSON array used directly as the query vector.
        #[arg(long)]
        vector: Option<PathBuf>,
        /// Structured query string.
        #[arg(long)]
        sql: Option<String>,
        /// Episode directory; the builtin provider reads its world from here.
        #[arg(long)]
        episode: Option<PathBuf>,
        /// Result count; defaults to the configured k for the operation.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Scores a snapshot against an answer key.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        /// Answer key; defaults to answer_key.json inside --episode.
        #[arg(long)]
        answer_key: Option<PathBuf>,
        #[arg(long)]
        episode: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: Task,
    },
    /// Loads a snapshot, checks it, and optionally rewrites it canonically.
    Snapshot {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serves the builtin provider of a synthetic episode over TCP.
    Serve {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
        /// Stop after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl std::fmt::Display) -> Self {
        CliError { code: 1, message: message.to_string() }
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        CliError { code: 2, message: message.to_string() }
    }
}

impl From<EpisodeError> for CliError {
    fn from(e: EpisodeError) -> Self {
        CliError::input(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let internal = matches!(
            e,
            PipelineError::Update { source: UpdateError::History(_), .. }
                | PipelineError::Action { source: ActionError::History(_), .. }
        );
        if internal {
            CliError::internal(e)
        } else {
            CliError::input(e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(kind) = cli.provider {
        cfg.provider.kind = kind;
    }
    cfg.validate().map_err(CliError::input)?;
    Ok(cfg)
}

fn open_provider(cfg: &RunConfig, episode: Option<&Path>) -> Result<Box<dyn Provider>, CliError> {
    match cfg.provider.kind {
        ProviderKind::BuiltinSynthetic => {
            let dir = episode.ok_or_else(|| CliError::input("the builtin provider needs --episode"))?;
            Ok(Box::new(SyntheticProvider::from_episode(dir).map_err(CliError::input)?))
        }
        ProviderKind::Endpoint => {
            let addr = cfg.provider.endpoint.as_deref().expect("validated");
            Ok(Box::new(EndpointProvider::connect(addr).map_err(|e| CliError::input(format!("cannot reach {addr}: {e}")))?))
        }
    }
}

fn emit(cli: &Cli, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    match &cli.report_out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(CliError::internal)?;
            Ok(())
        }
    }
}

fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    Ok(episode::read_json::<Vec<f64>>(path)?)
}

/// Header line, then one compact record per line.
fn emit_lines(cli: &Cli, header: &Value, records: &[Value]) -> Result<(), CliError> {
    let mut text = String::new();
    for v in std::iter::once(header).chain(records) {
        text.push_str(&serde_json::to_string(v).expect("record serializes"));
        text.push('\n');
    }
    match &cli.report_out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(CliError::internal),
    }
}

fn to_records<T: serde::Serialize>(items: Vec<T>) -> Vec<Value> {
    items.into_iter().map(|i| serde_json::to_value(i).expect("record serializes")).collect()
}

fn cell(v: &query::Value) -> Value {
    match v {
        query::Value::Int(i) => json!(i),
        query::Value::Float(f) => json!(f),
        query::Value::Text(t) => json!(t),
    }
}

fn retrieval_error(e: RetrievalError) -> CliError {
    CliError::input(e)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let report = match &cli.command {
        Command::Simulate { episode, preset, world, seed } => {
            let spec: WorldSpec = match (preset, world) {
                (Some(name), None) => presets::by_name(name, *seed)
                    .ok_or_else(|| CliError::input(format!("unknown preset {name}; choose one of {:?}", presets::PRESETS)))?,
                (None, Some(path)) => episode::read_json(path)?,
                _ => return Err(CliError::input("pass exactly one of --preset or --world")),
            };
            let key = synth::generate(&spec, episode).map_err(|e| match e {
                synth::SynthError::InvalidSpec(_) => CliError::input(e),
                synth::SynthError::Episode(e) => CliError::from(e),
            })?;
            json!({
                "command": "simulate",
                "config": cfg,
                "episode": episode,
                "episode_digest": key.episode_digest,
                "frames": spec.frame_count,
                "objects": spec.objects.len(),
                "events": key.events.len(),
                "locate_queries": key.locate_queries.len(),
            })
        }
        Command::Validate { episode } => {
            let r = episode::validate_episode(episode);
            let clean = r.is_clean();
            emit(cli, &json!({ "command": "validate", "config": cfg, "report": r }))?;
            return if clean { Ok(()) } else { Err(CliError::input(format!("{} violation(s)", r.violations.len()))) };
        }
        Command::Ingest { episode, snapshot } => {
            let ep = Episode::open(episode)?;
            let mut provider = open_provider(&cfg, Some(episode))?;
            let memory = pipeline::ingest(&ep, provider.as_mut(), &cfg.memory, &VerbLexicon::default(), None)?;
            if !memory.relations_consistent() {
                return Err(CliError::internal("relation mirrors are inconsistent after ingest"));
            }
            let snap = MemorySnapshot::new(memory, cfg.memory.clone(), Some(ep.digest()?));
            snap.save(snapshot)?;
            let m = &snap.memory;
            json!({
                "command": "ingest",
                "config": cfg,
                "snapshot": snapshot,
                "episode_digest": snap.episode_digest,
                "entries": m.len(),
                "dynamic_transitions": m.report.dynamic_transitions(),
                "ingest": m.report,
            })
        }
        Command::Query { snapshot, op, text, vector, sql, episode, k } => {
            let snap = MemorySnapshot::load(snapshot)?;
            let m = &snap.memory;
            let mc = &cfg.memory;
            let qvec = || -> Result<Vec<f64>, CliError> {
                match (text, vector) {
                    (_, Some(p)) => read_vector(p),
                    (Some(t), None) => open_provider(&cfg, episode.as_deref())?.embed_text(t).map_err(CliError::input),
                    (None, None) => Err(CliError::input("this operation needs --text or --vector")),
                }
            };
            let records: Vec<Value> = match op {
                QueryOp::Appearance => to_records(
                    retrieval::retrieve_by_appearance(m, &qvec()?, Channel::Clip, k.unwrap_or(mc.k_objects))
                        .map_err(retrieval_error)?,
                ),
                QueryOp::Environment => to_records(
                    retrieval::retrieve_by_environment(m, &qvec()?, k.unwrap_or(mc.k_objects)).map_err(retrieval_error)?,
                ),
                QueryOp::Temporal => {
                    to_records(retrieval::temporal_loc(m, &qvec()?, k.unwrap_or(mc.k_frames)).map_err(retrieval_error)?)
                }
                QueryOp::Spatial => to_records(
                    retrieval::spatial_clusters(m, &qvec()?, mc.cluster_cutoff, k.unwrap_or(mc.k_places))
                        .map_err(retrieval_error)?,
                ),
                QueryOp::Structured => {
                    let src = sql.as_deref().ok_or_else(|| CliError::input("--sql is required"))?;
                    let rows = query::query_structured(m, src).map_err(CliError::input)?;
                    rows.rows
                        .iter()
                        .map(|r| {
                            let obj: serde_json::Map<String, Value> =
                                rows.columns.iter().zip(r).map(|(c, v)| (c.name().to_string(), cell(v))).collect();
                            Value::Object(obj)
                        })
                        .collect()
                }
                QueryOp::Db => {
                    let q = if text.is_some() || vector.is_some() { Some(qvec()?) } else { None };
                    let hits = retrieval::query_db(m, q.as_deref(), Channel::Clip, sql.as_deref(), k.unwrap_or(mc.k_objects))
                        .map_err(retrieval_error)?;
                    hits.union
                        .iter()
                        .map(|id| {
                            let score = hits.by_similarity.iter().find(|h| h.item == *id).map(|h| h.score);
                            json!({ "item": id, "score": score, "structured": hits.by_structure.contains(id) })
                        })
                        .collect()
                }
            };
            let header =
                json!({ "command": "query", "config": cfg, "op": format!("{op:?}").to_lowercase(), "count": records.len() });
            return emit_lines(cli, &header, &records);
        }
        Command::Eval { snapshot, answer_key, episode, task } => {
            let key_path = match (answer_key, episode) {
                (Some(p), _) => p.clone(),
                (None, Some(dir)) => dir.join(episode::ANSWER_KEY_FILE),
                (None, None) => return Err(CliError::input("pass --answer-key or --episode")),
            };
            let snap = MemorySnapshot::load(snapshot)?;
            let key = synth::load_answer_key(&key_path)?;
            eval::check_episode(&snap, &key).map_err(CliError::input)?;
            let metrics = match task {
                Task::Locate => json!(eval::eval_locate(&snap.memory, &key, cfg.success_radius)),
                Task::Orders => json!(eval::eval_orders(&snap.memory, &key)),
                Task::States => json!(eval::eval_states(&snap.memory, &key)),
            };
            json!({ "command": "eval", "config": cfg, "task": task, "metrics": metrics })
        }
        Command::Snapshot { snapshot, out } => {
            let snap = MemorySnapshot::load(snapshot)?;
            if !snap.memory.relations_consistent() {
                return Err(CliError::internal("snapshot relations are not mirror-consistent"));
            }
            if let Some(out) = out {
                snap.save(out)?;
            }
            json!({
                "command": "snapshot",
                "config": cfg,
                "schema_version": snap.schema_version,
                "config_hash": snap.config_hash,
                "episode_digest": snap.episode_digest,
                "entries": snap.memory.len(),
                "frames": snap.memory.frames().len(),
                "actions": snap.memory.history.actions().len(),
            })
        }
        Command::Serve { episode, addr, max_connections } => {
            let mut provider = SyntheticProvider::from_episode(episode).map_err(CliError::input)?;
            let listener = TcpListener::bind(addr).map_err(|e| CliError::input(format!("cannot bind {addr}: {e}")))?;
            eprintln!("serving on {}", listener.local_addr().map_err(CliError::internal)?);
            for (served, stream) in listener.incoming().enumerate() {
                let stream = stream.map_err(CliError::internal)?;
                let reader = BufReader::new(stream.try_clone().map_err(CliError::internal)?);
                if let Err(e) = serve_connection(&mut provider, reader, stream) {
                    eprintln!("connection ended: {e}");
                }
                if max_connections.is_some_and(|m| served + 1 >= m) {
                    break;
                }
            }
            return Ok(());
        }
    };
    emit(cli, &report)
}

/// Parses arguments, runs, prints any error and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
