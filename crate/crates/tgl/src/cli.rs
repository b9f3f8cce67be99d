//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 `serve` saw malformed input lines, 64 usage
//! error, 65 malformed input data or checkpoint, 66 missing input file,
//! 70 internal invariant breach, 74 other IO failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use tgl_core::extract::canonical_app;
use tgl_core::graph::{build_session_graph, CapPolicy, NodeType};
use tgl_core::model::Layout;
use tgl_core::serve::{warm_cache, EmbeddingCache, NoClock, ServeConfig, Server, SessionState};
use tgl_core::session::EventRecord;
use tgl_core::synth::{generate_synthetic, SyntheticProfile};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::embedder::Embedder;
use crate::error::{io_err, Error};
use crate::io::{load_sessions, read_json, write_json, write_sessions};
use crate::manifest::RunManifest;
use crate::pipeline::{evaluate, train_checkpoint, Baseline, EvalRequest, RunConfig};

pub const EXIT_SERVE_MALFORMED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(name = "tgl", version, about = "Temporal graph trigger: data, training, evaluation, serving")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate planted-rule synthetic sessions.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n: usize,
        /// Preset name (mixed, coding, writing, research) or a JSON profile file.
        #[arg(long, default_value = "mixed")]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build session graphs and write them as JSONL.
    BuildGraph {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for nodes.csv and edges.csv.
        #[arg(long)]
        provenance: Option<PathBuf>,
        /// Keep the last 64 events instead of the first.
        #[arg(long)]
        keep_last: bool,
    },
    /// Train a checkpoint.
    Train {
        #[arg(long)]
        sessions: PathBuf,
        /// JSON with optional `train`, `architecture` and `shuffle_labels`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        shuffle_labels: bool,
        /// Training log, one JSON object per optimizer step.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Precomputed embedding table instead of the default embedder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and optional baselines.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sessions: PathBuf,
        /// Comma-separated subset of rule,lr. Needs --train-sessions.
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<String>,
        /// Sessions the baselines are fitted on.
        #[arg(long)]
        train_sessions: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Also time this many test sessions (makes the report machine-dependent).
        #[arg(long, default_value_t = 0)]
        latency_sessions: usize,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Stream events from stdin, write one handoff per line to stdout.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        /// TSV of `type<TAB>label` rows to embed before the first event.
        #[arg(long)]
        cache_vocab: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Measure per-event serving latency.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        max_sessions: Option<usize>,
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_not_found() => EXIT_NO_INPUT,
            Error::Io { .. } | Error::Csv(_) => EXIT_IO,
            Error::Parse { .. } | Error::Checkpoint { .. } | Error::Json(_) => EXIT_DATA,
            Error::Core(c) => core_code(c),
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<tgl_core::Error> for Failure {
    fn from(e: tgl_core::Error) -> Self {
        Failure { code: core_code(&e), message: e.to_string() }
    }
}

fn core_code(e: &tgl_core::Error) -> i32 {
    use tgl_core::Error as C;
    match e {
        C::NonMonotoneTimestamps { .. }
        | C::EmptyEventText { .. }
        | C::EmptySession(_)
        | C::EmptyDataset
        | C::NoLabels
        | C::MissingEmbedding(_)
        | C::OutOfOrderEvent { .. }
        | C::DegenerateClass(_)
        | C::NotCacheable(_) => EXIT_DATA,
        C::Config(_) => EXIT_USAGE,
        _ => EXIT_SOFTWARE,
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli.command, stdin, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Gen { seed, n, profile, out } => {
            let prof = match SyntheticProfile::preset(&profile) {
                Some(p) => p,
                None if Path::new(&profile).exists() => read_json(Path::new(&profile))?,
                None => return Err(usage(format!("unknown profile `{profile}`"))),
            };
            let sessions = generate_synthetic(seed, n, &prof)?;
            write_sessions(&out, &sessions)?;
            let mut m = RunManifest::new("gen", json!({ "seed": seed, "n": n, "profile": prof }));
            m.output(&out);
            m.write_beside(&out)?;
            let _ = writeln!(stderr, "wrote {} sessions to {}", sessions.len(), out.display());
            Ok(0)
        }
        Command::BuildGraph { sessions, out, provenance, keep_last } => {
            let loaded = load_sessions(&sessions)?;
            let policy = if keep_last { CapPolicy::KeepLast } else { CapPolicy::KeepFirst };
            let graphs: Vec<_> = loaded.sessions.iter().map(|s| build_session_graph(s, policy)).collect();
            crate::export::write_graphs(&out, &graphs)?;
            let mut m = RunManifest::new(
                "build-graph",
                json!({ "keep_last": keep_last, "dropped_empty_sessions": loaded.dropped_empty }),
            );
            m.input(&sessions)?;
            m.output(&out);
            if let Some(dir) = &provenance {
                crate::export::write_provenance(dir, &graphs)?;
                m.output(dir);
            }
            m.write_beside(&out)?;
            Ok(0)
        }
        Command::Train { sessions, config, out_checkpoint, seed, epochs, shuffle_labels, log, embeddings } => {
            let mut cfg: RunConfig = match &config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.shuffle_labels |= shuffle_labels;
            let embedder = Embedder::open(embeddings.as_deref())?;
            let loaded = load_sessions(&sessions)?;
            let mut log_w = match &log {
                Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p).map_err(io_err(p))?)),
                None => None,
            };
            let mut log_err = None;
            let ck = train_checkpoint(&loaded.sessions, &cfg, &embedder, |s| {
                if let Some(w) = log_w.as_mut() {
                    let line = serde_json::to_string(s).expect("step log serializes");
                    if let Err(e) = writeln!(w, "{line}") {
                        log_err.get_or_insert(e);
                    }
                }
            })?;
            if let (Some(e), Some(p)) = (log_err, &log) {
                return Err(Error::Io { path: p.clone(), source: e }.into());
            }
            if let (Some(w), Some(p)) = (log_w.as_mut(), &log) {
                w.flush().map_err(io_err(p))?;
            }
            save_checkpoint(&out_checkpoint, &ck)?;
            let mut m = RunManifest::new(
                "train",
                json!({ "config": cfg, "dropped_empty_sessions": loaded.dropped_empty, "embedder": ck.embedder }),
            );
            m.input(&sessions)?;
            if let Some(p) = &config {
                m.input(p)?;
            }
            m.output(&out_checkpoint);
            if let Some(p) = &log {
                m.output(p);
            }
            m.write_beside(&out_checkpoint)?;
            let _ = writeln!(
                stderr,
                "trained {} sessions for {} steps into {}",
                loaded.sessions.len(),
                ck.optimizer.step,
                out_checkpoint.display()
            );
            Ok(0)
        }
        Command::Eval { checkpoint, sessions, baselines, train_sessions, report, latency_sessions, embeddings } => {
            let baselines = baselines
                .iter()
                .filter(|b| !b.trim().is_empty())
                .map(|b| Baseline::parse(b).ok_or_else(|| usage(format!("unknown baseline `{b}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if !baselines.is_empty() && train_sessions.is_none() {
                return Err(usage("--baselines needs --train-sessions to fit on"));
            }
            let ck = load_checkpoint(&checkpoint, None)?;
            let embedder = Embedder::open(embeddings.as_deref())?;
            embedder.check(&ck.embedder)?;
            let test = load_sessions(&sessions)?;
            let train = match &train_sessions {
                Some(p) => Some(load_sessions(p)?),
                None => None,
            };
            let out = evaluate(&EvalRequest {
                checkpoint: &ck,
                embedder: &embedder,
                test: &test.sessions,
                train: train.as_ref().map(|t| t.sessions.as_slice()),
                baselines: &baselines,
                latency_sessions,
            })?;
            write_json(&report, &out)?;
            let mut m = RunManifest::new("eval", json!({ "baselines": baselines, "latency_sessions": latency_sessions }));
            m.input(&checkpoint)?;
            m.input(&sessions)?;
            if let Some(p) = &train_sessions {
                m.input(p)?;
            }
            m.output(&report);
            m.write_beside(&report)?;
            for r in &out.reports {
                let _ = writeln!(stderr, "{}: auc_m_fire {}", r.scorer, fmt_opt(r.auc_m_fire));
            }
            Ok(0)
        }
        Command::Serve { checkpoint, cache_vocab, embeddings } => {
            let ck = load_checkpoint(&checkpoint, None)?;
            let embedder = Embedder::open(embeddings.as_deref())?;
            embedder.check(&ck.embedder)?;
            let mut cache = match &cache_vocab {
                Some(p) => warm_cache(&read_vocab(p)?, &embedder)?,
                None => EmbeddingCache::new(),
            };
            let layout = Layout::new(&ck.arch);
            let server = Server::new(&ck.arch, &layout, &ck.params, &embedder, ServeConfig::default());
            Ok(serve_stream(&server, &mut cache, stdin, stdout, stderr)?)
        }
        Command::Bench { checkpoint, sessions, report, max_sessions, no_cache, embeddings } => {
            let ck = load_checkpoint(&checkpoint, None)?;
            let embedder = Embedder::open(embeddings.as_deref())?;
            embedder.check(&ck.embedder)?;
            let loaded = load_sessions(&sessions)?;
            let n = max_sessions.unwrap_or(usize::MAX).min(loaded.sessions.len());
            let layout = Layout::new(&ck.arch);
            let server = Server::new(&ck.arch, &layout, &ck.params, &embedder, ServeConfig::default());
            let mut cache = EmbeddingCache::new();
            let stats =
                crate::bench::bench_latency(&server, &loaded.sessions[..n], (!no_cache).then_some(&mut cache))?;
            write_json(&report, &stats)?;
            let mut m = RunManifest::new("bench", json!({ "max_sessions": max_sessions, "cache": !no_cache }));
            m.input(&checkpoint)?;
            m.input(&sessions)?;
            m.output(&report);
            m.write_beside(&report)?;
            let _ = writeln!(
                stderr,
                "{} events: mean {:.3} ms, median {:.3} ms, p95 {:.3} ms (embed {:.3}, message passing {:.3}, heads {:.3})",
                stats.events,
                stats.mean_ms,
                stats.median_ms,
                stats.p95_ms,
                stats.embed_ms,
                stats.message_passing_ms,
                stats.heads_ms
            );
            Ok(0)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn read_vocab(path: &Path) -> crate::error::Result<Vec<(NodeType, String)>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let (kind, label) = line.split_once('\t').ok_or_else(|| bad("expected `type<TAB>label`".into()))?;
        let kind = NodeType::parse(kind.trim()).ok_or_else(|| bad(format!("unknown node type `{kind}`")))?;
        let label = label.trim();
        let label = match kind {
            NodeType::App => canonical_app(label).unwrap_or(label).to_string(),
            _ => label.to_lowercase(),
        };
        out.push((kind, label));
    }
    Ok(out)
}

/// An event line on stdin; `sample_id` selects the session stream.
#[derive(Debug, Deserialize)]
struct StreamEvent {
    #[serde(default = "default_stream")]
    sample_id: String,
    #[serde(flatten)]
    event: EventRecord,
}

fn default_stream() -> String {
    "stream".into()
}

/// Serves every stdin line. Bad lines are reported on stderr and the stream
/// continues; the return value is 2 if any line was bad.
pub fn serve_stream<E: tgl_core::embed::TextEmbedder + ?Sized>(
    server: &Server<'_, E>,
    cache: &mut EmbeddingCache,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> crate::error::Result<i32> {
    let stdout_path = Path::new("<stdout>");
    let mut states: BTreeMap<String, SessionState> = BTreeMap::new();
    let mut bad = 0usize;
    let mut line = String::new();
    let mut n = 0usize;
    loop {
        line.clear();
        if stdin.read_line(&mut line).map_err(io_err(Path::new("<stdin>")))? == 0 {
            break;
        }
        n += 1;
        if line.trim().is_empty() {
            continue;
        }
        let ev: StreamEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) => {
                bad += 1;
                let _ = writeln!(stderr, "line {n}: {e}");
                continue;
            }
        };
        let state = states.entry(ev.sample_id.clone()).or_insert_with(|| SessionState::new(ev.sample_id.clone()));
        match server.serve_event(state, ev.event, Some(cache), &NoClock) {
            Ok(Some((handoff, _))) => {
                serde_json::to_writer(&mut *stdout, &handoff)?;
                stdout.write_all(b"\n").map_err(io_err(stdout_path))?;
            }
            Ok(None) => {}
            Err(e) => {
                bad += 1;
                let _ = writeln!(stderr, "line {n}: {e}");
            }
        }
    }
    stdout.flush().map_err(io_err(stdout_path))?;
    let _ = writeln!(
        stderr,
        "served {} sessions; cache {} entries, hit rate {:.3}",
        states.len(),
        cache.len(),
        cache.hit_rate()
    );
    Ok(if bad > 0 { EXIT_SERVE_MALFORMED } else { 0 })
}
