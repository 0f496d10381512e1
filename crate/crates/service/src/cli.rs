//! The `reauthor` command line.

use crate::eval;
use crate::service::{Service, ServiceConfig, DEFAULT_MAX_UPLOAD_BYTES};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use reauthor_core::adapters::sim::{SimulationParams, SimVideoDecoder};
use reauthor_core::adapters::{AdapterConfig, AdapterKind};
use reauthor_core::clock::SystemClock;
use reauthor_core::engine::Reconstructor;
use reauthor_core::media::{DecoderChain, FfmpegDecoder, MemoryStore};
use reauthor_core::model::SessionId;
use reauthor_core::similarity::{best_so_far, DEFAULT_FRAMES_PER_CLIP};
use reauthor_core::{AdapterSet, Env, SessionStatus, StoppingPolicy};
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use tracing::info;

#[derive(Parser, Debug)]
#[command(name = "reauthor", version, about = "Reverse-engineer videos into editable prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reconstruct a prompt for one video.
    Reconstruct(ReconstructArgs),
    /// Run fixed-length reconstructions over a corpus and report curves.
    Eval(EvalArgs),
    /// Serve the HTTP API with background workers.
    Serve(ServeArgs),
    /// Write a corpus of synthetic clips for the simulation adapter.
    SynthCorpus(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AdapterChoice {
    Sim,
    Remote,
}

#[derive(Args, Debug, Clone)]
pub struct AdapterArgs {
    #[arg(long, value_enum, default_value = "sim")]
    pub adapter: AdapterChoice,
    /// Adapter configuration document (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base URL of the remote model service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable that holds the remote credential.
    #[arg(long, default_value = "REAUTHOR_API_KEY")]
    pub credential_env: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sim: SimArgs,
}

/// Simulation knobs.
#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    #[arg(long, default_value_t = 3)]
    pub init_errors: usize,
    #[arg(long, default_value_t = 2)]
    pub fix_per_iter: usize,
    #[arg(long, default_value_t = 0.0)]
    pub p_drift: f64,
    #[arg(long, default_value_t = 0)]
    pub sim_latency_ms: u64,
}

impl SimArgs {
    pub fn params(&self) -> SimulationParams {
        SimulationParams {
            init_errors: self.init_errors,
            fix_per_iter: self.fix_per_iter,
            p_drift: self.p_drift,
            latency_ms: self.sim_latency_ms,
            ..SimulationParams::default()
        }
    }
}

impl AdapterArgs {
    pub fn resolve(&self) -> anyhow::Result<AdapterConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => match self.adapter {
                AdapterChoice::Sim => AdapterConfig::simulation(self.seed),
                AdapterChoice::Remote => {
                    let endpoint = self
                        .endpoint
                        .clone()
                        .context("--endpoint or --config is required for the remote adapter")?;
                    AdapterConfig::remote(endpoint, self.credential_env.clone())
                }
            },
        };
        if config.kind == AdapterKind::Simulation {
            if self.config.is_none() {
                config.simulation = self.sim.params();
            }
            config.seed.get_or_insert(self.seed);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    pub video: PathBuf,
    #[command(flatten)]
    pub adapters: AdapterArgs,
    #[arg(long, default_value_t = 10)]
    pub max_iters: u32,
    #[arg(long, default_value_t = 2)]
    pub patience: u32,
    #[arg(long, default_value_t = 0.0)]
    pub min_delta: f64,
    #[arg(long, default_value_t = DEFAULT_FRAMES_PER_CLIP)]
    pub frames_per_clip: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub corpus_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub iterations: u32,
    #[command(flatten)]
    pub adapters: AdapterArgs,
    #[arg(long, default_value_t = DEFAULT_FRAMES_PER_CLIP)]
    pub frames_per_clip: usize,
    /// Output directory for curves.tsv, stats.json and traces.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_UPLOAD_BYTES / (1024 * 1024))]
    pub max_upload_mb: usize,
    #[command(flatten)]
    pub adapters: AdapterArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reconstruct(a) => reconstruct(a),
        Command::Eval(a) => run_eval(a).map(|_| ExitCode::SUCCESS),
        Command::Serve(a) => serve(a).map(|_| ExitCode::SUCCESS),
        Command::SynthCorpus(a) => eval::synth_corpus(&a.out, a.count, a.seed, &SimulationParams::default())
            .map(|e| {
                println!("wrote {} clips to {}", e.len(), a.out.display());
                ExitCode::SUCCESS
            }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// In-memory environment for one-shot commands.
fn local_env(config: &AdapterConfig) -> anyhow::Result<Env> {
    let mut decoders = DecoderChain::new().with(Arc::new(SimVideoDecoder));
    match FfmpegDecoder::locate() {
        Ok(ff) => decoders = decoders.with(Arc::new(ff)),
        Err(e) if config.kind == AdapterKind::Remote => {
            bail!("the remote adapter needs ffmpeg and ffprobe for frame extraction: {e}")
        }
        Err(_) => {}
    }
    Ok(Env::new(Arc::new(MemoryStore::new()), Arc::new(decoders), Arc::new(SystemClock)))
}

fn build(args: &AdapterArgs) -> anyhow::Result<(Env, AdapterSet)> {
    let config = args.resolve()?;
    let env = local_env(&config)?;
    let adapters = config.build(&env)?;
    Ok((env, adapters))
}

fn media_extension(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"SIMV1\n") {
        "simv"
    } else {
        "mp4"
    }
}

fn reconstruct(args: ReconstructArgs) -> anyhow::Result<ExitCode> {
    let (env, adapters) = build(&args.adapters)?;
    let policy = StoppingPolicy::new(args.max_iters, args.patience, args.min_delta)?;
    let bytes = std::fs::read(&args.video).with_context(|| format!("reading {}", args.video.display()))?;
    let clip = env.store_clip(&bytes)?;
    let engine = Reconstructor::new(&adapters, &env).frames_per_clip(args.frames_per_clip);
    let id = SessionId(clip.id().to_string());
    let session = engine.begin(id, clip)?;

    let mut on_iteration = |_: &reauthor_core::ReconstructionSession, r: &reauthor_core::IterationRecord| {
        eprintln!("iteration {:>2}  score {:.6}", r.index, r.score.value());
        std::ops::ControlFlow::Continue(())
    };
    let session = engine.drive(session, &policy, Some(&mut on_iteration))?;
    write_session(&session, &env, &args.out)?;

    match session.status() {
        SessionStatus::Failed { reason } => {
            eprintln!("reconstruction failed: {reason}");
            Ok(ExitCode::FAILURE)
        }
        status => {
            println!(
                "{} after {} iterations, best iteration {}",
                serde_json::to_value(status)?["state"].as_str().unwrap_or("finished"),
                session.records().len(),
                session.best_index().unwrap_or(0)
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Session document, generated media, trace table and best prompt.
fn write_session(session: &reauthor_core::ReconstructionSession, env: &Env, out: &Path) -> anyhow::Result<()> {
    let media_dir = out.join("iterations");
    std::fs::create_dir_all(&media_dir)?;
    std::fs::write(out.join("session.json"), serde_json::to_string_pretty(session)?)?;
    let frame = env.store.get(session.first_frame().media())?;
    std::fs::write(out.join("first_frame.png"), frame.as_slice())?;
    for r in session.records() {
        let bytes = env.store.get(r.generated_clip.media_ref())?;
        let name = format!("{:02}.{}", r.index, media_extension(&bytes));
        std::fs::write(media_dir.join(name), bytes.as_slice())?;
    }
    let mut table = String::from("iteration\tscore\tbest_so_far\n");
    if let Some(trace) = session.trace() {
        for ((r, s), b) in session.records().iter().zip(trace.scores()).zip(best_so_far(&trace)) {
            let _ = writeln!(table, "{}\t{s}\t{b}", r.index);
        }
    }
    std::fs::write(out.join("trace.tsv"), table)?;
    if let Some(p) = session.best_prompt() {
        std::fs::write(out.join("best_prompt.txt"), p.text())?;
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let (env, adapters) = build(&args.adapters)?;
    let files = eval::corpus_files(&args.corpus_dir)?;
    let report = eval::evaluate(&files, &adapters, &env, args.iterations, args.frames_per_clip)?;
    eval::write_report(&report, &args.out)?;
    let s = &report.stats;
    println!(
        "{} clips: mean initial {:.4}, mean peak {:.4}, mean improvement {:.4}, improved {:.1}%",
        s.n_clips,
        s.mean_initial,
        s.mean_peak,
        s.mean_improvement,
        100.0 * s.improved_fraction
    );
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let config = ServiceConfig {
        data_dir: args.data_dir.clone(),
        adapters: args.adapters.resolve()?,
        max_upload_bytes: args.max_upload_mb.saturating_mul(1024 * 1024),
    };
    let service = Service::open(&config)?;
    let workers = service.start_workers(args.workers);

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .context("invalid --host/--port")?;
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        println!("listening on {local}");
        std::io::stdout().flush()?;
        info!(data_dir = %args.data_dir.display(), "serving");
        let app = crate::api::router(service.clone(), config.max_upload_bytes);
        let svc = service.clone();
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                shutdown_signal().await;
                svc.begin_shutdown();
            })
            .await?;
        anyhow::Ok(())
    })?;
    service.begin_shutdown();
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = ctrl_c.await;
}
