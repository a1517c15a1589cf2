//! The `adsplice` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use adsplice_core::corpus::{
    generate_corpus, CorpusSpec, TruthInterval, ADS_DIR, LOGO_FILE, POLICY_FILE, STREAM_DIR, TRUTH_FILE,
};
use adsplice_core::feed::LiveFeed;
use adsplice_core::features::{ModelConfig, TrainedModel};
use adsplice_core::meta::{emit_metadata, parse_metadata, write_metadata, TargetPolicy};
use adsplice_core::pgm;
use adsplice_core::pipeline::{
    bench_engines, detect_segments, format_bench_table, intervals_from_decisions, read_file, run_offline,
    stream_segments, train_model, training_examples, write_file, Detector,
};
use adsplice_core::placer::{source_segment_frames, splice, AdRepository};
use adsplice_core::stream::{Stream, StreamDir, MANIFEST_FILE};
use adsplice_core::xcorr::{LogoTemplate, SearchRegion};
use adsplice_server::probe::{check_gap_free, probe, ProbeOptions};
use adsplice_server::{ServerConfig, ENV_DATA_ROOT, ENV_PORT, ENV_WS_PORT};
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "adsplice", version, about = "Edge ad detection, splicing and MMT delivery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic broadcast corpus with ground truth and an ad library.
    GenCorpus(GenCorpusArgs),
    /// Detect ad intervals and print the metadata.
    Detect(DetectArgs),
    /// Splice ads into a stream according to a metadata file.
    Place(PlaceArgs),
    /// Detect, emit metadata and splice in one offline pass.
    Run(RunArgs),
    /// Train the feature classifier on a corpus.
    Train(TrainArgs),
    /// Compare both engines on a corpus.
    Bench(BenchArgs),
    /// Run the REST and WebSocket server.
    Serve(ServeArgs),
    /// Replay a stream on its wall-clock schedule.
    Feed(FeedArgs),
    /// Register with a stream and check what arrives.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Xcorr,
    Features,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Random schedule of about this many segments instead of the golden layout.
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub segment_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Corpus directory or stream directory.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, value_enum, default_value_t = Engine::Xcorr)]
    pub engine: Engine,
    /// Logo template; defaults to logo.pgm beside the stream.
    #[arg(long)]
    pub logo: Option<PathBuf>,
    /// Trained model; required by the features engine.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Target policy JSON; defaults to policy.json beside the stream.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Write metadata here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub ads: Option<PathBuf>,
    /// Output stream directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub ads: Option<PathBuf>,
    /// Receives metadata.json and the spliced stream/.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub logo: Option<PathBuf>,
    /// Also print the rows as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = ENV_DATA_ROOT, default_value = "adsplice-data")]
    pub data_root: PathBuf,
    #[arg(long, env = ENV_PORT, default_value_t = adsplice_server::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = ENV_WS_PORT, default_value_t = adsplice_server::DEFAULT_WS_PORT)]
    pub ws_port: u16,
    /// Host name clients should use in the WebSocket URL.
    #[arg(long, default_value = "127.0.0.1")]
    pub public_host: String,
}

#[derive(Debug, Args)]
pub struct FeedArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub ws_url: String,
    #[arg(long)]
    pub job_id: String,
    #[arg(long, default_value = "probe")]
    pub client_id: String,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let filter = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(filter)),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Detect(a) => detect(a),
        Command::Place(a) => place(a),
        Command::Run(a) => run(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
        Command::Feed(a) => feed(a),
        Command::Probe(a) => probe_cmd(a),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

/// Where a stream lives and the directory its companions sit in.
struct Located {
    stream: PathBuf,
    base: Option<PathBuf>,
}

fn locate(source: &Path) -> Result<Located, CliError> {
    if source.join(MANIFEST_FILE).is_file() {
        Ok(Located {
            stream: source.to_path_buf(),
            base: source.parent().map(Path::to_path_buf),
        })
    } else if source.join(STREAM_DIR).join(MANIFEST_FILE).is_file() {
        Ok(Located {
            stream: source.join(STREAM_DIR),
            base: Some(source.to_path_buf()),
        })
    } else {
        Err(anyhow!("{} holds no stream", source.display()).into())
    }
}

impl Located {
    fn beside(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.base.as_ref().map(|b| b.join(name)).filter(|p| p.exists()))
    }
}

fn load_logo(path: &Path) -> anyhow::Result<LogoTemplate> {
    let frame = pgm::decode(&read_file(path)?).with_context(|| format!("decoding {}", path.display()))?;
    Ok(LogoTemplate::new(frame, SearchRegion::default())?)
}

fn load_model(path: &Path) -> anyhow::Result<TrainedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TrainedModel::from_json(&text)?)
}

fn build_detector(args: &EngineArgs, at: &Located) -> Result<Detector, CliError> {
    match args.engine {
        Engine::Xcorr => {
            let logo = at
                .beside(&args.logo, LOGO_FILE)
                .ok_or_else(|| usage("the xcorr engine needs --logo (no logo.pgm beside the source)"))?;
            Ok(Detector::xcorr(load_logo(&logo)?))
        }
        Engine::Features => {
            let model = args.model.as_ref().ok_or_else(|| usage("the features engine needs --model"))?;
            Ok(Detector::features(load_model(model)?))
        }
    }
}

fn load_policy(explicit: &Option<PathBuf>, at: &Located) -> anyhow::Result<TargetPolicy> {
    match at.beside(explicit, POLICY_FILE) {
        Some(p) => serde_json::from_slice(&read_file(&p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(TargetPolicy::new()),
    }
}

fn load_truth(base: &Path) -> anyhow::Result<Vec<TruthInterval>> {
    let p = base.join(TRUTH_FILE);
    serde_json::from_slice(&read_file(&p)?).with_context(|| format!("parsing {}", p.display()))
}

fn gen_corpus(a: GenCorpusArgs) -> CliResult {
    let mut spec = match a.segments {
        Some(0) => return Err(usage("--segments must be positive")),
        Some(n) => CorpusSpec::long(a.seed, n),
        None => CorpusSpec::golden(a.seed),
    };
    if let Some(s) = a.segment_seconds {
        if !(s.is_finite() && s > 0.0) {
            return Err(usage("--segment-seconds must be positive"));
        }
        spec.segment_seconds = s;
    }
    let t0 = Instant::now();
    let c = generate_corpus(spec, &a.out).map_err(anyhow::Error::from)?;
    print_json(&json!({
        "out": a.out,
        "segments": c.segment_count(),
        "frames": c.total_frames(),
        "ad_intervals": c.truth().len(),
        "elapsed_ms": t0.elapsed().as_secs_f64() * 1e3,
    }));
    Ok(())
}

fn detect(a: DetectArgs) -> CliResult {
    let at = locate(&a.engine.source)?;
    let detector = build_detector(&a.engine, &at)?;
    let policy = load_policy(&a.engine.policy, &at)?;
    let dir = StreamDir::open(&at.stream).map_err(anyhow::Error::from)?;
    let decisions = detect_segments(stream_segments(&dir), &detector).map_err(anyhow::Error::from)?;
    let meta = emit_metadata(&intervals_from_decisions(&decisions), dir.manifest().fps, &policy)
        .map_err(anyhow::Error::from)?;
    let bytes = write_metadata(&meta);
    match a.out {
        Some(p) => write_file(&p, &bytes).map_err(anyhow::Error::from)?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            // a closed pipe downstream is not an error
            let _ = out.write_all(&bytes).and_then(|_| out.write_all(b"\n"));
        }
    }
    Ok(())
}

fn place(a: PlaceArgs) -> CliResult {
    let at = locate(&a.source)?;
    let ads = at
        .beside(&a.ads, ADS_DIR)
        .ok_or_else(|| usage("--ads is required when no ads/ sits beside the source"))?;
    let repo = AdRepository::open(&ads).map_err(anyhow::Error::from)?;
    let meta = parse_metadata(&read_file(&a.metadata).map_err(anyhow::Error::from)?).map_err(anyhow::Error::from)?;
    let source = Stream::read_dir(&at.stream).map_err(anyhow::Error::from)?;
    let out = splice(&source, &meta, &repo, source_segment_frames(&source)).map_err(anyhow::Error::from)?;
    if a.out.exists() {
        fs::remove_dir_all(&a.out).with_context(|| format!("clearing {}", a.out.display()))?;
    }
    out.write_dir(&a.out).map_err(anyhow::Error::from)?;
    print_json(&json!({ "segments": out.segments.len(), "frames": out.frame_count(), "intervals": meta.len() }));
    Ok(())
}

/// Pairs detected intervals with truth and reports the worst edge error.
fn truth_summary(meta: &[adsplice_core::meta::AdMetadata], truth: &[TruthInterval]) -> serde_json::Value {
    let paired = meta.len() == truth.len();
    let worst = meta
        .iter()
        .zip(truth)
        .map(|(m, t)| m.start_frame.abs_diff(t.start_frame).max(m.end_frame.abs_diff(t.end_frame)))
        .max();
    json!({
        "intervals": truth.len(),
        "detected": meta.len(),
        "max_edge_error_frames": if paired { worst } else { None },
        "within_15_frames": paired && worst.is_none_or(|w| w <= 15),
    })
}

fn run(a: RunArgs) -> CliResult {
    let at = locate(&a.engine.source)?;
    let detector = build_detector(&a.engine, &at)?;
    let policy = load_policy(&a.engine.policy, &at)?;
    let ads = at.beside(&a.ads, ADS_DIR).unwrap_or_else(|| at.stream.join(ADS_DIR));
    let repo = AdRepository::open(&ads).map_err(anyhow::Error::from)?;
    let report = run_offline(&at.stream, &detector, &policy, &repo, &a.out).map_err(anyhow::Error::from)?;
    let ads_found = report.decisions.iter().filter(|d| d.is_ad).count();
    let mut summary = json!({
        "engine": report.engine.name(),
        "segments": report.segments,
        "ad_segments": ads_found,
        "intervals": report.metadata.len(),
        "processing_ms": report.processing_ms,
        "out": a.out,
    });
    if let Some(base) = at.base.as_ref().filter(|b| b.join(TRUTH_FILE).is_file()) {
        summary["truth"] = truth_summary(&report.metadata, &load_truth(base)?);
    }
    print_json(&summary);
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let at = locate(&a.corpus)?;
    let base = at.base.clone().ok_or_else(|| usage("--corpus must be a corpus directory"))?;
    let truth = load_truth(&base)?;
    let dir = StreamDir::open(&at.stream).map_err(anyhow::Error::from)?;
    let cfg = ModelConfig::default();
    let examples = training_examples(stream_segments(&dir), &truth, &cfg).map_err(anyhow::Error::from)?;
    let (model, report) = train_model(&examples, a.split_seed, cfg).map_err(anyhow::Error::from)?;
    write_file(&a.out, model.to_json().as_bytes()).map_err(anyhow::Error::from)?;
    print_json(&serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult {
    let model = a.model.as_ref().ok_or_else(|| usage("bench compares both engines and needs --model"))?;
    let at = locate(&a.corpus)?;
    let base = at.base.clone().ok_or_else(|| usage("--corpus must be a corpus directory"))?;
    let logo = at.beside(&a.logo, LOGO_FILE).ok_or_else(|| usage("no logo.pgm in the corpus; pass --logo"))?;
    let detectors = [Detector::xcorr(load_logo(&logo)?), Detector::features(load_model(model)?)];
    let dir = StreamDir::open(&at.stream).map_err(anyhow::Error::from)?;
    let rows = bench_engines(stream_segments(&dir), &load_truth(&base)?, &detectors).map_err(anyhow::Error::from)?;
    print!("{}", format_bench_table(&rows));
    if a.json {
        print_json(&serde_json::to_value(&rows).expect("rows serialize"));
    }
    Ok(())
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(a: ServeArgs) -> CliResult {
    let mut config = ServerConfig::new(a.data_root, a.port, a.ws_port);
    config.public_host = a.public_host;
    runtime()?.block_on(async move {
        let server = adsplice_server::start(config).await.context("starting server")?;
        println!("rest {}", server.rest_url());
        println!("ws {}", server.ws_url);
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = server.wait() => bail!("server stopped"),
        }
        Ok(())
    })?;
    Ok(())
}

fn feed(a: FeedArgs) -> CliResult {
    if !(a.speed.is_finite() && a.speed > 0.0) {
        return Err(usage("--speed must be positive"));
    }
    let dir = match locate(&a.source) {
        Ok(at) => at.stream,
        Err(_) if a.source.is_dir() => a.source.clone(),
        Err(e) => return Err(e),
    };
    let feed = LiveFeed::open(&dir, a.speed).map_err(anyhow::Error::from)?.start_now();
    let start = feed.start();
    let mut worst = 0.0f64;
    let mut n = 0;
    for fed in feed {
        let fed = fed.map_err(anyhow::Error::from)?;
        let late = fed.lateness(start).as_secs_f64() * 1e3;
        worst = worst.max(late);
        n += 1;
        println!(
            "{}",
            json!({
                "index": fed.index,
                "segment_id": fed.segment.segment_id(),
                "scheduled_ms": fed.scheduled.as_secs_f64() * 1e3,
                "arrived_ms": fed.arrived.duration_since(start).as_secs_f64() * 1e3,
                "lateness_ms": late,
            })
        );
    }
    println!(
        "{}",
        json!({ "segments": n, "elapsed_ms": start.elapsed().as_secs_f64() * 1e3, "max_lateness_ms": worst })
    );
    Ok(())
}

fn probe_cmd(a: ProbeArgs) -> CliResult {
    let report = runtime()?
        .block_on(probe(&a.ws_url, &ProbeOptions::new(a.client_id, a.job_id)))
        .map_err(anyhow::Error::from)?;
    let packets = report.decoded().map_err(anyhow::Error::from)?;
    let gaps = check_gap_free(&packets);
    print_json(&json!({
        "packets": packets.len(),
        "bytes": report.packets.iter().map(|p| p.bytes.len()).sum::<usize>(),
        "registration_ms": report.registration.as_secs_f64() * 1e3,
        "gap_free": gaps.is_ok(),
        "ended_normally": report.ended_normally(),
        "close": report.close,
    }));
    if let Err(e) = gaps {
        return Err(anyhow!(e).into());
    }
    if !report.ended_normally() {
        return Err(anyhow!("stream ended without end_of_stream: {:?}", report.close).into());
    }
    Ok(())
}
