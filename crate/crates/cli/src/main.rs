//! `sentinel` — ROI-scoped home monitoring over netpbm frame streams.
//!
//! Exit codes: 0 success, 1 runtime I/O failure, 2 configuration or usage
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use sentinel_core::config::Config;
use sentinel_core::engine::Engine;
use sentinel_core::fall::{self, FallError};
use sentinel_core::frame::{encode_color, DirectorySource, FramePair, FrameStream, SourceError};
use sentinel_core::notifier::{
    social_body, Clock, CommandVoiceSink, DeliveryError, Notifier, SystemClock, Transport,
    VoiceSink,
};
use sentinel_core::pipeline::{engine_config_from, peek_dimensions, Pipeline, PipelineError};
use sentinel_core::recorder::{summarize, Recorder};
use sentinel_core::simulator::{self, Scenario};
use sentinel_core::svm::{self, SvmError, TrainOptions};

const WEBHOOK_TOKEN_ENV: &str = "SENTINEL_WEBHOOK_TOKEN";

#[derive(Parser)]
#[command(
    name = "sentinel",
    version,
    about = "Event-triggered home monitoring: motion regions, photo-link recognition, fall classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate, then process the configured frame stream: record events,
    /// dispatch notifications, print a summary.
    Run {
        config: PathBuf,
        /// Stamp frames with wall-clock time instead of stream-relative time.
        #[arg(long)]
        wall_clock: bool,
    },
    /// Render a scenario script to numbered P6 frames plus `expected.tsv`.
    Simulate { script: PathBuf, out_dir: PathBuf },
    /// Train the fall/stand classifier from a `label<TAB>mask` dataset.
    Train {
        dataset: PathBuf,
        /// Soft-margin box constraint.
        #[arg(long, default_value_t = 10.0)]
        c: f64,
        /// Solver convergence tolerance.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Where to write the svm-v1 model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a labeled dataset against a trained model.
    Evaluate {
        model: PathBuf,
        dataset: PathBuf,
        /// Also write the rates as TSV.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Per-day event statistics over an event log.
    Report { log: PathBuf, days: u32 },
    /// Write the first source frame as a P6 image (for reading off ROI
    /// coordinates).
    DumpFrame { config: PathBuf, out: PathBuf },
    /// Send a test message through the configured webhook.
    NotifyTest { config: PathBuf },
}

enum CliError {
    /// Configuration or usage problem: exit 2.
    Usage(String),
    /// Runtime I/O problem: exit 1.
    Runtime(String),
}

impl CliError {
    fn report(&self) -> ExitCode {
        match self {
            CliError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            CliError::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Dataset problems are usage errors except plain I/O failures.
fn dataset_error(e: FallError) -> CliError {
    match e {
        FallError::Io { .. } => runtime(e),
        other => usage(other),
    }
}

fn svm_error(e: SvmError) -> CliError {
    match e {
        SvmError::ModelFormat(_) => usage(e),
        other => usage(other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, wall_clock } => cmd_run(&config, wall_clock),
        Command::Simulate { script, out_dir } => cmd_simulate(&script, &out_dir),
        Command::Train { dataset, c, tolerance, out } => cmd_train(&dataset, c, tolerance, &out),
        Command::Evaluate { model, dataset, tsv } => cmd_evaluate(&model, &dataset, tsv.as_deref()),
        Command::Report { log, days } => cmd_report(&log, days),
        Command::DumpFrame { config, out } => cmd_dump_frame(&config, &out),
        Command::NotifyTest { config } => cmd_notify_test(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

/// Webhook transport over HTTP(S). The bearer token, when present in the
/// environment, rides in the Authorization header.
struct UreqTransport {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl UreqTransport {
    fn new(url: String) -> Self {
        UreqTransport {
            url,
            token: std::env::var(WEBHOOK_TOKEN_ENV).ok(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl Transport for UreqTransport {
    fn send(&self, body: &[u8]) -> Result<(), DeliveryError> {
        let mut request = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        request
            .send(body)
            .map(|_| ())
            .map_err(|e| DeliveryError(e.to_string()))
    }
}

/// Stand-in transport when no webhook URL is configured: deliveries fail
/// and are visible as such in the delivery log.
struct DisabledTransport;

impl Transport for DisabledTransport {
    fn send(&self, _body: &[u8]) -> Result<(), DeliveryError> {
        Err(DeliveryError("no webhook url configured".to_string()))
    }
}

/// Voice sink used when no command hook is configured.
struct SilentVoiceSink;

impl VoiceSink for SilentVoiceSink {
    fn alert(&self, _event_ts_ms: u64, _message: &str) -> Result<(), DeliveryError> {
        Ok(())
    }
}

/// Re-stamps frames with wall-clock time, keeping timestamps strictly
/// increasing.
struct WallClockStream<S> {
    inner: S,
    clock: SystemClock,
    last_ms: Option<u64>,
}

impl<S: FrameStream> FrameStream for WallClockStream<S> {
    fn next_pair(&mut self) -> Result<Option<FramePair>, SourceError> {
        let Some(mut pair) = self.inner.next_pair()? else {
            return Ok(None);
        };
        let mut now = self.clock.now_ms();
        if let Some(last) = self.last_ms {
            now = now.max(last + 1);
        }
        self.last_ms = Some(now);
        pair.gray.timestamp_ms = now;
        pair.color.timestamp_ms = now;
        Ok(Some(pair))
    }
}

fn build_notifier(config: &Config) -> Option<Notifier> {
    let notify = config.notify.as_ref()?;
    let transport: Box<dyn Transport> = match &notify.webhook_url {
        Some(url) => Box::new(UreqTransport::new(url.clone())),
        None => Box::new(DisabledTransport),
    };
    let voice: Box<dyn VoiceSink> = match &notify.voice_command {
        Some(cmd) if !cmd.is_empty() => Box::new(CommandVoiceSink {
            program: cmd[0].clone(),
            args: cmd[1..].to_vec(),
        }),
        _ => Box::new(SilentVoiceSink),
    };
    Some(Notifier::start(
        notify.policy.clone(),
        transport,
        voice,
        Arc::new(SystemClock::new()),
        Some(config.output_dir.join("notify.log")),
    ))
}

fn cmd_run(config_path: &Path, wall_clock: bool) -> Result<(), CliError> {
    let config = Config::load(config_path).map_err(usage)?;
    let (width, height) = match peek_dimensions(&config.source_dir, config.period_ms) {
        Ok(dims) => dims,
        Err(PipelineError::EmptySource(_)) => {
            // An empty source is a clean, uneventful run.
            println!("frames processed\t0");
            for kind in sentinel_core::engine::EventKind::ALL {
                println!("{kind}: 0");
            }
            return Ok(());
        }
        Err(e) => return Err(runtime(e)),
    };
    let engine = Engine::configure(engine_config_from(&config, width, height)).map_err(usage)?;
    let recorder = Recorder::create(&config.output_dir).map_err(runtime)?;
    let notifier = build_notifier(&config);
    let message = config
        .notify
        .as_ref()
        .map(|n| n.message.clone())
        .unwrap_or_else(|| "event".to_string());
    let pipeline = Pipeline::new(engine, recorder, notifier, message, config.debug_dir.clone())
        .map_err(runtime)?;
    let mut source =
        DirectorySource::open(&config.source_dir, config.period_ms).map_err(runtime)?;
    for warning in source.warnings() {
        eprintln!("warning: {warning}");
    }
    let summary = if wall_clock {
        let mut stream =
            WallClockStream { inner: source, clock: SystemClock::new(), last_ms: None };
        pipeline.run(&mut stream).map_err(runtime)?
    } else {
        pipeline.run(&mut source).map_err(runtime)?
    };
    print!("{}", summary.render());
    Ok(())
}

fn cmd_simulate(script_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let scenario = Scenario::load(script_path).map_err(usage)?;
    let expected = simulator::expected(&scenario).map_err(usage)?;
    fs::create_dir_all(out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    let frames = simulator::render_pairs(&scenario.script);
    let count = frames.len();
    for (i, pair) in frames.into_iter().enumerate() {
        let path = out_dir.join(format!("{i:06}.ppm"));
        fs::write(&path, encode_color(&pair.color))
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    let oracle = out_dir.join("expected.tsv");
    fs::write(&oracle, expected.to_tsv())
        .map_err(|e| runtime(format!("{}: {e}", oracle.display())))?;
    println!(
        "rendered {count} frames to {}; oracle predicts {} events",
        out_dir.display(),
        expected.events.len()
    );
    Ok(())
}

fn cmd_train(dataset_path: &Path, c: f64, tolerance: f64, out: &Path) -> Result<(), CliError> {
    let dataset = fall::load_dataset(dataset_path).map_err(dataset_error)?;
    let opts = TrainOptions { c, tolerance, ..TrainOptions::default() };
    let (model, report) = fall::train(&dataset.samples, &opts).map_err(dataset_error)?;
    fs::write(out, svm::save_model(&model))
        .map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    println!("samples\t{} fall, {} stand", model.positive_count, model.negative_count);
    if dataset.skipped_empty > 0 {
        println!("skipped empty silhouettes\t{}", dataset.skipped_empty);
    }
    println!("objective\t{}", report.objective);
    println!("support vectors\t{}", report.support_vectors);
    println!("sweeps\t{}", report.sweeps);
    println!("model\t{}", out.display());
    Ok(())
}

fn cmd_evaluate(model_path: &Path, dataset_path: &Path, tsv: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(model_path)
        .map_err(|e| runtime(format!("{}: {e}", model_path.display())))?;
    let model = svm::load_model(&text).map_err(svm_error)?;
    let dataset = fall::load_dataset(dataset_path).map_err(dataset_error)?;
    let report = fall::evaluate(&model, &dataset.samples).map_err(dataset_error)?;
    print!("{}", report.render_table());
    if let Some(path) = tsv {
        fs::write(path, report.render_tsv())
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_report(log: &Path, days: u32) -> Result<(), CliError> {
    if days == 0 {
        return Err(CliError::Usage("days must be > 0".to_string()));
    }
    let stats = summarize(log, days).map_err(runtime)?;
    print!("{}", stats.render_table());
    Ok(())
}

fn cmd_dump_frame(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config = Config::load(config_path).map_err(usage)?;
    let mut source =
        DirectorySource::open(&config.source_dir, config.period_ms).map_err(runtime)?;
    let pair = source
        .next_pair()
        .map_err(runtime)?
        .ok_or_else(|| runtime(format!("{} holds no frames", config.source_dir.display())))?;
    fs::write(out, encode_color(&pair.color))
        .map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    println!("wrote {}x{} frame to {}", pair.color.width, pair.color.height, out.display());
    Ok(())
}

fn cmd_notify_test(config_path: &Path) -> Result<(), CliError> {
    let config = Config::load(config_path).map_err(usage)?;
    let notify = config
        .notify
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no [notify] section".to_string()))?;
    let url = notify
        .webhook_url
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no webhook url".to_string()))?;
    let transport = UreqTransport::new(url.clone());
    let clock = SystemClock::new();
    let body = social_body(&notify.message, b"", clock.now_ms());
    match transport.send(&body) {
        Ok(()) => {
            println!("webhook accepted the test message");
            Ok(())
        }
        Err(e) => Err(runtime(format!("webhook test failed: {e}"))),
    }
}
