//! `vgi`: corpus tooling, batch evaluation runs, reports and the live
//! session service.

pub mod server;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vgi_core::batch::{ERRORS_FILE, TRIALS_FILE};
use vgi_core::corpus::{corpus_stats, generate_adversarial, load_corpus, CorpusError, LengthStats};
use vgi_core::evalstats::parse_trials;
use vgi_core::gateway::{ConfigError, ResponseCache};
use vgi_core::prompting::{parse_conditions, CaptionRecord, CaptionStore};
use vgi_core::vision::{caption_scene, encode_image, EncodeSettings};
use vgi_core::{
    render_text, run_batch, run_report, CaptionStyle, Clock, Corpus, Gateway, MockProvider, MockScript, ProviderConfig,
    RunConfig, RunError, SystemClock,
};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Parser)]
#[command(
    name = "vgi",
    version,
    about = "Vision-grounded interpreting: corpus tools, evaluation runs and live sessions"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus manifest and its images.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Utterance length statistics per trigger category.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write the seeded adversarial image pairing.
    Adversarial {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "pairing.jsonl")]
        out: PathBuf,
    },
    /// Generate scene captions for every corpus image.
    Caption {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "generic")]
        style: CaptionStyle,
        #[arg(long, default_value = "captions.jsonl")]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run every (item, condition) trial and write trials and report.
    Run(RunArgs),
    /// Summarize a trials file.
    Report {
        #[arg(long)]
        trials: PathBuf,
        /// Also write report.json and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the live session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of console assets served under /console.
        #[arg(long)]
        console_dir: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// OpenAI-compatible HTTP endpoint configured through VGI_* variables.
    Openai,
    /// Offline scripted provider.
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Openai)]
    pub provider: ProviderKind,
    /// JSON script for the mock provider.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Provider calls in flight at once.
    #[arg(long, default_value_t = 4)]
    pub provider_inflight: usize,
    /// Response cache directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of C1,C2,C3,C4.
    #[arg(long, default_value = "C1,C2,C3,C4")]
    pub conditions: String,
    /// Adversarial pairing seed; required for C4.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "generic")]
    pub style: CaptionStyle,
    /// Existing pairing file.
    #[arg(long)]
    pub pairing: Option<PathBuf>,
    /// Existing caption store.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Manual judgement overrides.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Reuse completed trials from an interrupted run.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Input that parsed but failed validation.
    #[error("{0}")]
    Validation(String),
    /// Bad flags, environment or unusable paths.
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Config(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Self::Config(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Corpus(c) => c.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Builds the provider gateway. Live providers need `VGI_API_KEY`.
pub fn build_gateway(args: &ProviderArgs, default_cache: Option<&Path>) -> Result<Gateway, CliError> {
    let gateway = match args.provider {
        ProviderKind::Mock => {
            let script = match &args.mock_script {
                Some(path) => {
                    let text =
                        fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    MockScript::from_json(&text).map_err(CliError::Config)?
                }
                None => MockScript::default(),
            };
            let mock = Arc::new(MockProvider::new(script));
            let config = ProviderConfig {
                model_id: mock.model().to_string(),
                base_url: "mock://".into(),
                max_inflight: args.provider_inflight,
                ..ProviderConfig::default()
            };
            config.validate()?;
            Gateway::new(mock, config)
        }
        ProviderKind::Openai => {
            let mut config = ProviderConfig::from_env()?;
            config.max_inflight = args.provider_inflight;
            config.validate()?;
            Gateway::http(config).map_err(config_err)?
        }
    };
    match args.cache.as_deref().or(default_cache) {
        Some(dir) => Ok(gateway
            .with_cache(ResponseCache::new(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?)),
        None => Ok(gateway),
    }
}

pub async fn execute(cli: Cli) -> Result<String, CliError> {
    let format = cli.format;
    match cli.command {
        Command::Validate { corpus } => validate(&corpus, format),
        Command::Stats { corpus } => stats(&corpus, format),
        Command::Adversarial { corpus, seed, out } => adversarial(&corpus, seed, &out, format),
        Command::Caption {
            corpus,
            style,
            out,
            provider,
        } => caption(&corpus, style, &out, &provider, format).await,
        Command::Run(args) => run(args, format).await,
        Command::Report { trials, out } => report(&trials, out.as_deref(), format),
        Command::Serve {
            port,
            host,
            console_dir,
            provider,
        } => {
            let gateway = build_gateway(&provider, None)?;
            let state = server::AppState::new(gateway, Arc::new(SystemClock), console_dir);
            let addr = format!("{host}:{port}");
            let listener = tokio::net::TcpListener::bind(&addr)
                .await
                .map_err(|e| CliError::Config(format!("{addr}: {e}")))?;
            eprintln!("listening on http://{}", listener.local_addr().map_err(config_err)?);
            server::serve(listener, state).await.map_err(config_err)?;
            Ok(String::new())
        }
    }
}

#[derive(Serialize)]
struct ValidateOutput {
    valid: bool,
    items: usize,
    by_trigger: std::collections::BTreeMap<String, usize>,
    violations: Vec<vgi_core::corpus::Violation>,
}

fn validate(path: &Path, format: Format) -> Result<String, CliError> {
    match load_corpus(path) {
        Ok(corpus) => {
            let out = ValidateOutput {
                valid: true,
                items: corpus.len(),
                by_trigger: corpus
                    .count_by_trigger()
                    .into_iter()
                    .map(|(t, n)| (t.to_string(), n))
                    .collect(),
                violations: Vec::new(),
            };
            Ok(match format {
                Format::Json => json(&out),
                Format::Text => {
                    let counts: Vec<String> = out.by_trigger.iter().map(|(t, n)| format!("{t} {n}")).collect();
                    format!("ok: {} items ({})\n", out.items, counts.join(", "))
                }
            })
        }
        Err(CorpusError::Invalid(violations)) => {
            if format == Format::Json {
                print!(
                    "{}",
                    json(&ValidateOutput {
                        valid: false,
                        items: 0,
                        by_trigger: Default::default(),
                        violations: violations.clone(),
                    })
                );
            }
            Err(CorpusError::Invalid(violations).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn length_row(label: &str, s: &LengthStats) -> String {
    format!("{label:<10} {:>5} {:>6.2} {:>6.2}\n", s.count, s.mean, s.sd)
}

fn stats(path: &Path, format: Format) -> Result<String, CliError> {
    let corpus = load_corpus(path)?;
    let stats = corpus_stats(&corpus)?;
    Ok(match format {
        Format::Json => json(&stats),
        Format::Text => {
            let mut out = format!("{:<10} {:>5} {:>6} {:>6}\n", "trigger", "n", "mean", "sd");
            for (t, s) in &stats.per_trigger {
                out += &length_row(t.as_str(), s);
            }
            out += &length_row("overall", &stats.overall);
            let _ = writeln!(out, "tokens: min {}, max {}", stats.min_tokens, stats.max_tokens);
            out
        }
    })
}

#[derive(Serialize)]
struct PairingOutput {
    path: PathBuf,
    seed: u64,
    items: usize,
    cross_trigger: usize,
}

fn adversarial(path: &Path, seed: u64, out: &Path, format: Format) -> Result<String, CliError> {
    let corpus = load_corpus(path)?;
    let pairing = generate_adversarial(&corpus, seed)?;
    write_file(out, pairing.to_jsonl().as_bytes())?;
    let summary = PairingOutput {
        path: out.to_path_buf(),
        seed,
        items: pairing.entries.len(),
        cross_trigger: pairing.cross_trigger_count(&corpus),
    };
    Ok(match format {
        Format::Json => json(&summary),
        Format::Text => format!(
            "wrote {} pairs to {} (seed {}, {} cross-trigger)\n",
            summary.items,
            out.display(),
            seed,
            summary.cross_trigger
        ),
    })
}

#[derive(Serialize)]
struct CaptionFailure {
    item_id: String,
    detail: String,
}

#[derive(Serialize)]
struct CaptionOutput {
    path: PathBuf,
    style: CaptionStyle,
    captions: usize,
    failures: Vec<CaptionFailure>,
}

async fn caption(
    path: &Path,
    style: CaptionStyle,
    out: &Path,
    provider: &ProviderArgs,
    format: Format,
) -> Result<String, CliError> {
    let corpus: Corpus = load_corpus(path)?;
    let gateway = build_gateway(provider, None)?;
    let clock = SystemClock;
    let mut store = CaptionStore::new();
    let mut failures = Vec::new();
    for item in &corpus.items {
        let image_path = corpus.image_path(item);
        let result = match fs::read(&image_path) {
            Ok(bytes) => match encode_image(&bytes, EncodeSettings::default()) {
                Ok(image) => caption_scene(&image, style, &item.id, &gateway)
                    .await
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            },
            Err(e) => Err(format!("{}: {e}", image_path.display())),
        };
        match result {
            Ok(c) => store.insert(CaptionRecord {
                item_id: item.id.clone(),
                caption: c.text,
                model_id: c.model_id,
                created_at: clock.now_rfc3339(),
            }),
            Err(detail) => failures.push(CaptionFailure {
                item_id: item.id.clone(),
                detail,
            }),
        }
    }
    write_file(out, store.to_jsonl().as_bytes())?;
    let summary = CaptionOutput {
        path: out.to_path_buf(),
        style,
        captions: store.len(),
        failures,
    };
    Ok(match format {
        Format::Json => json(&summary),
        Format::Text => {
            let mut text = format!("wrote {} {} captions to {}\n", summary.captions, style, out.display());
            for f in &summary.failures {
                let _ = writeln!(text, "failed {}: {}", f.item_id, f.detail);
            }
            text
        }
    })
}

async fn run(args: RunArgs, format: Format) -> Result<String, CliError> {
    let mut config = RunConfig::new(&args.corpus, &args.out);
    config.conditions = parse_conditions(&args.conditions).map_err(CliError::Config)?;
    config.adversarial_seed = args.seed;
    config.caption_style = args.style;
    config.pairing_path = args.pairing;
    config.captions_path = args.captions;
    config.overrides_path = args.overrides;
    config.resume = args.resume;
    config.max_inflight = args.max_inflight;
    config.validate()?;

    let gateway = build_gateway(&args.provider, Some(&args.out.join("cache")))?;
    let outcome = run_batch(&config, &gateway, Arc::new(SystemClock)).await?;
    let report = run_report(&outcome.trials);
    let text = render_text(&report);
    write_file(&args.out.join(REPORT_JSON), report.to_json().as_bytes())?;
    write_file(&args.out.join(REPORT_TEXT), text.as_bytes())?;

    Ok(match format {
        Format::Json => json(&outcome.manifest),
        Format::Text => {
            let c = &outcome.manifest.counts;
            let mut out = format!(
                "run {}: {} planned, {} completed, {} reused, {} failed\n",
                outcome.manifest.run_id, c.planned, c.completed, c.reused, c.failed
            );
            let _ = writeln!(out, "trials: {}", args.out.join(TRIALS_FILE).display());
            if !outcome.failures.is_empty() {
                let _ = writeln!(out, "failures: {}", args.out.join(ERRORS_FILE).display());
            }
            out.push('\n');
            out += &text;
            out
        }
    })
}

fn report(trials: &Path, out: Option<&Path>, format: Format) -> Result<String, CliError> {
    let text = fs::read_to_string(trials).map_err(|e| CliError::Config(format!("{}: {e}", trials.display())))?;
    let records = parse_trials(&text).map_err(|e| CliError::Validation(format!("{}: {e}", trials.display())))?;
    let report = run_report(&records);
    let rendered = render_text(&report);
    if let Some(dir) = out {
        write_file(&dir.join(REPORT_JSON), report.to_json().as_bytes())?;
        write_file(&dir.join(REPORT_TEXT), rendered.as_bytes())?;
    }
    Ok(match format {
        Format::Json => report.to_json(),
        Format::Text => rendered,
    })
}
