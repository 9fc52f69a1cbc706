use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use factguard_core::calibration::{
    accuracy_at, apply_temperature, expected_calibration_error, fit_temperature, learn_weights, ValidationSample,
    DEFAULT_BINS, DEFAULT_GRID_STEP,
};
use factguard_core::eval::{self, synth};
use factguard_core::pipeline::{run_batch, Config};
use factguard_core::sources::mock::{load_fixture, MockBehavior, MockServer};
use factguard_service::AppState;

#[derive(Parser)]
#[command(name = "verify", version, about = "Verify factual claims in generated text against knowledge sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `service.bind` from the config file.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Verify a JSON-lines file of requests.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Learn confidence weights and a temperature from labelled samples.
    Calibrate {
        /// JSON lines of {intrinsic, external, coherence, correct}.
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        grid_step: f64,
        #[arg(long, default_value_t = 0.7)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Write the reliability diagram here as CSV.
        #[arg(long)]
        reliability: Option<PathBuf>,
    },
    /// Evaluate a labelled corpus once per source subset.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Subsets separated by `|`, sources within a subset by `+`;
        /// `all` names every configured source. Defaults to every subset.
        #[arg(long)]
        subsets: Option<String>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a labelled corpus with the configured sources.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// JSON report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        reliability: Option<PathBuf>,
        /// Also write per-claim calibration samples for `calibrate`.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Write a synthetic corpus and matching source fixtures.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        examples: Option<usize>,
    },
    /// Serve a search fixture over HTTP for the `http` backend.
    MockWeb {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8081")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
    },
}

fn load_config(path: &Path) -> Result<Config> {
    Config::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_subsets(spec: &str, config: &Config) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for part in spec.split('|').map(str::trim) {
        if part.is_empty() {
            bail!("empty subset in {spec:?}");
        }
        let subset: Vec<String> = if part == "all" {
            config.sources.iter().map(|s| s.id.clone()).collect()
        } else {
            part.split('+').map(|s| s.trim().to_string()).collect()
        };
        out.push(subset);
    }
    Ok(out)
}

fn read_samples(path: &Path) -> Result<Vec<ValidationSample>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve { config, bind } => {
            let cfg = load_config(&config)?;
            let addr = bind.unwrap_or_else(|| cfg.service.bind.clone());
            let state = AppState::new(cfg, Some(config)).await?;
            factguard_service::serve(state, &addr, shutdown_signal()).await?;
        }
        Command::Run { config, input, output } => {
            let pipeline = load_config(&config)?.build().await?;
            let summary = run_batch(&pipeline, &input, &output).await?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Calibrate { val, grid_step, tau, bins, reliability } => {
            let samples = read_samples(&val)?;
            let weights = learn_weights(&samples, grid_step, tau)?;
            let combined: Vec<(f64, bool)> = samples
                .iter()
                .map(|s| (weights.alpha * s.intrinsic + weights.beta * s.external + weights.gamma * s.coherence, s.correct))
                .collect();
            let temperature = fit_temperature(&combined);
            let scaled: Vec<(f64, bool)> =
                combined.iter().map(|&(p, y)| (apply_temperature(p, temperature), y)).collect();
            let mut report = expected_calibration_error(&combined, bins)?;
            report.learned_weights = Some(weights);
            let scaled_ece = expected_calibration_error(&scaled, bins)?.ece;
            if let Some(path) = reliability {
                write_or_print(Some(&path), &report.reliability_csv())?;
            }
            let out = serde_json::json!({
                "samples": samples.len(),
                "weights": weights,
                "accuracy": accuracy_at(&samples, &weights, tau),
                "ece": report.ece,
                "temperature": temperature,
                "ece_after_temperature": scaled_ece,
                "reliability": report.reliability,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Ablate { config, corpus, subsets, output } => {
            let cfg = load_config(&config)?;
            let examples = eval::load_corpus(&corpus)?;
            let subsets = match subsets {
                Some(spec) => parse_subsets(&spec, &cfg)?,
                None => eval::all_subsets(&cfg.enabled_source_ids()),
            };
            let rows = eval::ablate(&examples, &cfg, &subsets).await?;
            write_or_print(output.as_deref(), &eval::ablation_csv(&rows))?;
        }
        Command::Eval { config, corpus, report, reliability, validation } => {
            let cfg = load_config(&config)?;
            let examples = eval::load_corpus(&corpus)?;
            let pipeline = cfg.build().await?;
            let result = eval::evaluate_with(&examples, &pipeline).await?;
            if let (Some(path), Some(cal)) = (reliability, &result.calibration) {
                write_or_print(Some(&path), &cal.reliability_csv())?;
            }
            if let Some(path) = validation {
                let samples = eval::validation_samples(&examples, &pipeline).await?;
                let mut text = String::new();
                for s in samples {
                    text.push_str(&serde_json::to_string(&s)?);
                    text.push('\n');
                }
                write_or_print(Some(&path), &text)?;
            }
            write_or_print(report.as_deref(), &(serde_json::to_string_pretty(&result)? + "\n"))?;
        }
        Command::GenCorpus { out, seed, examples } => {
            let mut cfg = synth::SynthConfig { seed, ..Default::default() };
            if let Some(n) = examples {
                cfg.examples = n;
            }
            let corpus = synth::generate(&cfg);
            corpus.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} examples to {}", corpus.examples.len(), out.display());
        }
        Command::MockWeb { fixture, bind, delay_ms } => {
            let hits = load_fixture(&fixture).map_err(anyhow::Error::msg)?;
            let behavior = MockBehavior { delay: Duration::from_millis(delay_ms), ..Default::default() };
            let server = MockServer::spawn(hits, behavior, bind).await.context("starting mock server")?;
            eprintln!("serving {} at {}", fixture.display(), server.url());
            shutdown_signal().await;
            server.shutdown().await;
        }
    }
    Ok(())
}
