use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use gesturekit::dataset::{read_dataset, write_dataset};
use gesturekit::stream::{bench, class_name, serve_stdio, WsServer};
use gesturekit::synth::generate_dataset;
use gesturekit::train::{evaluate, init_seed, split, train, TrainConfig};
use gesturekit::weights::{load_weights, save_weights};
use gesturekit::{Error, GenConfig, ModelConfig, RecognizerModel, Result};

#[derive(Parser)]
#[command(name = "gesturekit", version, about = "Skeleton-based hand gesture recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus as JSONL.
    Gen {
        #[arg(long, default_value_t = 125)]
        per_class: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a recognizer and write its weights.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON file with TrainConfig fields; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_model: PathBuf,
        /// Per-epoch metrics as JSON Lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Evaluate a model on a dataset and print the metrics as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the metrics as JSON Lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Print one JSON prediction per input sequence.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the streaming recognition service.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        #[arg(long, value_enum, default_value_t = Transport::Websocket)]
        transport: Transport,
    },
    /// Replay a dataset through a streaming session and report latency.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Websocket,
    Stdio,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GESTUREKIT_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { per_class, frames, noise, seed, out } => {
            let config = GenConfig {
                frames_per_sequence: frames,
                noise_std: noise,
                seed,
                ..GenConfig::default()
            };
            let data = generate_dataset(per_class, &config)?;
            write_dataset(&out, &data)?;
            info!("wrote {} sequences to {}", data.len(), out.display());
        }
        Command::Train { data, config, val_fraction, seed, out_model, metrics } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_json(&fs::read_to_string(&p).map_err(|e| Error::io(p, e))?)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dataset = read_dataset(&data)?;
            let (train_set, val_set) = split(&dataset, val_fraction, cfg.seed)?;
            info!("training on {} sequences, validating on {}", train_set.len(), val_set.len());
            let initial = RecognizerModel::new(ModelConfig::default(), init_seed(cfg.seed))?;
            let (model, m) = train(&initial, &train_set, &val_set, &cfg)?;
            save_weights(&model, &out_model)?;
            if let Some(p) = metrics {
                m.write_jsonl(p)?;
            }
            if let Some(e) = &m.evaluation {
                eprintln!("validation accuracy {:.4}", e.accuracy);
            }
        }
        Command::Eval { model, data, metrics } => {
            let model = load_weights(model)?;
            let m = evaluate(&model, &read_dataset(data)?)?;
            if let Some(p) = metrics {
                m.write_jsonl(p)?;
            }
            print_json(m.evaluation.as_ref().expect("evaluate always fills the evaluation"))?;
        }
        Command::Predict { model, input } => {
            let model = load_weights(model)?;
            let mut out = BufWriter::new(io::stdout().lock());
            for seq in read_dataset(input)? {
                let p = model.predict(&seq)?;
                let line = serde_json::json!({
                    "label": class_name(p.class_id),
                    "class_id": p.class_id,
                    "confidence": p.confidence,
                    "probs": p.probs,
                });
                writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
            }
            out.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Serve { model, addr, transport } => {
            let model = Arc::new(load_weights(model)?);
            match transport {
                Transport::Stdio => serve_stdio(model, io::stdin().lock(), io::stdout().lock())?,
                Transport::Websocket => {
                    let server = WsServer::bind(model, addr.as_str())?;
                    eprintln!("listening on ws://{}", server.local_addr()?);
                    server.run()?;
                }
            }
        }
        Command::Bench { model, data, reps } => {
            let model = Arc::new(load_weights(model)?);
            print_json(&bench(model, &read_dataset(data)?, reps)?)?;
        }
    }
    Ok(())
}
