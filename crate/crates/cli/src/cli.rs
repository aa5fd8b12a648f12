//! Command-line front.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ncc_core::corpus::{SpaceTokenizer, Tokenizer};
use ncc_core::registry::{self, RegistryKind};
use ncc_core::synparse::{build_sketch, lex, linearize};
use ncc_core::tasks::{
    evaluate, preprocess, train_from_config, CompleteResponse, Predictor, SearchResponse, SummarizeResponse,
};
use ncc_core::trainer::TrainConfig;

use crate::api::{self, Catalog, Endpoint, PredictRequest};

pub const EXIT_LOAD_FAILURE: u8 = 2;
pub const EXIT_BAD_INPUT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ncc", version, about = "Neural code intelligence toolkit")]
pub struct Cli {
    /// Print the registered models (`kind name description`) and exit.
    #[arg(long)]
    pub list_models: bool,
    /// Print the registered tasks and exit.
    #[arg(long)]
    pub list_tasks: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize the raw corpus and write vocabularies and binary shards.
    Preprocess {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Train a model and write its model directory.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Continue from the checkpoint in the save directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a trained model and print a JSON report.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run one prediction against a model directory.
    Predict {
        #[arg(short, long)]
        model: PathBuf,
        /// complete | summarize | search (or the task name).
        #[arg(short, long)]
        task: String,
        #[arg(short, long)]
        input: String,
        #[arg(short, default_value_t = api::DEFAULT_K)]
        k: usize,
        /// Print the same single-line JSON body the HTTP service returns.
        #[arg(long)]
        json: bool,
    },
    /// Serve the models listed in a catalog over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static assets exposed under `/`.
        #[arg(long)]
        serve_ui: Option<PathBuf>,
    },
    /// Print the linearized block tree of a source file, one token per line.
    Linearize { file: PathBuf },
}

pub fn run(cli: Cli) -> ExitCode {
    let registry = registry::global();
    if cli.list_models || cli.list_tasks {
        if cli.list_tasks {
            print!("{}", registry.render(RegistryKind::Task));
        }
        if cli.list_models {
            print!("{}", registry.render(RegistryKind::Model));
        }
        if cli.command.is_none() {
            return ExitCode::SUCCESS;
        }
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see `ncc --help`");
        return ExitCode::from(1);
    };
    if let Command::Predict {
        model,
        task,
        input,
        k,
        json,
    } = command
    {
        return predict(&model, &task, &input, k, json);
    }
    match run_command(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run_command(command: Command) -> anyhow::Result<()> {
    let registry = registry::global();
    match command {
        Command::Preprocess { config } => {
            let cfg = TrainConfig::load(&config)?;
            let manifest = preprocess(&cfg, registry)?;
            println!("{}", serde_json::to_string(&manifest)?);
        }
        Command::Train { config, resume } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = train_from_config(&cfg, registry, resume)?;
            let r = &outcome.report;
            println!(
                "{}",
                serde_json::json!({
                    "model_dir": outcome.model_dir,
                    "num_updates": r.num_updates,
                    "epochs": r.final_state.epoch,
                    "epoch_losses": r.epoch_losses,
                    "valid_losses": r.valid_losses,
                    "stop_reason": format!("{:?}", r.stop_reason),
                    "wall_time_secs": r.wall_time_secs,
                })
            );
        }
        Command::Eval { config } => {
            let cfg = TrainConfig::load(&config)?;
            let report = evaluate(&cfg, registry)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Serve {
            port,
            models,
            host,
            serve_ui,
        } => {
            let catalog = Catalog::load(&models, registry)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(catalog, &host, port, serve_ui))?;
        }
        Command::Linearize { file } => {
            let source = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let tokens = lex(&source)?;
            let sketch = build_sketch(&tokens)?;
            let mut out = String::new();
            for t in linearize(&sketch) {
                out.push_str(&t);
                out.push('\n');
            }
            print!("{out}");
        }
        Command::Predict { .. } => unreachable!("handled by run"),
    }
    Ok(())
}

fn predict(model_dir: &std::path::Path, task: &str, input: &str, k: usize, json: bool) -> ExitCode {
    let Some(endpoint) = Endpoint::parse(task) else {
        eprintln!("error: unknown task `{task}` (expected complete, summarize or search)");
        return ExitCode::from(EXIT_BAD_INPUT);
    };
    let predictor = match Predictor::load(model_dir, registry::global()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot load model from {}: {e}", model_dir.display());
            return ExitCode::from(EXIT_LOAD_FAILURE);
        }
    };
    let req = request_for(endpoint, input, k);
    let resp = api::predict(&predictor, endpoint, &req);
    if resp.status != 200 {
        let msg = serde_json::from_str::<serde_json::Value>(&resp.body)
            .ok()
            .and_then(|v| v["error"].as_str().map(str::to_string))
            .unwrap_or(resp.body);
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_BAD_INPUT);
    }
    if json {
        println!("{}", resp.body);
        return ExitCode::SUCCESS;
    }
    print!("{}", plain_output(endpoint, &resp.body));
    ExitCode::SUCCESS
}

/// The request the HTTP service would receive for the same CLI input.
pub fn request_for(endpoint: Endpoint, input: &str, k: usize) -> PredictRequest {
    let mut req = PredictRequest {
        k: Some(k),
        ..PredictRequest::default()
    };
    match endpoint {
        Endpoint::Complete => req.tokens = SpaceTokenizer.tokenize(input).ok(),
        Endpoint::Summarize => req.code = Some(input.to_string()),
        Endpoint::Search => req.query = Some(input.to_string()),
    }
    req
}

fn plain_output(endpoint: Endpoint, body: &str) -> String {
    let mut out = String::new();
    match endpoint {
        Endpoint::Complete => {
            let r: CompleteResponse = serde_json::from_str(body).expect("own response");
            for c in r.candidates {
                out.push_str(&format!("{}\t{:.6}\n", c.token, c.prob));
            }
        }
        Endpoint::Summarize => {
            let r: SummarizeResponse = serde_json::from_str(body).expect("own response");
            out.push_str(&r.summary);
            out.push('\n');
        }
        Endpoint::Search => {
            let r: SearchResponse = serde_json::from_str(body).expect("own response");
            for h in r.results {
                out.push_str(&format!("{}\t{:.6}\n", h.id, h.score));
            }
        }
    }
    out
}
