use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnelicit::elicitation::SelectionMode;
use bnelicit::loglinear::CountConvention;
use bnelicit::model_file::{self, AnswersFile, WhatIfFile};
use bnelicit::{Evidence, ModelFile, SynthesisMode};
use bnelicit_service::commands::{self, Report};
use bnelicit_service::{http, Result, ServiceError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bnelicit", version, about = "Build Bayesian networks from elicited probabilities")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the graph and the representability of the reduced model.
    Validate { model: PathBuf },
    /// List the questions still to be answered.
    Questions {
        model: PathBuf,
        /// Only questions this expert has not answered.
        #[arg(long)]
        expert: Option<String>,
    },
    /// Add an answers file to the model.
    Ingest { model: PathBuf, answers: PathBuf },
    /// Report marginal/conditional consistency per pair.
    Check {
        model: PathBuf,
        /// Largest acceptable residual; defaults to the model's setting.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Apply the reconciliation cascade, or review it with --interactive.
    Reconcile {
        model: PathBuf,
        /// Which conditional to edit: strict or heaviest.
        #[arg(long)]
        mode: Option<SelectionMode>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Accept or reject each proposal in turn.
        #[arg(long)]
        interactive: bool,
    },
    /// Classical versus reduced parameter counts.
    Counts {
        model: PathBuf,
        /// one-per-edge or complement-pruned.
        #[arg(long)]
        convention: Option<CountConvention>,
    },
    /// Build every conditional probability table.
    Synthesize {
        model: PathBuf,
        /// normalized or raw.
        #[arg(long)]
        mode: Option<SynthesisMode>,
    },
    /// Posterior of one variable.
    Infer {
        model: PathBuf,
        #[arg(long)]
        query: String,
        /// Observations as Var=state,Var=state.
        #[arg(long, default_value = "")]
        evidence: String,
    },
    /// Rank inputs by their effect on a target state.
    Sensitivity {
        model: PathBuf,
        #[arg(long)]
        target: String,
        /// Defaults to the target's first state.
        #[arg(long)]
        state: Option<String>,
        /// Comma-separated inputs; defaults to the roots.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
        #[arg(long, default_value = "")]
        evidence: String,
    },
    /// Compare maintenance strategies against the base network.
    Whatif { model: PathBuf, actions: PathBuf },
    /// Serve the model over HTTP.
    Serve {
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
    /// Write a bundled example model (single_parent, two_parent, diamond, application).
    Example { name: String, output: PathBuf },
}

fn load(path: &Path) -> Result<ModelFile> {
    Ok(ModelFile::load(path)?)
}

fn save(model: &ModelFile, path: &Path) -> Result<()> {
    Ok(model.save(path)?)
}

fn evidence(text: &str) -> Result<Evidence> {
    if text.trim().is_empty() {
        return Ok(Evidence::new());
    }
    Ok(Evidence::parse(text)?)
}

fn run(command: Command, json: bool) -> Result<Report> {
    match command {
        Command::Validate { model } => commands::validate(&load(&model)?),
        Command::Questions { model, expert } => commands::questions(&load(&model)?, expert.as_deref()),
        Command::Ingest { model, answers } => {
            let mut m = load(&model)?;
            let doc = AnswersFile::parse(&model_file::read(&answers)?)?;
            let r = commands::ingest(&mut m, doc)?;
            save(&m, &model)?;
            Ok(r)
        }
        Command::Check { model, tolerance } => commands::check(&load(&model)?, tolerance),
        Command::Reconcile {
            model,
            mode,
            tolerance,
            interactive,
        } => {
            let mut m = load(&model)?;
            let config = commands::reconcile_config(&m, mode, tolerance);
            let r = if interactive {
                let mut input = BufReader::new(io::stdin());
                // prompts go to stderr so --json output stays parseable
                if json {
                    commands::reconcile_interactive(&mut m, &config, &mut input, &mut io::stderr())?
                } else {
                    commands::reconcile_interactive(&mut m, &config, &mut input, &mut io::stdout())?
                }
            } else {
                commands::reconcile(&mut m, &config)?
            };
            save(&m, &model)?;
            Ok(r)
        }
        Command::Counts { model, convention } => commands::counts(&load(&model)?, convention),
        Command::Synthesize { model, mode } => {
            let mut m = load(&model)?;
            let r = commands::synthesize(&mut m, mode)?;
            save(&m, &model)?;
            Ok(r)
        }
        Command::Infer {
            model,
            query,
            evidence: ev,
        } => commands::infer(&load(&model)?, &query, &evidence(&ev)?),
        Command::Sensitivity {
            model,
            target,
            state,
            inputs,
            evidence: ev,
        } => commands::sensitivity(&load(&model)?, &target, state.as_deref(), inputs, &evidence(&ev)?),
        Command::Whatif { model, actions } => {
            let doc = WhatIfFile::parse(&model_file::read(&actions)?)?;
            commands::whatif(&load(&model)?, &doc)
        }
        Command::Serve { model, listen } => {
            serve(load(&model)?, &listen)?;
            Ok(Report {
                text: String::new(),
                json: serde_json::Value::Null,
                clean: true,
            })
        }
        Command::Example { name, output } => {
            let m = commands::example(&name)?;
            save(&m, &output)?;
            Ok(Report {
                text: format!("wrote {}\n", output.display()),
                json: serde_json::json!({ "written": output.display().to_string() }),
                clean: true,
            })
        }
    }
}

fn serve(model: ModelFile, listen: &str) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env().add_directive("bnelicit_service=info".parse().unwrap()))
        .with_writer(io::stderr)
        .init();
    let state = http::AppState::new(Some(model))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, http::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli.command, json) {
        Ok(r) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&r.json).expect("reports serialize"));
            } else {
                print!("{}", r.text);
            }
            ExitCode::from(if r.clean { 0 } else { 1 })
        }
        Err(e) => {
            if json {
                eprintln!("{}", serde_json::json!({ "error": e.diagnostic() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(if matches!(e, ServiceError::Usage(_)) { 2 } else { 1 })
        }
    }
}
