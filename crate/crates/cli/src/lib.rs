//! `cfdrive`: command-line driver for the scene-to-QA pipeline, evaluation
//! and the review service.

pub mod config;
pub mod evaluate;
pub mod pipeline;

use anyhow::Context;
use cfdrive_core::promptqa::ConversationType;
use clap::{Parser, Subcommand};
use config::{BackendKind, PipelineConfig};
use pipeline::{Pipeline, ValidationFailed};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "cfdrive", version, about = "Counterfactual driving-scene pipeline", propagate_version = true)]
pub struct Cli {
    /// Pipeline config file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scenes processed in parallel [default: available cores].
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Scene directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub scenes: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Maneuver library read by later stages.
    #[arg(long, global = true, value_name = "FILE")]
    pub library: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate scene files; one line per file.
    Validate {
        /// Scene file or directory [default: paths.scenes].
        scenes: Option<PathBuf>,
    },
    /// Key-frame selection over embeddings and expert trajectories.
    Keyframes {
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
        /// Share of samples kept as semantic clusters.
        #[arg(long)]
        fraction: Option<f64>,
        /// Trajectory clusters.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cluster expert trajectories into a maneuver library.
    BuildLibrary {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Place library trajectories into each scene as candidates.
    Simulate {
        /// Candidates per scene.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        speed_align: bool,
    },
    /// Run the rule checklist on expert and candidate trajectories.
    Check,
    /// Close objects and attention tree for the expert trajectory.
    Attention,
    /// Render prompts.
    Prompts,
    /// Generate QA items.
    Generate {
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Conversation types, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_type)]
        types: Vec<ConversationType>,
    },
    /// Score predicted trajectories and answers.
    Evaluate {
        /// JSON with `trajectories` (scene id -> trajectory) and/or
        /// `answers` (QA item id -> text).
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        /// Report file [default: <out>/eval/report.json].
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Exit 0 even when an aggregate is NaN or 0/0.
        #[arg(long)]
        allow_undefined: bool,
    },
    /// Serve scenes, verdicts and QA to the review UI.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Built UI bundle served under `/`.
        #[arg(long, value_name = "DIR")]
        ui: Option<PathBuf>,
    },
    /// Write accepted and edited QA items with edits applied.
    ExportReview {
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

fn parse_type(s: &str) -> Result<ConversationType, String> {
    ConversationType::parse(s).ok_or_else(|| {
        let all: Vec<&str> = ConversationType::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown conversation type {s:?}; expected one of {}", all.join(", "))
    })
}

impl Cli {
    /// Config file plus flag overrides.
    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.scenes {
            cfg.paths.scenes = p.clone();
        }
        if let Some(p) = &self.out {
            cfg.paths.out = p.clone();
        }
        if let Some(p) = &self.library {
            cfg.paths.library = Some(p.clone());
        }
        match &self.command {
            Command::Validate { scenes: Some(p) } => cfg.paths.scenes = p.clone(),
            Command::Keyframes { embeddings, fraction, k } => {
                if let Some(e) = embeddings {
                    cfg.paths.embeddings = Some(e.clone());
                }
                if let Some(f) = fraction {
                    cfg.selection.semantic_fraction = *f;
                }
                if let Some(k) = k {
                    cfg.selection.dynamics_k = *k;
                }
            }
            Command::BuildLibrary { k: Some(k) } => cfg.selection.library_k = *k,
            Command::Simulate { limit, speed_align } => {
                if let Some(l) = limit {
                    cfg.candidates.limit = *l;
                }
                cfg.candidates.speed_align |= *speed_align;
            }
            Command::Generate { backend, types } => {
                if let Some(b) = backend {
                    cfg.backend.kind = *b;
                }
                if !types.is_empty() {
                    cfg.conversation_types = types.clone();
                }
            }
            Command::Serve { port, bind, ui } => {
                if let Some(b) = bind {
                    cfg.review.bind = *b;
                }
                if let Some(p) = port {
                    cfg.review.bind.set_port(*p);
                }
                if let Some(u) = ui {
                    cfg.review.ui_dir = Some(u.clone());
                }
            }
            Command::ExportReview { output: Some(o) } => cfg.review.export = Some(o.clone()),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn service_config(cfg: &PipelineConfig) -> cfdrive_review::ServiceConfig {
    cfdrive_review::ServiceConfig {
        scenes_dir: cfg.paths.scenes.clone(),
        out_dir: cfg.paths.out.clone(),
        log_path: cfg.review_log(),
        ui_dir: cfg.review.ui_dir.clone(),
        bind: cfg.review.bind,
        cors_origin: cfg.review.cors_origin.clone(),
    }
}

/// Exit status: 0 success, 1 validation failure, runtime error or
/// undefined aggregate. Usage errors exit 2 from the parser.
pub fn run(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            if e.downcast_ref::<ValidationFailed>().is_none() {
                eprintln!("error: {e:#}");
            } else {
                eprintln!("{e}");
            }
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = cli.pipeline_config()?;
    let pipe = Pipeline::new(cfg, cli.jobs())?;
    match &cli.command {
        Command::Validate { .. } => {
            let (reports, scenes) = pipe.check_files(&pipe.cfg.paths.scenes)?;
            let mut failed = 0;
            for r in &reports {
                match &r.result {
                    Ok(id) => println!("ok   {} {id}", r.path.display()),
                    Err(e) => {
                        failed += 1;
                        println!("FAIL {}: {e}", r.path.display());
                    }
                }
            }
            println!("{} files, {} scenes, {failed} failed", reports.len(), scenes.len());
            if failed > 0 {
                return Err(ValidationFailed {
                    failed,
                    total: reports.len(),
                }
                .into());
            }
        }
        Command::Keyframes { .. } => {
            let sel = pipe.keyframes()?;
            println!("{} key frames selected", sel.selected.len());
        }
        Command::BuildLibrary { .. } => {
            let lib = pipe.build_library()?;
            println!("{} library entries", lib.entries.len());
        }
        Command::Simulate { .. } => pipe.simulate()?,
        Command::Check => {
            let all = pipe.check()?;
            let unsafe_n: usize = all.iter().map(|v| v.candidates.iter().filter(|c| !c.verdict.safe).count()).sum();
            let total: usize = all.iter().map(|v| v.candidates.len()).sum();
            println!("{} scenes checked, {unsafe_n} of {total} candidates unsafe", all.len());
        }
        Command::Attention => {
            let all = pipe.attention()?;
            println!("{} scenes, {} close objects", all.len(), all.iter().map(|a| a.close.len()).sum::<usize>());
        }
        Command::Prompts => pipe.prompts()?,
        Command::Generate { .. } => {
            let items = pipe.generate()?;
            println!("{} QA items", items.len());
        }
        Command::Evaluate {
            pred,
            report,
            allow_undefined,
        } => {
            let preds = evaluate::read_predictions(pred)?;
            let r = evaluate::evaluate(&pipe, &preds)?;
            let path = report.clone().unwrap_or_else(|| pipe.cfg.paths.out.join("eval").join("report.json"));
            cfdrive_core::artifacts::write_json(&path, &r)?;
            print!("{}", r.text());
            if !r.undefined.is_empty() && !allow_undefined {
                eprintln!("undefined aggregates; pass --allow-undefined to accept");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve { .. } => {
            let sc = service_config(&pipe.cfg);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(cfdrive_review::serve(sc)).context("review service")?;
        }
        Command::ExportReview { .. } => {
            let state = cfdrive_review::AppState::open(&service_config(&pipe.cfg))?;
            let path = pipe.cfg.review_export();
            let s = cfdrive_review::export_reviewed(&state.data, &state.book(), &path)?;
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
