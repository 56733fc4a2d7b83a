//! `docrag`: index a document corpus, answer questions and evaluate.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when a
//! model backend fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use docrag::config::PipelineConfig;
use docrag::corpus::{load_qa, write_qa, Corpus, QaSample};
use docrag::encode::write_pairs;
use docrag::pipeline::{run_eval_with_traces, run_mine, Backends, Engine, EvalMode, IndexMode, PipelineError};
use docrag::synth::{planted_corpus, SynthParams};

#[derive(Parser)]
#[command(
    name = "docrag",
    version,
    about = "Evidence retrieval and evaluation for multi-page document VQA"
)]
struct Cli {
    /// TOML configuration; unset fields keep their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexKind {
    Text,
    Visual,
    Both,
}

impl From<IndexKind> for IndexMode {
    fn from(k: IndexKind) -> Self {
        match k {
            IndexKind::Text => IndexMode::Text,
            IndexKind::Visual => IndexMode::Visual,
            IndexKind::Both => IndexMode::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    RagText,
    RagVisual,
    Concat,
    Maxconf,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::RagText => EvalMode::RagText,
            Mode::RagVisual => EvalMode::RagVisual,
            Mode::Concat => EvalMode::Concat,
            Mode::Maxconf => EvalMode::MaxConf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed and write index files
    Index {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for the index files
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: IndexKind,
    },
    /// Answer one question about one document
    Query {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory written by `index`; built in memory when omitted
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        question: String,
        #[arg(long, value_enum, default_value = "rag-text")]
        mode: Mode,
        /// QA file giving the oracle generator its answer key
        #[arg(long)]
        qa: Option<PathBuf>,
    },
    /// Evaluate a QA file; writes report.json, summary.csv and traces.jsonl
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rag-text")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine anchor-positive pairs for encoder fine-tuning
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        /// JSON-lines output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Time indexing and evaluation on a synthetic planted-answer corpus
    Bench {
        #[arg(long, default_value_t = 200)]
        docs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write the synthetic corpus, QA and region files here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg.with_env_overrides())
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Engine over `corpus` with indexes loaded from `index` or built for `mode`.
fn engine(
    config: &PipelineConfig,
    corpus: &Path,
    qa: &[QaSample],
    index: Option<&Path>,
    mode: IndexMode,
) -> Result<Engine, PipelineError> {
    let corpus = Corpus::load_dir(corpus)?;
    let backends = Backends::from_config(config, qa)?;
    let mut engine = Engine::new(config.clone(), corpus, backends);
    match index {
        Some(dir) => {
            engine.load(dir)?;
        }
        None => {
            engine.build(mode)?;
        }
    }
    Ok(engine)
}

fn needed_index(mode: EvalMode) -> IndexMode {
    match mode {
        EvalMode::RagVisual => IndexMode::Visual,
        _ => IndexMode::Text,
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Index { corpus, out, mode } => {
            let backends = Backends::from_config(&config, &[])?;
            let summary = docrag::pipeline::run_index(&corpus, &out, &config, backends, mode.into())?;
            println!(
                "indexed {} documents: {} chunks, {} patches -> {}",
                summary.documents,
                summary.chunks.map_or("-".into(), |n| n.to_string()),
                summary.patches.map_or("-".into(), |n| n.to_string()),
                out.display()
            );
        }
        Command::Query {
            corpus,
            index,
            doc,
            question,
            mode,
            qa,
        } => {
            let qa = match qa {
                Some(p) => load_qa(&p)?,
                None => Vec::new(),
            };
            let mode = EvalMode::from(mode);
            let engine = engine(&config, &corpus, &qa, index.as_deref(), needed_index(mode))?;
            match engine.answer(mode, &question, &doc) {
                Ok(a) => println!("{}", json(&a)),
                Err(e) => {
                    if let Some(t) = &e.trace {
                        eprintln!("{}", json(t));
                    }
                    return Err(e.error);
                }
            }
        }
        Command::Eval {
            corpus,
            qa,
            index,
            mode,
            out,
        } => {
            let samples = load_qa(&qa)?;
            let mode = EvalMode::from(mode);
            let engine = engine(&config, &corpus, &samples, index.as_deref(), needed_index(mode))?;
            let (report, traces) = run_eval_with_traces(&engine, &samples, mode);
            fs::create_dir_all(&out).map_err(|source| PipelineError::Io {
                path: out.clone(),
                source,
            })?;
            write(&out.join("report.json"), &json(&report))?;
            write(&out.join("summary.csv"), &report.summary_csv())?;
            let lines: String = traces
                .iter()
                .map(|t| serde_json::to_string(t).expect("serializable") + "\n")
                .collect();
            write(&out.join("traces.jsonl"), &lines)?;
            print!("{}", report.summary_csv());
        }
        Command::Mine { corpus, qa, index, out } => {
            let samples = load_qa(&qa)?;
            let engine = engine(&config, &corpus, &samples, index.as_deref(), IndexMode::Text)?;
            let pairs = run_mine(&engine, &samples);
            write_pairs(&pairs, &out).map_err(|source| PipelineError::Io {
                path: out.clone(),
                source,
            })?;
            println!(
                "mined {} pairs from {} samples -> {}",
                pairs.len(),
                samples.len(),
                out.display()
            );
        }
        Command::Bench { docs, seed, out } => bench(&config, docs, seed, out.as_deref())?,
    }
    Ok(())
}

fn bench(config: &PipelineConfig, docs: usize, seed: u64, out: Option<&Path>) -> Result<(), PipelineError> {
    let params = SynthParams {
        n_docs: docs,
        seed,
        ..SynthParams::default()
    };
    let t = Instant::now();
    let synth = planted_corpus(&params, &config.chunking);
    let generate_s = t.elapsed().as_secs_f64();
    if let Some(dir) = out {
        let corpus_dir = dir.join("corpus");
        fs::create_dir_all(&corpus_dir).map_err(|source| PipelineError::Io {
            path: corpus_dir.clone(),
            source,
        })?;
        for d in &synth.documents {
            d.save(&corpus_dir.join(format!("{}.json", d.doc_id)))?;
        }
        write_qa(&synth.samples, &dir.join("qa.jsonl"))?;
        let regions: String = synth
            .regions
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect();
        write(&dir.join("regions.jsonl"), &regions)?;
    }

    let backends = Backends::from_config(config, &synth.samples)?;
    let mut engine = Engine::new(config.clone(), Corpus::from_documents(synth.documents), backends);
    let t = Instant::now();
    let summary = engine.build(IndexMode::Text)?;
    let index_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (report, _) = run_eval_with_traces(&engine, &synth.samples, EvalMode::RagText);
    let eval_s = t.elapsed().as_secs_f64();
    let result = serde_json::json!({
        "documents": summary.documents,
        "chunks": summary.chunks,
        "samples": report.n_samples,
        "accuracy": report.accuracy,
        "anls": report.anls,
        "retrieval_precision_at_k": report.retrieval_precision_at_k,
        "chunk_score_at_k": report.chunk_score_at_k,
        "seconds": { "generate": generate_s, "index": index_s, "eval": eval_s },
    });
    println!("{}", json(&result));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
