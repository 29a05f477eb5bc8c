//! `strsum`: prepare corpora, train the unsupervised summarizer, and run
//! generation, tree parsing, tree statistics and ROUGE evaluation.
//!
//! Exit codes: 0 success, 2 input/configuration error, 3 numeric failure.
//! `STRSUM_THREADS` caps the worker-thread count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use strsum_core::checkpoint::{self, CheckpointMeta};
use strsum_core::config::RunConfig;
use strsum_core::corpus::{
    self, Document, ReviewRecord, TruncationCaps, Vocab,
};
use strsum_core::discourse::{extract_tree, tree_stats, DiscourseTree};
use strsum_core::error::CoreError;
use strsum_core::evalkit;
use strsum_core::model::Model;
use strsum_core::numkit::AdagradState;
use strsum_core::pipeline::{document_marginals, summarize, SummaryOptions};
use strsum_core::trainer::{self, TrainPaths};

#[derive(Parser)]
#[command(name = "strsum", version, about = "Unsupervised review summarization with latent discourse trees")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct InferenceArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Checkpoint to load; defaults to best.ckpt (then latest.ckpt) in the
    /// configured output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Raw JSON Lines reviews; defaults to the configured eval path.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tokenize and encode the corpus; write the vocabulary and document shards.
    Prepare {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train (or resume) on the prepared corpus.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured epoch budget.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate one-sentence summaries as JSON Lines: {id, summary, parents, ranks}.
    Generate {
        #[command(flatten)]
        common: InferenceArgs,
        /// Decode from the plain structured-attention root row (no DiscourseRank).
        #[arg(long)]
        no_discourse_rank: bool,
        /// Override the configured beam size.
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Emit induced discourse trees in JSON Lines or Graphviz DOT.
    Parse {
        #[command(flatten)]
        common: InferenceArgs,
        /// Emit Graphviz DOT (one digraph per document) instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Corpus-level tree statistics: projective fraction and mean height.
    Stats {
        #[command(flatten)]
        common: InferenceArgs,
    },
    /// ROUGE evaluation against reference summaries; per-document CSV.
    Evaluate {
        #[command(flatten)]
        common: InferenceArgs,
        #[arg(long)]
        no_discourse_rank: bool,
        /// Score references against themselves (scorer self-check).
        #[arg(long)]
        oracle: bool,
        /// Per-document CSV path; defaults to rouge.csv in the output dir.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::SingularMatrix
        | CoreError::SingularLaplacian
        | CoreError::SingularSystem
        | CoreError::NonFiniteLoss { .. }
        | CoreError::AllZeroRootMass => 3,
        _ => 2,
    }
}

fn init_threads() -> Result<(), CoreError> {
    if let Ok(v) = std::env::var("STRSUM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CoreError::Config(format!("STRSUM_THREADS must be a number, got {v:?}")))?;
        if n == 0 {
            return Err(CoreError::Config("STRSUM_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CoreError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code_for(&e));
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match cli.cmd {
        Cmd::Prepare { config } => cmd_prepare(&RunConfig::load(&config.config)?),
        Cmd::Train { config, max_epochs, seed } => {
            let mut cfg = RunConfig::load(&config.config)?;
            if let Some(m) = max_epochs {
                cfg.training.max_epochs = m;
            }
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            cfg.validate()?;
            cmd_train(&cfg)
        }
        Cmd::Generate { common, no_discourse_rank, beam } => {
            let cfg = RunConfig::load(&common.config.config)?;
            let mut opts = cfg.summary;
            opts.use_discourse_rank = !no_discourse_rank;
            if let Some(b) = beam {
                opts.beam_size = b;
            }
            cmd_generate(&cfg, &common, &opts)
        }
        Cmd::Parse { common, dot } => {
            let cfg = RunConfig::load(&common.config.config)?;
            cmd_parse(&cfg, &common, dot)
        }
        Cmd::Stats { common } => {
            let cfg = RunConfig::load(&common.config.config)?;
            cmd_stats(&cfg, &common)
        }
        Cmd::Evaluate { common, no_discourse_rank, oracle, csv } => {
            let cfg = RunConfig::load(&common.config.config)?;
            let mut opts = cfg.summary;
            opts.use_discourse_rank = !no_discourse_rank;
            cmd_evaluate(&cfg, &common, &opts, oracle, csv)
        }
    }
}

// ---------------------------------------------------------------- prepare

fn read_records(path: &Path, cfg: &RunConfig) -> Result<Vec<ReviewRecord>, CoreError> {
    corpus::read_jsonl_path(path, &cfg.data.fields)
}

fn encode_split(
    records: &[ReviewRecord],
    vocab: &Vocab,
    caps: &TruncationCaps,
) -> Result<Vec<Document>, CoreError> {
    records
        .iter()
        .map(|r| corpus::encode_record(r, vocab, caps))
        .collect()
}

fn cmd_prepare(cfg: &RunConfig) -> Result<(), CoreError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let train_raw = read_records(&cfg.data.train_path, cfg)?;
    let train = corpus::filter_corpus(train_raw, cfg.prepare.min_train_sentences);

    // Vocabulary from training text only.
    let streams: Vec<Vec<String>> = train
        .iter()
        .flat_map(|r| corpus::split_sentences(&r.text).unwrap_or_default())
        .map(|s| corpus::tokenize(&s))
        .collect();
    let vocab = corpus::build_vocab(streams.iter().map(|v| v.as_slice()), cfg.prepare.vocab_cap);
    vocab.save(&cfg.vocab_path())?;

    let caps = cfg.prepare.caps;
    let train_docs = encode_split(&train, &vocab, &caps)?;
    corpus::write_documents(&cfg.docs_path("train"), &train_docs)?;

    let mut counts = vec![("train", train_docs.len())];
    for (split, path) in [("valid", &cfg.data.valid_path), ("eval", &cfg.data.eval_path)] {
        if let Some(path) = path {
            let raw = read_records(path, cfg)?;
            let kept = corpus::filter_corpus(raw, cfg.prepare.min_eval_sentences);
            let docs = encode_split(&kept, &vocab, &caps)?;
            corpus::write_documents(&cfg.docs_path(split), &docs)?;
            counts.push((split, docs.len()));
        }
    }

    println!("split   reviews");
    for (split, n) in &counts {
        println!("{split:<7} {n}");
    }
    println!("vocabulary size: {}", vocab.size());
    Ok(())
}

// ------------------------------------------------------------------ train

fn cmd_train(cfg: &RunConfig) -> Result<(), CoreError> {
    let vocab = Vocab::load(&cfg.vocab_path())?;
    let train_docs = corpus::read_documents(&cfg.docs_path("train"))?;
    let valid_docs = if cfg.docs_path("valid").exists() {
        corpus::read_documents(&cfg.docs_path("valid"))?
    } else {
        Vec::new()
    };

    let dims = cfg.model.dims(vocab.size());
    let paths = TrainPaths {
        latest: cfg.latest_checkpoint_path(),
        best: cfg.best_checkpoint_path(),
        metrics: cfg.metrics_path(),
    };
    let (mut model, mut state, mut meta) =
        trainer::init_or_resume(dims, &vocab, &cfg.training, &paths.latest)?;
    if meta.epoch == 0 {
        if let Some(vec_path) = &cfg.model.pretrained_vectors {
            let loaded = strsum_core::encoder::load_pretrained_path(
                vec_path,
                &vocab,
                &mut model.encoder.embed,
            )?;
            model.round_to_f32();
            println!("loaded {loaded} pre-trained vectors");
        }
    }
    cfg.save(&cfg.config_snapshot_path())?;

    let outcome = trainer::train(
        &mut model,
        &mut state,
        &mut meta,
        &cfg.training,
        &cfg.run,
        &train_docs,
        &valid_docs,
        &vocab,
        &cfg.summary,
        &paths,
    )?;
    println!(
        "trained {} epochs; final per-token loss {:.4} nats{}",
        outcome.epochs_completed,
        outcome.final_train_loss,
        if outcome.stopped_early { " (early stop)" } else { "" }
    );
    if outcome.best_val_rouge_l >= 0.0 {
        println!("best validation ROUGE-L F1: {:.4}", outcome.best_val_rouge_l);
    }
    Ok(())
}

// -------------------------------------------------------------- inference

struct Loaded {
    model: Model,
    vocab: Vocab,
    docs: Vec<Document>,
}

fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    let best = cfg.best_checkpoint_path();
    if best.exists() {
        best
    } else {
        cfg.latest_checkpoint_path()
    }
}

fn load_for_inference(cfg: &RunConfig, common: &InferenceArgs) -> Result<Loaded, CoreError> {
    let vocab = Vocab::load(&cfg.vocab_path())?;
    let ckpt_path = common.checkpoint.clone().unwrap_or_else(|| default_checkpoint(cfg));
    let (model, _state, meta): (Model, AdagradState, CheckpointMeta) =
        checkpoint::load(&ckpt_path)?;
    if meta.vocab_hash != vocab.hash() {
        return Err(CoreError::VocabMismatch);
    }
    let input = common
        .input
        .clone()
        .or_else(|| cfg.data.eval_path.clone())
        .ok_or_else(|| CoreError::Config("no --input given and no eval path configured".into()))?;
    let records = read_records(&input, cfg)?;
    let docs = encode_split(&records, &vocab, &cfg.prepare.caps)?;
    Ok(Loaded { model, vocab, docs })
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CoreError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct GeneratedLine<'a> {
    id: &'a str,
    summary: String,
    parents: &'a [usize],
    ranks: &'a [f64],
}

fn cmd_generate(
    cfg: &RunConfig,
    common: &InferenceArgs,
    opts: &SummaryOptions,
) -> Result<(), CoreError> {
    let loaded = load_for_inference(cfg, common)?;
    let mut out = open_output(&common.output)?;
    for doc in &loaded.docs {
        let s = summarize(&loaded.model, doc, opts)?;
        let line = GeneratedLine {
            id: &s.id,
            summary: loaded.vocab.decode(&s.summary_tokens).join(" "),
            parents: &s.tree.parents,
            ranks: &s.ranks,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn dot_for(id: &str, tree: &DiscourseTree) -> String {
    let mut s = String::new();
    s.push_str(&format!("digraph \"{}\" {{\n", id.replace('"', "'")));
    s.push_str("  0 [label=\"root\", shape=box];\n");
    for (child, &parent) in tree.parents.iter().enumerate() {
        s.push_str(&format!("  {} -> {};\n", parent, child + 1));
    }
    s.push_str("}\n");
    s
}

#[derive(Serialize)]
struct ParsedLine<'a> {
    id: &'a str,
    parents: &'a [usize],
    height: usize,
    projective: bool,
}

fn cmd_parse(cfg: &RunConfig, common: &InferenceArgs, dot: bool) -> Result<(), CoreError> {
    let loaded = load_for_inference(cfg, common)?;
    let mut out = open_output(&common.output)?;
    for doc in &loaded.docs {
        let a = document_marginals(&loaded.model, doc)?;
        let tree = extract_tree(&a, cfg.summary.tree_weighting);
        if dot {
            out.write_all(dot_for(&doc.id, &tree).as_bytes())?;
        } else {
            let line = ParsedLine {
                id: &doc.id,
                parents: &tree.parents,
                height: tree.height(),
                projective: strsum_core::discourse::is_projective(&tree),
            };
            serde_json::to_writer(&mut out, &line)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_stats(cfg: &RunConfig, common: &InferenceArgs) -> Result<(), CoreError> {
    let loaded = load_for_inference(cfg, common)?;
    let mut trees = Vec::with_capacity(loaded.docs.len());
    for doc in &loaded.docs {
        let a = document_marginals(&loaded.model, doc)?;
        trees.push(extract_tree(&a, cfg.summary.tree_weighting));
    }
    let stats = tree_stats(&trees);
    let mut out = open_output(&common.output)?;
    writeln!(out, "documents        {}", trees.len())?;
    writeln!(out, "projective       {:.1}%", stats.projective_fraction * 100.0)?;
    writeln!(out, "mean tree height {:.2}", stats.mean_height)?;
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    common: &InferenceArgs,
    opts: &SummaryOptions,
    oracle: bool,
    csv: Option<PathBuf>,
) -> Result<(), CoreError> {
    let loaded = load_for_inference(cfg, common)?;
    let report = if oracle {
        evalkit::oracle_report(&loaded.docs)?
    } else {
        evalkit::evaluate_corpus(&loaded.model, &loaded.vocab, &loaded.docs, opts)?
    };
    let csv_path = csv.unwrap_or_else(|| cfg.output_dir.join("rouge.csv"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    evalkit::write_csv(&mut f, &report)?;
    f.flush()?;
    let mut out = open_output(&common.output)?;
    writeln!(out, "documents scored {}", report.rows.len())?;
    writeln!(out, "mean ROUGE-1 F1  {:.4}", report.mean.r1_f1)?;
    writeln!(out, "mean ROUGE-2 F1  {:.4}", report.mean.r2_f1)?;
    writeln!(out, "mean ROUGE-L F1  {:.4}", report.mean.rl_f1)?;
    writeln!(out, "per-document CSV {}", csv_path.display())?;
    out.flush()?;
    Ok(())
}
