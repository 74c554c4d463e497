use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use scangraph::ast::parse_ast;
use scangraph::dataset::{
    detect_subtype, generate_synthetic_corpus, write_corpus, Corpus, CorpusItem, DatasetRecord, SplitName,
    DEFAULT_RATIOS,
};
use scangraph::eval::EvalReport;
use scangraph::features::FeatureSchema;
use scangraph::gcn::{Checkpoint, ModelParams};
use scangraph::labels::LineLabels;
use scangraph::scan::{check_checkpoint, scan, ScanInput};
use scangraph::train::{predict_outcomes, train, Hyperparameters};

#[derive(Parser)]
#[command(name = "scangraph", version, about = "Line-level reentrancy detection on Solidity code graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan contracts and report vulnerable lines. Exits 0 when clean, 2 when
    /// anything is flagged, 1 on error.
    Scan(ScanArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a corpus.
    Eval(EvalArgs),
    /// Build a corpus directory from AST bundles or synthetic contracts.
    BuildDataset(BuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Quick,
    Paper,
}

#[derive(Args)]
struct ScanArgs {
    /// AST bundle files, or directories of `*.ast.json`.
    #[arg(long, num_args = 1.., required_unless_present = "sol", conflicts_with = "sol")]
    ast: Vec<PathBuf>,
    /// Solidity sources, or directories of `*.sol`; compiled with $GSCAN_SOLC (default `solc`).
    #[arg(long, num_args = 1..)]
    sol: Vec<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Metric log (JSON lines); defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quick")]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Loss weights `CLEAN,VULNERABLE`.
    #[arg(long, value_parser = parse_pair)]
    class_weights: Option<[f64; 2]>,
    /// Keep the parameters of the last epoch instead of the best validation epoch.
    #[arg(long)]
    keep_last: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: SplitName,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct BuildArgs {
    /// Generate `CLEAN,VULNERABLE` synthetic contracts.
    #[arg(long, value_parser = parse_counts, required_unless_present = "ast_dir", conflicts_with = "ast_dir")]
    synthetic: Option<(usize, usize)>,
    /// Directory of `*.ast.json` bundles with optional `<name>.lines` annotations beside them.
    #[arg(long)]
    ast_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 3]>,
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect()
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_list(s)?.try_into().map_err(|_| "expected two comma-separated numbers".into())
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    parse_list(s)?.try_into().map_err(|_| "expected three comma-separated numbers".into())
}

fn parse_counts(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected CLEAN,VULNERABLE")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((n(a)?, n(b)?))
}

/// Expands directories into their files ending in `suffix`, sorted.
fn expand(paths: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(suffix))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_scan(args: ScanArgs) -> Result<u8> {
    let checkpoint = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    check_checkpoint(&checkpoint)?;
    let inputs: Vec<ScanInput> = if args.sol.is_empty() {
        expand(&args.ast, ".ast.json")?.into_iter().map(ScanInput::Ast).collect()
    } else {
        expand(&args.sol, ".sol")?.into_iter().map(ScanInput::sol).collect()
    };
    let mut code = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for input in &inputs {
        match scan(input, &checkpoint) {
            Ok(report) => {
                match args.format {
                    Format::Text => writeln!(out, "{report}")?,
                    Format::Json => writeln!(out, "{}", report.to_json())?,
                }
                if report.vulnerable && code == 0 {
                    code = 2;
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", input.path().display());
                code = 1;
            }
        }
    }
    Ok(code)
}

fn hyperparameters(args: &TrainArgs) -> Hyperparameters {
    let mut h = match args.profile {
        Profile::Quick => Hyperparameters::quick(),
        Profile::Paper => Hyperparameters::paper(),
    };
    h.seed = args.seed;
    h.epochs = args.epochs.unwrap_or(h.epochs);
    h.batch_size = args.batch_size.unwrap_or(h.batch_size);
    h.learning_rate = args.lr.unwrap_or(h.learning_rate);
    h.class_weights = args.class_weights.or(h.class_weights);
    h
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let corpus = Corpus::open(&args.corpus)?;
    let hyper = hyperparameters(&args);
    hyper.validate()?;
    let train_set = corpus.load_split(SplitName::Train)?;
    let validation = corpus.load_split(SplitName::Validation)?;
    ensure!(!train_set.is_empty(), "the train split of {} is empty", args.corpus.display());

    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log.jsonl");
        p.into()
    });
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut io_error = None;
    let initial = ModelParams::init(&hyper.architecture, &mut ChaCha8Rng::seed_from_u64(hyper.seed));
    let outcome = train(&train_set, &validation, &hyper, initial, |epoch| {
        for m in epoch {
            if let Err(e) = writeln!(log, "{}", m.to_json_line()) {
                io_error.get_or_insert(e);
            }
            if !args.quiet {
                eprintln!("epoch {:>4} {:<10} loss {:.4} f1 {:.4}", m.epoch, m.split, m.loss, m.f1);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e).context("writing the metric log");
    }
    log.flush()?;

    let (params, epoch) = if args.keep_last {
        (outcome.final_params, hyper.epochs)
    } else {
        (outcome.best_params, outcome.best_epoch)
    };
    let metadata = json!({
        "hyperparameters": hyper,
        "epoch": epoch,
        "best_epoch": outcome.best_epoch,
        "best_f1": outcome.best_f1,
        "corpus_seed": corpus.manifest.seed,
        "train_graphs": train_set.len(),
    });
    Checkpoint::new(params, corpus_schema(&corpus)?, metadata).save(&args.out)?;
    eprintln!("saved {} (epoch {epoch}, best validation f1 {:.4})", args.out.display(), outcome.best_f1);
    Ok(0)
}

fn corpus_schema(corpus: &Corpus) -> Result<FeatureSchema> {
    let schema = FeatureSchema::v1();
    ensure!(
        corpus.manifest.schema_version == schema.version(),
        "corpus was built with feature schema v{}, this build uses v{}",
        corpus.manifest.schema_version,
        schema.version()
    );
    Ok(schema)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let corpus = Corpus::open(&args.corpus)?;
    corpus_schema(&corpus)?;
    let checkpoint = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    check_checkpoint(&checkpoint)?;
    let records = corpus.load_split(args.split)?;
    let outcomes = predict_outcomes(&records, &checkpoint.params, 100)?;
    let report = EvalReport::build(args.split.as_str(), &outcomes)?;
    match args.format {
        Format::Text => print!("{report}"),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(0)
}

fn ast_dir_items(dir: &Path, schema: &FeatureSchema) -> Result<Vec<CorpusItem>> {
    let mut items = Vec::new();
    for path in expand(&[dir.to_path_buf()], ".ast.json")? {
        let name = path.file_name().unwrap().to_string_lossy();
        let id = name.trim_end_matches(".ast.json").to_string();
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let doc = parse_ast(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))?;
        let Some(subtype) = detect_subtype(&doc)? else {
            eprintln!("skipping {id}: no call, send or transfer");
            continue;
        };
        let labels_path = dir.join(format!("{id}.lines"));
        let labels = match std::fs::read_to_string(&labels_path) {
            Ok(t) => t.parse::<LineLabels>().with_context(|| format!("parsing {}", labels_path.display()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => LineLabels::clean(doc.line_index().line_count()),
            Err(e) => return Err(e).with_context(|| format!("reading {}", labels_path.display())),
        };
        let record = DatasetRecord::build(&id, subtype, &doc, &labels, schema).with_context(|| format!("building {id}"))?;
        let source = String::from_utf8_lossy(doc.source()).into_owned();
        items.push(CorpusItem { record, ast_bundle: Some(text), source: Some(source) });
    }
    Ok(items)
}

fn cmd_build(args: BuildArgs) -> Result<u8> {
    let schema = FeatureSchema::v1();
    let items = match (&args.synthetic, &args.ast_dir) {
        (Some((clean, vulnerable)), None) => generate_synthetic_corpus(*clean, *vulnerable, args.seed)?
            .into_iter()
            .map(|c| {
                let record = c.record(&schema)?;
                Ok(CorpusItem { record, ast_bundle: Some(c.bundle()), source: Some(c.source) })
            })
            .collect::<Result<Vec<_>>>()?,
        (None, Some(dir)) => ast_dir_items(dir, &schema)?,
        _ => bail!("give exactly one of --synthetic and --ast-dir"),
    };
    let manifest = write_corpus(&args.out, items, args.ratios.unwrap_or(DEFAULT_RATIOS), args.seed, &schema)?;
    let split = manifest.split_manifest();
    eprintln!(
        "{}: {} records ({} duplicates removed), train {} validation {} test {}",
        args.out.display(),
        manifest.records.len(),
        manifest.duplicates_removed,
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Scan(a) => cmd_scan(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BuildDataset(a) => cmd_build(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
