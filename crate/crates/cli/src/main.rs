//! Command-line front end for the GEC treebank pipeline.
//!
//! Subcommands mirror the library stages: `extract` aligns a parallel
//! corpus into edit spans, `project` builds the source-side treebank,
//! `convert` changes granularity, `verify` runs the numerical and
//! structural self-checks, and `score-ged` evaluates binary error
//! detection masks.
//!
//! Exit codes: 0 success, 1 contract or validation failure, 2 I/O failure
//! (clap itself also uses 2 for usage errors).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gectree::conllu::{parse_conllu, write_conllu};
use gectree::corpus::{self, parse_parallel};
use gectree::depgcn::GcnParams;
use gectree::edits::{format_spans, parse_spans, EditSpan};
use gectree::eval::{parse_masks, score_ged};
use gectree::granularity::{expand_to_subwords, to_char_tree, ArcMatrix, LabelVocab, Segmentation};
use gectree::project::ProjectedTree;
use gectree::sidecar::{attach_probs, parse_prob_sidecar, write_arc_matrices};
use gectree::verify::run_verify;

/// Subword-unit delimiter inside segmentation files.
const SEG_DELIMITER: &str = "@@";

#[derive(Parser)]
#[command(
    name = "gectree",
    version,
    about = "GEC treebank construction and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Word-level arc matrices (identity segmentation).
    Word,
    /// Subword-level arc matrices from a segmentation file.
    Subword,
    /// Character-level trees from a segmentation file.
    Char,
}

#[derive(Subcommand)]
enum Command {
    /// Align a parallel corpus and write one edit-span record per pair.
    Extract {
        /// Parallel corpus: source TAB target, tokens space-separated.
        #[arg(long)]
        parallel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project the target-side treebank onto the source sentences.
    Project {
        #[arg(long)]
        parallel: PathBuf,
        /// Target-side CoNLL-U treebank, sentence-aligned with the corpus.
        #[arg(long)]
        trees: PathBuf,
        /// Span records produced by `extract`.
        #[arg(long)]
        spans: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a projected treebank to another granularity.
    Convert {
        /// Projected CoNLL-U treebank.
        #[arg(long)]
        trees: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Segmentation file (required for subword and char modes).
        #[arg(long)]
        seg: Option<PathBuf>,
        /// Arc-probability sidecar for the trees.
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run oracle-equivalence, gradient, and projection fuzz suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stack parameter file to validate before the suites run.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Fusion factor for the freshly initialized stack.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Number of blocks for the freshly initialized stack.
        #[arg(long, default_value_t = 3)]
        n2: usize,
    },
    /// Score predicted against gold token-level error masks.
    ScoreGed {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
}

enum CliError {
    Io(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Data(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Data(m) => m,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Input paths must not collide with the output path.
fn ensure_distinct(inputs: &[Option<&Path>], out: &Path) -> Result<(), CliError> {
    for input in inputs.iter().flatten() {
        if *input == out {
            return Err(CliError::Io(format!(
                "--out {} would overwrite an input file",
                out.display()
            )));
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Extract { parallel, out } => {
            ensure_distinct(&[Some(&parallel)], &out)?;
            cmd_extract(&parallel, &out)
        }
        Command::Project {
            parallel,
            trees,
            spans,
            out,
        } => {
            ensure_distinct(&[Some(&parallel), Some(&trees), Some(&spans)], &out)?;
            cmd_project(&parallel, &trees, &spans, &out)
        }
        Command::Convert {
            trees,
            mode,
            seg,
            probs,
            out,
        } => {
            ensure_distinct(&[Some(&trees), seg.as_deref(), probs.as_deref()], &out)?;
            cmd_convert(&trees, mode, seg.as_deref(), probs.as_deref(), &out)
        }
        Command::Verify {
            seed,
            params,
            beta,
            n2,
        } => cmd_verify(seed, params.as_deref(), beta, n2),
        Command::ScoreGed { pred, gold } => cmd_score_ged(&pred, &gold),
    }
}

fn log_skips(report: &corpus::RunReport) {
    for (line, reason) in &report.skipped {
        eprintln!("skip line {}: {reason}", line + 1);
    }
    eprintln!("{}", report.summary());
}

fn cmd_extract(parallel: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let pairs = parse_parallel(&read(parallel)?);
    let (spans, report) = corpus::extract_corpus(&pairs);
    let mut text = String::new();
    for record in &spans {
        if let Some(spans) = record {
            text.push_str(&format_spans(spans))
        }
        text.push('\n');
    }
    write(out, &text)?;
    log_skips(&report);
    Ok(ExitCode::SUCCESS)
}

fn cmd_project(
    parallel: &Path,
    trees: &Path,
    spans: &Path,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let pairs = parse_parallel(&read(parallel)?);
    let treebank = parse_conllu(&read(trees)?).map_err(data_err)?;
    let span_text = read(spans)?;
    let span_records: Vec<Vec<EditSpan>> = span_text
        .lines()
        .enumerate()
        .map(|(i, line)| parse_spans(line, i + 1))
        .collect::<Result<_, _>>()
        .map_err(data_err)?;

    let (projected, report) =
        corpus::project_corpus(&pairs, &treebank, &span_records).map_err(data_err)?;
    let kept: Vec<_> = projected.into_iter().flatten().map(|p| p.tree).collect();
    let text = write_conllu(&kept).map_err(data_err)?;
    write(out, &text)?;
    log_skips(&report);
    Ok(ExitCode::SUCCESS)
}

fn load_projected(trees: &Path, probs: Option<&Path>) -> Result<Vec<ProjectedTree>, CliError> {
    let mut treebank = parse_conllu(&read(trees)?).map_err(data_err)?;
    if let Some(probs) = probs {
        let matrices = parse_prob_sidecar(&read(probs)?).map_err(data_err)?;
        attach_probs(&mut treebank, matrices).map_err(data_err)?;
    }
    treebank
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            ProjectedTree::from_tree(t)
                .map_err(|v| CliError::Data(format!("sentence {}: {v}", i + 1)))
        })
        .collect()
}

fn load_segmentations(
    seg: Option<&Path>,
    mode: Mode,
    trees: &[ProjectedTree],
) -> Result<Vec<Segmentation>, CliError> {
    match (mode, seg) {
        (Mode::Word, _) => Ok(trees
            .iter()
            .map(|t| Segmentation::identity(&t.tree.forms()))
            .collect()),
        (_, Some(path)) => {
            let text = read(path)?;
            let segs: Vec<Segmentation> = text
                .lines()
                .map(|line| Segmentation::parse_line(line, SEG_DELIMITER))
                .collect::<Result<_, _>>()
                .map_err(data_err)?;
            if segs.len() != trees.len() {
                return Err(CliError::Data(format!(
                    "segmentation file has {} lines but the treebank has {} sentences",
                    segs.len(),
                    trees.len()
                )));
            }
            Ok(segs)
        }
        (_, None) => Err(CliError::Io(
            "--seg is required for subword and char modes".to_string(),
        )),
    }
}

fn cmd_convert(
    trees: &Path,
    mode: Mode,
    seg: Option<&Path>,
    probs: Option<&Path>,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let projected = load_projected(trees, probs)?;
    let segs = load_segmentations(seg, mode, &projected)?;

    match mode {
        Mode::Word | Mode::Subword => {
            let mut vocab = LabelVocab::new();
            let mut matrices: Vec<ArcMatrix> = Vec::with_capacity(projected.len());
            for (i, (tree, seg)) in projected.iter().zip(&segs).enumerate() {
                let am = expand_to_subwords(tree, seg, &mut vocab)
                    .map_err(|e| CliError::Data(format!("sentence {}: {e}", i + 1)))?;
                matrices.push(am);
            }
            write(out, &write_arc_matrices(&matrices, &vocab))?;
            eprintln!("{} sentences converted", matrices.len());
        }
        Mode::Char => {
            let mut out_trees = Vec::with_capacity(projected.len());
            for (i, (tree, seg)) in projected.iter().zip(&segs).enumerate() {
                let ct = to_char_tree(tree, seg)
                    .map_err(|e| CliError::Data(format!("sentence {}: {e}", i + 1)))?;
                out_trees.push(ct.tree);
            }
            let text = write_conllu(&out_trees).map_err(data_err)?;
            write(out, &text)?;
            eprintln!("{} sentences converted", out_trees.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    seed: u64,
    params: Option<&Path>,
    beta: f64,
    n2: usize,
) -> Result<ExitCode, CliError> {
    let params = match params {
        Some(path) => GcnParams::load(&read(path)?).map_err(data_err)?,
        None => GcnParams::seeded(8, 16, 12, n2, beta, seed),
    };
    params.validate().map_err(data_err)?;
    println!(
        "params ok: d={} ff={} labels={} blocks={} beta={}",
        params.dim(),
        params.ff_dim(),
        params.label_count(),
        params.block_count(),
        params.beta
    );
    let report = run_verify(seed).map_err(data_err)?;
    print!("{}", report.render());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_score_ged(pred: &Path, gold: &Path) -> Result<ExitCode, CliError> {
    let pred = parse_masks(&read(pred)?).map_err(data_err)?;
    let gold = parse_masks(&read(gold)?).map_err(data_err)?;
    let score = score_ged(&pred, &gold).map_err(data_err)?;
    println!("tp {} fp {} fn {}", score.tp, score.fp, score.fn_);
    println!("precision {:.4}", score.precision);
    println!("recall    {:.4}", score.recall);
    println!("f0.5      {:.4}", score.f_half);
    Ok(ExitCode::SUCCESS)
}
