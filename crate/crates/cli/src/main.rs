//! `phraseprompt` command-line tool.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or format errors.
//! Data errors are reported as a single `ERROR <code>: <detail>` line.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use phraseprompt::oracle::Suite;
use phraseprompt::prompt::Strategy;

#[derive(Debug, Parser)]
#[command(
    name = "phraseprompt",
    version,
    about = "Phrase-level retrieval prompts for machine translation"
)]
pub struct Cli {
    /// Worker threads (0 = one per core). Output does not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// File of `key=value` lines supplying flag defaults; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract consistent phrase pairs and write them as TSV.
    Extract(ExtractArgs),
    /// Build a phrase database from an aligned corpus.
    BuildDb(BuildDbArgs),
    /// Print database statistics as key=value lines.
    DbStats(DbStatsArgs),
    /// Nearest database entries for phrases of input sentences.
    Query(QueryArgs),
    /// Prefix each input sentence with a retrieved phrase prompt.
    Promptify(PromptifyArgs),
    /// Write a training corpus mixing plain and prompted sources.
    Mix(MixArgs),
    /// Corpus BLEU of tokenized hypotheses against one reference each.
    EvalBleu(EvalBleuArgs),
    /// Fraction of hypotheses containing their constraint target phrase.
    EvalConstraints(EvalConstraintsArgs),
    /// Run an oracle suite and report mismatches.
    Verify(VerifyArgs),
    /// Write a synthetic aligned corpus (`<out>.src`, `.tgt`, `.align`).
    ToyCorpus(ToyCorpusArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Source side, one tokenized sentence per line.
    #[arg(long, value_name = "FILE")]
    src: PathBuf,
    /// Target side, line-parallel to --src.
    #[arg(long, value_name = "FILE")]
    tgt: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Precomputed RPPV1 token vectors, one record per sentence of the input.
    /// Takes precedence over --builtin-embedder.
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Built-in hashed context embedder as `dim,window,seed`.
    #[arg(long, value_name = "DIM,WINDOW,SEED", default_value = "64,2,42", value_parser = parse_embedder)]
    builtin_embedder: (usize, usize, u64),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// IVF-PQ lists to probe [default: nlist/8, at least 1].
    #[arg(long)]
    nprobe: Option<usize>,
    /// IVF-PQ candidates re-ranked exactly [default: 100 when originals are kept, else 0].
    #[arg(long)]
    rerank_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long, default_value_t = Strategy::GreedyCover, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Largest accepted squared L2 distance (`inf` accepts everything).
    #[arg(long, default_value_t = f32::INFINITY, allow_negative_numbers = true)]
    tau: f32,
    #[arg(long, default_value_t = 8)]
    max_pairs: usize,
    /// Longest query span in tokens.
    #[arg(long, default_value_t = 4, value_parser = parse_positive)]
    max_len: usize,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Pharaoh `i-j` alignments, one line per sentence pair.
    #[arg(long, value_name = "FILE")]
    align: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = parse_positive)]
    max_len: usize,
    /// Output TSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "FILE")]
    align: PathBuf,
    /// Database file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = parse_positive)]
    max_len: usize,
    /// Index type: flat or ivfpq.
    #[arg(long, default_value = "flat", value_parser = ["flat", "ivfpq"])]
    index: String,
    /// IVF lists [default: ceil(sqrt(n)), at most 4096].
    #[arg(long)]
    nlist: Option<usize>,
    /// PQ sub-quantizers; must divide the vector dimension.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Bits per PQ code (1..=8).
    #[arg(long, default_value_t = 8)]
    nbits: u32,
    /// Vectors sampled for training [default: min(n, 100*nlist)].
    #[arg(long)]
    train_sample: Option<usize>,
    #[arg(long, default_value_t = 20)]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep original vectors in the IVF-PQ index for exact re-ranking.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    keep_originals: bool,
    /// Drop entries repeating an earlier entry's phrases and vector exactly.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    dedup: bool,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct DbStatsArgs {
    /// Database file.
    db: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, value_name = "FILE")]
    db: PathBuf,
    /// Sentences to query, one per line.
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Query the token span `BEGIN,END` of every line instead of the whole line.
    #[arg(long, value_name = "BEGIN,END", value_parser = parse_span)]
    span: Option<(usize, usize)>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Output TSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromptifyArgs {
    #[arg(long, value_name = "FILE")]
    db: PathBuf,
    /// Source sentences, one per line.
    input: PathBuf,
    /// TSV `src_phrase<TAB>tgt_phrase` constraints, added to every sentence
    /// that contains the source phrase.
    #[arg(long, value_name = "FILE")]
    constraints: Option<PathBuf>,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Output file [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "FILE")]
    db: PathBuf,
    /// Output prefix; writes `<out>.src` and `<out>.tgt`.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    /// Fraction of sentences that also get a prompted copy.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Hide database entries extracted from the sentence being prompted.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    exclude_self: bool,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct EvalBleuArgs {
    /// Hypotheses, one tokenized sentence per line.
    hyp: PathBuf,
    /// References, line-parallel to HYP.
    reference: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    /// Add-one smoothing of higher-order precisions.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    smooth: bool,
}

#[derive(Debug, Args)]
pub struct EvalConstraintsArgs {
    /// Hypotheses, one tokenized sentence per line.
    hyp: PathBuf,
    /// TSV `src_phrase<TAB>tgt_phrase`, one line per hypothesis.
    constraints: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_parser = parse_suite)]
    suite: Suite,
    /// Case count [default: per suite].
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct ToyCorpusArgs {
    /// Output prefix.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    sentences: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_embedder(s: &str) -> Result<(usize, usize, u64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [dim, window, seed] = parts.as_slice() else {
        return Err("expected DIM,WINDOW,SEED".into());
    };
    let dim: usize = dim.parse().map_err(|e| format!("dim: {e}"))?;
    if dim == 0 {
        return Err("dim must be positive".into());
    }
    Ok((
        dim,
        window.parse().map_err(|e| format!("window: {e}"))?,
        seed.parse().map_err(|e| format!("seed: {e}"))?,
    ))
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_span(s: &str) -> Result<(usize, usize), String> {
    let (b, e) = s.split_once(',').ok_or("expected BEGIN,END")?;
    let b: usize = b.trim().parse().map_err(|e| format!("begin: {e}"))?;
    let e: usize = e.trim().parse().map_err(|e| format!("end: {e}"))?;
    if b >= e {
        return Err("span must be non-empty".into());
    }
    Ok((b, e))
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: phraseprompt::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: phraseprompt::Error| e.to_string())
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand(args, &Cli::command()) {
        Ok(a) => a,
        Err(config::ConfigError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::command().args_override_self(true).try_get_matches_from(args) {
        Ok(m) => match <Cli as clap::FromArgMatches>::from_arg_matches(&m) {
            Ok(cli) => cli,
            Err(e) => return usage_exit(e),
        },
        Err(e) => return usage_exit(e),
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e.detail());
            ExitCode::from(2)
        }
    }
}

fn usage_exit(e: clap::Error) -> ExitCode {
    use clap::error::ErrorKind;
    let _ = e.print();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    }
}
