use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use phraseprompt::corpus::{parse_lines, parse_parallel, tokenize_line, ParallelCorpus};
use phraseprompt::eval::{bleu, constraint_accuracy, BleuConfig, ConstraintCase};
use phraseprompt::extract::{extract_corpus_phrases, write_occurrences_tsv, Span};
use phraseprompt::prompt::{
    constraint_prompt, contains_tokens, render_prompt, retrieve_prompt, PromptConfig,
};
use phraseprompt::toy::toy_corpus;
use phraseprompt::vectors_file::check_against_tokens;
use phraseprompt::{
    build_database, make_mixed_corpus, pool_phrase, BuildOptions, EmbeddingProvider, Error,
    HashedContextEmbedder, IndexConfig, IvfPqConfig, MixConfig, PhraseDatabase, PrecomputedVectors,
    SearchParams,
};

use crate::{
    BuildDbArgs, Command, CorpusArgs, DbStatsArgs, EmbedArgs, EvalBleuArgs, EvalConstraintsArgs, ExtractArgs,
    MixArgs, PromptArgs, PromptifyArgs, QueryArgs, SearchArgs, ToyCorpusArgs, VerifyArgs,
};

/// A failure reported as `ERROR <code>: <detail>`.
#[derive(Debug)]
pub struct RunError {
    code: &'static str,
    detail: String,
}

impl RunError {
    pub fn code(&self) -> &'static str {
        self.code
    }

    pub fn detail(&self) -> &str {
        &self.detail
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError {
            code: e.code(),
            detail: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn io_error(path: &Path, e: io::Error) -> RunError {
    RunError {
        code: "IoError",
        detail: format!("{}: {e}", path.display()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

/// Writes to `path`, or to stdout when absent.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            match f(&mut w).and_then(|_| w.flush()) {
                // A closed pipe (e.g. `| head`) is not a failure.
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|e| io_error(Path::new("<stdout>"), e)),
            }
        }
    }
}

fn load_db(path: &Path) -> Result<PhraseDatabase> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    Ok(PhraseDatabase::read_from(BufReader::new(file))?)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_corpus(args: &CorpusArgs, align: Option<&Path>) -> Result<ParallelCorpus> {
    let corpus = parse_parallel(&read_text(&args.src)?, &read_text(&args.tgt)?)?;
    Ok(match align {
        Some(path) => corpus.with_alignments(&read_text(path)?)?,
        None => corpus,
    })
}

/// Resolves the embedding source; precomputed vectors are checked against
/// the token counts of the sentences they will be asked for.
fn provider(
    args: &EmbedArgs,
    token_counts: impl ExactSizeIterator<Item = usize>,
) -> Result<Box<dyn EmbeddingProvider>> {
    match &args.vectors {
        Some(path) => {
            let vectors = PrecomputedVectors::load(path)?;
            check_against_tokens(vectors.sentences(), token_counts)?;
            Ok(Box::new(vectors))
        }
        None => {
            let (dim, window, seed) = args.builtin_embedder;
            Ok(Box::new(HashedContextEmbedder { dim, window, seed }))
        }
    }
}

fn search_params(args: &SearchArgs) -> SearchParams {
    SearchParams {
        nprobe: args.nprobe,
        rerank_depth: args.rerank_depth,
    }
}

fn prompt_config(args: &PromptArgs) -> PromptConfig {
    PromptConfig {
        strategy: args.strategy,
        max_len: args.max_len,
        max_pairs: args.max_pairs,
        tau: args.tau,
        search: search_params(&args.search),
    }
}

fn check_dim(db: &PhraseDatabase, provider: &dyn EmbeddingProvider) -> Result<()> {
    if db.dim() != provider.dim() {
        return Err(Error::DimMismatch {
            expected: db.dim(),
            found: provider.dim(),
        }
        .into());
    }
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => extract(a),
        Command::BuildDb(a) => build_db(a),
        Command::DbStats(a) => db_stats(a),
        Command::Query(a) => query(a),
        Command::Promptify(a) => promptify(a),
        Command::Mix(a) => mix(a),
        Command::EvalBleu(a) => eval_bleu(a),
        Command::EvalConstraints(a) => eval_constraints(a),
        Command::Verify(a) => verify(a),
        Command::ToyCorpus(a) => toy(a),
    }
}

fn extract(args: ExtractArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus, Some(&args.align))?;
    let occurrences = extract_corpus_phrases(&corpus, args.max_len)?;
    with_output(args.out.as_deref(), |w| write_occurrences_tsv(w, &occurrences))
}

fn build_db(args: BuildDbArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus, Some(&args.align))?;
    let provider = provider(&args.embed, corpus.pairs.iter().map(|p| p.src.len()))?;
    let index = match args.index.as_str() {
        "ivfpq" => IndexConfig::IvfPq(IvfPqConfig {
            nlist: args.nlist,
            m: args.m,
            nbits: args.nbits,
            train_sample: args.train_sample,
            kmeans_iters: args.kmeans_iters,
            seed: args.seed,
            keep_originals: args.keep_originals,
        }),
        _ => IndexConfig::Flat,
    };
    let options = BuildOptions {
        max_len: args.max_len,
        index,
        dedup_exact: args.dedup,
    };
    let db = build_database(&corpus, provider.as_ref(), &options)?;
    let mut w = create(&args.out)?;
    db.write_to(&mut w)?;
    w.flush().map_err(|e| io_error(&args.out, e))?;
    eprintln!("wrote {} entries to {}", db.len(), args.out.display());
    Ok(())
}

fn db_stats(args: DbStatsArgs) -> Result<()> {
    let db = load_db(&args.db)?;
    let stats = db.stats().to_kv_lines();
    with_output(None, |w| w.write_all(stats.as_bytes()))
}

fn query(args: QueryArgs) -> Result<()> {
    let db = load_db(&args.db)?;
    let lines = parse_lines(&read_text(&args.input)?)?;
    let provider = provider(&args.embed, lines.iter().map(Vec::len))?;
    check_dim(&db, provider.as_ref())?;
    let params = search_params(&args.search);

    let rows: Vec<String> = lines
        .par_iter()
        .enumerate()
        .map(|(id, tokens)| -> Result<String> {
            let span = match args.span {
                Some((b, e)) if e <= tokens.len() => Span::new(b, e),
                Some((begin, end)) => {
                    return Err(Error::SpanOutOfRange {
                        begin,
                        end,
                        len: tokens.len(),
                    }
                    .into())
                }
                None => Span::new(0, tokens.len()),
            };
            let tv = provider.embed(id, tokens)?;
            let q = pool_phrase(&tv, span)?;
            let mut out = String::new();
            for (rank, (entry, d)) in db.query(&q, args.k, &params)?.into_iter().enumerate() {
                out.push_str(&format!(
                    "{id}\t{rank}\t{}\t{d}\t{}\t{}\n",
                    entry.entry_id, entry.src_phrase, entry.tgt_phrase
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    with_output(args.out.as_deref(), |w| {
        rows.iter().try_for_each(|r| w.write_all(r.as_bytes()))
    })
}

/// Parses `src<TAB>tgt` lines into token sequences.
fn read_constraint_tsv(path: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (src, tgt) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("{}:{}: expected src<TAB>tgt", path.display(), i + 1))
            })?;
            Ok((tokenize_line(src, i + 1)?, tokenize_line(tgt, i + 1)?))
        })
        .collect()
}

fn promptify(args: PromptifyArgs) -> Result<()> {
    let db = load_db(&args.db)?;
    let lines = parse_lines(&read_text(&args.input)?)?;
    let provider = provider(&args.embed, lines.iter().map(Vec::len))?;
    check_dim(&db, provider.as_ref())?;
    let constraints = match &args.constraints {
        Some(path) => read_constraint_tsv(path)?,
        None => Vec::new(),
    };
    let config = prompt_config(&args.prompt);

    let out: Vec<String> = lines
        .par_iter()
        .enumerate()
        .map(|(id, tokens)| -> Result<String> {
            let applicable: Vec<(String, String)> = constraints
                .iter()
                .filter(|(src, _)| contains_tokens(tokens, src))
                .map(|(src, tgt)| (src.join(" "), tgt.join(" ")))
                .collect();
            let mut prompt = constraint_prompt(&applicable)?;
            for pair in retrieve_prompt(&db, provider.as_ref(), id, tokens, &config, None)?.pairs() {
                prompt.push(pair.clone());
            }
            Ok(render_prompt(&prompt, tokens)?)
        })
        .collect::<Result<_>>()?;
    with_output(args.out.as_deref(), |w| {
        out.iter().try_for_each(|l| writeln!(w, "{l}"))
    })
}

fn mix(args: MixArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus, None)?;
    let db = load_db(&args.db)?;
    let provider = provider(&args.embed, corpus.pairs.iter().map(|p| p.src.len()))?;
    check_dim(&db, provider.as_ref())?;
    let config = MixConfig {
        ratio: args.ratio,
        seed: args.seed,
        exclude_self: args.exclude_self,
        prompt: prompt_config(&args.prompt),
    };
    let mixed = make_mixed_corpus(&corpus, &db, provider.as_ref(), &config)?;
    for (suffix, lines) in [(".src", &mixed.src), (".tgt", &mixed.tgt)] {
        let path = with_suffix(&args.out, suffix);
        with_output(Some(&path), |w| lines.iter().try_for_each(|l| writeln!(w, "{l}")))?;
    }
    eprintln!(
        "wrote {} lines ({} prompted) to {}.{{src,tgt}}",
        mixed.len(),
        mixed.augmented_ids.len(),
        args.out.display()
    );
    Ok(())
}

fn token_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect())
}

fn eval_bleu(args: EvalBleuArgs) -> Result<()> {
    let hyps = token_lines(&args.hyp)?;
    let refs = token_lines(&args.reference)?;
    let config = BleuConfig {
        max_n: args.max_n,
        smooth: args.smooth,
    };
    let score = bleu(&hyps, &refs, &config)?;
    with_output(None, |w| writeln!(w, "BLEU={score:.2}"))
}

fn eval_constraints(args: EvalConstraintsArgs) -> Result<()> {
    let hyps = token_lines(&args.hyp)?;
    let constraints = read_constraint_tsv(&args.constraints)?;
    if hyps.len() != constraints.len() {
        return Err(Error::LengthMismatch {
            hyps: hyps.len(),
            refs: constraints.len(),
        }
        .into());
    }
    let cases: Vec<ConstraintCase> = hyps
        .into_iter()
        .zip(constraints)
        .map(|(hyp_tokens, (_, constraint_tgt))| ConstraintCase {
            hyp_tokens,
            constraint_tgt,
        })
        .collect();
    let acc = constraint_accuracy(&cases)?;
    with_output(None, |w| writeln!(w, "accuracy={acc:.4}"))
}

fn verify(args: VerifyArgs) -> Result<()> {
    let cases = args.cases.unwrap_or_else(|| args.suite.default_cases());
    let report = args.suite.run(cases, args.seed)?;
    with_output(None, |w| writeln!(w, "{report}"))?;
    match report.first_mismatch {
        None => Ok(()),
        Some(first) => Err(RunError {
            code: "OracleMismatch",
            detail: first,
        }),
    }
}

fn toy(args: ToyCorpusArgs) -> Result<()> {
    let corpus = toy_corpus(args.sentences, args.seed);
    for (suffix, text) in [
        (".src", &corpus.src),
        (".tgt", &corpus.tgt),
        (".align", &corpus.align),
    ] {
        let path = with_suffix(&args.out, suffix);
        with_output(Some(&path), |w| w.write_all(text.as_bytes()))?;
    }
    Ok(())
}
