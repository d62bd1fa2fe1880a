use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};

use corpg::coherence::{build_graph, coh_metrics, CoherenceOracle, FileOracle, OrderScorer};
use corpg::decoding::{beam_search, greedy_decode, split_at_boundaries, top_k_sample};
use corpg::diagnostics::gradient_suite;
use corpg::metrics::{corpus_report_parallel, write_report_csv};
use corpg::model::{load_checkpoint, source_encoding_values, GraphModule, ModelConfig};
use corpg::text::{
    atomic_write, make_parallel_corpus_parallel, read_documents, read_outputs, read_parallel,
    read_score_matrices, segment_documents, split_sentences, tokenize, write_documents,
    write_outputs, write_parallel, Document, OutputLine, RawDocument, RuleNoiser, TokenId, Vocab,
};
use corpg::train::{train, DiversityConfig, TrainConfig};
use corpg::{Error, Result};

use crate::config::{echo_dir, Resolver};
use crate::{Cli, Command};

/// The sentence-boundary marker appended to every vocabulary at preprocess
/// time; targets join sentences with it and decoding splits on it.
const BOUNDARY_TOKEN: &str = "<sb>";

// Fixed master-seed offsets per module, recorded in every config echo.
const SEED_NOISER: u64 = 1;
const SEED_ORACLE: u64 = 2;
const SEED_TRAIN: u64 = 3;
const SEED_DECODE: u64 = 5;

pub fn run(cli: Cli) -> Result<()> {
    let mut r = Resolver::load(cli.config.as_deref())?;
    let seed = r.get(cli.seed, "seed", 0u64)?;
    match cli.command {
        Command::Preprocess(args) => preprocess(args, &mut r),
        Command::Pseudo(args) => pseudo(args, &mut r, seed),
        Command::TrainOracle(args) => train_oracle(args, &mut r, seed),
        Command::Train(args) => train_model(args, &mut r, seed),
        Command::Generate(args) => generate(args, &mut r, seed),
        Command::Eval(args) => eval(args, &mut r),
        Command::SweepEps(args) => sweep_eps(args, &mut r),
        Command::Gradcheck => gradcheck(),
    }
}

fn boundary_id(vocab: &Vocab) -> Result<TokenId> {
    if !vocab.contains(BOUNDARY_TOKEN) {
        return Err(Error::data(format!(
            "vocabulary has no {BOUNDARY_TOKEN} boundary token; rebuild it with `corpg preprocess`"
        )));
    }
    Ok(vocab.encode(BOUNDARY_TOKEN))
}

fn encode_all(docs: &[RawDocument], vocab: &Vocab) -> Vec<Document> {
    docs.iter().map(|d| d.encode(vocab)).collect()
}

// ── preprocess ───────────────────────────────────────────────────────

#[derive(Args)]
pub struct PreprocessArgs {
    /// Raw corpus: a file with one article per line, or a directory of .txt
    /// files with one article per file.
    #[arg(long)]
    input: PathBuf,
    /// Document JSONL output.
    #[arg(long)]
    output: PathBuf,
    /// Vocabulary output (defaults to vocab.txt next to the document output).
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    /// Sentences per document.
    #[arg(long)]
    window: Option<usize>,
    /// Minimum token frequency for the vocabulary.
    #[arg(long)]
    min_count: Option<usize>,
    /// Drop sentences shorter than this many tokens (1 = keep everything).
    #[arg(long)]
    min_sentence_len: Option<usize>,
}

fn read_articles(input: &Path) -> Result<Vec<(String, String)>> {
    let mut articles = Vec::new();
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
            articles.push((stem, std::fs::read_to_string(&path)?));
        }
    } else {
        let text = std::fs::read_to_string(input)?;
        for (i, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                articles.push((format!("a{i:05}"), line.to_string()));
            }
        }
    }
    if articles.is_empty() {
        return Err(Error::data(format!("no articles found in {}", input.display())));
    }
    Ok(articles)
}

fn preprocess(args: PreprocessArgs, r: &mut Resolver) -> Result<()> {
    let window = r.get(args.window, "window", 5usize)?;
    let min_count = r.get(args.min_count, "min_count", 1usize)?;
    let min_sentence_len = r.get(args.min_sentence_len, "min_sentence_len", 1usize)?;
    r.note("input", args.input.display());
    r.note("output", args.output.display());

    let mut docs = Vec::new();
    for (article_id, text) in read_articles(&args.input)? {
        let sentences: Vec<Vec<String>> = split_sentences(&text)
            .iter()
            .map(|s| tokenize(s))
            .filter(|toks| toks.len() >= min_sentence_len)
            .collect();
        for (k, chunk) in segment_documents(&sentences, window)?.into_iter().enumerate() {
            docs.push(RawDocument { id: format!("{article_id}-{k}"), sentences: chunk });
        }
    }
    if docs.is_empty() {
        return Err(Error::data("no documents survived segmentation".to_string()));
    }

    let mut vocab = Vocab::build(&docs, min_count)?;
    vocab.add_token(BOUNDARY_TOKEN);
    let vocab_out = args
        .vocab_out
        .unwrap_or_else(|| echo_dir(&args.output).join("vocab.txt"));
    r.note("vocab_out", vocab_out.display());

    write_documents(&args.output, &docs)?;
    vocab.save(&vocab_out)?;
    r.echo(echo_dir(&args.output), "preprocess")?;
    info!("wrote {} documents, vocabulary of {} tokens", docs.len(), vocab.len());
    println!("preprocess: {} documents, vocab {} tokens", docs.len(), vocab.len());
    Ok(())
}

// ── pseudo ───────────────────────────────────────────────────────────

#[derive(Args)]
pub struct PseudoArgs {
    /// Document JSONL input.
    #[arg(long)]
    docs: PathBuf,
    /// Vocabulary file.
    #[arg(long)]
    vocab: PathBuf,
    /// Trained order-scorer file for graph construction.
    #[arg(long)]
    oracle: PathBuf,
    /// Parallel corpus JSONL output.
    #[arg(long)]
    output: PathBuf,
    /// Graph threshold.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    p_syn: Option<f64>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    p_swap: Option<f64>,
    /// Synonym lexicon: one "token synonym" pair per line.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Worker threads (output is identical for any value).
    #[arg(long)]
    jobs: Option<usize>,
}

fn load_lexicon(path: &Path, vocab: &Vocab) -> Result<HashMap<TokenId, TokenId>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(from), Some(to)) = (parts.next(), parts.next()) else {
            return Err(Error::data(format!(
                "{}:{}: expected `token synonym`",
                path.display(),
                lineno + 1
            )));
        };
        if !vocab.contains(from) || !vocab.contains(to) {
            warn!("lexicon entry {from:?} -> {to:?} skipped: out of vocabulary");
            continue;
        }
        map.insert(vocab.encode(from), vocab.encode(to));
    }
    Ok(map)
}

fn pseudo(args: PseudoArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let eps = r.get(args.eps, "eps", 0.5f64)?;
    let p_syn = r.get(args.p_syn, "p_syn", 0.1f64)?;
    let p_drop = r.get(args.p_drop, "p_drop", 0.05f64)?;
    let p_swap = r.get(args.p_swap, "p_swap", 0.1f64)?;
    let jobs = r.get(args.jobs, "jobs", 1usize)?;
    r.note("noiser_seed", seed.wrapping_add(SEED_NOISER));

    let vocab = Vocab::load(&args.vocab)?;
    let docs = encode_all(&read_documents(&args.docs)?, &vocab);
    let lexicon = match &args.lexicon {
        Some(path) => {
            r.note("lexicon", path.display());
            load_lexicon(path, &vocab)?
        }
        None => HashMap::new(),
    };
    let noiser = RuleNoiser::new(p_syn, p_drop, p_swap, lexicon)?;
    let oracle = OrderScorer::load(&args.oracle)?;
    let corpus = make_parallel_corpus_parallel(
        &docs,
        &noiser,
        &oracle,
        eps,
        seed.wrapping_add(SEED_NOISER),
        jobs,
    )?;
    write_parallel(&args.output, &corpus, &vocab)?;
    r.echo(echo_dir(&args.output), "pseudo")?;
    println!("pseudo: {} parallel documents", corpus.len());
    Ok(())
}

// ── train-oracle ─────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainOracleArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Order-scorer output file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

fn train_oracle(args: TrainOracleArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let dim = r.get(args.dim, "oracle_dim", 32usize)?;
    let epochs = r.get(args.epochs, "oracle_epochs", 50usize)?;
    let lr = r.get(args.lr, "oracle_lr", 0.5f64)?;
    let oracle_seed = seed.wrapping_add(SEED_ORACLE);
    r.note("oracle_seed", oracle_seed);

    let vocab = Vocab::load(&args.vocab)?;
    let docs = encode_all(&read_documents(&args.docs)?, &vocab);
    let trained =
        corpg::coherence::train_order_scorer(&docs, vocab.len(), dim, epochs, lr, oracle_seed)?;
    trained.scorer.save(&args.output)?;
    r.note("train_accuracy", format!("{:.4}", trained.train_accuracy));
    r.echo(echo_dir(&args.output), "train-oracle")?;
    println!("train-oracle: pair accuracy {:.4}", trained.train_accuracy);
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainArgs {
    /// Parallel corpus JSONL.
    #[arg(long)]
    parallel: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory for checkpoints, metrics.csv, and the config echo.
    #[arg(long)]
    out_dir: PathBuf,

    // model shape
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    l_enc: Option<usize>,
    #[arg(long)]
    l_dec: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    max_sentences: Option<usize>,

    // ablation switches
    /// graph_gru | gat | none
    #[arg(long)]
    graph_module: Option<String>,
    /// Replace the graph signal with learned per-sentence position embeddings.
    #[arg(long)]
    sentence_position: bool,
    /// Disable the copy mechanism.
    #[arg(long)]
    no_copy: bool,
    /// Disable the diversity coefficient (all loss weights 1).
    #[arg(long)]
    no_div_coef: bool,
    /// Comma-separated diversity weights for 1-grams,2-grams,...
    #[arg(long)]
    lambdas: Option<String>,

    // optimizer
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Stop early once full-corpus teacher-forced accuracy reaches this value.
    #[arg(long)]
    early_stop_acc: Option<f64>,
}

fn parse_lambdas(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::contract(format!("bad diversity weight {s:?}")))
        })
        .collect()
}

fn train_model(args: TrainArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let vocab = Vocab::load(&args.vocab)?;
    let sep = boundary_id(&vocab)?;

    let defaults = ModelConfig::default();
    let graph_module = r
        .get(args.graph_module, "graph_module", defaults.graph_module.to_string())?
        .parse::<GraphModule>()?;
    let mcfg = ModelConfig {
        vocab_size: vocab.len(),
        d_model: r.get(args.d_model, "d_model", defaults.d_model)?,
        heads: r.get(args.heads, "heads", defaults.heads)?,
        l_enc: r.get(args.l_enc, "l_enc", defaults.l_enc)?,
        l_dec: r.get(args.l_dec, "l_dec", defaults.l_dec)?,
        d_ff: r.get(args.d_ff, "d_ff", defaults.d_ff)?,
        dropout: r.get(args.dropout, "dropout", defaults.dropout)?,
        n_max: r.get(args.n_max, "n_max", defaults.n_max)?,
        max_sentences: r.get(args.max_sentences, "max_sentences", defaults.max_sentences)?,
        graph_module,
        sentence_position: r.get_flag(args.sentence_position, "sentence_position", false)?,
        copy: !r.get_flag(args.no_copy, "no_copy", false)?,
    };

    let no_div = r.get_flag(args.no_div_coef, "no_div_coef", false)?;
    let dcfg = if no_div {
        DiversityConfig::disabled()
    } else {
        let raw = r.get(args.lambdas, "lambdas", "2.0,1.0".to_string())?;
        DiversityConfig { lambdas: parse_lambdas(&raw)? }
    };

    let tdef = TrainConfig::default();
    let train_seed = seed.wrapping_add(SEED_TRAIN);
    let tcfg = TrainConfig {
        base_lr: r.get(args.lr, "lr", tdef.base_lr)?,
        warmup: r.get(args.warmup, "warmup", tdef.warmup)?,
        batch_size: r.get(args.batch_size, "batch_size", tdef.batch_size)?,
        max_steps: r.get(args.steps, "steps", tdef.max_steps)?,
        clip_norm: r.get(args.clip_norm, "clip_norm", tdef.clip_norm)?,
        checkpoint_every: r.get(args.checkpoint_every, "checkpoint_every", tdef.checkpoint_every)?,
        log_every: r.get(args.log_every, "log_every", tdef.log_every)?,
        early_stop_acc: match args.early_stop_acc {
            Some(a) => Some(a),
            None => None,
        },
        seed: train_seed,
        ..tdef
    };
    r.note("train_seed", train_seed);
    r.note("boundary_token_id", sep);

    let corpus = read_parallel(&args.parallel, &vocab)?;
    r.echo(&args.out_dir, "train")?;
    let out = train(&corpus, &mcfg, &tcfg, &dcfg, sep, Some(&args.out_dir))?;
    println!(
        "train: {} steps, final loss {:.4}, token accuracy {:.4}",
        out.steps_run, out.final_loss, out.final_token_acc
    );
    Ok(())
}

// ── generate ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GenerateArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Parallel corpus JSONL providing sources and graphs.
    #[arg(long)]
    input: PathBuf,
    /// Generated corpus JSONL output.
    #[arg(long)]
    output: PathBuf,
    /// greedy | beam | topk
    #[arg(long)]
    decode: Option<String>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    length_alpha: Option<f64>,
}

fn generate(args: GenerateArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let strategy = r.get(args.decode, "decode", "beam".to_string())?;
    let beam = r.get(args.beam, "beam", 4usize)?;
    let k = r.get(args.k, "k", 5usize)?;
    let temperature = r.get(args.temperature, "temperature", 1.0f64)?;
    let max_len = r.get(args.max_len, "max_len", 128usize)?;
    let length_alpha = r.get(args.length_alpha, "length_alpha", 0.6f64)?;
    let decode_seed = seed.wrapping_add(SEED_DECODE);
    r.note("decode_seed", decode_seed);

    let vocab = Vocab::load(&args.vocab)?;
    let sep = boundary_id(&vocab)?;
    let (cfg, params) = load_checkpoint(&args.ckpt)?;
    if cfg.vocab_size != vocab.len() {
        return Err(Error::data(format!(
            "checkpoint vocabulary size {} does not match vocab file ({} tokens)",
            cfg.vocab_size,
            vocab.len()
        )));
    }
    let corpus = read_parallel(&args.input, &vocab)?;

    let mut outputs = Vec::with_capacity(corpus.len());
    for (idx, pd) in corpus.iter().enumerate() {
        let enc = source_encoding_values(&pd.source, &pd.graph, &params, &cfg)?;
        let ids = match strategy.as_str() {
            "greedy" => greedy_decode(&params, &cfg, &enc, max_len)?.ids,
            "beam" => beam_search(&params, &cfg, &enc, beam, max_len, length_alpha)?,
            "topk" => top_k_sample(
                &params,
                &cfg,
                &enc,
                k,
                temperature,
                max_len,
                decode_seed.wrapping_add(idx as u64),
            )?,
            other => {
                return Err(Error::contract(format!(
                    "unknown decode strategy {other:?} (expected greedy, beam, or topk)"
                )))
            }
        };
        let sentences = split_at_boundaries(&ids, sep)
            .iter()
            .map(|s| Ok(vocab.decode_sentence(s)?.join(" ")))
            .collect::<Result<Vec<String>>>()?;
        outputs.push(OutputLine { id: pd.source.id.clone(), output: sentences });
    }
    write_outputs(&args.output, &outputs)?;
    r.echo(echo_dir(&args.output), "generate")?;
    println!("generate: {} documents decoded with {strategy}", outputs.len());
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct EvalArgs {
    /// Original documents JSONL.
    #[arg(long)]
    original: PathBuf,
    /// Generated corpus JSONL.
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Trained order-scorer file.
    #[arg(long, conflicts_with = "scores")]
    oracle: Option<PathBuf>,
    /// Precomputed pair-score JSONL (joined against the generated documents).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Report CSV output.
    #[arg(long)]
    report: PathBuf,
    /// Worker threads (output is identical for any value).
    #[arg(long)]
    jobs: Option<usize>,
}

fn eval(args: EvalArgs, r: &mut Resolver) -> Result<()> {
    let jobs = r.get(args.jobs, "jobs", 1usize)?;
    let vocab = Vocab::load(&args.vocab)?;
    let originals = encode_all(&read_documents(&args.original)?, &vocab);
    let by_id: HashMap<&str, &Document> = originals.iter().map(|d| (d.id.as_str(), d)).collect();

    let generated: Vec<Document> = read_outputs(&args.generated)?
        .into_iter()
        .map(|line| Document {
            id: line.id,
            sentences: line
                .output
                .iter()
                .map(|s| vocab.encode_sentence(&s.split_whitespace().map(String::from).collect::<Vec<_>>()))
                .filter(|s| !s.is_empty())
                .collect(),
        })
        .collect();

    let mut pairs = Vec::with_capacity(generated.len());
    for gen in generated {
        let orig = by_id.get(gen.id.as_str()).ok_or_else(|| {
            Error::data(format!("generated document {:?} has no original", gen.id))
        })?;
        pairs.push(((*orig).clone(), gen));
    }

    let oracle: Box<dyn CoherenceOracle> = match (&args.oracle, &args.scores) {
        (Some(path), None) => {
            r.note("oracle", path.display());
            Box::new(OrderScorer::load(path)?)
        }
        (None, Some(path)) => {
            r.note("scores", path.display());
            let gen_docs: Vec<Document> = pairs.iter().map(|(_, g)| g.clone()).collect();
            Box::new(FileOracle::from_matrices(&read_score_matrices(path)?, &gen_docs)?)
        }
        _ => {
            return Err(Error::contract(
                "eval needs exactly one of --oracle or --scores".to_string(),
            ))
        }
    };

    let report = corpus_report_parallel(&pairs, oracle.as_ref(), jobs)?;
    atomic_write(&args.report, |w| write_report_csv(&report, w))?;
    r.echo(echo_dir(&args.report), "eval")?;
    println!(
        "eval: {} docs | self-BLEU {:.2} | self-TER {:.2} | self-WER {:.2} | COH {:.2} | COH-p {:.2} ({} docs skipped for coherence)",
        report.rows.len(),
        report.self_bleu,
        report.self_ter,
        report.self_wer,
        report.coh,
        report.coh_p,
        report.coh_skipped
    );
    Ok(())
}

// ── sweep-eps ────────────────────────────────────────────────────────

#[derive(Args)]
pub struct SweepEpsArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    /// Comma-separated thresholds, e.g. 0.3,0.5,0.7,0.9
    #[arg(long)]
    eps_list: Option<String>,
    /// Sweep CSV output.
    #[arg(long)]
    output: PathBuf,
}

fn sweep_eps(args: SweepEpsArgs, r: &mut Resolver) -> Result<()> {
    let raw = r.get(args.eps_list, "eps_list", "0.3,0.5,0.7,0.9".to_string())?;
    let eps_values: Vec<f64> = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::contract(format!("bad epsilon {s:?}")))
        })
        .collect::<Result<_>>()?;

    let vocab = Vocab::load(&args.vocab)?;
    let docs = encode_all(&read_documents(&args.docs)?, &vocab);
    let oracle = OrderScorer::load(&args.oracle)?;

    // corpus coherence is threshold-independent; report it once per row
    let mut coh_sum = 0.0;
    let mut coh_p_sum = 0.0;
    let mut coh_docs = 0usize;
    for doc in &docs {
        if doc.len() >= 2 {
            let (c, p) = coh_metrics(doc, &oracle)?;
            coh_sum += c;
            coh_p_sum += p;
            coh_docs += 1;
        }
    }
    let (coh, coh_p) = if coh_docs > 0 {
        (100.0 * coh_sum / coh_docs as f64, 100.0 * coh_p_sum / coh_docs as f64)
    } else {
        (0.0, 0.0)
    };

    atomic_write(&args.output, |w| {
        writeln!(w, "eps,total_edges,avg_out_degree,isolated_nodes,coh,coh_p")?;
        for &eps in &eps_values {
            let mut edges = 0usize;
            let mut nodes = 0usize;
            let mut isolated = 0usize;
            for doc in &docs {
                let g = build_graph(doc, &oracle, eps)?;
                edges += g.edge_count();
                nodes += g.len();
                isolated += g.isolated_count();
            }
            let avg_deg = edges as f64 / nodes.max(1) as f64;
            writeln!(w, "{eps},{edges},{avg_deg:.4},{isolated},{coh:.4},{coh_p:.4}")?;
        }
        Ok(())
    })?;
    r.echo(echo_dir(&args.output), "sweep-eps")?;
    println!("sweep-eps: wrote {} thresholds to {}", eps_values.len(), args.output.display());
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────

fn gradcheck() -> Result<()> {
    let mut failures = 0;
    for (name, report) in gradient_suite()? {
        let status = if report.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:4} {name:<28} max_rel_err {:.3e} (tol {:.0e}, {} entries)",
            report.max_rel_err, report.tol, report.entries_checked
        );
        if !report.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::numeric(format!("{failures} gradient checks failed")));
    }
    Ok(())
}
