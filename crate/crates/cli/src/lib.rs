//! Command implementations for the `mdsum` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error (including a
//! failed protocol validation), 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use mdsum_core::corpus::{
    corpus_parse_stats, encode_sample, load_corpus, save_corpus, synth_corpus, SynthSpec,
    TokenVocab,
};
use mdsum_core::dependency::{DependencyParse, RelationVocab, UNK_RELATION};
use mdsum_core::encodings::{
    fuse_positional, token_positional_encoding, validate_protocol, DocEncodingFunction,
    ProtocolRule,
};
use mdsum_core::error::{CoreError, Result};
use mdsum_core::evaluation::evaluate_corpus;
use mdsum_core::model::{generate, MaskSource};
use mdsum_core::runconfig::RunConfig;
use mdsum_core::training::{
    append_trace, load_checkpoint, train, Checkpoint, TrainOptions, TrainSample,
};

#[derive(Parser)]
#[command(
    name = "mdsum",
    version,
    about = "Multi-document abstractive summarization workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a corpus described by a TOML run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Greedy-decode summaries for every sample in a corpus-format file.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
    },
    /// ROUGE-score line-aligned candidate and reference files.
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Where the structured report is written.
        #[arg(long, default_value = "rouge-report.json")]
        report: PathBuf,
    },
    /// Print per-document scalars and fused position-0 vectors.
    InspectEncodings {
        #[arg(long)]
        doc_fn: String,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        docs: usize,
        #[arg(long, default_value_t = 8)]
        dmodel: usize,
    },
    /// Check a document encoding against the admission protocol.
    ValidateProtocol {
        #[arg(long)]
        doc_fn: String,
        #[arg(long, default_value_t = 10)]
        qmax: usize,
        #[arg(long, default_value_t = 1.0)]
        token_pe_bound: f64,
    },
    /// Count dependency relations across a corpus.
    ParseStats {
        #[arg(long)]
        corpus: PathBuf,
        /// Also write the statistics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a seeded synthetic corpus with parses and ground-truth stats.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        min_docs: usize,
        #[arg(long, default_value_t = 4)]
        max_docs: usize,
        #[arg(long, default_value_t = 100)]
        vocab_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses arguments and runs the selected command, returning the process
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CoreError::Usage(_) | CoreError::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Train { config } => cmd_train(&config),
        Command::Generate {
            checkpoint,
            input,
            min_len,
            max_len,
        } => cmd_generate(&checkpoint, &input, min_len, max_len),
        Command::Score {
            candidates,
            references,
            report,
        } => cmd_score(&candidates, &references, &report),
        Command::InspectEncodings {
            doc_fn,
            alpha,
            docs,
            dmodel,
        } => cmd_inspect_encodings(&doc_fn, alpha, docs, dmodel),
        Command::ValidateProtocol {
            doc_fn,
            qmax,
            token_pe_bound,
        } => cmd_validate_protocol(&doc_fn, qmax, token_pe_bound),
        Command::ParseStats { corpus, json } => cmd_parse_stats(&corpus, json.as_deref()),
        Command::SynthCorpus {
            out,
            samples,
            min_docs,
            max_docs,
            vocab_size,
            seed,
        } => cmd_synth_corpus(&out, samples, min_docs, max_docs, vocab_size, seed),
    }
}

fn root_only_relations() -> Result<RelationVocab> {
    RelationVocab::from_labels(vec!["root".to_string(), UNK_RELATION.to_string()])
}

fn cmd_train(config_path: &Path) -> Result<i32> {
    let mut run = RunConfig::load(config_path)?;
    let samples = load_corpus(&run.data.corpus)?;
    let vocab = TokenVocab::build(&samples, run.model.vocab_size)?;
    run.model.vocab_size = vocab.len();

    let masked = run.model.mask_source != MaskSource::None;
    let mut parses: Vec<DependencyParse> = Vec::new();
    for sample in &samples {
        match sample.parsed()? {
            Some(p) => parses.extend(p),
            None if masked => {
                return Err(CoreError::config(format!(
                    "mask source {} needs parses, but sample {:?} has none",
                    run.model.mask_source, sample.id
                )))
            }
            None => {}
        }
    }
    let rel_vocab = if parses.is_empty() {
        root_only_relations()?
    } else {
        RelationVocab::build(parses.iter(), run.model.relations.max(2))?
    };
    if masked {
        run.model.relations = rel_vocab.len();
    }
    run.train.seed = run.seed;
    run.validate()?;

    fs::create_dir_all(&run.data.out_dir)?;
    let resolved = run.resolved_toml()?;
    println!("resolved configuration:\n{resolved}");
    fs::write(run.data.out_dir.join("config-resolved.toml"), &resolved)?;

    let train_samples: Vec<TrainSample> = samples
        .iter()
        .map(|s| {
            encode_sample(
                s,
                &vocab,
                &rel_vocab,
                run.model.max_src_len,
                run.model.truncate_src,
            )
        })
        .collect::<Result<_>>()?;

    let mut checkpoint = Checkpoint::fresh(run.model.clone(), run.seed)?;
    checkpoint.token_vocab = Some(vocab.tokens().to_vec());
    checkpoint.relation_vocab = Some(rel_vocab.clone());

    let options = TrainOptions {
        rel_vocab: Some(&rel_vocab),
        bos: TokenVocab::BOS,
        eos: TokenVocab::EOS,
        pad: TokenVocab::PAD,
        checkpoint_dir: Some(&run.data.out_dir),
        checkpoint_interval: run.data.checkpoint_interval,
    };
    let outcome = train(&train_samples, &run.train, checkpoint, &options)?;

    let trace_path = run.data.out_dir.join("trace.tsv");
    if trace_path.exists() {
        fs::remove_file(&trace_path)?;
    }
    append_trace(&trace_path, &outcome.trace)?;
    match outcome.trace.last() {
        Some(last) => println!("trained to step {}, final loss {}", last.step, last.loss),
        None => println!("nothing to do: max_steps is {}", run.train.max_steps),
    }
    Ok(0)
}

fn cmd_generate(checkpoint: &Path, input: &Path, min_len: usize, max_len: usize) -> Result<i32> {
    let cp = load_checkpoint(checkpoint)?;
    let tokens = cp.token_vocab.clone().ok_or_else(|| {
        CoreError::config("checkpoint carries no token vocabulary; train through the CLI")
    })?;
    let vocab = TokenVocab::from_tokens(tokens)?;
    let rel_vocab = match cp.relation_vocab.clone() {
        Some(v) => v,
        None => root_only_relations()?,
    };
    let samples = load_corpus(input)?;
    if samples.is_empty() {
        return Err(CoreError::Usage(format!(
            "input file {} holds no samples",
            input.display()
        )));
    }
    for sample in &samples {
        let encoded = encode_sample(
            sample,
            &vocab,
            &rel_vocab,
            cp.model.max_src_len,
            cp.model.truncate_src,
        )?;
        let ids = generate(
            &cp.model,
            &cp.params,
            &encoded.input,
            Some(&rel_vocab),
            TokenVocab::BOS,
            TokenVocab::EOS,
            min_len,
            max_len,
        )?;
        println!("{}", vocab.decode(&ids)?);
    }
    Ok(0)
}

fn cmd_score(candidates: &Path, references: &Path, report: &Path) -> Result<i32> {
    let cand_text = fs::read_to_string(candidates)?;
    let ref_text = fs::read_to_string(references)?;
    let cands: Vec<&str> = cand_text.lines().collect();
    let refs: Vec<&str> = ref_text.lines().collect();
    if cands.len() != refs.len() {
        return Err(CoreError::Usage(format!(
            "{} candidate lines but {} reference lines; the files must be line-aligned",
            cands.len(),
            refs.len()
        )));
    }
    let pairs: Vec<(String, String)> = cands
        .iter()
        .zip(&refs)
        .map(|(c, r)| (c.to_string(), r.to_string()))
        .collect();
    let result = evaluate_corpus(&pairs)?;
    print!("{}", result.tsv());
    fs::write(report, serde_json::to_string_pretty(&result)? + "\n")?;
    Ok(0)
}

fn cmd_inspect_encodings(doc_fn: &str, alpha: f64, docs: usize, dmodel: usize) -> Result<i32> {
    let f: DocEncodingFunction = doc_fn.parse()?;
    if docs < 1 {
        return Err(CoreError::Usage("need at least one document".to_string()));
    }
    let pe = token_positional_encoding(0, dmodel)?;
    println!("doc-fn {f}, alpha {alpha}, d_model {dmodel}");
    println!("doc\tscalar\tfused vector at position 0");
    for k in 1..=docs {
        let scalar = f.evaluate(k)?;
        let fused: Vec<String> = fuse_positional(scalar, &pe, alpha)
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        println!("{k}\t{scalar:.6}\t{}", fused.join(" "));
    }
    Ok(0)
}

fn rule_name(rule: ProtocolRule) -> &'static str {
    match rule {
        ProtocolRule::Uniqueness => "Uniqueness",
        ProtocolRule::Bounded => "Bounded",
        ProtocolRule::Magnitude => "Magnitude",
    }
}

fn cmd_validate_protocol(doc_fn: &str, qmax: usize, token_pe_bound: f64) -> Result<i32> {
    let f: DocEncodingFunction = doc_fn.parse()?;
    let verdict = validate_protocol(&f, qmax, token_pe_bound)?;
    for v in &verdict.violations {
        println!("{} violation: {}", rule_name(v.rule), v.detail);
    }
    if verdict.pass {
        println!("pass: {f} satisfies the admission protocol over 1..={qmax}");
        Ok(0)
    } else {
        println!(
            "fail: {f} breaks {} rule(s) over 1..={qmax}",
            verdict.violations.len()
        );
        Ok(1)
    }
}

fn cmd_parse_stats(corpus: &Path, json: Option<&Path>) -> Result<i32> {
    let samples = load_corpus(corpus)?;
    let stats = corpus_parse_stats(&samples)?;
    println!("samples\t{}", samples.len());
    println!("sentences\t{}", stats.sentences);
    println!("tokens\t{}", stats.tokens);
    println!("arcs\t{}", stats.arcs);
    for (rel, n) in &stats.relation_counts {
        println!("relation\t{rel}\t{n}");
    }
    for (arcs, n) in &stats.arc_histogram {
        println!("sentences-with-arcs\t{arcs}\t{n}");
    }
    if let Some(path) = json {
        fs::write(path, serde_json::to_string_pretty(&stats)? + "\n")?;
    }
    Ok(0)
}

/// Sibling path for the generator's ground-truth statistics.
pub fn synth_stats_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("stats.json")
}

fn cmd_synth_corpus(
    out: &Path,
    samples: usize,
    min_docs: usize,
    max_docs: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<i32> {
    let spec = SynthSpec {
        n_samples: samples,
        min_docs,
        max_docs,
        vocab_size,
        seed,
    };
    let (corpus, stats) = synth_corpus(&spec)?;
    save_corpus(&corpus, out)?;
    let stats_path = synth_stats_path(out);
    fs::write(&stats_path, serde_json::to_string_pretty(&stats)? + "\n")?;
    println!(
        "wrote {} samples to {} (ground truth: {})",
        corpus.len(),
        out.display(),
        stats_path.display()
    );
    Ok(0)
}
