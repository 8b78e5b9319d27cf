//! Corpus files, the token vocabulary, and a synthetic corpus generator.
//!
//! On disk a corpus is one JSON record per line; CoNLL-U payloads live in
//! sibling files `<id>.<docIndex>.conllu` so the main file stays small and
//! the parses stay in their standard format.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dependency::{
    load_conllu, parse_statistics, DependencyParse, Head, ParsedSentence, ParseStatistics,
    RelationVocab,
};
use crate::error::{CoreError, Result};
use crate::evaluation::tokenize;
use crate::model::build_encoder_input;
use crate::rng::stream_rng;
use crate::training::TrainSample;

/// One document cluster: 2 to 10 source documents, a reference summary,
/// and optional per-document CoNLL-U payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSample {
    pub id: String,
    pub documents: Vec<String>,
    pub summary: String,
    /// Raw CoNLL-U text, one payload per document, when parses exist.
    pub parses: Option<Vec<String>>,
}

impl CorpusSample {
    /// Parses every CoNLL-U payload; `None` when the sample carries none.
    pub fn parsed(&self) -> Result<Option<Vec<DependencyParse>>> {
        match &self.parses {
            None => Ok(None),
            Some(payloads) => payloads
                .iter()
                .map(|p| load_conllu(p))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Structural checks: unique filesystem-safe ids, 2..=10 documents, and
/// parses (when present) that cover every document with matching token
/// counts under the scorer's tokenization.
pub fn validate_corpus(samples: &[CorpusSample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for sample in samples {
        if !valid_id(&sample.id) {
            return Err(CoreError::structure(format!(
                "sample id {:?} is empty or not filesystem-safe",
                sample.id
            )));
        }
        if !seen.insert(sample.id.as_str()) {
            return Err(CoreError::structure(format!(
                "duplicate sample id {:?}",
                sample.id
            )));
        }
        if !(2..=10).contains(&sample.documents.len()) {
            return Err(CoreError::structure(format!(
                "sample {:?} has {} documents, expected 2 to 10",
                sample.id,
                sample.documents.len()
            )));
        }
        if let Some(payloads) = &sample.parses {
            if payloads.len() != sample.documents.len() {
                return Err(CoreError::structure(format!(
                    "sample {:?} has {} documents but {} parses",
                    sample.id,
                    sample.documents.len(),
                    payloads.len()
                )));
            }
            for (k, (doc, payload)) in sample.documents.iter().zip(payloads).enumerate() {
                let parse = load_conllu(payload)?;
                let doc_tokens = tokenize(doc).len();
                if parse.token_count() != doc_tokens {
                    return Err(CoreError::structure(format!(
                        "sample {:?} document {} has {} tokens but its parse covers {}",
                        sample.id,
                        k,
                        doc_tokens,
                        parse.token_count()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// On-disk record; `parses` holds sibling file names, not payloads.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    documents: Vec<String>,
    summary: String,
    parses: Vec<String>,
}

fn parse_file_name(id: &str, doc: usize) -> String {
    format!("{id}.{doc}.conllu")
}

/// Writes `samples` to `path` (one JSON record per line) plus sibling
/// `<id>.<docIndex>.conllu` files. Deterministic: the same samples always
/// produce byte-identical files.
pub fn save_corpus(samples: &[CorpusSample], path: &Path) -> Result<()> {
    validate_corpus(samples)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut lines = String::new();
    for sample in samples {
        let mut names = Vec::new();
        if let Some(payloads) = &sample.parses {
            for (k, payload) in payloads.iter().enumerate() {
                let name = parse_file_name(&sample.id, k);
                fs::write(dir.join(&name), payload)?;
                names.push(name);
            }
        }
        let record = Record {
            id: sample.id.clone(),
            documents: sample.documents.clone(),
            summary: sample.summary.clone(),
            parses: names,
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    fs::write(path, lines)?;
    Ok(())
}

/// Reads a corpus file and its sibling CoNLL-U files.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusSample>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| CoreError::Parse {
            line: lineno + 1,
            message: format!("bad corpus record: {e}"),
        })?;
        let parses = if record.parses.is_empty() {
            None
        } else {
            let mut payloads = Vec::new();
            for name in &record.parses {
                payloads.push(fs::read_to_string(dir.join(name))?);
            }
            Some(payloads)
        };
        samples.push(CorpusSample {
            id: record.id,
            documents: record.documents,
            summary: record.summary,
            parses,
        });
    }
    validate_corpus(&samples)?;
    Ok(samples)
}

/// Word-level vocabulary with the five reserved tokens at fixed indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Reserved tokens, in index order.
pub const RESERVED_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<doc>", "<s>", "</s>"];

impl TokenVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const DOC: usize = 2;
    pub const BOS: usize = 3;
    pub const EOS: usize = 4;

    /// Frequency-truncated vocabulary over every document and summary.
    /// `max_size` counts the reserved tokens; ties break alphabetically.
    pub fn build(samples: &[CorpusSample], max_size: usize) -> Result<TokenVocab> {
        let reserved = RESERVED_TOKENS.len();
        if max_size <= reserved {
            return Err(CoreError::config(format!(
                "vocabulary size {max_size} cannot exceed the {reserved} reserved tokens"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for sample in samples {
            for text in sample.documents.iter().chain([&sample.summary]) {
                for token in tokenize(text) {
                    *counts.entry(token).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - reserved);
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|t| t.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        TokenVocab::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its stored label list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<TokenVocab> {
        if tokens.len() <= RESERVED_TOKENS.len() {
            return Err(CoreError::structure(format!(
                "token vocabulary of {} entries lacks content tokens",
                tokens.len()
            )));
        }
        for (i, expected) in RESERVED_TOKENS.iter().enumerate() {
            if tokens[i] != *expected {
                return Err(CoreError::structure(format!(
                    "token vocabulary slot {i} must be {expected:?}, found {:?}",
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::new();
        for (i, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(CoreError::structure(format!(
                    "duplicate vocabulary token {token:?}"
                )));
            }
        }
        Ok(TokenVocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Tokenizes and maps to ids, unknown words to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(TokenVocab::UNK))
            .collect()
    }

    /// Space-joined surface forms; out-of-range ids are an error.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            words.push(self.token(id).ok_or_else(|| {
                CoreError::Index(format!(
                    "token id {id} outside vocabulary of size {}",
                    self.len()
                ))
            })?);
        }
        Ok(words.join(" "))
    }
}

/// Single-sentence parse with every token attached to the root, used for
/// samples that carry no parses (legal only without a relation mask).
fn trivial_parse(doc: &str) -> DependencyParse {
    let tokens = tokenize(doc);
    let n = tokens.len();
    DependencyParse {
        sentences: vec![ParsedSentence {
            tokens,
            heads: vec![Head::Root; n],
            relations: vec!["root".to_string(); n],
        }],
    }
}

/// Turns a corpus sample into a training sample: ids for every document,
/// the assembled encoder input, and summary ids without start/end markers.
pub fn encode_sample(
    sample: &CorpusSample,
    vocab: &TokenVocab,
    rel_vocab: &RelationVocab,
    max_src_len: usize,
    truncate_src: bool,
) -> Result<TrainSample> {
    let docs: Vec<Vec<usize>> = sample.documents.iter().map(|d| vocab.encode(d)).collect();
    let parses = match sample.parsed()? {
        Some(parses) => parses,
        None => sample.documents.iter().map(|d| trivial_parse(d)).collect(),
    };
    let input = build_encoder_input(
        &docs,
        &parses,
        rel_vocab,
        TokenVocab::DOC,
        max_src_len,
        truncate_src,
    )?;
    Ok(TrainSample {
        input,
        summary: vocab.encode(&sample.summary),
    })
}

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    /// Distinct content words available to the generator.
    pub vocab_size: usize,
    pub seed: u64,
}

/// Marker token that opens every salient sentence.
pub const SALIENT_MARKER: &str = "topic";

/// Relation labels cycled along each left-headed chain; "root" is implicit.
pub const SYNTH_RELATIONS: [&str; 5] = ["nsubj", "obj", "amod", "advmod", "case"];

fn chain_sentence(words: Vec<String>) -> ParsedSentence {
    let n = words.len();
    let mut heads = vec![Head::Root];
    let mut relations = vec!["root".to_string()];
    for i in 1..n {
        heads.push(Head::Token(i - 1));
        relations.push(SYNTH_RELATIONS[(i - 1) % SYNTH_RELATIONS.len()].to_string());
    }
    ParsedSentence {
        tokens: words,
        heads,
        relations,
    }
}

fn render_conllu(parse: &DependencyParse) -> String {
    let mut out = String::new();
    for (s, sentence) in parse.sentences.iter().enumerate() {
        if s > 0 {
            out.push('\n');
        }
        for (i, ((token, head), rel)) in sentence
            .tokens
            .iter()
            .zip(&sentence.heads)
            .zip(&sentence.relations)
            .enumerate()
        {
            let head_id = match head {
                Head::Root => 0,
                Head::Token(h) => h + 1,
            };
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                token,
                head_id,
                rel
            ));
        }
    }
    out
}

/// Generates a seeded corpus of template documents. Each document is a few
/// filler sentences plus one salient sentence opened by [`SALIENT_MARKER`];
/// the reference summary concatenates the salient sentences in document
/// order. Every document gets a left-headed chain parse, and the returned
/// [`ParseStatistics`] are counted during construction, independently of
/// the parser, for reconciliation via parse-stats.
pub fn synth_corpus(spec: &SynthSpec) -> Result<(Vec<CorpusSample>, ParseStatistics)> {
    if spec.n_samples < 1 {
        return Err(CoreError::config("n_samples must be >= 1"));
    }
    if !(2..=10).contains(&spec.min_docs)
        || !(2..=10).contains(&spec.max_docs)
        || spec.min_docs > spec.max_docs
    {
        return Err(CoreError::config(format!(
            "document range {}..={} must sit inside 2..=10",
            spec.min_docs, spec.max_docs
        )));
    }
    if spec.vocab_size < 10 {
        return Err(CoreError::config(format!(
            "synthetic vocabulary needs at least 10 content words, got {}",
            spec.vocab_size
        )));
    }
    let mut rng = stream_rng(spec.seed, "synth-corpus", 0);
    let mut stats = ParseStatistics::default();
    let count_sentence = |len: usize, stats: &mut ParseStatistics| {
        stats.sentences += 1;
        stats.tokens += len;
        stats.arcs += len - 1;
        *stats.arc_histogram.entry(len - 1).or_insert(0) += 1;
        *stats.relation_counts.entry("root".to_string()).or_insert(0) += 1;
        for i in 1..len {
            *stats
                .relation_counts
                .entry(SYNTH_RELATIONS[(i - 1) % SYNTH_RELATIONS.len()].to_string())
                .or_insert(0) += 1;
        }
    };

    let mut samples = Vec::with_capacity(spec.n_samples);
    for s in 0..spec.n_samples {
        let q = rng.gen_range(spec.min_docs..=spec.max_docs);
        let mut documents = Vec::with_capacity(q);
        let mut payloads = Vec::with_capacity(q);
        let mut salient = Vec::with_capacity(q);
        for _ in 0..q {
            let n_sentences = rng.gen_range(2..=3);
            let salient_at = rng.gen_range(0..n_sentences);
            let mut sentences = Vec::with_capacity(n_sentences);
            for i in 0..n_sentences {
                let words: Vec<String> = if i == salient_at {
                    std::iter::once(SALIENT_MARKER.to_string())
                        .chain((0..3).map(|_| format!("w{}", rng.gen_range(0..spec.vocab_size))))
                        .collect()
                } else {
                    (0..rng.gen_range(3..=5))
                        .map(|_| format!("w{}", rng.gen_range(0..spec.vocab_size)))
                        .collect()
                };
                count_sentence(words.len(), &mut stats);
                sentences.push(chain_sentence(words));
            }
            salient.push(sentences[salient_at].tokens.join(" "));
            documents.push(
                sentences
                    .iter()
                    .map(|s| s.tokens.join(" "))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            payloads.push(render_conllu(&DependencyParse { sentences }));
        }
        samples.push(CorpusSample {
            id: format!("sample-{s:04}"),
            documents,
            summary: salient.join(" "),
            parses: Some(payloads),
        });
    }
    validate_corpus(&samples)?;
    Ok((samples, stats))
}

/// Parser-derived statistics over a corpus; every sample must carry parses.
pub fn corpus_parse_stats(samples: &[CorpusSample]) -> Result<ParseStatistics> {
    let mut parses = Vec::new();
    for sample in samples {
        match sample.parsed()? {
            Some(p) => parses.extend(p),
            None => {
                return Err(CoreError::structure(format!(
                    "sample {:?} has no parses to count",
                    sample.id
                )))
            }
        }
    }
    Ok(parse_statistics(parses.iter()))
}
