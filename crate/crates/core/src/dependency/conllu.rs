//! CoNLL-U ingestion. The parser itself is external; this module consumes
//! its standard 10-column output.

use crate::error::{CoreError, Result};

/// Head of a token: the sentence root or a 0-based token index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Root,
    Token(usize),
}

/// One parsed sentence; the three columns are index-aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub tokens: Vec<String>,
    pub heads: Vec<Head>,
    pub relations: Vec<String>,
}

impl ParsedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Arcs with a token head, i.e. everything except the root edge.
    pub fn non_root_arcs(&self) -> usize {
        self.heads
            .iter()
            .filter(|h| matches!(h, Head::Token(_)))
            .count()
    }
}

/// A document's dependency parse: one entry per sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyParse {
    pub sentences: Vec<ParsedSentence>,
}

impl DependencyParse {
    /// Sentence-order concatenation, used to treat a document cluster as one
    /// flat sequence of sentences.
    pub fn concat<'a>(parses: impl IntoIterator<Item = &'a DependencyParse>) -> DependencyParse {
        let mut sentences = Vec::new();
        for p in parses {
            sentences.extend(p.sentences.iter().cloned());
        }
        DependencyParse { sentences }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(ParsedSentence::len).sum()
    }
}

struct PendingToken {
    form: String,
    head_col: usize,
    relation: String,
    line: usize,
}

fn parse_error(line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        line,
        message: message.into(),
    }
}

fn flush_sentence(pending: &mut Vec<PendingToken>, out: &mut Vec<ParsedSentence>) -> Result<()> {
    if pending.is_empty() {
        return Ok(());
    }
    let len = pending.len();
    let mut tokens = Vec::with_capacity(len);
    let mut heads = Vec::with_capacity(len);
    let mut relations = Vec::with_capacity(len);
    let mut roots = 0usize;
    for (idx, tok) in pending.drain(..).enumerate() {
        let head = if tok.head_col == 0 {
            roots += 1;
            Head::Root
        } else {
            let h = tok.head_col - 1;
            if h >= len {
                return Err(CoreError::structure(format!(
                    "line {}: head {} points outside its {}-token sentence",
                    tok.line, tok.head_col, len
                )));
            }
            if h == idx {
                return Err(CoreError::structure(format!(
                    "line {}: token is its own head",
                    tok.line
                )));
            }
            Head::Token(h)
        };
        tokens.push(tok.form);
        heads.push(head);
        relations.push(tok.relation);
    }
    if roots != 1 {
        return Err(CoreError::structure(format!(
            "sentence ending before line tally {} has {} root-headed tokens, expected exactly 1",
            out.len() + 1,
            roots
        )));
    }
    out.push(ParsedSentence {
        tokens,
        heads,
        relations,
    });
    Ok(())
}

/// Parses CoNLL-U text: tab-separated 10-column token lines, blank-line
/// sentence breaks, `#` comments ignored, multiword ranges and empty nodes
/// skipped. Heads come out 0-based with `HEAD=0` mapped to [`Head::Root`].
pub fn load_conllu(text: &str) -> Result<DependencyParse> {
    let mut sentences = Vec::new();
    let mut pending: Vec<PendingToken> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush_sentence(&mut pending, &mut sentences)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_error(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        // Multiword-token ranges (1-2) and empty nodes (1.1) carry no arcs.
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad token id {:?}", cols[0])))?;
        if id != pending.len() + 1 {
            return Err(parse_error(
                lineno,
                format!("token id {} out of sequence, expected {}", id, pending.len() + 1),
            ));
        }
        if cols[1].is_empty() {
            return Err(parse_error(lineno, "empty FORM column"));
        }
        let head_col: usize = cols[6]
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad HEAD column {:?}", cols[6])))?;
        if cols[7].is_empty() || cols[7] == "_" {
            return Err(parse_error(lineno, "missing DEPREL column"));
        }
        pending.push(PendingToken {
            form: cols[1].to_string(),
            head_col,
            relation: cols[7].to_string(),
            line: lineno,
        });
    }
    flush_sentence(&mut pending, &mut sentences)?;
    Ok(DependencyParse { sentences })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn token_line(id: usize, form: &str, head: usize, rel: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_")
    }

    #[test]
    fn minimal_two_token_sentence() {
        let text = format!(
            "{}\n{}\n",
            token_line(1, "dogs", 2, "nsubj"),
            token_line(2, "bark", 0, "root")
        );
        let parse = load_conllu(&text).unwrap();
        assert_eq!(parse.sentences.len(), 1);
        let s = &parse.sentences[0];
        assert_eq!(s.tokens, vec!["dogs", "bark"]);
        assert_eq!(s.heads, vec![Head::Token(1), Head::Root]);
        assert_eq!(s.relations, vec!["nsubj", "root"]);
        assert_eq!(s.non_root_arcs(), 1);
    }

    #[test]
    fn empty_input_is_empty_parse() {
        assert_eq!(load_conllu("").unwrap().sentences.len(), 0);
        assert_eq!(load_conllu("\n\n").unwrap().sentences.len(), 0);
    }

    #[test]
    fn nine_columns_name_the_line() {
        let text = format!(
            "{}\n1\tbark\t_\t_\t_\t_\t0\troot\t_\n",
            "# a comment"
        );
        let err = load_conllu(&text).unwrap_err();
        match err {
            CoreError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("10"), "{message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn comments_ranges_and_empty_nodes_are_skipped() {
        let text = format!(
            "# sent_id = 1\n1-2\tcannot\t_\t_\t_\t_\t_\t_\t_\t_\n{}\n{}\n3.1\televen\t_\t_\t_\t_\t_\t_\t_\t_\n",
            token_line(1, "can", 0, "root"),
            token_line(2, "not", 1, "advmod"),
        );
        let parse = load_conllu(&text).unwrap();
        assert_eq!(parse.sentences.len(), 1);
        assert_eq!(parse.sentences[0].tokens, vec!["can", "not"]);
    }

    #[test]
    fn blank_lines_split_sentences() {
        let text = format!(
            "{}\n\n{}\n",
            token_line(1, "go", 0, "root"),
            token_line(1, "stop", 0, "root")
        );
        let parse = load_conllu(&text).unwrap();
        assert_eq!(parse.sentences.len(), 2);
    }

    #[test]
    fn head_out_of_range_is_structural() {
        let text = token_line(1, "bark", 5, "root");
        let err = load_conllu(&text).unwrap_err();
        assert!(matches!(err, CoreError::Structure(_)), "{err}");
    }

    #[test]
    fn self_headed_token_is_structural() {
        let text = format!(
            "{}\n{}\n",
            token_line(1, "dogs", 1, "nsubj"),
            token_line(2, "bark", 0, "root")
        );
        assert!(matches!(
            load_conllu(&text).unwrap_err(),
            CoreError::Structure(_)
        ));
    }

    #[test]
    fn root_count_must_be_one() {
        let none = format!(
            "{}\n{}\n",
            token_line(1, "dogs", 2, "nsubj"),
            token_line(2, "bark", 1, "dep")
        );
        assert!(matches!(
            load_conllu(&none).unwrap_err(),
            CoreError::Structure(_)
        ));
        let two = format!(
            "{}\n{}\n",
            token_line(1, "dogs", 0, "root"),
            token_line(2, "bark", 0, "root")
        );
        assert!(matches!(
            load_conllu(&two).unwrap_err(),
            CoreError::Structure(_)
        ));
    }

    #[test]
    fn out_of_sequence_id_is_a_parse_error() {
        let text = format!(
            "{}\n{}\n",
            token_line(1, "dogs", 2, "nsubj"),
            token_line(3, "bark", 0, "root")
        );
        assert!(matches!(
            load_conllu(&text).unwrap_err(),
            CoreError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn bad_head_integer_names_the_line() {
        let text = "1\tbark\t_\t_\t_\t_\tx\troot\t_\t_";
        assert!(matches!(
            load_conllu(text).unwrap_err(),
            CoreError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn crlf_input_parses() {
        let text = format!("{}\r\n\r\n", token_line(1, "go", 0, "root"));
        assert_eq!(load_conllu(&text).unwrap().sentences.len(), 1);
    }

    #[test]
    fn concat_preserves_sentence_order() {
        let a = load_conllu(&format!("{}\n", token_line(1, "go", 0, "root"))).unwrap();
        let b = load_conllu(&format!("{}\n", token_line(1, "stop", 0, "root"))).unwrap();
        let joined = DependencyParse::concat([&a, &b]);
        assert_eq!(joined.sentences.len(), 2);
        assert_eq!(joined.sentences[0].tokens[0], "go");
        assert_eq!(joined.sentences[1].tokens[0], "stop");
        assert_eq!(joined.token_count(), 2);
    }
}
