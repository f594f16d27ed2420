//! In-memory dependency parses read from CoNLL-U, with coreference chains
//! from a JSONL sidecar.
//!
//! Reviews are delimited by a `# review_id = <id>` comment; every sentence
//! that follows belongs to that review until the next such comment. The
//! sidecar holds one object per review:
//!
//! ```text
//! {"review_id": "r1", "chains": [[{"sent": 0, "start": 2, "end": 2}, {"sent": 1, "start": 1, "end": 1}]]}
//! ```
//!
//! `sent` is the 0-based sentence index within the review; `start` and `end`
//! are 1-based, inclusive token ids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("review `{review_id}` rejected: {reason}")]
    Rejected { review_id: String, reason: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("coref sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    /// Lowercased at read time.
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    /// Governor index; 0 is the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    pub fn is_adjective(&self) -> bool {
        self.upos == "ADJ"
    }

    pub fn is_nominal(&self) -> bool {
        self.upos == "NOUN" || self.upos == "PROPN"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Other comment lines (without the leading `# `), in order.
    pub comments: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn get(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Indices of the tokens governed by `index`, in surface order.
    ///
    /// # Panics
    ///
    /// If `index` is not a token of this sentence.
    pub fn children(&self, index: usize) -> Vec<usize> {
        assert!(
            (1..=self.tokens.len()).contains(&index),
            "token index {index} out of range 1..={}",
            self.tokens.len()
        );
        self.tokens
            .iter()
            .filter(|t| t.head == index)
            .map(|t| t.index)
            .collect()
    }

    /// Checks that the head graph is a tree rooted at a single token.
    pub fn validate_tree(&self) -> Result<(), String> {
        let n = self.tokens.len();
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(format!("token ids not consecutive at position {}", i + 1));
            }
            if t.head > n {
                return Err(format!(
                    "token {} has head {} beyond sentence length {n}",
                    t.index, t.head
                ));
            }
            if t.head == t.index {
                return Err(format!("token {} is its own head", t.index));
            }
            if t.head == 0 {
                roots += 1;
            }
        }
        if n > 0 && roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        for start in 1..=n {
            let mut node = start;
            let mut steps = 0;
            while node != 0 {
                node = self.token(node).head;
                steps += 1;
                if steps > n {
                    return Err(format!("cyclic head graph through token {start}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
}

impl Mention {
    pub fn contains(&self, sent: usize, token: usize) -> bool {
        self.sent == sent && (self.start..=self.end).contains(&token)
    }
}

pub type Chain = Vec<Mention>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedReview {
    pub review_id: String,
    pub sentences: Vec<Sentence>,
    pub coref_chains: Vec<Chain>,
}

impl ParsedReview {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Head token of a mention span: the token whose governor lies outside
    /// the span (the first such token if several).
    pub fn mention_head(&self, m: &Mention) -> usize {
        let sentence = &self.sentences[m.sent];
        (m.start..=m.end)
            .find(|&i| {
                let h = sentence.token(i).head;
                h < m.start || h > m.end
            })
            .unwrap_or(m.start)
    }

    fn mention_in_bounds(&self, m: &Mention) -> bool {
        self.sentences
            .get(m.sent)
            .is_some_and(|s| m.start >= 1 && m.start <= m.end && m.end <= s.len())
    }

    /// Attaches chains, dropping (with a warning) any chain that has a
    /// mention outside sentence bounds or fewer than two mentions.
    pub fn attach_chains(&mut self, chains: Vec<Chain>) {
        for chain in chains {
            if chain.len() < 2 {
                log::warn!(
                    "review {}: dropping coref chain with {} mention(s)",
                    self.review_id,
                    chain.len()
                );
                continue;
            }
            if let Some(bad) = chain.iter().find(|m| !self.mention_in_bounds(m)) {
                log::warn!(
                    "review {}: dropping coref chain with dangling span {:?}",
                    self.review_id,
                    bad
                );
                continue;
            }
            self.coref_chains.push(chain);
        }
    }

    /// Serializes the review as a CoNLL-U document.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for (i, sentence) in self.sentences.iter().enumerate() {
            if i == 0 {
                let _ = writeln!(out, "# review_id = {}", self.review_id);
            }
            for c in &sentence.comments {
                let _ = writeln!(out, "# {c}");
            }
            for t in &sentence.tokens {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    t.index, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, t.misc
                );
            }
            out.push('\n');
        }
        if self.sentences.is_empty() {
            let _ = writeln!(out, "# review_id = {}", self.review_id);
            out.push('\n');
        }
        out
    }

    /// Serializes the coref chains as one sidecar JSON line.
    pub fn coref_line(&self) -> String {
        serde_json::to_string(&CorefRecord {
            review_id: self.review_id.clone(),
            chains: self.coref_chains.clone(),
        })
        .expect("coref record serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorefRecord {
    pub review_id: String,
    pub chains: Vec<Chain>,
}

/// Loads a coref sidecar into a map keyed by review id.
pub fn read_coref(path: &Path) -> Result<HashMap<String, Vec<Chain>>, ParseError> {
    let file = File::open(path).map_err(|e| ParseError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ParseError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorefRecord = serde_json::from_str(&line).map_err(|e| ParseError::Sidecar {
            line: i + 1,
            message: e.to_string(),
        })?;
        map.insert(rec.review_id, rec.chains);
    }
    Ok(map)
}

/// Streaming CoNLL-U reader yielding one [`ParsedReview`] per
/// `# review_id` block. A review with an invalid tree is yielded as
/// [`ParseError::Rejected`] and reading continues.
pub struct ConlluReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    coref: HashMap<String, Vec<Chain>>,
    pending_id: Option<String>,
    pending_comments: Vec<String>,
    done: bool,
}

impl<R: BufRead> ConlluReader<R> {
    pub fn new(reader: R, coref: HashMap<String, Vec<Chain>>) -> Self {
        ConlluReader {
            lines: reader.lines(),
            line_no: 0,
            coref,
            pending_id: None,
            pending_comments: Vec::new(),
            done: false,
        }
    }

    fn parse_token(&self, line: &str) -> Result<Option<Token>, ParseError> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(self.syntax(format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        // multiword ranges and empty nodes
        if cols[0].contains('-') || cols[0].contains('.') {
            return Ok(None);
        }
        let index = cols[0]
            .parse::<usize>()
            .map_err(|_| self.syntax(format!("bad token id `{}`", cols[0])))?;
        let head = cols[6]
            .parse::<usize>()
            .map_err(|_| self.syntax(format!("bad head `{}`", cols[6])))?;
        Ok(Some(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_lowercase(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        }))
    }

    fn syntax(&self, message: String) -> ParseError {
        ParseError::Syntax {
            line: self.line_no,
            message,
        }
    }

    fn finish(&mut self, review_id: String, sentences: Vec<Sentence>) -> Result<ParsedReview, ParseError> {
        for (i, s) in sentences.iter().enumerate() {
            if let Err(reason) = s.validate_tree() {
                let reason = format!("sentence {i}: {reason}");
                log::warn!("review {review_id} rejected: {reason}");
                self.coref.remove(&review_id);
                return Err(ParseError::Rejected { review_id, reason });
            }
        }
        let mut review = ParsedReview {
            review_id,
            sentences,
            coref_chains: Vec::new(),
        };
        if let Some(chains) = self.coref.remove(&review.review_id) {
            review.attach_chains(chains);
        }
        Ok(review)
    }
}

fn review_id_comment(comment: &str) -> Option<&str> {
    let rest = comment.strip_prefix("review_id")?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

impl<R: BufRead> Iterator for ConlluReader<R> {
    type Item = Result<ParsedReview, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut review_id = self.pending_id.take();
        let mut sentences: Vec<Sentence> = Vec::new();
        let mut current = Sentence {
            tokens: Vec::new(),
            comments: std::mem::take(&mut self.pending_comments),
        };
        loop {
            let line = match self.lines.next() {
                None => {
                    self.done = true;
                    if !current.tokens.is_empty() {
                        sentences.push(std::mem::take(&mut current));
                    }
                    return review_id.map(|id| self.finish(id, sentences));
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(ParseError::Io {
                        path: PathBuf::from("<conllu>"),
                        source: e,
                    }));
                }
                Some(Ok(line)) => line,
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                if !current.tokens.is_empty() {
                    sentences.push(std::mem::take(&mut current));
                }
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.strip_prefix(' ').unwrap_or(comment);
                if let Some(id) = review_id_comment(comment) {
                    if !current.tokens.is_empty() {
                        sentences.push(std::mem::take(&mut current));
                    }
                    match review_id {
                        None => {
                            review_id = Some(id.to_string());
                            current.comments.clear();
                        }
                        Some(prev) => {
                            self.pending_id = Some(id.to_string());
                            self.pending_comments = std::mem::take(&mut current.comments);
                            return Some(self.finish(prev, sentences));
                        }
                    }
                } else {
                    current.comments.push(comment.to_string());
                }
                continue;
            }
            if review_id.is_none() {
                return Some(Err(self.syntax("token line before any `# review_id` comment".into())));
            }
            match self.parse_token(line) {
                Ok(Some(token)) => current.tokens.push(token),
                Ok(None) => {}
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Opens a CoNLL-U file and, optionally, its coref sidecar.
pub fn read_conllu(path: &Path, coref: Option<&Path>) -> Result<ConlluReader<BufReader<File>>, ParseError> {
    let chains = match coref {
        Some(p) => read_coref(p)?,
        None => HashMap::new(),
    };
    let file = File::open(path).map_err(|e| ParseError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(ConlluReader::new(BufReader::new(file), chains))
}

/// Parses CoNLL-U text held in memory.
pub fn parse_conllu_str(text: &str, coref: HashMap<String, Vec<Chain>>) -> ConlluReader<&[u8]> {
    ConlluReader::new(text.as_bytes(), coref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FOOD_WAS_GREAT: &str = "# review_id = r1
# text = Food was great
1\tFood\tfood\tNOUN\tNN\t_\t2\tnsubj\t_\t_
2\twas\tbe\tAUX\tVBD\t_\t0\tROOT\t_\t_
3\tgreat\tgreat\tADJ\tJJ\t_\t2\tacomp\t_\t_

";

    fn read_all(text: &str) -> Vec<Result<ParsedReview, ParseError>> {
        parse_conllu_str(text, HashMap::new()).collect()
    }

    #[test]
    fn single_sentence_block() {
        let reviews = read_all(FOOD_WAS_GREAT);
        assert_eq!(reviews.len(), 1);
        let r = reviews[0].as_ref().unwrap();
        assert_eq!(r.review_id, "r1");
        assert_eq!(r.sentences.len(), 1);
        assert_eq!(r.sentences[0].comments, vec!["text = Food was great".to_string()]);
        assert_eq!(r.token_count(), 3);
    }

    #[test]
    fn copular_root_children() {
        let r = read_all(FOOD_WAS_GREAT).remove(0).unwrap();
        let s = &r.sentences[0];
        assert_eq!(s.children(2), vec![1, 3]);
        assert!(s.children(3).is_empty());
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn children_out_of_range_panics() {
        let r = read_all(FOOD_WAS_GREAT).remove(0).unwrap();
        r.sentences[0].children(4);
    }

    #[test]
    fn cycle_is_rejected_and_reading_continues() {
        let text = "# review_id = bad
1\tA\ta\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\tB\tb\tVERB\t_\t_\t1\tdep\t_\t_
3\tC\tc\tADJ\t_\t_\t0\troot\t_\t_

# review_id = good
1\tOk\tok\tADJ\t_\t_\t0\troot\t_\t_

";
        let out = read_all(text);
        assert_eq!(out.len(), 2);
        match &out[0] {
            Err(ParseError::Rejected { review_id, reason }) => {
                assert_eq!(review_id, "bad");
                assert!(reason.contains("cyclic"), "{reason}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(out[1].as_ref().unwrap().review_id, "good");
    }

    #[test]
    fn multiword_ranges_are_skipped_and_lemmas_lowercased() {
        let text = "# review_id = mw
1-2\twasn't\t_\t_\t_\t_\t_\t_\t_\t_
1\twas\tBe\tAUX\t_\t_\t3\tcop\t_\t_
2\tn't\tnot\tPART\t_\t_\t3\tadvmod\t_\t_
3\tclean\tClean\tADJ\t_\t_\t0\troot\t_\t_

";
        let r = read_all(text).remove(0).unwrap();
        assert_eq!(r.sentences[0].len(), 3);
        assert_eq!(r.sentences[0].token(1).lemma, "be");
        assert_eq!(r.sentences[0].token(3).lemma, "clean");
    }

    #[test]
    fn dangling_and_singleton_chains_are_dropped() {
        let mut coref = HashMap::new();
        coref.insert(
            "r1".to_string(),
            vec![
                vec![
                    Mention {
                        sent: 0,
                        start: 1,
                        end: 1,
                    },
                    Mention {
                        sent: 0,
                        start: 3,
                        end: 3,
                    },
                ],
                vec![
                    Mention {
                        sent: 0,
                        start: 1,
                        end: 1,
                    },
                    Mention {
                        sent: 4,
                        start: 1,
                        end: 1,
                    },
                ],
                vec![Mention {
                    sent: 0,
                    start: 1,
                    end: 1,
                }],
            ],
        );
        let r = parse_conllu_str(FOOD_WAS_GREAT, coref).next().unwrap().unwrap();
        assert_eq!(r.coref_chains.len(), 1);
    }

    #[test]
    fn two_reviews_and_multi_sentence() {
        let text = format!(
            "{FOOD_WAS_GREAT}# review_id = r2\n1\tYes\tyes\tINTJ\t_\t_\t0\troot\t_\t_\n\n1\tNo\tno\tINTJ\t_\t_\t0\troot\t_\t_\n"
        );
        let out: Vec<_> = read_all(&text).into_iter().map(Result::unwrap).collect();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].sentences.len(), 2);
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        (1usize..12)
            .prop_flat_map(|n| {
                let heads = (1..n).map(|i| 0..i).collect::<Vec<_>>();
                (Just(n), heads, prop::collection::vec("[a-z]{1,6}", n))
            })
            .prop_map(|(n, heads, words)| {
                // token 1 is the root; token i+1 attaches to an earlier token,
                // so the graph is a tree
                let tokens = (0..n)
                    .map(|i| Token {
                        index: i + 1,
                        form: words[i].to_uppercase(),
                        lemma: words[i].clone(),
                        upos: if i % 2 == 0 { "NOUN".into() } else { "ADJ".into() },
                        xpos: "_".into(),
                        feats: "_".into(),
                        head: if i == 0 { 0 } else { heads[i - 1] + 1 },
                        deprel: if i == 0 { "root".into() } else { "dep".into() },
                        deps: "_".into(),
                        misc: "_".into(),
                    })
                    .collect();
                Sentence {
                    tokens,
                    comments: vec![],
                }
            })
    }

    proptest! {
        #[test]
        fn conllu_round_trip(sentences in prop::collection::vec(arb_sentence(), 1..4)) {
            let mut review = ParsedReview { review_id: "rt".into(), sentences, coref_chains: vec![] };
            if review.sentences.len() > 1 {
                review.coref_chains.push(vec![
                    Mention { sent: 0, start: 1, end: 1 },
                    Mention { sent: 1, start: 1, end: 1 },
                ]);
            }
            let text = review.to_conllu();
            let coref = read_coref_str(&review.coref_line());
            let back = parse_conllu_str(&text, coref).next().unwrap().unwrap();
            prop_assert_eq!(back, review);
        }

        #[test]
        fn children_counts_sum_to_len_minus_one(s in arb_sentence()) {
            let total: usize = (1..=s.len()).map(|i| s.children(i).len()).sum();
            prop_assert_eq!(total, s.len() - 1);
        }
    }

    fn read_coref_str(line: &str) -> HashMap<String, Vec<Chain>> {
        let rec: CorefRecord = serde_json::from_str(line).unwrap();
        HashMap::from([(rec.review_id, rec.chains)])
    }
}
