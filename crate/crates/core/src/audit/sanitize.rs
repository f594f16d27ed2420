use regex::{Regex, RegexBuilder};

use super::AuditError;

const BUILTIN_DISCLAIMERS: &str = include_str!("../../data/disclaimers.txt");

/// Case-insensitive patterns for model self-reference and meta-commentary.
#[derive(Debug, Clone)]
pub struct DisclaimerFilter {
    patterns: Vec<Regex>,
}

impl DisclaimerFilter {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, AuditError> {
        let patterns = patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p.as_ref())
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| AuditError::Config(format!("disclaimer pattern `{}`: {e}", p.as_ref())))
            })
            .collect::<Result<_, _>>()?;
        Ok(DisclaimerFilter { patterns })
    }

    pub fn builtin() -> Self {
        Self::new(&crate::corpus::parse_pattern_lines(BUILTIN_DISCLAIMERS)).expect("shipped patterns compile")
    }

    pub fn matches(&self, text: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(text))
    }
}

/// Splits after runs of `.`, `!` or `?` that are followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let next = chars.get(k + 1).map(|&(_, n)| n);
        if next.map_or(true, char::is_whitespace) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sanitized {
    pub clean_text: String,
    pub removed_sentences: usize,
    /// Nothing but disclaimer text remained.
    pub discarded: bool,
}

/// Drops every sentence that matches a disclaimer pattern and normalizes
/// whitespace in what is left.
pub fn strip_disclaimers(raw_text: &str, filter: &DisclaimerFilter) -> Sanitized {
    let mut kept = Vec::new();
    let mut removed = 0;
    for s in split_sentences(raw_text) {
        if filter.matches(s) {
            removed += 1;
        } else {
            kept.push(s.split_whitespace().collect::<Vec<_>>().join(" "));
        }
    }
    let mut clean_text = kept.join(" ");
    // joining can bring an anchored pattern to the front of the text
    while !clean_text.is_empty() && filter.matches(&clean_text) {
        let sentences = split_sentences(&clean_text);
        let before = sentences.len();
        let rest: Vec<String> = sentences
            .into_iter()
            .filter(|s| !filter.matches(s))
            .map(str::to_string)
            .collect();
        if rest.len() == before {
            clean_text.clear();
            removed += before;
            break;
        }
        removed += before - rest.len();
        clean_text = rest.join(" ");
    }
    Sanitized {
        discarded: clean_text.is_empty(),
        clean_text,
        removed_sentences: removed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn meta_commentary_is_removed() {
        let f = DisclaimerFilter::builtin();
        let raw = "As an AI language model, I can say that this customer seems happy with their experience at a French restaurant. They specifically mention that the prices are affordable. The croissants were flaky.";
        let s = strip_disclaimers(raw, &f);
        assert_eq!(s.clean_text, "The croissants were flaky.");
        assert_eq!(s.removed_sentences, 2);
        assert!(!s.clean_text.contains("affordable"));
    }

    #[test]
    fn clean_text_unchanged() {
        let f = DisclaimerFilter::builtin();
        let raw = "Great pho. The broth was rich!";
        assert_eq!(strip_disclaimers(raw, &f).clean_text, raw);
        assert_eq!(
            strip_disclaimers("  spaced   out  text ", &f).clean_text,
            "spaced out text"
        );
    }

    #[test]
    fn pure_disclaimer_is_discarded() {
        let f = DisclaimerFilter::builtin();
        let s = strip_disclaimers("I'm an AI and cannot eat. I cannot write reviews of food.", &f);
        assert!(s.discarded);
        assert_eq!(s.clean_text, "");
    }

    #[test]
    fn splitter_keeps_decimals_and_ellipses_inside() {
        assert_eq!(
            split_sentences("It cost $9.50 total. Good... really! Yes"),
            vec!["It cost $9.50 total.", "Good...", "really!", "Yes"]
        );
    }

    const PIECES: [&str; 8] = [
        "As an AI model I think",
        "this customer liked it",
        "The food was great",
        "I cannot say more",
        "The reviewer mentions the staff",
        "Prices are affordable",
        "i'm an ai",
        "Lovely patio",
    ];

    proptest! {
        #[test]
        fn clean_text_never_matches(idx in proptest::collection::vec((0..PIECES.len(), 0..3usize), 0..8)) {
            let f = DisclaimerFilter::builtin();
            let raw: String = idx.iter().map(|(i, p)| format!("{}{} ", PIECES[*i], [".", "!", "?"][*p])).collect();
            let s = strip_disclaimers(&raw, &f);
            prop_assert!(!f.matches(&s.clean_text));
            prop_assert_eq!(s.discarded, s.clean_text.is_empty());
        }
    }
}
