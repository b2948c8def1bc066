//! Rule-based sentence segmentation.
//!
//! A boundary is placed after a run of terminal punctuation (`.`, `!`, `?`,
//! optionally followed by closing quotes or brackets) when it is followed by
//! whitespace and then an uppercase letter, a digit or an opening
//! quote/bracket. A period closing a token found in the abbreviation lexicon
//! never ends a sentence.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Section, SentenceSpan};

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "al", "approx", "b.i.d", "ca", "cf", "co", "conc", "dept", "dr", "e.g", "eg", "eq", "eqs",
    "esp", "etc", "fig", "figs", "i.e", "i.m", "i.p", "i.v", "ie", "inc", "jr", "ltd", "mr",
    "mrs", "ms", "p.o", "prof", "q.d", "q.i.d", "ref", "refs", "resp", "s.c", "sp", "spp", "sr",
    "st", "subsp", "t.i.d", "u.k", "u.s", "var", "viz", "vol", "vs", "wt", "jan", "feb", "mar",
    "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

/// Lowercased abbreviations, stored without their trailing period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbbreviationLexicon {
    entries: BTreeSet<String>,
}

impl Default for AbbreviationLexicon {
    fn default() -> Self {
        Self { entries: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect() }
    }
}

impl AbbreviationLexicon {
    pub fn empty() -> Self {
        Self { entries: BTreeSet::new() }
    }

    pub fn insert(&mut self, abbreviation: &str) {
        let key = abbreviation.trim().trim_end_matches('.').to_lowercase();
        if !key.is_empty() {
            self.entries.insert(key);
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(&word.trim_end_matches('.').to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmenter {
    lexicon: AbbreviationLexicon,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '(' | '[' | '"' | '\u{201c}' | '\'')
}

impl Segmenter {
    pub fn new(lexicon: AbbreviationLexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &AbbreviationLexicon {
        &self.lexicon
    }

    /// Byte ranges of the sentences in `text`, trimmed of surrounding whitespace.
    pub fn boundaries(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut last_content_end = 0;
        let mut chars = text.char_indices().peekable();

        while let Some((i, c)) = chars.next() {
            if c.is_whitespace() {
                continue;
            }
            if start.is_none() {
                start = Some(i);
            }
            last_content_end = i + c.len_utf8();
            if !is_terminal(c) {
                continue;
            }

            let mut end = last_content_end;
            while let Some(&(j, next)) = chars.peek() {
                if is_terminal(next) || is_closer(next) {
                    end = j + next.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            last_content_end = end;

            let rest = &text[end..];
            let Some(first) = rest.chars().next() else { break };
            if !first.is_whitespace() {
                continue;
            }
            let Some(lookahead) = rest.trim_start().chars().next() else { break };
            if !(lookahead.is_uppercase() || lookahead.is_ascii_digit() || is_opener(lookahead)) {
                continue;
            }
            if c == '.' && self.is_abbreviation(&text[..i]) {
                continue;
            }
            if let Some(s) = start.take() {
                spans.push((s, end));
            }
        }
        if let Some(s) = start {
            spans.push((s, last_content_end));
        }
        spans
    }

    /// `before` is the text up to (excluding) a period.
    fn is_abbreviation(&self, before: &str) -> bool {
        let word_start = before.rfind(char::is_whitespace).map_or(0, |p| p + 1);
        let word = before[word_start..].trim_start_matches(|c: char| is_opener(c) || c == '(');
        !word.is_empty() && self.lexicon.contains(word)
    }

    /// Segments `text` as sentences of `section`, offsetting byte positions by
    /// `offset` and numbering from `first_index`.
    pub fn segment_section(
        &self,
        text: &str,
        section: Section,
        offset: usize,
        first_index: usize,
    ) -> Vec<SentenceSpan> {
        self.boundaries(text)
            .into_iter()
            .enumerate()
            .map(|(k, (b, e))| SentenceSpan {
                sent_index: first_index + k,
                begin: offset + b,
                end: offset + e,
                section,
            })
            .collect()
    }
}

/// Segments free text with the default biomedical abbreviation lexicon.
pub fn segment_sentences(text: &str) -> Vec<SentenceSpan> {
    Segmenter::default().segment_section(text, Section::Abstract, 0, 0)
}
