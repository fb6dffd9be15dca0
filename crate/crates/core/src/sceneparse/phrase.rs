use serde::{Deserialize, Serialize};

use crate::embed::{tokenize, word_key};
use crate::error::{Error, Result};

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "some", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "each", "every", "one", "another",
];
const CONJUNCTIONS: &[&str] = &["and", "&"];
const PREPOSITIONS: &[&str] = &[
    "with", "in", "on", "of", "under", "over", "near", "beside", "behind", "at", "from", "made", "inside",
    "above", "below", "by", "without",
];

/// Chunk of the prompt naming one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub phrase_id: usize,
    pub adjectives: Vec<String>,
    pub head_noun: String,
    /// Inclusive token range covering modifiers, noun and any attached
    /// prepositional tail; leading determiners are excluded.
    pub span: (usize, usize),
}

impl NounPhrase {
    /// Token indices of the phrase's words.
    pub fn word_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.span.0..=self.span.1
    }

    pub fn word_count(&self) -> usize {
        self.span.1 - self.span.0 + 1
    }

    pub fn text(&self) -> String {
        let mut w = self.adjectives.clone();
        w.push(self.head_noun.clone());
        w.join(" ")
    }
}

fn is(list: &[&str], key: &str) -> bool {
    list.contains(&key)
}

/// Shallow chunker for prompts of the form `DET? ADJ* NOUN (PREP ...)?`
/// joined by "and" or commas. In each chunk the last word before any
/// preposition is the noun and the words before it are adjectives; a chunk
/// that opens with a preposition attaches to the previous phrase.
pub fn extract_noun_phrases(prompt: &str) -> Result<Vec<NounPhrase>> {
    let tokens = tokenize(prompt);
    // (start, end) token ranges of chunks, separators excluded
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, tok) in tokens.iter().enumerate() {
        let key = word_key(tok);
        let separator = is(CONJUNCTIONS, key) || key.chars().all(|c| !c.is_alphanumeric());
        if separator {
            if let Some(s) = start.take() {
                chunks.push((s, i - 1));
            }
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        if tok.ends_with(',') || tok.ends_with(';') {
            chunks.push((start.take().expect("set above"), i));
        }
    }
    if let Some(s) = start {
        chunks.push((s, tokens.len() - 1));
    }

    let mut phrases: Vec<NounPhrase> = Vec::new();
    for (s, e) in chunks {
        let keys: Vec<&str> = (s..=e).map(|i| word_key(&tokens[i])).collect();
        if is(PREPOSITIONS, keys[0]) {
            if let Some(prev) = phrases.last_mut() {
                prev.span.1 = e;
            }
            continue;
        }
        let first = match keys.iter().position(|k| !is(DETERMINERS, k)) {
            Some(p) => p,
            None => continue,
        };
        let head_end = keys[first..]
            .iter()
            .position(|k| is(PREPOSITIONS, k))
            .map_or(keys.len(), |p| first + p);
        if head_end == first {
            continue;
        }
        let words: Vec<String> = keys[first..head_end].iter().map(|k| k.to_string()).collect();
        let (noun, adjectives) = words.split_last().expect("non-empty");
        phrases.push(NounPhrase {
            phrase_id: phrases.len(),
            adjectives: adjectives.to_vec(),
            head_noun: noun.clone(),
            span: (s + first, e),
        });
    }
    if phrases.is_empty() {
        return Err(Error::NoNounPhrase(prompt.to_string()));
    }
    Ok(phrases)
}
