//! Sentence segmentation and token-bounded chunking of long documents.

use serde::{Deserialize, Serialize};

use crate::corpus::token_count;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    /// Whitespace token count of `text`; also the chunk's aggregation weight.
    pub token_len: usize,
    /// First and last sentence index covered, inclusive.
    pub sentence_span: (usize, usize),
    pub chunk_index: usize,
    /// Set on pieces of a single sentence longer than `max_tokens`.
    pub fragment: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub max_tokens: usize,
    pub overlap_sentences: usize,
    pub enabled: bool,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            max_tokens: 512,
            overlap_sentences: 1,
            enabled: true,
        }
    }
}

impl ChunkingConfig {
    pub fn disabled(max_tokens: usize) -> Self {
        ChunkingConfig {
            max_tokens,
            overlap_sentences: 0,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("chunk max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Tokens ending in a period that never end a sentence. Matched exactly
/// against the whitespace-delimited token carrying the period, after
/// stripping opening brackets and quotes.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "Gen.", "Gov.", "Sen.", "Rep.", "Rev.", "Hon.",
    "Capt.", "Lt.", "Col.", "Sgt.", "vs.", "e.g.", "i.e.", "cf.", "No.", "Nos.", "Fig.", "Inc.", "Ltd.", "Co.",
    "Corp.", "Jan.", "Feb.", "Aug.", "Sept.", "Oct.", "Nov.", "Dec.", "U.S.", "U.K.", "U.N.", "E.U.", "a.m.", "p.m.",
];

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: [char; 6] = ['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

fn is_abbreviation(segment: &str) -> bool {
    let word = segment.split_whitespace().last().unwrap_or("");
    let word = word.trim_start_matches(OPENERS);
    ABBREVIATIONS.contains(&word)
}

/// Rule-based sentence splitter.
///
/// A boundary follows a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) when the next non-space character is an uppercase letter or a
/// digit, optionally behind an opening quote or bracket, or when the text
/// ends. Periods closing a token from [`ABBREVIATIONS`] are not boundaries.
/// Each sentence is trimmed; no non-whitespace character is lost.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    let push = |piece: &str, out: &mut Vec<Sentence>| {
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(Sentence {
                text: piece.to_string(),
                index: out.len(),
            });
        }
    };

    while i < chars.len() {
        let c = chars[i].1;
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && TERMINATORS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let last_terminator = j;
        while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);

        let mut k = j + 1;
        let boundary = if k == chars.len() {
            true
        } else if !chars[k].1.is_whitespace() {
            false
        } else {
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k < chars.len() && OPENERS.contains(&chars[k].1) {
                k += 1;
            }
            k >= chars.len() || chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit()
        };

        let abbreviated = last_terminator == i
            && c == '.'
            && is_abbreviation(&text[start..chars.get(i + 1).map_or(text.len(), |&(b, _)| b)]);

        if boundary && !abbreviated {
            push(&text[start..end], &mut sentences);
            start = end;
        }
        i = j + 1;
    }
    push(&text[start..], &mut sentences);
    sentences
}

/// Splits a document into chunks of whole sentences.
///
/// Sentences are packed greedily while the chunk stays within
/// `max_tokens`. On overflow the chunk is emitted and the next one starts
/// with the previous chunk's last `overlap_sentences` sentences. Carried
/// sentences are always fewer than the previous chunk's sentence count,
/// and the oldest are dropped if they would not leave room for the
/// incoming sentence. A sentence longer than `max_tokens` is cut at token
/// boundaries into fragments; no overlap is carried across fragments.
///
/// With `enabled == false` the result is a single chunk holding the first
/// `max_tokens` tokens of the document, joined by single spaces.
pub fn chunk_document(text: &str, config: &ChunkingConfig) -> Result<Vec<Chunk>> {
    config.validate()?;
    let sentences = segment_sentences(text);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    if !config.enabled {
        return Ok(vec![truncate(&sentences, config.max_tokens)]);
    }

    let max = config.max_tokens;
    let lens: Vec<usize> = sentences.iter().map(|s| token_count(&s.text)).collect();
    let mut chunks = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_tokens = 0usize;

    let emit = |ids: &[usize], chunks: &mut Vec<Chunk>| {
        let text = ids
            .iter()
            .map(|&i| sentences[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        chunks.push(Chunk {
            token_len: ids.iter().map(|&i| lens[i]).sum(),
            text,
            sentence_span: (ids[0], ids[ids.len() - 1]),
            chunk_index: chunks.len(),
            fragment: false,
        });
    };

    for (idx, &len) in lens.iter().enumerate() {
        if len > max {
            if !current.is_empty() {
                emit(&current, &mut chunks);
                current.clear();
                current_tokens = 0;
            }
            let tokens: Vec<&str> = sentences[idx].text.split_whitespace().collect();
            for piece in tokens.chunks(max) {
                chunks.push(Chunk {
                    text: piece.join(" "),
                    token_len: piece.len(),
                    sentence_span: (idx, idx),
                    chunk_index: chunks.len(),
                    fragment: true,
                });
            }
            continue;
        }
        if current_tokens + len <= max {
            current.push(idx);
            current_tokens += len;
            continue;
        }
        emit(&current, &mut chunks);
        let keep = config.overlap_sentences.min(current.len() - 1);
        let mut carried: Vec<usize> = current[current.len() - keep..].to_vec();
        let mut carried_tokens: usize = carried.iter().map(|&i| lens[i]).sum();
        while !carried.is_empty() && carried_tokens + len > max {
            carried_tokens -= lens[carried.remove(0)];
        }
        current = carried;
        current.push(idx);
        current_tokens = carried_tokens + len;
    }
    if !current.is_empty() {
        emit(&current, &mut chunks);
    }
    Ok(chunks)
}

fn truncate(sentences: &[Sentence], max: usize) -> Chunk {
    let mut tokens = Vec::new();
    let mut last = 0;
    'outer: for s in sentences {
        for tok in s.text.split_whitespace() {
            if tokens.len() == max {
                break 'outer;
            }
            tokens.push(tok);
            last = s.index;
        }
    }
    Chunk {
        token_len: tokens.len(),
        text: tokens.join(" "),
        sentence_span: (0, last),
        chunk_index: 0,
        fragment: false,
    }
}
