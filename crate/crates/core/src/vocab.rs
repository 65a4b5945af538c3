//! Word-level tokenizer and vocabulary shared by every model.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
/// Separates a context paragraph from its question.
pub const DELIM: &str = "<qg>";
pub const NEWLINE: &str = "<newline>";

/// Special tokens in id order. They always occupy ids `0..SPECIALS.len()`.
pub const SPECIALS: [&str; 6] = [PAD, BOS, EOS, UNK, DELIM, NEWLINE];

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;
pub const DELIM_ID: TokenId = 4;
pub const NEWLINE_ID: TokenId = 5;

pub fn is_special(token: &str) -> bool {
    SPECIALS.contains(&token)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercases and splits on whitespace and punctuation.
///
/// Every punctuation character becomes its own token, apostrophes between
/// letters stay inside the word, a line break becomes [`NEWLINE`], and the
/// literal surfaces of the special tokens (`<newline>`, `<qg>`, ...) are kept
/// whole so that `tokenize(tokens.join("")) == tokens`.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    let mut i = 0;
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(core::mem::take(word));
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '<' {
            if let Some(special) = special_at(&chars[i..]) {
                flush(&mut word, &mut out);
                out.push(special.to_string());
                i += special.chars().count();
                continue;
            }
        }
        if c == '\n' {
            flush(&mut word, &mut out);
            out.push(NEWLINE.to_string());
        } else if c.is_whitespace() {
            flush(&mut word, &mut out);
        } else if is_word_char(c) {
            word.extend(c.to_lowercase());
        } else if c == '\''
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| is_word_char(*n))
        {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.extend(c.to_lowercase().map(|l| l.to_string()));
        }
        i += 1;
    }
    flush(&mut word, &mut out);
    out
}

fn special_at(chars: &[char]) -> Option<&'static str> {
    SPECIALS.iter().copied().find(|s| {
        let n = s.chars().count();
        chars.len() >= n && s.chars().zip(chars).all(|(a, b)| a == b.to_ascii_lowercase())
    })
}

/// Joins tokens back into text, turning [`NEWLINE`] into a line break.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        if tok == NEWLINE {
            out.push('\n');
            continue;
        }
        if !out.is_empty() && !out.ends_with('\n') {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Dense bijection between tokens and ids with the six specials first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: BTreeMap<String, TokenId>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::from_tokens(tokens.iter().map(String::as_str))
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.id_to_token
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_tokens(core::iter::empty())
    }
}

impl Vocab {
    /// Builds a vocabulary from an explicit token list. Specials are placed
    /// first regardless of where (or whether) they appear; duplicates are
    /// dropped.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab {
            id_to_token: Vec::new(),
            token_to_id: BTreeMap::new(),
        };
        for s in SPECIALS {
            v.push(s);
        }
        for t in tokens {
            v.push(t);
        }
        v
    }

    fn push(&mut self, token: &str) {
        if self.token_to_id.contains_key(token) {
            return;
        }
        let id = self.id_to_token.len() as TokenId;
        self.id_to_token.push(token.to_string());
        self.token_to_id.insert(token.to_string(), id);
    }

    /// Counts tokens and keeps those seen at least `min_count` times, ordered
    /// by frequency (descending) and then lexicographically.
    pub fn build<I, T, S>(token_streams: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let min_count = min_count.max(1);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for stream in token_streams {
            for tok in stream {
                let tok = tok.as_ref();
                if is_special(tok) {
                    continue;
                }
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        // BTreeMap iteration is already lexicographic; a stable sort keeps it.
        kept.sort_by_key(|k| core::cmp::Reverse(k.1));
        Vocab::from_tokens(kept.iter().map(|(t, _)| t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(UNK)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, TokenId)> {
        self.id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as TokenId))
    }
}
