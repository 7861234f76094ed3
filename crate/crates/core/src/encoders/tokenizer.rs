use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const BYTE_TOKENS: usize = 256;

/// Whitespace tokenizer with byte fallback.
///
/// The vocabulary always starts with the 256 byte tokens `<0x00>`..`<0xFF>`,
/// so every caption is encodable: words missing from the vocabulary are
/// spelled out as their UTF-8 bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

impl Tokenizer {
    /// Byte tokens plus up to `max_words` words, most frequent first
    /// (ties by first occurrence).
    pub fn build<'a>(captions: impl IntoIterator<Item = &'a str>, max_words: usize) -> Self {
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut order = 0usize;
        for caption in captions {
            for word in caption.split_whitespace() {
                let entry = counts.entry(word).or_insert((0, order));
                entry.0 += 1;
                order += 1;
            }
        }
        let mut words: Vec<(&str, usize, usize)> =
            counts.into_iter().map(|(w, (c, first))| (w, c, first)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

        let mut tokens: Vec<String> = (0..=255u8).map(byte_token).collect();
        tokens.extend(
            words
                .into_iter()
                .map(|(w, _, _)| w.to_owned())
                .filter(|w| !w.starts_with("<0x"))
                .take(max_words),
        );
        Self::from_tokens(tokens).expect("generated vocabulary is well formed")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < BYTE_TOKENS || (0..=255u8).any(|b| tokens[b as usize] != byte_token(b)) {
            return Err(Error::invalid(
                "vocabulary must start with the 256 byte tokens",
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Tokenizer { tokens, index })
    }

    /// One token per line; the line number is the id.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Token ids for `text`, truncated to `max_length`. Empty input yields an
    /// empty vector.
    pub fn encode(&self, text: &str, max_length: usize) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            match self.index.get(word) {
                Some(&id) => ids.push(id),
                None => ids.extend(word.bytes().map(|b| b as usize)),
            }
            if ids.len() >= max_length {
                ids.truncate(max_length);
                break;
            }
        }
        ids
    }
}
