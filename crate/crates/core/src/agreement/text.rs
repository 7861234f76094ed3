use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EXTRA_PUNCTUATION: &[char] = &[
    '\u{0964}', '\u{0965}', '\u{201C}', '\u{201D}', '\u{2018}', '\u{2019}', '\u{2026}',
    '\u{2014}', '\u{2013}', '\u{00AB}', '\u{00BB}',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeOptions {
    /// Trim punctuation from both ends of each token. Tokens that are all
    /// punctuation disappear.
    pub strip_edge_punctuation: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        TokenizeOptions {
            strip_edge_punctuation: true,
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Whitespace tokenization, no case folding.
pub fn tokenize(caption: &str, opts: TokenizeOptions) -> Vec<&str> {
    caption
        .split_whitespace()
        .map(|w| {
            if opts.strip_edge_punctuation {
                w.trim_matches(is_punct)
            } else {
                w
            }
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// The `n` most frequent words, most frequent first; ties go to the word
/// seen first.
pub fn top_words<S: AsRef<str>>(captions: &[S], n: usize, opts: TokenizeOptions) -> Vec<String> {
    let mut freq: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for c in captions {
        for w in tokenize(c.as_ref(), opts) {
            let e = freq.entry(w).or_insert((0, order));
            e.0 += 1;
            order += 1;
        }
    }
    let mut words: Vec<(&str, usize, usize)> = freq.into_iter().map(|(w, (c, f))| (w, c, f)).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    words.into_iter().take(n).map(|(w, _, _)| w.to_string()).collect()
}

/// Jaccard similarity of the top-`n` word sets of two caption collections.
pub fn jaccard_top_words<S: AsRef<str>>(
    captions_a: &[S],
    captions_b: &[S],
    n: usize,
    opts: TokenizeOptions,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if captions_a.is_empty() || captions_b.is_empty() {
        return Err(Error::invalid("caption collections must be non-empty"));
    }
    let a: HashSet<String> = top_words(captions_a, n, opts).into_iter().collect();
    let b: HashSet<String> = top_words(captions_b, n, opts).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Err(Error::invalid("neither collection contains any words"));
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalStats {
    pub captions: usize,
    pub total_words: usize,
    pub unique_words: usize,
    pub mean_words: f64,
}

pub fn lexical_stats<S: AsRef<str>>(captions: &[S], opts: TokenizeOptions) -> Result<LexicalStats> {
    if captions.is_empty() {
        return Err(Error::invalid("no captions"));
    }
    let mut unique = HashSet::new();
    let mut total = 0;
    for c in captions {
        let words = tokenize(c.as_ref(), opts);
        total += words.len();
        unique.extend(words);
    }
    Ok(LexicalStats {
        captions: captions.len(),
        total_words: total,
        unique_words: unique.len(),
        mean_words: total as f64 / captions.len() as f64,
    })
}

/// Caption counts per word-count bin; bin `k` covers `[k·w, (k+1)·w)`.
pub fn length_histogram<S: AsRef<str>>(
    captions: &[S],
    bin_width: usize,
    opts: TokenizeOptions,
) -> Result<BTreeMap<usize, usize>> {
    if bin_width == 0 {
        return Err(Error::invalid("bin width must be >= 1"));
    }
    let mut bins = BTreeMap::new();
    for c in captions {
        *bins.entry(tokenize(c.as_ref(), opts).len() / bin_width).or_insert(0) += 1;
    }
    Ok(bins)
}
