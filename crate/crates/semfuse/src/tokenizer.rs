//! Wordpiece tokenization with an exact word -> subword span map.
//!
//! Words are whitespace tokens of the (lowercased) input; each is segmented
//! by greedy longest-match against the vocabulary, continuation pieces
//! carrying a "##" prefix. The span map is what lets word-level role labels
//! be aligned with subword-level encoder states downstream.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// A word that would segment into more pieces than this becomes [UNK],
/// bounding the convolution input downstream.
pub const MAX_PIECES_PER_WORD: usize = 32;

pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
    cls: usize,
    sep: usize,
}

impl Vocab {
    /// Line number = id; line 0 must be [PAD]; [UNK]/[CLS]/[SEP] required.
    pub fn parse(lines: impl IntoIterator<Item = String>) -> Result<Vocab> {
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in lines.into_iter().enumerate() {
            let tok = line.trim_end_matches(['\r', '\n']).to_string();
            if tok.is_empty() {
                return Err(Error::Vocab(format!("line {i}: empty token")));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("line {i}: token contains whitespace")));
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::Vocab(format!("line {i}: duplicate token {tok:?}")));
            }
            entries.push(tok);
        }
        if entries.first().map(String::as_str) != Some(PAD) {
            return Err(Error::Vocab(format!("line 0 must be {PAD}")));
        }
        let need = |index: &HashMap<String, usize>, t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing reserved token {t}")))
        };
        let unk = need(&index, UNK)?;
        let cls = need(&index, CLS)?;
        let sep = need(&index, SEP)?;
        Ok(Vocab {
            entries,
            index,
            unk,
            cls,
            sep,
        })
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path)?;
        Vocab::parse(text.lines().map(str::to_string))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.entries.join("\n");
        out.push('\n');
        fs::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.entries[id]
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    pub fn cls_id(&self) -> usize {
        self.cls
    }

    pub fn sep_id(&self) -> usize {
        self.sep
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub words: Vec<String>,
    /// Subword ids including the leading [CLS] and trailing [SEP].
    pub subwords: Vec<usize>,
    /// Per-word (start, length) into `subwords`. [`tokenize`] never gives
    /// specials a span; assembled model layouts treat them as one-piece
    /// words so every row of the pooled output has an owner.
    pub spans: Vec<(usize, usize)>,
    pub special_positions: Vec<usize>,
}

impl TokenizedSentence {
    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_subwords(&self) -> usize {
        self.subwords.len()
    }

    /// Subword ids without the surrounding specials.
    pub fn body(&self) -> &[usize] {
        &self.subwords[1..self.subwords.len() - 1]
    }

    pub fn piece_strings<'v>(&self, vocab: &'v Vocab) -> Vec<&'v str> {
        self.subwords.iter().map(|&id| vocab.token(id)).collect()
    }
}

/// Greedy longest-match segmentation of one word, without specials.
/// Empty result means the word has no valid segmentation.
fn segment_word(word: &str, vocab: &Vocab) -> Vec<usize> {
    let mut pieces = Vec::new();
    let bytes = word.as_bytes();
    let mut start = 0;
    while start < bytes.len() {
        let mut found = None;
        let mut end = bytes.len();
        while end > start {
            if !word.is_char_boundary(end) {
                end -= 1;
                continue;
            }
            let piece = &word[start..end];
            let key = if start == 0 {
                piece.to_string()
            } else {
                format!("##{piece}")
            };
            if let Some(id) = vocab.id_of(&key) {
                found = Some((id, end));
                break;
            }
            end -= 1;
        }
        match found {
            Some((id, e)) => {
                pieces.push(id);
                start = e;
            }
            None => return Vec::new(),
        }
        if pieces.len() > MAX_PIECES_PER_WORD {
            return Vec::new();
        }
    }
    pieces
}

/// Tokenize one whitespace-pre-split sentence. Output carries [CLS] at
/// position 0 and [SEP] at the end; every word maps to one contiguous span
/// of at least one piece ([UNK] when unsegmentable or over the piece cap).
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenizedSentence> {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return Err(Error::EmptyInput("tokenize: no words in sentence"));
    }
    let mut subwords = vec![vocab.cls_id()];
    let mut spans = Vec::with_capacity(words.len());
    for w in &words {
        let pieces = segment_word(w, vocab);
        let start = subwords.len();
        if pieces.is_empty() {
            subwords.push(vocab.unk_id());
            spans.push((start, 1));
        } else {
            spans.push((start, pieces.len()));
            subwords.extend(pieces);
        }
    }
    let sep_pos = subwords.len();
    subwords.push(vocab.sep_id());
    Ok(TokenizedSentence {
        words,
        subwords,
        spans,
        special_positions: vec![0, sep_pos],
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    pub mask: Vec<bool>,
}

/// Assemble `[CLS] a [SEP]` or `[CLS] a [SEP] b [SEP]`, truncate to
/// `max_len`, pad with [PAD]. Overflow removes trailing pieces from the
/// strictly longer segment; ties remove from the second. Segment ids are 0
/// through the first [SEP], 1 after; padding gets segment 0 and mask 0.
pub fn encode_pair(
    a: &TokenizedSentence,
    b: Option<&TokenizedSentence>,
    max_len: usize,
    vocab: &Vocab,
) -> Result<Encoded> {
    let n_special = if b.is_some() { 3 } else { 2 };
    if max_len < n_special {
        return Err(Error::Degenerate {
            what: "encode_pair",
            msg: format!("max_len {max_len} cannot hold {n_special} special tokens"),
        });
    }
    let mut seg_a: Vec<usize> = a.body().to_vec();
    let mut seg_b: Vec<usize> = b.map(|s| s.body().to_vec()).unwrap_or_default();
    let budget = max_len - n_special;
    while seg_a.len() + seg_b.len() > budget {
        if seg_a.len() > seg_b.len() {
            seg_a.pop();
        } else {
            seg_b.pop();
        }
    }

    let mut ids = Vec::with_capacity(max_len);
    let mut segments = Vec::with_capacity(max_len);
    ids.push(vocab.cls_id());
    ids.extend(&seg_a);
    ids.push(vocab.sep_id());
    segments.resize(ids.len(), 0);
    if b.is_some() {
        ids.extend(&seg_b);
        ids.push(vocab.sep_id());
        segments.resize(ids.len(), 1);
    }
    let real = ids.len();
    ids.resize(max_len, vocab.pad_id());
    segments.resize(max_len, 0);
    let mut mask = vec![true; real];
    mask.resize(max_len, false);
    Ok(Encoded {
        ids,
        segments,
        mask,
    })
}
