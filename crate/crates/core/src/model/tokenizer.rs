use super::{ModelConfig, ModelError, PaddingSide, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
/// Ids 3..=12 are the ASCII digits `0`..`9`.
const DIGIT_BASE: u32 = 3;
pub const FIRST_WORD_ID: u32 = 13;

/// Right- or left-padded batch of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedBatch {
    pub token_ids: Array2<u32>,
    pub attention_mask: Array2<u8>,
    pub lengths: Vec<usize>,
    pub padding_side: PaddingSide,
}

impl TokenizedBatch {
    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.token_ids.ncols()
    }

    /// Valid token ids of row `i`, in order.
    pub fn row_tokens(&self, i: usize) -> Vec<u32> {
        self.token_ids
            .row(i)
            .iter()
            .zip(self.attention_mask.row(i))
            .filter(|(_, &m)| m == 1)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Builds a padded batch from already-tokenized sequences.
    pub fn from_sequences(seqs: &[Vec<u32>], padding_side: PaddingSide) -> Self {
        let t_max = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut token_ids = Array2::from_elem((seqs.len(), t_max), PAD_ID);
        let mut attention_mask = Array2::zeros((seqs.len(), t_max));
        for (i, seq) in seqs.iter().enumerate() {
            let offset = match padding_side {
                PaddingSide::Right => 0,
                PaddingSide::Left => t_max - seq.len(),
            };
            for (j, &tok) in seq.iter().enumerate() {
                token_ids[[i, offset + j]] = tok;
                attention_mask[[i, offset + j]] = 1;
            }
        }
        Self {
            token_ids,
            attention_mask,
            lengths: seqs.iter().map(Vec::len).collect(),
            padding_side,
        }
    }

    /// Rows `range` of this batch, re-padded to their own longest sequence.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        let seqs: Vec<Vec<u32>> = range.map(|i| self.row_tokens(i)).collect();
        Self::from_sequences(&seqs, self.padding_side)
    }
}

/// Deterministic word-level tokenizer with hashed vocabulary.
///
/// Splits text into `<|special|>` markers, alphabetic runs, single digits and
/// single punctuation characters. Every sequence starts with BOS. Words map to
/// `FIRST_WORD_ID + fnv1a(word) mod (vocab_size - FIRST_WORD_ID)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTokenizer {
    vocab_size: u32,
}

impl WordTokenizer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > FIRST_WORD_ID as usize, "vocab too small for word ids");
        Self { vocab_size: vocab_size as u32 }
    }

    pub fn for_config(config: &ModelConfig) -> Self {
        Self::new(config.vocab_size)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size as usize
    }

    fn word_id(&self, word: &str) -> u32 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        FIRST_WORD_ID + (h % u64::from(self.vocab_size - FIRST_WORD_ID)) as u32
    }

    /// Token ids for one text, BOS included.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = vec![BOS_ID];
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c == '<' && chars.get(i + 1) == Some(&'|') {
                // special marker `<|...|>`; falls through to punctuation if unterminated
                let close = (i + 2..chars.len().saturating_sub(1))
                    .find(|&j| chars[j] == '|' && chars[j + 1] == '>');
                match close {
                    Some(j) => {
                        let marker: String = chars[i..j + 2].iter().collect();
                        ids.push(self.word_id(&marker));
                        i = j + 2;
                    }
                    None => {
                        ids.push(self.word_id("<"));
                        i += 1;
                    }
                }
            } else if c.is_ascii_digit() {
                ids.push(DIGIT_BASE + c.to_digit(10).unwrap());
                i += 1;
            } else if c.is_alphabetic() {
                let start = i;
                while i < chars.len() && chars[i].is_alphabetic() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                ids.push(self.word_id(&word));
            } else {
                let mut buf = [0u8; 4];
                ids.push(self.word_id(c.encode_utf8(&mut buf)));
                i += 1;
            }
        }
        ids
    }

    /// Renders ids back to text. Digits decode to themselves; other word ids
    /// decode to a letter-only placeholder so they never parse as numbers.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut pieces = Vec::new();
        for &id in ids {
            match id {
                PAD_ID | BOS_ID | EOS_ID => {}
                d if (DIGIT_BASE..FIRST_WORD_ID).contains(&d) => {
                    pieces.push(char::from(b'0' + (d - DIGIT_BASE) as u8).to_string())
                }
                w => {
                    let mut n = w - FIRST_WORD_ID;
                    let mut s = String::from("w");
                    loop {
                        s.push(char::from(b'a' + (n % 26) as u8));
                        n /= 26;
                        if n == 0 {
                            break;
                        }
                    }
                    pieces.push(s);
                }
            }
        }
        pieces.join(" ")
    }

    /// Tokenizes and pads a batch of texts.
    pub fn tokenize(&self, texts: &[impl AsRef<str>], config: &ModelConfig) -> Result<TokenizedBatch> {
        if texts.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut seqs = Vec::with_capacity(texts.len());
        for (index, text) in texts.iter().enumerate() {
            let text = text.as_ref();
            if text.trim().is_empty() {
                return Err(ModelError::EmptyText { index });
            }
            let ids = self.encode(text);
            if ids.len() > config.max_seq_len {
                return Err(ModelError::TextTooLong {
                    index,
                    len: ids.len(),
                    max: config.max_seq_len,
                });
            }
            seqs.push(ids);
        }
        Ok(TokenizedBatch::from_sequences(&seqs, config.padding_side))
    }
}
