//! Corpus ingestion, character vocabulary, window extraction and batching.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Vocabulary size of the reference corpus.
pub const REFERENCE_VOCAB_SIZE: usize = 101;

const TOKEN_MAGIC: &[u8; 8] = b"CCTOK001";

/// Sorted set of distinct characters with id lookup in both directions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    ids: HashMap<char, usize>,
}

impl Vocab {
    pub fn from_chars(mut chars: Vec<char>) -> Result<Self> {
        chars.sort_unstable();
        chars.dedup();
        if chars.is_empty() {
            return Err(Error::Input("vocabulary is empty".into()));
        }
        let ids = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Ok(Vocab { chars, ids })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.ids.get(&c).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.id(c).ok_or_else(|| {
                    Error::Input(format!("character {c:?} is not in the vocabulary"))
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&i| {
                self.chars.get(i).copied().ok_or_else(|| {
                    Error::Input(format!(
                        "id {i} out of range for vocabulary of {}",
                        self.len()
                    ))
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let strings: Vec<String> = self.chars.iter().map(|c| c.to_string()).collect();
        serde_json::to_string(&strings).expect("string array serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let strings: Vec<String> = serde_json::from_str(json)
            .map_err(|e| Error::Input(format!("vocabulary JSON: {e}")))?;
        let mut chars = Vec::with_capacity(strings.len());
        for s in strings {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(Error::Input(format!(
                        "vocabulary entry {s:?} is not one character"
                    )))
                }
            }
        }
        let n = chars.len();
        let vocab = Vocab::from_chars(chars)?;
        if vocab.len() != n {
            return Err(Error::Input(
                "vocabulary JSON has duplicate or unsorted entries".into(),
            ));
        }
        Ok(vocab)
    }
}

/// Sorted set of the characters in `text`.
pub fn build_vocab(text: &str) -> Result<Vocab> {
    if text.is_empty() {
        return Err(Error::Input(
            "cannot build a vocabulary from empty text".into(),
        ));
    }
    Vocab::from_chars(text.chars().collect())
}

/// Drops Project Gutenberg header and footer boilerplate when the standard
/// `*** START OF` / `*** END OF` markers are present.
pub fn strip_gutenberg(text: &str) -> &str {
    let mut body = text;
    if let Some(pos) = body.find("*** START OF") {
        body = match body[pos..].find('\n') {
            Some(nl) => &body[pos + nl + 1..],
            None => "",
        };
    }
    if let Some(pos) = body.find("*** END OF") {
        body = &body[..pos];
    }
    body
}

/// Overlapping fixed-length windows over a token stream.
#[derive(Clone, Debug)]
pub struct SequenceSet {
    stream: Vec<u32>,
    window: usize,
    stride: usize,
    count: usize,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn get(&self, i: usize) -> &[u32] {
        let start = i * self.stride;
        &self.stream[start..start + self.window]
    }

    /// Largest token id plus one.
    pub fn id_bound(&self) -> usize {
        self.stream.iter().max().map_or(0, |&m| m as usize + 1)
    }
}

/// Windows of `window` tokens starting every `stride` tokens.
pub fn extract_sequences(stream: Vec<u32>, window: usize, stride: usize) -> Result<SequenceSet> {
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    if stream.len() < window {
        return Err(Error::Input(format!(
            "token stream of {} is shorter than the window of {window}",
            stream.len()
        )));
    }
    let count = (stream.len() - window) / stride + 1;
    Ok(SequenceSet {
        stream,
        window,
        stride,
        count,
    })
}

/// One minibatch of windows: `[batch, window]` token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub tokens: Vec<usize>,
    pub batch: usize,
    pub window: usize,
}

impl Batch {
    pub fn shape(&self) -> [usize; 2] {
        [self.batch, self.window]
    }

    /// Input positions `0..window-1` and next-character targets `1..window`.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let seq = self.window - 1;
        let mut inputs = Vec::with_capacity(self.batch * seq);
        let mut targets = Vec::with_capacity(self.batch * seq);
        for row in self.tokens.chunks(self.window) {
            inputs.extend_from_slice(&row[..seq]);
            targets.extend_from_slice(&row[1..]);
        }
        (inputs, targets)
    }
}

/// Deterministic sequence order for a whole training run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    batch_size: usize,
    order: Vec<u32>,
}

impl BatchPlan {
    pub fn steps(&self) -> usize {
        self.order.len() / self.batch_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn ids(&self, step: usize) -> &[u32] {
        &self.order[step * self.batch_size..(step + 1) * self.batch_size]
    }

    pub fn batch(&self, step: usize, sequences: &SequenceSet) -> Batch {
        let mut tokens = Vec::with_capacity(self.batch_size * sequences.window());
        for &i in self.ids(step) {
            tokens.extend(sequences.get(i as usize).iter().map(|&t| t as usize));
        }
        Batch {
            tokens,
            batch: self.batch_size,
            window: sequences.window(),
        }
    }
}

/// Shuffled batches for `n_steps` steps. Each epoch is a fresh permutation
/// drawn from the same seeded stream; a partial final batch is dropped.
pub fn make_batches(
    sequences: &SequenceSet,
    batch_size: usize,
    seed: u64,
    n_steps: usize,
) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if batch_size > sequences.len() {
        return Err(Error::Input(format!(
            "batch size {batch_size} exceeds the {} available sequences",
            sequences.len()
        )));
    }
    let per_epoch = sequences.len() / batch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u32> = (0..sequences.len() as u32).collect();
    let mut order = Vec::with_capacity(n_steps * batch_size);
    let mut step = 0;
    while step < n_steps {
        perm.shuffle(&mut rng);
        let take = per_epoch.min(n_steps - step);
        order.extend_from_slice(&perm[..take * batch_size]);
        step += take;
    }
    Ok(BatchPlan { batch_size, order })
}

/// A tokenized corpus ready for sequence extraction.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocab,
    pub stream: Vec<u32>,
    /// Hex SHA-256 of the source file bytes.
    pub hash: String,
}

impl Corpus {
    pub fn from_text(raw: &str, strip: bool) -> Result<Self> {
        let normalized = raw.replace("\r\n", "\n");
        let body = if strip {
            strip_gutenberg(&normalized)
        } else {
            &normalized
        };
        let vocab = build_vocab(body)?;
        if vocab.len() != REFERENCE_VOCAB_SIZE {
            log::warn!(
                "corpus vocabulary has {} characters (reference corpus: {}); the model follows the data",
                vocab.len(),
                REFERENCE_VOCAB_SIZE
            );
        }
        let stream = body
            .chars()
            .map(|c| vocab.id(c).expect("vocab built from this text") as u32)
            .collect();
        Ok(Corpus {
            vocab,
            stream,
            hash: sha256_hex(raw.as_bytes()),
        })
    }

    pub fn load(path: &Path, strip: bool) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Input(format!("{} is not UTF-8: {e}", path.display())))?;
        Corpus::from_text(&text, strip)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `CCTOK001`, the vocabulary JSON (u64 LE byte length, then UTF-8),
/// and the token stream (u64 LE count, then u32 LE ids).
pub fn write_token_cache(path: &Path, vocab: &Vocab, stream: &[u32]) -> Result<()> {
    let json = vocab.to_json();
    let mut buf = Vec::with_capacity(8 + 8 + json.len() + 8 + 4 * stream.len());
    buf.extend_from_slice(TOKEN_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(json.as_bytes());
    buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for id in stream {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_token_cache(path: &Path) -> Result<(Vocab, Vec<u32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m);
    if bytes.len() < 8 || &bytes[..8] != TOKEN_MAGIC {
        return Err(bad("missing CCTOK001 magic"));
    }
    let read_u64 = |at: usize| -> Result<u64> {
        bytes
            .get(at..at + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| bad("truncated length field"))
    };
    let json_len = read_u64(8)? as usize;
    let json_end = 16usize
        .checked_add(json_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated vocabulary"))?;
    let json =
        std::str::from_utf8(&bytes[16..json_end]).map_err(|_| bad("vocabulary is not UTF-8"))?;
    let vocab = Vocab::from_json(json).map_err(|e| bad(&e.to_string()))?;
    let count = read_u64(json_end)? as usize;
    let payload = &bytes[json_end + 8..];
    if payload.len() != count * 4 {
        return Err(bad(&format!(
            "expected {count} token ids, found {} bytes",
            payload.len()
        )));
    }
    let stream: Vec<u32> = payload
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if let Some(&id) = stream.iter().find(|&&id| id as usize >= vocab.len()) {
        return Err(bad(&format!(
            "token id {id} outside vocabulary of {}",
            vocab.len()
        )));
    }
    Ok((vocab, stream))
}

/// Summary printed by the `data` subcommand.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DataReport {
    pub characters: usize,
    pub vocab_size: usize,
    pub reference_vocab_size: usize,
    pub sequences: usize,
    pub window: usize,
    pub stride: usize,
    pub corpus_sha256: String,
}
