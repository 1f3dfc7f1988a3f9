//! Corpus diversity metrics: unique-token counts against a reference
//! vocabulary, frequency histograms, and saturation curves over growing
//! document samples.
//!
//! Tokenization is external: the metrics consume token ids plus a tag naming
//! the tokenizer. A whitespace tokenizer ships for plain-text ingestion.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token-id documents plus the tag of whatever produced the ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Vec<u32>>,
    pub tokenizer_tag: String,
}

impl Corpus {
    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// One point of a saturation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub sample_size: usize,
    pub unique_in_reference: usize,
}

/// Diversity metrics for one corpus against one reference vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityReport {
    pub tokenizer_tag: String,
    pub unique_in_reference: usize,
    pub unique_total: usize,
    pub histogram: BTreeMap<u32, u64>,
    pub saturation: Vec<SaturationPoint>,
}

/// Count of distinct corpus tokens that belong to the reference vocabulary.
pub fn diversity(corpus: &Corpus, reference: &BTreeSet<u32>) -> usize {
    let mut seen = HashSet::new();
    for doc in &corpus.documents {
        for &t in doc {
            if reference.contains(&t) {
                seen.insert(t);
            }
        }
    }
    seen.len()
}

/// Exact per-token counts; the counts sum to the corpus length.
pub fn token_histogram(corpus: &Corpus) -> BTreeMap<u32, u64> {
    let mut hist = BTreeMap::new();
    for doc in &corpus.documents {
        for &t in doc {
            *hist.entry(t).or_insert(0) += 1;
        }
    }
    hist
}

/// Unique-in-reference counts over nested prefixes of a seed-shuffled
/// document order. The same shuffle serves every size, so for ascending
/// sizes the curve is non-decreasing by construction.
pub fn saturation_curve(
    corpus: &Corpus,
    sample_sizes: &[usize],
    reference: &BTreeSet<u32>,
    seed: u64,
) -> Result<Vec<SaturationPoint>> {
    let count = corpus.documents.len();
    for &size in sample_sizes {
        if size > count {
            return Err(Error::SizeExceedsCorpus { size, count });
        }
    }
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut thresholds: Vec<usize> = sample_sizes.to_vec();
    thresholds.sort_unstable();
    thresholds.dedup();

    let mut unique_at = HashMap::with_capacity(thresholds.len());
    let mut seen = HashSet::new();
    let mut consumed = 0;
    for &size in &thresholds {
        for &doc in &order[consumed..size] {
            for &t in &corpus.documents[doc] {
                if reference.contains(&t) {
                    seen.insert(t);
                }
            }
        }
        consumed = size;
        unique_at.insert(size, seen.len());
    }

    Ok(sample_sizes
        .iter()
        .map(|&size| SaturationPoint {
            sample_size: size,
            unique_in_reference: unique_at[&size],
        })
        .collect())
}

/// Build a full report: totals, histogram, and the saturation curve at the
/// given sizes.
pub fn diversity_report(
    corpus: &Corpus,
    reference: &BTreeSet<u32>,
    sample_sizes: &[usize],
    seed: u64,
) -> Result<DiversityReport> {
    let histogram = token_histogram(corpus);
    Ok(DiversityReport {
        tokenizer_tag: corpus.tokenizer_tag.clone(),
        unique_in_reference: diversity(corpus, reference),
        unique_total: histogram.len(),
        histogram,
        saturation: saturation_curve(corpus, sample_sizes, reference, seed)?,
    })
}

/// Assigns stable token ids to whitespace-separated strings in first-seen
/// order.
#[derive(Debug, Default)]
pub struct WhitespaceTokenizer {
    ids: HashMap<String, u32>,
}

impl WhitespaceTokenizer {
    pub const TAG: &'static str = "whitespace-v1";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(&mut self, token: &str) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(token.to_string()).or_insert(next)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn vocab_size(&self) -> usize {
        self.ids.len()
    }
}

/// Tokenize plain text, one document per line, splitting on whitespace.
pub fn corpus_from_text(text: &str, tokenizer: &mut WhitespaceTokenizer) -> Corpus {
    let documents = text
        .lines()
        .map(|line| line.split_whitespace().map(|t| tokenizer.id(t)).collect())
        .collect();
    Corpus {
        documents,
        tokenizer_tag: WhitespaceTokenizer::TAG.to_string(),
    }
}

/// Parse a JSONL corpus: one `{"tokens": [ints]}` object per line.
pub fn corpus_from_jsonl(text: &str) -> Result<Corpus> {
    #[derive(Deserialize)]
    struct Doc {
        tokens: Vec<u32>,
    }
    let mut documents = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Doc = serde_json::from_str(line)?;
        documents.push(doc.tokens);
    }
    Ok(Corpus {
        documents,
        tokenizer_tag: "external-ids".to_string(),
    })
}

/// Read a newline-delimited reference vocabulary of numeric token ids.
pub fn reference_from_ids(text: &str) -> Result<BTreeSet<u32>> {
    let mut ids = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id: u32 = line
            .parse()
            .map_err(|_| Error::BadShape(format!("reference id `{line}` is not an integer")))?;
        ids.insert(id);
    }
    Ok(ids)
}

/// Read a newline-delimited reference vocabulary of text tokens, mapped
/// through the same tokenizer as the corpus.
pub fn reference_from_text(text: &str, tokenizer: &mut WhitespaceTokenizer) -> BTreeSet<u32> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| tokenizer.id(l))
        .collect()
}
