//! Span-level scoring for tag sequences, cosine scoring for embedding pairs,
//! and mean/std aggregation across languages.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{Tag, TaggedSentence};
use crate::encoder::{EncoderError, EncoderModel};
use crate::math;
use crate::phoneme::PhonemeSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityType {
    Per,
    Org,
    Loc,
}

impl EntityType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
        }
    }

    fn from_index(idx: usize) -> EntityType {
        match idx {
            0 => EntityType::Per,
            1 => EntityType::Org,
            _ => EntityType::Loc,
        }
    }
}

/// One extracted entity span; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub entity: EntityType,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    LengthMismatch { expected: usize, got: usize },
    /// Sample standard deviation needs at least two values.
    TooFewValues,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::LengthMismatch { expected, got } => {
                write!(f, "expected {expected} sentences, got {got}")
            }
            EvalError::TooFewValues => {
                write!(f, "sample standard deviation needs at least two values")
            }
        }
    }
}

impl core::error::Error for EvalError {}

/// Maximal `B-X (I-X)*` runs become spans; a type change or fresh B- breaks
/// the current run. Expects canonicalized tags.
pub fn extract_spans(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize, usize)> = None; // (entity idx, start, end)
    for (i, tag) in tags.iter().enumerate() {
        match (tag.entity(), tag.is_inside()) {
            (Some(e), false) => {
                // B-X: close anything open, start a new run.
                if let Some((entity, start, end)) = open.take() {
                    spans.push(Span {
                        entity: EntityType::from_index(entity),
                        start,
                        end,
                    });
                }
                open = Some((e, i, i));
            }
            (Some(e), true) => match open {
                Some((entity, start, _)) if entity == e => {
                    open = Some((entity, start, i));
                }
                _ => {
                    // Orphan inside tag; treat as an opener (mirrors repair).
                    if let Some((entity, start, end)) = open.take() {
                        spans.push(Span {
                            entity: EntityType::from_index(entity),
                            start,
                            end,
                        });
                    }
                    open = Some((e, i, i));
                }
            },
            (None, _) => {
                if let Some((entity, start, end)) = open.take() {
                    spans.push(Span {
                        entity: EntityType::from_index(entity),
                        start,
                        end,
                    });
                }
            }
        }
    }
    if let Some((entity, start, end)) = open {
        spans.push(Span {
            entity: EntityType::from_index(entity),
            start,
            end,
        });
    }
    spans
}

/// Inverse of [`extract_spans`] for non-overlapping span sets.
pub fn tags_of_spans(spans: &[Span], len: usize) -> Vec<Tag> {
    let mut tags = alloc::vec![Tag::Outside; len];
    for span in spans {
        for i in span.start..=span.end {
            let inside = i > span.start;
            tags[i] = match (span.entity, inside) {
                (EntityType::Per, false) => Tag::BPer,
                (EntityType::Per, true) => Tag::IPer,
                (EntityType::Org, false) => Tag::BOrg,
                (EntityType::Org, true) => Tag::IOrg,
                (EntityType::Loc, false) => Tag::BLoc,
                (EntityType::Loc, true) => Tag::ILoc,
            };
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

/// Micro-averaged exact-match span scoring over parallel sentence lists.
/// Degenerate denominators score zero rather than failing.
pub fn span_f1(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<PrecisionRecallF1, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    let mut matched = 0usize;
    let mut predicted = 0usize;
    let mut gold_total = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        predicted += p.len();
        gold_total += g.len();
        for span in p {
            if g.contains(span) {
                matched += 1;
            }
        }
    }
    let precision = if predicted == 0 {
        0.0
    } else {
        matched as f64 / predicted as f64
    };
    let recall = if gold_total == 0 {
        0.0
    } else {
        matched as f64 / gold_total as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecallF1 {
        precision,
        recall,
        f1,
        matched,
        predicted,
        gold: gold_total,
    })
}

/// Argmax tag decoding for one sentence: the prediction for each word is read
/// from the logits row of the word's first phoneme token. Logit rows must
/// cover `[BOS] tokens... [EOS]`.
pub fn decode_word_tags(
    logits: &crate::numerics::Tensor,
    encoded: &[PhonemeSequence],
) -> Result<Vec<Tag>, EvalError> {
    let expected: usize = encoded.iter().map(|s| s.ids.len()).sum::<usize>() + 2;
    if logits.rows() != expected {
        return Err(EvalError::LengthMismatch {
            expected,
            got: logits.rows(),
        });
    }
    let mut tags = Vec::with_capacity(encoded.len());
    let mut row = 1; // skip BOS
    for seq in encoded {
        let mut best = 0;
        for j in 1..logits.cols() {
            if logits.at(row, j) > logits.at(row, best) {
                best = j;
            }
        }
        tags.push(Tag::from_id(best).unwrap_or(Tag::Outside));
        row += seq.ids.len();
    }
    Ok(tags)
}

/// Gold vs predicted spans for a batch of sentences.
pub fn score_tagged_sentences(
    gold: &[TaggedSentence],
    predicted_tags: &[Vec<Tag>],
) -> Result<PrecisionRecallF1, EvalError> {
    if gold.len() != predicted_tags.len() {
        return Err(EvalError::LengthMismatch {
            expected: gold.len(),
            got: predicted_tags.len(),
        });
    }
    let gold_spans: Vec<Vec<Span>> = gold.iter().map(|s| extract_spans(&s.tags)).collect();
    let pred_spans: Vec<Vec<Span>> = predicted_tags
        .iter()
        .map(|tags| extract_spans(tags))
        .collect();
    span_f1(&gold_spans, &pred_spans)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub pair_id: usize,
    pub lang: String,
    pub word_english: String,
    pub word_target: String,
    /// Cosine of the two unit-norm embeddings; equals their dot product.
    pub cosine: f64,
}

impl SimilarityRow {
    /// Score scaled by 100, the usual reporting convention.
    pub fn percent(&self) -> f64 {
        100.0 * self.cosine
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityReport {
    pub rows: Vec<SimilarityRow>,
}

impl SimilarityReport {
    /// Construct from precomputed embeddings; the injection point used by
    /// tests that need exact geometry.
    pub fn from_embeddings(
        meta: &[(usize, String, String, String)],
        english: &[Vec<f64>],
        target: &[Vec<f64>],
    ) -> Self {
        let mut rows: Vec<SimilarityRow> = meta
            .iter()
            .zip(english.iter().zip(target))
            .map(|((pair_id, lang, we, wt), (e, t))| SimilarityRow {
                pair_id: *pair_id,
                lang: lang.clone(),
                word_english: we.clone(),
                word_target: wt.clone(),
                cosine: cosine(e, t),
            })
            .collect();
        rows.sort_by_key(|r| r.pair_id);
        Self { rows }
    }

    pub fn mean_cosine(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.cosine).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean cosine per language, sorted by language code.
    pub fn per_language_mean(&self) -> BTreeMap<String, f64> {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for row in &self.rows {
            let e = sums.entry(row.lang.clone()).or_insert((0.0, 0));
            e.0 += row.cosine;
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(lang, (sum, n))| (lang, sum / n as f64))
            .collect()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = math::sqrt(a.iter().map(|v| v * v).sum());
    let nb: f64 = math::sqrt(b.iter().map(|v| v * v).sum());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Embed both sides of every pair and score them. Requires the projection
/// head (scoring precedes stripping).
pub fn cosine_pairs(
    model: &EncoderModel,
    pairs: &[(usize, String, PhonemeSequence, PhonemeSequence, String, String)],
) -> Result<SimilarityReport, EncoderError> {
    let mut meta = Vec::with_capacity(pairs.len());
    let mut english = Vec::with_capacity(pairs.len());
    let mut target = Vec::with_capacity(pairs.len());
    for (pair_id, lang, seq_e, seq_t, word_e, word_t) in pairs {
        let e = model.embed_word(seq_e, false)?;
        let t = model.embed_word(seq_t, false)?;
        meta.push((*pair_id, lang.clone(), word_e.clone(), word_t.clone()));
        english.push(e.into_data());
        target.push(t.into_data());
    }
    Ok(SimilarityReport::from_embeddings(&meta, &english, &target))
}

/// Arithmetic mean and standard deviation over per-language scores. Sample
/// (n-1) form by default; `population` switches to the n form. A single
/// value has population deviation zero and no sample deviation.
pub fn aggregate_report(
    per_language: &BTreeMap<String, f64>,
    population: bool,
) -> Result<(f64, f64), EvalError> {
    let n = per_language.len();
    if n == 0 {
        return Err(EvalError::TooFewValues);
    }
    let mean = per_language.values().sum::<f64>() / n as f64;
    let ss: f64 = per_language.values().map(|v| (v - mean) * (v - mean)).sum();
    let std = if population {
        math::sqrt(ss / n as f64)
    } else {
        if n < 2 {
            return Err(EvalError::TooFewValues);
        }
        math::sqrt(ss / (n - 1) as f64)
    };
    Ok((mean, std))
}
