//! Bridges between parsed corpora and the trainer/evaluator: phonemization,
//! id encoding, target alignment, and pair-level cosine metrics.

use ipac_core::data::{align_tags, CognatePairRecord, TaggedSentence};
use ipac_core::encoder::EncoderModel;
use ipac_core::eval::{cosine, decode_word_tags, score_tagged_sentences, PrecisionRecallF1};
use ipac_core::phoneme::{tokenize, G2pTable, PhonemeSequence, Vocabulary, BOS, EOS};
use ipac_core::trainer::{NerExample, PairExample};

use crate::error::Result;

/// Encode both IPA sides of each record (no sentinels; the embed path adds
/// them).
pub fn encode_pairs(records: &[CognatePairRecord], vocab: &Vocabulary) -> Vec<PairExample> {
    records
        .iter()
        .map(|r| PairExample {
            ids_english: vocab.encode(&tokenize(&r.ipa_english), false),
            ids_target: vocab.encode(&tokenize(&r.ipa_target), false),
        })
        .collect()
}

/// Per-word phoneme sequences for a sentence, via the table.
pub fn phonemize_sentence(
    sentence: &TaggedSentence,
    table: &G2pTable,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<Vec<PhonemeSequence>> {
    let mut encoded = Vec::with_capacity(sentence.words.len());
    for word in &sentence.words {
        let ipa = table.lookup(word, lang)?;
        encoded.push(vocab.sequence(ipa));
    }
    Ok(encoded)
}

/// Sentence-level ids `[BOS] tokens... [EOS]` from per-word sequences.
pub fn assemble_ids(encoded: &[PhonemeSequence]) -> Vec<usize> {
    let total: usize = encoded.iter().map(|s| s.ids.len()).sum();
    let mut ids = Vec::with_capacity(total + 2);
    ids.push(BOS);
    for seq in encoded {
        ids.extend_from_slice(&seq.ids);
    }
    ids.push(EOS);
    ids
}

/// Full supervised example: phonemize, encode, align targets.
pub fn encode_ner_examples(
    sentences: &[TaggedSentence],
    table: &G2pTable,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<Vec<NerExample>> {
    let mut out = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let encoded = phonemize_sentence(sentence, table, lang, vocab)?;
        let targets = align_tags(sentence, &encoded)?;
        out.push(NerExample {
            ids: assemble_ids(&encoded),
            targets,
        });
    }
    Ok(out)
}

/// Zero-shot span scoring of a tagged corpus: predict per-word tags from the
/// first-token logits, then micro span F1 against gold.
pub fn evaluate_ner(
    model: &EncoderModel,
    sentences: &[TaggedSentence],
    table: &G2pTable,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<PrecisionRecallF1> {
    let mut predictions = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let encoded = phonemize_sentence(sentence, table, lang, vocab)?;
        let ids = assemble_ids(&encoded);
        let logits = model.ner_logits(&ids)?;
        predictions.push(decode_word_tags(&logits, &encoded)?);
    }
    Ok(score_tagged_sentences(sentences, &predictions)?)
}

/// Positive/negative cosine statistics over encoded pairs: the mean cosine of
/// matched pairs versus the mean over all mismatched (i != j) combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCosineStats {
    pub mean_positive: f64,
    pub mean_mismatched: f64,
}

impl PairCosineStats {
    pub fn gap(&self) -> f64 {
        self.mean_positive - self.mean_mismatched
    }
}

pub fn pair_cosine_stats(model: &EncoderModel, pairs: &[PairExample]) -> Result<PairCosineStats> {
    let mut english = Vec::with_capacity(pairs.len());
    let mut target = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let seq_e = PhonemeSequence {
            segments: Vec::new(),
            ids: pair.ids_english.clone(),
        };
        let seq_t = PhonemeSequence {
            segments: Vec::new(),
            ids: pair.ids_target.clone(),
        };
        english.push(model.embed_word(&seq_e, false)?.into_data());
        target.push(model.embed_word(&seq_t, false)?.into_data());
    }
    let n = english.len();
    let mut pos = 0.0;
    for i in 0..n {
        pos += cosine(&english[i], &target[i]);
    }
    let mean_positive = pos / n as f64;
    let mut neg = 0.0;
    let mut neg_count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                neg += cosine(&english[i], &target[j]);
                neg_count += 1;
            }
        }
    }
    let mean_mismatched = if neg_count == 0 {
        0.0
    } else {
        neg / neg_count as f64
    };
    Ok(PairCosineStats {
        mean_positive,
        mean_mismatched,
    })
}
