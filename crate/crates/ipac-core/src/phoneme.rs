//! IPA string handling: segmentation, vocabulary construction, id encoding,
//! and a table-backed grapheme-to-phoneme interface.
//!
//! A phoneme token is one whitespace-delimited IPA segment; word-level IPA
//! strings are space-separated segment lists.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Fixed special ids. Checkpoints rely on this layout never moving.
pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const SPECIAL_SYMBOLS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// A tokenized IPA string: segments plus their vocabulary ids (no sentinels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    pub segments: Vec<String>,
    pub ids: Vec<usize>,
}

/// Split an IPA string on runs of whitespace, preserving segment order.
/// All-whitespace input yields an empty list; that is the caller's signal.
pub fn tokenize(ipa_text: &str) -> Vec<String> {
    ipa_text.split_whitespace().map(|s| s.to_string()).collect()
}

/// Join segments back into the canonical single-space form.
pub fn join_segments(segments: &[String]) -> String {
    segments.join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VocabError {
    /// build() saw no segments at all.
    EmptyCorpus,
}

impl fmt::Display for VocabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VocabError::EmptyCorpus => write!(f, "vocabulary built from an empty corpus"),
        }
    }
}

impl core::error::Error for VocabError {}

/// Bijective symbol/id mapping with the four specials pinned at ids 0-3.
/// Corpus symbols are assigned by descending frequency, ties broken by
/// ascending lexicographic order, so construction is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbol_to_id: BTreeMap<String, usize>,
    id_to_symbol: Vec<String>,
}

impl Vocabulary {
    pub fn build<'a, I>(corpus: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&'a str, u64> = BTreeMap::new();
        let mut seen_any = false;
        for segments in corpus {
            for seg in segments {
                seen_any = true;
                // Reserved surface forms resolve to their special id.
                if SPECIAL_SYMBOLS.contains(&seg.as_str()) {
                    continue;
                }
                *counts.entry(seg.as_str()).or_insert(0) += 1;
            }
        }
        if !seen_any {
            return Err(VocabError::EmptyCorpus);
        }
        let mut ordered: Vec<(&str, u64)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_symbol: Vec<String> =
            SPECIAL_SYMBOLS.iter().map(|s| s.to_string()).collect();
        let mut symbol_to_id: BTreeMap<String, usize> = SPECIAL_SYMBOLS
            .iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), i))
            .collect();
        for (sym, _) in ordered {
            let id = id_to_symbol.len();
            id_to_symbol.push(sym.to_string());
            symbol_to_id.insert(sym.to_string(), id);
        }
        Ok(Self {
            symbol_to_id,
            id_to_symbol,
        })
    }

    /// Rebuild from the on-disk symbol list (corpus symbols only, in id order
    /// starting at id 4).
    pub fn from_symbol_list<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut id_to_symbol: Vec<String> =
            SPECIAL_SYMBOLS.iter().map(|s| s.to_string()).collect();
        let mut symbol_to_id: BTreeMap<String, usize> = SPECIAL_SYMBOLS
            .iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), i))
            .collect();
        for sym in symbols {
            let sym = sym.as_ref();
            if symbol_to_id.contains_key(sym) {
                continue;
            }
            let id = id_to_symbol.len();
            id_to_symbol.push(sym.to_string());
            symbol_to_id.insert(sym.to_string(), id);
        }
        Self {
            symbol_to_id,
            id_to_symbol,
        }
    }

    /// Corpus symbols in id order (id 4 onward), as stored on disk.
    pub fn corpus_symbols(&self) -> &[String] {
        &self.id_to_symbol[SPECIAL_SYMBOLS.len()..]
    }

    pub fn len(&self) -> usize {
        self.id_to_symbol.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.symbol_to_id.get(symbol).copied()
    }

    pub fn symbol_of(&self, id: usize) -> Option<&str> {
        self.id_to_symbol.get(id).map(|s| s.as_str())
    }

    /// Map segments to ids, falling back to UNK for unknown symbols. With
    /// `add_sentinels` the output is wrapped as `[BOS, ..., EOS]`.
    pub fn encode(&self, segments: &[String], add_sentinels: bool) -> Vec<usize> {
        let mut ids = Vec::with_capacity(segments.len() + 2);
        if add_sentinels {
            ids.push(BOS);
        }
        for seg in segments {
            ids.push(self.id_of(seg).unwrap_or(UNK));
        }
        if add_sentinels {
            ids.push(EOS);
        }
        ids
    }

    /// Inverse of [`encode`] over known ids, skipping sentinels and padding.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD && id != BOS && id != EOS)
            .filter_map(|&id| self.symbol_of(id).map(|s| s.to_string()))
            .collect()
    }

    /// Tokenize an IPA string and resolve its ids (no sentinels).
    pub fn sequence(&self, ipa_text: &str) -> PhonemeSequence {
        let segments = tokenize(ipa_text);
        let ids = self.encode(&segments, false);
        PhonemeSequence { segments, ids }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum G2pError {
    /// No table entry for (word, lang). Unknown keys are surfaced, never
    /// silently dropped.
    UnknownWord { word: String, lang: String },
}

impl fmt::Display for G2pError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            G2pError::UnknownWord { word, lang } => {
                write!(f, "no grapheme-to-phoneme entry for {word:?} ({lang})")
            }
        }
    }
}

impl core::error::Error for G2pError {}

/// Table-backed grapheme-to-phoneme mapping, keyed by (language, grapheme).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct G2pTable {
    entries: BTreeMap<(String, String), String>,
}

impl G2pTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lang: &str, word: &str, ipa: &str) {
        self.entries
            .insert((lang.to_string(), word.to_string()), ipa.to_string());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The stored IPA string, verbatim.
    pub fn lookup(&self, word: &str, lang: &str) -> Result<&str, G2pError> {
        self.entries
            .get(&(lang.to_string(), word.to_string()))
            .map(|s| s.as_str())
            .ok_or_else(|| G2pError::UnknownWord {
                word: word.to_string(),
                lang: lang.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.entries
            .iter()
            .map(|((lang, word), ipa)| (lang.as_str(), word.as_str(), ipa.as_str()))
    }
}
