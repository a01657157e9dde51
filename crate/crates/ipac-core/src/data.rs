//! Cognate pair records, BIO-tagged sentences, per-language sampling caps,
//! deterministic batching, and phoneme-level label alignment.
//!
//! Parsing works on in-memory text; file IO lives in the companion crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::numerics::IGNORE_INDEX;
use crate::phoneme::PhonemeSequence;
use crate::rng::{mix, Rng};

/// The ten source languages, by ISO 639-3 code.
pub const LANGS: [&str; 10] = [
    "swa", "ind", "hin", "cmn", "ara", "vie", "tha", "tam", "tur", "kor",
];

pub const CONLIPA_HEADER: &str = "lang\tgrapheme_target\tgrapheme_english\tipa_target\tipa_english";

/// One cognate/loanword pair row: language plus the four text components
/// (target grapheme, English grapheme, target IPA, English IPA).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CognatePairRecord {
    pub lang: String,
    pub grapheme_target: String,
    pub grapheme_english: String,
    pub ipa_target: String,
    pub ipa_english: String,
}

/// The seven-tag BIO scheme over person, organisation, and location spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tag {
    BPer,
    IPer,
    BOrg,
    IOrg,
    BLoc,
    ILoc,
    Outside,
}

impl Tag {
    pub const ALL: [Tag; 7] = [
        Tag::BPer,
        Tag::IPer,
        Tag::BOrg,
        Tag::IOrg,
        Tag::BLoc,
        Tag::ILoc,
        Tag::Outside,
    ];

    pub fn id(&self) -> usize {
        match self {
            Tag::BPer => 0,
            Tag::IPer => 1,
            Tag::BOrg => 2,
            Tag::IOrg => 3,
            Tag::BLoc => 4,
            Tag::ILoc => 5,
            Tag::Outside => 6,
        }
    }

    pub fn from_id(id: usize) -> Option<Tag> {
        Tag::ALL.get(id).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::BPer => "B-PER",
            Tag::IPer => "I-PER",
            Tag::BOrg => "B-ORG",
            Tag::IOrg => "I-ORG",
            Tag::BLoc => "B-LOC",
            Tag::ILoc => "I-LOC",
            Tag::Outside => "O",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Tag::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    /// The B- form of an inside tag; identity otherwise.
    pub fn opening(&self) -> Tag {
        match self {
            Tag::IPer => Tag::BPer,
            Tag::IOrg => Tag::BOrg,
            Tag::ILoc => Tag::BLoc,
            other => *other,
        }
    }

    pub fn is_inside(&self) -> bool {
        matches!(self, Tag::IPer | Tag::IOrg | Tag::ILoc)
    }

    /// Entity type index shared by the B- and I- forms; None for O.
    pub fn entity(&self) -> Option<usize> {
        match self {
            Tag::BPer | Tag::IPer => Some(0),
            Tag::BOrg | Tag::IOrg => Some(1),
            Tag::BLoc | Tag::ILoc => Some(2),
            Tag::Outside => None,
        }
    }
}

/// Words with one BIO tag each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<Tag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataError {
    ParseError { line: usize, message: String },
    InvalidLang { line: usize, lang: String },
    EmptyField { line: usize, field: &'static str },
    UnknownTag { line: usize, tag: String },
    EmptySentence,
    LengthMismatch { expected: usize, got: usize },
    CapExceedsAvailable { lang: String, cap: usize, available: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::ParseError { line, message } => write!(f, "line {line}: {message}"),
            DataError::InvalidLang { line, lang } => {
                write!(f, "line {line}: unknown language code {lang:?}")
            }
            DataError::EmptyField { line, field } => {
                write!(f, "line {line}: empty {field} field")
            }
            DataError::UnknownTag { line, tag } => {
                write!(f, "line {line}: unknown tag {tag:?}")
            }
            DataError::EmptySentence => write!(f, "no sentences found"),
            DataError::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            DataError::CapExceedsAvailable {
                lang,
                cap,
                available,
            } => write!(
                f,
                "cap {cap} for {lang} exceeds the {available} available records"
            ),
        }
    }
}

impl core::error::Error for DataError {}

/// Per-language record caps with a selection seed. Selection is uniform
/// without replacement and deterministic for a fixed seed; uncapped
/// languages pass through untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPolicy {
    caps: BTreeMap<String, usize>,
    pub seed: u64,
}

impl SamplingPolicy {
    /// No caps at all.
    pub fn unlimited(seed: u64) -> Self {
        Self {
            caps: BTreeMap::new(),
            seed,
        }
    }

    /// The default policy: Korean capped at 512, everything else unlimited.
    pub fn standard(seed: u64) -> Self {
        let mut caps = BTreeMap::new();
        caps.insert("kor".to_string(), 512);
        Self { caps, seed }
    }

    pub fn with_cap(mut self, lang: &str, cap: usize) -> Self {
        self.caps.insert(lang.to_string(), cap);
        self
    }

    pub fn cap_for(&self, lang: &str) -> Option<usize> {
        self.caps.get(lang).copied()
    }

    /// Fails when a cap asks for more records than the corpus holds.
    pub fn check_available(&self, counts: &BTreeMap<String, usize>) -> Result<(), DataError> {
        for (lang, &cap) in &self.caps {
            let available = counts.get(lang).copied().unwrap_or(0);
            if cap > available {
                return Err(DataError::CapExceedsAvailable {
                    lang: lang.clone(),
                    cap,
                    available,
                });
            }
        }
        Ok(())
    }
}

/// Parse cognate pair rows from tab-separated text. The first non-comment
/// line must be the header; `#` lines are comments; every field must be
/// non-empty and the language must be one of [`LANGS`].
pub fn parse_conlipa(text: &str) -> Result<Vec<CognatePairRecord>, DataError> {
    let mut records = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if raw != CONLIPA_HEADER {
                return Err(DataError::ParseError {
                    line: line_no,
                    message: format!("expected header {CONLIPA_HEADER:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(DataError::ParseError {
                line: line_no,
                message: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let names = [
            "lang",
            "grapheme_target",
            "grapheme_english",
            "ipa_target",
            "ipa_english",
        ];
        for (field, name) in fields.iter().zip(names) {
            if field.trim().is_empty() {
                return Err(DataError::EmptyField {
                    line: line_no,
                    field: name,
                });
            }
        }
        if !LANGS.contains(&fields[0]) {
            return Err(DataError::InvalidLang {
                line: line_no,
                lang: fields[0].to_string(),
            });
        }
        records.push(CognatePairRecord {
            lang: fields[0].to_string(),
            grapheme_target: fields[1].to_string(),
            grapheme_english: fields[2].to_string(),
            ipa_target: fields[3].to_string(),
            ipa_english: fields[4].to_string(),
        });
    }
    if !header_seen {
        return Err(DataError::ParseError {
            line: 1,
            message: "missing header line".to_string(),
        });
    }
    Ok(records)
}

/// Serialize records back to the tab-separated form parsed by
/// [`parse_conlipa`].
pub fn conlipa_to_string(records: &[CognatePairRecord]) -> String {
    let mut out = String::from(CONLIPA_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.lang, r.grapheme_target, r.grapheme_english, r.ipa_target, r.ipa_english
        ));
    }
    out
}

pub fn language_counts(records: &[CognatePairRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.lang.clone()).or_insert(0) += 1;
    }
    counts
}

/// Apply per-language caps: capped languages keep a uniform random subset
/// (without replacement, original order preserved); others pass through. A
/// cap at or above the available count keeps everything; explicit
/// availability checks are the caller's concern ([`SamplingPolicy::check_available`]).
/// Returns the surviving records and their per-language counts.
pub fn apply_policy(
    records: &[CognatePairRecord],
    policy: &SamplingPolicy,
) -> Result<(Vec<CognatePairRecord>, BTreeMap<String, usize>), DataError> {
    let mut keep = alloc::vec![true; records.len()];
    for (lang, &cap) in &policy.caps {
        let indices: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| &r.lang == lang)
            .map(|(i, _)| i)
            .collect();
        if indices.len() <= cap {
            continue;
        }
        let mut shuffled = indices.clone();
        let mut rng = Rng::new(mix(policy.seed, crate::hash::fnv1a64(lang.as_bytes())));
        rng.shuffle(&mut shuffled);
        for &drop in &shuffled[cap..] {
            keep[drop] = false;
        }
    }
    let selected: Vec<CognatePairRecord> = records
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    let counts = language_counts(&selected);
    Ok((selected, counts))
}

/// Repair BIO sequences: an I-X with no preceding B-X/I-X of the same type
/// becomes B-X.
pub fn canonicalize_tags(tags: &[Tag]) -> Vec<Tag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<Tag> = None;
    for &tag in tags {
        let fixed = if tag.is_inside() {
            match prev {
                Some(p) if p.entity() == tag.entity() => tag,
                _ => tag.opening(),
            }
        } else {
            tag
        };
        out.push(fixed);
        prev = Some(fixed);
    }
    out
}

/// Parse two-column `token<TAB>tag` text; a blank line ends a sentence.
/// Leading I-X tags are canonicalized to B-X unless `strict` is set, in
/// which case they are rejected.
pub fn parse_conll(text: &str, strict: bool) -> Result<Vec<TaggedSentence>, DataError> {
    let mut sentences = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let mut flush = |words: &mut Vec<String>, tags: &mut Vec<Tag>| {
        if !words.is_empty() {
            sentences.push(TaggedSentence {
                words: core::mem::take(words),
                tags: core::mem::take(tags),
            });
        }
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            flush(&mut words, &mut tags);
            continue;
        }
        let (token, tag_str) = raw.split_once('\t').ok_or(DataError::ParseError {
            line: line_no,
            message: "expected token<TAB>tag".to_string(),
        })?;
        if token.is_empty() {
            return Err(DataError::EmptyField {
                line: line_no,
                field: "token",
            });
        }
        let tag = Tag::parse(tag_str).ok_or(DataError::UnknownTag {
            line: line_no,
            tag: tag_str.to_string(),
        })?;
        if strict {
            let orphan = tag.is_inside()
                && tags.last().is_none_or(|p| p.entity() != tag.entity());
            if orphan {
                return Err(DataError::ParseError {
                    line: line_no,
                    message: format!("orphan {} under strict tagging", tag.as_str()),
                });
            }
        }
        words.push(token.to_string());
        tags.push(tag);
    }
    flush(&mut words, &mut tags);
    if sentences.is_empty() {
        return Err(DataError::EmptySentence);
    }
    if !strict {
        for s in &mut sentences {
            s.tags = canonicalize_tags(&s.tags);
        }
    }
    Ok(sentences)
}

pub fn conll_to_string(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (word, tag) in s.words.iter().zip(&s.tags) {
            out.push_str(&format!("{word}\t{}\n", tag.as_str()));
        }
        out.push('\n');
    }
    out
}

/// Seeded shuffle of `0..n` chopped into `batch_size` chunks; the final short
/// batch is kept.
pub fn make_pair_batches(n_records: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..n_records).collect();
    let mut rng = Rng::new(mix(seed, 0xba7c));
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Batching with every batch drawn from a single group: groups are visited in
/// ascending id order, each shuffled under its own derived seed and chopped
/// into `batch_size` chunks.
pub fn make_grouped_batches(groups: &[usize], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut batches = Vec::new();
    for gid in ids {
        let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == gid).collect();
        let mut rng = Rng::new(mix(seed, 0x9800 + gid as u64));
        rng.shuffle(&mut members);
        batches.extend(members.chunks(batch_size).map(|c| c.to_vec()));
    }
    batches
}

/// Phoneme-level target alignment: each word's tag id lands on the word's
/// first phoneme token; the word's remaining tokens and both sentinels get
/// [`IGNORE_INDEX`]. Returned targets cover `[BOS] tokens... [EOS]`.
pub fn align_tags(
    sentence: &TaggedSentence,
    encoded: &[PhonemeSequence],
) -> Result<Vec<usize>, DataError> {
    if sentence.words.len() != encoded.len() {
        return Err(DataError::LengthMismatch {
            expected: sentence.words.len(),
            got: encoded.len(),
        });
    }
    let total: usize = encoded.iter().map(|s| s.ids.len()).sum();
    let mut targets = Vec::with_capacity(total + 2);
    targets.push(IGNORE_INDEX); // BOS
    for (tag, seq) in sentence.tags.iter().zip(encoded) {
        if seq.ids.is_empty() {
            return Err(DataError::LengthMismatch {
                expected: 1,
                got: 0,
            });
        }
        targets.push(tag.id());
        targets.extend(core::iter::repeat_n(IGNORE_INDEX, seq.ids.len() - 1));
    }
    targets.push(IGNORE_INDEX); // EOS
    Ok(targets)
}
