//! Synthetic corpora for experiments and self-contained tests: a cognate set
//! where the target-side IPA is a fixed symbol-substitution cipher of the
//! English-side IPA, and a small tagged corpus with a matching
//! grapheme-to-phoneme table.

use std::collections::BTreeSet;

use ipac_core::data::{CognatePairRecord, Tag, TaggedSentence, LANGS};
use ipac_core::phoneme::G2pTable;
use ipac_core::rng::{mix, Rng};

/// English-side IPA symbol bank.
pub const ENGLISH_SYMBOLS: [&str; 20] = [
    "p", "b", "t", "d", "k", "g", "m", "n", "ŋ", "f", "s", "z", "ʃ", "h", "l", "r", "w", "j",
    "ɛ", "ɑ",
];

/// Target-side bank; symbol i is the cipher image of `ENGLISH_SYMBOLS[i]`.
pub const TARGET_SYMBOLS: [&str; 20] = [
    "pʰ", "tʰ", "kʰ", "ɖ", "ɡʱ", "ɱ", "ɳ", "ɲ", "ʋ", "ʂ", "ʐ", "ç", "ɦ", "ɭ", "ɽ", "ʁ", "ɰ",
    "ʝ", "e", "a",
];

#[derive(Debug, Clone)]
pub struct CipherCorpus {
    pub train: Vec<CognatePairRecord>,
    pub heldout: Vec<CognatePairRecord>,
}

impl CipherCorpus {
    /// All 40 symbols, the full model vocabulary surface.
    pub fn symbol_inventory() -> Vec<String> {
        ENGLISH_SYMBOLS
            .iter()
            .chain(TARGET_SYMBOLS.iter())
            .map(|s| s.to_string())
            .collect()
    }
}

fn cipher(english_ipa: &str) -> String {
    english_ipa
        .split_whitespace()
        .map(|seg| {
            ENGLISH_SYMBOLS
                .iter()
                .position(|&e| e == seg)
                .map(|i| TARGET_SYMBOLS[i])
                .unwrap_or(seg)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generate unique cognate pairs under the fixed substitution cipher. Words
/// are 3-8 symbols long; languages cycle through the ten-language set so
/// per-language grouping and caps stay exercisable.
pub fn cipher_cognates(n_train: usize, n_heldout: usize, seed: u64) -> CipherCorpus {
    let mut rng = Rng::new(mix(seed, 0x515));
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(n_train + n_heldout);
    let mut word_index = 0usize;
    while records.len() < n_train + n_heldout {
        let len = 3 + rng.below(6);
        let segments: Vec<&str> = (0..len)
            .map(|_| ENGLISH_SYMBOLS[rng.below(ENGLISH_SYMBOLS.len())])
            .collect();
        let ipa_english = segments.join(" ");
        if !seen.insert(ipa_english.clone()) {
            continue;
        }
        let lang = LANGS[word_index % LANGS.len()];
        records.push(CognatePairRecord {
            lang: lang.to_string(),
            grapheme_target: format!("t{word_index:04}"),
            grapheme_english: format!("w{word_index:04}"),
            ipa_target: cipher(&ipa_english),
            ipa_english,
        });
        word_index += 1;
    }
    let heldout = records.split_off(n_train);
    CipherCorpus {
        train: records,
        heldout,
    }
}

/// A small word list with IPA forms over the English symbol bank, split into
/// fillers and single-word entities of each type.
struct Lexicon {
    fillers: Vec<String>,
    people: Vec<String>,
    orgs: Vec<String>,
    places: Vec<String>,
    table: G2pTable,
}

fn build_lexicon(seed: u64) -> Lexicon {
    let mut rng = Rng::new(mix(seed, 0x1e));
    let mut table = G2pTable::new();
    let mut seen = BTreeSet::new();
    let mut mint = |prefix: &str, count: usize, rng: &mut Rng, table: &mut G2pTable| {
        let mut words = Vec::with_capacity(count);
        let mut i = 0;
        while words.len() < count {
            let len = 2 + rng.below(5);
            let ipa: Vec<&str> = (0..len)
                .map(|_| ENGLISH_SYMBOLS[rng.below(ENGLISH_SYMBOLS.len())])
                .collect();
            let ipa = ipa.join(" ");
            if !seen.insert(ipa.clone()) {
                continue;
            }
            let word = format!("{prefix}{i:03}");
            table.insert("eng", &word, &ipa);
            words.push(word);
            i += 1;
        }
        words
    };
    let fillers = mint("w", 30, &mut rng, &mut table);
    let people = mint("per", 8, &mut rng, &mut table);
    let orgs = mint("org", 8, &mut rng, &mut table);
    let places = mint("loc", 8, &mut rng, &mut table);
    Lexicon {
        fillers,
        people,
        orgs,
        places,
        table,
    }
}

/// Generate tagged sentences plus the grapheme-to-phoneme table covering
/// every word. Entities are 1-2 word runs of a dedicated word class, so the
/// tags are learnable from the phoneme sequences alone.
pub fn tagged_corpus(n_sentences: usize, seed: u64) -> (Vec<TaggedSentence>, G2pTable) {
    let lex = build_lexicon(seed);
    let mut rng = Rng::new(mix(seed, 0x7a9));
    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let mut words = Vec::new();
        let mut tags = Vec::new();
        let body = 3 + rng.below(6);
        for _ in 0..body {
            words.push(lex.fillers[rng.below(lex.fillers.len())].clone());
            tags.push(Tag::Outside);
        }
        let entities = rng.below(3);
        for _ in 0..entities {
            let kind = rng.below(3);
            let (pool, begin, inside) = match kind {
                0 => (&lex.people, Tag::BPer, Tag::IPer),
                1 => (&lex.orgs, Tag::BOrg, Tag::IOrg),
                _ => (&lex.places, Tag::BLoc, Tag::ILoc),
            };
            let span_len = 1 + rng.below(2);
            let insert_at = rng.below(words.len() + 1);
            for offset in 0..span_len {
                words.insert(insert_at + offset, pool[rng.below(pool.len())].clone());
                tags.insert(insert_at + offset, if offset == 0 { begin } else { inside });
            }
        }
        sentences.push(TaggedSentence { words, tags });
    }
    (sentences, lex.table)
}
