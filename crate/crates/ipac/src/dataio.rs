//! File-level loaders and writers for the corpus formats. All files are
//! UTF-8 with `\n` line endings.

use std::collections::BTreeMap;
use std::path::Path;

use ipac_core::data::{
    apply_policy, conlipa_to_string, conll_to_string, parse_conlipa, parse_conll,
    CognatePairRecord, SamplingPolicy, TaggedSentence,
};
use ipac_core::phoneme::{G2pTable, Vocabulary};

use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

/// Load cognate pair records, apply the sampling policy, and report the
/// post-policy per-language counts.
pub fn load_conlipa(
    path: &Path,
    policy: &SamplingPolicy,
) -> Result<(Vec<CognatePairRecord>, BTreeMap<String, usize>)> {
    let text = read(path)?;
    let records = parse_conlipa(&text)?;
    Ok(apply_policy(&records, policy)?)
}

pub fn write_conlipa(path: &Path, records: &[CognatePairRecord]) -> Result<()> {
    write(path, &conlipa_to_string(records))
}

pub fn load_conll(path: &Path, strict: bool) -> Result<Vec<TaggedSentence>> {
    let text = read(path)?;
    Ok(parse_conll(&text, strict)?)
}

pub fn write_conll(path: &Path, sentences: &[TaggedSentence]) -> Result<()> {
    write(path, &conll_to_string(sentences))
}

/// Grapheme-to-phoneme table: `lang<TAB>grapheme<TAB>ipa` rows, `#` comments.
pub fn load_g2p_table(path: &Path) -> Result<G2pTable> {
    let text = read(path)?;
    let mut table = G2pTable::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "{}:{line_no}: expected lang<TAB>grapheme<TAB>ipa",
                path.display()
            )));
        }
        if fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::data(format!(
                "{}:{line_no}: empty field",
                path.display()
            )));
        }
        table.insert(fields[0], fields[1], fields[2]);
    }
    Ok(table)
}

pub fn write_g2p_table(path: &Path, table: &G2pTable) -> Result<()> {
    let mut out = String::new();
    for (lang, word, ipa) in table.iter() {
        out.push_str(&format!("{lang}\t{word}\t{ipa}\n"));
    }
    write(path, &out)
}

/// Vocabulary file: one corpus symbol per line; the line number is the
/// symbol's id minus 4 (the specials are implicit).
pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = read(path)?;
    Ok(Vocabulary::from_symbol_list(
        text.lines().filter(|l| !l.is_empty()),
    ))
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for symbol in vocab.corpus_symbols() {
        out.push_str(symbol);
        out.push('\n');
    }
    write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipac_core::data::Tag;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("ipac-dataio-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn conlipa_file_round_trip() {
        let records = vec![CognatePairRecord {
            lang: "kor".into(),
            grapheme_target: "버스".into(),
            grapheme_english: "bus".into(),
            ipa_target: "p ʌ s ɯ".into(),
            ipa_english: "b ʌ s".into(),
        }];
        let path = tmp("pairs.tsv");
        write_conlipa(&path, &records).unwrap();
        let (loaded, counts) = load_conlipa(&path, &SamplingPolicy::unlimited(0)).unwrap();
        assert_eq!(loaded, records);
        assert_eq!(counts.get("kor"), Some(&1));
    }

    #[test]
    fn conll_file_round_trip() {
        let sentences = vec![TaggedSentence {
            words: vec!["John".into(), "runs".into()],
            tags: vec![Tag::BPer, Tag::Outside],
        }];
        let path = tmp("tags.conll");
        write_conll(&path, &sentences).unwrap();
        assert_eq!(load_conll(&path, false).unwrap(), sentences);
    }

    #[test]
    fn g2p_file_round_trip_and_validation() {
        let mut table = G2pTable::new();
        table.insert("eng", "bus", "b ʌ s");
        table.insert("kor", "버스", "p ʌ s ɯ");
        let path = tmp("g2p.tsv");
        write_g2p_table(&path, &table).unwrap();
        assert_eq!(load_g2p_table(&path).unwrap(), table);

        let bad = tmp("g2p-bad.tsv");
        std::fs::write(&bad, "eng\tonly-two\n").unwrap();
        assert!(load_g2p_table(&bad).is_err());
    }

    #[test]
    fn vocabulary_file_line_positions() {
        let segs: Vec<String> = vec!["ʃ".into(), "a".into(), "ʃ".into()];
        let vocab = Vocabulary::build([segs.as_slice()]).unwrap();
        let path = tmp("vocab.txt");
        write_vocabulary(&path, &vocab).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Line number = id - 4: "ʃ" (freq 2) on line 0 -> id 4.
        assert_eq!(text, "ʃ\na\n");
        let loaded = load_vocabulary(&path).unwrap();
        assert_eq!(loaded, vocab);
    }
}
