//! Report writers: similarity CSV, embedding export CSV, aggregate tables,
//! and the step-loss log hooks used by training commands.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ipac_core::encoder::EncoderModel;
use ipac_core::eval::SimilarityReport;
use ipac_core::phoneme::PhonemeSequence;
use ipac_core::trainer::{Phase, TrainError, TrainHooks, TrainState};

use crate::checkpoint;
use crate::error::{Error, Result};

/// Nine-significant-digit decimal form used by all numeric CSV columns.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_similarity_csv(path: &Path, report: &SimilarityReport) -> Result<()> {
    let mut out = String::from("pair_id,lang,word_english,word_target,cosine,cosine_pct\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.2}",
            row.pair_id,
            row.lang,
            row.word_english,
            row.word_target,
            sig9(row.cosine),
            row.percent()
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Aligned plain-text table of (label, value) rows.
pub fn aligned_table(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, value) in rows {
        let _ = writeln!(out, "{label:<width$}  {value:>10.4}");
    }
    out
}

pub fn write_csv_table(path: &Path, header: &str, rows: &[(String, f64)]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for (label, value) in rows {
        let _ = writeln!(out, "{label},{}", sig9(*value));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Embedding export: one row per side per pair,
/// `pair_id,lang,side,word,dim_0..dim_{D-1}` with nine-significant-digit
/// floats. Returns the number of data rows written.
pub fn export_embeddings(
    path: &Path,
    model: &EncoderModel,
    pairs: &[(usize, String, PhonemeSequence, PhonemeSequence, String, String)],
) -> Result<usize> {
    let dim = model.config.proj_dim;
    let mut out = String::from("pair_id,lang,side,word");
    for d in 0..dim {
        let _ = write!(out, ",dim_{d}");
    }
    out.push('\n');
    let mut rows = 0usize;
    for (pair_id, lang, seq_e, seq_t, word_e, word_t) in pairs {
        for (side, seq, word) in [("eng", seq_e, word_e), ("tgt", seq_t, word_t)] {
            let embedding = model.embed_word(seq, false)?;
            let _ = write!(out, "{pair_id},{lang},{side},{word}");
            for v in embedding.data() {
                let _ = write!(out, ",{}", sig9(*v));
            }
            out.push('\n');
            rows += 1;
        }
    }
    std::fs::write(path, out)?;
    Ok(rows)
}

/// Parse an embedding export back into (side rows) for round-trip checks.
pub fn read_embeddings(path: &Path) -> Result<Vec<(usize, String, String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("empty embedding export"))?;
    let dim = header.split(',').count() - 4;
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 4 {
            return Err(Error::data(format!(
                "embedding row has {} fields, expected {}",
                fields.len(),
                dim + 4
            )));
        }
        let pair_id: usize = fields[0]
            .parse()
            .map_err(|_| Error::data("bad pair_id in embedding export"))?;
        let mut values = Vec::with_capacity(dim);
        for f in &fields[4..] {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::data("bad float in embedding export"))?,
            );
        }
        rows.push((pair_id, fields[1].to_string(), fields[2].to_string(), values));
    }
    Ok(rows)
}

/// Training hooks that stream `step<TAB>loss` lines to a log file and write
/// a model checkpoint after every epoch.
pub struct RunHooks {
    out_dir: PathBuf,
    phase_tag: &'static str,
    vocabulary_ref: String,
    log: BufWriter<File>,
}

impl RunHooks {
    pub fn new(out_dir: &Path, phase: Phase, vocabulary_ref: &str, append: bool) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let phase_tag = phase.name();
        let log_path = out_dir.join(format!("loss_{phase_tag}.log"));
        let file = if append {
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)?
        } else {
            File::create(&log_path)?
        };
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            phase_tag,
            vocabulary_ref: vocabulary_ref.to_string(),
            log: BufWriter::new(file),
        })
    }
}

impl TrainHooks for RunHooks {
    fn on_step(&mut self, _phase: Phase, step: u64, loss: f64) -> std::result::Result<(), TrainError> {
        writeln!(self.log, "{step}\t{loss:.17e}")
            .and_then(|_| self.log.flush())
            .map_err(|e| TrainError::Hook(format!("loss log write failed: {e}")))
    }

    fn on_epoch_end(
        &mut self,
        _phase: Phase,
        epoch: usize,
        model: &EncoderModel,
        _state: &TrainState,
    ) -> std::result::Result<(), TrainError> {
        let path = self
            .out_dir
            .join(format!("{}_epoch{}.ipac", self.phase_tag, epoch + 1));
        checkpoint::save_model(&path, model, &self.vocabulary_ref)
            .map_err(|e| TrainError::Hook(format!("checkpoint write failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_has_nine_significant_digits() {
        let s = sig9(0.123456789123);
        assert_eq!(s, "1.23456789e-1");
        let parsed: f64 = s.parse().unwrap();
        assert!((parsed - 0.123456789123).abs() < 1e-9);
    }

    #[test]
    fn aligned_table_lines_up() {
        let rows = vec![("kor".to_string(), 1.0), ("swahili".to_string(), 2.5)];
        let table = aligned_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("kor   "));
        assert!(lines[1].starts_with("swahili"));
    }
}
