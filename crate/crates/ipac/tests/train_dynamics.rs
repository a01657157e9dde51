//! Similarity-report dynamics: contrastive fine-tuning raises the reported
//! mean pair cosine over the untrained model on held-out cipher pairs.

use ipac::pipeline::encode_pairs;
use ipac::synth::{cipher_cognates, CipherCorpus};
use ipac_core::encoder::{EncoderConfig, EncoderModel};
use ipac_core::eval::cosine_pairs;
use ipac_core::lora::{attach_lora, LoraConfig};
use ipac_core::phoneme::{PhonemeSequence, Vocabulary};
use ipac_core::trainer::{train_ipac, NullHooks, TrainConfig, TrainState};

type SimilarityInput = (usize, String, PhonemeSequence, PhonemeSequence, String, String);

fn similarity_inputs(
    records: &[ipac_core::data::CognatePairRecord],
    vocab: &Vocabulary,
) -> Vec<SimilarityInput> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                i,
                r.lang.clone(),
                vocab.sequence(&r.ipa_english),
                vocab.sequence(&r.ipa_target),
                r.grapheme_english.clone(),
                r.grapheme_target.clone(),
            )
        })
        .collect()
}

#[test]
fn trained_report_beats_untrained_report() {
    let corpus = cipher_cognates(100, 20, 7);
    let inventory = CipherCorpus::symbol_inventory();
    let vocab = Vocabulary::build([inventory.as_slice()]).unwrap();

    let mut model = EncoderModel::new(EncoderConfig::tiny(vocab.len()), 7).unwrap();
    attach_lora(&mut model, LoraConfig::default(), 8).unwrap();

    let inputs = similarity_inputs(&corpus.heldout, &vocab);
    let before = cosine_pairs(&model, &inputs).unwrap();

    let cfg = TrainConfig {
        lr: 1e-2,
        batch_size: 16,
        ipac_epochs: 2,
        temperature: 0.1,
        seed: 7,
        ..TrainConfig::default()
    };
    let pairs = encode_pairs(&corpus.train, &vocab);
    let mut state = TrainState::fresh(&cfg);
    train_ipac(&mut model, &pairs, None, &cfg, &mut state, None, &mut NullHooks).unwrap();

    let after = cosine_pairs(&model, &inputs).unwrap();
    assert!(
        after.mean_cosine() > before.mean_cosine(),
        "mean cosine {:.4} -> {:.4}",
        before.mean_cosine(),
        after.mean_cosine()
    );
    // Rows stay sorted by pair id and keep the percentage convention.
    for (i, row) in after.rows.iter().enumerate() {
        assert_eq!(row.pair_id, i);
        assert!((row.percent() - 100.0 * row.cosine).abs() < 1e-12);
    }
}
