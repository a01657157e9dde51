//! Larger training smoke test: supervised tag pretraining on a 200-sentence
//! synthetic corpus with a hidden-64 encoder loses ground over epochs.

use ipac_core::encoder::{EncoderConfig, EncoderModel};
use ipac_core::numerics::IGNORE_INDEX;
use ipac_core::phoneme::{BOS, EOS};
use ipac_core::rng::Rng;
use ipac_core::trainer::{train_ner, NerExample, Phase, TrainConfig, TrainError, TrainHooks, TrainState};

struct LossLog(Vec<f64>);

impl TrainHooks for LossLog {
    fn on_step(&mut self, _p: Phase, _s: u64, loss: f64) -> Result<(), TrainError> {
        self.0.push(loss);
        Ok(())
    }
}

#[test]
fn two_hundred_sentence_pretraining_improves() {
    // Word identity decides the tag: ids 4..=7 open entities, the rest are
    // outside. Three epochs must beat the first on mean loss.
    let mut rng = Rng::new(12);
    let examples: Vec<NerExample> = (0..200)
        .map(|_| {
            let words = 3 + rng.below(8);
            let mut ids = vec![BOS];
            let mut targets = vec![IGNORE_INDEX];
            for _ in 0..words {
                let id = 4 + rng.below(16);
                ids.push(id);
                targets.push(if id < 8 { 0 } else { 6 });
            }
            ids.push(EOS);
            targets.push(IGNORE_INDEX);
            NerExample { ids, targets }
        })
        .collect();

    let config = EncoderConfig {
        layers: 2,
        hidden: 64,
        heads: 2,
        ff_dim: 128,
        vocab_size: 24,
        max_positions: 32,
        dropout: 0.1,
        proj_dim: 64,
        num_tags: 7,
        pooling: Default::default(),
    };
    let mut model = EncoderModel::new(config, 5).unwrap();
    let train_cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 16,
        ner_epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    };
    let mut state = TrainState::fresh(&train_cfg);
    let mut log = LossLog(Vec::new());
    train_ner(&mut model, &examples, &train_cfg, &mut state, None, &mut log).unwrap();

    let per_epoch = examples.len().div_ceil(train_cfg.batch_size);
    assert_eq!(log.0.len(), 3 * per_epoch);
    let mean = |e: usize| -> f64 {
        log.0[e * per_epoch..(e + 1) * per_epoch].iter().sum::<f64>() / per_epoch as f64
    };
    assert!(
        mean(2) < mean(0),
        "epoch 3 mean {:.4} should beat epoch 1 mean {:.4}",
        mean(2),
        mean(0)
    );
}
