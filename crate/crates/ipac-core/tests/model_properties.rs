//! Cross-module properties: embedding norms across many inputs, thread-stable
//! determinism, and parameter accounting against the published shapes.

use ipac_core::encoder::{
    count_base_params, count_params, count_projection_params, EncoderConfig, EncoderModel,
    ParamSelection,
};
use ipac_core::lora::{count_lora_params, LoraConfig};
use ipac_core::phoneme::PhonemeSequence;
use ipac_core::rng::Rng;

#[test]
fn embedding_norm_is_unit_across_thousand_inputs() {
    let model = EncoderModel::new(EncoderConfig::tiny(40), 3).unwrap();
    let mut rng = Rng::new(99);
    for _ in 0..1000 {
        let len = 1 + rng.below(10);
        let ids: Vec<usize> = (0..len).map(|_| 4 + rng.below(36)).collect();
        let seq = PhonemeSequence {
            segments: ids.iter().map(|i| format!("s{i}")).collect(),
            ids,
        };
        let e = model.embed_word(&seq, false).unwrap();
        let norm: f64 = e.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
    }
}

#[test]
fn forward_is_identical_across_threads() {
    let model = std::sync::Arc::new(EncoderModel::new(EncoderConfig::tiny(16), 5).unwrap());
    let ids = vec![2usize, 6, 9, 12, 3];
    let here = model.forward_tokens(&ids, false).unwrap();
    let mut handles = Vec::new();
    for _ in 0..4 {
        let model = model.clone();
        let ids = ids.clone();
        handles.push(std::thread::spawn(move || {
            model.forward_tokens(&ids, false).unwrap()
        }));
    }
    for handle in handles {
        let other = handle.join().unwrap();
        for (a, b) in here.data().iter().zip(other.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn published_component_counts_are_consistent() {
    let cfg = EncoderConfig::default();
    let lora = LoraConfig::default();
    let adapter = count_lora_params(&cfg, &lora);
    let projection = count_projection_params(&cfg);
    assert_eq!(adapter, 1_327_104);
    assert_eq!(projection, 49_216);
    assert_eq!(adapter + projection, 1_376_320);
    // The published totals differ by exactly the added components.
    assert_eq!(88_936_007u64 - 87_559_687u64, adapter + projection);

    // Full count is the sum of its parts, at any shape.
    for vocab in [16usize, 100] {
        let cfg = EncoderConfig::tiny(vocab);
        let full = count_params(
            &cfg,
            &ParamSelection {
                base: true,
                projection: true,
                ner_head: true,
                lora: Some(&lora),
            },
        );
        let parts = count_base_params(&cfg)
            + count_projection_params(&cfg)
            + ipac_core::encoder::count_ner_params(&cfg)
            + count_lora_params(&cfg, &lora);
        assert_eq!(full, parts);
    }
}
