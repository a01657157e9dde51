//! Named finite-difference verification suites over the op set and the full
//! contrastive path through a small encoder. Shared by tests and the CLI.

use alloc::string::String;
use alloc::vec::Vec;

use crate::contrastive::ipac_loss_graph;
use crate::encoder::{Bindings, EncoderConfig, EncoderModel, ForwardCtx};
use crate::lora::{attach_lora, LoraConfig};
use crate::numerics::{GradCheck, NumericsError, Tensor, IGNORE_INDEX};
use crate::rng::{mix, Rng};

pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gaussian()).collect()).unwrap()
}

fn random_vector(rng: &mut Rng, n: usize) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.gaussian()).collect())
}

/// Gradcheck every differentiable op at `rounds` random points each.
/// Returns one result per op with the worst relative error observed.
pub fn op_gradcheck_suite(seed: u64, rounds: usize) -> Result<Vec<CheckResult>, NumericsError> {
    let mut results = Vec::new();
    let push = |name: &str,
                    round: usize,
                    err: f64,
                    results: &mut Vec<CheckResult>| {
        match results.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                if err > r.max_rel_err {
                    r.max_rel_err = err;
                }
            }
            None => results.push(CheckResult {
                name: String::from(name),
                max_rel_err: err,
            }),
        }
        let _ = round;
    };

    for round in 0..rounds {
        let mut rng = Rng::new(mix(seed, round as u64));
        let checker = GradCheck {
            seed: mix(seed, 0xc0 + round as u64),
            ..GradCheck::default()
        };

        let err = checker.run(
            &mut |g, l| {
                let y = g.matmul(l[0], l[1])?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 3, 4), random_matrix(&mut rng, 4, 2)],
        )?;
        push("matmul", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.add(l[0], l[1])?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 3, 3), random_matrix(&mut rng, 3, 3)],
        )?;
        push("add", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.add(l[0], l[1])?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 3, 4), random_vector(&mut rng, 4)],
        )?;
        push("add_row_bias", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.mul(l[0], l[1])?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 2, 5), random_matrix(&mut rng, 2, 5)],
        )?;
        push("mul", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.scale(l[0], -1.7)?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 3, 3)],
        )?;
        push("scale", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.transpose(l[0])?;
                let z = g.mul(y, y)?;
                g.sum(z)
            },
            &[random_matrix(&mut rng, 2, 4)],
        )?;
        push("transpose", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.row_softmax(l[0])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 3, 5)],
        )?;
        push("row_softmax", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.layer_norm(l[0], l[1], l[2], 1e-12)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[
                random_matrix(&mut rng, 3, 6),
                random_vector(&mut rng, 6),
                random_vector(&mut rng, 6),
            ],
        )?;
        push("layer_norm", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.gelu(l[0])?;
                g.sum(y)
            },
            &[random_matrix(&mut rng, 3, 4)],
        )?;
        push("gelu", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.embedding_lookup(l[0], &[2, 0, 2, 1])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 4, 3)],
        )?;
        push("embedding_lookup", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.mean_rows(l[0], &[true, false, true, true])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 4, 3)],
        )?;
        push("mean_rows", round, err, &mut results);

        let dropout_seed = mix(seed, 0xd0 + round as u64);
        let err = checker.run(
            &mut |g, l| {
                let y = g.dropout(l[0], 0.3, dropout_seed)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 4, 4)],
        )?;
        push("dropout", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.concat_rows(&[l[0], l[1]])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 2, 3), random_matrix(&mut rng, 3, 3)],
        )?;
        push("concat_rows", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.concat_cols(&[l[0], l[1]])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 3, 3)],
        )?;
        push("concat_cols", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.slice_cols(l[0], 1, 3)?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 3, 5)],
        )?;
        push("slice_cols", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| {
                let y = g.l2_normalize_rows(l[0])?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            &[random_matrix(&mut rng, 3, 4)],
        )?;
        push("l2_normalize_rows", round, err, &mut results);

        let err = checker.run(
            &mut |g, l| g.cross_entropy(l[0], &[1, IGNORE_INDEX, 0, 2]),
            &[random_matrix(&mut rng, 4, 3)],
        )?;
        push("cross_entropy", round, err, &mut results);

        let err = checker.run(&mut |g, l| g.sum(l[0]), &[random_matrix(&mut rng, 3, 3)])?;
        push("sum", round, err, &mut results);
    }
    Ok(results)
}

/// Gradcheck the full symmetric contrastive loss through a small adapted
/// encoder with every parameter as a leaf. `coords_per_param` caps the probed
/// coordinates per tensor.
pub fn encoder_gradcheck(seed: u64, coords_per_param: usize) -> Result<CheckResult, NumericsError> {
    let mut cfg = EncoderConfig::tiny(20);
    cfg.dropout = 0.0; // deterministic function of the parameters
    let mut model = EncoderModel::new(cfg, mix(seed, 1)).expect("valid config");
    attach_lora(
        &mut model,
        LoraConfig {
            dropout: 0.0,
            ..LoraConfig::default()
        },
        mix(seed, 2),
    )
    .expect("adapters attach");
    // Random B factors so the adapter path carries signal.
    let mut rng = Rng::new(mix(seed, 3));
    for e in model.params.entries_mut() {
        if e.name.starts_with("lora.") && e.name.ends_with(".B") {
            for v in e.tensor.data_mut() {
                *v = 0.02 * rng.gaussian();
            }
        }
    }

    let pairs = [
        (alloc::vec![2usize, 4, 7, 3], alloc::vec![2usize, 11, 9, 3]),
        (alloc::vec![2usize, 6, 3], alloc::vec![2usize, 13, 3]),
    ];
    let points: Vec<Tensor> = model
        .params
        .entries()
        .iter()
        .map(|e| e.tensor.clone())
        .collect();

    let checker = GradCheck {
        max_coords_per_input: coords_per_param,
        seed: mix(seed, 4),
        ..GradCheck::default()
    };
    let err = checker.run(
        &mut |g, leaves| {
            let binds = Bindings::from_nodes(leaves.to_vec());
            let mut ctx = ForwardCtx::eval();
            let mut english = Vec::new();
            let mut target = Vec::new();
            for (ids_e, ids_t) in &pairs {
                english.push(
                    model
                        .embed_graph(g, &binds, ids_e, &mut ctx)
                        .map_err(|e| match e {
                            crate::encoder::EncoderError::Numerics(n) => n,
                            other => NumericsError::InvalidValue(alloc::format!("{other}")),
                        })?,
                );
                target.push(
                    model
                        .embed_graph(g, &binds, ids_t, &mut ctx)
                        .map_err(|e| match e {
                            crate::encoder::EncoderError::Numerics(n) => n,
                            other => NumericsError::InvalidValue(alloc::format!("{other}")),
                        })?,
                );
            }
            let z_e = g.concat_rows(&english)?;
            let z_t = g.concat_rows(&target)?;
            ipac_loss_graph(g, z_e, z_t, 0.1).map_err(|e| match e {
                crate::contrastive::ContrastiveError::Numerics(n) => n,
                other => NumericsError::InvalidValue(alloc::format!("{other}")),
            })
        },
        &points,
    )?;
    Ok(CheckResult {
        name: String::from("ipac_loss_tiny_encoder"),
        max_rel_err: err,
    })
}
