//! Black-box CLI tests through the real binary: exit codes, stdout shapes,
//! the demo pipeline end to end, and artifact idempotence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipac::flags::COMMANDS;
use ipac::report::read_embeddings;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipac"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn demo(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
        .display()
        .to_string()
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ipac-cli-{}-{tag}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(&["build-vocab", "--bogus", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["build-vocab", "--data"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let out = run(&[
        "build-vocab",
        "--data",
        "/definitely/not/here.tsv",
        "--out",
        "/tmp/ipac-nope.txt",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_env_exits_one() {
    let out = bin()
        .env("IPAC_THREADS", "many")
        .args(["param-count"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .env("IPAC_THREADS", "0")
        .args(["param-count"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_every_command_and_flag() {
    let top = run(&["--help"]);
    assert_eq!(top.status.code(), Some(0));
    let text = stdout(&top);
    for cmd in COMMANDS {
        assert!(text.contains(cmd.name), "global help missing {}", cmd.name);
        let help = run(&[cmd.name, "--help"]);
        assert_eq!(help.status.code(), Some(0));
        let help_text = stdout(&help);
        for flag in cmd.flags {
            assert!(
                help_text.contains(flag.name),
                "{} --help missing {}",
                cmd.name,
                flag.name
            );
        }
    }
}

#[test]
fn param_count_reports_published_numbers() {
    let out = run(&["param-count", "--lora", "r=8", "--targets", "all"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("lora\t1327104"), "{text}");
    assert!(text.contains("projection\t49216"), "{text}");
}

#[test]
fn param_count_include_subsets() {
    let out = run(&["param-count", "--include", "projection"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text, "projection\t49216\ntotal\t49216\n");

    // Counting the adapter without a spec is a usage error, as is an
    // unknown component name.
    assert_eq!(
        run(&["param-count", "--include", "lora"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["param-count", "--include", "everything"]).status.code(),
        Some(1)
    );
}

#[test]
fn gradcheck_core_suite_exits_clean() {
    let out = run(&["gradcheck", "--suite", "core", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("matmul\t"));
    assert!(text.contains("cross_entropy\t"));
}

/// The demo pipeline from the repository's data directory: vocabulary, both
/// training phases, evaluation, similarity report, and embedding export with
/// a round-trip consistency check.
#[test]
fn demo_pipeline_end_to_end() {
    let dir = work_dir("demo");
    let vocab = dir.join("vocab.txt");
    let out = run(&[
        "build-vocab",
        "--data",
        &demo("demo_pairs.tsv"),
        "--g2p",
        &demo("demo_g2p.tsv"),
        "--out",
        &vocab.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).starts_with("vocab_size="));

    let ner_dir = dir.join("ner");
    let out = run(&[
        "pretrain-ner",
        "--data",
        &demo("demo_ner.conll"),
        "--g2p",
        &demo("demo_g2p.tsv"),
        "--vocab",
        &vocab.display().to_string(),
        "--config",
        &demo("demo.cfg"),
        "--out",
        &ner_dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(ner_dir.join("ner_final.ipac").exists());
    assert!(ner_dir.join("manifest.txt").exists());
    assert!(ner_dir.join("loss_ner.log").exists());

    let ipac_dir = dir.join("ipac");
    let out = run(&[
        "train-ipac",
        "--data",
        &demo("demo_pairs.tsv"),
        "--checkpoint",
        &ner_dir.join("ner_final.ipac").display().to_string(),
        "--vocab",
        &vocab.display().to_string(),
        "--config",
        &demo("demo.cfg"),
        "--out",
        &ipac_dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let model = ipac_dir.join("ipac_final.ipac");
    assert!(model.exists());

    let out = run(&[
        "eval-ner",
        "--data",
        &demo("demo_ner.conll"),
        "--checkpoint",
        &model.display().to_string(),
        "--g2p",
        &demo("demo_g2p.tsv"),
        "--vocab",
        &vocab.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for key in ["precision=", "recall=", "f1="] {
        assert!(text.contains(key), "{text}");
    }

    let sim_csv = dir.join("similarity.csv");
    let out = run(&[
        "eval-cossim",
        "--data",
        &demo("demo_pairs.tsv"),
        "--checkpoint",
        &model.display().to_string(),
        "--vocab",
        &vocab.display().to_string(),
        "--out",
        &sim_csv.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("overall_mean_pct="));

    let emb_csv = dir.join("embeddings.csv");
    let out = run(&[
        "export-embeddings",
        "--data",
        &demo("demo_pairs.tsv"),
        "--checkpoint",
        &model.display().to_string(),
        "--vocab",
        &vocab.display().to_string(),
        "--out",
        &emb_csv.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    // 12 pairs -> 24 rows, two per pair.
    assert_eq!(stdout(&out).trim(), "rows=24");
    let header = std::fs::read_to_string(&emb_csv).unwrap();
    let columns = header.lines().next().unwrap().split(',').count();
    assert_eq!(columns, 4 + 64, "header has 4 meta columns plus proj_dim");

    // Re-imported embeddings reproduce the reported cosines within 1e-7.
    let rows = read_embeddings(&emb_csv).unwrap();
    assert_eq!(rows.len(), 24);
    let sim_text = std::fs::read_to_string(&sim_csv).unwrap();
    for line in sim_text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let pair_id: usize = fields[0].parse().unwrap();
        let reported: f64 = fields[4].parse().unwrap();
        let eng = rows
            .iter()
            .find(|(id, _, side, _)| *id == pair_id && side == "eng")
            .unwrap();
        let tgt = rows
            .iter()
            .find(|(id, _, side, _)| *id == pair_id && side == "tgt")
            .unwrap();
        let dot: f64 = eng.3.iter().zip(&tgt.3).map(|(a, b)| a * b).sum();
        assert!(
            (dot - reported).abs() < 1e-7,
            "pair {pair_id}: {dot} vs {reported}"
        );
    }

    // Idempotence: identical flags and seed give byte-identical artifacts.
    let emb_again = dir.join("embeddings2.csv");
    let out = run(&[
        "export-embeddings",
        "--data",
        &demo("demo_pairs.tsv"),
        "--checkpoint",
        &model.display().to_string(),
        "--vocab",
        &vocab.display().to_string(),
        "--out",
        &emb_again.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&emb_csv).unwrap(),
        std::fs::read(&emb_again).unwrap()
    );
}

#[test]
fn default_sweep_grids_match_reference_levels() {
    assert_eq!(ipac::cli::TEMPERATURE_GRID.split(',').count(), 13);
    assert_eq!(ipac::cli::KOREAN_CAP_GRID.split(',').count(), 10);
    assert!(ipac::cli::KOREAN_CAP_GRID.starts_with("16,32,64"));
    assert!(ipac::cli::KOREAN_CAP_GRID.ends_with("7521"));
}

#[test]
fn grouped_batches_and_population_std_flags() {
    let dir = work_dir("flags");
    let vocab = dir.join("vocab.txt");
    let out = run(&[
        "build-vocab",
        "--data",
        &demo("demo_pairs.tsv"),
        "--out",
        &vocab.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let ipac_dir = dir.join("ipac");
    let out = run(&[
        "train-ipac",
        "--data",
        &demo("demo_pairs.tsv"),
        "--vocab",
        &vocab.display().to_string(),
        "--config",
        &demo("demo.cfg"),
        "--out",
        &ipac_dir.display().to_string(),
        "--group-by-lang",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let out = run(&[
        "eval-cossim",
        "--data",
        &demo("demo_pairs.tsv"),
        "--checkpoint",
        &ipac_dir.join("ipac_final.ipac").display().to_string(),
        "--vocab",
        &vocab.display().to_string(),
        "--population-std",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("aggregate_std_pct="), "{text}");
}

#[test]
fn strict_iob_rejects_orphans() {
    let dir = work_dir("strict");
    let conll = dir.join("bad.conll");
    std::fs::write(&conll, "paris\tI-LOC\n\n").unwrap();
    let vocab = dir.join("vocab.txt");
    std::fs::write(&vocab, "a\n").unwrap();
    let out = run(&[
        "pretrain-ner",
        "--data",
        &conll.display().to_string(),
        "--g2p",
        &demo("demo_g2p.tsv"),
        "--vocab",
        &vocab.display().to_string(),
        "--out",
        &dir.join("out").display().to_string(),
        "--strict-iob",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
