//! Command dispatch. Diagnostics go to stderr, machine-readable output to
//! stdout or files. Exit codes: 0 success, 1 usage error, 2 data/validation
//! error, 3 numerical failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ipac_core::data::{CognatePairRecord, SamplingPolicy, LANGS};
use ipac_core::encoder::{
    count_base_params, count_ner_params, count_projection_params, EncoderModel,
};
use ipac_core::eval::aggregate_report;
use ipac_core::lora::{attach_lora, count_lora_params, LoraConfig};
use ipac_core::phoneme::{tokenize, Vocabulary};
use ipac_core::rng::mix;
use ipac_core::trainer::{train_ipac, train_ner, Phase, TrainState};
use ipac_core::verify::{encoder_gradcheck, op_gradcheck_suite, DEFAULT_TOLERANCE};

use crate::checkpoint;
use crate::dataio;
use crate::error::{Error, Result};
use crate::flags::{self, ParsedArgs};
use crate::manifest::write_manifest;
use crate::pipeline::{self, PairCosineStats};
use crate::report::{self, RunHooks};
use crate::runcfg::RunConfig;

pub fn run(args: &[String]) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ipac: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(args: &[String]) -> Result<()> {
    check_threads_env()?;
    let Some(command) = args.first() else {
        print!("{}", flags::global_help());
        return Err(Error::usage("no command given"));
    };
    if command == "--help" || command == "help" || command == "-h" {
        print!("{}", flags::global_help());
        return Ok(());
    }
    let spec = flags::find_command(command)
        .ok_or_else(|| Error::usage(format!("unknown command {command:?}")))?;
    let rest = &args[1..];
    if rest.iter().any(|a| a == "--help" || a == "-h") {
        print!("{}", flags::command_help(spec));
        return Ok(());
    }
    let parsed = flags::parse(spec, rest)?;
    match spec.name {
        "build-vocab" => cmd_build_vocab(&parsed),
        "pretrain-ner" => cmd_pretrain_ner(&parsed),
        "train-ipac" => cmd_train_ipac(&parsed),
        "eval-ner" => cmd_eval_ner(&parsed),
        "eval-cossim" => cmd_eval_cossim(&parsed),
        "export-embeddings" => cmd_export_embeddings(&parsed),
        "param-count" => cmd_param_count(&parsed),
        "gradcheck" => cmd_gradcheck(&parsed),
        "ablate-temperature" => cmd_ablate_temperature(&parsed),
        "ablate-korean-cap" => cmd_ablate_korean_cap(&parsed),
        "ablate-language" => cmd_ablate_language(&parsed),
        other => Err(Error::usage(format!("unhandled command {other}"))),
    }
}

/// Worker-thread cap; all math here is single-threaded, so any valid value
/// only bounds what the process may spawn.
fn check_threads_env() -> Result<usize> {
    match std::env::var("IPAC_THREADS") {
        Err(_) => Ok(1),
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::usage(format!("IPAC_THREADS must be a positive integer, got {raw:?}"))),
    }
}

fn path_arg(parsed: &ParsedArgs, name: &'static str) -> Result<PathBuf> {
    Ok(PathBuf::from(parsed.require(name)?))
}

fn load_config(parsed: &ParsedArgs) -> Result<RunConfig> {
    let mut cfg = match parsed.get("--config") {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = parsed.get_u64("--seed")? {
        cfg.train.seed = seed;
    }
    if let Some(t) = parsed.get_f64("--temperature")? {
        cfg.train.temperature = t;
    }
    if let Some(cap) = parsed.get_usize("--korean-cap")? {
        cfg.train.korean_cap = cap;
    }
    Ok(cfg)
}

fn load_vocab_for_model(parsed: &ParsedArgs, model: &EncoderModel) -> Result<Vocabulary> {
    let path = path_arg(parsed, "--vocab")?;
    let vocab = dataio::load_vocabulary(&path)?;
    if vocab.len() != model.config.vocab_size {
        return Err(Error::data(format!(
            "vocabulary has {} symbols but the model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    Ok(vocab)
}

fn single_lang(parsed: &ParsedArgs, default: &str) -> Result<String> {
    let lang = parsed.get("--lang").unwrap_or(default);
    if lang.contains(',') {
        return Err(Error::usage("--lang expects a single code here"));
    }
    Ok(lang.to_string())
}

fn cmd_build_vocab(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let out = path_arg(parsed, "--out")?;
    let (records, counts) = dataio::load_conlipa(&data, &SamplingPolicy::unlimited(0))?;
    let mut corpus: Vec<Vec<String>> = Vec::with_capacity(records.len() * 2);
    for r in &records {
        corpus.push(tokenize(&r.ipa_english));
        corpus.push(tokenize(&r.ipa_target));
    }
    if let Some(g2p) = parsed.get("--g2p") {
        let table = dataio::load_g2p_table(Path::new(g2p))?;
        for (_, _, ipa) in table.iter() {
            corpus.push(tokenize(ipa));
        }
    }
    let vocab = Vocabulary::build(corpus.iter().map(|s| s.as_slice()))?;
    dataio::write_vocabulary(&out, &vocab)?;
    eprintln!(
        "built vocabulary from {} records across {} languages",
        records.len(),
        counts.len()
    );
    println!("vocab_size={}", vocab.len());
    Ok(())
}

fn cmd_pretrain_ner(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let g2p_path = path_arg(parsed, "--g2p")?;
    let vocab_path = path_arg(parsed, "--vocab")?;
    let out = path_arg(parsed, "--out")?;
    let mut cfg = load_config(parsed)?;
    if let Some(epochs) = parsed.get_usize("--epochs")? {
        cfg.train.ner_epochs = epochs;
    }
    let max_steps = parsed.get_u64("--max-steps")?;
    let lang = single_lang(parsed, "eng")?;

    let vocab = dataio::load_vocabulary(&vocab_path)?;
    cfg.encoder.vocab_size = vocab.len();
    let table = dataio::load_g2p_table(&g2p_path)?;
    let sentences = dataio::load_conll(&data, parsed.has("--strict-iob"))?;
    let examples = pipeline::encode_ner_examples(&sentences, &table, &lang, &vocab)?;

    let resuming = parsed.get("--resume").is_some();
    let (mut model, mut state) = if let Some(resume) = parsed.get("--resume") {
        let loaded = checkpoint::load_state(Path::new(resume))?;
        if loaded.phase != Phase::Ner {
            return Err(Error::data("resume checkpoint is not a pretraining state"));
        }
        (loaded.model, loaded.state)
    } else {
        let model = EncoderModel::new(cfg.encoder.clone(), mix(cfg.train.seed, 0x0de1))?;
        let state = TrainState::fresh(&cfg.train);
        (model, state)
    };

    write_manifest(
        &out,
        "pretrain-ner",
        cfg.train.seed,
        &cfg,
        &[
            ("corpus", data.as_path()),
            ("g2p", g2p_path.as_path()),
            ("vocab", vocab_path.as_path()),
        ],
    )?;
    let vocab_ref = vocab_path.display().to_string();
    let mut hooks = RunHooks::new(&out, Phase::Ner, &vocab_ref, resuming)?;
    let summary = train_ner(
        &mut model,
        &examples,
        &cfg.train,
        &mut state,
        max_steps,
        &mut hooks,
    )?;
    checkpoint::save_model(&out.join("ner_final.ipac"), &model, &vocab_ref)?;
    checkpoint::save_state(
        &out.join("ner_state.ipacstate"),
        &model,
        &state,
        Phase::Ner,
        &vocab_ref,
    )?;
    eprintln!(
        "pretraining done: {} steps, last loss {:.6}",
        summary.steps_done, summary.last_loss
    );
    println!("steps={}", summary.steps_done);
    println!("last_loss={:.17e}", summary.last_loss);
    Ok(())
}

fn lang_filter(parsed: &ParsedArgs) -> Result<Option<BTreeSet<String>>> {
    match parsed.get("--lang") {
        None | Some("all") => Ok(None),
        Some(csv) => {
            let mut set = BTreeSet::new();
            for code in csv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                if !LANGS.contains(&code) {
                    return Err(Error::usage(format!("unknown language code {code:?}")));
                }
                set.insert(code.to_string());
            }
            if set.is_empty() {
                return Err(Error::usage("--lang list is empty"));
            }
            Ok(Some(set))
        }
    }
}

fn cmd_train_ipac(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let vocab_path = path_arg(parsed, "--vocab")?;
    let out = path_arg(parsed, "--out")?;
    let cfg = load_config(parsed)?;
    let max_steps = parsed.get_u64("--max-steps")?;
    let filter = lang_filter(parsed)?;

    let policy =
        SamplingPolicy::unlimited(cfg.train.seed).with_cap("kor", cfg.train.korean_cap);
    let (mut records, counts) = dataio::load_conlipa(&data, &policy)?;
    if let Some(filter) = &filter {
        records.retain(|r| filter.contains(&r.lang));
    }
    eprintln!(
        "loaded {} pair records ({} languages)",
        records.len(),
        counts.len()
    );

    let resuming = parsed.get("--resume").is_some();
    let (mut model, mut state) = if let Some(resume) = parsed.get("--resume") {
        let loaded = checkpoint::load_state(Path::new(resume))?;
        if loaded.phase != Phase::Ipac {
            return Err(Error::data(
                "resume checkpoint is not a contrastive fine-tuning state",
            ));
        }
        (loaded.model, loaded.state)
    } else if let Some(ckpt) = parsed.get("--checkpoint") {
        let loaded = checkpoint::load_model(Path::new(ckpt))?;
        (loaded.model, TrainState::fresh(&cfg.train))
    } else {
        let mut encoder_cfg = cfg.encoder.clone();
        let vocab = dataio::load_vocabulary(&vocab_path)?;
        encoder_cfg.vocab_size = vocab.len();
        (
            EncoderModel::new(encoder_cfg, mix(cfg.train.seed, 0x0de1))?,
            TrainState::fresh(&cfg.train),
        )
    };
    let vocab = load_vocab_for_model(parsed, &model)?;
    if model.lora.is_none() {
        attach_lora(&mut model, cfg.lora.clone(), mix(cfg.train.seed, 0x10a0))?;
    }

    let pairs = pipeline::encode_pairs(&records, &vocab);
    let groups: Option<Vec<usize>> = parsed.has("--group-by-lang").then(|| {
        records
            .iter()
            .map(|r| LANGS.iter().position(|&l| l == r.lang).unwrap_or(0))
            .collect()
    });

    write_manifest(
        &out,
        "train-ipac",
        cfg.train.seed,
        &cfg,
        &[("corpus", data.as_path()), ("vocab", vocab_path.as_path())],
    )?;
    let vocab_ref = vocab_path.display().to_string();
    let mut hooks = RunHooks::new(&out, Phase::Ipac, &vocab_ref, resuming)?;
    let summary = train_ipac(
        &mut model,
        &pairs,
        groups.as_deref(),
        &cfg.train,
        &mut state,
        max_steps,
        &mut hooks,
    )?;
    checkpoint::save_model(&out.join("ipac_final.ipac"), &model, &vocab_ref)?;
    checkpoint::save_state(
        &out.join("ipac_state.ipacstate"),
        &model,
        &state,
        Phase::Ipac,
        &vocab_ref,
    )?;
    eprintln!(
        "contrastive fine-tuning done: {} steps, last loss {:.6}",
        summary.steps_done, summary.last_loss
    );
    println!("steps={}", summary.steps_done);
    println!("last_loss={:.17e}", summary.last_loss);
    Ok(())
}

fn cmd_eval_ner(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let ckpt = path_arg(parsed, "--checkpoint")?;
    let g2p_path = path_arg(parsed, "--g2p")?;
    let lang = single_lang(parsed, "eng")?;

    let loaded = checkpoint::load_model(&ckpt)?;
    let vocab = load_vocab_for_model(parsed, &loaded.model)?;
    let table = dataio::load_g2p_table(&g2p_path)?;
    let sentences = dataio::load_conll(&data, parsed.has("--strict-iob"))?;
    let result = pipeline::evaluate_ner(&loaded.model, &sentences, &table, &lang, &vocab)?;
    println!("precision={:.6}", result.precision);
    println!("recall={:.6}", result.recall);
    println!("f1={:.6}", result.f1);
    eprintln!(
        "spans: {} matched / {} predicted / {} gold",
        result.matched, result.predicted, result.gold
    );
    if let Some(out) = parsed.get("--out") {
        report::write_csv_table(
            Path::new(out),
            "metric,value",
            &[
                ("precision".to_string(), result.precision),
                ("recall".to_string(), result.recall),
                ("f1".to_string(), result.f1),
            ],
        )?;
    }
    Ok(())
}

fn similarity_inputs(
    records: &[CognatePairRecord],
    vocab: &Vocabulary,
) -> Vec<(
    usize,
    String,
    ipac_core::phoneme::PhonemeSequence,
    ipac_core::phoneme::PhonemeSequence,
    String,
    String,
)> {
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

fn cmd_eval_cossim(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let ckpt = path_arg(parsed, "--checkpoint")?;
    let loaded = checkpoint::load_model(&ckpt)?;
    let vocab = load_vocab_for_model(parsed, &loaded.model)?;
    let (records, _) = dataio::load_conlipa(&data, &SamplingPolicy::unlimited(0))?;
    let inputs = similarity_inputs(&records, &vocab);
    let sim = ipac_core::eval::cosine_pairs(&loaded.model, &inputs)?;

    let per_lang = sim.per_language_mean();
    for (lang, mean) in &per_lang {
        println!("lang={lang} mean_pct={:.2}", 100.0 * mean);
    }
    println!("overall_mean_pct={:.2}", 100.0 * sim.mean_cosine());
    let pct: std::collections::BTreeMap<String, f64> = per_lang
        .iter()
        .map(|(k, v)| (k.clone(), 100.0 * v))
        .collect();
    let mut table: Vec<(String, f64)> = pct.iter().map(|(k, v)| (k.clone(), *v)).collect();
    match aggregate_report(&pct, parsed.has("--population-std")) {
        Ok((mean, std)) => {
            println!("aggregate_mean_pct={mean:.2}");
            println!("aggregate_std_pct={std:.2}");
            table.push(("AVG".to_string(), mean));
            table.push(("STD".to_string(), std));
        }
        Err(_) => eprintln!("aggregate deviation needs at least two languages (sample form)"),
    }
    eprint!("{}", report::aligned_table(&table));
    if let Some(out) = parsed.get("--out") {
        report::write_similarity_csv(Path::new(out), &sim)?;
        let aggregate_path = Path::new(out).with_extension("aggregate.csv");
        report::write_csv_table(&aggregate_path, "language,mean_cosine_pct", &table)?;
    }
    Ok(())
}

fn cmd_export_embeddings(parsed: &ParsedArgs) -> Result<()> {
    let data = path_arg(parsed, "--data")?;
    let ckpt = path_arg(parsed, "--checkpoint")?;
    let out = path_arg(parsed, "--out")?;
    let loaded = checkpoint::load_model(&ckpt)?;
    let vocab = load_vocab_for_model(parsed, &loaded.model)?;
    let (records, _) = dataio::load_conlipa(&data, &SamplingPolicy::unlimited(0))?;
    let inputs = similarity_inputs(&records, &vocab);
    let rows = report::export_embeddings(&out, &loaded.model, &inputs)?;
    println!("rows={rows}");
    Ok(())
}

fn parse_lora_spec(parsed: &ParsedArgs) -> Result<Option<LoraConfig>> {
    let Some(spec) = parsed.get("--lora") else {
        return Ok(None);
    };
    let mut lora = LoraConfig::default();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('=') {
            Some(("r", v)) => {
                lora.r = v
                    .parse()
                    .map_err(|_| Error::usage(format!("bad adapter rank {v:?}")))?
            }
            Some(("alpha", v)) => {
                lora.alpha = v
                    .parse()
                    .map_err(|_| Error::usage(format!("bad adapter alpha {v:?}")))?
            }
            Some(("dropout", v)) => {
                lora.dropout = v
                    .parse()
                    .map_err(|_| Error::usage(format!("bad adapter dropout {v:?}")))?
            }
            Some((k, _)) => return Err(Error::usage(format!("unknown adapter field {k:?}"))),
            None => {
                lora.r = part
                    .parse()
                    .map_err(|_| Error::usage(format!("bad adapter spec {part:?}")))?
            }
        }
    }
    if let Some(targets) = parsed.get("--targets") {
        lora.targets = crate::runcfg::parse_targets(targets).map_err(|e| match e {
            Error::Data(msg) => Error::usage(msg),
            other => other,
        })?;
    }
    Ok(Some(lora))
}

fn cmd_param_count(parsed: &ParsedArgs) -> Result<()> {
    let cfg = load_config(parsed)?;
    let lora = parse_lora_spec(parsed)?;
    let mut include: Vec<&str> = vec!["base", "projection", "ner_head"];
    if lora.is_some() {
        include.push("lora");
    }
    if let Some(csv) = parsed.get("--include") {
        include = Vec::new();
        for part in csv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part {
                "base" | "lora" | "projection" | "ner_head" => include.push(part),
                other => {
                    return Err(Error::usage(format!(
                        "unknown component {other:?} (expected base, lora, projection, ner_head)"
                    )))
                }
            }
        }
    }
    if include.contains(&"lora") && lora.is_none() {
        return Err(Error::usage("counting the adapter needs --lora (e.g. r=8)"));
    }
    let mut total = 0u64;
    for component in ["base", "lora", "projection", "ner_head"] {
        if !include.contains(&component) {
            continue;
        }
        let count = match component {
            "base" => count_base_params(&cfg.encoder),
            "projection" => count_projection_params(&cfg.encoder),
            "ner_head" => count_ner_params(&cfg.encoder),
            "lora" => count_lora_params(&cfg.encoder, lora.as_ref().unwrap()),
            _ => unreachable!(),
        };
        total += count;
        println!("{component}\t{count}");
    }
    println!("total\t{total}");
    Ok(())
}

fn cmd_gradcheck(parsed: &ParsedArgs) -> Result<()> {
    let seed = parsed.get_u64("--seed")?.unwrap_or(2024);
    let suite = parsed.get("--suite").unwrap_or("all");
    let mut results = Vec::new();
    match suite {
        "core" => results.extend(op_gradcheck_suite(seed, 10)?),
        "encoder" => results.push(encoder_gradcheck(seed, 5)?),
        "all" => {
            results.extend(op_gradcheck_suite(seed, 10)?);
            results.push(encoder_gradcheck(seed, 5)?);
        }
        other => {
            return Err(Error::usage(format!(
                "unknown suite {other:?} (expected core, encoder, or all)"
            )))
        }
    }
    let mut worst: Option<&ipac_core::verify::CheckResult> = None;
    for r in &results {
        println!("{}\t{:.3e}", r.name, r.max_rel_err);
        if worst.is_none_or(|w| r.max_rel_err > w.max_rel_err) {
            worst = Some(r);
        }
    }
    if let Some(w) = worst {
        if w.max_rel_err >= DEFAULT_TOLERANCE {
            return Err(Error::Numeric(format!(
                "gradient check failed: {} at {:.3e} (tolerance {DEFAULT_TOLERANCE:.0e})",
                w.name, w.max_rel_err
            )));
        }
    }
    Ok(())
}

struct AblationContext {
    cfg: RunConfig,
    base_model: EncoderModel,
    vocab: Vocabulary,
    records: Vec<CognatePairRecord>,
    eval_pairs: Vec<ipac_core::trainer::PairExample>,
}

fn ablation_context(parsed: &ParsedArgs) -> Result<AblationContext> {
    let data = path_arg(parsed, "--data")?;
    let vocab_path = path_arg(parsed, "--vocab")?;
    let eval_path = path_arg(parsed, "--eval-data")?;
    let cfg = load_config(parsed)?;

    let base_model = if let Some(ckpt) = parsed.get("--checkpoint") {
        checkpoint::load_model(Path::new(ckpt))?.model
    } else {
        let mut encoder_cfg = cfg.encoder.clone();
        let vocab = dataio::load_vocabulary(&vocab_path)?;
        encoder_cfg.vocab_size = vocab.len();
        EncoderModel::new(encoder_cfg, mix(cfg.train.seed, 0x0de1))?
    };
    let vocab = load_vocab_for_model(parsed, &base_model)?;
    let (records, _) = dataio::load_conlipa(&data, &SamplingPolicy::unlimited(0))?;
    let (eval_records, _) = dataio::load_conlipa(&eval_path, &SamplingPolicy::unlimited(0))?;
    let eval_pairs = pipeline::encode_pairs(&eval_records, &vocab);
    Ok(AblationContext {
        cfg,
        base_model,
        vocab,
        records,
        eval_pairs,
    })
}

fn run_ablation_case(
    ctx: &AblationContext,
    records: &[CognatePairRecord],
    temperature: f64,
) -> Result<PairCosineStats> {
    let mut model = ctx.base_model.clone();
    if model.lora.is_none() {
        attach_lora(&mut model, ctx.cfg.lora.clone(), mix(ctx.cfg.train.seed, 0x10a0))?;
    }
    let mut train_cfg = ctx.cfg.train.clone();
    train_cfg.temperature = temperature;
    let pairs = pipeline::encode_pairs(records, &ctx.vocab);
    let mut state = TrainState::fresh(&train_cfg);
    train_ipac(
        &mut model,
        &pairs,
        None,
        &train_cfg,
        &mut state,
        None,
        &mut ipac_core::trainer::NullHooks,
    )?;
    pipeline::pair_cosine_stats(&model, &ctx.eval_pairs)
}

/// Default sweep levels; `--grid` / `--caps` override.
pub const TEMPERATURE_GRID: &str = "0.01,0.05,0.1,0.15,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
pub const KOREAN_CAP_GRID: &str = "16,32,64,128,256,512,1024,2048,4096,7521";

fn emit_report(out: Option<&str>, header: &str, rows: &[String]) -> Result<()> {
    println!("{header}");
    for row in rows {
        println!("{row}");
    }
    if let Some(path) = out {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_ablate_temperature(parsed: &ParsedArgs) -> Result<()> {
    let grid_csv = parsed.get("--grid").unwrap_or(TEMPERATURE_GRID);
    let mut grid = Vec::new();
    for part in grid_csv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let tau: f64 = part
            .parse()
            .map_err(|_| Error::usage(format!("bad temperature {part:?}")))?;
        if !(tau > 0.0) {
            return Err(Error::usage(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        grid.push(tau);
    }
    if grid.is_empty() {
        return Err(Error::usage("temperature grid is empty"));
    }
    let ctx = ablation_context(parsed)?;
    let policy = SamplingPolicy::unlimited(ctx.cfg.train.seed)
        .with_cap("kor", ctx.cfg.train.korean_cap);
    let (records, _) = ipac_core::data::apply_policy(&ctx.records, &policy)?;

    let mut rows = Vec::with_capacity(grid.len());
    for &tau in &grid {
        eprintln!("temperature {tau}: training...");
        let stats = run_ablation_case(&ctx, &records, tau)?;
        rows.push(format!(
            "{tau}\t{:.6}\t{:.6}\t{:.6}",
            stats.mean_positive,
            stats.mean_mismatched,
            stats.gap()
        ));
    }
    emit_report(
        parsed.get("--out"),
        "#temperature\tmean_positive\tmean_mismatched\tgap",
        &rows,
    )
}

fn cmd_ablate_korean_cap(parsed: &ParsedArgs) -> Result<()> {
    let caps_csv = parsed.get("--caps").unwrap_or(KOREAN_CAP_GRID);
    let mut caps = Vec::new();
    for part in caps_csv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        caps.push(
            part.parse::<usize>()
                .map_err(|_| Error::usage(format!("bad cap {part:?}")))?,
        );
    }
    if caps.is_empty() {
        return Err(Error::usage("cap grid is empty"));
    }
    let ctx = ablation_context(parsed)?;
    let counts = ipac_core::data::language_counts(&ctx.records);
    for &cap in &caps {
        let policy = SamplingPolicy::unlimited(ctx.cfg.train.seed).with_cap("kor", cap);
        policy.check_available(&counts)?;
    }

    let mut rows = Vec::with_capacity(caps.len());
    for &cap in &caps {
        eprintln!("korean cap {cap}: training...");
        let policy = SamplingPolicy::unlimited(ctx.cfg.train.seed).with_cap("kor", cap);
        let (records, _) = ipac_core::data::apply_policy(&ctx.records, &policy)?;
        let stats = run_ablation_case(&ctx, &records, ctx.cfg.train.temperature)?;
        rows.push(format!(
            "{cap}\t{:.6}\t{:.6}\t{:.6}",
            stats.mean_positive,
            stats.mean_mismatched,
            stats.gap()
        ));
    }
    emit_report(
        parsed.get("--out"),
        "#korean_cap\tmean_positive\tmean_mismatched\tgap",
        &rows,
    )
}

fn cmd_ablate_language(parsed: &ParsedArgs) -> Result<()> {
    let ctx = ablation_context(parsed)?;
    let policy = SamplingPolicy::unlimited(ctx.cfg.train.seed)
        .with_cap("kor", ctx.cfg.train.korean_cap);
    let (capped, counts) = ipac_core::data::apply_policy(&ctx.records, &policy)?;

    let requested = lang_filter(parsed)?;
    let languages: Vec<String> = match requested {
        Some(set) => {
            for lang in &set {
                if !counts.contains_key(lang) {
                    return Err(Error::data(format!("no records for language {lang:?}")));
                }
            }
            set.into_iter().collect()
        }
        None => LANGS
            .iter()
            .filter(|l| counts.contains_key(**l))
            .map(|l| l.to_string())
            .collect(),
    };

    let mut rows = Vec::new();
    for lang in &languages {
        eprintln!("language {lang}: training...");
        let subset: Vec<CognatePairRecord> = capped
            .iter()
            .filter(|r| &r.lang == lang)
            .cloned()
            .collect();
        let stats = run_ablation_case(&ctx, &subset, ctx.cfg.train.temperature)?;
        rows.push(format!(
            "{lang}\t{:.6}\t{:.6}\t{:.6}",
            stats.mean_positive,
            stats.mean_mismatched,
            stats.gap()
        ));
    }
    eprintln!("all languages: training...");
    let stats = run_ablation_case(&ctx, &capped, ctx.cfg.train.temperature)?;
    rows.push(format!(
        "total\t{:.6}\t{:.6}\t{:.6}",
        stats.mean_positive,
        stats.mean_mismatched,
        stats.gap()
    ));
    emit_report(
        parsed.get("--out"),
        "#language\tmean_positive\tmean_mismatched\tgap",
        &rows,
    )
}
