//! Declarative flag registry: every command lists its flags with
//! documentation, the parser rejects anything not in the registry, and help
//! text is generated from the same table, so an undocumented flag cannot
//! exist.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FlagSpec {
    /// Flag name including the leading dashes, e.g. `--data`.
    pub name: &'static str,
    /// Whether the flag consumes a value (`--flag value` or `--flag=value`).
    pub takes_value: bool,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub flags: &'static [FlagSpec],
}

const SEED: FlagSpec = FlagSpec {
    name: "--seed",
    takes_value: true,
    doc: "master seed for every random choice in the run (overrides the config)",
};
const CONFIG: FlagSpec = FlagSpec {
    name: "--config",
    takes_value: true,
    doc: "run configuration file (key=value lines)",
};
const DATA: FlagSpec = FlagSpec {
    name: "--data",
    takes_value: true,
    doc: "input corpus file",
};
const CHECKPOINT: FlagSpec = FlagSpec {
    name: "--checkpoint",
    takes_value: true,
    doc: "model checkpoint to start from",
};
const OUT: FlagSpec = FlagSpec {
    name: "--out",
    takes_value: true,
    doc: "output file or directory",
};
const VOCAB: FlagSpec = FlagSpec {
    name: "--vocab",
    takes_value: true,
    doc: "vocabulary file (one symbol per line)",
};
const G2P: FlagSpec = FlagSpec {
    name: "--g2p",
    takes_value: true,
    doc: "grapheme-to-phoneme table (lang<TAB>grapheme<TAB>ipa)",
};
const EVAL_DATA: FlagSpec = FlagSpec {
    name: "--eval-data",
    takes_value: true,
    doc: "held-out cognate pair file scored after each ablation run",
};
const MAX_STEPS: FlagSpec = FlagSpec {
    name: "--max-steps",
    takes_value: true,
    doc: "stop after this many optimizer steps",
};
const RESUME: FlagSpec = FlagSpec {
    name: "--resume",
    takes_value: true,
    doc: "resume from a train-state checkpoint written by a previous run",
};
const STRICT_IOB: FlagSpec = FlagSpec {
    name: "--strict-iob",
    takes_value: false,
    doc: "reject orphan I-X tags instead of repairing them to B-X",
};
const LANG: FlagSpec = FlagSpec {
    name: "--lang",
    takes_value: true,
    doc: "language code, or comma-separated codes where a set is accepted",
};
const TEMPERATURE: FlagSpec = FlagSpec {
    name: "--temperature",
    takes_value: true,
    doc: "contrastive softmax temperature (overrides the config)",
};
const KOREAN_CAP: FlagSpec = FlagSpec {
    name: "--korean-cap",
    takes_value: true,
    doc: "cap on Korean records sampled for contrastive training",
};

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "build-vocab",
        about: "build a phoneme vocabulary from the IPA fields of a cognate pair file",
        flags: &[
            DATA,
            OUT,
            FlagSpec {
                name: "--g2p",
                takes_value: true,
                doc: "also fold the IPA strings of this grapheme-to-phoneme table into the vocabulary",
            },
        ],
    },
    CommandSpec {
        name: "pretrain-ner",
        about: "supervised tag pretraining on a two-column token/tag corpus",
        flags: &[
            DATA,
            G2P,
            VOCAB,
            CONFIG,
            OUT,
            SEED,
            FlagSpec {
                name: "--epochs",
                takes_value: true,
                doc: "number of pretraining epochs (overrides the config)",
            },
            MAX_STEPS,
            RESUME,
            STRICT_IOB,
            LANG,
        ],
    },
    CommandSpec {
        name: "train-ipac",
        about: "frozen-base contrastive fine-tuning with low-rank adapters",
        flags: &[
            DATA,
            CHECKPOINT,
            VOCAB,
            CONFIG,
            OUT,
            SEED,
            TEMPERATURE,
            KOREAN_CAP,
            LANG,
            MAX_STEPS,
            RESUME,
            FlagSpec {
                name: "--group-by-lang",
                takes_value: false,
                doc: "draw every batch from a single language instead of mixing",
            },
        ],
    },
    CommandSpec {
        name: "eval-ner",
        about: "span precision/recall/F1 of a checkpoint on a tagged corpus",
        flags: &[DATA, CHECKPOINT, G2P, VOCAB, LANG, STRICT_IOB, OUT],
    },
    CommandSpec {
        name: "eval-cossim",
        about: "cosine similarity of paired word embeddings, with per-language means",
        flags: &[
            DATA,
            CHECKPOINT,
            VOCAB,
            OUT,
            FlagSpec {
                name: "--population-std",
                takes_value: false,
                doc: "aggregate with population (n) instead of sample (n-1) deviation",
            },
        ],
    },
    CommandSpec {
        name: "export-embeddings",
        about: "write both sides of every pair as CSV embedding rows",
        flags: &[DATA, CHECKPOINT, VOCAB, OUT],
    },
    CommandSpec {
        name: "param-count",
        about: "exact closed-form parameter counts per component",
        flags: &[
            CONFIG,
            FlagSpec {
                name: "--lora",
                takes_value: true,
                doc: "adapter spec to count, e.g. r=8",
            },
            FlagSpec {
                name: "--targets",
                takes_value: true,
                doc: "adapter targets: `all` or a comma list of q,k,v,o,up,down",
            },
            FlagSpec {
                name: "--include",
                takes_value: true,
                doc: "components to count: comma list of base,lora,projection,ner_head",
            },
        ],
    },
    CommandSpec {
        name: "gradcheck",
        about: "finite-difference verification of analytic gradients",
        flags: &[
            SEED,
            FlagSpec {
                name: "--suite",
                takes_value: true,
                doc: "which checks to run: core, encoder, or all",
            },
        ],
    },
    CommandSpec {
        name: "ablate-temperature",
        about: "contrastive fine-tuning sweep over softmax temperatures",
        flags: &[
            DATA,
            CHECKPOINT,
            VOCAB,
            CONFIG,
            EVAL_DATA,
            OUT,
            SEED,
            FlagSpec {
                name: "--grid",
                takes_value: true,
                doc: "comma-separated positive temperatures to sweep",
            },
        ],
    },
    CommandSpec {
        name: "ablate-korean-cap",
        about: "contrastive fine-tuning sweep over Korean sample caps",
        flags: &[
            DATA,
            CHECKPOINT,
            VOCAB,
            CONFIG,
            EVAL_DATA,
            OUT,
            SEED,
            FlagSpec {
                name: "--caps",
                takes_value: true,
                doc: "comma-separated Korean record caps to sweep",
            },
        ],
    },
    CommandSpec {
        name: "ablate-language",
        about: "contrastive fine-tuning once per source language, plus all together",
        flags: &[DATA, CHECKPOINT, VOCAB, CONFIG, EVAL_DATA, OUT, SEED, LANG],
    },
];

pub fn find_command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Parsed flag values for one command.
#[derive(Debug, Default)]
pub struct ParsedArgs {
    values: BTreeMap<&'static str, String>,
    present: Vec<&'static str>,
}

impl ParsedArgs {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    pub fn require(&self, name: &'static str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| Error::usage(format!("missing required flag {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.present.iter().any(|&n| n == name)
    }

    pub fn get_u64(&self, name: &str) -> Result<Option<u64>> {
        self.get(name)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::usage(format!("{name} expects an unsigned integer")))
            })
            .transpose()
    }

    pub fn get_usize(&self, name: &str) -> Result<Option<usize>> {
        self.get(name)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::usage(format!("{name} expects an unsigned integer")))
            })
            .transpose()
    }

    pub fn get_f64(&self, name: &str) -> Result<Option<f64>> {
        self.get(name)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::usage(format!("{name} expects a number")))
            })
            .transpose()
    }
}

/// Strict parse against the registry: unknown flags and missing values are
/// usage errors, never warnings.
pub fn parse(spec: &CommandSpec, args: &[String]) -> Result<ParsedArgs> {
    let mut parsed = ParsedArgs::default();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let (name, inline_value) = match arg.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (arg.as_str(), None),
        };
        let flag = spec
            .flags
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::usage(format!("unknown flag {name} for `{}`", spec.name)))?;
        parsed.present.push(flag.name);
        if flag.takes_value {
            let value = match inline_value {
                Some(v) => v,
                None => {
                    i += 1;
                    args.get(i)
                        .cloned()
                        .ok_or_else(|| Error::usage(format!("{name} expects a value")))?
                }
            };
            parsed.values.insert(flag.name, value);
        } else if inline_value.is_some() {
            return Err(Error::usage(format!("{name} does not take a value")));
        }
        i += 1;
    }
    Ok(parsed)
}

pub fn command_help(spec: &CommandSpec) -> String {
    let mut out = format!("ipac {} — {}\n\nflags:\n", spec.name, spec.about);
    let width = spec.flags.iter().map(|f| f.name.len()).max().unwrap_or(0);
    for f in spec.flags {
        let value = if f.takes_value { " <value>" } else { "        " };
        out.push_str(&format!(
            "  {:<width$}{value}  {}\n",
            f.name,
            f.doc,
            width = width
        ));
    }
    out
}

pub fn global_help() -> String {
    let mut out = String::from(
        "ipac — phonemic contrastive learning toolkit\n\nusage: ipac <command> [flags]\n\ncommands:\n",
    );
    let width = COMMANDS.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in COMMANDS {
        out.push_str(&format!("  {:<width$}  {}\n", c.name, c.about, width = width));
    }
    out.push_str("\nrun `ipac <command> --help` for the command's flags\n");
    out.push_str("environment: IPAC_THREADS caps worker threads (default 1 for determinism)\n");
    out
}
