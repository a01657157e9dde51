//! Run manifests: every training run writes `manifest.txt` beside its
//! checkpoints with the command, seed, source revision, input-file
//! fingerprints, and the full configuration.

use std::fmt::Write as _;
use std::path::Path;

use ipac_core::hash::fnv1a64;

use crate::error::Result;
use crate::runcfg::RunConfig;

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

pub fn file_fingerprint(path: &Path) -> Result<u64> {
    let bytes = std::fs::read(path)?;
    Ok(fnv1a64(&bytes))
}

pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    config: &RunConfig,
    inputs: &[(&str, &Path)],
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut text = String::new();
    let _ = writeln!(text, "command={command}");
    let _ = writeln!(text, "seed={seed}");
    let _ = writeln!(text, "git={}", git_describe());
    for (name, path) in inputs {
        let _ = writeln!(text, "data.{name}.path={}", path.display());
        let _ = writeln!(text, "data.{name}.fnv1a64={:016x}", file_fingerprint(path)?);
    }
    for line in config.to_text().lines() {
        let _ = writeln!(text, "cfg.{line}");
    }
    std::fs::write(out_dir.join("manifest.txt"), text)?;
    Ok(())
}
