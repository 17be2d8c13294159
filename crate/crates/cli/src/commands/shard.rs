use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use condkit_core::dataset::{build_shards, Shard};
use condkit_core::Config;
use serde_json::json;

use super::emit;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory holding one subdirectory per scene.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `shard-NNNNNN.tar` files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    scenes_per_shard: Option<usize>,
}

impl BuildArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        self.scenes_per_shard
            .map(|n| ("dataset.scenes_per_shard".to_string(), n.to_string()))
            .into_iter()
            .collect()
    }
}

pub fn build(config: &Config, args: &BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let shards = build_shards(&args.input, &args.out, config.dataset.scenes_per_shard)?;
    for s in &shards {
        let bytes = std::fs::metadata(&s.path).map(|m| m.len()).unwrap_or(0);
        emit(
            out,
            &json!({
                "shard": s.path.display().to_string(),
                "shard_id": s.shard_id,
                "scenes": s.len(),
                "bytes": bytes,
            })
            .to_string(),
        )?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    shard: PathBuf,
    /// Read every scene and check its checksums and manifest offset.
    #[arg(long)]
    verify: bool,
}

pub fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let shard = Shard::open(&args.shard)?;
    let text = serde_json::to_string_pretty(&shard.manifest).expect("manifest serializes");
    emit(out, &text)?;
    if !args.verify {
        return Ok(());
    }
    let mut failures = Vec::new();
    for (i, entry) in shard.manifest.scenes.iter().enumerate() {
        let status = match shard.read_scene(i) {
            Ok(_) => "ok".to_string(),
            Err(e) => {
                let msg = e.to_string();
                failures.push(e);
                msg
            }
        };
        emit(out, &json!({"scene_id": entry.scene_id, "status": status}).to_string())?;
    }
    match failures.into_iter().next() {
        None => Ok(()),
        Some(first) => Err(first.into()),
    }
}
