use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use condkit_core::anchoring::{distill_plan, GuidanceKind};
use condkit_core::Config;
use serde_json::json;

use super::{emit, write_file};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// NDJSON output; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    total_steps: Option<usize>,
    /// Disable anchors; every step is guided by the input view.
    #[arg(long)]
    no_anchoring: bool,
}

impl DistillArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Some(k) = self.anchors {
            v.push(("anchoring.num_anchors".into(), k.to_string()));
        }
        if let Some(n) = self.total_steps {
            v.push(("anchoring.total_steps".into(), n.to_string()));
        }
        if self.no_anchoring {
            v.push(("anchoring.anchoring".into(), "false".into()));
        }
        v
    }
}

pub fn distill(config: &Config, args: &DistillArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = distill_plan(&config.anchoring)?;
    let text = plan.to_ndjson();
    if args.out.as_os_str() == "-" {
        return out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e));
    }
    write_file(&args.out, text.as_bytes())?;
    let anchor_steps = plan.steps.iter().filter(|s| s.guidance == GuidanceKind::Anchor).count();
    emit(
        out,
        &json!({
            "out": args.out.display().to_string(),
            "steps": plan.steps.len(),
            "anchors": plan.header.anchors.len(),
            "anchor_guided_steps": anchor_steps,
        })
        .to_string(),
    )
}
