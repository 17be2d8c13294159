use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use condkit_core::metrics::{lpips_external, psnr, ssim, Image};
use condkit_core::Config;

use crate::error::CliError;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted PNGs, named like their ground truth.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth PNGs.
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated subset of psnr, ssim, lpips.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// LPIPS command template with `{a}` and `{b}` placeholders.
    #[arg(long)]
    lpips_cmd: Option<String>,
    /// CSV output; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Some(m) = &self.metrics {
            let items: Vec<String> = m.iter().map(|s| crate::toml_string(s.trim())).collect();
            v.push(("metrics.metrics".into(), format!("[{}]", items.join(", "))));
        }
        if let Some(cmd) = &self.lpips_cmd {
            v.push(("metrics.lpips_cmd".into(), crate::toml_string(cmd)));
        }
        v
    }
}

fn pngs(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir.display(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

fn score(metric: &str, pred: &Path, gt: &Path, a: &Image, b: &Image, lpips: Option<&str>) -> Result<f64, CliError> {
    Ok(match metric {
        "psnr" => psnr(a, b)?,
        "ssim" => ssim(a, b)?,
        "lpips" => lpips_external(pred, gt, lpips.expect("checked before scoring"))?,
        other => unreachable!("config validation admits no metric {other}"),
    })
}

pub fn run(config: &Config, args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let metrics = &config.metrics.metrics;
    if metrics.is_empty() {
        return Err(CliError::Usage("no metrics selected".into()));
    }
    let lpips = config.metrics.lpips_cmd.as_deref();
    if metrics.iter().any(|m| m == "lpips") && lpips.is_none() {
        return Err(CliError::Usage("lpips requires --lpips-cmd".into()));
    }
    let names = pngs(&args.gt)?;
    if names.is_empty() {
        return Err(CliError::Data(format!("no PNG files in {}", args.gt.display())));
    }

    let mut rows = Vec::with_capacity(names.len());
    for name in &names {
        let (gt_path, pred_path) = (args.gt.join(name), args.pred.join(name));
        if !pred_path.is_file() {
            return Err(CliError::Data(format!("missing prediction {}", pred_path.display())));
        }
        let (a, b) = (Image::open(&pred_path)?, Image::open(&gt_path)?);
        let scores = metrics
            .iter()
            .map(|m| score(m, &pred_path, &gt_path, &a, &b, lpips))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((name.clone(), scores));
    }
    let means: Vec<f64> = (0..metrics.len())
        .map(|k| rows.iter().map(|(_, s)| s[k]).sum::<f64>() / rows.len() as f64)
        .collect();

    let mut sink: Box<dyn Write + '_> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p.display(), e))?)),
        None => Box::new(&mut *out),
    };
    let mut text = format!("# condkit-eval v1\nimage,{}\n", metrics.join(","));
    for (name, scores) in rows.iter().map(|(n, s)| (n.as_str(), s)).chain([("mean", &means)]) {
        let cells: Vec<String> = scores.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    sink.write_all(text.as_bytes()).and_then(|()| sink.flush()).map_err(|e| CliError::io("eval output", e))
}
