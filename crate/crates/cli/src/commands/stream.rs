use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Args;
use condkit_core::dataset::{parallel_stream, ResidentGauge, Shard, StreamOptions};
use condkit_core::Config;
use serde_json::json;

use super::emit;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Glob matching shard files, e.g. `'shards/*.tar'`.
    #[arg(long)]
    shards: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Expected pairs per scene.
    #[arg(long)]
    rate: Option<f64>,
    /// Wall-clock budget; the stream restarts until it is spent.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    /// Stop after one pass over the shards.
    #[arg(long)]
    one_epoch: bool,
    #[arg(long)]
    scene_budget: Option<usize>,
    /// Write every sample id as NDJSON.
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
}

impl BenchArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Some(w) = self.workers {
            v.push(("dataset.workers".into(), w.to_string()));
        }
        if let Some(r) = self.rate {
            v.push(("dataset.rate".into(), format!("{r:?}")));
        }
        if let Some(b) = self.scene_budget {
            v.push(("dataset.scene_budget".into(), b.to_string()));
        }
        if self.one_epoch {
            v.push(("dataset.one_epoch".into(), "true".into()));
        }
        v
    }
}

/// High-water resident set size, from `/proc/self/status`.
fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

pub fn bench(config: &Config, args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(args.seconds.is_finite() && args.seconds > 0.0) {
        return Err(CliError::Usage("--seconds must be positive".into()));
    }
    let mut paths: Vec<PathBuf> = glob::glob(&args.shards)
        .map_err(|e| CliError::Usage(format!("bad glob {:?}: {e}", args.shards)))?
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))?;
    paths.sort();
    let shards = paths.iter().map(|p| Shard::open(p)).collect::<Result<Vec<_>, _>>()?;

    let ds = &config.dataset;
    let gauge = ResidentGauge::new();
    let base = StreamOptions {
        rate: ds.rate,
        seed: config.seed,
        pair_count: ds.pair_count,
        scene_budget: ds.scene_budget,
        epoch: 0,
        gauge: Some(gauge.clone()),
    };
    let mut dump = match &args.dump {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::io(p.display(), e))?;
            let mut w = BufWriter::new(f);
            let header = json!({
                "format": "condkit-stream-dump",
                "version": 1,
                "seed": config.seed,
                "rate": ds.rate,
                "workers": ds.workers,
                "shards": shards.len(),
            });
            writeln!(w, "{header}").map_err(|e| CliError::io(p.display(), e))?;
            Some(w)
        }
        None => None,
    };

    let budget = Duration::from_secs_f64(args.seconds);
    let start = Instant::now();
    let (mut samples, mut bytes, mut epochs) = (0u64, 0u64, 0u64);
    let mut errors = BTreeSet::new();
    let mut first_error = None;
    'outer: loop {
        let opts = StreamOptions {
            epoch: epochs,
            ..base.clone()
        };
        let before = samples;
        for item in parallel_stream(&shards, ds.workers, opts)? {
            match item {
                Ok(s) => {
                    samples += 1;
                    bytes += s.byte_len() as u64;
                    if let Some(w) = dump.as_mut() {
                        let line = json!({
                            "epoch": epochs,
                            "sample_id": s.sample_id(),
                            "shard_id": s.shard_id(),
                            "scene_id": s.scene_id(),
                            "i": s.input_index(),
                            "j": s.target_index(),
                        });
                        writeln!(w, "{line}").map_err(|e| CliError::io("dump", e))?;
                    }
                }
                Err(e) => {
                    if errors.insert(e.to_string()) {
                        eprintln!("condkit: stream error: {e}");
                    }
                    first_error.get_or_insert(e);
                }
            }
            if start.elapsed() >= budget {
                epochs += 1;
                break 'outer;
            }
        }
        epochs += 1;
        if ds.one_epoch || samples == before {
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(mut w) = dump {
        w.flush().map_err(|e| CliError::io("dump", e))?;
    }
    let report = json!({
        "format": "condkit-stream-bench",
        "version": 1,
        "shards": shards.len(),
        "workers": ds.workers,
        "rate": ds.rate,
        "epochs": epochs,
        "samples": samples,
        "bytes": bytes,
        "elapsed_seconds": elapsed,
        "samples_per_sec": samples as f64 / elapsed,
        "bytes_per_sec": bytes as f64 / elapsed,
        "peak_rss_bytes": peak_rss_bytes(),
        "peak_resident_scenes": gauge.peak(),
        "scene_budget": ds.scene_budget,
        "errors": errors.len(),
    });
    emit(out, &report.to_string())?;
    match first_error {
        None => Ok(()),
        Some(e) => Err(e.into()),
    }
}
