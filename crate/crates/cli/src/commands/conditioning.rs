use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use condkit_core::conditioning::{compute, ConditioningVector, SceneView, Variant, ViewerDepth};
use condkit_core::dataset::{ingest_scene_dir, SceneRecord, Shard};
use condkit_core::depth::{scene_scale_agg_with, viewer_scale_with, DepthMap, QuantileMethod};
use condkit_core::Config;
use serde_json::json;

use super::{emit, write_file};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct ConditioningArgs {
    /// Scene directory, or a shard file together with `--scene-id`.
    #[arg(long)]
    scene: PathBuf,
    /// Scene to pick from a shard; defaults to the first.
    #[arg(long)]
    scene_id: Option<String>,
    /// Input view index.
    #[arg(long)]
    i: usize,
    /// Target view index.
    #[arg(long)]
    j: usize,
    /// One of zero123, sixdof, sixdof_norm, sixdof_agg, sixdof_viewer, or `all`.
    #[arg(long)]
    variant: Option<String>,
    /// Scale for sixdof_viewer instead of the input view's depth.
    #[arg(long)]
    viewer_scale: Option<f64>,
    /// Write the binary encodings, concatenated, to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Print a readable breakdown instead of NDJSON.
    #[arg(long)]
    human: bool,
}

impl ConditioningArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        match self.variant.as_deref() {
            Some("all") | None => Vec::new(),
            Some(v) => vec![("conditioning.variant".into(), crate::toml_string(v))],
        }
    }
}

pub fn load_scene(path: &Path, scene_id: Option<&str>) -> Result<SceneRecord, CliError> {
    if path.is_dir() {
        return Ok(ingest_scene_dir(path)?);
    }
    let shard = Shard::open(path)?;
    let index = match scene_id {
        None => 0,
        Some(id) => shard
            .manifest
            .scenes
            .iter()
            .position(|e| e.scene_id == id)
            .ok_or_else(|| CliError::Data(format!("scene {id:?} not in shard {}", shard.shard_id)))?,
    };
    Ok(shard.read_scene(index)?)
}

/// Depth used for the viewer-centric scale: the input view's map,
/// subsampled, which must be dense.
pub fn viewer_depth(scene: &SceneView, downsample: usize) -> Result<DepthMap, CliError> {
    let i = scene.input_index();
    let d = scene
        .depths()
        .get(i)
        .ok_or_else(|| CliError::Data(format!("view {i} has no depth map")))?;
    if !d.is_dense() {
        return Err(CliError::Data(format!(
            "view {i}: depth has {} holes; infill it first or pass --viewer-scale",
            d.width() * d.height() - d.valid_count()
        )));
    }
    Ok(d.downsample(downsample))
}

fn scale_used(
    v: Variant,
    s: &SceneView,
    viewer: &ViewerDepth<'_>,
    method: QuantileMethod,
) -> Result<Option<f64>, CliError> {
    Ok(match v {
        Variant::Zero123 => None,
        Variant::Sixdof => Some(1.0),
        Variant::SixdofNorm => Some(s.camera_spread()),
        Variant::SixdofAgg => Some(scene_scale_agg_with(s.depths(), method)?),
        Variant::SixdofViewer => match viewer {
            ViewerDepth::Scale(q) => Some(*q),
            ViewerDepth::Infilled(d) => Some(viewer_scale_with(d, method)?),
            ViewerDepth::FromScene => None,
        },
    })
}

fn human(out: &mut dyn Write, v: &ConditioningVector, scale: Option<f64>) -> Result<(), CliError> {
    emit(out, &format!("{} ({} entries)", v.variant, v.len()))?;
    match v.pose_block() {
        Some(pose) => {
            emit(out, "  relative pose:")?;
            for row in pose.chunks(4) {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:>12.6}")).collect();
                emit(out, &format!("    {}", cells.join(" ")))?;
            }
            if let Some(q) = scale {
                emit(out, &format!("  translation scale: {q}"))?;
            }
            let f = v.fov_block().expect("6dof vectors carry a fov block");
            emit(out, &format!("  fov embedding: f={} sin={} cos={}", f[0], f[1], f[2]))?;
        }
        None => {
            let e = &v.entries;
            emit(
                out,
                &format!("  d_elevation={} d_azimuth={} d_radius={}", e[0], e[1], e[2]),
            )?;
        }
    }
    Ok(())
}

pub fn run(config: &Config, args: &ConditioningArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let variants: Vec<Variant> = match args.variant.as_deref() {
        Some("all") => Variant::ALL.to_vec(),
        _ => vec![config.conditioning.variant],
    };
    let record = load_scene(&args.scene, args.scene_id.as_deref())?;
    let scene = record.scene_view(args.i, args.j)?;
    let method = config.depth.quantile;
    let depth_storage;
    let viewer = match args.viewer_scale {
        Some(q) => ViewerDepth::Scale(q),
        None if variants.contains(&Variant::SixdofViewer) => {
            depth_storage = viewer_depth(&scene, config.depth.downsample)?;
            ViewerDepth::Infilled(&depth_storage)
        }
        None => ViewerDepth::FromScene,
    };

    let mut binary = Vec::new();
    if !args.human {
        emit(
            out,
            &json!({
                "format": "condkit-conditioning",
                "version": 1,
                "scene_id": record.scene_id,
                "i": args.i,
                "j": args.j,
                "fov": record.fov,
                "quantile": method,
            })
            .to_string(),
        )?;
    }
    for v in variants {
        let vector = compute(v, &scene, viewer, method)?;
        let scale = scale_used(v, &scene, &viewer, method)?;
        let bytes = vector.to_bytes();
        if args.human {
            human(out, &vector, scale)?;
        } else {
            emit(
                out,
                &json!({
                    "variant": v.name(),
                    "tag": v.tag(),
                    "length": vector.len(),
                    "scale": scale,
                    "entries": vector.entries,
                })
                .to_string(),
            )?;
        }
        binary.extend_from_slice(&bytes);
    }
    if let Some(path) = &args.out {
        write_file(path, &binary)?;
    }
    Ok(())
}
