use std::io::{Cursor, Write};
use std::path::PathBuf;

use clap::Args;
use condkit_core::dataset::{ingest_scene_dir, write_scene_dir, DepthGrid};
use condkit_core::preprocess::{
    fov_from_intrinsics, letterbox_depth, letterbox_image, letterbox_intrinsics, letterbox_layout,
    square_crop_resize, square_crop_resize_depth, square_crop_resize_image, Intrinsics, DTU_EVAL_SIZE,
};
use condkit_core::Config;
use image::{ImageFormat, RgbImage};
use serde_json::json;

use super::emit;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Scene directory.
    #[arg(long)]
    input: PathBuf,
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Side of the square training crop.
    #[arg(long)]
    size: Option<u32>,
    /// Letterbox to 400×300 for evaluation instead of square cropping.
    #[arg(long, conflicts_with = "size")]
    dtu: bool,
}

impl PreprocessArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        self.size
            .map(|s| ("preprocess.size".to_string(), s.to_string()))
            .into_iter()
            .collect()
    }
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>, CliError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn run(config: &Config, args: &PreprocessArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scene = ingest_scene_dir(&args.input)?;
    let images: Vec<Option<RgbImage>> = scene
        .views
        .iter()
        .map(|v| {
            (!v.image_png.is_empty())
                .then(|| image::load_from_memory(&v.image_png).map(|i| i.to_rgb8()))
                .transpose()
        })
        .collect::<Result<_, _>>()?;
    let (w, h) = match &images[0] {
        Some(img) => img.dimensions(),
        None => (scene.views[0].depth.width as u32, scene.views[0].depth.height as u32),
    };
    let intrinsics = match scene.intrinsics {
        Some(k) => k,
        None => Intrinsics::centered(w as f64 / (2.0 * (scene.fov / 2.0).tan()), w, h)?,
    };
    if (intrinsics.width, intrinsics.height) != (w, h) {
        return Err(CliError::Data(format!(
            "intrinsics describe {}x{} but view 0 is {w}x{h}",
            intrinsics.width, intrinsics.height
        )));
    }
    let size = config.preprocess.size;
    let new_intrinsics = if args.dtu {
        let (cw, ch) = DTU_EVAL_SIZE;
        letterbox_intrinsics(&intrinsics, &letterbox_layout(w, h, cw, ch)?)
    } else {
        square_crop_resize(&intrinsics, size)?
    };

    for (i, (view, img)) in scene.views.iter_mut().zip(&images).enumerate() {
        if let Some(img) = img {
            if img.dimensions() != (w, h) {
                return Err(CliError::Data(format!("view {i}: image size differs from view 0")));
            }
            let processed = if args.dtu {
                let (cw, ch) = DTU_EVAL_SIZE;
                letterbox_image(img, &letterbox_layout(w, h, cw, ch)?)
            } else {
                square_crop_resize_image(img, size)
            };
            view.image_png = encode_png(&processed)?;
        }
        let depth = view.depth.to_depth_map()?;
        let processed = if args.dtu {
            let (cw, ch) = DTU_EVAL_SIZE;
            letterbox_depth(&depth, &letterbox_layout(depth.width() as u32, depth.height() as u32, cw, ch)?)
        } else {
            square_crop_resize_depth(&depth, size)
        };
        view.depth = DepthGrid::from_depth_map(&processed);
    }
    scene.fov = fov_from_intrinsics(&new_intrinsics);
    scene.intrinsics = Some(new_intrinsics);
    write_scene_dir(&scene, &args.out)?;
    emit(
        out,
        &json!({
            "scene_id": scene.scene_id,
            "views": scene.views.len(),
            "width": new_intrinsics.width,
            "height": new_intrinsics.height,
            "fov": scene.fov,
            "intrinsics": new_intrinsics,
        })
        .to_string(),
    )
}
