"""Writes the small three-view fixture scene used by the CLI tests.

Layout matches a scene directory inside a shard: meta.json, poses.bin
(16 little-endian f32 per view, row-major camera-to-world), depth_NNNN.f32,
mask_NNNN.u8 and image_NNNN.png.
"""
import json
import os
import struct

import numpy as np
from PIL import Image

OUT = os.path.join(os.path.dirname(__file__), "scene")
W, H = 16, 12


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = x, y, z, eye
    return m


def main():
    os.makedirs(OUT, exist_ok=True)
    eyes = [(2.0, 0.0, 0.6), (0.0, 2.2, 0.4), (-1.8, -0.5, 0.8)]
    poses = b""
    for i, eye in enumerate(eyes):
        poses += struct.pack("<16f", *look_at(eye, (0.0, 0.0, 0.2)).reshape(-1))
        u, v = np.meshgrid(np.arange(W), np.arange(H))
        depth = (1.2 + 0.5 * i + 0.05 * u + 0.03 * v).astype("<f4")
        depth.tofile(os.path.join(OUT, f"depth_{i:04d}.f32"))
        np.ones((H, W), dtype=np.uint8).tofile(os.path.join(OUT, f"mask_{i:04d}.u8"))
        rgb = np.stack([u * 15, v * 20, np.full_like(u, 60 * i)], axis=-1).astype(np.uint8)
        Image.fromarray(rgb, "RGB").save(os.path.join(OUT, f"image_{i:04d}.png"))
    with open(os.path.join(OUT, "poses.bin"), "wb") as f:
        f.write(poses)
    meta = {
        "scene_id": "fixture-ring",
        "fov": 0.8,
        "convention": "camera_to_world",
        "source": "fixture",
        "num_views": len(eyes),
        "depth_shapes": [[W, H]] * len(eyes),
        "quantile": "linear",
    }
    with open(os.path.join(OUT, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)


if __name__ == "__main__":
    main()
