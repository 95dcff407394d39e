"""PPM (P6) rendering of range images and panoptic label grids."""

from __future__ import annotations

import numpy as np

from .projection import RangeImage


def range_to_gray(image: RangeImage) -> np.ndarray:
    """Map range r to 8-bit gray via 1 - exp(-r / 30); invalid pixels black."""
    g = 1.0 - np.exp(-image.range_channel / 30.0)
    g = np.where(image.valid, g, 0.0)
    return np.clip(np.rint(g * 255.0), 0, 255).astype(np.uint8)


def label_colors(grid: np.ndarray) -> np.ndarray:
    """Deterministic color per packed label from an integer hash; void black."""
    v = np.asarray(grid, dtype=np.uint64)
    h = v * np.uint64(2654435761)
    h ^= h >> np.uint64(13)
    h = (h * np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    rgb = np.stack(
        [(h >> np.uint64(16)) & np.uint64(255),
         (h >> np.uint64(32)) & np.uint64(255),
         (h >> np.uint64(48)) & np.uint64(255)],
        axis=-1,
    ).astype(np.uint8)
    rgb[v == 0] = 0
    return rgb


def ppm_bytes(rgb: np.ndarray) -> bytes:
    """Serialize an (H, W, 3) uint8 array as binary P6."""
    h, w, _ = rgb.shape
    return f"P6 {w} {h} 255\n".encode() + rgb.astype(np.uint8).tobytes()


def render_frame(image: RangeImage, labels: np.ndarray) -> bytes:
    """Range view stacked above the panoptic view in one P6 image."""
    gray = range_to_gray(image)
    top = np.repeat(gray[:, :, None], 3, axis=2)
    bottom = label_colors(labels)
    return ppm_bytes(np.concatenate([top, bottom], axis=0))
