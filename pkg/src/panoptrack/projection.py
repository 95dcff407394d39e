"""Spherical projection of point clouds into 5-channel range images.

Column is azimuth, row is elevation:

    col = floor(0.5 * (1 - atan2(y, x) / pi) * W)
    row = floor((1 - (arcsin(z / r) + fov_down) / (fov_up + fov_down)) * H)

both clamped into the image. Each pixel keeps its minimum-range point
(z-buffer); at exactly equal range the later point in merge order wins, so
with oldest-first merging the current scan is preferred.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import VOID, ConsistencyError
from .geometry import Trio

DEFAULT_MIN_RANGE = 0.3  # meters; discards ego-vehicle returns


@dataclass(frozen=True)
class ProjectionConfig:
    width: int = 4096
    height: int = 256
    fov_up: float = np.deg2rad(10.0)
    fov_down: float = np.deg2rad(30.0)
    min_range: float = DEFAULT_MIN_RANGE

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.fov_up + self.fov_down <= 0:
            raise ValueError("total field of view must be positive")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    window: int = 5
    range_cutoff: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 1")
        if self.range_cutoff <= 0:
            raise ValueError("range_cutoff must be positive")


@dataclass(frozen=True)
class RangeImage:
    """Projected cloud: channels are (range, intensity, x, y, z).

    winner[r, c] is the merged-point index owning a valid pixel, -1 otherwise.
    pixel_of_point[i] = (row, col) for every projected point, including
    z-buffer losers. Both are None for resized images, where per-point
    provenance no longer exists.
    """

    config: ProjectionConfig
    channels: np.ndarray
    valid: np.ndarray
    winner: np.ndarray | None = None
    pixel_of_point: np.ndarray | None = None

    @property
    def range_channel(self) -> np.ndarray:
        return self.channels[:, :, 0]


def pixel_coords(xyz: np.ndarray, config: ProjectionConfig):
    """(rows, cols, ranges) of points under the spherical mapping."""
    xyz = np.asarray(xyz, dtype=np.float64)
    r = np.linalg.norm(xyz, axis=1)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    yaw = np.arctan2(y, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        pitch = np.arcsin(np.where(r > 0, z / np.where(r > 0, r, 1.0), 0.0))
    fov = config.fov_up + config.fov_down
    cols = np.floor(0.5 * (1.0 - yaw / np.pi) * config.width).astype(np.int64)
    rows = np.floor((1.0 - (pitch + config.fov_down) / fov) * config.height).astype(np.int64)
    np.clip(cols, 0, config.width - 1, out=cols)
    np.clip(rows, 0, config.height - 1, out=rows)
    return rows, cols, r


def project(trio: Trio, config: ProjectionConfig) -> RangeImage:
    """Project a trio into a range image with per-pixel z-buffering."""
    H, W = config.height, config.width
    n = len(trio)
    channels = np.zeros((H, W, 5), dtype=np.float64)
    valid = np.zeros((H, W), dtype=bool)
    winner = np.full((H, W), -1, dtype=np.int64)
    if n == 0:
        return RangeImage(config, channels, valid, winner,
                          np.zeros((0, 2), dtype=np.int64))

    xyz = trio.xyz
    rows, cols, r = pixel_coords(xyz, config)
    pixel_of_point = np.stack([rows, cols], axis=1)

    competing = r >= config.min_range
    if competing.any():
        idx = np.nonzero(competing)[0]
        flat = rows[idx] * W + cols[idx]
        # sort by (pixel, range asc, merge index desc): the first entry per
        # pixel is the winner, so equal ranges favor the later point.
        order = np.lexsort((-idx, r[idx], flat))
        flat_sorted = flat[order]
        _, first = np.unique(flat_sorted, return_index=True)
        winners = idx[order[first]]
        wr, wc = rows[winners], cols[winners]
        valid[wr, wc] = True
        winner[wr, wc] = winners
        channels[wr, wc, 0] = r[winners]
        channels[wr, wc, 1] = trio.intensity[winners]
        channels[wr, wc, 2:5] = xyz[winners]
    else:
        import warnings

        warnings.warn("all points below min_range; image is empty")
    return RangeImage(config, channels, valid, winner, pixel_of_point)


def project_labels(image: RangeImage, labels: np.ndarray, void: np.uint32 = VOID) -> np.ndarray:
    """Label grid from per-point labels: valid pixels take their winner's label."""
    labels = np.asarray(labels, dtype=np.uint32)
    if image.pixel_of_point is None or image.winner is None:
        raise ConsistencyError("label projection requires an unresized image")
    if labels.shape[0] != image.pixel_of_point.shape[0]:
        raise ConsistencyError(
            f"{labels.shape[0]} labels for {image.pixel_of_point.shape[0]} points"
        )
    grid = np.full(image.valid.shape, void, dtype=np.uint32)
    mask = image.valid
    grid[mask] = labels[image.winner[mask]]
    return grid


def _source_coords(n_src: int, n_dst: int) -> np.ndarray:
    """Continuous source coordinates of destination pixel centers."""
    return (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5


def resize(image: RangeImage, new_w: int, new_h: int) -> RangeImage:
    """Bilinear resize of the channels over valid support.

    Invalid source pixels contribute zero weight; a destination pixel is
    valid iff its nearest source pixel is valid.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be >= 1")
    H, W = image.valid.shape
    if (new_w, new_h) == (W, H):
        return image

    ys = _source_coords(H, new_h)
    xs = _source_coords(W, new_w)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, H - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]

    vals = image.channels
    vmask = image.valid.astype(np.float64)
    acc = np.zeros((new_h, new_w, vals.shape[2]), dtype=np.float64)
    wacc = np.zeros((new_h, new_w), dtype=np.float64)
    for yy, fy in ((y0, (1 - wy)), (y1, wy)):
        for xx, fx in ((x0, (1 - wx)), (x1, wx)):
            w = fy * fx * vmask[yy[:, None], xx[None, :]]
            acc += w[:, :, None] * vals[yy[:, None], xx[None, :]]
            wacc += w
    out = np.zeros_like(acc)
    nz = wacc > 0
    out[nz] = acc[nz] / wacc[nz][:, None]

    yn = np.clip(np.rint(ys).astype(np.int64), 0, H - 1)
    xn = np.clip(np.rint(xs).astype(np.int64), 0, W - 1)
    new_valid = image.valid[yn[:, None], xn[None, :]]
    out[~new_valid] = 0.0

    cfg = ProjectionConfig(new_w, new_h, image.config.fov_up, image.config.fov_down,
                           image.config.min_range)
    return RangeImage(cfg, out, new_valid, None, None)


def resize_labels(grid: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Nearest-neighbor resize; labels are never blended."""
    grid = np.asarray(grid)
    H, W = grid.shape
    if (new_w, new_h) == (W, H):
        return grid.copy()
    yn = np.clip(np.rint(_source_coords(H, new_h)).astype(np.int64), 0, H - 1)
    xn = np.clip(np.rint(_source_coords(W, new_w)).astype(np.int64), 0, W - 1)
    return grid[yn[:, None], xn[None, :]]


def knn_unproject(image: RangeImage, pixel_labels: np.ndarray, trio: Trio,
                  config: KnnConfig, void: np.uint32 = VOID) -> np.ndarray:
    """Assign each 3D point a label by voting over nearby range-image pixels.

    For a point at pixel (r, c) with range rho: gather valid window pixels
    with |pixel_range - rho| <= range_cutoff, keep the k nearest by that
    difference, and take the label with the largest Gaussian-weighted vote
    sum(exp(-d^2 / (2 sigma^2))). Vote ties go to the smaller packed label.
    Without candidates the point falls back to its own pixel's label when
    valid, else void.
    """
    pixel_labels = np.asarray(pixel_labels, dtype=np.uint32)
    if image.pixel_of_point is None:
        raise ConsistencyError("knn_unproject requires an unresized image")
    if pixel_labels.shape != image.valid.shape:
        raise ConsistencyError("pixel label grid does not match the image")
    n = len(trio)
    if n == 0:
        return np.zeros(0, dtype=np.uint32)

    H, W = image.valid.shape
    rows = image.pixel_of_point[:, 0]
    cols = image.pixel_of_point[:, 1]
    rho = np.linalg.norm(trio.xyz, axis=1)

    half = config.window // 2
    offs = np.arange(-half, half + 1)
    d_rows = (rows[:, None, None] + offs[None, :, None])
    d_cols = (cols[:, None, None] + offs[None, None, :])
    inside = (d_rows >= 0) & (d_rows < H) & (d_cols >= 0) & (d_cols < W)
    d_rows = np.clip(d_rows, 0, H - 1)
    d_cols = np.clip(d_cols, 0, W - 1)

    cand_valid = image.valid[d_rows, d_cols] & inside
    cand_range = image.range_channel[d_rows, d_cols]
    cand_label = pixel_labels[d_rows, d_cols]

    w2 = config.window * config.window
    cand_valid = cand_valid.reshape(n, w2)
    delta = np.abs(cand_range.reshape(n, w2) - rho[:, None])
    cand_label = cand_label.reshape(n, w2)

    ok = cand_valid & (delta <= config.range_cutoff)
    delta = np.where(ok, delta, np.inf)

    # k nearest by range difference; stable sort makes window-offset order
    # the deterministic tie-break among equal deltas.
    k = min(config.k, w2)
    order = np.argsort(delta, axis=1, kind="stable")[:, :k]
    sel_delta = np.take_along_axis(delta, order, axis=1)
    sel_label = np.take_along_axis(cand_label, order, axis=1)
    sel_ok = np.isfinite(sel_delta)

    weights = np.where(sel_ok, np.exp(-(sel_delta**2) / (2.0 * config.sigma**2)), 0.0)

    out = np.full(n, void, dtype=np.uint32)

    # accumulate weights per (point, label) and take the heaviest label,
    # ties broken by smaller packed value
    pi, ci = np.nonzero(sel_ok)
    if pi.size:
        labs = sel_label[pi, ci].astype(np.int64)
        wts = weights[pi, ci]
        sort = np.lexsort((labs, pi))
        pi_s, labs_s, wts_s = pi[sort], labs[sort], wts[sort]
        boundary = np.ones(pi_s.size, dtype=bool)
        boundary[1:] = (pi_s[1:] != pi_s[:-1]) | (labs_s[1:] != labs_s[:-1])
        starts = np.nonzero(boundary)[0]
        sums = np.add.reduceat(wts_s, starts)
        g_pts = pi_s[starts]
        g_labs = labs_s[starts]
        # per point: max summed weight, then smaller label
        pick = np.lexsort((g_labs, -sums, g_pts))
        first = np.ones(pick.size, dtype=bool)
        first[1:] = g_pts[pick[1:]] != g_pts[pick[:-1]]
        chosen = pick[first]
        out[g_pts[chosen]] = g_labs[chosen].astype(np.uint32)

    # fallback: no candidate survives the cutoff
    has_cand = ok.any(axis=1)
    fb = ~has_cand
    if fb.any():
        center_valid = image.valid[rows[fb], cols[fb]]
        fb_idx = np.nonzero(fb)[0]
        out[fb_idx[center_valid]] = pixel_labels[rows[fb_idx[center_valid]],
                                                 cols[fb_idx[center_valid]]]
        out[fb_idx[~center_valid]] = void
    return out
