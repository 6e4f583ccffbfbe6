"""
Random mirror, rotation, scaling and elastic deformation of training slices.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import map_coordinates, zoom

from pathogan.models.domain import ImageSlice
from pathogan.schemas.data import AugmentationConfig


@dataclass
class AugmentationDraw:
    """Random parameters of one augmentation"""
    mirror: bool
    angle: float  # radians
    scale: float
    grid: np.ndarray  # (2, rows, cols) displacement in pixels at the coarse grid nodes


def grid_nodes(size: int, spacing: int) -> int:
    return max(2, math.ceil(size / spacing) + 1)


def neutral_draw(shape: Tuple[int, int], cfg: AugmentationConfig) -> AugmentationDraw:
    rows, cols = (grid_nodes(s, cfg.deform_grid_spacing) for s in shape)
    return AugmentationDraw(mirror=False, angle=0.0, scale=1.0, grid=np.zeros((2, rows, cols)))


def draw_augmentation(shape: Tuple[int, int], cfg: AugmentationConfig, rng: np.random.Generator) -> AugmentationDraw:
    rows, cols = (grid_nodes(s, cfg.deform_grid_spacing) for s in shape)
    return AugmentationDraw(
        mirror=bool(rng.random() < cfg.mirror_prob),
        angle=float(rng.uniform(-cfg.rotation_range, cfg.rotation_range)),
        scale=float(cfg.scale_base ** rng.uniform(-1.0, 1.0)),
        grid=rng.normal(0.0, cfg.deform_sigma, size=(2, rows, cols)),
    )


def dense_displacement(grid: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Cubic B-spline interpolation of the coarse grid to one vector per pixel, (2, H, W)"""
    height, width = shape
    factors = (height / grid.shape[1], width / grid.shape[2])
    return np.stack([zoom(component, factors, order=3) for component in grid])


def sampling_coordinates(draw: AugmentationDraw, shape: Tuple[int, int]) -> np.ndarray:
    """Source coordinate of every output pixel, (2, H, W)"""
    height, width = shape
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    dy, dx = ys - cy, xs - cx
    cos, sin = math.cos(draw.angle), math.sin(draw.angle)
    # inverse of rotate-then-scale about the center
    source_y = (cos * dy + sin * dx) / draw.scale + cy
    source_x = (-sin * dy + cos * dx) / draw.scale + cx
    coordinates = np.stack([source_y, source_x])
    if np.any(draw.grid):
        coordinates = coordinates + dense_displacement(draw.grid, shape)
    return coordinates


def apply_augmentation(
    data: np.ndarray,
    draw: AugmentationDraw,
    mask: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Transform (n, H, W) data, and its mask with nearest-neighbour sampling"""
    if draw.mirror:
        data = data[:, :, ::-1]
        mask = None if mask is None else mask[:, ::-1]
    shape = data.shape[1:]
    coordinates = sampling_coordinates(draw, shape)
    warped = np.stack([
        map_coordinates(channel, coordinates, order=1, mode="constant", cval=0.0)
        for channel in np.ascontiguousarray(data)
    ])
    np.clip(warped, -1.0, 1.0, out=warped)
    if mask is not None:
        mask = map_coordinates(np.ascontiguousarray(mask).astype(np.uint8), coordinates, order=0, mode="constant", cval=0) > 0
    return warped.astype(data.dtype, copy=False), mask


def augment(s: ImageSlice, cfg: AugmentationConfig, rng: np.random.Generator) -> ImageSlice:
    if not cfg.enabled:
        return s
    draw = draw_augmentation(s.data.shape[1:], cfg, rng)
    data, mask = apply_augmentation(s.data, draw, s.gold_mask)
    return replace(s, data=data, gold_mask=mask)
