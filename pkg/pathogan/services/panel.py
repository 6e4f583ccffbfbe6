"""
Figure panels: inputs and manual segmentation, inpaintings and probability
map, then the translated channels, one slice per panel.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

GAP = 2  # pixels of black between cells


@dataclass
class PanelArrays:
    inputs: np.ndarray  # (n, H, W) in [-1, 1]
    inpaintings: np.ndarray  # (n, H, W) in [-1, 1]
    probability: np.ndarray  # (H, W) in [0, 1]
    translated: np.ndarray  # (n, H, W) in [-1, 1]
    segmentation: Optional[np.ndarray] = None  # (H, W) mask


def to_gray(array: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scaled = (np.clip(np.asarray(array, dtype=np.float64), lo, hi) - lo) / (hi - lo)
    return np.round(scaled * 255.0).astype(np.uint8)


def image_cell(array: np.ndarray) -> np.ndarray:
    return to_gray(array, -1.0, 1.0)


def probability_cell(array: np.ndarray) -> np.ndarray:
    return to_gray(array, 0.0, 1.0)


def compose_panel(arrays: PanelArrays) -> Image.Image:
    """(n + 1) columns by 3 rows on black; empty cells stay black"""
    n, height, width = arrays.inputs.shape
    columns = n + 1
    canvas = np.zeros((3 * height + 2 * GAP, columns * width + (columns - 1) * GAP), dtype=np.uint8)

    def put(row: int, column: int, cell: np.ndarray) -> None:
        top, left = row * (height + GAP), column * (width + GAP)
        canvas[top:top + height, left:left + width] = cell

    for k in range(n):
        put(0, k, image_cell(arrays.inputs[k]))
        put(1, k, image_cell(arrays.inpaintings[k]))
        put(2, k, image_cell(arrays.translated[k]))
    if arrays.segmentation is not None:
        put(0, n, probability_cell(np.asarray(arrays.segmentation, dtype=np.float64)))
    put(1, n, probability_cell(arrays.probability))
    return Image.fromarray(canvas)


def save_panel(arrays: PanelArrays, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    compose_panel(arrays).save(path, format="PNG")
    return path
