"""Image loading and cropping for both passes.

Three input forms, so the fake backend never needs pixel data:

* ``"640x480"`` — a bare size; the image is synthetic.
* ``something.npy`` — an array of shape (H, W) or (H, W, C).
* anything else — opened with PIL when it is installed.
"""

import re
from typing import Optional, Tuple

import numpy as np

_SIZE = re.compile(r"^(\d+)x(\d+)$")


class LoadedImage:
    """Size plus optional pixel array (None for synthetic sizes)."""

    def __init__(self, width_px: int, height_px: int,
                 pixels: Optional[np.ndarray] = None, source: str = ""):
        if width_px < 1 or height_px < 1:
            raise ValueError("image size must be positive")
        self.width_px = int(width_px)
        self.height_px = int(height_px)
        self.pixels = pixels
        self.source = source

    @property
    def size(self) -> Tuple[int, int]:
        return self.width_px, self.height_px


def load_image(spec: str) -> LoadedImage:
    m = _SIZE.match(spec.strip())
    if m:
        return LoadedImage(int(m.group(1)), int(m.group(2)), source=spec)
    if spec.endswith(".npy"):
        arr = np.load(spec)
        if arr.ndim not in (2, 3):
            raise ValueError(f"array image must be 2-D or 3-D, got {arr.ndim}-D")
        return LoadedImage(arr.shape[1], arr.shape[0], arr, source=spec)
    try:
        from PIL import Image  # type: ignore
    except ImportError as exc:
        raise ValueError(
            f"cannot load {spec!r}: not a WxH size or .npy, and PIL is not "
            "installed") from exc
    with Image.open(spec) as im:
        arr = np.asarray(im)
    return LoadedImage(arr.shape[1], arr.shape[0], arr, source=spec)


def crop(image: LoadedImage, box: Tuple[int, int, int, int]) -> LoadedImage:
    """Clamped integer crop; never collapses to zero area."""
    x1, y1, x2, y2 = (int(v) for v in box)
    x1 = min(max(x1, 0), image.width_px - 1)
    y1 = min(max(y1, 0), image.height_px - 1)
    x2 = min(max(x2, x1 + 1), image.width_px)
    y2 = min(max(y2, y1 + 1), image.height_px)
    pixels = None
    if image.pixels is not None:
        pixels = image.pixels[y1:y2, x1:x2]
    return LoadedImage(x2 - x1, y2 - y1, pixels,
                       source=f"{image.source}#crop({x1},{y1},{x2},{y2})")


def is_full_image(image: LoadedImage, box: Tuple[int, int, int, int]) -> bool:
    return tuple(int(v) for v in box) == (0, 0, image.width_px,
                                          image.height_px)
