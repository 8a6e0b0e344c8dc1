"""Bounding-box agreement metrics.

Axis-aligned pixel rectangles (x1, y1, x2, y2) are compared with four
numbers: IoU, coverage (intersection / ground-truth area, i.e. recall),
precision (intersection / predicted area), and the distance between box
centers normalized by the image diagonal. Algebraically
iou <= min(coverage, precision) always holds, and swapping the two boxes
swaps coverage with precision while fixing IoU and center distance.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

from .dumpio import ImageMeta
from .errors import InvariantError


@dataclass(frozen=True)
class BoxComparison:
    iou: float
    coverage: float
    precision: float
    center_distance: float

    def to_json(self):
        return {"iou": self.iou, "coverage": self.coverage,
                "precision": self.precision,
                "center_distance": self.center_distance}


def _rect(box, what):
    x1, y1, x2, y2 = (float(v) for v in box)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise InvariantError(f"{what} box has non-finite coordinates")
    if x2 <= x1 or y2 <= y1:
        raise InvariantError(f"{what} box is degenerate: {(x1, y1, x2, y2)}")
    return x1, y1, x2, y2


def compare(pred, gt, image: ImageMeta) -> BoxComparison:
    """Compare a predicted box against ground truth on one image."""
    px1, py1, px2, py2 = _rect(pred, "predicted")
    gx1, gy1, gx2, gy2 = _rect(gt, "ground-truth")
    iw = max(0.0, min(px2, gx2) - max(px1, gx1))
    ih = max(0.0, min(py2, gy2) - max(py1, gy1))
    inter = iw * ih
    pa = (px2 - px1) * (py2 - py1)
    ga = (gx2 - gx1) * (gy2 - gy1)
    union = pa + ga - inter
    diag = math.hypot(image.width_px, image.height_px)
    dist = math.hypot((px1 + px2) / 2 - (gx1 + gx2) / 2,
                      (py1 + py2) / 2 - (gy1 + gy2) / 2)
    return BoxComparison(iou=inter / union, coverage=inter / ga,
                         precision=inter / pa, center_distance=dist / diag)


def summarize(pairs: Iterable[Tuple[str, BoxComparison]]
              ) -> Dict[str, Dict[str, float]]:
    """Per-strategy means over (strategy, comparison) pairs."""
    groups: Dict[str, list] = {}
    for strategy, comp in pairs:
        groups.setdefault(strategy, []).append(comp)
    out = {}
    for strategy, comps in groups.items():
        n = len(comps)
        out[strategy] = {
            "iou": sum(c.iou for c in comps) / n,
            "coverage": sum(c.coverage for c in comps) / n,
            "precision": sum(c.precision for c in comps) / n,
            "center_distance": sum(c.center_distance for c in comps) / n,
            "count": n,
        }
    return out
