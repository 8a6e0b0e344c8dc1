"""Adapter configuration and layer-coverage checks."""

from dataclasses import dataclass
from typing import Optional, Tuple


class CaptureContractError(ValueError):
    """A capture or prompt violates the engine-facing contract."""


def default_core_layers(n_layers: int) -> Tuple[int, ...]:
    """Layers the selection engine reads when run with default ranges.

    Mirrors the engine's documented defaults: visual and sink
    aggregation over the middle band [L//4, max(3L//4, L//4+1)), textual
    aggregation over the final half [L//2, L). A capture that misses any
    of these layers produces dumps the engine will reject.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be positive")
    lo = n_layers // 4
    hi = max(3 * n_layers // 4, lo + 1)
    need = set(range(lo, hi)) | set(range(n_layers // 2, n_layers))
    return tuple(sorted(need))


# Built-in few-shot exemplars for benchmark-style prompting (3-shot).
DEFAULT_EXEMPLARS = (
    ("What is the height of this tower?", "324 metres"),
    ("Which country is this bridge located in?", "Portugal"),
    ("What year was this museum founded?", "1793"),
)


@dataclass(frozen=True)
class AdapterConfig:
    """Everything the capture and answer passes need to know.

    ``capture_layers = None`` captures every layer. ``row_sliced`` keeps
    only the attention rows the pipeline reads (question tokens plus the
    final position) instead of all S rows per layer.
    """

    model: str = "fake"
    device: str = "cpu"
    capture_layers: Optional[Tuple[int, ...]] = None
    row_sliced: bool = True
    txt_start: str = "<START_IMPORTANT_TXT>"
    txt_end: str = "<END_IMPORTANT_TXT>"
    img_start: str = "<START_IMPORTANT_IMG>"
    img_end: str = "<END_IMPORTANT_IMG>"
    n_exemplars: int = 0
    seed: int = 0

    def markers(self):
        return (self.txt_start, self.txt_end, self.img_start, self.img_end)

    def check_coverage(self, n_layers: int,
                       requested: Optional[Tuple[int, ...]] = None):
        """Fail fast when the capture can't serve the selection engine.

        ``requested`` overrides the engine-default layer union (the
        caller knows its own --l-vis/--l-txt/--l-sink settings).
        """
        if self.capture_layers is None:
            return
        need = requested if requested is not None \
            else default_core_layers(n_layers)
        have = set(self.capture_layers)
        missing = [layer for layer in need if layer not in have]
        if missing:
            raise CaptureContractError(
                f"capture_layers {sorted(have)} misses layers {missing} "
                "required by the selection engine")
