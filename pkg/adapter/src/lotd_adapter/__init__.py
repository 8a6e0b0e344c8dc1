"""Capture/answer bridge between MLLM checkpoints and the evidence-
selection engine: pass 1 writes LOTD introspection dumps, pass 2 answers
from the engine's marked prompts."""

from .config import AdapterConfig, CaptureContractError, default_core_layers
from .fake import FakeModel
from .passes import answer_pass, dump_pass

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "CaptureContractError", "FakeModel",
           "answer_pass", "default_core_layers", "dump_pass",
           "__version__"]
