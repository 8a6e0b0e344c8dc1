"""evsel: training-free evidence selection over multimodal attention dumps.

Given one serialized forward-pass introspection dump (attention rows,
hidden-state rows, token segmentation), the package locates the
query-relevant image region and context sentences and builds a
marker-highlighted prompt for a second answer pass. No training, no
gradients — everything is read off the dump.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .dumpio import (AttentionSlice, ContextInfo, HiddenSlice, ImageMeta,
                     IntrospectionDump, ModelDims, QuestionInfo,
                     TokenSegmentation, dump_to_bytes, read_dump, validate_dump,
                     write_dump)
from .errors import EvselError, InputError, InvariantError
from .focus import FocusSpan, extract_focus, focus_from_question
from .pipeline import RunConfig, highlight, select_evidence
from .prompting import (DEFAULT_MARKERS, CropSpec, MarkedPrompt, MarkerSet,
                        build_prompt, crop_spec, mark_spans, merge_char_spans,
                        strip_markers, system_text)
from .retrieval import Entity, KnowledgeBase, RetrievalResult, load_kb, retrieve, save_kb
from .boxmetrics import BoxComparison, compare, summarize
from .synth import SynthSpec, generate, random_dump, spec_from_json
from .textual import (TextualRelevance, aggregate_textual, last_to_context,
                      select_sentences)
from .visual import (BoxResult, LayerRanges, VisualRelevance, aggregate_visual,
                     bbox, bbox_min_max, bbox_morphological,
                     bbox_weighted_centroid, default_layer_ranges,
                     detect_sink_dims, filter_sinks, object_to_visual,
                     sink_mask, sink_scores)

__all__ = [
    "KERNEL_BACKEND", "__version__",
    # container
    "AttentionSlice", "ContextInfo", "HiddenSlice", "ImageMeta",
    "IntrospectionDump", "ModelDims", "QuestionInfo", "TokenSegmentation",
    "dump_to_bytes", "read_dump", "validate_dump", "write_dump",
    # errors
    "EvselError", "InputError", "InvariantError",
    # analyses
    "FocusSpan", "extract_focus", "focus_from_question",
    "LayerRanges", "default_layer_ranges", "object_to_visual",
    "aggregate_visual", "detect_sink_dims", "sink_scores", "sink_mask",
    "filter_sinks", "VisualRelevance", "BoxResult", "bbox",
    "bbox_weighted_centroid", "bbox_min_max", "bbox_morphological",
    "TextualRelevance", "last_to_context", "aggregate_textual",
    "select_sentences",
    # prompt
    "DEFAULT_MARKERS", "MarkerSet", "MarkedPrompt", "CropSpec",
    "build_prompt", "crop_spec", "mark_spans", "merge_char_spans",
    "strip_markers", "system_text",
    # retrieval / metrics / synth
    "Entity", "KnowledgeBase", "RetrievalResult", "load_kb", "retrieve",
    "save_kb", "BoxComparison", "compare", "summarize",
    "SynthSpec", "generate", "random_dump", "spec_from_json",
    # pipeline
    "RunConfig", "select_evidence", "highlight",
]
