"""Reading and writing single-pass introspection dumps (LOTD container).

A dump captures everything one decoding step of a multimodal LM exposes
that the selection pipeline needs: row-sliced attention tensors, row-sliced
hidden states, the token segmentation (visual / question / context ranges,
sentence spans, query row), image geometry, and optionally the question and
context text with character offsets.

Container layout (little-endian throughout)::

    bytes 0..3    magic b"LOTD"
    bytes 4..7    u32 version (currently 1)
    bytes 8..15   u64 manifest_len
    ...           UTF-8 JSON manifest (manifest_len bytes)
    ...           tensor data section (raw float32 blobs)

Tensor ``byte_offset`` values in the manifest are relative to the start of
the data section (the first byte after the manifest), as in safetensors.
Blobs must be non-overlapping and lie within the file; ``byte_len`` must
equal ``4 * prod(shape)``.

Failures split into two families: :class:`~evsel.errors.InputError` for
anything that prevents parsing the container, and
:class:`~evsel.errors.InvariantError` for well-formed files whose contents
violate a documented invariant (inconsistent segmentation, negative
attention, out-of-range indices, ...).
"""

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InputError, InvariantError
from .jsonio import dumps_canonical

MAGIC = b"LOTD"
VERSION = 1

ROW_SUM_TOL = 1e-4


@dataclass(frozen=True)
class ModelDims:
    """Static shape information for one forward pass."""

    n_layers: int
    n_heads: int
    seq_len: int
    hidden: int
    grid_h: int
    grid_w: int

    @property
    def n_visual(self):
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class TokenSegmentation:
    """Index ranges partitioning the prompt tokens.

    Ranges are half-open ``[start, end)`` and contiguous:
    visual tokens first, then question tokens, then context tokens.
    ``last_index`` is the row whose attention drives sentence selection
    (the final prompt token / first decoded position); it lies at or after
    the end of the context range.
    """

    visual_range: Tuple[int, int]
    question_range: Tuple[int, int]
    context_range: Tuple[int, int]
    sentence_spans: Tuple[Tuple[int, int], ...]
    last_index: int
    object_indices: Optional[Tuple[int, ...]] = None
    bos_index: Optional[int] = None

    @property
    def n_context(self):
        return self.context_range[1] - self.context_range[0]


@dataclass(frozen=True)
class ImageMeta:
    width_px: int
    height_px: int
    image_path: Optional[str] = None


@dataclass(frozen=True)
class QuestionInfo:
    """Question text plus per-token character offsets into it."""

    text: str
    token_offsets: Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class ContextInfo:
    """Context text with sentence (and optional passage) character spans."""

    text: str
    sentence_char_spans: Tuple[Tuple[int, int], ...]
    passage_char_spans: Optional[Tuple[Tuple[int, int], ...]] = None


@dataclass
class AttentionSlice:
    """Post-softmax attention rows for one layer: values[k, r, :] is the
    distribution of row ``row_indices[r]`` over all source positions."""

    layer: int
    row_indices: np.ndarray  # int64 [R]
    values: np.ndarray       # float32 [K, R, S]

    def row(self, token):
        """values[:, r, :] for the stored row ``token`` (error if absent)."""
        hits = np.nonzero(self.row_indices == token)[0]
        if hits.size == 0:
            raise InvariantError(
                f"attention row {token} not stored for layer {self.layer}")
        return self.values[:, int(hits[0]), :]


@dataclass
class HiddenSlice:
    """Hidden-state rows for one layer: values[r] is the vector of token
    ``row_indices[r]``."""

    layer: int
    row_indices: np.ndarray  # int64 [R]
    values: np.ndarray       # float32 [R, d]

    def row(self, token):
        hits = np.nonzero(self.row_indices == token)[0]
        if hits.size == 0:
            raise InvariantError(
                f"hidden row {token} not stored for layer {self.layer}")
        return self.values[int(hits[0])]

    def rows(self, tokens):
        """Stacked [len(tokens), d] block in the given token order."""
        out = np.empty((len(tokens), self.values.shape[1]), dtype=self.values.dtype)
        for i, tok in enumerate(tokens):
            out[i] = self.row(tok)
        return out


@dataclass
class IntrospectionDump:
    """One parsed LOTD file."""

    dims: ModelDims
    segmentation: TokenSegmentation
    image: ImageMeta
    attention: Dict[int, AttentionSlice] = field(default_factory=dict)
    hidden: Dict[int, HiddenSlice] = field(default_factory=dict)
    # None: unknown (detect from hidden states); (): known to have none.
    sink_dims: Optional[Tuple[int, ...]] = None
    question: Optional[QuestionInfo] = None
    context: Optional[ContextInfo] = None


# ---------------------------------------------------------------------------
# validation


def _check_range(name, rng, lo, hi):
    a, b = rng
    if not (lo <= a <= b <= hi):
        raise InvariantError(f"{name} [{a}, {b}) out of bounds [{lo}, {hi}]")


def validate_segmentation(seg: TokenSegmentation, dims: ModelDims):
    """Raise InvariantError when the segmentation is inconsistent."""
    S = dims.seq_len
    va, vb = seg.visual_range
    qa, qb = seg.question_range
    ca, cb = seg.context_range
    if va != 0:
        raise InvariantError("visual_range must start at token 0")
    if (qa, ca) != (vb, qb):
        raise InvariantError(
            "token ranges must be contiguous: visual, question, context")
    _check_range("visual_range", seg.visual_range, 0, S)
    _check_range("question_range", seg.question_range, 0, S)
    _check_range("context_range", seg.context_range, 0, S)
    if vb - va != dims.n_visual:
        raise InvariantError(
            f"visual_range length {vb - va} != grid_h*grid_w {dims.n_visual}")
    if qb - qa < 1:
        raise InvariantError("question_range must contain at least one token")

    # Sentence spans tile the context range exactly, in order, no gaps.
    cursor = ca
    for j, (a, b) in enumerate(seg.sentence_spans):
        if a != cursor:
            raise InvariantError(
                f"sentence span {j} starts at {a}, expected {cursor}")
        if b <= a:
            raise InvariantError(f"sentence span {j} is empty")
        cursor = b
    if cursor != cb:
        raise InvariantError(
            f"sentence spans cover [{ca}, {cursor}), context ends at {cb}")

    if not (cb <= seg.last_index < S):
        raise InvariantError(
            f"last_index {seg.last_index} must lie in [{cb}, {S})")
    if seg.bos_index is not None and not (0 <= seg.bos_index < S):
        raise InvariantError(f"bos_index {seg.bos_index} out of range")

    if seg.object_indices is not None:
        idx = seg.object_indices
        if len(idx) == 0:
            raise InvariantError("object_indices present but empty")
        if list(idx) != sorted(set(idx)):
            raise InvariantError("object_indices must be sorted and unique")
        if idx[0] < qa or idx[-1] >= qb:
            raise InvariantError("object_indices must lie in question_range")


def _check_row_indices(kind, layer, row_indices, S):
    ri = np.asarray(row_indices)
    if ri.ndim != 1:
        raise InvariantError(f"{kind} row_indices for layer {layer} not 1-D")
    if ri.size and (ri.min() < 0 or ri.max() >= S):
        raise InvariantError(f"{kind} row index out of range in layer {layer}")
    if np.any(np.diff(ri) <= 0):
        raise InvariantError(
            f"{kind} row_indices must be strictly increasing in layer {layer}")


def validate_dump(dump: IntrospectionDump):
    """Full semantic validation; raises InvariantError on the first problem."""
    d = dump.dims
    for name in ("n_layers", "n_heads", "seq_len", "hidden", "grid_h", "grid_w"):
        if getattr(d, name) < 1:
            raise InvariantError(f"dims.{name} must be >= 1")
    validate_segmentation(dump.segmentation, d)
    if dump.image.width_px < 1 or dump.image.height_px < 1:
        raise InvariantError("image dimensions must be positive")

    for layer, sl in dump.attention.items():
        if layer != sl.layer or not (0 <= layer < d.n_layers):
            raise InvariantError(f"attention slice layer {sl.layer} invalid")
        _check_row_indices("attention", layer, sl.row_indices, d.seq_len)
        if sl.values.shape != (d.n_heads, len(sl.row_indices), d.seq_len):
            raise InvariantError(
                f"attention values shape {sl.values.shape} for layer {layer} "
                f"!= {(d.n_heads, len(sl.row_indices), d.seq_len)}")
        if not np.all(np.isfinite(sl.values)):
            raise InvariantError(f"non-finite attention in layer {layer}")
        if sl.values.size and sl.values.min() < 0:
            raise InvariantError(f"negative attention in layer {layer}")
        if sl.values.size:
            sums = sl.values.sum(axis=-1, dtype=np.float64)
            if sums.max(initial=0.0) > 1.0 + ROW_SUM_TOL:
                raise InvariantError(
                    f"attention row sum {sums.max():.6f} > 1 in layer {layer}")

    for layer, sl in dump.hidden.items():
        if layer != sl.layer or not (0 <= layer < d.n_layers):
            raise InvariantError(f"hidden slice layer {sl.layer} invalid")
        _check_row_indices("hidden", layer, sl.row_indices, d.seq_len)
        if sl.values.shape != (len(sl.row_indices), d.hidden):
            raise InvariantError(
                f"hidden values shape {sl.values.shape} for layer {layer} "
                f"!= {(len(sl.row_indices), d.hidden)}")
        if not np.all(np.isfinite(sl.values)):
            raise InvariantError(f"non-finite hidden state in layer {layer}")

    if dump.sink_dims is not None:
        sd = dump.sink_dims
        if list(sd) != sorted(set(sd)):
            raise InvariantError("sink_dims must be sorted and unique")
        if len(sd) and (sd[0] < 0 or sd[-1] >= d.hidden):
            raise InvariantError("sink_dims out of hidden range")

    if dump.question is not None:
        q = dump.question
        n_q = dump.segmentation.question_range[1] - dump.segmentation.question_range[0]
        if len(q.token_offsets) != n_q:
            raise InvariantError(
                f"question token_offsets count {len(q.token_offsets)} != "
                f"question tokens {n_q}")
        for a, b in q.token_offsets:
            if not (0 <= a <= b <= len(q.text)):
                raise InvariantError("question token offset out of text bounds")

    if dump.context is not None:
        c = dump.context
        if len(c.sentence_char_spans) != len(dump.segmentation.sentence_spans):
            raise InvariantError(
                "sentence_char_spans count != token sentence span count")
        prev = 0
        for a, b in c.sentence_char_spans:
            if not (0 <= a <= b <= len(c.text)) or a < prev:
                raise InvariantError("sentence char spans out of order/bounds")
            prev = b
        if c.passage_char_spans is not None:
            prev = 0
            for a, b in c.passage_char_spans:
                if not (0 <= a <= b <= len(c.text)) or a < prev:
                    raise InvariantError("passage char spans out of order/bounds")
                prev = b


# ---------------------------------------------------------------------------
# serialization


def _pair(x):
    return [int(x[0]), int(x[1])]


def build_manifest(dump: IntrospectionDump):
    """Manifest dict with data-section-relative tensor offsets."""
    d, seg = dump.dims, dump.segmentation
    manifest = {
        "format": "LOTD",
        "version": VERSION,
        "dims": {
            "n_layers": d.n_layers, "n_heads": d.n_heads, "seq_len": d.seq_len,
            "hidden": d.hidden, "grid_h": d.grid_h, "grid_w": d.grid_w,
        },
        "segmentation": {
            "visual_range": _pair(seg.visual_range),
            "question_range": _pair(seg.question_range),
            "context_range": _pair(seg.context_range),
            "sentence_spans": [_pair(s) for s in seg.sentence_spans],
            "last_index": seg.last_index,
            "object_indices": (None if seg.object_indices is None
                               else [int(i) for i in seg.object_indices]),
            "bos_index": seg.bos_index,
        },
        "image": {
            "width_px": dump.image.width_px,
            "height_px": dump.image.height_px,
            "image_path": dump.image.image_path,
        },
        "sink_dims": (None if dump.sink_dims is None
                      else [int(i) for i in dump.sink_dims]),
        "question": (None if dump.question is None else {
            "text": dump.question.text,
            "token_offsets": [_pair(s) for s in dump.question.token_offsets],
        }),
        "context": (None if dump.context is None else {
            "text": dump.context.text,
            "sentence_char_spans": [_pair(s) for s in dump.context.sentence_char_spans],
            "passage_char_spans": (None if dump.context.passage_char_spans is None
                                   else [_pair(s) for s in dump.context.passage_char_spans]),
        }),
        "attention": [], "hidden": [], "tensors": [],
    }

    offset = 0
    blobs = []

    def add_tensor(name, arr):
        nonlocal offset
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nbytes = arr.size * 4
        manifest["tensors"].append({
            "name": name, "dtype": "f32", "shape": list(arr.shape),
            "byte_offset": offset, "byte_len": nbytes,
        })
        blobs.append(arr.tobytes())
        offset += nbytes

    for layer in sorted(dump.attention):
        sl = dump.attention[layer]
        name = f"attn.{layer}"
        manifest["attention"].append({
            "layer": layer,
            "row_indices": [int(i) for i in sl.row_indices],
            "tensor": name,
        })
        add_tensor(name, sl.values)
    for layer in sorted(dump.hidden):
        sl = dump.hidden[layer]
        name = f"hid.{layer}"
        manifest["hidden"].append({
            "layer": layer,
            "row_indices": [int(i) for i in sl.row_indices],
            "tensor": name,
        })
        add_tensor(name, sl.values)

    return manifest, blobs


def write_dump(dump: IntrospectionDump, dest):
    """Serialize ``dump`` to ``dest`` (path or binary file object).

    Validates first, lays blobs out contiguously in manifest order, and
    returns the number of bytes written. Output bytes are a pure function
    of the dump contents.
    """
    validate_dump(dump)
    manifest, blobs = build_manifest(dump)
    manifest_bytes = dumps_canonical(manifest).encode("utf-8")
    header = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(manifest_bytes))

    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    f = open(dest, "wb") if own else dest
    try:
        total = f.write(header)
        total += f.write(manifest_bytes)
        for blob in blobs:
            total += f.write(blob)
    finally:
        if own:
            f.close()
    return total


def dump_to_bytes(dump: IntrospectionDump):
    buf = io.BytesIO()
    write_dump(dump, buf)
    return buf.getvalue()


def _req(mapping, key, kind, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise InputError(f"manifest missing {where}.{key}")
    v = mapping[key]
    if kind is int and isinstance(v, bool):
        raise InputError(f"manifest field {where}.{key} has wrong type")
    if not isinstance(v, kind):
        raise InputError(f"manifest field {where}.{key} has wrong type")
    return v


def _int_pair(v, where):
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
        raise InputError(f"manifest field {where} must be a pair of ints")
    return (v[0], v[1])


def _opt_int_list(v, where):
    if v is None:
        return None
    if not isinstance(v, list) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise InputError(f"manifest field {where} must be a list of ints or null")
    return tuple(v)


def read_dump(source):
    """Parse an LOTD file (path or binary file object) into a dump.

    Raises InputError for structural problems (magic, version, truncation,
    malformed manifest, tensor bookkeeping) and InvariantError when the
    parsed contents violate dump invariants.
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    if own:
        try:
            with open(source, "rb") as f:
                data = f.read()
        except OSError as exc:
            raise InputError(f"cannot read dump: {exc}") from exc
    else:
        data = source.read()

    if len(data) < 16:
        raise InputError("truncated dump: missing header")
    if data[:4] != MAGIC:
        raise InputError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise InputError(f"unsupported dump version {version}")
    (manifest_len,) = struct.unpack_from("<Q", data, 8)
    if 16 + manifest_len > len(data):
        raise InputError("truncated dump: manifest extends past end of file")
    try:
        manifest = json.loads(data[16:16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed manifest JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise InputError("manifest must be a JSON object")

    data_start = 16 + manifest_len
    data_len = len(data) - data_start

    # --- tensor table ---
    tensors = {}
    spans = []
    for entry in _req(manifest, "tensors", list, "manifest"):
        name = _req(entry, "name", str, "tensor")
        dtype = _req(entry, "dtype", str, f"tensor {name}")
        if dtype != "f32":
            raise InputError(f"tensor {name}: unsupported dtype {dtype!r}")
        shape = _req(entry, "shape", list, f"tensor {name}")
        if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                   for s in shape):
            raise InputError(f"tensor {name}: bad shape")
        off = _req(entry, "byte_offset", int, f"tensor {name}")
        blen = _req(entry, "byte_len", int, f"tensor {name}")
        n_elem = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if blen != 4 * n_elem:
            raise InputError(
                f"tensor {name}: byte_len {blen} != 4*prod(shape) {4 * n_elem}")
        if off < 0 or off + blen > data_len:
            raise InputError(f"tensor {name}: data outside file bounds")
        if name in tensors:
            raise InputError(f"duplicate tensor name {name}")
        start = data_start + off
        arr = np.frombuffer(data, dtype="<f4", count=n_elem, offset=start)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        spans.append((off, off + blen, name))
    spans.sort()
    for (a0, b0, n0), (a1, b1, n1) in zip(spans, spans[1:]):
        if a1 < b0:
            raise InputError(f"overlapping tensor regions: {n0} and {n1}")

    # --- static blocks ---
    dm = _req(manifest, "dims", dict, "manifest")
    dims = ModelDims(**{k: _req(dm, k, int, "dims")
                        for k in ("n_layers", "n_heads", "seq_len",
                                  "hidden", "grid_h", "grid_w")})
    sg = _req(manifest, "segmentation", dict, "manifest")
    seg = TokenSegmentation(
        visual_range=_int_pair(_req(sg, "visual_range", list, "segmentation"),
                               "visual_range"),
        question_range=_int_pair(_req(sg, "question_range", list, "segmentation"),
                                 "question_range"),
        context_range=_int_pair(_req(sg, "context_range", list, "segmentation"),
                                "context_range"),
        sentence_spans=tuple(_int_pair(s, "sentence_spans")
                             for s in _req(sg, "sentence_spans", list,
                                           "segmentation")),
        last_index=_req(sg, "last_index", int, "segmentation"),
        object_indices=_opt_int_list(sg.get("object_indices"), "object_indices"),
        bos_index=sg.get("bos_index"),
    )
    if seg.bos_index is not None and not isinstance(seg.bos_index, int):
        raise InputError("segmentation.bos_index must be int or null")
    im = _req(manifest, "image", dict, "manifest")
    image = ImageMeta(
        width_px=_req(im, "width_px", int, "image"),
        height_px=_req(im, "height_px", int, "image"),
        image_path=im.get("image_path"),
    )

    sink_dims = _opt_int_list(manifest.get("sink_dims"), "sink_dims")

    question = None
    if manifest.get("question") is not None:
        qm = manifest["question"]
        question = QuestionInfo(
            text=_req(qm, "text", str, "question"),
            token_offsets=tuple(_int_pair(s, "token_offsets")
                                for s in _req(qm, "token_offsets", list,
                                              "question")),
        )
    context = None
    if manifest.get("context") is not None:
        cm = manifest["context"]
        pcs = cm.get("passage_char_spans")
        context = ContextInfo(
            text=_req(cm, "text", str, "context"),
            sentence_char_spans=tuple(
                _int_pair(s, "sentence_char_spans")
                for s in _req(cm, "sentence_char_spans", list, "context")),
            passage_char_spans=(None if pcs is None else tuple(
                _int_pair(s, "passage_char_spans") for s in pcs)),
        )

    # --- slices ---
    attention = {}
    for entry in _req(manifest, "attention", list, "manifest"):
        layer = _req(entry, "layer", int, "attention")
        name = _req(entry, "tensor", str, "attention")
        if name not in tensors:
            raise InputError(f"attention layer {layer}: unknown tensor {name}")
        rows = np.asarray(
            _opt_int_list(_req(entry, "row_indices", list, "attention"),
                          "row_indices"), dtype=np.int64)
        if layer in attention:
            raise InputError(f"duplicate attention slice for layer {layer}")
        attention[layer] = AttentionSlice(layer=layer, row_indices=rows,
                                          values=tensors[name])
    hidden = {}
    for entry in _req(manifest, "hidden", list, "manifest"):
        layer = _req(entry, "layer", int, "hidden")
        name = _req(entry, "tensor", str, "hidden")
        if name not in tensors:
            raise InputError(f"hidden layer {layer}: unknown tensor {name}")
        rows = np.asarray(
            _opt_int_list(_req(entry, "row_indices", list, "hidden"),
                          "row_indices"), dtype=np.int64)
        if layer in hidden:
            raise InputError(f"duplicate hidden slice for layer {layer}")
        hidden[layer] = HiddenSlice(layer=layer, row_indices=rows,
                                    values=tensors[name])

    dump = IntrospectionDump(dims=dims, segmentation=seg, image=image,
                             attention=attention, hidden=hidden,
                             sink_dims=sink_dims, question=question,
                             context=context)
    validate_dump(dump)
    return dump
