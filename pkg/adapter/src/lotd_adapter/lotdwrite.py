"""Writer for the LOTD capture container.

This is an independent implementation of the published format (it does
not import the reader): ``LOTD`` magic, little-endian u32 version = 1,
u64 manifest byte length, UTF-8 JSON manifest, then concatenated
float32 tensor blobs. Tensor records carry ``byte_offset`` relative to
the start of the data section, so the file is a pure function of its
content.
"""

import json
import struct

import numpy as np

MAGIC = b"LOTD"
VERSION = 1


def _pairs(spans):
    return [[int(a), int(b)] for a, b in spans]


def write_lotd(path, *, dims, segmentation, image, attention, hidden,
               sink_dims=None, question=None, context=None):
    """Serialize one captured pass.

    dims: {n_layers, n_heads, seq_len, hidden, grid_h, grid_w}
    segmentation: {visual_range, question_range, context_range,
                   sentence_spans, last_index, object_indices|None,
                   bos_index|None}
    attention / hidden: {layer: (row_indices, float array)} with
    [K, rows, S] and [rows, d] shapes respectively.
    Returns the number of bytes written.
    """
    manifest = {
        "format": "LOTD",
        "version": VERSION,
        "dims": {k: int(dims[k]) for k in
                 ("n_layers", "n_heads", "seq_len", "hidden",
                  "grid_h", "grid_w")},
        "segmentation": {
            "visual_range": _pairs([segmentation["visual_range"]])[0],
            "question_range": _pairs([segmentation["question_range"]])[0],
            "context_range": _pairs([segmentation["context_range"]])[0],
            "sentence_spans": _pairs(segmentation["sentence_spans"]),
            "last_index": int(segmentation["last_index"]),
            "object_indices": (
                None if segmentation.get("object_indices") is None
                else [int(i) for i in segmentation["object_indices"]]),
            "bos_index": (
                None if segmentation.get("bos_index") is None
                else int(segmentation["bos_index"])),
        },
        "image": {
            "width_px": int(image["width_px"]),
            "height_px": int(image["height_px"]),
            "image_path": image.get("image_path"),
        },
        "sink_dims": (None if sink_dims is None
                      else [int(i) for i in sink_dims]),
        "question": (None if question is None else {
            "text": question["text"],
            "token_offsets": _pairs(question["token_offsets"]),
        }),
        "context": (None if context is None else {
            "text": context["text"],
            "sentence_char_spans": _pairs(context["sentence_char_spans"]),
            "passage_char_spans": (
                None if context.get("passage_char_spans") is None
                else _pairs(context["passage_char_spans"])),
        }),
        "attention": [], "hidden": [], "tensors": [],
    }

    offset = 0
    blobs = []

    def add(name, arr):
        nonlocal offset
        arr = np.ascontiguousarray(arr, dtype="<f4")
        manifest["tensors"].append({
            "name": name, "dtype": "f32", "shape": list(arr.shape),
            "byte_offset": offset, "byte_len": arr.size * 4,
        })
        blobs.append(arr.tobytes())
        offset += arr.size * 4

    for layer in sorted(attention):
        rows, values = attention[layer]
        manifest["attention"].append({
            "layer": int(layer),
            "row_indices": [int(i) for i in rows],
            "tensor": f"attn.{layer}",
        })
        add(f"attn.{layer}", values)
    for layer in sorted(hidden):
        rows, values = hidden[layer]
        manifest["hidden"].append({
            "layer": int(layer),
            "row_indices": [int(i) for i in rows],
            "tensor": f"hid.{layer}",
        })
        add(f"hid.{layer}", values)

    payload = json.dumps(manifest, ensure_ascii=False,
                         separators=(",", ":")).encode("utf-8")
    header = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q",
                                                              len(payload))
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        for blob in blobs:
            f.write(blob)
    return len(header) + len(payload) + sum(len(b) for b in blobs)
