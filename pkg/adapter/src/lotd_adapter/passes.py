"""The two passes: capture-to-dump and highlighted answering.

``dump_pass`` runs one forward pass with attention/hidden capture and
writes a LOTD file the selection engine can read directly. The model
reports introspection in its own coordinates (with whatever BOS/system
prefix its chat template imposes); this module re-bases everything onto
the normalized window the engine expects:

    [visual 0..NV) [question) [context) [final row t] [bos slot t+1]

Dropping the prefix columns is lossless for the engine — it only reads
visual and context columns, and removing columns can only lower row
sums — and the BOS hidden row rides along at the synthetic index t+1.
One zero column is appended for that slot so shapes stay consistent.

``answer_pass`` consumes a marked-prompt JSON (schema ``evsel.prompt/1``),
crops the image, wraps the prompt in the model's chat template with the
system/user text verbatim, and decodes a short answer, flagging any
marker token the model parrots back.
"""

from typing import Optional

import numpy as np

from . import imagecrop, segmentation
from .config import AdapterConfig, CaptureContractError
from .fake import load_model
from .lotdwrite import write_lotd


def resolve_model(config: AdapterConfig):
    if config.model.startswith("fake"):
        return load_model(config.model, seed=config.seed)
    from . import hf
    return hf.load_model(config.model, device=config.device)


def _window_attention(cap, shift, s_norm):
    """Re-base captured attention rows onto the normalized window."""
    out = {}
    for layer, (rows, vals) in cap.attention.items():
        keep = [i for i, r in enumerate(rows) if r >= shift]
        new_rows = np.asarray([rows[i] - shift for i in keep], dtype=np.int64)
        body = vals[:, keep, shift:]
        padded = np.zeros((body.shape[0], body.shape[1], s_norm),
                          dtype=np.float32)
        padded[:, :, :body.shape[2]] = body
        out[layer] = (new_rows, padded)
    return out


def _window_hidden(cap, shift, bos_new):
    """Visual rows land at 0..NV; the model BOS row lands at the bos slot."""
    out = {}
    for layer, (rows, vals) in cap.hidden.items():
        mapped = []
        for i, r in enumerate(rows):
            if r == cap.bos_pos:
                mapped.append((bos_new, i))
            elif r >= shift:
                mapped.append((r - shift, i))
        mapped.sort()
        new_rows = np.asarray([m[0] for m in mapped], dtype=np.int64)
        new_vals = np.asarray([vals[i] for _, i in mapped], dtype=np.float32)
        out[layer] = (new_rows, new_vals)
    return out


def dump_pass(image_spec: str, question: str, context: Optional[str],
              config: AdapterConfig, out_path, *, model=None,
              enforce_coverage: bool = True,
              declare_sinks: bool = False) -> dict:
    """Capture one pass and write the dump; returns a small meta record.

    ``enforce_coverage=False`` skips the layer-coverage precheck so tests
    (and people debugging partial captures) can produce dumps the engine
    is expected to reject.
    """
    if model is None:
        model = resolve_model(config)
    image = imagecrop.load_image(image_spec)
    if enforce_coverage:
        config.check_coverage(model.n_layers)
    layers = (tuple(range(model.n_layers)) if config.capture_layers is None
              else tuple(config.capture_layers))

    q_off = model.tokenize(question)
    if not q_off:
        raise ValueError("question produced no tokens")
    obj_local = segmentation.object_token_indices(question, q_off)

    context = context if context and model.tokenize(context) else None
    c_off = model.tokenize(context) if context else []

    gh, gw = model.grid_for(*image.size)
    nv, nt, nc = gh * gw, len(q_off), len(c_off)

    cap_rows = None
    if config.row_sliced:
        layout = model.plan(width_px=image.width_px,
                            height_px=image.height_px,
                            question=question, context=context)
        qs = layout["question"][0]
        cap_rows = sorted({qs + k for k in obj_local}
                          | {layout["final"][0]})
    cap = model.run_pass(
        width_px=image.width_px, height_px=image.height_px,
        question=question, context=context, capture_layers=layers,
        capture_rows=cap_rows)

    shift = cap.visual_range[0]
    last = cap.final_pos - shift
    bos_new = last + 1
    s_norm = last + 2

    sent_token_spans = []
    context_block = None
    if context:
        char_spans = segmentation.sentence_char_spans(context)
        if not char_spans:
            char_spans = [(0, len(context))]
        sent_token_spans, kept = segmentation.group_tokens_by_sentence(
            c_off, char_spans, base=nv + nt)
        context_block = {
            "text": context,
            "sentence_char_spans": [char_spans[j] for j in kept],
            "passage_char_spans": segmentation.passage_char_spans(context),
        }

    seg = {
        "visual_range": (0, nv),
        "question_range": (nv, nv + nt),
        "context_range": (nv + nt, nv + nt + nc),
        "sentence_spans": sent_token_spans,
        "last_index": last,
        "object_indices": [nv + k for k in obj_local],
        "bos_index": bos_new,
    }
    n_bytes = write_lotd(
        out_path,
        dims={"n_layers": model.n_layers, "n_heads": model.n_heads,
              "seq_len": s_norm, "hidden": model.hidden,
              "grid_h": gh, "grid_w": gw},
        segmentation=seg,
        image={"width_px": image.width_px, "height_px": image.height_px,
               "image_path": image.source or None},
        attention=_window_attention(cap, shift, s_norm),
        hidden=_window_hidden(cap, shift, bos_new),
        sink_dims=[cap.sink_dim] if declare_sinks else None,
        question={"text": question, "token_offsets": q_off},
        context=context_block)

    return {
        "schema": "adapter.dump/1",
        "model": model.name,
        "path": str(out_path),
        "bytes": n_bytes,
        "first_token": cap.first_token,
        "grid": [gh, gw],
        "token_counts": {"visual": nv, "question": nt, "context": nc},
        "capture_layers": list(layers),
        "row_sliced": config.row_sliced,
        "object_token_indices": seg["object_indices"],
    }


def _require(prompt: dict, key: str):
    if key not in prompt:
        raise CaptureContractError(f"prompt JSON missing {key!r}")
    return prompt[key]


def answer_pass(prompt: dict, image_spec: str, config: AdapterConfig,
                *, model=None) -> dict:
    """Crop, assemble the chat prompt verbatim, decode, count tokens."""
    if prompt.get("schema") != "evsel.prompt/1":
        raise CaptureContractError(
            f"unsupported prompt schema {prompt.get('schema')!r}")
    system_text = _require(prompt, "system_text")
    user_text = _require(prompt, "user_text")
    crop_px = tuple(int(v) for v in _require(prompt, "crop_px"))
    markers = tuple(_require(prompt, "markers")[k]
                    for k in ("txt_start", "txt_end", "img_start", "img_end"))

    if model is None:
        model = resolve_model(config)
    image = imagecrop.load_image(image_spec)
    cropped = imagecrop.crop(image, crop_px)

    # Views the runtime would encode. A crop equal to the full image
    # collapses the include_full_image case to a single view.
    views = []
    if prompt.get("include_full_image") and not imagecrop.is_full_image(
            image, crop_px):
        views.append({"kind": "full", "width_px": image.width_px,
                      "height_px": image.height_px})
    views.append({"kind": "full" if imagecrop.is_full_image(image, crop_px)
                  else "crop",
                  "width_px": cropped.width_px,
                  "height_px": cropped.height_px})

    user_full = user_text
    if config.n_exemplars:
        from .config import DEFAULT_EXEMPLARS
        shots = DEFAULT_EXEMPLARS[:config.n_exemplars]
        block = "\n\n".join(f"Question: {q}\nAnswer: {a}" for q, a in shots)
        user_full = block + "\n\n" + user_text

    answer = model.generate(system_text, user_full, markers)
    leaked = sorted({m for m in markers if m and m in answer})

    image_tokens = 0
    for v in views:
        vh, vw = model.grid_for(v["width_px"], v["height_px"])
        image_tokens += vh * vw
    return {
        "schema": "adapter.answer/1",
        "model": model.name,
        "answer": answer,
        "marker_leak": bool(leaked),
        "leaked_markers": leaked,
        "views": views,
        "crop_px": list(crop_px),
        "token_counts": {
            "system": len(model.tokenize(system_text)),
            "user": len(model.tokenize(user_full)),
            "image": image_tokens,
            "answer": len(model.tokenize(answer)),
        },
    }
