"""Hugging Face backend for real checkpoints.

Supported families (tested shapes, not an exhaustive list):

* ``llava-hf/llava-1.5-*`` — CLIP-ViT tower, square patch grid, single
  ``<image>`` placeholder expanded by the processor.
* ``llava-hf/llava-v1.6-*`` works only with ``--image`` resized to the
  base resolution (the anyres tiling breaks the one-block-of-visual-
  tokens assumption).

Two hard requirements, both enforced at load time:

* ``attn_implementation="eager"`` — fused SDPA/flash kernels do not
  return per-head attention, and we refuse to guess (the capture must
  reflect what the model actually computed, never a re-derivation).
* a fast tokenizer, for character offset mappings (sentence and object
  spans are sliced out of the user text by char range).

Everything here is import-guarded so the fake backend works without
torch installed.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from .fake import Capture

_CHAT = "USER: <image>\n{body} ASSISTANT:"


def load_model(name: str, device: str = "cpu"):
    try:
        import torch  # noqa: F401
        from transformers import (AutoProcessor,
                                  LlavaForConditionalGeneration)
    except ImportError as exc:
        raise ImportError(
            "the hf backend needs the [models] extra: pip install "
            "'lotd-adapter[models]'") from exc
    return HFModel(name, device)


class HFModel:
    """Row-sliced capture around a LLaVA-style checkpoint."""

    def __init__(self, name: str, device: str = "cpu"):
        import torch
        from transformers import AutoProcessor, LlavaForConditionalGeneration

        self.name = name
        self.device = device
        self.processor = AutoProcessor.from_pretrained(name)
        if not getattr(self.processor.tokenizer, "is_fast", False):
            raise RuntimeError(f"{name}: needs a fast tokenizer for char "
                               "offset mappings")
        self.model = LlavaForConditionalGeneration.from_pretrained(
            name, torch_dtype=torch.float16 if device != "cpu"
            else torch.float32,
            attn_implementation="eager").to(device).eval()
        cfg = self.model.config
        self.n_layers = cfg.text_config.num_hidden_layers
        self.n_heads = cfg.text_config.num_attention_heads
        self.hidden = cfg.text_config.hidden_size
        self._image_token_id = cfg.image_token_index
        side = cfg.vision_config.image_size // cfg.vision_config.patch_size
        self._grid = (side, side)

    # The processor resizes every image to the vision tower's square
    # input, so the token grid is independent of the source size.
    def grid_for(self, width_px: int, height_px: int) -> Tuple[int, int]:
        return self._grid

    def tokenize(self, text: str):
        enc = self.processor.tokenizer(
            text, add_special_tokens=False, return_offsets_mapping=True)
        return [tuple(p) for p in enc["offset_mapping"]]

    def _encode(self, question: str, context: Optional[str], image):
        body = question if not context else f"{question}\n\n{context}"
        prompt = _CHAT.format(body=body)
        inputs = self.processor(images=image, text=prompt,
                                return_tensors="pt").to(self.device)
        ids = inputs["input_ids"][0].tolist()
        vis = [i for i, t in enumerate(ids) if t == self._image_token_id]
        if not vis or vis != list(range(vis[0], vis[0] + len(vis))):
            raise RuntimeError(
                f"{self.name}: expected one contiguous visual block; this "
                "family is not supported (see module docstring)")
        # Char-range → token-range mapping for question/context inside
        # the templated prompt.
        off = self.processor.tokenizer(
            prompt, add_special_tokens=False,
            return_offsets_mapping=True)["offset_mapping"]
        shift = len(ids) - len(off)  # specials + expanded image tokens

        def tok_range(sub: str):
            a = prompt.index(sub)
            b = a + len(sub)
            idx = [k + shift for k, (x, y) in enumerate(off)
                   if x >= a and y <= b and y > x]
            return (idx[0], idx[-1] + 1) if idx else (0, 0)

        return inputs, {
            "bos": (0, 1),
            "visual": (vis[0], vis[0] + len(vis)),
            "question": tok_range(question),
            "context": tok_range(context) if context else
                       (tok_range(question)[1], tok_range(question)[1]),
            "final": (len(ids) - 1, len(ids)),
            "seq": (0, len(ids)),
        }

    def plan(self, *, width_px: int, height_px: int, question: str,
             context: Optional[str] = None):
        from PIL import Image
        blank = Image.new("RGB", (width_px, height_px))
        _, layout = self._encode(question, context, blank)
        return layout

    def run_pass(self, *, width_px: int, height_px: int, question: str,
                 context: Optional[str] = None,
                 capture_layers: Sequence[int],
                 capture_rows: Optional[Sequence[int]] = None,
                 image=None) -> Capture:
        import torch
        from PIL import Image

        if image is None:
            image = Image.new("RGB", (width_px, height_px))
        inputs, layout = self._encode(question, context, image)
        with torch.no_grad():
            out = self.model(**inputs, output_attentions=True,
                             output_hidden_states=True, use_cache=False)
            step = self.model.generate(**inputs, max_new_tokens=1,
                                       do_sample=False)
        if out.attentions is None:
            raise RuntimeError(f"{self.name}: model returned no attentions "
                               "(fused kernel?); cannot capture")
        first_token = self.processor.tokenizer.decode(
            step[0, inputs["input_ids"].shape[1]:], skip_special_tokens=True)

        S = layout["seq"][1]
        rows = (list(range(S)) if capture_rows is None
                else sorted(set(int(r) for r in capture_rows)))
        vs, ve = layout["visual"]
        hid_positions = list(range(vs, ve)) + [0]

        attention = {}
        hidden = {}
        for layer in sorted(set(int(l) for l in capture_layers)):
            att = out.attentions[layer][0]          # [heads, S, S]
            attention[layer] = (
                np.asarray(rows, dtype=np.int64),
                att[:, rows, :].float().cpu().numpy().astype(np.float32))
            # hidden_states[0] is the embedding layer; +1 aligns with
            # the attention layer index.
            hs = out.hidden_states[layer + 1][0]
            srt = sorted(hid_positions)
            hidden[layer] = (
                np.asarray(srt, dtype=np.int64),
                hs[srt].float().cpu().numpy().astype(np.float32))

        return Capture(S, 0, layout["visual"], layout["question"],
                       layout["context"], layout["final"][0],
                       attention, hidden, sink_dim=-1,
                       first_token=first_token or "")

    def generate(self, system_text: str, user_text: str,
                 markers: Sequence[str] = (), image=None,
                 max_new_tokens: int = 48) -> str:
        import torch
        from PIL import Image

        if image is None:
            image = Image.new("RGB", (336, 336))
        prompt = f"{system_text}\n{_CHAT.format(body=user_text)}"
        inputs = self.processor(images=image, text=prompt,
                                return_tensors="pt").to(self.device)
        with torch.no_grad():
            out = self.model.generate(**inputs,
                                      max_new_tokens=max_new_tokens,
                                      do_sample=False)
        return self.processor.tokenizer.decode(
            out[0, inputs["input_ids"].shape[1]:],
            skip_special_tokens=True).strip()
