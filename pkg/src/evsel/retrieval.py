"""Entity retrieval over a flat embedding knowledge base.

The KB is a JSON manifest next to a raw little-endian float32 blob of
shape [N, e] (row i embeds entity i). Retrieval scores entities by inner
product with a query vector and returns the top n, ranked by
(-score, index) so exact ties resolve to the lower entity index.
"""

import json
import os
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from . import _kernels as kernels
from .errors import InputError, InvariantError
from .jsonio import write_canonical

KB_VERSION = 1


@dataclass(frozen=True)
class Entity:
    id: str
    title: str
    summary: str = ""


@dataclass
class KnowledgeBase:
    entities: Tuple[Entity, ...]
    embeddings: np.ndarray  # float32 [N, e]

    @property
    def size(self):
        return len(self.entities)

    @property
    def dim(self):
        return int(self.embeddings.shape[1])


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked hits plus the concatenated context they contribute."""

    indices: Tuple[int, ...]
    ranked: Tuple[Tuple[str, float], ...]  # (entity id, score)
    context_text: str
    n: int


def load_kb(manifest_path) -> KnowledgeBase:
    """Read a KB manifest + embedding blob; InputError on malformed files."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as exc:
        raise InputError(f"cannot read KB manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed KB manifest JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise InputError("KB manifest must be a JSON object")
    for key in ("version", "embedding_file", "embedding_dim", "count",
                "entities"):
        if key not in manifest:
            raise InputError(f"KB manifest missing {key!r}")
    if manifest["version"] != KB_VERSION:
        raise InputError(f"unsupported KB version {manifest['version']!r}")
    count, dim = manifest["count"], manifest["embedding_dim"]
    if not (isinstance(count, int) and isinstance(dim, int)
            and count >= 1 and dim >= 1):
        raise InputError("KB count/embedding_dim must be positive ints")
    raw = manifest["entities"]
    if not isinstance(raw, list) or len(raw) != count:
        raise InputError("KB entities list does not match count")
    entities = []
    seen = set()
    for i, e in enumerate(raw):
        if not isinstance(e, dict) or "id" not in e or "title" not in e:
            raise InputError(f"KB entity {i} missing id/title")
        if e["id"] in seen:
            raise InvariantError(f"duplicate KB entity id {e['id']!r}")
        seen.add(e["id"])
        entities.append(Entity(id=str(e["id"]), title=str(e["title"]),
                               summary=str(e.get("summary", ""))))

    blob_path = os.path.join(os.path.dirname(os.fspath(manifest_path)),
                             manifest["embedding_file"])
    try:
        with open(blob_path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise InputError(f"cannot read KB embeddings: {exc}") from exc
    expect = 4 * count * dim
    if len(blob) != expect:
        raise InputError(
            f"KB embedding blob is {len(blob)} bytes, expected {expect}")
    emb = np.frombuffer(blob, dtype="<f4").reshape(count, dim).astype(np.float32)
    if not np.all(np.isfinite(emb)):
        raise InvariantError("non-finite KB embedding values")
    return KnowledgeBase(entities=tuple(entities), embeddings=emb)


def save_kb(kb: KnowledgeBase, manifest_path, embedding_file=None):
    """Write manifest + blob (test fixtures and the synth command)."""
    manifest_path = os.fspath(manifest_path)
    if embedding_file is None:
        base = os.path.basename(manifest_path)
        embedding_file = os.path.splitext(base)[0] + ".f32"
    blob_path = os.path.join(os.path.dirname(manifest_path), embedding_file)
    arr = np.ascontiguousarray(kb.embeddings, dtype="<f4")
    manifest = {
        "version": KB_VERSION,
        "embedding_file": embedding_file,
        "embedding_dim": int(arr.shape[1]),
        "count": int(arr.shape[0]),
        "entities": [{"id": e.id, "title": e.title, "summary": e.summary}
                     for e in kb.entities],
    }
    with open(blob_path, "wb") as f:
        f.write(arr.tobytes())
    write_canonical(manifest_path, manifest)


def retrieve(kb: KnowledgeBase, query: Sequence[float], n: int = 3
             ) -> RetrievalResult:
    """Top-n entities by inner product; ties break to lower index."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != kb.dim:
        raise InvariantError(
            f"query dimension {q.shape} does not match KB dim {kb.dim}")
    if not np.all(np.isfinite(q)):
        raise InvariantError("non-finite query vector")
    if not (1 <= n <= kb.size):
        raise InvariantError(f"n must lie in [1, {kb.size}]")
    try:
        idx, scores = kernels.topn_inner(kb.embeddings, q, int(n))
    except ValueError as exc:
        raise InvariantError(str(exc)) from exc
    ranked = tuple((kb.entities[int(i)].id, float(s))
                   for i, s in zip(idx, scores))
    context = "\n\n".join(kb.entities[int(i)].summary for i in idx
                          if kb.entities[int(i)].summary)
    return RetrievalResult(indices=tuple(int(i) for i in idx), ranked=ranked,
                           context_text=context, n=int(n))
