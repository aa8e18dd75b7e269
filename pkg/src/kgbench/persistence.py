"""Embedding files.

Binary layout (all little-endian)::

    magic   4s   b"KGBE"
    version u32
    model   str           (u16 byte length + UTF-8)
    dim     u32
    norm    u8            (0 = model default, else 1 or 2)
    n_ent   u64
    n_rel   u64
    seed    i64
    vocab   32s           (SHA-256 of the entity + relation vocabularies)
    tables  u32
    per table:
        name, owner, init  str
        ndim    u32
        shape   u64 * ndim
        data    f64 row-major

The ``ent`` and ``rel`` tables come first, then model-specific blocks in
model order. A JSON manifest with the same header fields (plus whatever the
caller adds) is written next to the binary.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, LoadError
from .models import EmbeddingTable, TableSpec
from .triple_store import KnowledgeGraph

MAGIC = b"KGBE"
VERSION = 1


def vocab_digest(kg: KnowledgeGraph) -> str:
    h = hashlib.sha256()
    h.update(kg.entities.digest().encode())
    h.update(kg.relations.digest().encode())
    return h.hexdigest()


def _put_str(buf, s: str):
    b = s.encode("utf-8")
    buf.write(struct.pack("<H", len(b)))
    buf.write(b)


def _get_str(buf) -> str:
    (n,) = struct.unpack("<H", _read(buf, 2))
    return _read(buf, n).decode("utf-8")


def _read(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise LoadError("embedding file truncated")
    return b


def _table_order(P: EmbeddingTable) -> list[str]:
    first = [k for k in ("ent", "rel") if k in P.tables]
    return first + [k for k in P.tables if k not in first]


def to_bytes(P: EmbeddingTable, vocab: str, norm: int | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<I", VERSION))
    _put_str(buf, P.model)
    digest = bytes.fromhex(vocab)
    if len(digest) != 32:
        raise ValueError("vocabulary digest must be 32 bytes of hex")
    buf.write(struct.pack("<IBQQq", P.dim, norm or 0, P.num_entities, P.num_relations, P.seed))
    buf.write(digest)
    names = _table_order(P)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(P.tables[name], dtype="<f8")
        spec = P.specs[name]
        _put_str(buf, name)
        _put_str(buf, spec.owner)
        _put_str(buf, spec.init)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def from_bytes(data: bytes) -> tuple[EmbeddingTable, dict]:
    buf = io.BytesIO(data)
    if _read(buf, 4) != MAGIC:
        raise LoadError("not an embedding file (bad magic)")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != VERSION:
        raise LoadError(f"unsupported embedding file version {version}")
    model = _get_str(buf)
    dim, norm, n_ent, n_rel, seed = struct.unpack("<IBQQq", _read(buf, struct.calcsize("<IBQQq")))
    vocab = _read(buf, 32).hex()
    (count,) = struct.unpack("<I", _read(buf, 4))
    tables, specs = {}, {}
    for _ in range(count):
        name, owner, init = _get_str(buf), _get_str(buf), _get_str(buf)
        (ndim,) = struct.unpack("<I", _read(buf, 4))
        shape = struct.unpack(f"<{ndim}Q", _read(buf, 8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(_read(buf, 8 * size), dtype="<f8").reshape(shape).astype(float)
        tables[name] = arr
        specs[name] = TableSpec(owner, tuple(shape[1:]), init)
    if buf.read(1):
        raise LoadError("trailing bytes after embedding tables")
    P = EmbeddingTable(model, dim, n_ent, n_rel, tables, specs, seed)
    header = {"model": model, "dim": dim, "norm": norm or None, "num_entities": n_ent,
              "num_relations": n_rel, "seed": seed, "vocab_digest": vocab, "version": version}
    return P, header


def save_embeddings(
    path: str | os.PathLike,
    P: EmbeddingTable,
    kg: KnowledgeGraph,
    *,
    norm: int | None = None,
    extra: dict | None = None,
) -> Path:
    """Write ``path`` and ``path + '.json'``; returns the manifest path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vocab = vocab_digest(kg)
    data = to_bytes(P, vocab, norm)
    path.write_bytes(data)
    manifest = {
        "format": "kgbench-embeddings",
        "format_version": VERSION,
        "tool_version": __version__,
        "model": P.model,
        "dim": P.dim,
        "norm": norm,
        "num_entities": P.num_entities,
        "num_relations": P.num_relations,
        "seed": P.seed,
        "vocab_digest": vocab,
        "dataset_digest": kg.digest(),
        "sha256": hashlib.sha256(data).hexdigest(),
        "tables": {k: {"owner": P.specs[k].owner, "init": P.specs[k].init, "shape": list(P.tables[k].shape)}
                   for k in _table_order(P)},
    }
    if extra:
        manifest.update(extra)
    mpath = path.with_name(path.name + ".json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def load_embeddings(path: str | os.PathLike, kg: KnowledgeGraph | None = None) -> tuple[EmbeddingTable, dict]:
    """Read an embedding file; with ``kg`` given, refuse one trained on another vocabulary."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise LoadError(f"no such file: {path}") from None
    P, header = from_bytes(data)
    if kg is not None:
        want = vocab_digest(kg)
        if header["vocab_digest"] != want:
            raise DataError(
                f"{path}: embeddings were trained on vocabulary {header['vocab_digest'][:12]}..., "
                f"dataset has {want[:12]}...; refusing to evaluate"
            )
        if (P.num_entities, P.num_relations) != (kg.num_entities, kg.num_relations):
            raise DataError(f"{path}: table sizes do not match the dataset")
    return P, header
