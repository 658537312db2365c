"""Model checkpoint container.

Layout::

    b"GGPARSE\\0"                 8-byte magic
    uint32 little-endian          length of the JSON header in bytes
    JSON header (UTF-8)           format version, dims, vocab, vocab hash,
                                  config echo, ordered [name, shape] list
    float32 little-endian blocks  one per parameter, in header order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ggparse.scorer import Model, ModelDims
from ggparse.treebank import Vocab

MAGIC = b"GGPARSE\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_model(model, path, config=None):
    header = {
        "format_version": FORMAT_VERSION,
        "dims": model.dims.to_dict(),
        "vocab": model.vocab.to_dict(),
        "vocab_hash": model.vocab.digest(),
        "config": config or {},
        "params": [[name, list(arr.shape)] for name, arr in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for arr in model.params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_header(path):
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a ggparse checkpoint")
        (size,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(size).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from None
        return header, f.tell()


def load_model(path, external=None):
    header, offset = read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    vocab = Vocab.from_dict(header["vocab"])
    if vocab.digest() != header.get("vocab_hash"):
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    dims = ModelDims.from_dict(header["dims"])
    shell = Model.__new__(Model)
    shell.vocab, shell.dims = vocab, dims
    expected = shell.param_shapes()
    declared = [(name, tuple(shape)) for name, shape in header["params"]]
    if declared != list(expected.items()):
        raise CheckpointError(f"{path}: parameter layout does not match dims/vocab")
    params = {}
    with open(path, "rb") as f:
        f.seek(offset)
        for name, shape in declared:
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError(f"{path}: truncated at parameter {name}")
            params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last parameter")
    if dims.ext_dim and external is not None:
        dim = len(next(iter(external.values())))
        if dim != dims.ext_dim:
            raise CheckpointError(f"external embeddings have dim {dim}, model expects {dims.ext_dim}")
    return Model(vocab, dims, params, external=external), header
