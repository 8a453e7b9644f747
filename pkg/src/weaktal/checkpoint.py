"""Versioned binary container for named float arrays; checkpoint read/write.

Layout (all little-endian):

    magic   b"WTC1"
    u32     header length in bytes
    header  UTF-8 JSON: {"format_version": 1, "meta": {...},
                         "arrays": [{"name", "dtype", "shape"}, ...]}
    data    raw array bytes, C order, concatenated in header order

Writes are byte-deterministic for identical content, so identical training
runs produce identical checkpoint files.
"""

import json
import struct

import numpy as np

from .model import ClassifierParams, ModelParams, TransitionParams, param_items

MAGIC = b"WTC1"
FORMAT_VERSION = 1


def save_arrays(path, arrays, meta=None):
    """Write an ordered {name: array} mapping plus a JSON-serializable meta dict."""
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        entries.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C"))
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta or {}, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path):
    """Read a container written by save_arrays; returns ({name: array}, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header['format_version']}")
    arrays = {}
    offset = 8 + header_len
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        arr = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    return arrays, header["meta"]


def save_checkpoint(path, params, meta=None):
    """Persist ModelParams with enough metadata to rebuild them."""
    info = {
        "kind": "model",
        "shared_classifier": params.shared,
        "class_agnostic_weights": params.transition.class_agnostic,
        "feature_dim": params.classifier.feature_dim,
        "hidden": params.classifier.hidden,
        "num_classes": params.classifier.num_classes,
    }
    if meta:
        info.update(meta)
    save_arrays(path, dict(param_items(params)), info)


def _classifier_from(arrays, prefix):
    return ClassifierParams(*(arrays[f"{prefix}.{f}"] for f in ("w1", "b1", "w2", "b2", "w3", "b3")))


def load_checkpoint(path):
    """Load a checkpoint; returns (ModelParams, meta dict)."""
    arrays, meta = load_arrays(path)
    classifier = _classifier_from(arrays, "classifier")
    transition = TransitionParams(arrays["transition.w"], arrays["transition.b"])
    post = _classifier_from(arrays, "post_classifier") if "post_classifier.w1" in arrays else None
    return ModelParams(classifier, transition, post), meta
