"""JSON reading and writing for configs, datasets and results.

All files carry ``"schema": 1``. Poses are stored as row-major 4x4 nested
lists, covariances as nested lists or, when diagonal, as their diagonals.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .synth import Dataset, Measurement, TruthField

SCHEMA = 1


def loads(text, path=None):
    """Parse JSON text, raising ``ParseError`` with line and column."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None


def load_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc), path) from None
    data = loads(text, path)
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", path, 1, 1)
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ParseError(f"unsupported schema {schema!r}", path)
    return data


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj, compact=False):
    if compact:
        return json.dumps(obj, separators=(",", ":"), default=_default) + "\n"
    return json.dumps(obj, indent=2, default=_default) + "\n"


def dump_json(obj, path):
    Path(path).write_text(dumps(obj))


def _cov(R):
    R = np.asarray(R)
    if np.array_equal(R, np.diag(np.diag(R))):
        return np.diag(R).tolist()
    return R.tolist()


def _uncov(v):
    v = np.asarray(v, dtype=float)
    return np.diag(v) if v.ndim == 1 else v


# -- datasets -----------------------------------------------------------------


def truth_to_dict(tr):
    return {
        "s": tr.s,
        "t": tr.t,
        "T": tr.T,
        "eps": tr.eps,
        "varpi": tr.varpi,
    }


def truth_from_dict(d):
    return TruthField(
        np.asarray(d["s"], float),
        np.asarray(d["t"], float),
        np.asarray(d["T"], float),
        np.asarray(d["eps"], float),
        np.asarray(d["varpi"], float),
    )


def dataset_to_dict(ds):
    return {
        "schema": SCHEMA,
        "metadata": ds.metadata,
        "measurements": [
            {
                "type": m.kind,
                "sensor": m.sensor,
                "arclength": m.arclength,
                "t": m.t,
                "value": np.asarray(m.value).tolist(),
                "R": _cov(m.R),
            }
            for m in ds.measurements
        ],
        "ground_truth": truth_to_dict(ds.truth) if ds.truth is not None else None,
    }


def dataset_from_dict(d, path=None):
    try:
        ms = [
            Measurement(
                m["type"],
                m.get("sensor", ""),
                float(m["arclength"]),
                float(m["t"]),
                np.asarray(m["value"], float),
                _uncov(m["R"]),
            )
            for m in d["measurements"]
        ]
        truth = truth_from_dict(d["ground_truth"]) if d.get("ground_truth") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed dataset: {exc}", path) from None
    for m in ms:
        if m.kind not in ("pose", "gyro"):
            raise ParseError(f"unknown measurement type {m.kind!r}", path)
    ms.sort(key=lambda m: m.t)
    return Dataset(ms, truth, d.get("metadata", {}))


def load_dataset(path):
    return dataset_from_dict(load_json(path), path)


def dataset_hash(path_or_text):
    """SHA-256 of a dataset file's bytes."""
    data = None
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        try:
            data = Path(path_or_text).read_bytes()
        except OSError:
            pass
    if data is None:
        data = str(path_or_text).encode()
    return hashlib.sha256(data).hexdigest()
