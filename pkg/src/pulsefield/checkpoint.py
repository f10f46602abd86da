"""Model files: one JSON header line followed by a float64 payload.

Layout::

    {"format": "pulsefield-model", "version": 1, ...}\\n
    <little-endian float64 payload>

Payload order for a field model: normalisation ``lo`` (3) and ``hi`` (3),
each Fourier mode matrix row-major in ascending-sigma order, then for each
layer its weight matrix (``fan_in x fan_out``, row-major) followed by its
bias.  A branched model stores the MSFF branch, the vanilla branch and the
combiner layers in that order.  The header carries the SHA-256 of the
payload so truncated or edited files are rejected.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import FormatError
from .flowfield import sha256_hex
from .model import MLP, BranchedModel, EncodingSpec, FieldModel, Normalization

__all__ = ["dumps_model", "loads_model", "save_model", "load_model", "FORMAT", "VERSION"]

FORMAT = "pulsefield-model"
VERSION = 1
_LE = "<f8"


def _mlp_header(m: MLP) -> dict:
    return {"sizes": m.sizes, "activation": m.activation, "slope": m.slope}


def _mlp_arrays(m: MLP) -> list:
    out = []
    for w, b in zip(m.weights, m.biases):
        out += [w, b]
    return out


def _field_header(fm: FieldModel) -> dict:
    enc = fm.encoding
    return {
        "encoding": {"kind": enc.kind, "sigmas": list(map(float, enc.sigmas)),
                     "trainable": bool(enc.trainable), "seed": int(enc.seed),
                     "rows": [int(b.shape[0]) for b in enc.mode_matrices]},
        "net": _mlp_header(fm.net),
    }


def _field_arrays(fm: FieldModel) -> list:
    return [fm.norm.lo, fm.norm.hi, *fm.encoding.mode_matrices, *_mlp_arrays(fm.net)]


def dumps_model(model) -> bytes:
    if isinstance(model, FieldModel):
        body = {"model": "field", **_field_header(model)}
        arrays = _field_arrays(model)
    elif isinstance(model, BranchedModel):
        body = {"model": "branched", "msff": _field_header(model.msff_branch),
                "vanilla": _field_header(model.vanilla_branch),
                "combiner": _mlp_header(model.combiner)}
        arrays = (_field_arrays(model.msff_branch) + _field_arrays(model.vanilla_branch)
                  + _mlp_arrays(model.combiner))
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    payload = b"".join(np.ascontiguousarray(a, dtype=_LE).tobytes() for a in arrays)
    header = {"format": FORMAT, "version": VERSION, **body,
              "payload_values": len(payload) // 8, "payload_sha256": sha256_hex(payload)}
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    return line.encode("ascii") + b"\n" + payload


class _Reader:
    def __init__(self, values: np.ndarray):
        self.values = values
        self.pos = 0

    def take(self, *shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        if self.pos + n > self.values.size:
            raise FormatError("payload is shorter than the header describes")
        out = self.values[self.pos:self.pos + n].astype(float).reshape(shape)
        self.pos += n
        return out


def _read_mlp(h: dict, r: _Reader) -> MLP:
    sizes = h["sizes"]
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(r.take(a, b))
        bs.append(r.take(b))
    return MLP(ws, bs, h["activation"], h["slope"])


def _read_field(h: dict, r: _Reader) -> FieldModel:
    lo, hi = r.take(3), r.take(3)
    e = h["encoding"]
    mats = [r.take(n, 3) for n in e["rows"]]
    enc = EncodingSpec(e["kind"], mats, tuple(e["sigmas"]), e["trainable"], e["seed"])
    return FieldModel(enc, _read_mlp(h["net"], r), Normalization(lo, hi))


def loads_model(data: bytes):
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("missing model header")
    try:
        header = json.loads(data[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable model header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise FormatError("not a pulsefield model file")
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported model file version {header.get('version')!r}")
    payload = data[nl + 1:]
    if len(payload) % 8 or len(payload) // 8 != header.get("payload_values"):
        raise FormatError("payload length does not match the header")
    if sha256_hex(payload) != header.get("payload_sha256"):
        raise FormatError("payload checksum mismatch")
    r = _Reader(np.frombuffer(payload, dtype=_LE))
    try:
        if header["model"] == "field":
            model = _read_field(header, r)
        elif header["model"] == "branched":
            model = BranchedModel(_read_field(header["msff"], r),
                                  _read_field(header["vanilla"], r),
                                  _read_mlp(header["combiner"], r))
        else:
            raise FormatError(f"unknown model type {header['model']!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"inconsistent model header: {exc}") from None
    if r.pos != r.values.size:
        raise FormatError("payload has trailing values")
    return model


def save_model(model, path) -> None:
    data = dumps_model(model)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
