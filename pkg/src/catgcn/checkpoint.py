"""Single-file binary checkpoint.

Layout (all integers little-endian):
  bytes 0..7    magic b"CATGCKPT"
  bytes 8..11   uint32 format version (currently 1)
  bytes 12..19  uint64 header length H
  bytes 20..20+H  UTF-8 JSON header, sorted keys:
      {"config": {...resolved run config...},
       "seed": int,
       "sections": [{"name": str, "shape": [int], "offset": int, "count": int}, ...],
       "version": package version}
  then the section payloads: raw float64 little-endian values, concatenated in
  section order; `offset` counts float64 values from the start of the payload
  block, `count` is the number of values (= prod(shape)).

Byte-for-byte deterministic for identical (params, config, seed).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Tensor
from .model import ModelParams

MAGIC = b"CATGCKPT"
FORMAT_VERSION = 1


def save_checkpoint(path: str, params: ModelParams, config: dict, seed: int) -> None:
    from . import __version__

    sections = []
    payloads = []
    offset = 0
    for name, t in params.named_tensors().items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        sections.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
        )
        payloads.append(arr.tobytes())
        offset += arr.size
    header = json.dumps(
        {"config": config, "seed": seed, "sections": sections, "version": __version__},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for p in payloads:
            fh.write(p)


def load_checkpoint(path: str) -> tuple[ModelParams, dict, int]:
    """Returns (params, resolved config dict, seed); round-trips save_checkpoint exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (fmt,) = struct.unpack_from("<I", blob, 8)
    if fmt != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {fmt}")
    (hlen,) = struct.unpack_from("<Q", blob, 12)
    header = json.loads(blob[20 : 20 + hlen].decode("utf-8"))
    data = np.frombuffer(blob[20 + hlen :], dtype="<f8")
    fields: dict[str, Tensor | None] = {n: None for n in ModelParams._ORDER}
    for sec in header["sections"]:
        arr = data[sec["offset"] : sec["offset"] + sec["count"]].reshape(sec["shape"])
        fields[sec["name"]] = Tensor(arr.astype(np.float64), requires_grad=True)
    missing = [n for n in ("embedding", "w_conv", "w_g", "b_g", "w_l", "b_l") if fields[n] is None]
    if missing:
        raise ValueError(f"{path}: checkpoint missing sections {missing}")
    return ModelParams(**fields), header["config"], header["seed"]
