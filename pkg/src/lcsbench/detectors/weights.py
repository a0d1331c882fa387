"""Versioned binary weight files.

Layout: 8-byte magic, little-endian uint32 format version, uint64 header
length, a UTF-8 JSON header (spec, seed, tensor table), then the tensors as
contiguous little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lcsbench.detectors.models import Network, build, parameter_count, spec_from_dict
from lcsbench.errors import IntegrityError, ParseError

MAGIC = b"LCSBWTS\x00"
FORMAT_VERSION = 1


@dataclass
class WeightsBundle:
    spec: object
    seed: int
    tensors: dict[str, np.ndarray]
    trainable: list[str] = field(default_factory=list)

    @classmethod
    def from_network(cls, net: Network, seed: int) -> "WeightsBundle":
        state = net.state()
        trainable = [n for n, _, _ in net.tensors("params")]
        return cls(net.spec, seed, state, trainable)

    @property
    def parameter_count(self) -> int:
        return sum(self.tensors[n].size for n in self.trainable)

    def to_network(self) -> Network:
        net = build(self.spec, self.seed)
        net.load_state(self.tensors)
        return net

    def save(self, path: str | Path) -> None:
        names = sorted(self.tensors)
        header = {
            "spec": self.spec.to_dict(),
            "seed": int(self.seed),
            "parameter_count": self.parameter_count,
            "trainable": sorted(self.trainable),
            "tensors": [{"name": n, "shape": list(self.tensors[n].shape)} for n in names],
        }
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", FORMAT_VERSION, len(hb)))
            fh.write(hb)
            for n in names:
                fh.write(np.ascontiguousarray(self.tensors[n], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "WeightsBundle":
        blob = Path(path).read_bytes()
        if blob[: len(MAGIC)] != MAGIC:
            raise ParseError(f"{path}: not a weights file")
        off = len(MAGIC)
        version, hlen = struct.unpack_from("<IQ", blob, off)
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported weights version {version}")
        off += struct.calcsize("<IQ")
        header = json.loads(blob[off : off + hlen])
        off += hlen
        tensors = {}
        for t in header["tensors"]:
            shape = tuple(t["shape"])
            size = int(np.prod(shape, dtype=np.int64))
            end = off + 8 * size
            if end > len(blob):
                raise IntegrityError(f"{path}: truncated at tensor {t['name']}")
            tensors[t["name"]] = np.frombuffer(blob[off:end], dtype="<f8").reshape(shape).astype(np.float64)
            off = end
        if off != len(blob):
            raise IntegrityError(f"{path}: {len(blob) - off} trailing bytes")
        spec = spec_from_dict(header["spec"])
        bundle = cls(spec, header["seed"], tensors, list(header["trainable"]))
        if bundle.parameter_count != header["parameter_count"] or bundle.parameter_count != parameter_count(spec):
            raise IntegrityError(f"{path}: parameter count does not match the embedded spec")
        return bundle
