"""Sampled series container and its single-column CSV format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


@dataclass
class Trajectory:
    """A sampled classical series.

    For quantum samples ``values`` holds the symbols +1/-1 (twice the measured
    spin projection); for Gaussian samplers it holds real increments.
    """

    values: np.ndarray
    seed: int
    basis: str | None = None
    delta: float | None = None
    chi: int | None = None
    model: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    @property
    def symbols(self) -> np.ndarray:
        return self.values

    @property
    def is_binary(self) -> bool:
        return self.values.dtype.kind in "iu"

    def header(self) -> dict:
        h = {"version": FORMAT_VERSION}
        if self.model is not None:
            h["model"] = self.model
        for key in ("delta", "chi", "basis"):
            val = getattr(self, key)
            if val is not None:
                h[key] = val
        h["seed"] = self.seed
        h["length"] = self.length
        h.update(self.meta)
        return h

    def to_csv(self, path) -> None:
        path = Path(path)
        head = " ".join(f"{k}={_fmt(v)}" for k, v in self.header().items())
        if self.is_binary:
            body = "\n".join(str(int(v)) for v in self.values)
        else:
            body = "\n".join(repr(float(v)) for v in self.values)
        path.write_text(f"# {head}\n{body}\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError(f"{path}: missing '# key=value' header")
        header = _parse_header(lines[0])
        version = int(header.pop("version", FORMAT_VERSION))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported trajectory version {version}")
        rows = [ln.strip() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
        if all(_is_int(r) for r in rows):
            values = np.array([int(r) for r in rows], dtype=np.int8)
        else:
            values = np.array([float(r) for r in rows])
        length = int(header.pop("length", len(values)))
        if length != len(values):
            raise ValueError(f"{path}: header length {length} != {len(values)} rows")
        seed = int(header.pop("seed"))
        delta = header.pop("delta", None)
        chi = header.pop("chi", None)
        return cls(
            values=values,
            seed=seed,
            basis=header.pop("basis", None),
            delta=None if delta is None else float(delta),
            chi=None if chi is None else int(chi),
            model=header.pop("model", None),
            meta=header,
        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def _parse_header(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        if "=" not in tok:
            raise ValueError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out
