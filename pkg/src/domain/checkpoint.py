"""
Binary checkpoint format.

Layout:
    byte 0          format version
    bytes 1..4      header length n (little-endian uint32)
    next n bytes    UTF-8 header, one "name<TAB>d1,d2,..." line per parameter
    remainder       parameter values, little-endian float64, header order
"""

from pathlib import Path

import numpy as np

from src.domain.exceptions import ContractError

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "".join(f"{name}\t{','.join(str(d) for d in value.shape)}\n" for name, value in state.items())
    header_bytes = header.encode("utf-8")
    with open(path, "wb") as f:
        f.write(bytes([FORMAT_VERSION]))
        f.write(np.array([len(header_bytes)], dtype="<u4").tobytes())
        f.write(header_bytes)
        for value in state.values():
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw or raw[0] != FORMAT_VERSION:
        found = raw[0] if raw else None
        raise ContractError(f"Unsupported checkpoint version {found} in {path} (expected {FORMAT_VERSION})")
    header_length = int(np.frombuffer(raw[1:5], dtype="<u4")[0])
    header = raw[5 : 5 + header_length].decode("utf-8")
    offset = 5 + header_length

    state: dict[str, np.ndarray] = {}
    for line in header.splitlines():
        name, dims = line.split("\t")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        state[name] = values.reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ContractError(f"Checkpoint {path} has {len(raw) - offset} trailing bytes")
    return state
