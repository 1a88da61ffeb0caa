"""Raw little-endian float32 blobs addressed by (offset, shape) manifest entries."""

from __future__ import annotations

from pathlib import Path

import numpy as np

DTYPE = np.dtype("<f4")


class BlobWriter:
    """Append arrays to one binary file, returning where each landed."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._f = open(self.path, "wb")
        self.offset = 0

    def append(self, array: np.ndarray) -> dict:
        arr = np.ascontiguousarray(array, dtype=DTYPE)
        self._f.write(arr.tobytes())
        entry = {"offset": self.offset, "shape": list(arr.shape)}
        self.offset += arr.nbytes
        return entry

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BlobReader:
    """Memory-mapped view of a blob file; ``read`` returns an owned float32 copy."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        size = self.path.stat().st_size
        self._mm = np.memmap(self.path, dtype=DTYPE, mode="r") if size else np.zeros(0, DTYPE)

    def read(self, entry: dict) -> np.ndarray:
        start = int(entry["offset"]) // DTYPE.itemsize
        shape = tuple(int(x) for x in entry["shape"])
        count = int(np.prod(shape))
        return np.array(self._mm[start:start + count], dtype=np.float32).reshape(shape)
