"""Single-file binary container: JSON header followed by raw array blocks.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then each array's C-order bytes in manifest order. The header carries an
``arrays`` manifest (name, dtype, shape) plus arbitrary metadata under
``meta``. Fitted models and posterior draws are stored this way so other
tools can read them with nothing but the format note above.
"""

import json

import numpy as np

MAGIC = b"EDUBART1"


def write_container(path, meta, arrays):
    """Write `meta` (JSON-serializable dict) and named numpy arrays to path."""
    manifest = []
    blocks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        manifest.append(
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
        )
        blocks.append(arr.tobytes())
    header = json.dumps(
        {"meta": meta, "arrays": manifest}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for block in blocks:
            fh.write(block)


def read_meta(path):
    """Read only the JSON header's meta block."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a container file")
        header_len = int.from_bytes(fh.read(8), "little")
        return json.loads(fh.read(header_len).decode("utf-8"))["meta"]


def read_container(path):
    """Read a container; returns (meta, dict of arrays)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a container file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(dtype.itemsize * count)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header["meta"], arrays
