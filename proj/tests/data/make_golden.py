#!/usr/bin/env python3
"""Regenerates golden_v1.scwt without touching the C++ writer.

The byte layout is spelled out with struct.pack so the fixture stays an
independent statement of the container format.
"""
import struct
from pathlib import Path


def entry(name: str, dtype: int, dims: list[int], payload: bytes) -> bytes:
    blob = struct.pack("<H", len(name)) + name.encode("utf-8")
    blob += struct.pack("<BB", dtype, len(dims))
    for d in dims:
        blob += struct.pack("<I", d)
    return blob + payload


def floats(values: list[float]) -> bytes:
    return struct.pack(f"<{len(values)}f", *values)


def main() -> None:
    entries = [
        entry("alpha", 0, [2, 3], floats([0.0, 0.5, 1.0, 1.5, 2.0, 2.5])),
        entry("beta", 0, [4], floats([1.0, -1.0, 0.25, -0.25])),
        entry("gamma", 1, [11], b"hello world"),
    ]
    blob = b"SCWT" + struct.pack("<II", 1, len(entries)) + b"".join(entries)
    out = Path(__file__).resolve().parent / "golden_v1.scwt"
    out.write_bytes(blob)
    print(f"wrote {out} ({len(blob)} bytes)")


if __name__ == "__main__":
    main()
