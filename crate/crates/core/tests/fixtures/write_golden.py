"""Writes golden_n3_m2.inst without using the Rust code.

A_1 = [[1.5, -0.25, 0], [-0.25, 0, 2], [0, 2, -1]]
A_2 = [[-2, 0.125, 0], [0.125, 3, 0.5], [0, 0.5, 0.75]]
c   = [0.1, -0.2]
"""
import json
import struct
import sys


def crc64_xz(data: bytes) -> int:
    poly = 0xC96C5795D7870F42
    crc = 0xFFFFFFFFFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFFFFFFFFFF


assert crc64_xz(b"123456789") == 0x995DC9BBDF1939FA

positions = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]
a1 = [1.5, -0.25, 0.0, 2.0, -1.0]
a2 = [-2.0, 0.125, 3.0, 0.5, 0.75]
c = [0.1, -0.2]

header = {
    "magic": "EIGPROX-INSTANCE",
    "version": 1,
    "n": 3,
    "m": 2,
    "nnz": len(positions),
    "density": None,
    "seed": None,
    "scaling": None,
    "joint_pattern": True,
    "value_distribution": "fixture",
    "checksum": "crc-64/xz",
    "has_b": False,
    "has_c": True,
}
out = json.dumps(header, separators=(",", ":")).encode("ascii") + b"\n"
out += b"".join(struct.pack("<Q", r) for r, _ in positions)
out += b"".join(struct.pack("<Q", c_) for _, c_ in positions)
for vals in (a1, a2, c):
    out += b"".join(struct.pack("<d", v) for v in vals)
out += struct.pack("<Q", crc64_xz(out))

path = sys.argv[1] if len(sys.argv) > 1 else "golden_n3_m2.inst"
with open(path, "wb") as f:
    f.write(out)
