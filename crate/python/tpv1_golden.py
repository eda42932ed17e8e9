"""Writes the TPV1 golden fixtures with nothing but struct and json.

The Rust store must reproduce these files byte for byte, so any exporter
that follows the same layout interoperates with the `tpv` tools.

    python python/tpv1_golden.py crates/core/tests/fixtures/tpv1
"""

import json
import math
import pathlib
import struct
import sys


def encode(rows):
    prompt_len, embed_dim = len(rows), len(rows[0])
    header = b"TPV1" + bytes([1, 1, 0, 0]) + struct.pack("<QQ", prompt_len, embed_dim) + bytes(8)
    flat = [v for row in rows for v in row]
    return header + struct.pack(f"<{len(flat)}f", *flat)


def sidecar(init_id, task_id):
    body = {"kind": "soft_prompt", "init_id": init_id, "task_id": task_id, "meta": {}}
    return json.dumps(body, indent=2) + "\n"


FIXTURES = {
    "zeros_2x3": ([[0.0] * 3 for _ in range(2)], "init-0", None),
    "ramp_3x4": ([[(r * 4 + c) * 0.25 - 1.5 for c in range(4)] for r in range(3)], "init-7", "rte"),
    "edge_2x4": ([[-0.0, 1e-45, 3.4028234663852886e38, -1.1754943508222875e-38],
                  [math.pi, -math.e, 1 / 3, 65504.0]], "init-x", "mnli"),
}


def main(out):
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (rows, init_id, task_id) in FIXTURES.items():
        (out / f"{name}.tpv").write_bytes(encode(rows))
        (out / f"{name}.json").write_text(sidecar(init_id, task_id))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/tpv1")
