"""Writes the heterogeneous PLY fixtures used by the identity checks."""
import struct
from pathlib import Path

import numpy as np

OUT = Path(__file__).parent
rng = np.random.default_rng(20240611)

TYPES = {"char": "b", "uchar": "B", "short": "h", "ushort": "H", "int": "i", "uint": "I", "float": "f", "double": "d"}


def write(name, fmt, props, rows, comments=(), extra=""):
    head = ["ply", f"format {fmt} 1.0", *[f"comment {c}" for c in comments], f"element vertex {len(rows)}"]
    for t, n in props:
        head.append(f"property {t} {n}" if not t.startswith("list") else f"property {t} {n}")
    head.append(extra.rstrip("\n")) if extra else None
    head.append("end_header")
    text = "\n".join(h for h in head if h) + "\n"
    path = OUT / name
    if fmt == "ascii":
        lines = []
        for r in rows:
            out = []
            for (t, _), v in zip(props, r):
                if t.startswith("list"):
                    out.append(" ".join(str(x) for x in [len(v), *v]))
                elif t in ("float", "double"):
                    out.append(repr(float(np.float32(v))) if t == "float" else repr(float(v)))
                else:
                    out.append(str(int(v)))
            lines.append(" ".join(out))
        path.write_text(text + "\n".join(lines) + "\n" + extra_body_ascii.get(name, ""))
    else:
        body = bytearray()
        for r in rows:
            for (t, _), v in zip(props, r):
                if t.startswith("list"):
                    _, ct, it = t.split()
                    body += struct.pack("<" + TYPES[ct], len(v))
                    body += struct.pack("<" + TYPES[it] * len(v), *v)
                else:
                    body += struct.pack("<" + TYPES[t], v)
        path.write_bytes(text.encode() + bytes(body) + extra_body_bin.get(name, b""))


extra_body_ascii = {}
extra_body_bin = {}
xyz_f = [("float", "x"), ("float", "y"), ("float", "z")]
xyz_d = [("double", "x"), ("double", "y"), ("double", "z")]
rgb = [("uchar", "red"), ("uchar", "green"), ("uchar", "blue")]


def colors(n):
    return rng.integers(0, 256, size=(n, 3))


# 1 sphere, ascii float + color
n = 200
p = rng.normal(size=(n, 3))
p /= np.linalg.norm(p, axis=1, keepdims=True)
write("sphere_ascii_rgb.ply", "ascii", xyz_f + rgb, [[*a, *c] for a, c in zip(p, colors(n))])

# 2 noisy plane, binary float + color
n = 500
p = np.c_[rng.uniform(0, 2, n), rng.uniform(0, 1, n), 0.01 * rng.normal(size=n)]
write("plane_binary_rgb.ply", "binary_little_endian", xyz_f + rgb, [[*a, *c] for a, c in zip(p, colors(n))])

# 3 binary double, no color, large model units
n = 300
p = rng.uniform(-500, 1500, size=(n, 3))
write("box_binary_double.ply", "binary_little_endian", xyz_d, p.tolist())

# 4 ascii double, comments, no color
n = 100
t = np.linspace(0, 6 * np.pi, n)
p = np.c_[np.cos(t), np.sin(t), 0.1 * t]
write("helix_ascii_double.ply", "ascii", xyz_d, p.tolist(), comments=["helix", "units: meters"])

# 5 binary with normals, alpha and a face element
n = 250
p = rng.uniform(size=(n, 3))
nrm = rng.normal(size=(n, 3))
props = xyz_f + [("float", "nx"), ("float", "ny"), ("float", "nz")] + rgb + [("uchar", "alpha")]
rows = [[*a, *b, *c, 255] for a, b, c in zip(p, nrm, colors(n))]
faces = struct.pack("<Biii", 3, 0, 1, 2) + struct.pack("<Biii", 3, 2, 3, 4)
extra_body_bin["normals_faces_binary.ply"] = faces
write("normals_faces_binary.ply", "binary_little_endian", props, rows,
      extra="element face 2\nproperty list uchar int vertex_indices\n")

# 6 ascii, properties in unusual order
n = 150
p = rng.uniform(-1, 1, size=(n, 3))
c = colors(n)
props = [("uchar", "blue"), ("float", "z"), ("uchar", "red"), ("float", "x"), ("uchar", "green"), ("float", "y")]
write("shuffled_ascii.ply", "ascii", props, [[cc[2], a[2], cc[0], a[0], cc[1], a[1]] for a, cc in zip(p, c)])

# 7 binary with duplicated points
base = rng.uniform(size=(120, 3))
base_c = colors(120)
p, c = np.r_[base, base[:60]], np.r_[base_c, base_c[:60]]
write("duplicates_binary.ply", "binary_little_endian", xyz_f + rgb, [[*a, *cc] for a, cc in zip(p, c)])

# 8 torus, 3000 points, binary float + color
n = 3000
u, v = rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n)
p = np.c_[(2 + 0.5 * np.cos(v)) * np.cos(u), (2 + 0.5 * np.cos(v)) * np.sin(u), 0.5 * np.sin(v)]
c = np.c_[127 + 127 * np.cos(u), 127 + 127 * np.sin(v), np.full(n, 60)].astype(int)
write("torus_binary_rgb.ply", "binary_little_endian", xyz_f + rgb, [[*a, *cc] for a, cc in zip(p, c)])

# 9 tiny ascii cloud
p = rng.uniform(size=(12, 3))
write("tiny_ascii_rgb.ply", "ascii", xyz_f + rgb, [[*a, *c] for a, c in zip(p, colors(12))])

# 10 binary with integer extras and a per-vertex list property
n = 400
p = rng.normal(scale=[3.0, 1.0, 0.2], size=(n, 3))
props = [("short", "label"), *xyz_f, ("list uchar ushort", "neighbors"), *rgb, ("int", "id")]
rows = [[i % 7, *a, [i % 100, (i + 1) % 100], *c, i] for i, (a, c) in enumerate(zip(p, colors(n)))]
write("extras_list_binary.ply", "binary_little_endian", props, rows)
