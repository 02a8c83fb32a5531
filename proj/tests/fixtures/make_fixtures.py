"""Regenerates the committed encoder fixtures.

Writes a tiny ONNX encoder (16x16 average pooling, 1x1 conv, tanh, mean-pooled CLS
token), its backend manifest, two 8-frame PNG clips and golden files: float32
embeddings computed with numpy, stored as RSTVEMB1, plus reference distance,
curvature and aggregate statistics from a direct implementation of the definitions.

    python3 tests/fixtures/make_fixtures.py
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper
from PIL import Image

HERE = Path(__file__).resolve().parent
SIZE = 224
PATCH = 56
GRID = SIZE // PATCH
DIM = 8
FPS = 3.5  # with a 2 s window and T = 8 the sampled indices are exactly 0..7
MEAN = [0.485, 0.456, 0.406]
STD = [0.229, 0.224, 0.225]
BACKEND_ID = "tiny-test-encoder"

rng = np.random.default_rng(20240607)
W = (rng.standard_normal((DIM, 3)) * 1.5).astype(np.float32)
B = (rng.standard_normal(DIM) * 0.2).astype(np.float32)


def build_model(path):
    inits = [
        numpy_helper.from_array(W.reshape(DIM, 3, 1, 1), "w"),
        numpy_helper.from_array(B, "b"),
        numpy_helper.from_array(np.array([1, DIM, GRID * GRID], dtype=np.int64), "shape"),
    ]
    nodes = [
        helper.make_node("AveragePool", ["pixel_values"], ["pooled"], kernel_shape=[PATCH, PATCH],
                         strides=[PATCH, PATCH]),
        helper.make_node("Conv", ["pooled", "w", "b"], ["proj"], kernel_shape=[1, 1]),
        helper.make_node("Tanh", ["proj"], ["act"]),
        helper.make_node("Reshape", ["act", "shape"], ["flat"]),
        helper.make_node("Transpose", ["flat"], ["patches"], perm=[0, 2, 1]),
        helper.make_node("ReduceMean", ["patches"], ["cls"], axes=[1], keepdims=1),
        helper.make_node("Concat", ["cls", "patches"], ["tokens"], axis=1),
    ]
    graph = helper.make_graph(
        nodes, "tiny_encoder",
        [helper.make_tensor_value_info("pixel_values", TensorProto.FLOAT, [1, 3, SIZE, SIZE])],
        [helper.make_tensor_value_info("tokens", TensorProto.FLOAT, [1, 1 + GRID * GRID, DIM])],
        inits)
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    onnx.save(model, str(path))
    manifest = {
        "backend_id": BACKEND_ID,
        "expected_input": {"H": SIZE, "W": SIZE, "C": 3},
        "affine_stage": {"mean": MEAN, "std": STD},
        "output_block": "tokens",
        "token_policy": "cls_plus_patches",
        "token_layout": {"num_tokens": 1 + GRID * GRID, "token_dim": DIM},
        "input_name": "pixel_values",
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def motion_frame(i, h=56, w=56):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = 10 + 5 * i + 3 * np.sin(i), 20 + 4 * np.cos(0.9 * i)
    blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 8.0 ** 2))
    r = 40 + 200 * blob
    g = 30 + 120 * (xx / w) + 60 * blob * (i % 3)
    b = 200 - 150 * (yy / h) * (1 + 0.1 * i)
    return np.clip(np.stack([r, g, b], axis=-1), 0, 255).round().astype(np.uint8)


def resize_bilinear(img, out_h, out_w):
    # Half-pixel centres, edge clamped.
    h, w, _ = img.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    top = (1 - fx) * img[y0][:, x0] + fx * img[y0][:, x1]
    bottom = (1 - fx) * img[y1][:, x0] + fx * img[y1][:, x1]
    return (1 - fy) * top + fy * bottom


def encode(frame_u8):
    x = resize_bilinear(frame_u8.astype(np.float64), SIZE, SIZE) / 255.0
    x = np.clip(x, 0.0, 1.0)
    x = (x - np.array(MEAN)) / np.array(STD)
    chw = x.transpose(2, 0, 1)
    pooled = chw.reshape(3, GRID, PATCH, GRID, PATCH).mean(axis=(2, 4)).reshape(3, -1)
    act = np.tanh(W.astype(np.float64) @ pooled + B.astype(np.float64)[:, None])
    patches = act.T
    tokens = np.vstack([patches.mean(axis=0, keepdims=True), patches])
    return tokens.reshape(-1).astype(np.float32)


def write_rstvemb1(path, values, num_tokens, token_dim):
    t, d = values.shape
    header = b"RSTVEMB1" + struct.pack("<IIIIII", 1, t, d, num_tokens, token_dim, len(BACKEND_ID))
    payload = values.astype("<f4").tobytes()
    path.write_bytes(header + BACKEND_ID.encode() + payload + struct.pack("<I", zlib.crc32(payload)))


def reference_geometry(z):
    z = z.astype(np.float64)
    dz = np.diff(z, axis=0)
    d = np.linalg.norm(dz, axis=1)
    theta, degenerate = [], []
    for i in range(len(dz) - 1):
        na, nb = d[i], d[i + 1]
        if na < 1e-12 or nb < 1e-12:
            theta.append(0.0)
            degenerate.extend(k + 1 for k in (i, i + 1) if d[k] < 1e-12 and k + 1 not in degenerate)
            continue
        c = np.clip(np.dot(dz[i], dz[i + 1]) / (na * nb), -1.0, 1.0)
        theta.append(float(np.degrees(np.arccos(c))))
    theta = np.array(theta)
    stats = {
        "mu_d": d.mean(), "min_d": d.min(), "max_d": d.max(), "var_d": d.var(),
        "mu_theta": theta.mean(), "min_theta": theta.min(), "max_theta": theta.max(), "var_theta": theta.var(),
    }
    return d, theta, sorted(set(degenerate)), {k: float(v) for k, v in stats.items()}


def make_clip(name, frames):
    clip_dir = HERE / name
    clip_dir.mkdir(exist_ok=True)
    for old in clip_dir.glob("*.png"):
        old.unlink()
    for i, f in enumerate(frames):
        Image.fromarray(f, "RGB").save(clip_dir / f"frame_{i:03d}.png", optimize=True)
    emb = np.stack([encode(f) for f in frames])
    golden = HERE / "golden"
    golden.mkdir(exist_ok=True)
    write_rstvemb1(golden / f"{name}.emb", emb, 1 + GRID * GRID, DIM)
    d, theta, degenerate, stats = reference_geometry(emb)
    ref = {
        "clip": name,
        "fps": FPS,
        "sampling": {"window_seconds": 2.0, "frame_count": len(frames), "window_offset_seconds": 0.0,
                     "mode": "uniform_time"},
        "frames": len(frames),
        "dim": int(emb.shape[1]),
        "embeddings": emb.astype(np.float64).tolist(),
        "distances": d.tolist(),
        "curvatures_deg": theta.tolist(),
        "degenerate_steps": degenerate,
        "stats": stats,
    }
    (golden / f"{name}.json").write_text(json.dumps(ref, indent=1) + "\n")


def main():
    build_model(HERE / "tiny_encoder.onnx")
    make_clip("clip_motion", [motion_frame(i) for i in range(8)])
    make_clip("clip_static", [motion_frame(2)] * 8)


if __name__ == "__main__":
    main()
