"""Toy sparse masked-reconstruction engine.

Four stride-2 encoder stages produce a feature pyramid from the sparse
(masked-out) image; masked cells are re-zeroed after every stage so
hidden content can never leak into the features. Masked cells are then
densified with learned per-level embeddings and a top-down decoder
(nearest-neighbor upsample + 3x3 conv, plus projected skips) reconstructs
the image. Training minimizes mean-squared error over masked-patch
pixels only, with hand-written reverse-mode gradients and plain SGD.

Scale is deliberately tiny: the mechanism is under test, not capacity.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoMaskedPatches, ShapeMismatch
from ..planner import MaskPlan
from . import ops

N_STAGES = 4
PATCH = 2 ** N_STAGES  # masking granularity equals the deepest stride


@dataclass(frozen=True)
class ToyHyper:
    image_h: int = 64
    image_w: int = 64
    patch: int = PATCH
    channels: tuple[int, int, int, int] = (8, 16, 32, 64)
    dec_channels: int = 16
    act_slope: float = 0.1  # leaky-linear; 1.0 makes the model fully linear
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.patch != PATCH:
            raise ValueError(f"patch must equal the deepest stride {PATCH}")
        if self.image_h % PATCH or self.image_w % PATCH:
            raise ValueError("image dims must be divisible by the patch size")


@dataclass
class ToyModel:
    hyper: ToyHyper
    params: dict[str, np.ndarray] = field(default_factory=dict)


def param_order(model: ToyModel) -> list[str]:
    return list(model.params.keys())


def init_model(hyper: ToyHyper) -> ToyModel:
    """Weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from the seeded
    generator; biases and mask embeddings start at zero."""
    rng = np.random.default_rng(hyper.seed)
    ch = hyper.channels
    dec = hyper.dec_channels
    params: dict[str, np.ndarray] = {}

    def conv_init(name: str, cout: int, cin: int, k: int):
        # Biases draw from the same seeded uniform as weights; zero biases
        # would pin masked regions exactly onto the activation kink and
        # wreck finite-difference validation.
        bound = 1.0 / np.sqrt(cin * k * k)
        params[f"{name}_w"] = rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(np.float32)
        params[f"{name}_b"] = rng.uniform(-bound, bound, size=cout).astype(np.float32)

    prev = 1
    for s in range(N_STAGES):
        conv_init(f"enc{s}", ch[s], prev, 3)
        prev = ch[s]
    for level in range(1, N_STAGES + 1):
        params[f"m{level}"] = np.zeros(ch[level - 1], dtype=np.float32)
    for level in range(1, N_STAGES + 1):
        conv_init(f"phi{level}", dec, ch[level - 1], 1)
    for level in range(1, N_STAGES):
        conv_init(f"b{level}", dec, dec, 3)
    conv_init("out", 1, dec, 3)
    return ToyModel(hyper=hyper, params=params)


# ---------------------------------------------------------------------------
# Mask pyramids
# ---------------------------------------------------------------------------

def _check_plan(image: np.ndarray, plan: MaskPlan) -> None:
    if (plan.grid.image_h, plan.grid.image_w) != image.shape:
        raise ShapeMismatch(
            f"plan is for {plan.grid.image_h}x{plan.grid.image_w}, image is {image.shape}"
        )
    if plan.grid.patch != PATCH:
        raise ShapeMismatch(f"plan patch {plan.grid.patch} != engine patch {PATCH}")


def pixel_visibility(plan: MaskPlan, dtype=np.float32) -> np.ndarray:
    return np.kron(plan.visible, np.ones((PATCH, PATCH))).astype(dtype)


def level_visibility(plan: MaskPlan, level: int, dtype=np.float32) -> np.ndarray:
    """Patch visibility expanded to the level-l feature resolution.

    Level N_STAGES equals the patch grid itself; coarser-to-finer levels
    differ by exact 2x block replication, so 2x decimation of level l
    reproduces level l+1 exactly.
    """
    factor = 2 ** (N_STAGES - level)
    return np.kron(plan.visible, np.ones((factor, factor))).astype(dtype)


def apply_mask(image: np.ndarray, plan: MaskPlan) -> np.ndarray:
    """Zero every pixel under a masked patch (the sparse image)."""
    _check_plan(image, plan)
    return (image * pixel_visibility(plan, image.dtype)).astype(image.dtype)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _forward(model: ToyModel, image: np.ndarray, plan: MaskPlan, dtype):
    """Full forward pass; returns (loss, recon, cache-for-backward)."""
    _check_plan(image, plan)
    p = {k: v.astype(dtype, copy=False) for k, v in model.params.items()}
    slope = model.hyper.act_slope
    img = image.astype(dtype, copy=False)

    pixvis = pixel_visibility(plan, dtype)
    x = (img * pixvis)[None, :, :]

    enc_caches = []
    feats = []
    vis_levels = []
    for s in range(N_STAGES):
        level = s + 1
        z, c_conv = ops.conv2d(x, p[f"enc{s}_w"], p[f"enc{s}_b"], stride=2, pad=1)
        a, c_act = ops.leaky(z, slope)
        vis = level_visibility(plan, level, dtype)
        f = ops.mask_cells(a, vis)
        enc_caches.append((c_conv, c_act, vis))
        feats.append(f)
        vis_levels.append(vis)
        x = f

    dens = []
    for level in range(1, N_STAGES + 1):
        dens.append(ops.densify(feats[level - 1], vis_levels[level - 1], p[f"m{level}"]))

    # Top-down decoding.
    d, c_phi4 = ops.conv2d(dens[3], p["phi4_w"], p["phi4_b"])
    dec_caches = []
    for level in range(N_STAGES, 1, -1):  # 4, 3, 2 -> produce D3, D2, D1
        u = ops.upsample2(d)
        bz, c_b = ops.conv2d(u, p[f"b{level - 1}_w"], p[f"b{level - 1}_b"], stride=1, pad=1)
        ba, c_ba = ops.leaky(bz, slope)
        skip, c_phi = ops.conv2d(dens[level - 2], p[f"phi{level - 1}_w"], p[f"phi{level - 1}_b"])
        d = ba + skip
        dec_caches.append((c_b, c_ba, c_phi))

    r = ops.upsample2(d)
    out, c_out = ops.conv2d(r, p["out_w"], p["out_b"], stride=1, pad=1)
    recon = out[0]

    maskpix = 1.0 - pixvis
    count = float(maskpix.sum())
    if count == 0:
        raise NoMaskedPatches("plan masks no patches; loss is undefined")
    loss = float(np.sum(((recon - img) ** 2 * maskpix).astype(np.float64)) / count)

    cache = {
        "img": img,
        "maskpix": maskpix,
        "count": count,
        "recon": recon,
        "enc": enc_caches,
        "vis": vis_levels,
        "dec": dec_caches,
        "c_phi4": c_phi4,
        "c_out": c_out,
        "dtype": dtype,
        "slope": slope,
    }
    return loss, recon, cache


def _backward(model: ToyModel, cache) -> dict[str, np.ndarray]:
    dtype = cache["dtype"]
    grads = {k: np.zeros_like(v, dtype=dtype) for k, v in model.params.items()}

    drecon = (2.0 * (cache["recon"] - cache["img"]) * cache["maskpix"] / cache["count"]).astype(dtype)
    dr, grads["out_w"], grads["out_b"] = ops.conv2d_backward(drecon[None, :, :], cache["c_out"])
    dd = ops.upsample2_backward(dr)

    dens_grads: list[np.ndarray | None] = [None] * N_STAGES
    # Walk decoder steps back up: dec_caches[i] produced D at level 3-i.
    for i in range(len(cache["dec"]) - 1, -1, -1):
        level = N_STAGES - 1 - i  # D-level this step produced (3, 2, 1)
        c_b, c_ba, c_phi = cache["dec"][i]
        dskip, dw_phi, db_phi = ops.conv2d_backward(dd, c_phi)
        grads[f"phi{level}_w"] += dw_phi
        grads[f"phi{level}_b"] += db_phi
        dens_grads[level - 1] = dskip
        dbz = ops.leaky_backward(dd, c_ba)
        du, dw_b, db_b = ops.conv2d_backward(dbz, c_b)
        grads[f"b{level}_w"] += dw_b
        grads[f"b{level}_b"] += db_b
        dd = ops.upsample2_backward(du)
    dd4, dw4, db4 = ops.conv2d_backward(dd, cache["c_phi4"])
    grads["phi4_w"] += dw4
    grads["phi4_b"] += db4
    dens_grads[N_STAGES - 1] = dd4

    dfeat: list[np.ndarray | None] = [None] * N_STAGES
    for level in range(1, N_STAGES + 1):
        df, dm = ops.densify_backward(dens_grads[level - 1], cache["vis"][level - 1])
        dfeat[level - 1] = df
        grads[f"m{level}"] += dm

    g = None
    for s in range(N_STAGES - 1, -1, -1):
        c_conv, c_act, vis = cache["enc"][s]
        upstream = dfeat[s] if g is None else dfeat[s] + g
        da = ops.mask_cells_backward(upstream, vis)
        dz = ops.leaky_backward(da, c_act)
        dx, dw, db = ops.conv2d_backward(dz, c_conv)
        grads[f"enc{s}_w"] += dw
        grads[f"enc{s}_b"] += db
        g = dx
    return grads


def forward(model: ToyModel, image: np.ndarray, plan: MaskPlan):
    """Reconstruction and masked-MSE loss, no gradients."""
    loss, recon, _ = _forward(model, image, plan, np.float32)
    return recon, loss


def loss_and_grads(model: ToyModel, image: np.ndarray, plan: MaskPlan, dtype=np.float32):
    loss, _, cache = _forward(model, image, plan, dtype)
    return loss, _backward(model, cache)


def sparse_encode(model: ToyModel, sparse_image: np.ndarray, plan: MaskPlan):
    """Feature pyramid of the sparse image: list of (features, visibility)."""
    _check_plan(sparse_image, plan)
    p = model.params
    slope = model.hyper.act_slope
    x = sparse_image.astype(np.float32)[None, :, :]
    pyramid = []
    for s in range(N_STAGES):
        z, _ = ops.conv2d(x, p[f"enc{s}_w"], p[f"enc{s}_b"], stride=2, pad=1)
        a, _ = ops.leaky(z, slope)
        vis = level_visibility(plan, s + 1)
        f = ops.mask_cells(a, vis)
        pyramid.append((f, vis))
        x = f
    return pyramid


def densify_pyramid(model: ToyModel, pyramid) -> list[np.ndarray]:
    """Fill masked cells of every level with its learned embedding."""
    return [
        ops.densify(f, vis, model.params[f"m{level + 1}"])
        for level, (f, vis) in enumerate(pyramid)
    ]


def decode(model: ToyModel, densified: list[np.ndarray]) -> np.ndarray:
    """Top-down reconstruction from a densified pyramid (levels 1..4)."""
    p = model.params
    slope = model.hyper.act_slope
    d, _ = ops.conv2d(densified[3], p["phi4_w"], p["phi4_b"])
    for level in range(N_STAGES, 1, -1):
        u = ops.upsample2(d)
        bz, _ = ops.conv2d(u, p[f"b{level - 1}_w"], p[f"b{level - 1}_b"], stride=1, pad=1)
        ba, _ = ops.leaky(bz, slope)
        skip, _ = ops.conv2d(densified[level - 2], p[f"phi{level - 1}_w"], p[f"phi{level - 1}_b"])
        d = ba + skip
    r = ops.upsample2(d)
    out, _ = ops.conv2d(r, p["out_w"], p["out_b"], stride=1, pad=1)
    return out[0]


def recon_loss(recon: np.ndarray, image: np.ndarray, plan: MaskPlan) -> float:
    """Mean squared error over pixels of masked patches; visible pixels
    contribute exactly zero. Accumulated in float64."""
    if recon.shape != image.shape:
        raise ShapeMismatch(f"recon {recon.shape} vs image {image.shape}")
    _check_plan(image, plan)
    maskpix = 1.0 - pixel_visibility(plan, np.float64)
    count = maskpix.sum()
    if count == 0:
        raise NoMaskedPatches("plan masks no patches; loss is undefined")
    diff = recon.astype(np.float64) - image.astype(np.float64)
    return float((diff * diff * maskpix).sum() / count)


def train_step(model: ToyModel, image: np.ndarray, plan: MaskPlan) -> float:
    """One SGD step; parameters updated in place; returns pre-update loss."""
    loss, grads = loss_and_grads(model, image, plan, np.float32)
    lr = model.hyper.lr
    for k in model.params:
        model.params[k] -= (lr * grads[k]).astype(np.float32)
    return loss


def grad_check(
    model: ToyModel,
    image: np.ndarray,
    plan: MaskPlan,
    epsilon: float = 1e-4,
    n_sample: int = 64,
    seed: int = 0,
) -> float:
    """Max relative error of reverse-mode vs. central finite differences
    over a random parameter subsample. Runs in float64 so the difference
    quotient is not drowned by single-precision forward noise."""
    if not (1e-6 <= epsilon <= 1e-2):
        raise ValueError("epsilon must lie in [1e-6, 1e-2]")
    model64 = ToyModel(
        hyper=model.hyper,
        params={k: v.astype(np.float64) for k, v in model.params.items()},
    )
    img64 = image.astype(np.float64)
    _, grads = loss_and_grads(model64, img64, plan, np.float64)

    names = param_order(model64)
    sizes = [model64.params[k].size for k in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_sample, total), replace=False)

    worst = 0.0
    for flat_idx in picks:
        idx = int(flat_idx)
        for name, size in zip(names, sizes):
            if idx < size:
                break
            idx -= size
        arr = model64.params[name]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + epsilon
        lp, _, _ = _forward(model64, img64, plan, np.float64)
        arr.flat[idx] = orig - epsilon
        lm, _, _ = _forward(model64, img64, plan, np.float64)
        arr.flat[idx] = orig
        g_fd = (lp - lm) / (2 * epsilon)
        g_ad = grads[name].flat[idx]
        rel = abs(g_ad - g_fd) / max(abs(g_ad), abs(g_fd), 1e-8)
        worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: "MWMT" magic + JSON header + little-endian f32 payload
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"MWMT"


def save_model(path: str | os.PathLike, model: ToyModel, extra: dict | None = None) -> None:
    names = param_order(model)
    header = {
        "hyper": {
            "image_h": model.hyper.image_h,
            "image_w": model.hyper.image_w,
            "patch": model.hyper.patch,
            "channels": list(model.hyper.channels),
            "dec_channels": model.hyper.dec_channels,
            "act_slope": model.hyper.act_slope,
            "lr": model.hyper.lr,
            "seed": model.hyper.seed,
        },
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in names],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("ascii")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for k in names:
            f.write(model.params[k].astype("<f4").tobytes())


def load_model(path: str | os.PathLike) -> ToyModel:
    from ..errors import MagicMismatch, TruncatedFile

    with open(path, "rb") as f:
        if f.read(4) != CKPT_MAGIC:
            raise MagicMismatch(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        hy = header["hyper"]
        hyper = ToyHyper(
            image_h=hy["image_h"],
            image_w=hy["image_w"],
            patch=hy["patch"],
            channels=tuple(hy["channels"]),
            dec_channels=hy["dec_channels"],
            act_slope=hy["act_slope"],
            lr=hy["lr"],
            seed=hy["seed"],
        )
        params = {}
        for spec in header["params"]:
            n = int(np.prod(spec["shape"]))
            raw = f.read(4 * n)
            if len(raw) < 4 * n:
                raise TruncatedFile(f"{path}: parameter payload truncated")
            params[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(spec["shape"]).copy()
    return ToyModel(hyper=hyper, params=params)
