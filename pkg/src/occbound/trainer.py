"""Desk-scale two-head convolutional pixel classifier.

Topology (stride 1, zero padding, all float64):

    image (1,h,w) -> conv 3x3 -> 8ch -> relu -> conv 3x3 -> 16ch -> relu
        -> 1x1 head -> sigmoid  (boundary probability)
        -> 1x1 head -> linear   (orientation, unconstrained; the fold
                                 penalty handles out-of-range values)

Backpropagation is written out by hand so the whole parameter vector
(~1.3k values) stays finite-difference checkable. Training is strictly
deterministic given (seed, config, manifest): sample indices, flips and
crop corners come from one seeded generator, drawn in a fixed order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .angles import fold_angle
from .benchmark import MatchParams, pr_sweep, summarize
from .errors import FormatError, ParameterError, ValidationError
from .losses import (FocalParams, MultiTaskParams, boundary_loss, compute_alpha,
                     orientation_loss)
from .maps import GroundTruth, load_record, read_manifest, validate_map
from .thinning import NmsParams, adjust_orientations, nms_thin

LOSS_KINDS = ("cce", "focal", "attention")


@dataclass(frozen=True)
class TinyNet:
    conv1_w: np.ndarray  # (8, 1, 3, 3)
    conv1_b: np.ndarray  # (8,)
    conv2_w: np.ndarray  # (16, 8, 3, 3)
    conv2_b: np.ndarray  # (16,)
    head_b_w: np.ndarray  # (16,)
    head_b_b: np.ndarray  # (1,)
    head_o_w: np.ndarray  # (16,)
    head_o_b: np.ndarray  # (1,)

    FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
              "head_b_w", "head_b_b", "head_o_w", "head_o_b")

    def as_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(**{name: np.asarray(d[name], dtype=np.float64) for name in cls.FIELDS})

    def n_params(self):
        return sum(v.size for v in self.as_dict().values())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 2e-4
    batch_size: int = 5
    crop: int = 32
    iters: int = 2000
    seed: int = 0
    loss: MultiTaskParams = field(default_factory=MultiTaskParams)
    loss_kind: str = "attention"
    focal: FocalParams = field(default_factory=FocalParams)
    iter_size: int = 1  # gradient accumulation count
    flip_prob: float = 0.5

    def __post_init__(self):
        if not self.lr > 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1 or self.iters < 1 or self.iter_size < 1:
            raise ParameterError("batch_size, iters and iter_size must be >= 1")
        if self.crop < 8:
            raise ParameterError(f"crop must be >= 8, got {self.crop}")
        if self.loss_kind not in LOSS_KINDS:
            raise ParameterError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ParameterError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")


def init_params(seed):
    """He-style init: N(0, sqrt(2/fan_in)) per filter, biases 0.

    Deterministic for a fixed seed; draw order is conv1, conv2, boundary
    head, orientation head.
    """
    rng = np.random.default_rng(seed)
    return TinyNet(
        conv1_w=rng.normal(0.0, np.sqrt(2.0 / 9.0), (8, 1, 3, 3)),
        conv1_b=np.zeros(8),
        conv2_w=rng.normal(0.0, np.sqrt(2.0 / 72.0), (16, 8, 3, 3)),
        conv2_b=np.zeros(16),
        head_b_w=rng.normal(0.0, np.sqrt(2.0 / 16.0), 16),
        head_b_b=np.zeros(1),
        head_o_w=rng.normal(0.0, np.sqrt(2.0 / 16.0), 16),
        head_o_b=np.zeros(1),
    )


def _conv3x3(x, w, b):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.einsum("cijuv,ocuv->oij", win, w) + b[:, None, None]


def _conv3x3_backward(x, w, dz):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))
    dw = np.einsum("oij,cijuv->ocuv", dz, win)
    db = dz.sum(axis=(1, 2))
    dzp = np.pad(dz, ((0, 0), (1, 1), (1, 1)))
    dwin = sliding_window_view(dzp, (3, 3), axis=(1, 2))
    dx = np.einsum("oijuv,ocuv->cij", dwin, w[:, :, ::-1, ::-1])
    return dx, dw, db


def _forward_cache(net: TinyNet, image64):
    x = image64[None, :, :]
    z1 = _conv3x3(x, net.conv1_w, net.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2 = _conv3x3(a1, net.conv2_w, net.conv2_b)
    a2 = np.maximum(z2, 0.0)
    logit = np.einsum("c,cij->ij", net.head_b_w, a2) + net.head_b_b[0]
    prob = 1.0 / (1.0 + np.exp(-logit))
    orient = np.einsum("c,cij->ij", net.head_o_w, a2) + net.head_o_b[0]
    return {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2,
            "logit": logit, "prob": prob, "orient": orient}


def forward(net: TinyNet, image):
    """Full-resolution forward pass; returns (probability, orientation) maps.

    The orientation output is the raw linear head, not folded.
    """
    image = validate_map(image, "image")
    cache = _forward_cache(net, np.asarray(image, dtype=np.float64))
    return cache["prob"].astype(np.float32), cache["orient"].astype(np.float32)


def predict(net: TinyNet, image):
    """Forward pass with the orientation folded into (-pi, pi] for export."""
    image = validate_map(image, "image")
    cache = _forward_cache(net, np.asarray(image, dtype=np.float64))
    return (cache["prob"].astype(np.float32),
            fold_angle(cache["orient"]).astype(np.float32))


class BackwardResult(NamedTuple):
    grads: dict
    loss: float
    loss_boundary: float
    loss_orient: float


def backward(net: TinyNet, image, gt: GroundTruth, params: MultiTaskParams,
             loss_kind="attention", focal_params: FocalParams | None = None,
             alpha=None):
    """Loss and exact parameter gradients for one image.

    Returns the unnormalized per-image objective ``boundary + lam *
    orientation`` (the batch loop applies the 1/N factor). ``alpha``
    defaults to this image's own class balance; the trainer passes the
    batch-level value.
    """
    image = validate_map(image, "image")
    if np.asarray(image).shape != np.asarray(gt.boundary).shape:
        raise ValidationError("image/ground-truth dimensions differ")
    if alpha is None:
        alpha = compute_alpha([gt.boundary])
    cache = _forward_cache(net, np.asarray(image, dtype=np.float64))
    prob = cache["prob"]
    b64 = np.asarray(gt.boundary, dtype=np.float64)

    loss_px, dldp = boundary_loss(prob, b64, alpha, loss_kind,
                                  params.attention, focal_params, params.clamp_eps)
    loss_b = float(np.sum(loss_px))
    loss_o, dldo = orientation_loss(cache["orient"], gt, params.sigma)

    # straight-through the probability clamp; sigmoid outputs rarely pin it
    dlogit = dldp * prob * (1.0 - prob)
    dorient = params.lam * dldo

    a2 = cache["a2"]
    da2 = (net.head_b_w[:, None, None] * dlogit
           + net.head_o_w[:, None, None] * dorient)
    grads = {
        "head_b_w": np.einsum("ij,cij->c", dlogit, a2),
        "head_b_b": np.array([dlogit.sum()]),
        "head_o_w": np.einsum("ij,cij->c", dorient, a2),
        "head_o_b": np.array([dorient.sum()]),
    }
    dz2 = da2 * (cache["z2"] > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = _conv3x3_backward(cache["a1"], net.conv2_w, dz2)
    dz1 = da1 * (cache["z1"] > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv3x3_backward(cache["x"], net.conv1_w, dz1)

    loss = loss_b + params.lam * loss_o
    return BackwardResult(grads, loss, loss_b, loss_o)


def zero_velocity(net: TinyNet):
    return {k: np.zeros_like(v) for k, v in net.as_dict().items()}


def sgd_step(net: TinyNet, grads, config: TrainConfig, velocity):
    """v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v."""
    new_params = {}
    new_velocity = {}
    for name, p in net.as_dict().items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape mismatch for {name}")
        v = (config.momentum * velocity[name]
             - config.lr * (g + config.weight_decay * p))
        new_velocity[name] = v
        new_params[name] = p + v
    return TinyNet.from_dict(new_params), new_velocity


def _flip_sample(image, gt: GroundTruth):
    """Mirror columns; orientations negate (and refold) under the left rule."""
    boundary = np.ascontiguousarray(gt.boundary[:, ::-1])
    orient = fold_angle(-np.asarray(gt.orientation, dtype=np.float64)[:, ::-1])
    orient = np.where(boundary == 1.0, orient, 0.0).astype(np.float32)
    return np.ascontiguousarray(image[:, ::-1]), GroundTruth(boundary, orient)


def _load_records(manifest):
    if isinstance(manifest, (str, Path)):
        manifest = read_manifest(manifest)
    return list(manifest)


def train(manifest, config: TrainConfig):
    """SGD training over a manifest; returns (net, history).

    History rows are (iteration, loss, loss_boundary, loss_orient), all
    normalized by the effective batch. Per batch sample the generator
    draws, in order: record index, flip uniform, crop row, crop column.
    """
    records = _load_records(manifest)
    if not records:
        raise ValidationError("training manifest is empty")
    data = [load_record(rec) for rec in records]
    net = init_params(config.seed)
    velocity = zero_velocity(net)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))
    history = []
    for it in range(config.iters):
        total = {k: np.zeros_like(v) for k, v in net.as_dict().items()}
        sum_loss = sum_b = sum_o = 0.0
        for _ in range(config.iter_size):
            batch = []
            for _ in range(config.batch_size):
                idx = int(rng.integers(0, len(data)))
                image, gt = data[idx]
                do_flip = rng.random() < config.flip_prob
                if do_flip:
                    image, gt = _flip_sample(image, gt)
                h, w = image.shape
                ch = min(config.crop, h)
                cw = min(config.crop, w)
                r0 = int(rng.integers(0, h - ch + 1))
                c0 = int(rng.integers(0, w - cw + 1))
                batch.append((
                    image[r0:r0 + ch, c0:c0 + cw],
                    GroundTruth(gt.boundary[r0:r0 + ch, c0:c0 + cw],
                                gt.orientation[r0:r0 + ch, c0:c0 + cw])))
            alpha = compute_alpha([gt.boundary for _, gt in batch])
            for image, gt in batch:
                res = backward(net, image, gt, config.loss, config.loss_kind,
                               config.focal, alpha)
                for k in total:
                    total[k] += res.grads[k]
                sum_loss += res.loss
                sum_b += res.loss_boundary
                sum_o += config.loss.lam * res.loss_orient
        scale = 1.0 / (config.batch_size * config.iter_size)
        grads = {k: v * scale for k, v in total.items()}
        net, velocity = sgd_step(net, grads, config, velocity)
        history.append((it, sum_loss * scale, sum_b * scale, sum_o * scale))
    return net, history


def history_csv(history):
    """CSV text: iter,loss,loss_boundary,loss_orient."""
    lines = ["iter,loss,loss_boundary,loss_orient"]
    lines += [f"{it},{a!r},{b!r},{c!r}" for it, a, b, c in history]
    return "\n".join(lines) + "\n"


# checkpoint container: OCCP | version u8 | n_blocks u32, then per block
# name_len u16 | name utf-8 | dtype u8 (1 = f64 LE) | ndim u8 | dims u32 each
# | payload
CKPT_MAGIC = b"OCCP"
CKPT_VERSION = 1
CKPT_DTYPE_F64 = 1


def save_checkpoint(net: TinyNet, path):
    blocks = net.as_dict()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<BI", CKPT_VERSION, len(blocks)))
        for name, arr in blocks.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BB", CKPT_DTYPE_F64, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n_blocks = struct.unpack_from("<BI", raw, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 9
    blocks = {}
    try:
        for _ in range(n_blocks):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            dtype, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            if dtype != CKPT_DTYPE_F64:
                raise FormatError(f"{path}: unsupported block dtype {dtype}")
            dims = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            count = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            off += 8 * count
            blocks[name] = arr.reshape(dims).astype(np.float64)
    except struct.error as e:
        raise FormatError(f"{path}: truncated checkpoint") from e
    missing = set(TinyNet.FIELDS) - set(blocks)
    if missing:
        raise FormatError(f"{path}: missing parameter blocks {sorted(missing)}")
    return TinyNet.from_dict(blocks)


def run_inference(net: TinyNet, records, nms_params: NmsParams | None = None,
                  adjust_radius=2):
    """predict -> nms -> orientation adjustment for each manifest record.

    Returns (preds, gts) where preds pairs the thinned probability map
    with the adjusted orientation map, ready for the benchmark.
    """
    nms_params = nms_params or NmsParams()
    preds = []
    gts = []
    for rec in records:
        image, gt = load_record(rec)
        prob, orient = predict(net, image)
        thinned = nms_thin(prob, nms_params)
        binary = (thinned > 0).astype(np.float32)
        adjusted = adjust_orientations(binary, orient, adjust_radius)
        preds.append((thinned, adjusted))
        gts.append(gt)
    return preds, gts


def sweep_beta_gamma(manifest, base_config: TrainConfig, betas, gammas,
                     eval_manifest=None, nms_params: NmsParams | None = None,
                     match_params: MatchParams | None = None, adjust_radius=2):
    """Grid search over the attention modulator; returns (beta, gamma,
    ods_f, ois_f, ap) rows.

    Every cell trains from the same seed on the same record order. When
    no separate evaluation manifest is given, the last 20% of records
    (at least one) are held out and the rest train.
    """
    if not betas or not gammas:
        raise ParameterError("beta and gamma lists must be nonempty")
    records = _load_records(manifest)
    if eval_manifest is not None:
        train_records = records
        eval_records = _load_records(eval_manifest)
    else:
        if len(records) < 2:
            raise ValidationError("need >= 2 records to hold out an evaluation split")
        n_eval = max(1, len(records) // 5)
        train_records = records[:-n_eval]
        eval_records = records[-n_eval:]
    rows = []
    from .losses import AttentionParams

    for beta in betas:
        for gamma in gammas:
            cfg = replace(base_config, loss_kind="attention",
                          loss=replace(base_config.loss,
                                       attention=AttentionParams(beta, gamma)))
            net, _ = train(train_records, cfg)
            preds, gts = run_inference(net, eval_records, nms_params, adjust_radius)
            dataset, per_image = pr_sweep([prob for prob, _ in preds], gts, match_params)
            summary = summarize(dataset, per_image)
            rows.append((beta, gamma, summary.ods_f, summary.ois_f, summary.ap))
    return rows


def sweep_csv(rows):
    """CSV text: beta,gamma,ods_f,ois_f,ap."""
    lines = ["beta,gamma,ods_f,ois_f,ap"]
    lines += [f"{b!r},{g!r},{o!r},{i!r},{a!r}" for b, g, o, i, a in rows]
    return "\n".join(lines) + "\n"
