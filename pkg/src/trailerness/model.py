"""Per-stream trailerness scorers trained with focal loss.

The main scorer is a post-norm transformer encoder (linear projection,
sinusoidal positional encodings, multi-head self-attention and MLP sublayers
with residuals and layer normalization, sigmoid head) with exact reverse-mode
gradients written out by hand. A per-unit MLP and a uniform-random scorer
serve as baselines. All internal math runs in float64.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import evaluation, features, fusion, hashmatch, timeline as tl
from .errors import (
    BadMagicError,
    FileFormatError,
    InvalidInputError,
    MissingArtifactError,
    TruncatedPayloadError,
)

SCORE_CLIP = 1e-12  # loss-side guard against log(0) on saturated sigmoids
LN_EPS = 1e-12


@dataclass
class StreamConfig:
    d_k: int = 128
    n_heads: int = 4
    n_blocks: int = 1
    mlp_hidden: int | None = None  # defaults to 4 * d_k
    alpha: float = 0.95
    gamma: float = 1.0
    learning_rate: float = 1e-4
    n_epochs: int = 200
    seed: int = 0
    early_stopping_patience: int | None = None
    use_positional_encoding: bool = True
    decision_threshold: float = 0.5
    l2_normalize: bool = False

    def __post_init__(self):
        if self.d_k < 2 or self.n_heads < 1 or self.d_k % self.n_heads != 0:
            raise InvalidInputError("d_k must be >= 2 and divisible by n_heads")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must be in (0, 1)")
        if self.gamma < 0.0:
            raise InvalidInputError("gamma must be >= 0")
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise InvalidInputError("decision threshold must be in [0, 1]")
        if self.n_blocks < 1 or self.n_epochs < 1:
            raise InvalidInputError("n_blocks and n_epochs must be >= 1")

    @property
    def hidden(self) -> int:
        return self.mlp_hidden if self.mlp_hidden is not None else 4 * self.d_k


def positional_encoding(n: int, d_k: int) -> np.ndarray:
    """Sinusoidal encodings: entry (pos, h) is sin(pos / 10000^(h/d_k)) for
    even h and cos(pos / 10000^((h-1)/d_k)) for odd h."""
    if n < 1 or d_k < 2:
        raise InvalidInputError("need n >= 1 and d_k >= 2")
    pos = np.arange(n, dtype=np.float64)[:, None]
    h = np.arange(d_k)[None, :]
    angle = pos / np.power(10000.0, (h - h % 2) / d_k)
    return np.where(h % 2 == 0, np.sin(angle), np.cos(angle))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# focal loss
# ---------------------------------------------------------------------------


def _match_lengths(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise InvalidInputError(
            f"scores ({scores.size}) and labels ({labels.size}) differ in length"
        )
    return scores, labels


def focal_loss(scores, labels, alpha: float, gamma: float) -> float:
    """Mean of -alpha * (1 - o)^gamma * log(o) with o the probability assigned
    to the true class; o is clipped away from {0, 1} inside the loss."""
    scores, labels = _match_lengths(scores, labels)
    o = np.where(labels == 1, scores, 1.0 - scores)
    oc = np.clip(o, SCORE_CLIP, 1.0 - SCORE_CLIP)
    return float(np.mean(-alpha * (1.0 - oc) ** gamma * np.log(oc)))


def focal_loss_grad(scores, labels, alpha: float, gamma: float) -> np.ndarray:
    """Derivative of the mean focal loss with respect to each score."""
    scores, labels = _match_lengths(scores, labels)
    o = np.where(labels == 1, scores, 1.0 - scores)
    oc = np.clip(o, SCORE_CLIP, 1.0 - SCORE_CLIP)
    one_m = 1.0 - oc
    if gamma == 0.0:
        dl = -alpha / oc
    else:
        dl = alpha * gamma * one_m ** (gamma - 1.0) * np.log(oc) - alpha * one_m**gamma / oc
    inside = (o > SCORE_CLIP) & (o < 1.0 - SCORE_CLIP)
    dl = np.where(inside, dl, 0.0)
    sign = np.where(labels == 1, 1.0, -1.0)
    return dl * sign / scores.size


# ---------------------------------------------------------------------------
# transformer scorer
# ---------------------------------------------------------------------------


def _layer_norm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dout, g, cache):
    xhat, inv = cache
    dg = (dout * xhat).sum(axis=0)
    db = dout.sum(axis=0)
    dxhat = dout * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    return dx, dg, db


class TransformerScorer:
    """Sequence scorer over one (modality, scale) feature stream."""

    kind = "transformer"

    def __init__(self, d_in: int, config: StreamConfig, init: bool = True):
        self.d_in = int(d_in)
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self._declare()
        if init:
            self._init_params()

    def _declare(self):
        c = self.config
        shapes = [("w_in", (self.d_in, c.d_k)), ("b_in", (c.d_k,))]
        for i in range(c.n_blocks):
            p = f"block{i}."
            shapes += [
                (p + "wq", (c.d_k, c.d_k)),
                (p + "wk", (c.d_k, c.d_k)),
                (p + "wv", (c.d_k, c.d_k)),
                (p + "wo", (c.d_k, c.d_k)),
                (p + "ln1_g", (c.d_k,)),
                (p + "ln1_b", (c.d_k,)),
                (p + "w1", (c.d_k, c.hidden)),
                (p + "b1", (c.hidden,)),
                (p + "w2", (c.hidden, c.d_k)),
                (p + "b2", (c.d_k,)),
                (p + "ln2_g", (c.d_k,)),
                (p + "ln2_b", (c.d_k,)),
            ]
        shapes += [("w_out", (c.d_k, 1)), ("b_out", (1,))]
        self._shapes = shapes
        self.param_names = [name for name, _ in shapes]

    def _init_params(self):
        rng = np.random.default_rng(self.config.seed)
        for name, shape in self._shapes:
            leaf = name.rsplit(".", 1)[-1]
            if leaf.endswith("_g"):
                self.params[name] = np.ones(shape)
            elif leaf.startswith("b") or leaf.endswith("_b"):
                self.params[name] = np.zeros(shape)
            else:
                self.params[name] = rng.standard_normal(shape) / np.sqrt(shape[0])

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInputError("expected a nonempty (units, dims) matrix")
        if x.shape[1] != self.d_in:
            raise InvalidInputError(
                f"input has {x.shape[1]} dims, model expects {self.d_in}"
            )
        return x

    def forward_cached(self, x):
        x = self._check_input(x)
        c, p = self.config, self.params
        n = x.shape[0]
        heads, hd = c.n_heads, c.d_k // c.n_heads
        scale = 1.0 / np.sqrt(hd)

        h = x @ p["w_in"] + p["b_in"]
        if c.use_positional_encoding:
            h = h + positional_encoding(n, c.d_k)
        blocks = []
        for i in range(c.n_blocks):
            pf = f"block{i}."
            hin = h
            q = (hin @ p[pf + "wq"]).reshape(n, heads, hd).transpose(1, 0, 2)
            k = (hin @ p[pf + "wk"]).reshape(n, heads, hd).transpose(1, 0, 2)
            v = (hin @ p[pf + "wv"]).reshape(n, heads, hd).transpose(1, 0, 2)
            s = q @ k.transpose(0, 2, 1) * scale
            s = s - s.max(axis=2, keepdims=True)
            e = np.exp(s)
            attn = e / e.sum(axis=2, keepdims=True)
            zc = (attn @ v).transpose(1, 0, 2).reshape(n, c.d_k)
            m = zc @ p[pf + "wo"]

            r1 = hin + m
            h1, ln1 = _layer_norm(r1, p[pf + "ln1_g"], p[pf + "ln1_b"])
            u = h1 @ p[pf + "w1"] + p[pf + "b1"]
            gu = np.maximum(u, 0.0)
            f = gu @ p[pf + "w2"] + p[pf + "b2"]
            r2 = h1 + f
            h, ln2 = _layer_norm(r2, p[pf + "ln2_g"], p[pf + "ln2_b"])
            blocks.append(
                dict(hin=hin, q=q, k=k, v=v, attn=attn, zc=zc, ln1=ln1, h1=h1, u=u, gu=gu, ln2=ln2)
            )
        logits = (h @ p["w_out"] + p["b_out"]).reshape(-1)
        scores = _sigmoid(logits)
        cache = dict(x=x, h_final=h, scores=scores, blocks=blocks, scale=scale)
        return scores, cache

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def backward(self, cache, dscores) -> dict[str, np.ndarray]:
        c, p = self.config, self.params
        heads, hd = c.n_heads, c.d_k // c.n_heads
        grads = {name: np.zeros_like(p[name]) for name in self.param_names}

        scores = cache["scores"]
        dlogits = (dscores * scores * (1.0 - scores))[:, None]
        grads["w_out"] = cache["h_final"].T @ dlogits
        grads["b_out"] = dlogits.sum(axis=0)
        dh = dlogits @ p["w_out"].T

        for i in reversed(range(c.n_blocks)):
            pf = f"block{i}."
            blk = cache["blocks"][i]
            n = blk["hin"].shape[0]

            dr2, dg2, db2 = _layer_norm_backward(dh, p[pf + "ln2_g"], blk["ln2"])
            grads[pf + "ln2_g"], grads[pf + "ln2_b"] = dg2, db2
            df = dr2
            grads[pf + "w2"] = blk["gu"].T @ df
            grads[pf + "b2"] = df.sum(axis=0)
            du = (df @ p[pf + "w2"].T) * (blk["u"] > 0.0)
            grads[pf + "w1"] = blk["h1"].T @ du
            grads[pf + "b1"] = du.sum(axis=0)
            dh1 = dr2 + du @ p[pf + "w1"].T

            dr1, dg1, db1 = _layer_norm_backward(dh1, p[pf + "ln1_g"], blk["ln1"])
            grads[pf + "ln1_g"], grads[pf + "ln1_b"] = dg1, db1
            dm = dr1
            grads[pf + "wo"] = blk["zc"].T @ dm
            dzc = dm @ p[pf + "wo"].T
            dz = dzc.reshape(n, heads, hd).transpose(1, 0, 2)
            dattn = dz @ blk["v"].transpose(0, 2, 1)
            dv = blk["attn"].transpose(0, 2, 1) @ dz
            attn = blk["attn"]
            ds = attn * (dattn - (dattn * attn).sum(axis=2, keepdims=True))
            ds = ds * cache["scale"]
            dq = ds @ blk["k"]
            dk = ds.transpose(0, 2, 1) @ blk["q"]

            dq = dq.transpose(1, 0, 2).reshape(n, c.d_k)
            dk = dk.transpose(1, 0, 2).reshape(n, c.d_k)
            dv = dv.transpose(1, 0, 2).reshape(n, c.d_k)
            hin = blk["hin"]
            grads[pf + "wq"] = hin.T @ dq
            grads[pf + "wk"] = hin.T @ dk
            grads[pf + "wv"] = hin.T @ dv
            dh = dr1 + dq @ p[pf + "wq"].T + dk @ p[pf + "wk"].T + dv @ p[pf + "wv"].T

        grads["w_in"] = cache["x"].T @ dh
        grads["b_in"] = dh.sum(axis=0)
        return grads

    def loss_and_gradients(self, x, labels, alpha: float | None = None, gamma: float | None = None):
        alpha = self.config.alpha if alpha is None else alpha
        gamma = self.config.gamma if gamma is None else gamma
        scores, cache = self.forward_cached(x)
        loss = focal_loss(scores, labels, alpha, gamma)
        grads = self.backward(cache, focal_loss_grad(scores, labels, alpha, gamma))
        return loss, grads


class MLPScorer:
    """Per-unit MLP baseline: no sequence context, no positional information."""

    kind = "mlp"

    def __init__(self, d_in: int, config: StreamConfig, init: bool = True):
        self.d_in = int(d_in)
        self.config = config
        self._shapes = [
            ("w1", (self.d_in, config.hidden)),
            ("b1", (config.hidden,)),
            ("w2", (config.hidden, 1)),
            ("b2", (1,)),
        ]
        self.param_names = [name for name, _ in self._shapes]
        self.params: dict[str, np.ndarray] = {}
        if init:
            rng = np.random.default_rng(config.seed)
            self.params["w1"] = rng.standard_normal(self._shapes[0][1]) / np.sqrt(self.d_in)
            self.params["b1"] = np.zeros(config.hidden)
            self.params["w2"] = rng.standard_normal(self._shapes[2][1]) / np.sqrt(config.hidden)
            self.params["b2"] = np.zeros(1)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != self.d_in:
            raise InvalidInputError(f"expected (units, {self.d_in}) matrix")
        return x

    def forward_cached(self, x):
        x = self._check_input(x)
        p = self.params
        u = x @ p["w1"] + p["b1"]
        gu = np.maximum(u, 0.0)
        logits = (gu @ p["w2"] + p["b2"]).reshape(-1)
        scores = _sigmoid(logits)
        return scores, dict(x=x, u=u, gu=gu, scores=scores)

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def backward(self, cache, dscores):
        p = self.params
        scores = cache["scores"]
        dlogits = (dscores * scores * (1.0 - scores))[:, None]
        grads = {
            "w2": cache["gu"].T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        du = (dlogits @ p["w2"].T) * (cache["u"] > 0.0)
        grads["w1"] = cache["x"].T @ du
        grads["b1"] = du.sum(axis=0)
        return grads

    def loss_and_gradients(self, x, labels, alpha=None, gamma=None):
        alpha = self.config.alpha if alpha is None else alpha
        gamma = self.config.gamma if gamma is None else gamma
        scores, cache = self.forward_cached(x)
        loss = focal_loss(scores, labels, alpha, gamma)
        grads = self.backward(cache, focal_loss_grad(scores, labels, alpha, gamma))
        return loss, grads


_MODEL_KINDS = {"transformer": TransformerScorer, "mlp": MLPScorer}


def random_baseline(n: int, seed: int) -> np.ndarray:
    """Uniform scores strictly inside (0, 1), deterministic per seed."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return (rng.integers(0, 1 << 53, size=n).astype(np.float64) + 0.5) * 2.0**-53


class Adam:
    """Adam with bias correction; update order follows the model's declared
    parameter order so training is reproducible."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------------------
# training over a dataset manifest
# ---------------------------------------------------------------------------


@dataclass
class StreamInput:
    episode_id: str
    x: np.ndarray
    bounds: np.ndarray
    frame_count: int
    frame_labels: np.ndarray | None = None
    unit_labels: np.ndarray | None = None


def _l2_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def load_stream_inputs(
    manifest: features.Manifest,
    split: str,
    modality: str,
    scale: str,
    l2_normalize: bool = False,
    labels_dir=None,
    with_labels: bool = True,
) -> list[StreamInput]:
    key = features.stream_key(modality, scale)
    out = []
    for ep in manifest.episodes_in(split):
        if key not in ep.feature_paths or not ep.feature_paths[key].exists():
            raise MissingArtifactError(
                f"{ep.id}: missing {key} features; run the synth stage first"
            )
        video = ep.load_timeline()
        fs = features.load_features(ep.feature_paths[key], video)
        x = fs.matrix.astype(np.float64)
        if l2_normalize:
            x = _l2_rows(x)
        item = StreamInput(
            episode_id=ep.id,
            x=x,
            bounds=video.bounds(scale),
            frame_count=video.frame_count,
        )
        if with_labels:
            labels_path = (
                Path(labels_dir) / f"{ep.id}.jsonl" if labels_dir else ep.labels_path
            )
            if not Path(labels_path).exists():
                raise MissingArtifactError(
                    f"{ep.id}: missing frame labels at {labels_path}; run the labels stage first"
                )
            frame_labels = hashmatch.read_label_runs(labels_path)
            if frame_labels.size != video.frame_count:
                raise InvalidInputError(
                    f"{ep.id}: {frame_labels.size} labels for {video.frame_count} frames"
                )
            clip_labels = tl.aggregate_labels(frame_labels, video.clip_bounds)
            if scale == "clip":
                unit_labels = clip_labels
            else:
                unit_labels = tl.aggregate_shot_labels(
                    clip_labels, video.clip_bounds, video.shot_bounds, frame_labels
                )
            item.frame_labels = frame_labels
            item.unit_labels = unit_labels
        out.append(item)
    return out


def frame_level_f1(model, inputs: list[StreamInput], threshold: float) -> float:
    preds, golds = [], []
    for ex in inputs:
        track = fusion.upsample_to_frames(model.forward(ex.x), ex.bounds, ex.frame_count)
        preds.append(evaluation.binarize(track.scores, threshold))
        golds.append(ex.frame_labels)
    return evaluation.prf1(np.concatenate(preds), np.concatenate(golds))[2]


def train_stream(
    manifest: features.Manifest,
    modality: str,
    scale: str,
    config: StreamConfig,
    model_kind: str = "transformer",
    labels_dir=None,
):
    """Train one stream scorer; returns (model, per-epoch history).

    Optimization is Adam over one full episode sequence per step, with the
    episode order shuffled once by the config seed and reused every epoch.
    """
    if model_kind not in _MODEL_KINDS:
        raise InvalidInputError(f"unknown model kind {model_kind!r}")
    train_in = load_stream_inputs(
        manifest, "train", modality, scale, config.l2_normalize, labels_dir
    )
    if not train_in:
        raise InvalidInputError("empty training set")
    all_units = np.concatenate([ex.unit_labels for ex in train_in])
    if all_units.min() == all_units.max():
        raise InvalidInputError(
            f"training labels are all {int(all_units[0])}; nothing to learn"
        )
    val_in = load_stream_inputs(
        manifest, "val", modality, scale, config.l2_normalize, labels_dir
    )
    patience = config.early_stopping_patience
    if patience is not None and not val_in:
        raise InvalidInputError("early stopping requires a validation split")

    model = _MODEL_KINDS[model_kind](train_in[0].x.shape[1], config)
    adam = Adam(model.params, config.learning_rate)
    order = np.random.default_rng(config.seed).permutation(len(train_in))

    history = []
    best_f1, best_params, stale = -1.0, None, 0
    for epoch in range(config.n_epochs):
        losses = []
        for idx in order:
            ex = train_in[idx]
            loss, grads = model.loss_and_gradients(ex.x, ex.unit_labels)
            adam.step(model.params, grads)
            losses.append(loss)
        val_f1 = (
            frame_level_f1(model, val_in, config.decision_threshold) if val_in else float("nan")
        )
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_f1": val_f1}
        )
        if patience is not None:
            if val_f1 > best_f1:
                best_f1 = val_f1
                best_params = {k: v.copy() for k, v in model.params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
    if patience is not None and best_params is not None:
        model.params = best_params
    return model, history


def train_mlp_baseline(manifest, modality, scale, config: StreamConfig, labels_dir=None):
    return train_stream(manifest, modality, scale, config, model_kind="mlp", labels_dir=labels_dir)


def save_history_csv(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_f1"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def load_history_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {
                "epoch": int(r["epoch"]),
                "train_loss": float(r["train_loss"]),
                "val_f1": float(r["val_f1"]),
            }
            for r in csv.DictReader(fh)
        ]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"TRLM"
_CKPT_VERSION = 1


def save_model(path, model, meta: dict | None = None) -> None:
    """Versioned binary checkpoint: JSON header plus float64 LE tensors in
    declared parameter order."""
    header = {
        "kind": model.kind,
        "d_in": model.d_in,
        "config": asdict(model.config),
        "meta": meta or {},
        "tensors": [[name, list(model.params[name].shape)] for name in model.param_names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<BI", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for name in model.param_names:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_model(path):
    """Load a checkpoint; returns (model, meta)."""
    data = Path(path).read_bytes()
    if len(data) < 9:
        raise TruncatedPayloadError(f"{path}: shorter than the checkpoint header")
    if data[:4] != _CKPT_MAGIC:
        raise BadMagicError(f"{path}: bad checkpoint magic {data[:4]!r}")
    version, hlen = struct.unpack("<BI", data[4:9])
    if version != _CKPT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 9 + hlen:
        raise TruncatedPayloadError(f"{path}: truncated checkpoint header")
    header = json.loads(data[9 : 9 + hlen].decode("utf-8"))
    if header["kind"] not in _MODEL_KINDS:
        raise FileFormatError(f"{path}: unknown model kind {header['kind']!r}")
    config = StreamConfig(**header["config"])
    model = _MODEL_KINDS[header["kind"]](header["d_in"], config, init=False)

    pos = 9 + hlen
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if len(data) < end:
            raise TruncatedPayloadError(f"{path}: truncated tensor {name}")
        model.params[name] = (
            np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        )
        pos = end
    if pos != len(data):
        raise FileFormatError(f"{path}: {len(data) - pos} trailing bytes")
    expected = [list(model.params[n].shape) for n in model.param_names]
    if [s for _, s in header["tensors"]] != expected:
        raise FileFormatError(f"{path}: tensor shapes disagree with declared config")
    return model, header["meta"]
