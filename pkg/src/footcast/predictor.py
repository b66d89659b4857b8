"""Two-branch MLP foothold predictor with ensemble + MC-dropout inference.

A member is a list of :class:`Layer` objects tagged by branch.  The x-branch
reads the main input (scan, command, gait phase), the u-branch reads the
uncertainty-only input (command, pooled scan), and the head maps the
concatenated branch outputs to 12 foothold coordinates.  Hidden layers use
tanh; the last head layer is linear.

Stochastic passes are evaluated with broadcasting: inputs carry a leading
axis of size 1 and masks a leading axis of size M, so one matmul per layer
covers all M passes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InsufficientSamplesError, StructureError, WeightsFormatError
from .rng import stream

X_SIZE = 106
U_SIZE = 15
OUT_SIZE = 12
VAR_FLOOR = 1e-8
VAR_CEIL = 1.0
FORMAT_HEADER = "FOOTCAST-NET v1"

BRANCHES = ("x", "u", "head")


@dataclass
class Layer:
    branch: str
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    dropout: float = 0.0
    activation: str = "tanh"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.branch not in BRANCHES:
            raise StructureError(f"unknown branch tag {self.branch!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise StructureError(f"layer weight {self.weight.shape} and bias {self.bias.shape} disagree")
        if not 0 <= self.dropout < 1:
            raise StructureError(f"dropout probability must lie in [0, 1), got {self.dropout}")
        if self.activation not in ("tanh", "linear"):
            raise StructureError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "Layer":
        return Layer(self.branch, self.weight.copy(), self.bias.copy(), self.dropout, self.activation)


def build_member(
    seed: int,
    x_hidden=(64, 32),
    u_hidden=(32, 32),
    dropout: float = 0.1,
    x_size: int = X_SIZE,
    u_size: int = U_SIZE,
    out_size: int = OUT_SIZE,
) -> list[Layer]:
    """Glorot-uniform initialised member; biases start at zero."""
    rng = stream("init", seed)
    layers = []

    def add(branch, n_in, n_out, p, act):
        bound = np.sqrt(6.0 / (n_in + n_out))
        layers.append(Layer(branch, rng.uniform(-bound, bound, (n_out, n_in)), np.zeros(n_out), p, act))

    n = x_size
    for width in x_hidden:
        add("x", n, width, 0.0, "tanh")
        n = width
    nx = n
    n = u_size
    for width in u_hidden:
        add("u", n, width, dropout, "tanh")
        n = width
    add("head", nx + n, out_size, 0.0, "linear")
    return layers


def build_ensemble(k: int = 3, seed: int = 0, **kwargs) -> list[list[Layer]]:
    return [build_member(seed * 1000 + i, **kwargs) for i in range(k)]


def _indices(member, branch):
    return [i for i, layer in enumerate(member) if layer.branch == branch]


def _check_shapes(member, x, u):
    for branch, arr in (("x", x), ("u", u)):
        idx = _indices(member, branch)
        if idx and arr.shape[-1] != member[idx[0]].n_in:
            raise StructureError(f"{branch}-input has {arr.shape[-1]} features, layer expects {member[idx[0]].n_in}")
        for a, b in zip(idx, idx[1:]):
            if member[a].n_out != member[b].n_in:
                raise StructureError(f"layer {a} -> {b} size mismatch")
    head = _indices(member, "head")
    if not head:
        raise StructureError("member has no head layer")
    xi, ui = _indices(member, "x"), _indices(member, "u")
    width = (member[xi[-1]].n_out if xi else x.shape[-1]) + (member[ui[-1]].n_out if ui else u.shape[-1])
    if member[head[0]].n_in != width:
        raise StructureError(f"head expects {member[head[0]].n_in} features, branches give {width}")


def _run(member, idx, h, masks, cache):
    for i in idx:
        layer = member[i]
        z = h @ layer.weight.T + layer.bias
        t = np.tanh(z) if layer.activation == "tanh" else z
        m = None if masks is None else masks.get(i)
        out = t if m is None else t * m
        if cache is not None:
            cache[i] = (h, t, m)
        h = out
    return h


def _forward(member, x, u, masks, cache=None):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_shapes(member, x, u)
    hx = _run(member, _indices(member, "x"), x, masks, cache)
    hu = _run(member, _indices(member, "u"), u, masks, cache)
    shape = np.broadcast_shapes(hx.shape[:-1], hu.shape[:-1])
    h = np.concatenate(
        [np.broadcast_to(hx, shape + hx.shape[-1:]), np.broadcast_to(hu, shape + hu.shape[-1:])], axis=-1
    )
    if cache is not None:
        cache["split"] = (hx.shape, hu.shape)
    return _run(member, _indices(member, "head"), h, masks, cache)


def forward(member, x, u, dropout_mask=None) -> np.ndarray:
    """One pass of a member.  ``dropout_mask`` maps layer index to a multiplier
    array (already scaled by 1/(1-p)); ``None`` disables dropout."""
    return _forward(member, x, u, dropout_mask)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _back_layers(member, idx, cache, d, grads):
    for i in reversed(idx):
        layer = member[i]
        h, t, m = cache[i]
        if m is not None:
            d = d * m
        dz = d * (1.0 - t * t) if layer.activation == "tanh" else d
        hb = np.broadcast_to(h, dz.shape[:-1] + h.shape[-1:])
        dz2 = dz.reshape(-1, layer.n_out)
        grads[i] = (dz2.T @ hb.reshape(-1, layer.n_in), dz2.sum(axis=0))
        d = _unbroadcast(dz @ layer.weight, h.shape)
    return d


def backward_member(member, cache, dout) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients (dW, db) of every layer given dLoss/dOutput for a cached forward."""
    grads: list = [None] * len(member)
    d = _back_layers(member, _indices(member, "head"), cache, dout, grads)
    hx_shape, hu_shape = cache["split"]
    nx = hx_shape[-1]
    _back_layers(member, _indices(member, "x"), cache, _unbroadcast(d[..., :nx], hx_shape), grads)
    _back_layers(member, _indices(member, "u"), cache, _unbroadcast(d[..., nx:], hu_shape), grads)
    return grads


def pass_masks(member, seed, k: int, m: int, rows: int | None = None) -> dict:
    """Dropout multipliers for pass (k, m); one mask per row if ``rows`` is given."""
    keys = seed if isinstance(seed, tuple) else (seed,)
    rng = stream("dropout", *keys, k, m)
    masks = {}
    for i, layer in enumerate(member):
        if layer.dropout > 0:
            shape = (layer.n_out,) if rows is None else (rows, layer.n_out)
            masks[i] = (rng.random(shape) >= layer.dropout) / (1.0 - layer.dropout)
    return masks


def stacked_masks(member, seed, k: int, n_passes: int, rows: int | None = None) -> dict:
    """Masks for passes 0..n_passes-1 stacked on a leading axis, broadcastable over rows."""
    layout = tuple((layer.n_out, layer.dropout) for layer in member)
    return _stacked_masks_cached(layout, seed, k, n_passes, rows)


@lru_cache(maxsize=256)
def _stacked_masks_cached(layout, seed, k, n_passes, rows):
    # masks depend only on the layer widths and rates, never on the weights
    stub = [_MaskLayer(n, p) for n, p in layout]
    per_pass = [pass_masks(stub, seed, k, m, rows) for m in range(n_passes)]
    out = {}
    for i in per_pass[0] if per_pass else ():
        arr = np.stack([p[i] for p in per_pass])
        arr = arr[:, None, :] if rows is None else arr
        arr.flags.writeable = False
        out[i] = arr
    return out


@dataclass(frozen=True)
class _MaskLayer:
    n_out: int
    dropout: float


@dataclass(frozen=True)
class EpistemicPrediction:
    mean: np.ndarray
    variance: np.ndarray
    scalar_summary: np.ndarray | float
    raw_variance: np.ndarray | None = None


def pass_moments(passes):
    """Mean and unbiased variance over the leading axis.

    Deviations are taken about the first pass before averaging, so identical
    passes give back exactly that pass and exactly zero variance.
    """
    n = passes.shape[0]
    ref = passes[0]
    mean = ref + (passes - ref).mean(axis=0)
    raw = ((passes - mean) ** 2).sum(axis=0) / (n - 1)
    return mean, raw


def epistemic_stats(passes) -> EpistemicPrediction:
    """Mean and clamped unbiased variance over the leading (pass) axis."""
    passes = np.asarray(passes, dtype=float)
    n = passes.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 stochastic passes for a variance, got {n}")
    mean, raw = pass_moments(passes)
    var = np.clip(raw, VAR_FLOOR, VAR_CEIL)
    summary = var.mean(axis=-1)
    return EpistemicPrediction(mean, var, summary if summary.ndim else float(summary), raw)


def ensemble_passes(ensemble, x, u, M: int, seed: int) -> np.ndarray:
    """All K*M stochastic outputs, shape (K*M, ..., 12), member-major order."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    single = x.ndim == 1
    x2, u2 = np.atleast_2d(x), np.atleast_2d(u)
    out = []
    for k, member in enumerate(ensemble):
        masks = stacked_masks(member, seed, k, M)
        res = _forward(member, x2[None], u2[None], masks)
        out.append(np.broadcast_to(res, (M,) + res.shape[1:]))
    passes = np.concatenate(out, axis=0)
    return passes[:, 0] if single else passes


def predict(ensemble, x, u, M: int = 20, seed: int = 0) -> EpistemicPrediction:
    """Predictive mean and epistemic variance from K*M stochastic passes.

    ``x``/``u`` may be single vectors or (N, .) batches; each batch row gets the
    same masks, so a batched call equals the per-row calls.
    """
    if not ensemble:
        raise InsufficientSamplesError("ensemble is empty")
    if M < 1 or len(ensemble) * M < 2:
        raise InsufficientSamplesError(f"K*M = {len(ensemble) * M} passes; need at least 2")
    return epistemic_stats(ensemble_passes(ensemble, x, u, M, seed))


def _fmt(arr) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())


def save_weights(ensemble, path) -> None:
    lines = [FORMAT_HEADER, f"K {len(ensemble)}"]
    for k, member in enumerate(ensemble):
        lines.append(f"member {k} layers {len(member)}")
        for layer in member:
            lines.append(f"layer {layer.branch} {layer.n_in} {layer.n_out} {layer.dropout!r} {layer.activation}")
            lines.append(_fmt(layer.weight))
            lines.append(_fmt(layer.bias))
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path) -> list[list[Layer]]:
    lines = Path(path).read_text().split("\n")
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines) or (not lines[pos].strip() and pos == len(lines) - 1):
            raise WeightsFormatError(f"truncated file: missing {what}")
        line = lines[pos]
        pos += 1
        return line

    header = take("header")
    if header.strip() != FORMAT_HEADER:
        raise WeightsFormatError(f"version: expected {FORMAT_HEADER!r}, found {header.strip()!r}")
    parts = take("K").split()
    if len(parts) != 2 or parts[0] != "K":
        raise WeightsFormatError(f"K: malformed line {' '.join(parts)!r}")
    ensemble = []
    for k in range(int(parts[1])):
        head = take(f"member {k} header").split()
        if len(head) != 4 or head[0] != "member" or int(head[1]) != k:
            raise WeightsFormatError(f"member {k}: malformed header {' '.join(head)!r}")
        member = []
        for i in range(int(head[3])):
            spec = take(f"member {k} layer {i} shape").split()
            if len(spec) != 6 or spec[0] != "layer":
                raise WeightsFormatError(f"member {k} layer {i} shape: malformed {' '.join(spec)!r}")
            branch, n_in, n_out, p, act = spec[1], int(spec[2]), int(spec[3]), float(spec[4]), spec[5]
            w = take(f"member {k} layer {i} weights").split()
            if len(w) != n_in * n_out:
                raise WeightsFormatError(
                    f"member {k} layer {i} weights: expected {n_in * n_out} values, found {len(w)}"
                )
            b = take(f"member {k} layer {i} biases").split()
            if len(b) != n_out:
                raise WeightsFormatError(f"member {k} layer {i} biases: expected {n_out} values, found {len(b)}")
            member.append(
                Layer(branch, np.array([float(v) for v in w]).reshape(n_out, n_in), np.array([float(v) for v in b]), p, act)
            )
        ensemble.append(member)
    return ensemble
