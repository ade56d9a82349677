"""A small reverse-mode network core in numpy.

Networks are a list of :class:`LayerSpec` plus a :class:`NetworkParams`
holding one ``(weight, bias)`` pair per dense layer. ``forward`` returns the
output and a cache that ``backward`` consumes. Everything is float64.
"""
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FileFormatError, NumericalError

LAYER_KINDS = ("dense", "relu", "swish", "softplus", "flatten", "l2_normalize")
CHECKPOINT_MAGIC = "HBF-CKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    fan_in: int = 0
    fan_out: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and (self.fan_in < 1 or self.fan_out < 1):
            raise ValueError("dense layers need fan_in >= 1 and fan_out >= 1")


def dense(fan_in, fan_out):
    return LayerSpec("dense", fan_in, fan_out)


def mlp(sizes, activation="swish", final_activation=None):
    """Specs for a dense stack ``sizes[0] -> ... -> sizes[-1]``."""
    specs = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        specs.append(dense(a, b))
        last = i == len(sizes) - 2
        act = final_activation if last else activation
        if act is not None:
            specs.append(LayerSpec(act))
    return specs


@dataclass
class NetworkParams:
    weights: list
    biases: list
    seed: int = 0

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_arrays(cls, arrays, seed=0):
        return cls(list(arrays[0::2]), list(arrays[1::2]), seed)

    def copy(self):
        return NetworkParams([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.seed)

    @property
    def size(self):
        return sum(a.size for a in self.arrays())


def init_params(specs, seed=0):
    """Uniform fan-in initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for s in specs:
        if s.kind == "dense":
            bound = 1.0 / np.sqrt(s.fan_in)
            weights.append(rng.uniform(-bound, bound, size=(s.fan_out, s.fan_in)))
            biases.append(rng.uniform(-bound, bound, size=s.fan_out))
    return NetworkParams(weights, biases, seed)


def spec_fingerprint(specs):
    text = ";".join(f"{s.kind}:{s.fan_in}:{s.fan_out}" for s in specs)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class ForwardCache:
    specs: tuple
    params: NetworkParams
    inputs: list = field(default_factory=list)
    extras: list = field(default_factory=list)


def forward(specs, params, x):
    """Run the network on a batch.

    Parameters
    ----------
    specs : sequence of LayerSpec
    params : NetworkParams
    x : ndarray, shape (batch, ...) or (features,)

    Returns
    -------
    out : ndarray
    cache : ForwardCache
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None]
    cache = ForwardCache(tuple(specs), params)
    di = 0
    for li, s in enumerate(specs):
        cache.inputs.append(x)
        extra = None
        if s.kind == "dense":
            if x.ndim != 2 or x.shape[1] != s.fan_in:
                raise ValueError(
                    f"layer {li} (dense {s.fan_in}->{s.fan_out}) got input of shape {x.shape}")
            w, b = params.weights[di], params.biases[di]
            if w.shape != (s.fan_out, s.fan_in):
                raise ValueError(f"layer {li}: weight shape {w.shape} does not match spec")
            x = x @ w.T + b
            di += 1
        elif s.kind == "relu":
            x = np.maximum(x, 0.0)
        elif s.kind == "swish":
            extra = _sigmoid(x)
            x = x * extra
        elif s.kind == "softplus":
            x = softplus(x)
        elif s.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif s.kind == "l2_normalize":
            extra = np.linalg.norm(x, axis=1, keepdims=True)
            if np.any(extra == 0):
                raise NumericalError(f"layer {li}: cannot normalise a zero vector")
            x = x / extra
        cache.extras.append(extra)
    if di != len(params.weights):
        raise ValueError(f"{len(params.weights)} weight matrices for {di} dense layers")
    return (x[0] if squeeze else x), cache


def backward(specs, params, cache, grad_out):
    """Reverse pass.

    Returns
    -------
    grads : NetworkParams
        Gradients with the same structure as ``params``.
    grad_in : ndarray
        Gradient with respect to the network input.
    """
    if cache.params is not params or cache.specs != tuple(specs):
        raise RuntimeError("cache was produced by a different network or parameter set")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1 and cache.inputs and cache.inputs[0].shape[0] == 1:
        g = g[None]
    dws, dbs = [], []
    di = len(params.weights)
    for li in range(len(specs) - 1, -1, -1):
        s, x, extra = specs[li], cache.inputs[li], cache.extras[li]
        if s.kind == "dense":
            di -= 1
            dws.append(g.T @ x)
            dbs.append(g.sum(axis=0))
            g = g @ params.weights[di]
        elif s.kind == "relu":
            g = g * (x > 0)
        elif s.kind == "swish":
            g = g * (extra * (1.0 + x * (1.0 - extra)))
        elif s.kind == "softplus":
            g = g * _sigmoid(x)
        elif s.kind == "flatten":
            g = g.reshape(x.shape)
        elif s.kind == "l2_normalize":
            y = x / extra
            g = (g - y * np.sum(g * y, axis=1, keepdims=True)) / extra
    grads = NetworkParams(dws[::-1], dbs[::-1], params.seed)
    return grads, g


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update on lists of arrays.

    Returns new parameter and state objects; the inputs are left untouched.
    """
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    passed: bool
    worst_index: tuple = ()


def grad_check(params, loss_fn, tolerance=1e-4, h=1e-6, max_coords=None, seed=0,
               rel_floor=1e-3):
    """Compare analytic gradients with central finite differences.

    Parameters
    ----------
    params : list of ndarray
        Point at which to check; arrays are perturbed in place and restored.
    loss_fn : callable
        ``loss_fn(params) -> (loss, grads)`` with ``grads`` matching ``params``.
    tolerance : float
        Pass threshold on the relative error
        ``|g_a - g_fd| / max(|g_a|, |g_fd|, rel_floor * max|g_a|)``. The floor
        keeps finite-difference roundoff on near-zero coordinates from
        dominating the report.
    max_coords : int, optional
        If the model is larger, check a seeded subsample of this many
        coordinates (at least 500 are used).
    """
    params = list(params)
    _, grads = loss_fn(params)
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    floor = rel_floor * max((np.max(np.abs(g)) for g in grads if g.size), default=0.0)
    floor = max(floor, np.finfo(float).tiny)
    coords = [(a, i) for a, p in enumerate(params) for i in range(p.size)]
    if max_coords is not None and len(coords) > max(max_coords, 500):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max(max_coords, 500), replace=False)
        coords = [coords[k] for k in np.sort(pick)]
    worst, worst_at = 0.0, ()
    for a, i in coords:
        flat = params[a].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        lp, _ = loss_fn(params)
        flat[i] = orig - h
        lm, _ = loss_fn(params)
        flat[i] = orig
        fd = (lp - lm) / (2 * h)
        an = grads[a].reshape(-1)[i]
        err = abs(an - fd) / max(abs(an), abs(fd), floor)
        if err > worst:
            worst, worst_at = err, (a, i)
    return GradCheckReport(float(worst), len(coords), bool(worst < tolerance), worst_at)


def save_checkpoint(path, arrays, fingerprint, meta=None):
    """Write ``arrays`` as a flat decimal vector behind a fingerprint header.

    Header: ``HBF-CKPT <version> <fingerprint> <n_values>``; optional
    ``# key=value`` metadata lines follow, then one value per line.
    """
    flat = np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {fingerprint} {flat.size}"]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    lines.extend(format(v, ".17g") for v in flat)
    Path(path).write_text("\n".join(lines) + "\n")


def read_checkpoint_meta(path):
    """Metadata lines of a checkpoint without loading the values."""
    meta = {}
    with open(path) as fh:
        fh.readline()
        for ln in fh:
            if not ln.startswith("#"):
                break
            k, _, v = ln[1:].strip().partition("=")
            meta[k] = v
    return meta


def load_checkpoint(path, shapes, fingerprint):
    """Inverse of :func:`save_checkpoint`; returns (arrays, meta)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FileFormatError(f"{path} is empty")
    head = lines[0].split()
    if len(head) != 4 or head[0] != CHECKPOINT_MAGIC:
        raise FileFormatError("missing checkpoint header")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise FileFormatError(f"unsupported checkpoint version {head[1]}")
    if head[2] != fingerprint:
        raise FileFormatError(
            f"checkpoint fingerprint {head[2]} does not match network {fingerprint}")
    meta, values = {}, []
    for ln in lines[1:]:
        if ln.startswith("#"):
            k, _, v = ln[1:].strip().partition("=")
            meta[k] = v
        elif ln.strip():
            values.append(float(ln))
    flat = np.array(values)
    expected = sum(int(np.prod(s)) for s in shapes)
    if flat.size != int(head[3]) or flat.size != expected:
        raise FileFormatError(f"expected {expected} values, found {flat.size}")
    if not np.all(np.isfinite(flat)):
        raise FileFormatError("non-finite parameter value")
    out, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(flat[pos:pos + n].reshape(s))
        pos += n
    return out, meta
