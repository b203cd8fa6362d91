"""Small attention encoder over one-hot request windows, with manual gradients.

Layout of one forward pass for a batch of windows ``x`` (B, N, F)::

    h = x @ emb + pos
    repeat num_layers:  h += attn(ln1(h));  h += ff(ln2(h))
    r_j = flatten(ln_f(h)) @ head.w[j] + head.b[j]       for each offset j
    p_j = softmax(r_j @ out.w + out.b[j])

Everything is float64 numpy; no autodiff framework is involved.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..core import atomic_write_bytes
from ..errors import InvalidParamsError, ShapeError

LN_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)
MAGIC = b"CRVM"
HEADS_TENSOR = "__num_heads__"
VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    N: int = 16
    horizon: int = 10
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 2
    ff_dim: int = 64
    eta: float = 0.15
    kappa: int = 5
    rounds: int = 500
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.horizon < 1 or self.kappa < 1:
            raise InvalidParamsError("need N >= 1, horizon >= 1 and kappa >= 1")
        if not self.eta > 0:
            raise InvalidParamsError("eta must be positive")
        if self.embed_dim % self.num_heads:
            raise InvalidParamsError("embed_dim must be divisible by num_heads")
        if self.rounds < 0 or self.batch_size < 1 or self.num_layers < 0:
            raise InvalidParamsError("rounds, batch_size and num_layers out of range")


@dataclass
class ModelParams:
    """Named float64 tensors; iteration order is insertion order."""

    tensors: dict = field(default_factory=dict)
    num_heads: int = 1

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.num_heads)

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: np.zeros_like(v) for k, v in self.tensors.items()}, self.num_heads)

    def allclose(self, other, atol=0.0) -> bool:
        return (self.names() == other.names()
                and all(np.allclose(v, other[k], rtol=0.0, atol=atol) for k, v in self.items()))

    def max_abs_diff(self, other) -> float:
        return max(float(np.max(np.abs(v - other[k]), initial=0.0)) for k, v in self.items())

    @property
    def num_files(self) -> int:
        return self["emb"].shape[0]

    @property
    def window(self) -> int:
        return self["pos"].shape[0]

    @property
    def horizon(self) -> int:
        return self["out.b"].shape[0]

    @property
    def num_layers(self) -> int:
        return sum(1 for k in self.tensors if k.endswith(".attn.wq"))


def init_params(cfg: PredictorConfig, num_files: int, rng=None, scale: float = 1.0) -> ModelParams:
    """Random initialization; ``scale=0`` gives the all-zero-weight model."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    d, N, H, F = cfg.embed_dim, cfg.N, cfg.horizon, num_files
    s = float(scale)

    def w(*shape, fan_in):
        return s * rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    p = ModelParams(num_heads=cfg.num_heads)
    p["emb"] = s * rng.normal(0.0, 0.5, size=(F, d))
    p["pos"] = s * rng.normal(0.0, 0.1, size=(N, d))
    for i in range(cfg.num_layers):
        pre = f"l{i}."
        p[pre + "ln1.g"] = np.full(d, s)
        p[pre + "ln1.b"] = np.zeros(d)
        for nm in ("q", "k", "v", "o"):
            p[pre + f"attn.w{nm}"] = w(d, d, fan_in=d)
            p[pre + f"attn.b{nm}"] = np.zeros(d)
        p[pre + "ln2.g"] = np.full(d, s)
        p[pre + "ln2.b"] = np.zeros(d)
        p[pre + "ff.w1"] = w(d, cfg.ff_dim, fan_in=d)
        p[pre + "ff.b1"] = np.zeros(cfg.ff_dim)
        p[pre + "ff.w2"] = w(cfg.ff_dim, d, fan_in=cfg.ff_dim)
        p[pre + "ff.b2"] = np.zeros(d)
    p["ln_f.g"] = np.full(d, s)
    p["ln_f.b"] = np.zeros(d)
    p["head.w"] = w(H, N * d, d, fan_in=N * d)
    p["head.b"] = np.zeros((H, d))
    p["out.w"] = w(d, F, fan_in=d)
    p["out.b"] = np.zeros((H, F))
    return p


# ------------------------------------------------------------ building blocks

def _ln_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _ln_bwd(dy, cache):
    xhat, rstd, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x * x * x))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


def _outer(a, b):
    """sum over leading axes of a[..., i] * b[..., j]."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _split(x, heads):
    B, N, d = x.shape
    return x.reshape(B, N, heads, d // heads).transpose(0, 2, 1, 3)


def _merge(x):
    B, h, N, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, h * dh)


def _attn_fwd(a, p, pre, heads):
    q = _split(a @ p[pre + "wq"] + p[pre + "bq"], heads)
    k = _split(a @ p[pre + "wk"] + p[pre + "bk"], heads)
    v = _split(a @ p[pre + "wv"] + p[pre + "bv"], heads)
    scale = 1.0 / np.sqrt(q.shape[-1])
    att = _softmax(q @ k.transpose(0, 1, 3, 2) * scale)
    o = _merge(att @ v)
    return o @ p[pre + "wo"] + p[pre + "bo"], (a, q, k, v, att, o, scale)


def _attn_bwd(dy, cache, p, pre, grads):
    a, q, k, v, att, o, scale = cache
    heads = q.shape[1]
    grads[pre + "wo"] = _outer(o, dy)
    grads[pre + "bo"] = dy.sum(axis=(0, 1))
    do = _split(dy @ p[pre + "wo"].T, heads)
    datt = do @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ do
    ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    da = np.zeros_like(a)
    for nm, dt in (("q", dq), ("k", dk), ("v", dv)):
        dt = _merge(dt)
        grads[pre + f"w{nm}"] = _outer(a, dt)
        grads[pre + f"b{nm}"] = dt.sum(axis=(0, 1))
        da += dt @ p[pre + f"w{nm}"].T
    return da


# ------------------------------------------------------------ model

def forward(params: ModelParams, x):
    """Probabilities (B, H, F) for windows ``x`` (B, N, F) and the backprop cache."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    F, N = params.num_files, params.window
    if x.shape[1:] != (N, F):
        raise ShapeError(f"input windows must be (batch, {N}, {F}), got {x.shape}")
    caches = []
    h = x @ params["emb"] + params["pos"]
    for i in range(params.num_layers):
        pre = f"l{i}."
        a, c1 = _ln_fwd(h, params[pre + "ln1.g"], params[pre + "ln1.b"])
        att_out, c2 = _attn_fwd(a, params, pre + "attn.", params.num_heads)
        h = h + att_out
        c, c3 = _ln_fwd(h, params[pre + "ln2.g"], params[pre + "ln2.b"])
        u = c @ params[pre + "ff.w1"] + params[pre + "ff.b1"]
        gu, t = _gelu(u)
        h = h + gu @ params[pre + "ff.w2"] + params[pre + "ff.b2"]
        caches.append((c1, c2, c3, c, u, gu, t))
    hf, cf = _ln_fwd(h, params["ln_f.g"], params["ln_f.b"])
    flat = hf.reshape(hf.shape[0], -1)
    r = np.matmul(flat[None], params["head.w"]).transpose(1, 0, 2) + params["head.b"]
    logits = r @ params["out.w"] + params["out.b"]
    probs = _softmax(logits)
    return probs, (x, caches, cf, flat, r, probs)


def backward(params: ModelParams, cache, dlogits) -> ModelParams:
    """Gradients of a scalar given its derivative w.r.t. the logits (B, H, F)."""
    x, caches, cf, flat, r, _ = cache
    g = {}
    g["out.w"] = _outer(r, dlogits)
    g["out.b"] = dlogits.sum(axis=0)
    dr = dlogits @ params["out.w"].T
    g["head.w"] = np.matmul(flat.T[None], dr.transpose(1, 0, 2))
    g["head.b"] = dr.sum(axis=0)
    dflat = np.matmul(dr.transpose(1, 0, 2), params["head.w"].transpose(0, 2, 1)).sum(axis=0)
    dh, g["ln_f.g"], g["ln_f.b"] = _ln_bwd(dflat.reshape(cf[0].shape), cf)
    for i in reversed(range(params.num_layers)):
        pre = f"l{i}."
        c1, c2, c3, c, u, gu, t = caches[i]
        g[pre + "ff.w2"] = _outer(gu, dh)
        g[pre + "ff.b2"] = dh.sum(axis=(0, 1))
        du = (dh @ params[pre + "ff.w2"].T) * _gelu_grad(u, t)
        g[pre + "ff.w1"] = _outer(c, du)
        g[pre + "ff.b1"] = du.sum(axis=(0, 1))
        dc = du @ params[pre + "ff.w1"].T
        dx, g[pre + "ln2.g"], g[pre + "ln2.b"] = _ln_bwd(dc, c3)
        dh = dh + dx
        da = _attn_bwd(dh, c2, params, pre + "attn.", g)
        dx, g[pre + "ln1.g"], g[pre + "ln1.b"] = _ln_bwd(da, c1)
        dh = dh + dx
    g["pos"] = dh.sum(axis=0)
    g["emb"] = _outer(x, dh)
    return ModelParams({k: g[k] for k in params.names()}, params.num_heads)


def _labels(y, horizon):
    y = np.asarray(y)
    if y.ndim == 3:  # one-hot rows
        y = y.argmax(axis=-1)
    if y.ndim == 1:
        y = y[None]
    if y.shape[1] != horizon:
        raise ShapeError(f"labels must cover {horizon} offsets, got {y.shape}")
    return y.astype(np.int64)


def loss(params: ModelParams, x, y) -> float:
    """Cross-entropy per offset, averaged over offsets and batch."""
    probs, _ = forward(params, x)
    y = _labels(y, params.horizon)
    picked = np.take_along_axis(probs, y[..., None], axis=-1)[..., 0]
    return float(-np.log(picked).mean())


def loss_and_grad(params: ModelParams, x, y):
    probs, cache = forward(params, x)
    y = _labels(y, params.horizon)
    B, H, _ = probs.shape
    picked = np.take_along_axis(probs, y[..., None], axis=-1)[..., 0]
    value = float(-np.log(picked).mean())
    dlogits = probs.copy()
    np.put_along_axis(dlogits, y[..., None], np.take_along_axis(dlogits, y[..., None], -1) - 1.0,
                      axis=-1)
    dlogits /= B * H
    return value, backward(params, cache, dlogits)


# ------------------------------------------------------------ checkpoint

def dumps_params(params: ModelParams) -> bytes:
    """Binary checkpoint; the head count travels as a reserved rank-0 tensor."""
    entries = list(params.items()) + [(HEADS_TENSOR, np.float64(params.num_heads))]
    out = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, t in entries:
        raw = name.encode("utf-8")
        arr = np.array(t, dtype="<f8", order="C")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads_params(data: bytes) -> ModelParams:
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    params = ModelParams()
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        name = data[pos + 4:pos + 4 + n].decode("utf-8")
        pos += 4 + n
        (rank,) = struct.unpack_from("<I", data, pos)
        dims = struct.unpack_from(f"<{rank}Q", data, pos + 4)
        pos += 4 + 8 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
        pos += 8 * size
    if pos != len(data):
        raise ValueError("trailing bytes after checkpoint tensors")
    if HEADS_TENSOR in params.tensors:
        params.num_heads = int(params.tensors.pop(HEADS_TENSOR))
    return params


def save_params(params: ModelParams, path) -> None:
    atomic_write_bytes(path, dumps_params(params))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        return loads_params(fh.read())
