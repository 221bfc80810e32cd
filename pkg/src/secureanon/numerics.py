"""Small reverse-mode autodiff over numpy, plus the MLPs, Adam and image metrics built on it.

Only the operations the anonymization models need are supported. Every op
broadcasts like numpy and un-broadcasts gradients on the way back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPES = {"float32": np.float32, "float64": np.float64}

SSIM_WINDOW = 7
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PSNR_CAP_DB = 100.0
LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


def as_dtype(precision: str):
    try:
        return DTYPES[precision]
    except KeyError:
        raise ContractError(f"unknown precision {precision!r}") from None


# --------------------------------------------------------------------------
# autodiff core
# --------------------------------------------------------------------------


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Promote both operands; bare Python scalars take the other operand's float dtype."""
    def cast(x, other):
        if isinstance(x, (Tensor, np.ndarray)) or not isinstance(other, (Tensor, np.ndarray)):
            return tensor(x)
        dt = other.dtype if isinstance(other, np.ndarray) else other.data.dtype
        return Tensor(np.asarray(x, dtype=dt if np.issubdtype(dt, np.floating) else None))

    return cast(a, b), cast(b, a)


def _node(data: np.ndarray, parents: Sequence[Tensor], fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every grad-requiring leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # interior gradients are not needed once propagated
            node.grad = None


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to ``params`` (zeros when unreachable)."""
    for p in params:
        p.grad = None
    backward(loss)
    out = []
    for p in params:
        out.append(np.zeros_like(p.data) if p.grad is None else p.grad)
        p.grad = None
    return out


# --------------------------------------------------------------------------
# ops
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), fn)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), fn)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def fn(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), fn)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def fn(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * out / b.data, b.shape))

    return _node(out, (a, b), fn)


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def fn(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), fn)


def exp(x) -> Tensor:
    x = tensor(x)
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: _accumulate(x, g * out))


def log(x) -> Tensor:
    x = tensor(x)
    return _node(np.log(x.data), (x,), lambda g: _accumulate(x, g / x.data))


def sqrt(x) -> Tensor:
    x = tensor(x)
    out = np.sqrt(x.data)
    return _node(out, (x,), lambda g: _accumulate(x, g * 0.5 / out))


def square(x) -> Tensor:
    x = tensor(x)
    return _node(x.data * x.data, (x,), lambda g: _accumulate(x, 2.0 * g * x.data))


def absolute(x) -> Tensor:
    x = tensor(x)
    return _node(np.abs(x.data), (x,), lambda g: _accumulate(x, g * np.sign(x.data)))


def sigmoid(x) -> Tensor:
    x = tensor(x)
    out = _sigmoid(x.data)
    return _node(out, (x,), lambda g: _accumulate(x, g * out * (1.0 - out)))


def tanh(x) -> Tensor:
    x = tensor(x)
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g: _accumulate(x, g * (1.0 - out * out)))


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return _node(out, (x,), lambda g: _accumulate(x, np.where(pos, g, slope * g)))


def relu(x) -> Tensor:
    x = tensor(x)
    pos = x.data > 0
    return _node(np.where(pos, x.data, 0.0).astype(x.data.dtype), (x,),
                 lambda g: _accumulate(x, np.where(pos, g, 0.0).astype(g.dtype)))


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = tensor(x)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), fn)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis, keepdims), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(x.shape)))


def broadcast_to(x, shape) -> Tensor:
    x = tensor(x)
    return _node(np.broadcast_to(x.data, shape), (x,),
                 lambda g: _accumulate(x, _unbroadcast(g, x.shape)))


def getitem(x, idx) -> Tensor:
    x = tensor(x)

    def fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accumulate(x, full)

    return _node(x.data[idx], (x,), fn)


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def fn(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(p, g[tuple(sl)])

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, fn)


def l2norm(x, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the subgradient at zero is taken as zero."""
    x = tensor(x)
    out = np.sqrt((x.data * x.data).sum(axis=axis))

    def fn(g):
        n = np.expand_dims(out, axis)
        safe = np.where(n > 0, n, 1.0)
        _accumulate(x, np.where(n > 0, x.data / safe, 0.0) * np.expand_dims(g, axis))

    return _node(out, (x,), fn)


def normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale rows to unit L2 norm."""
    x = tensor(x)
    n = sqrt(add(tsum(square(x), axis=axis, keepdims=True), eps))
    return div(x, n)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# --------------------------------------------------------------------------
# MLPs
# --------------------------------------------------------------------------

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor] | None] = {
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "none": None,
}


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "leaky_relu"
    output_activation: str = "none"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ContractError(f"layer_sizes must hold >=2 positive ints, got {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ContractError(f"unknown activation {act!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


class Mlp:
    """Stack of affine layers; weights are stored (n_in, n_out) so rows are samples.

    Weights may carry a leading ensemble axis, (P, n_in, n_out) with biases (P, 1, n_out):
    P independent networks applied to (P, B, n_in) inputs in one pass.
    """

    def __init__(self, spec: MlpSpec, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 trainable: bool = True, name: str = "mlp"):
        self.spec = spec
        self.name = name
        if len(weights) != len(spec.layer_sizes) - 1 or len(biases) != len(weights):
            raise ShapeError("parameter count does not match layer_sizes")
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (w, b) in enumerate(zip(weights, biases)):
            n_in, n_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
            lead = w.shape[:-2]
            want_b = lead + (1, n_out) if lead else (n_out,)
            if w.shape[-2:] != (n_in, n_out) or b.shape != want_b:
                raise ShapeError(f"layer {i}: got {w.shape}/{b.shape}, want {lead + (n_in, n_out)}/{want_b}")
            self.weights.append(Tensor(np.array(w), name=f"{name}.w{i}"))
            self.biases.append(Tensor(np.array(b), name=f"{name}.b{i}"))
        self.trainable = trainable

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator, dtype=np.float32,
             gain: float = 1.0, trainable: bool = True, name: str = "mlp", stack: int | None = None,
             dist: str = "normal") -> "Mlp":
        """Scaled random weights (std gain/sqrt(n_in)) and zero biases.

        ``stack`` draws that many independent sets at once; ``dist="uniform"`` uses a
        variance-matched uniform law, which is several times cheaper to sample.
        """
        if dist not in ("normal", "uniform"):
            raise ContractError(f"unknown init distribution {dist!r}")
        ws, bs = [], []
        for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            if stack is None and dist == "normal":
                ws.append((rng.standard_normal((n_in, n_out)) * gain / math.sqrt(n_in)).astype(dtype))
                bs.append(np.zeros(n_out, dtype=dtype))
                continue
            shape = (n_in, n_out) if stack is None else (stack, n_in, n_out)
            ftype = np.dtype(dtype).type
            if dist == "normal":
                w = rng.standard_normal(shape, dtype=ftype) * ftype(gain / math.sqrt(n_in))
            else:
                half = math.sqrt(3.0) * gain / math.sqrt(n_in)
                w = rng.random(shape, dtype=ftype) * ftype(2 * half) - ftype(half)
            ws.append(w)
            bs.append(np.zeros(n_out if stack is None else (stack, 1, n_out), dtype=dtype))
        return cls(spec, ws, bs, trainable=trainable, name=name)

    @classmethod
    def zeros(cls, spec: MlpSpec, dtype=np.float32, trainable: bool = True, name: str = "mlp") -> "Mlp":
        ws = [np.zeros((a, b), dtype=dtype) for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])]
        bs = [np.zeros(b, dtype=dtype) for b in spec.layer_sizes[1:]]
        return cls(spec, ws, bs, trainable=trainable, name=name)

    @property
    def trainable(self) -> bool:
        return self._trainable

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self._trainable = bool(flag)
        for p in self.params():
            p.requires_grad = self._trainable

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"{self.name}.w{i}", w), (f"{self.name}.b{i}", b)]
        return out

    def astype(self, dtype) -> "Mlp":
        return Mlp(self.spec, [w.data.astype(dtype) for w in self.weights],
                   [b.data.astype(dtype) for b in self.biases], self.trainable, self.name)

    def __call__(self, x) -> Tensor:
        return mlp_forward(self, x)


def mlp_forward(params: Mlp, x) -> Tensor:
    x = tensor(x)
    if x.ndim == 0 or x.shape[-1] != params.spec.n_in:
        raise ShapeError(f"{params.name}: input last dim {x.shape[-1:] or ()} != {params.spec.n_in}")
    n_layers = len(params.weights)
    hidden = ACTIVATIONS[params.spec.hidden_activation]
    final = ACTIVATIONS[params.spec.output_activation]
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = add(matmul(h, w), b) if h.ndim >= 2 else add(matmul(reshape(h, (1, -1)), w), b)[0]
        act = final if i == n_layers - 1 else hidden
        if act is not None:
            h = act(h)
    return h


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray]) -> AdamState:
    """One bias-corrected Adam update, in place. Parameters that do not require grad are skipped."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape}")
        if not p.requires_grad:
            continue
        m = state.m.get(i)
        v = state.v.get(i)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[i], state.v[i] = m, v
        update = (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)
        p.data = p.data - update
    return state


class Adam:
    """Thin holder binding an ``AdamState`` to a fixed parameter list."""

    def __init__(self, params: Iterable[Tensor], lr: float = 4e-4, beta1: float = 0.0,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, loss: Tensor) -> None:
        grads = grad(loss, self.params)
        adam_step(self.state, self.params, grads)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def _box_matrix(n: int, win: int, dtype) -> np.ndarray:
    rows = n - win + 1
    a = np.zeros((rows, n), dtype=dtype)
    for r in range(rows):
        a[r, r:r + win] = 1.0 / win
    return a


def ssim_batch(x, y, win: int = SSIM_WINDOW) -> Tensor:
    """Mean SSIM per image over (..., H, W) stacks with a uniform window, valid padding."""
    x, y = tensor(x), tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"ssim shape mismatch {x.shape} vs {y.shape}")
    if x.ndim < 2:
        raise ContractError("ssim needs images of rank >= 2")
    h, w = x.shape[-2:]
    if h < win or w < win:
        raise ContractError(f"image {h}x{w} smaller than {win}x{win} window")
    dtype = np.result_type(x.data.dtype, y.data.dtype)
    rows = Tensor(_box_matrix(h, win, dtype))
    cols = Tensor(_box_matrix(w, win, dtype).T.copy())

    def filt(t):
        return matmul(matmul(rows, t), cols)

    mu_x, mu_y = filt(x), filt(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    var_x = filt(x * x) - mu_xx
    var_y = filt(y * y) - mu_yy
    cov = filt(x * y) - mu_xy
    num = (2.0 * mu_xy + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_xx + mu_yy + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return tmean(num / den, axis=(-2, -1))


def ssim(x, y) -> float:
    """SSIM of two single images with values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError("ssim expects a single H x W image")
    return float(ssim_batch(x, y).data)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"cosine length mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ContractError("cosine of a zero-norm vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_rows(a, b, eps: float = 1e-12) -> Tensor:
    """Row-wise cosine similarity of two (..., d) stacks; differentiable."""
    a, b = tensor(a), tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cosine length mismatch {a.shape} vs {b.shape}")
    dot = tsum(a * b, axis=-1)
    na = sqrt(add(tsum(square(a), axis=-1), eps))
    nb = sqrt(add(tsum(square(b), axis=-1), eps))
    return dot / (na * nb)


def mse(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"mse shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(x, y) -> float:
    err = mse(x, y)
    if err < 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * math.log10(1.0 / err))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.uint64(seed % 2**64))


def finite_difference_grad(f: Callable[[], float], p: np.ndarray, eps: float = 1e-5,
                           idx: Sequence[tuple] | None = None) -> dict[tuple, float]:
    """Central differences of scalar ``f`` w.r.t. entries of ``p`` (mutated in place, then restored)."""
    if idx is None:
        idx = list(np.ndindex(p.shape))
    out = {}
    for i in idx:
        old = p[i]
        p[i] = old + eps
        hi = f()
        p[i] = old - eps
        lo = f()
        p[i] = old
        out[tuple(i)] = (hi - lo) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor) over the stacked entries, scaled by the largest magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
