"""Key-conditioned affine coupling flow over identity embeddings.

Each block updates the second half from the first, then the first half from the
*updated* second half. Every sub-network sees ``[half, k]``. The flow is exactly
invertible for any parameters and any key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ContractError, Mlp, MlpSpec, ShapeError, Tensor

NETS = ("omega", "phi", "rho", "eta")


def split(z):
    z = nx.tensor(z)
    d = z.shape[-1]
    if d % 2:
        raise ContractError(f"cannot split odd length {d}")
    return z[..., : d // 2], z[..., d // 2:]


def clamp_a(t, c: float = 2.0) -> Tensor:
    """c * sigmoid(t), so the log-scale stays inside (0, c)."""
    return nx.sigmoid(t) * c


def _cond(half: Tensor, k: Tensor) -> Tensor:
    if k.ndim == 1 and half.ndim > 1:
        k = nx.broadcast_to(k, half.shape[:-1] + k.shape)
    elif k.ndim > 1 and k.shape[:-1] != half.shape[:-1]:
        k = nx.broadcast_to(k, half.shape[:-1] + k.shape[-1:])
    return nx.concat([half, k], axis=-1)


@dataclass
class SacbParams:
    omega: Mlp
    phi: Mlp
    rho: Mlp
    eta: Mlp

    def nets(self) -> list[Mlp]:
        return [self.omega, self.phi, self.rho, self.eta]

    @property
    def half(self) -> int:
        return self.omega.spec.n_out

    @property
    def d_k(self) -> int:
        return self.omega.spec.n_in - self.omega.spec.n_out


def _check(p: SacbParams, z1: Tensor, z2: Tensor, k: Tensor) -> None:
    if z1.shape[-1] != p.half or z2.shape[-1] != p.half:
        raise ShapeError(f"halves must have length {p.half}, got {z1.shape[-1]}/{z2.shape[-1]}")
    if k.shape[-1] != p.d_k:
        raise ShapeError(f"key must have length {p.d_k}, got {k.shape[-1]}")


def block_forward(p: SacbParams, z1, z2, k, c: float = 2.0) -> tuple[Tensor, Tensor]:
    z1, z2, k = nx.tensor(z1), nx.tensor(z2), nx.tensor(k)
    _check(p, z1, z2, k)
    h1 = _cond(z1, k)
    z2 = z2 * nx.exp(clamp_a(p.omega(h1), c)) + p.phi(h1)
    h2 = _cond(z2, k)
    z1 = z1 * nx.exp(clamp_a(p.rho(h2), c)) + p.eta(h2)
    return z1, z2


def block_inverse(p: SacbParams, z1, z2, k, c: float = 2.0) -> tuple[Tensor, Tensor]:
    z1, z2, k = nx.tensor(z1), nx.tensor(z2), nx.tensor(k)
    _check(p, z1, z2, k)
    h2 = _cond(z2, k)
    z1 = (z1 - p.eta(h2)) * nx.exp(-clamp_a(p.rho(h2), c))
    h1 = _cond(z1, k)
    z2 = (z2 - p.phi(h1)) * nx.exp(-clamp_a(p.omega(h1), c))
    return z1, z2


class SifModel:
    """Stack of ``N`` secure coupling blocks with a shared clamp constant."""

    def __init__(self, blocks: list[SacbParams], d_z: int, d_k: int, clamp: float = 2.0):
        if d_z % 2:
            raise ContractError("d_z must be even")
        if not blocks:
            raise ContractError("need at least one block")
        if clamp <= 0:
            raise ContractError("clamp must be positive")
        self.blocks = blocks
        self.d_z, self.d_k, self.clamp = d_z, d_k, float(clamp)

    @classmethod
    def init(cls, d_z: int, d_k: int, n_blocks: int = 8, clamp: float = 2.0, d_hidden: int | None = None,
             rng: np.random.Generator | None = None, dtype=np.float32, out_gain: float = 0.1,
             scale_bias: float = 0.0, stack: int | None = None, dist: str = "normal") -> "SifModel":
        """Random hidden layers, damped output layers; ``scale_bias`` shifts the scale nets' logits.

        With ``stack=P`` every sub-network holds P independent draws; feed (P, B, d) inputs.
        """
        if d_z % 2:
            raise ContractError("d_z must be even")
        rng = rng if rng is not None else nx.make_rng(0)
        d_hidden = d_hidden or d_z + d_k
        spec = MlpSpec((d_z // 2 + d_k, d_hidden, d_z // 2))
        blocks = []
        for i in range(n_blocks):
            nets = {}
            for name in NETS:
                m = Mlp.init(spec, rng, dtype=dtype, name=f"sif.{i}.{name}", stack=stack, dist=dist)
                m.weights[-1].data = (m.weights[-1].data * out_gain).astype(dtype)
                if name in ("omega", "rho"):
                    m.biases[-1].data = np.full(m.biases[-1].shape, scale_bias, dtype=dtype)
                nets[name] = m
            blocks.append(SacbParams(**nets))
        return cls(blocks, d_z, d_k, clamp)

    @classmethod
    def zeros(cls, d_z: int, d_k: int, n_blocks: int = 8, clamp: float = 2.0, d_hidden: int | None = None,
              dtype=np.float64) -> "SifModel":
        d_hidden = d_hidden or d_z + d_k
        spec = MlpSpec((d_z // 2 + d_k, d_hidden, d_z // 2))
        blocks = [SacbParams(*[Mlp.zeros(spec, dtype=dtype, name=f"sif.{i}.{n}") for n in NETS])
                  for i in range(n_blocks)]
        return cls(blocks, d_z, d_k, clamp)

    def params(self) -> list[Tensor]:
        return [p for b in self.blocks for m in b.nets() for p in m.params()]

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [np_ for b in self.blocks for m in b.nets() for np_ in m.named_params()]

    def set_trainable(self, flag: bool) -> None:
        for b in self.blocks:
            for m in b.nets():
                m.trainable = flag

    def astype(self, dtype) -> "SifModel":
        blocks = [SacbParams(*[m.astype(dtype) for m in b.nets()]) for b in self.blocks]
        return SifModel(blocks, self.d_z, self.d_k, self.clamp)

    def forward(self, z, k) -> Tensor:
        return sif_forward(self, z, k)

    def inverse(self, z, k) -> Tensor:
        return sif_inverse(self, z, k)


def _check_model(m: SifModel, z: Tensor, k: Tensor) -> None:
    if z.shape[-1] != m.d_z:
        raise ShapeError(f"identity must have length {m.d_z}, got {z.shape[-1]}")
    if k.shape[-1] != m.d_k:
        raise ShapeError(f"key must have length {m.d_k}, got {k.shape[-1]}")


def sif_forward(m: SifModel, z, k) -> Tensor:
    z, k = nx.tensor(z), nx.tensor(k)
    _check_model(m, z, k)
    z1, z2 = split(z)
    for b in m.blocks:
        z1, z2 = block_forward(b, z1, z2, k, m.clamp)
    return nx.concat([z1, z2], axis=-1)


def sif_inverse(m: SifModel, z, k) -> Tensor:
    z, k = nx.tensor(z), nx.tensor(k)
    _check_model(m, z, k)
    z1, z2 = split(z)
    for b in reversed(m.blocks):
        z1, z2 = block_inverse(b, z1, z2, k, m.clamp)
    return nx.concat([z1, z2], axis=-1)
