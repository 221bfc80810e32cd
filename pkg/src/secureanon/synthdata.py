"""Synthetic face-like images with known identity/attribute factors, and their binary file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import ContractError, Mlp, MlpSpec, ShapeError, make_rng

MAGIC = b"IFDS"
VERSION = 1
_HEADER = struct.Struct("<4sIQIIIIII")

RENDER_SEED = 20240917
TEST_FRACTION = 0.1


class DatasetFormatError(ValueError):
    pass


class DatasetVersionError(DatasetFormatError):
    pass


def smooth_basis(h: int, w: int, k: int = 8) -> np.ndarray:
    """Orthonormal 2-D cosine basis of the lowest k x k frequencies, shape (k*k, h*w).

    Columns are weighted toward low frequencies by the caller; both the renderer
    and the generator emit logits in this span.
    """
    def dct(n, kk):
        x = np.arange(n)
        rows = [np.cos(np.pi * (x + 0.5) * f / n) for f in range(kk)]
        b = np.stack(rows)
        return b / np.linalg.norm(b, axis=1, keepdims=True)

    by, bx = dct(h, k), dct(w, k)
    basis = np.einsum("ay,bx->abyx", by, bx).reshape(k * k, h * w)
    return basis


def frequency_falloff(k: int = 8) -> np.ndarray:
    f = np.add.outer(np.arange(k), np.arange(k)).ravel()
    return 1.0 / (1.0 + f)


def smooth_decoder(n_in: int, n_hidden: int, h: int, w: int, seed: int, hidden_activation: str,
                   coeff_scale: float, bias_scale: float, k: int = 8, dtype=np.float64,
                   name: str = "decoder") -> Mlp:
    """Two-layer decoder to an h*w sigmoid image whose logits lie in the smooth basis."""
    rng = make_rng(seed)
    basis = smooth_basis(h, w, k)
    fall = frequency_falloff(k)
    w1 = rng.standard_normal((n_in, n_hidden)) / np.sqrt(n_in)
    b1 = rng.standard_normal(n_hidden) * 0.1
    q = rng.standard_normal((n_hidden, k * k)) * fall * coeff_scale / np.sqrt(n_hidden)
    c = rng.standard_normal(k * k) * fall * bias_scale
    w2 = q @ basis
    b2 = c @ basis
    spec = MlpSpec((n_in, n_hidden, h * w), hidden_activation=hidden_activation, output_activation="sigmoid")
    return Mlp(spec, [w1.astype(dtype), w2.astype(dtype)], [b1.astype(dtype), b2.astype(dtype)],
               trainable=False, name=name)


@dataclass(frozen=True)
class RenderSpec:
    d_id: int = 16
    d_attr: int = 16
    height: int = 32
    width: int = 32
    hidden: int = 128
    seed: int = RENDER_SEED


_RENDERERS: dict[RenderSpec, Mlp] = {}


def renderer(spec: RenderSpec) -> Mlp:
    if spec not in _RENDERERS:
        _RENDERERS[spec] = smooth_decoder(spec.d_id + spec.d_attr, spec.hidden, spec.height, spec.width,
                                          spec.seed, "tanh", coeff_scale=40.0, bias_scale=6.0,
                                          name="renderer")
    return _RENDERERS[spec]


def render(u: np.ndarray, v: np.ndarray, spec: RenderSpec = RenderSpec()) -> np.ndarray:
    """Image(s) in [0,1]^{H x W} for identity latent(s) u and attribute latent(s) v."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if u.shape[-1] != spec.d_id or v.shape[-1] != spec.d_attr:
        raise ShapeError(f"latents must have lengths {spec.d_id}/{spec.d_attr}, got {u.shape}/{v.shape}")
    x = _cat(u, v)
    out = renderer(spec)(x).data
    return out.reshape(x.shape[:-1] + (spec.height, spec.width))


def _cat(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    lead = np.broadcast_shapes(u.shape[:-1], v.shape[:-1])
    return np.concatenate([np.broadcast_to(u, lead + u.shape[-1:]), np.broadcast_to(v, lead + v.shape[-1:])], axis=-1)


@dataclass
class SyntheticDataset:
    seed: int
    n_ids: int
    per_id: int
    identity_latents: np.ndarray  # (n_ids, d_id) float32
    attribute_latents: np.ndarray  # (n_ids * per_id, d_attr) float32
    images: np.ndarray  # (n_ids * per_id, H, W) float32
    split: np.ndarray  # (n_ids,) uint32, 1 = test identity

    @property
    def d_id(self) -> int:
        return self.identity_latents.shape[1]

    @property
    def d_attr(self) -> int:
        return self.attribute_latents.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    @property
    def identity_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_ids), self.per_id)

    def indices(self, part: str) -> np.ndarray:
        flag = {"train": 0, "test": 1}[part]
        return np.flatnonzero(self.split[self.identity_of] == flag)

    def identity_latent_of(self, idx) -> np.ndarray:
        return self.identity_latents[self.identity_of[idx]]


def gen_dataset(n_ids: int = 200, per_id: int = 10, d_id: int = 16, d_attr: int = 16, seed: int = 0,
                height: int = 32, width: int = 32, render_seed: int = RENDER_SEED) -> SyntheticDataset:
    if n_ids < 2 or per_id < 1:
        raise ContractError("need at least two identities and one sample per identity")
    rng = make_rng(seed)
    ids = rng.standard_normal((n_ids, d_id)).astype(np.float32)
    attrs = rng.standard_normal((n_ids * per_id, d_attr)).astype(np.float32)
    n_test = max(1, int(round(n_ids * TEST_FRACTION)))
    split = np.zeros(n_ids, dtype=np.uint32)
    split[rng.permutation(n_ids)[:n_test]] = 1
    spec = RenderSpec(d_id, d_attr, height, width, seed=render_seed)
    owner = np.repeat(np.arange(n_ids), per_id)
    images = render(ids[owner].astype(np.float64), attrs.astype(np.float64), spec).astype(np.float32)
    return SyntheticDataset(seed, n_ids, per_id, ids, attrs, images, split)


def save_dataset(ds: SyntheticDataset, path: str | Path) -> None:
    h, w = ds.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, ds.seed, ds.n_ids, ds.per_id, ds.d_id, ds.d_attr, h, w))
        for arr in (ds.identity_latents, ds.attribute_latents, ds.images):
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(ds.split, dtype="<u4").tobytes())


def load_dataset(path: str | Path) -> SyntheticDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("file too short for header")
    magic, version, seed, n_ids, per_id, d_id, d_attr, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetVersionError(f"unsupported dataset version {version} (expected {VERSION})")
    n = n_ids * per_id
    counts = [n_ids * d_id, n * d_attr, n * h * w]
    expected = _HEADER.size + 4 * sum(counts) + 4 * n_ids
    if len(raw) != expected:
        raise DatasetFormatError(f"size {len(raw)} != expected {expected}")
    off = _HEADER.size
    arrays = []
    for c in counts:
        arrays.append(np.frombuffer(raw, dtype="<f4", count=c, offset=off).astype(np.float32))
        off += 4 * c
    split = np.frombuffer(raw, dtype="<u4", count=n_ids, offset=off).astype(np.uint32)
    return SyntheticDataset(seed, n_ids, per_id, arrays[0].reshape(n_ids, d_id), arrays[1].reshape(n, d_attr),
                            arrays[2].reshape(n, h, w), split)
