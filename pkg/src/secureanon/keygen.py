"""Secret -> conditioning vector: HKDF-SHA256, byte normalization, frozen tanh mapping."""

from __future__ import annotations

import hashlib
import hmac

import numpy as np

from .numerics import ContractError, Mlp, MlpSpec, ShapeError, make_rng

KDF_SALT = b"iFADIT-v1"
KDF_INFO = b"sif-key"
HASH_LEN = 32
SECRET_ENV = "IFADIT_SECRET"


def _as_bytes(secret: bytes | str) -> bytes:
    if isinstance(secret, str):
        secret = secret.encode("utf-8")
    if not isinstance(secret, (bytes, bytearray)):
        raise ContractError("secret must be bytes or str")
    if len(secret) == 0:
        raise ContractError("secret must be non-empty")
    return bytes(secret)


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    return hmac.new(salt or bytes(HASH_LEN), ikm, hashlib.sha256).digest()


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    if length > 255 * HASH_LEN:
        raise ContractError(f"HKDF output capped at {255 * HASH_LEN} bytes")
    out, block = b"", b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


def kdf(secret: bytes | str, out_len: int, salt: bytes = KDF_SALT, info: bytes = KDF_INFO) -> bytes:
    """Stretch an arbitrary-length secret to ``out_len`` pseudorandom bytes."""
    if out_len < 1:
        raise ContractError("out_len must be >= 1")
    return hkdf_expand(hkdf_extract(salt, _as_bytes(secret)), info, out_len)


def norm(data: bytes, dtype=np.float32) -> np.ndarray:
    """Map each byte b to 2*b/255 - 1."""
    if len(data) == 0:
        raise ContractError("norm needs at least one byte")
    b = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.float64)
    return (2.0 * b / 255.0 - 1.0).astype(dtype)


def build_mapping(d_k: int, seed: int, dtype=np.float32) -> Mlp:
    spec = MlpSpec((d_k, d_k, d_k), hidden_activation="tanh", output_activation="none")
    return Mlp.init(spec, make_rng(seed), dtype=dtype, trainable=False, name="keymap")


def mapping_f(mapping: Mlp, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[-1:] != (mapping.spec.n_in,):
        raise ShapeError(f"mapping expects length {mapping.spec.n_in}, got {v.shape}")
    return mapping(v.astype(mapping.weights[0].data.dtype)).data


class KeyGen:
    """Derives the secret vector ``k`` for the identity flow. The mapping is frozen at construction."""

    def __init__(self, d_k: int = 64, seed: int = 1009, dtype=np.float32):
        self.d_k = d_k
        self.seed = seed
        self.mapping = build_mapping(d_k, seed, dtype)

    def __call__(self, secret: bytes | str) -> np.ndarray:
        return mapping_f(self.mapping, norm(kdf(secret, self.d_k)))

    def many(self, secrets) -> np.ndarray:
        v = np.stack([norm(kdf(s, self.d_k)) for s in secrets])
        return mapping_f(self.mapping, v)

    def astype(self, dtype) -> "KeyGen":
        out = KeyGen.__new__(KeyGen)
        out.d_k, out.seed, out.mapping = self.d_k, self.seed, self.mapping.astype(dtype)
        return out


def flip_bit(secret: bytes | str, bit: int) -> bytes:
    """Copy of ``secret`` with one bit inverted (bit index counts from the first byte's LSB)."""
    data = bytearray(_as_bytes(secret))
    data[(bit // 8) % len(data)] ^= 1 << (bit % 8)
    return bytes(data)
