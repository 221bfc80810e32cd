import numpy as np
import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from secureanon import keygen
from secureanon.numerics import ContractError, ShapeError, cosine, make_rng


def test_rfc5869_case1():
    ikm = bytes([0x0B] * 22)
    salt = bytes(range(13))
    info = bytes(range(0xF0, 0xFA))
    prk = keygen.hkdf_extract(salt, ikm)
    assert prk.hex() == "077709362c2e32df0ddc3f0dc47bba6390b6c73bb50f9c3122ec844ad7c2b3e5"
    okm = keygen.hkdf_expand(prk, info, 42)
    assert okm.hex() == (
        "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865"
    )


@pytest.mark.parametrize("secret,n", [(b"alice", 64), (b"x", 1), (b"a much longer passphrase" * 9, 200)])
def test_kdf_matches_independent_hkdf(secret, n):
    ref = HKDF(algorithm=hashes.SHA256(), length=n, salt=keygen.KDF_SALT, info=keygen.KDF_INFO)
    assert keygen.kdf(secret, n) == ref.derive(secret)


def test_kdf_deterministic_and_length():
    assert keygen.kdf("alice", 64) == keygen.kdf("alice", 64)
    assert len(keygen.kdf("alice", 64)) == 64


def test_kdf_rejects_empty_secret():
    with pytest.raises(ContractError):
        keygen.kdf(b"", 8)
    with pytest.raises(ContractError):
        keygen.kdf(b"a", 0)


def _bit_fraction(a: bytes, b: bytes) -> float:
    x = np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)
    return float(np.unpackbits(x).mean())


def test_kdf_avalanche_one_character():
    rng = make_rng(1)
    fracs = []
    for _ in range(1000):
        s = bytearray(rng.integers(97, 123, size=5, dtype=np.uint8).tobytes())
        t = bytearray(s)
        t[-1] = (t[-1] - 97 + 1) % 26 + 97
        fracs.append(_bit_fraction(keygen.kdf(bytes(s), 64), keygen.kdf(bytes(t), 64)))
    assert abs(np.mean(fracs) - 0.5) <= 0.05
    assert _bit_fraction(keygen.kdf(b"alice", 64), keygen.kdf(b"alicf", 64)) > 0.3


def test_norm_endpoints():
    out = keygen.norm(bytes([0, 255, 51]), dtype=np.float64)
    assert out[0] == -1.0
    assert out[1] == 1.0
    assert out[2] == pytest.approx(2 * 51 / 255 - 1)
    assert out[2] == pytest.approx(-0.6)


def test_norm_range():
    out = keygen.norm(bytes(range(256)))
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_mapping_frozen_deterministic():
    kg = keygen.KeyGen(d_k=16, seed=3)
    v = keygen.norm(keygen.kdf("s", 16))
    assert np.array_equal(keygen.mapping_f(kg.mapping, v), keygen.mapping_f(kg.mapping, v))
    assert keygen.mapping_f(kg.mapping, v).shape == (16,)
    assert not kg.mapping.trainable
    with pytest.raises(ShapeError):
        keygen.mapping_f(kg.mapping, np.zeros(15))


def test_mapping_separates_distinct_inputs():
    kg = keygen.KeyGen(d_k=64)
    rng = make_rng(4)
    for _ in range(100):
        a, b = rng.bytes(12), rng.bytes(12)
        ka = keygen.mapping_f(kg.mapping, keygen.norm(keygen.kdf(a, 64)))
        kb = keygen.mapping_f(kg.mapping, keygen.norm(keygen.kdf(b, 64)))
        assert cosine(ka, kb) < 0.99


def test_keygen_bitflip_decorrelates():
    kg = keygen.KeyGen(d_k=64)
    rng = make_rng(5)
    below = 0
    for i in range(1000):
        s = rng.bytes(8)
        k1 = kg(s)
        k2 = kg(keygen.flip_bit(s, int(rng.integers(64))))
        below += cosine(k1, k2) < 0.9
    assert below >= 950


def test_keygen_shape_and_determinism():
    kg = keygen.KeyGen(d_k=64)
    assert kg("pass").shape == (64,)
    assert np.array_equal(kg("pass"), kg("pass"))
    np.testing.assert_allclose(kg.many(["pass", "word"])[1], kg("word"), rtol=1e-5, atol=1e-6)


def test_flip_bit():
    assert keygen.flip_bit(b"\x00\x00", 9) == b"\x00\x02"
    assert keygen.flip_bit(keygen.flip_bit(b"abc", 5), 5) == b"abc"
