import numpy as np
import pytest

from secureanon import checkpoint as ck
from secureanon import numerics as nx
from secureanon import synthdata as sd
from secureanon import training as T
from secureanon.config import Config

from conftest import small_config


def _data(cfg, seed=3):
    d = cfg.dims
    return sd.gen_dataset(20, 3, d.d_id, d.d_attr, seed=seed, height=d.height, width=d.width)


def _snapshot(model):
    return {(c, n): t.data.copy() for c, n, t in model.named_params()}


def _changed(before, model):
    return {c for c, n, t in model.named_params() if not np.array_equal(before[(c, n)], t.data)}


def test_identity_targets_unit():
    cfg = Config()
    t = T.identity_targets(cfg, np.random.default_rng(0).standard_normal((5, 16)))
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), 1.0)


def test_phase_freeze_contracts():
    cfg = small_config("float32")
    data = _data(cfg)
    m, h0 = T.train_phase0(data, cfg)
    assert not any(t.requires_grad for t in m.trainable_params())
    before = _snapshot(m)
    m, h1 = T.train_phase1(data, cfg, m)
    assert _changed(before, m) == {"e_attr", "mapping"}
    before = _snapshot(m)
    m, h2 = T.train_phase2(data, cfg, m)
    assert _changed(before, m) == {"icl", "sif"}
    assert m.phase == 2
    for rec in h0 + h1 + h2:
        assert {"step", "phase", "wall"} <= set(rec)
    assert {"anon", "div", "deanon", "img", "p2"} <= set(h2[-1])


def test_no_icl_keeps_icl_frozen():
    cfg = small_config("float32").with_ablation("no_icl")
    data = _data(cfg)
    m, _ = T.train_phase0(data, cfg)
    m, _ = T.train_phase1(data, cfg, m)
    before = _snapshot(m)
    m, _ = T.train_phase2(data, cfg, m)
    assert _changed(before, m) == {"sif"}


def test_joint_training_updates_both_groups():
    cfg = small_config("float32").with_ablation("no_dpt")
    data = _data(cfg)
    m, _ = T.train_phase0(data, cfg)
    before = _snapshot(m)
    m, h = T.train_joint(data, cfg, m)
    assert _changed(before, m) == {"e_attr", "mapping", "icl", "sif"}
    assert len([r for r in h if r["step"] == 0]) == 1 and h[-1]["step"] == 11


def test_seed_determinism_bitwise():
    cfg = small_config("float32")
    data = _data(cfg)
    a, ha = T.train_all(data, cfg)
    b, hb = T.train_all(data, cfg)
    assert ck.to_bytes(a) == ck.to_bytes(b)
    strip = lambda h: [{k: v for k, v in r.items() if k != "wall"} for r in h]
    assert strip(ha) == strip(hb)
    cfg.train.seed = 1
    c, _ = T.train_all(data, cfg)
    assert ck.to_bytes(a) != ck.to_bytes(c)


def test_distinct_identity_batch():
    data = sd.gen_dataset(30, 4, seed=0)
    rng = nx.make_rng(0)
    pool = data.indices("train")
    for _ in range(20):
        idx = T._distinct_identity_batch(rng, data, pool, 4)
        assert len(set(data.identity_of[idx])) == 4 and set(idx) <= set(pool)


def test_phase2_keys_are_bit_flips():
    cfg = small_config("float32")
    from secureanon.pipeline import PipelineModel
    m = PipelineModel.build(cfg)
    rng = nx.make_rng(5)
    keys, wrong = T._phase2_keys(m, rng, 2)
    assert keys.shape == wrong.shape == (2, cfg.dims.d_k)
    assert not np.array_equal(keys, wrong)


def test_divergence_raises(monkeypatch):
    cfg = small_config("float32")
    data = _data(cfg)
    m, _ = T.train_phase0(data, cfg)
    from secureanon import losses as L

    def bad(*a, **k):
        t, info = real(*a, **k)
        return t * float("nan"), info

    real = L.loss_p1
    monkeypatch.setattr(L, "loss_p1", bad)
    with pytest.raises(T.DivergenceError):
        T.train_phase1(data, cfg, m)
