"""Stand-in pretraining (phase 0), disentangle/reconstruct (phase I), flow + compensation (phase II)."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import losses as L
from . import numerics as nx
from .config import Config
from .keygen import flip_bit
from .numerics import Adam
from .pipeline import PipelineModel
from .synthdata import RenderSpec, SyntheticDataset, render

LogFn = Callable[[dict], None]


class DivergenceError(RuntimeError):
    """A loss went non-finite during training."""


def identity_target_matrix(cfg: Config) -> np.ndarray:
    """Fixed projection lifting ground-truth identity latents into the embedding space."""
    rng = nx.make_rng(cfg.seeds.proxies + 1)
    return rng.standard_normal((cfg.dims.d_id, cfg.dims.d_z)) / np.sqrt(cfg.dims.d_id)


def identity_targets(cfg: Config, u: np.ndarray) -> np.ndarray:
    t = np.asarray(u, dtype=np.float64) @ identity_target_matrix(cfg)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def _dtype(model: PipelineModel):
    return nx.as_dtype(model.cfg.precision)


def _optimizer(model: PipelineModel, lr: float | None = None) -> Adam:
    t = model.cfg.train
    return Adam(model.trainable_params(), lr=t.lr if lr is None else lr, beta1=t.beta1, beta2=t.beta2, eps=t.eps)


def _distinct_identity_batch(rng: np.random.Generator, data: SyntheticDataset, pool: np.ndarray,
                             size: int) -> np.ndarray:
    """``size`` sample indices from ``pool`` with pairwise-distinct identities."""
    owners = data.identity_of[pool]
    ids = np.unique(owners)
    chosen = rng.choice(ids, size=min(size, len(ids)), replace=False)
    out = []
    for i in chosen:
        cands = pool[owners == i]
        out.append(cands[rng.integers(len(cands))])
    return np.array(out)


def _run(model: PipelineModel, iters: int, phase: int, step_fn, log: LogFn | None, log_every: int,
         opt: Adam | None = None) -> list[dict]:
    opt = opt if opt is not None else _optimizer(model)
    history = []
    t0 = time.perf_counter()
    for step in range(iters):
        loss, info = step_fn(step)
        if not np.isfinite(loss.item()):
            raise DivergenceError(f"phase {phase} loss is {loss.item()} at step {step}")
        opt.step(loss)
        if step % log_every == 0 or step == iters - 1:
            rec = {"step": step, "phase": phase, **info, "wall": round(time.perf_counter() - t0, 3)}
            history.append(rec)
            if log is not None:
                log(rec)
    return history


def train_phase0(data: SyntheticDataset, cfg: Config, model: PipelineModel | None = None,
                 log: LogFn | None = None) -> tuple[PipelineModel, list[dict]]:
    """Pretrain the identity encoder, then freeze it; the generator stays at its seed.

    Batches are fresh draws from the renderer that produced ``data`` (new identity and
    attribute latents every step), so no dataset identity, train or test, is seen here.
    """
    model = model if model is not None else PipelineModel.build(cfg)
    model.set_phase(0)
    rng = nx.make_rng(cfg.train.seed * 1000 + 0)
    spec = RenderSpec(data.d_id, data.d_attr, *data.shape, seed=cfg.seeds.render)
    proj = identity_target_matrix(cfg)
    dtype = _dtype(model)
    opt = _optimizer(model, cfg.train.lr0)

    def step(_):
        u = rng.standard_normal((cfg.train.batch0, data.d_id))
        v = rng.standard_normal((cfg.train.batch0, data.d_attr))
        x = render(u, v, spec).astype(dtype)
        t = u @ proj
        t = (t / np.linalg.norm(t, axis=-1, keepdims=True)).astype(dtype)
        cos = nx.cosine_rows(model.e_id(x), t)
        return nx.tmean(1.0 - cos), {"id_cos": float(cos.data.mean())}

    hist = _run(model, cfg.train.iters0, 0, step, log, cfg.train.log_every, opt)
    model.set_trainable(())
    model.phase = 0
    return model, hist


def identity_regression_cosine(model: PipelineModel, data: SyntheticDataset, part: str = "test") -> float:
    """Mean cosine between encoder outputs and projected ground-truth identities on a split."""
    idx = data.indices(part)
    z = model.e_id(data.images[idx].astype(_dtype(model))).data.astype(np.float64)
    t = identity_targets(model.cfg, data.identity_latents[data.identity_of[idx]])
    return float(np.mean(np.sum(z * t, axis=1) / np.linalg.norm(z, axis=1)))


def train_phase1(data: SyntheticDataset, cfg: Config, model: PipelineModel, log: LogFn | None = None,
                 iters: int | None = None) -> tuple[PipelineModel, list[dict]]:
    """Train the attribute encoder and mapping network on the reconstruction objective."""
    model.set_phase(1)
    rng = nx.make_rng(cfg.train.seed * 1000 + 1)
    train_idx = data.indices("train")
    images = data.images.astype(_dtype(model))
    lc = cfg.loss

    def step(_):
        idx = rng.choice(train_idx, size=cfg.train.batch, replace=False)
        return L.loss_p1(model, images[idx], lc.lam, lc.alpha, lc.beta)

    hist = _run(model, cfg.train.iters1 if iters is None else iters, 1, step, log, cfg.train.log_every)
    model.set_trainable(())
    model.phase = 1
    return model, hist


def random_secret(rng: np.random.Generator, n: int = 16) -> bytes:
    return rng.bytes(n)


def _phase2_keys(model: PipelineModel, rng: np.random.Generator, n_keys: int):
    secrets = [random_secret(rng) for _ in range(n_keys)]
    wrong = [flip_bit(s, int(rng.integers(8 * len(s)))) for s in secrets]
    return model.keys(secrets), model.keys(wrong)


def train_phase2(data: SyntheticDataset, cfg: Config, model: PipelineModel, log: LogFn | None = None,
                 iters: int | None = None) -> tuple[PipelineModel, list[dict]]:
    """Train the flow and the compensation layer with everything else frozen.

    Each batch draws fresh secrets and applies every one of them to every sample;
    the wrong key for each secret is a single-bit flip of it.
    """
    ab = cfg.ablation
    model.set_phase(2)
    if ab.no_icl:
        model.nets["icl"].trainable = False
    rng = nx.make_rng(cfg.train.seed * 1000 + 2)
    train_idx = data.indices("train")
    images = data.images.astype(_dtype(model))

    def step(_):
        idx = _distinct_identity_batch(rng, data, train_idx, cfg.train.batch)
        keys, wrong = _phase2_keys(model, rng, cfg.train.keys_per_batch)
        batch = L.phase2_forward(model, images[idx], keys, wrong, use_icl=not ab.no_icl)
        return L.loss_p2(model, batch, ab, cfg.loss)

    hist = _run(model, cfg.train.iters2 if iters is None else iters, 2, step, log, cfg.train.log_every)
    model.set_trainable(())
    model.phase = 2
    return model, hist


def train_joint(data: SyntheticDataset, cfg: Config, model: PipelineModel, log: LogFn | None = None,
                iters: int | None = None) -> tuple[PipelineModel, list[dict]]:
    """Single-phase alternative: reconstruction and all phase-II losses optimized together."""
    ab = cfg.ablation
    model.set_phase(2, joint=True)
    if ab.no_icl:
        model.nets["icl"].trainable = False
    rng = nx.make_rng(cfg.train.seed * 1000 + 3)
    train_idx = data.indices("train")
    images = data.images.astype(_dtype(model))
    lc = cfg.loss

    def step(_):
        idx = _distinct_identity_batch(rng, data, train_idx, cfg.train.batch)
        keys, wrong = _phase2_keys(model, rng, cfg.train.keys_per_batch)
        p1, info1 = L.loss_p1(model, images[idx], lc.lam, lc.alpha, lc.beta)
        batch = L.phase2_forward(model, images[idx], keys, wrong, use_icl=not ab.no_icl)
        p2, info2 = L.loss_p2(model, batch, ab, lc)
        return p1 + p2, {**info1, **info2}

    n = cfg.train.iters1 + cfg.train.iters2 if iters is None else iters
    hist = _run(model, n, 2, step, log, cfg.train.log_every)
    model.set_trainable(())
    model.phase = 2
    return model, hist


def train_all(data: SyntheticDataset, cfg: Config, log: LogFn | None = None) -> tuple[PipelineModel, list[dict]]:
    """Phase 0, then either phases I and II in sequence or the joint single phase."""
    model, h0 = train_phase0(data, cfg, log=log)
    if cfg.ablation.no_dpt:
        model, h = train_joint(data, cfg, model, log=log)
        return model, h0 + h
    model, h1 = train_phase1(data, cfg, model, log=log)
    model, h2 = train_phase2(data, cfg, model, log=log)
    return model, h0 + h1 + h2
